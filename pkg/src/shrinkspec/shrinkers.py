"""Discrete self-shrinkers: sphere, cylinder, plane, Angenent torus.

A surface is a self-shrinker when  H = 1/2 <x, nu>,  with H the sum of
principal curvatures taken positive for the outward normal of a sphere.
Rotationally symmetric shrinkers have profiles that are geodesics of the
half-plane metric  r^2 exp(-(r^2 + z^2)/2) (dr^2 + dz^2);  the Angenent
torus is the closed one, found here by shooting from the inner equator.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.sparse.csgraph import connected_components as _cc
from scipy.spatial import ConvexHull, cKDTree

from .mesh import MeshError, TriangleMesh
from .operator import corner_cotangents, cotangent_stiffness, gaussian_weight
from .symmetry import SymmetryGroup

logger = logging.getLogger(__name__)

SPHERE_RADIUS = 2.0
CYLINDER_RADIUS = np.sqrt(2.0)
DEFAULT_TRUNCATION = 8.0
WELD_TOL = 1e-8
AREA_NORMALIZATION = 1.0 / (4.0 * np.pi)


class BracketError(ValueError):
    """Closure defect does not change sign over the starting-radius bracket."""


class StiffODEError(RuntimeError):
    """Profile integration failed (step-size underflow)."""


class WeldError(ValueError):
    """Patch replication failed: patch outside its domain or seams do not close."""


@dataclass(frozen=True)
class ProfileCurve:
    """Profile in the (r, z) half-plane, sampled uniformly in arc length.

    For closed curves the last sample repeats the first.
    """

    s: np.ndarray
    r: np.ndarray
    z: np.ndarray
    theta: np.ndarray
    closed: bool
    r0: float = float("nan")
    closure_defect: float = float("nan")

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.r, self.z])

    @property
    def length(self) -> float:
        return float(self.s[-1] - self.s[0])

    def rows(self):
        return zip(self.s, self.r, self.z, self.theta)


@dataclass(frozen=True)
class ShrinkerReport:
    max_abs_residual: float
    mean_abs_residual: float
    weighted_area: float
    residuals: np.ndarray = field(repr=False)
    n_skipped: int = 0


# ---------------------------------------------------------------- generators


def _hull_mesh(points):
    hull = ConvexHull(points)
    faces = hull.simplices.copy()
    p = points[faces]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    flip = np.einsum("ij,ij->i", n, p.mean(axis=1)) < 0
    faces[flip] = faces[flip][:, ::-1]
    return faces


def _subdivide(vertices, faces):
    n = len(vertices)
    e = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
    uniq, inv = np.unique(e, axis=0, return_inverse=True)
    inv = inv.ravel()
    mid = 0.5 * (vertices[uniq[:, 0]] + vertices[uniq[:, 1]])
    m = len(faces)
    ab, bc, ca = inv[:m] + n, inv[m:2 * m] + n, inv[2 * m:] + n
    a, b, c = faces.T
    new = np.concatenate([
        np.column_stack([a, ab, ca]),
        np.column_stack([b, bc, ab]),
        np.column_stack([c, ca, bc]),
        np.column_stack([ab, bc, ca]),
    ])
    return np.vstack([vertices, mid]), new


def make_sphere(level: int, radius: float = SPHERE_RADIUS, base: str = "icosahedron") -> TriangleMesh:
    """Geodesic sphere by midpoint subdivision of a platonic solid.

    The icosahedral base gives 20*4**level faces; the octahedral base
    (8*4**level faces) keeps every coordinate plane a union of edges,
    which is what wedge-patch replication needs.
    """
    if level < 0:
        raise ValueError("subdivision level must be >= 0")
    if base == "icosahedron":
        phi = (1.0 + np.sqrt(5.0)) / 2.0
        pts = []
        for s1 in (-1.0, 1.0):
            for s2 in (-1.0, 1.0):
                pts += [(0.0, s1, s2 * phi), (s1, s2 * phi, 0.0), (s2 * phi, 0.0, s1)]
        v = np.array(pts)
    elif base == "octahedron":
        v = np.vstack([np.eye(3), -np.eye(3)])
    else:
        raise ValueError(f"unknown base solid {base!r}")
    f = _hull_mesh(v)
    for _ in range(level):
        v, f = _subdivide(v, f)
    v = radius * v / np.linalg.norm(v, axis=1, keepdims=True)
    return TriangleMesh(v, f)


def _ring_angle(i, j, n_ang):
    # odd rings are staggered by half a step
    return 2.0 * np.pi * (j + 0.5 * (i % 2)) / n_ang


def revolve(profile: ProfileCurve, angular_resolution: int) -> TriangleMesh:
    """Surface of revolution about the z-axis on staggered rings.

    Odd-numbered rings are rotated by half an angular step, which makes
    the triangulation invariant (faces included) under rotation by
    2*pi/angular_resolution, under z -> -z for z-symmetric profiles with
    an even number of samples, and under half-turns about horizontal
    axes at multiples of pi/n whenever n divides angular_resolution.
    """
    n_ang = int(angular_resolution)
    if n_ang < 3:
        raise ValueError("angular resolution must be >= 3")
    r = np.asarray(profile.r, dtype=float)
    z = np.asarray(profile.z, dtype=float)
    if profile.closed:
        r, z = r[:-1], z[:-1]
        if len(r) % 2:
            raise ValueError("closed profiles need an even number of samples")
        if _polyline_self_intersects(r, z, closed=True):
            raise ValueError("profile curve intersects itself")
    elif _polyline_self_intersects(r, z, closed=False):
        raise ValueError("profile curve intersects itself")
    if np.any(r <= 0):
        raise ValueError("profile must stay in r > 0")
    m = len(r)
    i = np.repeat(np.arange(m), n_ang)
    j = np.tile(np.arange(n_ang), m)
    ang = _ring_angle(i, j, n_ang)
    verts = np.column_stack([r[i] * np.cos(ang), r[i] * np.sin(ang), z[i]])

    strips = m if profile.closed else m - 1
    faces = []
    jj = np.arange(n_ang)
    jn = (jj + 1) % n_ang
    for a in range(strips):
        b = (a + 1) % m
        A, B = a * n_ang, b * n_ang
        if a % 2 == 0:
            faces.append(np.column_stack([A + jj, A + jn, B + jj]))
            faces.append(np.column_stack([A + jn, B + jn, B + jj]))
        else:
            faces.append(np.column_stack([A + jj, A + jn, B + jn]))
            faces.append(np.column_stack([A + jj, B + jn, B + jj]))
    faces = np.concatenate(faces)
    if profile.closed:
        p = verts[faces]
        vol = np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum()
        if vol < 0:
            faces = faces[:, ::-1]
    return TriangleMesh(verts, faces)


def _polyline_self_intersects(r, z, closed):
    p = np.column_stack([r, z])
    q = np.roll(p, -1, axis=0) if closed else p[1:]
    p = p if closed else p[:-1]
    k = len(p)
    if k < 3:
        return False

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    P, Q = p[:, None, :], q[:, None, :]
    R, S = p[None, :, :], q[None, :, :]
    o1 = orient(P, Q, R)
    o2 = orient(P, Q, S)
    o3 = orient(R, S, P)
    o4 = orient(R, S, Q)
    hit = (o1 * o2 < 0) & (o3 * o4 < 0)
    idx = np.arange(k)
    gap = np.abs(idx[:, None] - idx[None, :])
    if closed:
        gap = np.minimum(gap, k - gap)
    hit &= gap > 1
    return bool(hit.any())


def make_cylinder(z_max: float = DEFAULT_TRUNCATION, angular_resolution: int = 64,
                  axial_resolution: int = 128) -> TriangleMesh:
    """Cylinder of radius sqrt(2) about the z-axis, truncated to |z| <= z_max.

    ``axial_resolution`` counts ring-to-ring intervals; it should be even
    for the triangulation to be symmetric under z -> -z.
    """
    if z_max <= 0:
        raise ValueError("z_max must be positive")
    if angular_resolution < 3 or axial_resolution < 3:
        raise ValueError("resolutions must be >= 3")
    a = int(axial_resolution)
    k = 2 * np.arange(a + 1) - a
    z = z_max * k / a
    r = np.full(a + 1, CYLINDER_RADIUS)
    prof = ProfileCurve(s=z - z[0], r=r, z=z, theta=np.full(a + 1, np.pi / 2), closed=False)
    mesh = revolve(prof, angular_resolution)
    boundary = np.zeros(mesh.n_vertices, dtype=bool)
    boundary[:angular_resolution] = True
    boundary[-angular_resolution:] = True
    return TriangleMesh(mesh.vertices, mesh.faces, boundary=boundary, validate=False)


def make_disk(R_max: float = DEFAULT_TRUNCATION, resolution: int = 64) -> TriangleMesh:
    """Flat disk in z = 0 from a hexagonal lattice warped onto circles.

    Lattice ring d (6d vertices) is pushed radially onto the circle of
    radius d*R_max/resolution, so the outer ring lies on |x| = R_max.
    """
    if R_max <= 0:
        raise ValueError("R_max must be positive")
    n = int(resolution)
    if n < 1:
        raise ValueError("resolution must be >= 1")
    qs, rs = np.meshgrid(np.arange(-n, n + 1), np.arange(-n, n + 1), indexing="ij")
    qs, rs = qs.ravel(), rs.ravel()
    dist = np.maximum(np.maximum(np.abs(qs), np.abs(rs)), np.abs(qs + rs))
    keep = dist <= n
    qs, rs, dist = qs[keep], rs[keep], dist[keep]
    index = {(q, r): i for i, (q, r) in enumerate(zip(qs.tolist(), rs.tolist()))}
    h = R_max / n
    xy = np.column_stack([qs + 0.5 * rs, (np.sqrt(3.0) / 2.0) * rs])
    norm = np.linalg.norm(xy, axis=1)
    scale = np.divide(dist * h, norm, out=np.zeros_like(norm), where=norm > 0)
    xy = xy * scale[:, None]
    faces = []
    # anchors may lie outside the hexagon while all three corners are inside
    for q in range(-n - 1, n + 1):
        for r in range(-n - 1, n + 1):
            up = (index.get((q, r)), index.get((q + 1, r)), index.get((q, r + 1)))
            if None not in up:
                faces.append(up)
            down = (index.get((q + 1, r)), index.get((q + 1, r + 1)), index.get((q, r + 1)))
            if None not in down:
                faces.append(down)
    verts = np.column_stack([xy, np.zeros(len(xy))])
    mesh = TriangleMesh(verts, np.array(faces, dtype=np.int64))
    return TriangleMesh(mesh.vertices, mesh.faces, boundary=dist == n, validate=False)


# ------------------------------------------------------------ Angenent torus


def _geodesic_rhs(s, y):
    r, z, th = y
    return [np.cos(th), np.sin(th), -np.sin(th) * (1.0 / r - r / 2.0) - np.cos(th) * (z / 2.0)]


def _down_crossing(s, y):
    return y[1]


_down_crossing.terminal = True
_down_crossing.direction = -1


def _near_axis(s, y):
    return y[0] - 1e-3


_near_axis.terminal = True


def _integrate_arc(r0, rtol, s_max=60.0, dense=False):
    sol = solve_ivp(
        _geodesic_rhs, (0.0, s_max), [r0, 0.0, np.pi / 2], method="DOP853",
        events=[_down_crossing, _near_axis], rtol=rtol, atol=rtol, dense_output=dense,
    )
    if sol.status == -1:
        raise StiffODEError(f"profile integration failed at r0={r0}: {sol.message}")
    return sol


def closure_defect(r0: float, rtol: float = 1e-10) -> float:
    """cos(theta) where the upper arc from (r0, 0) first returns to z = 0.

    Zero means the arc meets the axis of reflection perpendicularly, so
    the arc and its mirror image close up.
    """
    sol = _integrate_arc(r0, rtol)
    if len(sol.t_events[0]) == 0:
        return float("nan")
    return float(np.cos(sol.y_events[0][0][2]))


def shoot_angenent_profile(r0_bracket=(0.3, 0.6), ode_tolerance: float = 1e-8,
                           n_points: int = 512, resolution: float = 1.0) -> ProfileCurve:
    """Closed geodesic profile of the Angenent torus.

    Starts at (r0, 0) heading in +z and bisects on r0 until the closure
    defect is at most ``ode_tolerance``. ``resolution`` scales the
    integrator tolerance down (2 halves it).

    Raises
    ------
    BracketError
        No sign change of the defect over ``r0_bracket``.
    StiffODEError
        The integrator could not advance.
    """
    a, b = map(float, r0_bracket)
    if not 0 < a < b < 2:
        raise BracketError("bracket must satisfy 0 < a < b < 2")
    if n_points < 8 or n_points % 2:
        raise ValueError("n_points must be even and >= 8")
    rtol = 1e-2 * ode_tolerance / resolution
    fa, fb = closure_defect(a, rtol), closure_defect(b, rtol)
    if not (np.isfinite(fa) and np.isfinite(fb)) or fa * fb > 0:
        raise BracketError(f"closure defect has no sign change on [{a}, {b}]")
    for _ in range(200):
        mid = 0.5 * (a + b)
        fm = closure_defect(mid, rtol)
        if not np.isfinite(fm):
            raise BracketError(f"arc from r0={mid} does not return to z=0")
        if fm == 0 or (b - a) < 1e-15:
            break
        if fa * fm < 0:
            b, fb = mid, fm
        else:
            a, fa = mid, fm
        if abs(fm) <= 1e-3 * ode_tolerance:
            break
    r0 = mid
    defect = abs(fm)
    if defect > ode_tolerance:
        raise StiffODEError(f"closure defect {defect:.2e} above tolerance")

    sol = _integrate_arc(r0, rtol, dense=True)
    half = float(sol.t_events[0][0])
    total = 2.0 * half
    s = np.arange(n_points // 2 + 1) * (total / n_points)
    s[-1] = half
    y = sol.sol(s)
    r_up, z_up, th_up = y
    z_up[0] = 0.0
    z_up[-1] = 0.0
    # lower arc is the mirror image, traversed onwards from the outer equator
    r = np.concatenate([r_up, r_up[-2::-1]])
    z = np.concatenate([z_up, -z_up[-2::-1]])
    th = np.concatenate([th_up, np.pi - th_up[-2::-1]])
    s_full = np.concatenate([s, total - s[-2::-1]])
    return ProfileCurve(s=s_full, r=r, z=z, theta=th, closed=True, r0=r0, closure_defect=defect)


def make_angenent_torus(n_profile: int = 512, angular_resolution: int = 256,
                        ode_tolerance: float = 1e-8) -> TriangleMesh:
    return revolve(shoot_angenent_profile(ode_tolerance=ode_tolerance, n_points=n_profile),
                   angular_resolution)


# --------------------------------------------------------- patch replication


def _wall_distance(points, angle):
    return np.abs(-np.sin(angle) * points[:, 0] + np.cos(angle) * points[:, 1])


def _find_wedge(points, group, tol):
    """Index k of the wedge [k*pi/n, (k+1)*pi/n] containing all points, or None."""
    n = group.n
    rho = np.hypot(points[:, 0], points[:, 1])
    off = rho > tol
    phi = np.mod(np.arctan2(points[off, 1], points[off, 0]), 2 * np.pi)
    slack = tol / rho[off]
    width = np.pi / n
    for k in range(2 * n):
        lo = k * width
        rel = np.mod(phi - lo + np.pi, 2 * np.pi) - np.pi
        if np.all((rel >= -slack) & (rel <= width + slack)):
            return k
    return None


def wedge_patch(mesh: TriangleMesh, group: SymmetryGroup, k: int = 0, tol: float = WELD_TOL) -> TriangleMesh:
    """Faces of ``mesh`` lying in the closed fundamental wedge number ``k``.

    For the prismatic group the wedge is further cut to z >= 0.
    """
    n = group.n
    lo, hi = k * np.pi / n, (k + 1) * np.pi / n
    v = mesh.vertices
    rho = np.hypot(v[:, 0], v[:, 1])
    phi = np.mod(np.arctan2(v[:, 1], v[:, 0]) - lo + np.pi, 2 * np.pi) - np.pi
    slack = np.divide(tol, rho, out=np.full_like(rho, np.inf), where=rho > 0)
    inside = (rho <= tol) | ((phi >= -slack) & (phi <= hi - lo + slack))
    if group.name == "DnxZ2":
        inside &= v[:, 2] >= -tol
    keep = inside[mesh.faces].all(axis=1)
    faces = mesh.faces[keep]
    used, new_faces = np.unique(faces, return_inverse=True)
    # keep only the truncation-boundary flags; cut edges are seams
    return TriangleMesh(v[used], new_faces.reshape(-1, 3), boundary=mesh.boundary[used])


def replicate_patch(patch: TriangleMesh, group: SymmetryGroup, weld_tol: float = WELD_TOL) -> TriangleMesh:
    """Union of the group images of a fundamental patch, seams welded.

    Vertices closer than ``weld_tol`` are merged; vertex order follows the
    first occurrence, so the trivial group returns the patch unchanged.

    Raises
    ------
    WeldError
        The patch leaves its fundamental domain, a wall vertex finds no
        partner, or the welded surface is not a consistent manifold.
    """
    v = patch.vertices
    walls = []
    if group.name != "trivial":
        k = _find_wedge(v, group, weld_tol)
        if k is None:
            raise WeldError("patch spills outside the fundamental domain")
        zs = v[:, 2]
        if group.name == "DnxZ2":
            if not (np.all(zs >= -weld_tol) or np.all(zs <= weld_tol)):
                raise WeldError("patch crosses the reflection plane")
        walls = [k * np.pi / group.n, (k + 1) * np.pi / group.n]

    copies_v, copies_f = [], []
    for c, g in enumerate(group):
        copies_v.append(g.apply(v))
        f = patch.faces if g.det > 0 else patch.faces[:, ::-1]
        copies_f.append(f + c * patch.n_vertices)
    all_v = np.vstack(copies_v)
    all_f = np.vstack(copies_f)

    pairs = cKDTree(all_v).query_pairs(weld_tol, output_type="ndarray")
    n_all = len(all_v)
    graph = sparse.csr_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])) if len(pairs) else ([], ([], [])),
        shape=(n_all, n_all),
    )
    _, cls = _cc(graph, directed=False)
    # relabel classes by first occurrence to keep the patch ordering
    first = np.full(cls.max() + 1, n_all)
    np.minimum.at(first, cls, np.arange(n_all))
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    new_index = rank[cls]
    new_v = all_v[first[order]]
    new_f = new_index[all_f]

    if walls:
        wall_masks = [_wall_distance(v, angle) <= weld_tol for angle in walls]
        if group.name == "DnxZ2":
            wall_masks.append(np.abs(v[:, 2]) <= weld_tol)
        # every open edge of the patch is a seam along one wall or part of
        # the surface's own (flagged) boundary; anything else leaves a hole
        e = patch.boundary_edges
        along = patch.boundary[e].all(axis=1)
        for mask in wall_masks:
            along |= mask[e].all(axis=1)
        if not along.all():
            raise WeldError(f"{int((~along).sum())} open patch edges lie off the walls")
        on_wall = np.zeros(patch.n_vertices, dtype=bool)
        on_wall[e.ravel()] = True
        on_wall &= np.logical_or.reduce(wall_masks)
        members = np.bincount(cls)[cls[:patch.n_vertices]]
        if np.any(members[on_wall] < 2):
            raise WeldError("wall vertex without a partner across the seam")

    if np.any((new_f[:, 0] == new_f[:, 1]) | (new_f[:, 1] == new_f[:, 2]) | (new_f[:, 0] == new_f[:, 2])):
        raise WeldError("welding collapsed a face")
    try:
        return TriangleMesh(new_v, new_f)
    except MeshError as exc:
        raise WeldError(f"welded surface is invalid: {exc}") from exc


# ------------------------------------------------------------------ residual


def mixed_areas(mesh: TriangleMesh) -> np.ndarray:
    """Mixed Voronoi areas (obtuse triangles split by halves/quarters)."""
    p = mesh.vertices[mesh.faces]
    cot = corner_cotangents(mesh)
    area = mesh.face_areas
    sq = np.empty((mesh.n_faces, 3))  # squared length of edge opposite corner k
    for k in range(3):
        d = p[:, (k + 1) % 3] - p[:, (k + 2) % 3]
        sq[:, k] = np.einsum("ij,ij->i", d, d)
    obtuse = cot < 0
    any_obtuse = obtuse.any(axis=1)
    out = np.zeros(mesh.n_vertices)
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        # Voronoi share of corner k: edges k-i and k-j, weighted by the cot opposite each
        vor = (sq[:, j] * cot[:, j] + sq[:, i] * cot[:, i]) / 8.0
        share = np.where(any_obtuse, np.where(obtuse[:, k], area / 2.0, area / 4.0), vor)
        np.add.at(out, mesh.faces[:, k], share)
    return out


def mean_curvature(mesh: TriangleMesh):
    """Signed discrete mean curvature (k1 + k2) per vertex.

    Magnitude of the cotangent mean-curvature vector over the mixed area,
    signed by the area-weighted vertex normal. Returns (H, valid_mask).
    """
    hvec = cotangent_stiffness(mesh) @ mesh.vertices
    area = mixed_areas(mesh)
    valid = area > 0
    hvec[valid] /= area[valid, None]
    nrm = mesh.vertex_normals
    mag = np.linalg.norm(hvec, axis=1)
    sign = np.where(np.einsum("ij,ij->i", hvec, nrm) < 0, -1.0, 1.0)
    valid &= np.linalg.norm(nrm, axis=1) > 0
    return np.where(valid, sign * mag, np.nan), valid


def gaussian_area(mesh: TriangleMesh, normalization: float = AREA_NORMALIZATION) -> float:
    """normalization * sum over faces of area * exp(-|centroid|^2/4)."""
    return float(normalization * np.sum(mesh.face_areas * gaussian_weight(mesh.centroids)))


def shrinker_residual(mesh: TriangleMesh, normalization: float = AREA_NORMALIZATION) -> ShrinkerReport:
    """Pointwise defect  H - 1/2 <x, nu>  over interior vertices."""
    H, valid = mean_curvature(mesh)
    interior = ~mesh.boundary
    skipped = interior & ~valid
    if skipped.any():
        logger.warning("skipping %d vertices with degenerate one-rings", int(skipped.sum()))
    use = interior & valid
    support = 0.5 * np.einsum("ij,ij->i", mesh.vertices, mesh.vertex_normals)
    res = np.full(mesh.n_vertices, np.nan)
    res[use] = np.abs(H[use] - support[use])
    vals = res[use]
    return ShrinkerReport(
        max_abs_residual=float(vals.max()) if len(vals) else 0.0,
        mean_abs_residual=float(vals.mean()) if len(vals) else 0.0,
        weighted_area=gaussian_area(mesh, normalization),
        residuals=res,
        n_skipped=int(skipped.sum()),
    )
