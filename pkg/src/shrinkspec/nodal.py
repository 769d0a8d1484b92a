"""Nodal domains, Courant bounds, nodal curves and plane cuts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components as _cc

from .eigen import DEFAULT_GAP_TOL, cluster_indices
from .mesh import (
    DEFAULT_BAND,
    DegeneratePlaneError,
    PlaneThroughOrigin,
    TriangleMesh,
    check_field,
    plane_sign_partition,
    subgraph_components,
)

DEFAULT_ZERO_TOL = 1e-6


class ZeroFunctionError(ValueError):
    """Every vertex of the field is (numerically) zero."""


@dataclass(frozen=True)
class NodalDecomposition:
    """Signed vertex labelling.

    ``labels`` holds +1..+P for positive domains, -1..-N for negative
    domains and 0 for nodal vertices.
    """

    labels: np.ndarray = field(repr=False)
    positive_count: int
    negative_count: int

    @property
    def total_count(self) -> int:
        return self.positive_count + self.negative_count


def nodal_domains(mesh: TriangleMesh, f, zero_tol: float = DEFAULT_ZERO_TOL) -> NodalDecomposition:
    """Split the vertex graph by the sign of ``f``.

    Vertices with |f| <= zero_tol * max|f| are nodal and belong to
    neither side, so they never merge two domains.
    """
    f = check_field(mesh, f)
    scale = np.abs(f).max() if len(f) else 0.0
    nodal = np.abs(f) <= zero_tol * scale
    if scale == 0 or nodal.all():
        raise ZeroFunctionError("field vanishes on every vertex")
    pos_lab, n_pos = subgraph_components(mesh.adjacency, (f > 0) & ~nodal)
    neg_lab, n_neg = subgraph_components(mesh.adjacency, (f < 0) & ~nodal)
    labels = np.zeros(mesh.n_vertices, dtype=np.int64)
    labels[pos_lab >= 0] = pos_lab[pos_lab >= 0] + 1
    labels[neg_lab >= 0] = -(neg_lab[neg_lab >= 0] + 1)
    return NodalDecomposition(labels, n_pos, n_neg)


@dataclass(frozen=True)
class CourantEntry:
    k: int
    count: int
    bound: int
    passed: bool


def courant_check(mesh: TriangleMesh, spectrum, zero_tol: float = DEFAULT_ZERO_TOL,
                  count: int | None = None) -> list[CourantEntry]:
    """Nodal count of eigenvector k against the closed-problem bound k + 1."""
    if not spectrum.converged:
        raise ValueError("Courant check needs a converged spectrum")
    n = len(spectrum) if count is None else min(count, len(spectrum))
    out = []
    for k in range(n):
        c = nodal_domains(mesh, spectrum.vector(k), zero_tol).total_count
        out.append(CourantEntry(k, c, k + 1, c <= k + 1))
    return out


def lambda1_combination_counts(mesh: TriangleMesh, spectrum, n_samples: int = 20, seed: int = 0,
                               gap_tol: float = DEFAULT_GAP_TOL,
                               zero_tol: float = DEFAULT_ZERO_TOL) -> list[int]:
    """Nodal counts of random unit combinations of the lambda_1 cluster."""
    cluster = next(c for c in cluster_indices(spectrum, gap_tol) if 1 in c)
    V = spectrum.eigenvectors[:, cluster]
    rng = np.random.default_rng(seed)
    counts = []
    for _ in range(n_samples):
        c = rng.standard_normal(len(cluster))
        c /= np.linalg.norm(c)
        counts.append(nodal_domains(mesh, V @ c, zero_tol).total_count)
    return counts


@dataclass
class TwoPieceReport:
    planes_tested: int
    degenerate_skips: int
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {
            "planes_tested": self.planes_tested,
            "degenerate_skips": self.degenerate_skips,
            "failures": [{"normal": list(map(float, v)), "counts": list(c)} for v, c in self.failures],
        }


def random_normals(n: int, seed: int) -> np.ndarray:
    v = np.random.default_rng(seed).standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def two_piece_check(mesh: TriangleMesh, n_planes: int = 100, seed: int = 0,
                    band: float = DEFAULT_BAND, normals=None) -> TwoPieceReport:
    """Every non-degenerate plane through the origin must cut into (1, 1) pieces.

    Normals are drawn uniformly on the sphere from ``seed`` unless given.
    """
    if normals is None:
        if n_planes < 1:
            raise ValueError("n_planes must be >= 1")
        normals = random_normals(n_planes, seed)
    report = TwoPieceReport(0, 0)
    for v in np.atleast_2d(normals):
        try:
            counts = plane_sign_partition(mesh, PlaneThroughOrigin.from_vector(v), band)
        except DegeneratePlaneError:
            report.degenerate_skips += 1
            continue
        report.planes_tested += 1
        if counts != (1, 1):
            report.failures.append((np.asarray(v, dtype=float), counts))
    return report


@dataclass(frozen=True)
class NodalCurves:
    polylines: list
    closed: list

    @property
    def n_closed(self) -> int:
        return sum(self.closed)

    @property
    def n_open(self) -> int:
        return len(self.closed) - self.n_closed


def nodal_curve_extract(mesh: TriangleMesh, f) -> NodalCurves:
    """Zero set of the piecewise-linear interpolant, chained into polylines.

    Zero vertex values count as positive, so each triangle with mixed
    signs contributes exactly one segment joining two edge crossings.
    Chains can only end on boundary edges.
    """
    f = check_field(mesh, f)
    pos = f >= 0
    faces = mesh.faces
    mixed = faces[pos[faces].any(axis=1) & ~pos[faces].all(axis=1)]
    if len(mixed) == 0:
        return NodalCurves([], [])
    n = mesh.n_vertices
    e = np.stack([mixed[:, [0, 1]], mixed[:, [1, 2]], mixed[:, [2, 0]]], axis=1)
    cross = pos[e[..., 0]] != pos[e[..., 1]]
    keys = np.sort(e, axis=2)
    keys = keys[..., 0] * n + keys[..., 1]
    seg = keys[cross].reshape(-1, 2)
    uniq, inv = np.unique(seg, return_inverse=True)
    inv = inv.reshape(-1, 2)
    a, b = uniq // n, uniq % n
    t = f[a] / (f[a] - f[b])
    pts = (1 - t)[:, None] * mesh.vertices[a] + t[:, None] * mesh.vertices[b]

    m = len(uniq)
    g = sparse.csr_matrix((np.ones(len(inv)), (inv[:, 0], inv[:, 1])), shape=(m, m))
    g = ((g + g.T) > 0).astype(np.int8).tocsr()
    deg = np.diff(g.indptr)
    ncomp, comp = _cc(g, directed=False)
    polylines, closed = [], []
    for c in range(ncomp):
        nodes = np.flatnonzero(comp == c)
        ends = nodes[deg[nodes] < 2]
        start = ends[0] if len(ends) else nodes[0]
        path, prev, cur = [start], -1, start
        while True:
            nbrs = g.indices[g.indptr[cur]:g.indptr[cur + 1]]
            nxt = [x for x in nbrs if x != prev]
            if not nxt or nxt[0] == start:
                break
            prev, cur = cur, nxt[0]
            path.append(cur)
        polylines.append(pts[path])
        closed.append(len(ends) == 0)
    return NodalCurves(polylines, closed)
