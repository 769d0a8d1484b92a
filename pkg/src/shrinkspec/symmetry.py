"""Dihedral and prismatic point groups acting on meshes and vertex fields.

The dihedral group of order 2n used here is generated by half-turns
about n horizontal axes at angles k*pi/n; it contains the vertical
rotations by 2*pi*j/n but no reflections. The prismatic group adds the
mid-plane reflection (x, y, z) -> (x, y, -z).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .mesh import TriangleMesh, check_field

ORTHO_TOL = 1e-12
GROUP_TOL = 1e-10
MATCH_TOL = 1e-8
MAX_ORDER = 64

Z_REFLECTION = np.diag([1.0, 1.0, -1.0])


class NotInvariantError(ValueError):
    """Raised when a mesh is not mapped onto itself by an isometry."""


@dataclass(frozen=True)
class Isometry:
    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float).reshape(3, 3)
        if np.abs(m.T @ m - np.eye(3)).max() > ORTHO_TOL:
            raise ValueError("isometry matrix is not orthogonal")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))

    def apply(self, points) -> np.ndarray:
        return np.asarray(points) @ self.matrix.T

    def __matmul__(self, other: "Isometry") -> "Isometry":
        return Isometry(self.matrix @ other.matrix, f"{self.label}*{other.label}")


def rotation_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def half_turn(axis) -> np.ndarray:
    """Rotation by pi about ``axis``: 2 a a^T - I."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    return 2.0 * np.outer(a, a) - np.eye(3)


def horizontal_axis(k: int, n: int) -> np.ndarray:
    t = k * np.pi / n
    return np.array([np.cos(t), np.sin(t), 0.0])


@dataclass(frozen=True)
class SymmetryGroup:
    name: str
    n: int
    elements: tuple = field(repr=False)

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    @property
    def order(self) -> int:
        return len(self.elements)

    def index_of(self, matrix, tol: float = GROUP_TOL) -> int:
        """Index of the element equal to ``matrix``; -1 if absent."""
        matrix = np.asarray(matrix)
        for i, g in enumerate(self.elements):
            if np.abs(g.matrix - matrix).max() <= tol:
                return i
        return -1

    def verify_axioms(self, tol: float = GROUP_TOL) -> dict:
        """Exhaustive closure, inverse and identity checks plus the order."""
        expected = {"Dn": 2 * self.n, "DnxZ2": 4 * self.n, "trivial": 1}.get(self.name)
        identity = self.index_of(np.eye(3), tol) >= 0
        table = np.full((self.order, self.order), -1, dtype=int)
        for i, a in enumerate(self.elements):
            for j, b in enumerate(self.elements):
                table[i, j] = self.index_of(a.matrix @ b.matrix, tol)
        closed = bool(np.all(table >= 0))
        inverses = all(self.index_of(g.matrix.T, tol) >= 0 for g in self.elements)
        # each row of a group table is a permutation (cancellation law)
        latin = closed and all(len(set(row)) == self.order for row in table)
        orthogonal = all(
            np.abs(g.matrix.T @ g.matrix - np.eye(3)).max() <= ORTHO_TOL
            and abs(abs(g.det) - 1.0) <= ORTHO_TOL
            for g in self.elements
        )
        return {
            "order": self.order,
            "expected_order": expected,
            "identity": identity,
            "closed": closed,
            "inverses": inverses,
            "latin_square": latin,
            "orthogonal": orthogonal,
            "passed": identity and closed and inverses and latin and orthogonal
            and (expected is None or expected == self.order),
        }

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "elements": [{"label": g.label, "matrix": g.matrix.tolist()} for g in self.elements],
        }


def _check_n(n):
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ValueError("group parameter n must be an integer >= 2")
    if n > MAX_ORDER:
        raise ValueError(f"group parameter n must be <= {MAX_ORDER}")


def dihedral_group(n: int) -> SymmetryGroup:
    """Order-2n group of vertical rotations and horizontal half-turns.

    Element ``j < n`` is the rotation by 2*pi*j/n about the z-axis;
    element ``n + k - 1`` is the half-turn about the axis at angle k*pi/n
    (k = 1..n), so that ``rho(k)`` in the usual numbering is
    ``elements[n + k - 1]``.
    """
    _check_n(n)
    rots = [Isometry(rotation_z(2 * np.pi * j / n), f"R{j}") for j in range(n)]
    flips = [Isometry(half_turn(horizontal_axis(k, n)), f"rho{k}") for k in range(1, n + 1)]
    return SymmetryGroup("Dn", int(n), tuple(rots + flips))


def prismatic_group(n: int) -> SymmetryGroup:
    """Dihedral group times the reflection z -> -z (order 4n)."""
    base = dihedral_group(n).elements
    refl = [Isometry(Z_REFLECTION @ g.matrix, f"Z*{g.label}") for g in base]
    return SymmetryGroup("DnxZ2", int(n), tuple(base) + tuple(refl))


def trivial_group() -> SymmetryGroup:
    return SymmetryGroup("trivial", 1, (Isometry(np.eye(3), "I"),))


def parse_group(spec: str | None) -> SymmetryGroup | None:
    """Parse ``dihedral:n`` / ``prismatic:n`` (``None`` or ``none`` -> None)."""
    if spec is None or spec == "none":
        return None
    kind, _, n = spec.partition(":")
    try:
        n = int(n)
    except ValueError:
        raise ValueError(f"bad group spec {spec!r}") from None
    if kind == "dihedral":
        return dihedral_group(n)
    if kind == "prismatic":
        return prismatic_group(n)
    raise ValueError(f"bad group spec {spec!r}")


@dataclass(frozen=True)
class VertexPermutation:
    """``mapping[i]`` is the vertex at the image of vertex ``i``."""

    mapping: np.ndarray
    max_deviation: float

    def __len__(self):
        return len(self.mapping)


def induced_permutation(mesh: TriangleMesh, isometry, tolerance: float = MATCH_TOL) -> VertexPermutation:
    """Match every transformed vertex to a mesh vertex.

    Raises
    ------
    NotInvariantError
        If an image lies farther than ``tolerance`` from every vertex or
        two vertices map to the same one.
    """
    m = isometry.matrix if isinstance(isometry, Isometry) else np.asarray(isometry, dtype=float)
    images = mesh.vertices @ m.T
    dist, idx = cKDTree(mesh.vertices).query(images)
    dev = float(dist.max()) if len(dist) else 0.0
    if dev > tolerance:
        raise NotInvariantError(f"image vertex off the mesh by {dev:.3e}")
    if len(np.unique(idx)) != len(idx):
        raise NotInvariantError("vertex matching is not injective")
    return VertexPermutation(idx.astype(np.int64), dev)


def permute_faces_match(mesh: TriangleMesh, perm: VertexPermutation, det: float) -> bool:
    """True if the permutation carries the face set onto itself."""
    f = perm.mapping[mesh.faces]
    if det < 0:
        f = f[:, ::-1]

    def canon(faces):
        # rotate each oriented triangle so its smallest index comes first
        r = np.argmin(faces, axis=1)
        rows = np.arange(len(faces))[:, None]
        cols = (r[:, None] + np.arange(3)) % 3
        return np.unique(faces[rows, cols], axis=0)

    a, b = canon(mesh.faces), canon(f)
    return a.shape == b.shape and bool(np.all(a == b))


def is_invariant(mesh: TriangleMesh, group: SymmetryGroup, tolerance: float = MATCH_TOL,
                 check_faces: bool = True) -> bool:
    """Whether every group element maps the mesh onto itself."""
    for g in group:
        try:
            perm = induced_permutation(mesh, g, tolerance)
        except NotInvariantError:
            return False
        if check_faces and not permute_faces_match(mesh, perm, g.det):
            return False
    return True


def pullback(field, perm: VertexPermutation) -> np.ndarray:
    """(f o sigma)_i = f[perm(i)]."""
    f = np.asarray(field, dtype=float)
    if f.shape != perm.mapping.shape:
        raise ValueError("field and permutation sizes differ")
    return f[perm.mapping]


def antisymmetrize(field, perm: VertexPermutation) -> np.ndarray:
    """f - f o sigma; vanishes exactly when f is sigma-invariant."""
    f = np.asarray(field, dtype=float)
    return f - pullback(f, perm)


def pullback_on(mesh: TriangleMesh, field, isometry, tolerance: float = MATCH_TOL) -> np.ndarray:
    return pullback(check_field(mesh, field), induced_permutation(mesh, isometry, tolerance))


def equivariance_residuals(ops, spectrum, perm: VertexPermutation) -> np.ndarray:
    """Eigen-residual of u o sigma at the eigenvalue of u, per pair."""
    from .eigen import eig_residual

    return np.array([
        eig_residual(ops, lam, pullback(spectrum.vector(i), perm))
        for i, lam in enumerate(spectrum.eigenvalues)
    ])


def eigenspace_defect(ops, vectors, perm: VertexPermutation) -> float:
    """Largest relative M-distance of u o sigma from span(vectors).

    ``vectors`` must be M-orthonormal columns spanning one cluster.
    """
    V = np.asarray(vectors)
    worst = 0.0
    for i in range(V.shape[1]):
        w = pullback(V[:, i], perm)
        rem = w - V @ (V.T @ (ops.M @ w))
        worst = max(worst, ops.m_norm(rem) / ops.m_norm(w))
    return worst
