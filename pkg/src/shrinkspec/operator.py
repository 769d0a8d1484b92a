"""Gaussian-weighted P1 finite elements for the drift Laplacian.

The weak form of  L u = Delta u - 1/2 <x, grad u>  with respect to the
measure exp(-|x|^2/4) dA gives the pencil (K, M):

    K_ij = int <grad phi_i, grad phi_j> w dA,    M_ij = int phi_i phi_j w dA,

so that  -L u = lambda u  discretizes to  K u = lambda M u.  The weight
is evaluated once per triangle at its centroid. Only the symmetric weak
form is ever built.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.io import mmwrite

from .mesh import MeshError, TriangleMesh, check_field


def gaussian_weight(points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    return np.exp(-np.einsum("...i,...i->...", p, p) / 4.0)


def corner_cotangents(mesh: TriangleMesh) -> np.ndarray:
    """cot of the interior angle at each face corner, shape (m, 3)."""
    p = mesh.vertices[mesh.faces]
    cot = np.empty((mesh.n_faces, 3))
    for k in range(3):
        e1 = p[:, (k + 1) % 3] - p[:, k]
        e2 = p[:, (k + 2) % 3] - p[:, k]
        cross = np.linalg.norm(np.cross(e1, e2), axis=1)
        if np.any(cross <= 0):
            raise MeshError("degenerate triangle in assembly")
        cot[:, k] = np.einsum("ij,ij->i", e1, e2) / cross
    return cot


def _symmetric_from_pairs(n, rows, cols, vals, diag=None):
    """Sum pair contributions into the upper triangle and mirror it.

    Mirroring (rather than summing both orientations independently)
    makes the result exactly symmetric in floating point.
    """
    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    upper = sparse.csr_matrix((vals, (lo, hi)), shape=(n, n))
    upper.sum_duplicates()
    full = upper + upper.T
    if diag is None:
        diag = -np.asarray(full.sum(axis=1)).ravel()
    return (full + sparse.diags(diag)).tocsr()


def cotangent_stiffness(mesh: TriangleMesh, face_weights=None) -> sparse.csr_matrix:
    """Stiffness with off-diagonals -1/2 cot(opposite angle) * weight.

    Diagonals are minus the off-diagonal row sums so constants lie in the
    kernel up to rounding of one sum per row.
    """
    cot = corner_cotangents(mesh)
    w = np.ones(mesh.n_faces) if face_weights is None else np.asarray(face_weights)
    f = mesh.faces
    rows, cols, vals = [], [], []
    for k in range(3):
        rows.append(f[:, (k + 1) % 3])
        cols.append(f[:, (k + 2) % 3])
        vals.append(-0.5 * cot[:, k] * w)
    return _symmetric_from_pairs(
        mesh.n_vertices, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    )


def consistent_mass(mesh: TriangleMesh, face_weights=None) -> sparse.csr_matrix:
    w = np.ones(mesh.n_faces) if face_weights is None else np.asarray(face_weights)
    aw = mesh.face_areas * w
    f = mesh.faces
    rows, cols, vals = [], [], []
    for k in range(3):
        rows.append(f[:, k])
        cols.append(f[:, (k + 1) % 3])
        vals.append(aw / 12.0)
    diag = np.zeros(mesh.n_vertices)
    for k in range(3):
        np.add.at(diag, f[:, k], aw / 6.0)
    return _symmetric_from_pairs(
        mesh.n_vertices, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), diag
    )


@dataclass(frozen=True)
class WeightedOperators:
    """Stiffness/mass pencil of the drift Laplacian on one mesh."""

    K: sparse.csr_matrix
    M: sparse.csr_matrix
    mesh: TriangleMesh = field(repr=False)
    weight: str = "gaussian exp(-|x|^2/4)"

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def lumped(self) -> np.ndarray:
        """Row sums of M (the lumped mass diagonal)."""
        return np.asarray(self.M.sum(axis=1)).ravel()

    def dual_norm(self, r) -> float:
        """Norm of a residual vector in the lumped M^{-1} inner product."""
        r = np.asarray(r)
        return float(np.sqrt(np.sum(r * r / self.lumped)))

    def m_norm(self, f) -> float:
        return float(np.sqrt(max(f @ (self.M @ f), 0.0)))

    def export_matrix_market(self, prefix) -> tuple[str, str]:
        """Write ``<prefix>_K.mtx`` and ``<prefix>_M.mtx``."""
        k_path, m_path = f"{prefix}_K.mtx", f"{prefix}_M.mtx"
        mmwrite(k_path, self.K, comment="weighted stiffness", symmetry="symmetric")
        mmwrite(m_path, self.M, comment="weighted mass", symmetry="symmetric")
        return k_path, m_path


def assemble(mesh: TriangleMesh) -> WeightedOperators:
    """Build (K, M) with centroid-evaluated Gaussian weight on every face.

    Truncation boundaries get natural (Neumann) conditions.
    """
    if mesh.n_faces == 0:
        raise MeshError("cannot assemble on a mesh without faces")
    areas = mesh.face_areas
    if np.any(areas <= 0) or np.any(areas < 1e-8 * areas.mean()):
        raise MeshError("degenerate triangle in assembly")
    w = gaussian_weight(mesh.centroids)
    return WeightedOperators(cotangent_stiffness(mesh, w), consistent_mass(mesh, w), mesh)


def rayleigh(ops: WeightedOperators, f) -> float:
    """(f^T K f) / (f^T M f)."""
    f = check_field(ops.mesh, f)
    denom = f @ (ops.M @ f)
    if not denom > 0:
        raise ValueError("field has zero weighted norm")
    return float(max(f @ (ops.K @ f), 0.0) / denom)


def mean_value(ops: WeightedOperators, f) -> float:
    """Weighted mean  int f dmu / int dmu."""
    f = check_field(ops.mesh, f)
    m1 = ops.lumped
    return float(m1 @ f / m1.sum())


def project_out_constants(ops: WeightedOperators, f) -> np.ndarray:
    """Remove the weighted mean so that 1^T M f = 0."""
    f = check_field(ops.mesh, f)
    g = f - mean_value(ops, f)
    # one correction step cleans up cancellation in the first pass
    return g - mean_value(ops, g)


def coordinate_residual(ops: WeightedOperators, axis: int, gate: float | None = None) -> float:
    """Relative defect of K x_i = 1/2 M x_i in the lumped dual norm.

    Identically vanishing coordinates (the normal axis of a plane through
    the origin) return 0. With ``gate`` set, the mesh must first pass the
    shrinker-residual check at that level.
    """
    if axis not in (0, 1, 2):
        raise ValueError("axis must be 0, 1 or 2")
    mesh = ops.mesh
    if gate is not None:
        from .shrinkers import shrinker_residual

        rep = shrinker_residual(mesh)
        if rep.max_abs_residual > gate:
            raise ValueError(
                f"mesh fails shrinker gate: residual {rep.max_abs_residual:.3g} > {gate}"
            )
    x = mesh.vertices[:, axis]
    scale = np.abs(mesh.vertices).max() if mesh.n_vertices else 0.0
    if np.abs(x).max() <= 1e-14 * max(scale, 1.0):
        return 0.0
    half_mx = 0.5 * (ops.M @ x)
    return ops.dual_norm(ops.K @ x - half_mx) / ops.dual_norm(half_mx)
