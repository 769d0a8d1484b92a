"""Indexed triangle meshes, edge connectivity and plane partitions."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components as _cc

AREA_EPS = 1e-8
DEFAULT_BAND = 0.5


class MeshError(ValueError):
    """Raised when vertex/face data violate the mesh invariants."""


class DegeneratePlaneError(ValueError):
    """Raised when a cutting plane (nearly) contains the whole surface."""


class TriangleMesh:
    """Immutable triangle mesh with consistent orientation.

    Parameters
    ----------
    vertices : array_like, shape (n, 3)
    faces : array_like, shape (m, 3)
        Vertex indices, counter-clockwise about the outward normal.
    boundary : array_like of bool, optional
        Per-vertex truncation-boundary flag. Derived from the topology
        (vertices on edges with a single incident face) when omitted.
    validate : bool
        Check index range, manifold edges, orientation and face areas.
    """

    def __init__(self, vertices, faces, boundary=None, validate=True):
        v = np.array(vertices, dtype=float).reshape(-1, 3)
        f = np.array(faces, dtype=np.int64).reshape(-1, 3)
        v.flags.writeable = False
        f.flags.writeable = False
        self._v = v
        self._f = f
        if validate:
            self._validate()
        if boundary is None:
            b = np.zeros(len(v), dtype=bool)
            b[self.boundary_edges.ravel()] = True
        else:
            b = np.array(boundary, dtype=bool)
            if b.shape != (len(v),):
                raise MeshError("boundary flag length must equal vertex count")
        b.flags.writeable = False
        self._b = b

    def __repr__(self):
        return f"TriangleMesh(n_vertices={self.n_vertices}, n_faces={self.n_faces})"

    @property
    def vertices(self) -> np.ndarray:
        return self._v

    @property
    def faces(self) -> np.ndarray:
        return self._f

    @property
    def boundary(self) -> np.ndarray:
        return self._b

    @property
    def n_vertices(self) -> int:
        return len(self._v)

    @property
    def n_faces(self) -> int:
        return len(self._f)

    def _validate(self):
        v, f = self._v, self._f
        if not np.all(np.isfinite(v)):
            raise MeshError("non-finite vertex coordinates")
        if len(f) == 0:
            return
        if f.min() < 0 or f.max() >= len(v):
            raise MeshError("face index out of range")
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise MeshError("face repeats a vertex")
        directed = self._directed_edges
        key = directed[:, 0] * len(v) + directed[:, 1]
        if len(np.unique(key)) != len(key):
            # same directed edge used twice: flipped neighbour or >2 faces
            raise MeshError("inconsistent orientation or non-manifold edge")
        _, counts = np.unique(np.sort(directed, axis=1) @ np.array([len(v), 1]), return_counts=True)
        if counts.max() > 2:
            raise MeshError("edge shared by more than two faces")
        areas = self.face_areas
        if np.any(areas < AREA_EPS * areas.mean()):
            raise MeshError("degenerate face")

    @cached_property
    def _directed_edges(self) -> np.ndarray:
        f = self._f
        return np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs, shape (e, 2)."""
        if len(self._f) == 0:
            return np.zeros((0, 2), dtype=np.int64)
        return np.unique(np.sort(self._directed_edges, axis=1), axis=0)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        if len(self._f) == 0:
            return np.zeros((0, 2), dtype=np.int64)
        e, counts = np.unique(np.sort(self._directed_edges, axis=1), axis=0, return_counts=True)
        return e[counts == 1]

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric vertex adjacency over mesh edges."""
        n = self.n_vertices
        e = self.edges
        data = np.ones(2 * len(e))
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))

    @cached_property
    def face_normals(self) -> np.ndarray:
        """Unnormalized normals (twice the area) per face."""
        p = self._v[self._f]
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @cached_property
    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals, axis=1)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self._v[self._f].mean(axis=1)

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        """Area-weighted unit vertex normals."""
        acc = np.zeros_like(self._v)
        for k in range(3):
            np.add.at(acc, self._f[:, k], self.face_normals)
        norm = np.linalg.norm(acc, axis=1, keepdims=True)
        return np.divide(acc, norm, out=np.zeros_like(acc), where=norm > 0)

    @cached_property
    def mean_edge_length(self) -> float:
        e = self.edges
        if len(e) == 0:
            return 0.0
        return float(np.linalg.norm(self._v[e[:, 0]] - self._v[e[:, 1]], axis=1).mean())

    @property
    def is_closed(self) -> bool:
        return len(self.boundary_edges) == 0

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + self.n_faces

    def transformed(self, matrix) -> "TriangleMesh":
        """Apply a 3x3 linear map; orientation-reversing maps flip winding."""
        matrix = np.asarray(matrix, dtype=float)
        faces = self._f if np.linalg.det(matrix) > 0 else self._f[:, ::-1]
        return TriangleMesh(self._v @ matrix.T, faces, boundary=self._b, validate=False)


@dataclass(frozen=True)
class PlaneThroughOrigin:
    """Plane {p : <normal, p> = 0} with its two open half-spaces."""

    unit_normal: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.unit_normal, dtype=float).reshape(3)
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValueError("plane normal must have unit length")
        object.__setattr__(self, "unit_normal", v)

    @classmethod
    def from_vector(cls, v) -> "PlaneThroughOrigin":
        v = np.asarray(v, dtype=float)
        return cls(v / np.linalg.norm(v))

    def signed_distance(self, points) -> np.ndarray:
        return np.asarray(points) @ self.unit_normal


def check_field(mesh: TriangleMesh, values) -> np.ndarray:
    """Return ``values`` as a float vector bound to ``mesh``'s vertex count."""
    f = np.asarray(values, dtype=float)
    if f.shape != (mesh.n_vertices,):
        raise ValueError(f"field has shape {f.shape}, expected ({mesh.n_vertices},)")
    return f


def subgraph_components(adjacency: sparse.csr_matrix, mask: np.ndarray):
    """Connected components of the vertex subgraph selected by ``mask``.

    Returns per-vertex labels (-1 outside the mask) and the component count.
    """
    labels = np.full(adjacency.shape[0], -1, dtype=np.int64)
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return labels, 0
    sub = adjacency[idx][:, idx]
    count, sub_labels = _cc(sub, directed=False)
    labels[idx] = sub_labels
    return labels, int(count)


def connected_components(mesh: TriangleMesh):
    """Edge-connected vertex components.

    Returns
    -------
    labels : ndarray of int, one per vertex
    count : int
    """
    if mesh.n_vertices == 0:
        return np.zeros(0, dtype=np.int64), 0
    return subgraph_components(mesh.adjacency, np.ones(mesh.n_vertices, dtype=bool))


def plane_sign_partition(mesh: TriangleMesh, plane, band: float = DEFAULT_BAND):
    """Count components on either side of a plane through the origin.

    Vertices within ``band`` mean edge lengths of the plane belong to
    neither side.

    Returns
    -------
    (n_positive, n_negative) : tuple of int

    Raises
    ------
    DegeneratePlaneError
        If at least 99% of the vertices fall inside the excluded band.
    """
    if band < 0:
        raise ValueError("band must be non-negative")
    if not isinstance(plane, PlaneThroughOrigin):
        plane = PlaneThroughOrigin.from_vector(plane)
    d = plane.signed_distance(mesh.vertices)
    width = band * mesh.mean_edge_length
    excluded = np.abs(d) <= width
    if excluded.sum() >= 0.99 * mesh.n_vertices:
        raise DegeneratePlaneError("plane contains the surface")
    _, n_pos = subgraph_components(mesh.adjacency, d > width)
    _, n_neg = subgraph_components(mesh.adjacency, d < -width)
    return n_pos, n_neg
