"""Discrete self-shrinkers and the spectrum of their drift Laplacian."""

from .eigen import Spectrum, multiplicity_clusters, solve_smallest
from .mesh import TriangleMesh
from .operator import WeightedOperators, assemble
from .pipeline import RunConfig, compare, run
from .shrinkers import (
    make_angenent_torus,
    make_cylinder,
    make_disk,
    make_sphere,
    shrinker_residual,
)
from .symmetry import dihedral_group, prismatic_group

__all__ = [
    "RunConfig",
    "Spectrum",
    "TriangleMesh",
    "WeightedOperators",
    "assemble",
    "compare",
    "dihedral_group",
    "make_angenent_torus",
    "make_cylinder",
    "make_disk",
    "make_sphere",
    "multiplicity_clusters",
    "prismatic_group",
    "run",
    "shrinker_residual",
    "solve_smallest",
]
