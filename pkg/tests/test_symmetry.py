import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shrinkspec.eigen import cluster_indices, eig_residual
from shrinkspec.operator import assemble
from shrinkspec.shrinkers import make_cylinder, make_sphere
from shrinkspec.symmetry import (
    Z_REFLECTION,
    Isometry,
    NotInvariantError,
    VertexPermutation,
    antisymmetrize,
    dihedral_group,
    eigenspace_defect,
    equivariance_residuals,
    induced_permutation,
    is_invariant,
    parse_group,
    prismatic_group,
    pullback,
    rotation_z,
)


def test_d2_is_klein_four():
    g = dihedral_group(2)
    assert g.order == 4
    for e in g:
        assert np.allclose(e.matrix, np.diag(np.diag(e.matrix)), atol=1e-15)
        assert set(np.round(np.diag(e.matrix), 12)) <= {-1.0, 1.0}
        assert e.det == pytest.approx(1.0)


def test_d3_closure_table():
    g = dihedral_group(3)
    assert g.order == 6
    table = np.array([[g.index_of(a.matrix @ b.matrix) for b in g] for a in g])
    assert np.all(table >= 0)
    for row in table:
        assert sorted(row) == list(range(6))


@pytest.mark.parametrize("n", [2, 3, 5, 7, 12])
def test_rho2_rho1_is_rotation(n):
    g = dihedral_group(n)
    rho1, rho2 = g.elements[n], g.elements[n + 1]
    np.testing.assert_allclose(rho2.matrix @ rho1.matrix, rotation_z(2 * np.pi / n), atol=1e-14)


def test_prismatic_contents():
    g = prismatic_group(2)
    assert g.order == 8
    assert g.index_of(Z_REFLECTION) >= 0
    for e in g:
        np.testing.assert_allclose(e.matrix.T @ e.matrix, np.eye(3), atol=1e-14)
        assert abs(abs(e.det) - 1) < 1e-14


@pytest.mark.parametrize("n", range(2, 13))
@pytest.mark.parametrize("make", [dihedral_group, prismatic_group])
def test_group_axioms(make, n):
    report = make(n).verify_axioms()
    assert report["passed"], report
    assert report["order"] == report["expected_order"]


def test_dihedral_has_no_reflections():
    assert all(e.det > 0 for e in dihedral_group(6))


@pytest.mark.parametrize("n", [0, 1, 65])
def test_bad_group_parameter(n):
    with pytest.raises(ValueError):
        dihedral_group(n)


def test_parse_group():
    assert parse_group(None) is None
    assert parse_group("dihedral:4").order == 8
    assert parse_group("prismatic:3").order == 12
    with pytest.raises(ValueError):
        parse_group("cyclic:3")
    with pytest.raises(ValueError):
        parse_group("dihedral:x")


def test_group_json():
    data = json.loads(json.dumps(dihedral_group(3).to_json()))
    assert data["name"] == "Dn" and len(data["elements"]) == 6


def test_non_orthogonal_isometry_rejected():
    with pytest.raises(ValueError):
        Isometry(np.diag([1.0, 2.0, 1.0]))


# ------------------------------------------------------------ permutations

def test_sphere_symmetry_is_exact():
    s = make_sphere(2, base="octahedron")
    for g in prismatic_group(4):
        perm = induced_permutation(s, g)
        assert perm.max_deviation <= 1e-12
    assert is_invariant(s, prismatic_group(4))


def test_incommensurate_rotation_is_not_invariant():
    s = make_sphere(2)
    with pytest.raises(NotInvariantError):
        induced_permutation(s, rotation_z(0.1234))
    assert not is_invariant(make_cylinder(4.0, 12, 8), dihedral_group(5))


def test_revolved_rotation_permutation():
    c = make_cylinder(4.0, 24, 8)
    perm = induced_permutation(c, rotation_z(2 * np.pi / 24))
    assert sorted(perm.mapping) == list(range(c.n_vertices))


def test_pullback_basics():
    c = make_cylinder(4.0, 16, 8)
    f = np.random.default_rng(0).standard_normal(c.n_vertices)
    ident = VertexPermutation(np.arange(c.n_vertices), 0.0)
    np.testing.assert_array_equal(pullback(f, ident), f)
    flip = induced_permutation(c, dihedral_group(4).elements[4])
    np.testing.assert_array_equal(pullback(pullback(f, flip), flip), f)
    z = c.vertices[:, 2]
    refl = induced_permutation(c, Z_REFLECTION)
    np.testing.assert_allclose(pullback(z, refl), -z, atol=1e-14)
    np.testing.assert_allclose(antisymmetrize(z, refl), 2 * z, atol=1e-14)
    with pytest.raises(ValueError):
        pullback(f[:-1], ident)


def test_antisymmetrize_invariant_field_is_zero():
    c = make_cylinder(4.0, 16, 8)
    # ring heights are exact, so |z| is invariant to the last bit
    f = np.round(np.abs(c.vertices[:, 2]), 9)
    for g in prismatic_group(4):
        assert not np.any(antisymmetrize(f, induced_permutation(c, g)))


@pytest.fixture(scope="module")
def small_cylinder():
    c = make_cylinder(8.0, 32, 64)
    ops = assemble(c)
    from shrinkspec.eigen import solve_smallest

    return c, ops, solve_smallest(ops, k=8, seed=1)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_pullback_preserves_weighted_inner_product(small_cylinder, seed):
    c, ops, _ = small_cylinder
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal((2, c.n_vertices))
    ref = f @ (ops.M @ g)
    for el in prismatic_group(4):
        perm = induced_permutation(c, el)
        fs, gs = pullback(f, perm), pullback(g, perm)
        assert abs(fs @ (ops.M @ gs) - ref) <= 1e-10 * max(1.0, abs(ref))


def test_operators_conjugate_under_group(small_cylinder):
    c, ops, _ = small_cylinder
    for el in prismatic_group(4):
        p = induced_permutation(c, el).mapping
        for A in (ops.K, ops.M):
            B = A[p][:, p]
            assert abs(B - A).max() <= 1e-10 * abs(A).max()


def test_equivariance_and_stability(small_cylinder):
    c, ops, spec = small_cylinder
    clusters = cluster_indices(spec)[:-1]
    for el in prismatic_group(4):
        perm = induced_permutation(c, el)
        assert equivariance_residuals(ops, spec, perm).max() <= 10 * spec.tol
        for idx in clusters:
            assert eigenspace_defect(ops, spec.eigenvectors[:, idx], perm) <= 1e-6


def test_antisymmetrized_cos_theta_is_eigenfunction(small_cylinder):
    c, ops, spec = small_cylinder
    # split off the exactly degenerate (cos, sin) pair inside the lambda_1 cluster
    pair = next(idx for idx in cluster_indices(spec, gap_tol=1e-6) if len(idx) == 2)
    V = spec.eigenvectors[:, pair]
    lam = spec.eigenvalues[pair].mean()
    x = c.vertices[:, 0]
    u = V @ (V.T @ (ops.M @ x))
    assert np.corrcoef(u, x)[0, 1] > 0.999
    rho1 = dihedral_group(4).elements[4]
    psi = antisymmetrize(u, induced_permutation(c, rho1))
    assert ops.m_norm(psi) > 0.1 * ops.m_norm(u)
    assert eig_residual(ops, lam, psi) <= spec.tol
