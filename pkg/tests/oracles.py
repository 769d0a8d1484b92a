"""Reference values computed without the package's solver or generators."""

import math

import numpy as np
import scipy.linalg


def sphere_eigenvalues(count):
    """l(l+1)/4 with multiplicity 2l+1 (drift Laplacian on the radius-2 sphere)."""
    out, l = [], 0
    while len(out) < count:
        out += [l * (l + 1) / 4.0] * (2 * l + 1)
        l += 1
    return np.array(out[:count])


def cylinder_eigenvalues(count, extra=12):
    """k^2/2 + m/2: angular Fourier mode k times Hermite degree m along the axis."""
    vals = sorted(k * k / 2.0 + m / 2.0 for k in range(-extra, extra + 1) for m in range(extra))
    return np.array(vals[:count])


def hermite_plane_eigenvalues(count, extra=12):
    """(m + n)/2: two-dimensional Ornstein-Uhlenbeck spectrum."""
    vals = sorted((m + n) / 2.0 for m in range(extra) for n in range(extra))
    return np.array(vals[:count])


def dense_generalized_eigenvalues(K, M, count):
    """Brute-force dense symmetric-definite solve of K u = lam M u."""
    return scipy.linalg.eigh(K.toarray(), M.toarray(), eigvals_only=True,
                             subset_by_index=[0, count - 1])


def right_triangle_blocks():
    """Local matrices of (0,0,0), (1,0,0), (0,1,0) by hand.

    Angles are 90, 45, 45 degrees (cotangents 0, 1, 1); the edge opposite
    a corner gets -cot/2. Area 1/2 gives mass A/6 on the diagonal and
    A/12 off it. The Gaussian weight at the centroid (1/3, 1/3, 0) is
    exp(-(2/9)/4).
    """
    K = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
    M = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 24.0
    return K, M, math.exp(-1.0 / 18.0)


# 4/e: Gaussian area of the radius-2 sphere, 16 pi exp(-1) / (4 pi)
SPHERE_GAUSSIAN_AREA = 4.0 / math.e
