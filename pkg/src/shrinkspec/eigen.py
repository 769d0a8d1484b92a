"""Smallest eigenpairs of the pencil K u = lambda M u.

The constant mode is deflated explicitly: lambda_0 = 0 is reported with
the M-normalized constant vector and every other iterate is kept
M-orthogonal to it. The remaining pairs come from block LOBPCG on the
diagonally scaled pencil  D^-1/2 K D^-1/2,  D^-1/2 M D^-1/2  (D the
lumped mass), in which the Euclidean residual norm equals the lumped
M^-1 norm used for convergence. A smoothed-aggregation AMG cycle on the
scaled K + M serves as preconditioner.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pyamg
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, lobpcg

from .fileio import write_csv
from .operator import WeightedOperators

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_GAP_TOL = 0.02


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues with M-orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    residuals: np.ndarray
    iterations: int
    converged: bool
    tol: float = DEFAULT_TOL

    def __len__(self):
        return len(self.eigenvalues)

    def vector(self, i: int) -> np.ndarray:
        return self.eigenvectors[:, i]

    def table(self) -> list[dict]:
        return [
            {"index": i, "eigenvalue": float(lam), "residual": float(res)}
            for i, (lam, res) in enumerate(zip(self.eigenvalues, self.residuals))
        ]

    def to_csv(self, path):
        write_csv(path, ["index", "eigenvalue", "residual"],
                  [(i, float(lam), float(res)) for i, (lam, res) in
                   enumerate(zip(self.eigenvalues, self.residuals))])

    def to_json(self) -> str:
        return json.dumps({
            "eigenvalues": self.eigenvalues.tolist(),
            "residuals": self.residuals.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "tol": self.tol,
        })


def eig_residual(ops: WeightedOperators, lam: float, u) -> float:
    """||K u - lam M u|| in the lumped M^-1 norm, divided by ||u||_M."""
    u = np.asarray(u, dtype=float)
    nrm = ops.m_norm(u)
    if nrm == 0:
        raise ValueError("zero vector has no eigen-residual")
    return ops.dual_norm(ops.K @ u - lam * (ops.M @ u)) / nrm


def _residuals(ops, lams, U):
    R = ops.K @ U - (ops.M @ U) * lams
    num = np.sqrt(np.sum(R * R / ops.lumped[:, None], axis=0))
    den = np.sqrt(np.einsum("ij,ij->j", U, ops.M @ U))
    return num / den


def _amg_preconditioner(A, seed):
    # pyamg estimates spectral radii from numpy's legacy global generator;
    # seed it for the setup only and leave the caller's state untouched
    state = np.random.get_state()
    np.random.seed(seed)
    try:
        ml = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric", max_coarse=200)
    finally:
        np.random.set_state(state)
    return ml.aspreconditioner(cycle="V")


def solve_smallest(ops: WeightedOperators, k: int = 6, tol: float = DEFAULT_TOL,
                   max_iter: int = 1000, seed: int = 0) -> Spectrum:
    """The ``k`` smallest eigenpairs, constant mode included as pair 0.

    Parameters
    ----------
    k : int
        Number of pairs, counting lambda_0 = 0.
    tol : float
        Per-pair bound on :func:`eig_residual`.
    max_iter : int
        Total LOBPCG iterations across restarts.
    seed : int
        Seeds the random initial block; runs are deterministic per seed.

    Returns
    -------
    Spectrum
        ``converged`` is False (with the best pairs found) if the budget
        runs out.
    """
    n = ops.n
    if k < 1:
        raise ValueError("k must be >= 1")
    guard = max(2, math.ceil(k / 4))
    if k + guard > n // 4:
        raise ValueError(f"k={k} plus {guard} guard vectors exceeds n/4 for n={n}")
    d = ops.lumped
    if np.any(d <= 0):
        raise SolverError("mass matrix is not positive definite")
    # SPD spot check on a few random vectors
    rng = np.random.default_rng(seed)
    probe = rng.standard_normal((n, 3))
    if np.any(np.einsum("ij,ij->j", probe, ops.M @ probe) <= 0):
        raise SolverError("mass matrix is not positive definite")

    one = np.ones(n)
    u0 = one / math.sqrt(one @ (ops.M @ one))
    lams = [0.0]
    vecs = [u0]
    iters = 0
    converged = True
    if k > 1:
        s = 1.0 / np.sqrt(d)
        S = sparse.diags(s)
        Ks = (S @ ops.K @ S).tocsr()
        Ms = (S @ ops.M @ S).tocsr()
        Ks = 0.5 * (Ks + Ks.T)
        Ms = 0.5 * (Ms + Ms.T)
        y0 = (u0 / s)[:, None]
        prec = _amg_preconditioner((Ks + Ms).tocsr(), seed)
        m = k - 1 + guard
        X = rng.standard_normal((n, m))
        X -= y0 @ (y0.T @ (Ms @ X))
        want = k - 1
        chunk = 200
        best = None
        while True:
            step = min(chunk, max_iter - iters)
            if step <= 0:
                break
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                w, Y, hist = lobpcg(
                    Ks, X, B=Ms, M=prec, Y=y0, tol=tol, maxiter=step, largest=False,
                    retResidualNormsHistory=True,
                )
            # the history carries initial and final entries besides the iterations
            iters += min(max(len(hist) - 2, 1), step)
            order = np.argsort(w, kind="stable")
            w, Y = w[order], Y[:, order]
            U = Y * s[:, None]
            res = _residuals(ops, w, U)
            best = (w, U, res)
            if np.all(res[:want] <= tol):
                break
            X = Y
        w, U, res = best
        converged = bool(np.all(res[:want] <= tol))
        if not converged:
            logger.warning("LOBPCG stopped after %d iterations; max residual %.2e",
                           iters, res[:want].max())
        lams += list(w[:want])
        vecs += [U[:, i] for i in range(want)]
    V = np.column_stack(vecs)
    lam = np.array(lams)
    res = _residuals(ops, lam, V)
    res[0] = eig_residual(ops, 0.0, u0)
    return Spectrum(lam, V, res, iters, converged, tol)


def multiplicity_clusters(spectrum, gap_tol: float = DEFAULT_GAP_TOL) -> list[tuple[float, int]]:
    """Group consecutive eigenvalues whose gap is at most gap_tol * max(1, lambda).

    Returns (mean value, multiplicity) per cluster.
    """
    lam = np.asarray(getattr(spectrum, "eigenvalues", spectrum), dtype=float)
    if len(lam) == 0:
        return []
    groups = [[lam[0]]]
    for prev, cur in zip(lam[:-1], lam[1:]):
        if cur - prev <= gap_tol * max(1.0, abs(prev)):
            groups[-1].append(cur)
        else:
            groups.append([cur])
    return [(float(np.mean(g)), len(g)) for g in groups]


def cluster_indices(spectrum, gap_tol: float = DEFAULT_GAP_TOL) -> list[list[int]]:
    """Index lists of the clusters from :func:`multiplicity_clusters`."""
    out, start = [], 0
    for _, mult in multiplicity_clusters(spectrum, gap_tol):
        out.append(list(range(start, start + mult)))
        start += mult
    return out
