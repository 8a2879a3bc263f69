"""Test-problem builders: finite-difference diffusion systems, random SPD
matrices with prescribed conditioning, and right-hand-side constructors."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import oracle
from .sparse import SparseSymMatrix, from_coo, from_dense


def _default_diffusion(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return 1.0 / ((2.0 + 1.8 * np.sin(10.0 * x)) * (2.0 + 1.8 * np.sin(10.0 * y)))


def fd_diffusion_matrix(nx: int, ny: int | None = None,
                        coeff: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
                        ) -> SparseSymMatrix:
    """Five-point finite-difference discretization of -div(c grad u) on (0,1)^2.

    Homogeneous Dirichlet boundary, ``nx`` by ``ny`` interior grid, diffusion
    coefficient sampled at edge midpoints.  The default coefficient is a
    smooth oscillatory field producing a moderately ill-conditioned SPD
    system; pass ``coeff=lambda x, y: 1`` for the plain Laplacian.
    """
    if ny is None:
        ny = nx
    if coeff is None:
        coeff = _default_diffusion
    hx, hy = 1.0 / (nx + 1), 1.0 / (ny + 1)
    xs = (np.arange(nx) + 1) * hx
    ys = (np.arange(ny) + 1) * hy

    def idx(i, j):
        return j * nx + i

    rows, cols, vals = [], [], []
    for j in range(ny):
        for i in range(nx):
            x, y = xs[i], ys[j]
            ce = coeff(np.array(x + hx / 2), np.array(y)) / hx ** 2
            cw = coeff(np.array(x - hx / 2), np.array(y)) / hx ** 2
            cn = coeff(np.array(x), np.array(y + hy / 2)) / hy ** 2
            cs = coeff(np.array(x), np.array(y - hy / 2)) / hy ** 2
            center = float(ce + cw + cn + cs)
            me = idx(i, j)
            rows.append(me), cols.append(me), vals.append(center)
            if i + 1 < nx:
                rows += [me, idx(i + 1, j)]
                cols += [idx(i + 1, j), me]
                vals += [-float(ce)] * 2
            if j + 1 < ny:
                rows += [me, idx(i, j + 1)]
                cols += [idx(i, j + 1), me]
                vals += [-float(cn)] * 2
    return from_coo(nx * ny, rows, cols, vals)


def random_spd_matrix(n: int, cond: float, rng: np.random.Generator) -> SparseSymMatrix:
    """Dense-as-CSR random SPD matrix with spectrum log-spaced on [1, cond]."""
    lam = np.logspace(0.0, math.log10(cond), n)
    gauss = rng.standard_normal((n, n))
    q, _ = np.linalg.qr(gauss)
    dense = (q * lam) @ q.T
    dense = 0.5 * (dense + dense.T)
    return from_dense(dense)


def build_rhs(A: SparseSymMatrix, mode: str, seed: int = 0,
              path: str | None = None) -> np.ndarray:
    """Right-hand sides used by the experiment harness.

    ``ones``: all-ones vector.  ``random``: seeded unit-norm Gaussian.
    ``e_last``: last coordinate vector.  ``eigen_equal``: equal components in
    the eigenvector basis with ||b|| = 1 (needs a dense eigendecomposition,
    so it is gated to verify scale).  ``file``: whitespace-separated floats.
    """
    n = A.n
    if mode == "ones":
        return np.ones(n)
    if mode == "random":
        rng = np.random.default_rng(seed)
        b = rng.standard_normal(n)
        return b / np.linalg.norm(b)
    if mode == "e_last":
        b = np.zeros(n)
        b[-1] = 1.0
        return b
    if mode == "eigen_equal":
        dense = A.to_dense()
        if n > oracle.DEFAULT_VERIFY_LIMIT:
            raise oracle.VerifyLimitError(
                f"eigen_equal rhs needs a dense eigendecomposition; order {n} "
                f"exceeds the verify limit {oracle.DEFAULT_VERIFY_LIMIT}")
        _, q = np.linalg.eigh(dense)
        return q @ np.full(n, 1.0 / math.sqrt(n))
    if mode == "file":
        b = np.loadtxt(path, dtype=np.float64).reshape(-1)
        if b.size != n:
            raise ValueError(f"rhs length {b.size} does not match matrix order {n}")
        return b
    raise ValueError(f"unknown rhs mode {mode!r}")
