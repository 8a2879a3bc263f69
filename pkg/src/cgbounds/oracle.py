"""Dense brute-force reference computations for tests and the verify mode.

Everything here is kept independent of the incremental recurrences it is used
to validate: eigenvalues, singular values, and true errors come from dense
LAPACK factorizations of explicitly assembled matrices, never from solver
state.  These routines are O(n^3) and are gated by a verify-scale limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import SparseSymMatrix

DEFAULT_VERIFY_LIMIT = 2000


class OracleError(RuntimeError):
    """Dense reference computation failed or was refused."""


class VerifyLimitError(OracleError):
    """Problem too large for dense verification."""


@dataclass(frozen=True)
class DenseSym:
    """Dense symmetric matrix wrapper; validates symmetry at construction."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise OracleError(f"not a square matrix: shape {a.shape}")
        scale = np.abs(a).max() if a.size else 0.0
        if scale and np.abs(a - a.T).max() > 1e-14 * scale:
            raise OracleError("matrix is not symmetric to 1e-14 relative")
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def _as_dense(T) -> np.ndarray:
    if isinstance(T, DenseSym):
        return T.entries
    if isinstance(T, SparseSymMatrix):
        return T.to_dense()
    return DenseSym(np.asarray(T, dtype=np.float64)).entries


def _check_limit(n: int, limit: int):
    if n > limit:
        raise VerifyLimitError(f"order {n} exceeds the verify limit {limit}")


def dense_eigs(T, limit: int = DEFAULT_VERIFY_LIMIT) -> np.ndarray:
    """All eigenvalues of a symmetric matrix, ascending.

    Each eigenpair is checked to satisfy ||T q - lambda q|| <= 1e-10 ||T||.
    """
    a = _as_dense(T)
    _check_limit(a.shape[0], limit)
    try:
        w, q = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise OracleError(f"dense eigensolver failed: {exc}") from exc
    norm_t = max(abs(w[0]), abs(w[-1]))
    resid = np.linalg.norm(a @ q - q * w, axis=0)
    if norm_t > 0 and resid.max() > 1e-10 * norm_t:
        raise OracleError(f"eigenpair residual {resid.max():.3e} exceeds 1e-10 * ||T||")
    return w


def symtridiag_eigs(diag, offdiag, limit: int = DEFAULT_VERIFY_LIMIT) -> np.ndarray:
    """Eigenvalues of the symmetric tridiagonal with the given diagonals."""
    diag = np.asarray(diag, dtype=np.float64)
    offdiag = np.asarray(offdiag, dtype=np.float64)
    n = diag.size
    T = np.diag(diag)
    if n > 1:
        T += np.diag(offdiag, 1) + np.diag(offdiag, -1)
    return dense_eigs(T, limit=limit)


def dense_bidiagonal(alphas, betas) -> np.ndarray:
    """Assemble the upper bidiagonal matrix with diagonal alphas, superdiagonal betas."""
    alphas = np.asarray(alphas, dtype=np.float64)
    betas = np.asarray(betas, dtype=np.float64)
    B = np.diag(alphas)
    if alphas.size > 1:
        B += np.diag(betas[: alphas.size - 1], 1)
    return B


def dense_extreme_singular(B, limit: int = DEFAULT_VERIFY_LIMIT) -> tuple[float, float]:
    """Extreme singular values (smax, smin) of a bidiagonal (or general) matrix."""
    B = np.asarray(B, dtype=np.float64)
    _check_limit(max(B.shape), limit)
    try:
        s = np.linalg.svd(B, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise OracleError(f"dense SVD failed: {exc}") from exc
    return float(s[0]), float(s[-1])


def cholesky_solve(A, b: np.ndarray) -> np.ndarray:
    """Solve A x = b through a dense Cholesky factorization."""
    a = _as_dense(A)
    try:
        L = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise OracleError(f"dense Cholesky failed (matrix not SPD): {exc}") from exc
    y = np.linalg.solve(L, b)
    return np.linalg.solve(L.T, y)


def true_error_anorm(A, b: np.ndarray, x_k: np.ndarray,
                     limit: int = DEFAULT_VERIFY_LIMIT,
                     x_true: np.ndarray | None = None) -> float:
    """A-norm of the error of the iterate x_k, ((x-x_k)^T A (x-x_k))^{1/2}.

    The reference x solves A x = b by dense Cholesky; pass ``x_true`` to
    amortize the factorization over many iterates.
    """
    a = _as_dense(A)
    _check_limit(a.shape[0], limit)
    if x_true is None:
        x_true = cholesky_solve(a, b)
    e = x_true - np.asarray(x_k, dtype=np.float64)
    return float(np.sqrt(max(e @ (a @ e), 0.0)))


class ErrorOracle:
    """Per-run cache of the dense reference solution for repeated error queries."""

    def __init__(self, A, b: np.ndarray, limit: int = DEFAULT_VERIFY_LIMIT):
        self.dense = _as_dense(A)
        _check_limit(self.dense.shape[0], limit)
        self.b = np.asarray(b, dtype=np.float64)
        self.x_true = cholesky_solve(self.dense, self.b)

    def anorm_error(self, x_k: np.ndarray) -> float:
        e = self.x_true - x_k
        return float(np.sqrt(max(e @ (self.dense @ e), 0.0)))


def preconditioned_dense(A, M_dense: np.ndarray) -> np.ndarray:
    """Dense symmetric form of the preconditioned operator L^{-1} A L^{-T}, M = L L^T."""
    a = _as_dense(A)
    Lm = np.linalg.cholesky(M_dense)
    Y = np.linalg.solve(Lm, a)
    Ahat = np.linalg.solve(Lm, Y.T).T
    return 0.5 * (Ahat + Ahat.T)
