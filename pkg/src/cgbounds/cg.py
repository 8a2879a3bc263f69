"""CG and PCG state machines emitting the per-iteration scalar stream.

The solver never stores past vectors: every estimator downstream consumes
only the scalars collected in :class:`IterationRecord`.  Coefficient names
follow the Hestenes-Stiefel recurrences: gamma is the step length, delta the
direction-update coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .sparse import Preconditioner, SparseSymMatrix, matvec


class BreakdownError(RuntimeError):
    """CG recurrence hit a quantity whose sign contradicts positive definiteness."""

    def __init__(self, iteration: int, value: float, message: str):
        super().__init__(f"{message} at iteration {iteration}: {value!r}")
        self.iteration = iteration
        self.value = value


class MatrixNotSpdError(BreakdownError):
    def __init__(self, iteration: int, value: float):
        super().__init__(iteration, value, "nonpositive curvature p^T A p (matrix not SPD)")


class PreconditionerNotSpdError(BreakdownError):
    def __init__(self, iteration: int, value: float):
        super().__init__(iteration, value, "nonpositive z^T r (preconditioner not SPD)")


@dataclass
class IterationRecord:
    """Scalars produced by one CG/PCG iteration k.

    ``gamma`` is gamma_{k-1}, ``delta`` is delta_k, ``rnorm2`` is the stream
    inner product ||r_k||^2 (CG) or z_k^T r_k (PCG), ``resnorm2`` is always
    the Euclidean ||r_k||^2, and ``psi = gamma_{k-1} * rnorm2_{k-1}`` is the
    quadrature weight: the reduction of the squared A-norm of the error from
    iteration k-1 to k.
    """

    k: int
    gamma: float
    delta: float
    rnorm2: float
    resnorm2: float
    psi: float
    xnorm2_direct: float | None = None


@dataclass
class CgState:
    """Mutable solver state; advanced in place by :func:`cg_step`."""

    k: int
    x: np.ndarray
    r: np.ndarray
    p: np.ndarray
    z: np.ndarray | None
    rnorm2: float
    resnorm2: float
    gamma_prev: float | None = None
    delta: float | None = None
    converged: bool = False


def cg_init(A: SparseSymMatrix, b: np.ndarray, x0: np.ndarray | None = None,
            precond: Preconditioner | None = None, strict: bool = False) -> CgState:
    """Set up CG/PCG for A x = b from the initial guess x0 (default zero)."""
    b = np.asarray(b, dtype=np.float64)
    if x0 is None:
        x0 = np.zeros(A.n)
        r = b.copy()
    else:
        x0 = np.asarray(x0, dtype=np.float64)
        r = b - matvec(A, x0, strict=strict)
    resnorm2 = float(r @ r)
    use_precond = precond is not None and not precond.is_identity
    if use_precond:
        z = precond.apply_inverse(r)
        rnorm2 = float(z @ r)
        if resnorm2 > 0.0 and rnorm2 <= 0.0:
            raise PreconditionerNotSpdError(0, rnorm2)
        p = z.copy()
    else:
        z = None
        rnorm2 = resnorm2
        p = r.copy()
    return CgState(k=0, x=x0.copy(), r=r, p=p, z=z, rnorm2=rnorm2,
                   resnorm2=resnorm2, converged=(resnorm2 == 0.0))


def cg_step(state: CgState, A: SparseSymMatrix, precond: Preconditioner | None = None,
            strict: bool = False) -> IterationRecord:
    """Advance one iteration, following the classical line order exactly.

    Raises :class:`MatrixNotSpdError` on nonpositive curvature and
    :class:`PreconditionerNotSpdError` on a nonpositive z^T r; downstream
    estimators rely on the positivity of gamma and delta.
    """
    if state.converged:
        raise RuntimeError("cg_step called on a converged state (r = 0)")
    use_precond = precond is not None and not precond.is_identity
    k = state.k + 1

    Ap = matvec(A, state.p, strict=strict)
    pAp = float(state.p @ Ap)
    if pAp <= 0.0:
        raise MatrixNotSpdError(k, pAp)
    gamma = state.rnorm2 / pAp
    x = state.x + gamma * state.p
    r = state.r - gamma * Ap
    resnorm2 = float(r @ r)
    if use_precond:
        z = precond.apply_inverse(r)
        rnorm2_new = float(z @ r)
        # z^T r < 0 signals an indefinite preconditioner; an exact zero with
        # r != 0 only happens by underflow far past attainable accuracy and
        # is treated as convergence
        if resnorm2 > 0.0 and rnorm2_new < 0.0:
            raise PreconditionerNotSpdError(k, rnorm2_new)
    else:
        z = None
        rnorm2_new = resnorm2
    delta = rnorm2_new / state.rnorm2
    p = (z if use_precond else r) + delta * state.p
    psi = gamma * state.rnorm2

    state.k = k
    state.x, state.r, state.p, state.z = x, r, p, z
    state.gamma_prev, state.delta = gamma, delta
    state.rnorm2, state.resnorm2 = rnorm2_new, resnorm2
    state.converged = resnorm2 == 0.0 or rnorm2_new == 0.0
    return IterationRecord(k=k, gamma=gamma, delta=delta, rnorm2=rnorm2_new,
                           resnorm2=resnorm2, psi=psi)


# ---------------------------------------------------------------------------
# CG -> Lanczos coefficient map

@dataclass(frozen=True)
class LanczosCoeffs:
    """Tridiagonal and Cholesky-bidiagonal coefficients derived from step k.

    ``alpha_tilde``/``beta_tilde`` are the Jacobi-matrix entries (beta_tilde
    couples steps k and k+1); ``alpha = 1/sqrt(gamma_{k-1})`` and
    ``beta = sqrt(delta_k / gamma_{k-1})`` are the entries of the upper
    bidiagonal Cholesky factor.
    """

    k: int
    alpha_tilde: float
    beta_tilde: float
    alpha: float
    beta: float


class LanczosCoeffStream:
    """Incremental CG -> Lanczos map with delta_0 = 0, gamma_{-1} = 1.

    A negative delta (a finite-precision artifact; impossible in exact
    arithmetic) truncates the stream: ``push`` flags it and returns None from
    then on.
    """

    def __init__(self):
        self._gamma_prev = 1.0
        self._delta_prev = 0.0
        self._next_k = 1
        self.truncated_at: int | None = None

    def push(self, record: IterationRecord) -> LanczosCoeffs | None:
        if self.truncated_at is not None:
            return None
        if record.k != self._next_k:
            raise ValueError(f"records out of order: expected k={self._next_k}, got {record.k}")
        if record.delta < 0.0:
            self.truncated_at = record.k
            return None
        gamma, delta = record.gamma, record.delta
        alpha_tilde = 1.0 / gamma + self._delta_prev / self._gamma_prev
        beta_tilde = math.sqrt(delta) / gamma
        alpha = 1.0 / math.sqrt(gamma)
        beta = math.sqrt(delta / gamma)
        self._gamma_prev, self._delta_prev = gamma, delta
        self._next_k += 1
        return LanczosCoeffs(k=record.k, alpha_tilde=alpha_tilde, beta_tilde=beta_tilde,
                             alpha=alpha, beta=beta)


def lanczos_coeffs(records: Iterable[IterationRecord]) -> list[LanczosCoeffs]:
    """Map an ordered record stream to Lanczos coefficients (truncating on delta < 0)."""
    stream = LanczosCoeffStream()
    out = []
    for record in records:
        coeffs = stream.push(record)
        if coeffs is None:
            break
        out.append(coeffs)
    return out


def tridiagonal_from_records(records: Iterable[IterationRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and offdiagonal of the Jacobi matrix T_k implied by the records."""
    coeffs = lanczos_coeffs(records)
    diag = np.array([c.alpha_tilde for c in coeffs])
    off = np.array([c.beta_tilde for c in coeffs[:-1]])
    return diag, off


def bidiagonal_from_records(records: Iterable[IterationRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and superdiagonal of the upper bidiagonal Cholesky factor of T_k."""
    coeffs = lanczos_coeffs(records)
    alphas = np.array([c.alpha for c in coeffs])
    betas = np.array([c.beta for c in coeffs[:-1]])
    return alphas, betas
