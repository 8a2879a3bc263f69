"""Incremental estimation of the extreme Ritz values from CG coefficients.

The eigenvalue extremes of the Jacobi matrix T_k equal the squared extreme
singular values of its upper bidiagonal Cholesky factor B_k, so both are
tracked by incremental norm estimation of B_k and of B_k^{-1}: one explicit
2x2 symmetric eigenproblem per appended column, O(1) scalars per step.  An
optional refinement path stores the bidiagonal coefficients and improves the
approximate singular vector by one shifted inverse iteration per step, using
shifted LDL^T factorizations in differential (dstqds) form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .cg import IterationRecord

_EPS = 2.0 ** -52


def _sign(x: float) -> float:
    # sign(0) defined as +1 so the rotation update stays deterministic
    return -1.0 if x < 0.0 else 1.0


@dataclass(frozen=True)
class TwoByTwoEig:
    """Explicit eigendata of the symmetric 2x2 [[rho, sigma], [sigma, tau]].

    ``lambda_plus`` is the larger eigenvalue, ``(s, c)`` the unit eigenvector
    aligned with it (s >= 0, sign(c) = sign(sigma)), and ``chi`` the spectral
    gap sqrt((rho - tau)^2 + 4 sigma^2).
    """

    rho: float
    sigma: float
    tau: float
    chi: float
    lambda_plus: float
    c2: float
    c: float
    s: float


def two_by_two_eigmax(rho: float, sigma: float, tau: float) -> TwoByTwoEig:
    """Largest eigenpair of [[rho, sigma], [sigma, tau]] in closed form.

    The degenerate chi = 0 case (rho = tau, sigma = 0) keeps the vector on
    its first coordinate: c = 0, s = 1, lambda_plus = rho.
    """
    chi = math.hypot(rho - tau, 2.0 * sigma)
    if chi == 0.0:
        return TwoByTwoEig(rho, sigma, tau, 0.0, rho, 0.0, 0.0, 1.0)
    c2 = 0.5 * (1.0 - (rho - tau) / chi)
    c2 = min(max(c2, 0.0), 1.0)
    lam = 0.5 * (rho + tau + chi)
    c = math.sqrt(c2) * _sign(sigma)
    s = math.sqrt(1.0 - c2)
    return TwoByTwoEig(rho, sigma, tau, chi, lam, c2, c, s)


class EstimatorMode(Enum):
    FORWARD = "forward"
    INVERSE = "inverse"


@dataclass
class IncNormState:
    """Scalar state of an incremental norm estimator for a bidiagonal matrix.

    Forward mode tracks rho_k ~ ||B_k||^2 (a Rayleigh quotient, hence a lower
    estimate of lambda_max(T_k), nondecreasing in k); inverse mode tracks
    rho_k ~ ||B_k^{-1}||^2, so ``rho_min = 1/rho_k`` is an upper estimate of
    lambda_min(T_k), nonincreasing in k.  In forward mode the rotation sign
    is irrelevant and ``sigma`` carries sigma_k^2; in inverse mode ``sigma``
    is the signed carrier of the recurrence.
    """

    mode: EstimatorMode
    rho: float
    sigma: float = 0.0
    tau: float = 0.0
    s: float = 0.0
    c: float = 1.0
    c2: float = 1.0
    k: int = 1

    @classmethod
    def forward_start(cls, alpha_1: float) -> "IncNormState":
        return cls(mode=EstimatorMode.FORWARD, rho=alpha_1 * alpha_1)

    @classmethod
    def inverse_start(cls, alpha_1: float) -> "IncNormState":
        rho = 1.0 / (alpha_1 * alpha_1)
        return cls(mode=EstimatorMode.INVERSE, rho=rho, tau=rho)

    @property
    def rho_max(self) -> float:
        if self.mode is not EstimatorMode.FORWARD:
            raise AttributeError("rho_max is defined for forward mode")
        return self.rho

    @property
    def rho_min(self) -> float:
        if self.mode is not EstimatorMode.INVERSE:
            raise AttributeError("rho_min is defined for inverse mode")
        return 1.0 / self.rho


def _advance_forward(state: IncNormState, sigma_sq: float, tau: float):
    chi = math.sqrt((state.rho - tau) ** 2 + 4.0 * sigma_sq)
    if chi == 0.0:
        c2 = 0.0
    else:
        c2 = min(max(0.5 * (1.0 - (state.rho - tau) / chi), 0.0), 1.0)
    state.rho = state.rho + chi * c2
    state.sigma = sigma_sq
    state.tau = tau
    state.c2 = c2
    state.c = math.sqrt(c2)
    state.s = math.sqrt(1.0 - c2)
    state.k += 1


def _advance_inverse(state: IncNormState, sigma: float, tau: float):
    eig = two_by_two_eigmax(state.rho, sigma, tau)
    state.rho = state.rho + eig.chi * eig.c2
    state.sigma = sigma
    state.tau = tau
    state.c2 = eig.c2
    state.c = eig.c
    state.s = eig.s
    state.k += 1


def incnorm_forward_step(state: IncNormState, alpha_k: float, beta_k: float,
                         alpha_k1: float) -> IncNormState:
    """One column append for the ||B_k||^2 estimator.

    sigma_k^2 = alpha_k^2 beta_k^2 c_{k-1}^2 and tau_k = beta_k^2 + alpha_{k+1}^2;
    the new estimate is rho_{k+1} = rho_k + chi_k c_k^2.
    """
    if state.mode is not EstimatorMode.FORWARD:
        raise ValueError("state is not a forward estimator")
    sigma_sq = (alpha_k * beta_k) ** 2 * state.c2
    tau = beta_k * beta_k + alpha_k1 * alpha_k1
    _advance_forward(state, sigma_sq, tau)
    return state


def incnorm_inverse_step(state: IncNormState, alpha_k: float, beta_k: float,
                         alpha_k1: float) -> IncNormState:
    """One column append for the ||B_k^{-1}||^2 estimator.

    sigma_k = -(beta_k / alpha_{k+1})(s_{k-1} sigma_{k-1} + c_{k-1} tau_{k-1}) and
    tau_k = (beta_k^2 tau_{k-1} + 1) / alpha_{k+1}^2.
    """
    if state.mode is not EstimatorMode.INVERSE:
        raise ValueError("state is not an inverse estimator")
    if alpha_k1 == 0.0:
        raise ValueError("singular bidiagonal: alpha_{k+1} = 0")
    sigma = -(beta_k / alpha_k1) * (state.s * state.sigma + state.c * state.tau)
    tau = (beta_k * beta_k * state.tau + 1.0) / (alpha_k1 * alpha_k1)
    _advance_inverse(state, sigma, tau)
    return state


# ---------------------------------------------------------------------------
# CG specialization: estimators driven directly by (gamma, delta)

class CgRitzTracker:
    """Extreme Ritz value estimates from the CG coefficient stream.

    Feed :class:`IterationRecord` objects in order; after record k the pair
    ``(rho_max, rho_min)`` estimates (lambda_max, lambda_min) of T_k.  With
    the substitution alpha_j = 1/sqrt(gamma_{j-1}), beta_j =
    sqrt(delta_j/gamma_{j-1}) the recurrences read directly off gamma and
    delta, so the tracker needs no square roots of coefficients and never
    allocates.
    """

    def __init__(self):
        self.fwd: IncNormState | None = None
        self.inv: IncNormState | None = None
        self._prev_gamma: float | None = None
        self._prev_delta: float | None = None
        self.k = 0

    @property
    def ready(self) -> bool:
        return self.k >= 1

    @property
    def rho_max(self) -> float:
        return self.fwd.rho

    @property
    def rho_min(self) -> float:
        return 1.0 / self.inv.rho

    @property
    def mu(self) -> float:
        """Running smallest-Ritz estimate used by the approximate upper bound."""
        return self.rho_min

    def update(self, record: IterationRecord) -> tuple[float, float]:
        if record.k != self.k + 1:
            raise ValueError(f"records out of order: expected k={self.k + 1}, got {record.k}")
        if record.k == 1:
            # T_1 = 1/gamma_0 exactly; both estimators start there
            self.fwd = IncNormState.forward_start(1.0 / math.sqrt(record.gamma))
            self.inv = IncNormState(mode=EstimatorMode.INVERSE, rho=record.gamma,
                                    tau=record.gamma)
        else:
            gamma_jm1, delta_j = self._prev_gamma, self._prev_delta
            gamma_j = record.gamma
            # forward: sigma_j^2 = (delta_j / gamma_{j-1}^2) c_{j-1}^2,
            #          tau_j = 1/gamma_j + delta_j/gamma_{j-1}
            sigma_sq = (delta_j / (gamma_jm1 * gamma_jm1)) * self.fwd.c2
            tau_f = 1.0 / gamma_j + delta_j / gamma_jm1
            _advance_forward(self.fwd, sigma_sq, tau_f)
            # inverse: sigma_j = -sqrt(gamma_j delta_j / gamma_{j-1}) (s sigma + c tau),
            #          tau_j = gamma_j (delta_j tau_{j-1} / gamma_{j-1} + 1)
            sigma_i = -math.sqrt(gamma_j * delta_j / gamma_jm1) * (
                self.inv.s * self.inv.sigma + self.inv.c * self.inv.tau)
            tau_i = gamma_j * (delta_j * self.inv.tau / gamma_jm1 + 1.0)
            _advance_inverse(self.inv, sigma_i, tau_i)
        self._prev_gamma, self._prev_delta = record.gamma, record.delta
        self.k = record.k
        return self.rho_max, self.rho_min


def from_cg_coeffs(record: IterationRecord, tracker: CgRitzTracker) -> tuple[float, float]:
    """Feed one record to the tracker; returns the updated (rho_max, rho_min)."""
    return tracker.update(record)


# ---------------------------------------------------------------------------
# Shifted LDL^T factorization (differential stationary qds form)

def _tridiag_inf_norm(diag: np.ndarray, offdiag: np.ndarray) -> float:
    n = diag.size
    t_diag = diag.copy()
    t_off = np.empty(max(n - 1, 0))
    for i in range(n - 1):
        t_off[i] = offdiag[i] * diag[i]
        t_diag[i + 1] = diag[i + 1] + offdiag[i] * offdiag[i] * diag[i]
    norm = 0.0
    for i in range(n):
        row = abs(t_diag[i])
        if i > 0:
            row += abs(t_off[i - 1])
        if i < n - 1:
            row += abs(t_off[i])
        norm = max(norm, row)
    return norm


def shifted_ldlt(diag, offdiag, shift: float) -> tuple[np.ndarray, np.ndarray]:
    """From T = L D L^T compute L+ D+ L+^T = T - shift I differentially.

    ``diag`` holds D and ``offdiag`` the subdiagonal of the unit lower
    bidiagonal L; the output uses the same representation.  D+ entries may be
    negative (the shifted matrix is indefinite) - that is valid output.  An
    exactly zero pivot is perturbed by +/- eps ||T|| carrying the sign of the
    previous pivot, the standard qds safeguard.
    """
    d = np.asarray(diag, dtype=np.float64)
    l = np.asarray(offdiag, dtype=np.float64)
    n = d.size
    if l.size != max(n - 1, 0):
        raise ValueError("offdiagonal length must be n - 1")
    norm_t = _tridiag_inf_norm(d, l) + abs(shift)
    if norm_t == 0.0:
        norm_t = 1.0
    dp = np.empty(n)
    lp = np.empty(max(n - 1, 0))
    s = -shift
    prev_sign = 1.0
    for i in range(n - 1):
        di = d[i] + s
        if di == 0.0:
            # re-sync s so the factorization absorbs the perturbation as a
            # tiny diagonal shift at this entry only
            di = prev_sign * _EPS * norm_t
            s = di - d[i]
        dp[i] = di
        lp[i] = d[i] * l[i] / di
        s = lp[i] * l[i] * s - shift
        prev_sign = _sign(di)
    dn = d[n - 1] + s
    if dn == 0.0:
        dn = prev_sign * _EPS * norm_t
    dp[n - 1] = dn
    return dp, lp


def solve_ldlt(diag: np.ndarray, offdiag: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve (L D L^T) y = rhs for unit lower bidiagonal L, diagonal D."""
    n = diag.size
    y = np.array(rhs, dtype=np.float64, copy=True)
    for i in range(1, n):
        y[i] -= offdiag[i - 1] * y[i - 1]
    y /= diag
    for i in range(n - 2, -1, -1):
        y[i] -= offdiag[i] * y[i + 1]
    return y


# ---------------------------------------------------------------------------
# Refinement by one shifted inverse iteration per step

@dataclass
class BidiagonalFactor:
    """Stored bidiagonal coefficients plus singular-vector iterates.

    Only allocated when refinement is enabled; grows by one coefficient pair
    per CG iteration.  ``z_max`` approximates the top right singular vector
    of B_k, ``z_min`` that of B_k^{-1}; ``q`` carries B_k^{-T} w_k (w_k the
    last column of B_k^{-1}) and ``tau_w`` its squared norm ||w_k||^2, both
    independent of the singular-vector iterates.
    """

    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    z_max: np.ndarray | None = None
    rho_max: float | None = None
    z_min: np.ndarray | None = None
    rho_min_inv: float | None = None
    q: np.ndarray | None = None
    tau_w: float | None = None
    max_flagged: bool = False
    min_flagged: bool = False

    @property
    def k(self) -> int:
        return 0 if self.z_max is None else self.z_max.size


def _bidiag_apply(alphas: np.ndarray, betas: np.ndarray, z: np.ndarray) -> np.ndarray:
    out = alphas * z
    if z.size > 1:
        out[:-1] += betas * z[1:]
    return out


def _bidiag_solve(alphas: np.ndarray, betas: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # back substitution for the upper bidiagonal B t = rhs
    n = rhs.size
    t = np.empty(n)
    t[n - 1] = rhs[n - 1] / alphas[n - 1]
    for i in range(n - 2, -1, -1):
        t[i] = (rhs[i] - betas[i] * t[i + 1]) / alphas[i]
    return t


def refine_max(factor: BidiagonalFactor, rho: float) -> tuple[float, np.ndarray, bool]:
    """One shifted inverse iteration on B^T B at shift rho.

    Solves (B^T B - rho I) y = z through the differential shifted LDL^T of
    B^T B (D = alpha^2, L offdiagonal beta/alpha), normalizes, and returns
    the Rayleigh quotient ``rho_hat = ||B z_hat||^2 <= lambda_max(T_k)``.
    On solve failure the unrefined value is returned with ok = False.
    """
    z = factor.z_max
    k = z.size
    alphas = np.asarray(factor.alphas[:k])
    betas = np.asarray(factor.betas[: k - 1])
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        d_in = alphas * alphas
        l_in = betas / alphas[:-1] if k > 1 else np.empty(0)
        dp, lp = shifted_ldlt(d_in, l_in, rho)
        y = solve_ldlt(dp, lp, z)
        norm_y = float(np.linalg.norm(y))
        if not np.isfinite(norm_y) or norm_y == 0.0 or not np.all(np.isfinite(y)):
            return rho, z, False
        z_hat = y / norm_y
        bz = _bidiag_apply(alphas, betas, z_hat)
        rho_hat = float(bz @ bz)
    if not np.isfinite(rho_hat):
        return rho, z, False
    return rho_hat, z_hat, True


def refine_min(factor: BidiagonalFactor, rho: float) -> tuple[float, np.ndarray, bool]:
    """One shifted inverse iteration on B B^T at shift 1/rho.

    B B^T has the U D U^T factorization D = alpha^2, U offdiagonal
    beta_i/alpha_{i+1}; reversal by the backward identity turns it into an
    LDL^T problem handled by the same differential shift.  Returns
    ``rho_hat_min = ||B^{-1} z_hat||^{-2} >= lambda_min(T_k)``.
    """
    z = factor.z_min
    k = z.size
    alphas = np.asarray(factor.alphas[:k])
    betas = np.asarray(factor.betas[: k - 1])
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        d_udu = alphas * alphas
        u = betas / alphas[1:] if k > 1 else np.empty(0)
        dp, lp = shifted_ldlt(d_udu[::-1], u[::-1], 1.0 / rho)
        y = solve_ldlt(dp, lp, z[::-1])[::-1]
        norm_y = float(np.linalg.norm(y))
        if not np.isfinite(norm_y) or norm_y == 0.0 or not np.all(np.isfinite(y)):
            return 1.0 / rho, z, False
        z_hat = y / norm_y
        t = _bidiag_solve(alphas, betas, z_hat)
        rho_hat = float(t @ t)
    if not np.isfinite(rho_hat) or rho_hat == 0.0:
        return 1.0 / rho, z, False
    return 1.0 / rho_hat, z_hat, True


class RefinedRitzTracker:
    """Refined extreme Ritz estimates at one tridiagonal solve per step.

    Maintains the stored bidiagonal and the two approximate singular vectors;
    each update extends the vectors by the explicit 2x2 rotation and then
    (per the configured cadence) applies one shifted inverse iteration,
    adopting the refined vector for subsequent steps.
    """

    def __init__(self, refine_every: int = 1):
        if refine_every < 1:
            raise ValueError("refine_every must be >= 1")
        self.refine_every = refine_every
        self.factor = BidiagonalFactor()
        self.k = 0
        self._prev_gamma: float | None = None

    @property
    def rho_max(self) -> float:
        return self.factor.rho_max

    @property
    def rho_min(self) -> float:
        return 1.0 / self.factor.rho_min_inv

    def update(self, record: IterationRecord) -> tuple[float, float]:
        if record.k != self.k + 1:
            raise ValueError(f"records out of order: expected k={self.k + 1}, got {record.k}")
        f = self.factor
        alpha_new = 1.0 / math.sqrt(record.gamma)
        f.alphas.append(alpha_new)
        f.betas.append(math.sqrt(record.delta / record.gamma))
        if record.k == 1:
            f.z_max = np.array([1.0])
            f.rho_max = alpha_new * alpha_new
            f.z_min = np.array([1.0])
            f.rho_min_inv = record.gamma
            f.q = np.array([record.gamma])
            f.tau_w = record.gamma
        else:
            j = record.k - 1
            alpha_j, beta_j, alpha_j1 = f.alphas[j - 1], f.betas[j - 1], f.alphas[j]
            # extend the max-vector by the 2x2 rotation
            sigma = alpha_j * beta_j * f.z_max[-1]
            tau = beta_j * beta_j + alpha_j1 * alpha_j1
            eig = two_by_two_eigmax(f.rho_max, sigma, tau)
            f.z_max = np.concatenate([eig.s * f.z_max, [eig.c]])
            f.rho_max = f.rho_max + eig.chi * eig.c2
            # extend the min-vector; sigma needs the stored carrier q = B^{-T} w
            scale = beta_j / alpha_j1
            sigma_i = -scale * float(f.z_min @ f.q)
            tau_i = (beta_j * beta_j * f.tau_w + 1.0) / (alpha_j1 * alpha_j1)
            eig_i = two_by_two_eigmax(f.rho_min_inv, sigma_i, tau_i)
            f.z_min = np.concatenate([eig_i.s * f.z_min, [eig_i.c]])
            f.rho_min_inv = f.rho_min_inv + eig_i.chi * eig_i.c2
            f.q = np.concatenate([-scale * f.q, [tau_i]])
            f.tau_w = tau_i
        self.k = record.k
        if self.k % self.refine_every == 0 or self.k <= 2:
            self.refine_now()
        return self.rho_max, self.rho_min

    def refine_now(self):
        f = self.factor
        rho_hat, z_hat, ok = refine_max(f, f.rho_max)
        f.max_flagged = not ok
        if ok:
            f.rho_max, f.z_max = rho_hat, z_hat
        rho_hat_min, z_hat, ok = refine_min(f, f.rho_min_inv)
        f.min_flagged = not ok
        if ok:
            f.rho_min_inv, f.z_min = 1.0 / rho_hat_min, z_hat
