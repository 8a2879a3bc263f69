"""Quadrature-derived bounds on the squared A-norm of the error.

All quantities here are scalar recurrences driven by the CG coefficient
stream: the Gauss rule gives lower bounds, the Gauss-Radau rule with a
prescribed node mu <= lambda_min gives upper bounds, and the residual/search
direction ratio phi gives an upper bound that is insensitive to mu.  Bounds
are handled in squared form throughout; square roots belong to the reporting
boundary.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field


class DegenerateRadauNodeError(RuntimeError):
    """The Gauss-Radau recurrence denominator vanished exactly."""

    def __init__(self, iteration: int):
        super().__init__(f"degenerate Gauss-Radau node update at iteration {iteration}")
        self.iteration = iteration


def update_phi(phi_prev: float, delta_k: float) -> float:
    """Advance phi_k = ||r_k||^2 / ||p_k||^2 one step: phi_prev / (phi_prev + delta)."""
    if not delta_k > 0.0:
        raise ValueError(f"delta must be positive, got {delta_k!r}")
    if not 0.0 < phi_prev <= 1.0:
        raise ValueError(f"phi out of (0, 1]: {phi_prev!r}")
    return phi_prev / (phi_prev + delta_k)


@dataclass
class PhiState:
    """Shared phi recurrence state (phi_0 = 1).

    ``prev_inv`` retains 1/phi from before the latest advance; the solution
    norm recurrence consumes phi at index k-1 while the bounds at the same CG
    step consume phi at index k, and both must read the same stream.
    """

    value: float = 1.0
    inv: float = 1.0
    prev_inv: float = 1.0
    k: int = 0

    def advance(self, delta_k: float) -> float:
        self.prev_inv = self.inv
        self.value = update_phi(self.value, delta_k)
        self.inv = 1.0 / self.value
        self.k += 1
        return self.value

    def freeze_degenerate(self) -> float:
        """Step past an exact-convergence iteration (delta = 0, phi undefined).

        The value is retained; every downstream use multiplies it by the
        vanished residual norm.
        """
        self.prev_inv = self.inv
        self.k += 1
        return self.value


@dataclass
class GaussRadauState:
    """Recurrence state for gamma^(mu), the Gauss-Radau modification of gamma.

    Initialized with gamma^(mu)_0 = 1/mu.  When the prescribed node exceeds
    lambda_min the difference gamma^(mu) - gamma eventually turns nonpositive;
    ``sign_ok`` then latches False, the signed value keeps propagating, and
    reported bounds use the magnitude.
    """

    mu: float
    gamma_mu: float = field(init=False)
    sign_ok: bool = True
    k: int = 0

    def __post_init__(self):
        if not self.mu > 0.0:
            raise ValueError(f"mu must be positive, got {self.mu!r}")
        self.gamma_mu = 1.0 / self.mu


def update_gamma_mu(state: GaussRadauState, gamma_k: float, delta_k1: float) -> float:
    """Advance gamma^(mu)_k -> gamma^(mu)_{k+1} given gamma_k and delta_{k+1}.

    Raises :class:`DegenerateRadauNodeError` when the denominator is exactly
    zero; the caller is expected to stop this track and keep others running.
    """
    diff = state.gamma_mu - gamma_k
    if diff <= 0.0:
        state.sign_ok = False
    denom = state.mu * diff + delta_k1
    if denom == 0.0:
        raise DegenerateRadauNodeError(state.k + 1)
    state.gamma_mu = diff / denom
    if state.gamma_mu <= 0.0:
        state.sign_ok = False
    state.k += 1
    return state.gamma_mu


@dataclass
class BoundLedger:
    """Ring buffer of the trailing d+1 quadrature weights psi_j.

    After ``push_psi(psi_{m-1})`` the buffer spans psi_{m-1-d} .. psi_{m-1}:
    the newest d weights bridge iteration k = m - d to m for the delayed
    upper bounds, and all d+1 bridge k = m - d - 1 to m for the delayed
    lower bound.  Sums are evaluated left-to-right over the buffer, so the
    ledger's partial sums are literal sums of the buffered values.
    """

    d: int
    _psi: deque = field(init=False)
    n_pushed: int = 0

    def __post_init__(self):
        if self.d < 0:
            raise ValueError("delay must be nonnegative")
        self._psi = deque(maxlen=self.d + 1)

    def push_psi(self, psi: float):
        self._psi.append(psi)
        self.n_pushed += 1

    @property
    def partial_sum(self) -> float:
        """Sum of the newest d buffered weights (the delayed-upper bridge)."""
        return self.sum_newest(self.d)

    def sum_newest(self, count: int) -> float:
        buf = list(self._psi)[max(len(self._psi) - count, 0):] if count else []
        s = 0.0
        for v in buf:
            s += v
        return s

    def sum_oldest(self, count: int) -> float:
        buf = list(self._psi)[:count] if count else []
        s = 0.0
        for v in buf:
            s += v
        return s

    @property
    def upper_ready(self) -> bool:
        return self.n_pushed >= self.d

    @property
    def lower_ready(self) -> bool:
        return self.n_pushed >= self.d + 1


def gauss_lower(ledger: BoundLedger, gamma_kd: float, rnorm2_kd: float) -> float | None:
    """Delayed Gauss-rule lower bound on ||x - x_k||_A^2 (squared form).

    Returns the sum of the d buffered weights psi_k .. psi_{k+d-1} plus
    gamma_{k+d} ||r_{k+d}||^2, or None while the ledger is underfilled.
    The product term is itself psi_{k+d}, so the bound equals the literal
    sum of all d+1 buffered weights once that weight has been pushed.
    """
    if not ledger.lower_ready:
        return None
    return ledger.sum_oldest(ledger.d) + gamma_kd * rnorm2_kd


def gauss_radau_upper(ledger: BoundLedger, gamma_mu_kd: float, rnorm2_kd: float,
                      sign_ok: bool = True) -> tuple[float, bool] | None:
    """Delayed Gauss-Radau upper bound on ||x - x_k||_A^2 (squared form).

    Returns ``(value, tainted)``; ``tainted`` propagates a cleared sign flag
    (mu > lambda_min behaviour), in which case the magnitude |gamma^(mu)| is
    used and the value is no longer a guaranteed bound.
    """
    if not ledger.upper_ready:
        return None
    return ledger.partial_sum + abs(gamma_mu_kd) * rnorm2_kd, not sign_ok


def new_upper(ledger: BoundLedger, phi_kd: float, rnorm2_kd: float, mu: float) -> float | None:
    """Delayed mu-insensitive upper bound: sum of weights + (||r||^2 / mu) phi.

    Valid as a bound for mu <= lambda_min; evaluable for any mu > 0 (and used
    as an approximation when mu merely approximates lambda_min).
    """
    if not mu > 0.0:
        raise ValueError(f"mu must be positive, got {mu!r}")
    if not ledger.upper_ready:
        return None
    return ledger.partial_sum + rnorm2_kd * phi_kd / mu


def approx_upper(phi_k: float, rnorm2_k: float, mu_k: float) -> float:
    """Approximate Gauss-Radau upper bound (squared form) with the running
    smallest-Ritz estimate mu_k in place of a prescribed node.

    Carries no bound guarantee: it underestimates the error while the
    smallest Ritz value is still a poor approximation of lambda_min.
    """
    if not mu_k > 0.0:
        raise ValueError(f"mu_k must be positive, got {mu_k!r}")
    return rnorm2_k * phi_k / mu_k
