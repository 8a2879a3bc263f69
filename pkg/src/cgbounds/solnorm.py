"""Cheap running approximation of ||x_k|| and normwise backward errors.

With x_0 = 0 the squared norm of the CG iterate admits the closed form
xi_k = sum_j ||r_j||^{-2} (sum_{i>=j} psi_i)^2, computable by two scalar
recurrences per step.  Under PCG the same recurrences driven by the hatted
coefficients produce ||x_k||_M^2 instead.  Combined with the running
largest-Ritz estimate this yields the Rigal-Gaches normwise backward error
at negligible cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .quadrature import PhiState


class DegenerateStartError(ValueError):
    """r_0 = 0: the solve is already exact and the recurrences are undefined."""


@dataclass
class XiState:
    """State of the ||x_k - x_0||^2 recurrences.

    ``theta`` carries the auxiliary sum theta_k = sum_j (sum_{i=j}^{k-1} psi_i)
    / ||r_j||^2; both theta and xi start at 0 and are nondecreasing.
    ``phi_inv`` records the last consumed 1/phi_{k-1} from the shared phi
    state (one source of truth with the quadrature bounds).
    """

    xi: float = 0.0
    theta: float = 0.0
    phi_inv: float = 1.0
    k: int = 0


def update_xi(state: XiState, gamma_k: float, rnorm2_k: float, phi: PhiState) -> XiState:
    """Advance theta_{k+1} = theta_k + gamma_k / phi_k and
    xi_{k+1} = xi_k + psi_k (theta_{k+1} + theta_k), psi_k = gamma_k rnorm2_k.

    ``phi`` must be the shared phi state already advanced to index k+1 for
    the bound updates of the same CG step; the recurrence reads the retained
    previous value phi_k through ``phi.prev_inv``.
    """
    phi_inv_k = phi.prev_inv
    theta_next = state.theta + gamma_k * phi_inv_k
    psi_k = gamma_k * rnorm2_k
    state.xi = state.xi + psi_k * (theta_next + state.theta)
    state.theta = theta_next
    state.phi_inv = phi_inv_k
    state.k += 1
    return state


@dataclass
class X0Correction:
    """Optional cross-term accumulator for a nonzero starting vector.

    ||x_k||^2 = ||x_0||^2 + 2 * cross_k + xi_k, where cross_k collects the
    inner products of x_0 with the (scaled) residual directions.  Costs one
    extra inner product x_0^T r_k per iteration, so it is opt-in; under PCG
    the stream inner product z^T r replaces ||r||^2 and the result is the
    M-norm.
    """

    x0_norm2: float
    cross: float = 0.0
    a_sum: float = 0.0

    @classmethod
    def start(cls, x0_norm2: float, rnorm2_0: float) -> "X0Correction":
        if rnorm2_0 == 0.0:
            raise DegenerateStartError("r_0 = 0 (x_0 already solves the system)")
        return cls(x0_norm2=x0_norm2)

    def push(self, x0_dot_r_prev: float, rnorm2_prev: float, psi: float):
        """Feed x_0^T r_{k-1}, the stream rnorm2_{k-1}, and psi_{k-1}."""
        self.a_sum += x0_dot_r_prev / rnorm2_prev
        self.cross += psi * self.a_sum


def xi_correction_nonzero_x0(state: XiState, correction: X0Correction | None) -> float:
    """Full ||x_k||^2 estimate for a nonzero x_0 (M-norm under PCG).

    Raises when the correction mode is disabled; with x_0 = 0 the caller
    should read xi directly.
    """
    if correction is None:
        raise ValueError("nonzero-x0 correction mode is not enabled for this run")
    return correction.x0_norm2 + 2.0 * correction.cross + state.xi


def backward_error(rnorm: float, anorm_est: float, xnorm_est: float, bnorm: float) -> float:
    """Rigal-Gaches normwise backward error ||r|| / (||A|| ||x|| + ||b||).

    ``anorm_est`` estimates the spectral norm ||A||_2 = lambda_max(A) (for
    SPD A); the running largest-Ritz estimate rho_max qualifies, as does a
    dense oracle value.
    """
    if min(rnorm, anorm_est, xnorm_est, bnorm) < 0.0:
        raise ValueError("backward error inputs must be nonnegative")
    denom = anorm_est * xnorm_est + bnorm
    if denom == 0.0:
        raise ZeroDivisionError("backward error denominator is zero (A, x, b all vanish)")
    return rnorm / denom


def precond_backward_error(ztr_k: float, rho_max_hat: float, xi_k: float,
                           bnorm_minv2: float) -> float:
    """Normwise backward error of the preconditioned system from cheap estimates.

    ``ztr_k = z_k^T r_k`` is the squared residual norm of the preconditioned
    system, ``rho_max_hat`` the running estimate of ||A_hat||_2 from the PCG
    coefficient stream, ``xi_k`` the running ||x_k||_M^2 estimate, and
    ``bnorm_minv2 = b^T M^{-1} b`` computed once at setup.  With M = I this
    reduces exactly to :func:`backward_error` on estimated quantities.
    """
    if ztr_k < 0.0:
        raise ValueError(f"negative z^T r (preconditioner breakdown): {ztr_k!r}")
    return backward_error(math.sqrt(ztr_k), rho_max_hat, math.sqrt(xi_k),
                          math.sqrt(bnorm_minv2))
