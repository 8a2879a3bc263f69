"""Orchestration of a CG/PCG solve with the full diagnostics suite attached.

One pass over the iteration stream drives every estimator: quadrature bounds
with delay d (back-filled into the log rows of the iterations they bound),
extreme Ritz value trackers, the running solution-norm estimate, and cheap
backward errors.  An optional verify mode adds dense-oracle columns; nothing
oracle-grade ever feeds the estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import oracle
from .cg import CgState, IterationRecord, cg_init, cg_step
from .quadrature import (BoundLedger, DegenerateRadauNodeError, GaussRadauState, PhiState,
                         approx_upper, gauss_lower, gauss_radau_upper, new_upper,
                         update_gamma_mu)
from .ritz import CgRitzTracker, RefinedRitzTracker
from .solnorm import X0Correction, XiState, precond_backward_error, update_xi
from .sparse import Preconditioner, SparseSymMatrix


@dataclass
class LogRow:
    """One iteration's log columns; bound columns are back-filled at k + d.

    All error-bound columns are reported as square roots (A-norm scale);
    a row's delayed columns stay None at the tail of a run.
    """

    k: int
    rnorm: float
    gauss_lower: float | None = None
    gauss_radau_upper: float | None = None
    gauss_radau_tainted: bool | None = None
    new_upper: float | None = None
    approx_upper: float | None = None
    ritz_max_cheap: float | None = None
    ritz_min_cheap: float | None = None
    ritz_max_refined: float | None = None
    ritz_min_refined: float | None = None
    xi_sqrt: float | None = None
    backward_err_precond: float | None = None
    backward_err_oracle: float | None = None
    true_err_anorm: float | None = None
    backward_err_precond_oracle: float | None = None


class VerifyContext:
    """Dense oracle quantities for a verify-scale run."""

    def __init__(self, A: SparseSymMatrix, b: np.ndarray,
                 precond: Preconditioner | None,
                 limit: int = oracle.DEFAULT_VERIFY_LIMIT):
        self.err_oracle = oracle.ErrorOracle(A, b, limit=limit)
        eigs = oracle.dense_eigs(self.err_oracle.dense, limit=limit)
        self.lambda_min = float(eigs[0])
        self.lambda_max = float(eigs[-1])
        if precond is not None and not precond.is_identity:
            m_dense = precond.to_dense(A.n)
            ahat = oracle.preconditioned_dense(self.err_oracle.dense, m_dense)
            eigs_hat = oracle.dense_eigs(ahat, limit=limit)
            self.lambda_min_hat = float(eigs_hat[0])
            self.lambda_max_hat = float(eigs_hat[-1])
        else:
            self.lambda_min_hat = self.lambda_min
            self.lambda_max_hat = self.lambda_max


StopRule = Callable[["RunDiagnostics", "LogRow"], bool]


def stop_relative_residual(tol: float) -> StopRule:
    """Stop once ||r_k|| / ||b|| <= tol."""
    return lambda run, row: row.rnorm <= tol * run.bnorm


def stop_backward_error(tol: float) -> StopRule:
    """Stop once the cheap normwise backward error drops to tol."""
    return lambda run, row: (row.backward_err_precond is not None
                             and row.backward_err_precond <= tol)


def stop_anorm_bound(tol: float) -> StopRule:
    """Stop once the freshest emitted A-norm upper bound drops to tol."""
    return lambda run, row: (run.latest_upper_sqrt is not None
                             and run.latest_upper_sqrt <= tol)


STOP_RULES = {
    "rel_residual": stop_relative_residual,
    "backward": stop_backward_error,
    "anorm_bound": stop_anorm_bound,
}


@dataclass
class RunDiagnostics:
    """Everything a diagnosed run produced, including raw scalar histories."""

    rows: list[LogRow] = field(default_factory=list)
    records: list[IterationRecord] = field(default_factory=list)
    state: CgState | None = None
    bnorm: float = 0.0
    bnorm_minv2: float = 0.0
    mu: float | None = None
    delay: int = 0
    radau_stopped_at: int | None = None
    stop_reason: str = "max_iters"
    latest_upper_sqrt: float | None = None
    rnorm2_initial: float = 0.0
    phi_values: list[float] = field(default_factory=list)
    gamma_mu_values: list[float] = field(default_factory=list)
    xi_values: list[float] = field(default_factory=list)
    xnorm_m_values: list[float] = field(default_factory=list)
    verify: VerifyContext | None = None


def run_diagnosed(A: SparseSymMatrix, b: np.ndarray, x0: np.ndarray | None = None,
                  precond: Preconditioner | None = None, mu: float | None = None,
                  delay: int = 0, max_iters: int = 1000,
                  stop: StopRule | None = None, refine: bool = False,
                  refine_every: int = 1, verify: bool = False,
                  verify_limit: int = oracle.DEFAULT_VERIFY_LIMIT,
                  x0_correction: bool = False, strict_matvec: bool = False
                  ) -> RunDiagnostics:
    """Run CG/PCG with the full estimator suite attached.

    ``mu`` is the prescribed Gauss-Radau node (0 < mu <= lambda_min of the
    preconditioned operator for guaranteed upper bounds); without it the
    Gauss-Radau and prescribed-mu upper-bound columns stay empty and only the
    approximate upper bound (driven by the running smallest-Ritz estimate)
    is produced.  Breakdown errors from the engine propagate to the caller.
    If the Gauss-Radau recurrence hits a degenerate denominator, that track
    stops (``radau_stopped_at``) and every other estimator keeps running.
    """
    b = np.asarray(b, dtype=np.float64)
    run = RunDiagnostics(mu=mu, delay=delay)
    run.bnorm = float(np.linalg.norm(b))
    use_precond = precond is not None and not precond.is_identity
    if use_precond:
        run.bnorm_minv2 = float(b @ precond.apply_inverse(b))
    else:
        run.bnorm_minv2 = run.bnorm ** 2

    state = cg_init(A, b, x0=x0, precond=precond, strict=strict_matvec)
    run.state = state
    run.rnorm2_initial = state.rnorm2
    x0_is_zero = x0 is None or not np.any(x0)

    phi = PhiState()
    xi_state = XiState()
    ledger = BoundLedger(d=delay)
    gr = GaussRadauState(mu=mu) if mu is not None else None
    tracker = CgRitzTracker()
    refined = RefinedRitzTracker(refine_every=refine_every) if refine else None
    correction = None
    x0_vec = None
    if x0_correction:
        x0_vec = state.x.copy()
        x0_norm2 = float(x0_vec @ (precond.apply(x0_vec) if use_precond else x0_vec))
        correction = X0Correction.start(x0_norm2=x0_norm2, rnorm2_0=state.rnorm2)

    ctx = VerifyContext(A, b, precond, limit=verify_limit) if verify else None
    run.verify = ctx

    def xnorm2_estimate() -> float:
        if correction is not None:
            return correction.x0_norm2 + 2.0 * correction.cross + xi_state.xi
        return xi_state.xi

    def fill_verify(row: LogRow, x: np.ndarray, resnorm2: float, ztr: float):
        xnorm = float(np.linalg.norm(x))
        row.true_err_anorm = ctx.err_oracle.anorm_error(x)
        row.backward_err_oracle = (math.sqrt(resnorm2)
                                   / (ctx.lambda_max * xnorm + run.bnorm))
        xnorm_m = math.sqrt(float(x @ precond.apply(x))) if use_precond else xnorm
        row.backward_err_precond_oracle = (
            math.sqrt(max(ztr, 0.0))
            / (ctx.lambda_max_hat * xnorm_m + math.sqrt(run.bnorm_minv2)))
        if row.k >= 1:
            run.xnorm_m_values.append(xnorm_m)

    row0 = LogRow(k=0, rnorm=math.sqrt(state.resnorm2))
    row0.xi_sqrt = 0.0
    if (x0_is_zero or correction is not None) and run.bnorm_minv2 > 0.0:
        row0.backward_err_precond = precond_backward_error(
            max(state.rnorm2, 0.0), 0.0, xnorm2_estimate(), run.bnorm_minv2)
    if ctx is not None:
        fill_verify(row0, state.x, state.resnorm2, state.rnorm2)
    run.rows.append(row0)

    def emit_upper(m: int, rnorm2_m: float):
        k = m - delay
        if k < 0 or not ledger.upper_ready:
            return
        row = run.rows[k]
        freshest = None
        if gr is not None and run.radau_stopped_at is None:
            result = gauss_radau_upper(ledger, gr.gamma_mu, rnorm2_m, sign_ok=gr.sign_ok)
            if result is not None:
                value2, tainted = result
                row.gauss_radau_upper = math.sqrt(max(value2, 0.0))
                row.gauss_radau_tainted = tainted
                if not tainted:
                    freshest = row.gauss_radau_upper
        if mu is not None:
            value2 = new_upper(ledger, phi.value, rnorm2_m, mu)
            if value2 is not None:
                row.new_upper = math.sqrt(max(value2, 0.0))
                if freshest is None:
                    freshest = row.new_upper
        if tracker.ready:
            value2 = ledger.partial_sum + approx_upper(phi.value, rnorm2_m, tracker.mu)
            row.approx_upper = math.sqrt(max(value2, 0.0))
            if freshest is None:
                freshest = row.approx_upper
        if freshest is not None:
            run.latest_upper_sqrt = freshest

    def emit_lower(m: int, gamma_m: float, rnorm2_prev: float):
        k = m - 1 - delay
        if k < 0:
            return
        value2 = gauss_lower(ledger, gamma_m, rnorm2_prev)
        if value2 is not None:
            run.rows[k].gauss_lower = math.sqrt(max(value2, 0.0))

    # with no delay, the k = 0 upper bounds exist before the first step
    if delay == 0 and not state.converged and run.bnorm > 0.0:
        emit_upper(0, state.rnorm2)

    prev_rnorm2 = state.rnorm2
    x0_dot_r_prev = float(x0_vec @ state.r) if correction is not None else 0.0

    while state.k < max_iters and not state.converged:
        record = cg_step(state, A, precond, strict=strict_matvec)
        m = record.k
        run.records.append(record)

        if record.delta > 0.0:
            phi.advance(record.delta)
        else:
            # exact convergence: r_m = 0 makes phi_m = 0/0; freeze the value,
            # every consumer multiplies it by the vanished residual norm
            phi.freeze_degenerate()
        update_xi(xi_state, record.gamma, prev_rnorm2, phi)
        if correction is not None:
            correction.push(x0_dot_r_prev, prev_rnorm2, record.psi)
        if gr is not None and run.radau_stopped_at is None:
            try:
                update_gamma_mu(gr, record.gamma, record.delta)
            except DegenerateRadauNodeError:
                run.radau_stopped_at = m
        tracker.update(record)
        if refined is not None:
            refined.update(record)
        ledger.push_psi(record.psi)

        run.phi_values.append(phi.value)
        run.gamma_mu_values.append(gr.gamma_mu if gr is not None else math.nan)
        run.xi_values.append(xi_state.xi)

        row = LogRow(k=m, rnorm=math.sqrt(record.resnorm2))
        row.ritz_max_cheap = tracker.rho_max
        row.ritz_min_cheap = tracker.rho_min
        if refined is not None:
            row.ritz_max_refined = refined.rho_max
            row.ritz_min_refined = refined.rho_min
        row.xi_sqrt = math.sqrt(max(xi_state.xi, 0.0))
        if x0_is_zero or correction is not None:
            xn2 = xnorm2_estimate()
            if correction is not None:
                row.xi_sqrt = math.sqrt(max(xn2, 0.0))
            row.backward_err_precond = precond_backward_error(
                max(record.rnorm2, 0.0), tracker.rho_max, max(xn2, 0.0), run.bnorm_minv2)
        if ctx is not None:
            record.xnorm2_direct = float(state.x @ state.x)
            fill_verify(row, state.x, record.resnorm2, record.rnorm2)
        run.rows.append(row)

        emit_upper(m, record.rnorm2)
        emit_lower(m, record.gamma, prev_rnorm2)

        prev_rnorm2 = record.rnorm2
        if correction is not None:
            x0_dot_r_prev = float(x0_vec @ state.r)
        if state.converged:
            run.stop_reason = "exact_residual_zero"
            break
        if stop is not None and stop(run, row):
            run.stop_reason = "stop_rule"
            break
    return run


# ---------------------------------------------------------------------------
# Post-run invariant suite (verify mode)

@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


def _true_errors(run: RunDiagnostics) -> np.ndarray:
    return np.array([row.true_err_anorm for row in run.rows])


def verify_suite(run: RunDiagnostics) -> list[CheckResult]:
    """Invariant checks over a finished verify-mode run.

    Returns one result per check; a False anywhere is a verify failure.
    Error-chain checks are restricted to iterations where the relative
    A-norm error still exceeds 1e-9 (past that point finite precision owns
    the digits).
    """
    if run.verify is None:
        raise ValueError("verify_suite needs a run produced with verify=True")
    from .cg import tridiagonal_from_records
    from .oracle import symtridiag_eigs

    out: list[CheckResult] = []
    records = run.records
    n_steps = len(records)
    stream = np.array([run.rnorm2_initial] + [r.rnorm2 for r in records])
    psis = np.array([r.psi for r in records])

    # minres identity: ||r_k||^2 phi_k == (sum_j ||r_j||^-2)^-1
    worst = 0.0
    inv_sum = 1.0 / stream[0]
    for m in range(1, n_steps + 1):
        inv_sum += 1.0 / stream[m] if stream[m] > 0.0 else 0.0
        if stream[m] == 0.0:
            break
        lhs = stream[m] * run.phi_values[m - 1]
        rhs = 1.0 / inv_sum
        worst = max(worst, abs(lhs - rhs) / rhs)
    out.append(CheckResult("minres_identity", worst <= 1e-12,
                           f"max rel deviation {worst:.3e} (tol 1e-12)"))

    # Ritz sandwich: theta_1(T_k) <= rho_min_k, rho_max_k <= theta_k(T_k)
    slack = 1e-12
    ok = True
    worst_lo = worst_hi = 0.0
    diag, off = tridiagonal_from_records(records)
    for k in range(1, len(diag) + 1):
        theta = symtridiag_eigs(diag[:k], off[: k - 1])
        row = run.rows[k]
        lo_viol = (theta[0] - row.ritz_min_cheap) / theta[0]
        hi_viol = (row.ritz_max_cheap - theta[-1]) / theta[-1]
        for value in (row.ritz_min_refined,):
            if value is not None:
                lo_viol = max(lo_viol, (theta[0] - value) / theta[0])
        for value in (row.ritz_max_refined,):
            if value is not None:
                hi_viol = max(hi_viol, (value - theta[-1]) / theta[-1])
        worst_lo = max(worst_lo, lo_viol)
        worst_hi = max(worst_hi, hi_viol)
        ok = ok and lo_viol <= slack and hi_viol <= slack
    out.append(CheckResult("ritz_sandwich", ok,
                           f"max lower/upper violation {worst_lo:.2e}/{worst_hi:.2e} (tol 1e-12)"))

    # bound chain at d = 0: psi_k <= err_k^2 <= radau_k <= new_k while above saturation
    true_err = _true_errors(run)
    if run.mu is not None and run.mu <= run.verify.lambda_min_hat * (1 + 1e-9):
        ok = True
        worst = -math.inf
        checked = 0
        for k in range(0, n_steps):
            if true_err[0] == 0.0 or true_err[k] / true_err[0] <= 1e-9:
                break
            err2 = true_err[k] ** 2
            lower = psis[k]
            radau = abs(run.gamma_mu_values[k - 1] if k >= 1 else 1.0 / run.mu) * stream[k]
            phi_k = run.phi_values[k - 1] if k >= 1 else 1.0
            newb = stream[k] * phi_k / run.mu
            checked += 1
            if not (lower <= err2 * (1 + 1e-10)
                    and err2 <= radau * (1 + 1e-10)
                    and radau <= newb * (1 + 1e-12)):
                ok = False
            worst = max(worst, lower / err2 - 1, err2 / radau - 1, radau / newb - 1)
        out.append(CheckResult("bound_chain_d0", ok,
                               f"{checked} iterations checked, worst margin {worst:.2e}"))

    # quadrature telescope: err_k^2 - err_m^2 == sum of the bridging psi_j,
    # valid while both endpoints are above the ultimate accuracy level
    ok = True
    worst = 0.0
    for k in range(0, n_steps - 1, max(1, n_steps // 40)):
        if true_err[0] == 0.0 or true_err[k] / true_err[0] <= 1e-9:
            break
        m = min(k + 8, n_steps)
        if true_err[m] / true_err[0] <= 1e-9:
            continue
        bridge = 0.0
        for j in range(k, m):
            bridge += psis[j]
        dev = abs((true_err[k] ** 2 - true_err[m] ** 2) - bridge) / true_err[k] ** 2
        worst = max(worst, dev)
        ok = ok and dev <= 1e-10
    out.append(CheckResult("quadrature_telescope", ok,
                           f"max rel deviation {worst:.3e} (tol 1e-10)"))

    # xi tracks the solution norm (2-norm, or M-norm under PCG)
    if run.xnorm_m_values:
        sat = _saturation_index(true_err)
        worst = 0.0
        for k in range(1, min(sat, n_steps) + 1):
            xn = run.xnorm_m_values[k - 1]
            if xn > 0.0:
                worst = max(worst, abs(xn - math.sqrt(run.xi_values[k - 1])) / xn)
        out.append(CheckResult("xi_vs_xnorm", worst <= 1e-6,
                               f"max rel deviation {worst:.3e} up to saturation (tol 1e-6)"))

    # back-filled lower bounds equal the literal psi window sums
    ok = True
    for k, row in enumerate(run.rows):
        if row.gauss_lower is None:
            continue
        s = 0.0
        for j in range(k, k + run.delay + 1):
            s += psis[j]
        if not math.isclose(row.gauss_lower, math.sqrt(s), rel_tol=1e-15, abs_tol=0.0):
            ok = False
    out.append(CheckResult("ledger_backfill", ok, "lower bounds match literal window sums"))
    return out


def _saturation_index(true_err: np.ndarray) -> int:
    """First iteration whose error is within a factor 2 of the run's minimum."""
    positive = true_err[true_err > 0.0]
    if positive.size == 0:
        return 0
    floor = positive.min()
    for k, err in enumerate(true_err):
        if err <= 2.0 * floor:
            return k
    return len(true_err) - 1
