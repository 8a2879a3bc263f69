"""Conjugate gradients with online convergence diagnostics.

The package couples a CG/PCG engine with scalar-recurrence estimators that
run at negligible per-iteration cost: Gauss and Gauss-Radau quadrature
bounds on the A-norm of the error (with an optional delay d), a
mu-insensitive upper bound, incremental extreme Ritz value trackers with
optional inverse-iteration refinement, a running solution-norm estimate,
and normwise backward errors.  A dense oracle module and a CLI harness
support verification at desk scale.
"""

from .cg import (BreakdownError, CgState, IterationRecord, LanczosCoeffs,
                 MatrixNotSpdError, PreconditionerNotSpdError, cg_init, cg_step,
                 lanczos_coeffs)
from .driver import LogRow, RunDiagnostics, run_diagnosed
from .quadrature import (BoundLedger, DegenerateRadauNodeError, GaussRadauState,
                         PhiState, approx_upper, gauss_lower, gauss_radau_upper,
                         new_upper, update_gamma_mu, update_phi)
from .ritz import (BidiagonalFactor, CgRitzTracker, IncNormState, RefinedRitzTracker,
                   TwoByTwoEig, from_cg_coeffs, incnorm_forward_step,
                   incnorm_inverse_step, refine_max, refine_min, shifted_ldlt,
                   two_by_two_eigmax)
from .solnorm import (X0Correction, XiState, backward_error, precond_backward_error,
                      update_xi, xi_correction_nonzero_x0)
from .sparse import (IC0BreakdownError, MatrixFormatError, NotSymmetricError,
                     Preconditioner, PrecondKind, SparseSymMatrix,
                     build_preconditioner, load_matrix_market, matvec,
                     parse_matrix_market)

__version__ = "0.1.0"

__all__ = [
    "BreakdownError", "CgState", "IterationRecord", "LanczosCoeffs",
    "MatrixNotSpdError", "PreconditionerNotSpdError", "cg_init", "cg_step",
    "lanczos_coeffs", "LogRow", "RunDiagnostics", "run_diagnosed",
    "BoundLedger", "DegenerateRadauNodeError", "GaussRadauState", "PhiState",
    "approx_upper", "gauss_lower", "gauss_radau_upper", "new_upper",
    "update_gamma_mu", "update_phi", "BidiagonalFactor", "CgRitzTracker",
    "IncNormState", "RefinedRitzTracker", "TwoByTwoEig", "from_cg_coeffs",
    "incnorm_forward_step",
    "incnorm_inverse_step", "refine_max", "refine_min", "shifted_ldlt",
    "two_by_two_eigmax", "X0Correction", "XiState", "backward_error",
    "precond_backward_error", "update_xi", "xi_correction_nonzero_x0",
    "IC0BreakdownError", "MatrixFormatError", "NotSymmetricError",
    "Preconditioner", "PrecondKind", "SparseSymMatrix", "build_preconditioner",
    "load_matrix_market", "matvec", "parse_matrix_market",
]
