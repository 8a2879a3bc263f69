"""Batch harness: load a system, run diagnosed CG/PCG, emit CSV logs and plots.

Exit codes: 0 success, 2 solver breakdown, 3 I/O or parse failure,
4 verify-suite failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

from . import oracle
from .cg import BreakdownError
from .driver import STOP_RULES, LogRow, RunDiagnostics, run_diagnosed, verify_suite
from .problems import build_rhs
from .solnorm import DegenerateStartError
from .sparse import (IC0BreakdownError, MatrixFormatError, PrecondKind,
                     build_preconditioner, load_matrix_market)

CSV_COLUMNS = [
    "k", "rnorm", "gauss_lower", "gauss_radau_upper", "gauss_radau_tainted",
    "new_upper", "approx_upper", "ritz_max_cheap", "ritz_min_cheap",
    "ritz_max_refined", "ritz_min_refined", "xi_sqrt", "backward_err_precond",
    "backward_err_oracle", "true_err_anorm", "backward_err_precond_oracle",
]
PLOT_COLUMNS = ["true_err_anorm", "gauss_lower", "gauss_radau_upper",
                "new_upper", "approx_upper"]


@dataclass
class RunConfig:
    """Parsed harness configuration for one solve."""

    matrix: str
    rhs_mode: str = "ones"
    rhs_path: str | None = None
    rhs_seed: int = 0
    precond: str = "none"
    mu_mode: str = "auto"
    mu_value: float | None = None
    delay: int = 0
    max_iters: int = 1000
    stop: str | None = None
    tol: float | None = None
    refine: bool = False
    verify: bool = False
    strict_matvec: bool = False
    log_path: str | None = None
    plot_path: str | None = None


def _parse_rhs(spec: str) -> tuple[str, str | None, int]:
    if spec.startswith("file:"):
        return "file", spec[5:], 0
    if spec.startswith("random:"):
        return "random", None, int(spec[7:])
    if spec == "random":
        return "random", None, 0
    if spec in ("ones", "e_last", "eigen_equal"):
        return spec, None, 0
    raise argparse.ArgumentTypeError(f"unknown rhs spec {spec!r}")


def _parse_mu(spec: str) -> tuple[str, float | None]:
    if spec.startswith("fixed:"):
        return "fixed", float(spec[6:])
    if spec in ("auto", "oracle"):
        return spec, None
    raise argparse.ArgumentTypeError(f"unknown mu spec {spec!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cgbounds",
        description="CG/PCG with online error bounds, Ritz value tracking, "
                    "and backward-error estimates.")
    sub = parser.add_subparsers(dest="command", required=True)
    solve = sub.add_parser("solve", help="run one diagnosed solve")
    solve.add_argument("--matrix", required=True, help="Matrix Market file (coordinate real)")
    solve.add_argument("--rhs", default="ones",
                       help="file:<path>|ones|random:<seed>|e_last|eigen_equal")
    solve.add_argument("--precond", default="none", choices=["none", "jacobi", "ic0"])
    solve.add_argument("--mu", default="auto",
                       help="fixed:<value>|auto|oracle (Gauss-Radau node)")
    solve.add_argument("--delay", type=int, default=0, metavar="D",
                       help="emit bounds for iteration k at iteration k+D")
    solve.add_argument("--max-iters", type=int, default=1000)
    solve.add_argument("--stop", choices=sorted(STOP_RULES), default=None,
                       help="optional early-stop rule (default: run to --max-iters)")
    solve.add_argument("--tol", type=float, default=None,
                       help="tolerance for --stop (required with it)")
    solve.add_argument("--refine", action="store_true",
                       help="refine Ritz estimates by shifted inverse iteration")
    solve.add_argument("--verify", action="store_true",
                       help="add dense-oracle columns and run the invariant suite")
    solve.add_argument("--strict-matvec", action="store_true",
                       help="literal left-to-right row sums in the matvec")
    solve.add_argument("--log", dest="log_path", default=None, help="CSV output path")
    solve.add_argument("--plot", dest="plot_path", default=None, help="SVG output path")
    return parser


def config_from_args(args) -> RunConfig:
    rhs_mode, rhs_path, rhs_seed = _parse_rhs(args.rhs)
    mu_mode, mu_value = _parse_mu(args.mu)
    return RunConfig(matrix=args.matrix, rhs_mode=rhs_mode, rhs_path=rhs_path,
                     rhs_seed=rhs_seed, precond=args.precond, mu_mode=mu_mode,
                     mu_value=mu_value, delay=args.delay, max_iters=args.max_iters,
                     stop=args.stop, tol=args.tol, refine=args.refine,
                     verify=args.verify, strict_matvec=args.strict_matvec,
                     log_path=args.log_path, plot_path=args.plot_path)


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    return f"{value:.17g}"


def write_csv(rows: list[LogRow], path: str):
    with open(path, "w") as f:
        f.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            f.write(",".join(_format_cell(getattr(row, c)) for c in CSV_COLUMNS) + "\n")


def write_plot(rows: list[LogRow], path: str, title: str = ""):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ks = [row.k for row in rows]
    for column in PLOT_COLUMNS:
        ys = [getattr(row, column) for row in rows]
        pairs = [(k, y) for k, y in zip(ks, ys) if y is not None and y > 0.0]
        if pairs:
            ax.semilogy([p[0] for p in pairs], [p[1] for p in pairs], label=column)
    ax.set_xlabel("iteration")
    ax.set_ylabel("A-norm scale")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def run(config: RunConfig) -> tuple[int, RunDiagnostics | None]:
    """Execute one configured solve; returns (exit_code, diagnostics)."""
    try:
        A = load_matrix_market(config.matrix)
        b = build_rhs(A, config.rhs_mode, seed=config.rhs_seed, path=config.rhs_path)
    except (OSError, MatrixFormatError, oracle.VerifyLimitError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3, None

    try:
        precond = build_preconditioner(A, PrecondKind(config.precond))
    except IC0BreakdownError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2, None

    mu = config.mu_value
    if config.mu_mode == "oracle":
        try:
            if precond.is_identity:
                mu = float(oracle.dense_eigs(A)[0])
            else:
                ahat = oracle.preconditioned_dense(A, precond.to_dense(A.n))
                mu = float(oracle.dense_eigs(ahat)[0])
        except oracle.OracleError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3, None

    stop = None
    if config.stop is not None:
        if config.tol is None:
            print("error: --stop requires --tol", file=sys.stderr)
            return 3, None
        stop = STOP_RULES[config.stop](config.tol)

    try:
        diag = run_diagnosed(A, b, precond=precond, mu=mu, delay=config.delay,
                             max_iters=config.max_iters, stop=stop,
                             refine=config.refine, verify=config.verify,
                             strict_matvec=config.strict_matvec)
    except BreakdownError as exc:
        print(f"breakdown: {exc}", file=sys.stderr)
        return 2, None
    except (oracle.OracleError, DegenerateStartError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3, None

    if config.log_path:
        write_csv(diag.rows, config.log_path)
    if config.plot_path:
        write_plot(diag.rows, config.plot_path, title=config.matrix)

    last = diag.rows[-1]
    print(f"iterations: {last.k}  final rnorm: {last.rnorm:.6e}  stop: {diag.stop_reason}")
    if diag.radau_stopped_at is not None:
        print(f"note: Gauss-Radau track stopped at iteration {diag.radau_stopped_at} "
              f"(degenerate node update)")

    if config.verify:
        failures = 0
        for check in verify_suite(diag):
            status = "PASS" if check.ok else "FAIL"
            print(f"[verify] {check.name}: {status} ({check.detail})")
            failures += 0 if check.ok else 1
        if failures:
            return 4, diag
    return 0, diag


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    code, _ = run(config_from_args(args))
    return code


if __name__ == "__main__":
    sys.exit(main())
