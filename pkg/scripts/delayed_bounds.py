#!/usr/bin/env python3
"""Error bounds with a delay d on an ic0-preconditioned diffusion system.

With d extra iterations the Gauss lower bound, the Gauss-Radau upper bound
(mu prescribed just below the smallest preconditioned eigenvalue), and the
approximate upper bound (driven by the running smallest-Ritz estimate) all
tighten around the A-norm of the error once convergence accelerates.

Usage: python scripts/delayed_bounds.py [out_dir] [d]
"""

import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from cgbounds import run_diagnosed
from cgbounds.oracle import dense_eigs, preconditioned_dense
from cgbounds.problems import build_rhs, fd_diffusion_matrix
from cgbounds.sparse import build_preconditioner


def main(out_dir="out", d="10"):
    out = Path(out_dir)
    out.mkdir(exist_ok=True)
    d = int(d)
    A = fd_diffusion_matrix(24)
    P = build_preconditioner(A, "ic0")
    b = build_rhs(A, "random", seed=5)
    lam_min_hat = float(dense_eigs(preconditioned_dense(A, P.to_dense(A.n)))[0])
    mu = lam_min_hat / (1.0 + 1e-12)
    run = run_diagnosed(A, b, precond=P, mu=mu, delay=d, max_iters=120, verify=True)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for attr, style, label in [
        ("true_err_anorm", "k:", "A-norm of the error"),
        ("gauss_radau_upper", "--", "Gauss-Radau upper bound"),
        ("approx_upper", "-", "approximate upper bound"),
        ("gauss_lower", "-.", "Gauss lower bound"),
    ]:
        pairs = [(row.k, getattr(row, attr)) for row in run.rows
                 if getattr(row, attr) is not None and getattr(row, attr) > 0]
        ax.semilogy([p[0] for p in pairs], [p[1] for p in pairs], style, label=label)
    ax.set_xlabel("iteration")
    ax.set_title(f"diffusion FD n={A.n}, ic0, delay d={d}")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    target = out / f"delayed_bounds_d{d}.svg"
    fig.savefig(target)
    print(f"wrote {target}")


if __name__ == "__main__":
    main(*sys.argv[1:])
