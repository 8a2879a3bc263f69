#!/usr/bin/env python3
"""Relative accuracy of the extreme Ritz value estimates along a CG run.

For bcsstk01 (unpreconditioned) and a finite-difference diffusion system,
plot against the iteration index: the distance of the extreme Ritz values
of T_k to the extreme eigenvalues of A, the accuracy of the cheap O(1)
estimates, and the accuracy of the refined (one shifted inverse iteration
per step) estimates.

Usage: python scripts/ritz_tracking.py [out_dir]
"""

import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from cgbounds import CgRitzTracker, RefinedRitzTracker, cg_init, cg_step, load_matrix_market
from cgbounds.cg import tridiagonal_from_records
from cgbounds.oracle import dense_eigs, symtridiag_eigs
from cgbounds.problems import build_rhs, fd_diffusion_matrix

REPO = Path(__file__).resolve().parent.parent


def track(A, b, max_iters):
    lam = dense_eigs(A)
    lam_min, lam_max = float(lam[0]), float(lam[-1])
    state = cg_init(A, b)
    cheap = CgRitzTracker()
    refined = RefinedRitzTracker()
    records = []
    rows = []
    for _ in range(max_iters):
        if state.converged:
            break
        rec = cg_step(state, A)
        records.append(rec)
        cheap.update(rec)
        refined.update(rec)
        diag, off = tridiagonal_from_records(records)
        theta = symtridiag_eigs(diag, off)
        rows.append({
            "theta_vs_max": abs(lam_max - theta[-1]) / lam_max,
            "theta_vs_min": abs(lam_min - theta[0]) / lam_min,
            "cheap_max": abs(theta[-1] - cheap.rho_max) / theta[-1],
            "cheap_min": abs(theta[0] - cheap.rho_min) / theta[0],
            "refined_max": abs(theta[-1] - refined.rho_max) / theta[-1],
            "refined_min": abs(theta[0] - refined.rho_min) / theta[0],
            "cheap_max_vs_A": abs(lam_max - cheap.rho_max) / lam_max,
            "cheap_min_vs_A": abs(lam_min - cheap.rho_min) / lam_min,
        })
    return rows


def panel(ax, rows, side, title):
    ks = np.arange(1, len(rows) + 1)
    get = lambda key: np.maximum([r[key] for r in rows], 1e-17)
    ax.semilogy(ks, get(f"theta_vs_{side}"), "-.", label=f"Ritz vs lambda_{side}")
    ax.semilogy(ks, get(f"cheap_{side}"), "--", label="cheap estimate vs Ritz")
    ax.semilogy(ks, get(f"refined_{side}"), ":", label="refined estimate vs Ritz")
    ax.semilogy(ks, get(f"cheap_{side}_vs_A"), "-", lw=1.0,
                label=f"cheap estimate vs lambda_{side}")
    ax.set_title(title)
    ax.set_xlabel("iteration")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)


def main(out_dir="out"):
    out = Path(out_dir)
    out.mkdir(exist_ok=True)
    fig, axes = plt.subplots(2, 2, figsize=(12, 8))

    A = load_matrix_market(REPO / "data" / "bcsstk01.mtx")
    rows = track(A, build_rhs(A, "eigen_equal"), 200)
    panel(axes[0, 0], rows, "max", "bcsstk01: largest")
    panel(axes[0, 1], rows, "min", "bcsstk01: smallest")

    F = fd_diffusion_matrix(16)
    rows = track(F, build_rhs(F, "random", seed=3), 160)
    panel(axes[1, 0], rows, "max", f"diffusion FD n={F.n}: largest")
    panel(axes[1, 1], rows, "min", f"diffusion FD n={F.n}: smallest")

    fig.tight_layout()
    target = out / "ritz_tracking.svg"
    fig.savefig(target)
    print(f"wrote {target}")


if __name__ == "__main__":
    main(*sys.argv[1:])
