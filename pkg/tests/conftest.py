"""Shared fixtures and test-only oracles."""

from pathlib import Path

import numpy as np
import pytest

from cgbounds import load_matrix_market
from cgbounds.problems import random_spd_matrix

REPO_ROOT = Path(__file__).resolve().parent.parent
BCSSTK01_PATH = REPO_ROOT / "data" / "bcsstk01.mtx"

# published reference values for the bundled test matrix
BCSSTK01_LAMBDA_MIN = 3.417267562666500e3
BCSSTK01_KAPPA = 8.8234e5


@pytest.fixture(scope="session")
def bcsstk01():
    return load_matrix_market(BCSSTK01_PATH)


@pytest.fixture(scope="session")
def bcsstk01_eigen_rhs(bcsstk01):
    """Right-hand side with equal eigencomponents and unit norm."""
    _, q = np.linalg.eigh(bcsstk01.to_dense())
    n = bcsstk01.n
    return q @ np.full(n, 1.0 / np.sqrt(n))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_spd(n: int, cond: float, seed: int):
    return random_spd_matrix(n, cond, np.random.default_rng(seed))


def explicit_lanczos(dense: np.ndarray, v: np.ndarray, k: int):
    """Plain three-term Lanczos (no reorthogonalization), a test-only oracle.

    Returns (diag, offdiag, V) of T_k and the basis V with k+1 columns.
    """
    n = v.size
    V = np.zeros((n, k + 1))
    alphas, betas = [], []
    beta_prev = 0.0
    v_prev = np.zeros(n)
    vk = v / np.linalg.norm(v)
    for _ in range(k):
        V[:, len(alphas)] = vk
        w = dense @ vk - beta_prev * v_prev
        alpha = float(vk @ w)
        w = w - alpha * vk
        beta = float(np.linalg.norm(w))
        alphas.append(alpha)
        betas.append(beta)
        v_prev = vk
        vk = w / beta if beta > 0.0 else w
        beta_prev = beta
    V[:, k] = vk
    return np.array(alphas), np.array(betas[:-1]), V
