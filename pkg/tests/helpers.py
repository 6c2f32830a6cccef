"""Shared generators and independent oracles for the test suite.

Oracles here deliberately avoid the package's own code paths: the Stein
oracle sums the defining series, the quadratic-formula helpers work on 2x2
matrices directly, and random systems are built so the relevant stability
and definiteness preconditions hold by construction.
"""

import numpy as np

from mfsoc import CostSpec, SystemModel
from mfsoc.simulate import exact_moments


def stein_series_oracle(a, s, terms=2000, tol=1e-16):
    """Sum P = sum_j (A')^j S A^j until the increment is negligible."""
    p = np.array(s, dtype=float)
    term = np.array(s, dtype=float)
    at = a.T
    for _ in range(terms):
        term = at @ term @ a
        p = p + term
        if np.abs(term).max() <= tol * max(1.0, np.abs(p).max()):
            break
    return 0.5 * (p + p.T)


def eig2_sym(a, b, c):
    """Eigenvalues of [[a, b], [b, c]] by the quadratic formula, sorted."""
    half_tr = 0.5 * (a + c)
    disc = np.sqrt(0.25 * (a - c) ** 2 + b * b)
    return half_tr - disc, half_tr + disc


def random_schur(rng, n, radius=0.85):
    a = rng.uniform(-1.0, 1.0, (n, n))
    rho = max(abs(np.linalg.eigvals(a)))
    return a * (radius / max(rho, 1e-12))


def random_psd_system(rng, n=None, m=None, coupling=0.15, gamma_scale=0.3, sigma2=0.0):
    """Random system in the regime where the convergence theory is clean:
    A and A+G Schur (so the zero gain stabilizes both stages), Q > 0
    (hence detectable), R > 0."""
    n = int(rng.integers(2, 4)) if n is None else n
    m = int(rng.integers(1, 3)) if m is None else m
    a = random_schur(rng, n, radius=float(rng.uniform(0.3, 0.85)))
    g = coupling * rng.uniform(-1.0, 1.0, (n, n))
    while max(abs(np.linalg.eigvals(a + g))) >= 0.95:
        g = 0.5 * g
    b = rng.uniform(-1.0, 1.0, (n, m))
    mq = rng.uniform(-1.0, 1.0, (n, n))
    mr = rng.uniform(-1.0, 1.0, (m, m))
    q = mq @ mq.T + 0.1 * np.eye(n)
    r = mr @ mr.T + 0.1 * np.eye(m)
    gamma = gamma_scale * rng.uniform(-1.0, 1.0, (n, n))
    model = SystemModel(A=a, G=g, B=b, D=np.eye(n), sigma2=sigma2)
    cost = CostSpec(Q=q, R=r, Gamma=gamma)
    return model, cost


def sinusoid_signal(rng, steps, m, terms=30, freq_range=100.0):
    """Deterministic persistent excitation: per-channel sums of sinusoids."""
    w = rng.uniform(-freq_range, freq_range, (m, terms))
    k = np.arange(steps, dtype=float)
    return np.sin(k[:, None, None] * w[None]).sum(axis=2)


def exact_campaign(model, K0, rng, steps=40):
    """Noiseless, exactly propagated moments under persistent exploration."""
    m = model.m
    dxi = sinusoid_signal(rng, steps, m) - sinusoid_signal(rng, steps, m)
    bxi = sinusoid_signal(rng, steps, m)
    dx0 = rng.uniform(-1.0, 1.0, model.n)
    xbar0 = rng.uniform(-1.0, 1.0, model.n)
    return exact_moments(model, K0, dx0, xbar0, steps, dxi, bxi)
