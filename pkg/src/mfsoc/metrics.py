"""Verification metrics: fixed-point residuals of estimated solutions and
Monte-Carlo social-cost estimation.

Both need the true model, so they live on the verification side of the
model-free boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotStabilizingError
from .model import CostSpec, GainPair, SystemModel, closed_loop
from .linalg import spectral_radius, symmetrize

__all__ = [
    "SolutionEstimate",
    "ResidualReport",
    "residual_report",
    "CostEstimate",
    "social_cost_estimate",
]


@dataclass(frozen=True)
class SolutionEstimate:
    """A candidate solution set (from either solver path) to be verified."""

    P: np.ndarray
    K: np.ndarray
    Pi: np.ndarray
    Kbar: np.ndarray
    L1: np.ndarray
    L2: np.ndarray

    def __post_init__(self):
        for name in ("P", "K", "Pi", "Kbar", "L1", "L2"):
            object.__setattr__(
                self, name, np.atleast_2d(np.asarray(getattr(self, name), float))
            )

    @property
    def gains(self) -> GainPair:
        return GainPair(K=self.K, Kbar=self.Kbar)


@dataclass(frozen=True)
class ResidualReport:
    """Relative fixed-point errors of the six estimated quantities.

    Entries are NaN when their map could not be evaluated (singular inner
    matrix); ``failed`` names those entries.
    """

    relerr_P: float
    relerr_K: float
    relerr_L1: float
    relerr_Pi: float
    relerr_Kbar: float
    relerr_L2: float
    failed: tuple[str, ...] = ()

    def as_dict(self) -> dict[str, float]:
        return {
            "relerr_P": self.relerr_P,
            "relerr_K": self.relerr_K,
            "relerr_L1": self.relerr_L1,
            "relerr_Pi": self.relerr_Pi,
            "relerr_Kbar": self.relerr_Kbar,
            "relerr_L2": self.relerr_L2,
        }

    def max_entry(self) -> float:
        vals = list(self.as_dict().values())
        return max(vals) if not any(math.isnan(v) for v in vals) else math.nan


def _relerr(mapped: np.ndarray, estimate: np.ndarray) -> float:
    denom = np.linalg.norm(mapped, 2)
    if denom == 0.0:
        return 0.0 if np.linalg.norm(estimate, 2) == 0.0 else math.inf
    return float(np.linalg.norm(mapped - estimate, 2) / denom)


def residual_report(
    model: SystemModel, cost: CostSpec, estimate: SolutionEstimate
) -> ResidualReport:
    """Evaluate the six fixed-point maps at the estimates.

    Each entry is ||map(est) - est||₂ / ||map(est)||₂. The value maps send P
    (resp. Π) through one Riccati sweep; the gain maps recompute the gain
    from the value estimate; the Λ maps recompute B'VB. The mean-field gain
    map estimates the total gain, so it is compared against K̂ + K̄̂. Exact
    solutions score 0 on every entry.
    """
    A, B, G = model.A, model.B, model.G
    Q, R = cost.Q, cost.R
    AG = A + G
    est = estimate
    out = dict.fromkeys(
        ("relerr_P", "relerr_K", "relerr_L1", "relerr_Pi", "relerr_Kbar", "relerr_L2"),
        math.nan,
    )
    failed = []

    out["relerr_L1"] = _relerr(symmetrize(B.T @ est.P @ B), est.L1)
    out["relerr_L2"] = _relerr(symmetrize(B.T @ est.Pi @ B), est.L2)

    inner_p = R + B.T @ est.P @ B
    try:
        gain_p = np.linalg.solve(inner_p, B.T @ est.P @ A)
        mapped_p = symmetrize(A.T @ est.P @ A - A.T @ est.P @ B @ gain_p) + Q
        out["relerr_P"] = _relerr(mapped_p, est.P)
        out["relerr_K"] = _relerr(gain_p, est.K)
    except np.linalg.LinAlgError:
        failed += ["relerr_P", "relerr_K"]

    inner_pi = R + B.T @ est.Pi @ B
    try:
        gain_pi = np.linalg.solve(inner_pi, B.T @ est.Pi @ AG)
        mapped_pi = (
            symmetrize(AG.T @ est.Pi @ AG - AG.T @ est.Pi @ B @ gain_pi)
            + Q
            + cost.QGamma
        )
        out["relerr_Pi"] = _relerr(mapped_pi, est.Pi)
        out["relerr_Kbar"] = _relerr(gain_pi, est.K + est.Kbar)
    except np.linalg.LinAlgError:
        failed += ["relerr_Pi", "relerr_Kbar"]

    return ResidualReport(failed=tuple(failed), **out)


@dataclass(frozen=True)
class CostEstimate:
    """Monte-Carlo estimate of the per-agent social cost over a horizon.

    ``tail_step_cost`` is the mean per-agent stage cost at the final step;
    together with the closed-loop spectral radii it bounds what the
    truncation discards (the transient part decays like rho**(2k), while the
    noise-driven part contributes ~tail_step_cost per further step).
    """

    per_agent_cost: float
    horizon: int
    replications: int
    std_error: float
    rho_dev: float
    rho_mf: float
    tail_step_cost: float


def social_cost_estimate(
    model: SystemModel,
    cost: CostSpec,
    gains: GainPair,
    N: int,
    horizon: int,
    replications: int,
    seed: int,
    x0_low=None,
    x0_high=None,
) -> CostEstimate:
    """Estimate the per-agent social cost under u_i = -K x_i - K̄ x̄.

    Refuses when either closed-loop matrix is not Schur (the truncated sum
    would be a meaningless sample of a divergent series). Initial states are
    uniform over the given box (default: the unit box around 0).
    """
    a_dev, a_mf = closed_loop(model, gains)
    rho_dev = spectral_radius(a_dev)
    rho_mf = spectral_radius(a_mf)
    if rho_dev >= 1.0 or rho_mf >= 1.0:
        raise NotStabilizingError(
            f"closed loop unstable (rho_dev={rho_dev:.4f}, rho_mf={rho_mf:.4f}); "
            "social cost diverges"
        )
    n = model.n
    lo = np.full(n, -1.0) if x0_low is None else np.asarray(x0_low, float).ravel()
    hi = np.full(n, 1.0) if x0_high is None else np.asarray(x0_high, float).ravel()
    sigma = float(np.sqrt(model.sigma2))
    children = np.random.SeedSequence(seed).spawn(replications)
    totals = np.zeros(replications)
    last_step = np.zeros(replications)
    for r in range(replications):
        rng = np.random.default_rng(children[r])
        x = rng.uniform(lo, hi, size=(N, n))
        acc = 0.0
        step_cost = 0.0
        for k in range(horizon):
            mean_x = x.mean(axis=0)
            u = -x @ gains.K.T - mean_x @ gains.Kbar.T
            track = x - mean_x @ cost.Gamma.T
            step_cost = float(
                np.einsum("ij,jk,ik->", track, cost.Q, track)
                + np.einsum("ij,jk,ik->", u, cost.R, u)
            ) / N
            acc += step_cost
            x = x @ model.A.T + mean_x @ model.G.T + u @ model.B.T
            if sigma > 0:
                x = x + rng.normal(0.0, sigma, size=(N, n)) @ model.D.T
        totals[r] = acc
        last_step[r] = step_cost
    mean_cost = float(totals.mean())
    stderr = float(totals.std(ddof=1) / np.sqrt(replications)) if replications > 1 else 0.0
    return CostEstimate(
        per_agent_cost=mean_cost,
        horizon=horizon,
        replications=replications,
        std_error=stderr,
        rho_dev=rho_dev,
        rho_mf=rho_mf,
        tail_step_cost=float(last_step.mean()),
    )
