"""Model-based policy iteration for the two coupled Riccati equations.

Stage 1 (deviation): evaluate P under a gain K via a Stein solve of
P = (A-BK)'P(A-BK) + K'RK + Q, then improve K ← (R+B'PB)⁻¹B'PA, until the
gain change drops below epsilon.

Stage 2 (mean field) is the same iteration on the substituted system
(A+G, B, Q+QΓ, R) run in the total gain K+K̄, holding the converged
deviation gain K fixed.

The inner matrix R + B'PB is gated on invertibility only, never on sign:
indefinite weight matrices are a supported regime and do produce a negative
inner matrix. Its inertia is recorded per iterate for diagnosis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MaxIterationsError, NotStabilizingError, SingularInnerMatrixError
from .linalg import is_invertible, solve_stein, spectral_radius, symmetrize
from .model import CostSpec, GainPair, SystemModel

__all__ = [
    "RiccatiIterate",
    "SolveReport",
    "deviation_step",
    "meanfield_step",
    "solve_deviation",
    "solve_meanfield",
    "mf_trajectory",
    "find_stabilizer",
    "are_residual",
]

# Schur margin for policy-evaluation preconditions.
SCHUR_MARGIN = 1e-8

DEFAULT_MAX_ITER = 50


@dataclass(frozen=True)
class RiccatiIterate:
    """One policy-iteration iterate.

    ``gain`` is the gain that was evaluated: K_k for the deviation stage and
    the total closed-loop gain K + K̄_k for the mean-field stage. ``lam`` is
    the B'VB block that the data-driven path recovers independently.
    """

    value: np.ndarray
    gain: np.ndarray
    lam: np.ndarray
    iteration: int


@dataclass
class SolveReport:
    """Convergence witness for one policy-iteration run.

    ``gain`` is the final improved gain in the stage's own coordinates
    (K for the deviation stage, K̄ for the mean-field stage).
    """

    stage: str
    iterates: list[RiccatiIterate]
    converged: bool
    residual_history: list[float]
    spectral_radii: list[float]
    gain_changes: list[float]
    inner_min_abs_eigs: list[float]
    inner_inertias: list[tuple[int, int, int]]
    value: np.ndarray | None = None
    gain: np.ndarray | None = None
    lam: np.ndarray | None = None
    epsilon: float = float("nan")

    @property
    def iterations(self) -> int:
        return len(self.iterates)

    def to_csv(self) -> str:
        lines = ["iteration,residual,gain_change,spectral_radius,inner_min_abs_eig"]
        for it, res, dk, rho, mu in zip(
            range(self.iterations),
            self.residual_history,
            self.gain_changes,
            self.spectral_radii,
            self.inner_min_abs_eigs,
        ):
            lines.append(f"{it},{res!r},{dk!r},{rho!r},{mu!r}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "stage": self.stage,
            "converged": self.converged,
            "iterations": self.iterations,
            "epsilon": self.epsilon,
            "value": None if self.value is None else self.value.tolist(),
            "gain": None if self.gain is None else self.gain.tolist(),
            "lam": None if self.lam is None else self.lam.tolist(),
            "gain_changes": list(self.gain_changes),
            "residual_history": list(self.residual_history),
            "spectral_radii": list(self.spectral_radii),
            "inner_inertias": [list(t) for t in self.inner_inertias],
        }


def are_residual(A, B, Q, R, P) -> float:
    """Relative fixed-point residual |P - ricc(P)|₂ / max(|P|₂, eps) where
    ricc(P) = A'PA - A'PB(R+B'PB)⁻¹B'PA + Q."""
    mapped = A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A) + Q
    denom = max(np.linalg.norm(P, 2), np.finfo(float).tiny)
    return float(np.linalg.norm(P - mapped, 2) / denom)


def _inner_spectrum(inner):
    w = np.linalg.eigvalsh(symmetrize(inner))
    tol = 1e-12 * max(1.0, float(np.abs(w).max()))
    inertia = (
        int(np.sum(w < -tol)),
        int(np.sum(np.abs(w) <= tol)),
        int(np.sum(w > tol)),
    )
    return float(np.abs(w).min()), inertia


def _policy_step(A, B, Q, R, K):
    """Evaluate-and-improve on a generic (A, B, Q, R) stage.

    Returns (P, K_next, lam, rho) with rho the closed-loop spectral radius
    under the evaluated gain K.
    """
    acl = A - B @ K
    rho = spectral_radius(acl)
    if rho >= 1.0 - SCHUR_MARGIN:
        raise NotStabilizingError(
            f"gain does not stabilize: closed-loop spectral radius {rho:.8f}"
        )
    P = solve_stein(acl, symmetrize(K.T @ R @ K) + Q)
    lam = symmetrize(B.T @ P @ B)
    inner = R + lam
    if not is_invertible(inner):
        raise SingularInnerMatrixError(
            "R + B'PB is numerically singular; gain update undefined"
        )
    k_next = np.linalg.solve(inner, B.T @ P @ A)
    return P, k_next, lam, rho


def deviation_step(model: SystemModel, cost: CostSpec, K) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One deviation-stage step: returns (P_k, K_{k+1}, Λ_k)."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    P, k_next, lam, _ = _policy_step(model.A, model.B, cost.Q, cost.R, K)
    return P, k_next, lam


def meanfield_step(model: SystemModel, cost: CostSpec, K, Kbar) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One mean-field-stage step with the deviation gain K held fixed:
    returns (Π_k, K̄_{k+1}, Λ_k)."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    Kbar = np.atleast_2d(np.asarray(Kbar, dtype=float))
    P, f_next, lam, _ = _policy_step(
        model.A + model.G, model.B, cost.Q + cost.QGamma, cost.R, K + Kbar
    )
    return P, f_next - K, lam


def _policy_iteration(A, B, Q, R, K0, epsilon, max_iter, stage):
    K = np.atleast_2d(np.asarray(K0, dtype=float))
    report = SolveReport(
        stage=stage,
        iterates=[],
        converged=False,
        residual_history=[],
        spectral_radii=[],
        gain_changes=[],
        inner_min_abs_eigs=[],
        inner_inertias=[],
        epsilon=epsilon,
    )
    for it in range(max_iter):
        P, k_next, lam, rho = _policy_step(A, B, Q, R, K)
        dk = float(np.linalg.norm(k_next - K, "fro"))
        mu, inertia = _inner_spectrum(R + lam)
        report.iterates.append(RiccatiIterate(value=P, gain=K, lam=lam, iteration=it))
        report.residual_history.append(are_residual(A, B, Q, R, P))
        report.spectral_radii.append(rho)
        report.gain_changes.append(dk)
        report.inner_min_abs_eigs.append(mu)
        report.inner_inertias.append(inertia)
        if dk <= epsilon:
            report.converged = True
            report.value = P
            report.gain = k_next
            report.lam = lam
            return report
        K = k_next
    raise MaxIterationsError(
        f"{stage} stage: no convergence within {max_iter} iterations "
        f"(last gain change {report.gain_changes[-1]:.3e} > {epsilon:.3e})",
        report=report,
    )


def solve_deviation(
    model: SystemModel,
    cost: CostSpec,
    K0,
    epsilon: float = 1e-4,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SolveReport:
    """Policy iteration for the deviation Riccati equation from a stabilizer K0."""
    return _policy_iteration(
        model.A, model.B, cost.Q, cost.R, K0, epsilon, max_iter, "deviation"
    )


def solve_meanfield(
    model: SystemModel,
    cost: CostSpec,
    K,
    Kbar0,
    epsilon: float = 1e-4,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SolveReport:
    """Policy iteration for the mean-field Riccati equation.

    K is the (already converged) deviation gain; K + Kbar0 must stabilize
    (A+G, B). Iterates carry the total gain; ``report.gain`` is K̄ alone.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    Kbar0 = np.atleast_2d(np.asarray(Kbar0, dtype=float))
    report = _policy_iteration(
        model.A + model.G,
        model.B,
        cost.Q + cost.QGamma,
        cost.R,
        K + Kbar0,
        epsilon,
        max_iter,
        "meanfield",
    )
    report.gain = report.gain - K
    return report


def mf_trajectory(model: SystemModel, gains: GainPair, xbar0, T: int) -> np.ndarray:
    """Deterministic mean-field trajectory x̄⁺ = (A+G-B(K+K̄))x̄, length T+1."""
    if T < 0:
        raise ValueError("mf_trajectory: T must be >= 0")
    acl = model.A + model.G - model.B @ gains.total
    out = np.zeros((T + 1, model.n))
    out[0] = np.asarray(xbar0, dtype=float).ravel()
    for k in range(T):
        out[k + 1] = acl @ out[k]
    return out


def find_stabilizer(A, B, rng=None, rho_target: float = 0.95, max_tries: int = 5000):
    """Search random gains until A - BK is comfortably Schur.

    Test-setup helper only: it needs the true model, so nothing on the
    data-driven path may call it.
    """
    A = np.asarray(A, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    m, n = B.shape[1], A.shape[0]
    K = np.zeros((m, n))
    if spectral_radius(A) < rho_target:
        return K
    rng = np.random.default_rng(rng)
    for trial in range(max_tries):
        scale = 0.1 * (1.0 + trial % 40)
        K = scale * rng.standard_normal((m, n))
        if spectral_radius(A - B @ K) < rho_target:
            return K
    raise NotStabilizingError(
        f"no stabilizing gain found in {max_tries} random draws"
    )
