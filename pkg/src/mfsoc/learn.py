"""Data-driven least-squares policy iteration on collected moments.

The solver never touches A, G, B, D, or the noise level. Each iteration
rewrites one quadratic-difference identity along the moment trajectories as
a linear system in three unknowns (the value matrix V, the gain product
(R + L)K with L = B'VB, and L itself) and solves it in least squares. The symmetric unknowns are
parameterized by their packed upper triangles: the full-vec normal equations
are singular by symmetry, and the packed system's column count matches the
excitation rank bound exactly.

Column convention is row-major throughout: rows of the data matrices are
Kronecker squares kron(a, b) of moment rows, matched against row-major
flattenings of the unknowns.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import (
    MaxIterationsError,
    RankConditionError,
    SingularInnerMatrixError,
)
from .linalg import duplication_matrix, is_invertible, lsq_solve, smat, symmetrize
from .model import make_qgamma
from .simulate import MomentTrajectories, required_rows

__all__ = [
    "DataMoments",
    "RankReport",
    "LsqIterate",
    "StageReport",
    "ModelFreeResult",
    "build_moment_matrices",
    "rank_check",
    "lsq_deviation_step",
    "lsq_meanfield_step",
    "run_model_free",
]

RANK_SV_TOL = 1e-8


def _kron_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row k of the result is kron(a[k], b[k])."""
    return np.einsum("ki,kj->kij", a, b).reshape(a.shape[0], -1)


@dataclass(frozen=True)
class DataMoments:
    """The eight expectation matrices built from one campaign's moments.

    Deviation blocks Ixx/Ixu/Iuu and their mean-field counterparts
    Bxx/Bxu/Buu have l-1 rows each; *_next holds the one-step-shifted
    Kronecker squares.
    """

    n: int
    m: int
    Ixx: np.ndarray
    Ixx_next: np.ndarray
    Ixu: np.ndarray
    Iuu: np.ndarray
    Bxx: np.ndarray
    Bxx_next: np.ndarray
    Bxu: np.ndarray
    Buu: np.ndarray

    @property
    def rows(self) -> int:
        return self.Ixx.shape[0]


@dataclass(frozen=True)
class RankReport:
    """Verdict of the excitation rank condition for one stage."""

    stage: int
    rows: int
    required: int
    rank: int
    ok: bool
    sigma_min_ratio: float


@dataclass(frozen=True)
class LsqIterate:
    """One least-squares iterate: value estimate, raw gain product
    kcal = (R + lam) @ gain, the B'VB block lam, the recovered next gain,
    and the residual of the solve."""

    value: np.ndarray
    kcal: np.ndarray
    lam: np.ndarray
    gain_next: np.ndarray
    residual: float
    iteration: int = 0


@dataclass
class StageReport:
    """Iteration record of one model-free stage."""

    stage: str
    iterates: list[LsqIterate]
    gain_changes: list[float]
    converged: bool

    @property
    def iterations(self) -> int:
        return len(self.iterates)

    def to_csv(self) -> str:
        head = ["iteration", "gain_change", "lsq_residual"]
        if self.iterates:
            first = self.iterates[0]
            head += [f"value_{i}" for i in range(first.value.size)]
            head += [f"gain_{i}" for i in range(first.gain_next.size)]
            head += [f"lam_{i}" for i in range(first.lam.size)]
        lines = [",".join(head)]
        for it, dk in zip(self.iterates, self.gain_changes):
            row = [str(it.iteration), repr(dk), repr(it.residual)]
            row += [repr(v) for v in it.value.ravel()]
            row += [repr(v) for v in it.gain_next.ravel()]
            row += [repr(v) for v in it.lam.ravel()]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def build_moment_matrices(moments: MomentTrajectories) -> DataMoments:
    """Assemble the Kronecker data matrices from moment trajectories."""
    steps = moments.l
    if steps < 2:
        raise ValueError(f"need at least 2 moment steps, got {steps}")
    n = moments.dx.shape[1]
    m = moments.du.shape[1]
    dxx = _kron_rows(moments.dx, moments.dx)
    bxx = _kron_rows(moments.xbar, moments.xbar)
    return DataMoments(
        n=n,
        m=m,
        Ixx=dxx[:-1],
        Ixx_next=dxx[1:],
        Ixu=_kron_rows(moments.du[:-1], moments.dx[:-1]),
        Iuu=_kron_rows(moments.du[:-1], moments.du[:-1]),
        Bxx=bxx[:-1],
        Bxx_next=bxx[1:],
        Bxu=_kron_rows(moments.ubar[:-1], moments.xbar[:-1]),
        Buu=_kron_rows(moments.ubar[:-1], moments.ubar[:-1]),
    )


def rank_check(data: DataMoments, stage: int) -> RankReport:
    """Numerical rank of the stacked moment matrix for stage 1 or 2.

    ok requires the rank to reach n(n+1)/2 + nm + m(m+1)/2 (its structural
    maximum) and the row count to be at least that. sigma_min_ratio is the
    ratio of the required-th singular value to the largest, a conditioning
    gauge for the downstream least squares.
    """
    if stage == 1:
        stacked = np.hstack([data.Ixx, data.Ixu, data.Iuu])
    elif stage == 2:
        stacked = np.hstack([data.Bxx, data.Bxu, data.Buu])
    else:
        raise ValueError(f"stage must be 1 or 2, got {stage}")
    need = required_rows(data.n, data.m)
    sv = np.linalg.svd(stacked, compute_uv=False) if stacked.size else np.zeros(0)
    if sv.size == 0 or sv[0] == 0.0:
        rank, ratio = 0, 0.0
    else:
        rank = int(np.sum(sv > RANK_SV_TOL * sv[0]))
        ratio = float(sv[need - 1] / sv[0]) if sv.size >= need else 0.0
    ok = bool(rank == need and data.rows >= need)
    return RankReport(
        stage=stage,
        rows=data.rows,
        required=need,
        rank=rank,
        ok=ok,
        sigma_min_ratio=ratio,
    )


def _lsq_stage_step(xx, xx_next, xu, uu, gain, q_eff, R):
    """Shared least-squares update for either stage.

    gain is the total closed-loop gain the identity is written at; q_eff is
    the stage's effective state weight gain'R gain + Q (+ QΓ for stage 2).
    Returns (value, kcal, lam, gain_next_total, residual).
    """
    n = q_eff.shape[0]
    m = R.shape[0]
    eye_n = np.eye(n)
    a_value = xx - xx_next
    a_kcal = 2.0 * xu + 2.0 * xx @ np.kron(gain.T, eye_n)
    a_lam = uu - xx @ np.kron(gain.T, gain.T)
    dn = duplication_matrix(n)
    dm = duplication_matrix(m)
    amat = np.hstack([a_value @ dn, a_kcal, a_lam @ dm])
    rhs = xx @ q_eff.ravel()
    theta, residual = lsq_solve(amat, rhs)
    tn = n * (n + 1) // 2
    value = smat(theta[:tn])
    kcal = theta[tn : tn + n * m].reshape(m, n)
    lam = smat(theta[tn + n * m :])
    inner = R + lam
    if not is_invertible(inner):
        raise SingularInnerMatrixError(
            "estimated R + B'VB is numerically singular; gain recovery undefined"
        )
    gain_next = np.linalg.solve(inner, kcal)
    return value, kcal, lam, gain_next, residual


def lsq_deviation_step(data: DataMoments, K, Q, R) -> LsqIterate:
    """One data-driven deviation-stage step at gain K.

    Recovers the value matrix, the gain product, and the B'VB block from
    the moment matrices, and returns the improved gain inv(R + lam) @ kcal
    alongside.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    Q = np.asarray(Q, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    q_eff = symmetrize(K.T @ R @ K) + Q
    value, kcal, lam, gain_next, residual = _lsq_stage_step(
        data.Ixx, data.Ixx_next, data.Ixu, data.Iuu, K, q_eff, R
    )
    return LsqIterate(value=value, kcal=kcal, lam=lam, gain_next=gain_next, residual=residual)


def lsq_meanfield_step(data: DataMoments, Khat, Kbar, Q, R, QGamma) -> LsqIterate:
    """One data-driven mean-field-stage step at mean-field gain Kbar, with
    the stage-1 output Khat held fixed.

    gain_next is the improved mean-field gain alone:
    inv(R + lam) @ kcal - Khat.
    """
    Khat = np.atleast_2d(np.asarray(Khat, dtype=float))
    Kbar = np.atleast_2d(np.asarray(Kbar, dtype=float))
    Q = np.asarray(Q, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    total = Khat + Kbar
    q_eff = symmetrize(total.T @ R @ total) + Q + np.asarray(QGamma, dtype=float)
    value, kcal, lam, gain_next, residual = _lsq_stage_step(
        data.Bxx, data.Bxx_next, data.Bxu, data.Buu, total, q_eff, R
    )
    return LsqIterate(
        value=value, kcal=kcal, lam=lam, gain_next=gain_next - Khat, residual=residual
    )


@dataclass(frozen=True)
class ModelFreeResult:
    """Final estimates and per-stage iteration records."""

    P: np.ndarray
    K: np.ndarray
    Pi: np.ndarray
    Kbar: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    stage1: StageReport
    stage2: StageReport
    rank1: RankReport
    rank2: RankReport


def run_model_free(
    moments: MomentTrajectories,
    K0,
    Kbar0,
    Q,
    R,
    Gamma,
    epsilon: float = 1e-4,
    max_iter: int = 50,
) -> ModelFreeResult:
    """Run both data-driven stages on one campaign's moments.

    Refuses up front (RankConditionError) if either stage's excitation rank
    condition fails. Stage 1 iterates the deviation update from K0 until the
    gain change is at most epsilon; stage 2 then iterates the mean-field
    update from Kbar0 with the stage-1 gain held fixed. Raises
    MaxIterationsError (with the partial stage report attached) if a stage
    exhausts its budget.
    """
    Q = np.asarray(Q, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    qgamma = make_qgamma(Q, np.asarray(Gamma, dtype=float))
    data = build_moment_matrices(moments)
    rank1 = rank_check(data, 1)
    rank2 = rank_check(data, 2)
    for report in (rank1, rank2):
        if not report.ok:
            raise RankConditionError(
                f"stage-{report.stage} rank condition failed: rank "
                f"{report.rank} of required {report.required} with "
                f"{report.rows} rows",
                report=report,
            )

    stage1 = StageReport(stage="deviation", iterates=[], gain_changes=[], converged=False)
    K = np.atleast_2d(np.asarray(K0, dtype=float))
    for it in range(max_iter):
        step = lsq_deviation_step(data, K, Q, R)
        step = dataclasses.replace(step, iteration=it)
        dk = float(np.linalg.norm(step.gain_next - K, "fro"))
        stage1.iterates.append(step)
        stage1.gain_changes.append(dk)
        if dk <= epsilon:
            stage1.converged = True
            break
        K = step.gain_next
    if not stage1.converged:
        raise MaxIterationsError(
            f"model-free deviation stage: no convergence in {max_iter} iterations",
            report=stage1,
        )
    last1 = stage1.iterates[-1]
    Khat = last1.gain_next

    stage2 = StageReport(stage="meanfield", iterates=[], gain_changes=[], converged=False)
    Kbar = np.atleast_2d(np.asarray(Kbar0, dtype=float))
    for it in range(max_iter):
        step = lsq_meanfield_step(data, Khat, Kbar, Q, R, qgamma)
        step = dataclasses.replace(step, iteration=it)
        dk = float(np.linalg.norm(step.gain_next - Kbar, "fro"))
        stage2.iterates.append(step)
        stage2.gain_changes.append(dk)
        if dk <= epsilon:
            stage2.converged = True
            break
        Kbar = step.gain_next
    if not stage2.converged:
        raise MaxIterationsError(
            f"model-free mean-field stage: no convergence in {max_iter} iterations",
            report=stage2,
        )
    last2 = stage2.iterates[-1]
    return ModelFreeResult(
        P=last1.value,
        K=Khat,
        Pi=last2.value,
        Kbar=last2.gain_next,
        L1=last1.lam,
        L2=last2.lam,
        stage1=stage1,
        stage2=stage2,
        rank1=rank1,
        rank2=rank2,
    )
