"""Problem definition: system/cost types, derived quantities, assumption
diagnostics, and the text config format.

Config grammar (one ``key = value`` per line, ``#`` starts a comment):

    n = 2                     # state dimension
    m = 1                     # input dimension
    N = 200                   # population size
    A = 0.08 0.63 0.39 0.26   # n*n entries, row-major
    G = ...                   # n*n mean-field coupling
    B = ...                   # n*m
    D = ...                   # n*n noise gain
    sigma2 = 0.01             # per-coordinate white-noise variance
    Q = ...                   # n*n symmetric state weight
    R = ...                   # m*m symmetric input weight
    Gamma = ...               # n*n mean-field cost coupling
    x0_low = 0 -6             # n entries, per-coordinate lower bounds
    x0_high = 12 0            # n entries, upper bounds
    K0 = 0.05 -0.91           # m*n behavior / initial gain
    Kbar0 = 2.87 0.83         # m*n initial mean-field gain
    epsilon = 1e-4            # gain-change convergence threshold
    seed = 7                  # campaign RNG seed

All keys are required; unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .linalg import is_invertible, min_eig_sym, symmetrize

__all__ = [
    "SystemModel",
    "CostSpec",
    "GainPair",
    "make_qgamma",
    "closed_loop",
    "AssumptionReport",
    "check_assumptions",
    "ProblemConfig",
    "load_config",
    "config_digest",
]


def _mat(x, rows, cols, name):
    m = np.asarray(x, dtype=float)
    if m.shape != (rows, cols):
        raise ValueError(f"{name}: expected shape {(rows, cols)}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name}: entries must be finite")
    return m


@dataclass(frozen=True)
class SystemModel:
    """True dynamics x⁺ = A x + G x̄ + B u + D w with Var(w_j) = sigma2.

    Held by the simulator and verification code only; the data-driven solver
    never sees it.
    """

    A: np.ndarray
    G: np.ndarray
    B: np.ndarray
    D: np.ndarray
    sigma2: float = 0.0

    def __post_init__(self):
        n = np.asarray(self.A).shape[0]
        m = np.asarray(self.B).shape[1] if np.asarray(self.B).ndim == 2 else 1
        object.__setattr__(self, "A", _mat(self.A, n, n, "A"))
        object.__setattr__(self, "G", _mat(self.G, n, n, "G"))
        object.__setattr__(self, "B", _mat(self.B, n, m, "B"))
        object.__setattr__(self, "D", _mat(self.D, n, n, "D"))
        if not (np.isfinite(self.sigma2) and self.sigma2 >= 0):
            raise ValueError("sigma2 must be finite and nonnegative")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


def make_qgamma(Q, Gamma) -> np.ndarray:
    """Mean-field cost correction Γ'QΓ - QΓ - Γ'Q, symmetrized.

    The expression is symmetric analytically; symmetrization only removes
    roundoff skew. Note Q + make_qgamma(Q, Γ) = (I-Γ)'Q(I-Γ).
    """
    Q = np.asarray(Q, dtype=float)
    Gamma = np.asarray(Gamma, dtype=float)
    if Q.shape != Gamma.shape or Q.shape[0] != Q.shape[1]:
        raise ValueError(f"make_qgamma: shapes {Q.shape} and {Gamma.shape} disagree")
    return symmetrize(Gamma.T @ Q @ Gamma - Q @ Gamma - Gamma.T @ Q)


@dataclass(frozen=True)
class CostSpec:
    """Cost weights. Q and R must be symmetric; neither needs to be definite.

    QGamma is derived on construction and cached.
    """

    Q: np.ndarray
    R: np.ndarray
    Gamma: np.ndarray
    QGamma: np.ndarray = field(init=False)

    def __post_init__(self):
        n = np.asarray(self.Q).shape[0]
        m = np.asarray(self.R).shape[0] if np.asarray(self.R).ndim == 2 else 1
        Q = _mat(self.Q, n, n, "Q")
        R = _mat(self.R, m, m, "R")
        for name, w in (("Q", Q), ("R", R)):
            if np.abs(w - w.T).max() > 1e-10 * max(np.abs(w).max(), 1.0):
                raise ValueError(f"{name} must be symmetric")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "Gamma", _mat(self.Gamma, n, n, "Gamma"))
        object.__setattr__(self, "QGamma", make_qgamma(Q, self.Gamma))


@dataclass(frozen=True)
class GainPair:
    """Feedback gains of the decentralized law u_i = -K x_i - K̄ x̄."""

    K: np.ndarray
    Kbar: np.ndarray

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        Kbar = np.atleast_2d(np.asarray(self.Kbar, dtype=float))
        if K.shape != Kbar.shape:
            raise ValueError(f"gain shapes disagree: {K.shape} vs {Kbar.shape}")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "Kbar", Kbar)

    @property
    def total(self) -> np.ndarray:
        return self.K + self.Kbar


def closed_loop(model: SystemModel, gains: GainPair) -> tuple[np.ndarray, np.ndarray]:
    """Closed-loop matrices (A - BK, A + G - B(K + K̄))."""
    if gains.K.shape != (model.m, model.n):
        raise ValueError(
            f"closed_loop: gain shape {gains.K.shape} vs model ({model.m}, {model.n})"
        )
    a_dev = model.A - model.B @ gains.K
    a_mf = model.A + model.G - model.B @ gains.total
    return a_dev, a_mf


def _pbh_stabilizable(A, B, tol=1e-9):
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) >= 1.0 - tol:
            pencil = np.hstack([A - lam * np.eye(n), B.astype(complex)])
            if np.linalg.matrix_rank(pencil, tol=1e-10) < n:
                return False
    return True


def _pbh_detectable(A, C, tol=1e-9):
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) >= 1.0 - tol:
            pencil = np.vstack([A - lam * np.eye(n), C.astype(complex)])
            if np.linalg.matrix_rank(pencil, tol=1e-10) < n:
                return False
    return True


def _sqrt_psd(Q, tol=1e-10):
    """Symmetric square root; None if Q has an eigenvalue below -tol."""
    w, v = np.linalg.eigh(symmetrize(Q))
    if w[0] < -tol:
        return None
    return v @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ v.T


def _certificate_block(A, B, Q, R, V):
    """Block matrix [[A'VA - V + Q, A'VB], [B'VA, R + B'VB]]."""
    top = np.hstack([A.T @ V @ A - V + Q, A.T @ V @ B])
    bot = np.hstack([B.T @ V @ A, R + B.T @ V @ B])
    return symmetrize(np.vstack([top, bot]))


@dataclass(frozen=True)
class AssumptionReport:
    """Model-known diagnostic: which standing assumptions are checkable/true.

    Detectability verdicts are None (not applicable) when the corresponding
    state weight is indefinite. Candidate verdicts are None unless a
    candidate pair was supplied.
    """

    stabilizable_dev: bool
    stabilizable_mf: bool
    detectable_dev: bool | None
    detectable_mf: bool | None
    q_min_eig: float
    r_invertible: bool
    candidate_dev_ok: bool | None = None
    candidate_mf_ok: bool | None = None
    candidate_dev_min_eig: float | None = None
    candidate_mf_min_eig: float | None = None


def check_assumptions(
    model: SystemModel,
    cost: CostSpec,
    candidate: tuple[np.ndarray, np.ndarray] | None = None,
) -> AssumptionReport:
    """Report stabilizability/detectability verdicts and, optionally, whether
    a user-supplied pair of symmetric matrices strictly satisfies the
    definiteness certificates for the two Riccati stages.

    A report, not a gate: nothing here raises on a failed verdict.
    """
    A, B, G = model.A, model.B, model.G
    Q, R = cost.Q, cost.R
    q_min = min_eig_sym(Q)
    sq = _sqrt_psd(Q)
    det_dev = det_mf = None
    if sq is not None:
        det_dev = _pbh_detectable(A, sq)
        det_mf = _pbh_detectable(A + G, sq @ (np.eye(model.n) - cost.Gamma))
    cand_dev = cand_mf = None
    cand_dev_eig = cand_mf_eig = None
    if candidate is not None:
        p_t, pi_t = (np.asarray(x, dtype=float) for x in candidate)
        cand_dev_eig = min_eig_sym(_certificate_block(A, B, Q, R, symmetrize(p_t)))
        cand_mf_eig = min_eig_sym(
            _certificate_block(A + G, B, Q + cost.QGamma, R, symmetrize(pi_t))
        )
        cand_dev = bool(cand_dev_eig > 0.0)
        cand_mf = bool(cand_mf_eig > 0.0)
    return AssumptionReport(
        stabilizable_dev=_pbh_stabilizable(A, B),
        stabilizable_mf=_pbh_stabilizable(A + G, B),
        detectable_dev=det_dev,
        detectable_mf=det_mf,
        q_min_eig=q_min,
        r_invertible=is_invertible(R),
        candidate_dev_ok=cand_dev,
        candidate_mf_ok=cand_mf,
        candidate_dev_min_eig=cand_dev_eig,
        candidate_mf_min_eig=cand_mf_eig,
    )


@dataclass(frozen=True)
class ProblemConfig:
    """Everything a campaign needs: model, cost, population and run settings."""

    model: SystemModel
    cost: CostSpec
    N: int
    x0_low: np.ndarray
    x0_high: np.ndarray
    K0: np.ndarray
    Kbar0: np.ndarray
    epsilon: float
    seed: int


_CONFIG_KEYS = frozenset(
    {
        "n", "m", "N", "A", "G", "B", "D", "sigma2", "Q", "R", "Gamma",
        "x0_low", "x0_high", "K0", "Kbar0", "epsilon", "seed",
    }
)


def _parse_kv_lines(text: str, where: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{where}:{lineno}: expected 'key = value'")
        key, val = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(f"{where}:{lineno}: duplicate key '{key}'")
        values[key] = val
    return values


def _floats(raw: str, count: int, key: str, where: str) -> np.ndarray:
    try:
        vals = np.array([float(tok) for tok in raw.split()], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{where}: key '{key}': {exc}") from None
    if vals.size != count:
        raise ConfigError(
            f"{where}: key '{key}' needs {count} numbers, got {vals.size}"
        )
    if not np.all(np.isfinite(vals)):
        raise ConfigError(f"{where}: key '{key}' has non-finite entries")
    return vals


def load_config(path) -> ProblemConfig:
    """Parse a problem-definition file (grammar in the module docstring)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    where = str(path)
    values = _parse_kv_lines(text, where)
    unknown = set(values) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = _CONFIG_KEYS - set(values)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")
    try:
        n = int(values["n"])
        m = int(values["m"])
        N = int(values["N"])
        seed = int(values["seed"])
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    if n < 1 or m < 1 or N < 1:
        raise ConfigError(f"{where}: n, m, N must be positive")

    def grab(key, rows, cols):
        return _floats(values[key], rows * cols, key, where).reshape(rows, cols)

    try:
        model = SystemModel(
            A=grab("A", n, n),
            G=grab("G", n, n),
            B=grab("B", n, m),
            D=grab("D", n, n),
            sigma2=float(_floats(values["sigma2"], 1, "sigma2", where)[0]),
        )
        cost = CostSpec(Q=grab("Q", n, n), R=grab("R", m, m), Gamma=grab("Gamma", n, n))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    x0_low = _floats(values["x0_low"], n, "x0_low", where)
    x0_high = _floats(values["x0_high"], n, "x0_high", where)
    if np.any(x0_low > x0_high):
        raise ConfigError(f"{where}: x0_low must be <= x0_high elementwise")
    epsilon = float(_floats(values["epsilon"], 1, "epsilon", where)[0])
    if epsilon <= 0:
        raise ConfigError(f"{where}: epsilon must be positive")
    return ProblemConfig(
        model=model,
        cost=cost,
        N=N,
        x0_low=x0_low,
        x0_high=x0_high,
        K0=grab("K0", m, n),
        Kbar0=grab("Kbar0", m, n),
        epsilon=epsilon,
        seed=seed,
    )


def config_digest(path) -> str:
    """sha256 of the raw config bytes, embedded in every output file."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
