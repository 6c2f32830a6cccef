"""N-agent stochastic population simulator and moment estimation.

A data campaign runs M independent replications of the N-agent system under
the behavior law u_i = -K0 x_i + xi_i, where xi_i is a per-agent sum of
sinusoids whose frequencies are drawn once per campaign and then held fixed.
Process noise and initial states are redrawn per replication from
prefix-stable substreams of the campaign seed, so trajectories are
bit-reproducible and extending M leaves earlier replications unchanged.

Moment trajectories are replication averages of the two tracked agents'
state/input differences and of the population averages; they are the entire
interface handed to the data-driven solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, SimulationDivergedError
from .model import SystemModel

__all__ = [
    "ExplorationSpec",
    "RolloutConfig",
    "CampaignMeta",
    "RawTrajectories",
    "MomentTrajectories",
    "required_rows",
    "rollout_population",
    "estimate_moments",
    "collect_campaign",
    "exact_moments",
    "save_dataset",
    "load_dataset",
]


def required_rows(n: int, m: int) -> int:
    """Minimum data-row count for the excitation rank conditions."""
    return n * (n + 1) // 2 + n * m + m * (m + 1) // 2


@dataclass(frozen=True)
class ExplorationSpec:
    """Deterministic sinusoidal exploration, fixed for a whole campaign.

    mode "time-indexed" evaluates sum_j sin(w_ij * k) at step k; mode
    "constant" evaluates sum_j sin(w_ij) once (kept as an ablation: a
    constant input cannot satisfy the rank conditions).
    """

    frequencies: np.ndarray  # (n_agents, m, n_terms)
    mode: str = "time-indexed"
    n_terms: int = 100
    freq_low: float = -100.0
    freq_high: float = 100.0

    def __post_init__(self):
        freqs = np.asarray(self.frequencies, dtype=float)
        if freqs.ndim != 3:
            raise ValueError("frequencies must have shape (n_agents, m, n_terms)")
        if self.mode not in ("time-indexed", "constant"):
            raise ValueError(f"unknown exploration mode {self.mode!r}")
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "n_terms", freqs.shape[2])

    @classmethod
    def draw(
        cls,
        rng,
        n_agents: int,
        m: int,
        n_terms: int = 100,
        freq_low: float = -100.0,
        freq_high: float = 100.0,
        mode: str = "time-indexed",
    ) -> "ExplorationSpec":
        rng = np.random.default_rng(rng)
        freqs = rng.uniform(freq_low, freq_high, size=(n_agents, m, n_terms))
        return cls(
            frequencies=freqs,
            mode=mode,
            freq_low=freq_low,
            freq_high=freq_high,
        )

    def signal(self, steps: int) -> np.ndarray:
        """Exploration inputs for every agent, shape (steps, n_agents, m)."""
        if self.mode == "constant":
            row = np.sin(self.frequencies).sum(axis=2)
            return np.broadcast_to(row, (steps,) + row.shape).copy()
        k = np.arange(steps, dtype=float)
        # (steps, n_agents, m): sum over the sinusoid terms
        return np.sin(k[:, None, None, None] * self.frequencies[None]).sum(axis=3)


@dataclass(frozen=True)
class RolloutConfig:
    """Campaign settings: population size, horizon, replications, seed, gains."""

    N: int
    l: int
    M: int
    seed: int
    K0: np.ndarray
    Kbar0: np.ndarray
    x0_low: np.ndarray
    x0_high: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K0", np.atleast_2d(np.asarray(self.K0, float)))
        object.__setattr__(self, "Kbar0", np.atleast_2d(np.asarray(self.Kbar0, float)))
        object.__setattr__(self, "x0_low", np.asarray(self.x0_low, float).ravel())
        object.__setattr__(self, "x0_high", np.asarray(self.x0_high, float).ravel())
        if self.N < 2:
            raise ValueError("need at least two agents to form state differences")
        if self.l < 0 or self.M < 1:
            raise ValueError("horizon must be >= 0 and replications >= 1")

    @property
    def sufficient(self) -> bool:
        """Whether l-1 meets the rank-condition row count (campaign flag)."""
        m, n = self.K0.shape
        return self.l - 1 >= required_rows(n, m)


@dataclass(frozen=True)
class CampaignMeta:
    """Sidecar metadata persisted with every dataset."""

    seed: int
    N: int
    M: int
    l: int
    n: int
    m: int
    K0: np.ndarray
    config_sha256: str = ""

    def __post_init__(self):
        object.__setattr__(self, "K0", np.atleast_2d(np.asarray(self.K0, float)))


@dataclass(frozen=True)
class RawTrajectories:
    """Per-replication trajectories of agents 1 and 2 and the population mean.

    All arrays are (M, l, dim).
    """

    x1: np.ndarray
    u1: np.ndarray
    x2: np.ndarray
    u2: np.ndarray
    xbar: np.ndarray
    ubar: np.ndarray


@dataclass(frozen=True)
class MomentTrajectories:
    """Replication-averaged moment series, the simulator's data product.

    dx[k] estimates E[x_1k - x_2k], du[k] the matching input difference,
    xbar/ubar the population averages. Shapes (l, n) and (l, m).
    """

    dx: np.ndarray
    du: np.ndarray
    xbar: np.ndarray
    ubar: np.ndarray
    meta: CampaignMeta | None = None

    def __post_init__(self):
        for name in ("dx", "du", "xbar", "ubar"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 2:
                raise ValueError(f"{name} must be 2-D (steps, dim)")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, arr)
        steps = {self.dx.shape[0], self.du.shape[0], self.xbar.shape[0], self.ubar.shape[0]}
        if len(steps) != 1:
            raise ValueError("moment series lengths disagree")

    @property
    def l(self) -> int:
        return self.dx.shape[0]


def _campaign_streams(seed: int, M: int):
    children = np.random.SeedSequence(seed).spawn(M + 1)
    return children[0], children[1:]


def rollout_population(
    model: SystemModel,
    config: RolloutConfig,
    exploration: ExplorationSpec | None,
) -> RawTrajectories:
    """Simulate M replications of the N-agent population under the behavior
    law u_i = -K0 x_i + xi_i (all agents explore; exploration None means
    xi = 0)."""
    n, m = model.n, model.m
    N, l, M = config.N, config.l, config.M
    if config.K0.shape != (m, n):
        raise ValueError(f"K0 shape {config.K0.shape} vs model ({m}, {n})")
    if config.x0_low.size != n or config.x0_high.size != n:
        raise ValueError("x0 box must have one bound per state coordinate")
    if exploration is not None and exploration.frequencies.shape[:2] != (N, m):
        raise ValueError("exploration frequencies shaped for a different campaign")

    xi = (
        np.zeros((l, N, m))
        if exploration is None
        else exploration.signal(l)
    )
    _, rep_seeds = _campaign_streams(config.seed, M)
    sigma = float(np.sqrt(model.sigma2))

    x1 = np.zeros((M, l, n))
    u1 = np.zeros((M, l, m))
    x2 = np.zeros((M, l, n))
    u2 = np.zeros((M, l, m))
    xbar = np.zeros((M, l, n))
    ubar = np.zeros((M, l, m))

    for r in range(M):
        rng = np.random.default_rng(rep_seeds[r])
        x = rng.uniform(config.x0_low, config.x0_high, size=(N, n))
        for k in range(l):
            mean_x = x.mean(axis=0)
            u = -x @ config.K0.T + xi[k]
            x1[r, k] = x[0]
            x2[r, k] = x[1]
            u1[r, k] = u[0]
            u2[r, k] = u[1]
            xbar[r, k] = mean_x
            ubar[r, k] = u.mean(axis=0)
            w = rng.normal(0.0, sigma, size=(N, n)) if sigma > 0 else 0.0
            x = x @ model.A.T + mean_x @ model.G.T + u @ model.B.T
            if sigma > 0:
                x = x + w @ model.D.T
            if not np.all(np.isfinite(x)):
                raise SimulationDivergedError(
                    f"replication {r} diverged at step {k + 1}; "
                    "behavior gain is not stabilizing"
                )
    return RawTrajectories(x1=x1, u1=u1, x2=x2, u2=u2, xbar=xbar, ubar=ubar)


def estimate_moments(
    raw: RawTrajectories, meta: CampaignMeta | None = None
) -> MomentTrajectories:
    """Average the replications into moment trajectories (fixed-order
    reduction, so results are bit-deterministic)."""
    return MomentTrajectories(
        dx=(raw.x1 - raw.x2).mean(axis=0),
        du=(raw.u1 - raw.u2).mean(axis=0),
        xbar=raw.xbar.mean(axis=0),
        ubar=raw.ubar.mean(axis=0),
        meta=meta,
    )


def collect_campaign(
    model: SystemModel,
    config: RolloutConfig,
    exploration: ExplorationSpec | None = None,
    config_sha256: str = "",
) -> tuple[RawTrajectories, MomentTrajectories]:
    """Run a full data campaign: draw exploration (unless given), roll out,
    and average. The exploration draw consumes the campaign's first RNG
    substream, so a campaign is a pure function of (model, config)."""
    freq_seed, _ = _campaign_streams(config.seed, config.M)
    if exploration is None:
        exploration = ExplorationSpec.draw(
            np.random.default_rng(freq_seed), n_agents=config.N, m=model.m
        )
    raw = rollout_population(model, config, exploration)
    meta = CampaignMeta(
        seed=config.seed,
        N=config.N,
        M=config.M,
        l=config.l,
        n=model.n,
        m=model.m,
        K0=config.K0,
        config_sha256=config_sha256,
    )
    return raw, estimate_moments(raw, meta)


def exact_moments(
    model: SystemModel,
    K0,
    dx0,
    xbar0,
    steps: int,
    delta_xi,
    bar_xi,
) -> MomentTrajectories:
    """Noiseless, exactly propagated moment trajectories.

    Propagates the difference recursion dx⁺ = A dx + B du and the mean
    recursion x̄⁺ = (A+G) x̄ + B ū under du = -K0 dx + delta_xi and
    ū = -K0 x̄ + bar_xi. This is the infinite-population, zero-noise limit
    of a campaign and the reference input for equivalence tests.
    """
    K0 = np.atleast_2d(np.asarray(K0, dtype=float))
    n, m = model.n, model.m
    delta_xi = np.asarray(delta_xi, dtype=float).reshape(steps, m)
    bar_xi = np.asarray(bar_xi, dtype=float).reshape(steps, m)
    dx = np.zeros((steps, n))
    du = np.zeros((steps, m))
    xbar = np.zeros((steps, n))
    ubar = np.zeros((steps, m))
    if steps == 0:
        return MomentTrajectories(dx=dx, du=du, xbar=xbar, ubar=ubar)
    dx[0] = np.asarray(dx0, dtype=float).ravel()
    xbar[0] = np.asarray(xbar0, dtype=float).ravel()
    ag = model.A + model.G
    for k in range(steps):
        du[k] = -K0 @ dx[k] + delta_xi[k]
        ubar[k] = -K0 @ xbar[k] + bar_xi[k]
        if k + 1 < steps:
            dx[k + 1] = model.A @ dx[k] + model.B @ du[k]
            xbar[k + 1] = ag @ xbar[k] + model.B @ ubar[k]
    return MomentTrajectories(dx=dx, du=du, xbar=xbar, ubar=ubar)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_dataset(moments: MomentTrajectories, path) -> None:
    """Write the dataset CSV: a '#' metadata block, a header row, then one
    row per step with columns k, dx_*, du_*, xbar_*, ubar_*."""
    if moments.meta is None:
        raise ValueError("save_dataset: moments carry no campaign metadata")
    meta = moments.meta
    n, m = meta.n, meta.m
    if moments.dx.shape[1] != n or moments.du.shape[1] != m:
        raise ValueError("save_dataset: moment shapes disagree with metadata")
    header = (
        ["k"]
        + [f"dx_{i + 1}" for i in range(n)]
        + [f"du_{j + 1}" for j in range(m)]
        + [f"xbar_{i + 1}" for i in range(n)]
        + [f"ubar_{j + 1}" for j in range(m)]
    )
    lines = [
        "# mfsoc dataset v1",
        f"# seed = {meta.seed}",
        f"# N = {meta.N}",
        f"# M = {meta.M}",
        f"# l = {meta.l}",
        f"# n = {meta.n}",
        f"# m = {meta.m}",
        "# K0 = " + " ".join(_fmt(v) for v in meta.K0.ravel()),
        f"# config_sha256 = {meta.config_sha256}",
        ",".join(header),
    ]
    for k in range(moments.l):
        row = (
            [str(k)]
            + [_fmt(v) for v in moments.dx[k]]
            + [_fmt(v) for v in moments.du[k]]
            + [_fmt(v) for v in moments.xbar[k]]
            + [_fmt(v) for v in moments.ubar[k]]
        )
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> MomentTrajectories:
    """Read a dataset CSV back; inverse of save_dataset."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read dataset: {exc}") from None
    meta_raw: dict[str, str] = {}
    rows: list[str] = []
    header = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if "=" in body:
                key, val = (part.strip() for part in body.split("=", 1))
                meta_raw[key] = val
            continue
        if header is None:
            header = line
        else:
            rows.append(line)
    if header is None:
        raise ConfigError(f"{path}: no header row")
    needed = {"seed", "N", "M", "l", "n", "m", "K0"}
    missing = needed - set(meta_raw)
    if missing:
        raise ConfigError(f"{path}: metadata missing {sorted(missing)}")
    try:
        n = int(meta_raw["n"])
        m = int(meta_raw["m"])
        l = int(meta_raw["l"])
        meta = CampaignMeta(
            seed=int(meta_raw["seed"]),
            N=int(meta_raw["N"]),
            M=int(meta_raw["M"]),
            l=l,
            n=n,
            m=m,
            K0=np.array([float(t) for t in meta_raw["K0"].split()]).reshape(m, n),
            config_sha256=meta_raw.get("config_sha256", ""),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: bad metadata: {exc}") from None
    width = 1 + 2 * n + 2 * m
    expected_header = width
    if len(header.split(",")) != expected_header:
        raise ConfigError(f"{path}: header width disagrees with n/m metadata")
    if len(rows) != l:
        raise ConfigError(f"{path}: {len(rows)} data rows but metadata says l={l}")
    data = np.zeros((l, width - 1))
    for i, line in enumerate(rows):
        parts = line.split(",")
        if len(parts) != width:
            raise ConfigError(f"{path}: row {i} has {len(parts)} columns, not {width}")
        try:
            data[i] = [float(t) for t in parts[1:]]
        except ValueError as exc:
            raise ConfigError(f"{path}: row {i}: {exc}") from None
    return MomentTrajectories(
        dx=data[:, :n],
        du=data[:, n : n + m],
        xbar=data[:, n + m : 2 * n + m],
        ubar=data[:, 2 * n + m :],
        meta=meta,
    )

