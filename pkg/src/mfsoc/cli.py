"""Command-line harness.

Subcommands
-----------
mb-solve   model-based policy iteration from a problem config
collect    run a data campaign, write the dataset CSV (plus a raw trace)
mf-solve   data-driven solve from a dataset (model matrices never read)
verify     fixed-point residuals of a results file against a config's model
cost       Monte-Carlo social-cost estimate under a results file's gains
pipeline   collect -> mf-solve -> verify, plus a single run manifest

Exit codes: 0 ok, 2 config/input error, 3 rank-condition failure,
4 iteration/stability failure, 5 verification-tolerance failure.

All randomness is governed by --seed (default: the config's seed); every
output file embeds the seed and the config's sha256, and reruns with the
same inputs are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import learn, metrics, riccati, simulate
from .errors import (
    ConfigError,
    MaxIterationsError,
    MfsocError,
    NotSchurError,
    NotStabilizingError,
    RankConditionError,
    RankDeficientError,
    SimulationDivergedError,
    SingularInnerMatrixError,
    VerificationError,
)
from .model import ProblemConfig, config_digest, load_config
from .model import _parse_kv_lines  # shared key=value grammar

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RANK = 3
EXIT_ITERATION = 4
EXIT_VERIFY = 5

_RESULT_MATS = ("P", "K", "Pi", "Kbar", "L1", "L2")


def _fmt(x) -> str:
    return repr(float(x))


def _row(vals) -> str:
    return " ".join(_fmt(v) for v in np.asarray(vals, float).ravel())


def _write(path: Path, text: str, quiet=False):
    path.write_text(text)
    if not quiet:
        print(f"wrote {path}")


def _mftraj_csv(model, gains, xbar0, steps) -> str:
    traj = riccati.mf_trajectory(model, gains, xbar0, steps)
    lines = ["k," + ",".join(f"xbar_{i + 1}" for i in range(model.n))]
    for k, row in enumerate(traj):
        lines.append(str(k) + "," + ",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _trace_csv(raw: simulate.RawTrajectories, rep: int = 0) -> str:
    n = raw.x1.shape[2]
    m = raw.u1.shape[2]
    cols = ["k"]
    for tag, dim in (("x1", n), ("u1", m), ("x2", n), ("u2", m), ("xbar", n), ("ubar", m)):
        cols += [f"{tag}_{i + 1}" for i in range(dim)]
    lines = [",".join(cols)]
    for k in range(raw.x1.shape[1]):
        row = [str(k)]
        for arr in (raw.x1, raw.u1, raw.x2, raw.u2, raw.xbar, raw.ubar):
            row += [_fmt(v) for v in arr[rep, k]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _results_text(kind, seed, digest, n, m, est, blocks) -> str:
    lines = [
        "# mfsoc results v1",
        f"kind = {kind}",
        f"seed = {seed}",
        f"config_sha256 = {digest}",
        f"n = {n}",
        f"m = {m}",
    ]
    for name in _RESULT_MATS:
        lines.append(f"{name} = " + _row(getattr(est, name)))
    lines += blocks
    return "\n".join(lines) + "\n"


def _parse_results(path) -> tuple[metrics.SolutionEstimate, dict[str, str]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read results file: {exc}") from None
    values = _parse_kv_lines(text, str(path))
    for key in ("n", "m", *_RESULT_MATS):
        if key not in values:
            raise ConfigError(f"{path}: results file missing key '{key}'")
    try:
        n = int(values["n"])
        m = int(values["m"])
        shapes = {
            "P": (n, n), "K": (m, n), "Pi": (n, n),
            "Kbar": (m, n), "L1": (m, m), "L2": (m, m),
        }
        mats = {
            key: np.array([float(t) for t in values[key].split()]).reshape(shapes[key])
            for key in _RESULT_MATS
        }
    except ValueError as exc:
        raise ConfigError(f"{path}: bad results file: {exc}") from None
    return metrics.SolutionEstimate(**mats), values


def _stage_block(prefix: str, report) -> list[str]:
    lines = [
        f"{prefix}_converged = {int(report.converged)}",
        f"{prefix}_iterations = {report.iterations}",
        f"{prefix}_gain_changes = " + " ".join(_fmt(v) for v in report.gain_changes),
    ]
    return lines


def _rank_block(prefix: str, report: learn.RankReport) -> list[str]:
    return [
        f"{prefix}_rows = {report.rows}",
        f"{prefix}_required = {report.required}",
        f"{prefix}_rank = {report.rank}",
        f"{prefix}_ok = {int(report.ok)}",
        f"{prefix}_sigma_min_ratio = {_fmt(report.sigma_min_ratio)}",
    ]


def _xbar0(cfg: ProblemConfig) -> np.ndarray:
    return 0.5 * (cfg.x0_low + cfg.x0_high)


def cmd_mb_solve(args) -> int:
    cfg = load_config(args.config)
    digest = config_digest(args.config)
    eps = args.epsilon if args.epsilon is not None else cfg.epsilon
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rep1 = riccati.solve_deviation(cfg.model, cfg.cost, cfg.K0, eps, args.max_iter)
    rep2 = riccati.solve_meanfield(
        cfg.model, cfg.cost, rep1.gain, cfg.Kbar0, eps, args.max_iter
    )
    est = metrics.SolutionEstimate(
        P=rep1.value, K=rep1.gain, Pi=rep2.value, Kbar=rep2.gain,
        L1=rep1.lam, L2=rep2.lam,
    )
    blocks = _stage_block("stage1", rep1) + _stage_block("stage2", rep2)
    _write(out / "results.txt",
           _results_text("model-based", cfg.seed, digest, cfg.model.n, cfg.model.m, est, blocks))
    _write(out / "mb_stage1.csv", rep1.to_csv())
    _write(out / "mb_stage2.csv", rep2.to_csv())
    summary = {
        "seed": cfg.seed,
        "config_sha256": digest,
        "stage1": rep1.summary(),
        "stage2": rep2.summary(),
    }
    _write(out / "mb_summary.json", json.dumps(summary, indent=2) + "\n")
    steps = args.horizon if args.horizon is not None else 60
    _write(out / "mftraj.csv", _mftraj_csv(cfg.model, est.gains, _xbar0(cfg), steps))
    print(f"deviation stage: {rep1.iterations} iterations; "
          f"mean-field stage: {rep2.iterations} iterations")
    return EXIT_OK


def _campaign(cfg: ProblemConfig, args, digest):
    seed = args.seed if args.seed is not None else cfg.seed
    horizon = args.horizon if args.horizon is not None else 50
    reps = args.replications if args.replications is not None else 100
    rollout = simulate.RolloutConfig(
        N=cfg.N, l=horizon, M=reps, seed=seed,
        K0=cfg.K0, Kbar0=cfg.Kbar0, x0_low=cfg.x0_low, x0_high=cfg.x0_high,
    )
    if not rollout.sufficient:
        print(
            f"warning: horizon {horizon} gives {horizon - 1} data rows, below the "
            f"rank-condition minimum {simulate.required_rows(cfg.model.n, cfg.model.m)}",
            file=sys.stderr,
        )
    raw, moments = simulate.collect_campaign(cfg.model, rollout, config_sha256=digest)
    return raw, moments, rollout


def cmd_collect(args) -> int:
    cfg = load_config(args.config)
    digest = config_digest(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    raw, moments, rollout = _campaign(cfg, args, digest)
    simulate.save_dataset(moments, out / "dataset.csv")
    print(f"wrote {out / 'dataset.csv'}")
    _write(out / "trace.csv", _trace_csv(raw))
    print(f"campaign: N={rollout.N} l={rollout.l} M={rollout.M} seed={rollout.seed}")
    return EXIT_OK


def _run_model_free(cfg: ProblemConfig, moments, args):
    eps = args.epsilon if args.epsilon is not None else cfg.epsilon
    return learn.run_model_free(
        moments, cfg.K0, cfg.Kbar0, cfg.cost.Q, cfg.cost.R, cfg.cost.Gamma,
        epsilon=eps, max_iter=args.max_iter,
    )


def _write_mf_outputs(out, cfg, digest, moments, result, quiet=False):
    est = metrics.SolutionEstimate(
        P=result.P, K=result.K, Pi=result.Pi, Kbar=result.Kbar,
        L1=result.L1, L2=result.L2,
    )
    seed = moments.meta.seed if moments.meta is not None else cfg.seed
    blocks = (
        _rank_block("rank1", result.rank1)
        + _rank_block("rank2", result.rank2)
        + _stage_block("stage1", result.stage1)
        + _stage_block("stage2", result.stage2)
    )
    _write(out / "results.txt",
           _results_text("model-free", seed, digest, cfg.model.n, cfg.model.m, est, blocks),
           quiet)
    _write(out / "stage1.csv", result.stage1.to_csv(), quiet)
    _write(out / "stage2.csv", result.stage2.to_csv(), quiet)
    _write(out / "mftraj.csv",
           _mftraj_csv(cfg.model, est.gains, _xbar0(cfg), 60), quiet)
    return est


def cmd_mf_solve(args) -> int:
    cfg = load_config(args.config)
    digest = config_digest(args.config)
    moments = simulate.load_dataset(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = _run_model_free(cfg, moments, args)
    _write_mf_outputs(out, cfg, digest, moments, result)
    print(f"stage 1: {result.stage1.iterations} iterations; "
          f"stage 2: {result.stage2.iterations} iterations")
    return EXIT_OK


def _verify(cfg, est, tol):
    report = metrics.residual_report(cfg.model, cfg.cost, est)
    for name, val in report.as_dict().items():
        print(f"{name} = {val:.6e}")
    if report.failed:
        raise VerificationError(f"residual maps failed: {', '.join(report.failed)}")
    if tol is not None and not (report.max_entry() <= tol):
        raise VerificationError(
            f"max residual {report.max_entry():.6e} exceeds tolerance {tol:g}"
        )
    return report


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    est, _ = _parse_results(args.results)
    _verify(cfg, est, args.tol)
    return EXIT_OK


def cmd_cost(args) -> int:
    cfg = load_config(args.config)
    est, _ = _parse_results(args.results)
    seed = args.seed if args.seed is not None else cfg.seed
    horizon = args.horizon if args.horizon is not None else 200
    reps = args.replications if args.replications is not None else 32
    estimate = metrics.social_cost_estimate(
        cfg.model, cfg.cost, est.gains, N=cfg.N, horizon=horizon,
        replications=reps, seed=seed, x0_low=cfg.x0_low, x0_high=cfg.x0_high,
    )
    print(f"per_agent_cost = {estimate.per_agent_cost!r}")
    print(f"std_error = {estimate.std_error!r}")
    print(f"horizon = {estimate.horizon}")
    print(f"replications = {estimate.replications}")
    print(f"rho_dev = {estimate.rho_dev!r}")
    print(f"rho_mf = {estimate.rho_mf!r}")
    print(f"tail_step_cost = {estimate.tail_step_cost!r}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config)
    digest = config_digest(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    raw, moments, rollout = _campaign(cfg, args, digest)
    simulate.save_dataset(moments, out / "dataset.csv")
    _write(out / "trace.csv", _trace_csv(raw), quiet=True)
    result = _run_model_free(cfg, moments, args)
    est = _write_mf_outputs(out, cfg, digest, moments, result, quiet=True)
    report = metrics.residual_report(cfg.model, cfg.cost, est)

    eps = args.epsilon if args.epsilon is not None else cfg.epsilon
    lines = [
        "# mfsoc pipeline manifest v1",
        f"seed = {rollout.seed}",
        f"config_sha256 = {digest}",
        f"N = {rollout.N}",
        f"n = {cfg.model.n}",
        f"m = {cfg.model.m}",
        f"l = {rollout.l}",
        f"M = {rollout.M}",
        f"epsilon = {_fmt(eps)}",
        "dataset = dataset.csv",
        "results = results.txt",
    ]
    lines += _rank_block("rank1", result.rank1) + _rank_block("rank2", result.rank2)
    lines += _stage_block("stage1", result.stage1) + _stage_block("stage2", result.stage2)
    for name in _RESULT_MATS:
        lines.append(f"{name} = " + _row(getattr(est, name)))
    for name, val in report.as_dict().items():
        lines.append(f"{name} = {_fmt(val)}")
    for title, body in (
        ("stage1.csv", result.stage1.to_csv()),
        ("stage2.csv", result.stage2.to_csv()),
        ("mftraj.csv", _mftraj_csv(cfg.model, est.gains, _xbar0(cfg), 60)),
    ):
        lines.append("")
        lines.append(f"[{title}]")
        lines.append(body.rstrip("\n"))
    _write(out / "manifest.txt", "\n".join(lines) + "\n")

    print(f"stage 1: {result.stage1.iterations} iterations; "
          f"stage 2: {result.stage2.iterations} iterations")
    for name, val in report.as_dict().items():
        print(f"{name} = {val:.6e}")
    if args.tol is not None:
        if report.failed or not (report.max_entry() <= args.tol):
            raise VerificationError(
                f"max residual {report.max_entry():.6e} exceeds tolerance {args.tol:g}"
            )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfsoc",
        description="Mean-field LQG social control: model-based and data-driven solvers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config=True, out=True):
        if config:
            p.add_argument("--config", required=True, help="problem definition file")
        if out:
            p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--epsilon", type=float, default=None,
                       help="override the config convergence threshold")
        p.add_argument("--max-iter", type=int, default=50)
        p.add_argument("--replications", type=int, default=None)
        p.add_argument("--horizon", type=int, default=None)

    p = sub.add_parser("mb-solve", help="model-based policy iteration")
    add_common(p)
    p.set_defaults(func=cmd_mb_solve)

    p = sub.add_parser("collect", help="run a data campaign, write dataset.csv")
    add_common(p)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("mf-solve", help="data-driven solve from a dataset")
    add_common(p)
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_mf_solve)

    p = sub.add_parser("verify", help="fixed-point residuals of a results file")
    add_common(p, out=False)
    p.add_argument("--results", required=True)
    p.add_argument("--tol", type=float, default=None,
                   help="fail (exit 5) if any residual exceeds this")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("cost", help="Monte-Carlo social-cost estimate")
    add_common(p, out=False)
    p.add_argument("--results", required=True)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("pipeline", help="collect + mf-solve + verify + manifest")
    add_common(p)
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RankConditionError, RankDeficientError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RANK
    except (
        MaxIterationsError,
        NotStabilizingError,
        NotSchurError,
        SingularInnerMatrixError,
        SimulationDivergedError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ITERATION
    except VerificationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except MfsocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
