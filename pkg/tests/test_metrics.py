import math

import numpy as np
import pytest

from mfsoc import CostSpec, GainPair, SystemModel
from mfsoc.errors import NotStabilizingError
from mfsoc.metrics import (
    SolutionEstimate,
    residual_report,
    social_cost_estimate,
)
from mfsoc.riccati import solve_deviation, solve_meanfield

from helpers import random_psd_system

# A fixed set of inexact estimates for the benchmark system, exercising the
# residual maps away from the fixed point. The expected outputs below were
# computed independently (direct matrix arithmetic) before this module
# existed.
REF_P = np.array([[1.7896, -2.1118], [-2.1118, -0.9987]])
REF_K = np.array([[0.0848, 0.1059]])
REF_L1 = np.array([[-0.0723]])
REF_PI = np.array([[0.8598, -1.7990], [-1.7990, 2.2797]])
REF_KBAR = np.array([[-0.0307, 0.0426]])
REF_L2 = np.array([[0.0090]])


def solve_benchmark(benchmark):
    dev = solve_deviation(benchmark.model, benchmark.cost, benchmark.K0, 1e-10)
    mf = solve_meanfield(benchmark.model, benchmark.cost, dev.gain, benchmark.Kbar0, 1e-10)
    return SolutionEstimate(
        P=dev.value, K=dev.gain, Pi=mf.value, Kbar=mf.gain, L1=dev.lam, L2=mf.lam
    )


class TestResidualReport:
    def test_exact_solutions_are_fixed_points(self, benchmark):
        est = solve_benchmark(benchmark)
        report = residual_report(benchmark.model, benchmark.cost, est)
        assert report.failed == ()
        for name, val in report.as_dict().items():
            assert val <= 1e-8, name
        assert report.max_entry() <= 1e-8

    def test_reference_estimates_frozen_values(self, benchmark):
        est = SolutionEstimate(
            P=REF_P, K=REF_K, Pi=REF_PI, Kbar=REF_KBAR,
            L1=REF_L1, L2=REF_L2,
        )
        report = residual_report(benchmark.model, benchmark.cost, est)
        assert report.relerr_P == pytest.approx(0.2748797857291547, rel=1e-9)
        assert report.relerr_K == pytest.approx(0.022049493653369577, rel=1e-9)
        assert report.relerr_L1 == pytest.approx(0.03918120696913903, rel=1e-9)
        assert report.relerr_Pi == pytest.approx(0.17055677993602245, rel=1e-9)
        assert report.relerr_L2 == pytest.approx(0.04156620860630997, rel=1e-9)

    def test_meanfield_gain_entry_compares_total_gain(self, benchmark):
        est = SolutionEstimate(
            P=REF_P, K=REF_K, Pi=REF_PI, Kbar=REF_KBAR,
            L1=REF_L1, L2=REF_L2,
        )
        report = residual_report(benchmark.model, benchmark.cost, est)
        model, cost = benchmark.model, benchmark.cost
        mapped = np.linalg.solve(
            cost.R + model.B.T @ REF_PI @ model.B,
            model.B.T @ REF_PI @ (model.A + model.G),
        )
        expected = np.linalg.norm(mapped - (REF_K + REF_KBAR), 2) / np.linalg.norm(mapped, 2)
        assert report.relerr_Kbar == pytest.approx(expected, rel=1e-12)

    def test_singular_map_reported_per_entry(self):
        # scalar system tuned so R + B'PB = 0 exactly for the P estimate
        model = SystemModel(A=np.eye(1) * 0.5, G=np.zeros((1, 1)),
                            B=np.eye(1), D=np.eye(1))
        cost = CostSpec(Q=np.eye(1), R=np.array([[-2.0]]), Gamma=np.zeros((1, 1)))
        est = SolutionEstimate(
            P=np.array([[2.0]]), K=np.zeros((1, 1)),
            Pi=np.array([[1.0]]), Kbar=np.zeros((1, 1)),
            L1=np.array([[2.0]]), L2=np.array([[1.0]]),
        )
        report = residual_report(model, cost, est)
        assert set(report.failed) == {"relerr_P", "relerr_K"}
        assert math.isnan(report.relerr_P)
        assert math.isnan(report.relerr_K)
        assert math.isfinite(report.relerr_Pi)
        assert math.isfinite(report.relerr_L1)
        assert math.isnan(report.max_entry())

    def test_zero_map_zero_estimate(self):
        model = SystemModel(A=np.zeros((1, 1)), G=np.zeros((1, 1)),
                            B=np.zeros((1, 1)), D=np.eye(1))
        cost = CostSpec(Q=np.zeros((1, 1)), R=np.eye(1), Gamma=np.zeros((1, 1)))
        est = SolutionEstimate(
            P=np.zeros((1, 1)), K=np.zeros((1, 1)), Pi=np.zeros((1, 1)),
            Kbar=np.zeros((1, 1)), L1=np.zeros((1, 1)), L2=np.zeros((1, 1)),
        )
        report = residual_report(model, cost, est)
        assert report.relerr_P == 0.0
        assert report.relerr_Pi == 0.0


class TestSocialCost:
    def test_zero_weights_give_zero_cost(self):
        model = SystemModel(A=0.5 * np.eye(2), G=np.zeros((2, 2)),
                            B=np.ones((2, 1)), D=np.eye(2), sigma2=0.01)
        cost = CostSpec(Q=np.zeros((2, 2)), R=np.zeros((1, 1)), Gamma=np.zeros((2, 2)))
        gains = GainPair(K=np.zeros((1, 2)), Kbar=np.zeros((1, 2)))
        est = social_cost_estimate(model, cost, gains, N=5, horizon=20,
                                   replications=3, seed=0)
        assert est.per_agent_cost == 0.0
        assert est.std_error == 0.0

    def test_zero_noise_zero_start_gives_zero_cost(self):
        model = SystemModel(A=0.5 * np.eye(2), G=np.zeros((2, 2)),
                            B=np.ones((2, 1)), D=np.zeros((2, 2)), sigma2=0.0)
        cost = CostSpec(Q=np.eye(2), R=np.eye(1), Gamma=np.zeros((2, 2)))
        gains = GainPair(K=np.zeros((1, 2)), Kbar=np.zeros((1, 2)))
        est = social_cost_estimate(model, cost, gains, N=4, horizon=15,
                                   replications=2, seed=0,
                                   x0_low=np.zeros(2), x0_high=np.zeros(2))
        assert est.per_agent_cost == 0.0
        assert est.tail_step_cost == 0.0

    def test_refuses_unstable_closed_loop(self):
        model = SystemModel(A=2.0 * np.eye(2), G=np.zeros((2, 2)),
                            B=np.zeros((2, 1)), D=np.eye(2))
        cost = CostSpec(Q=np.eye(2), R=np.eye(1), Gamma=np.zeros((2, 2)))
        gains = GainPair(K=np.zeros((1, 2)), Kbar=np.zeros((1, 2)))
        with pytest.raises(NotStabilizingError):
            social_cost_estimate(model, cost, gains, N=4, horizon=10,
                                 replications=2, seed=0)

    def test_estimate_fields_are_sane(self, benchmark):
        est = solve_benchmark(benchmark)
        out = social_cost_estimate(
            benchmark.model, benchmark.cost, est.gains, N=20, horizon=60,
            replications=4, seed=3,
            x0_low=benchmark.x0_low, x0_high=benchmark.x0_high,
        )
        assert math.isfinite(out.per_agent_cost)
        assert out.std_error >= 0.0
        assert out.rho_dev < 1.0
        assert out.rho_mf < 1.0
        assert out.horizon == 60
        assert out.replications == 4

    def test_paired_seed_reproducibility(self, benchmark):
        est = solve_benchmark(benchmark)
        kwargs = dict(N=10, horizon=40, replications=3, seed=11,
                      x0_low=benchmark.x0_low, x0_high=benchmark.x0_high)
        a = social_cost_estimate(benchmark.model, benchmark.cost, est.gains, **kwargs)
        b = social_cost_estimate(benchmark.model, benchmark.cost, est.gains, **kwargs)
        assert a.per_agent_cost == b.per_agent_cost

    def test_exact_gains_minimize_cost_in_psd_regime(self):
        # paired seeds: the solved gains beat scaled and random detunings
        rng = np.random.default_rng(42)
        model, cost = random_psd_system(rng, n=2, m=1, sigma2=0.005)
        dev = solve_deviation(model, cost, np.zeros((1, 2)), epsilon=1e-12)
        mf = solve_meanfield(model, cost, dev.gain, -dev.gain, epsilon=1e-12)
        exact = GainPair(K=dev.gain, Kbar=mf.gain)
        kwargs = dict(N=40, horizon=150, replications=24, seed=99)
        base = social_cost_estimate(model, cost, exact, **kwargs)
        detunings = [GainPair(K=1.3 * dev.gain, Kbar=mf.gain),
                     GainPair(K=0.7 * dev.gain, Kbar=mf.gain)]
        rng2 = np.random.default_rng(1)
        for _ in range(3):
            detunings.append(GainPair(
                K=dev.gain + 0.15 * rng2.standard_normal(dev.gain.shape),
                Kbar=mf.gain + 0.15 * rng2.standard_normal(dev.gain.shape),
            ))
        for det in detunings:
            alt = social_cost_estimate(model, cost, det, **kwargs)
            assert base.per_agent_cost < alt.per_agent_cost

    def test_indefinite_regime_comparison_runs_either_way(self, benchmark):
        # With a negative inner matrix the solved gains need not minimize the
        # truncated cost; both estimates must still be finite and stable.
        est = solve_benchmark(benchmark)
        kwargs = dict(N=30, horizon=80, replications=4, seed=5,
                      x0_low=benchmark.x0_low, x0_high=benchmark.x0_high)
        base = social_cost_estimate(benchmark.model, benchmark.cost, est.gains, **kwargs)
        det = GainPair(K=1.5 * est.K, Kbar=est.Kbar)
        alt = social_cost_estimate(benchmark.model, benchmark.cost, det, **kwargs)
        assert math.isfinite(base.per_agent_cost)
        assert math.isfinite(alt.per_agent_cost)
        assert alt.rho_dev < 1.0
