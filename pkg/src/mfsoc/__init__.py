"""Mean-field LQG social control toolkit.

Model-based policy iteration on the two coupled Riccati equations, an
N-agent stochastic population simulator, and a data-driven least-squares
solver that recovers the same gains from moment trajectories alone.
"""

from .model import (  # noqa: F401
    AssumptionReport,
    CostSpec,
    GainPair,
    ProblemConfig,
    SystemModel,
    check_assumptions,
    closed_loop,
    config_digest,
    load_config,
    make_qgamma,
)
from .riccati import (  # noqa: F401
    RiccatiIterate,
    SolveReport,
    deviation_step,
    find_stabilizer,
    meanfield_step,
    mf_trajectory,
    solve_deviation,
    solve_meanfield,
)
from .simulate import (  # noqa: F401
    CampaignMeta,
    ExplorationSpec,
    MomentTrajectories,
    RawTrajectories,
    RolloutConfig,
    collect_campaign,
    estimate_moments,
    exact_moments,
    load_dataset,
    required_rows,
    rollout_population,
    save_dataset,
)
from .learn import (  # noqa: F401
    DataMoments,
    LsqIterate,
    ModelFreeResult,
    RankReport,
    StageReport,
    build_moment_matrices,
    lsq_deviation_step,
    lsq_meanfield_step,
    rank_check,
    run_model_free,
)
from .metrics import (  # noqa: F401
    CostEstimate,
    ResidualReport,
    SolutionEstimate,
    residual_report,
    social_cost_estimate,
)

__version__ = "0.1.0"
