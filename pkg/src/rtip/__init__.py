"""Time-evolving tipping thresholds and geometric early warning skill."""

__version__ = "0.1.0"

from .dynamics import (
    Amoc3Box,
    AmocParams,
    ConstantForcing,
    EquilibriumSet,
    Example1D,
    ExampleParams,
    HosingProfile,
    TanhRampForcing,
    amoc_q,
    amoc_rhs,
    eval_hosing,
    eval_tanh_ramp,
    example_rhs,
    find_equilibria,
)
from .ensembles import (
    EnsembleSpec,
    LabeledEnsemble,
    build_balanced_ensemble,
    classify_tip,
)
from .errors import (
    ClassStarvation,
    ClassificationFailure,
    ConfigError,
    ConvergenceFailure,
    CurveCollapse,
    DegenerateIntersection,
    DegenerateManifold,
    NonFiniteState,
    RtipError,
    SingleClass,
    Unresolved,
)
from .ews import IndicatorSeries, compute_indicators, return_rate_sq
from .integrators import (
    IntegratorConfig,
    NoiseModel,
    Trajectory,
    integrate_ode,
    integrate_sde,
)
from .skill import (
    RocCurve,
    SkillReport,
    auc,
    compute_skill,
    constrained_threshold,
    fixed_threshold_stats,
    optimal_threshold,
    roc_at_time,
)
from .threshold import (
    FateMap,
    ThresholdCurve,
    ThresholdHistory,
    Window,
    evolve_threshold_backward,
    grid_fate_map,
    is_inside,
    seed_basin_boundary,
    signed_distance,
)
