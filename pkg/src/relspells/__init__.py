"""relspells: joint start/end rate models for dyadic interaction spells.

Observed interactions carry a start and an end time.  Idle dyads race to
start the next event while ongoing dyads race to end theirs; both rates are
log-linear in history statistics whose past-event contributions are scaled
by duration powers and exponential memory decay.  Estimation is maximum
likelihood nested in a grid search over the weighting hyperparameters.
"""

__version__ = "0.1.0"

from .events import (
    ActorRegistry,
    CovariateSet,
    DurationEvent,
    EventDataError,
    EventHistory,
    ValidationReport,
    collapse_gaps,
    load_actor_attributes,
    load_dyadic_ties,
    parse_event_history,
    validate_history,
    write_event_file,
)
from .riskset import (
    DD,
    DU,
    UD,
    UU,
    Directionality,
    RiskSetState,
    RisksetError,
    Transition,
    TransitionSequence,
    build_transitions,
    dyad_universe,
    riskset_at,
    riskset_timeline,
)
from .weights import (
    WeightParams,
    duration_weight,
    event_weight,
    memory_weight,
    resolve_floor,
)
from .stats import (
    DesignArray,
    DesignEngine,
    DesignOverflowError,
    ModelSpec,
    Options,
    StatisticSpec,
    UnknownStatisticError,
    WeightedAdjacency,
    accumulate,
    build_design,
    compute_statistic,
    engaged_actor,
    write_design_long,
)
from .likelihood import (
    Coefficients,
    LikelihoodValue,
    hessian,
    intensities,
    interevent_log_density,
    log_likelihood,
    score,
    transition_log_prob,
    transition_probabilities,
)
from .estimation import (
    EstimationError,
    FitResult,
    GridSpec,
    OptimSettings,
    ProfileRow,
    SingularDesignError,
    fit_beta,
    grid_search,
    profile_export,
    standard_errors,
    write_coefficient_table,
)
from .simulation import (
    RecoveryStudy,
    SimConfig,
    SimulationError,
    generate_covariates,
    recovery_study,
    rng_stream,
    simulate,
)
from .config import ConfigError, RunConfig, load_config
