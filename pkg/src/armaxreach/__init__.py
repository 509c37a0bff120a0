"""Reachability analysis of ARMAX models with symbolic zonotopes."""

from .models import (
    ArmaxModel,
    ConversionError,
    InputDecomposition,
    StateSpaceModel,
    UncertaintySpec,
    deadbeat_gain,
    simulate_armax,
    simulate_ss,
    ss_to_armax,
)
from .params import StackedParams, build_extended, params_direct
from .reach import (
    ARMAX_METHODS,
    EstimationError,
    ReachResult,
    estimate_initial_state_set,
    reach_alg1,
    reach_alg2,
    reach_dependent,
    reach_dependent_dp,
    reach_oneshot,
    reach_ss,
    reach_ss_series,
    run_method,
)
from .sampling import containment_report, run_samples
from .sets import (
    LabelRegistry,
    SymbolicZonotope,
    Zonotope,
    cartesian_product,
    contains_point,
    exact_add,
    interval_hull,
    linear_map,
    minkowski_sum,
    project_polygon,
)

__version__ = "0.1.0"
