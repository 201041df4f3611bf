"""Action functionals, most probable transition paths, and tube-probability
Monte Carlo for mean-field (McKean-Vlasov) SDEs with additive unit noise on
the time interval [0, 1].

The package is organized around small, composable pieces:

* :mod:`ompath.measure` - atomic probability measures and Wasserstein-2.
* :mod:`ompath.drift` - polynomial mean-field drift families with exact
  derivatives, including the measure (Lions) derivative.
* :mod:`ompath.paths` - discretized paths, norms, quadrature, Cameron-Martin.
* :mod:`ompath.action` - the kinetic + divergence action decomposition and
  the exact gradient of its discretization.
* :mod:`ompath.variational` - Euler-Lagrange boundary value solver and direct
  action minimization, used as mutual cross-checks.
* :mod:`ompath.simulator` - interacting-particle Monte Carlo, tube
  probabilities, Girsanov reweighting, and two-path ratio experiments.
* :mod:`ompath.cli` - a batch front-end over flat key=value config files.
"""

from .action import OMResult, action_objective, discrete_action_gradient, om_action
from .drift import (
    DistributionFree,
    DriftSpec,
    LinearMeanField,
    PolySeparable1D,
    double_well_mean_field,
    mean_drift,
    ornstein_uhlenbeck,
    zero_drift,
)
from .errors import (
    ConfigError,
    DimensionMismatch,
    InvalidDrift,
    InvalidMeasure,
    InvalidPath,
    NonConvergence,
    OmpathError,
    SimulationBlowup,
)
from .measure import Measure, W2Result, mean, second_moment, w2_distance, w2_distance_detail
from .paths import (
    NormKind,
    NormValue,
    Path,
    cm_inner,
    constant_path,
    derivative,
    linear_path,
    norm,
    norm_detail,
    path_from_function,
    path_from_poly,
    quadrature,
    read_csv,
    write_csv,
)
from .simulator import (
    EnsembleResult,
    RatioRow,
    RatioTable,
    SimConfig,
    TubeEstimate,
    ensemble_stats,
    estimate_om_ratio,
    estimate_tube_probability,
    frozen_flow,
    girsanov_log_weight,
    girsanov_log_weights,
    simulate_ensemble,
)
from .variational import (
    BVProblem,
    ELSolution,
    MinimizeResult,
    el_residual,
    initial_guess,
    minimize_action,
    solve_el_bvp,
    solve_multistart,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
