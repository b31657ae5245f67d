"""Explicit full-projection backward schemes for monotone FBSDEs.

Backward stochastic dynamics with a driver that is one-sided Lipschitz
(monotone) and of polynomial growth in y are discretized on a
recombining trinomial lattice, where every conditional expectation is
an exact three-point sum.  The package provides the explicit and
implicit base schemes, the full-projection scheme (explicit step
composed with a shrinking radial truncation, stable without implicit
solves), independent reference oracles, and monitors for the size,
stability, and contraction inequalities the schemes are supposed to
satisfy.
"""

from .analysis import (
    ErrorReport,
    Reference,
    StabilityLedger,
    contraction_check,
    convergence_study,
    fd_comparison,
    minmax_processes,
    one_step_checks,
    sup_norm_check,
)
from .forward import Lattice, build_lattice, dump_lattice, euler_step, \
    quantized_forward_step
from .grids import (
    ConfigurationError,
    IncrementDistribution,
    SpatialGrid,
    TimeGrid,
    TruncationConfig,
    WeightConfig,
    default_alpha,
    gaussian_moment_exact,
    grid_project,
    grid_project_index,
    increment_radius,
    make_weight_config,
    moment,
    moment_exact,
    trinomial,
    truncate,
    truncate_increment,
    truncation_radius,
    weight_values,
)
from .model import (
    DriverSpec,
    ModelSpec,
    ValidationReport,
    constant_b_sigma,
    constant_g,
    experiment1_model,
    experiment2_model,
    growth_constants,
    linear_model,
    lipschitz_clamp_g,
    make_constant_model,
    poly_driver,
    quadratic_g,
    validate_model,
)
from .oracle import (
    PdeSolution,
    ProxyReference,
    fd_solve,
    linear_solution,
    proxy_reference,
)
from .schemes import (
    SchemeConfig,
    SolverConfig,
    SolverError,
    ValueFunctions,
    explicit_y_step,
    fp_post_step,
    fp_pre_step,
    implicit_y_step,
    run_backward,
    theta_y_step,
    z_step,
)
from .treeval import ChainLaw, chain_law, cond_expect, l2_norm, level_expectation

__version__ = "0.1.0"
