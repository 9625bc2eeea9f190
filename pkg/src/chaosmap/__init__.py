"""Deterministic propagation of gradient-drift diffusions.

The white-noise diffusion is traded for logarithmic-gradient transport
of a random map expanded in a fixed Hermite chaos basis over the
initial-condition germ; Monte-Carlo and Fokker-Planck modules provide
independent oracles for cross-validation.
"""

from .chaos import (
    BasisTables,
    ChaosConfig,
    ChaosState,
    chaos_rhs,
    density_from_map,
    eval_map,
    eval_map_jacobian,
    init_gaussian_map,
    map_jacobian_determinants,
    map_mean,
    map_std,
    moments_from_state,
    propagate,
    step_rk4,
)
from .errors import (
    ChaosmapError,
    ConfigError,
    DivergenceError,
    GridCoverageWarning,
    GridDomainError,
    MapDegeneracyError,
    NonNormalizableWarning,
    NumericsError,
    StabilityError,
    SupportError,
)
from .fokker_planck import (
    DensityGrid,
    GridSpec,
    fisher_information,
    fp_solve,
    gaussian_chain_convolve,
    gaussian_density,
    gaussian_kernel_value,
    grid_mean,
    grid_moments,
    grid_variance,
    k1_diagnostics,
    kl_divergence,
    log_gradient,
    stationary_density,
)
from .harness import (
    ComparisonReport,
    EpsilonStudyReport,
    RunConfig,
    WienerDimensionReport,
    build_config,
    compare_methods,
    epsilon_study,
    load_config,
    load_manifest_config,
    run,
    wiener_dimension_report,
    wiener_term_count,
)
from .hermite import (
    MultiIndexSet,
    QuadratureRule,
    basis_size,
    gauss_hermite_rule,
    hermite_eval,
    hermite_table,
    multi_index_set,
    project,
    tensor_hermite_eval,
)
from .mc import (
    EpsilonCouplingStudy,
    MCEnsemble,
    WienerTruncationStudy,
    coupled_epsilon_study,
    estimate_moments,
    simulate,
    wiener_truncation_error,
)
from .observables import (
    ObservableSpec,
    evaluate,
    monomial,
    parse_observable,
    polynomial,
    smooth_bounded,
)
from .potentials import (
    PotentialSpec,
    ProblemSpec,
    cosine_potential,
    eval_drift,
    eval_drift_divergence,
    eval_potential,
    quadratic_potential,
    tabulated_potential,
    tanh_well_potential,
    zero_potential,
)

__version__ = "0.1.0"
