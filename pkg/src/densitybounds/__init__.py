"""Tight value brackets for integral functionals of shape-constrained densities."""

from .families import (
    BETA_CONCAVE,
    CUSTOM,
    ENTROPY,
    LOG_CONCAVE,
    RENYI,
    TRUNCATION,
    ConvexityFamily,
    DensitySpec,
    ExtremalLinear,
    FamilyError,
    Functional,
    GaussianForm,
    MaxAffineG,
    MultivariateT,
    NonIntegrableError,
    QuadraticG,
    UniformBox,
    absorb_mass,
    density_eval,
    density_eval_many,
    g_eval,
    make_extremal_linear,
    make_family,
    make_functional,
    make_gaussian,
    make_max_affine_g,
    make_multivariate_t,
    make_quadratic_g,
    make_uniform_box,
    mode_point,
    segment_convexity_violations,
)
from .antiderivatives import (
    AntiderivativeTable,
    IntegrandModel,
    NoClosedFormError,
    QuadratureConvergenceError,
    TailDecay,
    build_table,
    cauchy_repeated_integral,
    closed_form_F,
    closed_form_G,
    composed_integrand,
    mass_integrand,
)
from .bounds import (
    BoundConditionError,
    BoundResult,
    ConditionEvidence,
    ConditionStatus,
    binomial_variational,
    check_conditions,
    closed_form_bounds,
    counterexample_density,
    entropy_gap,
    renyi_gap,
    tight_bounds,
    truncation_upper,
)
from .discrete import (
    Binomial,
    DistParams,
    NegBinomial,
    Poisson,
    binomial_cdf,
    cdf,
    gamma_fn,
    nb_binomial_identity_check,
    negbinomial_cdf,
    poisson_cdf,
    poisson_limit_check,
    truncation_gamma_series,
)
from .oracle import (
    DEFAULT_BUDGET,
    OracleBudget,
    OracleError,
    OracleEstimate,
    RandomDensityConfig,
    generate_random_density,
    integrate_functional,
    mc_entropy,
    sample_density,
    slice_inequality_check,
    solve_threshold,
    truncated_entropy,
    truncated_mass,
)
from .commoninfo import (
    CommonInfoBracket,
    JointDensityModel,
    ModelError,
    additive_gap,
    bracket_assembly,
    common_info_bracket,
    dual_total_correlation,
    gaussian_entropy,
    joint_entropy,
    make_gaussian_model,
    make_mvt_model,
    marginal_entropy,
    mvt_entropy,
    slice_supremum_integral,
    threshold_ratio_check,
)

__version__ = "0.1.0"
