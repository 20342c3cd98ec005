"""Semiparametric additive transformation models for current status data.

Fits P(delta=1 | z, w, v) = F(beta'z + T(v) + sum_j h_j(w_j)) by maximum
likelihood over B-spline sieves, where T is an unknown monotone transform
of the examination time, the h_j are unknown centered regression functions,
and F is a known residual-error distribution. Provides plug-in standard
errors for beta, AIC-based knot selection, curve estimates, and a seeded
Monte Carlo harness.
"""

from .errors import (
    ConfigError,
    CstransError,
    DataFormatError,
    DegenerateDataError,
    DomainError,
    HarnessError,
    InvalidKnotsError,
    InvalidShapeParameterError,
    NonConvergenceError,
    ShapeError,
    SingularInformationError,
)
from .estimator import (
    CurveEstimates,
    FitConfig,
    FitResult,
    InformationBlocks,
    KnotSelection,
    build_model_spec,
    confidence_interval,
    fit,
    fit_dataset,
    information,
    information_from_scores,
    initial_parameters,
    predict_curves,
    select_knots,
    wald_statistic,
)
from .likelihood import (
    Dataset,
    LikelihoodEvaluator,
    ModelSpec,
    Observation,
    ParameterVector,
    as_dataset,
    hessian,
    loglik,
    score,
    theta,
)
from .links import (
    LinkFamily,
    cdf,
    concavity_margins,
    inverse_cdf,
    link_from_string,
    log_cdf_pair,
    pdf_and_dpdf,
    score_factor,
)
from .simulation import (
    McSummary,
    ReplicateRecord,
    SimulationTruth,
    curve_error,
    default_truth,
    finite_difference_gradient,
    finite_difference_jacobian,
    generate_dataset,
    run_monte_carlo,
)
from .splines import (
    CenteredBasisMap,
    MonotoneTransformSpec,
    SplineBasis,
    basis_for_data,
    basis_integrals,
    center_basis,
    eval_basis,
    eval_centered,
    integrate_exp_spline,
    integrate_exp_spline_grad,
    make_basis,
)

__version__ = "0.1.0"
