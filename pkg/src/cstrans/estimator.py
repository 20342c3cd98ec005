"""Sieve maximum likelihood fitting, knot selection by AIC, and inference.

The log-likelihood is concave in the free parameters, so the optimizer is
a damped Newton ascent: solve the Newton system on the negated Hessian via
Cholesky (with an escalating ridge if the factorization fails), then
step-halve until the log-likelihood strictly increases. Standard errors
for the linear coefficients come from the Schur complement of the
empirical outer-product information over the spline directions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import ndtri

from .errors import (
    DegenerateDataError,
    NonConvergenceError,
    ShapeError,
    SingularInformationError,
)
from .likelihood import (
    Dataset,
    LikelihoodEvaluator,
    ModelSpec,
    ParameterVector,
    as_dataset,
)
from .links import LinkFamily, inverse_cdf, link_from_string
from .splines import ExpSplineIntegrator, SplineBasis, basis_design, basis_for_data

__all__ = [
    "FitConfig",
    "FitResult",
    "InformationBlocks",
    "KnotSelection",
    "CurveEstimates",
    "build_model_spec",
    "initial_parameters",
    "fit",
    "fit_dataset",
    "select_knots",
    "information",
    "information_from_scores",
    "confidence_interval",
    "wald_statistic",
    "predict_curves",
]

_RIDGE_CAP = 1e-2
_MIN_STEP = 2.0**-50
# loose guard against astronomically long proposals from a near-singular
# system; boundary-drifting coordinates may still move fast under it
_MAX_NEWTON_STEP = 1e4


@dataclass
class FitConfig:
    """Everything needed to turn a dataset into a fitted model.

    ``num_basis`` fixes the basis dimensions (K_0, K_1, ..., K_d); if it is
    None an ``aic_grid`` of candidate dimension tuples must be given and the
    model is chosen by AIC. Optimization knobs apply to every fit.
    """

    link: str | LinkFamily = "extreme_value"
    degrees: int | tuple[int, ...] = 2
    num_basis: tuple[int, ...] | None = (5, 5)
    aic_grid: tuple[tuple[int, ...], ...] | None = None
    knot_placement: str = "equal"
    quadrature_order: int = 15
    max_iterations: int = 200
    gradient_tolerance: float = 1e-6
    loglik_rel_tolerance: float = 1e-9
    ridge_epsilon: float = 1e-8
    store_iterates: bool = False

    def __post_init__(self):
        for name in ("gradient_tolerance", "loglik_rel_tolerance", "ridge_epsilon"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.num_basis is None and not self.aic_grid:
            raise ValueError("either num_basis or a non-empty aic_grid is required")

    def resolved_link(self) -> LinkFamily:
        return link_from_string(self.link) if isinstance(self.link, str) else self.link

    def degree_for(self, j: int) -> int:
        """Degree of function j (0 = transform, 1.. = additive components)."""
        if isinstance(self.degrees, int):
            return self.degrees
        return self.degrees[j]


@dataclass(frozen=True)
class InformationBlocks:
    """Empirical outer-product information, split over (linear, spline) directions."""

    i11: np.ndarray
    i12: np.ndarray
    i22: np.ndarray
    i_beta: np.ndarray


@dataclass
class FitResult:
    spec: ModelSpec
    params: ParameterVector
    loglik_at_max: float
    iterations: int
    converged: bool
    trace: list[float]
    info: InformationBlocks
    info_beta: np.ndarray
    se_beta: np.ndarray
    aic: float
    n_obs: int
    iterates: list[np.ndarray] | None = None
    selection_table: list[dict] | None = None

    @property
    def beta(self) -> np.ndarray:
        return self.params.beta


def build_model_spec(
    data,
    link: LinkFamily,
    num_basis: tuple[int, ...],
    degrees: int | tuple[int, ...] = 2,
    knot_placement: str = "equal",
    quadrature_order: int = 15,
) -> ModelSpec:
    """Construct bases over the observed variable ranges and assemble a spec."""
    data = as_dataset(data)
    if len(num_basis) != data.n_components + 1:
        raise ShapeError(
            f"num_basis needs {data.n_components + 1} entries (transform plus each component), "
            f"got {len(num_basis)}"
        )

    def deg(j: int) -> int:
        return degrees if isinstance(degrees, int) else degrees[j]

    basis0 = basis_for_data(data.v, deg(0), num_basis[0], knot_placement)
    bases = tuple(
        basis_for_data(data.w[:, j], deg(j + 1), num_basis[j + 1], knot_placement)
        for j in range(data.n_components)
    )
    return ModelSpec(link=link, basis0=basis0, bases=bases, quadrature_order=quadrature_order)


def initial_parameters(spec: ModelSpec, data) -> ParameterVector:
    """All-zero coefficients except the intercept, set to F^{-1}(mean delta)."""
    data = as_dataset(data)
    layout = spec.layout(data.n_linear)
    beta = np.zeros(layout.n_linear)
    beta[0] = inverse_cdf(spec.link, float(np.mean(data.delta)))
    return ParameterVector(
        beta=beta,
        gamma0=np.zeros(layout.n_transform),
        reduced=tuple(np.zeros(m) for m in layout.reduced_dims),
    )


def _newton_direction(neg_hessian: np.ndarray, grad: np.ndarray, ridge: float):
    """Solve (−H + lam·scale·I) d = grad, escalating lam from ``ridge`` by 10x."""
    scale = 1.0 + float(np.abs(np.diag(neg_hessian)).max())
    eye = np.eye(neg_hessian.shape[0])
    lam = 0.0
    while True:
        try:
            factor = cho_factor(neg_hessian + (lam * scale) * eye, lower=True)
            return cho_solve(factor, grad), lam
        except LinAlgError:
            lam = ridge if lam == 0.0 else lam * 10.0
            if lam > _RIDGE_CAP:
                raise


def fit(spec: ModelSpec, data, config: FitConfig | None = None) -> FitResult:
    """Maximize the sieve log-likelihood by damped Newton ascent.

    Raises ``NonConvergenceError`` (carrying the log-likelihood trace) if the
    gradient tolerance is not reached within ``max_iterations``.
    """
    config = config or FitConfig()
    data = as_dataset(data)
    ev = LikelihoodEvaluator(spec, data)
    if len(data) <= ev.free_dim:
        raise DegenerateDataError(
            f"need more observations ({len(data)}) than free parameters ({ev.free_dim})"
        )

    x = ev.layout.pack(initial_parameters(spec, data))
    ll = ev.loglik(x)
    trace = [ll]
    iterates = [x.copy()] if config.store_iterates else None
    gtol = config.gradient_tolerance
    converged = False
    iterations = 0

    for iterations in range(1, config.max_iterations + 1):
        grad = ev.score(x)
        if np.abs(grad).max() <= gtol:
            converged = True
            iterations -= 1
            break

        neg_h = -ev.hessian(x)
        stepped = False
        ridge = config.ridge_epsilon
        while True:
            try:
                direction, used_lam = _newton_direction(neg_h, grad, ridge)
            except LinAlgError:
                break
            longest = np.abs(direction).max()
            if longest > _MAX_NEWTON_STEP:
                direction = direction * (_MAX_NEWTON_STEP / longest)
            step = 1.0
            while step >= _MIN_STEP:
                x_try = x + step * direction
                ll_try = ev.loglik(x_try)
                if ll_try > ll:
                    stepped = True
                    break
                step *= 0.5
            if stepped:
                break
            # a factorizable but ill-conditioned system can still give a bad
            # direction; stiffen and retry until the ridge cap
            ridge = max(used_lam * 10.0, ridge * 10.0)
            if ridge > _RIDGE_CAP:
                break

        if not stepped:
            if np.abs(grad).max() <= gtol * (1.0 + abs(ll)):
                converged = True
                break
            raise NonConvergenceError(
                f"line search stalled at iteration {iterations} with "
                f"gradient norm {np.abs(grad).max():.3e}",
                trace,
            )

        rel_change = abs(ll_try - ll) / (1.0 + abs(ll_try))
        x, ll = x_try, ll_try
        trace.append(ll)
        if iterates is not None:
            iterates.append(x.copy())
        if rel_change <= config.loglik_rel_tolerance:
            grad = ev.score(x)
            if np.abs(grad).max() <= gtol:
                converged = True
                break
            if np.abs(grad).max() <= gtol * (1.0 + abs(ll)):
                converged = True
                break
    if not converged:
        raise NonConvergenceError(
            f"no convergence in {config.max_iterations} iterations "
            f"(last gradient norm {np.abs(ev.score(x)).max():.3e})",
            trace,
        )

    params = ev.layout.unpack(x)
    info = _information_from_evaluator(ev, x)
    se_beta = _se_from_information(info.i_beta, len(data))
    n_funcs = len(spec.basis_sizes)
    aic = -2.0 * ll + 2.0 * (data.n_linear + sum(spec.basis_sizes))
    return FitResult(
        spec=spec,
        params=params,
        loglik_at_max=ll,
        iterations=iterations,
        converged=converged,
        trace=trace,
        info=info,
        info_beta=info.i_beta,
        se_beta=se_beta,
        aic=aic,
        n_obs=len(data),
        iterates=iterates,
    )


def fit_dataset(data, config: FitConfig) -> FitResult:
    """Build the model from a config (fixed basis sizes or AIC search) and fit."""
    data = as_dataset(data)
    if config.aic_grid:
        selection = select_knots(data, config, config.aic_grid)
        result = selection.fit
        result.selection_table = selection.table
        return result
    spec = build_model_spec(
        data,
        config.resolved_link(),
        config.num_basis,
        config.degrees,
        config.knot_placement,
        config.quadrature_order,
    )
    return fit(spec, data, config)


@dataclass
class KnotSelection:
    chosen: tuple[int, ...]
    fit: FitResult
    table: list[dict]


def select_knots(data, config: FitConfig, grid) -> KnotSelection:
    """Fit every candidate basis-size tuple and pick the AIC minimizer.

    Ties break toward fewer total parameters. Candidates that fail to
    converge are recorded in the table and skipped; if every candidate
    fails, the errors are aggregated into one ``NonConvergenceError``.
    """
    data = as_dataset(data)
    grid = [tuple(int(k) for k in counts) for counts in grid]
    if not grid:
        raise ValueError("knot-selection grid is empty")
    for counts in grid:
        free = data.n_linear + counts[0] + sum(k - 1 for k in counts[1:])
        if free >= len(data):
            raise DegenerateDataError(
                f"candidate {counts} has free dimension {free} >= n = {len(data)}"
            )

    table: list[dict] = []
    fits: dict[tuple[int, ...], FitResult] = {}
    failures: list[str] = []
    for counts in grid:
        row = {"num_basis": counts, "total_basis": sum(counts)}
        try:
            spec = build_model_spec(
                data,
                config.resolved_link(),
                counts,
                config.degrees,
                config.knot_placement,
                config.quadrature_order,
            )
            result = fit(spec, data, config)
        except (NonConvergenceError, SingularInformationError, LinAlgError) as exc:
            row.update(loglik=None, aic=None, converged=False, error=str(exc))
            failures.append(f"{counts}: {exc}")
        else:
            row.update(
                loglik=result.loglik_at_max,
                aic=result.aic,
                converged=True,
                error=None,
            )
            fits[counts] = result
        table.append(row)

    if not fits:
        raise NonConvergenceError(
            "every knot candidate failed to converge: " + "; ".join(failures)
        )
    chosen = min(fits, key=lambda c: (fits[c].aic, sum(c), c))
    return KnotSelection(chosen=chosen, fit=fits[chosen], table=table)


def _schur_complement(i11: np.ndarray, i12: np.ndarray, i22: np.ndarray) -> np.ndarray:
    if i22.shape[0] == 0:
        return i11.copy()
    scale = 1.0 + float(np.abs(np.diag(i22)).max())
    lam = 0.0
    eye = np.eye(i22.shape[0])
    while True:
        try:
            factor = cho_factor(i22 + (lam * scale) * eye, lower=True)
            break
        except LinAlgError:
            lam = 1e-10 if lam == 0.0 else lam * 10.0
            if lam > _RIDGE_CAP:
                raise SingularInformationError(
                    "spline-direction information block is singular beyond the ridge fallback"
                ) from None
    out = i11 - i12 @ cho_solve(factor, i12.T)
    return 0.5 * (out + out.T)


def information_from_scores(a1: np.ndarray, a2: np.ndarray) -> InformationBlocks:
    """Blocks of the outer-product information for given per-record scores.

    ``a1`` holds the linear-coefficient score contributions (n x l) and
    ``a2`` the spline-direction contributions (n x m, m possibly 0).
    """
    n = a1.shape[0]
    i11 = a1.T @ a1 / n
    i12 = a1.T @ a2 / n
    i22 = a2.T @ a2 / n
    return InformationBlocks(i11=i11, i12=i12, i22=i22, i_beta=_schur_complement(i11, i12, i22))


def _information_from_evaluator(ev: LikelihoodEvaluator, x: np.ndarray) -> InformationBlocks:
    scores = ev.per_observation_scores(x)
    split = ev.layout.n_linear
    return information_from_scores(scores[:, :split], scores[:, split:])


def information(spec: ModelSpec, params: ParameterVector, data) -> InformationBlocks:
    """Outer-product information blocks and the profiled linear-coefficient block."""
    data = as_dataset(data)
    ev = LikelihoodEvaluator(spec, data)
    return _information_from_evaluator(ev, ev.layout.pack(params))


def _se_from_information(i_beta: np.ndarray, n: int) -> np.ndarray:
    try:
        factor = cho_factor(i_beta, lower=True)
    except LinAlgError:
        raise SingularInformationError(
            "profiled information for the linear coefficients is singular"
        ) from None
    cov = cho_solve(factor, np.eye(i_beta.shape[0])) / n
    return np.sqrt(np.diag(cov))


def confidence_interval(result: FitResult, level: float) -> np.ndarray:
    """Per-coefficient normal intervals, returned as an (l, 2) array."""
    if not 0.0 <= level < 1.0:
        raise ValueError(f"confidence level must be in [0, 1), got {level}")
    half = ndtri(0.5 * (1.0 + level)) * result.se_beta
    return np.column_stack((result.beta - half, result.beta + half))


def wald_statistic(result: FitResult, beta0, coords=None) -> float:
    """Wald ellipsoid statistic for the coefficients in ``coords``.

    Computed as d' V^{-1} d with d the deviation of the selected
    coefficients and V their joint plug-in covariance; compare against a
    chi-square quantile with len(coords) degrees of freedom.
    """
    beta0 = np.asarray(beta0, dtype=float).reshape(-1)
    coords = np.arange(result.beta.size) if coords is None else np.asarray(coords, dtype=int)
    if beta0.size != coords.size:
        raise ShapeError(f"beta0 has {beta0.size} entries for {coords.size} coordinates")
    try:
        factor = cho_factor(result.info_beta, lower=True)
    except LinAlgError:
        raise SingularInformationError(
            "profiled information for the linear coefficients is singular"
        ) from None
    cov = cho_solve(factor, np.eye(result.beta.size)) / result.n_obs
    sub = cov[np.ix_(coords, coords)]
    dev = result.beta[coords] - beta0
    return float(dev @ np.linalg.solve(sub, dev))


@dataclass
class CurveEstimates:
    """Tabulated transform and additive-component estimates on given grids."""

    grid_v: np.ndarray
    transform: np.ndarray
    grids_w: tuple[np.ndarray, ...]
    components: tuple[np.ndarray, ...]


def predict_curves(result: FitResult, grid_v, grids_w=None) -> CurveEstimates:
    """Evaluate the fitted transform and components on grids inside their domains.

    The transform is anchored at zero on the left edge of its domain; each
    component integrates to zero by construction.
    """
    spec = result.spec
    grid_v = np.asarray(grid_v, dtype=float).reshape(-1)
    integ = ExpSplineIntegrator(spec.basis0, grid_v, spec.quadrature_order)
    transform = integ.values(result.params.gamma0)

    if grids_w is None:
        grids_w = ()
    elif isinstance(grids_w, np.ndarray) and grids_w.ndim == 1 and len(spec.bases) == 1:
        grids_w = (grids_w,)
    grids_w = tuple(np.asarray(g, dtype=float).reshape(-1) for g in grids_w)
    if len(grids_w) != len(spec.bases):
        raise ShapeError(f"need {len(spec.bases)} component grids, got {len(grids_w)}")
    components = tuple(
        basis_design(spec.bases[j], grids_w[j]) @ spec.centered_maps[j].expand(result.params.reduced[j])
        for j in range(len(spec.bases))
    )
    return CurveEstimates(grid_v=grid_v, transform=transform, grids_w=grids_w, components=components)
