"""Independent reference implementations used only to check the package.

Everything here is deliberately written from first principles (textbook
recurrences, naive probability formulas, derivative-free optimization) so
the checks do not share a code path with the implementation under test.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize


def naive_bspline_value(knots, degree, i, x, right_edge) -> float:
    """Textbook Cox-de Boor recurrence, one basis function at one point.

    Intervals are half-open except at the right edge of the domain, where
    the last nonempty interval is treated as closed.
    """
    if degree == 0:
        if knots[i] <= x < knots[i + 1]:
            return 1.0
        if x == right_edge and knots[i] < knots[i + 1] == right_edge:
            return 1.0
        return 0.0
    total = 0.0
    if knots[i + degree] > knots[i]:
        total += (
            (x - knots[i])
            / (knots[i + degree] - knots[i])
            * naive_bspline_value(knots, degree - 1, i, x, right_edge)
        )
    if knots[i + degree + 1] > knots[i + 1]:
        total += (
            (knots[i + degree + 1] - x)
            / (knots[i + degree + 1] - knots[i + 1])
            * naive_bspline_value(knots, degree - 1, i + 1, x, right_edge)
        )
    return total


def naive_bspline_vector(basis, x) -> np.ndarray:
    return np.array(
        [
            naive_bspline_value(basis.knots, basis.degree, i, x, basis.domain[1])
            for i in range(basis.num_basis)
        ]
    )


def naive_cdf(family: str, s: float, shape: float | None = None) -> float:
    """Direct textbook CDF formulas, no stabilization."""
    import math

    if family == "extreme_value":
        return 1.0 - math.exp(-math.exp(s))
    if family == "logistic":
        return math.exp(s) / (1.0 + math.exp(s))
    if family == "pareto":
        return 1.0 - (1.0 + shape * math.exp(s)) ** (-1.0 / shape)
    if family == "probit":
        return 0.5 * (1.0 + math.erf(s / math.sqrt(2.0)))
    raise ValueError(family)


def naive_loglik(family: str, deltas, thetas, shape=None) -> float:
    """Direct sum of delta*log F + (1-delta)*log(1-F), unstable on purpose."""
    import math

    total = 0.0
    for d, t in zip(deltas, thetas):
        f = naive_cdf(family, float(t), shape)
        total += math.log(f) if d == 1 else math.log(1.0 - f)
    return total


def multistart_max_loglik(
    objective,
    dim: int,
    seed: int,
    n_starts: int = 200,
    spread: float = 2.0,
) -> float:
    """Best log-likelihood over random multistarts plus coordinate-grid refinement.

    Derivative-free throughout: coarse Nelder-Mead from every start, a tight
    polish of the best few, then shrinking coordinate-wise grid search.
    """
    rng = np.random.default_rng(seed)
    neg = lambda x: -objective(x)

    candidates = [np.zeros(dim)] + [rng.normal(0.0, spread, dim) for _ in range(n_starts - 1)]
    results = []
    for x0 in candidates:
        res = minimize(neg, x0, method="Nelder-Mead", options={"maxiter": 300, "xatol": 1e-4, "fatol": 1e-7})
        results.append(res)
    results.sort(key=lambda r: r.fun)

    best_val, best_x = np.inf, None
    for res in results[:5]:
        polished = minimize(
            neg,
            res.x,
            method="Nelder-Mead",
            options={"maxiter": 20000, "maxfev": 40000, "xatol": 1e-12, "fatol": 1e-13},
        )
        if polished.fun < best_val:
            best_val, best_x = polished.fun, polished.x

    # coordinate grid refinement around the polished optimum
    h = 1e-3
    while h > 1e-9:
        improved = False
        for i in range(dim):
            for direction in (+1.0, -1.0):
                trial = best_x.copy()
                trial[i] += direction * h
                val = neg(trial)
                if val < best_val:
                    best_val, best_x, improved = val, trial, True
        if not improved:
            h /= 4.0
    return -best_val
