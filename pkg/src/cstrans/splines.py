"""B-spline bases, integral-centered function spaces, and monotone transforms.

Three layers live here:

* clamped B-spline bases with domain-checked evaluation,
* the integral-centering map that turns a K-dimensional spline space into
  the (K-1)-dimensional subspace of functions integrating to zero, and
* monotone transforms of the form ``T(v) = integral of exp(spline)`` from
  the left edge of the domain, together with their coefficient gradients.

Everything is immutable after construction and safe to share across
threads or processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import BSpline
from scipy.linalg import null_space

from .errors import DomainError, InvalidKnotsError, ShapeError

__all__ = [
    "SplineBasis",
    "CenteredBasisMap",
    "MonotoneTransformSpec",
    "ExpSplineIntegrator",
    "make_basis",
    "basis_for_data",
    "eval_basis",
    "basis_design",
    "basis_integrals",
    "center_basis",
    "eval_centered",
    "integrate_exp_spline",
    "integrate_exp_spline_grad",
]

DEFAULT_QUADRATURE_ORDER = 15


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=float))
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SplineBasis:
    """A clamped B-spline basis on a closed interval.

    ``knots`` is the full knot vector with the boundary knots repeated
    ``degree + 1`` times; ``num_basis`` equals the number of interior knots
    plus ``degree + 1``.
    """

    degree: int
    knots: np.ndarray
    domain: tuple[float, float]
    num_basis: int

    @property
    def interior_knots(self) -> np.ndarray:
        return self.knots[self.degree + 1 : -(self.degree + 1)]

    @property
    def breakpoints(self) -> np.ndarray:
        """Distinct span edges: left boundary, interior knots, right boundary."""
        return np.concatenate(([self.domain[0]], self.interior_knots, [self.domain[1]]))

    def contains(self, t: np.ndarray | float) -> np.ndarray | bool:
        a, b = self.domain
        t = np.asarray(t)
        return (t >= a) & (t <= b)


def make_basis(degree: int, interior_knots, domain) -> SplineBasis:
    """Build a clamped B-spline basis of the given degree.

    Interior knots must be strictly increasing and strictly inside the
    domain; the boundary knots are repeated ``degree + 1`` times.
    """
    if degree < 0 or int(degree) != degree:
        raise InvalidKnotsError(f"degree must be a non-negative integer, got {degree}")
    degree = int(degree)
    a, b = float(domain[0]), float(domain[1])
    if not np.isfinite([a, b]).all() or a >= b:
        raise DomainError(f"domain must be a finite interval [a, b] with a < b, got [{a}, {b}]")
    interior = np.asarray(interior_knots, dtype=float).reshape(-1)
    if interior.size and not np.all(np.diff(interior) > 0):
        raise InvalidKnotsError(f"interior knots must be strictly increasing, got {interior.tolist()}")
    if interior.size and (interior[0] <= a or interior[-1] >= b):
        raise DomainError(
            f"interior knots must lie strictly inside ({a}, {b}), got {interior.tolist()}"
        )
    knots = np.concatenate((np.full(degree + 1, a), interior, np.full(degree + 1, b)))
    return SplineBasis(
        degree=degree,
        knots=_readonly(knots),
        domain=(a, b),
        num_basis=interior.size + degree + 1,
    )


def basis_for_data(values, degree: int, num_basis: int, placement: str = "equal") -> SplineBasis:
    """Basis sized to ``num_basis`` functions over the observed range of ``values``.

    ``placement`` is "equal" (equally spaced interior knots) or "quantile"
    (empirical quantiles of the data).
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size < 2:
        raise DomainError("need at least two values to determine a basis domain")
    a, b = float(values.min()), float(values.max())
    if a == b:
        raise DomainError("cannot build a basis on a degenerate (constant) variable")
    n_interior = num_basis - degree - 1
    if n_interior < 0:
        raise InvalidKnotsError(
            f"num_basis={num_basis} requires at least degree+1={degree + 1} basis functions"
        )
    if placement == "equal":
        interior = np.linspace(a, b, n_interior + 2)[1:-1]
    elif placement == "quantile":
        probs = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
        interior = np.quantile(values, probs)
        # ties in heavily duplicated data would produce coincident knots
        interior = np.unique(interior)
        interior = interior[(interior > a) & (interior < b)]
    else:
        raise ValueError(f"unknown knot placement {placement!r}")
    return make_basis(degree, interior, (a, b))


def _check_in_domain(basis: SplineBasis, t: np.ndarray, what: str = "t") -> None:
    a, b = basis.domain
    bad = (t < a) | (t > b) | ~np.isfinite(t)
    if np.any(bad):
        offender = float(np.asarray(t).reshape(-1)[np.flatnonzero(np.asarray(bad).reshape(-1))[0]])
        raise DomainError(f"{what}={offender} outside basis domain [{a}, {b}]")


def basis_design(basis: SplineBasis, t) -> np.ndarray:
    """Design matrix ``(len(t), num_basis)`` of basis values; refuses extrapolation."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    _check_in_domain(basis, t)
    return BSpline.design_matrix(t, basis.knots, basis.degree, extrapolate=False).toarray()


def eval_basis(basis: SplineBasis, t: float) -> np.ndarray:
    """Values of all basis functions at a single point, as a K-vector."""
    return basis_design(basis, float(t))[0]


def basis_integrals(basis: SplineBasis) -> np.ndarray:
    """Integral of each basis function over the domain.

    For a clamped knot vector the integral of the k-th function over its
    support (contained in the domain) is ``(t[k+d+1] - t[k]) / (d + 1)``.
    """
    p = basis.degree
    t = basis.knots
    return (t[p + 1 :] - t[: -(p + 1)]) / (p + 1)


@dataclass(frozen=True)
class CenteredBasisMap:
    """Rank-reduction realizing the integrate-to-zero constraint.

    ``reduction`` is a ``(K, K-1)`` matrix with orthonormal columns spanning
    the null space of the integral functional, so any reduced coefficient
    vector maps to a full coefficient vector whose spline integrates to
    zero over the domain.
    """

    source: SplineBasis
    integral_weights: np.ndarray
    reduction: np.ndarray

    @property
    def reduced_dim(self) -> int:
        return self.source.num_basis - 1

    def expand(self, reduced_coef: np.ndarray) -> np.ndarray:
        reduced_coef = np.asarray(reduced_coef, dtype=float)
        if reduced_coef.shape != (self.reduced_dim,):
            raise ShapeError(
                f"reduced coefficient vector must have shape ({self.reduced_dim},), "
                f"got {reduced_coef.shape}"
            )
        return self.reduction @ reduced_coef


def center_basis(basis: SplineBasis) -> CenteredBasisMap:
    weights = basis_integrals(basis)
    reduction = null_space(weights.reshape(1, -1))
    return CenteredBasisMap(
        source=basis,
        integral_weights=_readonly(weights),
        reduction=_readonly(reduction),
    )


def eval_centered(cmap: CenteredBasisMap, reduced_coef, t):
    """Evaluate the centered spline with the given reduced coefficients."""
    full = cmap.expand(np.asarray(reduced_coef, dtype=float))
    design = basis_design(cmap.source, t)
    values = design @ full
    return float(values[0]) if np.isscalar(t) or np.ndim(t) == 0 else values


class ExpSplineIntegrator:
    """Per-span Gauss-Legendre quadrature of ``exp(spline)`` from the left edge.

    Built once per (basis, upper-limit array, order); the coefficient vector
    can then change freely. One flat node array serves all upper limits,
    with ``segment_ids`` mapping nodes back to their upper-limit index, so
    reductions are plain ``bincount`` calls and bitwise deterministic.
    """

    def __init__(self, basis: SplineBasis, upper_limits, order: int = DEFAULT_QUADRATURE_ORDER):
        if order < 1:
            raise ValueError("quadrature order must be at least 1")
        upper = np.atleast_1d(np.asarray(upper_limits, dtype=float))
        _check_in_domain(basis, upper, what="upper limit")
        self.basis = basis
        self.order = int(order)
        self.upper_limits = _readonly(upper)
        self.n_targets = upper.size

        ref_nodes, ref_weights = leggauss(self.order)
        edges = basis.breakpoints
        starts = edges[:-1]
        ends = edges[1:]

        # segment m covers [starts[s], min(ends[s], upper_m)] for spans with
        # starts[s] < upper_m; an upper limit at the left edge yields no nodes
        nodes, weights, seg_ids = [], [], []
        for m, v in enumerate(upper):
            active = starts < v
            if not np.any(active):
                continue
            lo = starts[active]
            hi = np.minimum(ends[active], v)
            mid = 0.5 * (lo + hi)
            half = 0.5 * (hi - lo)
            nodes.append((mid[:, None] + half[:, None] * ref_nodes).ravel())
            weights.append((half[:, None] * ref_weights).ravel())
            seg_ids.append(np.full(lo.size * self.order, m, dtype=np.intp))
        if nodes:
            self.nodes = _readonly(np.concatenate(nodes))
            self.weights = _readonly(np.concatenate(weights))
            self.segment_ids = np.concatenate(seg_ids)
            self.node_design = _readonly(basis_design(basis, self.nodes))
        else:
            self.nodes = _readonly(np.empty(0))
            self.weights = _readonly(np.empty(0))
            self.segment_ids = np.empty(0, dtype=np.intp)
            self.node_design = _readonly(np.empty((0, basis.num_basis)))
        self.segment_ids.flags.writeable = False

    def _node_products(self, coefs: np.ndarray) -> np.ndarray:
        coefs = np.asarray(coefs, dtype=float)
        if coefs.shape != (self.basis.num_basis,):
            raise ShapeError(
                f"coefficient vector must have shape ({self.basis.num_basis},), got {coefs.shape}"
            )
        log_slope = self.node_design @ coefs
        # cap keeps integrals finite when a line-search iterate overshoots
        return self.weights * np.exp(np.minimum(log_slope, 700.0))

    def values(self, coefs) -> np.ndarray:
        """Integral values for every upper limit."""
        return np.bincount(self.segment_ids, weights=self._node_products(coefs), minlength=self.n_targets)

    def values_and_gradients(self, coefs) -> tuple[np.ndarray, np.ndarray]:
        """Integrals plus their gradients w.r.t. the coefficient vector."""
        prods = self._node_products(coefs)
        vals = np.bincount(self.segment_ids, weights=prods, minlength=self.n_targets)
        grads = np.empty((self.n_targets, self.basis.num_basis))
        for k in range(self.basis.num_basis):
            grads[:, k] = np.bincount(
                self.segment_ids, weights=prods * self.node_design[:, k], minlength=self.n_targets
            )
        return vals, grads

    def weighted_curvature(self, coefs, target_weights) -> np.ndarray:
        """``sum_m target_weights[m] * integral of B B' exp(spline)`` up to each limit."""
        prods = self._node_products(coefs)
        target_weights = np.asarray(target_weights, dtype=float)
        if target_weights.shape != (self.n_targets,):
            raise ShapeError(
                f"target weights must have shape ({self.n_targets},), got {target_weights.shape}"
            )
        scale = prods * target_weights[self.segment_ids]
        return (self.node_design * scale[:, None]).T @ self.node_design


@dataclass(frozen=True)
class MonotoneTransformSpec:
    """Strictly increasing transform ``T(v) = integral_a^v exp(spline)``.

    ``log_slope_coefs`` parametrize the log of the derivative, so any finite
    coefficient vector yields a strictly increasing transform vanishing at
    the left edge of the basis domain.
    """

    basis: SplineBasis
    log_slope_coefs: np.ndarray
    quadrature_order: int = DEFAULT_QUADRATURE_ORDER

    def __post_init__(self):
        coefs = np.asarray(self.log_slope_coefs, dtype=float)
        if coefs.shape != (self.basis.num_basis,):
            raise ShapeError(
                f"log-slope coefficients must have shape ({self.basis.num_basis},), got {coefs.shape}"
            )
        object.__setattr__(self, "log_slope_coefs", _readonly(coefs))


def integrate_exp_spline(spec: MonotoneTransformSpec, v) -> float | np.ndarray:
    """Transform value(s) at ``v``; exactly 0 at the left domain edge."""
    integ = ExpSplineIntegrator(spec.basis, v, spec.quadrature_order)
    vals = integ.values(spec.log_slope_coefs)
    return float(vals[0]) if np.ndim(v) == 0 else vals


def integrate_exp_spline_grad(spec: MonotoneTransformSpec, v) -> np.ndarray:
    """Gradient of the transform at ``v`` w.r.t. the log-slope coefficients."""
    integ = ExpSplineIntegrator(spec.basis, v, spec.quadrature_order)
    _, grads = integ.values_and_gradients(spec.log_slope_coefs)
    return grads[0] if np.ndim(v) == 0 else grads
