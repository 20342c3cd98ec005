"""Model assembly: linear predictor, log-likelihood, score, and Hessian.

The model for one record (v, delta, z, w) is

    P(delta = 1 | z, w, v) = F(beta'z + T(v) + sum_j h_j(w_j))

with T a monotone exp-spline transform anchored at zero on the left edge of
the examination-time domain, and each h_j a spline constrained to integrate
to zero. Everything is parametrized by the free vector

    x = (beta, log-slope coefficients, reduced coefficients of each h_j)

so the optimization is unconstrained. ``LikelihoodEvaluator`` precomputes
all data-dependent designs once and caches the pieces shared between
log-likelihood, score, and Hessian at a common evaluation point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataError, DomainError, ShapeError
from .links import LinkFamily, bernoulli_loglik_parts
from .splines import (
    CenteredBasisMap,
    ExpSplineIntegrator,
    MonotoneTransformSpec,
    SplineBasis,
    basis_design,
    center_basis,
    eval_centered,
    integrate_exp_spline,
)

__all__ = [
    "Observation",
    "Dataset",
    "ModelSpec",
    "ParamLayout",
    "ParameterVector",
    "LikelihoodEvaluator",
    "as_dataset",
    "theta",
    "loglik",
    "score",
    "hessian",
]


@dataclass(frozen=True)
class Observation:
    """One current-status record: examination time, status, covariates."""

    v: float
    delta: int
    z: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z, dtype=float))
        w = np.atleast_1d(np.asarray(self.w, dtype=float)) if self.w is not None else np.empty(0)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", w)
        if self.delta not in (0, 1):
            raise ValueError(f"delta must be 0 or 1, got {self.delta}")
        if z.size == 0 or z[0] != 1.0:
            raise ValueError("first linear covariate must be the intercept constant 1")


class Dataset:
    """Column-oriented dataset; the logical content is a list of Observations.

    Rows are stored in a canonical lexicographic order (by v, delta, w, z) so
    that any permutation of the same records reduces to bitwise-identical
    arrays, making every downstream fit reproducible under shuffling.
    """

    __slots__ = ("v", "delta", "z", "w")

    def __init__(self, v, delta, z, w=None, *, canonicalize: bool = True):
        v = np.ascontiguousarray(v, dtype=float).reshape(-1)
        n = v.size
        delta = np.ascontiguousarray(delta, dtype=np.int64).reshape(-1)
        z = np.ascontiguousarray(z, dtype=float)
        if z.ndim == 1:
            z = z.reshape(n, -1)
        if w is None:
            w = np.empty((n, 0))
        w = np.ascontiguousarray(w, dtype=float)
        if w.ndim == 1:
            w = w.reshape(n, -1) if w.size == n else w.reshape(n, 0)

        if n == 0:
            raise DegenerateDataError("dataset is empty")
        if delta.shape != (n,) or z.shape[0] != n or w.shape[0] != n:
            raise ShapeError(
                f"inconsistent row counts: v {n}, delta {delta.shape}, z {z.shape}, w {w.shape}"
            )
        if not np.isfinite(v).all() or not np.isfinite(z).all() or not np.isfinite(w).all():
            raise ValueError("dataset contains non-finite values")
        bad = ~np.isin(delta, (0, 1))
        if bad.any():
            raise ValueError(f"delta must be 0/1; offending value {delta[bad][0]}")
        if z.shape[1] == 0 or not np.all(z[:, 0] == 1.0):
            raise ValueError("first linear covariate column must be the intercept constant 1")

        if canonicalize and n > 1:
            keys = tuple(z[:, k] for k in range(z.shape[1] - 1, -1, -1))
            keys += tuple(w[:, k] for k in range(w.shape[1] - 1, -1, -1))
            keys += (delta.astype(float), v)
            order = np.lexsort(keys)
            v, delta, z, w = v[order], delta[order], z[order], w[order]

        self.v = v
        self.delta = delta
        self.z = z
        self.w = w
        for a in (self.v, self.delta, self.z, self.w):
            a.flags.writeable = False

    @classmethod
    def from_observations(cls, observations) -> "Dataset":
        obs = list(observations)
        if not obs:
            raise DegenerateDataError("dataset is empty")
        return cls(
            v=[o.v for o in obs],
            delta=[o.delta for o in obs],
            z=np.vstack([o.z for o in obs]),
            w=np.vstack([o.w for o in obs]) if obs[0].w.size else None,
        )

    @property
    def n_linear(self) -> int:
        return self.z.shape[1]

    @property
    def n_components(self) -> int:
        return self.w.shape[1]

    def __len__(self) -> int:
        return self.v.size

    def __getitem__(self, i: int) -> Observation:
        return Observation(float(self.v[i]), int(self.delta[i]), self.z[i].copy(), self.w[i].copy())

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def as_dataset(data) -> Dataset:
    if isinstance(data, Dataset):
        return data
    return Dataset.from_observations(data)


@dataclass(frozen=True)
class ModelSpec:
    """Link plus the spline bases for the transform and each additive component."""

    link: LinkFamily
    basis0: SplineBasis
    bases: tuple[SplineBasis, ...] = ()
    quadrature_order: int = 15
    centered_maps: tuple[CenteredBasisMap, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "bases", tuple(self.bases))
        object.__setattr__(self, "centered_maps", tuple(center_basis(b) for b in self.bases))

    @property
    def basis_sizes(self) -> tuple[int, ...]:
        """(K_0, K_1, ..., K_d): basis dimension of the transform and each component."""
        return (self.basis0.num_basis,) + tuple(b.num_basis for b in self.bases)

    def layout(self, n_linear: int) -> "ParamLayout":
        return ParamLayout(
            n_linear=n_linear,
            n_transform=self.basis0.num_basis,
            reduced_dims=tuple(b.num_basis - 1 for b in self.bases),
        )


@dataclass(frozen=True)
class ParamLayout:
    """Index bookkeeping for the packed free-parameter vector."""

    n_linear: int
    n_transform: int
    reduced_dims: tuple[int, ...]

    @property
    def free_dim(self) -> int:
        return self.n_linear + self.n_transform + sum(self.reduced_dims)

    @property
    def linear_slice(self) -> slice:
        return slice(0, self.n_linear)

    @property
    def transform_slice(self) -> slice:
        return slice(self.n_linear, self.n_linear + self.n_transform)

    def component_slice(self, j: int) -> slice:
        start = self.n_linear + self.n_transform + sum(self.reduced_dims[:j])
        return slice(start, start + self.reduced_dims[j])

    def pack(self, params: "ParameterVector") -> np.ndarray:
        parts = [params.beta, params.gamma0, *params.reduced]
        x = np.concatenate([np.asarray(p, dtype=float).reshape(-1) for p in parts]) if parts else np.empty(0)
        if x.size != self.free_dim:
            raise ShapeError(f"packed parameters have length {x.size}, layout expects {self.free_dim}")
        return x

    def unpack(self, x: np.ndarray) -> "ParameterVector":
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.free_dim:
            raise ShapeError(f"parameter vector has length {x.size}, layout expects {self.free_dim}")
        return ParameterVector(
            beta=x[self.linear_slice].copy(),
            gamma0=x[self.transform_slice].copy(),
            reduced=tuple(x[self.component_slice(j)].copy() for j in range(len(self.reduced_dims))),
        )


@dataclass(frozen=True)
class ParameterVector:
    """(beta, transform log-slope coefficients, reduced component coefficients)."""

    beta: np.ndarray
    gamma0: np.ndarray
    reduced: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).reshape(-1))
        object.__setattr__(self, "gamma0", np.asarray(self.gamma0, dtype=float).reshape(-1))
        object.__setattr__(
            self, "reduced", tuple(np.asarray(r, dtype=float).reshape(-1) for r in self.reduced)
        )


def _domain_check(spec: ModelSpec, data: Dataset) -> None:
    a, b = spec.basis0.domain
    bad = (data.v < a) | (data.v > b)
    if bad.any():
        raise DomainError(f"v={data.v[bad][0]} outside the transform domain [{a}, {b}]")
    if data.n_components != len(spec.bases):
        raise ShapeError(
            f"data has {data.n_components} additive covariates, model expects {len(spec.bases)}"
        )
    for j, basis in enumerate(spec.bases):
        a, b = basis.domain
        col = data.w[:, j]
        bad = (col < a) | (col > b)
        if bad.any():
            raise DomainError(f"w[{j}]={col[bad][0]} outside its basis domain [{a}, {b}]")


class LikelihoodEvaluator:
    """Shared evaluation bundle for loglik/score/hessian at a common point.

    Construction precomputes every data-dependent design (component design
    matrices mapped through the centering reduction, and the quadrature
    layout for the transform); per-point quantities are cached keyed on the
    parameter bytes so a score call after a loglik call at the same point
    reuses the linear predictor.
    """

    def __init__(self, spec: ModelSpec, data):
        data = as_dataset(data)
        _domain_check(spec, data)
        if data.delta.min() == data.delta.max():
            raise DegenerateDataError(
                "all status indicators are equal; the likelihood has no interior maximum"
            )
        self.spec = spec
        self.data = data
        self.layout = spec.layout(data.n_linear)
        self._integ = ExpSplineIntegrator(spec.basis0, data.v, spec.quadrature_order)
        self._component_design = tuple(
            basis_design(basis, data.w[:, j]) @ spec.centered_maps[j].reduction
            for j, basis in enumerate(spec.bases)
        )
        self._fixed_theta_designs = (
            np.hstack(self._component_design) if self._component_design else np.empty((len(data), 0))
        )
        self._cache_key: bytes | None = None
        self._cache: dict | None = None

    @property
    def free_dim(self) -> int:
        return self.layout.free_dim

    def _components(self, x: np.ndarray, need_grad: bool) -> dict:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.layout.free_dim:
            raise ShapeError(f"parameter vector has length {x.size}, expected {self.layout.free_dim}")
        key = x.tobytes()
        if self._cache_key == key and (not need_grad or "design" in self._cache):
            return self._cache

        lay = self.layout
        beta = x[lay.linear_slice]
        gamma0 = x[lay.transform_slice]
        if need_grad:
            transform, transform_grad = self._integ.values_and_gradients(gamma0)
        else:
            transform, transform_grad = self._integ.values(gamma0), None

        theta_vals = self.data.z @ beta + transform
        if self._fixed_theta_designs.shape[1]:
            theta_vals = theta_vals + self._fixed_theta_designs @ x[lay.n_linear + lay.n_transform :]
        q, qd, qdd = bernoulli_loglik_parts(self.spec.link, self.data.delta, theta_vals)

        bundle = {
            "x": x.copy(),
            "gamma0": gamma0.copy(),
            "theta": theta_vals,
            "q": q,
            "qd": qd,
            "qdd": qdd,
        }
        if need_grad:
            design = np.empty((len(self.data), lay.free_dim))
            design[:, lay.linear_slice] = self.data.z
            design[:, lay.transform_slice] = transform_grad
            design[:, lay.n_linear + lay.n_transform :] = self._fixed_theta_designs
            bundle["design"] = design
        self._cache_key, self._cache = key, bundle
        return bundle

    def theta_values(self, x) -> np.ndarray:
        return self._components(np.asarray(x), need_grad=False)["theta"]

    def loglik(self, x) -> float:
        return float(np.sum(self._components(np.asarray(x), need_grad=False)["q"]))

    def score(self, x) -> np.ndarray:
        c = self._components(np.asarray(x), need_grad=True)
        return c["design"].T @ c["qd"]

    def per_observation_scores(self, x) -> np.ndarray:
        """(n, free_dim) matrix of per-record score contributions."""
        c = self._components(np.asarray(x), need_grad=True)
        return c["design"] * c["qd"][:, None]

    def hessian(self, x) -> np.ndarray:
        c = self._components(np.asarray(x), need_grad=True)
        design = c["design"]
        h = design.T @ (design * c["qdd"][:, None])
        ts = self.layout.transform_slice
        h[ts, ts] += self._integ.weighted_curvature(c["gamma0"], c["qd"])
        return 0.5 * (h + h.T)

    def loglik_score_hessian(self, x) -> tuple[float, np.ndarray, np.ndarray]:
        return self.loglik(x), self.score(x), self.hessian(x)


def theta(spec: ModelSpec, params: ParameterVector, obs: Observation) -> float:
    """Linear predictor beta'z + T(v) + sum_j h_j(w_j) for one record."""
    a, b = spec.basis0.domain
    if not a <= obs.v <= b:
        raise DomainError(f"v={obs.v} outside the transform domain [{a}, {b}]")
    if obs.w.size != len(spec.bases):
        raise ShapeError(f"record has {obs.w.size} additive covariates, model expects {len(spec.bases)}")
    if obs.z.size != params.beta.size:
        raise ShapeError(f"record has {obs.z.size} linear covariates, beta has {params.beta.size}")
    total = float(obs.z @ params.beta)
    transform = MonotoneTransformSpec(spec.basis0, params.gamma0, spec.quadrature_order)
    total += integrate_exp_spline(transform, float(obs.v))
    for j, basis in enumerate(spec.bases):
        lo, hi = basis.domain
        if not lo <= obs.w[j] <= hi:
            raise DomainError(f"w[{j}]={obs.w[j]} outside its basis domain [{lo}, {hi}]")
        total += eval_centered(spec.centered_maps[j], params.reduced[j], float(obs.w[j]))
    return total


def _pack_for(spec: ModelSpec, params: ParameterVector, data: Dataset) -> np.ndarray:
    return spec.layout(data.n_linear).pack(params)


def loglik(spec: ModelSpec, params: ParameterVector, data) -> float:
    data = as_dataset(data)
    ev = LikelihoodEvaluator(spec, data)
    return ev.loglik(_pack_for(spec, params, data))


def score(spec: ModelSpec, params: ParameterVector, data) -> np.ndarray:
    data = as_dataset(data)
    ev = LikelihoodEvaluator(spec, data)
    return ev.score(_pack_for(spec, params, data))


def hessian(spec: ModelSpec, params: ParameterVector, data) -> np.ndarray:
    data = as_dataset(data)
    ev = LikelihoodEvaluator(spec, data)
    return ev.hessian(_pack_for(spec, params, data))
