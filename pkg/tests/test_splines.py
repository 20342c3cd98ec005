import numpy as np
import pytest
from scipy.interpolate import BSpline

from cstrans import (
    DomainError,
    InvalidKnotsError,
    MonotoneTransformSpec,
    ShapeError,
    basis_integrals,
    center_basis,
    eval_basis,
    eval_centered,
    integrate_exp_spline,
    integrate_exp_spline_grad,
    make_basis,
)
from cstrans.splines import basis_design

from oracles import naive_bspline_vector


def quadratic_basis():
    return make_basis(2, [0.25, 0.5, 0.75], (0.0, 1.0))


class TestMakeBasis:
    def test_degree_zero_is_indicator(self):
        basis = make_basis(0, [], (0.0, 1.0))
        assert basis.num_basis == 1
        for t in (0.0, 0.3, 1.0):
            assert eval_basis(basis, t) == pytest.approx([1.0])

    def test_num_basis_counts_interior_plus_degree_plus_one(self):
        assert quadratic_basis().num_basis == 6

    def test_clamped_knot_vector(self):
        basis = quadratic_basis()
        assert list(basis.knots[:3]) == [0.0, 0.0, 0.0]
        assert list(basis.knots[-3:]) == [1.0, 1.0, 1.0]
        assert list(basis.interior_knots) == [0.25, 0.5, 0.75]

    def test_non_monotone_interior_knots_rejected(self):
        with pytest.raises(InvalidKnotsError):
            make_basis(2, [0.5, 0.25], (0.0, 1.0))

    def test_interior_knot_on_boundary_rejected(self):
        with pytest.raises(DomainError):
            make_basis(2, [0.0, 0.5], (0.0, 1.0))
        with pytest.raises(DomainError):
            make_basis(1, [1.5], (0.0, 1.0))

    def test_negative_degree_rejected(self):
        with pytest.raises(InvalidKnotsError):
            make_basis(-1, [], (0.0, 1.0))


class TestEvalBasis:
    def test_partition_of_unity_random_points(self):
        rng = np.random.default_rng(1)
        for basis in (quadratic_basis(), make_basis(3, [0.2, 0.9], (-1.0, 2.0))):
            t = rng.uniform(*basis.domain, 1000)
            sums = basis_design(basis, t).sum(axis=1)
            assert np.max(np.abs(sums - 1.0)) < 1e-12

    def test_hat_function_peaks_at_its_knot(self):
        basis = make_basis(1, [0.5], (0.0, 1.0))
        assert eval_basis(basis, 0.5) == pytest.approx([0.0, 1.0, 0.0], abs=1e-15)

    def test_quadratic_values_match_recurrence_oracle(self):
        # frozen values computed from the direct Cox-de Boor recurrence:
        # exact rationals 9/25, 14/25, 2/25 on the first span
        basis = quadratic_basis()
        assert eval_basis(basis, 0.1) == pytest.approx(
            [0.36, 0.56, 0.08, 0.0, 0.0, 0.0], abs=1e-14
        )

    def test_matches_recurrence_oracle_on_random_bases(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            degree = int(rng.integers(0, 4))
            n_interior = int(rng.integers(0, 4))
            a, b = -0.5, 1.7
            interior = np.sort(rng.uniform(a + 0.05, b - 0.05, n_interior))
            if len(np.unique(interior)) != n_interior:
                continue
            basis = make_basis(degree, interior, (a, b))
            for t in np.concatenate([rng.uniform(a, b, 6), [a, b]]):
                assert eval_basis(basis, t) == pytest.approx(
                    naive_bspline_vector(basis, t), abs=1e-12
                )

    def test_values_non_negative(self):
        basis = quadratic_basis()
        t = np.linspace(0, 1, 301)
        assert basis_design(basis, t).min() >= 0.0

    def test_out_of_domain_refused(self):
        basis = quadratic_basis()
        with pytest.raises(DomainError):
            eval_basis(basis, 1.0000001)
        with pytest.raises(DomainError):
            eval_basis(basis, -0.2)


class TestBasisIntegrals:
    def test_integrals_match_quadrature(self):
        basis = make_basis(2, [0.3, 0.4, 0.9], (0.0, 1.3))
        t = np.linspace(*basis.domain, 20001)
        numeric = np.trapezoid(basis_design(basis, t), t, axis=0)
        assert basis_integrals(basis) == pytest.approx(numeric, rel=1e-7)

    def test_integrals_sum_to_domain_length(self):
        basis = make_basis(3, [0.5, 1.5], (-1.0, 2.0))
        assert basis_integrals(basis).sum() == pytest.approx(3.0, abs=1e-12)


class TestCenteredBasis:
    def test_reduction_is_null_space_of_integral_weights(self):
        cmap = center_basis(quadratic_basis())
        assert cmap.reduction.shape == (6, 5)
        assert np.abs(cmap.integral_weights @ cmap.reduction).max() < 1e-12
        assert np.linalg.matrix_rank(cmap.reduction) == 5

    def test_zero_coefficients_give_zero_function(self):
        cmap = center_basis(quadratic_basis())
        t = np.linspace(0, 1, 11)
        assert np.all(eval_centered(cmap, np.zeros(5), t) == 0.0)

    def test_centered_function_integrates_to_zero(self):
        # per-span Gauss-Legendre of matching order integrates the piecewise
        # polynomial exactly, so this really checks the constraint
        from numpy.polynomial.legendre import leggauss

        rng = np.random.default_rng(3)
        basis = make_basis(2, [0.4, 1.1], (0.0, 2.0))
        cmap = center_basis(basis)
        nodes, weights = leggauss(4)
        edges = basis.breakpoints
        for _ in range(10):
            reduced = rng.normal(size=cmap.reduced_dim)
            integral = 0.0
            for lo, hi in zip(edges[:-1], edges[1:]):
                x = 0.5 * (lo + hi) + 0.5 * (hi - lo) * nodes
                integral += 0.5 * (hi - lo) * float(weights @ eval_centered(cmap, reduced, x))
            assert abs(integral) < 1e-10

    def test_matches_hand_centered_combination(self):
        # center an arbitrary coefficient vector by subtracting c'gamma / c'1
        basis = quadratic_basis()
        cmap = center_basis(basis)
        rng = np.random.default_rng(11)
        gamma = rng.normal(size=basis.num_basis)
        c = basis_integrals(basis)
        gamma_centered = gamma - (c @ gamma) / c.sum() * np.ones(basis.num_basis)
        reduced = cmap.reduction.T @ gamma_centered
        for t in rng.uniform(0, 1, 20):
            expected = gamma_centered @ eval_basis(basis, t)
            assert eval_centered(cmap, reduced, float(t)) == pytest.approx(expected, abs=1e-12)

    def test_dimension_mismatch_rejected(self):
        cmap = center_basis(quadratic_basis())
        with pytest.raises(ShapeError):
            eval_centered(cmap, np.zeros(4), 0.5)


class TestIntegrateExpSpline:
    def test_zero_at_left_edge_exactly(self):
        spec = MonotoneTransformSpec(quadratic_basis(), np.full(6, 0.7))
        assert integrate_exp_spline(spec, 0.0) == 0.0

    def test_zero_coefficients_give_identity_shift(self):
        spec = MonotoneTransformSpec(quadratic_basis(), np.zeros(6))
        for v in (0.1, 0.25, 0.8, 1.0):
            assert integrate_exp_spline(spec, v) == pytest.approx(v, abs=1e-14)

    def test_linear_spline_closed_form(self):
        # degree-1, no interior knots: log-slope goes linearly from a to b,
        # so the integral is (e^b - e^a) / (b - a) over a unit domain
        basis = make_basis(1, [], (0.0, 1.0))
        for a, b in [(-0.3, 1.2), (0.5, 0.5001), (2.0, -1.0)]:
            spec = MonotoneTransformSpec(basis, np.array([a, b]))
            expected = (np.exp(b) - np.exp(a)) / (b - a)
            assert integrate_exp_spline(spec, 1.0) == pytest.approx(expected, rel=1e-10)

    def test_strictly_increasing(self):
        rng = np.random.default_rng(17)
        basis = make_basis(2, [0.6, 1.0], (0.2, 1.8))
        for _ in range(5):
            spec = MonotoneTransformSpec(basis, rng.normal(0, 2, basis.num_basis))
            grid = np.sort(rng.uniform(0.2, 1.8, 50))
            values = np.array([integrate_exp_spline(spec, v) for v in grid])
            assert np.all(np.diff(values) > 0)

    def test_quadrature_order_doubling_is_stable(self):
        from cstrans.splines import DEFAULT_QUADRATURE_ORDER as order

        rng = np.random.default_rng(23)
        basis = make_basis(2, [0.5, 1.0, 1.4], (0.2, 1.8))
        for _ in range(20):
            coefs = rng.normal(0, 1.5, basis.num_basis)
            for v in (0.37, 0.9, 1.8):
                lo = integrate_exp_spline(MonotoneTransformSpec(basis, coefs, order), v)
                hi = integrate_exp_spline(MonotoneTransformSpec(basis, coefs, 2 * order), v)
                assert abs(hi - lo) < 1e-9 * abs(hi)

    def test_out_of_domain_refused(self):
        spec = MonotoneTransformSpec(quadratic_basis(), np.zeros(6))
        with pytest.raises(DomainError):
            integrate_exp_spline(spec, 1.2)


class TestIntegrateExpSplineGrad:
    def test_zero_vector_at_left_edge(self):
        spec = MonotoneTransformSpec(quadratic_basis(), np.ones(6))
        assert np.all(integrate_exp_spline_grad(spec, 0.0) == 0.0)

    def test_zero_coefficients_reduce_to_basis_integrals(self):
        # with a flat log-slope the k-th gradient entry is the plain integral
        # of basis function k up to v; scipy's antiderivative is the oracle
        basis = make_basis(2, [0.4, 0.8], (0.0, 1.2))
        spec = MonotoneTransformSpec(basis, np.zeros(basis.num_basis))
        for v in (0.15, 0.4, 0.77, 1.2):
            grad = integrate_exp_spline_grad(spec, v)
            for k in range(basis.num_basis):
                coefs = np.zeros(basis.num_basis)
                coefs[k] = 1.0
                expected = BSpline(basis.knots, coefs, basis.degree).integrate(0.0, v)
                assert grad[k] == pytest.approx(float(expected), abs=1e-12)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(29)
        basis = make_basis(2, [0.7, 1.1], (0.2, 1.8))
        step = 1e-5
        for _ in range(5):
            coefs = rng.normal(0, 1, basis.num_basis)
            v = float(rng.uniform(0.4, 1.8))
            grad = integrate_exp_spline_grad(MonotoneTransformSpec(basis, coefs), v)
            for k in range(basis.num_basis):
                up, dn = coefs.copy(), coefs.copy()
                up[k] += step
                dn[k] -= step
                fd = (
                    integrate_exp_spline(MonotoneTransformSpec(basis, up), v)
                    - integrate_exp_spline(MonotoneTransformSpec(basis, dn), v)
                ) / (2 * step)
                assert grad[k] == pytest.approx(fd, rel=1e-6, abs=1e-9)

    def test_coefficient_shape_checked(self):
        with pytest.raises(ShapeError):
            MonotoneTransformSpec(quadratic_basis(), np.zeros(5))
