import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from daecol.numkit import (
    MAX_GAUSS_ORDER,
    NodeFamily,
    NodeSet,
    RankDeficientError,
    gauss_legendre_rule,
    lagrange_eval,
    lagrange_gram,
    lstsq_detailed,
    make_nodes,
    min_singular_value,
    solve_lls,
)


class TestGaussRule:
    def test_one_point_is_midpoint(self):
        rule = gauss_legendre_rule(1)
        np.testing.assert_allclose(rule.nodes, [0.5], atol=1e-15)
        np.testing.assert_allclose(rule.weights, [1.0], atol=1e-15)

    def test_two_points(self):
        rule = gauss_legendre_rule(2)
        d = 1 / (2 * np.sqrt(3))
        np.testing.assert_allclose(rule.nodes, [0.5 - d, 0.5 + d], atol=1e-15)
        np.testing.assert_allclose(rule.weights, [0.5, 0.5], atol=1e-15)

    def test_three_points(self):
        rule = gauss_legendre_rule(3)
        d = np.sqrt(0.6) / 2
        np.testing.assert_allclose(rule.nodes, [0.5 - d, 0.5, 0.5 + d], atol=1e-15)
        np.testing.assert_allclose(rule.weights, [5 / 18, 4 / 9, 5 / 18], atol=1e-15)

    @pytest.mark.parametrize("order", [1, 2, 5, 17, 40, MAX_GAUSS_ORDER])
    def test_against_numpy_leggauss(self, order):
        x, w = np.polynomial.legendre.leggauss(order)
        rule = gauss_legendre_rule(order)
        np.testing.assert_allclose(rule.nodes, 0.5 * (x + 1), atol=1e-14)
        np.testing.assert_allclose(rule.weights, 0.5 * w, atol=1e-14)

    @pytest.mark.parametrize("order", range(1, 21))
    def test_invariants(self, order):
        rule = gauss_legendre_rule(order)
        assert np.all(np.diff(rule.nodes) > 0)
        assert rule.nodes[0] > 0 and rule.nodes[-1] < 1
        assert abs(rule.weights.sum() - 1.0) <= 1e-14
        for p in range(2 * order):
            assert abs(rule.integrate(rule.nodes**p) * (p + 1) - 1.0) <= 1e-12

    @pytest.mark.parametrize("order", [0, -1, MAX_GAUSS_ORDER + 1])
    def test_rejects_bad_order(self, order):
        with pytest.raises(ValueError):
            gauss_legendre_rule(order)


class TestNodes:
    def test_uniform_three(self):
        np.testing.assert_allclose(make_nodes(3, "uniform").taus, [0.25, 0.5, 0.75])

    def test_gauss_two(self):
        np.testing.assert_allclose(make_nodes(2, "gauss").taus, [0.211324865, 0.788675135], atol=1e-9)

    def test_uniform_one(self):
        np.testing.assert_allclose(make_nodes(1, NodeFamily.UNIFORM).taus, [0.5])

    @pytest.mark.parametrize("taus", [[0.0, 0.5], [0.5, 1.0], [0.6, 0.4], [0.3, 0.3], []])
    def test_nodeset_validation(self, taus):
        with pytest.raises(ValueError):
            NodeSet(np.array(taus), NodeFamily.UNIFORM)


class TestLagrange:
    def test_cardinal(self):
        np.testing.assert_allclose(lagrange_eval(make_nodes(3, "uniform"), 0.5), [0, 1, 0], atol=1e-15)

    def test_hand_values(self):
        np.testing.assert_allclose(lagrange_eval(np.array([1 / 3, 2 / 3]), 0.0), [2, -1], atol=1e-14)

    def test_derivative_hand_values(self):
        np.testing.assert_allclose(lagrange_eval(np.array([1 / 3, 2 / 3]), 0.3, derivative=True),
                                   [-3, 3], atol=1e-13)

    def test_derivative_against_finite_differences(self):
        nodes = make_nodes(5, "gauss")
        t = np.linspace(0.05, 0.95, 7)
        eps = 1e-6
        fd = (lagrange_eval(nodes, t + eps) - lagrange_eval(nodes, t - eps)) / (2 * eps)
        np.testing.assert_allclose(lagrange_eval(nodes, t, derivative=True), fd, atol=1e-7)

    @settings(max_examples=60, deadline=None)
    @given(M=st.integers(1, 9), tau=st.floats(-0.5, 1.5), gauss=st.booleans())
    def test_partition_of_unity(self, M, tau, gauss):
        L = lagrange_eval(make_nodes(M, "gauss" if gauss else "uniform"), tau)
        assert abs(L.sum() - 1.0) <= 1e-12 * max(1.0, np.abs(L).max())


class TestGram:
    def test_single_node(self):
        g = lagrange_gram(make_nodes(1, "uniform"))
        np.testing.assert_allclose(g.entries, [[1.0]])
        np.testing.assert_allclose(g.cholesky, [[1.0]])

    def test_hand_derived_two_nodes(self):
        g = lagrange_gram(NodeSet(np.array([1 / 3, 2 / 3]), NodeFamily.UNIFORM))
        np.testing.assert_allclose(g.entries, [[1.0, -0.5], [-0.5, 1.0]], atol=1e-14)
        np.testing.assert_allclose(g.cholesky.T @ g.cholesky, 2 * g.entries, atol=1e-14)
        assert np.allclose(g.cholesky, np.triu(g.cholesky))

    @pytest.mark.parametrize("M", range(1, 10))
    def test_gauss_diagonal(self, M):
        g = lagrange_gram(make_nodes(M, "gauss"))
        np.testing.assert_allclose(g.entries, np.diag(gauss_legendre_rule(M).weights), atol=1e-12)

    @pytest.mark.parametrize("M", range(1, 10))
    def test_spd(self, M):
        lo, hi = lagrange_gram(make_nodes(M, "uniform")).norm_bounds()
        assert 0 < lo <= hi


class TestLeastSquares:
    def test_identity(self):
        b = np.array([1.0, -2.0, 3.0])
        x, res = solve_lls(np.eye(3), b)
        np.testing.assert_allclose(x, b)
        assert res == pytest.approx(0.0, abs=1e-15)

    def test_mean_of_two_observations(self):
        x, res = solve_lls(np.array([[1.0], [1.0]]), np.array([0.0, 2.0]))
        np.testing.assert_allclose(x, [1.0])
        assert res == pytest.approx(np.sqrt(2))

    def test_consistent_random(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((50, 10))
        x0 = rng.standard_normal(10)
        x, res = solve_lls(A, A @ x0)
        assert np.linalg.norm(x - x0) <= 1e-10 * np.linalg.norm(x0)

    def test_matches_scipy_lstsq(self):
        import scipy.linalg
        rng = np.random.default_rng(1)
        A = rng.standard_normal((30, 8))
        b = rng.standard_normal(30)
        x, res = solve_lls(A, b)
        ref = scipy.linalg.lstsq(A, b)[0]
        np.testing.assert_allclose(x, ref, rtol=1e-12)
        assert res == pytest.approx(np.linalg.norm(A @ ref - b), rel=1e-12)

    def test_rank_deficiency_reported(self):
        A = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        b = np.array([1.0, 2.0, 3.0])
        res = lstsq_detailed(A, b)
        assert res.rank_deficient and res.rank == 1
        # minimum-norm solution splits the weight evenly
        np.testing.assert_allclose(res.solution, [0.5, 0.5], atol=1e-14)
        with pytest.raises(RankDeficientError) as info:
            solve_lls(A, b, strict=True)
        assert info.value.sigma_max > 0

    @pytest.mark.parametrize("shape", [(2, 3), (0, 0)])
    def test_rejects_bad_shape(self, shape):
        with pytest.raises(ValueError):
            solve_lls(np.ones(shape), np.ones(shape[0]))


class TestSingularValues:
    def test_identity(self):
        assert min_singular_value(np.eye(3)) == pytest.approx((1.0, 1.0))

    def test_padded_diag(self):
        A = np.zeros((4, 3))
        A[:3] = np.diag([2.0, 1.0, 0.0])
        smin, smax = min_singular_value(A)
        assert smin == pytest.approx(0.0, abs=1e-15) and smax == pytest.approx(2.0)

    def test_hand_derived(self):
        smin, smax = min_singular_value(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
        assert smin == pytest.approx(1.0) and smax == pytest.approx(np.sqrt(3))
