import dataclasses
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from daecol.collocation import (
    IndexRegimeWarning,
    Method,
    SchemeError,
    assemble,
    assemble_standard,
    collocation_points,
    make_scheme,
    solve,
    solve_abd,
    space_for,
)
from daecol.meshspace import PwPolySolution, interpolate_reference, uniform_partition
from daecol.numkit import RankDeficientError, gauss_legendre_rule, lagrange_eval, make_nodes, min_singular_value
from daecol.problems import get_problem


def _setup(name="index3", n=10, N=3):
    prob = get_problem(name)
    return prob, space_for(prob, uniform_partition(prob.a, prob.b, n), N)


def _quiet_solve(*args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IndexRegimeWarning)
        return solve(*args, **kwargs)


class TestScheme:
    def test_defaults(self):
        s = make_scheme(3)
        assert (s.N, s.M, s.method, s.nodes.family.value) == (3, 4, Method.LEAST_SQUARES, "gauss")
        assert make_scheme(3, method="standard").M == 3
        assert make_scheme(3, method="continuous").quad_order == 9

    @pytest.mark.parametrize("kwargs", [
        dict(N=3, M=3),
        dict(N=3, M=4, method="standard"),
        dict(N=3, M=2, method="standard"),
        dict(N=3, method="continuous", quad_order=4),
        dict(N=0),
        dict(N=3, M=5, quad_order=10),
        dict(N=3, method="nope"),
        dict(N=3, weighting="nope"),
    ])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            make_scheme(**kwargs)

    def test_scheme_error_is_value_error(self):
        with pytest.raises(SchemeError):
            make_scheme(2, 2)


class TestCollocationPoints:
    def test_two_subintervals_midpoints(self):
        np.testing.assert_allclose(collocation_points(uniform_partition(0, 1, 2), np.array([0.5])),
                                   [[0.25], [0.75]])

    def test_single_interval(self):
        np.testing.assert_allclose(collocation_points(uniform_partition(0, 1, 1), make_nodes(3, "uniform")),
                                   [[0.25, 0.5, 0.75]])

    def test_count_and_first(self):
        pts = collocation_points(uniform_partition(0, 1, 20), make_nodes(7, "uniform"))
        assert pts.size == 140
        assert pts[0, 0] == pytest.approx(0.00625)


class TestAssembly:
    def test_index3_shape(self):
        prob, sp = _setup(n=20)
        system = assemble(prob, sp, make_scheme(3, 7, "uniform"))
        assert system.shape == (420, 182)

    def test_standard_shapes(self):
        prob, sp = _setup(n=20)
        system = assemble_standard(prob, sp, make_scheme(3, method="standard"))
        assert system.shape == (182, 182)
        np.testing.assert_allclose(system.bc_rhs, [0.0, 1.0], atol=1e-15)
        prob, sp = _setup("index1", n=4, N=2)
        assert assemble_standard(prob, sp, make_scheme(2, method="standard")).shape == (17, 17)

    def test_standard_custom_ics(self):
        prob, sp = _setup(n=4)
        system = assemble_standard(prob, sp, make_scheme(3, method="standard"), ics=[0.5, 0.25])
        np.testing.assert_allclose(system.bc_rhs, [0.5, 0.25])
        with pytest.raises(ValueError):
            assemble_standard(prob, sp, make_scheme(3, method="standard"), ics=[1.0])

    def test_row_count_with_boundary_rows(self):
        prob, sp = _setup("mehr?ics=1", n=5, N=3)
        system = assemble(prob, sp, make_scheme(3, 5))
        assert system.shape == (5 * 5 * 4 + 2, 5 * 3 * 4 + 2)

    def test_block_coupling(self):
        prob, sp = _setup(n=6)
        mat, _ = assemble(prob, sp, make_scheme(3, 5)).to_dense()
        r = 5 * 3
        for j in range(6):
            nz = np.nonzero(np.abs(mat[j * r:(j + 1) * r]).sum(axis=0))[0]
            assert nz.min() >= sp.block_start(j)
            assert nz.max() < sp.block_start(j) + sp.local_width

    def test_mismatched_space(self):
        prob, _ = _setup()
        _, other = _setup("index1")
        with pytest.raises(ValueError):
            assemble(prob, other, make_scheme(3))
        with pytest.raises(ValueError):
            assemble(prob, space_for(prob, uniform_partition(0, 1, 3), 2), make_scheme(3))

    @pytest.mark.parametrize("name", ["index3", "index1", "mehr", "mixed_order"])
    def test_interpolant_residual_rate(self, name):
        norms = []
        for n in (10, 20, 40):
            prob, sp = _setup(name, n=n)
            x = interpolate_reference(sp, prob.exact, lambda t: prob.exact(t)[list(prob.diff_components)])
            norms.append(np.linalg.norm(assemble(prob, sp, make_scheme(3, 6)).residual(x.coef)))
        rates = np.log2(np.array(norms[:-1]) / np.array(norms[1:]))
        assert rates.min() >= 3 - 0.3

    @pytest.mark.parametrize("N", [2, 3])
    def test_polynomial_solution_is_consistent(self, N):
        prob = get_problem(f"poly_exact?N={N}")
        sp = space_for(prob, uniform_partition(0, 1, 4), N)
        x = interpolate_reference(sp, prob.exact)
        assert np.abs(assemble(prob, sp, make_scheme(N, N + 2)).residual(x.coef)).max() <= 1e-10

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000), M=st.integers(4, 8), uniform=st.booleans(), n=st.integers(1, 6))
    def test_discrete_norm_fidelity(self, seed, M, uniform, n):
        base, sp = _setup(n=n)
        prob = dataclasses.replace(base, g=lambda t: np.zeros(np.shape(t) + (3,)))
        scheme = make_scheme(3, M, "uniform" if uniform else "gauss")
        x = PwPolySolution(sp, np.random.default_rng(seed).standard_normal(sp.dim))
        assembled = np.linalg.norm(assemble(prob, sp, scheme).residual(x.coef))
        rule = gauss_legendre_rule(M)
        total = 0.0
        for j in range(n):
            t0, h = sp.partition.nodes[j], sp.partition.steps[j]
            ts = t0 + scheme.nodes.taus * h
            w = prob.residual(ts, x(ts), x.Dx_prime(ts))
            q = lagrange_eval(scheme.nodes, rule.nodes).T @ w
            total += h * np.sum(rule.weights[:, None] * q**2)
        assert assembled == pytest.approx(math.sqrt(total), rel=1e-10)

    def test_diagonal_weighting(self):
        prob, sp = _setup(n=3)
        diag = assemble(prob, sp, make_scheme(3, 5, "uniform", weighting="diagonal"))
        gram = assemble(prob, sp, make_scheme(3, 5, "uniform"))
        C = make_scheme(3, 5, "uniform").gram.cholesky
        # gram rows are C applied to the diagonally weighted rows, point by point
        b_diag = diag.blocks.reshape(3, 5, 3, -1)
        b_gram = gram.blocks.reshape(3, 5, 3, -1)
        np.testing.assert_allclose(np.einsum("qp,jpiw->jqiw", C, b_diag), b_gram, atol=1e-12)

    @pytest.mark.parametrize("name", ["index3", "index1", "mixed_order"])
    def test_gauss_lsq_matches_continuous(self, name):
        prob, sp = _setup(name, n=5)
        lsq = assemble(prob, sp, make_scheme(3, 5, "gauss"))
        cont = assemble(prob, sp, make_scheme(3, 5, "gauss", method="continuous", quad_order=5))
        np.testing.assert_allclose(lsq.blocks, cont.blocks, atol=1e-12 * np.abs(lsq.blocks).max())
        np.testing.assert_allclose(lsq.block_rhs, cont.block_rhs, atol=1e-12 * np.abs(lsq.block_rhs).max())


class TestSolve:
    def test_report_fields(self):
        prob, sp = _setup("index1", n=8, N=2)
        rep = solve(prob, sp, make_scheme(2, 3))
        assert rep.shape == (8 * 3 * 2 + 1, 33)
        assert rep.psi_value == pytest.approx(rep.residual_norm**2, rel=1e-10)
        assert rep.sigma_min > 0 and rep.condition == pytest.approx(rep.sigma_max / rep.sigma_min)
        assert rep.path == "dense"

    def test_psi_equals_squared_residual(self):
        prob, sp = _setup(n=10)
        rep = _quiet_solve(prob, sp, make_scheme(3, 6))
        mat, rhs = assemble(prob, sp, make_scheme(3, 6)).to_dense()
        assert rep.psi_value == pytest.approx(np.linalg.norm(mat @ rep.solution.coef - rhs) ** 2, rel=1e-10)

    def test_regime_warning(self):
        prob, sp = _setup(n=5)
        with pytest.warns(IndexRegimeWarning):
            rep = solve(prob, sp, make_scheme(3, 4))
        assert any("M=4" in note for note in rep.notes)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            solve(prob, sp, make_scheme(3, 6))

    @pytest.mark.parametrize("name,N,M", [("index3", 3, 7), ("mehr?ics=1", 3, 4), ("mixed_order", 2, 3),
                                          ("index1", 3, 4), ("mehr", 2, 4)])
    def test_structured_matches_dense(self, name, N, M):
        prob, sp = _setup(name, n=16, N=N)
        scheme = make_scheme(N, M, "uniform")
        dense = _quiet_solve(prob, sp, scheme, solver="dense")
        structured = _quiet_solve(prob, sp, scheme, solver="structured")
        assert structured.path == "structured"
        np.testing.assert_allclose(structured.solution.coef, dense.solution.coef,
                                   atol=1e-8 * np.abs(dense.solution.coef).max())
        assert structured.residual_norm == pytest.approx(dense.residual_norm, rel=1e-6)

    def test_structured_solver_rank_indicator(self):
        prob, sp = _setup("index1", n=4, N=2)
        coef, res, ratio = solve_abd(assemble(prob, sp, make_scheme(2, 3)))
        assert coef is not None and 0 < ratio <= 1

    def test_rank_deficiency_detected(self):
        # x1' = g1, x1 + x2 = g2 without an initial value: constants lie in the kernel
        base = get_problem("index1")

        def B(t):
            out = np.zeros(np.shape(t) + (2, 2))
            out[..., 1, :] = 1.0
            return out

        prob = dataclasses.replace(base, B=B, G_a=np.zeros((0, 2)), G_b=np.zeros((0, 2)), d=np.zeros(0))
        sp = space_for(prob, uniform_partition(0, 1, 4), 2)
        with pytest.raises(RankDeficientError) as info:
            solve(prob, sp, make_scheme(2, 3))
        assert info.value.sigma_min < 1e-13 * info.value.sigma_max
        rep = solve(prob, sp, make_scheme(2, 3), strict=False)
        assert any("rank deficient" in note for note in rep.notes)

    def test_unknown_solver(self):
        prob, sp = _setup("index1", n=2, N=2)
        with pytest.raises(ValueError):
            solve(prob, sp, make_scheme(2), solver="magic")

    @pytest.mark.parametrize("N", [2, 3])
    def test_full_column_rank_with_n_plus_mu_points(self, N):
        for n in (5, 10, 20):
            prob, sp = _setup(n=n, N=N)
            mat, _ = assemble(prob, sp, make_scheme(N, N + 3)).to_dense()
            smin, smax = min_singular_value(mat)
            assert smin > 1e-13 * smax

    def test_sigma_min_decreases_under_refinement(self):
        sig = []
        for n in (5, 10, 20):
            prob, sp = _setup(n=n)
            sig.append(_quiet_solve(prob, sp, make_scheme(3, 4)).sigma_min)
        assert sig[0] > sig[1] > sig[2]

    def test_method_consistency_index1(self):
        prob, sp = _setup("index1", n=32, N=2)
        t = np.linspace(0, 1, 501)
        sols, errs = [], []
        for scheme in (make_scheme(2, 3), make_scheme(2, method="continuous"),
                       make_scheme(2, method="standard")):
            x = solve(prob, sp, scheme).solution
            sols.append(x(t))
            errs.append(np.abs(x(t) - prob.exact(t)).max())
        diff = max(np.abs(a - b).max() for a in sols for b in sols)
        assert diff <= 10 * max(errs)

    def test_standard_collocation_blows_up_on_index3(self):
        prob, sp = _setup(n=20)
        rep = solve(prob, sp, make_scheme(3, 3, "uniform", method="standard"))
        assert np.abs(rep.solution(np.linspace(0, 1, 101)) - prob.exact(np.linspace(0, 1, 101))).max() > 1e6
