"""Named property checks, runnable from the CLI (``daecol selftest``) and
from the test suite.

Each check returns ``(passed, detail)``. Random inputs use fixed seeds.
"""

from __future__ import annotations

import dataclasses
import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import analysis
from .collocation import assemble, make_scheme, solve, solve_abd, space_for
from .meshspace import (
    AnsatzSpace,
    PwPolySolution,
    restrict_interpolate,
    uniform_partition,
)
from .numkit import (
    RANK_TOL,
    gauss_legendre_rule,
    lagrange_eval,
    lagrange_gram,
    make_nodes,
    min_singular_value,
    NodeSet,
    NodeFamily,
    solve_lls,
)
from .problems import get_problem, registry_problems

CHECKS = []


def check(name):
    def register(fn):
        CHECKS.append((name, fn))
        return fn
    return register


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _rng(seed=0):
    return np.random.default_rng(seed)


def _random_nodes(rng, M):
    while True:
        taus = np.sort(rng.uniform(0.02, 0.98, M))
        if M == 1 or np.min(np.diff(taus)) > 0.03:
            return NodeSet(taus, NodeFamily.UNIFORM)


def _random_element(space, rng):
    return PwPolySolution(space, rng.standard_normal(space.dim))


# --- numerical kernels ----------------------------------------------------------


@check("quadrature_exactness")
def _quadrature_exactness():
    worst = 0.0
    for Mq in range(1, 21):
        rule = gauss_legendre_rule(Mq)
        for p in range(2 * Mq):
            approx = float(rule.weights @ rule.nodes**p)
            worst = max(worst, abs(approx - 1.0 / (p + 1)) * (p + 1))
    return worst <= 1e-12, f"max relative error {worst:.2e} (tol 1e-12)"


@check("gauss_rule_matches_reference")
def _gauss_reference():
    worst = 0.0
    for Mq in range(1, 65):
        x, w = np.polynomial.legendre.leggauss(Mq)
        rule = gauss_legendre_rule(Mq)
        worst = max(worst, np.abs(rule.nodes - 0.5 * (x + 1)).max(), np.abs(rule.weights - 0.5 * w).max())
    return worst <= 1e-13, f"max deviation from numpy leggauss {worst:.2e}"


@check("lagrange_cardinal_and_partition_of_unity")
def _lagrange_cardinal():
    rng = _rng(1)
    worst = 0.0
    for _ in range(30):
        M = int(rng.integers(1, 9))
        nodes = _random_nodes(rng, M)
        coeffs = rng.standard_normal(M)
        q = np.polynomial.Polynomial(coeffs)
        ts = rng.uniform(0, 1, 100)
        L = lagrange_eval(nodes, ts)
        approx = q(nodes.taus) @ L
        worst = max(worst, np.abs(approx - q(ts)).max() / max(1.0, np.abs(q(ts)).max()))
        worst = max(worst, np.abs(L.sum(axis=0) - 1.0).max())
        worst = max(worst, np.abs(lagrange_eval(nodes, nodes.taus) - np.eye(M)).max())
    return worst <= 1e-11, f"max deviation {worst:.2e} (tol 1e-11)"


@check("gram_identity")
def _gram_identity():
    rng = _rng(2)
    worst = 0.0
    fine = gauss_legendre_rule(30)
    for _ in range(30):
        M = int(rng.integers(1, 9))
        nodes = _random_nodes(rng, M) if rng.random() < 0.5 else make_nodes(M, "uniform")
        gram = lagrange_gram(nodes)
        w = rng.standard_normal(M)
        lhs = w @ gram.entries @ w
        rhs = fine.weights @ (w @ lagrange_eval(nodes, fine.nodes)) ** 2
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
        C = gram.cholesky
        worst = max(worst, np.abs(C.T @ C - M * gram.entries).max() / (M * np.abs(gram.entries).max()))
    return worst <= 1e-12, f"max relative deviation {worst:.2e} (tol 1e-12)"


@check("gauss_nodes_diagonal_gram")
def _gauss_diagonal():
    worst = 0.0
    for M in range(1, 13):
        nodes = make_nodes(M, "gauss")
        gram = lagrange_gram(nodes)
        worst = max(worst, np.abs(gram.entries - np.diag(gauss_legendre_rule(M).weights)).max())
    return worst <= 1e-12, f"max entry deviation {worst:.2e} (tol 1e-12)"


@check("norm_equivalence_constants_positive")
def _norm_constants():
    lows = []
    for M in range(1, 10):
        for fam in ("uniform", "gauss"):
            lo, hi = lagrange_gram(make_nodes(M, fam)).norm_bounds()
            lows.append(lo)
            if not (0 < lo <= hi):
                return False, f"M={M} {fam}: bounds ({lo}, {hi})"
    return True, f"smallest kappa_l {min(lows):.3e}"


@check("least_squares_optimality")
def _lstsq_optimality():
    rng = _rng(3)
    A = rng.standard_normal((50, 10))
    b = rng.standard_normal(50)
    x, res = solve_lls(A, b)
    others = [np.linalg.norm(A @ (x + 1e-3 * rng.standard_normal(10)) - b) for _ in range(100)]
    ok = res <= min(others) and abs(res - np.linalg.norm(A @ x - b)) < 1e-12
    return ok, f"residual {res:.6e}, best perturbed {min(others):.6e}"


# --- ansatz space -----------------------------------------------------------------


@check("ansatz_dimension")
def _dimension():
    rng = _rng(4)
    for _ in range(40):
        m = int(rng.integers(2, 7))
        k = int(rng.integers(1, m))
        N = int(rng.integers(1, 6))
        n = int(rng.integers(1, 9))
        dc = tuple(sorted(int(c) for c in rng.choice(m, size=k, replace=False)))
        sp = AnsatzSpace(uniform_partition(0, 1, n), N, m, dc)
        # a positive definite Gram matrix means the basis is independent
        ev = np.linalg.eigvalsh(analysis._global_gram(sp))
        if sp.dim != n * N * m + k or ev[0] <= 1e-12 * ev[-1]:
            return False, f"(n, N, m, k) = {(n, N, m, k)}: dim {sp.dim}, Gram eigenvalues {ev[0]:.1e}..{ev[-1]:.1e}"
    return True, "dim == n*N*m + k with independent basis for 40 random configurations"


@check("differentiated_continuity")
def _continuity():
    rng = _rng(5)
    worst = 0.0
    for _ in range(20):
        m, N, n = 3, int(rng.integers(1, 6)), int(rng.integers(2, 12))
        sp = AnsatzSpace(uniform_partition(0, 2, n), N, m, (0, 2))
        x = _random_element(sp, rng)
        for j in range(1, n):
            left, right = x.limits(j)
            scale = max(1.0, np.abs(left).max())
            worst = max(worst, np.abs(left[[0, 2]] - right[[0, 2]]).max() / scale)
    return worst <= 1e-12, f"max jump in differentiated components {worst:.2e}"


@check("restriction_interpolation_bound_sin")
def _interp_bound():
    worst_ratio = 0.0
    h = 0.1
    bound = h**4 / math.factorial(4)
    for fam in ("uniform", "gauss"):
        nodes = make_nodes(4, fam)
        for t_left in np.arange(0.0, 1.0, h):
            p = restrict_interpolate(nodes, np.sin, t_left, h)
            ts = np.linspace(t_left, t_left + h, 201)
            worst_ratio = max(worst_ratio, np.abs(p(ts) - np.sin(ts)).max() / bound)
    return worst_ratio <= 1.0, f"max error / bound = {worst_ratio:.3f} (bound {bound:.2e})"


def _inverse_ratios(N=3, meshes=(4, 8, 16, 32)):
    out = []
    for n in meshes:
        sp = AnsatzSpace(uniform_partition(0, 1, n), N, 2, (0,))
        out.append(analysis.inverse_inequality_constant(sp))
    return out


@check("inverse_inequality_bounded")
def _inverse_inequality():
    ratios = _inverse_ratios()
    growth = max(ratios) / ratios[0]
    return growth <= 1.05, "sup ||z||_inf h^1/2 / ||z||_L2 = " + ", ".join(f"{r:.4f}" for r in ratios)


@check("h1d_norm_upper_bound")
def _h1d_upper():
    rng = _rng(6)
    worst = 0.0
    for _ in range(25):
        n, N = int(rng.integers(1, 16)), int(rng.integers(1, 5))
        a, b = 0.0, float(rng.uniform(0.5, 3.0))
        sp = AnsatzSpace(uniform_partition(a, b, n), N, 3, (1, 2))
        x = _random_element(sp, rng)
        nm = analysis.element_norms(x)
        worst = max(worst, nm.h1d**2 / ((b - a) * nm.c1d**2))
    return worst <= 1.0 + 1e-10, f"max ||x||_H1D^2 / ((b-a) ||x||_C1D^2) = {worst:.4f}"


@check("h1d_norm_lower_bound")
def _h1d_lower():
    mins = [analysis.lower_norm_ratio(n) for n in (4, 8, 16, 32)]
    ok = min(mins) >= 0.5 * mins[0] and min(mins) > 0
    return ok, "min ||x||_H1D^2 / (h ||x||_C1D^2) = " + ", ".join(f"{v:.4f}" for v in mins)


# --- problems ---------------------------------------------------------------------


@check("registry_manufactured_residuals")
def _registry_residuals():
    worst_res, worst_bc = 0.0, 0.0
    for p in registry_problems() + [get_problem("mehr?ics=1"), get_problem("index3?eta=1.5")]:
        ts = np.linspace(p.a, p.b, 50)
        worst_res = max(worst_res, np.abs(p.exact_residual(ts)).max())
        if p.l:
            worst_bc = max(worst_bc, np.abs(p.bc_residual(p.exact(p.a), p.exact(p.b))).max())
    ok = worst_res <= 1e-10 and worst_bc <= 1e-12
    return ok, f"max residual {worst_res:.2e}, max boundary residual {worst_bc:.2e}"


@check("registry_derivative_oracles")
def _registry_fd():
    worst = 0.0
    step = 1e-6
    for p in registry_problems():
        ts = np.linspace(p.a + 2 * step, p.b - 2 * step, 50)
        fd = (p.exact(ts + step) - p.exact(ts - step)) / (2 * step)
        worst = max(worst, np.abs(fd[:, list(p.diff_components)] - p.exact_Dprime(ts)).max())
    return worst <= 1e-6, f"max finite-difference mismatch {worst:.2e}"


@check("registry_kernel_condition")
def _registry_kernel():
    bad = [p.name for p in registry_problems() if not p.kernel_condition_holds()]
    return not bad, "all boundary matrices vanish on algebraic components" if not bad else f"violations: {bad}"


# --- collocation ------------------------------------------------------------------


@check("discrete_norm_fidelity")
def _norm_fidelity():
    rng = _rng(7)
    base = get_problem("index3")
    prob = dataclasses.replace(base, g=lambda t: np.zeros(np.shape(t) + (3,)))
    worst = 0.0
    for M, fam in ((4, "gauss"), (5, "uniform"), (7, "uniform")):
        scheme = make_scheme(3, M, fam)
        rule = gauss_legendre_rule(M)
        for n in (3, 7):
            sp = space_for(prob, uniform_partition(0, 1, n), 3)
            x = _random_element(sp, rng)
            assembled = np.linalg.norm(assemble(prob, sp, scheme).residual(x.coef))
            total = 0.0
            part = sp.partition
            for j in range(n):
                t0, h = part.nodes[j], part.steps[j]
                # independent path: pointwise residual, Lagrange interpolant, Gauss rule
                ts = t0 + scheme.nodes.taus * h
                w = prob.residual(ts, x(ts), x.Dx_prime(ts))  # (M, m)
                q = lagrange_eval(scheme.nodes, rule.nodes).T @ w  # (Mq, m)
                total += h * float(np.sum(rule.weights[:, None] * q**2))
            worst = max(worst, abs(assembled - math.sqrt(total)) / math.sqrt(total))
    return worst <= 1e-10, f"max relative deviation {worst:.2e} (tol 1e-10)"


@check("full_column_rank_index3")
def _full_rank():
    prob = get_problem("index3")
    details = []
    ok = True
    for N in (2, 3):
        for n in (5, 10, 20):
            sp = space_for(prob, uniform_partition(0, 1, n), N)
            mat, _ = assemble(prob, sp, make_scheme(N, N + prob.mu, "gauss")).to_dense()
            smin, smax = min_singular_value(mat)
            ok &= smin > RANK_TOL * smax
            details.append(f"N={N},n={n}: {smin / smax:.1e}")
    return ok, "sigma_min/sigma_max at M=N+3: " + ", ".join(details)


@check("gauss_lsq_equals_continuous")
def _gauss_equals_continuous():
    worst = 0.0
    for name in ("index3", "index1", "mehr"):
        prob = get_problem(name)
        for N in (2, 3):
            sp = space_for(prob, uniform_partition(prob.a, prob.b, 6), N)
            M = N + 2
            lsq = assemble(prob, sp, make_scheme(N, M, "gauss"))
            cont = assemble(prob, sp, make_scheme(N, M, "gauss", method="continuous", quad_order=M))
            scale = np.abs(lsq.blocks).max()
            worst = max(worst, np.abs(lsq.blocks - cont.blocks).max() / scale)
    return worst <= 1e-12, f"max relative entry deviation {worst:.2e}"


@check("method_consistency_index1")
def _method_consistency():
    prob = get_problem("index1")
    N, n = 2, 32
    sp = space_for(prob, uniform_partition(0, 1, n), N)
    sols, errs = {}, {}
    for label, scheme in (("lsq", make_scheme(N, N + 1, "gauss")),
                          ("continuous", make_scheme(N, method="continuous")),
                          ("standard", make_scheme(N, N, "gauss", method="standard"))):
        rep = solve(prob, sp, scheme)
        sols[label] = rep.solution
        errs[label] = analysis.problem_errors(rep.solution, prob).max_err.max()
    ts = np.linspace(0, 1, 1001)
    diff = max(np.abs(sols[a](ts) - sols[b](ts)).max() for a in sols for b in sols)
    disc = max(errs.values())
    return diff <= 10 * disc, f"max pairwise difference {diff:.2e}, max discretization error {disc:.2e}"


@check("structured_solver_matches_dense")
def _structured_vs_dense():
    worst = 0.0
    for name, N in (("index3", 3), ("mixed_order", 2), ("index1", 3), ("mehr?ics=1", 3)):
        prob = get_problem(name)
        sp = space_for(prob, uniform_partition(prob.a, prob.b, 12), N)
        system = assemble(prob, sp, make_scheme(N, N + 2, "uniform"))
        mat, rhs = system.to_dense()
        dense, _ = solve_lls(mat, rhs)
        coef, res, _ = solve_abd(system)
        worst = max(worst, np.abs(coef - dense).max() / np.abs(dense).max())
    return worst <= 1e-8, f"max relative coefficient deviation {worst:.2e}"


@check("conditioning_trend_index3")
def _conditioning_trend():
    prob = get_problem("index3")
    sig = []
    for n in (5, 10, 20, 40):
        sp = space_for(prob, uniform_partition(0, 1, n), 3)
        mat, _ = assemble(prob, sp, make_scheme(3, 4, "gauss")).to_dense()
        sig.append(min_singular_value(mat)[0])
    ok = all(b < a for a, b in zip(sig, sig[1:]))
    return ok, "sigma_min (M=N+1): " + ", ".join(f"{s:.2e}" for s in sig)


# --- analysis ---------------------------------------------------------------------


@check("norm_consistency")
def _norm_consistency():
    rng = _rng(8)
    worst = 0.0
    for _ in range(10):
        sp = AnsatzSpace(uniform_partition(0, 1, int(rng.integers(1, 10))), int(rng.integers(1, 5)), 3, (0, 1))
        x = _random_element(sp, rng)
        nm = analysis.element_norms(x)
        q = gauss_legendre_rule(analysis.default_quad_order(sp.N))
        _, vals, ders = analysis._local_values(x, q.nodes)
        w = sp.partition.steps[:, None] * q.weights[None, :]
        l2 = np.einsum("jp,jpc->", w, vals**2)
        dl2 = np.einsum("jp,jpc->", w, ders**2)
        worst = max(worst, abs(nm.h1d**2 - (l2 + dl2)) / (l2 + dl2))
    return worst <= 1e-12, f"max relative deviation {worst:.2e}"


@check("quadrature_resolution_stability")
def _quad_stability():
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, N, M, fam, n in (("index3", 3, 7, "uniform", 20), ("index3", 1, 2, "gauss", 40),
                                   ("index1", 2, 3, "gauss", 16), ("mehr", 3, 4, "gauss", 10)):
            prob = get_problem(name)
            sp = space_for(prob, uniform_partition(prob.a, prob.b, n), N)
            x = solve(prob, sp, make_scheme(N, M, fam)).solution
            q = analysis.default_quad_order(N)
            e1 = analysis.problem_errors(x, prob, q)
            e2 = analysis.problem_errors(x, prob, 2 * q)
            a = np.concatenate([e1.l2_err, e1.h1_err])
            b = np.concatenate([e2.l2_err, e2.h1_err])
            worst = max(worst, np.abs(a - b).max() / np.abs(b).max())
    return worst < 1e-3, f"max relative change {worst:.2e} (tol 1e-3)"


@check("study_determinism")
def _determinism():
    prob = get_problem("index3")
    scheme = make_scheme(3, 4, "gauss")
    a = analysis.write_report(analysis.run_study(prob, scheme, [5, 10], workers=1), timings=False)
    b = analysis.write_report(analysis.run_study(prob, scheme, [5, 10], workers=2), timings=False)
    return a == b, "bit-identical csv" if a == b else "csv differs between runs"


def run_all(names=None):
    results = []
    for name, fn in CHECKS:
        if names and name not in names:
            continue
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                passed, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(passed), detail, time.perf_counter() - t0))
    return results


def check_names():
    return [name for name, _ in CHECKS]
