"""Acceptance criteria, one test per criterion at its stated tolerance.

Each test records a one-line PASS/FAIL verdict; the lines are printed in the
pytest terminal summary (see conftest.py) and when this file is run as a
script.
"""

import time
import warnings

import numpy as np
import pytest

from daecol import selftest
from daecol.analysis import run_study
from daecol.collocation import make_scheme
from daecol.problems import get_problem

VERDICTS = {}


def record(number, title, passed, detail):
    VERDICTS[number] = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} -- {detail}"
    assert passed, VERDICTS[number]


def study(problem, N, M, nodes, n_list, method="lsq"):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return run_study(get_problem(problem), make_scheme(N, M, nodes, method=method), n_list)


def within_factor(value, target, factor):
    return target / factor <= value <= target * factor


def fmt(values, pattern=".2e"):
    return "(" + ", ".join(format(float(v), pattern) for v in values) + ")"


def test_criterion_1_index3_least_squares():
    t0 = time.perf_counter()
    res = study("index3?eta=-2", 3, 7, "uniform", [20, 40, 80, 160, 320])
    elapsed = time.perf_counter() - t0
    first = [res.column(f"max_{c}")[0] for c in range(3)]
    last = [res.column(f"max_{c}")[-1] for c in range(3)]
    ok = all(within_factor(v, t, 5) for v, t in zip(first, (2.09e-4, 1.10e-6, 2.18e-6)))
    ok &= all(within_factor(v, t, 5) for v, t in zip(last, (7.68e-7, 2.50e-10, 5.00e-10)))
    o1 = res.orders("max_0")
    o23 = np.concatenate([res.orders("max_1"), res.orders("max_2")])
    ok &= bool(np.all((o1 >= 1.7) & (o1 <= 2.4)) and np.all((o23 >= 2.6) & (o23 <= 3.4)))
    ok &= elapsed <= 300
    record(1, "index-3 least squares, N=3, M=7", ok,
           f"n=20 {fmt(first)}, n=320 {fmt(last)}, orders c1 {fmt(o1, '.2f')}, "
           f"c2-3 in [{o23.min():.2f}, {o23.max():.2f}], {elapsed:.1f}s")


def test_criterion_2_standard_blowup():
    res = study("index3?eta=-2", 3, 3, "uniform", [20, 40, 80, 160], method="standard")
    e = res.column("max_0")
    ok = bool(e[1] > 1e6 and np.all(e[1:] >= 10 * e[:-1]))
    record(2, "standard collocation blow-up", ok, f"component 1 max errors {fmt(e)}")


@pytest.mark.parametrize("M,nodes,target", [(7, "uniform", 6.31e-4), (4, "gauss", 6.46e-4)])
def test_criterion_3_combined_error_n3(M, nodes, target):
    res = study("index3?eta=-2", 3, M, nodes, [10, 20, 40, 80, 160, 320])
    e = res.column("combined")
    orders = res.orders("combined")
    ok = within_factor(e[0], target, 5) and bool(np.all((orders >= 1.7) & (orders <= 2.4)))
    key = "3" if nodes == "uniform" else "3b"
    record(key, f"combined error N=3 (M={M}, {nodes})", ok,
           f"n=10 error {e[0]:.3e} (target {target:.2e}), orders {fmt(orders, '.2f')}")


@pytest.mark.parametrize("M,nodes", [(3, "uniform"), (2, "gauss")])
def test_criterion_4_combined_error_n1(M, nodes):
    res = study("index3?eta=-2", 1, M, nodes, [10, 20, 40, 80, 160, 320])
    e = res.column("combined")
    orders = res.orders("combined")
    ok = bool(np.all(np.diff(e) < 0) and np.all(e <= 1.0))
    ok &= within_factor(e[-1], 1.12e-1, 3)
    ok &= bool(np.all((orders >= 0.2) & (orders <= 0.8)))
    key = "4" if nodes == "uniform" else "4b"
    record(key, f"combined error N=1 (M={M}, {nodes})", ok, f"errors {fmt(e)}, orders {fmt(orders, '.2f')}")


@pytest.mark.parametrize("N", [3, 4])
def test_criterion_5_n_plus_mu_points(N):
    mu = 3
    res = study("index3", N, N + mu, "gauss", [10, 20, 40, 80])
    orders = res.orders("combined")
    bound = N - mu + 1 - 0.3
    record("5" if N == 3 else "5b", f"convergence regime M=N+3, N={N}", bool(np.all(orders >= bound)),
           f"orders {fmt(orders, '.2f')} (guarantee {N - mu + 1}, threshold {bound:.1f})")


@pytest.mark.parametrize("N", [1, 2, 3])
def test_criterion_6_index1_order(N):
    res = study("index1", N, N + 1, "gauss", [8, 16, 32, 64])
    orders = res.orders("combined")
    record(f"6{'abc'[N - 1]}", f"index-1 order, N={N}", bool(np.all(orders >= N - 0.3)),
           f"orders {fmt(orders, '.2f')}")


@pytest.mark.parametrize("N", [2, 3])
def test_criterion_7_exact_reproduction(N):
    worst = 0.0
    for M in (N + 1, N + 2, N + 4):
        for nodes in ("gauss", "uniform"):
            res = study(f"poly_exact?N={N}", N, M, nodes, [2, 4, 8])
            for row in res.rows:
                e = row.errors
                worst = max(worst, e.max_err.max(), e.l2_err.max(), e.h1_err.max(), e.combined)
    record(f"7{'ab'[N - 2]}", f"exact reproduction, N={N}", worst <= 1e-8, f"largest error norm {worst:.2e}")


def test_criterion_8_property_suite():
    t0 = time.perf_counter()
    results = selftest.run_all()
    elapsed = time.perf_counter() - t0
    failed = [r.name for r in results if not r.passed]
    record(8, "property suite", not failed and elapsed <= 120,
           f"{len(results) - len(failed)}/{len(results)} checks passed in {elapsed:.1f}s"
           + (f"; failed: {', '.join(failed)}" if failed else ""))


def test_criterion_9_mehr_reduced():
    res = study("mehr", 3, 4, "gauss", [10, 20, 40, 80])
    e = res.column("combined")
    orders = res.orders("combined")
    ratios = [row.sigma_min / row.sigma_max for row in res.rows]
    ok = all(r.failure is None for r in res.rows) and min(ratios) > 1e-13
    ok &= bool(np.all(np.diff(e) < 0) and np.all(orders >= 0.7))
    record(9, "mehr_reduced benchmark", ok,
           f"errors {fmt(e)}, orders {fmt(orders, '.2f')}, min sigma ratio {min(ratios):.1e}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
