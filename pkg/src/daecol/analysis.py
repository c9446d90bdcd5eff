"""Error norms, observed convergence orders, convergence studies and
CSV/markdown reports."""

from __future__ import annotations

import csv
import io
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .collocation import CollocationScheme, solve, space_for
from .meshspace import PwPolySolution, uniform_partition
from .numkit import gauss_legendre_rule
from .problems import LinearDAEProblem

MAX_SAMPLES_PER_INTERVAL = 101
# errors below this are treated as exact reproduction; orders are meaningless
EXACT_THRESHOLD = 1e-12


def default_quad_order(N: int) -> int:
    return max(2 * N + 3, 10)


def _local_values(x: PwPolySolution, taus):
    """Values ``(n, P, m)`` and differentiated derivatives ``(n, P, k)`` of
    each subinterval's polynomial at reference points (closed intervals)."""
    sp = x.space
    h = sp.partition.steps
    V, dD = sp.local_basis(taus)
    local = sp.local_coefficients(x.coef)
    vals = np.einsum("pcw,jw->jpc", V, local)
    ders = np.einsum("pcw,jw->jpc", dD, local) / h[:, None, None]
    t = sp.partition.nodes[:-1, None] + h[:, None] * np.asarray(taus)[None, :]
    return t, vals, ders


def _euclid(v):
    # scaled to survive the enormous errors of unstable schemes
    v = np.abs(np.asarray(v, dtype=float))
    top = v.max() if v.size else 0.0
    if top == 0.0 or not np.isfinite(top):
        return top
    return top * np.sqrt(np.sum((v / top) ** 2))


def _weighted_norms(w, e):
    """Per-component ``sqrt(sum_jp w_jp e_jpc^2)`` without overflow."""
    scale = np.abs(e).max(axis=(0, 1))
    safe = np.where((scale > 0) & np.isfinite(scale), scale, 1.0)
    out = safe * np.sqrt(np.einsum("jp,jpc->c", w, (e / safe) ** 2))
    return np.where(np.isfinite(scale), out, np.inf)


@dataclass
class ErrorReport:
    max_err: np.ndarray
    l2_err: np.ndarray
    h1_err: np.ndarray  # differentiated components only, in D order
    combined: float
    diff_components: tuple = ()

    def as_dict(self):
        return {
            "max_err": self.max_err.tolist(),
            "l2_err": self.l2_err.tolist(),
            "h1_err": self.h1_err.tolist(),
            "combined": self.combined,
        }


def error_norms(x: PwPolySolution, exact, exact_Dprime, quad_order: Optional[int] = None) -> ErrorReport:
    """Componentwise errors of ``x`` against an exact solution.

    The combined error takes L2 for algebraic and full H1 for differentiated
    components. Integrals use per-subinterval Gauss quadrature; maxima use
    101 uniform samples per (closed) subinterval.
    """
    sp = x.space
    q = gauss_legendre_rule(quad_order or default_quad_order(sp.N))
    h = sp.partition.steps
    t, vals, ders = _local_values(x, q.nodes)
    e = vals - exact(t)
    de = ders - exact_Dprime(t)
    w = h[:, None] * q.weights[None, :]
    l2 = _weighted_norms(w, e)
    dl2 = _weighted_norms(w, de)
    dc = list(sp.diff_components)
    h1 = np.hypot(l2[dc], dl2)
    alg = list(sp.alg_components)
    combined = float(_euclid(np.concatenate([l2[alg], h1])))

    ts, svals, _ = _local_values(x, np.linspace(0.0, 1.0, MAX_SAMPLES_PER_INTERVAL))
    max_err = np.abs(svals - exact(ts)).max(axis=(0, 1))
    return ErrorReport(max_err=max_err, l2_err=l2, h1_err=h1,
                       combined=combined, diff_components=tuple(dc))


def problem_errors(x: PwPolySolution, problem: LinearDAEProblem, quad_order=None) -> ErrorReport:
    if problem.exact is None:
        raise ValueError(f"problem {problem.name} has no exact solution")
    return error_norms(x, problem.exact, problem.exact_Dprime, quad_order)


@dataclass
class ElementNorms:
    l2: float
    h1d: float
    sup: float
    sup_Dprime: float

    @property
    def c1d(self) -> float:
        return self.sup + self.sup_Dprime


def element_norms(x: PwPolySolution, quad_order: Optional[int] = None) -> ElementNorms:
    """L2, H1_D and sup-type norms of an ansatz-space element (Euclidean
    pointwise norms). Sup norms are sampled on the uniform grid plus the
    quadrature nodes, so the sampled sup bounds the quadrature integrals."""
    sp = x.space
    q = gauss_legendre_rule(quad_order or default_quad_order(sp.N))
    h = sp.partition.steps
    _, vals, ders = _local_values(x, q.nodes)
    w = h[:, None] * q.weights[None, :]
    l2_sq = float(np.einsum("jp,jpc->", w, vals**2))
    d_sq = float(np.einsum("jp,jpc->", w, ders**2))
    taus = np.union1d(np.linspace(0.0, 1.0, MAX_SAMPLES_PER_INTERVAL), q.nodes)
    _, svals, sders = _local_values(x, taus)
    sup = float(np.sqrt((svals**2).sum(axis=-1)).max())
    sup_d = float(np.sqrt((sders**2).sum(axis=-1)).max())
    sup = max(sup, float(np.sqrt((vals**2).sum(axis=-1)).max()))
    sup_d = max(sup_d, float(np.sqrt((ders**2).sum(axis=-1)).max()))
    return ElementNorms(l2=math.sqrt(l2_sq), h1d=math.sqrt(l2_sq + d_sq), sup=sup, sup_Dprime=sup_d)


def observed_order(errors, ratio: float = 2.0):
    """``log2(e_{i-1} / e_i)`` for successive errors under mesh doubling."""
    e = np.asarray(errors, dtype=float)
    if e.ndim != 1 or len(e) < 2:
        raise ValueError("need at least two errors")
    if np.any(~np.isfinite(e)) or np.any(e <= 0.0):
        raise ValueError("errors must be positive and finite")
    return np.log(e[:-1] / e[1:]) / math.log(ratio)


@dataclass
class StudyRow:
    n: int
    errors: Optional[ErrorReport] = None
    sigma_min: Optional[float] = None
    sigma_max: Optional[float] = None
    assembly_s: float = 0.0
    solve_s: float = 0.0
    order_combined: Optional[float] = None
    order_max: Optional[np.ndarray] = None
    failure: Optional[str] = None
    notes: list = field(default_factory=list)


@dataclass
class StudyResult:
    problem: str
    method: str
    N: int
    M: int
    node_family: str
    weighting: str
    m: int
    diff_components: tuple
    rows: list = field(default_factory=list)

    def column(self, name):
        """Per-row values of ``combined`` or ``max_<c>`` (0-based component)."""
        out = []
        for row in self.rows:
            if row.errors is None:
                out.append(np.nan)
            elif name == "combined":
                out.append(row.errors.combined)
            elif name.startswith("max_"):
                out.append(row.errors.max_err[int(name[4:])])
            else:
                raise KeyError(name)
        return np.array(out)

    def orders(self, name):
        vals = self.column(name)
        return observed_order(vals)


def _pair_order(prev, cur):
    if prev is None or cur is None or not (prev > 0 and cur > 0):
        return None
    if not (math.isfinite(prev) and math.isfinite(cur)):
        return None
    if prev < EXACT_THRESHOLD and cur < EXACT_THRESHOLD:
        return None
    return math.log2(prev / cur)


def thread_count(default: int = 1) -> int:
    """Worker cap from ``DAECOL_THREADS`` (0 = one per CPU)."""
    raw = os.environ.get("DAECOL_THREADS")
    if raw is None or raw.strip() == "":
        return default
    value = int(raw)
    if value < 0:
        raise ValueError("DAECOL_THREADS must be >= 0")
    return value or (os.cpu_count() or 1)


def run_study(problem: LinearDAEProblem, scheme: CollocationScheme, n_list, *,
              quad_order=None, diagnostics: Optional[bool] = None, solver: str = "auto",
              workers: Optional[int] = None) -> StudyResult:
    """One solve per mesh size on uniform partitions of the problem interval.

    Failed rows are recorded and the study continues. Rows may be computed
    concurrently (``workers`` or ``DAECOL_THREADS``); results are ordered by
    ``n`` regardless.
    """
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing")

    def one(n):
        row = StudyRow(n=n)
        space = space_for(problem, uniform_partition(problem.a, problem.b, n), scheme.N)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                rep = solve(problem, space, scheme, diagnostics=diagnostics, solver=solver)
        except (np.linalg.LinAlgError, ValueError) as exc:
            row.failure = f"{type(exc).__name__}: {exc}"
            return row
        row.errors = problem_errors(rep.solution, problem, quad_order)
        row.sigma_min, row.sigma_max = rep.sigma_min, rep.sigma_max
        row.assembly_s, row.solve_s = rep.assembly_time, rep.solve_time
        row.notes = list(rep.notes)
        return row

    workers = thread_count() if workers is None else workers
    if workers > 1 and len(n_list) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, n_list))
    else:
        rows = [one(n) for n in n_list]

    prev = None
    for row in rows:
        if prev is not None and prev.errors is not None and row.errors is not None:
            row.order_combined = _pair_order(prev.errors.combined, row.errors.combined)
            row.order_max = np.array([
                np.nan if (o := _pair_order(a, b)) is None else o
                for a, b in zip(prev.errors.max_err, row.errors.max_err)
            ])
        prev = row

    return StudyResult(
        problem=problem.label, method=scheme.method.value, N=scheme.N, M=scheme.M,
        node_family=scheme.nodes.family.value, weighting=scheme.weighting.value,
        m=problem.m, diff_components=problem.diff_components, rows=rows,
    )


def doubling(n0: int, doublings: int):
    return [n0 * 2**i for i in range(doublings + 1)]


# --- reports -----------------------------------------------------------------


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return ""
    return f"{value:.5e}"


def csv_header(m: int, diff_components) -> list:
    return (
        ["problem", "method", "N", "M", "node_family", "weighting", "n"]
        + [f"err_max_{i + 1}" for i in range(m)]
        + [f"err_L2_{i + 1}" for i in range(m)]
        + [f"err_H1_{c + 1}" for c in diff_components]
        + ["combined", "order_combined", "sigma_min", "sigma_max", "assembly_s", "solve_s"]
    )


def write_report(result: StudyResult, fmt: str = "csv", timings: bool = True) -> str:
    """Serialize a study as CSV (one row per mesh) or a markdown table.

    With ``timings=False`` the timing columns are left empty so that repeated
    runs produce identical text.
    """
    if fmt in ("md", "markdown"):
        return _markdown(result)
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(csv_header(result.m, result.diff_components))
    for row in result.rows:
        head = [result.problem, result.method, result.N, result.M, result.node_family,
                result.weighting, row.n]
        if row.errors is None:
            body = [""] * (2 * result.m + len(result.diff_components) + 2)
        else:
            e = row.errors
            body = ([_fmt(v) for v in e.max_err] + [_fmt(v) for v in e.l2_err]
                    + [_fmt(v) for v in e.h1_err] + [_fmt(e.combined), _fmt(row.order_combined)])
        tail = [_fmt(row.sigma_min), _fmt(row.sigma_max),
                _fmt(row.assembly_s) if timings else "", _fmt(row.solve_s) if timings else ""]
        writer.writerow(head + body + tail)
    return buf.getvalue()


def _short(v):
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.2e}"


def _ord(v):
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.1f}"


def _markdown(result: StudyResult) -> str:
    title = (f"{result.problem}: {result.method}, N={result.N}, M={result.M} "
             f"{result.node_family} points, {result.weighting} weighting")
    cols = ["n"]
    for i in range(result.m):
        cols += [f"max e_{i + 1}", "order"]
    cols += ["error", "order"]
    lines = [f"**{title}**", "", "| " + " | ".join(cols) + " |",
             "|" + "|".join(["---:"] * len(cols)) + "|"]
    for row in result.rows:
        if row.errors is None:
            cells = [str(row.n)] + ["failed"] + [""] * (len(cols) - 2)
        else:
            cells = [str(row.n)]
            for i in range(result.m):
                o = None if row.order_max is None else float(row.order_max[i])
                cells += [_short(row.errors.max_err[i]), _ord(o)]
            cells += [_short(row.errors.combined), _ord(row.order_combined)]
        lines.append("| " + " | ".join(cells) + " |")
    lines.append("")
    lines.append("error = (sum of L2^2 over algebraic and H1^2 over differentiated components)^(1/2)")
    return "\n".join(lines) + "\n"


def write_comparison(results: dict, fmt: str = "md", timings: bool = True) -> str:
    """Side-by-side componentwise maximal errors of several studies on the
    same grid (e.g. standard vs. least-squares collocation)."""
    labels = list(results)
    if fmt == "csv":
        return "".join(write_report(results[k], "csv", timings=timings) for k in labels)
    first = results[labels[0]]
    cols = ["n"]
    for label in labels:
        cols += [f"{label} e_{i + 1}" for i in range(results[label].m)]
    lines = ["| " + " | ".join(cols) + " |", "|" + "|".join(["---:"] * len(cols)) + "|"]
    for idx, row in enumerate(first.rows):
        cells = [str(row.n)]
        for label in labels:
            r = results[label].rows[idx]
            if r.errors is None:
                cells += ["failed"] * results[label].m
            else:
                cells += [_short(v) for v in r.errors.max_err]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


# --- norm-equivalence diagnostics ----------------------------------------------------


def _global_gram(space, h1=False, quad_order=None):
    """L2 (or H1_D) Gram matrix of the global basis of ``space``."""
    q = gauss_legendre_rule(quad_order or default_quad_order(space.N))
    G = np.zeros((space.dim, space.dim))
    W = space.local_width
    for j, h in enumerate(space.partition.steps):
        V, dD = space.local_basis(q.nodes, h)
        loc = h * np.einsum("p,pcw,pcv->wv", q.weights, V, V)
        if h1:
            loc += h * np.einsum("p,pcw,pcv->wv", q.weights, dD, dD)
        s = space.block_start(j)
        G[s:s + W, s:s + W] += loc
    return G


def _global_rows(space, j, local):
    row = np.zeros(local.shape[:-1] + (space.dim,))
    s = space.block_start(j)
    row[..., s:s + space.local_width] = local
    return row


def inverse_inequality_constant(space, samples: int = MAX_SAMPLES_PER_INTERVAL) -> float:
    """``sup_z h^(1/2) ||z||_inf / ||z||_L2`` over the ansatz space.

    For each sample point the supremum over ``z`` is the largest eigenvalue
    of ``Phi G^-1 Phi^T``; no random sampling of ``z`` is needed.
    """
    G = _global_gram(space)
    L = np.linalg.cholesky(G)
    taus = np.linspace(0.0, 1.0, samples)
    best = 0.0
    for j, h in enumerate(space.partition.steps):
        V, _ = space.local_basis(taus, h)
        for p in range(len(taus)):
            Y = np.linalg.solve(L, _global_rows(space, j, V[p]).T)
            best = max(best, float(np.linalg.eigvalsh(Y.T @ Y)[-1]))
    return math.sqrt(best * space.partition.h_max)


def lower_norm_ratio(n: int, N: int = 3, points: int = 9, seed: int = 0) -> float:
    """Smallest observed ``||x||_H1D^2 / (h ||x||_C1D^2)`` on a uniform mesh
    of (0, 1). Candidates are the H1_D Riesz representers of point values
    and point derivatives (the near-worst cases) plus random elements."""
    from .meshspace import AnsatzSpace

    space = AnsatzSpace(uniform_partition(0.0, 1.0, n), N, 2, (0,))
    G = _global_gram(space, h1=True)
    taus = np.linspace(0.0, 1.0, points)
    cands = []
    for j in range(0, n, max(1, n // 4)):
        h = space.partition.steps[j]
        V, dD = space.local_basis(taus, h)
        for p in range(points):
            for row in list(V[p]) + list(dD[p]):
                cands.append(np.linalg.solve(G, _global_rows(space, j, row)))
    rng = np.random.default_rng(seed)
    cands += list(rng.standard_normal((10, space.dim)))
    h = space.partition.h_max
    ratios = []
    for c in cands:
        nm = element_norms(PwPolySolution(space, c))
        ratios.append(nm.h1d**2 / (h * nm.c1d**2))
    return float(min(ratios))
