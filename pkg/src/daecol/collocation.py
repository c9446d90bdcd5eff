"""Assembly and solution of (overdetermined) collocation systems.

Three schemes share one assembly path:

``lsq``
    ``M > N`` collocation points per subinterval; residual rows are scaled by
    ``sqrt(h_j / M)`` and, with Gram weighting, mixed by the Cholesky factor of
    ``M * Lambda`` so that the Euclidean norm of a block equals the L2 norm of
    the interpolated residual on that subinterval.
``continuous``
    Rows at Gauss quadrature points scaled by ``sqrt(h_j w_q)``; approximates
    the L2 norm of the residual itself.
``standard``
    Classical square collocation, ``M = N``, plus ``k`` initial values.
"""

from __future__ import annotations

import enum
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .meshspace import AnsatzSpace, Partition, PwPolySolution
from .numkit import (
    RANK_TOL,
    GramMatrix,
    NodeFamily,
    NodeSet,
    RankDeficientError,
    gauss_legendre_rule,
    lagrange_gram,
    lstsq_detailed,
    make_nodes,
    min_singular_value,
)
from .problems import LinearDAEProblem

DENSE_COLUMN_LIMIT = 2000


class Method(str, enum.Enum):
    LEAST_SQUARES = "lsq"
    STANDARD = "standard"
    CONTINUOUS = "continuous"


class Weighting(str, enum.Enum):
    GRAM = "gram"
    DIAGONAL = "diagonal"


class SchemeError(ValueError):
    pass


class IndexRegimeWarning(UserWarning):
    """M < N + mu: fewer points than the convergence theory covers."""


@dataclass(frozen=True)
class CollocationScheme:
    N: int
    M: int
    nodes: NodeSet
    method: Method = Method.LEAST_SQUARES
    weighting: Weighting = Weighting.GRAM
    quad_order: Optional[int] = None
    bc_weight: float = 1.0
    gram: Optional[GramMatrix] = field(default=None, repr=False)

    @property
    def eval_points(self) -> np.ndarray:
        if self.method is Method.CONTINUOUS:
            return gauss_legendre_rule(self.quad_order).nodes
        return self.nodes.taus


def make_scheme(N, M=None, nodes="gauss", method="lsq", weighting="gram", quad_order=None,
                bc_weight=1.0) -> CollocationScheme:
    """Validated collocation scheme.

    Defaults to ``M = N + 1`` (``M = N`` for standard collocation) and, for
    the continuous variant, ``quad_order = max(2N + 3, M)``.
    """
    method = Method(method)
    weighting = Weighting(weighting)
    N = int(N)
    if N < 1:
        raise SchemeError("N must be >= 1")
    if M is None:
        M = N if method is Method.STANDARD else N + 1
    M = int(M)
    if method is Method.LEAST_SQUARES and M < N + 1:
        raise SchemeError(f"least-squares collocation needs M >= N + 1, got N={N}, M={M}")
    if method is Method.STANDARD and M != N:
        raise SchemeError(f"standard collocation needs M == N, got N={N}, M={M}")
    if method is Method.CONTINUOUS:
        quad_order = max(2 * N + 3, M) if quad_order is None else int(quad_order)
        if quad_order < N + 2:
            raise SchemeError(f"continuous least squares needs quad_order >= N + 2, got {quad_order}")
    elif quad_order is not None:
        raise SchemeError("quad_order only applies to the continuous method")
    node_set = make_nodes(M, NodeFamily(nodes))
    gram = lagrange_gram(node_set) if method is Method.LEAST_SQUARES else None
    return CollocationScheme(N=N, M=M, nodes=node_set, method=method, weighting=weighting,
                             quad_order=quad_order, bc_weight=float(bc_weight), gram=gram)


def collocation_points(partition: Partition, nodes) -> np.ndarray:
    """``t_ji = t_{j-1} + tau_i h_j`` as an ``(n, M)`` array."""
    taus = nodes.taus if isinstance(nodes, NodeSet) else np.asarray(nodes, dtype=float)
    return partition.nodes[:-1, None] + partition.steps[:, None] * taus[None, :]


@dataclass
class DiscreteLSSystem:
    """Block-structured collocation system.

    ``blocks[j]`` holds the rows of subinterval ``j`` restricted to its
    ``W = N*m + k`` contiguous columns starting at ``space.block_start(j)``.
    Boundary (or initial-value) rows act on ``e_0`` and ``e_n`` only.
    """

    space: AnsatzSpace
    blocks: np.ndarray  # (n, rows_per_block, W)
    block_rhs: np.ndarray  # (n, rows_per_block)
    bc_left: np.ndarray  # (l, k) acting on e_0
    bc_right: np.ndarray  # (l, k) acting on e_n
    bc_rhs: np.ndarray  # (l,)

    @property
    def rows_per_block(self) -> int:
        return self.blocks.shape[1]

    @property
    def shape(self):
        return (self.space.n * self.rows_per_block + len(self.bc_rhs), self.space.dim)

    def row_ranges(self):
        r = self.rows_per_block
        return [(j * r, (j + 1) * r) for j in range(self.space.n)]

    def to_dense(self):
        sp = self.space
        rows, cols = self.shape
        mat = np.zeros((rows, cols))
        r = self.rows_per_block
        W = sp.local_width
        for j in range(sp.n):
            s = sp.block_start(j)
            mat[j * r:(j + 1) * r, s:s + W] = self.blocks[j]
        base = sp.n * r
        if len(self.bc_rhs):
            mat[base:, sp.endpoint_columns(0)] += self.bc_left
            mat[base:, sp.endpoint_columns(sp.n)] += self.bc_right
        rhs = np.concatenate([self.block_rhs.ravel(), self.bc_rhs])
        return mat, rhs

    def extended_residual(self, coef):
        """``rhs - matrix @ coef`` per block and for the boundary rows,
        accumulated in extended precision."""
        sp = self.space
        ld = np.longdouble
        local = sp.local_coefficients(coef).astype(ld)
        blocks = (self.block_rhs.astype(ld)
                  - np.einsum("jrw,jw->jr", self.blocks.astype(ld), local)).astype(float)
        bc = (self.bc_rhs.astype(ld)
              - self.bc_left.astype(ld) @ coef[sp.endpoint_columns(0)].astype(ld)
              - self.bc_right.astype(ld) @ coef[sp.endpoint_columns(sp.n)].astype(ld)).astype(float)
        return blocks, bc

    def residual(self, coef):
        """Residual vector ``matrix @ coef - rhs`` without forming the matrix."""
        sp = self.space
        local = sp.local_coefficients(coef)
        res = np.einsum("jrw,jw->jr", self.blocks, local) - self.block_rhs
        bc = (self.bc_left @ coef[sp.endpoint_columns(0)]
              + self.bc_right @ coef[sp.endpoint_columns(sp.n)] - self.bc_rhs)
        return np.concatenate([res.ravel(), bc])


def _check_compatible(problem: LinearDAEProblem, space: AnsatzSpace):
    if problem.m != space.m or tuple(problem.diff_components) != tuple(space.diff_components):
        raise ValueError(
            f"problem (m={problem.m}, D={problem.diff_components}) does not match "
            f"space (m={space.m}, D={space.diff_components})"
        )
    if not problem.kernel_condition_holds():
        raise ValueError("boundary matrices act on algebraic components")


def _raw_blocks(problem: LinearDAEProblem, space: AnsatzSpace, taus):
    """Unweighted residual rows at ``t_{j-1} + tau h_j``: arrays of shape
    ``(n, P, m, W)`` and ``(n, P, m)``."""
    part = space.partition
    h = part.steps
    t = part.nodes[:-1, None] + h[:, None] * taus[None, :]
    V, dD = space.local_basis(taus)
    A = problem.A(t)  # (n, P, m, k)
    B = problem.B(t)  # (n, P, m, m)
    g = problem.g(t)
    rows = (np.einsum("jpic,pcw->jpiw", A, dD) / h[:, None, None, None]
            + np.einsum("jpic,pcw->jpiw", B, V))
    return rows, g


def _bc_rows(problem, space, weight):
    dc = list(space.diff_components)
    return weight * problem.G_a[:, dc], weight * problem.G_b[:, dc], weight * problem.d


def assemble(problem: LinearDAEProblem, space: AnsatzSpace, scheme: CollocationScheme) -> DiscreteLSSystem:
    """Weighted overdetermined system whose squared residual is the
    discrete functional (``lsq``) or its quadrature counterpart
    (``continuous``)."""
    if scheme.method is Method.STANDARD:
        raise SchemeError("use assemble_standard for square collocation")
    _check_compatible(problem, space)
    if scheme.N != space.N:
        raise ValueError(f"scheme degree {scheme.N} != space degree {space.N}")
    n, m, W = space.n, space.m, space.local_width
    h = space.partition.steps
    taus = scheme.eval_points
    rows, g = _raw_blocks(problem, space, taus)
    P = len(taus)
    if scheme.method is Method.LEAST_SQUARES:
        scale = np.sqrt(h / scheme.M)
        rows = rows * scale[:, None, None, None]
        g = g * scale[:, None, None]
        if scheme.weighting is Weighting.GRAM:
            C = scheme.gram.cholesky
            rows = np.einsum("qp,jpiw->jqiw", C, rows)
            g = np.einsum("qp,jpi->jqi", C, g)
    else:
        w = gauss_legendre_rule(scheme.quad_order).weights
        scale = np.sqrt(h[:, None] * w[None, :])
        rows = rows * scale[:, :, None, None]
        g = g * scale[:, :, None]
    bl, br, d = _bc_rows(problem, space, scheme.bc_weight)
    return DiscreteLSSystem(space, rows.reshape(n, P * m, W), g.reshape(n, P * m), bl, br, d)


def assemble_standard(problem: LinearDAEProblem, space: AnsatzSpace, scheme: CollocationScheme,
                      ics=None) -> DiscreteLSSystem:
    """Square collocation system: unweighted residual rows at ``M = N``
    points per subinterval plus ``k`` rows pinning ``D x(t_0) = ics``."""
    if scheme.method is not Method.STANDARD:
        raise SchemeError("assemble_standard needs a standard scheme")
    _check_compatible(problem, space)
    if scheme.M != space.N:
        raise ValueError(f"standard collocation needs M == N, got M={scheme.M}, N={space.N}")
    if ics is None:
        if problem.exact is None:
            raise ValueError("initial values required for problems without an exact solution")
        ics = np.asarray(problem.exact(problem.a), dtype=float)[list(space.diff_components)]
    ics = np.asarray(ics, dtype=float).reshape(-1)
    if ics.shape != (space.k,):
        raise ValueError(f"need {space.k} initial values, got {ics.shape[0]}")
    n, m, W = space.n, space.m, space.local_width
    rows, g = _raw_blocks(problem, space, scheme.nodes.taus)
    k = space.k
    return DiscreteLSSystem(space, rows.reshape(n, scheme.M * m, W), g.reshape(n, scheme.M * m),
                            np.eye(k), np.zeros((k, k)), ics)


# --- structured least squares ------------------------------------------------


def _triangularize(work):
    """R factor of ``work`` (rows padded with zeros up to the column count)."""
    rows, cols = work.shape
    if rows < cols:
        work = np.vstack([work, np.zeros((cols - rows, cols))])
    return scipy.linalg.qr(work, mode="r", overwrite_a=True, check_finite=False)[0][:cols]


def solve_abd(system: DiscreteLSSystem, rank_tol: float = RANK_TOL, refine: int = 1):
    """Least-squares solution by a block Householder sweep.

    Subinterval blocks are processed left to right. Each stage triangularizes
    the carried rows together with the next block, eliminating that
    subinterval's interior unknowns and its left shared endpoint; ``e_0`` is
    carried along so that two-point boundary rows can be applied at the end.
    Cost is linear in the number of subintervals. ``refine`` sweeps of
    iterative refinement follow, with residuals in extended precision.

    Returns ``(coef, residual_norm, diag_ratio)`` where ``diag_ratio`` is
    ``min |R_ii| / max |R_ii|`` over all triangular factors, a cheap rank
    indicator. ``coef`` is None if that ratio is below ``rank_tol``.
    """
    coef, ratio = _abd_sweep(system, system.block_rhs, system.bc_rhs, rank_tol)
    if coef is None:
        return None, None, ratio
    for _ in range(refine):
        r_blocks, r_bc = system.extended_residual(coef)
        delta, _ = _abd_sweep(system, r_blocks, r_bc, rank_tol)
        coef = coef + delta
    return coef, float(np.linalg.norm(system.residual(coef))), ratio


def _abd_sweep(system, block_rhs, bc_rhs, rank_tol):
    sp = system.space
    n, k, p = sp.n, sp.k, sp.interior_size
    stages = []
    carry = np.zeros((0, 2 * k))
    carry_rhs = np.zeros(0)
    diag_min, diag_max = np.inf, 0.0
    for j in range(n):
        blk = system.blocks[j]
        rhs = block_rhs[j]
        if j == 0:
            ne = p
            work = np.hstack([blk[:, k:k + p], blk[:, :k], blk[:, k + p:], rhs[:, None]])
        else:
            ne = k + p
            rb = blk.shape[0]
            rc = carry.shape[0]
            work = np.zeros((rc + rb, ne + 2 * k + 1))
            work[:rc, :k] = carry[:, k:]
            work[:rc, ne:ne + k] = carry[:, :k]
            work[:rc, -1] = carry_rhs
            work[rc:, :ne] = blk[:, :ne]
            work[rc:, ne + k:ne + 2 * k] = blk[:, ne:]
            work[rc:, -1] = rhs
        R = _triangularize(work)
        d = np.abs(np.diag(R)[:ne])
        if ne:
            diag_min, diag_max = min(diag_min, d.min()), max(diag_max, d.max())
        stages.append((R[:ne, :ne], R[:ne, ne:ne + 2 * k], R[:ne, -1]))
        carry = R[ne:ne + 2 * k, ne:ne + 2 * k]
        carry_rhs = R[ne:ne + 2 * k, -1]

    # final small problem in (e_0, e_n), boundary rows appended
    final = np.vstack([
        np.hstack([carry, carry_rhs[:, None]]),
        np.hstack([system.bc_left, system.bc_right, bc_rhs[:, None]]),
    ])
    R = _triangularize(final)
    d = np.abs(np.diag(R)[:2 * k])
    diag_min, diag_max = min(diag_min, d.min()), max(diag_max, d.max())
    ratio = diag_min / diag_max if diag_max > 0 else 0.0
    if ratio <= rank_tol:
        return None, ratio
    keep = scipy.linalg.solve_triangular(R[:2 * k, :2 * k], R[:2 * k, -1])
    e0, right = keep[:k], keep[k:]

    coef = np.zeros(sp.dim)
    coef[sp.endpoint_columns(0)] = e0
    coef[sp.endpoint_columns(n)] = right
    for j in range(n - 1, -1, -1):
        R11, R12, q = stages[j]
        elim = scipy.linalg.solve_triangular(R11, q - R12 @ np.concatenate([e0, right]))
        s = sp.block_start(j)
        if j == 0:
            coef[s + k:s + k + p] = elim
        else:
            coef[s:s + k + p] = elim
            right = elim[:k]
    return coef, ratio


# --- driver --------------------------------------------------------------------


@dataclass
class SolveReport:
    solution: PwPolySolution
    psi_value: float
    residual_norm: float
    sigma_min: Optional[float]
    sigma_max: Optional[float]
    assembly_time: float
    solve_time: float
    shape: tuple
    path: str
    notes: list = field(default_factory=list)

    @property
    def condition(self):
        if self.sigma_min is None or not self.sigma_min:
            return None
        return self.sigma_max / self.sigma_min


def solve(problem: LinearDAEProblem, space: AnsatzSpace, scheme: CollocationScheme, *,
          ics=None, solver: str = "auto", diagnostics: Optional[bool] = None,
          strict: bool = True) -> SolveReport:
    """Assemble and solve one collocation problem.

    ``solver`` is ``"auto"`` (dense below 2000 columns, structured above),
    ``"dense"`` or ``"structured"``. Singular values are computed when
    ``diagnostics`` is true; by default only on the dense path.
    With ``strict`` a rank-deficient least-squares system raises
    :class:`RankDeficientError`.
    """
    notes = []
    if scheme.method is not Method.STANDARD and scheme.M < scheme.N + problem.mu:
        msg = (f"M={scheme.M} < N + mu = {scheme.N + problem.mu}: below the point count "
               "covered by the convergence theory")
        notes.append(msg)
        warnings.warn(msg, IndexRegimeWarning, stacklevel=2)

    t0 = time.perf_counter()
    if scheme.method is Method.STANDARD:
        system = assemble_standard(problem, space, scheme, ics=ics)
    else:
        system = assemble(problem, space, scheme)
    t1 = time.perf_counter()

    rows, cols = system.shape
    if solver == "auto":
        solver = "dense" if cols < DENSE_COLUMN_LIMIT else "structured"
    if solver not in ("dense", "structured"):
        raise ValueError(f"unknown solver {solver!r}")
    if diagnostics is None:
        diagnostics = solver == "dense"
    if scheme.method is Method.STANDARD:
        solver = "dense"

    sigma_min = sigma_max = None
    coef = None
    if solver == "structured":
        coef, res, ratio = solve_abd(system)
        if coef is None:
            notes.append(f"structured sweep found diagonal ratio {ratio:.2e}; using dense fallback")
            solver = "dense"
    mat = rhs = None
    if solver == "dense" or diagnostics:
        mat, rhs = system.to_dense()
    if solver == "dense":
        if scheme.method is Method.STANDARD:
            try:
                lu = scipy.linalg.lu_factor(mat, check_finite=False)
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise RankDeficientError(f"standard collocation matrix is singular: {exc}") from exc
            if np.any(np.diag(lu[0]) == 0.0):
                raise RankDeficientError("standard collocation matrix is exactly singular")
            coef = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
            res = float(np.linalg.norm(mat @ coef - rhs))
        else:
            out = lstsq_detailed(mat, rhs)
            if out.rank_deficient:
                smin, smax = min_singular_value(mat)
                if strict:
                    raise RankDeficientError(
                        f"collocation system {mat.shape} has numerical rank {out.rank} < {cols}",
                        sigma_min=smin, sigma_max=smax)
                notes.append(f"rank deficient: rank {out.rank} < {cols}; minimum-norm solution")
            coef, res = out.solution, out.residual_norm
    if diagnostics:
        sigma_min, sigma_max = min_singular_value(mat)
        if scheme.method is Method.STANDARD and sigma_max and sigma_min / sigma_max < RANK_TOL:
            notes.append(f"standard collocation matrix nearly singular "
                         f"(sigma_min/sigma_max = {sigma_min / sigma_max:.2e})")
    t2 = time.perf_counter()
    return SolveReport(
        solution=PwPolySolution(space, coef), psi_value=res**2, residual_norm=res,
        sigma_min=sigma_min, sigma_max=sigma_max, assembly_time=t1 - t0, solve_time=t2 - t1,
        shape=(rows, cols), path=solver, notes=notes,
    )


def space_for(problem: LinearDAEProblem, partition: Partition, N: int) -> AnsatzSpace:
    return AnsatzSpace(partition, N, problem.m, problem.diff_components)
