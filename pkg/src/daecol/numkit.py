"""Small dense numerical kernels: quadrature, Lagrange bases, Gram matrices
and least-squares solves with rank diagnostics."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.special

RANK_TOL = 1e-13
MAX_GAUSS_ORDER = 64


class RankDeficientError(np.linalg.LinAlgError):
    """Raised when a system that must have full column rank does not."""

    def __init__(self, message, sigma_min=None, sigma_max=None):
        super().__init__(message)
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max


class NodeFamily(str, enum.Enum):
    UNIFORM = "uniform"
    GAUSS = "gauss"


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature rule on the reference interval (0, 1)."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return len(self.nodes)

    def integrate(self, values, axis=0):
        return np.tensordot(self.weights, values, axes=([0], [axis]))


@dataclass(frozen=True)
class NodeSet:
    taus: np.ndarray
    family: NodeFamily

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=float)
        if taus.ndim != 1 or len(taus) == 0:
            raise ValueError("node set must be a non-empty 1-d array")
        if np.any(taus <= 0.0) or np.any(taus >= 1.0):
            raise ValueError("nodes must lie in the open interval (0, 1)")
        if np.any(np.diff(taus) <= 0.0):
            raise ValueError("nodes must be strictly increasing")
        object.__setattr__(self, "taus", taus)

    @property
    def count(self) -> int:
        return len(self.taus)


@dataclass(frozen=True)
class GramMatrix:
    """Lagrange Gram matrix ``Lambda[i, k] = int_0^1 l_i l_k`` and the upper
    Cholesky factor ``C`` of ``M * Lambda`` (``C.T @ C == M * Lambda``)."""

    entries: np.ndarray
    cholesky: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def norm_bounds(self):
        """Extreme eigenvalues of ``M * Lambda`` (the discrete norm-equivalence
        constants)."""
        ev = np.linalg.eigvalsh(self.size * self.entries)
        return ev[0], ev[-1]


def legendre(n, x):
    """Values and derivatives of Legendre polynomials ``P_0..P_n`` at ``x``.

    Returns two arrays of shape ``(n + 1,) + x.shape``.
    """
    x = np.asarray(x, dtype=float)
    p = np.zeros((n + 1,) + x.shape)
    dp = np.zeros_like(p)
    p[0] = 1.0
    if n >= 1:
        p[1] = x
        dp[1] = 1.0
    for k in range(2, n + 1):
        p[k] = ((2 * k - 1) * x * p[k - 1] - (k - 1) * p[k - 2]) / k
        # derivative recurrence avoids the 1/(1 - x^2) singularity at the ends
        dp[k] = dp[k - 2] + (2 * k - 1) * p[k - 1]
    return p, dp


def gauss_legendre_rule(order: int) -> QuadratureRule:
    """Gauss-Legendre rule with ``order`` points mapped to (0, 1), nodes
    ascending."""
    order = int(order)
    if order < 1 or order > MAX_GAUSS_ORDER:
        raise ValueError(f"Gauss order must be in [1, {MAX_GAUSS_ORDER}], got {order}")
    x, w = scipy.special.roots_legendre(order)
    nodes = 0.5 * (x + 1.0)
    if order % 2 == 1:
        nodes[order // 2] = 0.5
    return QuadratureRule(nodes=nodes, weights=0.5 * w)


def make_nodes(count: int, family) -> NodeSet:
    """Collocation nodes on (0, 1): ``i / (M + 1)`` or Gauss-Legendre."""
    family = NodeFamily(family)
    if count < 1:
        raise ValueError("node count must be positive")
    if family is NodeFamily.UNIFORM:
        taus = np.arange(1, count + 1) / (count + 1.0)
    else:
        taus = gauss_legendre_rule(count).nodes
    return NodeSet(taus=taus, family=family)


def lagrange_eval(nodes, tau, derivative=False):
    """Lagrange basis ``l_1..l_M`` (or derivatives) at points ``tau``.

    ``nodes`` may be a NodeSet or an array. Output has shape
    ``(M,) + np.shape(tau)``.
    """
    taus = nodes.taus if isinstance(nodes, NodeSet) else np.asarray(nodes, dtype=float)
    tau = np.asarray(tau, dtype=float)
    M = len(taus)
    out = np.empty((M,) + tau.shape)
    for i in range(M):
        others = np.delete(taus, i)
        denom = np.prod(taus[i] - others)
        if not derivative:
            num = np.ones_like(tau)
            for s in others:
                num = num * (tau - s)
            out[i] = num / denom
        else:
            acc = np.zeros_like(tau)
            for r in range(M - 1):
                term = np.ones_like(tau)
                for s_idx, s in enumerate(others):
                    if s_idx != r:
                        term = term * (tau - s)
                acc = acc + term
            out[i] = acc / denom
    return out


def lagrange_gram(nodes: NodeSet) -> GramMatrix:
    M = nodes.count
    rule = gauss_legendre_rule(M)
    L = lagrange_eval(nodes, rule.nodes)  # (M, Mq)
    lam = (L * rule.weights) @ L.T
    lam = 0.5 * (lam + lam.T)
    try:
        lower = np.linalg.cholesky(M * lam)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"Gram matrix for nodes {nodes.taus} is not numerically positive definite"
        ) from exc
    return GramMatrix(entries=lam, cholesky=lower.T)


def min_singular_value(matrix):
    """Smallest and largest singular values of a tall matrix."""
    s = scipy.linalg.svdvals(np.asarray(matrix, dtype=float))
    if len(s) == 0:
        return 0.0, 0.0
    return float(s[-1]), float(s[0])


@dataclass
class LstsqResult:
    solution: np.ndarray
    residual_norm: float
    rank: int
    rank_deficient: bool


def solve_lls(matrix, rhs, rank_tol: float = RANK_TOL, strict: bool = False):
    """Least-squares solve of ``matrix @ x ~= rhs``.

    Householder QR with column pivoting; if the pivoted diagonal indicates
    numerical rank below the column count, falls back to the SVD minimum-norm
    solution. With ``strict=True`` a rank deficiency raises
    :class:`RankDeficientError` instead.

    Returns ``(solution, residual_norm)``; use :func:`lstsq_detailed` for the
    rank information.
    """
    res = lstsq_detailed(matrix, rhs, rank_tol=rank_tol, strict=strict)
    return res.solution, res.residual_norm


def extended_residual(matrix, rhs, x):
    """``rhs - matrix @ x`` accumulated in extended precision (where the
    platform provides it), rounded back to double."""
    ld = np.longdouble
    return (np.asarray(rhs, dtype=ld) - np.asarray(matrix, dtype=ld) @ np.asarray(x, dtype=ld)).astype(float)


def lstsq_detailed(matrix, rhs, rank_tol: float = RANK_TOL, strict: bool = False,
                   refine: int = 1) -> LstsqResult:
    """Least-squares solve with rank information; see :func:`solve_lls`.

    ``refine`` steps of iterative refinement reuse the factorization with
    residuals computed in extended precision. This matters for the strongly
    ill-conditioned systems of higher-index problems.
    """
    A = np.asarray(matrix, dtype=float)
    b = np.asarray(rhs, dtype=float)
    if A.ndim != 2:
        raise ValueError("matrix must be 2-d")
    R_, C_ = A.shape
    if R_ < C_ or C_ < 1:
        raise ValueError(f"need rows >= cols >= 1, got {A.shape}")
    if b.shape != (R_,):
        raise ValueError(f"rhs has shape {b.shape}, expected ({R_},)")

    Q, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    # pivoted |R_kk| only estimates singular values; confirm with the SVD
    suspicious = diag[0] == 0.0 or diag[-1] <= rank_tol * diag[0] * 10
    if not suspicious:
        def apply(v):
            out = np.empty(C_)
            out[piv] = scipy.linalg.solve_triangular(R, Q.T @ v)
            return out
    else:
        U, s, Vt = scipy.linalg.svd(A, full_matrices=False)
        cutoff = rank_tol * s[0] if s[0] > 0 else 0.0
        rank = int(np.sum(s > cutoff))
        if strict and rank < C_:
            raise RankDeficientError(
                f"numerical rank {rank} < {C_} columns (sigma_min/sigma_max = "
                f"{s[-1] / s[0] if s[0] else 0.0:.3e})",
                sigma_min=float(s[-1]),
                sigma_max=float(s[0]),
            )
        if rank == C_:
            suspicious = False

        def apply(v):
            return Vt[:rank].T @ ((U[:, :rank].T @ v) / s[:rank])

    x = apply(b)
    for _ in range(refine):
        x = x + apply(extended_residual(A, b, x))
    rank = C_ if not suspicious else rank
    return LstsqResult(x, float(np.linalg.norm(A @ x - b)), rank, rank < C_)
