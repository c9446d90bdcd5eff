"""Meshes, the mixed-continuity ansatz space and piecewise polynomial
solutions.

Differentiated components use a C0 spectral-element basis on each
subinterval (two endpoint hat functions plus integrated-Legendre bubbles),
with endpoint unknowns shared between neighbours. Algebraic components use
shifted Legendre polynomials of degree ``N - 1`` and may jump at mesh nodes.

Global unknown ordering::

    [e_0, I_1, e_1, I_2, e_2, ..., I_n, e_n]

where ``e_j`` holds the ``k`` differentiated values at ``t_j`` and ``I_j``
the interior unknowns of subinterval ``j`` (bubbles first, component-major,
then algebraic Legendre coefficients). The columns touched by subinterval
``j`` are therefore one contiguous range of width ``N*m + k``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .numkit import NodeSet, gauss_legendre_rule, lagrange_eval, legendre


@dataclass(frozen=True)
class Partition:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or len(nodes) < 2:
            raise ValueError("a partition needs at least two nodes")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("partition nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @property
    def a(self) -> float:
        return float(self.nodes[0])

    @property
    def b(self) -> float:
        return float(self.nodes[-1])

    @property
    def n(self) -> int:
        return len(self.nodes) - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def h_max(self) -> float:
        return float(self.steps.max())

    @property
    def h_min(self) -> float:
        return float(self.steps.min())

    @property
    def ratio(self) -> float:
        return self.h_max / self.h_min

    def locate(self, t):
        """Subinterval index (0-based) for each ``t``; intervals are half-open
        ``[t_{j-1}, t_j)`` except the last, which is closed at ``b``."""
        t = np.asarray(t, dtype=float)
        tol = 1e-14 * max(1.0, abs(self.a), abs(self.b))
        if np.any(t < self.a - tol) or np.any(t > self.b + tol):
            raise ValueError(f"t outside [{self.a}, {self.b}]")
        j = np.searchsorted(self.nodes, t, side="right") - 1
        return np.clip(j, 0, self.n - 1)


def uniform_partition(a: float, b: float, n: int) -> Partition:
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    if n < 1:
        raise ValueError("n must be positive")
    return Partition(np.linspace(a, b, n + 1))


def _local_shapes(N, tau):
    """Reference-interval shape functions.

    Returns ``(phi, dphi, psi, dpsi)``: ``phi`` are the ``N + 1`` C0 functions
    ``[1 - tau, bubbles..., tau]`` and ``psi`` the ``N`` Legendre functions,
    each with its tau-derivative. Arrays have shape ``(count,) + tau.shape``.
    """
    tau = np.asarray(tau, dtype=float)
    xi = 2.0 * tau - 1.0
    P, dP = legendre(max(N, 1), xi)
    phi = np.empty((N + 1,) + tau.shape)
    dphi = np.empty_like(phi)
    phi[0], dphi[0] = 1.0 - tau, -1.0
    phi[N], dphi[N] = tau, 1.0
    for i in range(1, N):
        phi[i] = (P[i + 1] - P[i - 1]) / (2 * i + 1)
        dphi[i] = 2.0 * P[i]
    psi = P[:N]
    dpsi = 2.0 * dP[:N]
    return phi, dphi, psi, dpsi


@dataclass(frozen=True)
class AnsatzSpace:
    partition: Partition
    N: int
    m: int
    diff_components: tuple

    def __post_init__(self):
        dc = tuple(int(c) for c in self.diff_components)
        object.__setattr__(self, "diff_components", dc)
        if self.N < 1:
            raise ValueError("polynomial degree N must be >= 1")
        if len(set(dc)) != len(dc) or any(c < 0 or c >= self.m for c in dc):
            raise ValueError(f"invalid differentiated components {dc} for m={self.m}")
        if len(dc) == 0:
            raise ValueError("at least one differentiated component is required")

    @property
    def k(self) -> int:
        return len(self.diff_components)

    @cached_property
    def alg_components(self) -> tuple:
        return tuple(c for c in range(self.m) if c not in self.diff_components)

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def interior_size(self) -> int:
        return self.k * (self.N - 1) + (self.m - self.k) * self.N

    @property
    def stride(self) -> int:
        return self.k + self.interior_size

    @property
    def local_width(self) -> int:
        return self.N * self.m + self.k

    @property
    def dim(self) -> int:
        return self.n * self.N * self.m + self.k

    def block_start(self, j: int) -> int:
        """First global column of subinterval ``j`` (0-based)."""
        return j * self.stride

    def endpoint_columns(self, j: int) -> np.ndarray:
        """Global columns of the differentiated values at mesh node ``t_j``."""
        return j * self.stride + np.arange(self.k)

    def local_basis(self, tau, h=1.0):
        """Local basis tensors on one subinterval.

        Returns ``V`` of shape ``(P, m, W)`` with ``V[p, c, w]`` the value of
        component ``c`` contributed by local column ``w`` at ``tau[p]``, and
        ``dD`` of shape ``(P, k, W)`` holding the t-derivatives of the
        differentiated components (tau-derivative divided by ``h``).
        """
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        N, k, m = self.N, self.k, self.m
        phi, dphi, psi, _ = _local_shapes(N, tau)
        P = len(tau)
        W = self.local_width
        V = np.zeros((P, m, W))
        dD = np.zeros((P, k, W))
        nb = N - 1
        for ci, comp in enumerate(self.diff_components):
            cols = [ci] + [k + ci * nb + b for b in range(nb)] + [k + self.interior_size + ci]
            for s, col in enumerate(cols):
                V[:, comp, col] = phi[s]
                dD[:, ci, col] = dphi[s] / h
        off = k + k * nb
        for ai, comp in enumerate(self.alg_components):
            for p in range(N):
                V[:, comp, off + ai * N + p] = psi[p]
        return V, dD

    def local_coefficients(self, coef):
        """View of a global coefficient vector as an ``(n, W)`` array of local
        coefficient blocks (endpoint values duplicated)."""
        coef = np.asarray(coef, dtype=float)
        if coef.shape != (self.dim,):
            raise ValueError(f"coefficient vector has shape {coef.shape}, expected ({self.dim},)")
        idx = self.block_start(np.arange(self.n))[:, None] + np.arange(self.local_width)
        return coef[idx]

    def zero(self) -> "PwPolySolution":
        return PwPolySolution(self, np.zeros(self.dim))


@dataclass(frozen=True)
class PwPolySolution:
    space: AnsatzSpace
    coef: np.ndarray

    def __post_init__(self):
        coef = np.asarray(self.coef, dtype=float)
        if coef.shape != (self.space.dim,):
            raise ValueError(f"expected {self.space.dim} coefficients, got {coef.shape}")
        object.__setattr__(self, "coef", coef)

    def _evaluate(self, t, derivative):
        sp = self.space
        t_arr = np.asarray(t, dtype=float)
        flat = np.atleast_1d(t_arr).ravel()
        j = sp.partition.locate(flat)
        nodes = sp.partition.nodes
        h = sp.partition.steps[j]
        tau = (flat - nodes[j]) / h
        local = sp.local_coefficients(self.coef)[j]  # (P, W)
        V, dD = sp.local_basis(tau)
        if derivative:
            out = np.einsum("pcw,pw->pc", dD, local) / h[:, None]
        else:
            out = np.einsum("pcw,pw->pc", V, local)
        if t_arr.ndim == 0:
            return out[0]
        return out.reshape(t_arr.shape + (out.shape[-1],))

    def __call__(self, t):
        """Component values at ``t``; shape ``t.shape + (m,)``."""
        return self._evaluate(t, derivative=False)

    def Dx_prime(self, t):
        """Derivatives of the differentiated components; shape ``t.shape + (k,)``."""
        return self._evaluate(t, derivative=True)

    def limits(self, j):
        """Left and right limits of all components at interior node ``t_j``."""
        sp = self.space
        local = sp.local_coefficients(self.coef)
        V1, _ = sp.local_basis([1.0])
        V0, _ = sp.local_basis([0.0])
        left = V1[0] @ local[j - 1]
        right = V0[0] @ local[j]
        return left, right


def eval_solution(x: PwPolySolution, t):
    return x(t)


def eval_Dx_prime(x: PwPolySolution, t):
    return x.Dx_prime(t)


def from_local_function(space: AnsatzSpace, values):
    """Build a solution from per-subinterval coefficient blocks ``values``
    of shape ``(n, W)``; shared endpoint entries are taken from the block on
    the right (the last endpoint from the last block)."""
    coef = np.zeros(space.dim)
    W = space.local_width
    for j in range(space.n):
        s = space.block_start(j)
        coef[s : s + W] = values[j]
    return PwPolySolution(space, coef)


def interpolate_reference(space: AnsatzSpace, f, f_D=None, nodes=None) -> PwPolySolution:
    """Interpolant ``p_*`` of ``f`` in the ansatz space.

    Every component interpolates ``f`` at ``N`` interior nodes per subinterval
    (Gauss nodes by default). Differentiated components are additionally
    continuous and anchored at ``t_0`` to ``f_D(t_0)`` (``f`` restricted to
    the differentiated components if ``f_D`` is not given).
    """
    N, k = space.N, space.k
    taus = gauss_legendre_rule(N).nodes if nodes is None else np.asarray(nodes, dtype=float)
    if len(taus) != N:
        raise ValueError(f"need exactly N={N} interpolation nodes")
    part = space.partition
    dc = list(space.diff_components)
    ac = list(space.alg_components)
    nb = N - 1
    phi, _, psi, _ = _local_shapes(N, taus)  # (N+1, N), (N, N)
    anchor = np.asarray(f_D(part.a), dtype=float) if f_D is not None else np.asarray(f(part.a), dtype=float)[dc]

    coef = np.zeros(space.dim)
    coef[space.endpoint_columns(0)] = anchor
    psi_inv = np.linalg.inv(psi.T) if ac else None
    # unknowns per differentiated component: bubbles then right endpoint value
    diff_mat = phi[1:].T
    diff_inv = np.linalg.inv(diff_mat)
    left = anchor.copy()
    for j in range(part.n):
        h = part.steps[j]
        vals = np.array([np.asarray(f(part.nodes[j] + tau * h), dtype=float) for tau in taus])  # (N, m)
        s = space.block_start(j)
        rhs = vals[:, dc] - np.outer(phi[0], left)  # (N, k)
        sol = diff_inv @ rhs  # (N, k): rows = bubbles..., right
        for ci in range(k):
            coef[s + k + ci * nb : s + k + (ci + 1) * nb] = sol[:nb, ci]
        right = sol[nb]
        coef[space.endpoint_columns(j + 1)] = right
        if ac:
            alg = psi_inv @ vals[:, ac]  # (N, m-k)
            off = s + k + k * nb
            for ai in range(len(ac)):
                coef[off + ai * N : off + (ai + 1) * N] = alg[:, ai]
        left = right
    return PwPolySolution(space, coef)


class LocalInterpolant:
    """Polynomial of degree ``M - 1`` through ``(t_left + tau_i h, w_i)``."""

    def __init__(self, nodes: NodeSet, values, t_left: float, h: float):
        self.nodes = nodes
        self.values = np.asarray(values, dtype=float)
        self.t_left = float(t_left)
        self.h = float(h)

    def __call__(self, t):
        tau = (np.asarray(t, dtype=float) - self.t_left) / self.h
        L = lagrange_eval(self.nodes, tau)
        return np.tensordot(self.values, L, axes=([0], [0]))


def restrict_interpolate(nodes: NodeSet, w, t_left: float = 0.0, h: float = 1.0) -> LocalInterpolant:
    """Per-subinterval interpolation of ``w`` at the collocation abscissae
    ``t_left + tau_i * h``."""
    ts = t_left + nodes.taus * h
    values = np.array([w(t) for t in ts])
    return LocalInterpolant(nodes, values, t_left, h)
