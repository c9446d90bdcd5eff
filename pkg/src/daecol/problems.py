"""Linear DAEs in properly stated form and the benchmark registry.

A problem is ``A(t) (D x)'(t) + B(t) x(t) = g(t)`` on ``[a, b]`` with ``D``
selecting the differentiated components, plus boundary rows
``G_a x(a) + G_b x(b) = d``. Coefficient callables accept scalar or array
``t`` and return arrays with the shape of ``t`` prepended.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional
from urllib.parse import parse_qsl

import numpy as np


def _stack(rows, t):
    """Turn a nested list of scalars/arrays into an array of shape
    ``t.shape + (len(rows), len(rows[0]))`` (or ``t.shape + (len(rows),)``)."""
    t = np.asarray(t, dtype=float)
    if rows and isinstance(rows[0], (list, tuple)):
        out = np.empty(t.shape + (len(rows), len(rows[0])))
        for i, row in enumerate(rows):
            for j, v in enumerate(row):
                out[..., i, j] = v
        return out
    out = np.empty(t.shape + (len(rows),))
    for i, v in enumerate(rows):
        out[..., i] = v
    return out


@dataclass(frozen=True)
class LinearDAEProblem:
    name: str
    a: float
    b: float
    m: int
    diff_components: tuple
    A: Callable
    B: Callable
    g: Callable
    G_a: np.ndarray
    G_b: np.ndarray
    d: np.ndarray
    mu: int
    exact: Optional[Callable] = None
    exact_Dprime: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "diff_components", tuple(int(c) for c in self.diff_components))
        G_a = np.atleast_2d(np.asarray(self.G_a, dtype=float)).reshape(-1, self.m)
        G_b = np.atleast_2d(np.asarray(self.G_b, dtype=float)).reshape(-1, self.m)
        d = np.asarray(self.d, dtype=float).reshape(-1)
        if not (G_a.shape[0] == G_b.shape[0] == d.shape[0]):
            raise ValueError("G_a, G_b and d must have the same number of rows")
        object.__setattr__(self, "G_a", G_a)
        object.__setattr__(self, "G_b", G_b)
        object.__setattr__(self, "d", d)

    @property
    def k(self) -> int:
        return len(self.diff_components)

    @property
    def l(self) -> int:
        return self.d.shape[0]

    @property
    def alg_components(self) -> tuple:
        return tuple(c for c in range(self.m) if c not in self.diff_components)

    @property
    def label(self) -> str:
        if not self.params:
            return self.name
        return self.name + "?" + "&".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}"
                                          for k, v in self.params.items())

    def residual(self, t, x, Dx_prime):
        """``A (Dx)' + B x - g`` for given values at (array) ``t``."""
        t = np.asarray(t, dtype=float)
        return (
            np.einsum("...ik,...k->...i", self.A(t), Dx_prime)
            + np.einsum("...ij,...j->...i", self.B(t), x)
            - self.g(t)
        )

    def exact_residual(self, t):
        if self.exact is None:
            raise ValueError(f"problem {self.name} has no exact solution")
        return self.residual(t, self.exact(t), self.exact_Dprime(t))

    def bc_residual(self, x_a, x_b):
        return self.G_a @ x_a + self.G_b @ x_b - self.d

    def kernel_condition_holds(self) -> bool:
        """Boundary matrices vanish on algebraic components (ker D in ker G)."""
        alg = list(self.alg_components)
        if not alg or self.l == 0:
            return True
        return bool(np.all(self.G_a[:, alg] == 0.0) and np.all(self.G_b[:, alg] == 0.0))


def build_index3_example(eta: float = -2.0) -> LinearDAEProblem:
    """Index-3 test DAE on [0, 1]; ``x_1`` is algebraic.

    x2' + x1 = g1,  t eta x2' + x3' + (eta + 1) x2 = g2,  t eta x2 + x3 = g3.
    """
    eta = float(eta)

    def A(t):
        return _stack([[1.0, 0.0], [eta * t, 1.0], [0.0, 0.0]], t)

    def B(t):
        return _stack([[1.0, 0.0, 0.0], [0.0, eta + 1.0, 0.0], [0.0, eta * t, 1.0]], t)

    def exact(t):
        t = np.asarray(t, dtype=float)
        return _stack([np.exp(-t) * np.sin(t), np.exp(-2 * t) * np.sin(t), np.exp(-t) * np.cos(t)], t)

    def exact_Dprime(t):
        t = np.asarray(t, dtype=float)
        dx2 = np.exp(-2 * t) * (np.cos(t) - 2 * np.sin(t))
        dx3 = -np.exp(-t) * (np.sin(t) + np.cos(t))
        return _stack([dx2, dx3], t)

    def g(t):
        t = np.asarray(t, dtype=float)
        x1, x2, x3 = np.moveaxis(exact(t), -1, 0)
        dx2, dx3 = np.moveaxis(exact_Dprime(t), -1, 0)
        return _stack([dx2 + x1, eta * t * dx2 + dx3 + (eta + 1) * x2, eta * t * x2 + x3], t)

    return LinearDAEProblem(
        name="index3_example", a=0.0, b=1.0, m=3, diff_components=(1, 2),
        A=A, B=B, g=g, G_a=np.zeros((0, 3)), G_b=np.zeros((0, 3)), d=np.zeros(0),
        mu=3, exact=exact, exact_Dprime=exact_Dprime, params={"eta": eta},
    )


def build_mehr_reduced(initial_conditions: bool = False) -> LinearDAEProblem:
    """First-order, index-3 form of a second-order DAE on [1, 2].

    Unknowns ``(w, v, x1, x2)`` with ``w = x1 + (t+1) x2`` and ``v = w'``::

        w' - v = 0
        v' + x1 + t x2 = g1
        t v' + (1+t) x1 + (t^2+t+1) x2 = g2
        w - x1 - (t+1) x2 = 0

    Row 3 minus t times row 2 gives ``w = g2 - t g1``, so the problem has no
    dynamical degrees of freedom. ``initial_conditions=True`` appends the
    two (consistent, redundant) rows ``w(1) = w_*(1)``, ``v(1) = v_*(1)``.
    """

    def A(t):
        return _stack([[1.0, 0.0], [0.0, 1.0], [0.0, t], [0.0, 0.0]], t)

    def B(t):
        t = np.asarray(t, dtype=float)
        return _stack(
            [
                [0.0, -1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, t],
                [0.0, 0.0, 1.0 + t, t * t + t + 1.0],
                [1.0, 0.0, -1.0, -(t + 1.0)],
            ],
            t,
        )

    def exact(t):
        t = np.asarray(t, dtype=float)
        x1, x2 = np.exp(-t), np.sin(t)
        w = x1 + (t + 1) * x2
        v = -np.exp(-t) + (t + 1) * np.cos(t) + np.sin(t)
        return _stack([w, v, x1, x2], t)

    def exact_Dprime(t):
        t = np.asarray(t, dtype=float)
        v = -np.exp(-t) + (t + 1) * np.cos(t) + np.sin(t)
        dv = np.exp(-t) + 2 * np.cos(t) - (t + 1) * np.sin(t)
        return _stack([v, dv], t)

    def g(t):
        t = np.asarray(t, dtype=float)
        _, _, x1, x2 = np.moveaxis(exact(t), -1, 0)
        dv = exact_Dprime(t)[..., 1]
        g1 = dv + x1 + t * x2
        g2 = t * dv + (1 + t) * x1 + (t * t + t + 1) * x2
        return _stack([0.0, g1, g2, 0.0], t)

    if initial_conditions:
        G_a = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
        d = exact(1.0)[:2]
    else:
        G_a, d = np.zeros((0, 4)), np.zeros(0)
    return LinearDAEProblem(
        name="mehr_reduced", a=1.0, b=2.0, m=4, diff_components=(0, 1),
        A=A, B=B, g=g, G_a=G_a, G_b=np.zeros_like(G_a), d=d,
        mu=3, exact=exact, exact_Dprime=exact_Dprime,
        params={"ics": int(initial_conditions)} if initial_conditions else {},
    )


def build_mixed_order_intro() -> LinearDAEProblem:
    """``x1'' + x1 = g1, x2' + x1 + x2 = g2`` reduced to first order in
    ``(x1, u = x1', x2)``; a regular ODE with three initial conditions."""

    def A(t):
        return _stack([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], t)

    def B(t):
        return _stack([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 1.0]], t)

    def exact(t):
        t = np.asarray(t, dtype=float)
        return _stack([np.cos(t), -np.sin(t), np.exp(-t)], t)

    def exact_Dprime(t):
        t = np.asarray(t, dtype=float)
        return _stack([-np.sin(t), -np.cos(t), -np.exp(-t)], t)

    def g(t):
        t = np.asarray(t, dtype=float)
        # g1 = x1'' + x1 = 0, g2 = x2' + x1 + x2 = cos t
        return _stack([0.0, 0.0, np.cos(t)], t)

    return LinearDAEProblem(
        name="mixed_order_intro", a=0.0, b=1.0, m=3, diff_components=(0, 1, 2),
        A=A, B=B, g=g, G_a=np.eye(3), G_b=np.zeros((3, 3)), d=exact(0.0),
        mu=1, exact=exact, exact_Dprime=exact_Dprime,
    )


def build_index1_demo() -> LinearDAEProblem:
    """``x1' + x1 = g1, x1 + x2 = g2`` on [0, 1] with ``x1(0)`` given."""

    def A(t):
        return _stack([[1.0], [0.0]], t)

    def B(t):
        return _stack([[1.0, 0.0], [1.0, 1.0]], t)

    def exact(t):
        t = np.asarray(t, dtype=float)
        return _stack([np.exp(-t), np.sin(t) - np.exp(-t)], t)

    def exact_Dprime(t):
        t = np.asarray(t, dtype=float)
        return _stack([-np.exp(-t)], t)

    def g(t):
        t = np.asarray(t, dtype=float)
        return _stack([0.0, np.sin(t)], t)

    return LinearDAEProblem(
        name="index1_demo", a=0.0, b=1.0, m=2, diff_components=(0,),
        A=A, B=B, g=g, G_a=[[1.0, 0.0]], G_b=[[0.0, 0.0]], d=[1.0],
        mu=1, exact=exact, exact_Dprime=exact_Dprime,
    )


def build_poly_exact_demo(N: int = 3) -> LinearDAEProblem:
    """Index-1 demo structure with polynomial solution
    ``x1 = t^N - t`` (degree N), ``x2 = 2 t^(N-1)`` (degree N-1)."""
    N = int(N)
    if N < 1:
        raise ValueError("N must be >= 1")

    def A(t):
        return _stack([[1.0], [0.0]], t)

    def B(t):
        return _stack([[1.0, 0.0], [1.0, 1.0]], t)

    def exact(t):
        t = np.asarray(t, dtype=float)
        return _stack([t**N - t, 2.0 * t ** (N - 1)], t)

    def exact_Dprime(t):
        t = np.asarray(t, dtype=float)
        return _stack([N * t ** (N - 1) - 1.0], t)

    def g(t):
        t = np.asarray(t, dtype=float)
        x1 = t**N - t
        return _stack([N * t ** (N - 1) - 1.0 + x1, x1 + 2.0 * t ** (N - 1)], t)

    return LinearDAEProblem(
        name="poly_exact_demo", a=0.0, b=1.0, m=2, diff_components=(0,),
        A=A, B=B, g=g, G_a=[[1.0, 0.0]], G_b=[[0.0, 0.0]], d=[0.0],
        mu=1, exact=exact, exact_Dprime=exact_Dprime, params={"N": N},
    )


_BUILDERS = {
    "index3_example": (build_index3_example, {"eta": float}),
    "mehr_reduced": (build_mehr_reduced, {"ics": lambda s: str(s).lower() in ("1", "true", "yes")}),
    "mixed_order_intro": (build_mixed_order_intro, {}),
    "index1_demo": (build_index1_demo, {}),
    "poly_exact_demo": (build_poly_exact_demo, {"N": int}),
}

ALIASES = {
    "index3": "index3_example",
    "mehr": "mehr_reduced",
    "mixed_order": "mixed_order_intro",
    "index1": "index1_demo",
    "poly_exact": "poly_exact_demo",
}

_KWARG_NAMES = {"mehr_reduced": {"ics": "initial_conditions"}}


def problem_names():
    return sorted(_BUILDERS)


def get_problem(ident: str, **overrides) -> LinearDAEProblem:
    """Resolve ``name`` or ``name?key=value&...`` to a problem instance.

    >>> get_problem("index3?eta=-2").params
    {'eta': -2.0}
    """
    name, _, query = ident.partition("?")
    name = ALIASES.get(name.strip(), name.strip())
    if name not in _BUILDERS:
        raise KeyError(f"unknown problem {ident!r}; known: {', '.join(problem_names())}")
    builder, conv = _BUILDERS[name]
    raw = dict(parse_qsl(query, strict_parsing=bool(query)))
    raw.update({k: str(v) for k, v in overrides.items() if v is not None})
    kwargs = {}
    for key, value in raw.items():
        if key not in conv:
            raise KeyError(f"problem {name} has no parameter {key!r}")
        kwargs[_KWARG_NAMES.get(name, {}).get(key, key)] = conv[key](value)
    return builder(**kwargs)


def registry_problems():
    """One default instance of every registered problem."""
    return [get_problem(name) for name in problem_names()]
