"""Per-edge utilities and per-node costs with their derivative calculus."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .graph import ConfigurationError, Network


class ScalarFunction:
    """A smooth function on [0, 1] with value, U', U'', and the inverse of U'.

    Subclasses work elementwise on arrays. ``d1_at_0``/``d1_at_1`` are the
    limits of the first derivative at the interval ends (possibly infinite);
    they decide where the KKT rate saturates.
    """

    def value(self, x):
        raise NotImplementedError

    def d1(self, x):
        raise NotImplementedError

    def d2(self, x):
        raise NotImplementedError

    def d1_inv(self, y):
        raise NotImplementedError

    d1_at_0: float
    d1_at_1: float


class LogUtility(ScalarFunction):
    """U(x) = a log x."""

    def __init__(self, scale: float = 1.0):
        if scale <= 0:
            raise ConfigurationError("log utility scale must be positive")
        self.scale = float(scale)
        self.d1_at_0 = np.inf
        self.d1_at_1 = self.scale

    def value(self, x):
        with np.errstate(divide="ignore"):
            return self.scale * np.log(x)

    def d1(self, x):
        return self.scale / x

    def d2(self, x):
        return -self.scale / np.square(x)

    def d1_inv(self, y):
        return self.scale / y

    def __repr__(self):
        return f"LogUtility({self.scale:g})"


class QuadCost(ScalarFunction):
    """C(x) = c x^2."""

    def __init__(self, c: float):
        if c <= 0:
            raise ConfigurationError("quadratic cost coefficient must be positive")
        self.c = float(c)
        self.d1_at_0 = 0.0
        self.d1_at_1 = 2 * self.c

    def value(self, x):
        return self.c * np.square(x)

    def d1(self, x):
        return 2 * self.c * np.asarray(x, dtype=float)

    def d2(self, x):
        return np.full(np.shape(x), 2 * self.c)

    def d1_inv(self, y):
        return np.asarray(y, dtype=float) / (2 * self.c)

    def __repr__(self):
        return f"QuadCost({self.c:g})"


class BarrierCost(ScalarFunction):
    """C(x) = c / (1 - x)."""

    def __init__(self, c: float = 1.0):
        if c <= 0:
            raise ConfigurationError("barrier cost coefficient must be positive")
        self.c = float(c)
        self.d1_at_0 = self.c
        self.d1_at_1 = np.inf

    def value(self, x):
        with np.errstate(divide="ignore"):
            return self.c / (1 - np.asarray(x, dtype=float))

    def d1(self, x):
        return self.c / np.square(1 - np.asarray(x, dtype=float))

    def d2(self, x):
        return 2 * self.c / (1 - np.asarray(x, dtype=float)) ** 3

    def d1_inv(self, y):
        # defined for y >= c
        return 1 - np.sqrt(self.c / np.asarray(y, dtype=float))

    def __repr__(self):
        return f"BarrierCost({self.c:g})"


class CustomFunction(ScalarFunction):
    """Closure-backed function; certified by ``certify`` when admitted to a spec."""

    def __init__(self, value: Callable, d1: Callable, d2: Callable, d1_inv: Callable,
                 d1_at_0: float, d1_at_1: float, name: str = "custom"):
        self._value, self._d1, self._d2, self._d1_inv = value, d1, d2, d1_inv
        self.d1_at_0, self.d1_at_1 = float(d1_at_0), float(d1_at_1)
        self.name = name

    def value(self, x):
        return self._value(np.asarray(x, dtype=float))

    def d1(self, x):
        return self._d1(np.asarray(x, dtype=float))

    def d2(self, x):
        return self._d2(np.asarray(x, dtype=float))

    def d1_inv(self, y):
        return self._d1_inv(np.asarray(y, dtype=float))

    def __repr__(self):
        return f"CustomFunction({self.name})"


def certify(f: ScalarFunction, kind: str, grid=None, h: float = 1e-6, rtol: float = 1e-6) -> None:
    """Check derivatives against central differences and the curvature sign.

    ``kind`` is ``"utility"`` (strictly concave) or ``"cost"`` (strictly convex).
    Raises ConfigurationError on failure.
    """
    x = np.linspace(0.05, 0.95, 91) if grid is None else np.asarray(grid, dtype=float)
    fd1 = (f.value(x + h) - f.value(x - h)) / (2 * h)
    fd2 = (f.d1(x + h) - f.d1(x - h)) / (2 * h)
    if not np.allclose(f.d1(x), fd1, rtol=rtol, atol=1e-8):
        raise ConfigurationError(f"{f!r}: first derivative disagrees with finite differences")
    if not np.allclose(f.d2(x), fd2, rtol=rtol, atol=1e-8):
        raise ConfigurationError(f"{f!r}: second derivative disagrees with finite differences")
    curv = f.d2(x)
    if kind == "utility" and not np.all(curv < 0):
        raise ConfigurationError(f"{f!r}: utility is not strictly concave")
    if kind == "cost" and not np.all(curv > 0):
        raise ConfigurationError(f"{f!r}: cost is not strictly convex")
    xs = np.linspace(0.01, 0.99, 99)
    if not np.allclose(f.d1_inv(f.d1(xs)), xs, rtol=0, atol=1e-10):
        raise ConfigurationError(f"{f!r}: d1_inv is not the inverse of d1")


def _groups(funcs) -> list[tuple[ScalarFunction, np.ndarray]]:
    out: dict[int, tuple[ScalarFunction, list[int]]] = {}
    for k, f in enumerate(funcs):
        out.setdefault(id(f), (f, []))[1].append(k)
    return [(f, np.array(idx, dtype=np.int64)) for f, idx in out.values()]


def _apply(groups, method: str, x: np.ndarray) -> np.ndarray:
    if len(groups) == 1:
        return getattr(groups[0][0], method)(x)
    out = np.empty(len(x))
    for f, idx in groups:
        out[idx] = getattr(f, method)(x[idx])
    return out


@dataclass(frozen=True, eq=False)
class ObjectiveSpec:
    """Utility per edge and cost per node, evaluated over node-edge vectors.

    All vectorized methods take and return full node-edge vectors; the node
    block goes through the costs, the edge block through the utilities.
    """

    costs: tuple[ScalarFunction, ...]
    utilities: tuple[ScalarFunction, ...]
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "_cost_groups", _groups(self.costs))
        object.__setattr__(self, "_util_groups", _groups(self.utilities))

    @property
    def n_nodes(self) -> int:
        return len(self.costs)

    def check(self, net: Network) -> None:
        if len(self.costs) != net.n_nodes or len(self.utilities) != net.n_edges:
            raise ConfigurationError(
                f"objective {self.name!r} sized for {len(self.costs)} nodes/{len(self.utilities)} edges, "
                f"network has {net.n_nodes}/{net.n_edges}"
            )

    def _split(self, vec):
        vec = np.asarray(vec, dtype=float)
        n = len(self.costs)
        return vec[:n], vec[n:]

    def cost(self, x_nodes):
        return _apply(self._cost_groups, "value", np.asarray(x_nodes, dtype=float))

    def utility(self, x_edges):
        return _apply(self._util_groups, "value", np.asarray(x_edges, dtype=float))

    def target(self, beta: float, rates) -> np.ndarray:
        """(-β C'(rate_i), β U'(rate_ij)): the fixed-point map of the parameter."""
        xn, xe = self._split(rates)
        return beta * np.concatenate(
            [-_apply(self._cost_groups, "d1", xn), _apply(self._util_groups, "d1", xe)]
        )

    def curvature(self, rates) -> np.ndarray:
        """(C''(rate_i), U''(rate_ij))."""
        xn, xe = self._split(rates)
        return np.concatenate([_apply(self._cost_groups, "d2", xn), _apply(self._util_groups, "d2", xe)])

    def kkt_rates(self, beta: float, theta) -> np.ndarray:
        """Rates maximizing the Lagrangian for fixed θ, clamped to [0, 1].

        Nodes: argmax_y -C(y) - (θ_i/β) y; edges: argmax_y U(y) - (θ_ij/β) y.
        Interior values are C'^{-1}(-θ_i/β) and U'^{-1}(θ_ij/β).
        """
        tn, te = self._split(theta)
        yn = np.empty(len(tn))
        for f, idx in self._cost_groups:
            arg = -tn[idx] / beta
            y = np.empty(len(idx))
            lo = arg <= f.d1_at_0
            hi = arg >= f.d1_at_1
            mid = ~(lo | hi)
            y[lo] = 0.0
            y[hi] = 1.0
            y[mid] = f.d1_inv(arg[mid])
            yn[idx] = y
        ye = np.empty(len(te))
        for f, idx in self._util_groups:
            arg = te[idx] / beta
            y = np.empty(len(idx))
            lo = arg >= f.d1_at_0
            hi = arg <= f.d1_at_1
            mid = ~(lo | hi)
            y[lo] = 0.0
            y[hi] = 1.0
            y[mid] = f.d1_inv(arg[mid])
            ye[idx] = y
        return np.clip(np.concatenate([yn, ye]), 0.0, 1.0)

    def kkt_slope(self, beta: float, theta) -> np.ndarray:
        """d(kkt_rates)/dθ componentwise; zero where the rate is saturated."""
        y = self.kkt_rates(beta, theta)
        curv = self.curvature(np.clip(y, 1e-300, 1 - 1e-16))
        n = len(self.costs)
        slope = np.empty(len(y))
        slope[:n] = -1.0 / (beta * curv[:n])
        slope[n:] = 1.0 / (beta * curv[n:])
        slope[(y <= 0.0) | (y >= 1.0)] = 0.0
        return slope

    def g_functions(self, beta: float, x) -> np.ndarray:
        """(β C''(C'^{-1}(-x_i/β)), -β U''(U'^{-1}(x_ij/β))), positive on the interior."""
        y = self.kkt_rates(beta, x)
        curv = self.curvature(y)
        n = len(self.costs)
        out = beta * curv
        out[n:] = -out[n:]
        return out


def _homogeneous(net_n: int, net_m: int, cost: ScalarFunction, util: ScalarFunction, name: str):
    return ObjectiveSpec((cost,) * net_n, (util,) * net_m, name)


BUILTIN_OBJECTIVES = ("C1", "C2", "line-example")


def builtin_objective(name: str, net: Network) -> ObjectiveSpec:
    """Log utility on every edge with one of the named cost families.

    ``C1``: C(x) = 2x^2; ``C2``: C(x) = 1/(1-x); ``line-example``: costs
    x^2, x^2, 3x^2 on a 3-node line.
    """
    log = LogUtility()
    if name == "C1":
        return _homogeneous(net.n_nodes, net.n_edges, QuadCost(2.0), log, name)
    if name == "C2":
        return _homogeneous(net.n_nodes, net.n_edges, BarrierCost(1.0), log, name)
    if name == "line-example":
        if net.n_nodes != 3:
            raise ConfigurationError("line-example objective needs exactly 3 nodes")
        unit = QuadCost(1.0)
        return ObjectiveSpec((unit, unit, QuadCost(3.0)), (log,) * net.n_edges, name)
    raise ConfigurationError(f"unknown objective {name!r}; expected one of {BUILTIN_OBJECTIVES}")


def custom_objective(net: Network, costs, utilities, name: str = "custom") -> ObjectiveSpec:
    """Objective from explicit per-node costs and per-edge utilities, certified first."""
    costs, utilities = tuple(costs), tuple(utilities)
    for f in {id(f): f for f in costs}.values():
        certify(f, "cost")
    for f in {id(f): f for f in utilities}.values():
        certify(f, "utility")
    spec = ObjectiveSpec(costs, utilities, name)
    spec.check(net)
    return spec


@dataclass(frozen=True)
class ClampBounds:
    theta_min: float
    theta_max: float
    rate_epsilon: float = 1e-4

    def __post_init__(self):
        if not self.theta_min < self.theta_max:
            raise ConfigurationError("theta_min must be below theta_max")
        if not 0 < self.rate_epsilon < 0.5:
            raise ConfigurationError("rate_epsilon must lie in (0, 0.5)")


def a1_bounds(spec: ObjectiveSpec, beta: float, eps: float = 0.05,
              rate_epsilon: float = 1e-4) -> ClampBounds:
    """Parameter box holding every fixed point whose rates lie in [eps, 1-eps]."""
    if not 0 < eps < 0.5:
        raise ConfigurationError("eps must lie in (0, 0.5)")
    lo, hi = np.array([eps]), np.array([1 - eps])
    u_lo = [float(f.d1(lo)[0]) for f in spec.utilities]
    u_hi = [float(f.d1(hi)[0]) for f in spec.utilities]
    c_hi = [float(f.d1(hi)[0]) for f in spec.costs]
    theta_max = beta * max(u_lo) if u_lo else 0.0
    candidates = [-beta * max(c_hi), 0.0]
    if u_hi:
        candidates.append(beta * min(u_hi))
    theta_min = min(candidates)
    if theta_max <= theta_min:
        theta_max = theta_min + 1.0
    return ClampBounds(theta_min, theta_max, rate_epsilon)
