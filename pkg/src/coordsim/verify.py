"""Property checks shared by ``coordsim verify`` and the test suite.

Each check returns a ``CheckResult``; none of them raise on a failed
property, only on a broken precondition.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import coord, game, oracle
from .graph import build_topology
from .objective import a1_bounds, builtin_objective


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.value:.3g} (threshold {self.threshold:g}) {self.detail}".rstrip()


def _line():
    net = build_topology("line", 3)
    return net, builtin_objective("line-example", net)


def _small_scenarios():
    for kind, n, obj in (("line", 3, "line-example"), ("star", 5, "C1"), ("complete", 4, "C1")):
        net = build_topology(kind, n)
        yield f"{kind}-{n}", net, builtin_objective(obj, net)


def _rel(a, b, floor=1e-8):
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor)))


def check_self_gradient(seed: int = 0, trials: int = 20, h: float = 1e-5) -> CheckResult:
    """∂s_n/∂θ_n = s_n(1 - s_n) against central differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _, net, _ in _small_scenarios():
        for _ in range(trials):
            th = rng.uniform(-2, 2, net.size)
            fd = np.empty(net.size)
            for k in range(net.size):
                e = np.zeros(net.size)
                e[k] = h
                fd[k] = (oracle.marginals(net, th + e)[k] - oracle.marginals(net, th - e)[k]) / (2 * h)
            worst = max(worst, _rel(oracle.marginal_self_gradient(net, th), fd))
    return CheckResult("self-gradient identity", worst < 1e-6, worst, 1e-6)


def check_dual_gradient(seed: int = 1, trials: int = 20, h: float = 1e-5, beta: float = 2.0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _, net, spec in _small_scenarios():
        b = a1_bounds(spec, beta)
        for _ in range(trials):
            th = rng.uniform(b.theta_min / 2, b.theta_max / 2, net.size)
            fd = np.empty(net.size)
            for k in range(net.size):
                e = np.zeros(net.size)
                e[k] = h
                fd[k] = (oracle.dual_value(net, spec, beta, th + e)
                         - oracle.dual_value(net, spec, beta, th - e)) / (2 * h)
            g = oracle.dual_gradient(net, spec, beta, th)
            worst = max(worst, float(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-3))))
    return CheckResult("dual gradient vs finite differences", worst < 1e-5, worst, 1e-5)


def check_strong_duality(betas=(0.5, 1.0, 5.0, 50.0)) -> CheckResult:
    worst = 0.0
    for _, net, spec in _small_scenarios():
        for beta in betas:
            sol = oracle.solve_a_cg_opt(net, spec, beta, tol=1e-10)
            gap = abs(oracle.primal_value(net, spec, beta, sol.theta_star) - sol.dual_value)
            worst = max(worst, gap)
    return CheckResult("strong duality at the fixed point", worst < 1e-5, worst, 1e-5)


def check_potential_signs(seed: int = 2, trials: int = 100, beta: float = 5.0, band: float = 1e-9) -> CheckResult:
    """sign(∂Ψ_n/∂θ_n) = sign(∂P/∂θ_n) for every player at random interior θ."""
    rng = np.random.default_rng(seed)
    bad = 0
    total = 0
    short = []
    for name, net, spec in _small_scenarios():
        g = game.GameInstance(net, spec, beta)
        # box of fixed points with rates in [0.3, 0.7], inside the clamp box
        b = a1_bounds(spec, beta, eps=0.3)
        accepted = 0
        for _ in range(50 * trials):
            if accepted == trials:
                break
            th = rng.uniform(b.theta_min, b.theta_max, net.size)
            s = oracle.marginals(net, th)
            # keep θ whose marginals are resolvably inside (0, 1)
            if np.any(s * (1 - s) < 1e-12):
                continue
            accepted += 1
            psi = game.payoff_gradients(g, th)
            pot = game.potential_gradient(g, th)
            for a, c in zip(psi, pot):
                total += 1
                if abs(a) <= band and abs(c) <= band:
                    continue
                bad += int(np.sign(a) != np.sign(c))
        if accepted < trials:
            short.append(name)
    detail = f"over {total} player evaluations"
    if short:
        detail += f"; too few interior draws on {', '.join(short)}"
    return CheckResult("ordinal potential sign identity", bad == 0 and not short, bad, 0, detail)


def check_penalty_quadrature(seed: int = 3, trials: int = 10) -> CheckResult:
    net, spec = _line()
    g = game.GameInstance(net, spec, 1.0)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        th = rng.uniform(-3, 3, net.size)
        for k in range(net.size):
            worst = max(worst, abs(game.penalty(g, th, k) - game.penalty_quadrature(g, th, k)))
    return CheckResult("penalty closed form vs quadrature", worst < 1e-6, worst, 1e-6)


def check_equilibrium(beta: float = 5.0) -> CheckResult:
    worst = 0.0
    names = []
    for name, net, spec in _small_scenarios():
        res = game.find_ne(game.GameInstance(net, spec, beta), tol=1e-8)
        worst = max(worst, res.oracle_distance)
        names.append(name)
    return CheckResult("equilibrium equals regularized optimum", worst <= 1e-4, worst, 1e-4,
                       f"({', '.join(names)}, beta={beta:g})")


def check_alternative_sequence(frames: int = 300, seed: int = 4, beta: float = 2.0) -> CheckResult:
    net, spec = _line()
    trace = coord.run(net, spec, "steep", beta, frames, seed=seed)
    try:
        dev = coord.alternative_sequence_check(trace, 0.5, spec, beta)
    except coord.ClampingDetected as exc:
        return CheckResult("alternative-sequence identity", False, float("nan"), 1e-8, str(exc))
    return CheckResult("alternative-sequence identity", dev < 1e-8, dev, 1e-8)


CHECKS = {
    "a": check_self_gradient,
    "b": check_dual_gradient,
    "c": check_strong_duality,
    "d": check_potential_signs,
    "e": check_penalty_quadrature,
    "f": check_equilibrium,
    "g": check_alternative_sequence,
}


def run_all(keys=None) -> list[CheckResult]:
    out = []
    for k in keys or CHECKS:
        t0 = time.perf_counter()
        res = CHECKS[k]()
        res.seconds = time.perf_counter() - t0
        res.name = f"({k}) {res.name}"
        out.append(res)
    return out
