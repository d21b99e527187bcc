"""Exact enumeration oracles for small graphs.

Everything here works from the full table of coordination configurations,
so it is limited to ``graph.ENUMERATION_CAP`` nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from .graph import Network
from .objective import ObjectiveSpec


class NonConvergenceError(RuntimeError):
    """A solver hit its iteration cap; ``best`` holds the best iterate found."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


class EvaluationError(ValueError):
    pass


def _energies(net: Network, theta) -> np.ndarray:
    return net.phi_table @ net.check_vector(theta)


def log_partition(net: Network, theta) -> float:
    return float(logsumexp(_energies(net, theta)))


def stationary_distribution(net: Network, theta) -> np.ndarray:
    """p_θ(σ) ∝ exp<θ, φ(σ)> over ``enumerate_configurations`` order."""
    return softmax(_energies(net, theta))


def marginals(net: Network, theta) -> np.ndarray:
    """Node activation and edge coordination probabilities under p_θ."""
    return stationary_distribution(net, theta) @ net.phi_table


def marginal_self_gradient(net: Network, theta) -> np.ndarray:
    """∂s_n/∂θ_n for every component n; equals s_n (1 - s_n)."""
    s = marginals(net, theta)
    return s * (1 - s)


def entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def gain(net: Network, spec: ObjectiveSpec, lam) -> float:
    """Σ U_ij(λ_ij) - Σ C_i(λ_i); -inf when a log utility sees a zero rate."""
    lam = net.check_vector(lam)
    if np.any(lam < -1e-12) or np.any(lam > 1 + 1e-12):
        raise EvaluationError("rates must lie in [0, 1]")
    lam = np.clip(lam, 0.0, 1.0)
    total = float(np.sum(spec.utility(net.edge_part(lam))) - np.sum(spec.cost(net.node_part(lam))))
    return total if not math.isnan(total) else -math.inf


def _dual_parts(net, spec, beta, theta):
    theta = net.check_vector(theta)
    y = spec.kkt_rates(beta, theta)
    n = net.n_nodes
    with np.errstate(divide="ignore", invalid="ignore"):
        u = spec.utility(y[n:])
        c = spec.cost(y[:n])
    return theta, y, u, c


def dual_value(net: Network, spec: ObjectiveSpec, beta: float, theta) -> float:
    """D(θ) = (1/β) log Z(θ) + Σ_e [U(y_e) - θ_e y_e/β] + Σ_i [-C(y_i) - θ_i y_i/β]."""
    theta, y, u, c = _dual_parts(net, spec, beta, theta)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(c))):
        raise EvaluationError("dual evaluated outside the domain of the objective")
    n = net.n_nodes
    return float(
        log_partition(net, theta) / beta
        + np.sum(u - theta[n:] * y[n:] / beta)
        + np.sum(-c - theta[:n] * y[:n] / beta)
    )


def dual_gradient(net: Network, spec: ObjectiveSpec, beta: float, theta) -> np.ndarray:
    """∇D(θ) = (s(θ) - y(θ)) / β with y the KKT rates."""
    theta = net.check_vector(theta)
    return (marginals(net, theta) - spec.kkt_rates(beta, theta)) / beta


def dual_hessian(net: Network, spec: ObjectiveSpec, beta: float, theta) -> np.ndarray:
    theta = net.check_vector(theta)
    p = stationary_distribution(net, theta)
    phi = net.phi_table
    s = p @ phi
    cov = (phi * p[:, None]).T @ phi - np.outer(s, s)
    return (cov - np.diag(spec.kkt_slope(beta, theta))) / beta


def primal_value(net: Network, spec: ObjectiveSpec, beta: float, theta) -> float:
    """A-CG-OPT objective at (p_θ, s(θ)): gain plus entropy / β."""
    p = stationary_distribution(net, theta)
    return gain(net, spec, p @ net.phi_table) + entropy(p) / beta


def fixed_point_residual(net: Network, spec: ObjectiveSpec, beta: float, theta) -> float:
    """sup_n |θ_n - F_n(θ)| with F = (-β C'(s_i), β U'(s_ij))."""
    s = marginals(net, theta)
    with np.errstate(divide="ignore", over="ignore"):
        r = np.max(np.abs(theta - spec.target(beta, s)))
    return float(r) if np.isfinite(r) else math.inf


def dual_descent(net: Network, spec: ObjectiveSpec, beta: float, theta0, step, iters: int) -> np.ndarray:
    """Exact dual descent θ ← θ + a_t (y(θ) - s(θ)).

    This is the negated gradient scaled by β; ``step`` is a constant or a
    callable of the iteration index.
    """
    theta = net.check_vector(theta0).copy()
    for t in range(iters):
        a = step(t) if callable(step) else step
        theta = theta + a * (spec.kkt_rates(beta, theta) - marginals(net, theta))
    return theta


@dataclass
class ExactSolution:
    net: Network = field(repr=False)
    theta_star: np.ndarray
    lambda_star: np.ndarray
    gain: float
    dual_value: float
    beta: float
    iterations: int
    residual: float
    method: str = "fixed-point"

    @property
    def gap_bound(self) -> float:
        return self.net.n_nodes * math.log(2) / self.beta

    def to_json(self) -> dict:
        return {
            "beta": self.beta,
            "theta": self.net.as_dict(self.theta_star),
            "lambda": self.net.as_dict(self.lambda_star),
            "gain": self.gain,
            "dual_value": self.dual_value,
            "residual": self.residual,
            "iterations": self.iterations,
            "method": self.method,
            "gap_bound": self.gap_bound,
        }


def _initial_theta(net, spec, beta):
    # parameters of the uniform-rate point s = 1/2 (nodes), 1/4 (edges)
    half = np.concatenate([np.full(net.n_nodes, 0.5), np.full(net.n_edges, 0.25)])
    return spec.target(beta, half)


def _newton_descent(net, spec, beta, theta, tol, max_iter, patience=50):
    """Damped Newton on the convex dual with Armijo backtracking on D.

    Gives up after ``patience`` steps without a new best residual: at large
    β the residual floor set by double precision can sit above ``tol``.
    """
    d_cur = dual_value(net, spec, beta, theta)
    best_res, stale = math.inf, 0
    for it in range(1, max_iter + 1):
        grad = dual_gradient(net, spec, beta, theta)
        try:
            step = -np.linalg.solve(dual_hessian(net, spec, beta, theta), grad)
        except np.linalg.LinAlgError:
            step = -grad
        slope = float(grad @ step)
        if not slope < 0:
            step, slope = -grad, -float(grad @ grad)
        t = 1.0
        while t >= 1e-12:
            cand = theta + t * step
            try:
                d_new = dual_value(net, spec, beta, cand)
            except EvaluationError:
                d_new = math.inf
            if d_new <= d_cur + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            # D is flat to machine precision along the step
            return theta, it
        theta, d_cur = cand, d_new
        res = fixed_point_residual(net, spec, beta, theta)
        if res <= tol:
            return theta, it
        # creeping progress near the precision floor does not reset patience
        if res < 0.99 * best_res:
            best_res, stale = res, 0
        else:
            stale += 1
            if stale >= patience:
                return theta, it
    return theta, max_iter


def solve_a_cg_opt(net: Network, spec: ObjectiveSpec, beta: float, tol: float = 1e-8,
                   max_iter: int = 100_000, theta0=None, fp_budget: int = 200) -> ExactSolution:
    """Solve the entropy-regularized program through its parameter fixed point.

    Damped fixed-point iteration θ ← (1-α)θ + αF(θ) runs first, halving α on
    any residual increase. If it has not reached ``tol`` after ``fp_budget``
    iterations the best iterate is handed to Newton descent on the dual.
    """
    spec.check(net)
    theta = _initial_theta(net, spec, beta) if theta0 is None else net.check_vector(theta0).copy()
    res = fixed_point_residual(net, spec, beta, theta)
    best, best_res = theta, res
    alpha = 1.0
    it = 0
    method = "fixed-point"
    while res > tol and it < min(fp_budget, max_iter) and alpha > 1e-3:
        it += 1
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = (1 - alpha) * theta + alpha * spec.target(beta, marginals(net, theta))
            cand_res = fixed_point_residual(net, spec, beta, cand)
        # a saturated rate makes barrier costs infinite; treat NaN as an increase
        if not cand_res <= res:
            alpha *= 0.5
            continue
        theta, res = cand, cand_res
        if res < best_res:
            best, best_res = theta, res
    if best_res > tol:
        method = "dual-newton"
        theta, extra = _newton_descent(net, spec, beta, best, tol, max_iter - it)
        it += extra
        res = fixed_point_residual(net, spec, beta, theta)
        if res > tol:
            lam = marginals(net, theta)
            sol = ExactSolution(net, theta, lam, gain(net, spec, lam), dual_value(net, spec, beta, theta),
                                beta, it, res, method)
            raise NonConvergenceError(f"residual {res:.3g} > tol {tol:g} after {it} iterations", sol)
    else:
        theta, res = best, best_res
    lam = marginals(net, theta)
    return ExactSolution(net, theta, lam, gain(net, spec, lam), dual_value(net, spec, beta, theta),
                         beta, it, res, method)


def solve_cg_opt(net: Network, spec: ObjectiveSpec, beta_schedule=(1, 10, 100, 1000),
                 tol: float = 1e-8, max_iter: int = 100_000) -> list[ExactSolution]:
    """β-continuation: one warm-started solve per β, largest β last.

    The warm start rescales the previous parameter by the β ratio, since the
    fixed point scales linearly in β when the rates stay put.
    """
    betas = [float(b) for b in beta_schedule]
    if not betas or any(b <= 0 for b in betas) or any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValueError("beta schedule must be positive and strictly increasing")
    sols = []
    theta = None
    prev = None
    for b in betas:
        start = None if theta is None else theta * (b / prev)
        try:
            sol = solve_a_cg_opt(net, spec, b, tol=tol, max_iter=max_iter, theta0=start)
        except NonConvergenceError:
            if start is None:
                raise
            # barrier costs can push the rescaled start into a stall; retry cold
            sol = solve_a_cg_opt(net, spec, b, tol=tol, max_iter=max_iter)
        sols.append(sol)
        theta, prev = sol.theta_star, b
    return sols
