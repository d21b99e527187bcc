"""The coordination game: nodes and edges as players choosing θ_n.

Player n earns its own cost or utility of the rate s_n(θ), minus a penalty
V_n(θ)/β with V_n = θ_n s_n + ln(1 - s_n). Exact quantities come from the
enumeration oracle, so games are limited to the enumeration cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.special import expit, logsumexp

from . import oracle
from .graph import Network
from .objective import ClampBounds, ObjectiveSpec, a1_bounds


class BracketError(ValueError):
    """The best-response equation has no sign change inside the θ bounds."""


@dataclass(frozen=True)
class GameInstance:
    net: Network
    spec: ObjectiveSpec
    beta: float
    bounds: ClampBounds | None = None

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        self.spec.check(self.net)
        if self.bounds is None:
            object.__setattr__(self, "bounds", _wide_bounds(self.spec, self.beta))

    @property
    def n_players(self) -> int:
        return self.net.size


def _wide_bounds(spec, beta):
    """Bracket for best responses: every rate in [1e-6, 1] has its root inside."""
    b = a1_bounds(spec, beta, eps=1e-6)
    c1 = [f.d1_at_1 for f in spec.costs]
    lo = b.theta_min
    if all(np.isfinite(c1)):
        lo = min(lo, -beta * max(c1))
    return ClampBounds(lo - 1.0, b.theta_max + 1.0, b.rate_epsilon)


def _rate(game: GameInstance, theta, n: int) -> float:
    s = oracle.marginals(game.net, theta)[n]
    return float(s)


def _offset(game: GameInstance, theta, n: int) -> float:
    """c with s_n(x, θ_{-n}) = logistic(x + c); independent of θ_n."""
    phi = game.net.phi_table
    energies = phi @ theta - phi[:, n] * theta[n]
    on = phi[:, n] > 0.5
    return float(logsumexp(energies[on]) - logsumexp(energies[~on]))


def penalty(game: GameInstance, theta, n: int) -> float:
    """V_n(θ) = θ_n s_n(θ) + ln(1 - s_n(θ))."""
    theta = game.net.check_vector(theta)
    s = _rate(game, theta, n)
    if not s < 1.0:
        raise oracle.EvaluationError(f"rate of player {n} is numerically 1")
    return float(theta[n] * s + math.log1p(-s))


def penalty_quadrature(game: GameInstance, theta, n: int, lower: float = -40.0) -> float:
    """∫_{lower}^{θ_n} x ∂s_n(x, θ_{-n})/∂x dx by adaptive quadrature on the enumerated rate."""
    theta = game.net.check_vector(theta).copy()

    def integrand(x):
        th = theta.copy()
        th[n] = x
        s = oracle.marginals(game.net, th)[n]
        return x * s * (1 - s)

    val, _ = integrate.quad(integrand, lower, theta[n], epsabs=1e-12, epsrel=1e-12, limit=200)
    return float(val)


def payoff(game: GameInstance, theta, n: int) -> float:
    theta = game.net.check_vector(theta)
    s = _rate(game, theta, n)
    nn = game.net.n_nodes
    v = penalty(game, theta, n)
    if n < nn:
        own = -float(game.spec.costs[n].value(np.array([s]))[0])
    else:
        own = float(game.spec.utilities[n - nn].value(np.array([s]))[0])
    return own - v / game.beta


def payoff_gradient(game: GameInstance, theta, n: int) -> float:
    """∂Ψ_n/∂θ_n: node -s(1-s)(C'(s) + θ/β), edge s(1-s)(U'(s) - θ/β)."""
    theta = game.net.check_vector(theta)
    s = _rate(game, theta, n)
    nn = game.net.n_nodes
    x = np.array([s])
    if n < nn:
        return float(-s * (1 - s) * (game.spec.costs[n].d1(x)[0] + theta[n] / game.beta))
    return float(s * (1 - s) * (game.spec.utilities[n - nn].d1(x)[0] - theta[n] / game.beta))


def payoff_gradients(game: GameInstance, theta) -> np.ndarray:
    theta = game.net.check_vector(theta)
    s = oracle.marginals(game.net, theta)
    slope = s * (1 - s)
    # target() is (-β C', β U'), so θ_n moves toward it from either side
    return slope * (game.spec.target(game.beta, s) - theta) / game.beta


def potential(game: GameInstance, theta) -> float:
    return -oracle.dual_value(game.net, game.spec, game.beta, theta)


def potential_gradient(game: GameInstance, theta) -> np.ndarray:
    """∇P = (y(θ) - s(θ)) / β, the negated dual gradient."""
    return -oracle.dual_gradient(game.net, game.spec, game.beta, theta)


def _br_residual(game, n, c):
    nn = game.net.n_nodes
    beta = game.beta
    if n < nn:
        f = game.spec.costs[n]
        return lambda x: x + beta * float(f.d1(np.array([expit(x + c)]))[0])
    f = game.spec.utilities[n - nn]
    return lambda x: x - beta * float(f.d1(np.array([expit(x + c)]))[0])


def best_response(game: GameInstance, theta, n: int, tol: float = 1e-12) -> float:
    """Solve θ_n = -β C'(s_n(θ_n, θ_{-n})) (node) or β U'(s_n) (edge) by bisection.

    The residual is strictly increasing in θ_n, so a sign change on
    [theta_min, theta_max] brackets the unique root.
    """
    theta = game.net.check_vector(theta)
    c = _offset(game, theta, n)
    h = _br_residual(game, n, c)
    lo, hi = game.bounds.theta_min, game.bounds.theta_max
    flo, fhi = h(lo), h(hi)
    if flo > 0 or fhi < 0:
        raise BracketError(f"player {n}: no root in [{lo:g}, {hi:g}] (residuals {flo:.3g}, {fhi:.3g})")
    return float(optimize.bisect(h, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))


def best_responses(game: GameInstance, theta, tol: float = 1e-12) -> np.ndarray:
    return np.array([best_response(game, theta, n, tol) for n in range(game.n_players)])


@dataclass
class NashResult:
    net: Network = field(repr=False)
    theta_ne: np.ndarray
    potential_value: float
    ne_gain: float
    social_opt_gain: float
    gap_to_social_opt: float
    poa_bound: float
    residual: float
    rounds: int
    oracle_distance: float
    poa_ratio: float | None = None
    alpha: float = 0.5

    def to_json(self) -> dict:
        return {
            "theta_ne": self.net.as_dict(self.theta_ne),
            "rates_ne": self.net.as_dict(oracle.marginals(self.net, self.theta_ne)),
            "potential_value": self.potential_value,
            "ne_gain": self.ne_gain,
            "social_opt_gain": self.social_opt_gain,
            "gap_to_social_opt": self.gap_to_social_opt,
            "poa_bound": self.poa_bound,
            "poa_ratio": self.poa_ratio,
            "residual": self.residual,
            "rounds": self.rounds,
            "oracle_distance": self.oracle_distance,
            "alpha": self.alpha,
        }


def jacobi_round(game: GameInstance, theta, alpha: float = 0.5, tol: float = 1e-12):
    """Simultaneous move of every player toward its best response."""
    br = best_responses(game, theta, tol)
    return theta + alpha * (br - theta), float(np.max(np.abs(br - theta)))


def find_ne(game: GameInstance, tol: float = 1e-8, max_rounds: int = 10_000, alpha: float = 0.5,
            theta0=None, social_schedule=(1, 10, 100, 1000), patience: int = 25) -> NashResult:
    """Jacobi dynamics to the non-trivial equilibrium, cross-checked on the oracle.

    Simultaneous moves with a large step can lock into a period-two cycle
    (STAR-C1 at β=5 does with α=0.5), so α is halved whenever the best
    displacement has not improved for ``patience`` rounds.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    net = game.net
    theta = oracle._initial_theta(net, game.spec, game.beta) if theta0 is None else net.check_vector(theta0).copy()
    best_theta, best_disp, stale = theta, math.inf, 0
    rounds = 0
    while rounds < max_rounds:
        cand, disp = jacobi_round(game, theta, alpha, tol=tol * 1e-3)
        rounds += 1
        if disp < best_disp:
            best_theta, best_disp, stale = theta, disp, 0
        else:
            stale += 1
        if disp <= tol:
            break
        theta = cand
        if stale >= patience:
            alpha *= 0.5
            theta, stale = best_theta, 0
    else:
        raise oracle.NonConvergenceError(
            f"Jacobi displacement {best_disp:.3g} > {tol:g} after {rounds} rounds", best_theta)
    exact = oracle.solve_a_cg_opt(net, game.spec, game.beta, tol=min(tol, 1e-10))
    dist = float(np.max(np.abs(theta - exact.theta_star)))
    if dist > max(10 * tol, 1e-6):
        raise oracle.NonConvergenceError(f"equilibrium is {dist:.3g} away from the regularized optimum", theta)
    ne_gain = oracle.gain(net, game.spec, oracle.marginals(net, theta))
    social = oracle.solve_cg_opt(net, game.spec, social_schedule)[-1].gain
    ratio = social / ne_gain if (social > 0 and ne_gain > 0) else None
    return NashResult(net, theta, potential(game, theta), ne_gain, social, social - ne_gain,
                      net.n_nodes * math.log(2) / game.beta, disp, rounds, dist, ratio, alpha)


def gradient_dynamics_step(game: GameInstance, theta, alpha: float) -> np.ndarray:
    """θ_n += α ∂Ψ_n/∂θ_n for all players at once."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    theta = game.net.check_vector(theta)
    return theta + alpha * payoff_gradients(game, theta)


def gradient_dynamics(game: GameInstance, theta0, alpha: float, steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Iterate gradient dynamics; returns the final θ and the potential after each step."""
    theta = game.net.check_vector(theta0).copy()
    pots = np.empty(steps + 1)
    pots[0] = potential(game, theta)
    for k in range(steps):
        theta = gradient_dynamics_step(game, theta, alpha)
        pots[k + 1] = potential(game, theta)
    return theta, pots
