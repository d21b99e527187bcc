"""Frame-based parameter updates driven by the Glauber simulator.

Three update rules share one frame loop: run the chain for a frame under
the current θ, measure the instant rates ŝ[t], fold them into the running
mean s̄[t], then move θ:

* ``dual``:  θ += a[t] (y(θ) - ŝ[t]), y the KKT rates, a[t] = c/t, a[0] = 0
* ``steep``: θ += α (F(s̄[t]) - θ),        F = (-β C', β U')
* ``ind``:   θ += (α/β) s̄(1-s̄) (F(s̄[t]) - θ)

and every update is clamped to [theta_min, theta_max].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import cdm
from .graph import Network
from .objective import ClampBounds, ObjectiveSpec, a1_bounds

ALGORITHMS = ("dual", "steep", "ind")


@dataclass
class CoordState:
    theta: np.ndarray
    s_bar: np.ndarray
    frame: int
    cdm: cdm.CdmState
    algorithm: str
    beta: float
    bounds: ClampBounds
    alpha: float = 0.5
    step_scale: float = 3.0
    clamped: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.beta <= 0 or self.step_scale <= 0:
            raise ValueError("beta and step_scale must be positive")


def update_cumulative(s_bar, s_hat, t: int) -> np.ndarray:
    """Running mean of ŝ[0..t]; returns ŝ[0] at t = 0."""
    if t < 0:
        raise ValueError("frame index must be nonnegative")
    s_hat = np.asarray(s_hat, dtype=float)
    if t == 0:
        return s_hat.copy()
    return s_bar - (s_bar - s_hat) / (t + 1)


def step_size(state: CoordState) -> float:
    return state.step_scale / state.frame if state.frame >= 1 else 0.0


def _clamp(state: CoordState, raw: np.ndarray) -> tuple[np.ndarray, bool]:
    lo, hi = state.bounds.theta_min, state.bounds.theta_max
    hit = bool(raw.min() < lo or raw.max() > hi)
    return np.minimum(np.maximum(raw, lo), hi), hit


def _clamped_rates(state: CoordState, s_bar) -> np.ndarray:
    eps = state.bounds.rate_epsilon
    return np.minimum(np.maximum(s_bar, eps), 1 - eps)


def step_dual(state: CoordState, s_hat, spec: ObjectiveSpec) -> CoordState:
    if state.algorithm != "dual":
        raise ValueError("step_dual needs a dual-state")
    a = step_size(state)
    raw = state.theta + a * (spec.kkt_rates(state.beta, state.theta) - s_hat)
    theta, hit = _clamp(state, raw)
    s_bar = update_cumulative(state.s_bar, s_hat, state.frame)
    return replace(state, theta=theta, s_bar=s_bar, frame=state.frame + 1, clamped=hit)


def step_steep(state: CoordState, s_hat, spec: ObjectiveSpec) -> CoordState:
    if state.algorithm != "steep":
        raise ValueError("step_steep needs a steep-state")
    s_bar = update_cumulative(state.s_bar, s_hat, state.frame)
    target = spec.target(state.beta, _clamped_rates(state, s_bar))
    theta, hit = _clamp(state, state.theta + state.alpha * (target - state.theta))
    return replace(state, theta=theta, s_bar=s_bar, frame=state.frame + 1, clamped=hit)


def step_ind(state: CoordState, s_hat, spec: ObjectiveSpec) -> CoordState:
    if state.algorithm != "ind":
        raise ValueError("step_ind needs an ind-state")
    s_bar = update_cumulative(state.s_bar, s_hat, state.frame)
    rates = _clamped_rates(state, s_bar)
    # plug-in estimate of ∂s_n/∂θ_n = s_n (1 - s_n)
    gain_factor = state.alpha / state.beta * rates * (1 - rates)
    target = spec.target(state.beta, rates)
    theta, hit = _clamp(state, state.theta + gain_factor * (target - state.theta))
    return replace(state, theta=theta, s_bar=s_bar, frame=state.frame + 1, clamped=hit)


STEPS = {"dual": step_dual, "steep": step_steep, "ind": step_ind}


class LocalView:
    """Read access restricted to one node's neighborhood; anything else raises."""

    def __init__(self, net: Network, i: int, theta, s_hat, s_bar):
        self.allowed = {i} | {net.n_nodes + net.edge_index[(i, j)] for j in net.adjacency[i]}
        self._theta, self._s_hat, self._s_bar = theta, s_hat, s_bar

    def _get(self, arr, k):
        if k not in self.allowed:
            raise PermissionError(f"component {k} is outside the local neighborhood")
        return float(arr[k])

    def theta(self, k):
        return self._get(self._theta, k)

    def s_hat(self, k):
        return self._get(self._s_hat, k)

    def s_bar(self, k):
        return self._get(self._s_bar, k)


def local_update(net: Network, spec: ObjectiveSpec, state: CoordState, view: LocalView, k: int) -> float:
    """Scalar update of component ``k`` computed from a node's local view only.

    ``state`` supplies the shared constants (β, α, bounds, frame index) and
    the previous cumulative rate is read through the view.
    """
    n = net.n_nodes
    is_node = k < n
    f = spec.costs[k] if is_node else spec.utilities[k - n]
    x = np.array([0.0])
    beta, b = state.beta, state.bounds
    th = view.theta(k)
    sh = view.s_hat(k)
    if state.algorithm == "dual":
        vec = np.zeros(net.size)
        vec[k] = th
        y = float(spec.kkt_rates(beta, vec)[k])
        raw = th + step_size(state) * (y - sh)
    else:
        sb = float(update_cumulative(np.array([view.s_bar(k)]), np.array([sh]), state.frame)[0])
        r = min(max(sb, b.rate_epsilon), 1 - b.rate_epsilon)
        x[0] = r
        target = -beta * float(f.d1(x)[0]) if is_node else beta * float(f.d1(x)[0])
        factor = state.alpha if state.algorithm == "steep" else state.alpha / beta * r * (1 - r)
        raw = th + factor * (target - th)
    return min(max(raw, b.theta_min), b.theta_max)


def audit_locality(net: Network, spec: ObjectiveSpec, state: CoordState, s_hat, new_theta, atol=1e-9) -> None:
    """Recompute every node's own and incident-edge updates from its local view."""
    for i in range(net.n_nodes):
        view = LocalView(net, i, state.theta, s_hat, state.s_bar)
        for k in sorted(view.allowed):
            val = local_update(net, spec, state, view, k)
            if not math.isclose(val, new_theta[k], rel_tol=1e-9, abs_tol=atol):
                raise AssertionError(f"node {i + 1}: local update of component {k} disagrees ({val} vs {new_theta[k]})")


@dataclass
class Trace:
    """Per-frame series of a run; row r describes frame ``t[r]``.

    ``theta[r]`` is the parameter used during that frame, ``s_hat``/``s_bar``
    the rates measured in and up to it. ``theta_final`` is θ after the last
    update.
    """

    net: Network = field(repr=False)
    t: np.ndarray
    theta: np.ndarray
    s_hat: np.ndarray
    s_bar: np.ndarray
    gain: np.ndarray
    events: np.ndarray
    clamped: np.ndarray
    theta_final: np.ndarray
    meta: dict

    def __len__(self):
        return len(self.t)

    @property
    def final_sbar(self) -> np.ndarray:
        return self.s_bar[-1]

    @property
    def final_gain(self) -> float:
        return float(self.gain[-1])


def initial_state(net: Network, algorithm: str, beta: float, seed: int, bounds: ClampBounds,
                  alpha: float = 0.5, step_scale: float = 3.0, theta0=None) -> CoordState:
    theta = net.zeros() if theta0 is None else net.check_vector(theta0).copy()
    theta = np.clip(theta, bounds.theta_min, bounds.theta_max)
    return CoordState(theta=theta, s_bar=net.zeros(), frame=0, cdm=cdm.CdmState.initial(net, seed),
                      algorithm=algorithm, beta=float(beta), bounds=bounds, alpha=alpha,
                      step_scale=step_scale)


def run(net: Network, spec: ObjectiveSpec, algorithm: str, beta: float, frames: int, T: float = 10.0,
        seed: int = 0, bounds: ClampBounds | None = None, alpha: float = 0.5, step_scale: float = 3.0,
        theta0=None, record_every: int = 1, audit: bool = False, meta: dict | None = None) -> Trace:
    """Run ``frames`` frames of the chosen update rule from θ[0] (zeros by default)."""
    if frames < 1:
        raise ValueError("frames must be >= 1")
    spec.check(net)
    bounds = a1_bounds(spec, beta) if bounds is None else bounds
    state = initial_state(net, algorithm, beta, seed, bounds, alpha, step_scale, theta0)
    step = STEPS[algorithm]
    rows = range(0, frames, record_every)
    nrec = len(rows)
    d = net.size
    th_rec, sh_rec, sb_rec = np.empty((nrec, d)), np.empty((nrec, d)), np.empty((nrec, d))
    g_rec = np.empty(nrec)
    ev_rec = np.empty(nrec, dtype=np.int64)
    cl_rec = np.zeros(nrec, dtype=bool)
    n = net.n_nodes
    r = 0
    for t in range(frames):
        theta_t = state.theta
        _, stats = cdm.run_frame(net, theta_t, state.cdm, T)
        new = step(state, stats.s_hat, spec)
        if audit:
            audit_locality(net, spec, state, stats.s_hat, new.theta)
        state = new
        if t % record_every == 0:
            th_rec[r] = theta_t
            sh_rec[r] = stats.s_hat
            sb_rec[r] = state.s_bar
            with np.errstate(divide="ignore"):
                g_rec[r] = np.sum(spec.utility(state.s_bar[n:])) - np.sum(spec.cost(state.s_bar[:n]))
            ev_rec[r] = state.cdm.event_count
            cl_rec[r] = state.clamped
            r += 1
        elif state.clamped:
            cl_rec[r - 1] = True
    info = {"algorithm": algorithm, "beta": beta, "seed": seed, "frames": frames, "T": T,
            "alpha": alpha, "step_scale": step_scale, "record_every": record_every,
            "events": state.cdm.event_count, "messages": state.cdm.message_count}
    info.update(meta or {})
    return Trace(net, np.arange(0, frames, record_every), th_rec, sh_rec, sb_rec, g_rec, ev_rec,
                 cl_rec, state.theta.copy(), info)


class ClampingDetected(RuntimeError):
    """The identity being checked only holds on an unclamped trajectory."""


def alternative_sequence_check(trace: Trace, alpha: float, spec: ObjectiveSpec, beta: float,
                               rate_epsilon: float = 1e-4) -> float:
    """Max deviation of the ρ-sequence identities on a steep trajectory.

    With ρ[t] = θ[t]/α + (1 - 1/α) θ[t-1], checks that ρ[t+1] equals
    F(s̄[t]) and that θ[t] is the geometric convolution of ρ plus the
    (1-α)^t θ[0] term.
    """
    if trace.meta.get("record_every", 1) != 1:
        raise ValueError("needs a trace recorded every frame")
    if np.any(trace.clamped):
        raise ClampingDetected(f"clamping at frames {np.flatnonzero(trace.clamped)[:5].tolist()}")
    theta = np.vstack([trace.theta, trace.theta_final[None, :]])  # θ[0..F]
    F = len(trace)
    rho = np.full_like(theta, np.nan)
    rho[1:] = theta[1:] / alpha + (1 - 1 / alpha) * theta[:-1]
    rates = np.clip(trace.s_bar, rate_epsilon, 1 - rate_epsilon)
    targets = np.array([spec.target(beta, r) for r in rates])  # F(s̄[t]), t = 0..F-1
    dev_a = np.max(np.abs(rho[1:] - targets) / np.maximum(1.0, np.abs(targets)))
    dev_b = 0.0
    for t in range(1, F + 1):
        m = np.arange(t)
        conv = (alpha * (1 - alpha) ** m)[:, None] * rho[t - m]
        recon = conv.sum(axis=0) + (1 - alpha) ** t * theta[0]
        dev_b = max(dev_b, float(np.max(np.abs(recon - theta[t]) / np.maximum(1.0, np.abs(theta[t])))))
    return float(max(dev_a, dev_b))
