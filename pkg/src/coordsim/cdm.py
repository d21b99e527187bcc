"""Continuous-time Glauber dynamics for a fixed parameter vector.

Per-node unit-rate Poisson clocks are simulated as one superposed clock of
rate |V| with a uniform node pick. Randomness comes from a numpy
``Generator`` through a persistent buffer of uniforms, so a run is a pure
function of its seed and of the parameter trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .graph import Network

_BUFFER = 3 * 4096


@numba.njit(cache=True)
def _flip_probability(theta, n, sigma, i, indptr, nbr, eid):
    field_ = theta[i]
    for k in range(indptr[i], indptr[i + 1]):
        if sigma[nbr[k]]:
            field_ += theta[n + eid[k]]
    if field_ >= 0:
        return 1.0 / (1.0 + math.exp(-field_))
    z = math.exp(field_)
    return z / (1.0 + z)


@numba.njit(cache=True)
def _frame_kernel(theta, sigma, indptr, nbr, eid, n, m, uniforms, pos, horizon,
                  acc, last, clock, counters):
    """Run events until ``clock`` reaches ``horizon`` or the buffer runs dry.

    ``acc``/``last`` carry the time-weighted occupancy of every node and edge
    (node block then edge block), updated only when a component changes.
    Returns (new buffer position, clock, done flag).
    """
    nu = uniforms.shape[0]
    while pos + 3 <= nu:
        tau = -math.log(1.0 - uniforms[pos]) / n
        if clock + tau >= horizon:
            # memoryless: the residual holding time is redrawn next frame
            return pos + 1, horizon, True
        clock += tau
        i = min(int(uniforms[pos + 1] * n), n - 1)
        p = _flip_probability(theta, n, sigma, i, indptr, nbr, eid)
        new = 1 if uniforms[pos + 2] < p else 0
        pos += 3
        counters[0] += 1
        counters[1] += indptr[i + 1] - indptr[i]
        if new != sigma[i]:
            if sigma[i]:
                acc[i] += clock - last[i]
            last[i] = clock
            for k in range(indptr[i], indptr[i + 1]):
                if sigma[nbr[k]]:
                    e = n + eid[k]
                    if sigma[i]:
                        acc[e] += clock - last[e]
                    last[e] = clock
            sigma[i] = new
    return pos, clock, False


@numba.njit(cache=True)
def _flush(sigma, edges, n, m, acc, last, clock):
    for i in range(n):
        if sigma[i]:
            acc[i] += clock - last[i]
        last[i] = clock
    for e in range(m):
        if sigma[edges[e, 0]] and sigma[edges[e, 1]]:
            acc[n + e] += clock - last[n + e]
        last[n + e] = clock


@numba.njit(cache=True)
def _occupancy_kernel(theta, sigma, indptr, nbr, eid, n, uniforms, pos, horizon, occ, code, clock,
                      counters):
    nu = uniforms.shape[0]
    while pos + 3 <= nu:
        tau = -math.log(1.0 - uniforms[pos]) / n
        if clock + tau >= horizon:
            occ[code] += horizon - clock
            return pos + 1, horizon, code, True
        occ[code] += tau
        clock += tau
        i = min(int(uniforms[pos + 1] * n), n - 1)
        p = _flip_probability(theta, n, sigma, i, indptr, nbr, eid)
        new = 1 if uniforms[pos + 2] < p else 0
        pos += 3
        counters[0] += 1
        counters[1] += indptr[i + 1] - indptr[i]
        if new != sigma[i]:
            code ^= 1 << i
            sigma[i] = new
    return pos, clock, code, False


@dataclass
class CdmState:
    sigma: np.ndarray
    clock: float = 0.0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0), repr=False)
    event_count: int = 0
    message_count: int = 0
    _buf: np.ndarray = field(default=None, repr=False)
    _pos: int = 0

    @classmethod
    def initial(cls, net: Network, seed: int, sigma=None) -> "CdmState":
        rng = np.random.default_rng(seed)
        sig = np.zeros(net.n_nodes, dtype=np.int8) if sigma is None else np.array(sigma, dtype=np.int8)
        return cls(sigma=sig, rng=rng)

    def uniforms(self) -> tuple[np.ndarray, int]:
        if self._buf is None or self._pos + 3 > len(self._buf):
            self._buf = self.rng.random(_BUFFER)
            self._pos = 0
        return self._buf, self._pos


@dataclass
class FrameStats:
    s_hat: np.ndarray
    duration: float
    events: int
    messages: int


def flip_probability(net: Network, theta, sigma, i: int) -> float:
    """P(σ_i' = 1) = logistic(θ_i + Σ_{j∈N(i)} σ_j θ_ij)."""
    indptr, nbr, eid = net.csr
    return float(_flip_probability(net.check_vector(theta), net.n_nodes,
                                   np.asarray(sigma, dtype=np.int8), i, indptr, nbr, eid))


def cdm_step(net: Network, theta, state: CdmState) -> CdmState:
    """Advance by one clock tick: exponential holding time, then one node update."""
    theta = net.check_vector(theta)
    buf, pos = state.uniforms()
    n = net.n_nodes
    tau = -math.log(1.0 - buf[pos]) / n
    i = min(int(buf[pos + 1] * n), n - 1)
    p = flip_probability(net, theta, state.sigma, i)
    state.sigma[i] = 1 if buf[pos + 2] < p else 0
    state._pos = pos + 3
    state.clock += tau
    state.event_count += 1
    state.message_count += int(net.degrees[i])
    return state


def run_frame(net: Network, theta, state: CdmState, T: float) -> tuple[CdmState, FrameStats]:
    """Run the chain for duration ``T``; s_hat is the time average of φ(σ(τ)).

    The state is mutated in place and returned; the chain continues across
    frames under whatever parameter the next call supplies.
    """
    if not T > 0:
        raise ValueError("frame duration must be positive")
    theta = net.check_vector(theta)
    indptr, nbr, eid = net.csr
    n, m = net.n_nodes, net.n_edges
    acc = np.zeros(n + m)
    start = state.clock
    last = np.full(n + m, start)
    horizon = start + T
    counters = np.zeros(2, dtype=np.int64)
    clock = start
    done = False
    while not done:
        buf, pos = state.uniforms()
        state._pos, clock, done = _frame_kernel(theta, state.sigma, indptr, nbr, eid, n, m, buf, pos,
                                                horizon, acc, last, clock, counters)
    _flush(state.sigma, net.edge_array, n, m, acc, last, horizon)
    state.clock = horizon
    state.event_count += int(counters[0])
    state.message_count += int(counters[1])
    s_hat = np.minimum(np.maximum(acc / T, 0.0), 1.0)
    return state, FrameStats(s_hat, T, int(counters[0]), int(counters[1]))


def empirical_distribution(net: Network, theta, total_time: float, seed: int,
                           state: CdmState | None = None) -> np.ndarray:
    """Time-weighted occupancy of each configuration over ``total_time``.

    Indexed in ``enumerate_configurations`` order. Starts from the all-off
    configuration unless a state is given.
    """
    from .graph import ENUMERATION_CAP, SizeError

    if net.n_nodes > ENUMERATION_CAP:
        raise SizeError(f"{net.n_nodes} nodes exceeds the enumeration cap of {ENUMERATION_CAP}")
    theta = net.check_vector(theta)
    state = CdmState.initial(net, seed) if state is None else state
    indptr, nbr, eid = net.csr
    occ = np.zeros(1 << net.n_nodes)
    code = int(sum(int(b) << k for k, b in enumerate(state.sigma)))
    counters = np.zeros(2, dtype=np.int64)
    clock = state.clock
    horizon = clock + total_time
    done = False
    while not done:
        buf, pos = state.uniforms()
        state._pos, clock, code, done = _occupancy_kernel(theta, state.sigma, indptr, nbr, eid, net.n_nodes,
                                                          buf, pos, horizon, occ, code, clock, counters)
    state.clock = horizon
    state.event_count += int(counters[0])
    state.message_count += int(counters[1])
    return occ / occ.sum()
