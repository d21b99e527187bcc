"""Undirected networks, node/edge indexing and the coordination map.

Vectors indexed over ``V ∪ E`` are plain float arrays of length
``n_nodes + n_edges`` with the node block first and the edge block second,
edges in the order of ``Network.edges``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

ENUMERATION_CAP = 20


class ConfigurationError(ValueError):
    """Invalid scenario/topology/objective parameters."""


class SizeError(ValueError):
    """Exact enumeration requested on a graph above the cap."""


@dataclass(frozen=True)
class Network:
    n_nodes: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ConfigurationError("a network needs at least one node")
        canon = []
        seen = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ConfigurationError(f"self-loop at node {i + 1}")
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise ConfigurationError(f"edge ({i + 1},{j + 1}) out of range")
            e = (min(i, j), max(i, j))
            if e in seen:
                continue
            seen.add(e)
            canon.append(e)
        object.__setattr__(self, "edges", tuple(canon))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def size(self) -> int:
        """Length of a node-edge vector."""
        return self.n_nodes + self.n_edges

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        idx = {}
        for k, (i, j) in enumerate(self.edges):
            idx[(i, j)] = k
            idx[(j, i)] = k
        return idx

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        nbrs: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return tuple(tuple(sorted(a)) for a in nbrs)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency], dtype=np.int64)

    @cached_property
    def edge_array(self) -> np.ndarray:
        return np.array(self.edges, dtype=np.int64).reshape(-1, 2)

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(indptr, neighbor, edge id) arrays for the simulation kernels."""
        indptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(self.degrees)
        nbr = np.empty(indptr[-1], dtype=np.int64)
        eid = np.empty(indptr[-1], dtype=np.int64)
        for i, a in enumerate(self.adjacency):
            for k, j in enumerate(a):
                nbr[indptr[i] + k] = j
                eid[indptr[i] + k] = self.edge_index[(i, j)]
        return indptr, nbr, eid

    def node_part(self, vec: np.ndarray) -> np.ndarray:
        return vec[: self.n_nodes]

    def edge_part(self, vec: np.ndarray) -> np.ndarray:
        return vec[self.n_nodes :]

    def zeros(self) -> np.ndarray:
        return np.zeros(self.size)

    def check_vector(self, vec) -> np.ndarray:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.size,):
            raise ValueError(f"expected a vector of length {self.size}, got shape {vec.shape}")
        return vec

    @cached_property
    def labels(self) -> tuple[str, ...]:
        """1-based component ids: ``n<k>`` for nodes, ``e<i>_<j>`` for edges."""
        return tuple(
            [f"n{i + 1}" for i in range(self.n_nodes)]
            + [f"e{i + 1}_{j + 1}" for i, j in self.edges]
        )

    def as_dict(self, vec: np.ndarray) -> dict[str, float]:
        return {k: float(v) for k, v in zip(self.labels, vec)}

    @cached_property
    def phi_table(self) -> np.ndarray:
        """φ(σ) for every configuration, rows in ``enumerate_configurations`` order."""
        if self.n_nodes > ENUMERATION_CAP:
            raise SizeError(f"{self.n_nodes} nodes exceeds the enumeration cap of {ENUMERATION_CAP}")
        codes = np.arange(1 << self.n_nodes, dtype=np.int64)[:, None]
        configs = ((codes >> np.arange(self.n_nodes)) & 1).astype(float)
        ea = self.edge_array
        edge_cols = configs[:, ea[:, 0]] * configs[:, ea[:, 1]]
        return np.hstack([configs, edge_cols])


def build_topology(kind: str, n: int, m: int | None = None, seed: int = 0) -> Network:
    """Line, star (hub is node 1), complete or seeded uniform G(n, m)."""
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    if kind == "line":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif kind == "star":
        edges = [(0, j) for j in range(1, n)]
    elif kind == "complete":
        edges = list(itertools.combinations(range(n), 2))
    elif kind == "random":
        pairs = list(itertools.combinations(range(n), 2))
        if m is None or m < 0 or m > len(pairs):
            raise ConfigurationError(f"random graph on {n} nodes needs 0 <= m <= {len(pairs)}, got {m}")
        rng = np.random.default_rng(seed)
        pick = np.sort(rng.choice(len(pairs), size=m, replace=False))
        edges = [pairs[k] for k in pick]
    else:
        raise ConfigurationError(f"unknown topology kind {kind!r}")
    return Network(n, tuple(edges))


def phi(net: Network, sigma) -> np.ndarray:
    """Coordination configuration: node activations then edge products."""
    sigma = np.asarray(sigma)
    if sigma.shape != (net.n_nodes,):
        raise ValueError(f"configuration length {sigma.shape} does not match {net.n_nodes} nodes")
    if not np.all((sigma == 0) | (sigma == 1)):
        raise ValueError("configuration entries must be 0 or 1")
    sigma = sigma.astype(float)
    ea = net.edge_array
    return np.concatenate([sigma, sigma[ea[:, 0]] * sigma[ea[:, 1]]])


def config_index(sigma) -> int:
    """Position of ``sigma`` in the enumeration order (node 0 least significant)."""
    return int(sum(int(b) << k for k, b in enumerate(sigma)))


def enumerate_configurations(net: Network, cap: int = ENUMERATION_CAP) -> list[tuple[int, ...]]:
    """All 2^|V| configurations in binary counting order, node 0 least significant."""
    n = net.n_nodes
    if n > cap:
        raise SizeError(f"{n} nodes exceeds the enumeration cap of {cap}")
    return [tuple((k >> i) & 1 for i in range(n)) for k in range(1 << n)]
