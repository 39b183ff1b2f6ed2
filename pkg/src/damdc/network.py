"""Sensor-network topology and Metropolis combination weights."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

COLUMN_SUM_TOL = 1e-12


class TopologyError(ValueError):
    """Raised when a topology cannot be built from the given configuration."""


@dataclass(frozen=True)
class Topology:
    """Undirected graph over ``n_nodes`` sensors.

    The adjacency matrix never stores self loops; ``neighborhood(k)``
    adds ``k`` back in.
    """

    n_nodes: int
    adjacency: np.ndarray = field(repr=False)
    positions: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if adj.shape != (self.n_nodes, self.n_nodes):
            raise TopologyError(f"adjacency must be {self.n_nodes}x{self.n_nodes}, got {adj.shape}")
        if not np.array_equal(adj, adj.T):
            raise TopologyError("adjacency must be symmetric")
        adj = adj.copy()
        np.fill_diagonal(adj, False)
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @classmethod
    def from_edges(cls, n_nodes: int, edges) -> "Topology":
        adj = np.zeros((n_nodes, n_nodes), dtype=bool)
        for pair in edges:
            k, l = (int(v) for v in pair)
            if not (0 <= k < n_nodes and 0 <= l < n_nodes):
                raise TopologyError(f"edge {[k, l]} references a node outside 0..{n_nodes - 1}")
            if k != l:
                adj[k, l] = adj[l, k] = True
        return cls(n_nodes, adj)

    def neighborhood(self, k: int) -> np.ndarray:
        """Sorted node indices of N_k, self included."""
        nbrs = np.flatnonzero(self.adjacency[k])
        return np.sort(np.append(nbrs, k))

    def degrees(self) -> np.ndarray:
        """Self-inclusive neighborhood sizes |N_k|."""
        return self.adjacency.sum(axis=1) + 1

    def edges(self) -> list[tuple[int, int]]:
        ks, ls = np.nonzero(np.triu(self.adjacency))
        return [(int(k), int(l)) for k, l in zip(ks, ls)]

    def is_connected(self) -> bool:
        if self.n_nodes == 1:
            return True
        n_comp, _ = connected_components(csr_matrix(self.adjacency), directed=False)
        return n_comp == 1


@dataclass(frozen=True)
class CombinerMatrix:
    """Column-stochastic ATC weights; ``weights[l, k]`` is a_lk."""

    weights: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]

    def column(self, k: int) -> np.ndarray:
        return self.weights[:, k]


@dataclass
class ValidityReport:
    valid: bool
    problems: list[str]

    def __bool__(self):
        return self.valid


def build_topology(n_nodes: int, radius: float | None = None, seed: int = 0,
                   edges=None, max_retries: int = 1000) -> Topology:
    """Connected random geometric graph on the unit square.

    Points are redrawn until the graph is connected. An explicit ``edges``
    list bypasses the random draw (connectivity is still enforced).
    ``radius=None`` links every pair.
    """
    if n_nodes < 1:
        raise TopologyError("n_nodes must be >= 1")
    if edges is not None:
        topo = Topology.from_edges(n_nodes, edges)
        if not topo.is_connected():
            raise TopologyError("explicit edge list does not give a connected graph")
        return topo
    if radius is None:
        adj = ~np.eye(n_nodes, dtype=bool)
        return Topology(n_nodes, adj)

    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        pos = rng.random((n_nodes, 2))
        dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        topo = Topology(n_nodes, dist <= radius, positions=pos)
        if topo.is_connected():
            return topo
    raise TopologyError(
        f"no connected graph with n_nodes={n_nodes}, radius={radius} after {max_retries} draws")


def metropolis_weights(topology: Topology) -> CombinerMatrix:
    deg = topology.degrees()
    n = topology.n_nodes
    A = np.zeros((n, n))
    ks, ls = np.nonzero(topology.adjacency)
    A[ks, ls] = 1.0 / np.maximum(deg[ks], deg[ls])
    for k in range(n):
        # self weight absorbs the remainder
        A[k, k] = 1.0 - A[:, k].sum()
    return CombinerMatrix(A)


def validate_combiner(matrix: CombinerMatrix, topology: Topology,
                      tol: float = COLUMN_SUM_TOL) -> ValidityReport:
    A = np.asarray(matrix.weights)
    n = topology.n_nodes
    if A.shape != (n, n):
        return ValidityReport(False, [f"shape {A.shape} does not match {n} nodes"])
    problems = []
    neg = np.argwhere(A < 0)
    for l, k in neg:
        problems.append(f"negative weight a[{l},{k}]={A[l, k]:g}")
    allowed = topology.adjacency | np.eye(n, dtype=bool)
    off = np.argwhere((A != 0) & ~allowed)
    for l, k in off:
        problems.append(f"weight on non-edge a[{l},{k}]={A[l, k]:g}")
    sums = A.sum(axis=0)
    for k in np.flatnonzero(np.abs(sums - 1.0) > tol):
        problems.append(f"column {k} sums to {sums[k]:.15g}")
    return ValidityReport(not problems, problems)


def write_topology_csv(topology: Topology, combiner: CombinerMatrix, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "adjacency.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_k", "node_l"])
        w.writerows(topology.edges())
    with open(out / "weights.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_l", "dest_k", "a_lk"])
        A = combiner.weights
        for l, k in zip(*np.nonzero(A)):
            w.writerow([int(l), int(k), f"{A[l, k]:.17f}"])
