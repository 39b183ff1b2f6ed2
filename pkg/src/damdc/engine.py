"""Vectorised adapt-then-combine engine: every node of the network per call.

The per-node functions in :mod:`damdc.algorithms` define the recursions;
this module runs the same arithmetic on ``(n_nodes, n_taps)`` arrays in
the normal-equation form ``X^H e = X^H d - (X^H X) v`` so that one
cross-correlation ``h = X^H d`` per node and iteration is shared by every
algorithm consuming that measurement.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import block_diag, csr_matrix

from . import kernels
from .algorithms import ALGORITHMS, AlgorithmConfig, NodeState
from .network import CombinerMatrix


@dataclass
class NetworkState:
    omega: np.ndarray
    aggregate: np.ndarray
    p_cont: np.ndarray
    p_disc: np.ndarray
    phi: np.ndarray

    @classmethod
    def initial(cls, n_nodes: int, n_taps: int, dtype=float) -> "NetworkState":
        z = lambda: np.zeros((n_nodes, n_taps), dtype=dtype)  # noqa: E731
        return cls(z(), z(), np.ones((n_nodes, n_taps)), np.ones((n_nodes, n_taps)), z())

    @classmethod
    def from_nodes(cls, nodes: list[NodeState]) -> "NetworkState":
        agg = [n.omega if n.aggregate is None else n.aggregate for n in nodes]
        return cls(np.array([n.omega for n in nodes]), np.array(agg),
                   np.array([n.p_cont for n in nodes], dtype=float),
                   np.array([n.p_disc for n in nodes], dtype=float),
                   np.array([n.phi for n in nodes]))

    def node(self, k: int) -> NodeState:
        return NodeState(self.omega[k].copy(), self.p_cont[k].copy(), self.p_disc[k].copy(),
                         self.phi[k].copy(), self.aggregate[k].copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.omega)) and np.all(np.isfinite(self.p_cont)))


class Operators:
    """Sparse combination matrix and block-diagonal Gram matrix for one network."""

    def __init__(self, combiner: CombinerMatrix, n_taps: int):
        C = csr_matrix(np.asarray(combiner.weights, dtype=float).T)
        C.sort_indices()
        self.c_indptr = C.indptr.astype(np.intc)
        self.c_indices = C.indices.astype(np.intc)
        self.c_data = np.ascontiguousarray(C.data, dtype=float)
        self.combine = csr_matrix((self.c_data, self.c_indices, self.c_indptr), shape=C.shape)
        self.n_nodes = C.shape[0]
        self.n_taps = n_taps
        self.gram = None
        self.static = False

    def _install(self, data, indices, indptr):
        self.g_indptr = np.ascontiguousarray(indptr, dtype=np.intc)
        self.g_indices = np.ascontiguousarray(indices, dtype=np.intc)
        self.g_data = np.ascontiguousarray(data)
        n = self.n_nodes * self.n_taps
        self.gram = csr_matrix((self.g_data, self.g_indices, self.g_indptr), shape=(n, n))

    def set_static_regressors(self, X: np.ndarray) -> None:
        """Gram blocks for regressors that never change; zero entries are dropped."""
        G = block_diag([x.conj().T @ x for x in X], format="csr")
        G.eliminate_zeros()
        G.sort_indices()
        self._install(G.data, G.indices, G.indptr)
        self.static = True

    def set_regressors(self, X: np.ndarray) -> None:
        """Dense Gram blocks for time-varying regressors, refreshed in place."""
        N, M = self.n_nodes, self.n_taps
        G = np.einsum("nri,nrj->nij", X.conj(), X)
        if self.gram is None or self.static or self.g_data.dtype != G.dtype:
            indptr = np.arange(0, N * M * M + 1, M)
            indices = (np.arange(N)[:, None, None] * M + np.arange(M)[None, None, :]
                       ).repeat(M, axis=1).reshape(-1)
            self._install(G.reshape(-1), indices, indptr)
            self.static = False
        else:
            self.g_data[:] = G.reshape(-1)


def cross_correlation(X: np.ndarray, d: np.ndarray) -> np.ndarray:
    """``h[..., k, :] = X_k^H d[..., k, :]`` for ``X`` (N,R,M) and ``d`` (..., N, R)."""
    if d.ndim == 2:
        return np.einsum("nrm,nr->nm", X.conj(), d)
    # (T, N, R) -> (N, T, R) @ (N, R, M) -> (T, N, M)
    return np.ascontiguousarray(np.matmul(d.transpose(1, 0, 2), X.conj()).transpose(1, 0, 2))


_ATTRACTORS = {"rza": 1, "l0": 2}


class NetworkFilter:
    """One algorithm running on every node of a network."""

    def __init__(self, kind: str, config: AlgorithmConfig, ops: Operators, dtype=float,
                 project: bool = False, backend: str | None = None):
        if kind not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {kind!r}")
        self.kind = kind
        self.config = config
        self.ops = ops
        self.project = project if config.project_combine is None else config.project_combine
        self.state = NetworkState.initial(ops.n_nodes, ops.n_taps, dtype)
        self.kernels = kernels.get(backend, complex_data=np.dtype(dtype).kind == "c")
        self.mask = np.ones(ops.n_taps)
        if kind == "oracle":
            if config.oracle_support is None:
                raise ValueError("oracle baseline needs config.oracle_support")
            self.mask = np.asarray(config.oracle_support, dtype=float)

    def step(self, h: np.ndarray) -> None:
        c = self.config
        if self.kind == "damdc":
            self.kernels.damdc_step(self.ops, h, self.state, c.mu, c.eta, c.tau,
                                    c.p_mode == "literal-overwrite", self.project,
                                    c.selector_weights == "aggregate")
        else:
            att = _ATTRACTORS.get(self.kind, 0)
            rho, shape = {1: (c.rho_rza, c.eps_rza), 2: (c.rho_l0, c.beta_l0)}.get(att, (0.0, 0.0))
            self.kernels.lms_step(self.ops, h, self.state, self.mask, c.mu, att, rho, shape)

    @property
    def estimates(self) -> np.ndarray:
        return self.state.omega

    def selectors(self) -> np.ndarray:
        """Binary tap selector per node (all ones for selector-free filters)."""
        if self.kind == "damdc":
            return self.state.p_disc
        return np.broadcast_to(self.mask, self.state.omega.shape)
