"""Per-node adaptive recursions for DAMDC-LMS and the baseline diffusion filters.

All functions here operate on a single node's :class:`NodeState` and one
:class:`RegressionSnapshot`; :func:`damdc_iteration` and
:func:`baseline_iteration` run one synchronous adapt-then-combine round over
a whole network of such states. The vectorised network engine in
:mod:`damdc.engine` implements the same arithmetic for simulations.

The measurement model is ``d = X w0 + n`` with ``X`` an ``R x M`` regressor
block (``R = 1`` for scalar data, ``R = N_c`` for spectrum sensing) and the
DAMDC prediction ``X (P w) = X (W p)`` with ``W = diag(w)`` and
``P = diag(p)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .network import CombinerMatrix

P_MODES = ("soft-state", "literal-overwrite")
SELECTOR_WEIGHTS = ("aggregate", "estimate")
BASELINES = ("standard", "oracle", "rza", "l0")
ALGORITHMS = BASELINES + ("damdc",)


class DivergenceError(FloatingPointError):
    """An update produced non-finite values (step size too large)."""


@dataclass(frozen=True)
class RegressionSnapshot:
    """Regressor block and desired vector seen by one node at one iteration."""

    regressor: np.ndarray
    desired: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.regressor))
        d = np.atleast_1d(np.asarray(self.desired))
        if X.ndim != 2 or d.ndim != 1 or X.shape[0] != d.shape[0]:
            raise ValueError(f"regressor {X.shape} and desired {d.shape} do not agree")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("regressor must be at least 1x1")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(d))):
            raise ValueError("snapshot entries must be finite")
        object.__setattr__(self, "regressor", X)
        object.__setattr__(self, "desired", d)

    @property
    def n_rows(self) -> int:
        return self.regressor.shape[0]

    @property
    def n_taps(self) -> int:
        return self.regressor.shape[1]


@dataclass
class NodeState:
    """Adaptive state held by one node.

    ``aggregate`` is the neighbourhood combination before any selector
    projection; it equals ``omega`` whenever the combination step is not
    projected. ``None`` means "same as omega".
    """

    omega: np.ndarray
    p_cont: np.ndarray
    p_disc: np.ndarray
    phi: np.ndarray
    aggregate: np.ndarray | None = None

    @classmethod
    def initial(cls, n_taps: int, dtype=float) -> "NodeState":
        zeros = np.zeros(n_taps, dtype=dtype)
        return cls(omega=zeros.copy(), p_cont=np.ones(n_taps), p_disc=np.ones(n_taps),
                   phi=zeros.copy(), aggregate=zeros.copy())

    def selector_weights(self, source: str = "aggregate") -> np.ndarray:
        if source == "aggregate" and self.aggregate is not None:
            return self.aggregate
        return self.omega

    def copy(self) -> "NodeState":
        agg = None if self.aggregate is None else self.aggregate.copy()
        return NodeState(self.omega.copy(), self.p_cont.copy(), self.p_disc.copy(),
                         self.phi.copy(), agg)


@dataclass(frozen=True)
class AlgorithmConfig:
    """Step sizes and penalty parameters for every supported algorithm.

    Defaults are the MSD-experiment values (mu = eta = 0.05, tau = 1,
    rho = 3.5e-5, eps = 0.1, beta = 5).
    """

    mu: float = 0.05
    eta: float = 0.05
    tau: float = 1.0
    rho_rza: float = 3.5e-5
    eps_rza: float = 0.1
    rho_l0: float = 3.5e-5
    beta_l0: float = 5.0
    oracle_support: np.ndarray | None = field(default=None, compare=False)
    p_mode: str = "soft-state"
    selector_weights: str = "aggregate"
    project_combine: bool | None = None

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if not self.mu > 0:
            out.append("mu must be > 0")
        if not self.eta > 0:
            out.append("eta must be > 0")
        if np.isnan(self.tau):
            out.append("tau must not be NaN")
        for name in ("rho_rza", "rho_l0", "eps_rza"):
            if not getattr(self, name) >= 0:
                out.append(f"{name} must be >= 0")
        if not self.beta_l0 > 0:
            out.append("beta_l0 must be > 0")
        if self.p_mode not in P_MODES:
            out.append(f"p_mode must be one of {P_MODES}")
        if self.selector_weights not in SELECTOR_WEIGHTS:
            out.append(f"selector_weights must be one of {SELECTOR_WEIGHTS}")
        return out

    def with_support(self, support) -> "AlgorithmConfig":
        return replace(self, oracle_support=np.asarray(support, dtype=float))


@dataclass(frozen=True)
class ErrorSignals:
    e_p: np.ndarray
    e_w: np.ndarray


def _check(state: NodeState, snap: RegressionSnapshot):
    if state.omega.shape[0] != snap.n_taps:
        raise ValueError(f"state has {state.omega.shape[0]} taps, regressor has {snap.n_taps}")


def _finite(x: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"{what} became non-finite")
    return x


def p_error(state: NodeState, snap: RegressionSnapshot) -> np.ndarray:
    """Error of the selector recursion: ``d - X (W p)`` with the binary selector."""
    _check(state, snap)
    return snap.desired - snap.regressor @ (state.omega * state.p_disc)


def p_update(state: NodeState, snap: RegressionSnapshot, eta: float,
             p_mode: str = "soft-state", selector_weights: str = "aggregate") -> np.ndarray:
    """Stochastic-gradient step on the continuous selector.

    ``p_mode="literal-overwrite"`` restarts from the binary selector,
    ``"soft-state"`` accumulates onto the continuous one.
    """
    e_p = p_error(state, snap)
    W = state.selector_weights(selector_weights)
    grad = np.conj(W) * (snap.regressor.conj().T @ e_p)
    base = state.p_disc if p_mode == "literal-overwrite" else state.p_cont
    return _finite(base + 2.0 * eta * np.real(grad), "selector")


def threshold_map(p_cont: np.ndarray, tau: float) -> np.ndarray:
    """Binary selector: 1 where ``p_cont >= tau``."""
    return (np.asarray(p_cont) >= tau).astype(float)


def w_error(state: NodeState, snap: RegressionSnapshot) -> np.ndarray:
    _check(state, snap)
    return snap.desired - snap.regressor @ (state.p_disc * state.omega)


def w_adapt(state: NodeState, snap: RegressionSnapshot, mu: float) -> np.ndarray:
    e_w = w_error(state, snap)
    phi = state.omega + mu * state.p_disc * (snap.regressor.conj().T @ e_w)
    return _finite(phi, "intermediate estimate")


def error_signals(state: NodeState, snap: RegressionSnapshot) -> ErrorSignals:
    return ErrorSignals(p_error(state, snap), w_error(state, snap))


def combine(neighbor_phis: Sequence[tuple[int, np.ndarray]], weights: np.ndarray,
            selector: np.ndarray | None = None) -> np.ndarray:
    """Convex combination ``sum_l a_lk phi_l``, optionally projected by a selector.

    ``weights`` is column k of the combiner matrix (indexed by source node).
    """
    weights = np.asarray(weights)
    if not neighbor_phis:
        raise ValueError("combine needs at least one neighbour")
    listed = {l for l, _ in neighbor_phis}
    support = set(np.flatnonzero(weights).tolist())
    if not support <= listed:
        raise ValueError(f"weights reference nodes {sorted(support - listed)} with no phi")
    out = None
    for l, phi in neighbor_phis:
        term = weights[l] * np.asarray(phi)
        out = term if out is None else out + term
    if selector is not None:
        out = selector * out
    return out


# ---------------------------------------------------------------- DAMDC

def damdc_adapt(state: NodeState, snap: RegressionSnapshot, config: AlgorithmConfig) -> NodeState:
    """Adaptation half-step: selector update, thresholding, weight update."""
    p_cont = p_update(state, snap, config.eta, config.p_mode, config.selector_weights)
    p_disc = threshold_map(p_cont, config.tau)
    if config.p_mode == "literal-overwrite":
        p_cont = p_disc.copy()
    nxt = NodeState(state.omega, p_cont, p_disc, state.phi, state.aggregate)
    nxt.phi = w_adapt(nxt, snap, config.mu)
    return nxt


def _neighbors(combiner: CombinerMatrix, k: int) -> np.ndarray:
    return np.flatnonzero(combiner.column(k))


def damdc_iteration(states: Sequence[NodeState], snaps: Sequence[RegressionSnapshot],
                    config: AlgorithmConfig, combiner: CombinerMatrix,
                    project: bool = False) -> list[NodeState]:
    """One synchronous ATC round of DAMDC-LMS over all nodes.

    Every node adapts before any node combines. With ``project=True`` the
    combined estimate is multiplied by the node's own selector (the
    spectrum-sensing variant of the combination step).
    """
    adapted = [damdc_adapt(s, x, config) for s, x in zip(states, snaps)]
    out = []
    for k, st in enumerate(adapted):
        nbrs = [(l, adapted[l].phi) for l in _neighbors(combiner, k)]
        agg = combine(nbrs, combiner.column(k))
        omega = st.p_disc * agg if project else agg.copy()
        out.append(NodeState(omega, st.p_cont, st.p_disc, st.phi, agg))
    return out


# ------------------------------------------------------------- baselines

def _csign(w: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(w):
        mag = np.abs(w)
        return np.divide(w, mag, out=np.zeros_like(w), where=mag > 0)
    return np.sign(w)


def rza_attraction(omega: np.ndarray, rho: float, eps: float) -> np.ndarray:
    """Reweighted zero attractor ``rho sign(w) / (1 + eps |w|)``."""
    return rho * _csign(omega) / (1.0 + eps * np.abs(omega))


def l0_attraction(omega: np.ndarray, rho: float, beta: float) -> np.ndarray:
    """Gradient of the exponential l0 approximation ``rho beta sign(w) exp(-beta |w|)``."""
    return rho * beta * _csign(omega) * np.exp(-beta * np.abs(omega))


def baseline_adapt(kind: str, state: NodeState, snap: RegressionSnapshot,
                   config: AlgorithmConfig) -> np.ndarray:
    if kind not in BASELINES:
        raise ValueError(f"unknown baseline {kind!r}")
    _check(state, snap)
    if kind == "oracle":
        if config.oracle_support is None:
            raise ValueError("oracle baseline needs config.oracle_support")
        mask = np.asarray(config.oracle_support, dtype=float)
    else:
        mask = np.ones(snap.n_taps)
    e = snap.desired - snap.regressor @ (state.omega * mask)
    phi = state.omega + config.mu * mask * (snap.regressor.conj().T @ e)
    if kind == "rza":
        phi = phi - rza_attraction(state.omega, config.rho_rza, config.eps_rza)
    elif kind == "l0":
        phi = phi - l0_attraction(state.omega, config.rho_l0, config.beta_l0)
    return _finite(phi, "intermediate estimate")


def baseline_iteration(kind: str, states: Sequence[NodeState], snaps: Sequence[RegressionSnapshot],
                       config: AlgorithmConfig, combiner: CombinerMatrix) -> list[NodeState]:
    phis = [baseline_adapt(kind, s, x, config) for s, x in zip(states, snaps)]
    out = []
    for k, st in enumerate(states):
        nbrs = [(l, phis[l]) for l in _neighbors(combiner, k)]
        omega = combine(nbrs, combiner.column(k))
        out.append(NodeState(omega, st.p_cont, st.p_disc, phis[k], omega.copy()))
    return out


# -------------------------------------------------------- cost gradients

def instantaneous_cost(p: np.ndarray, omega: np.ndarray, snap: RegressionSnapshot) -> float:
    """Squared error ``||d - X diag(w) p||^2`` for a real selector ``p``."""
    e = snap.desired - snap.regressor @ (omega * p)
    return float(np.real(np.vdot(e, e)))


def selector_gradient(p: np.ndarray, omega: np.ndarray, snap: RegressionSnapshot) -> np.ndarray:
    """Gradient of :func:`instantaneous_cost` with respect to real ``p``: ``-2 Re(W* X^H e)``."""
    e = snap.desired - snap.regressor @ (omega * p)
    return -2.0 * np.real(np.conj(omega) * (snap.regressor.conj().T @ e))


def weight_gradient(p: np.ndarray, omega: np.ndarray, snap: RegressionSnapshot) -> np.ndarray:
    """Wirtinger gradient with respect to ``conj(w)``: ``-P X^H e``."""
    e = snap.desired - snap.regressor @ (p * omega)
    return -p * (snap.regressor.conj().T @ e)
