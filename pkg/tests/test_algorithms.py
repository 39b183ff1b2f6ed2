import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from damdc.algorithms import (
    AlgorithmConfig, DivergenceError, NodeState, RegressionSnapshot, baseline_adapt,
    baseline_iteration, combine, damdc_iteration, instantaneous_cost, l0_attraction,
    p_error, p_update, rza_attraction, selector_gradient, threshold_map, w_adapt, w_error,
    weight_gradient,
)
from damdc.network import Topology, metropolis_weights


def state(omega, p_cont=None, p_disc=None):
    omega = np.asarray(omega, dtype=float)
    ones = np.ones_like(omega)
    pc = ones if p_cont is None else np.asarray(p_cont, dtype=float)
    pd = pc if p_disc is None else np.asarray(p_disc, dtype=float)
    return NodeState(omega, pc.copy(), pd.copy(), np.zeros_like(omega))


SNAP = RegressionSnapshot(np.array([[2.0, 3.0]]), np.array([5.0]))


# --- worked examples ---------------------------------------------------------

def test_p_error_examples():
    assert p_error(state([1, 0]), SNAP).tolist() == [3.0]
    assert p_error(state([0, 0]), SNAP).tolist() == [5.0]
    assert p_error(state([1, 1], [0, 0]), SNAP).tolist() == [5.0]


def test_p_update_example():
    out = p_update(state([1, 0]), SNAP, eta=0.05)
    np.testing.assert_allclose(out, [1.6, 1.0], rtol=0, atol=1e-15)
    # zero weights or zero step leave the selector unchanged
    np.testing.assert_array_equal(p_update(state([0, 0], [0.3, 2.0]), SNAP, 0.05), [0.3, 2.0])
    np.testing.assert_array_equal(p_update(state([1, 0], [0.3, 2.0]), SNAP, 0.0), [0.3, 2.0])


def test_p_update_literal_restarts_from_binary():
    st_ = state([1, 0], p_cont=[5.0, 5.0], p_disc=[1, 1])
    lit = p_update(st_, SNAP, 0.05, p_mode="literal-overwrite")
    soft = p_update(st_, SNAP, 0.05, p_mode="soft-state")
    np.testing.assert_allclose(lit, [1.6, 1.0])
    np.testing.assert_allclose(soft, [5.6, 5.0])


def test_threshold_examples():
    assert threshold_map([1.5, 0.2, 1.0], 1.0).tolist() == [1, 0, 1]
    assert threshold_map(np.ones(4), 1.0).tolist() == [1] * 4
    assert threshold_map([3.0, -1.0, 1e300], np.inf).tolist() == [0, 0, 0]


def test_w_error_examples():
    assert w_error(state([1, 1], [1, 0]), SNAP).tolist() == [3.0]
    assert w_error(state([1, 1], [0, 0]), SNAP).tolist() == [5.0]
    # all-ones selector gives the plain LMS error
    assert w_error(state([1, 1]), SNAP).tolist() == [0.0]


def test_w_adapt_examples():
    snap = RegressionSnapshot(np.array([[1.0, 1.0]]), np.array([1.0]))
    np.testing.assert_array_equal(w_adapt(state([0, 0]), snap, 0.5), [0.5, 0.5])
    np.testing.assert_array_equal(w_adapt(state([0.2, 0.4]), snap, 0.0), [0.2, 0.4])
    np.testing.assert_array_equal(w_adapt(state([0.2, 0.4], [0, 0]), snap, 0.5), [0.2, 0.4])


def test_combine_examples():
    phi = np.array([0.3, -2.0])
    np.testing.assert_array_equal(combine([(0, phi)], np.array([1.0])), phi)
    two = combine([(0, np.array([1.0, 0.0])), (1, np.array([0.0, 1.0]))], np.array([0.5, 0.5]))
    np.testing.assert_array_equal(two, [0.5, 0.5])
    proj = combine([(0, np.array([1.0, 0.0])), (1, np.array([0.0, 1.0]))], np.array([0.5, 0.5]),
                   selector=np.array([1.0, 0.0]))
    np.testing.assert_array_equal(proj, [0.5, 0.0])


def test_combine_missing_neighbor():
    with pytest.raises(ValueError):
        combine([(0, np.zeros(2))], np.array([0.5, 0.5]))


def test_rza_and_l0_values():
    assert rza_attraction(np.array([0.0]), 3.5e-5, 0.1)[0] == 0.0
    assert rza_attraction(np.array([1.0]), 3.5e-5, 0.1)[0] == pytest.approx(3.1818181818e-5, rel=1e-9)
    assert rza_attraction(np.array([-1.0]), 3.5e-5, 0.1)[0] == pytest.approx(-3.5e-5 / 1.1)
    assert l0_attraction(np.array([0.0]), 3e-5, 50.0)[0] == 0.0
    assert l0_attraction(np.array([0.1]), 3e-5, 50.0)[0] == pytest.approx(3e-5 * 50 * np.exp(-5))


def test_oracle_with_full_mask_is_standard():
    rng = np.random.default_rng(1)
    snap = RegressionSnapshot(rng.normal(size=(4, 3)), rng.normal(size=4))
    st_ = state(rng.normal(size=3))
    cfg = AlgorithmConfig(mu=0.1).with_support(np.ones(3))
    np.testing.assert_array_equal(baseline_adapt("oracle", st_, snap, cfg),
                                  baseline_adapt("standard", st_, snap, cfg))


def test_oracle_needs_support():
    with pytest.raises(ValueError):
        baseline_adapt("oracle", state([0.0]), RegressionSnapshot([[1.0]], [1.0]), AlgorithmConfig())


def test_divergence_detected():
    snap = RegressionSnapshot(np.array([[1e200, 1e200]]), np.array([1e200]))
    with pytest.raises(DivergenceError), np.errstate(all="ignore"):
        w_adapt(state([1e200, 1e200]), snap, 1e200)


def test_config_validation():
    with pytest.raises(ValueError, match="mu"):
        AlgorithmConfig(mu=0)
    with pytest.raises(ValueError, match="p_mode"):
        AlgorithmConfig(p_mode="sometimes")


def test_snapshot_validation():
    with pytest.raises(ValueError):
        RegressionSnapshot(np.ones((2, 3)), np.ones(3))
    with pytest.raises(ValueError):
        RegressionSnapshot(np.array([[np.nan]]), np.array([1.0]))


def test_initial_state():
    s = NodeState.initial(4)
    assert s.omega.tolist() == [0] * 4
    assert s.p_cont.tolist() == [1] * 4 and s.p_disc.tolist() == [1] * 4


# --- network rounds ----------------------------------------------------------

def path_network():
    topo = Topology.from_edges(3, [(0, 1), (1, 2)])
    return metropolis_weights(topo)


def random_snaps(rng, n_nodes, rows, taps):
    return [RegressionSnapshot(rng.normal(size=(rows, taps)), rng.normal(size=rows))
            for _ in range(n_nodes)]


def test_pinned_selector_reduces_to_standard():
    rng = np.random.default_rng(5)
    comb = path_network()
    cfg = AlgorithmConfig(mu=0.05, tau=-np.inf)
    a = [NodeState.initial(4) for _ in range(3)]
    b = [NodeState.initial(4) for _ in range(3)]
    for _ in range(50):
        snaps = random_snaps(rng, 3, 2, 4)
        a = damdc_iteration(a, snaps, cfg, comb)
        b = baseline_iteration("standard", b, snaps, cfg, comb)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.omega, y.omega)


def test_noiseless_fixed_point():
    w0 = np.array([0.7, 0.0, 0.3])
    X = np.random.default_rng(0).normal(size=(5, 3))
    snap = RegressionSnapshot(X, X @ w0)
    for p in ([1, 0, 1], [1, 1, 1]):
        st_ = state(w0, p_disc=p)
        assert np.all(w_error(st_, snap) == 0)
        np.testing.assert_array_equal(w_adapt(st_, snap, 0.3), w0)


def test_projected_combine_matches_selector():
    rng = np.random.default_rng(2)
    comb = path_network()
    cfg = AlgorithmConfig(mu=0.1, eta=0.5)
    states = [NodeState.initial(3) for _ in range(3)]
    for _ in range(20):
        states = damdc_iteration(states, random_snaps(rng, 3, 4, 3), cfg, comb, project=True)
        for s in states:
            np.testing.assert_array_equal(s.omega, s.p_disc * s.aggregate)


def test_literal_mode_keeps_binary_state():
    rng = np.random.default_rng(3)
    comb = path_network()
    cfg = AlgorithmConfig(mu=0.1, eta=0.5, p_mode="literal-overwrite")
    states = [NodeState.initial(3) for _ in range(3)]
    for _ in range(20):
        states = damdc_iteration(states, random_snaps(rng, 3, 2, 3), cfg, comb)
        for s in states:
            np.testing.assert_array_equal(s.p_cont, s.p_disc)


# --- properties ----------------------------------------------------------------

vec = arrays(np.float64, st.integers(1, 8), elements=st.floats(-10, 10))


@given(p=vec, tau=st.floats(1e-6, 1.0))
def test_threshold_idempotent(p, tau):
    once = threshold_map(p, tau)
    np.testing.assert_array_equal(threshold_map(once, tau), once)
    assert set(np.unique(once)) <= {0.0, 1.0}


@settings(max_examples=50)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 10))
def test_projection_forms_agree(seed, m):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=m) + 1j * rng.normal(size=m)
    x = rng.normal(size=m) + 1j * rng.normal(size=m)
    p = rng.integers(0, 2, size=m).astype(float)
    P, W = np.diag(p), np.diag(w)
    a = w.conj() @ P @ x
    b = p @ W.conj() @ x
    c = x @ P @ w.conj()
    assert abs(a - b) <= 1e-12 * max(1, abs(a))
    assert abs(a - c) <= 1e-12 * max(1, abs(a))
    np.testing.assert_array_equal(P @ P, P)


@settings(max_examples=50)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6), m=st.integers(1, 5))
def test_combine_is_convex(seed, n, m):
    rng = np.random.default_rng(seed)
    phis = rng.normal(size=(n, m)) * 10
    a = rng.random(n)
    a /= a.sum()
    out = combine(list(enumerate(phis)), a)
    slack = 1e-12 * np.max(np.abs(phis))
    assert np.all(out >= phis.min(axis=0) - slack)
    assert np.all(out <= phis.max(axis=0) + slack)


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


@settings(max_examples=30)
@given(seed=st.integers(0, 2**32 - 1), rows=st.integers(1, 4), m=st.integers(1, 5),
       cplx=st.booleans())
def test_gradients_match_finite_differences(seed, rows, m, cplx):
    rng = np.random.default_rng(seed)
    def draw(*shape):
        z = rng.normal(size=shape)
        return z + 1j * rng.normal(size=shape) if cplx else z
    snap = RegressionSnapshot(draw(rows, m), draw(rows))
    w, p = draw(m), rng.normal(size=m)
    h = 1e-6
    fd_p = np.array([(instantaneous_cost(p + h * e, w, snap) - instantaneous_cost(p - h * e, w, snap))
                     / (2 * h) for e in np.eye(m)])
    g_p = selector_gradient(p, w, snap)
    assert np.linalg.norm(fd_p - g_p) <= 1e-6 * max(np.linalg.norm(g_p), 1e-3)

    def dj(direction):
        return np.array([(instantaneous_cost(p, w + h * direction * e, snap)
                          - instantaneous_cost(p, w - h * direction * e, snap)) / (2 * h)
                         for e in np.eye(m)])
    fd_w = 0.5 * (dj(1.0) + 1j * dj(1j)) if cplx else 0.5 * dj(1.0)
    g_w = weight_gradient(p, w, snap)
    assert np.linalg.norm(fd_w - g_w) <= 1e-6 * max(np.linalg.norm(g_w), 1e-3)
