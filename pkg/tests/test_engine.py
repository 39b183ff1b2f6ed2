"""The vectorised engine and both kernel backends against the per-node recursions."""
import numpy as np
import pytest

from damdc import kernels
from damdc.algorithms import AlgorithmConfig, NodeState, RegressionSnapshot, baseline_iteration, damdc_iteration
from damdc.engine import NetworkFilter, NetworkState, Operators, cross_correlation
from damdc.network import build_topology, metropolis_weights
from damdc.spectrum import BasisBank, SpectrumScenario, all_regressors

BACKENDS = sorted(kernels.AVAILABLE)


def spectrum_case(seed=0, n_nodes=6):
    bank = BasisBank(10, 20)
    scen = SpectrumScenario.generate(bank, n_nodes, support_size=3, seed=seed)
    comb = metropolis_weights(build_topology(n_nodes, radius=0.6, seed=seed))
    return scen, bank, comb, all_regressors(scen, bank)


def reference_run(kind, cfg, comb, X, D, project):
    n, m = X.shape[0], X.shape[2]
    states = [NodeState.initial(m, dtype=X.dtype) for _ in range(n)]
    for d in D:
        snaps = [RegressionSnapshot(X[k], d[k]) for k in range(n)]
        if kind == "damdc":
            states = damdc_iteration(states, snaps, cfg, comb, project=project)
        else:
            states = baseline_iteration(kind, states, snaps, cfg, comb)
    return np.array([s.omega for s in states]), states


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("kind", ["standard", "oracle", "rza", "l0", "damdc"])
def test_engine_matches_per_node_spectrum(kind, backend):
    scen, bank, comb, X = spectrum_case()
    rng = np.random.default_rng(4)
    D = X @ scen.omega0 + 0.03 * rng.normal(size=(60, X.shape[0], X.shape[1]))
    cfg = AlgorithmConfig(mu=0.3, eta=0.05, rho_rza=1e-3, rho_l0=1e-3).with_support(scen.support)
    ref, states = reference_run(kind, cfg, comb, X, D, project=True)
    ops = Operators(comb, X.shape[2])
    ops.set_static_regressors(X)
    filt = NetworkFilter(kind, cfg, ops, project=True, backend=backend)
    for h in cross_correlation(X, D):
        filt.step(h)
    np.testing.assert_allclose(filt.estimates, ref, rtol=0, atol=1e-12)
    if kind == "damdc":
        np.testing.assert_array_equal(filt.selectors(), np.array([s.p_disc for s in states]))


@pytest.mark.parametrize("cplx", [False, True])
@pytest.mark.parametrize("mode", ["soft-state", "literal-overwrite"])
def test_engine_matches_per_node_scalar(cplx, mode):
    rng = np.random.default_rng(7)
    n, m, T = 5, 4, 80
    comb = metropolis_weights(build_topology(n, radius=0.7, seed=1))
    X = rng.normal(size=(T, n, 1, m))
    w0 = np.array([1.0, 0, 0.5, 0])
    if cplx:
        X = X + 1j * rng.normal(size=X.shape)
        w0 = w0 * (1 - 0.5j)
    D = X @ w0 + 0.05 * rng.normal(size=(T, n, 1))
    cfg = AlgorithmConfig(mu=0.05, eta=0.2, p_mode=mode)
    states = [NodeState.initial(m, dtype=X.dtype) for _ in range(n)]
    ops = Operators(comb, m)
    filt = NetworkFilter("damdc", cfg, ops, dtype=X.dtype)
    for t in range(T):
        snaps = [RegressionSnapshot(X[t, k], D[t, k]) for k in range(n)]
        states = damdc_iteration(states, snaps, cfg, comb)
        ops.set_regressors(X[t])
        filt.step(cross_correlation(X[t], D[t]))
    np.testing.assert_allclose(filt.estimates, [s.omega for s in states], rtol=0, atol=1e-12)
    np.testing.assert_array_equal(filt.state.p_disc, [s.p_disc for s in states])


@pytest.mark.skipif("cython" not in kernels.AVAILABLE, reason="compiled kernels not built")
@pytest.mark.parametrize("kind", ["standard", "oracle", "rza", "l0", "damdc"])
def test_backends_agree_bitwise(kind):
    scen, bank, comb, X = spectrum_case(seed=3, n_nodes=8)
    rng = np.random.default_rng(9)
    D = X @ scen.omega0 + 0.03 * rng.normal(size=(300, X.shape[0], X.shape[1]))
    H = cross_correlation(X, D)
    cfg = AlgorithmConfig(mu=0.3, eta=0.05, rho_rza=1e-3, rho_l0=1e-3).with_support(scen.support)
    out = []
    for backend in ("python", "cython"):
        ops = Operators(comb, X.shape[2])
        ops.set_static_regressors(X)
        filt = NetworkFilter(kind, cfg, ops, project=True, backend=backend)
        for h in H:
            filt.step(h)
        out.append(filt.state)
    # the l0 attractor calls exp(), which may differ by an ulp between libm and numpy
    tol = 1e-13 if kind == "l0" else 0
    np.testing.assert_allclose(out[0].omega, out[1].omega, rtol=0, atol=tol)
    np.testing.assert_array_equal(out[0].p_disc, out[1].p_disc)


def test_complex_data_uses_numpy_kernels():
    assert kernels.get("cython" if "cython" in kernels.AVAILABLE else None, complex_data=True).NAME == "python"


def test_unknown_backend():
    with pytest.raises(ImportError):
        kernels.get("fortran")


def test_network_state_round_trip():
    nodes = [NodeState.initial(3) for _ in range(2)]
    nodes[1].omega[:] = [1, 2, 3]
    st = NetworkState.from_nodes(nodes)
    np.testing.assert_array_equal(st.node(1).omega, [1, 2, 3])
    assert st.is_finite()
