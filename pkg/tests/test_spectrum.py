import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from damdc.spectrum import (
    BasisBank, SpectrumScenario, eval_basis, estimated_psd, generate_measurement,
    node_regressor, true_psd, write_psd_csv,
)

BANK = BasisBank()


def test_eval_basis_examples():
    assert eval_basis(BANK, 0.015, 1) == 1.0
    assert eval_basis(BANK, 0.5, 1) == 0.0
    # 0.06 = 3 * 0.02 is the left edge of band 4, not the right edge of band 3
    assert eval_basis(BANK, 0.06, 4) == 1.0 and eval_basis(BANK, 0.06, 3) == 0.0


def test_eval_basis_range_errors():
    with pytest.raises(ValueError):
        eval_basis(BANK, 1.0, 1)
    with pytest.raises(ValueError):
        eval_basis(BANK, 0.5, 0)
    with pytest.raises(ValueError):
        eval_basis(BANK, 0.5, 51)


@given(f=st.floats(0, 1, exclude_max=True))
def test_partition_of_unity(f):
    assert sum(eval_basis(BANK, f, m) for m in range(1, 51)) == BANK.amplitude


def test_matrix_structure():
    B = BANK.matrix()
    assert B.shape == (100, 50)
    assert set(np.unique(B)) == {0.0, 1.0}
    assert np.all(np.count_nonzero(B, axis=0) == 2)
    assert np.all(B.sum(axis=1) == 1)
    for j, f in enumerate(BANK.grid()):
        assert [eval_basis(BANK, f, m) for m in range(1, 51)] == B[j].tolist()


def test_scenario_defaults():
    scen = SpectrumScenario.generate(BANK, 20, seed=1)
    assert scen.support_size == 8
    assert scen.sparsity == 8 / 50
    assert set(np.unique(scen.omega0)) == {0.0, 0.7}
    assert len(scen.meta["active_bands"]) == 8


def test_pinned_bands_and_powers():
    scen = SpectrumScenario.generate(BANK, 3, active_bands=[16, 2], band_powers={16: 0.2}, seed=0)
    assert scen.omega0[15] == 0.2 and scen.omega0[1] == 0.7
    assert scen.support_size == 8
    with pytest.raises(ValueError):
        SpectrumScenario.generate(BANK, 3, active_bands=[51])


def test_true_psd_values():
    scen = SpectrumScenario.generate(BANK, 2, active_bands=[1], seed=0)
    inactive = np.flatnonzero(scen.omega0 == 0)[0]
    assert true_psd(scen, BANK, 0.015) == 0.7
    assert true_psd(scen, BANK, inactive * 0.02 + 0.01) == 0.0
    zero = scen.with_omega0(np.zeros(50))
    assert np.all(true_psd(zero, BANK, BANK.grid()) == 0)


def test_estimated_psd_linear_and_consistent():
    scen = SpectrumScenario.generate(BANK, 2, seed=4)
    f = BANK.grid()
    np.testing.assert_array_equal(estimated_psd(scen.omega0, BANK, f), true_psd(scen, BANK, f))
    assert np.all(estimated_psd(np.zeros(50), BANK, f) == 0)
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=50), rng.normal(size=50)
    np.testing.assert_allclose(estimated_psd(2 * a - b, BANK, f),
                               2 * estimated_psd(a, BANK, f) - estimated_psd(b, BANK, f), atol=1e-14)


def test_regressor_channel_cases():
    scen = SpectrumScenario.generate(BANK, 3, seed=0)
    np.testing.assert_array_equal(node_regressor(scen, BANK, 1, 5), BANK.matrix())
    gains = scen.channel_gain.copy()
    gains[2] = 0
    dead = SpectrumScenario(scen.omega0, gains, scen.rx_noise_power)
    assert np.all(node_regressor(dead, BANK, 2) == 0)


def test_noiseless_measurement_is_exact():
    scen = SpectrumScenario.generate(BANK, 2, noise_var=0.0, rx_noise_power=0.5, seed=0)
    snap = generate_measurement(scen, BANK, 0, 0, np.random.default_rng(0))
    np.testing.assert_array_equal(snap.desired, BANK.matrix() @ scen.omega0)


def test_measurement_deterministic():
    scen = SpectrumScenario.generate(BANK, 2, seed=0)
    a = generate_measurement(scen, BANK, 1, 3, np.random.default_rng(42))
    b = generate_measurement(scen, BANK, 1, 3, np.random.default_rng(42))
    np.testing.assert_array_equal(a.desired, b.desired)


def test_active_band_measurement_spread():
    scen = SpectrumScenario.generate(BANK, 1, seed=2)
    rng = np.random.default_rng(0)
    active = BANK.matrix() @ scen.omega0 > 0
    vals = np.concatenate([generate_measurement(scen, BANK, 0, i, rng).desired[active]
                           for i in range(10_000 // active.sum() + 1)])
    dev = np.abs(vals - 0.7)
    assert np.mean(dev <= 3 * np.sqrt(1e-3)) > 0.995
    assert np.all(dev <= 6 * np.sqrt(1e-3))


@settings(max_examples=20)
@given(n=st.integers(1, 5), seed=st.integers(0, 1000))
def test_gain_range(n, seed):
    scen = SpectrumScenario.generate(BANK, n, gain_range=(0.5, 2.0), seed=seed)
    assert scen.channel_gain.shape == (n, 100)
    assert np.all((scen.channel_gain >= 0.5) & (scen.channel_gain <= 2.0))


def test_scenario_dict_round_trip():
    scen = SpectrumScenario.generate(BANK, 2, seed=5)
    back = SpectrumScenario.from_dict(scen.to_dict())
    np.testing.assert_array_equal(back.omega0, scen.omega0)
    np.testing.assert_array_equal(back.channel_gain, scen.channel_gain)


def test_psd_csv(tmp_path):
    write_psd_csv(tmp_path / "p.csv", BANK.grid()[:2], [0.7, 0.0])
    assert (tmp_path / "p.csv").read_text() == "frequency,power\n0.000000,0.7000000000\n0.010000,0.0000000000\n"
