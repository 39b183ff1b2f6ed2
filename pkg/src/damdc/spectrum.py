"""Basis-expansion PSD model and per-node spectrum measurements."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algorithms import RegressionSnapshot


@dataclass(frozen=True)
class BasisBank:
    """Non-overlapping rectangular bases on ``[f_min, f_max)``."""

    n_basis: int = 50
    n_freq: int = 100
    f_min: float = 0.0
    f_max: float = 1.0
    amplitude: float = 1.0
    kind: str = "rectangular"

    def __post_init__(self):
        if self.kind != "rectangular":
            raise ValueError(f"unsupported basis kind {self.kind!r}")
        if self.n_basis < 1 or self.n_freq < 1:
            raise ValueError("n_basis and n_freq must be >= 1")
        if not self.f_max > self.f_min:
            raise ValueError("f_max must exceed f_min")

    @property
    def width(self) -> float:
        return (self.f_max - self.f_min) / self.n_basis

    def grid(self) -> np.ndarray:
        """Sampled frequencies ``f_min + j (f_max - f_min) / n_freq``, j = 0..n_freq-1."""
        return self.f_min + np.arange(self.n_freq) * (self.f_max - self.f_min) / self.n_freq

    def band_of(self, f) -> np.ndarray:
        """0-based index of the band containing each frequency."""
        f = np.asarray(f, dtype=float)
        x = (f - self.f_min) / (self.f_max - self.f_min) * self.n_basis
        # grid points that round just below a band edge belong to the upper band
        idx = np.floor(x + 1e-9).astype(int)
        return np.clip(idx, 0, self.n_basis - 1)

    def matrix(self, f=None) -> np.ndarray:
        """Evaluation matrix ``[b_m(f_j)]`` of shape ``(len(f), n_basis)``."""
        f = self.grid() if f is None else np.atleast_1d(np.asarray(f, dtype=float))
        out = np.zeros((f.shape[0], self.n_basis))
        out[np.arange(f.shape[0]), self.band_of(f)] = self.amplitude
        return out


def eval_basis(bank: BasisBank, f: float, m: int) -> float:
    """Value of basis ``m`` (1-based) at frequency ``f``."""
    if not bank.f_min <= f < bank.f_max:
        raise ValueError(f"frequency {f} outside [{bank.f_min}, {bank.f_max})")
    if not 1 <= m <= bank.n_basis:
        raise ValueError(f"basis index {m} outside 1..{bank.n_basis}")
    return bank.amplitude if int(bank.band_of(f)) == m - 1 else 0.0


@dataclass(frozen=True)
class SpectrumScenario:
    """True coefficients, channel gains and noise levels of a sensing scenario.

    ``channel_gain`` holds ``|H_k(f_j)|^2`` per node and grid frequency and is
    constant over iterations. ``rx_noise_power`` is assumed known exactly, so
    it is added and removed again when measurements are synthesised.
    """

    omega0: np.ndarray
    channel_gain: np.ndarray
    rx_noise_power: np.ndarray
    obs_noise_var: float = 1e-3
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        w = np.asarray(self.omega0, dtype=float)
        if np.any(w < 0):
            raise ValueError("omega0 must be nonnegative")
        object.__setattr__(self, "omega0", w)
        object.__setattr__(self, "channel_gain", np.asarray(self.channel_gain, dtype=float))
        object.__setattr__(self, "rx_noise_power", np.asarray(self.rx_noise_power, dtype=float))

    @property
    def n_nodes(self) -> int:
        return self.channel_gain.shape[0]

    @property
    def support(self) -> np.ndarray:
        return self.omega0 != 0

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.omega0))

    @property
    def sparsity(self) -> float:
        return self.support_size / self.omega0.shape[0]

    @classmethod
    def generate(cls, bank: BasisBank, n_nodes: int, support_size: int = 8, power: float = 0.7,
                 active_bands=None, band_powers: dict | None = None, noise_var: float = 1e-3,
                 rx_noise_power: float = 0.0, gain_range=None, seed: int = 0) -> "SpectrumScenario":
        """Draw a sparse scenario.

        ``active_bands`` (1-based) pins some or all occupied bands; the rest
        of ``support_size`` is drawn without replacement. ``band_powers``
        maps 1-based band numbers to powers overriding ``power``.
        """
        rng = np.random.default_rng(seed)
        M = bank.n_basis
        pinned = sorted({int(b) for b in (active_bands or [])})
        for b in pinned:
            if not 1 <= b <= M:
                raise ValueError(f"active band {b} outside 1..{M}")
        if len(pinned) > support_size:
            raise ValueError("more pinned bands than support_size")
        free = np.setdiff1d(np.arange(M), np.array(pinned, dtype=int) - 1)
        extra = rng.choice(free, support_size - len(pinned), replace=False)
        bands = np.sort(np.concatenate([np.array(pinned, dtype=int) - 1, extra]).astype(int))
        omega0 = np.zeros(M)
        omega0[bands] = power
        for b, pw in (band_powers or {}).items():
            omega0[int(b) - 1] = pw
        if gain_range is None:
            gains = np.ones((n_nodes, bank.n_freq))
        else:
            lo, hi = gain_range
            gains = np.repeat(rng.uniform(lo, hi, size=(n_nodes, 1)), bank.n_freq, axis=1)
        rx = np.full(n_nodes, float(rx_noise_power))
        return cls(omega0, gains, rx, noise_var, meta={"active_bands": (bands + 1).tolist()})

    def with_omega0(self, omega0) -> "SpectrumScenario":
        return SpectrumScenario(np.asarray(omega0, dtype=float), self.channel_gain,
                                self.rx_noise_power, self.obs_noise_var, dict(self.meta))

    def to_dict(self) -> dict:
        return {
            "omega0": self.omega0.tolist(),
            "channel_gain": self.channel_gain.tolist(),
            "rx_noise_power": self.rx_noise_power.tolist(),
            "obs_noise_var": self.obs_noise_var,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SpectrumScenario":
        return cls(np.array(data["omega0"], dtype=float), np.array(data["channel_gain"], dtype=float),
                   np.array(data["rx_noise_power"], dtype=float), float(data["obs_noise_var"]))


def true_psd(scenario: SpectrumScenario, bank: BasisBank, f) -> np.ndarray | float:
    return estimated_psd(scenario.omega0, bank, f)


def estimated_psd(omega, bank: BasisBank, f) -> np.ndarray | float:
    """``b(f)^T omega`` at one or several frequencies."""
    scalar = np.ndim(f) == 0
    out = bank.matrix(f) @ np.asarray(omega, dtype=float)
    return float(out[0]) if scalar else out


def node_regressor(scenario: SpectrumScenario, bank: BasisBank, k: int, i: int = 0) -> np.ndarray:
    """``B_{k,i}``: row j is ``|H_k(f_j)|^2 b(f_j)^T``. Gains are time-invariant, so ``i`` is unused."""
    return scenario.channel_gain[k][:, None] * bank.matrix()


def all_regressors(scenario: SpectrumScenario, bank: BasisBank) -> np.ndarray:
    """Stacked ``(n_nodes, n_freq, n_basis)`` regressors."""
    return scenario.channel_gain[:, :, None] * bank.matrix()[None, :, :]


def clean_measurement(scenario: SpectrumScenario, bank: BasisBank, k: int, i: int = 0,
                      omega0=None) -> np.ndarray:
    w0 = scenario.omega0 if omega0 is None else omega0
    return node_regressor(scenario, bank, k, i) @ w0


def generate_measurement(scenario: SpectrumScenario, bank: BasisBank, k: int, i: int,
                         rng: np.random.Generator, omega0=None) -> RegressionSnapshot:
    """One noisy PSD scan at node ``k``.

    Draws ``n_freq`` Gaussian samples from ``rng``; the receiver noise power
    is added and then subtracted as a perfectly known quantity.
    """
    B = node_regressor(scenario, bank, k, i)
    w0 = scenario.omega0 if omega0 is None else omega0
    noise = rng.normal(0.0, np.sqrt(scenario.obs_noise_var), size=bank.n_freq)
    rx = scenario.rx_noise_power[k]
    d = B @ w0 + rx + noise - rx
    return RegressionSnapshot(B, d)


def write_psd_csv(path, freqs, powers) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frequency", "power"])
        for f, p in zip(freqs, powers):
            w.writerow([f"{f:.6f}", f"{p:.10f}"])
