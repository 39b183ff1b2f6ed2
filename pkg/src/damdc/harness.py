"""Monte-Carlo experiment runner, metrics and artifact writers."""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from . import kernels
from .config import ExperimentConfig, ScalarConfig, SpectrumConfig, TrackingConfig
from .engine import NetworkFilter, Operators, cross_correlation
from .network import Topology, build_topology, metropolis_weights, write_topology_csv, CombinerMatrix
from .spectrum import BasisBank, SpectrumScenario, all_regressors, estimated_psd, write_psd_csv

log = logging.getLogger(__name__)

# spawn keys: (role,) for per-experiment draws, (run, node, role) for per-run draws
ROLE_TOPOLOGY = 0
ROLE_SCENARIO = 1
ROLE_NOISE = 2
ROLE_REGRESSOR = 3
SEED_SCHEME = ("numpy SeedSequence(master_seed, spawn_key=(role,)) for topology (role 0) and "
               "scenario (role 1); SeedSequence(master_seed, spawn_key=(run, node, role)) for "
               "observation noise (role 2) and scalar regressors (role 3)")

CHUNK = 256  # iterations of measurements synthesised at a time


def seed_sequence(master_seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))


def node_rng(master_seed: int, run: int, node: int, role: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(master_seed, run, node, role))


# ------------------------------------------------------------------ metrics

def msd(estimates: np.ndarray, omega0: np.ndarray, floor_db: float = -300.0) -> float:
    """Network mean-square deviation in dB, clamped below at ``floor_db``."""
    est = np.atleast_2d(estimates)
    dev = est - np.asarray(omega0)[None, :]
    lin = float(shifted_mean(np.sum(np.abs(dev) ** 2, axis=1)))
    return to_db(lin, floor_db)


def to_db(linear, floor_db: float = -300.0):
    lin = np.asarray(linear, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.maximum(10.0 * np.log10(lin), floor_db)
    return float(out) if out.ndim == 0 else out


def support_recovery_rate(selectors, omega0) -> float:
    """Fraction of nodes whose binary selector equals the true support exactly."""
    if isinstance(selectors, (list, tuple)) and selectors and hasattr(selectors[0], "p_disc"):
        selectors = [s.p_disc for s in selectors]
    sel = np.atleast_2d(np.asarray(selectors)) != 0
    truth = np.asarray(omega0) != 0
    return float(np.mean(np.all(sel == truth[None, :], axis=1)))


def tracking_schedule(omega0: np.ndarray, iteration: int, tracking: TrackingConfig | None) -> np.ndarray:
    """True coefficients in force at ``iteration``."""
    w = np.array(omega0, dtype=float)
    if tracking is not None:
        if not 1 <= tracking.band <= w.shape[0]:
            raise ValueError(f"tracking band {tracking.band} outside 1..{w.shape[0]}")
        before = iteration < tracking.change_iteration
        w[tracking.band - 1] = tracking.power_before if before else tracking.power_after
    return w


def exhaustive_support_search(X: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Support minimising the BIC of a least-squares fit, over all subsets.

    Independent reference for support recovery on small problems: every
    one of the ``2^M`` supports is fitted by ordinary least squares.
    """
    n, M = X.shape
    best, best_bic = np.zeros(M, dtype=bool), math.inf
    for size in range(M + 1):
        for cols in combinations(range(M), size):
            if cols:
                sub = X[:, cols]
                coef, *_ = np.linalg.lstsq(sub, d, rcond=None)
                rss = float(np.sum(np.abs(d - sub @ coef) ** 2))
            else:
                rss = float(np.sum(np.abs(d) ** 2))
            bic = n * math.log(max(rss, 1e-300) / n) + size * math.log(n)
            if bic < best_bic:
                best_bic = bic
                best = np.zeros(M, dtype=bool)
                best[list(cols)] = True
    return best


# ------------------------------------------------------------------ setup

@dataclass
class Setup:
    """Everything fixed across Monte-Carlo runs."""

    topology: Topology
    combiner: CombinerMatrix
    omega0: np.ndarray
    regressors: np.ndarray | None = None  # (N, R, M) for static regressors
    scenario: SpectrumScenario | None = None
    bank: BasisBank | None = None

    @property
    def n_nodes(self) -> int:
        return self.topology.n_nodes

    @property
    def n_taps(self) -> int:
        return self.omega0.shape[0]


def build_setup(config: ExperimentConfig) -> Setup:
    t = config.topology
    topo = build_topology(t.n_nodes, t.radius, seed_sequence(config.master_seed, ROLE_TOPOLOGY),
                          edges=t.edges, max_retries=t.max_retries)
    comb = metropolis_weights(topo)
    s = config.scenario
    if isinstance(s, ScalarConfig):
        dtype = complex if s.complex else float
        return Setup(topo, comb, np.array(s.omega0, dtype=dtype))
    bank = BasisBank(s.n_basis, s.n_freq, s.f_min, s.f_max, s.amplitude)
    pinned = list(s.active_bands or [])
    powers = dict(s.band_powers or {})
    if config.tracking is not None:
        if config.tracking.band not in pinned:
            pinned.append(config.tracking.band)
        powers[config.tracking.band] = config.tracking.power_before
    scen = SpectrumScenario.generate(
        bank, t.n_nodes, support_size=s.support_size, power=s.power, active_bands=pinned,
        band_powers=powers, noise_var=s.noise_var, rx_noise_power=s.rx_noise_power,
        gain_range=s.channel_gain_range, seed=seed_sequence(config.master_seed, ROLE_SCENARIO))
    return Setup(topo, comb, scen.omega0, all_regressors(scen, bank), scen, bank)


def _truth_schedule(config: ExperimentConfig, setup: Setup) -> tuple[np.ndarray, ...]:
    """(before, after, change_iteration); ``after`` is ``before`` without tracking."""
    tr = config.tracking
    if tr is None:
        return setup.omega0, setup.omega0, config.n_iterations
    return (tracking_schedule(setup.omega0, 0, tr),
            tracking_schedule(setup.omega0, tr.change_iteration, tr), tr.change_iteration)


def spectrum_measurements(setup: Setup, config: ExperimentConfig, rngs, start: int, stop: int):
    """Noisy scans ``d`` of shape (stop-start, N, R) for iterations ``start..stop-1``.

    Matches :func:`damdc.spectrum.generate_measurement` called once per node
    and iteration on the same per-node generators.
    """
    before, after, change = _truth_schedule(config, setup)
    X = setup.regressors
    W = np.where((np.arange(start, stop) < change)[:, None], before[None, :], after[None, :])
    clean = np.matmul(X, W.T).transpose(2, 0, 1)           # (T, N, R)
    sd = math.sqrt(setup.scenario.obs_noise_var)
    noise = np.stack([rng.normal(0.0, sd, size=(stop - start, X.shape[1])) for rng in rngs], axis=1)
    rx = setup.scenario.rx_noise_power[None, :, None]
    return clean + rx + noise - rx


def scalar_data(setup: Setup, config: ExperimentConfig, x_rngs, n_rngs, start: int, stop: int):
    """Regressors (T, N, 1, M) and measurements (T, N, 1) for scalar identification."""
    s: ScalarConfig = config.scenario
    T, M = stop - start, setup.n_taps
    if s.complex:
        sx, sn = math.sqrt(s.regressor_var / 2), math.sqrt(s.noise_var / 2)
        x = np.stack([r.normal(0, sx, (T, M)) + 1j * r.normal(0, sx, (T, M)) for r in x_rngs], axis=1)
        n = np.stack([r.normal(0, sn, T) + 1j * r.normal(0, sn, T) for r in n_rngs], axis=1)
    else:
        sx, sn = math.sqrt(s.regressor_var), math.sqrt(s.noise_var)
        x = np.stack([r.normal(0, sx, (T, M)) for r in x_rngs], axis=1)
        n = np.stack([r.normal(0, sn, T) for r in n_rngs], axis=1)
    d = x @ setup.omega0 + n
    return x[:, :, None, :], d[:, :, None]


# ------------------------------------------------------------------ one run

@dataclass
class RunTrace:
    """Per-iteration metrics of one algorithm in one run (pre-update states)."""

    msd: np.ndarray
    support: np.ndarray
    band: np.ndarray | None
    final_msd: float = math.nan
    final_support: float = math.nan
    tail_estimate: np.ndarray | None = None
    diverged_at: int | None = None


def _filters(config: ExperimentConfig, setup: Setup, ops: Operators, backend):
    out = {}
    dtype = setup.omega0.dtype
    spectrum = isinstance(config.scenario, SpectrumConfig)
    support = (setup.omega0 != 0).astype(float)
    for name in config.algorithm_set:
        cfg = config.algorithms[name]
        if name == "oracle":
            cfg = cfg.with_support(support)
        out[name] = NetworkFilter(name, cfg, ops, dtype=dtype, project=spectrum, backend=backend)
    return out


def _sq_dev(est, w0) -> float:
    """Linear network MSD; non-finite once a filter has blown up."""
    with np.errstate(all="ignore"):
        dev = est - w0
        return float(shifted_mean(np.sum((dev.conj() * dev).real, axis=1)))


def simulate_run(config: ExperimentConfig, setup: Setup, run: int,
                 backend: str | None = None) -> dict[str, RunTrace]:
    """Run every algorithm on one shared realisation of the measurement noise."""
    N, M, T = setup.n_nodes, setup.n_taps, config.n_iterations
    ops = Operators(setup.combiner, M)
    spectrum = setup.scenario is not None
    if spectrum:
        ops.set_static_regressors(setup.regressors)
    filters = _filters(config, setup, ops, backend)
    seed = config.master_seed
    n_rngs = [node_rng(seed, run, k, ROLE_NOISE) for k in range(N)]
    x_rngs = [node_rng(seed, run, k, ROLE_REGRESSOR) for k in range(N)]

    before, after, change = _truth_schedule(config, setup)
    band = None if config.tracking is None else config.tracking.band - 1
    tail_start = T - max(1, math.ceil(config.steady_fraction * T)) if T else 0
    traces = {a: RunTrace(np.zeros(T), np.zeros(T), None if band is None else np.zeros(T),
                          tail_estimate=np.zeros(M, dtype=setup.omega0.dtype)) for a in filters}
    live = dict(filters)

    for start in range(0, T, CHUNK):
        stop = min(T, start + CHUNK)
        if spectrum:
            H = cross_correlation(setup.regressors, spectrum_measurements(setup, config, n_rngs, start, stop))
        else:
            Xs, Ds = scalar_data(setup, config, x_rngs, n_rngs, start, stop)
        for j, i in enumerate(range(start, stop)):
            w0 = before if i < change else after
            truth = w0 != 0
            if spectrum:
                h = H[j]
            else:
                ops.set_regressors(Xs[j])
                h = cross_correlation(Xs[j], Ds[j])
            for name, filt in list(live.items()):
                tr = traces[name]
                est = filt.state.omega
                val = _sq_dev(est, w0)
                if not math.isfinite(val):
                    tr.diverged_at = i
                    del live[name]
                    continue
                tr.msd[i] = val
                tr.support[i] = np.mean(np.all((filt.selectors() != 0) == truth, axis=1))
                if band is not None:
                    tr.band[i] = est[:, band].mean()
                if i >= tail_start:
                    tr.tail_estimate += est.mean(axis=0)
                with np.errstate(all="ignore"):
                    filt.step(h)

    w_last = before if T - 1 < change else after
    for name, filt in live.items():
        tr = traces[name]
        est = filt.state.omega
        val = _sq_dev(est, w_last)
        if not math.isfinite(val):
            tr.diverged_at = T
            continue
        tr.final_msd = val
        tr.final_support = support_recovery_rate(filt.selectors(), w_last)
        if T:
            tr.tail_estimate /= T - tail_start
    return traces


# ------------------------------------------------------------------ experiment

@dataclass
class MetricsSeries:
    """Run-averaged metrics; entry ``i`` describes the state entering iteration ``i``."""

    algorithm: str
    msd_linear: np.ndarray
    support_recovery: np.ndarray
    band_power: np.ndarray | None
    band: int | None
    runs_used: int
    diverged_runs: list
    final_msd_linear: float
    final_support_recovery: float
    steady_estimate: np.ndarray | None
    floor_db: float = -300.0
    steady_fraction: float = 0.1

    @property
    def msd_db(self) -> np.ndarray:
        return to_db(self.msd_linear, self.floor_db)

    @property
    def n_iterations(self) -> int:
        return self.msd_linear.shape[0]

    def _tail(self, x):
        n = max(1, math.ceil(self.steady_fraction * x.shape[0]))
        return x[-n:]

    @property
    def steady_state_msd_db(self) -> float:
        """dB of the MSD averaged over the last ``steady_fraction`` of iterations."""
        if not self.n_iterations:
            return math.nan
        return to_db(float(np.mean(self._tail(self.msd_linear))), self.floor_db)

    @property
    def steady_state_support_recovery(self) -> float:
        if not self.n_iterations:
            return math.nan
        return float(np.mean(self._tail(self.support_recovery)))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    setup: Setup
    series: dict[str, MetricsSeries]
    backend: str
    report: dict = field(default_factory=dict)

    @property
    def any_diverged(self) -> bool:
        return any(s.diverged_runs for s in self.series.values())


def _worker(args):
    config, run, backend = args
    return simulate_run(config, build_setup(config), run, backend)


def run_experiment(config: ExperimentConfig, n_workers: int | None = None,
                   backend: str | None = None, progress=None) -> ExperimentResult:
    """Average every configured algorithm over ``config.n_runs`` runs.

    Topology and scenario are drawn once from the master seed; each run has
    its own per-node noise streams shared by all algorithms. Results do not
    depend on ``n_workers`` because runs are reduced in index order.
    """
    setup = build_setup(config)
    workers = config.n_workers if n_workers is None else n_workers
    backend_name = kernels.get(backend, complex_data=setup.omega0.dtype.kind == "c").NAME
    runs = range(config.n_runs)
    if workers > 1 and config.n_runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_worker, [(config, r, backend) for r in runs])
            traces = _reduce(config, setup, results, progress)
    else:
        traces = _reduce(config, setup, (simulate_run(config, setup, r, backend) for r in runs), progress)
    result = ExperimentResult(config, setup, traces, backend_name)
    result.report = build_report(result)
    return result


class _ShiftedMean:
    """Running mean ``x0 + sum(x - x0) / n`` in fixed order.

    Exact when every sample equals the first one, which keeps quantities
    such as the iteration-0 MSD bit-identical to their closed form.
    """

    def __init__(self):
        self.ref = None
        self.acc = None
        self.n = 0

    def add(self, x):
        x = np.asarray(x)
        if self.ref is None:
            self.ref = x.copy()
            self.acc = np.zeros_like(x)
        else:
            self.acc += x - self.ref
        self.n += 1

    def mean(self, like=None):
        if not self.n:
            return np.full_like(like, math.nan, dtype=float) if like is not None else math.nan
        out = self.ref + self.acc / self.n
        return float(out) if out.ndim == 0 else out


def shifted_mean(x, axis=0):
    x = np.asarray(x)
    x0 = np.take(x, [0], axis=axis)
    return np.squeeze(x0 + np.sum(x - x0, axis=axis, keepdims=True) / x.shape[axis], axis=axis)


def _reduce(config, setup, results, progress):
    T = config.n_iterations
    band = None if config.tracking is None else config.tracking.band
    keys = ("msd", "sup", "band", "fm", "fs", "tail")
    acc = {a: {k: _ShiftedMean() for k in keys} for a in config.algorithm_set}
    diverged = {a: [] for a in config.algorithm_set}
    for run, traces in enumerate(results):
        for name, tr in traces.items():
            if tr.diverged_at is not None:
                log.warning("%s diverged in run %d at iteration %d", name, run, tr.diverged_at)
                diverged[name].append(run)
                continue
            a = acc[name]
            a["msd"].add(tr.msd)
            a["sup"].add(tr.support)
            if band is not None:
                a["band"].add(tr.band)
            a["fm"].add(tr.final_msd)
            a["fs"].add(tr.final_support)
            a["tail"].add(tr.tail_estimate)
        if progress is not None:
            progress(run + 1, config.n_runs)
    out = {}
    empty = np.zeros(T)
    for name, a in acc.items():
        out[name] = MetricsSeries(
            name, a["msd"].mean(empty), a["sup"].mean(empty),
            None if band is None else a["band"].mean(empty), band,
            a["msd"].n, diverged[name], a["fm"].mean(), a["fs"].mean(),
            a["tail"].mean(np.zeros(setup.n_taps)) if T else None,
            config.msd_floor_db, config.steady_fraction)
    return out


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def build_report(result: ExperimentResult) -> dict:
    cfg, setup = result.config, result.setup
    algos = {}
    initial = to_db(float(np.sum(np.abs(setup.omega0) ** 2)), cfg.msd_floor_db)
    for name, s in result.series.items():
        entry = {
            "runs_used": s.runs_used,
            "diverged_runs": len(s.diverged_runs),
            "diverged_run_indices": s.diverged_runs,
            "initial_msd_db": _num(s.msd_db[0]) if s.n_iterations else _num(initial),
            "steady_state_msd_db": _num(s.steady_state_msd_db),
            "final_msd_db": _num(to_db(s.final_msd_linear, cfg.msd_floor_db)) if s.runs_used else None,
            "steady_state_support_recovery": _num(s.steady_state_support_recovery),
            "final_support_recovery": _num(s.final_support_recovery),
        }
        if s.band_power is not None and s.n_iterations:
            entry["band_power_final"] = _num(s.band_power[-1])
        algos[name] = entry
    scen = {"omega0": [_num(v) for v in np.real(setup.omega0)],
            "support": (np.flatnonzero(setup.omega0 != 0) + 1).tolist()}
    if setup.scenario is not None:
        scen["active_bands"] = setup.scenario.meta.get("active_bands")
    return {
        "name": cfg.name,
        "config": cfg.to_dict(),
        "backend": result.backend,
        "seeds": {"master_seed": cfg.master_seed, "scheme": SEED_SCHEME},
        "topology": {"n_nodes": setup.n_nodes, "edges": [list(e) for e in setup.topology.edges()]},
        "scenario": scen,
        "metrics_index": "row i holds the run average of the state entering iteration i",
        "algorithms": algos,
    }


def write_artifacts(result: ExperimentResult, out_dir) -> list[Path]:
    """Write metrics, PSD, topology and report files; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, s in result.series.items():
        path = out / f"metrics_{name}.csv"
        header = ["iteration", "msd_db", "support_recovery"]
        if s.band is not None:
            header.append(f"band_power_{s.band}")
        msd_db = s.msd_db
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(s.n_iterations):
                row = [str(i), f"{msd_db[i]:.6f}", f"{s.support_recovery[i]:.6f}"]
                if s.band is not None:
                    row.append(f"{s.band_power[i]:.8f}")
                w.writerow(row)
        written.append(path)
    setup = result.setup
    if setup.bank is not None:
        f = setup.bank.grid()
        before, after, change = _truth_schedule(result.config, setup)
        truth = after if result.config.n_iterations > change else before
        write_psd_csv(out / "psd_true.csv", f, estimated_psd(truth, setup.bank, f))
        written.append(out / "psd_true.csv")
        for name, s in result.series.items():
            if s.steady_estimate is None or not s.runs_used:
                continue
            write_psd_csv(out / f"psd_{name}.csv", f, estimated_psd(s.steady_estimate, setup.bank, f))
            written.append(out / f"psd_{name}.csv")
    write_topology_csv(setup.topology, setup.combiner, out)
    written += [out / "adjacency.csv", out / "weights.csv"]
    with open(out / "report.json", "w") as fh:
        json.dump(result.report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(out / "report.json")
    return written
