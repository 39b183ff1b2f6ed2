"""Experiment configuration: dataclasses, JSON parsing with validation, presets."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

from .algorithms import ALGORITHMS, P_MODES, SELECTOR_WEIGHTS, AlgorithmConfig

PRESETS = ("fig3-msd", "fig4-psd", "fig5-tracking", "toy-support")


class ConfigError(ValueError):
    """Invalid experiment configuration; ``errors`` lists ``path: message`` strings."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class SpectrumConfig:
    kind: str = "spectrum"
    n_basis: int = 50
    n_freq: int = 100
    f_min: float = 0.0
    f_max: float = 1.0
    amplitude: float = 1.0
    support_size: int = 8
    power: float = 0.7
    active_bands: tuple | None = None
    band_powers: dict | None = None
    noise_var: float = 1e-3
    rx_noise_power: float = 0.0
    channel_gain_range: tuple | None = None


@dataclass(frozen=True)
class ScalarConfig:
    """Scalar-regressor system identification (``R = 1``)."""

    kind: str = "scalar"
    omega0: tuple = (1.0, 0.0, 0.0)
    noise_var: float = 0.01
    regressor_var: float = 1.0
    complex: bool = False


@dataclass(frozen=True)
class TopologyConfig:
    n_nodes: int = 20
    radius: float | None = 0.35
    edges: tuple | None = None
    max_retries: int = 1000


@dataclass(frozen=True)
class TrackingConfig:
    """Power of one band switches from ``power_before`` to ``power_after``.

    ``band`` is 1-based; the switch takes effect at iteration
    ``change_iteration`` (0-based), so iterations ``0..change_iteration-1``
    see the old power.
    """

    band: int = 16
    change_iteration: int = 500
    power_before: float = 0.2
    power_after: float = 0.0


DEFAULT_ALGORITHM_SET = ("standard", "oracle", "rza", "l0", "damdc")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "custom"
    scenario: SpectrumConfig | ScalarConfig = field(default_factory=SpectrumConfig)
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    algorithms: dict = field(default_factory=lambda: {k: AlgorithmConfig() for k in ALGORITHMS})
    algorithm_set: tuple = DEFAULT_ALGORITHM_SET
    n_iterations: int = 1000
    n_runs: int = 100
    master_seed: int = 0
    n_workers: int = 1
    tracking: TrackingConfig | None = None
    msd_floor_db: float = -300.0
    steady_fraction: float = 0.1

    def to_dict(self) -> dict:
        def algo(cfg: AlgorithmConfig):
            d = dataclasses.asdict(cfg)
            d.pop("oracle_support")
            return d
        return {
            "name": self.name,
            "scenario": _plain(dataclasses.asdict(self.scenario)),
            "topology": _plain(dataclasses.asdict(self.topology)),
            "algorithms": {k: algo(v) for k, v in self.algorithms.items()},
            "algorithm_set": list(self.algorithm_set),
            "n_iterations": self.n_iterations,
            "n_runs": self.n_runs,
            "master_seed": self.master_seed,
            "n_workers": self.n_workers,
            "tracking": None if self.tracking is None else dataclasses.asdict(self.tracking),
            "msd_floor_db": self.msd_floor_db,
            "steady_fraction": self.steady_fraction,
        }

    def replace(self, **changes) -> "ExperimentConfig":
        new = dataclasses.replace(self, **changes)
        errors = validate(new)
        if errors:
            raise ConfigError(errors)
        return new


def _plain(obj):
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    if isinstance(obj, list):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    return obj


# ------------------------------------------------------------------ parsing

_NUMBER = (int, float)


def _is_number(v):
    return isinstance(v, _NUMBER) and not isinstance(v, bool)


def _build(cls, data: Any, path: str, errors: list, converters: dict | None = None):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        errors.append(f"{path}: expected an object")
        return cls()
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            errors.append(f"{path}.{key}: unknown key")
            continue
        conv = (converters or {}).get(key)
        if conv is not None:
            try:
                value = conv(value)
            except (TypeError, ValueError) as exc:
                errors.append(f"{path}.{key}: {exc}")
                continue
        else:
            default = fields[key].default
            if _is_number(default) and not _is_number(value):
                errors.append(f"{path}.{key}: expected a number")
                continue
            if isinstance(default, bool) and not isinstance(value, bool):
                errors.append(f"{path}.{key}: expected true or false")
                continue
            if isinstance(default, int) and not isinstance(default, bool) and isinstance(value, float):
                if not value.is_integer():
                    errors.append(f"{path}.{key}: expected an integer")
                    continue
                value = int(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(f"{path}: {exc}")
        return cls()


def _int_tuple(v):
    if v is None:
        return None
    if not isinstance(v, (list, tuple)) or not all(isinstance(b, int) and not isinstance(b, bool) for b in v):
        raise ValueError("expected a list of integers")
    return tuple(v)


def _float_tuple(v):
    if not isinstance(v, (list, tuple)) or not all(_is_number(b) for b in v):
        raise ValueError("expected a list of numbers")
    return tuple(float(b) for b in v)


def _gain_range(v):
    if v is None:
        return None
    t = _float_tuple(v)
    if len(t) != 2 or not 0 <= t[0] <= t[1]:
        raise ValueError("expected [low, high] with 0 <= low <= high")
    return t


def _band_powers(v):
    if v is None:
        return None
    if not isinstance(v, dict):
        raise ValueError("expected an object mapping band number to power")
    out = {}
    for k, p in v.items():
        if not str(k).isdigit() or not _is_number(p):
            raise ValueError("expected an object mapping band number to power")
        out[int(k)] = float(p)
    return out


def _edges(v):
    if v is None:
        return None
    if not isinstance(v, (list, tuple)) or not all(
            isinstance(e, (list, tuple)) and len(e) == 2 and all(isinstance(i, int) for i in e) for e in v):
        raise ValueError("expected a list of [k, l] node pairs")
    return tuple(tuple(e) for e in v)


def _optional_number(v):
    if v is None:
        return None
    if not _is_number(v):
        raise ValueError("expected a number or null")
    return float(v)


def _algorithm(data, path, errors):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        errors.append(f"{path}: expected an object")
        return AlgorithmConfig()
    fields = {f.name for f in dataclasses.fields(AlgorithmConfig)} - {"oracle_support"}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            errors.append(f"{path}.{key}: unknown key")
        elif key in ("p_mode", "selector_weights"):
            allowed = P_MODES if key == "p_mode" else SELECTOR_WEIGHTS
            if value not in allowed:
                errors.append(f"{path}.{key}: must be one of {list(allowed)}")
            else:
                kwargs[key] = value
        elif key == "project_combine":
            if value is not None and not isinstance(value, bool):
                errors.append(f"{path}.{key}: expected true, false or null")
            else:
                kwargs[key] = value
        elif not _is_number(value):
            errors.append(f"{path}.{key}: expected a number")
        else:
            kwargs[key] = float(value)
    cfg = AlgorithmConfig.__new__(AlgorithmConfig)
    base = {f.name: f.default for f in dataclasses.fields(AlgorithmConfig)}
    base.update(kwargs)
    for k, v in base.items():
        object.__setattr__(cfg, k, v)
    for problem in cfg.problems():
        name = problem.split()[0]
        errors.append(f"{path}.{name}: {problem}")
    return cfg


def parse_config(text_or_data) -> ExperimentConfig:
    """Validated :class:`ExperimentConfig` from a JSON document (or decoded dict).

    Missing fields take the MSD-experiment defaults. Unknown keys are
    rejected; every problem is reported with its field path.
    """
    if isinstance(text_or_data, (str, bytes)):
        try:
            data = json.loads(text_or_data)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"<root>: invalid JSON ({exc})"]) from None
    else:
        data = text_or_data
    if not isinstance(data, dict):
        raise ConfigError(["<root>: expected a JSON object"])

    errors: list[str] = []
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for key in data:
        if key not in known:
            errors.append(f"{key}: unknown key")

    scen_data = data.get("scenario")
    kind = scen_data.get("kind", "spectrum") if isinstance(scen_data, dict) else "spectrum"
    if kind == "spectrum":
        scenario = _build(SpectrumConfig, scen_data, "scenario", errors, {
            "active_bands": _int_tuple, "band_powers": _band_powers,
            "channel_gain_range": _gain_range})
    elif kind == "scalar":
        scenario = _build(ScalarConfig, scen_data, "scenario", errors, {"omega0": _float_tuple})
    else:
        errors.append("scenario.kind: must be 'spectrum' or 'scalar'")
        scenario = SpectrumConfig()

    topology = _build(TopologyConfig, data.get("topology"), "topology", errors,
                      {"edges": _edges, "radius": _optional_number})

    algorithms = {k: AlgorithmConfig() for k in ALGORITHMS}
    algo_data = data.get("algorithms", {})
    if not isinstance(algo_data, dict):
        errors.append("algorithms: expected an object")
        algo_data = {}
    for key, value in algo_data.items():
        if key not in ALGORITHMS:
            errors.append(f"algorithms.{key}: unknown algorithm (expected one of {list(ALGORITHMS)})")
            continue
        algorithms[key] = _algorithm(value, f"algorithms.{key}", errors)

    algorithm_set = data.get("algorithm_set", list(DEFAULT_ALGORITHM_SET))
    if not isinstance(algorithm_set, list) or not all(isinstance(a, str) for a in algorithm_set):
        errors.append("algorithm_set: expected a list of algorithm names")
        algorithm_set = list(DEFAULT_ALGORITHM_SET)

    tracking = None
    if data.get("tracking") is not None:
        tracking = _build(TrackingConfig, data["tracking"], "tracking", errors)

    top = {}
    for key in ("name", "n_iterations", "n_runs", "master_seed", "n_workers",
                "msd_floor_db", "steady_fraction"):
        if key in data:
            top[key] = data[key]
    for key, value in list(top.items()):
        default = getattr(ExperimentConfig, key, None)
        if key == "name":
            ok = isinstance(value, str)
            msg = "expected a string"
        elif isinstance(default, int):
            ok = isinstance(value, int) and not isinstance(value, bool)
            msg = "expected an integer"
        else:
            ok = _is_number(value)
            msg = "expected a number"
        if not ok:
            errors.append(f"{key}: {msg}")
            del top[key]

    cfg = ExperimentConfig(scenario=scenario, topology=topology, algorithms=algorithms,
                           algorithm_set=tuple(algorithm_set), tracking=tracking, **top)
    errors.extend(validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def validate(cfg: ExperimentConfig) -> list[str]:
    errors = []
    if cfg.n_runs < 1:
        errors.append("n_runs: must be >= 1")
    if cfg.n_iterations < 0:
        errors.append("n_iterations: must be >= 0")
    if cfg.n_workers < 1:
        errors.append("n_workers: must be >= 1")
    if not 0 < cfg.steady_fraction <= 1:
        errors.append("steady_fraction: must be in (0, 1]")
    if not cfg.algorithm_set:
        errors.append("algorithm_set: must name at least one algorithm")
    for a in cfg.algorithm_set:
        if a not in ALGORITHMS:
            errors.append(f"algorithm_set: unknown algorithm {a!r}")
        elif a not in cfg.algorithms:
            errors.append(f"algorithms.{a}: missing configuration")
    if len(set(cfg.algorithm_set)) != len(cfg.algorithm_set):
        errors.append("algorithm_set: duplicate entries")
    t = cfg.topology
    if t.n_nodes < 1:
        errors.append("topology.n_nodes: must be >= 1")
    if t.radius is not None and not t.radius > 0:
        errors.append("topology.radius: must be > 0 or null")
    if t.max_retries < 1:
        errors.append("topology.max_retries: must be >= 1")
    s = cfg.scenario
    if isinstance(s, SpectrumConfig):
        if s.n_basis < 1:
            errors.append("scenario.n_basis: must be >= 1")
        if s.n_freq < 1:
            errors.append("scenario.n_freq: must be >= 1")
        if not s.f_max > s.f_min:
            errors.append("scenario.f_max: must exceed f_min")
        if not 0 <= s.support_size <= s.n_basis:
            errors.append("scenario.support_size: must be in 0..n_basis")
        if s.power < 0:
            errors.append("scenario.power: must be >= 0")
        if s.noise_var < 0:
            errors.append("scenario.noise_var: must be >= 0")
        for b in s.active_bands or ():
            if not 1 <= b <= s.n_basis:
                errors.append(f"scenario.active_bands: band {b} outside 1..{s.n_basis}")
        for b in (s.band_powers or {}):
            if not 1 <= b <= s.n_basis:
                errors.append(f"scenario.band_powers: band {b} outside 1..{s.n_basis}")
        if cfg.tracking is not None:
            if not 1 <= cfg.tracking.band <= s.n_basis:
                errors.append(f"tracking.band: outside 1..{s.n_basis}")
            if cfg.tracking.power_before < 0 or cfg.tracking.power_after < 0:
                errors.append("tracking: powers must be >= 0")
    else:
        if len(s.omega0) < 1:
            errors.append("scenario.omega0: must have at least one tap")
        if s.noise_var < 0:
            errors.append("scenario.noise_var: must be >= 0")
        if s.regressor_var <= 0:
            errors.append("scenario.regressor_var: must be > 0")
        if cfg.tracking is not None:
            errors.append("tracking: only supported for spectrum scenarios")
    if cfg.tracking is not None and cfg.tracking.change_iteration < 0:
        errors.append("tracking.change_iteration: must be >= 0")
    return errors


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError([f"preset: unknown preset {name!r} (expected one of {list(PRESETS)})"])
    return resources.files("damdc").joinpath("presets", f"{name}.json").read_text()


def load_preset(name: str) -> ExperimentConfig:
    return parse_config(preset_text(name))
