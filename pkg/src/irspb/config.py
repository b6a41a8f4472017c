"""Experiment configuration: dataclasses, YAML loading/dumping, validation.

Physical quantities are given in the units noted per field; dB/dBm values
are converted to linear only through the helper properties here.
"""

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import yaml


class ConfigError(ValueError):
    """Invalid or unparsable configuration."""


@dataclass(frozen=True)
class SystemConfig:
    M: int
    K: int
    Ny: int
    Nz: int
    spacing_ratio_ap: float
    spacing_ratio_irs_y: float
    spacing_ratio_irs_z: float
    ap_location: tuple
    irs_location: tuple
    power_dbm: float
    noise_dbm: float


@dataclass(frozen=True)
class ChannelConfig:
    rician_beta_db: float
    beta0_db: float
    D0: float
    eta_ai: float
    eta_user: float
    # "slant": 3-D IRS-user range; "horizontal": ground distance (invalid for users
    # closer than the IRS height)
    irs_user_range: str = "slant"


@dataclass(frozen=True)
class MobilityConfig:
    spawn_x: tuple
    spawn_y: tuple
    speed_min: float
    speed_max: float
    # "m/s" or "m/slot" (per-slot displacement; multiply by 1/slot_duration)
    speed_unit: str
    heading_min: float
    heading_max: float
    slot_duration: float
    uncertainty_std: float


@dataclass(frozen=True)
class TrainingConfig:
    tau: int
    n_train: int
    iterations: int
    batch_size: int = 32
    lr: float = 1e-3
    holdout_fraction: float = 0.1
    eval_every: int = 50
    conv_filters: int = 4
    lstm_hidden: int = 64


@dataclass(frozen=True)
class OnlineConfig:
    iterations: int = 500
    lr: float = 1e-3
    hidden_sizes: tuple = (32, 16, 16)
    warm_start: bool = False


@dataclass(frozen=True)
class GenieConfig:
    iterations: int = 500
    restarts: int = 5
    step: float = 0.05
    tolerance: float = 1e-8


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    values: tuple
    methods: tuple
    mc_count: int
    seed: int


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig
    channel: ChannelConfig
    mobility: MobilityConfig
    training: TrainingConfig
    online: OnlineConfig = field(default_factory=OnlineConfig)
    genie: GenieConfig = field(default_factory=GenieConfig)
    episode_slots: int = 20
    seed: int = 0

    def replace(self, section=None, **changes):
        if section is None:
            return dataclasses.replace(self, **changes)
        return dataclasses.replace(self, **{section: dataclasses.replace(getattr(self, section), **changes)})

    @property
    def power_w(self):
        return 10.0 ** ((self.system.power_dbm - 30.0) / 10.0)

    @property
    def noise_w(self):
        return 10.0 ** ((self.system.noise_dbm - 30.0) / 10.0)

    @property
    def beta(self):
        return 10.0 ** (self.channel.rician_beta_db / 10.0)

    def digest(self, sections=None):
        """Stable hash of the configuration (optionally restricted to some sections)."""
        data = to_dict(self)
        if sections is not None:
            data = {k: data[k] for k in sections}
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:16]


SWEEP_VARIABLES = ("rician_beta_db", "power_dbm")
METHODS = ("proposed", "genie", "naive", "random")

_SECTIONS = {
    "system": SystemConfig,
    "channel": ChannelConfig,
    "mobility": MobilityConfig,
    "training": TrainingConfig,
    "online": OnlineConfig,
    "genie": GenieConfig,
}
_TUPLE_FIELDS = {"ap_location": 3, "irs_location": 3, "spawn_x": 2, "spawn_y": 2}


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ConfigError(f"{where}.{name}: missing required field")
            continue
        value = data[name]
        if name in _TUPLE_FIELDS or name in ("hidden_sizes", "values", "methods"):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{where}.{name}: expected a list")
            value = tuple(value)
        kwargs[name] = value
    return cls(**kwargs)


def _num(where, value, *, positive=False, nonneg=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{where}: must be finite")
    if positive and value <= 0:
        raise ConfigError(f"{where}: must be positive")
    if nonneg and value < 0:
        raise ConfigError(f"{where}: must be non-negative")


def validate(cfg):
    s, c, m, t, o, g = cfg.system, cfg.channel, cfg.mobility, cfg.training, cfg.online, cfg.genie
    for name in ("M", "K", "Ny", "Nz"):
        _num(f"system.{name}", getattr(s, name), positive=True, integer=True)
    for name in ("spacing_ratio_ap", "spacing_ratio_irs_y", "spacing_ratio_irs_z"):
        _num(f"system.{name}", getattr(s, name), positive=True)
    for name, n in (("ap_location", 3), ("irs_location", 3)):
        if len(getattr(s, name)) != n:
            raise ConfigError(f"system.{name}: expected {n} coordinates")
        for i, v in enumerate(getattr(s, name)):
            _num(f"system.{name}[{i}]", v)
    _num("system.power_dbm", s.power_dbm)
    _num("system.noise_dbm", s.noise_dbm)
    _num("channel.rician_beta_db", c.rician_beta_db)
    _num("channel.beta0_db", c.beta0_db)
    _num("channel.D0", c.D0, positive=True)
    _num("channel.eta_ai", c.eta_ai, nonneg=True)
    _num("channel.eta_user", c.eta_user, nonneg=True)
    if c.irs_user_range not in ("slant", "horizontal"):
        raise ConfigError("channel.irs_user_range: must be 'slant' or 'horizontal'")
    for name in ("spawn_x", "spawn_y"):
        lo_hi = getattr(m, name)
        if len(lo_hi) != 2 or lo_hi[0] > lo_hi[1]:
            raise ConfigError(f"mobility.{name}: expected [min, max] with min <= max")
    _num("mobility.speed_min", m.speed_min, nonneg=True)
    _num("mobility.speed_max", m.speed_max, nonneg=True)
    if m.speed_min > m.speed_max:
        raise ConfigError("mobility.speed_min: must not exceed speed_max")
    if m.speed_unit not in ("m/s", "m/slot"):
        raise ConfigError("mobility.speed_unit: must be 'm/s' or 'm/slot'")
    if m.heading_min > m.heading_max:
        raise ConfigError("mobility.heading_min: must not exceed heading_max")
    _num("mobility.slot_duration", m.slot_duration, positive=True)
    _num("mobility.uncertainty_std", m.uncertainty_std, nonneg=True)
    _num("training.tau", t.tau, positive=True, integer=True)
    _num("training.n_train", t.n_train, positive=True, integer=True)
    _num("training.iterations", t.iterations, nonneg=True, integer=True)
    _num("training.batch_size", t.batch_size, positive=True, integer=True)
    _num("training.lr", t.lr, positive=True)
    if not 0 <= t.holdout_fraction < 1:
        raise ConfigError("training.holdout_fraction: must be in [0, 1)")
    _num("training.eval_every", t.eval_every, positive=True, integer=True)
    _num("training.conv_filters", t.conv_filters, positive=True, integer=True)
    _num("training.lstm_hidden", t.lstm_hidden, positive=True, integer=True)
    _num("online.iterations", o.iterations, nonneg=True, integer=True)
    _num("online.lr", o.lr, positive=True)
    if not isinstance(o.warm_start, bool):
        raise ConfigError("online.warm_start: expected true/false")
    _num("genie.iterations", g.iterations, nonneg=True, integer=True)
    _num("genie.restarts", g.restarts, positive=True, integer=True)
    _num("genie.step", g.step, positive=True)
    _num("genie.tolerance", g.tolerance, positive=True)
    _num("episode_slots", cfg.episode_slots, positive=True, integer=True)
    _num("seed", cfg.seed, nonneg=True, integer=True)
    return cfg


def validate_sweep(spec):
    if spec.variable not in SWEEP_VARIABLES:
        raise ConfigError(f"sweep.variable: must be one of {', '.join(SWEEP_VARIABLES)}")
    if not spec.values:
        raise ConfigError("sweep.values: must be non-empty")
    for i, v in enumerate(spec.values):
        _num(f"sweep.values[{i}]", v)
    if not spec.methods:
        raise ConfigError("sweep.methods: must be non-empty")
    bad = [m for m in spec.methods if m not in METHODS]
    if bad:
        raise ConfigError(f"sweep.methods: unknown method(s) {', '.join(bad)}")
    _num("sweep.mc_count", spec.mc_count, positive=True, integer=True)
    _num("sweep.seed", spec.seed, nonneg=True, integer=True)
    return spec


def from_dict(data):
    """Build ``(ExperimentConfig, SweepSpec | None)`` from a plain mapping."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    data = _resolve(data)
    sweep = data.pop("sweep", None)
    top = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {', '.join(unknown)}")
    kwargs = {}
    for name in top:
        if name in _SECTIONS:
            if name in data:
                kwargs[name] = _build(_SECTIONS[name], data[name], name)
            elif name in ("system", "channel", "mobility", "training"):
                raise ConfigError(f"{name}: missing required section")
        elif name in data:
            kwargs[name] = data[name]
    try:
        cfg = ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    spec = validate_sweep(_build(SweepSpec, sweep, "sweep")) if sweep is not None else None
    return validate(cfg), spec


def _resolve(data, depth=0):
    data = dict(data)
    base = data.pop("extends", None)
    if base is None:
        return data
    if depth > 8:
        raise ConfigError("preset inheritance is nested too deeply")
    return _merge(_resolve(preset_dict(base), depth + 1), data)


def _merge(base, override):
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def to_dict(cfg, spec=None):
    """Canonical plain-data form (every field present, tuples as lists)."""
    out = {}
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            out[f.name] = {g.name: _plain(getattr(value, g.name)) for g in fields(value)}
        else:
            out[f.name] = _plain(value)
    if spec is not None:
        out["sweep"] = {g.name: _plain(getattr(spec, g.name)) for g in fields(spec)}
    return out


def dump_config(cfg, spec=None):
    return yaml.safe_dump(to_dict(cfg, spec), sort_keys=False, default_flow_style=None)


def parse_config(text, source="<string>"):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ConfigError(f"{where}: YAML parse error: {getattr(exc, 'problem', exc)}") from None
    return from_dict(data)


def load_config(path):
    """Load and validate a YAML config file -> ``(ExperimentConfig, SweepSpec | None)``."""
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def preset_dict(name):
    try:
        text = resources.files("irspb.presets").joinpath(f"{name}.yaml").read_text()
    except FileNotFoundError:
        raise ConfigError(f"unknown preset {name!r}") from None
    return yaml.safe_load(text)


def load_preset(name="paper"):
    return from_dict(preset_dict(name))
