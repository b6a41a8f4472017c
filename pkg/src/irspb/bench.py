"""Seeded Monte Carlo sweeps over the Rician factor or the transmit power.

All methods in a sweep see the same trajectories, channel draws and
beamforming-network initialisations (common random numbers, derived from
the master seed), both within a cell and across the swept values. The
predictor is trained once per sweep and cached by configuration hash.

Output columns are fixed: ``variable, value, method, mean, std, n, seed``.
Wall time is kept in memory only so that result files are reproducible
byte for byte.
"""

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import pipeline
from .config import (ConfigError, ExperimentConfig, SweepSpec, dump_config, load_config,
                     load_preset, validate_sweep)

log = logging.getLogger(__name__)

COLUMNS = ("variable", "value", "method", "mean", "std", "n", "seed")
FORMATS = ("table", "csv", "jsonl")

__all__ = ["SweepSpec", "SweepRow", "SweepResult", "load_config", "load_preset", "dump_config",
           "run_sweep", "emit_results", "read_results", "train_predictor"]


@dataclass(frozen=True)
class SweepRow:
    variable: str
    value: float
    method: str
    mean: float
    std: float
    n: int
    seed: int
    wall_time: float = field(default=0.0, compare=False)
    channel_digest: str = field(default="", compare=False)

    def values(self):
        return tuple(getattr(self, c) for c in COLUMNS)


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)

    def table(self):
        """{method: {value: mean}} view."""
        out = {}
        for r in self.rows:
            out.setdefault(r.method, {})[r.value] = r.mean
        return out

    def mean(self, method, value):
        for r in self.rows:
            if r.method == method and r.value == value:
                return r.mean
        raise KeyError((method, value))


_MODEL_CACHE = {}


def _training_key(cfg):
    # the training set holds LoS channels only, so the Rician factor is irrelevant
    return cfg.replace("channel", rician_beta_db=0.0).digest()


def train_predictor(cfg, cache_dir=None, progress=None):
    """Generate the training set and train the predictor, reusing cached models."""
    key = _training_key(cfg)
    if key in _MODEL_CACHE:
        return _MODEL_CACHE[key]
    path = Path(cache_dir) / f"predictor-{key}.bin" if cache_dir is not None else None
    if path is not None and path.exists():
        model = pipeline.TrainedPredictor.load(path)
    else:
        dataset = pipeline.generate_training_set(cfg)
        model = pipeline.offline_train(dataset, cfg, progress=progress)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            model.save(path)
    _MODEL_CACHE[key] = model
    return model


def run_sweep(cfg: ExperimentConfig, spec: SweepSpec, predictor=None, cache_dir=None,
              partial_path=None, fmt="csv", progress=None):
    """One row per (value, method), each averaging ``spec.mc_count`` paired realizations.

    On failure, rows finished so far are written to ``partial_path`` (if
    given) before the error propagates.
    """
    validate_sweep(spec)
    cfg = cfg.replace(seed=int(spec.seed))
    result = SweepResult()
    try:
        if "proposed" in spec.methods and predictor is None:
            predictor = train_predictor(cfg, cache_dir)
        for value in spec.values:
            kw = {"power_dbm": value} if spec.variable == "power_dbm" else {"beta_db": value}
            t0 = time.perf_counter()
            rates, digest = pipeline.evaluate_slot(cfg, spec.methods, spec.mc_count, spec.seed,
                                                   predictor, with_digest=True, **kw)
            wall = time.perf_counter() - t0
            log.info("%s=%g channels %s", spec.variable, value, digest)
            for method in spec.methods:
                r = rates[method]
                row = SweepRow(spec.variable, float(value), method, float(np.mean(r)),
                               float(np.std(r)), int(r.size), int(spec.seed), wall, digest)
                result.rows.append(row)
                if progress is not None:
                    progress(row)
    except BaseException:
        if partial_path is not None:
            emit_results(result, partial_path, fmt)
        raise
    return result


def _fmt(v):
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def render(result, fmt):
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; choose from {', '.join(FORMATS)}")
    rows = [r.values() for r in result.rows]
    if fmt == "jsonl":
        head = json.dumps({"columns": list(COLUMNS)}) + "\n"
        return head + "".join(json.dumps(dict(zip(COLUMNS, r))) + "\n" for r in rows)
    cells = [list(COLUMNS)] + [[_fmt(v) for v in r] for r in rows]
    if fmt == "csv":
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(cells)
        return buf.getvalue()
    widths = [max(len(row[i]) for row in cells) for i in range(len(COLUMNS))]
    return "".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() + "\n" for row in cells)


def emit_results(result, path, fmt="csv"):
    """Write the result rows; ``fmt`` is ``table``, ``csv`` or ``jsonl``."""
    text = render(result, fmt)
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror}") from exc
    return path


def _parse_row(cells):
    variable, value, method, mean, std, n, seed = cells
    return SweepRow(str(variable), float(value), str(method), float(mean), float(std), int(n), int(seed))


def read_results(path, fmt="csv"):
    text = Path(path).read_text()
    lines = text.splitlines()
    if fmt == "jsonl":
        recs = [json.loads(l) for l in lines[1:] if l.strip()]
        return SweepResult([_parse_row([r[c] for c in COLUMNS]) for r in recs])
    if fmt == "csv":
        cells = list(csv.reader(io.StringIO(text)))[1:]
    elif fmt == "table":
        cells = [l.split() for l in lines[1:] if l.strip()]
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return SweepResult([_parse_row(c) for c in cells])


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def resolve_config(config=None, preset=None):
    """Config from a file or a shipped preset (file wins if both are given)."""
    if config is not None:
        return load_config(config)
    if preset is not None:
        return load_preset(preset)
    raise ConfigError("give a config file or a preset name")
