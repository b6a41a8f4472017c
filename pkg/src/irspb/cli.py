"""Command-line entry point: ``irspb train | sweep | episode | check``."""

import logging
import sys

import click
import numpy as np

from . import bench, pipeline, selfcheck
from .config import ConfigError, SweepSpec, validate_sweep


def _load(config, preset, seed):
    try:
        cfg, spec = bench.resolve_config(config, preset or (None if config else "paper"))
    except (ConfigError, OSError) as exc:
        raise click.UsageError(str(exc)) from None
    if seed is not None:
        cfg = cfg.replace(seed=seed)
        if spec is not None:
            spec = SweepSpec(spec.variable, spec.values, spec.methods, spec.mc_count, seed)
    return cfg, spec


config_opt = click.option("--config", type=click.Path(exists=True, dir_okay=False), help="YAML config file.")
preset_opt = click.option("--preset", help="Shipped preset (paper, desk, beta-sweep, power-sweep).")
seed_opt = click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), help="Master seed override.")


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose):
    """Predictive IRS beamforming simulator."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")


@main.command()
@config_opt
@preset_opt
@seed_opt
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Model file to write.")
@click.option("--dataset", type=click.Path(dir_okay=False), help="Also write the training set here.")
def train(config, preset, seed, out, dataset):
    """Train the phase-shift predictor offline and save it."""
    cfg, _ = _load(config, preset, seed)
    data = pipeline.generate_training_set(cfg)
    if dataset:
        pipeline.write_dataset(data, dataset)
    click.echo(f"training set: {len(data)} examples ({data.resampled} redrawn)")

    def progress(it, loss, held):
        click.echo(f"iter {it:6d}  train {loss:.6g}  held-out {held:.6g}")

    model = pipeline.offline_train(data, cfg, progress=progress)
    model.save(out)
    click.echo(f"held-out loss {model.initial_holdout:.6g} -> {model.best_holdout:.6g}; wrote {out}")


@main.command()
@config_opt
@preset_opt
@seed_opt
@click.option("--out", type=click.Path(dir_okay=False), help="Result file (stdout if omitted).")
@click.option("--format", "fmt", type=click.Choice(bench.FORMATS), default="table", show_default=True)
@click.option("--mc", type=click.IntRange(min=1), help="Monte Carlo realizations per cell.")
@click.option("--model", type=click.Path(exists=True, dir_okay=False), help="Pre-trained predictor.")
@click.option("--cache-dir", type=click.Path(file_okay=False), help="Cache trained predictors here.")
def sweep(config, preset, seed, out, fmt, mc, model, cache_dir):
    """Run the configured sweep and emit one row per (value, method)."""
    cfg, spec = _load(config, preset, seed)
    if spec is None:
        raise click.UsageError("the configuration has no 'sweep' section")
    if mc is not None:
        spec = validate_sweep(SweepSpec(spec.variable, spec.values, spec.methods, mc, spec.seed))
    predictor = pipeline.TrainedPredictor.load(model) if model else None
    result = bench.run_sweep(cfg, spec, predictor=predictor, cache_dir=cache_dir,
                             partial_path=out, fmt=fmt)
    if out:
        bench.emit_results(result, out, fmt)
    else:
        sys.stdout.write(bench.render(result, fmt))


@main.command()
@config_opt
@preset_opt
@seed_opt
@click.option("--method", type=click.Choice(["proposed", "genie", "naive", "random"]), default="proposed",
              show_default=True)
@click.option("--slots", type=click.IntRange(min=1), help="Evaluated slots (default from config).")
@click.option("--model", type=click.Path(exists=True, dir_okay=False), help="Pre-trained predictor.")
@click.option("--out", type=click.Path(dir_okay=False), help="Write the slot log (JSON lines) here.")
def episode(config, preset, seed, method, slots, model, out):
    """Simulate one protocol episode and print the per-slot sum-rate."""
    cfg, _ = _load(config, preset, seed)
    predictor = None
    if method == "proposed":
        predictor = pipeline.TrainedPredictor.load(model) if model else bench.train_predictor(cfg)
    res = pipeline.run_protocol_episode(cfg, method, np.random.default_rng(cfg.seed), predictor, slots)
    for rec in res.records():
        click.echo(f"slot {rec['slot']:4d}  rate {rec['rate']:.6f}  seed {rec['seed']}")
    click.echo(f"mean rate {res.rates.mean():.6f} bit/s/Hz")
    if out:
        res.write_log(out)


@main.command()
@seed_opt
def check(seed):
    """Gradient and invariant self-test battery."""
    failed = 0
    for name, ok, detail in selfcheck.run_checks(seed or 0):
        click.echo(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failed += not ok
    sys.exit(1 if failed else 0)
