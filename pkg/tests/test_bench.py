import json
import math

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from irspb import bench, config as cf, pipeline as pl
from irspb.cli import main


def _small_spec(**kw):
    base = dict(variable="rician_beta_db", values=(4.0,), methods=("naive", "random"), mc_count=3, seed=2)
    base.update(kw)
    return cf.SweepSpec(**base)


# -- configuration ----------------------------------------------------------------

def test_reference_preset_values(ref_cfg):
    s, c, m = ref_cfg.system, ref_cfg.channel, ref_cfg.mobility
    assert (s.M, s.K, s.Ny, s.Nz) == (6, 3, 6, 6)
    assert s.ap_location == (2.0, 0.0, 20.0) and s.irs_location == (0.0, 50.0, 25.0)
    assert ref_cfg.power_w == pytest.approx(1.0, rel=1e-14)
    assert ref_cfg.noise_w == pytest.approx(10 ** -12.6, rel=1e-12)
    assert ref_cfg.beta == pytest.approx(10 ** 0.8, rel=1e-14)
    assert (c.beta0_db, c.eta_ai, c.eta_user) == (-30.0, 2.2, 3.0)
    assert m.heading_max == pytest.approx(math.pi / 18, rel=1e-15)
    assert ref_cfg.training.tau == 5


def test_sweep_presets():
    cfg, spec = cf.load_preset("beta-sweep")
    assert spec.values == (0.0, 2.0, 4.0, 6.0, 8.0, 10.0)
    assert spec.methods == ("genie", "proposed", "naive", "random")
    assert cfg.system.power_dbm == 30.0 and cfg.training.n_train == 500
    cfg, spec = cf.load_preset("power-sweep")
    assert spec.variable == "power_dbm" and cfg.channel.rician_beta_db == 8.0


def test_unknown_preset():
    with pytest.raises(cf.ConfigError, match="nope"):
        cf.load_preset("nope")


def test_missing_power_is_named(tmp_path):
    data = cf.to_dict(cf.load_preset()[0])
    del data["system"]["power_dbm"]
    with pytest.raises(cf.ConfigError, match="system.power_dbm"):
        cf.from_dict(data)


def test_unknown_keys_rejected():
    data = cf.to_dict(cf.load_preset()[0])
    data["channel"]["rician_k"] = 3
    with pytest.raises(cf.ConfigError, match="rician_k"):
        cf.from_dict(data)
    data = cf.to_dict(cf.load_preset()[0])
    data["extra"] = 1
    with pytest.raises(cf.ConfigError, match="extra"):
        cf.from_dict(data)


@pytest.mark.parametrize("section,key,value", [
    ("system", "K", 0), ("system", "M", 2.5), ("channel", "irs_user_range", "diagonal"),
    ("mobility", "speed_unit", "km/h"), ("training", "lr", -1.0), ("genie", "restarts", 0),
])
def test_invalid_values_named(section, key, value):
    data = cf.to_dict(cf.load_preset()[0])
    data[section][key] = value
    with pytest.raises(cf.ConfigError, match=f"{section}.{key}"):
        cf.from_dict(data)


def test_yaml_error_reports_location():
    with pytest.raises(cf.ConfigError, match=r"cfg.yaml:3:7:"):
        cf.parse_config("system:\n  M: 6\n  K: 3: 4\n", "cfg.yaml")


def test_config_round_trip(small_cfg):
    spec = _small_spec()
    cfg, back = cf.parse_config(cf.dump_config(small_cfg, spec))
    assert cfg == small_cfg and back == spec
    assert cfg.digest() == small_cfg.digest()


def test_extends_overrides_nested_keys():
    cfg, _ = cf.from_dict({"extends": "paper", "channel": {"rician_beta_db": 3.0}})
    assert cfg.channel.rician_beta_db == 3.0 and cfg.channel.eta_ai == 2.2


def test_bad_sweep_rejected(small_cfg):
    with pytest.raises(cf.ConfigError, match="sweep.methods"):
        cf.validate_sweep(_small_spec(methods=("oracle",)))
    with pytest.raises(cf.ConfigError, match="sweep.variable"):
        cf.validate_sweep(_small_spec(variable="speed"))
    with pytest.raises(cf.ConfigError, match="sweep.mc_count"):
        bench.run_sweep(small_cfg, _small_spec(mc_count=0))


# -- sweeps -----------------------------------------------------------------------------

def test_one_row_sweep(small_cfg):
    res = bench.run_sweep(small_cfg, _small_spec(methods=("random",)))
    assert len(res.rows) == 1
    row = res.rows[0]
    assert row.values()[:3] == ("rician_beta_db", 4.0, "random")
    assert row.n == 3 and row.seed == 2
    assert np.isfinite(row.mean) and row.std >= 0


def test_sweep_rows_match_direct_evaluation(small_cfg):
    spec = _small_spec(values=(0.0, 6.0))
    res = bench.run_sweep(small_cfg, spec)
    assert [(r.value, r.method) for r in res.rows] == [(0.0, "naive"), (0.0, "random"),
                                                       (6.0, "naive"), (6.0, "random")]
    direct = pl.evaluate_slot(small_cfg.replace(seed=2), ["naive", "random"], 3, 2, beta_db=6.0)
    assert res.mean("random", 6.0) == float(np.mean(direct["random"]))


def test_power_sweep_uses_power(small_cfg):
    res = bench.run_sweep(small_cfg, _small_spec(variable="power_dbm", values=(-90.0, 30.0),
                                                 methods=("random",)))
    assert res.mean("random", -90.0) < 1e-3 < res.mean("random", 30.0)


@pytest.mark.parametrize("fmt", bench.FORMATS)
def test_same_seed_identical_files(small_cfg, tmp_path, fmt):
    a = bench.emit_results(bench.run_sweep(small_cfg, _small_spec()), tmp_path / "a", fmt)
    b = bench.emit_results(bench.run_sweep(small_cfg, _small_spec()), tmp_path / "b", fmt)
    assert bench.file_digest(a) == bench.file_digest(b)


@pytest.mark.parametrize("fmt", bench.FORMATS)
def test_write_then_read(small_cfg, tmp_path, fmt):
    res = bench.run_sweep(small_cfg, _small_spec(values=(0.0, 2.0)))
    back = bench.read_results(bench.emit_results(res, tmp_path / "r", fmt), fmt)
    assert back.rows == res.rows


@pytest.mark.parametrize("fmt", ["csv", "jsonl", "table"])
def test_empty_result_writes_header_only(tmp_path, fmt):
    path = bench.emit_results(bench.SweepResult(), tmp_path / "e", fmt)
    lines = path.read_text().splitlines()
    assert len(lines) == 1
    if fmt == "jsonl":
        assert json.loads(lines[0]) == {"columns": list(bench.COLUMNS)}
    else:
        assert lines[0].replace(",", " ").split() == list(bench.COLUMNS)
    assert bench.read_results(path, fmt).rows == []


def test_csv_columns_are_stable(small_cfg, tmp_path):
    path = bench.emit_results(bench.run_sweep(small_cfg, _small_spec()), tmp_path / "c.csv")
    assert path.read_text().splitlines()[0] == "variable,value,method,mean,std,n,seed"


def test_unwritable_path_raises(small_cfg, tmp_path):
    with pytest.raises(OSError, match="cannot write"):
        bench.emit_results(bench.SweepResult(), tmp_path / "missing" / "out.csv")


def test_unknown_format(small_cfg):
    with pytest.raises(ValueError):
        bench.render(bench.SweepResult(), "xml")


def test_failed_sweep_keeps_partial_rows(small_cfg, tmp_path, monkeypatch):
    calls = []
    real = pl.evaluate_slot

    def flaky(*a, **kw):
        calls.append(1)
        if len(calls) == 2:
            raise RuntimeError("boom")
        return real(*a, **kw)

    monkeypatch.setattr(pl, "evaluate_slot", flaky)
    out = tmp_path / "partial.csv"
    with pytest.raises(RuntimeError):
        bench.run_sweep(small_cfg, _small_spec(values=(0.0, 2.0)), partial_path=out)
    assert len(bench.read_results(out).rows) == 2


def test_predictor_cache(small_cfg, small_predictor, tmp_path):
    # the Rician factor does not enter the training set
    assert bench.train_predictor(small_cfg.replace("channel", rician_beta_db=0.0)) is small_predictor
    other = small_cfg.replace("training", iterations=5)
    model = bench.train_predictor(other, cache_dir=tmp_path)
    files = list(tmp_path.glob("predictor-*.bin"))
    assert len(files) == 1
    bench._MODEL_CACHE.clear()
    again = bench.train_predictor(other, cache_dir=tmp_path)
    assert again.holdout_curve == model.holdout_curve


# -- command line --------------------------------------------------------------------------

def _write_cfg(tmp_path, cfg, spec=None):
    path = tmp_path / "cfg.yaml"
    path.write_text(cf.dump_config(cfg, spec))
    return str(path)


def test_cli_sweep_csv(small_cfg, tmp_path):
    path = _write_cfg(tmp_path, small_cfg, _small_spec())
    out = tmp_path / "r.csv"
    res = CliRunner().invoke(main, ["sweep", "--config", path, "--format", "csv", "--out", str(out)])
    assert res.exit_code == 0, res.output
    rows = bench.read_results(out).rows
    assert [r.method for r in rows] == ["naive", "random"]
    assert rows == bench.run_sweep(small_cfg, _small_spec()).rows


def test_cli_sweep_stdout_and_mc_override(small_cfg, tmp_path):
    path = _write_cfg(tmp_path, small_cfg, _small_spec(methods=("random",)))
    res = CliRunner().invoke(main, ["sweep", "--config", path, "--mc", "2", "--seed", "5"])
    assert res.exit_code == 0, res.output
    lines = res.output.splitlines()
    assert lines[0].split() == list(bench.COLUMNS)
    assert lines[1].split()[-2:] == ["2", "5"]


def test_cli_sweep_needs_sweep_section(small_cfg, tmp_path):
    res = CliRunner().invoke(main, ["sweep", "--config", _write_cfg(tmp_path, small_cfg)])
    assert res.exit_code == 2 and "sweep" in res.output


def test_cli_reports_config_errors(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"extends": "paper", "system": {"K": -1}}))
    res = CliRunner().invoke(main, ["episode", "--config", str(bad), "--method", "random"])
    assert res.exit_code == 2 and "system.K" in res.output


def test_cli_train_then_episode(small_cfg, tmp_path):
    cfg = small_cfg.replace("training", iterations=20)
    path = _write_cfg(tmp_path, cfg)
    model = tmp_path / "m.bin"
    res = CliRunner().invoke(main, ["train", "--config", path, "--out", str(model),
                                    "--dataset", str(tmp_path / "d.bin")])
    assert res.exit_code == 0, res.output
    assert model.exists() and (tmp_path / "d.bin").exists()
    log = tmp_path / "ep.jsonl"
    res = CliRunner().invoke(main, ["episode", "--config", path, "--model", str(model), "--slots", "2",
                                    "--out", str(log)])
    assert res.exit_code == 0, res.output
    assert "mean rate" in res.output
    assert len(log.read_text().splitlines()) == 2


def test_cli_check():
    res = CliRunner().invoke(main, ["check"])
    assert res.exit_code == 0, res.output
    assert res.output.count("PASS") == 4
