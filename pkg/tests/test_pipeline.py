import math

import numpy as np
import pytest

from irspb import baselines, geometry as geo, metrics, models, pipeline as pl
from irspb.metrics import POWER_TOL, total_power
from conftest import crandn


def _static_drift_cfg(cfg):
    # constant speed and heading, no jitter: users slide along +x
    return cfg.replace("mobility", speed_min=9.0, speed_max=9.0, heading_min=0.0, heading_max=0.0,
                       uncertainty_std=0.0)


def _oracle_cascaded(cfg, locs, G_bar, alpha_ai):
    """Element-by-element cascaded LoS channel from the raw geometry."""
    s = cfg.system
    irs = np.asarray(s.irs_location, dtype=float)
    out = np.empty((len(locs), s.Ny * s.Nz, s.M), dtype=complex)
    for k, u in enumerate(locs):
        d = math.dist(irs, u)
        st, cx, sx = irs[2] / d, abs(u[1] - irs[1]) / d, abs(u[0]) / d
        gain = 10 ** -3 * d ** -cfg.channel.eta_user
        for iy in range(s.Ny):
            for iz in range(s.Nz):
                f = np.exp(-1j * math.pi * st * (iy * cx + iz * sx))
                out[k, iy * s.Nz + iz] = math.sqrt(gain * alpha_ai) * np.conj(f) * G_bar[iy * s.Nz + iz]
    return out


# -- training set ----------------------------------------------------------------

def test_training_example_shapes(small_cfg):
    ds = pl.generate_training_set(small_cfg, n=1)
    s, tau = small_cfg.system, small_cfg.training.tau
    assert len(ds) == 1
    assert ds[0].history.shape == (tau, s.K, s.Ny * s.Nz, s.M, 2)
    assert ds[0].target_cascaded.shape == (s.K, s.Ny * s.Nz, s.M)


def test_dataset_files_are_byte_identical(small_cfg, tmp_path):
    a = pl.write_dataset(pl.generate_training_set(small_cfg, n=20), tmp_path / "a.bin")
    b = pl.write_dataset(pl.generate_training_set(small_cfg, n=20), tmp_path / "b.bin")
    assert a.read_bytes() == b.read_bytes()
    c = pl.write_dataset(pl.generate_training_set(small_cfg.replace(seed=1), n=20), tmp_path / "c.bin")
    assert c.read_bytes() != a.read_bytes()


def test_dataset_round_trip(small_cfg, tmp_path):
    ds = pl.generate_training_set(small_cfg, n=7)
    back = pl.read_dataset(pl.write_dataset(ds, tmp_path / "d.bin"))
    assert back.seed == ds.seed and len(back) == 7
    for x, y in zip(ds, back):
        np.testing.assert_array_equal(x.history, y.history)
        np.testing.assert_array_equal(x.target_cascaded, y.target_cascaded)
    assert back.digest() == ds.digest()


def test_dataset_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"hello\n")
    with pytest.raises(ValueError):
        pl.read_dataset(p)


def test_deterministic_drift_matches_geometry(ref_cfg):
    cfg = _static_drift_cfg(ref_cfg)
    tau = cfg.training.tau
    scene = pl.Scene(cfg)
    locs, resampled = scene.trajectories(3, tau + 1, np.random.default_rng(4))
    assert resampled == 0
    step = np.diff(locs, axis=1)
    np.testing.assert_allclose(step[..., 0], 9.0 * cfg.mobility.slot_duration, atol=1e-12)
    np.testing.assert_allclose(step[..., 1:], 0.0, atol=1e-12)

    ds = pl.generate_training_set(cfg, rng=np.random.default_rng(4), n=3)
    for i, ex in enumerate(ds):
        for t in range(tau):
            want = _oracle_cascaded(cfg, locs[i, t], scene.G_bar, scene.alpha_ai)
            got = models.from_pairs(ex.history[t])
            np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-20)
        np.testing.assert_allclose(ex.target_cascaded, _oracle_cascaded(cfg, locs[i, tau], scene.G_bar,
                                                                          scene.alpha_ai), rtol=1e-10, atol=1e-20)


def test_invalid_trajectories_are_redrawn(ref_cfg):
    cfg = ref_cfg.replace("channel", irs_user_range="horizontal").replace("mobility", spawn_x=(3.0, 40.0))
    ds = pl.generate_training_set(cfg, n=30)
    assert ds.resampled > 0
    scene = pl.Scene(cfg)
    locs, _ = scene.trajectories(30, cfg.training.tau + 1, np.random.default_rng(0))
    assert scene.valid(locs).all()


def test_trajectories_give_up_when_domain_is_empty(ref_cfg):
    cfg = ref_cfg.replace("channel", irs_user_range="horizontal")
    with pytest.raises(geo.GeometryError):
        pl.generate_training_set(cfg, n=2)


# -- offline training ---------------------------------------------------------------

def test_zero_iterations_returns_initialisation(small_cfg):
    ds = pl.generate_training_set(small_cfg, n=20)
    model = pl.offline_train(ds, small_cfg, iterations=0)
    ref = models.init_la_clnet(model.net, np.random.default_rng([small_cfg.seed, 2]))
    for name, p in ref.items():
        np.testing.assert_array_equal(model.params[name].data, p.data)
    assert model.curve == [] and len(model.holdout_curve) == 1


def test_loss_curve_finite_and_best_kept(small_cfg, small_predictor):
    assert len(small_predictor.curve) == small_cfg.training.iterations
    assert np.all(np.isfinite(small_predictor.curve))
    assert small_predictor.best_holdout < small_predictor.initial_holdout
    ds = pl.generate_training_set(small_cfg)
    h, t = ds.arrays()
    n_fit = len(h) - int(len(h) * small_cfg.training.holdout_fraction)
    m = small_predictor
    loss = models.la_clnet_loss(m.params, (h[n_fit:], t[n_fit:]), m.net, m.noise, m.power)
    assert float(loss.data) == pytest.approx(m.best_holdout, rel=1e-12)
    assert m.metadata["seed"] == small_cfg.seed


def test_non_finite_loss_aborts(small_cfg):
    ds = pl.generate_training_set(small_cfg, n=20)
    ds[3].target_cascaded[0, 0, 0] = np.nan
    with pytest.raises(pl.TrainingError, match="batch 0"):
        pl.offline_train(ds, small_cfg, iterations=5)


def test_non_finite_history_rejected(small_cfg):
    ds = pl.generate_training_set(small_cfg, n=20)
    ds[3].history[0, 0, 0, 0, 0] = np.nan
    with pytest.raises(ValueError, match="example 3"):
        pl.offline_train(ds, small_cfg, iterations=5)


def test_empty_dataset_rejected(small_cfg):
    with pytest.raises(ValueError):
        pl.offline_train(pl.TrainingSet(), small_cfg)


def test_predictor_save_load(small_cfg, small_predictor, tmp_path):
    small_predictor.save(tmp_path / "m.bin")
    back = pl.TrainedPredictor.load(tmp_path / "m.bin")
    hist = pl.generate_training_set(small_cfg, n=5).arrays()[0]
    np.testing.assert_array_equal(pl.online_predict(back, hist).v, pl.online_predict(small_predictor, hist).v)
    assert back.holdout_curve == small_predictor.holdout_curve
    assert back.metadata["seed"] == small_cfg.seed


def test_online_predict_unit_modulus_and_deterministic(small_cfg, small_predictor):
    hist = pl.generate_training_set(small_cfg, rng=np.random.default_rng(9), n=6).arrays()[0]
    v = pl.online_predict(small_predictor, hist).v
    assert v.shape == (6, small_cfg.system.Ny * small_cfg.system.Nz)
    assert np.max(np.abs(np.abs(v) - 1)) <= 1e-9
    np.testing.assert_array_equal(pl.online_predict(small_predictor, hist).v, v)
    single = pl.online_predict(small_predictor, hist[2])
    np.testing.assert_allclose(single.v, v[2], rtol=1e-12)


def test_toy_predictor_near_optimal(ref_cfg):
    cfg = ref_cfg.replace("system", K=1, M=1, Ny=2, Nz=2).replace("channel", rician_beta_db=120.0)
    cfg = cfg.replace("training", n_train=300, iterations=600, eval_every=100, conv_filters=16)
    model = pl.offline_train(pl.generate_training_set(cfg), cfg)
    hist, targ = pl.generate_training_set(cfg, rng=np.random.default_rng(5), n=100).arrays()
    v = pl.online_predict(model, hist)
    W = baselines.matched_precoder(targ, v.v, cfg.power_w)
    rate = metrics.surrogate_rate(targ, v.v, W, cfg.noise_w)
    _, _, best = baselines.joint_ascent(targ, cfg.power_w, cfg.noise_w, baselines.GenieOptConfig(),
                                        np.random.default_rng(0))
    assert np.mean(rate) >= 0.9 * np.mean(best)


# -- online beamforming ------------------------------------------------------------------

def test_online_zero_iterations_is_initial_network(rng):
    H = crandn(rng, 3, 4, 2)
    res = pl.online_optimize(H, 2.0, 0.5, np.random.default_rng(1), iterations=0)
    net = models.IAFNNConfig(4, 2)
    params = models.init_ia_fnn(net, np.random.default_rng(1), sessions=3)
    rates, W = models.ia_fnn_rates(params, H, net, 0.5, 2.0)
    np.testing.assert_allclose(res.W.W, models.from_pairs(W.data), rtol=1e-14)
    np.testing.assert_allclose(res.rate, rates.data, rtol=1e-14)
    assert np.all(total_power(res.W.W) <= 2.0 * (1 + POWER_TOL))


def test_online_single_user_closed_form(rng):
    H = crandn(rng, 20, 5, 1)
    res = pl.online_optimize(H, 1.0, 1.0, rng, iterations=300)
    ref = np.log2(1 + np.sum(np.abs(H) ** 2, axis=(1, 2)))
    assert np.all(res.rate >= 0.98 * ref)
    assert np.all(res.rate <= ref * (1 + 1e-9))


def test_online_best_trace_nonincreasing(rng):
    res = pl.online_optimize(crandn(rng, 4, 3, 3), 1.0, 0.1, rng, iterations=80)
    assert res.best_trace.shape == (81, 4)
    assert np.all(np.diff(res.best_trace, axis=0) <= 0)
    assert np.allclose(res.best_trace[-1], -res.rate)


def test_online_rejects_non_finite_channel(rng):
    H = crandn(rng, 3, 2)
    H[1, 1] = np.inf
    with pytest.raises(ValueError):
        pl.online_optimize(H, 1.0, 1.0, rng, iterations=2)


# -- protocol episodes -----------------------------------------------------------------------

@pytest.mark.parametrize("method", ["proposed", "naive", "random", "genie"])
def test_episode_deterministic_and_replayable(small_cfg, small_predictor, method):
    runs = [pl.run_protocol_episode(small_cfg, method, np.random.default_rng(3), small_predictor)
            for _ in range(2)]
    np.testing.assert_array_equal(runs[0].rates, runs[1].rates)
    assert len(runs[0].slots) == small_cfg.episode_slots
    for rec in runs[0].slots:
        assert abs(pl.replay_rate(small_cfg, rec) - rec.rate) <= 1e-10
        assert np.max(np.abs(np.abs(rec.v) - 1)) <= 1e-9
        assert total_power(rec.W) <= small_cfg.power_w * (1 + POWER_TOL)


def test_random_phase_at_negligible_power(small_cfg):
    cfg = small_cfg.replace("system", power_dbm=-90.0)  # 1e-12 W
    res = pl.run_protocol_episode(cfg, "random", np.random.default_rng(0))
    assert np.all(res.rates <= 1e-6)


@pytest.mark.parametrize("method", ["proposed", "naive", "random"])
def test_phase_choice_ignores_current_slot_channels(small_cfg, small_predictor, method, monkeypatch):
    base = pl.run_protocol_episode(small_cfg, method, np.random.default_rng(8), small_predictor)
    original = pl.Scene.sample_channels
    junk = np.random.default_rng(99)

    def corrupted(self, locs, beta, rng):
        c = original(self, locs, beta, rng)
        c.G[...] = crandn(junk, *c.G.shape) * 1e3
        c.f[...] = crandn(junk, *c.f.shape) * 1e3
        return c

    monkeypatch.setattr(pl.Scene, "sample_channels", corrupted)
    bad = pl.run_protocol_episode(small_cfg, method, np.random.default_rng(8), small_predictor)
    for a, b in zip(base.slots, bad.slots):
        np.testing.assert_array_equal(a.v, b.v)


def test_episode_log(small_cfg, tmp_path):
    res = pl.run_protocol_episode(small_cfg, "random", np.random.default_rng(0))
    lines = res.write_log(tmp_path / "log.jsonl").read_text().splitlines()
    assert len(lines) == small_cfg.episode_slots
    assert '"method": "random"' in lines[0]


def test_proposed_needs_predictor(small_cfg):
    with pytest.raises(ValueError):
        pl.run_protocol_episode(small_cfg, "proposed", np.random.default_rng(0))


@pytest.mark.slow
def test_genie_dominates_proposed_on_average(small_cfg, small_predictor):
    rates = pl.evaluate_slot(small_cfg, ["genie", "proposed"], 200, 0, small_predictor)
    assert rates["genie"].mean() >= rates["proposed"].mean()


def test_evaluate_slot_shares_channels(small_cfg):
    a, da = pl.evaluate_slot(small_cfg, ["random"], 5, 1, with_digest=True)
    b, db = pl.evaluate_slot(small_cfg, ["naive", "random"], 5, 1, with_digest=True)
    assert da == db
    np.testing.assert_array_equal(a["random"], b["random"])
