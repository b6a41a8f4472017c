"""Training-set generation, offline predictor training, online beamforming and episodes.

One :class:`Scene` instance owns the geometry, mobility and channel
sampling for a configuration; the training-set generator, the episode
driver and the sweep evaluator all draw their trajectories and channels
through it.

Dataset file layout (``write_dataset``)::

    b"IRSDS1\\n"
    one JSON header line: {"version", "seed", "n_examples", "history_shape",
                           "target_shape", "dtype": "<f8", "resampled"}
    payload: for each example, the history (tau, K, N, M, 2) followed by the
             target (K, N, M, 2), little-endian float64, row-major,
             real/imag interleaved on the last axis
"""

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines
from . import channel as ch
from . import geometry as geo
from . import models
from .autodiff import Adam, backward, load_parameters, save_parameters
from .config import ExperimentConfig
from .metrics import BeamformingMatrix, PhaseShiftVector, project_unit_modulus, sum_rate

log = logging.getLogger(__name__)

DATASET_MAGIC = b"IRSDS1\n"


class TrainingError(RuntimeError):
    """Offline or online optimisation produced a non-finite loss."""


# -- scene: geometry, mobility and channel sampling ----------------------------

class Scene:
    def __init__(self, cfg: ExperimentConfig):
        s, c, m = cfg.system, cfg.channel, cfg.mobility
        self.cfg = cfg
        self.geom = ch.ArrayGeometry(s.M, s.Ny, s.Nz, s.spacing_ratio_ap,
                                     s.spacing_ratio_irs_y, s.spacing_ratio_irs_z)
        self.loc_ap = np.asarray(s.ap_location, dtype=np.float64)
        self.loc_irs = np.asarray(s.irs_location, dtype=np.float64)
        self.path_loss = ch.PathLossParams(c.beta0_db, c.D0, c.eta_ai, c.eta_user)
        self.region = geo.SpawnRegion(m.spawn_x[0], m.spawn_x[1], m.spawn_y[0], m.spawn_y[1])
        per_s = 1.0 / m.slot_duration if m.speed_unit == "m/slot" else 1.0
        self.mobility = geo.MobilityParams(m.speed_min * per_s, m.speed_max * per_s,
                                           m.heading_min, m.heading_max,
                                           m.slot_duration, m.uncertainty_std)
        self.slant = c.irs_user_range == "slant"
        d_ai = geo.ap_irs_distance(self.loc_ap, self.loc_irs)
        self.alpha_ai = ch.path_loss_gain(d_ai, c.eta_ai, self.path_loss)
        self.G_bar = ch.los_ap_irs(geo.ap_irs_angles(self.loc_ap, self.loc_irs, d_ai), self.geom)
        self.K, self.N, self.M = s.K, self.geom.N, s.M

    def user_range(self, locs):
        d = geo.irs_user_distance_batch(self.loc_irs, locs)
        if self.slant:
            d = np.hypot(d, self.loc_irs[2] - np.asarray(locs)[..., 2])
        return d

    def valid(self, locs):
        """True where every angle formula is in its domain (reduces the last two axes)."""
        d = self.user_range(locs)
        ok = (d > 0) & (np.abs(self.loc_irs[2]) <= d * (1.0 + 1e-12))
        return ok.reshape(ok.shape[:-2] + (-1,)).all(axis=-1) if ok.ndim >= 2 else ok

    def user_los(self, locs):
        """LoS IRS responses f_bar (..., N) and IRS-user path gains for user locations (..., 3)."""
        d = self.user_range(locs)
        ang = geo.irs_user_angles_batch(self.loc_irs, locs, d)
        f_bar = ch.irs_response(ang[0], ang[1], ang[2], self.geom)
        return f_bar, ch.path_loss_gain(d, self.cfg.channel.eta_user, self.path_loss)

    def cascaded_los(self, locs):
        """Cascaded LoS channels (..., K, N, M) for user locations (..., K, 3)."""
        f_bar, alpha_iu = self.user_los(locs)
        return ch.cascaded_los(f_bar, self.G_bar, self.alpha_ai, alpha_iu)

    def trajectories(self, n, n_slots, rng):
        """``n`` independent trajectories of ``n_slots`` slots after a fresh spawn.

        Trajectories that leave the angle model's domain are redrawn. Returns
        ``(locs (n, n_slots, K, 3), resampled_count)``.
        """
        out = np.empty((n, n_slots, self.K, 3))
        todo = np.arange(n)
        resampled = 0
        for _ in range(1000):
            loc = geo.sample_initial_locations(self.region, (len(todo), self.K), rng)
            for t in range(n_slots):
                loc = geo.step_mobility_batch(loc, self.mobility, rng)
                out[todo, t] = loc
            bad = ~self.valid(out[todo])
            if not bad.any():
                return out, resampled
            resampled += int(bad.sum())
            todo = todo[bad]
        raise geo.GeometryError("could not draw trajectories inside the angle model's domain")

    def sample_channels(self, locs, beta, rng):
        """True Rician channels for user locations (..., K, 3)."""
        locs = np.asarray(locs)
        batch = locs.shape[:-2]
        f_bar, alpha_iu = self.user_los(locs)
        G = ch.sample_rician(np.broadcast_to(self.G_bar, batch + self.G_bar.shape), beta, self.alpha_ai, rng)
        f = ch.sample_rician(f_bar, beta, np.asarray(alpha_iu)[..., None], rng)
        return ch.ChannelRealization(G, f, ch.LoSChannelSet(self.G_bar, f_bar), self.alpha_ai, alpha_iu)


# -- training set ---------------------------------------------------------------

class TrainingSet(list):
    """List of :class:`~irspb.models.TrainingExample` plus provenance."""

    def __init__(self, examples=(), seed=None, resampled=0):
        super().__init__(examples)
        self.seed = seed
        self.resampled = resampled

    def arrays(self):
        hist = np.stack([ex.history for ex in self])
        targ = np.stack([ex.target_cascaded for ex in self])
        return hist, targ

    def digest(self):
        h = hashlib.sha256()
        for ex in self:
            h.update(np.ascontiguousarray(ex.history, dtype="<f8").tobytes())
            h.update(np.ascontiguousarray(models.to_pairs(ex.target_cascaded), dtype="<f8").tobytes())
        return h.hexdigest()


def generate_training_set(cfg, rng=None, n=None):
    """Unlabelled examples from independent trajectories of tau+1 slots.

    The first tau slots give the history of cascaded LoS channels, the last
    one the target. ``rng`` defaults to a stream derived from ``cfg.seed``.
    """
    tau = cfg.training.tau
    n = cfg.training.n_train if n is None else n
    if rng is None:
        rng = np.random.default_rng([cfg.seed, 1])
    scene = Scene(cfg)
    locs, resampled = scene.trajectories(n, tau + 1, rng)
    casc = scene.cascaded_los(locs)  # (n, tau+1, K, N, M)
    if resampled:
        log.info("training set: %d trajectories redrawn (angle domain)", resampled)
    examples = [models.TrainingExample(ch.build_history(casc[i, :tau]), casc[i, tau], {"index": i})
                for i in range(n)]
    return TrainingSet(examples, seed=cfg.seed, resampled=resampled)


def write_dataset(dataset, path):
    path = Path(path)
    if not len(dataset):
        raise ValueError("empty dataset")
    header = {
        "version": 1,
        "seed": dataset.seed if isinstance(dataset, TrainingSet) else None,
        "resampled": dataset.resampled if isinstance(dataset, TrainingSet) else 0,
        "n_examples": len(dataset),
        "history_shape": list(dataset[0].history.shape),
        "target_shape": list(dataset[0].target_cascaded.shape) + [2],
        "dtype": "<f8",
    }
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for ex in dataset:
            fh.write(np.ascontiguousarray(ex.history, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(models.to_pairs(ex.target_cascaded), dtype="<f8").tobytes())
    return path


def read_dataset(path):
    with open(path, "rb") as fh:
        if fh.readline() != DATASET_MAGIC:
            raise ValueError(f"{path}: not a dataset file")
        header = json.loads(fh.readline())
        payload = fh.read()
    hs, ts = tuple(header["history_shape"]), tuple(header["target_shape"])
    per = int(np.prod(hs) + np.prod(ts))
    data = np.frombuffer(payload, dtype="<f8")
    if data.size != per * header["n_examples"]:
        raise ValueError(f"{path}: truncated payload")
    data = data.reshape(header["n_examples"], per)
    split = int(np.prod(hs))
    examples = [models.TrainingExample(row[:split].reshape(hs).copy(),
                                       models.from_pairs(row[split:].reshape(ts)), {"index": i})
                for i, row in enumerate(data)]
    return TrainingSet(examples, seed=header["seed"], resampled=header["resampled"])


# -- offline training -----------------------------------------------------------

@dataclass
class TrainedPredictor:
    params: object
    net: models.LACLNetConfig
    power: float
    noise: float
    curve: list = field(default_factory=list)  # per-iteration minibatch loss
    holdout_curve: list = field(default_factory=list)  # (iteration, held-out loss)
    metadata: dict = field(default_factory=dict)

    @property
    def initial_holdout(self):
        return self.holdout_curve[0][1] if self.holdout_curve else None

    @property
    def best_holdout(self):
        return min(l for _, l in self.holdout_curve) if self.holdout_curve else None

    def save(self, path):
        meta = dict(self.metadata)
        meta.update(net=vars(self.net), power=self.power, noise=self.noise,
                    curve=self.curve, holdout_curve=self.holdout_curve)
        save_parameters(self.params, path, meta)

    @classmethod
    def load(cls, path):
        params, meta = load_parameters(path)
        net = models.LACLNetConfig(**meta.pop("net"))
        return cls(params, net, meta.pop("power"), meta.pop("noise"),
                   meta.pop("curve"), [tuple(x) for x in meta.pop("holdout_curve")], meta)


def net_config(cfg, input_scale=1.0):
    s, t = cfg.system, cfg.training
    return models.LACLNetConfig(t.tau, s.K, s.Ny * s.Nz, s.M, conv_filters=t.conv_filters,
                                lstm_hidden=t.lstm_hidden, input_scale=input_scale)


def offline_train(dataset, cfg, rng=None, iterations=None, progress=None):
    """Train the phase-shift predictor with Adam on minibatches of ``dataset``.

    The last ``holdout_fraction`` of the examples is held out; the returned
    predictor carries the parameters with the best held-out loss seen (checked
    at iteration 0, every ``eval_every`` iterations and at the end).
    """
    if not len(dataset):
        raise ValueError("empty dataset")
    t = cfg.training
    iterations = t.iterations if iterations is None else iterations
    if rng is None:
        rng = np.random.default_rng([cfg.seed, 2])
    hist, targ = (dataset.arrays() if isinstance(dataset, TrainingSet)
                  else TrainingSet(dataset).arrays())
    bad = ~np.isfinite(hist).reshape(len(hist), -1).all(axis=1)
    if bad.any():
        raise ValueError(f"non-finite history in example {int(np.argmax(bad))}")
    n = len(hist)
    n_hold = int(n * t.holdout_fraction)
    n_fit = n - n_hold
    fit_h, fit_t = hist[:n_fit], targ[:n_fit]
    hold_h, hold_t = (hist[n_fit:], targ[n_fit:]) if n_hold else (fit_h, fit_t)

    scale = float(np.sqrt(np.mean(fit_h ** 2)))
    net = net_config(cfg, scale if scale > 0 else 1.0)
    P, sigma_sq = cfg.power_w, cfg.noise_w
    params = models.init_la_clnet(net, rng)
    opt = Adam(params, lr=t.lr)

    def holdout_loss():
        return float(models.la_clnet_loss(params, (hold_h, hold_t), net, sigma_sq, P).data)

    best = holdout_loss()
    best_state = params.state()
    holdout_curve = [(0, best)]
    curve = []
    order = rng.permutation(n_fit)
    pos = 0
    bs = min(t.batch_size, n_fit)
    for it in range(1, iterations + 1):
        if pos + bs > n_fit:
            order, pos = rng.permutation(n_fit), 0
        idx = order[pos:pos + bs]
        pos += bs
        opt.zero_grad()
        loss = models.la_clnet_loss(params, (fit_h[idx], fit_t[idx]), net, sigma_sq, P)
        if not np.isfinite(loss.data):
            raise TrainingError(f"non-finite training loss at batch {it - 1}")
        backward(loss)
        opt.step()
        curve.append(float(loss.data))
        if it % t.eval_every == 0 or it == iterations:
            h = holdout_loss()
            if not np.isfinite(h):
                raise TrainingError(f"non-finite held-out loss after batch {it - 1}")
            holdout_curve.append((it, h))
            if h < best:
                best, best_state = h, params.state()
            if progress is not None:
                progress(it, curve[-1], h)
    params.load_state(best_state)
    meta = {"config_digest": cfg.digest(), "seed": cfg.seed, "iterations": iterations,
            "n_examples": n, "n_holdout": n_hold}
    if isinstance(dataset, TrainingSet):
        meta["training_set_sha256"] = dataset.digest()
    return TrainedPredictor(params, net, P, sigma_sq, curve, holdout_curve, meta)


def online_predict(model, history):
    """Predicted phase shifts for one history (tau, K, N, M, 2) or a batch of them."""
    history = np.asarray(history, dtype=np.float64)
    single = history.ndim == 5
    v_raw, _ = models.la_clnet_forward(model.params, history, model.net)
    raw = v_raw.data
    N = model.net.N
    v = project_unit_modulus(raw[:, :N] + 1j * raw[:, N:])
    return PhaseShiftVector(v.v[0]) if single else v


# -- online beamforming --------------------------------------------------------

@dataclass
class OnlineResult:
    W: BeamformingMatrix
    rate: np.ndarray  # best sum-rate per session
    best_trace: np.ndarray  # (J+1, B) best-so-far loss (negative rate)
    params: object


def online_optimize(H, P, sigma_sq, rng, iterations=500, lr=1e-3, hidden_sizes=(32, 16, 16), init=None):
    """Per-slot beamforming: fit a fresh small MLP to one effective channel.

    ``H`` is (M, K) or a batch (B, M, K); each batch entry is an independent
    session with its own network. Returns the best feasible W seen over the
    ``iterations`` Adam steps (the initial network counts as step 0).
    ``init`` optionally supplies starting parameters (warm start).
    """
    H = np.asarray(H, dtype=np.complex128)
    single = H.ndim == 2
    if single:
        H = H[None]
    if not np.all(np.isfinite(H)):
        raise ValueError("effective channel must be finite")
    B, M, K = H.shape
    net = models.IAFNNConfig(M, K, tuple(hidden_sizes))
    params = init.copy() if init is not None else models.init_ia_fnn(net, rng, sessions=B)
    opt = Adam(params, lr=lr)
    best_rate = np.full(B, -np.inf)
    best_W = np.zeros((B, M, K), dtype=np.complex128)
    trace = np.empty((iterations + 1, B))
    for j in range(iterations + 1):
        opt.zero_grad()
        rates, W = models.ia_fnn_rates(params, H, net, sigma_sq, P)
        r = rates.data
        if not np.all(np.isfinite(r)):
            raise TrainingError(f"non-finite online loss at iteration {j}")
        better = r > best_rate
        best_rate = np.where(better, r, best_rate)
        best_W[better] = models.from_pairs(W.data[better])
        trace[j] = -best_rate
        if j == iterations:
            break
        backward(models.ops.neg(models.ops.sum(rates)))
        opt.step()
    Wm = BeamformingMatrix(best_W[0] if single else best_W, P)
    return OnlineResult(Wm, best_rate[0] if single else best_rate, trace, params)


def online_from_config(H, cfg, rng, P=None, init=None):
    o = cfg.online
    return online_optimize(H, cfg.power_w if P is None else P, cfg.noise_w, rng,
                           o.iterations, o.lr, o.hidden_sizes, init)


# -- protocol episode -------------------------------------------------------------

@dataclass
class SlotRecord:
    slot: int
    v: np.ndarray
    W: np.ndarray
    rate: float
    channel_seed: int
    locations: np.ndarray


@dataclass
class EpisodeResult:
    method: str
    slots: list
    timing: dict  # seconds spent choosing v and W, summed over slots
    power: float
    noise: float

    @property
    def rates(self):
        return np.array([s.rate for s in self.slots])

    def records(self):
        return [{"slot": s.slot, "method": self.method, "rate": s.rate, "seed": s.channel_seed}
                for s in self.slots]

    def write_log(self, path):
        with open(path, "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return Path(path)


def replay_rate(cfg, record, noise=None):
    """Recompute a slot's sum-rate from its stored (v, W, channel seed, locations)."""
    scene = Scene(cfg)
    chans = scene.sample_channels(record.locations, cfg.beta, np.random.default_rng(record.channel_seed))
    return float(sum_rate(chans, record.v, record.W, cfg.noise_w if noise is None else noise))


def choose_phase(method, scene, cfg, history_casc, rng, predictor=None, P=None):
    """Phase shifts for slot t from data up to slot t-1 only.

    ``history_casc``: cascaded LoS channels of the previous tau slots,
    (..., tau, K, N, M). Not used for ``genie`` (which sees the true channels).
    """
    P = cfg.power_w if P is None else P
    batch = history_casc.shape[:-4]
    if method == "proposed":
        if predictor is None:
            raise ValueError("the proposed method needs a trained predictor")
        hist = models.to_pairs(history_casc).reshape((-1,) + history_casc.shape[-4:] + (2,))
        return online_predict(predictor, hist).v.reshape(batch + (scene.N,))
    if method == "naive":
        prev = history_casc[..., -1, :, :, :].reshape((-1,) + history_casc.shape[-3:])
        g = baselines.GenieOptConfig.from_config(cfg.genie)
        return baselines.naive_los_phase(prev, P, cfg.noise_w, g, rng).v.reshape(batch + (scene.N,))
    if method == "random":
        return baselines.random_phase(scene.N, rng, size=batch if batch else None).v
    raise ValueError(f"unknown method {method!r}")


def run_protocol_episode(cfg, method, rng, predictor=None, slots=None):
    """Simulate ``slots`` evaluated slots (default ``cfg.episode_slots``) after a tau-slot warm-up."""
    T = cfg.episode_slots if slots is None else slots
    tau = cfg.training.tau
    scene = Scene(cfg)
    locs, _ = scene.trajectories(1, tau + T, rng)
    locs = locs[0]
    casc = scene.cascaded_los(locs)  # (tau+T, K, N, M)
    P, sigma_sq = cfg.power_w, cfg.noise_w
    gcfg = baselines.GenieOptConfig.from_config(cfg.genie)
    timing = {"phase": 0.0, "beamforming": 0.0}
    warm = None
    records = []
    for t in range(tau, tau + T):
        # prediction for slot t sees slots < t only
        t0 = time.perf_counter()
        v = None if method == "genie" else choose_phase(method, scene, cfg, casc[t - tau:t], rng, predictor)
        timing["phase"] += time.perf_counter() - t0
        # slot t: true channels, effective channel, beamforming
        seed = int(rng.integers(2 ** 63))
        chans = scene.sample_channels(locs[t], cfg.beta, np.random.default_rng(seed))
        t0 = time.perf_counter()
        if method == "genie":
            pv, W, _ = baselines.genie_joint_opt(chans, P, sigma_sq, gcfg, rng)
            v, Wm = pv.v, W.W
        else:
            H = ch.effective_channels(chans.f, v, chans.G)
            res = online_from_config(H, cfg, rng, init=warm)
            Wm = res.W.W
            if cfg.online.warm_start:
                warm = res.params
        timing["beamforming"] += time.perf_counter() - t0
        rate = float(sum_rate(chans, v, Wm, sigma_sq))
        records.append(SlotRecord(t, v, Wm, rate, seed, locs[t].copy()))
    return EpisodeResult(method, records, timing, P, sigma_sq)


# -- batched one-slot evaluation (used by sweeps) ---------------------------------

def evaluate_slot(cfg, methods, n, seed, predictor=None, power_dbm=None, beta_db=None, with_digest=False):
    """Rates of ``methods`` on ``n`` paired realizations of one evaluated slot.

    Every method sees the same trajectories, the same true channels and the
    same beamforming-network initialisations. Returns ``{method: rates (n,)}``,
    plus a hash of the shared channel draws if ``with_digest``.
    """
    if power_dbm is not None:
        cfg = cfg.replace("system", power_dbm=float(power_dbm))
    if beta_db is not None:
        cfg = cfg.replace("channel", rician_beta_db=float(beta_db))
    tau = cfg.training.tau
    scene = Scene(cfg)
    traj_ss, chan_ss, online_ss, phase_ss = np.random.SeedSequence([seed, 7]).spawn(4)
    locs, _ = scene.trajectories(n, tau + 1, np.random.default_rng(traj_ss))
    casc = scene.cascaded_los(locs[:, :tau])
    chans = scene.sample_channels(locs[:, tau], cfg.beta, np.random.default_rng(chan_ss))
    P, sigma_sq = cfg.power_w, cfg.noise_w
    out = {}
    for method in methods:
        prng = np.random.default_rng(phase_ss)
        if method == "genie":
            gcfg = baselines.GenieOptConfig.from_config(cfg.genie)
            pv, W, rate = baselines.genie_joint_opt(chans, P, sigma_sq, gcfg, prng)
            out[method] = np.asarray(sum_rate(chans, pv.v, W.W, sigma_sq))
            continue
        v = choose_phase(method, scene, cfg, casc, prng, predictor, P)
        H = ch.effective_channels(chans.f, v, chans.G)
        res = online_from_config(H, cfg, np.random.default_rng(online_ss), P=P)
        out[method] = np.asarray(sum_rate(chans, v, res.W.W, sigma_sq))
    if with_digest:
        h = hashlib.sha256()
        for a in (locs, chans.G, chans.f):
            h.update(np.ascontiguousarray(a).tobytes())
        return out, h.hexdigest()[:16]
    return out

