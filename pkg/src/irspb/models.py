"""The phase-shift predictor (CNN + LSTM) and the transmit-beamforming MLP.

Network raw outputs are turned into feasible decisions inside the graph:
phase shifts by elementwise normalisation, the precoder by scaling with
sqrt(P) and projecting onto the power budget. Both losses are the negative
sum-rate they induce.

Flatten order of the predictor trunk: slot-major; within a slot, user, then
filter, then pooled rows and columns. Raw output layout: ``[Re(v), Im(v)]``
with ``v`` of length N, and ``[Re(W), Im(W)]`` with ``W`` flattened
row-major from (M, K).
"""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ParameterSet, Tensor
from .autodiff import ops


@dataclass(frozen=True)
class LACLNetConfig:
    tau: int
    K: int
    N: int
    M: int
    conv_filters: int = 4
    conv_kernel: int = 3
    lstm_hidden: int = 64
    input_scale: float = 1.0

    def __post_init__(self):
        if min(self.tau, self.K, self.N, self.M, self.conv_filters, self.conv_kernel, self.lstm_hidden) < 1:
            raise ValueError("all LA-CLNet dimensions must be positive")
        if self.input_scale <= 0:
            raise ValueError("input_scale must be positive")

    @property
    def image_shape(self):
        """(rows, cols) of each per-user image after padding small arrays up to kernel+1."""
        m = self.conv_kernel + 1
        return max(self.N, m), max(self.M, m)

    @property
    def features_per_user(self):
        r, c = self.image_shape
        k = self.conv_kernel
        return self.conv_filters * ((r - k + 1) // 2) * ((c - k + 1) // 2)

    @property
    def head_v_out(self):
        return 2 * self.N

    @property
    def head_w_out(self):
        return 2 * self.M * self.K

    def with_scale(self, scale):
        return LACLNetConfig(self.tau, self.K, self.N, self.M, self.conv_filters,
                             self.conv_kernel, self.lstm_hidden, float(scale))


@dataclass(frozen=True)
class IAFNNConfig:
    M: int
    K: int
    hidden_sizes: tuple = (32, 16, 16)

    @property
    def io_size(self):
        return 2 * self.M * self.K

    @property
    def layer_sizes(self):
        return (self.io_size, *self.hidden_sizes, self.io_size)


@dataclass
class TrainingExample:
    """Unlabelled example: history (tau, K, N, M, 2) and slot-t cascaded LoS (K, N, M) complex."""

    history: np.ndarray
    target_cascaded: np.ndarray
    meta: dict = field(default_factory=dict)


def glorot(rng, fan_in, fan_out, shape):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


# -- LA-CLNet ------------------------------------------------------------------

def init_la_clnet(cfg, rng):
    k, F, H = cfg.conv_kernel, cfg.conv_filters, cfg.lstm_hidden
    D = cfg.K * cfg.features_per_user
    p = ParameterSet()
    p.add("trunk.conv.w", glorot(rng, 2 * k * k, F * k * k, (F, 2, k, k)))
    p.add("trunk.conv.b", np.zeros(F))
    p.add("trunk.lstm.wx", glorot(rng, D, 4 * H, (D, 4 * H)))
    p.add("trunk.lstm.wh", glorot(rng, H, 4 * H, (H, 4 * H)))
    p.add("trunk.lstm.b", np.zeros(4 * H))
    p.add("head_v.w", glorot(rng, H, cfg.head_v_out, (H, cfg.head_v_out)))
    p.add("head_v.b", np.zeros(cfg.head_v_out))
    p.add("head_w.w", glorot(rng, H, cfg.head_w_out, (H, cfg.head_w_out)))
    p.add("head_w.b", np.zeros(cfg.head_w_out))
    return p


def _history_images(history, cfg):
    h = np.asarray(history, dtype=np.float64)
    if h.ndim == 5:
        h = h[None]
    expect = (cfg.tau, cfg.K, cfg.N, cfg.M, 2)
    if h.shape[1:] != expect:
        raise ValueError(f"history shape {h.shape[1:]} does not match expected {expect}")
    B = h.shape[0]
    img = h.transpose(0, 1, 2, 5, 3, 4) / cfg.input_scale  # (B, tau, K, 2, N, M)
    rows, cols = cfg.image_shape
    if (rows, cols) != (cfg.N, cfg.M):
        padded = np.zeros(img.shape[:4] + (rows, cols))
        padded[..., : cfg.N, : cfg.M] = img
        img = padded
    return B, img.reshape(B * cfg.tau * cfg.K, 2, rows, cols)


def la_clnet_trunk(params, history, cfg):
    """Shared conv/LSTM trunk; returns the last hidden state (B, lstm_hidden)."""
    B, img = _history_images(history, cfg)
    x = ops.conv2d(Tensor(img), params["trunk.conv.w"], params["trunk.conv.b"])
    x = ops.maxpool2d(ops.relu(x))
    x = ops.reshape(x, (B, cfg.tau, cfg.K * cfg.features_per_user))
    h = Tensor(np.zeros((B, cfg.lstm_hidden)))
    c = Tensor(np.zeros((B, cfg.lstm_hidden)))
    for t in range(cfg.tau):
        h, c = ops.lstm_cell(x[:, t, :], h, c, params["trunk.lstm.wx"],
                             params["trunk.lstm.wh"], params["trunk.lstm.b"])
    return h


def la_clnet_forward(params, history, cfg):
    """Raw head outputs ``(v_raw (B, 2N), W_raw (B, 2MK))``."""
    h = la_clnet_trunk(params, history, cfg)
    v_raw = ops.linear(h, params["head_v.w"], params["head_v.b"])
    w_raw = ops.linear(h, params["head_w.w"], params["head_w.b"])
    return v_raw, w_raw


def decode_phase(v_raw, N):
    """(B, 2N) raw -> unit-modulus complex pairs (B, N, 2)."""
    B = v_raw.shape[0]
    pairs = ops.transpose(ops.reshape(v_raw, (B, 2, N)), (0, 2, 1))
    return ops.unit_modulus(pairs)


def decode_precoder(w_raw, M, K, P):
    """(B, 2MK) raw -> precoder pairs (B, M, K, 2) with sum power <= P."""
    B = w_raw.shape[0]
    pairs = ops.transpose(ops.reshape(w_raw, (B, 2, M, K)), (0, 2, 3, 1))
    return ops.power_project(ops.mul(pairs, np.sqrt(P)), P, axes=(1, 2, 3))


def to_pairs(z):
    z = np.asarray(z)
    return np.stack([z.real, z.imag], axis=-1)


def from_pairs(a):
    a = a.data if isinstance(a, Tensor) else np.asarray(a)
    return a[..., 0] + 1j * a[..., 1]


def rate_from_rows(rows, W, sigma_sq):
    """Differentiable per-sample sum-rate.

    ``rows`` (B, K, M, 2) holds each user's effective row channel r_k so that
    user k sees r_k w_j from beam j; ``W`` is (B, M, K, 2). Returns (B,).
    """
    K = rows.shape[1]
    z = ops.cmatmul(rows, W)  # (B, K, K, 2): [k, j] = r_k w_j
    gains = ops.cabs2(z)
    signal = ops.sum(ops.mul(gains, np.eye(K)), axis=-1)
    interference = ops.sub(ops.sum(gains, axis=-1), signal)
    sinr = ops.div(signal, ops.add(interference, np.asarray(sigma_sq, dtype=np.float64)))
    return ops.sum(ops.log2(ops.add(sinr, 1.0)), axis=-1)


def cascaded_rows(v_pairs, cascaded):
    """Rows v^T H_k: v (B, N, 2), cascaded (B, K, N, M) complex -> (B, K, M, 2)."""
    B, N = v_pairs.shape[0], v_pairs.shape[1]
    K, M = cascaded.shape[1], cascaded.shape[3]
    vrow = ops.reshape(v_pairs, (B, 1, 1, N, 2))
    rows = ops.cmatmul(vrow, Tensor(to_pairs(cascaded)))
    return ops.reshape(rows, (B, K, M, 2))


def la_clnet_rates(params, histories, targets, cfg, sigma_sq, P):
    """Surrogate sum-rate of each example under the network's decoded (v, W)."""
    v_raw, w_raw = la_clnet_forward(params, histories, cfg)
    v = decode_phase(v_raw, cfg.N)
    W = decode_precoder(w_raw, cfg.M, cfg.K, P)
    targets = np.asarray(targets)
    if targets.ndim == 3:
        targets = targets[None]
    return rate_from_rows(cascaded_rows(v, targets), W, sigma_sq)


def la_clnet_loss(params, batch, cfg, sigma_sq, P):
    """Negative mean surrogate sum-rate over a batch of TrainingExamples (or (hist, target) arrays)."""
    if isinstance(batch, (list, tuple)) and batch and isinstance(batch[0], TrainingExample):
        histories = np.stack([ex.history for ex in batch])
        targets = np.stack([ex.target_cascaded for ex in batch])
    else:
        histories, targets = batch
    if len(histories) == 0:
        raise ValueError("empty batch")
    rates = la_clnet_rates(params, histories, targets, cfg, sigma_sq, P)
    return ops.neg(ops.mean(rates))


# -- IA-FNN --------------------------------------------------------------------

def init_ia_fnn(cfg, rng, sessions=1):
    """Parameters for ``sessions`` independent networks (leading axis)."""
    p = ParameterSet()
    sizes = cfg.layer_sizes
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        p.add(f"fc{i}.w", glorot(rng, a, b, (sessions, a, b)))
        p.add(f"fc{i}.b", np.zeros((sessions, 1, b)))
    return p


def ia_fnn_features(H):
    """Real input vector [Re(H), Im(H)] (row-major over (M, K)), RMS-normalised per sample."""
    H = np.asarray(H)
    if H.ndim == 2:
        H = H[None]
    B = H.shape[0]
    feats = np.concatenate([H.real.reshape(B, -1), H.imag.reshape(B, -1)], axis=1)
    rms = np.sqrt(np.mean(feats ** 2, axis=1, keepdims=True))
    return feats / np.where(rms > 0, rms, 1.0)


def ia_fnn_forward(params, H, cfg):
    """Raw output (B, 2MK) for effective channels H (B, M, K) complex."""
    x = ia_fnn_features(H)
    if x.shape[1] != cfg.io_size:
        raise ValueError(f"effective channel has {x.shape[1]} reals, network expects {cfg.io_size}")
    out = Tensor(x[:, None, :])
    n_layers = len(cfg.layer_sizes) - 1
    for i in range(n_layers):
        out = ops.linear(out, params[f"fc{i}.w"], params[f"fc{i}.b"])
        if i < n_layers - 1:
            out = ops.relu(out)
    return ops.reshape(out, (out.shape[0], cfg.io_size))


def ia_fnn_rates(params, H, cfg, sigma_sq, P):
    H = np.asarray(H)
    if H.ndim == 2:
        H = H[None]
    W = decode_precoder(ia_fnn_forward(params, H, cfg), cfg.M, cfg.K, P)
    rows = Tensor(to_pairs(np.conj(np.swapaxes(H, -1, -2))))  # h_k^H
    return rate_from_rows(rows, W, sigma_sq), W


def ia_fnn_loss(params, H, cfg, sigma_sq, P):
    """Negative sum-rate, summed over independent sessions (one per leading index)."""
    rates, _ = ia_fnn_rates(params, H, cfg, sigma_sq, P)
    return ops.neg(ops.sum(rates))
