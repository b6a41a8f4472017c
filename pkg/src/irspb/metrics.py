"""SINR, sum-rate and the two feasibility projections (NumPy, no autodiff).

Everything accepts optional leading batch axes.
"""

from dataclasses import dataclass

import numpy as np

from .channel import effective_channels

UNIT_MODULUS_TOL = 1e-9
POWER_TOL = 1e-9


@dataclass
class PhaseShiftVector:
    """Diagonal of the IRS reflection matrix, shape (..., N), unit-modulus entries."""

    v: np.ndarray

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=np.complex128)
        if np.any(np.abs(np.abs(self.v) - 1.0) > UNIT_MODULUS_TOL):
            raise ValueError("phase-shift vector violates the unit-modulus constraint")

    @property
    def N(self):
        return self.v.shape[-1]


@dataclass
class BeamformingMatrix:
    """Transmit precoder W (..., M, K) whose columns are the per-user beams."""

    W: np.ndarray
    power_budget: float

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.complex128)
        if np.any(total_power(self.W) > self.power_budget * (1.0 + POWER_TOL)):
            raise ValueError("beamforming matrix exceeds the power budget")


@dataclass
class NoiseModel:
    sigma_sq: np.ndarray

    def __post_init__(self):
        self.sigma_sq = np.atleast_1d(np.asarray(self.sigma_sq, dtype=np.float64))
        if np.any(self.sigma_sq <= 0):
            raise ValueError("noise powers must be positive")

    @classmethod
    def uniform_dbm(cls, dbm, K):
        return cls(np.full(K, dbm_to_watts(dbm)))


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=np.float64) - 30.0) / 10.0)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=np.float64) / 10.0)


def total_power(W):
    W = np.asarray(W)
    return np.sum(np.abs(W) ** 2, axis=(-2, -1))


def _w(W):
    return W.W if isinstance(W, BeamformingMatrix) else np.asarray(W)


def _sigma(noise):
    return noise.sigma_sq if isinstance(noise, NoiseModel) else np.asarray(noise, dtype=np.float64)


def sinr_all(H, W, noise):
    """Per-user SINR for effective channels H (..., M, K) and precoder W (..., M, K)."""
    H, W = np.asarray(H), _w(W)
    if H.shape[-2] != W.shape[-2] or H.shape[-1] != W.shape[-1]:
        raise ValueError(f"shape mismatch: H {H.shape}, W {W.shape}")
    gains = np.abs(np.conj(np.swapaxes(H, -1, -2)) @ W) ** 2  # [k, j] = |h_k^H w_j|^2
    signal = np.diagonal(gains, axis1=-2, axis2=-1)
    interference = gains.sum(axis=-1) - signal
    return signal / (interference + _sigma(noise))


def sinr(k, eff_channels, W, noise):
    """SINR of user ``k``; ``eff_channels`` is (M, K) or a sequence of K M-vectors."""
    H = np.asarray(eff_channels)
    if H.ndim == 2 and not isinstance(eff_channels, np.ndarray):
        H = H.T
    return float(sinr_all(H, W, noise)[..., k])


def rate_from_sinr(gamma):
    return np.log2(1.0 + gamma).sum(axis=-1)


def sum_rate(channels, phase, W, noise):
    """Achievable sum-rate with the true channels of ``channels`` (ChannelRealization)."""
    v = phase.v if isinstance(phase, PhaseShiftVector) else np.asarray(phase)
    H = effective_channels(channels.f, v, channels.G)
    return rate_from_sinr(sinr_all(H, W, noise))


def cascaded_gains(cascaded, v, W):
    """|v^T H_k w_j|^2 for cascaded (..., K, N, M), v (..., N), W (..., M, K) -> (..., K, K)."""
    cascaded, v, W = np.asarray(cascaded), np.asarray(v), _w(W)
    if cascaded.shape[-2] != v.shape[-1] or cascaded.shape[-1] != W.shape[-2]:
        raise ValueError(f"shape mismatch: cascaded {cascaded.shape}, v {v.shape}, W {W.shape}")
    rows = np.einsum("...n,...knm->...km", v, cascaded)
    return np.abs(rows @ W) ** 2


def surrogate_rate(cascaded, v, W, noise):
    """Sum-rate of the LoS surrogate problem evaluated on cascaded channels."""
    v = v.v if isinstance(v, PhaseShiftVector) else v
    gains = cascaded_gains(cascaded, v, W)
    signal = np.diagonal(gains, axis1=-2, axis2=-1)
    gamma = signal / (gains.sum(axis=-1) - signal + _sigma(noise))
    return rate_from_sinr(gamma)


def project_power(W_raw, P):
    """Scale W down onto the power budget if it exceeds it; otherwise return it unchanged."""
    W_raw = np.asarray(W_raw, dtype=np.complex128)
    tot = total_power(W_raw)[..., None, None]
    scale = np.where(tot > P, np.sqrt(P / np.where(tot > 0, tot, 1.0)), 1.0)
    return BeamformingMatrix(W_raw * scale, P)


def project_unit_modulus(v_raw, eps=1e-12):
    v_raw = np.asarray(v_raw, dtype=np.complex128)
    mag = np.abs(v_raw)
    small = mag < eps
    out = np.where(small, 1.0 + 0j, v_raw / np.where(small, 1.0, mag))
    return PhaseShiftVector(out)
