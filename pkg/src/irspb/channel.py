"""Steering vectors, LoS components, path loss and Rician channel sampling.

Array conventions
-----------------
* IRS elements are ordered y-major: row ``n = iy * Nz + iz``.
* ``G`` is ``(N, M)`` (IRS rows, AP columns); ``f_k`` is ``(N,)``.
* Batched arrays put extra axes in front, e.g. ``f`` is ``(B, K, N)``.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ArrayGeometry:
    M: int
    Ny: int
    Nz: int
    spacing_ratio_ap: float = 0.5
    spacing_ratio_irs_y: float = 0.5
    spacing_ratio_irs_z: float = 0.5

    def __post_init__(self):
        if min(self.M, self.Ny, self.Nz) < 1:
            raise ValueError("array sizes must be >= 1")
        if min(self.spacing_ratio_ap, self.spacing_ratio_irs_y, self.spacing_ratio_irs_z) <= 0:
            raise ValueError("element spacings must be positive")

    @property
    def N(self):
        return self.Ny * self.Nz


@dataclass(frozen=True)
class PathLossParams:
    beta0_db: float = -30.0
    D0: float = 1.0
    eta_ai: float = 2.2
    eta_user: float = 3.0

    def __post_init__(self):
        if self.D0 <= 0:
            raise ValueError("reference distance D0 must be positive")
        if self.eta_ai < 0 or self.eta_user < 0:
            raise ValueError("path-loss exponents must be non-negative")


@dataclass(frozen=True)
class RicianParams:
    beta_ai: float
    beta_iu: float

    def __post_init__(self):
        if self.beta_ai < 0 or self.beta_iu < 0:
            raise ValueError("Rician factors must be non-negative")

    @classmethod
    def shared_db(cls, beta_db):
        b = 10.0 ** (beta_db / 10.0)
        return cls(b, b)


@dataclass
class LoSChannelSet:
    G_bar: np.ndarray
    f_bar: np.ndarray


@dataclass
class ChannelRealization:
    """Instantaneous channels with their LoS parts and linear path gains.

    ``G``: (..., N, M); ``f``: (..., K, N); ``alpha_iu``: (..., K).
    """

    G: np.ndarray
    f: np.ndarray
    los: LoSChannelSet
    alpha_ai: float
    alpha_iu: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def K(self):
        return self.f.shape[-2]


def steering_vector(n_elems, spacing_ratio, phase_factor):
    """Uniform linear array response ``exp(-j 2 pi l d/lambda psi)``, l = 0..n-1.

    ``phase_factor`` may be an array; the element axis is appended last.
    """
    if n_elems < 1:
        raise ValueError("n_elems must be >= 1")
    l = np.arange(n_elems)
    psi = np.asarray(phase_factor, dtype=np.float64)[..., None]
    return np.exp(-2j * np.pi * spacing_ratio * psi * l)


def irs_response(sin_theta, cos_xi, sin_xi, geom):
    """Kronecker of the IRS y- and z-axis steering vectors, y-major, shape (..., N)."""
    st = np.asarray(sin_theta, dtype=np.float64)
    ay = steering_vector(geom.Ny, geom.spacing_ratio_irs_y, st * cos_xi)
    az = steering_vector(geom.Nz, geom.spacing_ratio_irs_z, st * sin_xi)
    return (ay[..., :, None] * az[..., None, :]).reshape(st.shape + (geom.N,))


def los_ap_irs(ap_angles, geom):
    """Rank-one AP-IRS LoS matrix (a_y (x) a_z) a_AP^T, shape (N, M)."""
    py, pz = ap_angles.phase_factors()
    a_ap = steering_vector(geom.M, geom.spacing_ratio_ap, py)
    a_irs = irs_response(ap_angles.sin_theta, ap_angles.cos_xi, ap_angles.sin_xi, geom)
    return np.outer(a_irs, a_ap)


def los_irs_user(user_angles, geom):
    return irs_response(user_angles.sin_theta, user_angles.cos_xi, user_angles.sin_xi, geom)


def path_loss_gain(d, eta, params):
    """Linear power gain ``10^(beta0_db/10) (d / D0)^(-eta)``."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("path-loss distance must be positive")
    g = 10.0 ** (params.beta0_db / 10.0) * (d / params.D0) ** (-eta)
    return float(g) if g.ndim == 0 else g


def sample_nlos(shape, rng):
    """iid CN(0, 1) entries."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_rician(los, beta, alpha, rng):
    """``sqrt(alpha) (sqrt(beta/(beta+1)) los + sqrt(1/(beta+1)) nlos)``.

    ``beta`` and ``alpha`` broadcast against ``los``.
    """
    los = np.asarray(los)
    beta = np.asarray(beta, dtype=np.float64)
    nlos = sample_nlos(los.shape, rng)
    mixed = np.sqrt(beta / (beta + 1.0)) * los + np.sqrt(1.0 / (beta + 1.0)) * nlos
    return np.sqrt(alpha) * mixed


def cascaded_los(f_bar_k, G_bar, alpha_ai, alpha_iu_k):
    """``sqrt(alpha_iu alpha_ai) diag(conj(f_bar)) G_bar``, broadcasting over leading axes.

    With this convention ``v^T H w == f^H diag(v) G w``.
    """
    f_bar_k = np.asarray(f_bar_k)
    G_bar = np.asarray(G_bar)
    if f_bar_k.shape[-1] != G_bar.shape[-2]:
        raise ValueError(f"IRS size mismatch: f {f_bar_k.shape} vs G {G_bar.shape}")
    scale = np.sqrt(np.asarray(alpha_iu_k, dtype=np.float64) * alpha_ai)
    return scale[..., None, None] * np.conj(f_bar_k)[..., :, None] * G_bar


def cascaded(f, G):
    """Instantaneous cascaded channels ``diag(conj f_k) G`` for f (..., K, N), G (..., N, M)."""
    return np.conj(f)[..., :, :, None] * G[..., None, :, :]


def effective_miso(f_k, phase, G, tol=1e-9):
    """Return h with ``h^H = f^H diag(phase) G``; works on stacked users / batches."""
    f_k, phase, G = np.asarray(f_k), np.asarray(phase), np.asarray(G)
    if f_k.shape[-1] != phase.shape[-1] or phase.shape[-1] != G.shape[-2]:
        raise ValueError(f"shape mismatch: f {f_k.shape}, phase {phase.shape}, G {G.shape}")
    if np.any(np.abs(np.abs(phase) - 1.0) > tol):
        raise ValueError("phase-shift vector is not unit-modulus")
    row = np.einsum("...n,...n,...nm->...m", np.conj(f_k), phase, G)
    return np.conj(row)


def effective_channels(f, phase, G):
    """Stacked effective ICSI: f (..., K, N), phase (..., N), G (..., N, M) -> H (..., M, K)."""
    h = effective_miso(f, phase[..., None, :], G[..., None, :, :])
    return np.swapaxes(h, -1, -2)


def build_history(cascaded_slots):
    """Stack tau slots of K user cascaded LoS channels into (tau, K, N, M, 2), oldest first."""
    try:
        arr = np.asarray(cascaded_slots, dtype=np.complex128)
    except ValueError:
        raise ValueError("ragged history input") from None
    if arr.ndim != 4:
        raise ValueError(f"history must be tau x K x N x M, got shape {arr.shape}")
    return np.stack([arr.real, arr.imag], axis=-1)


def unpack_history(history):
    history = np.asarray(history)
    return history[..., 0] + 1j * history[..., 1]
