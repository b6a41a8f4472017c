"""Comparison schemes: full-ICSI joint optimisation, stale-LoS phases, random phases.

The first two share one projected-gradient ascent engine over (v, W) on a
batch of cascaded channels. Gradients come from the autodiff graph; every
step is followed by the unit-modulus and power projections, and a step is
only accepted if it improves the sum-rate (otherwise that sample's step
size is halved), so the returned point is never worse than its start.
"""

from dataclasses import dataclass

import numpy as np

from . import channel as ch
from .autodiff import Tensor, backward
from .autodiff import ops
from .metrics import (BeamformingMatrix, PhaseShiftVector, project_power,
                      project_unit_modulus, surrogate_rate)
from .models import rate_from_rows, to_pairs


@dataclass(frozen=True)
class GenieOptConfig:
    iterations: int = 500
    restarts: int = 5
    step: float = 0.05
    tolerance: float = 1e-8

    def __post_init__(self):
        if self.iterations < 0 or self.restarts < 1:
            raise ValueError("iterations must be >= 0 and restarts >= 1")
        if self.step <= 0 or self.tolerance <= 0:
            raise ValueError("step and tolerance must be positive")

    @classmethod
    def from_config(cls, g):
        return cls(g.iterations, g.restarts, g.step, g.tolerance)


def _sigma(noise):
    return float(np.mean(getattr(noise, "sigma_sq", noise)))


def matched_precoder(cascaded, v, P):
    """Equal-power matched-filter beams for the rows v^T H_k, (B, M, K)."""
    rows = np.einsum("bn,bknm->bkm", v, cascaded)
    W = np.conj(rows).transpose(0, 2, 1)
    norms = np.linalg.norm(W, axis=1, keepdims=True)
    K = cascaded.shape[1]
    W = np.where(norms > 0, W / np.where(norms > 0, norms, 1.0), 1.0 / np.sqrt(W.shape[1]))
    return W * np.sqrt(P / K)


def aligned_phase(cascaded):
    """Phase start steering the IRS toward the strongest user's dominant direction."""
    B, K = cascaded.shape[:2]
    power = np.sum(np.abs(cascaded) ** 2, axis=(2, 3))
    best = cascaded[np.arange(B), np.argmax(power, axis=1)]  # (B, N, M)
    u, _, _ = np.linalg.svd(best)
    return np.exp(-1j * np.angle(u[..., 0]))


def _rate_and_grads(v, U, cascaded_pairs, sigma_sq, P):
    vt = Tensor(to_pairs(v), requires_grad=True)
    Ut = Tensor(to_pairs(U), requires_grad=True)
    B, K, N, M = cascaded_pairs.shape[:4]
    rows = ops.reshape(ops.cmatmul(ops.reshape(vt, (B, 1, 1, N, 2)), Tensor(cascaded_pairs)), (B, K, M, 2))
    rates = rate_from_rows(rows, ops.mul(Ut, np.sqrt(P)), sigma_sq)
    backward(ops.sum(rates))
    gv = vt.grad[..., 0] + 1j * vt.grad[..., 1]
    gU = Ut.grad[..., 0] + 1j * Ut.grad[..., 1]
    return rates.data, gv, gU


def _ascend(cascaded, v0, W0, P, sigma_sq, cfg):
    """Batched projected-gradient ascent from (v0, W0); returns (v, W, rate) per sample."""
    cascaded = np.asarray(cascaded, dtype=np.complex128)
    B, _, N, _ = cascaded.shape
    cp = to_pairs(cascaded)
    v = project_unit_modulus(v0).v
    U = project_power(W0, P).W / np.sqrt(P)
    rate, gv, gU = _rate_and_grads(v, U, cp, sigma_sq, P)
    start_rate = rate.copy()
    eta = np.full(B, cfg.step)
    active = np.ones(B, dtype=bool)
    for _ in range(cfg.iterations):
        if not active.any():
            break
        nv = np.linalg.norm(gv, axis=1)
        nU = np.linalg.norm(gU, axis=(1, 2))
        dv = gv / np.where(nv > 0, nv, 1.0)[:, None] * np.sqrt(N)
        dU = gU / np.where(nU > 0, nU, 1.0)[:, None, None]
        e = np.where(active, eta, 0.0)
        v_new = project_unit_modulus(v + e[:, None] * dv).v
        U_new = project_power(U + e[:, None, None] * dU, 1.0).W
        cand = surrogate_rate(cascaded, v_new, U_new * np.sqrt(P), sigma_sq)
        better = active & (cand > rate)
        if better.any():
            v = np.where(better[:, None], v_new, v)
            U = np.where(better[:, None, None], U_new, U)
            rate, gv, gU = _rate_and_grads(v, U, cp, sigma_sq, P)
        eta = np.where(better | ~active, eta, eta / 2)
        active &= eta >= cfg.tolerance
    W = U * np.sqrt(P)
    # guard against round-off in the incremental acceptance test
    final = surrogate_rate(cascaded, v, W, sigma_sq)
    assert np.all(final >= start_rate - 1e-9)
    return v, W, final


def joint_ascent(cascaded, P, noise, cfg, rng):
    """Best-of-restarts projected-gradient ascent of the sum-rate on cascaded channels.

    ``cascaded``: (B, K, N, M) complex (or a single (K, N, M)). Restart 0
    starts from :func:`aligned_phase`; the others from uniform random phases.
    All starts use matched-filter beams. Returns ``(v (B, N), W (B, M, K), rate (B,))``.
    """
    cascaded = np.asarray(cascaded, dtype=np.complex128)
    single = cascaded.ndim == 3
    if single:
        cascaded = cascaded[None]
    B, K, N, M = cascaded.shape
    R = cfg.restarts
    starts = [aligned_phase(cascaded)]
    for _ in range(R - 1):
        starts.append(np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=(B, N))))
    v0 = np.concatenate(starts)
    rep = np.concatenate([cascaded] * R)
    v, W, rate = _ascend(rep, v0, matched_precoder(rep, v0, P), P, _sigma(noise), cfg)
    best = np.argmax(rate.reshape(R, B), axis=0)
    pick = best * B + np.arange(B)
    v, W, rate = v[pick], W[pick], rate[pick]
    if single:
        return v[0], W[0], float(rate[0])
    return v, W, rate


def genie_joint_opt(channels, P, noise, cfg, rng):
    """Full-ICSI joint optimisation of (v, W) on the true instantaneous channels.

    Returns ``(PhaseShiftVector, BeamformingMatrix, rate)``; batched if the
    realization carries leading batch axes.
    """
    casc = ch.cascaded(channels.f, channels.G)
    v, W, rate = joint_ascent(casc, P, noise, cfg, rng)
    return PhaseShiftVector(v), BeamformingMatrix(W, P), rate


def naive_los_phase(prev_cascaded, P, noise, cfg, rng=None):
    """Phase shifts optimised for the previous slot's cascaded LoS channels."""
    rng = np.random.default_rng(0) if rng is None else rng
    v, _, _ = joint_ascent(prev_cascaded, P, noise, cfg, rng)
    return PhaseShiftVector(v)


def random_phase(N, rng, size=None):
    """iid uniform phases on [0, 2pi); ``size`` adds leading batch axes."""
    shape = (N,) if size is None else tuple(np.atleast_1d(size)) + (N,)
    return PhaseShiftVector(np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=shape)))
