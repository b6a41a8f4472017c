"""Quick self-test battery: gradient checks and feasibility invariants."""

import numpy as np

from . import baselines, models
from .autodiff import grad_check
from .metrics import POWER_TOL, total_power
from .pipeline import online_optimize

GRAD_TOL = 1e-4


def _check_predictor_grads(rng):
    cfg = models.LACLNetConfig(tau=2, K=2, N=16, M=4)
    params = models.init_la_clnet(cfg, rng)
    hist = rng.standard_normal((3, 2, 2, 16, 4, 2))
    targ = rng.standard_normal((3, 2, 16, 4)) + 1j * rng.standard_normal((3, 2, 16, 4))
    rep = grad_check(lambda p: models.la_clnet_loss(p, (hist, targ), cfg, 1.0, 2.0), params, rng=rng)
    return rep.max_rel_error <= GRAD_TOL, f"max rel. error {rep.max_rel_error:.2e}"


def _check_beamformer_grads(rng):
    cfg = models.IAFNNConfig(4, 2)
    params = models.init_ia_fnn(cfg, rng, sessions=2)
    H = rng.standard_normal((2, 4, 2)) + 1j * rng.standard_normal((2, 4, 2))
    rep = grad_check(lambda p: models.ia_fnn_loss(p, H, cfg, 1.0, 2.0), params, rng=rng)
    return rep.max_rel_error <= GRAD_TOL, f"max rel. error {rep.max_rel_error:.2e}"


def _check_feasibility(rng):
    cfg = models.LACLNetConfig(tau=2, K=2, N=16, M=4)
    params = models.init_la_clnet(cfg, rng)
    hist = rng.standard_normal((50, 2, 2, 16, 4, 2)) * 10.0 ** rng.uniform(-3, 3, size=(50, 1, 1, 1, 1, 1))
    v_raw, w_raw = models.la_clnet_forward(params, hist, cfg)
    v = models.from_pairs(models.decode_phase(v_raw, 16))
    W = models.from_pairs(models.decode_precoder(w_raw, 4, 2, 3.0))
    mod_err = float(np.max(np.abs(np.abs(v) - 1.0)))
    over = float(np.max(total_power(W) - 3.0))
    ok = mod_err <= 1e-9 and over <= 3.0 * POWER_TOL
    return ok, f"unit-modulus error {mod_err:.1e}, power excess {max(over, 0.0):.1e}"


def _check_closed_forms(rng):
    H = (rng.standard_normal((10, 4, 1)) + 1j * rng.standard_normal((10, 4, 1))) / np.sqrt(2)
    res = online_optimize(H, 1.0, 1.0, rng, iterations=300)
    ref = np.log2(1.0 + np.sum(np.abs(H) ** 2, axis=(1, 2)))
    worst_bf = float(np.max(1.0 - res.rate / ref))
    c = rng.standard_normal((10, 1, 1, 1)) + 1j * rng.standard_normal((10, 1, 1, 1))
    _, _, rate = baselines.joint_ascent(c, 1.0, 1.0, baselines.GenieOptConfig(iterations=50), rng)
    worst_g = float(np.max(np.abs(rate / np.log2(1.0 + np.abs(c[:, 0, 0, 0]) ** 2) - 1.0)))
    return worst_bf <= 0.02 and worst_g <= 0.01, f"beamformer shortfall {worst_bf:.1e}, joint {worst_g:.1e}"


CHECKS = {
    "predictor gradients": _check_predictor_grads,
    "beamformer gradients": _check_beamformer_grads,
    "decoded outputs feasible": _check_feasibility,
    "single-user closed forms": _check_closed_forms,
}


def run_checks(seed=0):
    """Run every check; returns a list of (name, passed, detail)."""
    out = []
    for name, fn in CHECKS.items():
        ok, detail = fn(np.random.default_rng(seed))
        out.append((name, bool(ok), detail))
    return out
