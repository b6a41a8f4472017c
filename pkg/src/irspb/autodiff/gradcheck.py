"""Central finite-difference gradient checking."""

from dataclasses import dataclass

import numpy as np


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    checked: int

    def passed(self, tol):
        return self.max_rel_error <= tol


def grad_check(f, params, step=1e-5, max_coords=400, rng=None, rel_floor=1e-6):
    """Compare analytic gradients of ``f(params) -> scalar Tensor`` with central differences.

    Tensors with more than ``max_coords`` entries are sub-sampled (at least
    200 coordinates per tensor). The relative error of a coordinate is
    ``|a - n| / max(|a|, |n|, floor)`` where ``floor = rel_floor * max(1, max|grad|)``
    keeps round-off on near-zero coordinates from dominating.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    params.zero_grad()
    loss = f(params)
    loss.backward()
    analytic = {name: t.grad.copy() for name, t in params.items()}
    gmax = max(float(np.abs(g).max()) if g.size else 0.0 for g in analytic.values())
    floor = rel_floor * max(1.0, gmax)

    worst = GradCheckReport(0.0, "", (), 0)
    per_tensor = max(200, max_coords)
    for name, t in params.items():
        flat = t.data.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= per_tensor else rng.choice(n, size=per_tensor, replace=False)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + step
            up = f(params).item()
            flat[idx] = orig - step
            down = f(params).item()
            flat[idx] = orig
            numeric = (up - down) / (2.0 * step)
            a = analytic[name].reshape(-1)[idx]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst.checked += 1
            if rel > worst.max_rel_error:
                worst.max_rel_error = float(rel)
                worst.worst_param = name
                worst.worst_index = np.unravel_index(idx, t.shape)
    params.zero_grad()
    return worst
