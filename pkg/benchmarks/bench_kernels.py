"""Compiled vs NumPy CNN kernels at the training shapes.

    python benchmarks/bench_kernels.py [--repeat 20] [--batch 32]

Times each kernel per backend, checks that both backends agree, and times
one full predictor training step (forward + backward) per backend.
"""

import argparse
import timeit

import numpy as np

from irspb import _kernels, models
from irspb.autodiff import backward


def _kernel_cases(rng, batch):
    # per-user images: (batch * tau * K, 2, N, M) at N=36, M=6, tau=5, K=3
    x = rng.standard_normal((batch * 5 * 3, 2, 36, 6))
    w = rng.standard_normal((4, 2, 3, 3))
    b = rng.standard_normal(4)
    # the raw backends take C-contiguous float64 (the dispatch layer ensures this)
    y = np.ascontiguousarray(_kernels._pykernels.conv2d_forward(x, w, b))
    gy = rng.standard_normal(y.shape)
    pooled, idx = _kernels._pykernels.maxpool2x2_forward(y)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    gp = rng.standard_normal(pooled.shape)
    return {
        "conv2d_forward": lambda k: k.conv2d_forward(x, w, b),
        "conv2d_backward": lambda k: k.conv2d_backward(x, w, gy),
        "maxpool2x2_forward": lambda k: k.maxpool2x2_forward(y),
        "maxpool2x2_backward": lambda k: k.maxpool2x2_backward(gp, idx, y.shape),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=1e-12)


def _train_step(rng, batch):
    net = models.LACLNetConfig(tau=5, K=3, N=36, M=6)
    params = models.init_la_clnet(net, rng)
    hist = rng.standard_normal((batch, 5, 3, 36, 6, 2))
    targ = rng.standard_normal((batch, 3, 36, 6)) + 1j * rng.standard_normal((batch, 3, 36, 6))

    def step():
        params.zero_grad()
        backward(models.la_clnet_loss(params, (hist, targ), net, 1.0, 1.0))

    return step


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--batch", type=int, default=32)
    args = ap.parse_args()

    backends = _kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the NumPy backend is available")
    rng = np.random.default_rng(0)
    cases = _kernel_cases(rng, args.batch)
    print(f"{'kernel':24s}" + "".join(f"{b:>12s}" for b in backends) + "     speedup  agree")
    for name, fn in cases.items():
        times = {b: best_of(lambda: fn(_kernels.get_backend(b)), args.repeat) for b in backends}
        outs = [fn(_kernels.get_backend(b)) for b in backends]
        agree = all(_same(outs[0], o) for o in outs[1:])
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:24s}" + "".join(f"{1e3 * times[b]:10.2f}ms" for b in backends)
              + f"  {speed:9.1f}x  {agree}")

    step = _train_step(rng, args.batch)
    times = {}
    for b in backends:
        _kernels._impl = _kernels.get_backend(b)
        times[b] = best_of(step, max(3, args.repeat // 4))
    speed = times["python"] / times["cython"] if "cython" in times else float("nan")
    print(f"{'training step':24s}" + "".join(f"{1e3 * times[b]:10.2f}ms" for b in backends)
          + f"  {speed:9.1f}x")


if __name__ == "__main__":
    main()
