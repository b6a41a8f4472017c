import numpy as np
import pytest

from irspb import _kernels
from irspb.config import load_preset

# (criterion, passed, detail) lines collected by the acceptance suite
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{name} {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(params=_kernels.available_backends())
def kernel_backend(request, monkeypatch):
    """Run the test once per available CNN kernel backend."""
    monkeypatch.setattr(_kernels, "_impl", _kernels.get_backend(request.param))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ref_cfg():
    return load_preset("paper")[0]


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@pytest.fixture(scope="session")
def small_cfg(ref_cfg):
    """A scaled-down scene that keeps every code path but runs in seconds."""
    cfg = ref_cfg.replace("system", K=2, M=2, Ny=2, Nz=2)
    cfg = cfg.replace("training", n_train=200, iterations=300, conv_filters=16, eval_every=50)
    cfg = cfg.replace("online", iterations=100)
    cfg = cfg.replace("genie", iterations=60, restarts=2)
    return cfg.replace(episode_slots=4)


@pytest.fixture(scope="session")
def small_predictor(small_cfg):
    from irspb import bench
    return bench.train_predictor(small_cfg)
