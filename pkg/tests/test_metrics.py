import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from irspb import channel as ch
from irspb import geometry as geo
from irspb import metrics as mt
from conftest import crandn


def sinr_loops(H, W, sigma):
    """Per-user SINR by explicit sums over users."""
    M, K = H.shape
    out = []
    for k in range(K):
        hk = H[:, k]
        gain = lambda j: abs(sum(np.conj(hk[m]) * W[m, j] for m in range(M))) ** 2
        out.append(gain(k) / (sum(gain(j) for j in range(K) if j != k) + sigma[k]))
    return np.array(out)


def test_sinr_examples():
    h = [np.array([2.0 + 0j])]
    assert mt.sinr(0, h, np.array([[1.5 + 0j]]), mt.NoiseModel([0.5])) == pytest.approx(4 * 2.25 / 0.5)
    assert mt.sinr(0, [np.ones(3)], np.zeros((3, 1)), mt.NoiseModel([1.0])) == 0
    h = [np.array([1.0 + 0j]), np.array([1.0 + 0j])]
    assert mt.sinr(0, h, np.array([[1.0 + 0j, 1.0 + 0j]]), mt.NoiseModel([1.0, 1.0])) == pytest.approx(0.5)


def test_sinr_matches_loops(rng):
    for _ in range(50):
        M, K = rng.integers(1, 5, size=2)
        H, W = crandn(rng, M, K), crandn(rng, M, K)
        sigma = rng.uniform(0.1, 2, K)
        np.testing.assert_allclose(mt.sinr_all(H, W, sigma), sinr_loops(H, W, sigma), rtol=1e-12)


def test_sum_rate_examples(rng):
    f, G = crandn(rng, 1, 3), crandn(rng, 3, 2)
    chans = ch.ChannelRealization(G, f, None, 1.0, np.ones(1))
    v = np.exp(1j * rng.uniform(0, 2 * np.pi, 3))
    assert mt.sum_rate(chans, v, np.zeros((2, 1)), 1.0) == 0
    # K = 1 with SINR exactly 1
    h = ch.effective_miso(f[0], v, G)
    w = (h / np.linalg.norm(h) ** 2)[:, None]
    assert mt.sum_rate(chans, v, w, 1.0) == pytest.approx(1.0, abs=1e-12)


def test_sum_rate_matches_termwise_evaluation(rng):
    N, M, K = 4, 3, 2
    f, G = crandn(rng, K, N), crandn(rng, N, M)
    chans = ch.ChannelRealization(G, f, None, 1.0, np.ones(K))
    v = np.exp(1j * rng.uniform(0, 2 * np.pi, N))
    W = crandn(rng, M, K)
    sigma = 0.3
    rate = 0.0
    for k in range(K):
        row = np.conj(f[k]) @ np.diag(v) @ G
        sig = abs(row @ W[:, k]) ** 2
        inter = sum(abs(row @ W[:, j]) ** 2 for j in range(K) if j != k)
        rate += math.log2(1 + sig / (inter + sigma))
    assert mt.sum_rate(chans, mt.PhaseShiftVector(v), W, sigma) == pytest.approx(rate, abs=1e-10)


def test_surrogate_examples():
    assert mt.surrogate_rate(np.ones((1, 1, 1)), np.ones(1), np.ones((1, 1)), 1.0) == pytest.approx(1.0)
    assert mt.surrogate_rate(np.ones((2, 3, 2)), np.ones(3), np.zeros((2, 2)), 1.0) == 0


def test_surrogate_equals_sum_rate_on_pure_los(rng):
    g = ch.ArrayGeometry(3, 2, 2)
    G_bar = ch.los_ap_irs(geo.AngleTriple(0.1, 0.99, 0.14), g)
    f_bar = np.stack([ch.los_irs_user(geo.AngleTriple(s, 0.8, 0.6), g) for s in (0.5, 0.9)])
    alpha_ai, alpha_iu = 2e-3, np.array([3e-2, 5e-2])
    casc = ch.cascaded_los(f_bar, G_bar, alpha_ai, alpha_iu)
    chans = ch.ChannelRealization(math.sqrt(alpha_ai) * G_bar, np.sqrt(alpha_iu)[:, None] * f_bar,
                                  ch.LoSChannelSet(G_bar, f_bar), alpha_ai, alpha_iu)
    for v in (np.ones(4), np.exp(1j * rng.uniform(0, 2 * np.pi, 4))):
        W = crandn(rng, 3, 2)
        assert mt.surrogate_rate(casc, v, W, 1e-6) == pytest.approx(mt.sum_rate(chans, v, W, 1e-6), abs=1e-10)


def test_common_phase_leaves_sinr_unchanged(rng):
    H, W = crandn(rng, 4, 3), crandn(rng, 4, 3)
    a = mt.sinr_all(H, W, 0.5)
    b = mt.sinr_all(H * np.exp(1j * 0.77), W, 0.5)
    np.testing.assert_allclose(a, b, rtol=1e-14)


def test_noise_monotonicity(rng):
    H, W = crandn(rng, 3, 2), crandn(rng, 3, 2)
    assert np.all(mt.sinr_all(H, W, 0.5) > mt.sinr_all(H, W, 0.6))


def test_project_power_examples(rng):
    W = crandn(rng, 3, 2)
    P = mt.total_power(W)
    np.testing.assert_array_equal(mt.project_power(W, 2 * P).W, W)
    out = mt.project_power(W, P / 4)
    np.testing.assert_allclose(out.W, W / 2, atol=1e-15)
    assert mt.total_power(out.W) == pytest.approx(P / 4)
    np.testing.assert_array_equal(mt.project_power(np.zeros((2, 2)), 1.0).W, 0)


def test_project_unit_modulus_examples():
    np.testing.assert_allclose(mt.project_unit_modulus([3 + 4j]).v, [0.6 + 0.8j])
    np.testing.assert_array_equal(mt.project_unit_modulus([0j]).v, [1 + 0j])
    v = np.exp(1j * np.linspace(0, 6, 7))
    np.testing.assert_allclose(mt.project_unit_modulus(v).v, v, atol=1e-15)


def test_constraint_types_validate():
    with pytest.raises(ValueError):
        mt.PhaseShiftVector([1.0, 0.5])
    with pytest.raises(ValueError):
        mt.BeamformingMatrix(np.ones((2, 2)), 3.9)
    with pytest.raises(ValueError):
        mt.NoiseModel([0.0])
    assert mt.NoiseModel.uniform_dbm(-96, 3).sigma_sq == pytest.approx(np.full(3, 10 ** -12.6))


complex_arrays = arrays(np.complex128, st.tuples(st.integers(1, 4), st.integers(1, 4)),
                        elements=st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False))


@settings(max_examples=60, deadline=None)
@given(complex_arrays, st.floats(1e-6, 1e6))
def test_project_power_feasible_and_idempotent(W, P):
    once = mt.project_power(W, P).W
    assert mt.total_power(once) <= P * (1 + 1e-9)
    np.testing.assert_allclose(mt.project_power(once, P).W, once, rtol=1e-12, atol=1e-300)


@settings(max_examples=60, deadline=None)
@given(arrays(np.complex128, st.integers(1, 40),
              elements=st.complex_numbers(max_magnitude=1e8, allow_nan=False, allow_infinity=False)))
def test_project_unit_modulus_feasible_and_idempotent(v):
    once = mt.project_unit_modulus(v).v
    assert np.all(np.abs(np.abs(once) - 1) <= 1e-9)
    np.testing.assert_allclose(mt.project_unit_modulus(once).v, once, atol=1e-15)
