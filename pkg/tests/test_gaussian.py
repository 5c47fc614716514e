import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikeecg.errors import ConfigError, EmptyDataError
from spikeecg.gaussian import (
    GaussianLayer,
    GaussianParams,
    init_gains,
    kernel,
    measure_mean_rate,
    train_gaussian,
    update_beta,
    window_rates,
)
from spikeecg.snn_core import LifParams


def test_peak_gain_at_window_middle():
    g = init_gains(126, beta=2.0)
    assert g[62] == pytest.approx(2.0 / (42 * math.sqrt(2 * math.pi)), rel=1e-12)
    assert g.argmax() == 62


@given(n=st.integers(2, 400))
def test_kernel_symmetric_about_midpoint(n):
    k = kernel(n)
    # i = 1..n with mu = n/2: i and n - i mirror each other
    i = np.arange(1, n)
    np.testing.assert_allclose(k[i - 1], k[n - i - 1], rtol=1e-12)


def test_gains_linear_in_beta():
    np.testing.assert_allclose(init_gains(63, 2.0), 2 * init_gains(63, 1.0), rtol=1e-15)


@pytest.mark.parametrize("n", [63, 126, 500])
def test_gain_sum_is_truncated_gaussian_mass(n):
    # the window spans mu +- 1.5 sigma
    mass = math.erf(1.5 / math.sqrt(2))
    assert init_gains(n, 3.0).sum() == pytest.approx(3.0 * mass, rel=0.05)


def test_kernel_rejects_short_windows():
    with pytest.raises(ConfigError):
        kernel(1)


def test_mean_rate_examples():
    assert measure_mean_rate(np.zeros((4, 10))) == 0.0
    assert measure_mean_rate(np.ones((4, 10))) == 1.0
    assert measure_mean_rate(np.array([[2, 4]])) == 3.0
    with pytest.raises(EmptyDataError):
        measure_mean_rate(np.zeros((0, 3)))


def test_update_beta_examples():
    assert update_beta(10.0, 10.0, 0.5) == 0.0
    assert update_beta(0.0, 10.0, 0.5) == 0.5
    assert update_beta(20.0, 10.0, 0.5) == -0.5
    with pytest.raises(ConfigError):
        update_beta(1.0, 0.0, 0.5)


@given(rate=st.floats(0, 100), target=st.floats(0.1, 50), ag=st.floats(0.01, 2))
def test_update_sign_follows_rate_error(rate, target, ag):
    d = update_beta(rate, target, ag)
    if rate < target:
        assert d > 0
    elif rate > target:
        assert d < 0
    else:
        assert d == 0


def layer(n_windows=2, L=20, alpha=100.0, **kw):
    return GaussianLayer.create(n_windows, L, LifParams(alpha=alpha), GaussianParams(**kw))


def test_already_on_target_leaves_beta_unchanged():
    g = layer(r_target=10.0)
    report = train_gaussian(g, lambda lay, epoch: np.full(2, 10.0))
    assert report.converged and report.epochs == 0
    np.testing.assert_array_equal(g.beta, [1.0, 1.0])


def test_beta_clamped_positive():
    g = layer(beta_min=1e-3, max_epochs=3, alpha_g=5.0)
    report = train_gaussian(g, lambda lay, epoch: np.full(2, 1000.0))
    assert not report.converged and report.epochs == 3
    assert np.all(g.beta == 1e-3)


def test_non_convergence_warns(caplog):
    g = layer(max_epochs=2)
    with caplog.at_level("WARNING"):
        train_gaussian(g, lambda lay, epoch: np.zeros(2))
    assert "did not converge" in caplog.text


def poisson_input(rng, rates, n_beats, horizon=200):
    """Encoder-like spikes ``(horizon, beats, W, L)`` with per-window constant rate."""
    rates = np.asarray(rates)[None, None, :, None]
    shape = (horizon, n_beats, rates.shape[2], 20)
    return rng.random(shape) < rates


def test_two_windows_with_different_drive_converge_to_same_rate():
    g = layer(alpha=100.0, r_target=10.0, alpha_g=0.5)
    rng = np.random.default_rng(0)

    def measure(lay, epoch):
        return window_rates(lay, poisson_input(rng, [0.1, 0.2], 8))

    report = train_gaussian(g, measure)
    assert report.converged
    assert np.all(np.abs(1 - np.array(report.rates) / 10.0) <= 0.1)
    # the weaker window needs the larger gain
    assert g.beta[0] > g.beta[1]


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 1000), b=st.floats(0.1, 3), extra=st.floats(0, 3))
def test_larger_beta_never_lowers_rate(seed, b, extra):
    spikes = poisson_input(np.random.default_rng(seed), [0.15], 2, horizon=60)
    g = layer(n_windows=1, alpha=50.0)
    g.beta[:] = b
    low = g.forward(spikes).sum()
    g.beta[:] = b + extra
    assert g.forward(spikes).sum() >= low


def test_forward_rejects_wrong_topology():
    with pytest.raises(ConfigError):
        layer().forward(np.zeros((5, 3, 20), dtype=bool))
