import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spikeecg.classifier import (
    ClassifierState,
    RstdpParams,
    forward,
    last_spike_steps,
    predict,
    reinforce,
    rstdp_delta,
    train_rstdp_epoch,
)
from spikeecg.errors import ConfigError, DataError
from spikeecg.snn_core import NEVER, LifParams

P = RstdpParams()


def test_predict_examples():
    assert predict([5, 2, 0]) == 0
    assert predict([3, 3], [0.2, 0.7]) == 1
    assert predict([0, 0], [0.1, 0.1]) == 0
    assert predict([1, 4, 4], [0.9, 0.3, 0.3]) == 1


def test_predict_needs_a_class():
    with pytest.raises(ConfigError):
        predict([])


@given(
    counts=st.lists(st.integers(0, 200), min_size=1, max_size=6),
    scale=st.integers(1, 50),
)
def test_predict_invariant_to_positive_scaling(counts, scale):
    assert predict(np.array(counts) * scale) == predict(counts)


@pytest.mark.parametrize("correct", [True, False])
@pytest.mark.parametrize("dt", [3.0, -3.0])
def test_fixed_points_at_bounds(correct, dt):
    assert rstdp_delta(correct, dt, 0.0, P) == 0.0
    assert rstdp_delta(correct, dt, P.psi_max, P) == 0.0


def test_reward_arithmetic():
    assert rstdp_delta(True, 1.0, 0.5, RstdpParams(ar_plus=0.02)) == pytest.approx(0.005, rel=1e-12)


@given(psi=st.floats(1e-6, 1 - 1e-6), dt=st.floats(-50, 50).filter(lambda x: x != 0))
def test_sign_matches_branch(psi, dt):
    causal = dt > 0
    assert (rstdp_delta(True, dt, psi, P) > 0) == causal
    assert (rstdp_delta(False, dt, psi, P) > 0) == (not causal)


@given(
    psi=st.floats(0, 1),
    dt=st.floats(-50, 50),
    a=st.floats(1e-4, 1),
    b=st.floats(1e-4, 1),
)
def test_reward_and_punishment_mirror(psi, dt, a, b):
    # punishment with rates (ap_plus, ap_minus) = (-ar_minus, -ar_plus) is the negated reward
    reward = RstdpParams(ar_plus=a, ar_minus=-b)
    punish = RstdpParams(ap_plus=b, ap_minus=-a)
    assert rstdp_delta(True, dt, psi, reward) == -rstdp_delta(False, dt, psi, punish)


@given(psi=st.floats(0, 1), rate=st.floats(1e-4, 1.0), dt=st.floats(-5, 5))
def test_bounded_step_never_leaves_range(psi, rate, dt):
    # psi +- rate * psi * (1 - psi) stays in [0, 1] whenever rate * psi_max <= 1
    params = RstdpParams(ar_plus=rate, ar_minus=-rate, ap_plus=rate, ap_minus=-rate)
    for correct in (True, False):
        new = psi + rstdp_delta(correct, dt, psi, params)
        assert -1e-12 <= new <= 1 + 1e-12


def test_param_validation():
    with pytest.raises(ConfigError):
        RstdpParams(ar_plus=-0.1)
    with pytest.raises(ConfigError):
        RstdpParams(init_low=0.7, init_high=0.6)


def test_last_spike_steps():
    raster = np.zeros((5, 3), dtype=bool)
    raster[[1, 3], 0] = True
    raster[4, 2] = True
    np.testing.assert_array_equal(last_spike_steps(raster), [3, NEVER, 4])


def make_state(psi):
    return ClassifierState(psi=np.array(psi, dtype=float), classes=["a", "b"])


def test_reinforce_skips_silent_pre_and_uses_winner_last_spike():
    state = make_state(np.full((1, 3, 2), 0.5))
    raster = np.zeros((10, 1, 3), dtype=bool)
    raster[2, 0, 0] = True  # before the winner's last spike: causal
    raster[9, 0, 1] = True  # after it: anti-causal
    out = forward(state, raster, LifParams(alpha=50.0))
    out.winner = 0
    out.last_spike = np.array([5, NEVER])
    reinforce(state, raster, out, True, P)
    np.testing.assert_allclose(state.psi[0, :, 0], [0.505, 0.495, 0.5])
    np.testing.assert_array_equal(state.psi[0, :, 1], [0.5, 0.5, 0.5])


def test_silent_winner_times_post_at_horizon():
    state = make_state(np.full((1, 2, 2), 0.5))
    raster = np.zeros((10, 1, 2), dtype=bool)
    raster[9, 0, 0] = True
    out = forward(state, raster, LifParams(alpha=0.0 + 1e-9))
    assert out.counts.sum() == 0
    reinforce(state, raster, out, False, P)
    # t_post = 10 > t_pre = 9: causal, so punishment depresses
    assert state.psi[0, 0, 0] == pytest.approx(0.495)
    assert state.psi[0, 1, 0] == 0.5


def toy_samples(rng, n, horizon=100):
    """Two classes, each driving only its own window of feature neurons."""
    samples = []
    for i in range(n):
        label = i % 2
        raster = np.zeros((horizon, 2, 4), dtype=bool)
        raster[:, label] = rng.random((horizon, 4)) < 0.3
        samples.append((raster, "ab"[label]))
    return samples


def test_separable_toy_learns_within_20_epochs():
    rng = np.random.default_rng(0)
    state = ClassifierState.initial(2, 4, ["a", "b"], P, rng)
    data = toy_samples(rng, 60)
    # strong enough drive that the winner keeps firing to the end of the beat
    lif = LifParams(alpha=8.0)
    accuracy = []
    for epoch in range(20):
        order = rng.permutation(len(data))
        stats = train_rstdp_epoch(state, (data[i] for i in order), lif, P)
        accuracy.append(stats.accuracy)
        if stats.accuracy >= 0.95:
            break
    assert max(accuracy) >= 0.95


def test_zero_rates_change_nothing():
    rng = np.random.default_rng(1)
    zero = RstdpParams(ar_plus=0, ar_minus=0, ap_plus=0, ap_minus=0)
    state = ClassifierState.initial(2, 4, ["a", "b"], zero, rng)
    before = state.psi.copy()
    train_rstdp_epoch(state, toy_samples(rng, 10), LifParams(alpha=4.0), zero)
    np.testing.assert_array_equal(state.psi, before)


def test_zero_weights_are_a_fixed_point():
    rng = np.random.default_rng(2)
    state = ClassifierState(psi=np.zeros((2, 4, 2)), classes=["a", "b"])
    train_rstdp_epoch(state, toy_samples(rng, 20), LifParams(alpha=4.0), P)
    assert np.all(state.psi == 0)


def test_weights_stay_clipped():
    rng = np.random.default_rng(3)
    big = RstdpParams(ar_plus=10, ar_minus=-10, ap_plus=10, ap_minus=-10)
    state = ClassifierState.initial(2, 4, ["a", "b"], big, rng)
    train_rstdp_epoch(state, toy_samples(rng, 20), LifParams(alpha=4.0), big)
    assert np.all((state.psi >= 0) & (state.psi <= big.psi_max))


def test_unknown_label_rejected():
    rng = np.random.default_rng(4)
    state = ClassifierState.initial(2, 4, ["a", "b"], P, rng)
    raster = np.zeros((10, 2, 4), dtype=bool)
    with pytest.raises(DataError):
        train_rstdp_epoch(state, [(raster, "c")], LifParams(), P)


def test_forward_checks_topology():
    state = ClassifierState.initial(2, 4, ["a", "b"], P, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        forward(state, np.zeros((10, 3, 4), dtype=bool), LifParams())
