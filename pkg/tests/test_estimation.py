import math

import numpy as np
import pytest

from mnlkb.estimation import EpochOutcome, EstimatorState, confidence_radius, init_state, record_epoch
from mnlkb.harness import make_rng, simulate_fixed_epochs
from mnlkb.mnl import Instance


def test_radius_formula():
    a = 48 * math.log(math.sqrt(3) * 2 ** 4 + 1) / 4
    assert confidence_radius(0.5, 4, 2, 3) == pytest.approx(math.sqrt(0.5 * a) + a)
    with pytest.raises(ValueError):
        confidence_radius(0.5, 0, 1, 3)


def test_first_update():
    state = EstimatorState(n_products=2, v_max=1.0)
    record_epoch(state, EpochOutcome((1,), {1: 2}, 3), n=2)
    assert state.epoch_index == 1
    assert state.offered_epochs.tolist() == [1, 0]
    assert state.mean[0] == 2.0
    assert np.isnan(state.mean[1])
    # the radius at l = 1 is huge, so bounds stay trivial
    assert state.ucb[0] == 1.0 and state.lcb[0] == 0.0
    assert state.ucb[1] == 1.0 and state.lcb[1] == 0.0


def test_bounds_ordered_and_shrink():
    state = EstimatorState(n_products=1, v_max=1.0)
    rng = np.random.default_rng(1)
    widths = []
    # with the 48 log(.) radius the bounds stay trivial for thousands of epochs
    for c in rng.geometric(1 / 1.5, size=40_000) - 1:
        record_epoch(state, EpochOutcome((1,), {1: int(c)}, int(c) + 1), n=1)
        widths.append(state.ucb[0] - state.lcb[0])
    assert 0 <= state.lcb[0] <= 0.5 <= state.ucb[0] <= 1.0
    assert widths[-1] < widths[20_000] < widths[100] == 1.0


def test_radius_shrinks_with_observations():
    r = [confidence_radius(0.5, t, 100, 5) for t in (1, 10, 100, 1000)]
    assert r == sorted(r, reverse=True)


def test_outcome_validation():
    with pytest.raises(ValueError):
        EpochOutcome((1,), {1: 2}, 2)
    with pytest.raises(ValueError):
        EpochOutcome((1,), {2: 1}, 2)


def test_zero_utility_product_has_zero_estimate():
    lengths, counts = simulate_fixed_epochs([0.0, 0.5], (1, 2), 2000, make_rng(0))
    assert counts[:, 0].sum() == 0


def test_epoch_statistics_geometric():
    # V(S) = 1.5: length ~ Geom(1/2.5), vhat_i has mean v_i and variance v_i(1+v_i)
    v = np.array([0.5, 1.0])
    n = 10_000
    lengths, counts = simulate_fixed_epochs(v, (1, 2), n, make_rng(7))
    big_v = 1.5
    assert abs(lengths.mean() - (1 + big_v)) <= 4 * math.sqrt(big_v * (1 + big_v) / n)
    assert lengths.var() == pytest.approx(big_v * (1 + big_v), rel=0.1)
    for j, vi in enumerate(v):
        assert abs(counts[:, j].mean() - vi) <= 4 * math.sqrt(vi * (1 + vi) / n)
        assert counts[:, j].var() == pytest.approx(vi * (1 + vi), rel=0.1)


def test_init_state_uses_vmax():
    inst = Instance([1.0, 1.0], [3, 3], [0.2, 0.3], 1, 10, v_max=0.6)
    s = init_state(inst)
    assert s.ucb.tolist() == [0.6, 0.6]
    assert s.lcb.tolist() == [0.0, 0.0]
