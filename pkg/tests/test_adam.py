import numpy as np
import pytest

from icumort.adam import AdamState, adam_step
from icumort.errors import TrainingError


def test_first_step_closed_form():
    # With zero moments and unit gradient, bias corrections cancel at t=1 and
    # the update is -lr / (1 + eps) within eps.
    params = {"w": np.array([0.0])}
    state = AdamState(lr=0.001)
    adam_step(params, {"w": np.array([1.0])}, state)
    assert state.t == 1
    assert params["w"][0] == pytest.approx(-0.001, rel=1e-6)


def test_zero_gradient_is_a_no_op():
    params = {"w": np.array([1.5, -2.0])}
    state = AdamState()
    adam_step(params, {"w": np.zeros(2)}, state)
    assert np.array_equal(params["w"], np.array([1.5, -2.0]))


def test_identical_histories_give_identical_updates():
    params = {"a": np.array([1.0]), "b": np.array([1.0])}
    state = AdamState(lr=0.01)
    for _ in range(5):
        adam_step(params, {"a": np.array([0.3]), "b": np.array([0.3])}, state)
    assert params["a"][0] == params["b"][0]


def test_elementwise_purity():
    # A vector parameter updates exactly like two scalars with the same grads.
    vec = {"w": np.array([1.0, -1.0])}
    state_v = AdamState(lr=0.05)
    scalars = {"x": np.array([1.0]), "y": np.array([-1.0])}
    state_s = AdamState(lr=0.05)
    for _ in range(4):
        adam_step(vec, {"w": np.array([0.2, -0.7])}, state_v)
        adam_step(scalars, {"x": np.array([0.2]), "y": np.array([-0.7])}, state_s)
    assert vec["w"][0] == scalars["x"][0]
    assert vec["w"][1] == scalars["y"][0]


def test_nonfinite_gradient_names_parameter():
    params = {"head.w": np.array([1.0])}
    with pytest.raises(TrainingError, match="head.w"):
        adam_step(params, {"head.w": np.array([np.nan])}, AdamState())


def test_step_counter_increments_before_update():
    state = AdamState()
    params = {"w": np.array([0.0])}
    adam_step(params, {"w": np.array([1.0])}, state)
    adam_step(params, {"w": np.array([1.0])}, state)
    assert state.t == 2
