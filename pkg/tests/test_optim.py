import numpy as np
import pytest

from action_core.errors import ConfigError
from action_core.optim import SGD, StepSchedule, sgd_momentum_step
from action_core.tensor import Parameter


def test_momentum_step_matches_update_rule():
    p = Parameter(np.array([1.0, -2.0]))
    p.grad = np.array([0.5, 0.5])
    p.velocity = np.array([0.1, 0.0])
    sgd_momentum_step([p], lr=0.1, momentum=0.9, weight_decay=0.01)
    velocity = 0.9 * np.array([0.1, 0.0]) + np.array([0.5, 0.5]) + 0.01 * np.array([1.0, -2.0])
    np.testing.assert_allclose(p.velocity, velocity)
    np.testing.assert_allclose(p.data, np.array([1.0, -2.0]) - 0.1 * velocity)
    np.testing.assert_array_equal(p.grad, 0.0)


def test_sgd_descends_a_quadratic():
    p = Parameter(np.array([3.0]))
    optimizer = SGD([p], momentum=0.5, weight_decay=0.0)
    for _ in range(100):
        p.grad = 2 * p.data
        optimizer.step(0.1)
    assert abs(p.data[0]) < 1e-3


def test_step_schedule_divides_by_factor():
    schedule = StepSchedule(0.02, (20, 40), 10.0)
    assert schedule.lr_at(0) == pytest.approx(0.02)
    assert schedule.lr_at(19) == pytest.approx(0.02)
    assert schedule.lr_at(20) == pytest.approx(0.002)
    assert schedule.lr_at(45) == pytest.approx(0.0002)


@pytest.mark.parametrize("kwargs", [{"initial": 0.0}, {"initial": 0.1, "factor": 0.0}, {"initial": 0.1, "decay_epochs": (5, 3)}])
def test_step_schedule_validation(kwargs):
    with pytest.raises(ConfigError):
        StepSchedule(**kwargs)


def test_two_momentum_steps_accumulate():
    p = Parameter(np.array([0.0, 1.0]))
    g = np.array([1.0, -2.0])
    for _ in range(2):
        p.grad = g.copy()
        sgd_momentum_step([p], lr=0.1, momentum=0.9, weight_decay=0.0)
    np.testing.assert_allclose(p.data, np.array([0.0, 1.0]) - 0.1 * g * (1.0 + 1.9))


def test_parameter_groups_scale_the_learning_rate():
    base, gate = Parameter(np.array([1.0])), Parameter(np.array([1.0]))
    optimizer = SGD([base], momentum=0.0, weight_decay=0.0)
    optimizer.add_group([gate], lr_mult=10.0)
    assert optimizer.params == [base, gate]
    base.grad, gate.grad = np.array([1.0]), np.array([1.0])
    optimizer.step(0.01)
    np.testing.assert_allclose(base.data, [0.99])
    np.testing.assert_allclose(gate.data, [0.9])
    with pytest.raises(ConfigError):
        optimizer.add_group([], lr_mult=0.0)
