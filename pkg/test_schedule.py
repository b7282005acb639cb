"""Tests for the variance schedule and the DDIM step subsequence"""

import numpy as np
import pytest

from app.diffusion.schedule import make_linear_schedule, schedule_from_betas, subsequence
from app.errors import UserInputError


def test_single_step_schedule():
    schedule = make_linear_schedule(1, 0.5, 0.5)
    assert np.allclose(schedule.betas, [0.5])
    assert np.allclose(schedule.alpha_bars, [0.5])
    print("✓ Single-step schedule is correct")


def test_two_step_running_product():
    schedule = make_linear_schedule(2, 0.1, 0.3)
    assert np.allclose(schedule.alpha_bars, [0.9, 0.63])
    print("✓ Two-step alpha_bar is 0.9 * 0.7")


def test_long_schedule_reaches_noise():
    schedule = make_linear_schedule(1000, 1e-4, 0.02)
    assert schedule.alpha_bar(1000) < 0.01
    desk = make_linear_schedule(200, 5e-4, 0.1)
    assert desk.alpha_bar(200) < 0.01


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_alpha_bars_match_brute_force_product(seed):
    rng = np.random.default_rng(seed)
    betas = rng.uniform(1e-4, 0.3, size=rng.integers(1, 60))
    schedule = schedule_from_betas(betas)
    for t in range(1, len(betas) + 1):
        expected = 1.0
        for beta in betas[:t]:
            expected *= 1.0 - beta
        assert abs(schedule.alpha_bar(t) - expected) <= 1e-12 * expected


def test_schedule_is_monotone_and_read_only():
    schedule = make_linear_schedule(50, 1e-3, 0.05)
    assert np.all(np.diff(schedule.alpha_bars) < 0)
    assert np.all((schedule.alpha_bars > 0) & (schedule.alpha_bars < 1))
    assert schedule.alpha_bar(0) == 1.0
    with pytest.raises(ValueError):
        schedule.betas[0] = 0.5


@pytest.mark.parametrize(
    "num_steps, beta_start, beta_end",
    [(0, 1e-4, 0.02), (10, 0.0, 0.02), (10, 0.02, 0.01), (10, 1e-4, 1.0)],
)
def test_invalid_schedules_are_rejected(num_steps, beta_start, beta_end):
    with pytest.raises(UserInputError):
        make_linear_schedule(num_steps, beta_start, beta_end)


def test_step_outside_range_is_rejected():
    schedule = make_linear_schedule(10, 1e-3, 0.02)
    with pytest.raises(UserInputError):
        schedule.beta(0)
    with pytest.raises(UserInputError):
        schedule.alpha_bar(11)


def test_subsequence_examples():
    assert subsequence(make_linear_schedule(10, 1e-3, 0.02), 10) == list(range(1, 11))
    assert subsequence(make_linear_schedule(8, 1e-3, 0.02), 2) == [4, 8]

    steps = subsequence(make_linear_schedule(1000, 1e-4, 0.02), 200)
    assert len(steps) == 200
    assert steps[-1] == 1000
    assert all(b > a for a, b in zip(steps, steps[1:]))
    print("✓ Subsequences are evenly spaced and end at T")


@pytest.mark.parametrize("total, count", [(7, 3), (200, 50), (200, 199), (13, 1)])
def test_subsequence_properties(total, count):
    steps = subsequence(make_linear_schedule(total, 1e-3, 0.02), count)
    assert len(steps) == count
    assert steps[-1] == total
    assert steps[0] >= 1
    assert all(b > a for a, b in zip(steps, steps[1:]))


def test_subsequence_longer_than_schedule():
    schedule = make_linear_schedule(10, 1e-3, 0.02)
    with pytest.raises(UserInputError):
        subsequence(schedule, 11)
    with pytest.raises(UserInputError):
        subsequence(schedule, 0)
