"""Test functions in utils."""
import logging

import numpy as np
import pytest

from selective_prediction import utils


def test_get_named_logger():
    """Test logger names are padded for alignment."""
    logger = utils.get_named_logger("Run")
    assert logger.name == "Run       "
    assert utils.get_named_logger("AVeryLongLoggerName").name == "AVeryLongL"


@pytest.mark.parametrize(
    "argv,expected",
    [
        ([], logging.INFO),
        (["--debug"], logging.DEBUG),
        (["--quiet"], logging.WARNING),
    ],
)
def test_log_level(argv, expected):
    """Test the shared logging parser."""
    args = utils.log_level().parse_args(argv)
    assert args.log_level == expected


def test_trial_rng_reproducible():
    """Test per-trial generators depend only on seed and trial."""
    a = utils.trial_rng(7, 3).random(5)
    b = utils.trial_rng(7, 3).random(5)
    c = utils.trial_rng(7, 4).random(5)
    d = utils.trial_rng(8, 3).random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_trial_rng_negative():
    """Test negative trial indices are rejected."""
    with pytest.raises(ValueError):
        utils.trial_rng(0, -1)


def test_child_seed():
    """Test child seeds are stable 64 bit integers."""
    seed = utils.child_seed(42, 1)
    assert seed == utils.child_seed(42, 1)
    assert seed != utils.child_seed(42, 2)
    assert 0 <= seed < 2 ** 64


@pytest.mark.parametrize(
    "n,expected",
    [(0, False), (1, True), (2, True), (3, False), (8, True), (12, False)],
)
def test_is_power_of_two(n, expected):
    """Test power of two detection."""
    assert utils.is_power_of_two(n) is expected


@pytest.mark.parametrize(
    "n,expected",
    [(1, 0), (2, 1), (3, 1), (12, 3), (16, 4), (2 ** 20 + 1, 20)],
)
def test_floor_log2(n, expected):
    """Test floor of log2."""
    assert utils.floor_log2(n) == expected


def test_as_rng():
    """Test seeds and generators are both accepted."""
    rng = np.random.Generator(np.random.PCG64(1))
    assert utils.as_rng(rng) is rng
    np.testing.assert_array_equal(
        utils.as_rng(5).random(3), utils.as_rng(5).random(3))
