"""Test functions in predictors."""
from fractions import Fraction

import numpy as np
import pytest

from selective_prediction.core import Commitment
from selective_prediction.predictors import (
    constrained_predictors, erm_predictor, FixedTimePredictor,
    FixedWindowPredictor, GeneralLengthPredictor, SelectiveChoice,
    selective_predictor, TailWindowPredictor, wrap_general_length)
from selective_prediction.sequences import erm_hard_instance
from selective_prediction.statistics import ModelClass


@pytest.mark.parametrize("k", [1, 2, 3, 6, 10])
def test_support_sums_to_one(k):
    """Test exact probabilities of the (k', t) draw."""
    support = selective_predictor(k=k).support(2 ** k)
    assert sum(p for _, p in support) == Fraction(1)
    assert len(support) == sum(2 ** (k - j) for j in range(1, k + 1))


@pytest.mark.parametrize("k", [1, 4, 7, 10])
def test_support_windows_in_bounds(k):
    """Test every window lies inside the sequence."""
    n = 2 ** k
    for choice, _ in selective_predictor(k=k).support(n):
        start, end = choice.window
        assert 1 <= start <= end <= n
        assert choice.t % (2 ** choice.k_prime) == 0
        assert end - start + 1 == choice.half


def test_selective_choice():
    """Test choice geometry."""
    choice = SelectiveChoice(3, 8)
    assert choice.half == 4
    assert choice.commit_time == 12
    assert choice.window == (13, 16)


def test_draw_deterministic():
    """Test identical streams give identical choices."""
    p = selective_predictor(k=8)
    a = p.draw(256, np.random.default_rng(4))
    b = p.draw(256, np.random.default_rng(4))
    assert a == b
    assert a in [c for c, _ in p.support(256)]


def test_wrong_length():
    """Test dyadic predictors only accept their own length."""
    p = selective_predictor(k=3)
    with pytest.raises(ValueError):
        p.support(12)
    with pytest.raises(ValueError):
        selective_predictor(k=0)


def test_selective_k1_step():
    """Test k=1 predicts the second entry to equal the first."""
    p = selective_predictor(k=1)
    choice = SelectiveChoice(1, 0)
    assert p.step(choice, np.array([]), 2) is None
    assert p.step(choice, np.array([0.3]), 2) == Commitment(
        1, 1, 2, value=0.3)


def test_erm_tie_break():
    """Test ties go to the smallest model index."""
    p = erm_predictor(ModelClass.from_tables([(0.5, 0.5), (0.5, 0.5)]), 1)
    commitment = p.step(SelectiveChoice(1, 0), np.array([0]), 2)
    assert commitment.model == 0


def test_erm_hard_instance_choice():
    """Test ERM outputs the model matching the scale."""
    model_class, seq = erm_hard_instance(4)
    p = erm_predictor(model_class, 4)
    for choice, _ in p.support(seq.n):
        commitment = p.step(choice, seq.prefix(choice.commit_time), seq.n)
        assert commitment.model == choice.k_prime - 1
        risks = model_class.average_losses(
            seq.values[choice.t:choice.commit_time])
        assert risks[commitment.model] == risks.min()


def test_wrap_general_length():
    """Test wrapping picks k = floor(log2 n)."""
    p = selective_predictor(k=3)
    assert wrap_general_length(p, 8) is p
    wrapped = wrap_general_length(p, 12)
    assert isinstance(wrapped, GeneralLengthPredictor)
    assert wrapped.inner.n == 8
    assert len(wrapped.support(12)) == len(p.support(8))
    with pytest.raises(ValueError):
        wrap_general_length(p, 16)
    with pytest.raises(ValueError):
        GeneralLengthPredictor(selective_predictor(k=1), 1)


def test_wrapped_commitment_horizon():
    """Test wrapped commitments are restated over the full horizon."""
    wrapped = wrap_general_length(selective_predictor(k=3), 12)
    choice = SelectiveChoice(3, 0)
    commitment = wrapped.step(choice, np.zeros(4), 12)
    assert commitment == Commitment(4, 4, 12, value=0.0)


def test_fixed_time_step():
    """Test the fixed-time baseline predicts the prefix mean."""
    p = FixedTimePredictor(2)
    assert p.step(2, np.array([0.0]), 4) is None
    assert p.step(2, np.array([0.0, 0.0]), 4) == Commitment(
        2, 2, 4, value=0.0)
    assert FixedTimePredictor(0).step(0, np.array([]), 4).value == 0.5


def test_fixed_window_step():
    """Test the fixed-window baseline uses the last m observations."""
    p = FixedWindowPredictor(2)
    commitment = p.step(3, np.array([1.0, 0.0, 0.5]), 5)
    assert commitment == Commitment(3, 2, 5, value=0.25)
    assert len(p.support(5)) == 4
    assert p.step(0, np.array([]), 5).value == 0.5


def test_tail_window_step():
    """Test the tail baseline predicts the whole remainder."""
    p = TailWindowPredictor()
    assert p.step(1, np.array([1.0]), 4) == Commitment(1, 3, 4, value=1.0)
    assert sum(q for _, q in p.support(4)) == 1


@pytest.mark.parametrize(
    "kind,param,n",
    [("fixed-time", 4, 4), ("fixed-window", 5, 4)],
)
def test_constrained_infeasible(kind, param, n):
    """Test infeasible parameters are rejected."""
    p = constrained_predictors(kind, param)
    with pytest.raises(ValueError):
        p.support(n)


@pytest.mark.parametrize(
    "kind,param",
    [("fixed-time", None), ("fixed-window", None), ("oracle", 1),
     ("fixed-time", -1), ("fixed-window", 0)],
)
def test_constrained_rejects(kind, param):
    """Test unknown kinds and missing parameters."""
    with pytest.raises(ValueError):
        constrained_predictors(kind, param)
