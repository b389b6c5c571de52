"""Prediction algorithms behind a step-wise interface.

A predictor draws its internal randomness (a *choice*) once per game,
then is stepped by the engine with the revealed prefix only. Returning
``None`` from :meth:`Predictor.step` means "reveal the next observation";
returning a :class:`~selective_prediction.core.Commitment` ends the game.
"""
import abc
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, List, Optional, Tuple

import numpy as np

from selective_prediction import utils
from selective_prediction.core import Commitment
from selective_prediction.statistics import (
    mean_family, ModelClass, StatisticFamily)

logger = utils.get_named_logger("Predictors")

Support = List[Tuple[Any, Fraction]]


class Predictor(abc.ABC):
    """A player of the selective prediction game."""

    name = "predictor"

    def support(self, n: int) -> Optional[Support]:
        """All internal choices with exact probabilities, if finite."""
        return None

    @abc.abstractmethod
    def draw(self, n: int, rng: np.random.Generator) -> Any:
        """Draw the internal choice for one game of horizon ``n``."""

    def schedule(self, choice, n: int) -> Optional[int]:
        """Time at which ``choice`` will commit, when known up front.

        The engine may skip stepping before this time; it still only ever
        passes the prefix.
        """
        return None

    @abc.abstractmethod
    def step(self, choice, prefix: np.ndarray, n: int) -> Optional[Commitment]:
        """React to the revealed prefix."""


@dataclass(frozen=True)
class SelectiveChoice:
    """Scale ``k_prime`` and aligned window start ``t``.

    The predictor observes through ``t + 2**(k_prime-1)`` and predicts the
    next ``2**(k_prime-1)`` entries from the previous ``2**(k_prime-1)``.
    """

    k_prime: int
    t: int

    @property
    def half(self) -> int:
        """Length of each half window."""
        return 2 ** (self.k_prime - 1)

    @property
    def commit_time(self) -> int:
        """Number of observations revealed when committing."""
        return self.t + self.half

    @property
    def window(self) -> Tuple[int, int]:
        """1-based inclusive bounds of the predicted window."""
        return self.commit_time + 1, self.t + 2 * self.half


class DyadicPredictor(Predictor):
    """Shared draw of a dyadic scale and an aligned offset.

    ``k_prime`` is uniform on ``1..k`` and ``t`` uniform on the multiples of
    ``2**k_prime`` in ``[0, n - 2**k_prime]``.
    """

    def __init__(self, k: int):
        """Init."""
        if k < 1:
            raise ValueError(f"Height k must be at least 1, got {k}.")
        self.k = k
        self.n = 2 ** k

    def _check_n(self, n):
        if n != self.n:
            raise ValueError(
                f"{self.name} is built for n = 2**{self.k} = {self.n}, got "
                f"{n}; wrap it with wrap_general_length.")

    def support(self, n):
        """Every ``(k_prime, t)`` with probability ``(1/k) 2**k_prime / n``."""
        self._check_n(n)
        choices = []
        for k_prime in range(1, self.k + 1):
            span = 2 ** k_prime
            p = Fraction(1, self.k) * Fraction(span, n)
            for t in range(0, n, span):
                choices.append((SelectiveChoice(k_prime, t), p))
        return choices

    def draw(self, n, rng):
        """Draw ``(k_prime, t)``."""
        self._check_n(n)
        k_prime = int(rng.integers(1, self.k + 1))
        span = 2 ** k_prime
        t = span * int(rng.integers(0, n // span))
        return SelectiveChoice(k_prime, t)

    def schedule(self, choice, n):
        """Commit once the first half window has been seen."""
        return choice.commit_time

    def step(self, choice, prefix, n):
        """Commit at the scheduled time, predicting from the first half."""
        if len(prefix) < choice.commit_time:
            return None
        observed = prefix[choice.t:choice.commit_time]
        return self._commit(len(prefix), choice.half, n, observed)

    @abc.abstractmethod
    def _commit(self, t, m, n, observed) -> Commitment:
        """Build the commitment from the observed half window."""


class SelectivePredictor(DyadicPredictor):
    """Predict the statistic of the next half window from the last one."""

    name = "selective"

    def __init__(self, family: StatisticFamily, k: int):
        """Init."""
        super().__init__(k)
        self.family = family

    def _commit(self, t, m, n, observed):
        return Commitment(t, m, n, value=self.family(observed))


class ERMPredictor(DyadicPredictor):
    """Predict that the empirical risk minimiser of the last half window
    also minimises the risk on the next one.

    Ties go to the smallest model index.
    """

    name = "erm"

    def __init__(self, model_class: ModelClass, k: int):
        """Init."""
        super().__init__(k)
        self.model_class = model_class

    def _commit(self, t, m, n, observed):
        risks = self.model_class.average_losses(observed)
        return Commitment(t, m, n, model=int(np.argmin(risks)))


class GeneralLengthPredictor(Predictor):
    """Run a ``2**k`` predictor on the first ``2**floor(log2 n)`` entries."""

    def __init__(self, inner: DyadicPredictor, n: int):
        """Init."""
        if n < 2:
            raise ValueError(f"General length needs n >= 2, got {n}.")
        if inner.k != utils.floor_log2(n):
            raise ValueError(
                f"Length {n} needs a predictor for k = "
                f"{utils.floor_log2(n)}, got k = {inner.k}.")
        self.inner = inner
        self.n = n
        self.name = inner.name

    def _check_n(self, n):
        if n != self.n:
            raise ValueError(f"Wrapped for n = {self.n}, got {n}.")

    def support(self, n):
        """Support of the inner predictor."""
        self._check_n(n)
        return self.inner.support(self.inner.n)

    def draw(self, n, rng):
        """Draw as the inner predictor."""
        self._check_n(n)
        return self.inner.draw(self.inner.n, rng)

    def schedule(self, choice, n):
        """As the inner predictor."""
        return self.inner.schedule(choice, self.inner.n)

    def step(self, choice, prefix, n):
        """Delegate, then restate the commitment over the full horizon."""
        if len(prefix) > self.inner.n:
            prefix = prefix[:self.inner.n]
        commitment = self.inner.step(choice, prefix, self.inner.n)
        if commitment is None:
            return None
        return Commitment(
            commitment.t, commitment.m, n,
            value=commitment.value, model=commitment.model)


def selective_predictor(
        family: Optional[StatisticFamily] = None, k: int = 1
        ) -> SelectivePredictor:
    """Selective prediction for ``n = 2**k`` (mean family by default)."""
    return SelectivePredictor(family or mean_family(), k)


def erm_predictor(model_class: ModelClass, k: int) -> ERMPredictor:
    """Empirical risk minimisation for ``n = 2**k``."""
    return ERMPredictor(model_class, k)


def wrap_general_length(p: DyadicPredictor, n: int) -> Predictor:
    """Adapt a ``2**k`` predictor to length ``n``; identity when ``n = 2**k``."""
    if n == getattr(p, "n", None):
        return p
    return GeneralLengthPredictor(p, n)


def _prefix_mean(values) -> float:
    return float(np.mean(values)) if len(values) else 0.5


class FixedTimePredictor(Predictor):
    """Always commit at time ``t`` to the mean of the whole remainder."""

    name = "fixed-time"

    def __init__(self, t: int):
        """Init."""
        if t < 0:
            raise ValueError(f"Prediction time must be non-negative, got {t}.")
        self.t = t

    def _check_n(self, n):
        if self.t > n - 1:
            raise ValueError(f"t={self.t} is infeasible for n={n}.")

    def support(self, n):
        """Deterministic."""
        self._check_n(n)
        return [(self.t, Fraction(1))]

    def draw(self, n, rng):
        """No randomness."""
        self._check_n(n)
        return self.t

    def schedule(self, choice, n):
        """Fixed."""
        return choice

    def step(self, choice, prefix, n):
        """Prefix mean, 1/2 on an empty prefix."""
        if len(prefix) < choice:
            return None
        return Commitment(
            len(prefix), n - len(prefix), n, value=_prefix_mean(prefix))


class FixedWindowPredictor(Predictor):
    """Commit at a uniformly random feasible time with window ``m``.

    Predicts the mean of the last ``min(t, m)`` observations.
    """

    name = "fixed-window"

    def __init__(self, m: int):
        """Init."""
        if m < 1:
            raise ValueError(f"Window length must be positive, got {m}.")
        self.m = m

    def _check_n(self, n):
        if self.m > n:
            raise ValueError(f"m={self.m} is infeasible for n={n}.")

    def support(self, n):
        """Uniform over ``t in [0, n - m]``."""
        self._check_n(n)
        count = n - self.m + 1
        return [(t, Fraction(1, count)) for t in range(count)]

    def draw(self, n, rng):
        """Uniform time."""
        self._check_n(n)
        return int(rng.integers(0, n - self.m + 1))

    def schedule(self, choice, n):
        """Fixed by the choice."""
        return choice

    def step(self, choice, prefix, n):
        """Mean of the most recent observations."""
        if len(prefix) < choice:
            return None
        t = len(prefix)
        recent = prefix[t - min(t, self.m):]
        return Commitment(t, self.m, n, value=_prefix_mean(recent))


class TailWindowPredictor(Predictor):
    """Commit at a uniformly random time to the mean of the remainder."""

    name = "tail-window"

    def support(self, n):
        """Uniform over ``t in [0, n - 1]``."""
        return [(t, Fraction(1, n)) for t in range(n)]

    def draw(self, n, rng):
        """Uniform time."""
        return int(rng.integers(0, n))

    def schedule(self, choice, n):
        """Fixed by the choice."""
        return choice

    def step(self, choice, prefix, n):
        """Prefix mean, 1/2 on an empty prefix."""
        if len(prefix) < choice:
            return None
        t = len(prefix)
        return Commitment(t, n - t, n, value=_prefix_mean(prefix))


def constrained_predictors(kind: str, param: Optional[int] = None) -> Predictor:
    """Baseline predictors that give up one axis of selectivity.

    ``kind`` is ``fixed-time`` (``param`` = t), ``fixed-window``
    (``param`` = m) or ``tail-window``.
    """
    if kind == "fixed-time":
        if param is None:
            raise ValueError("fixed-time needs a prediction time.")
        return FixedTimePredictor(param)
    if kind == "fixed-window":
        if param is None:
            raise ValueError("fixed-window needs a window length.")
        return FixedWindowPredictor(param)
    if kind == "tail-window":
        return TailWindowPredictor()
    raise ValueError(f"Unknown constrained predictor: {kind}")
