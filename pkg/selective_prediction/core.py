"""Shared domain types, losses and errors.

The engine owns the full :class:`Sequence`; predictors only ever receive a
read-only view of the revealed prefix. Times are 0-based: predicting at
time ``t`` means ``t`` observations have been revealed.
"""
from dataclasses import dataclass, field
import enum
from typing import Any, Iterable, Optional, Union

import numpy as np

TOLERANCE = 1e-9


class SelectivePredictionError(Exception):
    """Base class for errors raised by this package."""


class InvalidObservationError(SelectivePredictionError, ValueError):
    """An observation, symbol or slice failed validation."""


class ProtocolViolation(SelectivePredictionError):
    """A predictor broke the rules of the prediction game."""


class TotalityViolation(ProtocolViolation):
    """A predictor observed the whole sequence without committing."""


class NotEnumerableError(SelectivePredictionError):
    """An exact oracle was asked for an enumeration that does not exist."""


class ResourceGuardError(SelectivePredictionError):
    """An enumeration would exceed its outcome guard."""


class UsageError(SelectivePredictionError, ValueError):
    """Unknown component name or inconsistent configuration."""


class ObservationKind(enum.Enum):
    """Observation variant."""

    real = 0
    symbol = 1


@dataclass(frozen=True)
class Observation:
    """A single observation, a unit-interval real or a symbol id."""

    value: Union[float, int]
    kind: ObservationKind = ObservationKind.real
    alphabet_size: Optional[int] = None

    def __post_init__(self):
        """Validate on construction, rejecting (never clamping)."""
        if self.kind is ObservationKind.real:
            v = float(self.value)
            if not 0.0 <= v <= 1.0:
                raise InvalidObservationError(
                    f"Real observation {self.value!r} outside [0, 1].")
        else:
            if int(self.value) != self.value or self.value < 0:
                raise InvalidObservationError(
                    f"Symbol {self.value!r} is not a non-negative integer.")
            if self.alphabet_size is not None \
                    and self.value >= self.alphabet_size:
                raise InvalidObservationError(
                    f"Symbol {self.value} outside alphabet of size "
                    f"{self.alphabet_size}.")


def _validate_values(values, kind, alphabet_size):
    if values.ndim != 1:
        raise InvalidObservationError("Sequences are one dimensional.")
    if len(values) == 0:
        raise InvalidObservationError("Sequences must be non-empty.")
    if kind is ObservationKind.real:
        if not np.all(np.isfinite(values)):
            raise InvalidObservationError("Non-finite real observation.")
        if values.min() < 0.0 or values.max() > 1.0:
            bad = values[(values < 0.0) | (values > 1.0)][0]
            raise InvalidObservationError(
                f"Real observation {bad!r} outside [0, 1].")
    else:
        if values.min() < 0:
            raise InvalidObservationError("Negative symbol id.")
        if alphabet_size is not None and values.max() >= alphabet_size:
            raise InvalidObservationError(
                f"Symbol {int(values.max())} outside alphabet of size "
                f"{alphabet_size}.")


@dataclass(frozen=True, eq=False)
class Sequence:
    """An immutable, validated, finite sequence of observations.

    All items share one variant. The backing array is read-only so slices
    handed to predictors cannot be written through.
    """

    values: np.ndarray
    kind: ObservationKind = ObservationKind.real
    alphabet_size: Optional[int] = None

    def __post_init__(self):
        """Validate and freeze the backing array."""
        dtype = np.float64 if self.kind is ObservationKind.real else np.int64
        raw = np.asarray(self.values)
        if self.kind is ObservationKind.symbol and raw.size \
                and not np.all(np.mod(raw, 1) == 0):
            raise InvalidObservationError("Symbol ids must be integers.")
        values = np.array(raw, dtype=dtype)
        _validate_values(values, self.kind, self.alphabet_size)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_reals(cls, values: Iterable[float]) -> "Sequence":
        """Create a real-valued sequence."""
        return cls(np.asarray(list(values), dtype=float))

    @classmethod
    def from_symbols(
            cls, values: Iterable[int],
            alphabet_size: Optional[int] = None) -> "Sequence":
        """Create a symbol sequence over ``range(alphabet_size)``."""
        return cls(
            np.asarray(list(values)), ObservationKind.symbol, alphabet_size)

    @classmethod
    def from_observations(cls, observations) -> "Sequence":
        """Create a sequence from validated :class:`Observation` items."""
        observations = list(observations)
        if not observations:
            raise InvalidObservationError("Sequences must be non-empty.")
        kinds = {o.kind for o in observations}
        if len(kinds) != 1:
            raise InvalidObservationError(
                "Observations mix real and symbol variants.")
        kind = kinds.pop()
        sizes = {o.alphabet_size for o in observations} - {None}
        alphabet = min(sizes) if sizes else None
        return cls(
            np.asarray([o.value for o in observations]), kind, alphabet)

    @property
    def n(self) -> int:
        """Length."""
        return len(self.values)

    def __len__(self):
        """Length."""
        return len(self.values)

    def __getitem__(self, item):
        """Index or slice the underlying values."""
        return self.values[item]

    def __iter__(self):
        """Iterate over the values."""
        return iter(self.values.tolist())

    def __eq__(self, other):
        """Value equality."""
        if not isinstance(other, Sequence):
            return NotImplemented
        return self.kind is other.kind and \
            np.array_equal(self.values, other.values)

    def __hash__(self):
        """Hash on the values."""
        return hash((self.kind, self.values.tobytes()))

    def __repr__(self):
        """Short representation."""
        body = ", ".join(f"{v:g}" for v in self.values[:8].tolist())
        more = ", ..." if self.n > 8 else ""
        return f"Sequence({self.kind.name}, n={self.n}, [{body}{more}])"

    def prefix(self, t: int) -> np.ndarray:
        """Return a read-only view of the first ``t`` observations."""
        return self.values[:t]

    def window(self, t: int, m: int) -> np.ndarray:
        """Return observations ``t+1 .. t+m`` (1-based), i.e. ``[t, t+m)``."""
        return self.values[t:t + m]


@dataclass(frozen=True)
class Commitment:
    """A prediction event.

    Made after ``t`` revealed observations, over the next ``m`` entries of
    a horizon-``n`` sequence; the payload is either a real prediction
    ``value`` or a ``model`` index.
    """

    t: int
    m: int
    n: int
    value: Optional[float] = None
    model: Optional[int] = None

    def __post_init__(self):
        """Enforce window bounds and payload exclusivity."""
        if not 0 <= self.t <= self.n - 1:
            raise ProtocolViolation(
                f"Prediction time t={self.t} outside [0, {self.n - 1}].")
        if not 1 <= self.m <= self.n - self.t:
            raise ProtocolViolation(
                f"Window length m={self.m} outside [1, {self.n - self.t}] "
                f"at t={self.t}.")
        if (self.value is None) == (self.model is None):
            raise ProtocolViolation(
                "A commitment carries exactly one of value or model.")

    @property
    def end(self) -> int:
        """Exclusive end index of the window."""
        return self.t + self.m


class LossKind(enum.Enum):
    """Loss applied to a commitment."""

    squared = "squared"
    absolute = "absolute"
    excess_risk = "excess_risk"


def squared_loss(predicted: float, actual: float) -> float:
    """Squared loss ``(predicted - actual)**2``."""
    return (predicted - actual) ** 2


def absolute_loss(predicted: float, actual: float) -> float:
    """Absolute loss ``|predicted - actual|``."""
    return abs(predicted - actual)


def excess_risk(chosen_risk: float, best_risk: float) -> float:
    """Risk of the chosen model above the best model's risk."""
    return chosen_risk - best_risk


LOSSES = {
    LossKind.squared: squared_loss,
    LossKind.absolute: absolute_loss,
    LossKind.excess_risk: excess_risk,
}


@dataclass(frozen=True)
class GameResult:
    """Outcome of one game.

    For value predictions ``predicted`` is the committed value and
    ``actual`` the realised statistic; for model predictions ``predicted``
    is the chosen model's risk on the window and ``actual`` the best risk.
    """

    commitment: Commitment
    predicted: float
    actual: float
    loss: float
    loss_kind: LossKind = LossKind.squared
    choice: Any = field(default=None, compare=False)

    def recompute(self) -> float:
        """Recompute the loss from the stored fields."""
        return LOSSES[self.loss_kind](self.predicted, self.actual)
