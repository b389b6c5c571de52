"""Statistic families, earth mover's distance and property checks."""
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy.optimize import linprog

from selective_prediction import utils
from selective_prediction.core import (
    InvalidObservationError, ObservationKind, TOLERANCE)

logger = utils.get_named_logger("Statistics")


def _as_reals(x, name="x"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) == 0:
        raise InvalidObservationError(f"{name} must be a non-empty slice.")
    if x.min() < 0.0 or x.max() > 1.0:
        raise InvalidObservationError(f"{name} has values outside [0, 1].")
    return x


@dataclass(frozen=True)
class StatisticFamily:
    """A length-indexed statistic ``f_m`` with capability flags.

    ``function`` evaluates a single slice of any length; ``block_function``,
    when present, evaluates every row of a 2D array of equal-length slices
    at once and must agree with ``function`` row by row.
    """

    name: str
    function: Callable[[np.ndarray], float] = field(repr=False)
    kind: ObservationKind = ObservationKind.real
    smoothness: Optional[float] = None
    concat_concave: bool = False
    value_range: Optional[Tuple[float, float]] = (0.0, 1.0)
    alphabet_size: Optional[int] = None
    block_function: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, repr=False)

    def __call__(self, values) -> float:
        """Evaluate ``f_m`` on a slice of length ``m >= 1``."""
        values = np.asarray(values)
        if values.ndim != 1 or len(values) == 0:
            raise InvalidObservationError(
                f"{self.name} needs a non-empty one dimensional slice.")
        return float(self.function(values))

    def evaluate_blocks(self, values, width: int) -> np.ndarray:
        """Evaluate on consecutive non-overlapping blocks of ``width``."""
        values = np.asarray(values)
        if width < 1 or len(values) % width:
            raise ValueError(
                f"Cannot split {len(values)} values into blocks of {width}.")
        blocks = values.reshape(-1, width)
        if self.block_function is not None:
            return np.asarray(self.block_function(blocks), dtype=float)
        return np.array([self.function(b) for b in blocks], dtype=float)


def arithmetic_mean(x) -> float:
    """Mean of a non-empty slice of unit-interval reals."""
    return float(np.mean(_as_reals(x)))


def emd_rows(x_rows: np.ndarray, y_rows: np.ndarray) -> np.ndarray:
    """Integrate the gap between empirical CDFs, row by row.

    The breakpoints of both CDFs are merged by sorting the concatenated
    row; between consecutive breakpoints both CDFs are constant, so each
    segment contributes ``|F_x - F_y| * width``. Ties create zero-width
    segments, so their order does not matter.
    """
    a, b = x_rows.shape[1], y_rows.shape[1]
    values = np.concatenate([x_rows, y_rows], axis=1)
    labels = np.concatenate([
        np.ones(x_rows.shape), np.zeros(y_rows.shape)], axis=1)
    order = np.argsort(values, axis=1, kind="stable")
    values = np.take_along_axis(values, order, axis=1)
    labels = np.take_along_axis(labels, order, axis=1)
    cdf_x = np.cumsum(labels, axis=1)[:, :-1] / a
    cdf_y = np.cumsum(1.0 - labels, axis=1)[:, :-1] / b
    widths = np.diff(values, axis=1)
    return np.sum(np.abs(cdf_x - cdf_y) * widths, axis=1)


def emd(x, y) -> float:
    """Earth mover's distance between the uniform measures on ``x`` and ``y``.

    Lengths may differ.
    """
    x = _as_reals(x)
    y = _as_reals(y, "y")
    return float(emd_rows(x[None, :], y[None, :])[0])


def emd_sorted(x, y) -> float:
    """Equal-length earth mover's distance, ``mean |sort(x) - sort(y)|``."""
    x = _as_reals(x)
    y = _as_reals(y, "y")
    if len(x) != len(y):
        raise ValueError("emd_sorted needs equal lengths.")
    return float(np.mean(np.abs(np.sort(x) - np.sort(y))))


def transport_emd(x, y) -> float:
    """Earth mover's distance by solving the transport linear program."""
    x = _as_reals(x)
    y = _as_reals(y, "y")
    a, b = len(x), len(y)
    cost = np.abs(x[:, None] - y[None, :]).ravel()
    rows = np.kron(np.eye(a), np.ones((1, b)))
    cols = np.kron(np.ones((1, a)), np.eye(b))
    res = linprog(
        cost, A_eq=np.vstack([rows, cols]),
        b_eq=np.concatenate([np.full(a, 1.0 / a), np.full(b, 1.0 / b)]),
        bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"Transport LP failed: {res.message}")
    return float(res.fun)


def plugin_mean_family(
        g: Callable[[np.ndarray], np.ndarray], lipschitz: float,
        name: str = "plugin",
        value_range: Tuple[float, float] = (0.0, 1.0)) -> StatisticFamily:
    """Family ``f_m(x) = mean(g(x_i))`` for a pointwise map ``g``.

    If ``g`` is ``L_g``-Lipschitz the family is ``L_g``-smooth; the caller
    declares ``L_g``, it is never inferred. The family is additive under
    concatenation and so concatenation-concave with equality.
    """
    if lipschitz < 0:
        raise ValueError("Lipschitz constant must be non-negative.")

    def _f(values):
        return np.mean(g(_as_reals(values)))

    def _blocks(blocks):
        return np.mean(g(blocks), axis=1)

    return StatisticFamily(
        name=name, function=_f, smoothness=float(lipschitz),
        concat_concave=True, value_range=value_range, block_function=_blocks)


def _identity(x):
    return x


def _distance_to_half(x):
    return np.abs(x - 0.5)


# name -> (g, Lipschitz constant, output range)
PLUGIN_MAPS: Dict[str, tuple] = {
    "mean": (_identity, 1.0, (0.0, 1.0)),
    "square": (np.square, 2.0, (0.0, 1.0)),
    "distance-to-half": (_distance_to_half, 1.0, (0.0, 0.5)),
}


def plugin_family(name: str) -> StatisticFamily:
    """Return one of the shipped plug-in mean families by name."""
    try:
        g, lipschitz, value_range = PLUGIN_MAPS[name]
    except KeyError:
        raise ValueError(f"Unknown plug-in family: {name}") from None
    return plugin_mean_family(g, lipschitz, name, value_range)


def mean_family() -> StatisticFamily:
    """The arithmetic mean, 1-smooth and concatenation-concave."""
    return plugin_family("mean")


def threshold_family(threshold: float = 0.5) -> StatisticFamily:
    """Indicator that the mean reaches ``threshold``; not smooth for any L."""

    def _f(values):
        return float(np.mean(_as_reals(values)) >= threshold)

    def _blocks(blocks):
        return (np.mean(blocks, axis=1) >= threshold).astype(float)

    return StatisticFamily(
        name="threshold", function=_f, smoothness=None,
        concat_concave=False, value_range=(0.0, 1.0), block_function=_blocks)


DEFAULT_REFERENCE = (0.25, 0.75)


def emd_to_reference_family(ref=DEFAULT_REFERENCE) -> StatisticFamily:
    """Family ``f_m(x) = EMD(x, ref)``; 1-smooth by the triangle inequality."""
    ref = _as_reals(ref, "ref").copy()

    def _f(values):
        return emd(values, ref)

    def _blocks(blocks):
        blocks = np.asarray(blocks, dtype=float)
        refs = np.broadcast_to(ref, (blocks.shape[0], len(ref)))
        return emd_rows(blocks, refs)

    return StatisticFamily(
        name="emd-to-reference", function=_f, smoothness=1.0,
        concat_concave=False, value_range=(0.0, 1.0), block_function=_blocks)


@dataclass(frozen=True, eq=False)
class ModelClass:
    """A finite model class, each model a loss table over symbol ids."""

    tables: np.ndarray

    def __post_init__(self):
        """Validate the tables."""
        tables = np.array(self.tables, dtype=float)
        if tables.ndim != 2 or tables.shape[0] < 1 or tables.shape[1] < 1:
            raise ValueError(
                "A model class needs at least one non-empty loss table.")
        if tables.min() < 0.0 or tables.max() > 1.0:
            raise ValueError("Loss table entries must lie in [0, 1].")
        tables.setflags(write=False)
        object.__setattr__(self, "tables", tables)

    @classmethod
    def from_tables(cls, tables) -> "ModelClass":
        """Create from a list of equal-length loss tables."""
        return cls(np.asarray([list(t) for t in tables], dtype=float))

    @property
    def size(self) -> int:
        """Number of models."""
        return self.tables.shape[0]

    @property
    def alphabet_size(self) -> int:
        """Number of symbols covered by every table."""
        return self.tables.shape[1]

    def _check(self, symbols):
        symbols = np.asarray(symbols)
        if symbols.size == 0:
            raise InvalidObservationError("Empty symbol slice.")
        if not np.issubdtype(symbols.dtype, np.integer) and \
                np.any(symbols != np.floor(symbols)):
            raise InvalidObservationError(
                "Model classes score symbol ids, got non-integer values.")
        if symbols.min() < 0 or symbols.max() >= self.alphabet_size:
            raise InvalidObservationError(
                f"Symbol outside the table domain [0, {self.alphabet_size}).")
        return symbols.astype(np.int64, copy=False)

    def average_losses(self, symbols) -> np.ndarray:
        """Average loss of every model on a symbol slice."""
        return self.tables[:, self._check(symbols)].mean(axis=1)

    def block_average_losses(self, symbols, width: int) -> np.ndarray:
        """Average losses on consecutive blocks, shape ``(size, blocks)``."""
        symbols = self._check(symbols)
        if width < 1 or len(symbols) % width:
            raise ValueError(
                f"Cannot split {len(symbols)} symbols into blocks of {width}.")
        return self.tables[:, symbols.reshape(-1, width)].mean(axis=2)


def random_model_class(size: int, alphabet_size: int, rng) -> ModelClass:
    """Model class with i.i.d. uniform table entries."""
    rng = utils.as_rng(rng)
    return ModelClass(rng.random((size, alphabet_size)))


def learnability_family(model_class: ModelClass) -> StatisticFamily:
    """Minimum average loss over the models of the class."""

    def _f(values):
        return model_class.average_losses(values).min()

    def _blocks(blocks):
        blocks = model_class._check(blocks)
        return model_class.tables[:, blocks].mean(axis=2).min(axis=0)

    return StatisticFamily(
        name="learnability", function=_f, kind=ObservationKind.symbol,
        concat_concave=True, value_range=(0.0, 1.0),
        alphabet_size=model_class.alphabet_size, block_function=_blocks)


def max_of_means_family(model_class: ModelClass) -> StatisticFamily:
    """Maximum average loss over the models; not concatenation-concave.

    With tables ``(0, 1)`` and ``(1, 0)``: ``f((0)) = f((1)) = 1`` while
    ``f((0, 1)) = 0.5``.
    """

    def _f(values):
        return model_class.average_losses(values).max()

    return StatisticFamily(
        name="max-of-means", function=_f, kind=ObservationKind.symbol,
        concat_concave=False, value_range=(0.0, 1.0),
        alphabet_size=model_class.alphabet_size)


@dataclass
class ViolationReport:
    """Result of a randomized property check.

    ``worst_gap`` is the largest amount by which the inequality's
    required side exceeded the achieved side; it is a violation once it
    exceeds ``tolerance``.
    """

    prop: str
    checked: int
    violations: int
    worst_gap: float
    tolerance: float = TOLERANCE
    witness: Optional[tuple] = None

    @property
    def passed(self) -> bool:
        """No violations found."""
        return self.violations == 0


def _draw_slice(family, length, rng):
    if family.kind is ObservationKind.symbol:
        if family.alphabet_size is None:
            raise ValueError(
                f"{family.name} does not declare its alphabet size.")
        return rng.integers(0, family.alphabet_size, size=length)
    if rng.random() < 0.5:
        return rng.integers(0, 2, size=length).astype(float)
    return rng.random(length)


def check_concat_concave(
        family: StatisticFamily, trials: int, max_len: int = 8,
        rng_seed=0, tolerance: float = TOLERANCE) -> ViolationReport:
    """Test ``f(x, y) >= (m1 f(x) + m2 f(y)) / (m1 + m2)`` on random pairs."""
    if trials < 1:
        raise ValueError("trials must be at least 1.")
    rng = utils.as_rng(rng_seed)
    violations, worst, witness = 0, -np.inf, None
    for _ in range(trials):
        m1, m2 = rng.integers(1, max_len + 1, size=2)
        x = _draw_slice(family, m1, rng)
        y = _draw_slice(family, m2, rng)
        joined = family(np.concatenate([x, y]))
        weighted = (m1 * family(x) + m2 * family(y)) / (m1 + m2)
        gap = weighted - joined
        if gap > worst:
            worst = gap
            if gap > tolerance:
                witness = (x.tolist(), y.tolist())
        if gap > tolerance:
            violations += 1
    logger.debug(
        f"{family.name}: {violations}/{trials} concatenation violations.")
    return ViolationReport(
        "concatenation-concave", trials, violations, float(worst),
        tolerance, witness)


def check_smooth(
        family: StatisticFamily, lipschitz: float, trials: int,
        rng_seed=0, max_len: int = 8,
        tolerance: float = TOLERANCE) -> ViolationReport:
    """Test ``|f(x) - f(y)| <= L * EMD(x, y)`` on random equal-length pairs.

    Half of the pairs are independent draws, half are small perturbations
    of one another.
    """
    if family.kind is not ObservationKind.real:
        raise ValueError("Smoothness is defined for real observations only.")
    if trials < 1:
        raise ValueError("trials must be at least 1.")
    rng = utils.as_rng(rng_seed)
    violations, worst, witness = 0, -np.inf, None
    for _ in range(trials):
        m = int(rng.integers(1, max_len + 1))
        x = rng.random(m)
        if rng.random() < 0.5:
            y = rng.random(m)
        else:
            y = np.clip(x + rng.normal(0.0, 0.05, size=m), 0.0, 1.0)
        gap = abs(family(x) - family(y)) - lipschitz * emd(x, y)
        if gap > worst:
            worst = gap
            if gap > tolerance:
                witness = (x.tolist(), y.tolist())
        if gap > tolerance:
            violations += 1
    logger.debug(
        f"{family.name}: {violations}/{trials} smoothness violations "
        f"at L={lipschitz}.")
    return ViolationReport(
        f"{lipschitz}-smooth", trials, violations, float(worst),
        tolerance, witness)
