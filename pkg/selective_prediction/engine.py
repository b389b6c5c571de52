"""Game engine, exact expectations, Monte Carlo and the variance oracle.

Exact expectations are taken in a fixed order: outer over source
outcomes (when the source is enumerable), inner over the predictor's
finite randomness.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import enum
import math
from typing import List, Optional, Tuple, Union

import numpy as np

from selective_prediction import utils
from selective_prediction.core import (
    GameResult, LossKind, LOSSES, NotEnumerableError, ObservationKind,
    ProtocolViolation, Sequence, TotalityViolation)
from selective_prediction.predictors import (
    DyadicPredictor, ERMPredictor, GeneralLengthPredictor, Predictor,
    SelectiveChoice, SelectivePredictor)
from selective_prediction.sequences import SequenceSource
from selective_prediction.statistics import (
    emd_rows, ModelClass, StatisticFamily)

logger = utils.get_named_logger("Engine")

Target = Union[StatisticFamily, ModelClass]

Z_95 = 1.96


def _loss_kind(loss) -> LossKind:
    return loss if isinstance(loss, LossKind) else LossKind(loss)


def _realize(seq: Sequence, commitment, target: Target, loss: LossKind):
    window = seq.window(commitment.t, commitment.m)
    if loss is LossKind.excess_risk:
        if not isinstance(target, ModelClass):
            raise ValueError("Excess risk is measured against a ModelClass.")
        if commitment.model is None:
            raise ProtocolViolation(
                "Excess risk needs a model payload, got a value.")
        if not 0 <= commitment.model < target.size:
            raise ProtocolViolation(
                f"Model index {commitment.model} outside the class of "
                f"size {target.size}.")
        risks = target.average_losses(window)
        chosen, best = float(risks[commitment.model]), float(risks.min())
        return chosen, best, LOSSES[loss](chosen, best)
    if not isinstance(target, StatisticFamily):
        raise ValueError(f"{loss.value} loss needs a StatisticFamily.")
    if commitment.value is None:
        raise ProtocolViolation(
            f"{loss.value} loss needs a value payload, got a model.")
    actual = target(window)
    return commitment.value, actual, LOSSES[loss](commitment.value, actual)


def play(
        seq: Sequence, predictor: Predictor, target: Target,
        loss=LossKind.squared, rng=None, choice=None) -> GameResult:
    """Play one game, revealing observations one at a time.

    The predictor is handed ``seq.prefix(t)`` only, so it cannot read
    ``x_{t+1..n}`` before committing.
    """
    loss = _loss_kind(loss)
    n = seq.n
    if choice is None:
        choice = predictor.draw(n, rng)
    start = predictor.schedule(choice, n)
    start = 0 if start is None else max(0, min(start, n))
    for t in range(start, n):
        commitment = predictor.step(choice, seq.prefix(t), n)
        if commitment is None:
            continue
        if commitment.t != t or commitment.n != n:
            raise ProtocolViolation(
                f"{predictor.name} committed as (t={commitment.t}, "
                f"n={commitment.n}) after {t} of {n} observations.")
        predicted, actual, value = _realize(seq, commitment, target, loss)
        return GameResult(commitment, predicted, actual, value, loss, choice)
    raise TotalityViolation(
        f"{predictor.name} observed all {n} entries without committing.")


def exact_outcomes(
        seq: Sequence, predictor: Predictor, target: Target,
        loss=LossKind.squared) -> List[Tuple[float, GameResult]]:
    """Play every internal choice of the predictor deterministically."""
    support = predictor.support(seq.n)
    if support is None:
        raise NotEnumerableError(
            f"{predictor.name} does not expose its randomness.")
    return [
        (float(p), play(seq, predictor, target, loss, choice=choice))
        for choice, p in support]


def _unwrap(predictor):
    if isinstance(predictor, GeneralLengthPredictor):
        return predictor.inner
    return predictor


def _dyadic_expected_loss(values, predictor: DyadicPredictor, target, loss):
    """Expected loss of a dyadic predictor, every window at once.

    All ``(k_prime, t)`` of one scale are equally likely, so the expectation
    is the mean over scales of the per-scale mean loss.
    """
    x = values[:predictor.n]
    per_scale = []
    for k_prime in range(1, predictor.k + 1):
        half = 2 ** (k_prime - 1)
        if loss is LossKind.excess_risk:
            observed = predictor.model_class.block_average_losses(x, half)
            hidden = target.block_average_losses(x, half)[:, 1::2]
            chosen = np.argmin(observed[:, 0::2], axis=0)
            picked = hidden[chosen, np.arange(hidden.shape[1])]
            losses = picked - hidden.min(axis=0)
        else:
            predicted = predictor.family.evaluate_blocks(x, half)[0::2]
            actual = target.evaluate_blocks(x, half)[1::2]
            if loss is LossKind.squared:
                losses = (predicted - actual) ** 2
            else:
                losses = np.abs(predicted - actual)
        per_scale.append(float(np.mean(losses)))
    return math.fsum(per_scale) / predictor.k


def _has_fast_path(predictor, target, loss):
    inner = _unwrap(predictor)
    if isinstance(inner, SelectivePredictor):
        return loss is not LossKind.excess_risk \
            and isinstance(target, StatisticFamily)
    if isinstance(inner, ERMPredictor):
        return loss is LossKind.excess_risk and isinstance(target, ModelClass)
    return False


def exact_expected_loss(
        seq: Sequence, predictor: Predictor, target: Target,
        loss=LossKind.squared, fast: bool = True) -> float:
    """Expectation of the loss over the predictor's randomness.

    Selective and ERM predictors (wrapped or not) are evaluated scale by
    scale on whole block arrays when ``fast`` is set; every other
    predictor, or ``fast=False``, plays each choice through :func:`play`.
    """
    loss = _loss_kind(loss)
    if fast and _has_fast_path(predictor, target, loss):
        inner = _unwrap(predictor)
        if isinstance(predictor, GeneralLengthPredictor):
            predictor._check_n(seq.n)
        else:
            inner._check_n(seq.n)
        return _dyadic_expected_loss(seq.values, inner, target, loss)
    return math.fsum(
        p * r.loss for p, r in exact_outcomes(seq, predictor, target, loss))


def exact_source_expected_loss(
        source: SequenceSource, predictor: Predictor, target: Target,
        loss=LossKind.squared) -> float:
    """Double expectation over source outcomes, then predictor randomness."""
    return math.fsum(
        p * exact_expected_loss(seq, predictor, target, loss)
        for seq, p in source.enumerate())


def selective_emd_expectation(seq: Sequence, k: int) -> float:
    """Exact mean EMD between the two half windows of the dyadic draw."""
    x = seq.values[:2 ** k]
    per_scale = []
    for k_prime in range(1, k + 1):
        blocks = x.reshape(-1, 2 ** (k_prime - 1))
        per_scale.append(float(np.mean(emd_rows(blocks[0::2], blocks[1::2]))))
    return math.fsum(per_scale) / k


def mean_variance_bound(mu: float, k: int) -> float:
    """Refined squared-loss bound ``4 mu (1 - mu) / k`` for overall mean mu."""
    return 4.0 * mu * (1.0 - mu) / k


def concave_variance_bound(mu: float, k: int) -> float:
    """Squared-loss bound ``4 mu (2 - mu) / k`` for concave families.

    ``mu`` is the statistic of the whole sequence; the family must be
    concatenation-concave with values in ``[0, 1]``.
    """
    return 4.0 * mu * (2.0 - mu) / k


@dataclass(frozen=True)
class TrialRecord:
    """One row of a report.

    ``trial`` is -1 for rows of an exact expectation, whose ``probability``
    is the weight of the predictor choice.
    """

    trial: int
    loss: float
    probability: float
    k_prime: Optional[int] = None
    t: Optional[int] = None
    m: Optional[int] = None
    predicted: Optional[float] = None
    actual: Optional[float] = None
    payload: Optional[int] = None

    @classmethod
    def from_result(cls, trial, result: GameResult, probability):
        """Row for a played game."""
        choice = result.choice
        k_prime = choice.k_prime if isinstance(choice, SelectiveChoice) \
            else None
        c = result.commitment
        return cls(
            trial, result.loss, probability, k_prime, c.t, c.m,
            result.predicted, result.actual, c.model)


@dataclass
class TrialReport:
    """Aggregated losses of an experiment."""

    experiment: str
    n: int
    master_seed: int
    records: List[TrialRecord] = field(default_factory=list)
    exact: bool = False
    k: Optional[int] = None

    @property
    def trials(self) -> int:
        """Number of trials (rows in exact mode)."""
        return len(self.records)

    @property
    def losses(self) -> np.ndarray:
        """Per-row losses."""
        return np.array([r.loss for r in self.records], dtype=float)

    @property
    def mean(self) -> float:
        """Average loss, probability weighted in exact mode."""
        if not self.records:
            return float("nan")
        if self.exact:
            return math.fsum(r.probability * r.loss for r in self.records)
        return float(np.mean(self.losses))

    @property
    def ci_half_width(self) -> float:
        """95% normal-approximation half width; 0 in exact mode."""
        if self.exact or self.trials < 2:
            return 0.0
        return Z_95 * float(np.std(self.losses, ddof=1)) / math.sqrt(
            self.trials)

    def merge(self, other: "TrialReport") -> "TrialReport":
        """Combine two runs of the same experiment with disjoint trials."""
        if (self.experiment, self.n, self.master_seed, self.exact) != \
                (other.experiment, other.n, other.master_seed, other.exact):
            raise ValueError("Only runs of the same experiment can merge.")
        records = sorted(
            self.records + other.records, key=lambda r: r.trial)
        indices = [r.trial for r in records]
        if not self.exact and len(set(indices)) != len(indices):
            raise ValueError("Merged runs share trial indices.")
        if not self.exact:
            total = len(records)
            records = [
                TrialRecord(
                    r.trial, r.loss, 1.0 / total, r.k_prime, r.t, r.m,
                    r.predicted, r.actual, r.payload)
                for r in records]
        return TrialReport(
            self.experiment, self.n, self.master_seed, records, self.exact,
            self.k)


def _height(n):
    return utils.floor_log2(n) if utils.is_power_of_two(n) else None


def exact_report(
        seq: Sequence, predictor: Predictor, target: Target,
        loss=LossKind.squared, experiment: str = "",
        master_seed: int = 0) -> TrialReport:
    """Exact expectation as a report with one row per predictor choice."""
    rows = [
        TrialRecord.from_result(-1, result, p)
        for p, result in exact_outcomes(seq, predictor, target, loss)]
    return TrialReport(
        experiment, seq.n, master_seed, rows, exact=True, k=_height(seq.n))


def exact_source_report(
        source: SequenceSource, predictor: Predictor, target: Target,
        loss=LossKind.squared, experiment: str = "",
        master_seed: int = 0) -> TrialReport:
    """Exact double expectation with one row per source outcome.

    A single-outcome source is reported per predictor choice instead.
    """
    outcomes = source.enumerate()
    if len(outcomes) == 1:
        return exact_report(
            outcomes[0][0], predictor, target, loss, experiment, master_seed)
    rows = [
        TrialRecord(-1, exact_expected_loss(seq, predictor, target, loss), p)
        for seq, p in outcomes]
    logger.info(f"Evaluated {len(rows)} outcomes of {source.name} exactly.")
    return TrialReport(
        experiment, source.n, master_seed, rows, exact=True,
        k=getattr(source, "k", _height(source.n)))


def block_means(seq: Sequence, width: int, count: int) -> np.ndarray:
    """Means of the first ``count`` non-overlapping blocks of ``width``."""
    available = seq.n // width
    if available < count:
        logger.warning(
            f"Only {available} blocks of width {width} fit in {seq.n} "
            f"values; {count} requested.")
        count = available
    return seq.values[:count * width].reshape(count, width).mean(axis=1)


def monte_carlo(
        source: SequenceSource, predictor: Predictor, target: Target,
        loss=LossKind.squared, trials: int = 10_000, master_seed: int = 0,
        experiment: str = "", first_trial: int = 0, workers: int = 1,
        exact_over_predictor: bool = False) -> TrialReport:
    """Estimate the expected loss by independent trials.

    Trial ``i`` uses :func:`utils.trial_rng` ``(master_seed, i)`` both to
    sample the sequence and to draw the predictor's choice, so runs over
    disjoint trial ranges merge into the run over their union. With
    ``exact_over_predictor`` each trial records the exact expectation over
    the predictor's randomness on the sampled sequence instead.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1.")
    loss = _loss_kind(loss)
    weight = 1.0 / trials

    def _trial(i):
        rng = utils.trial_rng(master_seed, i)
        seq = source.sample(rng)
        if exact_over_predictor:
            value = exact_expected_loss(seq, predictor, target, loss)
            return TrialRecord(i, value, weight)
        return TrialRecord.from_result(
            i, play(seq, predictor, target, loss, rng), weight)

    indices = range(first_trial, first_trial + trials)
    logger.info(
        f"Running {trials} trials of {experiment or source.name} "
        f"with {workers} worker(s).")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_trial, indices))
    else:
        records = [_trial(i) for i in indices]
    report = TrialReport(
        experiment, source.n, master_seed, records, exact=False,
        k=getattr(source, "k", _height(source.n)))
    logger.info(
        f"Mean loss {report.mean:.6g} +- {report.ci_half_width:.3g}.")
    return report


class VarianceConstraint(enum.Enum):
    """Which windows a constrained predictor may pick."""

    all = "all"
    fixed_time = "fixed-time"
    fixed_window = "fixed-window"
    tail = "tail"


@dataclass
class VarianceCertificate:
    """Smallest conditional variance of a window mean given a prefix.

    ``argmin`` is ``(t, m, prefix_id)``; prefix ids number the distinct
    realisable prefixes of length ``t`` in lexicographic order.
    """

    n: int
    constraint: VarianceConstraint
    min_variance: float
    argmin: Tuple[int, int, int]
    outcomes: int
    entries: List[Tuple[int, int, int, float]] = field(default_factory=list)
    k: Optional[int] = None

    def passes(self, bound: float, tolerance: float = 1e-9) -> bool:
        """Whether the certified minimum reaches ``bound``."""
        return self.min_variance >= bound - tolerance


def _windows(n, constraint, t, m):
    if constraint is VarianceConstraint.all:
        return [(s, w) for s in range(n) for w in range(1, n - s + 1)]
    if constraint is VarianceConstraint.fixed_time:
        if t is None or not 0 <= t <= n - 1:
            raise ValueError(f"fixed-time needs t in [0, {n - 1}], got {t}.")
        return [(t, w) for w in range(1, n - t + 1)]
    if constraint is VarianceConstraint.fixed_window:
        if m is None or not 1 <= m <= n:
            raise ValueError(f"fixed-window needs m in [1, {n}], got {m}.")
        return [(s, m) for s in range(n - m + 1)]
    return [(s, n - s) for s in range(n)]


def _enumerated(outcomes):
    if isinstance(outcomes, SequenceSource):
        if outcomes.kind is not ObservationKind.real:
            raise ValueError("Window means need real observations.")
        return outcomes.enumerate_arrays()
    outcomes = list(outcomes)
    if not outcomes:
        raise NotEnumerableError("No outcomes to certify.")
    if any(s.kind is not ObservationKind.real for s, _ in outcomes):
        raise ValueError("Window means need real observations.")
    rows = np.stack([s.values for s, _ in outcomes])
    return rows, np.array([p for _, p in outcomes], dtype=float)


def min_conditional_variance(
        outcomes, constraint=VarianceConstraint.all, t: Optional[int] = None,
        m: Optional[int] = None,
        keep_entries: bool = True) -> VarianceCertificate:
    """Certify a lower bound on every predictor's expected squared loss.

    For each feasible window ``(t, m)`` and each realisable prefix
    ``x_1..x_t`` computes ``Var[mean(x_{t+1..t+m}) | prefix]`` under the
    enumerated joint law. No predictor restricted to these windows can do
    better than the minimum.
    """
    constraint = VarianceConstraint(constraint)
    rows, probs = _enumerated(outcomes)
    count, n = rows.shape
    windows = _windows(n, constraint, t, m)
    sums = np.concatenate([np.zeros((count, 1)), np.cumsum(rows, axis=1)], 1)
    best, argmin, entries = np.inf, None, []
    groups = {}
    for start, width in windows:
        if start not in groups:
            if start == 0:
                inverse = np.zeros(count, dtype=np.int64)
            else:
                _, inverse = np.unique(
                    rows[:, :start], axis=0, return_inverse=True)
                inverse = np.asarray(inverse).reshape(-1)
            size = int(inverse.max()) + 1
            groups[start] = (
                inverse, size, np.bincount(inverse, probs, size))
        inverse, size, mass = groups[start]
        means = (sums[:, start + width] - sums[:, start]) / width
        centre = np.bincount(inverse, probs * means, size) / mass
        spread = np.bincount(
            inverse, probs * (means - centre[inverse]) ** 2, size) / mass
        spread = np.maximum(spread, 0.0)
        g = int(np.argmin(spread))
        if spread[g] < best:
            best, argmin = float(spread[g]), (start, width, g)
        if keep_entries:
            entries.extend(
                (start, width, i, float(v)) for i, v in enumerate(spread))
    logger.info(
        f"Certified {len(windows)} windows over {count} outcomes "
        f"({constraint.value}): min variance {best:.6g} at {argmin}.")
    return VarianceCertificate(
        n, constraint, best, argmin, count, entries, _height(n))


def search_adversarial_sequence(
        predictor: Predictor, target: StatisticFamily, n: int, rng,
        loss=LossKind.squared, iterations: int = 200,
        start: Optional[np.ndarray] = None) -> Tuple[Sequence, float]:
    """Random hill climbing on the exact expected loss.

    Each move resets one aligned dyadic block to a constant, to fresh
    uniform values, or to bits; moves that do not lower the loss are kept.
    """
    rng = utils.as_rng(rng)
    loss = _loss_kind(loss)
    values = rng.random(n) if start is None else np.array(start, float)
    best = exact_expected_loss(Sequence(values), predictor, target, loss)
    top = utils.floor_log2(n)
    for _ in range(iterations):
        width = 2 ** int(rng.integers(0, top + 1))
        begin = width * int(rng.integers(0, n // width))
        proposal = values.copy()
        move = rng.integers(0, 3)
        if move == 0:
            proposal[begin:begin + width] = rng.random()
        elif move == 1:
            proposal[begin:begin + width] = rng.random(width)
        else:
            proposal[begin:begin + width] = rng.integers(0, 2, size=width)
        value = exact_expected_loss(
            Sequence(proposal), predictor, target, loss)
        if value >= best:
            values, best = proposal, value
    return Sequence(values), best
