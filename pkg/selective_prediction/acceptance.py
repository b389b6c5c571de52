"""Acceptance checks run by the ``suite`` subcommand.

Each check returns :class:`CheckResult` items citing the bound it
verifies and the measured value. Checks draw from their own child
generator of the master seed, so the suite is reproducible bit for bit.
"""
from dataclasses import dataclass, replace
import math
import time
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from selective_prediction import utils
from selective_prediction.core import (
    LossKind, SelectivePredictionError, Sequence, TOLERANCE)
from selective_prediction.engine import (
    block_means, concave_variance_bound, exact_expected_loss,
    mean_variance_bound, min_conditional_variance, monte_carlo,
    search_adversarial_sequence, selective_emd_expectation,
    VarianceConstraint)
from selective_prediction.predictors import (
    constrained_predictors, erm_predictor, selective_predictor,
    wrap_general_length)
from selective_prediction.sequences import (
    AlternatingSource, anti_concentrated_source, block_adversary,
    check_sample_height, ConstantSource, erm_hard_instance, erm_hard_tables,
    fixed_time_adversary, halving_block_adversary, IIDBitsSource)
from selective_prediction.statistics import (
    check_concat_concave, check_smooth, emd, emd_sorted,
    emd_to_reference_family, learnability_family, max_of_means_family,
    mean_family, ModelClass, plugin_family, random_model_class,
    threshold_family, transport_emd)

logger = utils.get_named_logger("Acceptance")

FIGURE_SCALES = (2 ** 10, 2 ** 15)
FIGURE_BLOCKS = 30
# sample std of block means that separates the two regimes
ANTI_CONCENTRATION_STD = 0.05
CONCENTRATION_STD = 0.01
CI_SLACK = 3.0
SYMBOL_ALPHABET = 8


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one acceptance check."""

    name: str
    relation: str
    measured: float
    bound: float
    passed: bool
    ci: float = 0.0

    def line(self) -> str:
        """PASS/FAIL line citing the bound."""
        status = "PASS" if self.passed else "FAIL"
        text = f"{status} {self.name}: {self.measured:.6g} " \
            f"{self.relation} {self.bound:.6g}"
        if self.ci:
            text += f" (ci +-{self.ci:.2g})"
        return text


def upper(name, measured, bound, tolerance=TOLERANCE) -> CheckResult:
    """Check ``measured <= bound`` up to ``tolerance``."""
    return CheckResult(
        name, "<=", float(measured), float(bound),
        bool(measured <= bound + tolerance))


def lower(name, measured, bound, tolerance=TOLERANCE, ci=0.0) -> CheckResult:
    """Check ``measured >= bound`` up to ``tolerance`` and CI slack."""
    return CheckResult(
        name, ">=", float(measured), float(bound),
        bool(measured >= bound - tolerance - CI_SLACK * ci), ci)


@dataclass(frozen=True)
class SuiteScale:
    """Sizes of every check; :data:`FULL` is the reference scale."""

    heights: Tuple[int, ...] = (4, 8, 12, 16)
    protocol_height: int = 4
    random_sequences: int = 200
    tree_samples: int = 200
    climbed: int = 50
    climb_iterations: int = 60
    tight_height: int = 16
    general_heights: Tuple[int, ...] = (4, 8, 12, 16)
    smooth_heights: Tuple[int, ...] = (8, 12, 16)
    smooth_climbed: int = 10
    smooth_climb_iterations: int = 30
    concave_heights: Tuple[int, ...] = (8, 12)
    concave_sizes: Tuple[int, ...] = (2, 8, 32)
    symbol_sequences: int = 200
    lower_heights: Tuple[int, ...] = (8, 12)
    lower_trials: int = 20_000
    property_trials: int = 10_000
    emd_fuzz: int = 10_000
    transport_fuzz: int = 500
    selectivity_lengths: Tuple[int, ...] = (8, 16)
    witness_trials: int = 2_000
    erm_sizes: Tuple[int, ...] = (2, 4, 8)
    erm_heights: Tuple[int, ...] = (8, 12)
    erm_sequences: int = 50
    erm_hard_heights: Tuple[int, ...] = (3, 6, 10)
    figure_k: int = 20


FULL = SuiteScale()

QUICK = replace(
    FULL, heights=(4, 8), random_sequences=10, tree_samples=10, climbed=2,
    climb_iterations=10, tight_height=8, general_heights=(4, 8),
    smooth_heights=(4, 8), smooth_climbed=1, smooth_climb_iterations=5,
    concave_heights=(4,), concave_sizes=(2, 8), symbol_sequences=10,
    lower_heights=(8,), lower_trials=1_000, property_trials=500,
    emd_fuzz=500, transport_fuzz=20, selectivity_lengths=(8,),
    witness_trials=500, erm_sizes=(2, 4), erm_heights=(4,), erm_sequences=10,
    erm_hard_heights=(3, 6))


def _real_suite(n, scale, rng, predictor, target, loss, climbed, iterations):
    """Structured, random, anti-concentrated and hill-climbed sequences."""
    tree = anti_concentrated_source(utils.floor_log2(n - 1) + 1)
    sequences = [AlternatingSource(n).sample(), ConstantSource(n).sample()]
    sequences += [
        Sequence(rng.random(n)) for _ in range(scale.random_sequences)]
    sequences += [
        Sequence(tree.sample(rng).values[:n])
        for _ in range(scale.tree_samples)]
    values = [exact_expected_loss(s, predictor, target, loss)
              for s in sequences]
    for _ in range(climbed):
        seq, value = search_adversarial_sequence(
            predictor, target, n, rng, loss, iterations)
        sequences.append(seq)
        values.append(value)
    return sequences, np.array(values)


def check_mean_upper(scale: SuiteScale, rng, seed) -> List[CheckResult]:
    """Selective mean predictor stays below ``1/k`` and ``4 mu (1-mu)/k``."""
    results = []
    family = mean_family()
    for k in scale.heights:
        predictor = selective_predictor(family, k)
        seqs, values = _real_suite(
            2 ** k, scale, rng, predictor, family, LossKind.squared,
            scale.climbed, scale.climb_iterations)
        results.append(upper(f"mean-upper k={k}", values.max(), 1.0 / k))
        gaps = [v - mean_variance_bound(float(np.mean(s.values)), k)
                for s, v in zip(seqs, values)]
        results.append(upper(f"mean-refined k={k}", max(gaps), 0.0))
    results.append(_protocol_cross_check(scale, rng))
    return results


def _protocol_cross_check(scale, rng) -> CheckResult:
    """Vectorised expectation must agree with games played step by step."""
    k = scale.protocol_height
    family = mean_family()
    predictor = selective_predictor(family, k)
    sequences = [AlternatingSource(2 ** k).sample()] + [
        Sequence(rng.random(2 ** k)) for _ in range(3)]
    name = f"mean-protocol k={k}"
    try:
        gap = max(
            abs(exact_expected_loss(s, predictor, family) -
                exact_expected_loss(s, predictor, family, fast=False))
            for s in sequences)
    except SelectivePredictionError as e:
        logger.error(f"{name}: {e}")
        return CheckResult(name, "<=", math.nan, TOLERANCE, False)
    return upper(name, gap, TOLERANCE, tolerance=0.0)


def check_tightness(scale: SuiteScale, rng, seed) -> List[CheckResult]:
    """Alternating bits lose exactly ``1/k``."""
    family = mean_family()
    gaps = [
        abs(exact_expected_loss(
            AlternatingSource(2 ** k).sample(),
            selective_predictor(family, k), family) - 1.0 / k)
        for k in range(1, scale.tight_height + 1)]
    return [upper(
        f"alternating-tight k<={scale.tight_height}", max(gaps), 1e-12,
        tolerance=0.0)]


def check_mean_lower(scale: SuiteScale, rng, seed) -> List[CheckResult]:
    """Anti-concentrated sequences force ``1/(64k)``."""
    certificate = min_conditional_variance(
        anti_concentrated_source(3), keep_entries=False)
    results = [lower(
        "mean-lower-certificate k=3", certificate.min_variance, 1.0 / 192)]
    family = mean_family()
    for i, k in enumerate(scale.lower_heights):
        report = monte_carlo(
            anti_concentrated_source(k), selective_predictor(family, k),
            family, trials=scale.lower_trials,
            master_seed=utils.child_seed(seed, i),
            experiment="mean-lower", exact_over_predictor=True)
        results.append(lower(
            f"mean-lower k={k}", report.mean, 1.0 / (64 * k),
            ci=report.ci_half_width))
    return results


def check_general_length(scale: SuiteScale, rng, seed) -> List[CheckResult]:
    """Wrapped predictors on ``n = 3 * 2**(k-1)`` keep their bounds.

    The mean keeps ``1/floor(log2 n)``, the square family
    ``L/sqrt(floor(log2 n))`` and learnability ``4/floor(log2 n)``.
    """
    results = []
    mean, square = mean_family(), plugin_family("square")
    for k in scale.general_heights:
        n = 3 * 2 ** (k - 1)
        k_n = utils.floor_log2(n)
        predictor = wrap_general_length(selective_predictor(mean, k), n)
        _, values = _real_suite(
            n, scale, rng, predictor, mean, LossKind.squared,
            scale.climbed, scale.climb_iterations)
        results.append(upper(
            f"general-length n={n}", values.max(), 1.0 / k_n))
        predictor = wrap_general_length(selective_predictor(square, k), n)
        _, values = _real_suite(
            n, scale, rng, predictor, square, LossKind.absolute,
            scale.smooth_climbed, scale.smooth_climb_iterations)
        results.append(upper(
            f"general-length square n={n}", values.max(),
            square.smoothness / math.sqrt(k_n)))
        learnability = learnability_family(
            random_model_class(max(scale.concave_sizes), SYMBOL_ALPHABET, rng))
        predictor = wrap_general_length(
            selective_predictor(learnability, k), n)
        values = [
            exact_expected_loss(s, predictor, learnability)
            for s in _symbol_sequences(scale.symbol_sequences, n, rng)]
        results.append(upper(
            f"general-length learnability n={n}", max(values), 4.0 / k_n))
    return results


def check_smooth_upper(scale: SuiteScale, rng, seed) -> List[CheckResult]:
    """Smooth families lose at most ``L/sqrt(k)`` in absolute loss."""
    results = []
    families = [plugin_family("square"), emd_to_reference_family()]
    for k in scale.smooth_heights:
        for family in families:
            predictor = selective_predictor(family, k)
            seqs, values = _real_suite(
                2 ** k, scale, rng, predictor, family, LossKind.absolute,
                scale.smooth_climbed, scale.smooth_climb_iterations)
            results.append(upper(
                f"smooth-upper {family.name} k={k}", values.max(),
                family.smoothness / math.sqrt(k)))
        distances = [selective_emd_expectation(s, k) for s in seqs]
        results.append(upper(
            f"emd-halves k={k}", max(distances), 1.0 / math.sqrt(k)))
    return results


def _symbol_sequences(count, n, rng):
    return [
        Sequence.from_symbols(
            rng.integers(0, SYMBOL_ALPHABET, size=n), SYMBOL_ALPHABET)
        for _ in range(count)]


def check_concave_upper(scale: SuiteScale, rng, seed) -> List[CheckResult]:
    """Learnability families lose at most ``4/k`` and ``4 mu (2-mu)/k``."""
    results = []
    for size in scale.concave_sizes:
        for k in scale.concave_heights:
            family = learnability_family(
                random_model_class(size, SYMBOL_ALPHABET, rng))
            predictor = selective_predictor(family, k)
            seqs = _symbol_sequences(scale.symbol_sequences, 2 ** k, rng)
            values = [exact_expected_loss(s, predictor, family) for s in seqs]
            results.append(upper(
                f"concave-upper |L|={size} k={k}", max(values), 4.0 / k))
            gaps = [v - concave_variance_bound(family(s.values), k)
                    for s, v in zip(seqs, values)]
            results.append(upper(
                f"concave-refined |L|={size} k={k}", max(gaps), 0.0))
    return results


def check_properties(scale: SuiteScale, rng, seed) -> List[CheckResult]:
    """Property checkers accept the shipped families, reject planted ones."""
    trials = scale.property_trials
    learnability = learnability_family(
        random_model_class(8, SYMBOL_ALPHABET, rng))
    planted = max_of_means_family(ModelClass.from_tables([(0, 1), (1, 0)]))
    seeds = [utils.child_seed(seed, i) for i in range(6)]
    passing = [
        ("concave mean", check_concat_concave(mean_family(), trials,
                                              rng_seed=seeds[0])),
        ("concave learnability", check_concat_concave(
            learnability, trials, rng_seed=seeds[1])),
        ("smooth mean", check_smooth(mean_family(), 1.0, trials,
                                     rng_seed=seeds[2]))]
    failing = [
        ("concave max-of-means", check_concat_concave(
            planted, trials, rng_seed=seeds[3])),
        ("smooth square L=0.5", check_smooth(
            plugin_family("square"), 0.5, trials, rng_seed=seeds[4])),
        ("smooth threshold", check_smooth(
            threshold_family(), 1.0, trials, rng_seed=seeds[5]))]
    results = [
        upper(f"property {name}", report.violations, 0, tolerance=0.0)
        for name, report in passing]
    results += [
        lower(f"property {name}", report.violations, 1, tolerance=0.0)
        for name, report in failing]
    return results


def _fuzz_slice(rng, length):
    if rng.random() < 0.5:
        return rng.integers(0, 3, size=length) / 2.0
    return rng.random(length)


def check_emd_oracles(scale: SuiteScale, rng, seed) -> List[CheckResult]:
    """The three earth mover's distance implementations agree."""
    worst = 0.0
    for _ in range(scale.emd_fuzz):
        m = int(rng.integers(1, 9))
        x, y = _fuzz_slice(rng, m), _fuzz_slice(rng, m)
        worst = max(worst, abs(emd(x, y) - emd_sorted(x, y)))
    worst_lp = 0.0
    for _ in range(scale.transport_fuzz):
        a, b = rng.integers(1, 7, size=2)
        x, y = _fuzz_slice(rng, a), _fuzz_slice(rng, b)
        worst_lp = max(worst_lp, abs(emd(x, y) - transport_emd(x, y)))
    return [
        upper("emd cdf=sorted", worst, 1e-12, tolerance=0.0),
        upper("emd cdf=transport", worst_lp, 1e-9, tolerance=0.0)]


def check_selectivity(scale: SuiteScale, rng, seed) -> List[CheckResult]:
    """Giving up either axis of selectivity costs a constant loss."""
    results = []
    mean = mean_family()
    for n in scale.selectivity_lengths:
        fixed_time = min(
            min_conditional_variance(
                fixed_time_adversary(n, t), VarianceConstraint.fixed_time,
                t=t, keep_entries=False).min_variance
            for t in range(n))
        fixed_window = min(
            min_conditional_variance(
                block_adversary(n, m), VarianceConstraint.fixed_window,
                m=m, keep_entries=False).min_variance
            for m in range(1, n + 1))
        tail = min_conditional_variance(
            halving_block_adversary(n), VarianceConstraint.tail,
            keep_entries=False).min_variance
        results += [
            lower(f"fixed-time certificate n={n}", fixed_time, 0.25),
            lower(f"fixed-window certificate n={n}", fixed_window, 1 / 64),
            lower(f"tail-window certificate n={n}", tail, 1 / 64)]
        witnesses = [
            ("fixed-time", n // 2, fixed_time_adversary(n, n // 2), 0.25),
            ("fixed-window", n // 2, block_adversary(n, n // 2), 1 / 64),
            ("tail-window", None, halving_block_adversary(n), 1 / 64)]
        for i, (kind, param, source, bound) in enumerate(witnesses):
            report = monte_carlo(
                source, constrained_predictors(kind, param), mean,
                trials=scale.witness_trials,
                master_seed=utils.child_seed(seed, n * 10 + i),
                experiment=kind)
            results.append(lower(
                f"{kind} witness n={n}", report.mean, bound,
                ci=report.ci_half_width))
    return results


def check_erm_upper(scale: SuiteScale, rng, seed) -> List[CheckResult]:
    """Empirical risk minimisation stays below ``2 sqrt(|L|/k)``."""
    results = []
    for size in scale.erm_sizes:
        for k in scale.erm_heights:
            model_class = random_model_class(size, SYMBOL_ALPHABET, rng)
            predictor = erm_predictor(model_class, k)
            values = [
                exact_expected_loss(
                    s, predictor, model_class, LossKind.excess_risk)
                for s in _symbol_sequences(scale.erm_sequences, 2 ** k, rng)]
            results.append(upper(
                f"erm-upper |L|={size} k={k}", max(values),
                2.0 * math.sqrt(size / k)))
    return results


def table_for_three() -> np.ndarray:
    """Loss tables of the ``k = 3`` hard instance written out by hand."""
    e = 1.0 / 12
    return np.array([
        [e, 1, e, 1, e, 1, e, 1],
        [2 * e, 2 * e, 1, 1, 2 * e, 2 * e, 1, 1],
        [3 * e, 3 * e, 3 * e, 3 * e, 1, 1, 1, 1]])


def check_erm_lower(scale: SuiteScale, rng, seed) -> List[CheckResult]:
    """Over-fitting instance forces excess risk of ``1/8``."""
    results = []
    for k in scale.erm_hard_heights:
        model_class, seq = erm_hard_instance(k)
        value = exact_expected_loss(
            seq, erm_predictor(model_class, k), model_class,
            LossKind.excess_risk)
        results.append(lower(f"erm-lower k={k}", value, 0.125))
    model_class, seq = erm_hard_instance(3)
    played = exact_expected_loss(
        seq, erm_predictor(model_class, 3), model_class,
        LossKind.excess_risk, fast=False)
    results.append(lower("erm-lower-protocol k=3", played, 0.125))
    gap = float(np.max(np.abs(erm_hard_tables(3) - table_for_three())))
    results.append(upper("erm-table k=3", gap, 0.0, tolerance=0.0))
    return results


def figure_rows(seq: Sequence, scales=FIGURE_SCALES,
                blocks: int = FIGURE_BLOCKS) -> Tuple[List[Dict], Dict]:
    """Block-mean rows and the sample std of the means at each scale."""
    rows, spread = [], {}
    for width in scales:
        means = block_means(seq, width, blocks)
        rows += [
            {"scale": width, "block": i, "mean": float(v)}
            for i, v in enumerate(means)]
        spread[width] = float(np.std(means, ddof=1)) \
            if len(means) > 1 else 0.0
    return rows, spread


def figure_sequence(source_name: str, k: int, rng) -> Sequence:
    """One sequence of length ``2**k`` for the figure data."""
    check_sample_height(k)
    if source_name == "anti-concentrated":
        return anti_concentrated_source(k).sample(rng)
    if source_name == "iid-bits":
        return IIDBitsSource(2 ** k).sample(rng)
    raise ValueError(f"No figure data for source {source_name}.")


def check_figures(scale: SuiteScale, rng, seed) -> List[CheckResult]:
    """Anti-concentrated block means spread out, i.i.d. bits concentrate."""
    _, spread = figure_rows(figure_sequence("anti-concentrated",
                                            scale.figure_k, rng))
    results = [
        lower(f"figure anti-concentrated scale={w}", s,
              ANTI_CONCENTRATION_STD, tolerance=0.0)
        for w, s in spread.items()]
    _, bits = figure_rows(
        figure_sequence("iid-bits", scale.figure_k, rng), (2 ** 15,))
    results.append(upper(
        f"figure iid-bits scale={2 ** 15}", bits[2 ** 15],
        CONCENTRATION_STD, tolerance=0.0))
    return results


CHECKS: List[Tuple[str, Callable]] = [
    ("mean-upper", check_mean_upper),
    ("tightness", check_tightness),
    ("mean-lower", check_mean_lower),
    ("general-length", check_general_length),
    ("smooth-upper", check_smooth_upper),
    ("concave-upper", check_concave_upper),
    ("properties", check_properties),
    ("emd-oracles", check_emd_oracles),
    ("selectivity", check_selectivity),
    ("erm-upper", check_erm_upper),
    ("erm-lower", check_erm_lower),
    ("figures", check_figures),
]


def run_suite(
        master_seed: int, scale: SuiteScale = FULL,
        only: Optional[List[str]] = None) -> List[CheckResult]:
    """Run the acceptance checks in order."""
    results = []
    for index, (name, check) in enumerate(CHECKS):
        if only and name not in only:
            continue
        start = time.perf_counter()
        found = check(
            scale, utils.child_rng(master_seed, index),
            utils.child_seed(master_seed, index))
        elapsed = time.perf_counter() - start
        failed = sum(not r.passed for r in found)
        logger.info(
            f"{name}: {len(found)} checks, {failed} failed, "
            f"{elapsed:.1f}s.")
        results.extend(found)
    return results
