"""Sequence sources: benign generators and adversarial constructions.

Sources are immutable descriptions. Sampling takes an externally owned
``numpy.random.Generator`` so parallel trials never share state. Sources
with a finite, small support can also enumerate ``(sequence, probability)``
pairs for the exact oracles in :mod:`selective_prediction.engine`.
"""
import abc
from dataclasses import dataclass
import itertools
import math
from typing import Dict, List, Optional, Sequence as Seq, Tuple

import numpy as np

from selective_prediction import utils
from selective_prediction.core import (
    NotEnumerableError, ObservationKind, ResourceGuardError, Sequence)
from selective_prediction.statistics import ModelClass

logger = utils.get_named_logger("Sequences")

# largest number of outcomes any source will enumerate
MAX_OUTCOMES = 2 ** 16
# tree height above which exact enumeration is refused (k=4 needs 2**30)
MAX_TREE_HEIGHT = 3
# largest k for which a length-2**k sequence is materialised
MAX_SAMPLE_HEIGHT = 24


def check_sample_height(k: int):
    """Refuse to sample sequences longer than ``2**MAX_SAMPLE_HEIGHT``."""
    if k > MAX_SAMPLE_HEIGHT:
        raise ResourceGuardError(
            f"Sequences of length 2**{k} are not sampled; "
            f"the limit is k <= {MAX_SAMPLE_HEIGHT}.")


class SequenceSource(abc.ABC):
    """A deterministic or stochastic generator of length-``n`` sequences."""

    name = "source"
    kind = ObservationKind.real
    alphabet_size: Optional[int] = None

    def __init__(self, n: int):
        """Init."""
        if n < 1:
            raise ValueError(f"Sequence length must be at least 1, got {n}.")
        self.n = n

    def __repr__(self):
        """Name and length."""
        return f"{type(self).__name__}(name={self.name!r}, n={self.n})"

    @abc.abstractmethod
    def sample(self, rng: np.random.Generator) -> Sequence:
        """Draw one sequence."""

    @property
    def enumerable(self) -> bool:
        """Whether :meth:`enumerate` is available."""
        return False

    def enumerate_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """All outcomes as an ``(outcomes, n)`` matrix and probabilities."""
        raise NotEnumerableError(f"{self.name} cannot be enumerated.")

    def enumerate(self) -> List[Tuple[Sequence, float]]:
        """All outcomes as ``(Sequence, probability)`` pairs."""
        rows, probs = self.enumerate_arrays()
        return [
            (self._wrap(row), float(p)) for row, p in zip(rows, probs)]

    def _wrap(self, values) -> Sequence:
        return Sequence(values, self.kind, self.alphabet_size)


class FixedSequenceSource(SequenceSource):
    """A point mass on one sequence."""

    def __init__(self, sequence: Sequence, name: str = "fixed"):
        """Init."""
        super().__init__(sequence.n)
        self.sequence = sequence
        self.name = name
        self.kind = sequence.kind
        self.alphabet_size = sequence.alphabet_size

    def sample(self, rng=None) -> Sequence:
        """Return the sequence; no randomness is consumed."""
        return self.sequence

    @property
    def enumerable(self):
        """Always."""
        return True

    def enumerate_arrays(self):
        """Single outcome with probability one."""
        return self.sequence.values[None, :], np.ones(1)


class ConstantSource(FixedSequenceSource):
    """``(c, ..., c)``."""

    def __init__(self, n: int, c: float = 0.5):
        """Init."""
        super().__init__(Sequence(np.full(n, c, dtype=float)), "constant")
        self.c = c


class AlternatingSource(FixedSequenceSource):
    """``(0, 1, 0, 1, ...)``."""

    def __init__(self, n: int):
        """Init."""
        super().__init__(
            Sequence(np.arange(n) % 2, ObservationKind.real), "alternating")


class IIDUniformSource(SequenceSource):
    """I.i.d. uniform reals on ``[0, 1)``."""

    name = "iid-uniform"

    def sample(self, rng):
        """Draw one sequence."""
        return self._wrap(rng.random(self.n))


class IIDSymbolsSource(SequenceSource):
    """I.i.d. uniform symbol ids over ``range(alphabet_size)``."""

    name = "iid-symbols"
    kind = ObservationKind.symbol

    def __init__(self, n: int, alphabet_size: int):
        """Init."""
        super().__init__(n)
        if alphabet_size < 1:
            raise ValueError("Alphabet must be non-empty.")
        self.alphabet_size = alphabet_size

    def sample(self, rng):
        """Draw one sequence."""
        return self._wrap(rng.integers(0, self.alphabet_size, size=self.n))


class BlockSource(SequenceSource):
    """Piecewise-constant bit sequences.

    A fixed all-zero prefix is followed by blocks; each block repeats one
    independent uniform bit.
    """

    name = "blocks"

    def __init__(self, n: int, block_sizes: Seq[int], prefix_length=0):
        """Init."""
        super().__init__(n)
        block_sizes = [int(b) for b in block_sizes]
        if any(b < 1 for b in block_sizes) or \
                prefix_length + sum(block_sizes) != n:
            raise ValueError(
                f"Blocks {block_sizes} after a prefix of {prefix_length} "
                f"do not tile length {n}.")
        self.block_sizes = block_sizes
        self.prefix_length = prefix_length

    @property
    def block_starts(self) -> List[int]:
        """0-based start index of every random block."""
        starts = np.cumsum([self.prefix_length] + self.block_sizes[:-1])
        return starts.tolist()

    def _expand(self, bits: np.ndarray) -> np.ndarray:
        bits = np.atleast_2d(bits)
        body = np.repeat(bits, self.block_sizes, axis=1).astype(float)
        prefix = np.zeros((bits.shape[0], self.prefix_length))
        return np.concatenate([prefix, body], axis=1)

    def sample(self, rng):
        """Draw one bit per block."""
        bits = rng.integers(0, 2, size=len(self.block_sizes))
        return self._wrap(self._expand(bits)[0])

    @property
    def enumerable(self):
        """Guarded by :data:`MAX_OUTCOMES`."""
        return len(self.block_sizes) <= MAX_OUTCOMES.bit_length() - 1

    def enumerate_arrays(self):
        """Every bit assignment, equiprobable."""
        blocks = len(self.block_sizes)
        if blocks > MAX_OUTCOMES.bit_length() - 1:
            raise ResourceGuardError(
                f"{self.name} has 2**{blocks} outcomes, more than "
                f"{MAX_OUTCOMES}.")
        bits = np.array(
            list(itertools.product((0, 1), repeat=blocks)), dtype=float)
        return self._expand(bits), np.full(len(bits), 0.5 ** blocks)


class IIDBitsSource(BlockSource):
    """I.i.d. uniform bits."""

    name = "iid-bits"

    def __init__(self, n: int):
        """Init."""
        super().__init__(n, [1] * n)


class FixedTimeAdversary(BlockSource):
    """Adversary against predictors that always commit at time ``t``.

    The first ``t`` entries are zero; the tail ``x_{t+1} = ... = x_n`` is
    one uniform bit.
    """

    name = "fixed-time"

    def __init__(self, n: int, t: int):
        """Init."""
        if not 0 <= t <= n - 1:
            raise ValueError(f"Prediction time t={t} outside [0, {n - 1}].")
        super().__init__(n, [n - t], prefix_length=t)
        self.t = t


class BlockAdversary(BlockSource):
    """Adversary against predictors with a fixed window length ``m``.

    Blocks have length ``ceil(m / 2)``; the final block is truncated when
    the block length does not divide ``n``. Any window of length ``m``
    contains a whole block.
    """

    name = "block"

    def __init__(self, n: int, m: int):
        """Init."""
        if not 1 <= m <= n:
            raise ValueError(f"Window length m={m} outside [1, {n}].")
        size = math.ceil(m / 2)
        sizes = [size] * (n // size)
        if n % size:
            sizes.append(n % size)
        super().__init__(n, sizes)
        self.m = m
        self.block_length = size


class HalvingBlockAdversary(BlockSource):
    """Adversary against predictors forced to predict the whole tail.

    Blocks of sizes ``n/2, n/4, ..., 2, 1`` and one trailing block of size
    one, each an independent bit.
    """

    name = "halving-block"

    def __init__(self, n: int):
        """Init."""
        if n < 2 or not utils.is_power_of_two(n):
            raise ValueError(
                f"Halving blocks need n = 2**k with k >= 1, got {n}.")
        k = utils.floor_log2(n)
        super().__init__(n, [n >> i for i in range(1, k + 1)] + [1])


@dataclass(frozen=True, eq=False)
class TreeSample:
    """Node values of one anti-concentrated tree, level by level.

    Level ``j`` holds ``2**j`` values; level ``k`` is the leaf row.
    """

    k: int
    levels: Tuple[np.ndarray, ...]
    delta: float

    @property
    def leaves(self) -> np.ndarray:
        """The leaf row, i.e. the emitted sequence."""
        return self.levels[-1]

    def validate(self, tolerance: float = 1e-12):
        """Check the construction invariants, raising ``ValueError``."""
        if len(self.levels) != self.k + 1:
            raise ValueError("Tree has the wrong number of levels.")
        if self.levels[0].tolist() != [0.5]:
            raise ValueError("Root value must be exactly 1/2.")
        for j, level in enumerate(self.levels):
            if len(level) != 2 ** j:
                raise ValueError(f"Level {j} should hold {2 ** j} values.")
            spread = np.abs(level - 0.5)
            if not np.allclose(
                    spread, level_offset(j, self.k), rtol=0, atol=tolerance):
                raise ValueError(
                    f"Level {j} values are not 1/2 +- sqrt({j}) delta.")
        if self.leaves.min() < 0.0 or self.leaves.max() > 1.0:
            raise ValueError("Leaves must lie in [0, 1].")


def level_offset(j: int, k: int) -> float:
    """Distance ``sqrt(j) * delta`` of level-``j`` values from 1/2.

    Computed as ``sqrt(j) / (2 sqrt(k))`` so the leaf level is exactly 1/2
    away and leaves land exactly on 0 or 1.
    """
    return math.sqrt(j) / (2.0 * math.sqrt(k))


class AntiConcentratedSource(SequenceSource):
    """Leaves of a random perfect binary tree of height ``k``.

    The root is 1/2. A level-``j`` node takes ``1/2 +- sqrt(j) delta`` with
    ``delta = 1/(2 sqrt(k))``, independently given its parent, so that its
    expectation equals the parent's value; its conditional variance is
    ``delta**2``. Window means retain variance at every timescale,
    conditioned on any prefix.
    """

    name = "anti-concentrated"

    def __init__(self, k: int):
        """Init."""
        if k < 1:
            raise ValueError(f"Tree height must be at least 1, got {k}.")
        super().__init__(2 ** k)
        self.k = k
        self.delta = 1.0 / (2.0 * math.sqrt(k))

    @staticmethod
    def transition_probability(j: int, parent_sign: int) -> float:
        """Probability that a level-``j`` child takes the ``+`` value."""
        if j < 1:
            raise ValueError("Only levels j >= 1 have a parent.")
        s, r = math.sqrt(j), math.sqrt(j - 1)
        if parent_sign > 0:
            return (s + r) / (2.0 * s)
        return (s - r) / (2.0 * s)

    def _values(self, j, signs):
        return 0.5 + signs * level_offset(j, self.k)

    def sample_tree(self, rng: np.random.Generator) -> TreeSample:
        """Sample breadth first, left to right, one uniform draw per node."""
        check_sample_height(self.k)
        signs = np.ones(1)
        levels = [np.full(1, 0.5)]
        for j in range(1, self.k + 1):
            parents = np.repeat(signs, 2)
            p_plus = np.where(
                parents > 0,
                self.transition_probability(j, 1),
                self.transition_probability(j, -1))
            signs = np.where(rng.random(2 ** j) < p_plus, 1.0, -1.0)
            levels.append(self._values(j, signs))
        return TreeSample(self.k, tuple(levels), self.delta)

    def sample(self, rng):
        """Draw one leaf row."""
        return self._wrap(self.sample_tree(rng).leaves)

    @property
    def enumerable(self):
        """Only small trees."""
        return self.k <= MAX_TREE_HEIGHT

    def _enumerate_signs(self):
        if self.k > MAX_TREE_HEIGHT:
            raise ResourceGuardError(
                f"Tree of height {self.k} has 2**{2 ** (self.k + 1) - 2} "
                f"outcomes; enumeration is limited to k <= "
                f"{MAX_TREE_HEIGHT}.")
        history = [np.ones((1, 1))]
        probs = np.ones(1)
        for j in range(1, self.k + 1):
            width = 2 ** j
            combos = np.array(
                list(itertools.product((1.0, -1.0), repeat=width)))
            parents = np.repeat(history[-1], 2, axis=1)
            p_plus = np.where(
                parents > 0,
                self.transition_probability(j, 1),
                self.transition_probability(j, -1))
            # (outcomes, combos, width)
            step = np.where(
                combos[None, :, :] > 0,
                p_plus[:, None, :], 1.0 - p_plus[:, None, :])
            probs = (probs[:, None] * step.prod(axis=2)).ravel()
            n_old, n_combos = len(parents), len(combos)
            history = [np.repeat(h, n_combos, axis=0) for h in history]
            history.append(np.tile(combos, (n_old, 1)))
        return history, probs

    def enumerate_trees(self) -> List[Tuple[TreeSample, float]]:
        """Every tree with its probability (``k <= 3``)."""
        history, probs = self._enumerate_signs()
        trees = []
        for i, p in enumerate(probs):
            levels = tuple(
                self._values(j, history[j][i]) if j else np.full(1, 0.5)
                for j in range(self.k + 1))
            trees.append((TreeSample(self.k, levels, self.delta), float(p)))
        return trees

    def enumerate_arrays(self):
        """Leaf rows of every tree with their probabilities."""
        history, probs = self._enumerate_signs()
        logger.debug(f"Enumerated {len(probs)} trees of height {self.k}.")
        return self._values(self.k, history[-1]), probs


def anti_concentrated_source(k: int) -> AntiConcentratedSource:
    """Source of ``2**k``-long anti-concentrated sequences."""
    return AntiConcentratedSource(k)


def enumerate_anti_concentrated(k: int) -> List[Tuple[Sequence, float]]:
    """Exact outcome list of the anti-concentrated source, ``k <= 3``."""
    if k > MAX_TREE_HEIGHT:
        raise ResourceGuardError(
            f"Enumeration is limited to k <= {MAX_TREE_HEIGHT}, got {k}.")
    return AntiConcentratedSource(k).enumerate()


def fixed_time_adversary(n: int, t: int) -> FixedTimeAdversary:
    """Adversary for a known prediction time."""
    return FixedTimeAdversary(n, t)


def block_adversary(n: int, m: int) -> BlockAdversary:
    """Adversary for a known window length."""
    return BlockAdversary(n, m)


def halving_block_adversary(n: int) -> HalvingBlockAdversary:
    """Adversary for tail-only windows."""
    return HalvingBlockAdversary(n)


def erm_hard_tables(k: int) -> np.ndarray:
    """Loss tables on which empirical risk minimisation over-fits.

    ``l_i(x) = 1`` when ``floor(x / 2**(i-1))`` is odd and ``i * eps``
    otherwise, with ``eps = 1/(4k)``, over symbols ``0 .. 2**k - 1``.
    """
    eps = 1.0 / (4 * k)
    x = np.arange(2 ** k)
    rows = []
    for i in range(1, k + 1):
        odd = (x >> (i - 1)) % 2 == 1
        rows.append(np.where(odd, 1.0, i * eps))
    return np.array(rows)


def erm_hard_instance(k: int) -> Tuple[ModelClass, Sequence]:
    """Model class of size ``k`` and the sequence ``x_t = t - 1``."""
    if k < 2:
        raise ValueError(f"The hard instance needs k >= 2, got {k}.")
    seq = Sequence.from_symbols(range(2 ** k), alphabet_size=2 ** k)
    return ModelClass(erm_hard_tables(k)), seq


def basic_sources(n: int, c: float = 0.5) -> Dict[str, SequenceSource]:
    """Fixtures and upper-bound probes of length ``n``."""
    if n < 1:
        raise ValueError(f"Sequence length must be at least 1, got {n}.")
    return {
        "constant": ConstantSource(n, c),
        "alternating": AlternatingSource(n),
        "iid-bits": IIDBitsSource(n),
        "iid-uniform": IIDUniformSource(n),
    }
