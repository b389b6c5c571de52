"""Log and randomness helpers."""
import argparse
import logging
from pathlib import Path

import numpy as np


def log_level():
    """Parser to set logging level and acquire software version/commit."""
    parser = argparse.ArgumentParser(
        formatter_class=argparse.ArgumentDefaultsHelpFormatter, add_help=False)

    modify_log_level = parser.add_mutually_exclusive_group()
    modify_log_level.add_argument(
        '--debug', action='store_const',
        dest='log_level', const=logging.DEBUG, default=logging.INFO,
        help='Verbose logging of debug information.')
    modify_log_level.add_argument(
        '--quiet', action='store_const',
        dest='log_level', const=logging.WARNING, default=logging.INFO,
        help='Minimal logging; warnings only.')
    parser.add_argument("--logfile", type=Path, help="Specify a log file.")

    return parser


def get_named_logger(name):
    """Create a logger with a name.

    :param name: name of logger.
    """
    name = name.ljust(10)[:10]  # so logging is aligned
    logger = logging.getLogger('{}.{}'.format(__package__, name))
    logger.name = name
    return logger


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    """Return the generator owned by a single trial.

    The state is PCG64 seeded from ``SeedSequence([master_seed, trial])``,
    so trials can run in any order, on any worker, and still reproduce.
    """
    if trial < 0:
        raise ValueError(f"Trial index must be non-negative, got {trial}.")
    seq = np.random.SeedSequence([int(master_seed) & (2**64 - 1), trial])
    return np.random.Generator(np.random.PCG64(seq))


def as_rng(rng) -> np.random.Generator:
    """Coerce a seed, or an existing generator, to a generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.PCG64(rng))


def is_power_of_two(n: int) -> bool:
    """Check ``n == 2**k`` for some ``k >= 0``."""
    return n >= 1 and (n & (n - 1)) == 0


def floor_log2(n: int) -> int:
    """Return the largest ``k`` with ``2**k <= n``."""
    if n < 1:
        raise ValueError(f"floor_log2 needs a positive integer, got {n}.")
    return n.bit_length() - 1


def child_seed(master_seed: int, index: int) -> int:
    """Derive an independent 64-bit seed for sub-run ``index``."""
    seq = np.random.SeedSequence([int(master_seed) & (2**64 - 1), index])
    return int(seq.generate_state(1, np.uint64)[0])


def child_rng(master_seed: int, index: int) -> np.random.Generator:
    """Generator for sub-run ``index`` of a master seed."""
    return np.random.Generator(np.random.PCG64(child_seed(master_seed, index)))
