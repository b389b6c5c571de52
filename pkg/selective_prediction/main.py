"""Command-line interface."""
import argparse
from dataclasses import asdict, dataclass
import json
import logging
import math
from pathlib import Path
import sys
from typing import Callable, Dict, Optional

from selective_prediction import acceptance, utils, writers
from selective_prediction.core import (
    LossKind, ObservationKind, ResourceGuardError, SelectivePredictionError,
    UsageError)
from selective_prediction.engine import (
    exact_source_report, min_conditional_variance, monte_carlo,
    VarianceConstraint)
from selective_prediction.predictors import (
    constrained_predictors, erm_predictor, selective_predictor,
    wrap_general_length)
from selective_prediction.sequences import (
    anti_concentrated_source, basic_sources, block_adversary,
    check_sample_height, erm_hard_instance, FixedSequenceSource,
    fixed_time_adversary, halving_block_adversary, IIDSymbolsSource)
from selective_prediction.statistics import (
    emd_to_reference_family, learnability_family, ModelClass, plugin_family,
    random_model_class)

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


@dataclass(frozen=True)
class Experiment:
    """Defaults and cited bound of a named experiment."""

    source: str
    predictor: str
    family: str
    loss: LossKind
    relation: str
    bound: Callable[["ExperimentConfig", object], float]
    citation: str


def _smooth_bound(config, target):
    if target.smoothness is None:
        raise UsageError(f"{target.name} declares no smoothness constant.")
    return target.smoothness / math.sqrt(config.k)


EXPERIMENTS: Dict[str, Experiment] = {
    "mean-upper": Experiment(
        "anti-concentrated", "selective", "mean", LossKind.squared, "<=",
        lambda c, _: 1.0 / c.k, "1/k"),
    "mean-lower": Experiment(
        "anti-concentrated", "selective", "mean", LossKind.squared, ">=",
        lambda c, _: 1.0 / (64 * c.k), "1/(64k)"),
    "smooth-upper": Experiment(
        "iid-uniform", "selective", "square", LossKind.absolute, "<=",
        _smooth_bound, "L/sqrt(k)"),
    "concave-upper": Experiment(
        "iid-symbols", "selective", "learnability", LossKind.squared, "<=",
        lambda c, _: 4.0 / c.k, "4/k"),
    "erm-upper": Experiment(
        "iid-symbols", "erm", "learnability", LossKind.excess_risk, "<=",
        lambda c, t: 2.0 * math.sqrt(t.size / c.k), "2 sqrt(|L|/k)"),
    "erm-lower": Experiment(
        "erm-hard", "erm", "learnability", LossKind.excess_risk, ">=",
        lambda c, _: 0.125, "1/8"),
    "fixed-time": Experiment(
        "fixed-time", "fixed-time", "mean", LossKind.squared, ">=",
        lambda c, _: 0.25, "1/4"),
    "fixed-window": Experiment(
        "block", "fixed-window", "mean", LossKind.squared, ">=",
        lambda c, _: 1.0 / 64, "1/64"),
    "tail-window": Experiment(
        "halving-block", "tail-window", "mean", LossKind.squared, ">=",
        lambda c, _: 1.0 / 64, "1/64"),
}

SOURCES = [
    "constant", "alternating", "iid-bits", "iid-uniform", "anti-concentrated",
    "fixed-time", "block", "halving-block", "iid-symbols", "erm-hard"]
PREDICTORS = ["selective", "erm", "fixed-time", "fixed-window", "tail-window"]
FAMILIES = [
    "mean", "square", "distance-to-half", "emd-to-reference", "learnability"]
CERTIFIED = {
    "anti-concentrated": (VarianceConstraint.all, "1/(64k)"),
    "fixed-time": (VarianceConstraint.fixed_time, "1/4"),
    "block": (VarianceConstraint.fixed_window, "1/64"),
    "halving-block": (VarianceConstraint.tail, "1/64"),
}
# never echoed into CSV headers
UNECHOED = ("out", "config", "logfile", "log_level", "func", "command")


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved options of one invocation."""

    experiment: str
    k: int
    n: int
    source: str
    predictor: str
    family: str
    loss: str
    trials: int
    seed: int
    exact: bool = False
    exact_over_predictor: bool = False
    t: Optional[int] = None
    m: Optional[int] = None
    models: int = 4
    alphabet: int = acceptance.SYMBOL_ALPHABET
    workers: int = 1

    def header(self) -> Dict:
        """Key/value lines echoed into every CSV."""
        from selective_prediction import __version__
        fields = {"version": __version__}
        fields.update(asdict(self))
        return fields


def resolve_length(k: Optional[int], n: Optional[int], default_k=10):
    """Return consistent ``(k, n)`` with ``k = floor(log2 n)``."""
    if n is None:
        k = default_k if k is None else k
        if k < 1:
            raise UsageError(f"--k must be at least 1, got {k}.")
        check_sample_height(k)
        return k, 2 ** k
    if n < 1:
        raise UsageError(f"--n must be positive, got {n}.")
    if k is not None and n != 2 ** k:
        raise UsageError(f"--n {n} is inconsistent with --k {k}.")
    check_sample_height(utils.floor_log2(n))
    return utils.floor_log2(n), n


def resolve_config(args) -> ExperimentConfig:
    """Fill experiment defaults and validate names."""
    if args.experiment not in EXPERIMENTS:
        raise UsageError(f"Unknown experiment: {args.experiment}")
    experiment = EXPERIMENTS[args.experiment]
    k, n = resolve_length(args.k, args.n)
    config = ExperimentConfig(
        experiment=args.experiment, k=k, n=n,
        source=args.source or experiment.source,
        predictor=args.predictor or experiment.predictor,
        family=args.family or experiment.family,
        loss=(args.loss or experiment.loss.value), trials=args.trials,
        seed=args.seed, exact=args.exact,
        exact_over_predictor=args.exact_over_predictor, t=args.t, m=args.m,
        models=args.models, alphabet=args.alphabet, workers=args.workers)
    for value, known, what in (
            (config.source, SOURCES, "source"),
            (config.predictor, PREDICTORS, "predictor"),
            (config.family, FAMILIES, "family")):
        if value not in known:
            raise UsageError(f"Unknown {what}: {value}")
    try:
        LossKind(config.loss)
    except ValueError:
        raise UsageError(f"Unknown loss: {config.loss}") from None
    if config.trials < 1:
        raise UsageError("--trials must be at least 1.")
    return config


def _model_class(config):
    if config.source == "erm-hard":
        return erm_hard_instance(config.k)[0]
    return random_model_class(
        config.models, config.alphabet, utils.child_rng(config.seed, 0))


def build_source(config: ExperimentConfig):
    """Instantiate the named source at length ``n``."""
    name, n = config.source, config.n
    try:
        if name in ("constant", "alternating", "iid-bits", "iid-uniform"):
            return basic_sources(n)[name]
        if name == "anti-concentrated":
            if not utils.is_power_of_two(n):
                raise UsageError("anti-concentrated needs n = 2**k.")
            return anti_concentrated_source(config.k)
        if name == "fixed-time":
            return fixed_time_adversary(n, _required(config.t, "--t"))
        if name == "block":
            return block_adversary(n, _required(config.m, "--m"))
        if name == "halving-block":
            return halving_block_adversary(n)
        if name == "iid-symbols":
            return IIDSymbolsSource(n, config.alphabet)
        if name == "erm-hard":
            if n != 2 ** config.k:
                raise UsageError("erm-hard needs n = 2**k.")
            return FixedSequenceSource(erm_hard_instance(config.k)[1],
                                       "erm-hard")
    except UsageError:
        raise
    except ValueError as e:
        raise UsageError(str(e)) from e
    raise UsageError(f"Unknown source: {name}")


def _required(value, flag):
    if value is None:
        raise UsageError(f"This source needs {flag}.")
    return value


def build_target(config: ExperimentConfig):
    """Statistic family, or the model class for excess risk."""
    try:
        if LossKind(config.loss) is LossKind.excess_risk or \
                config.family == "learnability":
            model_class = _model_class(config)
            if LossKind(config.loss) is LossKind.excess_risk:
                return model_class
            return learnability_family(model_class)
        if config.family == "emd-to-reference":
            return emd_to_reference_family()
        return plugin_family(config.family)
    except UsageError:
        raise
    except ValueError as e:
        raise UsageError(str(e)) from e


def check_kinds(source, target):
    """Refuse a source whose observations the target cannot score."""
    wanted = ObservationKind.symbol if isinstance(target, ModelClass) \
        else target.kind
    if source.kind is not wanted:
        raise UsageError(
            f"{source.name} emits {source.kind.name} observations, "
            f"{getattr(target, 'name', 'the model class')} needs "
            f"{wanted.name}.")


def build_predictor(config: ExperimentConfig, target):
    """Instantiate the named predictor for length ``n``."""
    try:
        if config.predictor == "selective":
            if isinstance(target, ModelClass):
                raise UsageError("selective predicts a statistic family.")
            return wrap_general_length(
                selective_predictor(target, config.k), config.n)
        if config.predictor == "erm":
            if not isinstance(target, ModelClass):
                raise UsageError("erm needs --loss excess_risk.")
            return wrap_general_length(
                erm_predictor(target, config.k), config.n)
        param = config.t if config.predictor == "fixed-time" else config.m
        return constrained_predictors(config.predictor, param)
    except UsageError:
        raise
    except ValueError as e:
        raise UsageError(str(e)) from e


def _echo(args) -> Dict:
    return {
        key: value for key, value in sorted(vars(args).items())
        if key not in UNECHOED}


def cmd_run(args):
    """Run a named experiment and check its cited bound."""
    logger = utils.get_named_logger("Run")
    config = resolve_config(args)
    experiment = EXPERIMENTS[config.experiment]
    source = build_source(config)
    target = build_target(config)
    check_kinds(source, target)
    predictor = build_predictor(config, target)
    loss = LossKind(config.loss)
    bound = experiment.bound(config, target)
    logger.info(
        f"Running {config.experiment}: {predictor.name} on {source.name}, "
        f"n={config.n}.")
    if config.exact:
        report = exact_source_report(
            source, predictor, target, loss, config.experiment, config.seed)
    else:
        report = monte_carlo(
            source, predictor, target, loss, config.trials, config.seed,
            config.experiment, workers=config.workers,
            exact_over_predictor=config.exact_over_predictor)
    if args.out is not None:
        writers.write_report(report, args.out, config.header())
    if experiment.relation == "<=":
        result = acceptance.upper(config.experiment, report.mean, bound)
    else:
        result = acceptance.lower(
            config.experiment, report.mean, bound, ci=report.ci_half_width)
    print(f"mean {report.mean:.6g} +- {report.ci_half_width:.3g} "
          f"({report.trials} {'rows' if report.exact else 'trials'})")
    print(f"{result.line()} [{experiment.citation}]")
    return EXIT_PASS if result.passed else EXIT_FAIL


def cmd_certify(args):
    """Certify a variance lower bound by enumeration."""
    logger = utils.get_named_logger("Certify")
    if args.source not in CERTIFIED:
        raise UsageError(f"Cannot certify source {args.source}.")
    k, n = resolve_length(args.k, args.n, default_k=3)
    constraint, citation = CERTIFIED[args.source]
    config = ExperimentConfig(
        experiment="certify", k=k, n=n, source=args.source, predictor="",
        family="mean", loss=LossKind.squared.value, trials=1, seed=0,
        exact=True, t=args.t, m=args.m)
    source = build_source(config)
    if args.source == "anti-concentrated":
        bound = 1.0 / (64 * k)
    elif args.source == "fixed-time":
        bound = 0.25
    else:
        bound = 1.0 / 64
    logger.info(f"Enumerating {source.name} with n={n}.")
    certificate = min_conditional_variance(
        source, constraint, t=args.t, m=args.m)
    if args.out is not None:
        writers.write_certificate(certificate, args.out, config.header())
    result = acceptance.lower(
        f"certify {args.source}", certificate.min_variance, bound)
    t, m, prefix_id = certificate.argmin
    print(f"min variance {certificate.min_variance:.6g} at t={t} m={m} "
          f"prefix={prefix_id} over {certificate.outcomes} outcomes")
    print(f"{result.line()} [{citation}]")
    return EXIT_PASS if result.passed else EXIT_FAIL


def cmd_figures(args):
    """Emit block means of one sequence at two scales."""
    logger = utils.get_named_logger("Figures")
    if args.k < 16:
        raise UsageError(f"figures needs --k >= 16, got {args.k}.")
    seq = acceptance.figure_sequence(
        args.source, args.k, utils.trial_rng(args.seed, 0))
    rows, spread = acceptance.figure_rows(seq, blocks=args.blocks)
    if args.out is not None:
        writers.write_figure(rows, args.out, _echo(args))
    for width, std in spread.items():
        print(f"scale {width}: std of block means {std:.6g}")
    logger.info(f"Wrote {len(rows)} block means.")
    return EXIT_PASS


def cmd_suite(args):
    """Run every acceptance check."""
    logger = utils.get_named_logger("Suite")
    scale = acceptance.QUICK if args.quick else acceptance.FULL
    unknown = sorted(
        set(args.only or []) - {name for name, _ in acceptance.CHECKS})
    if unknown:
        raise UsageError(f"Unknown checks: {', '.join(unknown)}")
    results = acceptance.run_suite(args.seed, scale, args.only)
    for result in results:
        print(result.line())
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        header = _echo(args)
        writers.write_summary(results, args.out / "summary.csv", header)
        seq = acceptance.figure_sequence(
            "anti-concentrated", scale.figure_k, utils.trial_rng(args.seed, 0))
        writers.write_figure(
            acceptance.figure_rows(seq)[0], args.out / "figures.csv", header)
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error(f"{len(failed)} checks failed: {', '.join(failed)}")
        return EXIT_FAIL
    logger.info(f"All {len(results)} checks passed.")
    return EXIT_PASS


def _common(parser):
    parser.add_argument(
        "--config", type=Path,
        help="JSON object of option defaults; explicit flags override it.")
    parser.add_argument(
        "--out", type=Path, help="Output CSV file.")
    parser.add_argument(
        "--seed", type=int, default=0, help="Master seed.")


def selective_parser():
    """Create CLI parser."""
    from selective_prediction import __version__
    parser = argparse.ArgumentParser(
        "selective-prediction", parents=[utils.log_level()],
        description=(
            "Experiments on predicting a statistic of a window of a "
            "sequence chosen by the predictor."),
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    subparsers = parser.add_subparsers(
        title='subcommands', description='valid commands',
        help='additional help', dest='command')
    subparsers.required = True

    parser.add_argument(
        '--version', action='version',
        version='%(prog)s {}'.format(__version__))

    run_parse = subparsers.add_parser(
        "run", description="Run a named experiment and check its bound.",
        parents=[utils.log_level()],
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    run_parse.set_defaults(func=cmd_run)
    _common(run_parse)
    run_parse.add_argument(
        "--experiment", default="mean-upper",
        help=f"One of {', '.join(EXPERIMENTS)}.")
    run_parse.add_argument(
        "--k", type=int, help="Height; sequences have n = 2**k entries.")
    run_parse.add_argument(
        "--n", type=int, help="Sequence length, need not be a power of two.")
    run_parse.add_argument(
        "--source", help=f"Override the sequence source: {', '.join(SOURCES)}.")
    run_parse.add_argument(
        "--predictor", help=f"Override the predictor: {', '.join(PREDICTORS)}.")
    run_parse.add_argument(
        "--family", help=f"Override the statistic: {', '.join(FAMILIES)}.")
    run_parse.add_argument(
        "--loss", help="Override the loss: squared, absolute or excess_risk.")
    run_parse.add_argument(
        "--trials", type=int, default=10_000, help="Monte Carlo trials.")
    run_parse.add_argument(
        "--exact", default=False, action="store_true",
        help="Enumerate the source and the predictor instead of sampling.")
    run_parse.add_argument(
        "--exact-over-predictor", default=False, action="store_true",
        help="Sample sequences but take the exact expectation per sequence.")
    run_parse.add_argument(
        "--t", type=int, help="Prediction time of fixed-time components.")
    run_parse.add_argument(
        "--m", type=int, help="Window length of fixed-window components.")
    run_parse.add_argument(
        "--models", type=int, default=4, help="Size of random model classes.")
    run_parse.add_argument(
        "--alphabet", type=int, default=acceptance.SYMBOL_ALPHABET,
        help="Alphabet size of symbol sources.")
    run_parse.add_argument(
        "--workers", type=int, default=1, help="Monte Carlo worker threads.")

    certify_parse = subparsers.add_parser(
        "certify",
        description=(
            "Enumerate an adversarial source and certify the smallest "
            "conditional variance of a window mean given a prefix."),
        parents=[utils.log_level()],
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    certify_parse.set_defaults(func=cmd_certify)
    _common(certify_parse)
    certify_parse.add_argument(
        "--source", default="anti-concentrated",
        help=f"One of {', '.join(CERTIFIED)}.")
    certify_parse.add_argument("--k", type=int, help="Height.")
    certify_parse.add_argument("--n", type=int, help="Sequence length.")
    certify_parse.add_argument("--t", type=int, help="Fixed prediction time.")
    certify_parse.add_argument("--m", type=int, help="Fixed window length.")

    figures_parse = subparsers.add_parser(
        "figures",
        description="Block means of one sequence at two timescales.",
        parents=[utils.log_level()],
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    figures_parse.set_defaults(func=cmd_figures)
    _common(figures_parse)
    figures_parse.add_argument("--k", type=int, default=20, help="Height.")
    figures_parse.add_argument(
        "--source", default="anti-concentrated",
        choices=["anti-concentrated", "iid-bits"])
    figures_parse.add_argument(
        "--blocks", type=int, default=acceptance.FIGURE_BLOCKS,
        help="Number of blocks per scale.")

    suite_parse = subparsers.add_parser(
        "suite", description="Run every acceptance check.",
        parents=[utils.log_level()],
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    suite_parse.set_defaults(func=cmd_suite)
    _common(suite_parse)
    suite_parse.set_defaults(seed=42)
    suite_parse.add_argument(
        "--quick", default=False, action="store_true",
        help="Reduced sizes for smoke testing.")
    suite_parse.add_argument(
        "--only", nargs="+", help="Run only these checks.")

    return parser


def load_config(path) -> Dict:
    """Read a JSON object of option defaults."""
    with Path(path).open() as fh:
        config = json.load(fh)
    if not isinstance(config, dict):
        raise UsageError(f"{path} must hold a JSON object.")
    return {key.replace("-", "_"): value for key, value in config.items()}


def parse_args(argv=None):
    """Parse, re-parsing with config file defaults when given."""
    parser = selective_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    defaults = load_config(args.config)
    subparsers = next(
        a for a in parser._actions
        if isinstance(a, argparse._SubParsersAction))
    sub = subparsers.choices[args.command]
    known = {a.dest for a in sub._actions}
    unknown = sorted(set(defaults) - known)
    if unknown:
        raise UsageError(f"Unknown config keys: {', '.join(unknown)}")
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    """Run a subcommand, returning the exit code."""
    logger = utils.get_named_logger("Main")
    try:
        args = parse_args(argv)
    except (UsageError, OSError, json.JSONDecodeError) as e:
        logger.error(str(e))
        return EXIT_USAGE

    logging.basicConfig(
        format='[%(asctime)s - %(name)s] %(message)s',
        datefmt='%H:%M:%S', level=logging.INFO)
    package_logger = logging.getLogger(__package__)
    package_logger.setLevel(args.log_level)
    if args.logfile:
        fh = logging.FileHandler(args.logfile, "w")
        fh.setLevel(args.log_level)
        package_logger.addHandler(fh)

    try:
        return args.func(args)
    except (UsageError, ResourceGuardError) as e:
        logger.error(str(e))
        return EXIT_USAGE
    except (SelectivePredictionError, OSError) as e:
        logger.error(str(e))
        return EXIT_FAIL


def run_main():
    """Entry point."""
    sys.exit(main())


if __name__ == "__main__":
    run_main()
