import argparse
import sys
from typing import List, Optional

from cli.commands import cmd_evaluate, cmd_explain, cmd_gridsearch, cmd_train
from config import settings
from distance.functions import KINDS as DISTANCE_KINDS
from errors import FocusError
from ftweak.tweak import DEFAULT_EPSILONS
from logs.log import clear_context, logger, set_log_level, set_run_id
from metrics.prometheus import track_error, write_metrics


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return value


def _add_distance_options(parser: argparse.ArgumentParser, smoothing: bool = True):
    parser.add_argument("--distance", required=True, choices=DISTANCE_KINDS)
    parser.add_argument("--train-data", default=None,
                        help="Training CSV (original units); required for mahalanobis")
    if smoothing:
        parser.add_argument("--smooth-eps", type=float, default=None,
                            help=f"Distance smoothing used during optimisation "
                                 f"(default {settings.DISTANCE_SMOOTH_EPS})")


def _add_run_options(parser: argparse.ArgumentParser):
    parser.add_argument("--iters", type=_positive_int, default=settings.FOCUS_ITERATIONS)
    parser.add_argument("--clamp", action="store_true", default=settings.CLAMP_TO_UNIT_BOX,
                        help="Keep perturbed instances inside [0,1]^n")
    parser.add_argument("--jobs", type=_positive_int, default=settings.DEFAULT_JOBS)
    parser.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    parser.add_argument("--limit", type=int, default=None, help="Explain only the first N rows")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Counterfactual explanations for tree ensembles",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    parser.add_argument("--log-level", default=settings.LOG_LEVEL)
    parser.add_argument("--metrics-file", default=settings.METRICS_FILE or None,
                        help="Write a Prometheus text snapshot here on exit")
    subcommands = parser.add_subparsers(dest="subcommand", required=True)

    train = subcommands.add_parser("train", help="Scale, split and train a tree ensemble",
                                   formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    train.add_argument("--data", required=True)
    train.add_argument("--label", required=True, help="Label column name or index")
    train.add_argument("--positive-threshold", type=float, default=None,
                       help="Binary label: 1 where label >= threshold")
    train.add_argument("--kind", required=True, choices=("dt", "rf", "ab"))
    train.add_argument("--num-trees", type=_positive_int, default=100)
    train.add_argument("--max-depth", type=_positive_int, default=4)
    train.add_argument("--min-leaf", type=_positive_int, default=1)
    train.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    train.add_argument("--stratify", action="store_true")
    train.add_argument("--jobs", type=_positive_int, default=settings.DEFAULT_JOBS)
    train.add_argument("--out", required=True)
    train.set_defaults(func=cmd_train)

    explain = subcommands.add_parser("explain", help="Generate counterfactual examples",
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    explain.add_argument("--model", required=True)
    explain.add_argument("--data", required=True, help="CSV in original units, e.g. the .test.csv from train")
    explain.add_argument("--method", required=True, choices=("focus", "ft"))
    _add_distance_options(explain)
    explain.add_argument("--sigma", type=float, default=None)
    explain.add_argument("--tau", type=float, default=None)
    explain.add_argument("--beta", type=float, default=None)
    explain.add_argument("--alpha", type=float, default=None)
    explain.add_argument("--preset", default=None,
                         help="Fill missing hyperparameters from the published settings for this dataset")
    explain.add_argument("--epsilon", type=float, nargs="+", default=list(DEFAULT_EPSILONS),
                         help="Feature tweaking epsilon; several values run a sweep")
    explain.add_argument("--trace", action="store_true", help="Write the per-iteration curve CSV")
    explain.add_argument("--allow-out-of-range", action="store_true")
    _add_run_options(explain)
    explain.add_argument("--out", required=True)
    explain.set_defaults(func=cmd_explain)

    evaluate = subcommands.add_parser("evaluate", help="Score counterfactual files",
                                      formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    evaluate.add_argument("--model", required=True)
    evaluate.add_argument("--cf", required=True)
    evaluate.add_argument("--baseline", default=None)
    _add_distance_options(evaluate, smoothing=False)
    evaluate.add_argument("--paired", action="store_true", help="Paired instead of Welch t-test")
    evaluate.add_argument("--out", required=True)
    evaluate.set_defaults(func=cmd_evaluate)

    gridsearch = subcommands.add_parser("gridsearch", help="Tune sigma, tau, beta and alpha",
                                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    gridsearch.add_argument("--model", required=True)
    gridsearch.add_argument("--data", required=True)
    _add_distance_options(gridsearch)
    for name in ("sigma", "tau", "beta", "alpha"):
        gridsearch.add_argument(f"--{name}", type=float, nargs="+", default=None)
    _add_run_options(gridsearch)
    gridsearch.add_argument("--out", required=True)
    gridsearch.set_defaults(func=cmd_gridsearch)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        set_log_level(args.log_level)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    run_id = set_run_id()
    logger.info(f"run_started - subcommand={args.subcommand}, run_id={run_id}")
    try:
        return args.func(args)
    except FocusError as exc:
        logger.error(f"run_failed - subcommand={args.subcommand}, error={exc.detail}", exc_info=True)
        track_error(type(exc).__name__, exc.component)
        print(f"error: {exc.detail}", file=sys.stderr)
        return exc.exit_code
    finally:
        if settings.ENABLE_METRICS and args.metrics_file:
            write_metrics(args.metrics_file)
        clear_context()


if __name__ == "__main__":
    sys.exit(main())
