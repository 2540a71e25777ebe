#! /usr/bin/env python3
"""
# ccb

ccb computes concentration bounds for sums of independent bounded random
variables with heterogeneous variances, and uses them to solve
chance-constrained binary knapsacks and robust support vector machines.

## FEATURES

- Tail bounds of the sum: refined Bennett, Bennett, Hoeffding, Cantelli,
  Bernstein, Jebara and the normal approximation, side by side
- Certified confidence bounds by double bisection
- Chance-constrained knapsacks solved by outer approximation (KP, N, H, C,
  B and Refined formulations)
- Robust SVMs (Refined, Cantelli and deterministic) by a log-barrier method
- Reproducible experiments written as CSV

## Usage

```bash
ccb <bound|confidence|knapsack|svm|mgf-chain|bench> [options]
ccb help
```

## Input Files

- Sum specification (JSON): `{"terms": [{"mean": 0, "sigma": 0.1, "b": 1,
  "a": -1}, ...]}`; `a` is only needed by Hoeffding.
- Knapsack instance: either canonical JSON (`profits`, `mean_weights`,
  `sigmas`, `b`, `capacity`, `tau`) or a deterministic text file, first line
  `N C` then N lines `profit weight`, adapted with the 5% sigma rule.
- SVM dataset (CSV): features then a label in {-1, 1} per row; an optional
  sidecar JSON overrides `sigmas`, `b`, `tau` and `penalty`.
- Experiment configuration (JSON): any field of the bench options below.

## Commands

- `bound --spec FILE (--deviation D | --alpha A) [--tau T] [--methods M,...]`
  CSV rows `method,log_bound,confidence,seconds`.
- `confidence --spec FILE --tau T [--eps-t E] [--eps-alpha E]`
  JSON with the bound on the sum (alpha_hat * N) and the bisection counters.
- `knapsack --instance FILE [--formulation F] [--tau T] [--mip-gap G]
  [--time-limit S] [--sigma-rule fixed|random] [--seed S] [--dump-lp]`
  One results row per formulation (F may be repeated or `all`).
- `svm [--data FILE] [--sidecar FILE] [--method M] [--tau T] [--C C]
  [--split F] [--seed S]`
  Trains on a random split and scores on the rest; without `--data` a
  two-dimensional instance is generated from the seed.
- `mgf-chain [--samples K] [--seed S]`
  Checks the estimator chain on K random points.
- `bench --experiment E [--config FILE] [--seed S] [--realizations R]
  [--sizes N,...] [--taus T,...] [--output-dir DIR] [--instance-dir DIR]
  [--svm-data FILE] [--svm-sidecar FILE] [--splits F,...] [--jobs J]
  [--record-time] [--eps-t E] [--eps-alpha E] [--sigma-rule R]`
  Experiments: fig2, fig3, table3, svm2d, svm-wisconsin, mgf-chain.

## Options

- `-v, --verbose`: Debug logging on stderr
- `--version`: Print the version
- `-h, --help`: Show the usage of a command

## Exit Codes

- 0: success
- 1: usage error, invalid input or any other failure
- 2: infeasible (tau not above tau_minus, or no feasible knapsack selection)

Results go to stdout; logs and errors go to stderr. Without
`--record-time`, bench output is byte-identical for a given seed.

## Examples

```bash
ccb bound --spec samples/spec_small.json --alpha 0.3 --tau 0.05
ccb confidence --spec samples/spec_small.json --tau 0.05
ccb knapsack --instance samples/knap_toy.txt --formulation all
ccb svm --data samples/svm_toy.csv --method Refined --split 0.5
ccb bench --experiment fig2 --sizes 10 --realizations 20 --seed 7
```
"""
import argparse
import logging
import sys
from dataclasses import asdict

from .baselines import METHODS as BOUND_METHODS
from .baselines import compare_bounds
from .bench import EXPERIMENTS, MGF_CHAIN, ExperimentConfig, config_from_dict, instance_rng, run_experiment
from .bisection import EPS_ALPHA, EPS_T, confidence_bound
from .data import size
from .errors import ConfigError, InfeasibleLevelError
from .files import load_knapsack_instance, load_sum_spec, load_svm_csv, load_svm_sidecar, read_json
from .formatting import (
    BOUND_HEADER,
    KNAPSACK_HEADER,
    SVM_HEADER,
    bound_rows,
    knapsack_row,
    render_csv,
    render_json,
    svm_row,
)
from .knapsack import FORMULATIONS, SIGMA_FIXED, SIGMA_RULES, build_master, solve_ckp
from .milp import INFEASIBLE, MIP_GAP, dump_lp
from .svm import DEFAULT_PENALTY, DEFAULT_TAU, METHODS as SVM_METHODS
from .svm import generate_two_class_2d, make_dataset, solve_svm, split_dataset, svm_score
from .version import VERSION

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2

# Initialize logger at the module level - disabled by default
logger = logging.getLogger("ccb")
logger.setLevel(logging.CRITICAL)  # Start with logging disabled


class _Infeasible(Exception):
    """Raised inside a command whose answer is 'infeasible'."""


################################################################################
# Sys - System-level functions for logging and output
################################################################################


def setup_logging(to_stderr=False, enabled=False):
    """Configure logging based on requirements.

    Args:
        to_stderr (bool): If True, logs to stderr instead of stdout.
        enabled (bool): If True, sets logging level to DEBUG, otherwise CRITICAL.

    Returns:
        logger: Configured logging object.
    """
    global logger
    level = logging.DEBUG if enabled else logging.CRITICAL
    if not logger.handlers:  # Only set up logging once
        stream = sys.stderr if to_stderr else sys.stdout
        handler = logging.StreamHandler(stream)
        handler.setFormatter(logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s"))
        logger.addHandler(handler)
    logger.setLevel(level)
    return logger


################################################################################
# Arguments
################################################################################


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits with 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_ERROR)


def _float_list(text):
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text):
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _name_list(text):
    return [item.strip() for item in text.split(",") if item.strip()]


def build_parser():
    """The ccb argument parser with one subparser per command."""
    parser = _Parser(
        description="Concentration bounds and chance-constrained optimisation.",
        prog="ccb",
        formatter_class=argparse.RawTextHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable verbose mode")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    commands = parser.add_subparsers(dest="command", parser_class=_Parser)

    commands.add_parser("help", help="Show program's manual")

    bound = commands.add_parser("bound", help="Tail bounds of the sum at one deviation")
    bound.add_argument("--spec", required=True, help="Sum specification (JSON)")
    level = bound.add_mutually_exclusive_group(required=True)
    level.add_argument("--deviation", type=float, help="Deviation d of the sum")
    level.add_argument("--alpha", type=float, help="Deviation per term, d = alpha * N")
    bound.add_argument("--tau", type=float, help="Also report confidence bounds at this level")
    bound.add_argument(
        "--methods",
        type=_name_list,
        help=f"Comma-separated subset of {', '.join(BOUND_METHODS)}",
    )

    confidence = commands.add_parser("confidence", help="Refined confidence bound by double bisection")
    confidence.add_argument("--spec", required=True, help="Sum specification (JSON)")
    confidence.add_argument("--tau", type=float, required=True, help="Error level")
    confidence.add_argument("--eps-t", type=float, default=EPS_T, help="Inner tolerance")
    confidence.add_argument("--eps-alpha", type=float, default=EPS_ALPHA, help="Outer tolerance")

    knapsack = commands.add_parser("knapsack", help="Solve a chance-constrained knapsack")
    knapsack.add_argument("--instance", required=True, help="Instance file (.json or .txt)")
    knapsack.add_argument(
        "--formulation",
        action="append",
        choices=list(FORMULATIONS) + ["all"],
        help="Formulation; repeat for several (default Refined)",
    )
    knapsack.add_argument("--tau", type=float, help="Override the instance's error level")
    knapsack.add_argument("--mip-gap", type=float, default=MIP_GAP, help="Relative optimality gap")
    knapsack.add_argument("--time-limit", type=float, help="Seconds per formulation")
    knapsack.add_argument("--sigma-rule", choices=SIGMA_RULES, default=SIGMA_FIXED, help="Adaptation of text instances")
    knapsack.add_argument("--seed", type=int, default=0, help="Seed of the random sigma rule")
    knapsack.add_argument("--record-time", action="store_true", help="Fill the Time column")
    knapsack.add_argument("--dump-lp", action="store_true", help="Print the master problem instead of solving")

    svm = commands.add_parser("svm", help="Train and score a robust SVM")
    svm.add_argument("--data", help="Dataset CSV; a 2-D instance is generated when omitted")
    svm.add_argument("--sidecar", help="JSON overrides for sigmas, b, tau and penalty")
    svm.add_argument("--method", action="append", choices=SVM_METHODS, help="Method; repeat for several (default all)")
    svm.add_argument("--tau", type=float, help=f"Error level of every point (default {DEFAULT_TAU})")
    svm.add_argument("--C", dest="penalty", type=float, help=f"Penalty (default {DEFAULT_PENALTY:g})")
    svm.add_argument("--split", type=float, default=0.5, help="Training fraction")
    svm.add_argument("--seed", type=int, default=0, help="Seed of the split and the generated instance")
    svm.add_argument("--points", type=int, default=100, help="Points of a generated instance")
    svm.add_argument("--record-time", action="store_true", help="Fill the time column")

    chain = commands.add_parser("mgf-chain", help="Check the estimator chain on random points")
    chain.add_argument("--samples", type=int, default=100, help="Number of points")
    chain.add_argument("--seed", type=int, default=0, help="Seed")

    bench = commands.add_parser("bench", help="Run one experiment and write its CSV")
    bench.add_argument("--config", help="ExperimentConfig as JSON; flags below override it")
    bench.add_argument("--experiment", choices=EXPERIMENTS)
    bench.add_argument("--seed", type=int)
    bench.add_argument("--realizations", type=int)
    bench.add_argument("--sizes", type=_int_list, help="Comma-separated N values")
    bench.add_argument("--taus", type=_float_list, help="Comma-separated error levels, each below 0.5")
    bench.add_argument("--tau", type=float, help="Error level of table3 and the svm experiments")
    bench.add_argument("--output-dir", help="Write <experiment>.csv here instead of stdout")
    bench.add_argument("--instance-dir", help="Knapsack instances for table3")
    bench.add_argument("--svm-data", help="Dataset CSV for svm-wisconsin")
    bench.add_argument("--svm-sidecar", help="Sidecar JSON for svm-wisconsin")
    bench.add_argument("--splits", type=_float_list, help="Comma-separated training fractions")
    bench.add_argument("--jobs", type=int, help="Worker processes (default: every CPU for fig2 and fig3)")
    bench.add_argument("--record-time", action="store_true", default=None, help="Fill the timing columns")
    bench.add_argument("--eps-t", type=float)
    bench.add_argument("--eps-alpha", type=float)
    bench.add_argument("--sigma-rule", choices=SIGMA_RULES)
    bench.add_argument("--time-limit", type=float, help="Seconds per knapsack solve")
    return parser


def parse_args(argv=None):
    """Parse command-line arguments.

    Returns:
        argparse.Namespace: The parsed arguments.
    """
    return build_parser().parse_args(argv)


def _check_help(args):
    # Handle help command before any logging occurs
    if args.command == "help":
        print(__doc__)
        sys.exit(EXIT_OK)

    if args.command is None:
        build_parser().print_usage()
        sys.exit(EXIT_OK)


################################################################################
# Commands
################################################################################


def cmd_bound(args):
    spec = load_sum_spec(args.spec)
    d = args.deviation if args.deviation is not None else args.alpha * size(spec)
    reports = compare_bounds(spec, d, tau=args.tau, methods=args.methods)
    return render_csv(BOUND_HEADER, bound_rows(reports))


def cmd_confidence(args):
    spec = load_sum_spec(args.spec)
    result = confidence_bound(spec, args.tau, eps_t=args.eps_t, eps_alpha=args.eps_alpha)
    document = asdict(result)
    document["bound"] = result.alpha_hat * size(spec)
    document["tau"] = args.tau
    document["N"] = size(spec)
    return render_json(document)


def cmd_knapsack(args):
    instance = load_knapsack_instance(
        args.instance,
        tau=args.tau,
        sigma_rule=args.sigma_rule,
        rng=instance_rng(args.seed, 0),
    )
    selected = args.formulation or ["Refined"]
    formulations = list(FORMULATIONS) if "all" in selected else selected
    if args.dump_lp:
        return "".join(dump_lp(build_master(instance, f)[0]) for f in formulations)
    rows = []
    infeasible = []
    for formulation in formulations:
        solution = solve_ckp(instance, formulation, mip_gap=args.mip_gap, time_limit=args.time_limit)
        if solution.status == INFEASIBLE:
            infeasible.append(formulation)
        rows.append(knapsack_row(instance.name, solution, args.record_time))
    output = render_csv(KNAPSACK_HEADER, rows)
    if infeasible:
        sys.stdout.write(output)
        raise _Infeasible(f"no feasible selection for {', '.join(infeasible)}")
    return output


def _svm_source(args):
    if args.data:
        points, labels = load_svm_csv(args.data)
    else:
        points, labels = generate_two_class_2d(instance_rng(args.seed, 0), m=args.points)
    overrides = load_svm_sidecar(args.sidecar) if args.sidecar else {}
    tau = args.tau if args.tau is not None else overrides.get("tau", DEFAULT_TAU)
    penalty = args.penalty if args.penalty is not None else overrides.get("penalty", DEFAULT_PENALTY)
    return make_dataset(points, labels, tau, penalty, overrides.get("sigmas"), overrides.get("b"))


def cmd_svm(args):
    dataset = _svm_source(args)
    train, test = split_dataset(dataset, args.split, instance_rng(args.seed, 1))
    rows = []
    for method in args.method or SVM_METHODS:
        solution = solve_svm(train, method)
        score = svm_score(solution, test.points, test.labels)
        rows.append(svm_row(solution, score, args.record_time))
    return render_csv(SVM_HEADER, rows)


def cmd_mgf_chain(args):
    return run_experiment(ExperimentConfig(experiment=MGF_CHAIN, seed=args.seed, realizations=args.samples))


_BENCH_FLAGS = (
    "experiment",
    "seed",
    "realizations",
    "sizes",
    "taus",
    "tau",
    "output_dir",
    "instance_dir",
    "svm_data",
    "svm_sidecar",
    "splits",
    "jobs",
    "record_time",
    "eps_t",
    "eps_alpha",
    "sigma_rule",
    "time_limit",
)


def bench_config(args) -> ExperimentConfig:
    """File values first, then every flag that was given."""
    document = read_json(args.config) if args.config else {}
    if not isinstance(document, dict):
        raise ConfigError(f"{args.config}: a configuration must be a JSON object")
    overrides = {name: getattr(args, name) for name in _BENCH_FLAGS if getattr(args, name) is not None}
    return config_from_dict({**document, **overrides})


def cmd_bench(args):
    config = bench_config(args)
    text = run_experiment(config)
    return "" if config.output_dir else text


COMMANDS = {
    "bound": cmd_bound,
    "confidence": cmd_confidence,
    "knapsack": cmd_knapsack,
    "svm": cmd_svm,
    "mgf-chain": cmd_mgf_chain,
    "bench": cmd_bench,
}


def main(argv=None):
    """Main entry point for the ccb application."""
    args = parse_args(argv)

    # short circuit for help
    _check_help(args)

    try:
        # Set up logging based on verbose flag
        setup_logging(to_stderr=True, enabled=args.verbose)
        logger.debug(f"Running {args.command} with {vars(args)}")
        sys.stdout.write(COMMANDS[args.command](args))
    except (InfeasibleLevelError, _Infeasible) as e:
        print(f"Infeasible: {e}", file=sys.stderr)
        sys.exit(EXIT_INFEASIBLE)
    except Exception as e:
        print(f"An error occurred: {e}", file=sys.stderr)
        sys.exit(EXIT_ERROR)


if __name__ == "__main__":
    main()
