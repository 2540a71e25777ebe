"""Experiment drivers.

Every driver takes an ExperimentConfig and returns CSV text. Instance i of an
experiment draws from its own Philox stream keyed by (seed, i), so rows do
not depend on the order in which workers finish, and the output is
byte-identical for identical configurations as long as record_time is off.
"""

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .baselines import (
    BENNETT,
    CANTELLI,
    HOEFFDING,
    REFINED,
    bennett_confidence,
    bennett_log_tail,
    cantelli_confidence,
    cantelli_log_tail,
    hoeffding_confidence,
    hoeffding_log_tail,
    jebara_log_tail,
    normal_confidence,
)
from .bisection import EPS_ALPHA, EPS_T, confidence_bound, phi_star
from .data import RandomTermSpec, SumSpec, b_bar, log_tau_minus, make_sum_spec, size
from .errors import ConfigError, DomainError
from .files import get_files_from_args, load_knapsack_instance, load_svm_csv, load_svm_sidecar
from .formatting import render_csv
from .knapsack import BERNSTEIN as CKP_B
from .knapsack import CANTELLI as CKP_C
from .knapsack import HOEFFDING as CKP_H
from .knapsack import KP
from .knapsack import NORMAL as CKP_N
from .knapsack import REFINED as CKP_REFINED
from .knapsack import SIGMA_RULES, solve_ckp
from .mgf import check_chain, sample_chain_point
from .svm import (
    METHODS as SVM_METHODS,
    generate_two_class_2d,
    make_dataset,
    margin_width,
    solve_svm,
    split_dataset,
    svm_score,
)

logger = logging.getLogger("ccb")
logger.setLevel(logging.CRITICAL)  # Start with logging disabled

FIG2 = "fig2"
FIG3 = "fig3"
TABLE3 = "table3"
SVM2D = "svm2d"
SVM_WISCONSIN = "svm-wisconsin"
MGF_CHAIN = "mgf-chain"
EXPERIMENTS = (FIG2, FIG3, TABLE3, SVM2D, SVM_WISCONSIN, MGF_CHAIN)

FIG3_METHODS = (HOEFFDING, BENNETT, CANTELLI, REFINED)
TABLE3_FORMULATIONS = (KP, CKP_N, CKP_REFINED, CKP_B, CKP_C, CKP_H)


@dataclass
class ExperimentConfig:
    """Parameters shared by the experiment drivers.

    Note: Operations on ExperimentConfig objects should be performed using
    functions, not methods. This class is intended to be used as a data holder
    only.

    Attributes:
        experiment (str): One of EXPERIMENTS.
        seed (int): 64-bit seed of every instance stream.
        realizations (int): Instances per size (fig2, fig3), samples
            (mgf-chain) or seeds per split (svm).
        sizes (List[int]): Numbers of summands N.
        taus (List[float]): Error levels of fig3.
        output_dir (Optional[str]): Where the CLI writes <experiment>.csv.
        instance_dir (Optional[str]): Knapsack instances for table3.
        svm_data (Optional[str]): Dataset CSV for svm-wisconsin.
        svm_sidecar (Optional[str]): sigma/b/tau overrides for svm_data.
        splits (List[float]): Training fractions of the svm experiments.
        jobs (Optional[int]): Worker processes; 1 runs serially. None spreads
            fig2 and fig3 over every CPU and runs the rest serially.
        record_time (bool): Fill the timing columns.
        eps_t (float): Inner bisection tolerance.
        eps_alpha (float): Outer bisection tolerance.
        sigma_rule (str): Knapsack adaptation rule.
        tau (float): Error level of table3 and the svm experiments.
        penalty (float): SVM penalty C.
        points (int): Points of the generated two-dimensional instances.
        separation (float): Distance between the generated class centres.
        methods (List[str]): SVM methods to run.
        time_limit (Optional[float]): Seconds per knapsack solve.
    """

    experiment: str = FIG2
    seed: int = 0
    realizations: int = 500
    sizes: List[int] = field(default_factory=lambda: [10, 100])
    taus: List[float] = field(default_factory=lambda: [0.2, 0.1, 0.05, 0.02, 0.01, 0.005])
    output_dir: Optional[str] = None
    instance_dir: Optional[str] = None
    svm_data: Optional[str] = None
    svm_sidecar: Optional[str] = None
    splits: List[float] = field(default_factory=lambda: [0.2, 0.8])
    jobs: Optional[int] = None
    record_time: bool = False
    eps_t: float = EPS_T
    eps_alpha: float = EPS_ALPHA
    sigma_rule: str = "fixed"
    tau: Optional[float] = None
    penalty: float = 100.0
    points: int = 100
    separation: float = 4.0
    methods: List[str] = field(default_factory=lambda: list(SVM_METHODS))
    time_limit: Optional[float] = None


def validate_config(config: ExperimentConfig) -> ExperimentConfig:
    """Check every field of a configuration.

    Raises:
        ConfigError: If a value cannot be used.
    """
    if config.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {config.experiment!r}; expected one of {EXPERIMENTS}")
    if not 0 <= config.seed < 2**64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {config.seed}")
    if config.realizations < 1:
        raise ConfigError(f"realizations must be at least 1, got {config.realizations}")
    if any(n < 1 for n in config.sizes):
        raise ConfigError(f"sizes must be positive, got {config.sizes}")
    if any(not 0 < t < 0.5 for t in config.taus):
        raise ConfigError(f"taus must lie in (0, 0.5), got {config.taus}")
    if any(not 0 < f < 1 for f in config.splits):
        raise ConfigError(f"splits must lie in (0, 1), got {config.splits}")
    if config.jobs is not None and config.jobs < 1:
        raise ConfigError(f"jobs must be at least 1, got {config.jobs}")
    if not (config.eps_t > 0 and config.eps_alpha > 0):
        raise ConfigError("eps_t and eps_alpha must be positive")
    if config.sigma_rule not in SIGMA_RULES:
        raise ConfigError(f"unknown sigma rule {config.sigma_rule!r}; expected one of {SIGMA_RULES}")
    if config.tau is not None and not 0 < config.tau < 1:
        raise ConfigError(f"tau must lie in (0, 1), got {config.tau}")
    unknown = set(config.methods) - set(SVM_METHODS)
    if unknown:
        raise ConfigError(f"unknown SVM methods {sorted(unknown)}")
    if config.experiment == TABLE3 and not config.instance_dir:
        raise ConfigError("table3 needs instance_dir")
    if config.experiment == SVM_WISCONSIN and not config.svm_data:
        raise ConfigError("svm-wisconsin needs svm_data")
    return config


def config_from_dict(document: Dict[str, Any], base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Overlay a JSON document on base (defaults when None).

    Raises:
        ConfigError: On unknown keys or values of the wrong type.
    """
    if not isinstance(document, dict):
        raise ConfigError("a configuration must be a JSON object")
    names = {f.name for f in fields(ExperimentConfig)}
    unknown = set(document) - names
    if unknown:
        raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
    values = dict(vars(base)) if base is not None else dict(vars(ExperimentConfig()))
    values.update(document)
    try:
        config = ExperimentConfig(**values)
        config.seed = int(config.seed)
        config.realizations = int(config.realizations)
        config.sizes = [int(n) for n in config.sizes]
        config.taus = [float(t) for t in config.taus]
        config.splits = [float(f) for f in config.splits]
        config.jobs = None if config.jobs is None else int(config.jobs)
        config.eps_t = float(config.eps_t)
        config.eps_alpha = float(config.eps_alpha)
        config.methods = [str(m) for m in config.methods]
    except (TypeError, ValueError) as e:
        raise ConfigError(f"malformed configuration: {e}") from e
    return validate_config(config)


################################################################################
# Randomness and the worker pool
################################################################################


def instance_rng(seed: int, index: int) -> np.random.Generator:
    """Philox-4x64 stream keyed by seed in the low and index in the high 64 bits."""
    return np.random.Generator(np.random.Philox(key=int(seed) + (int(index) << 64)))


def worker_count(config: ExperimentConfig) -> int:
    """Processes a run of config uses."""
    if config.jobs is not None:
        return config.jobs
    if config.experiment in (FIG2, FIG3):
        return os.cpu_count() or 1
    return 1


def _pool_map(func: Callable, tasks: Sequence, config: ExperimentConfig) -> List:
    jobs = worker_count(config)
    if jobs > 1 and len(tasks) > 1:
        chunksize = max(1, len(tasks) // (4 * jobs))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(func, tasks, chunksize=chunksize))
    return [func(task) for task in tasks]


def _elapsed(start: float, record_time: bool) -> Optional[float]:
    return time.perf_counter() - start if record_time else None


################################################################################
# Concentration bounds
################################################################################


def gen_table1_spec(rng: np.random.Generator, n: int) -> Tuple[SumSpec, float]:
    """Draw N summands and a deviation level.

    E[X_k] ~ U(0, 1), a_k ~ U(-1, 0), b_k ~ U(0, 1), sigma_k ~ U(0, (b_k - a_k)/2)
    and alpha ~ U(0, b_bar). The open ends keep a_k < 0 and b_k > 0.

    Returns:
        Tuple[SumSpec, float]: The summands and alpha.
    """
    if n < 1:
        raise DomainError(f"N must be positive, got {n}")
    means = rng.uniform(0.0, 1.0, n)
    a = -(1.0 - rng.random(n))
    b = 1.0 - rng.random(n)
    sigma = rng.uniform(0.0, (b - a) / 2.0)
    spec = make_sum_spec(
        RandomTermSpec(mean=float(m), sigma=float(s), b_upper=float(bk), a_lower=float(ak))
        for m, s, bk, ak in zip(means, sigma, b, a)
    )
    alpha = float(rng.uniform(0.0, b_bar(spec)))
    return spec, alpha


def _tasks(config: ExperimentConfig) -> List[Tuple[ExperimentConfig, int, int]]:
    tasks = []
    for position, n in enumerate(config.sizes):
        for i in range(config.realizations):
            tasks.append((config, n, position * config.realizations + i))
    return tasks


FIG2_HEADER = ["N", "instance", "alpha", "phi_star", "hoeffding", "bennett", "cantelli", "jebara", "time"]


def _fig2_row(task) -> List[Any]:
    config, n, index = task
    spec, alpha = gen_table1_spec(instance_rng(config.seed, index), n)
    d = alpha * n
    start = time.perf_counter()
    refined = phi_star(spec, alpha, config.eps_t).value
    elapsed = _elapsed(start, config.record_time)
    return [
        n,
        index,
        alpha,
        refined,
        hoeffding_log_tail(spec, d),
        bennett_log_tail(spec, d),
        cantelli_log_tail(spec, d),
        jebara_log_tail(spec, d),
        elapsed,
    ]


def run_fig2(config: ExperimentConfig) -> str:
    """Log tail bounds of the refined and classical methods on random sums."""
    rows = _pool_map(_fig2_row, _tasks(config), config)
    logger.debug(f"fig2: {len(rows)} rows")
    return render_csv(FIG2_HEADER, rows)


FIG3_HEADER = ["N", "instance", "tau", "method", "confidence", "normal", "ratio", "trivial", "time"]


def _refined_confidence(spec: SumSpec, tau: float, config: ExperimentConfig) -> Tuple[float, bool]:
    if math.log(tau) <= log_tau_minus(spec):
        return b_bar(spec) * size(spec), True
    result = confidence_bound(spec, tau, config.eps_t, config.eps_alpha)
    return result.alpha_hat * size(spec), False


def normalized_confidences(spec: SumSpec, tau: float, config: ExperimentConfig) -> List[List[Any]]:
    """Confidence bounds at level tau divided by the Gaussian quantile.

    Hoeffding, Bennett and Cantelli hold for the Gaussian of the same variance,
    so their ratio is at least 1. The refined bound has no such floor: a
    summand with sigma above b has a light upper tail, and a short sum ruled
    by one summand can top out below the Gaussian quantile.

    Returns:
        List[List[Any]]: Rows [tau, method, confidence, normal, ratio,
        trivial, time], one per FIG3_METHODS entry.

    Raises:
        DomainError: If tau is not in (0, 0.5), where the quantile is positive.
    """
    if not 0 < tau < 0.5:
        raise DomainError(f"tau must lie in (0, 0.5), got {tau}")
    others = {
        HOEFFDING: hoeffding_confidence,
        BENNETT: bennett_confidence,
        CANTELLI: cantelli_confidence,
    }
    normal = normal_confidence(spec, tau)
    rows = []
    for method in FIG3_METHODS:
        start = time.perf_counter()
        trivial = False
        if method == REFINED:
            value, trivial = _refined_confidence(spec, tau, config)
        else:
            value = others[method](spec, tau)
        elapsed = _elapsed(start, config.record_time)
        ratio = value / normal if normal > 0 else math.inf
        rows.append([tau, method, value, normal, ratio, trivial, elapsed])
    return rows


def _fig3_rows(task) -> List[List[Any]]:
    config, n, index = task
    spec, _ = gen_table1_spec(instance_rng(config.seed, index), n)
    return [[n, index] + row for tau in config.taus for row in normalized_confidences(spec, tau, config)]


def run_fig3(config: ExperimentConfig) -> str:
    """Confidence bounds over the tau grid, divided by the Gaussian quantile."""
    validate_config(config)
    rows = [row for rows in _pool_map(_fig3_rows, _tasks(config), config) for row in rows]
    below = sum(1 for row in rows if row[3] == REFINED and row[6] < 1.0)
    logger.debug(f"fig3: {len(rows)} rows, {below} refined ratios below 1")
    return render_csv(FIG3_HEADER, rows)


MGF_HEADER = ["sample", "t", "gamma", "b", "p"]


def _mgf_row(task) -> List[Any]:
    config, index = task
    t, gamma, b, p = sample_chain_point(instance_rng(config.seed, index))
    checks = check_chain(t, gamma, b, p)
    return [index, t, gamma, b, p] + [c.slack for c in checks] + [all(c.holds for c in checks)]


def run_mgf_chain(config: ExperimentConfig) -> str:
    """Slack of every estimator inequality at random in-domain points."""
    names = [c.name for c in check_chain(0.0, 1.0, 1.0, 0.5)]
    tasks = [(config, i) for i in range(config.realizations)]
    rows = _pool_map(_mgf_row, tasks, config)
    return render_csv(MGF_HEADER + names + ["all_hold"], rows)


################################################################################
# Knapsack
################################################################################

TABLE3_HEADER = ["Instance", "KP", "CKP-N", "CKP-Refined", "Prob", "Time", "CKP-B", "CKP-C", "CKP-H"]


def _table3_row(task) -> List[Any]:
    config, path, index = task
    instance = load_knapsack_instance(
        path, tau=config.tau, sigma_rule=config.sigma_rule, rng=instance_rng(config.seed, index)
    )
    results = {}
    for formulation in TABLE3_FORMULATIONS:
        results[formulation] = solve_ckp(instance, formulation, time_limit=config.time_limit)
        logger.debug(f"table3 {instance.name}: {formulation} = {results[formulation].objective:.10g}")
    refined = results[CKP_REFINED]
    return [
        instance.name,
        results[KP].objective,
        results[CKP_N].objective,
        refined.objective,
        100.0 * refined.probability,
        refined.wall_time if config.record_time else None,
        results[CKP_B].objective,
        results[CKP_C].objective,
        results[CKP_H].objective,
    ]


def run_table3(config: ExperimentConfig) -> str:
    """Every formulation on every instance of instance_dir; Prob in percent."""
    paths = get_files_from_args([config.instance_dir]) if config.instance_dir else []
    tasks = [(config, path, index) for index, path in enumerate(paths)]
    return render_csv(TABLE3_HEADER, _pool_map(_table3_row, tasks, config))


################################################################################
# SVM
################################################################################

SVM_HEADER = ["split", "seed", "method", "score", "objective", "margin", "status", "time"]


def _load_svm_source(config: ExperimentConfig):
    points, labels = load_svm_csv(config.svm_data)
    overrides = load_svm_sidecar(config.svm_sidecar) if config.svm_sidecar else {}
    return points, labels, overrides


def _svm_rows(task) -> List[List[Any]]:
    config, split, seed_index, index = task
    rng = instance_rng(config.seed, index)
    tau = 0.02 if config.tau is None else config.tau
    overrides: Dict[str, Any] = {}
    if config.experiment == SVM_WISCONSIN:
        points, labels, overrides = _load_svm_source(config)
    else:
        points, labels = generate_two_class_2d(rng, config.points, config.separation)
    full = make_dataset(
        points,
        labels,
        tau=overrides.get("tau", tau),
        penalty=overrides.get("penalty", config.penalty),
        sigmas=overrides.get("sigmas"),
        b_upper=overrides.get("b"),
    )
    train, test = split_dataset(full, split, rng)
    if "sigmas" not in overrides:
        # calibrated on the training points only
        train = make_dataset(train.points, train.labels, tau=train.tau, penalty=train.penalty)
    rows = []
    for method in config.methods:
        solution = solve_svm(train, method)
        rows.append(
            [
                split,
                seed_index,
                method,
                svm_score(solution, test.points, test.labels),
                solution.objective,
                margin_width(solution),
                solution.status,
                solution.wall_time if config.record_time else None,
            ]
        )
    return rows


def run_svm(config: ExperimentConfig) -> str:
    """Test score of each method over training fractions and seeds."""
    tasks = []
    for position, split in enumerate(config.splits):
        for seed_index in range(config.realizations):
            tasks.append((config, split, seed_index, position * config.realizations + seed_index))
    nested = _pool_map(_svm_rows, tasks, config)
    return render_csv(SVM_HEADER, [row for rows in nested for row in rows])


RUNNERS = {
    FIG2: run_fig2,
    FIG3: run_fig3,
    TABLE3: run_table3,
    SVM2D: run_svm,
    SVM_WISCONSIN: run_svm,
    MGF_CHAIN: run_mgf_chain,
}


def run_experiment(config: ExperimentConfig) -> str:
    """Run config.experiment and write <output_dir>/<experiment>.csv when asked."""
    validate_config(config)
    start = time.perf_counter()
    text = RUNNERS[config.experiment](config)
    logger.debug(f"{config.experiment} finished in {time.perf_counter() - start:.3f}s")
    if config.output_dir:
        os.makedirs(config.output_dir, exist_ok=True)
        path = os.path.join(config.output_dir, f"{config.experiment}.csv")
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        logger.debug(f"Wrote {path}")
    return text
