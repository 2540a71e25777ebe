"""Chance-constrained binary knapsack.

Maximise profits . y over y in {0, 1}^N such that the random load omega . y
stays below the capacity C with probability at least 1 - tau. Each
formulation replaces the chance constraint by a deterministic one:

    KP       omega_bar . y <= C  (no uncertainty)
    N        Phi^-1(1 - tau) sqrt(sum sigma^2 y^2) + omega_bar . y <= C
    H        sqrt(2 ln(1/tau)) sqrt(sum b^2 y^2) + omega_bar . y <= C
    C        sqrt(1/tau - 1) sqrt(sum sigma^2 y^2) + omega_bar . y <= C
    B        L z / 3 + sqrt(2 L sum sigma^2 y^2 + L^2 z^2 / 9) + omega_bar . y <= C,
             L = ln(1/tau), z >= max b_k y_k
    Refined  omega_bar . y + sum Psi+_k(y_k, z) - C - z ln(tau) <= 0, z >= 0

Every formulation is solved by outer approximation: the master problem holds
the budget row only and the branch and bound asks a lazy callback about each
integral point, which answers with a tangent cut when the convex constraint
is violated.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from .baselines import norm_ppf
from .bisection import phi_star
from .data import RandomTermSpec, make_sum_spec
from .errors import DomainError
from .milp import (
    BINARY,
    BOUND_LINK,
    BUDGET,
    CONTINUOUS,
    FEAS_TOL,
    GE,
    LE,
    MIP_GAP,
    NODE_LIMIT,
    OUTER_APPROX,
    LinearCut,
    MilpModel,
    add_constraint,
    add_variable,
    bnb_solve,
)
from .perspective import psi_plus, psi_plus_grad

logger = logging.getLogger("ccb")
logger.setLevel(logging.CRITICAL)  # Start with logging disabled

KP = "KP"
NORMAL = "N"
HOEFFDING = "H"
CANTELLI = "C"
BERNSTEIN = "B"
REFINED = "Refined"
FORMULATIONS = (KP, NORMAL, HOEFFDING, CANTELLI, BERNSTEIN, REFINED)

SIGMA_FIXED = "fixed"
SIGMA_RANDOM = "random"
SIGMA_RULES = (SIGMA_FIXED, SIGMA_RANDOM)
SIGMA_FRACTION = 0.05
B_FACTOR = 5.0
DEFAULT_TAU = 0.03

Z_ROOT_XTOL = 1e-12


@dataclass
class KnapsackInstance:
    """A knapsack with independent random weights.

    Note: Operations on KnapsackInstance objects should be performed using
    functions, not methods. This class is intended to be used as a data holder
    only.

    Attributes:
        profits (np.ndarray): pi_k > 0.
        mean_weights (np.ndarray): omega_bar_k > 0.
        sigmas (np.ndarray): Standard deviation bounds, >= 0.
        b_upper (np.ndarray): Deviation bounds, |omega_k - omega_bar_k| <= b_k.
        capacity (float): C > 0.
        tau (float): Error level in (0, 1).
        name (str): Label used in reports.
    """

    profits: np.ndarray
    mean_weights: np.ndarray
    sigmas: np.ndarray
    b_upper: np.ndarray
    capacity: float
    tau: float
    name: str = ""


@dataclass
class KnapsackSolution:
    """Outcome of solve_ckp.

    Attributes:
        y (np.ndarray): 0/1 selection.
        z (Optional[float]): Auxiliary variable for B and Refined.
        objective (float): profits . y.
        formulation (str): One of FORMULATIONS.
        certificate (float): The formulation's constraint value at (y, z);
            <= FEAS_TOL when feasible.
        probability (float): exp(phi*) of the selected items at deviation
            C - omega_bar . y, i.e. the refined bound on P[omega . y > C].
        status (str): Status of the branch and bound.
        cuts_added (int): Outer-approximation rows added.
        nodes (int): Branch-and-bound nodes solved.
        wall_time (float): Seconds spent in solve_ckp.
    """

    y: np.ndarray
    z: Optional[float]
    objective: float
    formulation: str
    certificate: float
    probability: float
    status: str
    cuts_added: int = 0
    nodes: int = 0
    wall_time: float = 0.0


################################################################################
# Instances
################################################################################


def validate_instance(instance: KnapsackInstance) -> KnapsackInstance:
    """Check shapes and signs of an instance.

    Raises:
        DomainError: On mismatched lengths or values outside their domain.
    """
    n = len(instance.profits)
    arrays = (instance.mean_weights, instance.sigmas, instance.b_upper)
    if n == 0 or any(len(a) != n for a in arrays):
        raise DomainError("profits, mean_weights, sigmas and b must have the same positive length")
    if np.any(instance.profits <= 0) or np.any(instance.mean_weights <= 0):
        raise DomainError("profits and mean weights must be positive")
    if np.any(instance.sigmas < 0):
        raise DomainError("sigmas must be non-negative")
    if np.any(instance.b_upper <= 0):
        raise DomainError("deviation bounds b must be positive")
    if not instance.capacity > 0:
        raise DomainError(f"capacity must be positive, got {instance.capacity}")
    if not 0 < instance.tau < 1:
        raise DomainError(f"tau must lie in (0, 1), got {instance.tau}")
    return instance


def make_instance(profits, mean_weights, sigmas, b_upper, capacity, tau, name="") -> KnapsackInstance:
    return validate_instance(
        KnapsackInstance(
            profits=np.asarray(profits, dtype=float),
            mean_weights=np.asarray(mean_weights, dtype=float),
            sigmas=np.asarray(sigmas, dtype=float),
            b_upper=np.asarray(b_upper, dtype=float),
            capacity=float(capacity),
            tau=float(tau),
            name=name,
        )
    )


def adapt_instance(
    profits,
    weights,
    capacity: float,
    tau: float = DEFAULT_TAU,
    sigma_rule: str = SIGMA_FIXED,
    rng: Optional[np.random.Generator] = None,
    name: str = "",
) -> KnapsackInstance:
    """Turn a deterministic knapsack into a chance-constrained one.

    sigma_k = 0.05 omega_bar_k under the "fixed" rule, or drawn uniformly in
    (0, 0.05 omega_bar_k] under the "random" rule; b_k = 5 sigma_k.

    Raises:
        DomainError: On an unknown rule, or the random rule without rng.
    """
    weights = np.asarray(weights, dtype=float)
    if sigma_rule == SIGMA_FIXED:
        sigma = SIGMA_FRACTION * weights
    elif sigma_rule == SIGMA_RANDOM:
        if rng is None:
            raise DomainError("the random sigma rule needs a generator")
        # 1 - U[0, 1) lies in (0, 1]
        sigma = SIGMA_FRACTION * weights * (1.0 - rng.random(weights.size))
    else:
        raise DomainError(f"unknown sigma rule {sigma_rule!r}; expected one of {SIGMA_RULES}")
    logger.debug(f"Adapted instance {name!r}: N={weights.size}, rule={sigma_rule}, tau={tau}")
    return make_instance(profits, weights, sigma, B_FACTOR * sigma, capacity, tau, name)


def instance_to_dict(instance: KnapsackInstance) -> Dict[str, Any]:
    return {
        "name": instance.name,
        "profits": instance.profits.tolist(),
        "mean_weights": instance.mean_weights.tolist(),
        "sigmas": instance.sigmas.tolist(),
        "b": instance.b_upper.tolist(),
        "capacity": instance.capacity,
        "tau": instance.tau,
    }


def instance_from_dict(document: Dict[str, Any]) -> KnapsackInstance:
    """Inverse of instance_to_dict.

    Raises:
        DomainError: If a key is missing or a value is invalid.
    """
    try:
        return make_instance(
            document["profits"],
            document["mean_weights"],
            document["sigmas"],
            document["b"],
            document["capacity"],
            document["tau"],
            document.get("name", ""),
        )
    except (KeyError, TypeError) as e:
        raise DomainError(f"malformed knapsack instance: {e}") from e


################################################################################
# Constraint values
################################################################################


def _kappa(formulation: str, tau: float) -> float:
    if formulation == NORMAL:
        return -norm_ppf(tau)
    if formulation == HOEFFDING:
        return math.sqrt(2.0 * math.log(1.0 / tau))
    return math.sqrt(1.0 / tau - 1.0)


def _quadratic_weights(instance: KnapsackInstance, formulation: str) -> np.ndarray:
    if formulation == HOEFFDING:
        return instance.b_upper**2
    return instance.sigmas**2


def _random_mask(instance: KnapsackInstance) -> np.ndarray:
    return instance.sigmas > 0


def _gammas(instance: KnapsackInstance) -> np.ndarray:
    return (instance.sigmas / instance.b_upper) ** 2


def _refined_value(instance: KnapsackInstance, y: np.ndarray, z: float) -> float:
    mask = _random_mask(instance)
    psi_sum = float(np.sum(psi_plus(_gammas(instance)[mask], instance.b_upper[mask], y[mask], z)))
    return float(instance.mean_weights @ y) + psi_sum - instance.capacity - z * math.log(instance.tau)


def _refined_dz(instance: KnapsackInstance, y: np.ndarray, z: float) -> float:
    mask = _random_mask(instance)
    _, dz = psi_plus_grad(_gammas(instance)[mask], instance.b_upper[mask], y[mask], z)
    return float(np.sum(dz)) - math.log(instance.tau)


def refined_min_z(instance: KnapsackInstance, y) -> Tuple[float, float]:
    """Minimise the refined constraint value over z >= 0 for a fixed y.

    The value is convex in z with slope ln(tau_minus of the selection) -
    ln(tau) at 0 and -ln(tau) at infinity, so the minimiser is 0 when the
    first slope is non-negative and a root of the slope otherwise.

    Returns:
        Tuple[float, float]: (z, constraint value at z).
    """
    y = np.asarray(y, dtype=float)
    if _refined_dz(instance, y, 0.0) >= 0:
        return 0.0, _refined_value(instance, y, 0.0)
    hi = max(1.0, float(np.max(instance.b_upper)))
    while _refined_dz(instance, y, hi) < 0:
        hi *= 2.0
    z = brentq(lambda v: _refined_dz(instance, y, v), 0.0, hi, xtol=Z_ROOT_XTOL)
    return float(z), _refined_value(instance, y, z)


def bernstein_z(instance: KnapsackInstance, y) -> float:
    """Smallest admissible z for B, max_k b_k y_k."""
    y = np.asarray(y, dtype=float)
    return float(np.max(instance.b_upper * y, initial=0.0))


def _bernstein_value(instance: KnapsackInstance, y: np.ndarray, z: float) -> float:
    log_inv = math.log(1.0 / instance.tau)
    variance = float(np.sum(instance.sigmas**2 * y * y))
    norm = math.sqrt(2.0 * log_inv * variance + (log_inv * z) ** 2 / 9.0)
    return log_inv * z / 3.0 + norm + float(instance.mean_weights @ y) - instance.capacity


def ckp_constraint_value(instance: KnapsackInstance, formulation: str, y, z: Optional[float] = None) -> float:
    """Left minus right side of a formulation's constraint; <= 0 iff feasible.

    Args:
        instance (KnapsackInstance): The instance.
        formulation (str): One of FORMULATIONS.
        y: Selection vector.
        z (Optional[float]): Auxiliary variable of B and Refined. When None,
            the value is minimised over z (max_k b_k y_k for B).

    Raises:
        DomainError: On an unknown formulation, a wrong length or z < 0.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != instance.profits.shape:
        raise DomainError(f"selection has shape {y.shape}, expected {instance.profits.shape}")
    if z is not None and z < 0:
        raise DomainError(f"z must be non-negative, got {z}")
    load = float(instance.mean_weights @ y)
    if formulation == KP:
        return load - instance.capacity
    if formulation in (NORMAL, HOEFFDING, CANTELLI):
        quad = float(np.sum(_quadratic_weights(instance, formulation) * y * y))
        return _kappa(formulation, instance.tau) * math.sqrt(quad) + load - instance.capacity
    if formulation == BERNSTEIN:
        return _bernstein_value(instance, y, bernstein_z(instance, y) if z is None else z)
    if formulation == REFINED:
        if z is None:
            return refined_min_z(instance, y)[1]
        return _refined_value(instance, y, z)
    raise DomainError(f"unknown formulation {formulation!r}; expected one of {FORMULATIONS}")


def bernstein_exponent(instance: KnapsackInstance, y, z: float) -> float:
    """log of the exponential form of B, -d^2 / (2 V + 2 z d / 3) with d = C - omega_bar . y.

    +inf when d < 0 (mean load already over capacity), -inf when the
    denominator vanishes with d > 0.
    """
    y = np.asarray(y, dtype=float)
    d = instance.capacity - float(instance.mean_weights @ y)
    if d < 0:
        return math.inf
    denominator = 2.0 * float(np.sum(instance.sigmas**2 * y * y)) + 2.0 * z * d / 3.0
    if denominator <= 0:
        return -math.inf if d > 0 else 0.0
    return -d * d / denominator


def ckp_b_socp_equivalence(instance: KnapsackInstance, y, z: float, tol: float = 1e-9) -> bool:
    """Whether the exponential and the second-order cone forms of B agree.

    Both forms are read with the same tolerance tol, so points on the common
    boundary count as feasible for both.
    """
    exp_ok = bernstein_exponent(instance, y, z) <= math.log(instance.tau) + tol
    socp_ok = _bernstein_value(instance, np.asarray(y, dtype=float), z) <= tol
    return exp_ok == socp_ok


def probability_certificate(instance: KnapsackInstance, y) -> float:
    """exp(phi*) for the selected items at deviation C - omega_bar . y.

    0 when no random item is selected and the mean load fits, 1 when the mean
    load already exceeds the capacity.
    """
    y = np.asarray(y, dtype=float)
    chosen = np.flatnonzero(y > 0.5)
    slack = instance.capacity - float(instance.mean_weights @ y)
    if slack < 0:
        return 1.0
    if not np.any(instance.sigmas[chosen] > 0):
        return 0.0
    spec = make_sum_spec(
        RandomTermSpec(
            mean=float(instance.mean_weights[k]),
            sigma=float(instance.sigmas[k]),
            b_upper=float(instance.b_upper[k]),
        )
        for k in chosen
    )
    return math.exp(phi_star(spec, slack / chosen.size).value)


################################################################################
# Lazy cuts
################################################################################


def _y_names(n: int) -> List[str]:
    return [f"y{k}" for k in range(n)]


def _selection(assignment: Dict[str, float], names: List[str]) -> np.ndarray:
    return np.array([round(assignment[name]) for name in names], dtype=float)


def _norm_callback(instance: KnapsackInstance, formulation: str, names: List[str]):
    kappa = _kappa(formulation, instance.tau)
    weights = _quadratic_weights(instance, formulation)

    def callback(assignment):
        y = _selection(assignment, names)
        if ckp_constraint_value(instance, formulation, y) <= FEAS_TOL:
            return []
        # tangent of kappa sqrt(y'Qy) at y*, exact at y* and below it elsewhere
        norm = math.sqrt(float(np.sum(weights * y * y)))
        coefs = instance.mean_weights + kappa * weights * y / norm
        row = {name: float(a) for name, a in zip(names, coefs)}
        return [LinearCut(row, LE, instance.capacity, OUTER_APPROX)]

    return callback


def _bernstein_callback(instance: KnapsackInstance, names: List[str]):
    log_inv = math.log(1.0 / instance.tau)
    q = 2.0 * log_inv * instance.sigmas**2

    def callback(assignment):
        y = _selection(assignment, names)
        z_hat = bernstein_z(instance, y)
        if _bernstein_value(instance, y, z_hat) <= FEAS_TOL:
            return []
        norm = math.sqrt(float(np.sum(q * y * y)) + (log_inv * z_hat) ** 2 / 9.0)
        coefs = instance.mean_weights + q * y / norm
        row = {name: float(a) for name, a in zip(names, coefs)}
        row["z"] = log_inv / 3.0 + log_inv**2 * z_hat / (9.0 * norm)
        cuts = [LinearCut(row, LE, instance.capacity, OUTER_APPROX)]
        if assignment["z"] < z_hat - FEAS_TOL:
            k = int(np.argmax(instance.b_upper * y))
            cuts.append(LinearCut({"z": 1.0, names[k]: -float(instance.b_upper[k])}, GE, 0.0, BOUND_LINK))
        return cuts

    return callback


def _refined_callback(instance: KnapsackInstance, names: List[str]):
    mask = _random_mask(instance)
    gam = _gammas(instance)
    log_tau = math.log(instance.tau)

    def callback(assignment):
        y = _selection(assignment, names)
        z_g, value = refined_min_z(instance, y)
        if value <= FEAS_TOL:
            return []
        # Psi+ is 1-homogeneous, so its tangent plane at (y*, z_g) passes
        # through the origin and the cut keeps every feasible (y, z).
        dy = np.zeros(y.size)
        dz = np.zeros(y.size)
        dy[mask], dz[mask] = psi_plus_grad(gam[mask], instance.b_upper[mask], y[mask], z_g)
        coefs = instance.mean_weights + dy
        row = {name: float(a) for name, a in zip(names, coefs)}
        row["z"] = float(np.sum(dz)) - log_tau
        logger.debug(f"Refined cut at z={z_g:.6g}, violation {value:.3g}")
        return [LinearCut(row, LE, instance.capacity, OUTER_APPROX)]

    return callback


################################################################################
# Solve
################################################################################


def z_upper_bound(instance: KnapsackInstance) -> float:
    """Box for the master's z, C / ln(1/tau) + sum b_k."""
    return instance.capacity / math.log(1.0 / instance.tau) + float(np.sum(instance.b_upper))


def build_master(instance: KnapsackInstance, formulation: str) -> Tuple[MilpModel, List[str]]:
    """The master problem: binaries, the z variable where needed, the budget row."""
    model = MilpModel()
    names = _y_names(len(instance.profits))
    for name in names:
        add_variable(model, name, BINARY)
    if formulation in (BERNSTEIN, REFINED):
        add_variable(model, "z", CONTINUOUS, 0.0, z_upper_bound(instance))
    model.objective = {name: float(p) for name, p in zip(names, instance.profits)}
    budget = {name: float(w) for name, w in zip(names, instance.mean_weights)}
    add_constraint(model, LinearCut(budget, LE, instance.capacity, BUDGET))
    return model, names


def _callback(instance: KnapsackInstance, formulation: str, names: List[str]):
    if formulation == KP:
        return None
    if formulation in (NORMAL, HOEFFDING, CANTELLI):
        return _norm_callback(instance, formulation, names)
    if formulation == BERNSTEIN:
        return _bernstein_callback(instance, names)
    return _refined_callback(instance, names)


def solve_ckp(
    instance: KnapsackInstance,
    formulation: str,
    mip_gap: float = MIP_GAP,
    time_limit: Optional[float] = None,
    node_limit: int = NODE_LIMIT,
) -> KnapsackSolution:
    """Solve one formulation by outer approximation.

    Args:
        instance (KnapsackInstance): The instance.
        formulation (str): One of FORMULATIONS.
        mip_gap (float): Relative pruning gap of the branch and bound.
        time_limit (Optional[float]): Wall-clock seconds.
        node_limit (int): Node budget.

    Returns:
        KnapsackSolution: The best selection found; status INFEASIBLE with
        an empty selection if nothing is feasible.

    Raises:
        DomainError: On an unknown formulation or an invalid instance.
    """
    if formulation not in FORMULATIONS:
        raise DomainError(f"unknown formulation {formulation!r}; expected one of {FORMULATIONS}")
    validate_instance(instance)
    start = time.perf_counter()
    model, names = build_master(instance, formulation)
    result = bnb_solve(
        model,
        _callback(instance, formulation, names),
        mip_gap=mip_gap,
        node_limit=node_limit,
        time_limit=time_limit,
    )
    n = len(names)
    if not result.assignment:
        logger.debug(f"{formulation} on {instance.name!r}: {result.status}")
        return KnapsackSolution(
            y=np.zeros(n, dtype=int),
            z=None,
            objective=-math.inf,
            formulation=formulation,
            certificate=math.inf,
            probability=1.0,
            status=result.status,
            cuts_added=result.cuts_added,
            nodes=result.nodes_explored,
            wall_time=time.perf_counter() - start,
        )

    y = _selection(result.assignment, names)
    z: Optional[float] = None
    if formulation == REFINED:
        z, certificate = refined_min_z(instance, y)
    elif formulation == BERNSTEIN:
        z = bernstein_z(instance, y)
        certificate = ckp_constraint_value(instance, formulation, y, z)
    else:
        certificate = ckp_constraint_value(instance, formulation, y)
    wall_time = time.perf_counter() - start
    logger.debug(
        f"{formulation} on {instance.name!r}: objective {result.objective_value:.10g}, "
        f"{result.cuts_added} cuts, {result.nodes_explored} nodes, {wall_time:.3f}s"
    )
    return KnapsackSolution(
        y=y.astype(int),
        z=z,
        objective=float(instance.profits @ y),
        formulation=formulation,
        certificate=certificate,
        probability=probability_certificate(instance, y),
        status=result.status,
        cuts_added=result.cuts_added,
        nodes=result.nodes_explored,
        wall_time=wall_time,
    )


def enumerate_ckp(instance: KnapsackInstance, formulation: str) -> Tuple[float, np.ndarray]:
    """Exhaustive search over all 2^N selections, for small N.

    Returns:
        Tuple[float, np.ndarray]: Best objective and one optimal selection.
    """
    n = len(instance.profits)
    best_value, best_y = 0.0, np.zeros(n, dtype=int)
    for mask in range(1 << n):
        y = np.array([(mask >> k) & 1 for k in range(n)], dtype=float)
        value = float(instance.profits @ y)
        if value <= best_value:
            continue
        if ckp_constraint_value(instance, formulation, y) <= FEAS_TOL:
            best_value, best_y = value, y.astype(int)
    return best_value, best_y
