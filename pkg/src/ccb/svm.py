"""Distributionally robust soft-margin linear SVM.

Each training point x_i is only known through its mean x_bar_i and, per
feature, a standard deviation bound sigma_ik and a two-sided deviation bound
b_ik. The margin constraint of point i must hold with probability 1 - tau_i
for every distribution matching those moments:

    Refined       -l_i (w0 + w . x_bar_i) + sum_k Psi_ik(w_k, z_i) <= xi_i - 1 + z_i ln(tau_i)
    Cantelli      -l_i (w0 + w . x_bar_i) + kappa_i ||Sigma_i^1/2 w|| <= xi_i - 1
    Deterministic -l_i (w0 + w . x_bar_i) <= xi_i - 1

with the objective 1/2 ||w||^2 + C sum_i xi_i. All three are solved by the
same log-barrier method with damped Newton steps. The Newton system is
reduced to the (w, w0) block by eliminating each point's (xi_i, z_i) block.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import DomainError
from .perspective import psi, psi_grad, psi_hess

logger = logging.getLogger("ccb")
logger.setLevel(logging.CRITICAL)  # Start with logging disabled

REFINED = "Refined"
CANTELLI = "Cantelli"
DETERMINISTIC = "Deterministic"
METHODS = (REFINED, CANTELLI, DETERMINISTIC)

CONVERGED = "converged"
NOT_CONVERGED = "not_converged"

Z_MIN = 1e-9
NORM_EPS = 1e-9
T_START = 1.0
T_FACTOR = 10.0
DUALITY_TOL = 1e-8
NEWTON_TOL = 1e-10
MAX_OUTER = 60
MAX_NEWTON = 200
ARMIJO = 0.25
SHRINK = 0.5
MIN_STEP = 1e-16
RESIDUAL_TOL = 1e-6

CLASS_STD_DIVISOR = 10.0
B_FACTOR = 5.0
DEFAULT_TAU = 0.02
DEFAULT_PENALTY = 100.0


@dataclass
class SvmDataset:
    """Labelled points with per-feature uncertainty.

    Note: Operations on SvmDataset objects should be performed using
    functions, not methods. This class is intended to be used as a data holder
    only.

    Attributes:
        points (np.ndarray): Means x_bar_i, shape (M, N).
        labels (np.ndarray): l_i in {-1, +1}, shape (M,).
        sigmas (np.ndarray): sigma_ik >= 0, shape (M, N).
        b_upper (np.ndarray): b_ik > 0 with |x_ik - x_bar_ik| <= b_ik, shape (M, N).
        tau (np.ndarray): tau_i in (0, 1), shape (M,).
        penalty (float): C > 0.
    """

    points: np.ndarray
    labels: np.ndarray
    sigmas: np.ndarray
    b_upper: np.ndarray
    tau: np.ndarray
    penalty: float = DEFAULT_PENALTY


@dataclass
class SvmSolution:
    """Hyperplane w . x + w0 = 0 with slacks.

    Attributes:
        w (np.ndarray): Normal vector.
        w0 (float): Offset.
        xi (np.ndarray): Slacks, >= 0.
        z (Optional[np.ndarray]): Auxiliary variables of the refined method.
        objective (float): 1/2 ||w||^2 + C sum xi.
        residuals (np.ndarray): Margin constraint values, <= 0 when feasible.
        method (str): One of METHODS.
        status (str): CONVERGED or NOT_CONVERGED.
        outer_iterations (int): Barrier parameter updates.
        newton_steps (int): Newton steps over all outer iterations.
        wall_time (float): Seconds.
    """

    w: np.ndarray
    w0: float
    xi: np.ndarray
    z: Optional[np.ndarray]
    objective: float
    residuals: np.ndarray
    method: str
    status: str
    outer_iterations: int = 0
    newton_steps: int = 0
    wall_time: float = 0.0


################################################################################
# Datasets
################################################################################


def validate_dataset(dataset: SvmDataset) -> SvmDataset:
    """Check shapes, labels and signs.

    Raises:
        DomainError: If the dataset is inconsistent.
    """
    points = dataset.points
    if points.ndim != 2 or points.shape[0] == 0:
        raise DomainError(f"points must be a non-empty (M, N) array, got shape {points.shape}")
    m = points.shape[0]
    if dataset.labels.shape != (m,) or dataset.tau.shape != (m,):
        raise DomainError("labels and tau need one entry per point")
    if dataset.sigmas.shape != points.shape or dataset.b_upper.shape != points.shape:
        raise DomainError("sigmas and b need the shape of points")
    if not np.all(np.isin(dataset.labels, (-1, 1))):
        raise DomainError("labels must be -1 or +1")
    if np.any(dataset.sigmas < 0) or np.any(dataset.b_upper <= 0):
        raise DomainError("sigmas must be non-negative and b positive")
    if np.any(dataset.tau <= 0) or np.any(dataset.tau >= 1):
        raise DomainError("tau must lie in (0, 1)")
    if not dataset.penalty > 0:
        raise DomainError(f"penalty C must be positive, got {dataset.penalty}")
    if len(np.unique(dataset.labels)) < 2:
        logger.warning("Only one class present; the hyperplane is not meaningful")
    return dataset


def calibrate_uncertainty(
    points,
    labels,
    divisor: float = CLASS_STD_DIVISOR,
    b_factor: float = B_FACTOR,
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-class feature standard deviation divided by divisor; b = b_factor sigma.

    Features with zero spread in a class get sigma = 0 and b = 1; they are
    deterministic and b does not enter.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (sigmas, b_upper), each shaped like points.
    """
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    sigmas = np.zeros_like(points)
    for label in np.unique(labels):
        rows = labels == label
        sigmas[rows] = np.std(points[rows], axis=0) / divisor
    b_upper = np.where(sigmas > 0, b_factor * sigmas, 1.0)
    return sigmas, b_upper


def make_dataset(
    points,
    labels,
    tau=DEFAULT_TAU,
    penalty: float = DEFAULT_PENALTY,
    sigmas=None,
    b_upper=None,
) -> SvmDataset:
    """Build a validated dataset, calibrating sigma and b when not given."""
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if sigmas is None or b_upper is None:
        calibrated = calibrate_uncertainty(points, labels)
        sigmas = calibrated[0] if sigmas is None else sigmas
        b_upper = calibrated[1] if b_upper is None else b_upper
    tau = np.broadcast_to(np.asarray(tau, dtype=float), labels.shape).copy()
    return validate_dataset(
        SvmDataset(
            points=points,
            labels=labels,
            sigmas=np.asarray(sigmas, dtype=float),
            b_upper=np.asarray(b_upper, dtype=float),
            tau=tau,
            penalty=float(penalty),
        )
    )


def subset(dataset: SvmDataset, rows: np.ndarray) -> SvmDataset:
    return SvmDataset(
        points=dataset.points[rows],
        labels=dataset.labels[rows],
        sigmas=dataset.sigmas[rows],
        b_upper=dataset.b_upper[rows],
        tau=dataset.tau[rows],
        penalty=dataset.penalty,
    )


def generate_two_class_2d(
    rng: np.random.Generator,
    m: int = 100,
    separation: float = 4.0,
    spread: float = 0.5,
) -> Tuple[np.ndarray, np.ndarray]:
    """Two Gaussian clouds centred at (+-separation/2, 0).

    The instance is symmetric under x -> -x (which swaps the classes) and
    under y -> -y, so the optimal hyperplane of every method is x = 0.

    Args:
        rng (np.random.Generator): Source of randomness.
        m (int): Number of points, a multiple of 4.
        separation (float): Distance between the class centres.
        spread (float): Standard deviation of each cloud.

    Returns:
        Tuple[np.ndarray, np.ndarray]: points (m, 2) and labels (m,).
    """
    if m < 4 or m % 4:
        raise DomainError(f"m must be a positive multiple of 4, got {m}")
    quarter = rng.normal(0.0, spread, size=(m // 4, 2))
    quarter[:, 0] += separation / 2.0
    positive = np.vstack([quarter, quarter * np.array([1.0, -1.0])])
    negative = positive * np.array([-1.0, 1.0])
    points = np.vstack([positive, negative])
    labels = np.concatenate([np.ones(m // 2, dtype=int), -np.ones(m // 2, dtype=int)])
    return points, labels


################################################################################
# Constraint pieces
################################################################################

# For each point i the margin constraint g_i <= 0 depends on the shared
# variables s = (w, w0) and on the local ones (xi_i[, z_i]). _Pieces holds
# g, its gradient split into shared/local parts and its Hessian blocks.


@dataclass
class _Pieces:
    g: np.ndarray  # (M,)
    grad_s: np.ndarray  # (M, S)
    grad_l: np.ndarray  # (M, P)
    hess_ss: np.ndarray  # (M, S, S)
    hess_sl: np.ndarray  # (M, S, P)
    hess_ll: np.ndarray  # (M, P, P)


class _Problem:
    def __init__(self, dataset: SvmDataset, method: str):
        self.data = dataset
        self.method = method
        self.m, self.n = dataset.points.shape
        self.s = self.n + 1
        self.p = 2 if method == REFINED else 1
        self.active = dataset.sigmas > 0
        gam = np.where(self.active, (dataset.sigmas / dataset.b_upper) ** 2, 1.0)
        self.gamma = gam
        self.b = np.where(self.active, dataset.b_upper, 1.0)
        self.log_tau = np.log(dataset.tau)
        if method == CANTELLI:
            self.kappa = np.sqrt(1.0 / dataset.tau - 1.0)
        else:
            self.kappa = np.zeros(self.m)

    def split(self, v: np.ndarray):
        n, m = self.n, self.m
        w, w0 = v[:n], v[n]
        xi = v[n + 1 : n + 1 + m]
        z = v[n + 1 + m :] if self.p == 2 else None
        return w, w0, xi, z

    def start(self) -> np.ndarray:
        """w = 0, w0 = 0, z = 1 and xi chosen so that every g_i = -1."""
        if self.p == 2:
            z = np.ones(self.m)
            xi = 2.0 - z * self.log_tau
            return np.concatenate([np.zeros(self.s), xi, z])
        return np.concatenate([np.zeros(self.s), np.full(self.m, 2.0)])

    def objective(self, v: np.ndarray) -> float:
        w, _, xi, _ = self.split(v)
        return 0.5 * float(w @ w) + self.data.penalty * float(np.sum(xi))

    def interior(self, v: np.ndarray) -> bool:
        _, _, xi, z = self.split(v)
        return bool(np.all(xi > 0) and (z is None or np.all(z > Z_MIN)))

    def values(self, v: np.ndarray) -> np.ndarray:
        w, w0, xi, z = self.split(v)
        d = self.data
        g = -d.labels * (d.points @ w + w0) + 1.0 - xi
        if self.p == 2:
            terms = psi(self.gamma, self.b, w[None, :], z[:, None])
            g = g + np.sum(np.where(self.active, terms, 0.0), axis=1) - z * self.log_tau
        else:
            sig2 = d.sigmas**2
            g = g + self.kappa * (np.sqrt(sig2 @ (w * w) + NORM_EPS**2) - NORM_EPS)
        return g

    def pieces(self, v: np.ndarray) -> _Pieces:
        w, _, _, z = self.split(v)
        d = self.data
        m, n, s, p = self.m, self.n, self.s, self.p
        g = self.values(v)
        grad_s = np.empty((m, s))
        grad_s[:, :n] = -d.labels[:, None] * d.points
        grad_s[:, n] = -d.labels
        grad_l = np.zeros((m, p))
        grad_l[:, 0] = -1.0
        hess_ss = np.zeros((m, s, s))
        hess_sl = np.zeros((m, s, p))
        hess_ll = np.zeros((m, p, p))
        if p == 2:
            dy, dz = psi_grad(self.gamma, self.b, w[None, :], z[:, None])
            hess = psi_hess(self.gamma, self.b, w[None, :], z[:, None])
            act = self.active
            grad_s[:, :n] += np.where(act, dy, 0.0)
            grad_l[:, 1] = np.sum(np.where(act, dz, 0.0), axis=1) - self.log_tau
            idx = np.arange(n)
            hess_ss[:, idx, idx] = np.where(act, hess[..., 0, 0], 0.0)
            hess_sl[:, :n, 1] = np.where(act, hess[..., 0, 1], 0.0)
            hess_ll[:, 1, 1] = np.sum(np.where(act, hess[..., 1, 1], 0.0), axis=1)
        else:
            sig2 = d.sigmas**2
            root = np.sqrt(sig2 @ (w * w) + NORM_EPS**2)
            sw = sig2 * w[None, :]
            grad_s[:, :n] += (self.kappa / root)[:, None] * sw
            idx = np.arange(n)
            hess_ss[:, idx, idx] = (self.kappa / root)[:, None] * sig2
            hess_ss[:, :n, :n] -= (self.kappa / root**3)[:, None, None] * (
                sw[:, :, None] * sw[:, None, :]
            )
        return _Pieces(g, grad_s, grad_l, hess_ss, hess_sl, hess_ll)


################################################################################
# Barrier method
################################################################################


def _barrier_value(problem: _Problem, v: np.ndarray, t: float) -> float:
    if not problem.interior(v):
        return math.inf
    g = problem.values(v)
    if np.any(g >= 0):
        return math.inf
    _, _, xi, z = problem.split(v)
    value = t * problem.objective(v) - np.sum(np.log(-g)) - np.sum(np.log(xi))
    if z is not None:
        value -= np.sum(np.log(z - Z_MIN))
    return float(value)


def _newton_step(problem: _Problem, v: np.ndarray, t: float):
    """Newton direction of the barrier function and its squared decrement."""
    m, n, s, p = problem.m, problem.n, problem.s, problem.p
    w, _, xi, z = problem.split(v)
    pc = problem.pieces(v)
    h = -1.0 / pc.g
    wgt = h * h

    reg = np.zeros(s)
    reg[:n] = 1.0
    grad_shared = t * reg * np.concatenate([w, [0.0]]) + h @ pc.grad_s
    grad_local = h[:, None] * pc.grad_l
    grad_local[:, 0] += t * problem.data.penalty - 1.0 / xi
    local_bar = np.zeros((m, p, p))
    local_bar[:, 0, 0] = 1.0 / xi**2
    if p == 2:
        grad_local[:, 1] -= 1.0 / (z - Z_MIN)
        local_bar[:, 1, 1] = 1.0 / (z - Z_MIN) ** 2

    shared = (
        np.einsum("i,ij,ik->jk", wgt, pc.grad_s, pc.grad_s)
        + np.einsum("i,ijk->jk", h, pc.hess_ss)
        + t * np.diag(reg)
    )
    coupling = wgt[:, None, None] * pc.grad_s[:, :, None] * pc.grad_l[:, None, :] + h[:, None, None] * pc.hess_sl
    local = (
        wgt[:, None, None] * pc.grad_l[:, :, None] * pc.grad_l[:, None, :]
        + h[:, None, None] * pc.hess_ll
        + local_bar
    )

    local_inv = np.linalg.inv(local)
    coupling_inv = np.einsum("isp,ipq->isq", coupling, local_inv)
    schur = shared - np.einsum("isq,itq->st", coupling_inv, coupling)
    rhs = -(grad_shared - np.einsum("isq,iq->s", coupling_inv, grad_local))
    try:
        d_shared = np.linalg.solve(schur, rhs)
    except np.linalg.LinAlgError:
        d_shared = np.linalg.lstsq(schur, rhs, rcond=None)[0]
    d_local = np.einsum(
        "ipq,iq->ip", local_inv, -grad_local - np.einsum("isp,s->ip", coupling, d_shared)
    )

    direction = np.concatenate([d_shared, d_local[:, 0]] + ([d_local[:, 1]] if p == 2 else []))
    gradient = np.concatenate([grad_shared, grad_local[:, 0]] + ([grad_local[:, 1]] if p == 2 else []))
    return direction, gradient, -float(gradient @ direction)


def _centre(problem: _Problem, v: np.ndarray, t: float) -> Tuple[np.ndarray, int, bool]:
    """Minimise the barrier function for one t by damped Newton steps."""
    value = _barrier_value(problem, v, t)
    for step_count in range(MAX_NEWTON):
        direction, gradient, decrement_sq = _newton_step(problem, v, t)
        if decrement_sq / 2.0 <= NEWTON_TOL:
            return v, step_count, True
        slope = float(gradient @ direction)
        step = 1.0
        while True:
            candidate = v + step * direction
            candidate_value = _barrier_value(problem, candidate, t)
            if candidate_value <= value + ARMIJO * step * slope:
                break
            step *= SHRINK
            if step < MIN_STEP:
                logger.debug(f"Line search stalled at t={t:.3g}")
                return v, step_count, False
        v, value = candidate, candidate_value
    return v, MAX_NEWTON, False


def solve_svm(dataset: SvmDataset, method: str = REFINED) -> SvmSolution:
    """Solve one robust SVM by the log-barrier method.

    Starts at t = 1 and multiplies t by 10 after each centring until the
    duality measure (number of inequalities) / t is at most 1e-8.

    Args:
        dataset (SvmDataset): Training data.
        method (str): REFINED, CANTELLI or DETERMINISTIC.

    Returns:
        SvmSolution: The last iterate; status NOT_CONVERGED when a centring
        step failed or the outer budget ran out.

    Raises:
        DomainError: On an unknown method or an invalid dataset.
    """
    if method not in METHODS:
        raise DomainError(f"unknown method {method!r}; expected one of {METHODS}")
    validate_dataset(dataset)
    start = time.perf_counter()
    problem = _Problem(dataset, method)
    v = problem.start()
    inequalities = problem.m * (problem.p + 1)
    t = T_START
    status = CONVERGED
    outer = newton_total = 0
    while True:
        v, steps, centred = _centre(problem, v, t)
        outer += 1
        newton_total += steps
        logger.debug(f"{method} barrier t={t:.3g}: {steps} Newton steps, objective {problem.objective(v):.10g}")
        if not centred:
            status = NOT_CONVERGED
        if inequalities / t <= DUALITY_TOL:
            break
        if outer >= MAX_OUTER:
            status = NOT_CONVERGED
            break
        t *= T_FACTOR

    w, w0, xi, z = problem.split(v)
    residuals = problem.values(v)
    if np.max(residuals) > RESIDUAL_TOL:
        status = NOT_CONVERGED
    return SvmSolution(
        w=w.copy(),
        w0=float(w0),
        xi=xi.copy(),
        z=None if z is None else z.copy(),
        objective=problem.objective(v),
        residuals=residuals,
        method=method,
        status=status,
        outer_iterations=outer,
        newton_steps=newton_total,
        wall_time=time.perf_counter() - start,
    )


################################################################################
# Evaluation
################################################################################


def decision_values(solution: SvmSolution, points) -> np.ndarray:
    return np.asarray(points, dtype=float) @ solution.w + solution.w0


def svm_score(solution: SvmSolution, points, labels) -> float:
    """Fraction of points with sign(w . x + w0) equal to their label.

    Raises:
        DomainError: If the test split is empty.
    """
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DomainError("the test split is empty")
    predicted = np.where(decision_values(solution, points) >= 0, 1, -1)
    return float(np.mean(predicted == labels))


def margin_width(solution: SvmSolution) -> float:
    """2 / ||w||, the distance between w . x + w0 = +1 and -1."""
    norm = float(np.linalg.norm(solution.w))
    return math.inf if norm == 0 else 2.0 / norm


def split_dataset(dataset: SvmDataset, train_fraction: float, rng: np.random.Generator):
    """Random train/test split keeping at least one point on each side.

    Returns:
        Tuple[SvmDataset, SvmDataset]: (train, test).
    """
    if not 0 < train_fraction < 1:
        raise DomainError(f"train fraction must lie in (0, 1), got {train_fraction}")
    m = dataset.points.shape[0]
    if m < 2:
        raise DomainError("need at least two points to split")
    order = rng.permutation(m)
    cut = min(max(1, int(round(train_fraction * m))), m - 1)
    return subset(dataset, np.sort(order[:cut])), subset(dataset, np.sort(order[cut:]))
