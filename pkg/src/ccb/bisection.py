"""Certified bisection for phi*_alpha and for the confidence bound alpha_tau.

phi_star runs a bisection on the sign of phi'_alpha over the box
[0, -ln(tau_minus) / (N (b_bar - alpha))], which contains the minimiser.
confidence_bound nests it inside a bisection on alpha over
[0, b_bar - sqrt(ln(tau / tau_minus) / (N Gamma))] and stops either when
phi*_alpha is within M eps_t^2 of ln(tau) or when the alpha bracket is
narrower than eps_alpha.

Deterministic summands are removed first. The event sum >= alpha N is the
same for the random sub-sum, so alpha is rescaled by N / N_random on the way
in and back on the way out.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .data import SumSpec, active_arrays
from .errors import DomainError, InfeasibleLevelError
from .phi import phi_d1_kernel, phi_kernel

logger = logging.getLogger("ccb")
logger.setLevel(logging.CRITICAL)  # Start with logging disabled

EPS_T = 1e-6
EPS_ALPHA = 1e-6

TOLERANCE_PHI = "tolerance_phi"
INTERVAL_ALPHA = "interval_alpha"


@dataclass
class PhiStarResult:
    """Outcome of the inner bisection.

    Attributes:
        value (float): phi_alpha(t_hat), within M eps_t^2 of phi*_alpha.
            -inf when alpha > b_bar and ln(tau_minus) when alpha == b_bar.
        t_hat (float): Midpoint of the final bracket; +inf for the two
            boundary cases above.
        iterations (int): Number of bisection steps.
        eps_t (float): Bracket width used as stopping rule.
    """

    value: float
    t_hat: float
    iterations: int
    eps_t: float


@dataclass
class ConfidenceResult:
    """Outcome of the double bisection.

    Attributes:
        alpha_hat (float): Estimate of alpha_tau, per summand. The bound on
            the sum is alpha_hat * N.
        outer_iterations (int): Bisection steps on alpha.
        total_inner_iterations (int): Bisection steps on t over all calls.
        max_inner_iterations (int): Largest per-call number of t steps.
        terminated_by (str): TOLERANCE_PHI or INTERVAL_ALPHA.
        eps_t (float): Inner tolerance.
        eps_alpha (float): Outer tolerance.
    """

    alpha_hat: float
    outer_iterations: int
    total_inner_iterations: int
    max_inner_iterations: int
    terminated_by: str
    eps_t: float
    eps_alpha: float


@dataclass
class _RandomPart:
    gam: np.ndarray
    b: np.ndarray
    n_total: int

    @property
    def n(self) -> int:
        return len(self.gam)

    @property
    def b_bar(self) -> float:
        return float(np.mean(self.b))

    @property
    def log_tau_minus(self) -> float:
        return float(np.sum(np.log(self.gam) - np.log1p(self.gam)))

    @property
    def curvature(self) -> float:
        return float(0.5 * np.sum((self.b * (1.0 + self.gam)) ** 2))

    @property
    def gamma_constant(self) -> float:
        return float(1.0 + 1.0 / (np.min(self.gam) * np.min(self.b * (self.gam + 1.0))))

    @property
    def scale(self) -> float:
        """Factor turning a per-summand alpha of the full sum into the sub-sum's."""
        return self.n_total / self.n


def _random_part(spec: SumSpec) -> _RandomPart:
    gam, b, n_total = active_arrays(spec)
    return _RandomPart(gam=gam, b=b, n_total=n_total)


def _check_eps(name: str, eps: float) -> None:
    if not eps > 0:
        raise DomainError(f"{name} must be positive, got {eps}")


################################################################################
# Inner bisection
################################################################################


def _bisect_t(part: _RandomPart, alpha: float, eps_t: float) -> PhiStarResult:
    """phi* of the random sub-sum at per-summand level alpha (sub-sum scale)."""
    alpha_n = alpha * part.n
    if alpha > part.b_bar:
        return PhiStarResult(-math.inf, math.inf, 0, eps_t)
    if alpha == part.b_bar:
        return PhiStarResult(part.log_tau_minus, math.inf, 0, eps_t)

    t_lo = 0.0
    t_hi = -part.log_tau_minus / (part.n * (part.b_bar - alpha))
    iterations = 0
    while t_hi - t_lo > eps_t:
        t_mid = 0.5 * (t_lo + t_hi)
        if phi_d1_kernel(part.gam, part.b, alpha_n, t_mid) >= 0:
            t_hi = t_mid
        else:
            t_lo = t_mid
        iterations += 1
    t_hat = 0.5 * (t_lo + t_hi)
    return PhiStarResult(phi_kernel(part.gam, part.b, alpha_n, t_hat), t_hat, iterations, eps_t)


def phi_star(spec: SumSpec, alpha: float, eps_t: float = EPS_T) -> PhiStarResult:
    """Compute phi*_alpha = inf_t phi_alpha(t) by bisection on phi'_alpha.

    Args:
        spec (SumSpec): The summands.
        alpha (float): Per-summand deviation, >= 0.
        eps_t (float): Final bracket width in t.

    Returns:
        PhiStarResult: With |value - phi*_alpha| <= M eps_t^2.

    Raises:
        DomainError: If alpha < 0, eps_t <= 0 or every term is deterministic.
    """
    if not alpha >= 0:
        raise DomainError(f"alpha must be non-negative, got {alpha}")
    _check_eps("eps_t", eps_t)
    part = _random_part(spec)
    result = _bisect_t(part, alpha * part.scale, eps_t)
    logger.debug(
        f"phi*({alpha:.6g}) = {result.value:.10g} at t={result.t_hat:.6g} "
        f"after {result.iterations} steps"
    )
    return result


################################################################################
# Outer bisection
################################################################################


def _upper_box(part: _RandomPart, tau: float) -> float:
    """Lemma box on the sub-sum scale, clamped at 0."""
    box = part.b_bar - math.sqrt(
        (math.log(tau) - part.log_tau_minus) / (part.n * part.gamma_constant)
    )
    return max(box, 0.0)


def _check_level(part: _RandomPart, tau: float) -> None:
    if not 0 < tau <= 1:
        raise DomainError(f"tau must lie in (0, 1], got {tau}")
    if math.log(tau) <= part.log_tau_minus:
        raise InfeasibleLevelError(tau, math.exp(part.log_tau_minus))


def alpha_upper_box(spec: SumSpec, tau: float) -> float:
    """b_bar - sqrt(ln(tau / tau_minus) / (N Gamma)), clamped at 0.

    Raises:
        InfeasibleLevelError: If tau <= tau_minus.
        DomainError: If tau > 1.
    """
    part = _random_part(spec)
    _check_level(part, tau)
    return _upper_box(part, tau) / part.scale


def confidence_bound(
    spec: SumSpec, tau: float, eps_t: float = EPS_T, eps_alpha: float = EPS_ALPHA
) -> ConfidenceResult:
    """Double bisection for alpha_tau, the level with phi*_alpha_tau = ln(tau).

    Args:
        spec (SumSpec): The summands.
        tau (float): Error level in (tau_minus, 1].
        eps_t (float): Inner tolerance.
        eps_alpha (float): Outer tolerance.

    Returns:
        ConfidenceResult: The sum stays below alpha_hat * N with probability
        at least 1 - tau, up to alpha_error_bound.

    Raises:
        InfeasibleLevelError: If tau <= tau_minus.
        DomainError: If tau > 1 or a tolerance is not positive.
    """
    _check_eps("eps_t", eps_t)
    _check_eps("eps_alpha", eps_alpha)
    part = _random_part(spec)
    _check_level(part, tau)

    # The loop runs on the sub-sum scale; so does eps_alpha.
    alpha_lo, alpha_hi = 0.0, _upper_box(part, tau)
    if alpha_hi == 0:
        logger.debug("Alpha box is empty; phi*_0 = 0 already meets ln(tau)")
        return ConfidenceResult(0.0, 0, 0, 0, INTERVAL_ALPHA, eps_t, eps_alpha)

    log_tau = math.log(tau)
    band = part.curvature * eps_t**2
    alpha_hat = 0.5 * (alpha_lo + alpha_hi)
    within_band = False
    outer = inner_total = inner_max = 0
    while alpha_hi - alpha_lo > eps_alpha and not within_band:
        alpha_hat = 0.5 * (alpha_lo + alpha_hi)
        inner = _bisect_t(part, alpha_hat, eps_t)
        outer += 1
        inner_total += inner.iterations
        inner_max = max(inner_max, inner.iterations)
        if inner.value > log_tau + band:
            alpha_lo = alpha_hat
        elif inner.value < log_tau - band:
            alpha_hi = alpha_hat
        else:
            within_band = True
    terminated_by = TOLERANCE_PHI if within_band else INTERVAL_ALPHA
    logger.debug(
        f"alpha_tau ~ {alpha_hat / part.scale:.10g} for tau={tau:.6g}: "
        f"{outer} outer, {inner_total} inner steps, stopped by {terminated_by}"
    )
    return ConfidenceResult(
        alpha_hat / part.scale,
        outer,
        inner_total,
        inner_max,
        terminated_by,
        eps_t,
        eps_alpha,
    )


################################################################################
# Guarantees
################################################################################


def outer_iteration_bound(spec: SumSpec, eps_alpha: float = EPS_ALPHA) -> int:
    """ceil(log2(b_bar / eps_alpha)) on the random sub-sum."""
    part = _random_part(spec)
    return max(0, math.ceil(math.log2(part.b_bar / eps_alpha)))


def inner_iteration_bound(spec: SumSpec, tau: float, eps_t: float = EPS_T) -> int:
    """ceil(log2(sqrt(Gamma) ln(1/tau_minus) / (eps_t sqrt(N ln(tau/tau_minus)))))."""
    part = _random_part(spec)
    _check_level(part, tau)
    width = (
        math.sqrt(part.gamma_constant)
        * -part.log_tau_minus
        / math.sqrt(part.n * (math.log(tau) - part.log_tau_minus))
    )
    return max(0, math.ceil(math.log2(width / eps_t)))


def alpha_error_bound(spec: SumSpec, eps_t: float = EPS_T, eps_alpha: float = EPS_ALPHA) -> float:
    """Largest |alpha_hat - alpha_tau| the double bisection can leave.

    max(eps_alpha, sqrt(2M / (N min m_k)) eps_t, 2M / (N min b_k m_k) eps_t^2)
    """
    part = _random_part(spec)
    m = np.log(2.0 + 1.0 / part.gam) / (part.b**2 * (1.0 + part.gam))
    two_m = 2.0 * part.curvature
    return max(
        eps_alpha,
        math.sqrt(two_m / (part.n * float(np.min(m)))) * eps_t,
        two_m / (part.n * float(np.min(part.b * m))) * eps_t**2,
    )
