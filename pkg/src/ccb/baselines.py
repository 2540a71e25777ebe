################################################################################
# Baselines - The classical tail bounds the refined bound is compared with
################################################################################

"""Hoeffding, Bennett, Cantelli, Bernstein, Jebara and Gaussian bounds.

Every *_log_tail function returns an upper bound on ln P[S - E S >= d] for
the sum S of the summands of a SumSpec, clamped to be <= 0. Every
*_confidence function returns the deviation d_tau at which the matching
bound equals tau.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import log_ndtr, ndtri

from .bisection import confidence_bound, phi_star
from .data import SumSpec, a_values, b_values, gammas, sigma_total_sq, size
from .errors import DomainError

logger = logging.getLogger("ccb")
logger.setLevel(logging.CRITICAL)  # Start with logging disabled

HOEFFDING = "Hoeffding"
BENNETT = "Bennett"
CANTELLI = "Cantelli"
BERNSTEIN = "Bernstein"
JEBARA = "Jebara"
REFINED = "RefinedBennett"
NORMAL = "Normal"
METHODS = (HOEFFDING, BENNETT, CANTELLI, BERNSTEIN, JEBARA, REFINED, NORMAL)

G_INVERSE_TOL = 1e-12
JEBARA_XTOL = 1e-10
JEBARA_GRID = 401


@dataclass
class BoundReport:
    """One method's bound at one deviation level.

    Note: Operations on BoundReport objects should be performed using
    functions, not methods. This class is intended to be used as a data holder
    only.

    Attributes:
        method (str): One of METHODS.
        log_prob_bound (float): Natural-log tail bound, <= 0, possibly -inf.
        confidence_bound (Optional[float]): d_tau for the requested tau, when
            the method has an inverse and a tau was given.
        wall_time (float): Seconds spent computing both numbers.
    """

    method: str
    log_prob_bound: float
    confidence_bound: Optional[float]
    wall_time: float


def _check_deviation(d: float) -> None:
    if not d >= 0:
        raise DomainError(f"deviation must be non-negative, got {d}")


def _check_tau(tau: float) -> None:
    if not 0 < tau <= 1:
        raise DomainError(f"tau must lie in (0, 1], got {tau}")


def _clamp(value: float) -> float:
    return min(0.0, float(value))


################################################################################
# Hoeffding
################################################################################


def hoeffding_log_tail(spec: SumSpec, d: float) -> float:
    """-2 d^2 / sum (b_k - a_k)^2.

    Raises:
        DomainError: If d < 0 or a term has no a_lower.
    """
    _check_deviation(d)
    width = b_values(spec) - a_values(spec)
    return _clamp(-2.0 * d * d / np.sum(width**2))


def hoeffding_confidence(spec: SumSpec, tau: float) -> float:
    """d_tau = ||b - a||_2 sqrt(-ln sqrt(tau))."""
    _check_tau(tau)
    width = b_values(spec) - a_values(spec)
    return float(np.linalg.norm(width) * math.sqrt(-0.5 * math.log(tau)))


################################################################################
# Bennett
################################################################################


def bennett_g(u):
    """g(u) = (1 + u) ln(1 + u) - u."""
    u = np.asarray(u, dtype=float)
    value = (1.0 + u) * np.log1p(u) - u
    return float(value) if value.ndim == 0 else value


def bennett_g_inverse(v: float) -> float:
    """Solve g(u) = v for u >= 0.

    Newton from u0 = max(sqrt(2v), v / ln(1 + v)) inside a bracket that is
    kept up to date; a step leaving the bracket is replaced by bisection and
    brentq finishes the job if Newton stalls.

    Raises:
        DomainError: If v < 0.
    """
    if not v >= 0:
        raise DomainError(f"g^-1 is defined on [0, inf), got {v}")
    if v == 0:
        return 0.0
    tol = max(G_INVERSE_TOL, 4.0 * np.finfo(float).eps * v)
    lo = math.sqrt(2.0 * v)  # g(u) <= u^2 / 2
    hi = max(lo, 1.0)
    while bennett_g(hi) < v:
        hi *= 2.0
    u = min(max(lo, v / math.log1p(v)), hi)
    for _ in range(100):
        residual = bennett_g(u) - v
        if abs(residual) <= tol:
            return u
        if residual > 0:
            hi = u
        else:
            lo = u
        step = u - residual / math.log1p(u)
        u = step if lo < step < hi else 0.5 * (lo + hi)
    logger.debug(f"g^-1 Newton stalled at v={v}; switching to brentq")
    return float(brentq(lambda x: bennett_g(x) - v, lo, hi, xtol=1e-15, maxiter=500))


def _bennett_constants(spec: SumSpec):
    variance = sigma_total_sq(spec)
    if variance <= 0:
        raise DomainError("Bennett's bound needs a positive total variance")
    return float(np.max(b_values(spec))), variance


def bennett_log_tail(spec: SumSpec, d: float) -> float:
    """-(sigma^2 / b^2) g(b d / sigma^2) with b = max b_k, sigma^2 = sum sigma_k^2."""
    _check_deviation(d)
    b, variance = _bennett_constants(spec)
    return _clamp(-(variance / b**2) * bennett_g(b * d / variance))


def bennett_confidence(spec: SumSpec, tau: float) -> float:
    """d_tau = (sigma^2 / b) g^-1((b^2 / sigma^2) ln(1 / tau))."""
    _check_tau(tau)
    b, variance = _bennett_constants(spec)
    return (variance / b) * bennett_g_inverse((b**2 / variance) * -math.log(tau))


################################################################################
# Cantelli and Bernstein
################################################################################


def cantelli_log_tail(spec: SumSpec, d: float) -> float:
    """ln(sigma^2 / (sigma^2 + d^2)), the one-sided Chebyshev bound."""
    _check_deviation(d)
    variance = sigma_total_sq(spec)
    if variance == 0:
        return 0.0 if d == 0 else -math.inf
    return _clamp(-math.log1p(d * d / variance))


def cantelli_confidence(spec: SumSpec, tau: float) -> float:
    """sigma * sqrt(1 / tau - 1)."""
    _check_tau(tau)
    return math.sqrt(sigma_total_sq(spec)) * math.sqrt(1.0 / tau - 1.0)


def bernstein_log_tail(spec: SumSpec, d: float) -> float:
    """-d^2 / 2 / (sum sigma_k^2 + z d / 3) with z = max b_k (two-sided bounds)."""
    _check_deviation(d)
    if d == 0:
        return 0.0
    z = float(np.max(b_values(spec)))
    return _clamp(-0.5 * d * d / (sigma_total_sq(spec) + z * d / 3.0))


################################################################################
# Jebara
################################################################################


def _log_j(t, gam: np.ndarray, b: np.ndarray) -> np.ndarray:
    """ln J_k(t) = ln(1 + gamma_k (e^{t b_k} - 1 - t b_k)), shape (len(t), N)."""
    u = np.multiply.outer(np.atleast_1d(t), b)
    small = np.minimum(u, 30.0)
    direct = np.log1p(gam * (np.expm1(small) - small))
    # For u > 30, ln(gamma h(u)) = ln gamma + u + ln(1 - (1 + u) e^{-u}).
    big = np.maximum(u, 30.0)
    with np.errstate(divide="ignore"):
        log_gh = np.log(gam) + big + np.log1p(-(1.0 + big) * np.exp(-big))
    asymptotic = np.logaddexp(0.0, log_gh)
    return np.where(gam == 0, 0.0, np.where(u > 30.0, asymptotic, direct))


def _jebara_objective(t, d: float, gam: np.ndarray, b: np.ndarray):
    return np.sum(_log_j(t, gam, b), axis=1) - np.atleast_1d(t) * d


def _jebara_slope(t: float, d: float, gam: np.ndarray, b: np.ndarray) -> float:
    u = np.minimum(t * b, 700.0)
    j = 1.0 + gam * (np.expm1(u) - u)
    return float(np.sum(gam * b * np.expm1(u) / j) - d)


def jebara_log_tail(spec: SumSpec, d: float) -> float:
    """inf over t >= 0 of -t d + sum_k ln J_k(t).

    The objective is scanned on a grid up to a point where its slope is
    positive and the best cell is polished with a bounded scalar search.
    """
    _check_deviation(d)
    if d == 0:
        return 0.0
    gam = gammas(spec)
    b = b_values(spec)
    reach = float(np.sum(b[gam > 0]))
    if d > reach:
        return -math.inf
    if d == reach:
        return _clamp(np.sum(np.log(gam[gam > 0])))

    upper = 1.0 / float(np.max(b))
    while _jebara_slope(upper, d, gam, b) <= 0 and upper * np.max(b) < 700.0:
        upper *= 2.0
    grid = np.linspace(0.0, upper, JEBARA_GRID)
    values = _jebara_objective(grid, d, gam, b)
    best = int(np.argmin(values))
    left = grid[max(best - 1, 0)]
    right = grid[min(best + 1, JEBARA_GRID - 1)]
    result = minimize_scalar(
        lambda t: float(_jebara_objective(t, d, gam, b)[0]),
        bounds=(left, right),
        method="bounded",
        options={"xatol": JEBARA_XTOL},
    )
    logger.debug(f"Jebara minimum near t={result.x:.6g} (grid cell {best})")
    return _clamp(min(float(result.fun), float(values[best])))


################################################################################
# Gaussian
################################################################################


def norm_ppf(p: float) -> float:
    """Inverse of the standard normal CDF.

    Raises:
        DomainError: If p is outside (0, 1).
    """
    if not 0 < p < 1:
        raise DomainError(f"normal quantile needs p in (0, 1), got {p}")
    return float(ndtri(p))


def normal_confidence(spec: SumSpec, tau: float) -> float:
    """Phi^-1(1 - tau) sqrt(sum sigma_k^2), exact for Gaussian summands."""
    _check_tau(tau)
    if tau == 1:
        return -math.inf
    # Phi^-1(1 - tau) = -Phi^-1(tau) keeps the small tail exact.
    return -norm_ppf(tau) * math.sqrt(sigma_total_sq(spec))


def normal_log_tail(spec: SumSpec, d: float) -> float:
    _check_deviation(d)
    return _clamp(log_ndtr(-d / math.sqrt(sigma_total_sq(spec))))


################################################################################
# Comparison
################################################################################


def compare_bounds(
    spec: SumSpec,
    d: float,
    tau: Optional[float] = None,
    methods: Optional[Sequence[str]] = None,
) -> List[BoundReport]:
    """Evaluate several methods at the deviation d of the sum.

    Args:
        spec (SumSpec): The summands.
        d (float): Deviation of the sum (alpha * N).
        tau (Optional[float]): When given, also compute each method's
            confidence bound at this level.
        methods (Optional[Sequence[str]]): Subset of METHODS; all by default.
            Hoeffding is skipped when a term has no a_lower.

    Returns:
        List[BoundReport]: One report per method, in METHODS order.
    """
    n = size(spec)
    log_tails = {
        HOEFFDING: lambda: hoeffding_log_tail(spec, d),
        BENNETT: lambda: bennett_log_tail(spec, d),
        CANTELLI: lambda: cantelli_log_tail(spec, d),
        BERNSTEIN: lambda: bernstein_log_tail(spec, d),
        JEBARA: lambda: jebara_log_tail(spec, d),
        REFINED: lambda: phi_star(spec, d / n).value,
        NORMAL: lambda: normal_log_tail(spec, d),
    }
    confidences = {
        HOEFFDING: lambda: hoeffding_confidence(spec, tau),
        BENNETT: lambda: bennett_confidence(spec, tau),
        CANTELLI: lambda: cantelli_confidence(spec, tau),
        REFINED: lambda: confidence_bound(spec, tau).alpha_hat * n,
        NORMAL: lambda: normal_confidence(spec, tau),
    }
    selected = [m for m in METHODS if methods is None or m in methods]
    unknown = set(methods or ()) - set(METHODS)
    if unknown:
        raise DomainError(f"unknown methods: {sorted(unknown)}")
    two_sided = all(term.a_lower is not None for term in spec.terms)

    reports = []
    for method in selected:
        if method == HOEFFDING and not two_sided:
            logger.debug("Skipping Hoeffding: some terms have no a_lower")
            continue
        start = time.perf_counter()
        log_bound = log_tails[method]()
        confidence = None
        if tau is not None and method in confidences:
            confidence = float(confidences[method]())
        reports.append(
            BoundReport(method, float(log_bound), confidence, time.perf_counter() - start)
        )
    return reports
