"""The refined Bennett exponent phi_alpha(t) and its derivatives.

For a sum of N independent summands with deviation bounds b_k and variance
ratios gamma_k = sigma_k^2 / b_k^2,

    phi_alpha(t) = ln(tau_minus) + N t (b_bar - alpha)
                   + sum_k ln(1 + gamma_k^-1 exp(-t b_k (1 + gamma_k)))

and P[sum_k (X_k - E X_k) >= alpha N] <= exp(inf_t phi_alpha(t)).

The public functions take a SumSpec. The kernels below work on the arrays of
random terms (see data.active_arrays) so the bisection loops can reuse them
without rebuilding arrays on every evaluation.
"""

import logging
import math

import numpy as np
from scipy.special import expit

from .data import SumSpec, active_arrays
from .errors import DomainError

logger = logging.getLogger("ccb")
logger.setLevel(logging.CRITICAL)  # Start with logging disabled


def _check_t(t: float) -> None:
    if not t >= 0:
        raise DomainError(f"t must be non-negative, got {t}")
    if math.isinf(t):
        raise DomainError("t must be finite")


################################################################################
# Kernels on (gamma, b) arrays
################################################################################


def phi_kernel(gam: np.ndarray, b: np.ndarray, alpha_n: float, t: float) -> float:
    """phi with the deviation expressed as alpha_n = alpha * N.

    Each random term contributes ln D_k(t), written as
    ln(gamma/(1+gamma)) + t b + ln(1 + gamma^-1 e^{-t b (1+gamma)}).
    The last logarithm goes through logaddexp so large t never overflows.
    """
    s = b * (1.0 + gam)
    log_gam = np.log(gam)
    terms = log_gam - np.log1p(gam) + t * b + np.logaddexp(0.0, -t * s - log_gam)
    return float(np.sum(terms) - t * alpha_n)


def phi_d1_kernel(gam: np.ndarray, b: np.ndarray, alpha_n: float, t: float) -> float:
    # s / (1 + gamma e^{ts}) == s * expit(-(ts + ln gamma))
    s = b * (1.0 + gam)
    frac = s * expit(-(t * s + np.log(gam)))
    return float(np.sum(b - frac) - alpha_n)


def phi_d2_kernel(gam: np.ndarray, b: np.ndarray, t: float) -> float:
    s = b * (1.0 + gam)
    q = expit(-(t * s + np.log(gam)))
    return float(np.sum(s * s * q * (1.0 - q)))


################################################################################
# Public API
################################################################################


def phi(spec: SumSpec, alpha: float, t: float) -> float:
    """Evaluate phi_alpha(t).

    Args:
        spec (SumSpec): The summands.
        alpha (float): Deviation per summand; the event is sum >= alpha * N.
        t (float): Chernoff parameter, t >= 0.

    Returns:
        float: phi_alpha(t). Deterministic terms (sigma = 0) contribute 0.

    Raises:
        DomainError: If t < 0 or every term is deterministic.
    """
    _check_t(t)
    gam, b, n = active_arrays(spec)
    return phi_kernel(gam, b, alpha * n, t)


def phi_d1(spec: SumSpec, alpha: float, t: float) -> float:
    """First derivative of phi_alpha in t.

    N (b_bar - alpha) - sum_k b_k (1 + gamma_k) / (1 + gamma_k e^{t b_k (1 + gamma_k)})
    """
    _check_t(t)
    gam, b, n = active_arrays(spec)
    return phi_d1_kernel(gam, b, alpha * n, t)


def phi_d2(spec: SumSpec, alpha: float, t: float) -> float:
    """Second derivative of phi_alpha in t; always in [0, M].

    alpha is accepted for symmetry with phi and phi_d1 and does not enter.
    """
    _check_t(t)
    gam, b, _ = active_arrays(spec)
    return phi_d2_kernel(gam, b, t)
