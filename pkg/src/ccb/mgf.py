"""Upper estimators of moment-generating functions and their ordering.

D is the estimator behind the refined bound, J the one behind Bennett and
Jebara, H Hoeffding's, Z the Bernoulli one, and C_k / C_inf the estimators
for variables in [0, 1] with known mean p and variance sigma^2
(q = sigma^2 + p^2). check_chain evaluates the ordering between them.
"""

import logging
import math
from typing import List, NamedTuple

import numpy as np

from .errors import DomainError

logger = logging.getLogger("ccb")
logger.setLevel(logging.CRITICAL)  # Start with logging disabled

CHAIN_TOL = 1e-12


def est_D(t: float, gamma: float, b: float) -> float:
    """(gamma e^{tb} + e^{-t gamma b}) / (1 + gamma)."""
    return (gamma * math.exp(t * b) + math.exp(-t * gamma * b)) / (1.0 + gamma)


def est_J(t: float, gamma: float, b: float) -> float:
    """1 + gamma (e^{tb} - 1 - tb)."""
    u = t * b
    return 1.0 + gamma * (math.expm1(u) - u)


def est_H(t: float, p: float) -> float:
    """exp(t p + t^2 / 8)."""
    return math.exp(t * p + t * t / 8.0)


def est_Z(t: float, p: float) -> float:
    """1 + p (e^t - 1)."""
    return 1.0 + p * math.expm1(t)


def est_Ck(t: float, p: float, q: float, k: int) -> float:
    """1 + k (e^{t/k} - 1)(p - q) + q (e^t - 1), decreasing in k."""
    if k < 1:
        raise DomainError(f"k must be a positive integer, got {k}")
    return 1.0 + k * math.expm1(t / k) * (p - q) + q * math.expm1(t)


def est_Cinf(t: float, p: float, q: float) -> float:
    """1 + t (p - q) + q (e^t - 1), the limit of C_k."""
    return 1.0 + t * (p - q) + q * math.expm1(t)


class ChainCheck(NamedTuple):
    name: str
    holds: bool
    slack: float


def _compare(name: str, smaller: float, larger: float) -> ChainCheck:
    slack = (larger - smaller) / max(1.0, abs(larger))
    return ChainCheck(name, slack >= -CHAIN_TOL, slack)


def check_chain(t: float, gamma: float, b: float, p: float) -> List[ChainCheck]:
    """Evaluate every inequality of the estimator chain at one point.

    The comparisons on [0, 1] variables reuse gamma through b' = 1 - p and
    sigma^2 = gamma (1 - p)^2, so J <= C_inf is checked on the same variable.

    Args:
        t (float): Chernoff parameter, t >= 0.
        gamma (float): Variance ratio in (0, 1].
        b (float): Upper deviation bound, > 0.
        p (float): Mean of the [0, 1] variable, in (0, 1).

    Returns:
        List[ChainCheck]: (name, holds, scaled slack) per inequality.

    Raises:
        DomainError: If a parameter lies outside the comparisons' domain.
    """
    if not t >= 0:
        raise DomainError(f"t must be non-negative, got {t}")
    if not 0 < gamma <= 1:
        raise DomainError(f"gamma must lie in (0, 1], got {gamma}")
    if not b > 0:
        raise DomainError(f"b must be positive, got {b}")
    if not 0 < p < 1:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    b01 = 1.0 - p
    variance = gamma * b01 * b01
    q = variance + p * p
    if q > p:
        raise DomainError(
            f"sigma^2 = {variance:.6g} exceeds p(1 - p) = {p * (1 - p):.6g} for a [0, 1] variable"
        )

    d_gamma = est_D(t, gamma, b)
    cosh_tb = est_D(t, 1.0, b)
    return [
        _compare("D<=J", d_gamma, est_J(t, gamma, b)),
        _compare("D<=cosh", d_gamma, cosh_tb),
        _compare("cosh<=gauss", cosh_tb, math.exp(0.5 * (t * b) ** 2)),
        _compare("Z<=H", est_Z(t, p), est_H(t, p)),
        _compare("Cinf<=Z", est_Cinf(t, p, q), est_Z(t, p)),
        _compare("J<=Cinf", est_J(t, gamma, b01), est_Cinf(t, p, q)),
    ]


def sample_chain_point(rng: np.random.Generator, t_max: float = 5.0):
    """Draw (t, gamma, b, p) inside the domain of check_chain."""
    t = rng.uniform(0.0, t_max)
    b = rng.uniform(0.05, 1.0)
    p = rng.uniform(0.01, 0.99)
    # gamma <= p / (1 - p) keeps sigma^2 <= p (1 - p)
    gamma = rng.uniform(0.0, 1.0) * min(1.0, p / (1.0 - p))
    return t, max(gamma, 1e-9), b, p
