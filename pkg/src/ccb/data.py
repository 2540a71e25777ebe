import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional, Tuple

import numpy as np

from .errors import DomainError

logger = logging.getLogger("ccb")
logger.setLevel(logging.CRITICAL)  # Start with logging disabled


@dataclass(frozen=True)
class RandomTermSpec:
    """Second-order data of one summand X_k.

    Note: Operations on RandomTermSpec objects should be performed using
    functions, not methods. This class is intended to be used as a data holder
    only.

    Attributes:
        mean (float): E[X_k], in problem units.
        sigma (float): Upper bound on the standard deviation of X_k.
        b_upper (float): Upper deviation bound, X_k - E[X_k] <= b_upper a.s.
        a_lower (Optional[float]): Lower deviation bound for two-sided
            settings, X_k - E[X_k] >= a_lower a.s.
    """

    mean: float
    sigma: float
    b_upper: float
    a_lower: Optional[float] = None


@dataclass(frozen=True)
class SumSpec:
    """An ordered collection of independent summands.

    Note: Operations on SumSpec objects should be performed using functions,
    not methods. This class is intended to be used as a data holder only.

    Attributes:
        terms (Tuple[RandomTermSpec, ...]): The summands, N >= 1 of them.
    """

    terms: Tuple[RandomTermSpec, ...]


def validate_term(term: RandomTermSpec) -> RandomTermSpec:
    """Check the invariants of a single summand.

    Raises:
        DomainError: If b_upper <= 0, sigma < 0 or a_lower >= 0.
    """
    values = [term.mean, term.sigma, term.b_upper]
    if term.a_lower is not None:
        values.append(term.a_lower)
    if not all(math.isfinite(v) for v in values):
        raise DomainError(f"non-finite moment data in {term}")
    if term.b_upper <= 0:
        raise DomainError(f"b_upper must be positive, got {term.b_upper}")
    if term.sigma < 0:
        raise DomainError(f"sigma must be non-negative, got {term.sigma}")
    if term.a_lower is not None and term.a_lower >= 0:
        raise DomainError(f"a_lower must be negative, got {term.a_lower}")
    return term


def make_sum_spec(terms: Iterable[RandomTermSpec]) -> SumSpec:
    """Build a validated SumSpec.

    Raises:
        DomainError: If there are no terms or any term is invalid.
    """
    terms = tuple(validate_term(term) for term in terms)
    if not terms:
        raise DomainError("a sum needs at least one term")
    return SumSpec(terms=terms)


def homogeneous_spec(n: int, sigma: float, b_upper: float, a_lower=None) -> SumSpec:
    """N identical centred summands."""
    return make_sum_spec(
        RandomTermSpec(mean=0.0, sigma=sigma, b_upper=b_upper, a_lower=a_lower)
        for _ in range(n)
    )


def term_gamma(term: RandomTermSpec) -> float:
    """gamma_k = sigma_k^2 / b_k^2."""
    return (term.sigma / term.b_upper) ** 2


def size(spec: SumSpec) -> int:
    return len(spec.terms)


def sigmas(spec: SumSpec) -> np.ndarray:
    return np.array([term.sigma for term in spec.terms], dtype=float)


def b_values(spec: SumSpec) -> np.ndarray:
    return np.array([term.b_upper for term in spec.terms], dtype=float)


def gammas(spec: SumSpec) -> np.ndarray:
    return (sigmas(spec) / b_values(spec)) ** 2


def a_values(spec: SumSpec) -> np.ndarray:
    """Lower deviation bounds of every term.

    Raises:
        DomainError: If any term has no lower bound.
    """
    missing = [k for k, term in enumerate(spec.terms) if term.a_lower is None]
    if missing:
        raise DomainError(f"terms {missing} have no a_lower (needed two-sided)")
    return np.array([term.a_lower for term in spec.terms], dtype=float)


def b_bar(spec: SumSpec) -> float:
    """Mean upper deviation bound (1/N) sum b_k."""
    return float(np.mean(b_values(spec)))


def sigma_total_sq(spec: SumSpec) -> float:
    """Variance bound of the sum, sum sigma_k^2."""
    return float(np.sum(sigmas(spec) ** 2))


################################################################################
# Aggregates over the random (sigma > 0) terms
################################################################################

# A term with sigma = 0 is deterministic after centring. It contributes nothing
# to phi and is left out of tau_minus, M and Gamma.


def active_arrays(spec: SumSpec) -> Tuple[np.ndarray, np.ndarray, int]:
    """Return (gamma, b) of the random terms and the total number of terms.

    Raises:
        DomainError: If every term is deterministic.
    """
    gam = gammas(spec)
    b = b_values(spec)
    mask = gam > 0
    if not mask.any():
        raise DomainError("every term has sigma = 0; the sum is deterministic")
    return gam[mask], b[mask], size(spec)


def tau_minus(spec: SumSpec) -> float:
    """Smallest certifiable error level, prod gamma_k / (1 + gamma_k)."""
    gam, _, _ = active_arrays(spec)
    return float(np.exp(np.sum(np.log(gam / (1.0 + gam)))))


def log_tau_minus(spec: SumSpec) -> float:
    gam, _, _ = active_arrays(spec)
    return float(np.sum(np.log(gam) - np.log1p(gam)))


def curvature_bound(spec: SumSpec) -> float:
    """M = 1/2 sum b_k^2 (1 + gamma_k)^2, the bound on phi''."""
    gam, b, _ = active_arrays(spec)
    return float(0.5 * np.sum((b * (1.0 + gam)) ** 2))


def gamma_constant(spec: SumSpec) -> float:
    """Gamma = 1 + (min gamma_k * min b_k (gamma_k + 1))^-1."""
    gam, b, _ = active_arrays(spec)
    return float(1.0 + 1.0 / (np.min(gam) * np.min(b * (gam + 1.0))))


def m_values(spec: SumSpec) -> np.ndarray:
    """m_k = ln(2 + 1/gamma_k) / (b_k^2 (1 + gamma_k))."""
    gam, b, _ = active_arrays(spec)
    return np.log(2.0 + 1.0 / gam) / (b**2 * (1.0 + gam))


def active_spec(spec: SumSpec) -> SumSpec:
    """The sub-sum of random terms, in their original order."""
    terms = tuple(term for term in spec.terms if term.sigma > 0)
    if not terms:
        raise DomainError("every term has sigma = 0; the sum is deterministic")
    return SumSpec(terms=terms)


################################################################################
# JSON mapping
################################################################################


def sum_spec_to_dict(spec: SumSpec) -> Dict[str, Any]:
    """Map a SumSpec to its JSON document {"terms": [...]}."""
    terms = []
    for term in spec.terms:
        item = {"mean": term.mean, "sigma": term.sigma, "b": term.b_upper}
        if term.a_lower is not None:
            item["a"] = term.a_lower
        terms.append(item)
    return {"terms": terms}


def sum_spec_from_dict(document: Dict[str, Any]) -> SumSpec:
    """Inverse of sum_spec_to_dict.

    Raises:
        DomainError: If the document does not follow the schema.
    """
    try:
        raw_terms = document["terms"]
        terms = [
            RandomTermSpec(
                mean=float(item.get("mean", 0.0)),
                sigma=float(item["sigma"]),
                b_upper=float(item["b"]),
                a_lower=float(item["a"]) if item.get("a") is not None else None,
            )
            for item in raw_terms
        ]
    except (KeyError, TypeError, ValueError) as e:
        raise DomainError(f"malformed sum specification: {e}") from e
    logger.debug(f"Loaded sum specification with {len(terms)} terms")
    return make_sum_spec(terms)
