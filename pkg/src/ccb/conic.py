"""Exponential-cone form of the constraint sum_k Psi_{gamma_k,b_k}(y_k, z) <= u.

Psi+_{g,c}(y, z) <= v holds iff there are eta, nu with

    (eta, z, y c - v)         in K_exp
    (nu,  z, -y c g - v)      in K_exp
    g eta + nu                <= (1 + g) z

where K_exp = {(x1, x2, x3): x1 >= x2 exp(x3 / x2), x2 > 0}. The two-sided
Psi uses (g, c) = (gamma, b) for y >= 0 and (1/gamma, b gamma) for y < 0.

Two encodings are emitted:

    branch  one (g, c) per term, picked by the sign of y_k: 2 cones and 1 row
            per term, plus the aggregate row sum_k v_k <= u
    max     both branches per term sharing v_k: 4 cones and 2 rows per term,
            plus the aggregate row; it encodes max of the two branches

The system is checked analytically: with the cones tight, each row gives the
smallest admissible v_k in closed form, and the system is feasible iff those
values sum to at most u.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError
from .perspective import psi, psi_plus

logger = logging.getLogger("ccb")
logger.setLevel(logging.CRITICAL)  # Start with logging disabled

BRANCH = "branch"
MAX = "max"
ENCODINGS = (BRANCH, MAX)

TIE_BAND = 1e-9
FEAS_TOL = 1e-12


@dataclass
class Affine:
    """constant + sum_j coefs[j] x_j over the system's variables."""

    coefs: Dict[str, float]
    constant: float = 0.0


@dataclass
class ExpCone:
    """(x1, x2, x3) in K_exp."""

    x1: Affine
    x2: Affine
    x3: Affine


@dataclass
class LinearRow:
    """sum_j coefs[j] x_j <= rhs."""

    coefs: Dict[str, float]
    rhs: float


@dataclass
class ExpConeSystem:
    """Cones and rows over the auxiliary variables eta, nu and v.

    Note: Operations on ExpConeSystem objects should be performed using
    functions, not methods. This class is intended to be used as a data holder
    only.

    Attributes:
        encoding (str): BRANCH or MAX.
        variables (List[str]): Variable names.
        cones (List[ExpCone]): Cone memberships.
        rows (List[LinearRow]): Linear rows; the last one is the aggregate.
        blocks (List[Tuple[int, int, int, int]]): (term, eta cone, nu cone,
            row) for every branch, indices into cones and rows.
    """

    encoding: str
    variables: List[str] = field(default_factory=list)
    cones: List[ExpCone] = field(default_factory=list)
    rows: List[LinearRow] = field(default_factory=list)
    blocks: List[Tuple[int, int, int, int]] = field(default_factory=list)


def _branches(gamma: float, b: float, y: float, encoding: str):
    plus = (gamma, b)
    minus = (1.0 / gamma, b * gamma)
    if encoding == MAX:
        return [plus, minus]
    return [plus] if y >= 0 else [minus]


def expand_psi_constraint(specs: Sequence[Tuple[float, float]], y, z: float, u: float, encoding: str = BRANCH) -> ExpConeSystem:
    """Emit the cone system of sum_k Psi_{gamma_k,b_k}(y_k, z) <= u.

    Args:
        specs: (gamma_k, b_k) per term.
        y: Coefficients y_k, one per term.
        z (float): Perspective variable, > 0.
        u (float): Right-hand side.
        encoding (str): BRANCH or MAX.

    Raises:
        DomainError: If z <= 0, the lengths differ or a gamma/b is not positive.
    """
    if not z > 0:
        raise DomainError(f"z must be positive, got {z}")
    if encoding not in ENCODINGS:
        raise DomainError(f"unknown encoding {encoding!r}; expected one of {ENCODINGS}")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if len(specs) != y.size:
        raise DomainError(f"{len(specs)} terms but {y.size} coefficients")
    system = ExpConeSystem(encoding=encoding)
    aggregate: Dict[str, float] = {}
    for k, ((gamma, b), y_k) in enumerate(zip(specs, y)):
        if not (gamma > 0 and b > 0):
            raise DomainError(f"term {k}: gamma and b must be positive")
        v = f"v{k}"
        system.variables.append(v)
        aggregate[v] = 1.0
        for j, (g, c) in enumerate(_branches(gamma, b, y_k, encoding)):
            eta, nu = f"eta{k}_{j}", f"nu{k}_{j}"
            system.variables += [eta, nu]
            scale = Affine({}, z)
            system.cones.append(ExpCone(Affine({eta: 1.0}), scale, Affine({v: -1.0}, y_k * c)))
            system.cones.append(ExpCone(Affine({nu: 1.0}), scale, Affine({v: -1.0}, -y_k * c * g)))
            system.rows.append(LinearRow({eta: g, nu: 1.0}, (1.0 + g) * z))
            system.blocks.append((k, len(system.cones) - 2, len(system.cones) - 1, len(system.rows) - 1))
    system.rows.append(LinearRow(aggregate, u))
    logger.debug(
        f"Cone system ({encoding}): {len(system.cones)} cones, {len(system.rows)} rows, "
        f"{len(system.variables)} variables"
    )
    return system


################################################################################
# Analytic feasibility
################################################################################


def _tight_v(system: ExpConeSystem, block: Tuple[int, int, int, int]) -> float:
    """Smallest v_k allowed by one branch when both of its cones are tight.

    With eta = x2 e^{(c1 - v)/x2} and nu = x2 e^{(c2 - v)/x2}, the row
    a eta + a' nu <= r gives v >= x2 ln((a x2 e^{c1/x2} + a' x2 e^{c2/x2}) / r).
    """
    _, eta_cone, nu_cone, row_index = block
    row = system.rows[row_index]
    first, second = system.cones[eta_cone], system.cones[nu_cone]
    (eta,) = first.x1.coefs
    (nu,) = second.x1.coefs
    x2 = first.x2.constant
    exponents = [first.x3.constant / x2, second.x3.constant / x2]
    weights = [row.coefs[eta] * x2, row.coefs[nu] * x2]
    return x2 * (float(logsumexp(exponents, b=weights)) - math.log(row.rhs))


def minimal_terms(system: ExpConeSystem) -> np.ndarray:
    """Per-term smallest feasible v_k; equals Psi of the term."""
    terms = int(max(k for k, *_ in system.blocks)) + 1 if system.blocks else 0
    values = np.full(terms, -math.inf)
    for block in system.blocks:
        values[block[0]] = max(values[block[0]], _tight_v(system, block))
    return values


def system_feasible(system: ExpConeSystem, tol: float = FEAS_TOL) -> bool:
    """Whether some (eta, nu, v) satisfies every cone and row."""
    return float(np.sum(minimal_terms(system))) <= system.rows[-1].rhs + tol


def witness(system: ExpConeSystem) -> Dict[str, float]:
    """The assignment with every v_k minimal and every cone tight."""
    values = minimal_terms(system)
    point = {f"v{k}": float(v) for k, v in enumerate(values)}
    for k, eta_cone, nu_cone, _ in system.blocks:
        for index in (eta_cone, nu_cone):
            cone = system.cones[index]
            (name,) = cone.x1.coefs
            x2 = cone.x2.constant
            point[name] = x2 * math.exp((cone.x3.constant - values[k]) / x2)
    return point


def _evaluate(expr: Affine, point: Dict[str, float]) -> float:
    return expr.constant + sum(a * point[name] for name, a in expr.coefs.items())


def system_satisfied(system: ExpConeSystem, point: Dict[str, float], tol: float = 1e-9) -> bool:
    """Check a given assignment against every cone and row."""
    for cone in system.cones:
        x1, x2, x3 = (_evaluate(e, point) for e in (cone.x1, cone.x2, cone.x3))
        if x2 <= 0 or x1 < x2 * math.exp(x3 / x2) - tol * max(1.0, abs(x1)):
            return False
    for row in system.rows:
        lhs = sum(a * point[name] for name, a in row.coefs.items())
        if lhs > row.rhs + tol * max(1.0, abs(row.rhs)):
            return False
    return True


################################################################################
# Cross-check against the direct form
################################################################################


def direct_value(specs: Sequence[Tuple[float, float]], y, z: float, encoding: str = BRANCH) -> float:
    """sum_k Psi(y_k, z), or the sum of branch maxima for the MAX encoding."""
    gam = np.array([g for g, _ in specs], dtype=float)
    b = np.array([c for _, c in specs], dtype=float)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if encoding == MAX:
        return float(np.sum(np.maximum(psi_plus(gam, b, y, z), psi_plus(gam, b, -y, z))))
    return float(np.sum(psi(gam, b, y, z)))


def sample_points(
    rng: np.random.Generator,
    specs: Sequence[Tuple[float, float]],
    count: int,
    spread: float = 0.1,
) -> List[Tuple[np.ndarray, float, float]]:
    """Random (y, z, u) with u within +-spread of the direct value, never on it."""
    points = []
    n = len(specs)
    for _ in range(count):
        y = rng.uniform(-2.0, 2.0, size=n)
        z = float(rng.uniform(0.05, 2.0))
        offset = spread * float(rng.uniform(0.01, 1.0)) * (1 if rng.random() < 0.5 else -1)
        points.append((y, z, direct_value(specs, y, z) + offset))
    return points


def check_equivalence(
    specs: Sequence[Tuple[float, float]],
    samples: Iterable[Tuple[Any, float, float]],
    encoding: str = BRANCH,
) -> float:
    """Fraction of samples where the cone system and the direct form agree.

    Samples with |direct - u| <= TIE_BAND count as agreeing.

    Returns:
        float: Agreement in [0, 1]; 1.0 for an empty sample.
    """
    total = agree = 0
    for y, z, u in samples:
        total += 1
        direct = direct_value(specs, y, z, encoding)
        if abs(direct - u) <= TIE_BAND:
            agree += 1
            continue
        if system_feasible(expand_psi_constraint(specs, y, z, u, encoding)) == (direct <= u):
            agree += 1
    if total == 0:
        return 1.0
    logger.debug(f"Cone/direct agreement {agree}/{total} ({encoding})")
    return agree / total


################################################################################
# JSON
################################################################################


def _affine_to_dict(expr: Affine) -> Dict[str, Any]:
    return {"coefs": dict(expr.coefs), "constant": expr.constant}


def system_to_json(system: ExpConeSystem) -> Dict[str, Any]:
    """The system in the schema of docs/conic-format.txt."""
    return {
        "encoding": system.encoding,
        "variables": list(system.variables),
        "cones": [
            {"x1": _affine_to_dict(c.x1), "x2": _affine_to_dict(c.x2), "x3": _affine_to_dict(c.x3)}
            for c in system.cones
        ],
        "rows": [{"coefs": dict(r.coefs), "sense": "<=", "rhs": r.rhs} for r in system.rows],
    }
