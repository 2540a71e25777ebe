"""The perspective functions used by the knapsack and SVM approximations.

    Psi+_{gamma,b}(y, z) = z ln((gamma e^{(y/z) b} + e^{-(y/z) b gamma}) / (1 + gamma))

is the perspective of the log-MGF estimator D, jointly convex and positively
homogeneous in (y, z). The two-sided Psi uses Psi+_{gamma,b} for y >= 0 and
Psi+_{1/gamma,b gamma} for y <= 0, which is the same as Psi+_{gamma,b}(|y|, z).

All functions accept scalars or numpy arrays that broadcast together and
return floats for scalar input.
"""

import logging

import numpy as np
from scipy.special import expit

from .errors import DomainError

logger = logging.getLogger("ccb")
logger.setLevel(logging.CRITICAL)  # Start with logging disabled


def _check_params(gamma, b) -> None:
    if not np.all(np.asarray(gamma) > 0):
        raise DomainError(f"gamma must be positive, got {gamma}")
    if not np.all(np.asarray(b) > 0):
        raise DomainError(f"b must be positive, got {b}")


def _check_z(z, strict: bool) -> None:
    z = np.asarray(z)
    ok = z > 0 if strict else z >= 0
    if not np.all(ok):
        raise DomainError(f"z must be {'positive' if strict else 'non-negative'}, got {z}")


def _out(value):
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


def _broadcast(gamma, b, y, z):
    gamma, b, y, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (gamma, b, y, z)))
    return gamma, b, y, z


################################################################################
# One-sided Psi+
################################################################################


def psi_plus(gamma, b, y, z):
    """Psi+_{gamma,b}(y, z), closed at z = 0 by its recession function.

    At z = 0 the value is b y for y >= 0 and b gamma (-y) for y <= 0.

    Raises:
        DomainError: If gamma <= 0, b <= 0 or z < 0.
    """
    _check_params(gamma, b)
    _check_z(z, strict=False)
    gamma, b, y, z = _broadcast(gamma, b, y, z)
    positive = z > 0
    safe_z = np.where(positive, z, 1.0)
    u = y / safe_z
    inner = np.logaddexp(np.log(gamma) + u * b, -u * b * gamma) - np.log1p(gamma)
    closure = np.where(y >= 0, b * y, -b * gamma * y)
    return _out(np.where(positive, z * inner, closure))


def psi_plus_grad(gamma, b, y, z):
    """Gradient (d/dy, d/dz) of Psi+.

    With s = b (1 + gamma), u = y / z and q = 1 / (1 + gamma e^{u s}):

        d/dy = b - s q
        d/dz = ln(gamma + e^{-u s}) - ln(1 + gamma) + u s q

    At z = 0 the gradient of the closure is returned:
    (b, ln(gamma / (1 + gamma))) for y > 0, (-b gamma, -ln(1 + gamma)) for
    y < 0 and (0, 0) at the origin.

    Returns:
        tuple: (dy, dz), floats or arrays.
    """
    _check_params(gamma, b)
    _check_z(z, strict=False)
    gamma, b, y, z = _broadcast(gamma, b, y, z)
    positive = z > 0
    u = y / np.where(positive, z, 1.0)
    s = b * (1.0 + gamma)
    log_gamma = np.log(gamma)
    q = expit(-(u * s + log_gamma))
    dy = b - s * q
    dz = np.logaddexp(log_gamma, -u * s) - np.log1p(gamma) + u * s * q

    dy0 = np.select([y > 0, y < 0], [b, -b * gamma], 0.0)
    dz0 = np.select([y > 0, y < 0], [log_gamma - np.log1p(gamma), -np.log1p(gamma)], 0.0)
    return _out(np.where(positive, dy, dy0)), _out(np.where(positive, dz, dz0))


def psi_plus_hess(gamma, b, y, z):
    """Hessian of Psi+ in (y, z), for z > 0.

    s^2 q (1 - q) / z * [[1, -u], [-u, u^2]], a rank-one PSD matrix.

    Returns:
        np.ndarray: Shape (..., 2, 2).

    Raises:
        DomainError: If z <= 0.
    """
    _check_params(gamma, b)
    _check_z(z, strict=True)
    gamma, b, y, z = _broadcast(gamma, b, y, z)
    u = y / z
    s = b * (1.0 + gamma)
    q = expit(-(u * s + np.log(gamma)))
    curvature = s * s * q * (1.0 - q) / z
    hess = np.empty(y.shape + (2, 2))
    hess[..., 0, 0] = curvature
    hess[..., 0, 1] = -curvature * u
    hess[..., 1, 0] = -curvature * u
    hess[..., 1, 1] = curvature * u * u
    return hess


################################################################################
# Two-sided Psi
################################################################################


def psi(gamma, b, y, z):
    """Two-sided Psi_{gamma,b}(y, z) = Psi+_{gamma,b}(|y|, z)."""
    return psi_plus(gamma, b, np.abs(y), z)


def psi_grad(gamma, b, y, z):
    """Gradient of psi; the y-component is odd in y and vanishes at y = 0."""
    sign = np.where(np.asarray(y) < 0, -1.0, 1.0)
    dy, dz = psi_plus_grad(gamma, b, np.abs(y), z)
    return _out(sign * dy), dz


def psi_hess(gamma, b, y, z):
    """Hessian of psi, continuous across y = 0."""
    sign = np.where(np.asarray(y) < 0, -1.0, 1.0)
    hess = psi_plus_hess(gamma, b, np.abs(y), z)
    hess[..., 0, 1] *= sign
    hess[..., 1, 0] *= sign
    return hess
