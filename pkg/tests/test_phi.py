import math

import mpmath
import numpy as np
import pytest

from ccb.data import RandomTermSpec, curvature_bound, homogeneous_spec, log_tau_minus, make_sum_spec
from ccb.errors import DomainError
from ccb.phi import phi, phi_d1, phi_d2


def _phi_mp(sig, bs, alpha, t):
    """phi evaluated directly in 200-bit arithmetic."""
    mpmath.mp.prec = 200
    n = len(bs)
    total = mpmath.mpf(0)
    b_sum = mpmath.mpf(0)
    for s, b in zip(sig, bs):
        g = mpmath.mpf(s) ** 2 / mpmath.mpf(b) ** 2
        b_sum += b
        total += mpmath.log(g / (1 + g))
        total += mpmath.log(1 + mpmath.exp(-t * b * (1 + g)) / g)
    total += t * (b_sum - n * mpmath.mpf(alpha))
    return float(total)


def _spec(sig, bs):
    return make_sum_spec(RandomTermSpec(mean=0.0, sigma=s, b_upper=b) for s, b in zip(sig, bs))


def test_phi_at_zero_is_zero(small_spec):
    for alpha in (0.0, 0.3, 2.0):
        assert phi(small_spec, alpha, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_phi_single_term_extended_precision():
    spec = homogeneous_spec(1, sigma=0.5, b_upper=1.0)
    assert phi(spec, 0.3, 1.0) == pytest.approx(_phi_mp([0.5], [1.0], 0.3, 1.0), rel=1e-13)


def test_phi_heterogeneous_extended_precision(rng):
    sig = rng.uniform(0.05, 1.0, size=7)
    bs = sig * rng.uniform(1.0, 5.0, size=7)
    spec = _spec(sig, bs)
    for t in (0.1, 1.5, 12.0):
        assert phi(spec, 0.4, t) == pytest.approx(_phi_mp(sig, bs, 0.4, t), rel=1e-11, abs=1e-12)


def test_phi_large_t_is_finite():
    spec = homogeneous_spec(3, sigma=0.01, b_upper=1.0)
    value = phi(spec, 0.5, 1e6)
    assert math.isfinite(value)
    # asymptote ln tau_minus + t (N b_bar - alpha N)
    assert value == pytest.approx(log_tau_minus(spec) + 1e6 * (3.0 - 1.5), rel=1e-12)


def test_phi_d1_at_zero(small_spec):
    assert phi_d1(small_spec, 0.7, 0.0) == pytest.approx(-0.7 * 5, rel=1e-12)


def test_phi_d1_nonnegative_for_alpha_zero(small_spec):
    for t in np.linspace(0.0, 20.0, 41):
        assert phi_d1(small_spec, 0.0, t) >= -1e-12


def test_phi_d1_finite_difference(small_spec):
    h, t = 1e-6, 0.7
    fd = (phi(small_spec, 0.2, t + h) - phi(small_spec, 0.2, t - h)) / (2 * h)
    assert phi_d1(small_spec, 0.2, t) == pytest.approx(fd, rel=1e-6)


def test_phi_d2_single_symmetric_term():
    spec = homogeneous_spec(1, sigma=2.0, b_upper=2.0)
    assert phi_d2(spec, 0.0, 0.0) == pytest.approx(4.0)


def test_phi_d2_bounded_by_curvature(small_spec):
    bound = curvature_bound(small_spec)
    for t in np.linspace(0.0, 30.0, 61):
        assert 0.0 <= phi_d2(small_spec, 0.1, t) <= bound + 1e-12


def test_phi_d2_finite_difference(small_spec):
    h, t = 1e-5, 0.3
    fd = (phi_d1(small_spec, 0.2, t + h) - phi_d1(small_spec, 0.2, t - h)) / (2 * h)
    assert phi_d2(small_spec, 0.2, t) == pytest.approx(fd, rel=1e-5)


def test_degenerate_terms_do_not_change_phi():
    base = _spec([0.3, 0.6], [1.0, 2.0])
    padded = make_sum_spec(list(base.terms) + [RandomTermSpec(mean=0.0, sigma=0.0, b_upper=4.0)])
    # the same event on the sum: alpha * 3 == alpha' * 2
    assert phi(padded, 0.2, 1.3) == pytest.approx(phi(base, 0.3, 1.3), rel=1e-13)


@pytest.mark.parametrize("t", [-1e-3, math.inf, math.nan])
def test_bad_t(small_spec, t):
    with pytest.raises(DomainError):
        phi(small_spec, 0.1, t)
