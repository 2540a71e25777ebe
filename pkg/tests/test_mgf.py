import math

import mpmath
import numpy as np
import pytest

from ccb.bench import instance_rng
from ccb.errors import DomainError
from ccb.mgf import check_chain, est_Cinf, est_Ck, est_D, est_H, est_J, est_Z, sample_chain_point


def test_all_estimators_are_one_at_zero():
    assert est_D(0.0, 0.3, 2.0) == pytest.approx(1.0)
    assert est_J(0.0, 0.3, 2.0) == 1.0
    assert est_H(0.0, 0.4) == 1.0
    assert est_Z(0.0, 0.4) == 1.0
    assert est_Ck(0.0, 0.4, 0.2, 3) == 1.0
    assert est_Cinf(0.0, 0.4, 0.2) == 1.0


def test_d_symmetric_is_cosh():
    for t in (0.1, 1.0, 3.5):
        assert est_D(t, 1.0, 0.7) == pytest.approx(math.cosh(0.7 * t), rel=1e-14)


def test_d_extended_precision():
    mpmath.mp.prec = 200
    t, g, b = mpmath.mpf(2), mpmath.mpf("0.25"), mpmath.mpf(1)
    expected = (g * mpmath.exp(t * b) + mpmath.exp(-t * g * b)) / (1 + g)
    assert est_D(2.0, 0.25, 1.0) == pytest.approx(float(expected), rel=1e-14)


def test_closed_forms():
    assert est_J(1.3, 0.0, 2.0) == 1.0
    assert est_H(2.0, 0.0) == pytest.approx(math.exp(0.5))
    assert est_Z(1.7, 1.0) == pytest.approx(math.exp(1.7))
    # p == q removes the (p - q) factor
    assert est_Cinf(1.2, 0.3, 0.3) == pytest.approx(est_Z(1.2, 0.3))


def test_ck_decreasing_to_cinf(rng):
    for _ in range(50):
        p = rng.uniform(0.05, 0.95)
        q = rng.uniform(p * p, p)
        t = rng.uniform(0.0, 4.0)
        values = [est_Ck(t, p, q, k) for k in (1, 2, 4, 8, 64, 10**7)]
        assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))
        assert values[-1] == pytest.approx(est_Cinf(t, p, q), rel=1e-6)
    with pytest.raises(DomainError):
        est_Ck(1.0, 0.5, 0.3, 0)


def test_chain_at_zero_is_tight():
    checks = check_chain(0.0, 0.5, 1.0, 0.5)
    assert len(checks) == 6
    for check in checks:
        assert check.holds
        assert check.slack == pytest.approx(0.0, abs=1e-15)


def test_chain_with_gamma_one():
    checks = {c.name: c for c in check_chain(1.5, 1.0, 0.8, 0.6)}
    assert checks["D<=J"].holds
    assert checks["D<=cosh"].slack == pytest.approx(0.0, abs=1e-15)


def test_chain_holds_on_random_points():
    for index in range(10000):
        checks = check_chain(*sample_chain_point(instance_rng(11, index)))
        assert all(c.holds for c in checks), [c for c in checks if not c.holds]


@pytest.mark.parametrize(
    "point",
    [(-1.0, 0.5, 1.0, 0.5), (1.0, 0.0, 1.0, 0.5), (1.0, 1.5, 1.0, 0.5), (1.0, 0.5, 0.0, 0.5), (1.0, 0.5, 1.0, 1.0)],
)
def test_chain_domain(point):
    with pytest.raises(DomainError):
        check_chain(*point)


def test_chain_rejects_impossible_variance():
    # p = 0.1 allows gamma <= p / (1 - p) only
    with pytest.raises(DomainError):
        check_chain(1.0, 0.9, 1.0, 0.1)


def test_sample_chain_point_in_domain():
    rng = np.random.default_rng(3)
    for _ in range(100):
        t, gamma, b, p = sample_chain_point(rng, t_max=2.0)
        assert 0 <= t <= 2.0 and 0 < gamma <= 1 and b > 0 and 0 < p < 1
