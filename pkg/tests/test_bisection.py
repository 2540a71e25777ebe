import math

import numpy as np
import pytest
from scipy.optimize import brentq, minimize_scalar

from ccb.bench import gen_table1_spec, instance_rng
from ccb.bisection import (
    INTERVAL_ALPHA,
    TOLERANCE_PHI,
    alpha_error_bound,
    alpha_upper_box,
    confidence_bound,
    inner_iteration_bound,
    outer_iteration_bound,
    phi_star,
)
from ccb.data import RandomTermSpec, b_bar, curvature_bound, homogeneous_spec, log_tau_minus, make_sum_spec
from ccb.errors import DomainError, InfeasibleLevelError
from ccb.phi import phi


def _grid_phi_star(spec, alpha, t_max):
    grid = np.linspace(0.0, t_max, 200001)
    values = [phi(spec, alpha, t) for t in grid[::100]]
    best = int(np.argmin(values)) * 100
    lo, hi = grid[max(best - 100, 0)], grid[min(best + 100, len(grid) - 1)]
    result = minimize_scalar(lambda t: phi(spec, alpha, t), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return min(result.fun, min(values))


def test_phi_star_at_zero_level(small_spec):
    result = phi_star(small_spec, 0.0)
    assert result.value == pytest.approx(0.0, abs=1e-10)
    assert result.t_hat <= result.eps_t


def test_phi_star_boundary_levels(small_spec):
    top = b_bar(small_spec)
    at_top = phi_star(small_spec, top)
    assert at_top.value == pytest.approx(log_tau_minus(small_spec))
    assert at_top.t_hat == math.inf and at_top.iterations == 0
    above = phi_star(small_spec, top + 0.1)
    assert above.value == -math.inf and above.iterations == 0


def test_phi_star_matches_grid_homogeneous():
    spec = homogeneous_spec(10, sigma=0.5, b_upper=1.0)
    result = phi_star(spec, 0.3, eps_t=1e-8)
    assert result.value == pytest.approx(_grid_phi_star(spec, 0.3, 20.0), abs=1e-10)


def test_phi_star_error_within_curvature_band(small_spec):
    eps_t = 1e-3
    result = phi_star(small_spec, 0.4, eps_t=eps_t)
    exact = phi_star(small_spec, 0.4, eps_t=1e-12).value
    assert -1e-14 <= result.value - exact <= curvature_bound(small_spec) * eps_t**2 + 1e-14


def test_phi_star_iterations_bounded(small_spec):
    tau = 0.05
    result = confidence_bound(small_spec, tau)
    assert result.max_inner_iterations <= inner_iteration_bound(small_spec, tau)
    assert result.outer_iterations <= outer_iteration_bound(small_spec)


def test_phi_star_domain(small_spec):
    with pytest.raises(DomainError):
        phi_star(small_spec, -0.1)
    with pytest.raises(DomainError):
        phi_star(small_spec, 0.1, eps_t=0.0)


def test_confidence_bound_tau_one(small_spec):
    result = confidence_bound(small_spec, 1.0)
    assert abs(result.alpha_hat) <= max(1e-5, alpha_error_bound(small_spec))


@pytest.mark.parametrize("seed", range(4))
def test_confidence_bound_hits_level(seed):
    spec, _ = gen_table1_spec(np.random.default_rng(seed), 20)
    tau = 0.03
    if math.log(tau) <= log_tau_minus(spec):
        pytest.skip("level below tau_minus for this draw")
    result = confidence_bound(spec, tau)
    assert result.alpha_hat <= alpha_upper_box(spec, tau) + 1e-12
    value = phi_star(spec, result.alpha_hat).value
    if result.terminated_by == TOLERANCE_PHI:
        assert abs(value - math.log(tau)) <= 2 * curvature_bound(spec) * 1e-12 + 1e-9
    else:
        assert result.terminated_by == INTERVAL_ALPHA


@pytest.mark.parametrize("index", range(200))
def test_double_bisection_guarantees(index):
    tau, eps = 0.03, 1e-6
    spec, _ = gen_table1_spec(instance_rng(2024, index), 2 + index % 4)
    if math.log(tau) <= log_tau_minus(spec):
        with pytest.raises(InfeasibleLevelError):
            confidence_bound(spec, tau, eps, eps)
        return
    result = confidence_bound(spec, tau, eps, eps)
    assert result.outer_iterations <= outer_iteration_bound(spec, eps)
    assert result.max_inner_iterations <= inner_iteration_bound(spec, tau, eps)
    box = alpha_upper_box(spec, tau)
    assert result.alpha_hat <= box
    if box == 0:
        assert result.alpha_hat == 0
        return
    # phi* decreases from 0 at alpha = 0 to at most ln(tau) at the box
    root = brentq(lambda a: phi_star(spec, a, eps_t=1e-12).value - math.log(tau), 0.0, box, xtol=1e-12)
    assert abs(result.alpha_hat - root) <= alpha_error_bound(spec, eps, eps) + 2e-12


def test_confidence_bound_below_tau_minus(small_spec):
    with pytest.raises(InfeasibleLevelError) as excinfo:
        confidence_bound(small_spec, 1e-30)
    assert excinfo.value.tau == 1e-30
    with pytest.raises(DomainError):
        confidence_bound(small_spec, 1.5)


def test_alpha_upper_box_limits(small_spec):
    tau_minus = math.exp(log_tau_minus(small_spec))
    assert alpha_upper_box(small_spec, tau_minus * (1 + 1e-12)) == pytest.approx(b_bar(small_spec), rel=1e-5)
    assert 0.0 <= alpha_upper_box(small_spec, 0.5) < b_bar(small_spec)


def test_degenerate_terms_keep_the_sum_event():
    base = homogeneous_spec(4, sigma=0.4, b_upper=1.0)
    padded = make_sum_spec(list(base.terms) + [RandomTermSpec(mean=0.0, sigma=0.0, b_upper=1.0)] * 4)
    # alpha is per summand: the padded sum has twice as many terms
    assert confidence_bound(padded, 0.05).alpha_hat * 8 == pytest.approx(
        confidence_bound(base, 0.05).alpha_hat * 4, rel=1e-9
    )


def test_alpha_error_bound_positive(small_spec):
    assert alpha_error_bound(small_spec, 1e-6, 1e-6) >= 1e-6
    assert alpha_error_bound(small_spec, 1e-3, 1e-9) > alpha_error_bound(small_spec, 1e-6, 1e-9)
