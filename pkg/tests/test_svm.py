import math

import numpy as np
import pytest
from scipy.optimize import minimize

from ccb.errors import DomainError
from ccb.svm import (
    CANTELLI,
    CONVERGED,
    DETERMINISTIC,
    METHODS,
    REFINED,
    RESIDUAL_TOL,
    calibrate_uncertainty,
    generate_two_class_2d,
    make_dataset,
    margin_width,
    solve_svm,
    split_dataset,
    svm_score,
)

TOY_POINTS = np.array([[0.0, 0.0], [1.0, 0.5], [0.2, 1.5], [2.0, 2.0], [2.5, 0.8], [0.9, 2.4]])
TOY_LABELS = np.array([-1, -1, -1, 1, 1, 1])


def _soft_margin_oracle(points, labels, penalty):
    m, n = points.shape

    def objective(v):
        return 0.5 * v[:n] @ v[:n] + penalty * np.sum(v[n + 1 :])

    constraints = [
        {"type": "ineq", "fun": lambda v: labels * (points @ v[:n] + v[n]) - 1.0 + v[n + 1 :]},
        {"type": "ineq", "fun": lambda v: v[n + 1 :]},
    ]
    start = np.concatenate([np.zeros(n + 1), np.full(m, 2.0)])
    result = minimize(objective, start, method="SLSQP", constraints=constraints, options={"ftol": 1e-12, "maxiter": 500})
    return result.fun, result.x[:n]


def _angle(a, b):
    cosine = abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return math.acos(min(1.0, cosine))


@pytest.mark.parametrize("penalty", [0.5, 100.0])
def test_deterministic_matches_quadratic_oracle(penalty):
    data = make_dataset(TOY_POINTS, TOY_LABELS, tau=0.1, penalty=penalty)
    solution = solve_svm(data, DETERMINISTIC)
    value, w = _soft_margin_oracle(TOY_POINTS, TOY_LABELS, penalty)
    assert solution.status == CONVERGED
    assert solution.objective == pytest.approx(value, rel=1e-6)
    np.testing.assert_allclose(solution.w, w, atol=1e-4)
    assert np.all(solution.xi >= 0)


def test_certain_data_collapses_to_deterministic():
    zeros = np.zeros_like(TOY_POINTS)
    data = make_dataset(TOY_POINTS, TOY_LABELS, tau=0.05, penalty=10.0, sigmas=zeros, b_upper=np.ones_like(TOY_POINTS))
    refined = solve_svm(data, REFINED)
    deterministic = solve_svm(data, DETERMINISTIC)
    assert refined.objective == pytest.approx(deterministic.objective, rel=1e-6)
    assert np.all(refined.z > 0)


@pytest.fixture(scope="module")
def separated():
    points, labels = generate_two_class_2d(np.random.default_rng(7), m=100, separation=4.0, spread=0.5)
    data = make_dataset(points, labels, tau=0.02, penalty=100.0)
    return data, {method: solve_svm(data, method) for method in METHODS}


def test_separated_instance_same_direction(separated):
    _, solutions = separated
    axis = np.array([1.0, 0.0])
    for solution in solutions.values():
        assert solution.status == CONVERGED
        assert np.max(solution.residuals) <= RESIDUAL_TOL
        assert _angle(solution.w, axis) <= 1e-3
        assert abs(solution.w0) <= 1e-3


def test_separated_instance_margin_order(separated):
    _, solutions = separated
    # robust constraints push points further from the margin, so ||w|| grows
    norms = {method: np.linalg.norm(s.w) for method, s in solutions.items()}
    assert norms[DETERMINISTIC] <= norms[REFINED] <= norms[CANTELLI]
    assert margin_width(solutions[DETERMINISTIC]) >= margin_width(solutions[CANTELLI])


def test_separated_instance_scores(separated):
    data, solutions = separated
    for solution in solutions.values():
        assert svm_score(solution, data.points, data.labels) == 1.0
        assert svm_score(solution, data.points, -data.labels) == 0.0


def test_tight_instance_objective_order():
    points, labels = generate_two_class_2d(np.random.default_rng(3), m=60, separation=1.5, spread=0.5)
    data = make_dataset(points, labels, tau=0.02, penalty=100.0)
    refined = solve_svm(data, REFINED)
    cantelli = solve_svm(data, CANTELLI)
    assert refined.status == CONVERGED and cantelli.status == CONVERGED
    assert refined.objective <= cantelli.objective * (1 + 1e-6)


def test_objective_monotone_in_tau():
    points, labels = generate_two_class_2d(np.random.default_rng(11), m=24, separation=2.0, spread=0.6)
    objectives = [solve_svm(make_dataset(points, labels, tau=tau, penalty=10.0), REFINED).objective for tau in (0.01, 0.05, 0.2)]
    assert objectives[0] >= objectives[1] * (1 - 1e-6)
    assert objectives[1] >= objectives[2] * (1 - 1e-6)


def test_flipped_labels_complement_score(rng):
    points, labels = generate_two_class_2d(rng, m=40, separation=1.0, spread=0.8)
    solution = solve_svm(make_dataset(points, labels, penalty=1.0), DETERMINISTIC)
    score = svm_score(solution, points, labels)
    assert 0.0 <= score <= 1.0
    assert svm_score(solution, points, -labels) == pytest.approx(1.0 - score)


def test_calibration_per_class():
    points = np.array([[0.0, 1.0], [2.0, 1.0], [10.0, 0.0], [14.0, 4.0]])
    sigmas, b_upper = calibrate_uncertainty(points, [1, 1, -1, -1])
    np.testing.assert_allclose(sigmas, [[0.1, 0.0], [0.1, 0.0], [0.2, 0.2], [0.2, 0.2]])
    np.testing.assert_allclose(b_upper, [[0.5, 1.0], [0.5, 1.0], [1.0, 1.0], [1.0, 1.0]])


def test_split_keeps_both_sides(rng):
    data = make_dataset(TOY_POINTS, TOY_LABELS)
    train, test = split_dataset(data, 0.5, rng)
    assert train.points.shape[0] == 3 and test.points.shape[0] == 3
    combined = np.vstack([train.points, test.points])
    assert sorted(map(tuple, combined)) == sorted(map(tuple, TOY_POINTS))
    train, test = split_dataset(data, 0.01, rng)
    assert train.points.shape[0] == 1
    with pytest.raises(DomainError):
        split_dataset(data, 1.0, rng)


def test_generator_symmetry(rng):
    points, labels = generate_two_class_2d(rng, m=8)
    np.testing.assert_allclose(points[4:], points[:4] * [-1, 1])
    assert list(labels) == [1] * 4 + [-1] * 4
    with pytest.raises(DomainError):
        generate_two_class_2d(rng, m=10)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(labels=[1, 0, -1, 1, -1, 1]),
        dict(tau=1.0),
        dict(penalty=0.0),
        dict(sigmas=-np.ones((6, 2)), b_upper=np.ones((6, 2))),
    ],
)
def test_invalid_datasets(kwargs):
    base = dict(points=TOY_POINTS, labels=TOY_LABELS)
    base.update(kwargs)
    with pytest.raises(DomainError):
        make_dataset(**base)


def test_errors():
    data = make_dataset(TOY_POINTS, TOY_LABELS)
    with pytest.raises(DomainError):
        solve_svm(data, "Hoeffding")
    solution = solve_svm(data, DETERMINISTIC)
    with pytest.raises(DomainError):
        svm_score(solution, np.empty((0, 2)), np.empty(0))
