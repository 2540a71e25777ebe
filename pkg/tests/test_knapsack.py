import math

import numpy as np
import pytest
from scipy.special import ndtri

from ccb.errors import DomainError
from ccb.knapsack import (
    BERNSTEIN,
    CANTELLI,
    FORMULATIONS,
    HOEFFDING,
    KP,
    NORMAL,
    REFINED,
    SIGMA_RANDOM,
    adapt_instance,
    bernstein_exponent,
    bernstein_z,
    build_master,
    ckp_b_socp_equivalence,
    ckp_constraint_value,
    enumerate_ckp,
    instance_from_dict,
    instance_to_dict,
    make_instance,
    probability_certificate,
    refined_min_z,
    solve_ckp,
    z_upper_bound,
)
from ccb.milp import FEAS_TOL, OPTIMAL, dump_lp


@pytest.fixture
def toy():
    weights = np.array([2.0, 2.0, 2.0])
    sigmas = 0.1 * weights
    return make_instance([3, 2, 2], weights, sigmas, 5 * sigmas, 4.2, 0.03, "toy")


def _random_instance(seed, n=7, tau=0.05):
    rng = np.random.default_rng(seed)
    profits = rng.integers(5, 50, size=n).astype(float)
    weights = rng.integers(5, 40, size=n).astype(float)
    sigmas = rng.uniform(0.02, 0.15, size=n) * weights
    return make_instance(profits, weights, sigmas, 5 * sigmas, 0.45 * weights.sum(), tau, f"rand{seed}")


@pytest.mark.parametrize("formulation", FORMULATIONS)
def test_toy_matches_enumeration(toy, formulation):
    solution = solve_ckp(toy, formulation)
    best, _ = enumerate_ckp(toy, formulation)
    assert solution.status == OPTIMAL
    assert solution.objective == pytest.approx(best)
    assert solution.certificate <= FEAS_TOL


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("formulation", [NORMAL, HOEFFDING, CANTELLI, BERNSTEIN, REFINED])
def test_random_instances_match_enumeration(seed, formulation):
    instance = _random_instance(seed)
    solution = solve_ckp(instance, formulation)
    best, _ = enumerate_ckp(instance, formulation)
    assert solution.objective == pytest.approx(best)
    assert ckp_constraint_value(instance, formulation, solution.y) <= FEAS_TOL


@pytest.mark.parametrize("seed", range(6))
def test_refined_is_least_conservative(seed):
    instance = _random_instance(seed, n=8, tau=0.03)
    values = {f: enumerate_ckp(instance, f)[0] for f in (KP, HOEFFDING, BERNSTEIN, REFINED)}
    assert values[KP] >= values[REFINED] >= max(values[HOEFFDING], values[BERNSTEIN])


def test_refined_certificate_below_level():
    instance = _random_instance(3, n=8, tau=0.03)
    solution = solve_ckp(instance, REFINED)
    assert solution.z is not None and solution.z >= 0
    assert ckp_constraint_value(instance, REFINED, solution.y, solution.z) <= 1e-7
    assert solution.probability <= instance.tau * (1 + 1e-4)


def test_refined_master_and_cuts(toy):
    model, _ = build_master(toy, REFINED)
    assert [v.name for v in model.variables][-1] == "z"
    assert model.variables[-1].upper == pytest.approx(z_upper_bound(toy))
    # the KP optimum {0, 1} leaves 0.2 of slack, far too little
    solution = solve_ckp(toy, REFINED)
    assert solution.cuts_added > 0
    assert solution.objective == 3.0


def test_empty_selection_is_feasible(toy):
    y = np.zeros(3)
    for formulation in FORMULATIONS:
        assert ckp_constraint_value(toy, formulation, y) <= 0
    assert ckp_constraint_value(toy, REFINED, y, 0.0) == pytest.approx(-4.2)
    assert ckp_constraint_value(toy, REFINED, y, 2.0) == pytest.approx(-4.2 - 2.0 * math.log(0.03))


def test_full_selection_hand_value(toy):
    y = np.ones(3)
    expected = 1.8 - ndtri(0.03) * math.sqrt(3 * 0.04)
    assert ckp_constraint_value(toy, NORMAL, y) == pytest.approx(expected)
    assert ckp_constraint_value(toy, KP, y) == pytest.approx(1.8)
    assert ckp_constraint_value(toy, HOEFFDING, y) == pytest.approx(1.8 + math.sqrt(2 * math.log(1 / 0.03) * 3))


def test_refined_min_z_is_minimum(toy):
    y = np.array([1.0, 1.0, 0.0])
    z, value = refined_min_z(toy, y)
    for other in (0.5 * z, 0.9 * z, 1.1 * z, 2 * z):
        assert ckp_constraint_value(toy, REFINED, y, other) >= value - 1e-12


def test_bernstein_equivalence_random(rng):
    instance = _random_instance(5, n=6)
    for _ in range(10000):
        y = (rng.random(6) < 0.5).astype(float)
        z = rng.uniform(0.0, 3.0) * max(bernstein_z(instance, y), 1.0)
        assert ckp_b_socp_equivalence(instance, y, z)


def test_bernstein_equivalence_on_boundary():
    weights = np.array([3.0, 4.0, 5.0])
    sigmas = np.array([0.3, 0.2, 0.5])
    y = np.array([1.0, 0.0, 1.0])
    tau, z = 0.05, 2.0
    log_inv = math.log(1 / tau)
    variance = float(np.sum(sigmas**2 * y))
    capacity = weights @ y + log_inv * z / 3 + math.sqrt(log_inv**2 * z**2 / 9 + 2 * log_inv * variance)
    instance = make_instance([1, 1, 1], weights, sigmas, 5 * sigmas, capacity, tau)
    assert ckp_constraint_value(instance, BERNSTEIN, y, z) == pytest.approx(0.0, abs=1e-9)
    assert bernstein_exponent(instance, y, z) == pytest.approx(math.log(tau), abs=1e-9)
    assert ckp_b_socp_equivalence(instance, y, z)


def test_bernstein_reports_smallest_z(toy):
    solution = solve_ckp(toy, BERNSTEIN)
    assert solution.z == pytest.approx(bernstein_z(toy, solution.y))
    assert solution.cuts_added > 0


def test_probability_certificate_edges(toy):
    assert probability_certificate(toy, np.zeros(3)) == 0.0
    assert probability_certificate(toy, np.ones(3)) == 1.0
    single = probability_certificate(toy, np.array([1.0, 0.0, 0.0]))
    assert 0.0 <= single < 1e-6
    pair = probability_certificate(toy, np.array([1.0, 1.0, 0.0]))
    assert 0.03 < pair <= 1.0


def test_adapt_instance_rules():
    fixed = adapt_instance([1, 2], [10, 20], 25, tau=0.03, name="t")
    np.testing.assert_allclose(fixed.sigmas, [0.5, 1.0])
    np.testing.assert_allclose(fixed.b_upper, [2.5, 5.0])
    drawn = adapt_instance([1, 2], [10, 20], 25, sigma_rule=SIGMA_RANDOM, rng=np.random.default_rng(1))
    assert np.all(drawn.sigmas > 0) and np.all(drawn.sigmas <= [0.5, 1.0])
    np.testing.assert_allclose(drawn.b_upper, 5 * drawn.sigmas)
    with pytest.raises(DomainError):
        adapt_instance([1], [1], 1, sigma_rule=SIGMA_RANDOM)
    with pytest.raises(DomainError):
        adapt_instance([1], [1], 1, sigma_rule="uniform")


def test_instance_json_mapping(toy):
    document = instance_to_dict(toy)
    assert set(document) == {"name", "profits", "mean_weights", "sigmas", "b", "capacity", "tau"}
    again = instance_from_dict(document)
    np.testing.assert_allclose(again.b_upper, toy.b_upper)
    assert again.capacity == toy.capacity and again.name == "toy"
    with pytest.raises(DomainError):
        instance_from_dict({"profits": [1]})


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(capacity=0.0),
        dict(tau=1.0),
        dict(sigmas=[-0.1, 0.1]),
        dict(b_upper=[0.0, 1.0]),
        dict(profits=[1.0]),
    ],
)
def test_invalid_instances(kwargs):
    base = dict(profits=[1.0, 2.0], mean_weights=[1.0, 1.0], sigmas=[0.1, 0.1], b_upper=[0.5, 0.5], capacity=1.5, tau=0.1)
    base.update(kwargs)
    with pytest.raises(DomainError):
        make_instance(**base)


def test_unknown_formulation(toy):
    with pytest.raises(DomainError):
        solve_ckp(toy, "CKP-X")
    with pytest.raises(DomainError):
        ckp_constraint_value(toy, "CKP-X", np.zeros(3))
    with pytest.raises(DomainError):
        ckp_constraint_value(toy, REFINED, np.zeros(2))


def test_master_dump(toy):
    text = dump_lp(build_master(toy, REFINED)[0])
    assert "c1 [budget]: 2 y0 + 2 y1 + 2 y2 <= 4.2000000000000002" in text
    assert "binary\n  y0 y1 y2\n" in text
    assert "0 <= z <= " in text
