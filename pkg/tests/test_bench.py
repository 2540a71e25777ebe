import csv
import io
import math
import os
import shutil

import numpy as np
import pytest
from scipy.stats import norm

from ccb.baselines import BENNETT, REFINED
from ccb.bench import (
    EXPERIMENTS,
    FIG2,
    FIG2_HEADER,
    FIG3,
    MGF_CHAIN,
    SVM2D,
    TABLE3,
    TABLE3_HEADER,
    ExperimentConfig,
    config_from_dict,
    gen_table1_spec,
    instance_rng,
    normalized_confidences,
    run_experiment,
    run_fig2,
    run_fig3,
    run_mgf_chain,
    run_svm,
    run_table3,
    worker_count,
)
from ccb.data import RandomTermSpec, a_values, b_bar, b_values, homogeneous_spec, make_sum_spec, sigmas
from ccb.errors import ConfigError, DomainError


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def _config(**overrides):
    return config_from_dict(overrides)


def test_instance_rng_streams():
    first = instance_rng(42, 3).random(5)
    np.testing.assert_array_equal(first, instance_rng(42, 3).random(5))
    assert not np.array_equal(first, instance_rng(42, 4).random(5))
    assert not np.array_equal(first, instance_rng(43, 3).random(5))


def test_table1_sampling_ranges():
    rng = instance_rng(5, 0)
    for _ in range(2000):
        spec, alpha = gen_table1_spec(rng, 10)
        a, b, s = a_values(spec), b_values(spec), sigmas(spec)
        assert np.all((a >= -1) & (a < 0))
        assert np.all((b > 0) & (b <= 1))
        assert np.all((s >= 0) & (s <= (b - a) / 2))
        assert np.all([(0 <= t.mean <= 1) for t in spec.terms])
        assert 0 <= alpha <= b_bar(spec)


def test_table1_determinism():
    one, alpha_one = gen_table1_spec(instance_rng(9, 2), 4)
    two, alpha_two = gen_table1_spec(instance_rng(9, 2), 4)
    assert one == two and alpha_one == alpha_two


def test_fig2_is_reproducible():
    config = _config(experiment=FIG2, realizations=4, sizes=[3, 7], seed=123)
    text = run_fig2(config)
    assert text == run_fig2(config)
    assert text == run_fig2(_config(experiment=FIG2, realizations=4, sizes=[3, 7], seed=123, jobs=2))
    assert text.startswith(",".join(FIG2_HEADER) + "\n")
    assert "\r" not in text


def test_fig2_rows_respect_dominance():
    rows = _rows(run_fig2(_config(experiment=FIG2, realizations=20, sizes=[5], seed=1)))
    assert len(rows) == 20
    for row in rows:
        refined, jebara, bennett = float(row["phi_star"]), float(row["jebara"]), float(row["bennett"])
        assert refined <= jebara + 1e-9
        assert jebara <= bennett + 1e-9
        assert row["time"] == ""


def test_fig2_records_time_on_request():
    rows = _rows(run_fig2(_config(experiment=FIG2, realizations=2, sizes=[3], record_time=True)))
    assert all(float(row["time"]) >= 0 for row in rows)


@pytest.mark.parametrize("runner, key", [(run_fig2, "sizes"), (run_fig3, "sizes"), (run_svm, "splits")])
def test_empty_grid_gives_header_only(runner, key):
    text = runner(_config(**{key: []}))
    assert text.count("\n") == 1


def test_fig3_rows():
    taus = [0.2, 0.01]
    rows = _rows(run_fig3(_config(experiment=FIG3, realizations=3, sizes=[4], taus=taus, seed=8)))
    assert len(rows) == 3 * len(taus) * 4
    for row in rows:
        confidence, normal = float(row["confidence"]), float(row["normal"])
        assert float(row["ratio"]) == pytest.approx(confidence / normal, rel=1e-10)
        if row["trivial"] == "1":
            assert row["method"] == "RefinedBennett"


def test_fig2_dominance_over_table1_instances():
    rows = _rows(run_fig2(_config(experiment=FIG2, realizations=500, sizes=[10, 100], seed=11)))
    assert len(rows) == 1000
    refined_wins = cantelli_wins = 0
    for row in rows:
        refined = float(row["phi_star"])
        for method in ("hoeffding", "bennett", "jebara"):
            other = float(row[method])
            assert refined <= other + 1e-9 * max(1.0, abs(other))
        cantelli = float(row["cantelli"])
        refined_wins += refined < cantelli
        cantelli_wins += cantelli < refined
    # Cantelli is tighter only at small deviations
    assert refined_wins > 0 and cantelli_wins > 0


@pytest.mark.parametrize("n, gamma", [(10, 0.25), (10, 1.0), (100, 0.25), (100, 1.0)])
def test_fig3_ratio_at_least_one_when_sigma_within_b(n, gamma):
    spec = homogeneous_spec(n, sigma=math.sqrt(gamma), b_upper=1.0, a_lower=-1.0)
    config = ExperimentConfig(experiment=FIG3)
    for tau in config.taus:
        for row in normalized_confidences(spec, tau, config):
            assert row[4] >= 1.0, row
            assert row[5] is False


def test_fig3_refined_ratio_below_one_for_light_upper_tail():
    # sigma = 2b: the summand sits at b with probability 4/5
    spec = make_sum_spec([RandomTermSpec(mean=0.0, sigma=0.5, b_upper=0.25, a_lower=-1.0)])
    config = ExperimentConfig(experiment=FIG3)
    for tau in config.taus:
        rows = {row[1]: row for row in normalized_confidences(spec, tau, config)}
        refined = rows.pop(REFINED)
        assert refined[5] is True
        assert refined[2] == pytest.approx(0.25)
        assert refined[4] == pytest.approx(1.0 / (2.0 * norm.isf(tau)), rel=1e-9)
        assert refined[4] < 1.0
        assert all(row[4] >= 1.0 for row in rows.values())


def test_fig3_full_grid():
    rows = _rows(run_fig3(_config(experiment=FIG3, realizations=1000, sizes=[10], seed=0)))
    assert len(rows) == 1000 * 6 * 4
    confidence = {}
    refined_ratios = []
    for row in rows:
        confidence[(row["instance"], row["tau"], row["method"])] = float(row["confidence"])
        if row["method"] == REFINED:
            refined_ratios.append(float(row["ratio"]))
        else:
            assert float(row["ratio"]) >= 1.0, row
    for (instance, tau, method), value in confidence.items():
        if method == REFINED:
            assert value <= confidence[(instance, tau, BENNETT)] + 1e-5
    assert min(refined_ratios) > 0.5


def test_fig3_levels_below_one_half():
    spec = homogeneous_spec(4, sigma=0.3, b_upper=1.0, a_lower=-1.0)
    for tau in (0.5, 0.7):
        with pytest.raises(DomainError):
            normalized_confidences(spec, tau, ExperimentConfig(experiment=FIG3))
    with pytest.raises(ConfigError):
        run_fig3(ExperimentConfig(experiment=FIG3, taus=[0.5]))


def test_worker_count():
    assert worker_count(ExperimentConfig(experiment=FIG3)) == (os.cpu_count() or 1)
    assert worker_count(ExperimentConfig(experiment=TABLE3)) == 1
    assert worker_count(ExperimentConfig(experiment=TABLE3, jobs=3)) == 3


def test_mgf_chain_holds():
    rows = _rows(run_mgf_chain(_config(experiment=MGF_CHAIN, realizations=200, seed=4)))
    assert len(rows) == 200
    assert all(row["all_hold"] == "1" for row in rows)


def test_table3(tmp_path, samples_dir):
    for name in ("knap_toy.txt", "knap_toy.json"):
        shutil.copy(os.path.join(samples_dir, name), tmp_path / name)
    rows = _rows(run_table3(_config(experiment=TABLE3, instance_dir=str(tmp_path))))
    assert [row["Instance"] for row in rows] == ["knap_toy", "knap_toy_random"]
    for row in rows:
        assert set(row) == set(TABLE3_HEADER)
        kp, refined = float(row["KP"]), float(row["CKP-Refined"])
        assert kp >= refined >= max(float(row["CKP-B"]), float(row["CKP-H"]))
        assert float(row["Prob"]) <= 100.0
        assert row["Time"] == ""


def test_table3_empty_directory(tmp_path):
    text = run_table3(_config(experiment=TABLE3, instance_dir=str(tmp_path)))
    assert text == ",".join(TABLE3_HEADER) + "\n"


def test_svm2d_rows():
    config = _config(experiment=SVM2D, realizations=2, splits=[0.5], points=20, methods=["Deterministic"], seed=3)
    text = run_svm(config)
    assert text == run_svm(config)
    rows = _rows(text)
    assert len(rows) == 2
    for row in rows:
        assert 0.0 <= float(row["score"]) <= 1.0
        assert row["status"] == "converged"


def test_run_experiment_writes_file(tmp_path):
    config = _config(experiment=FIG2, realizations=2, sizes=[3], output_dir=str(tmp_path / "out"))
    text = run_experiment(config)
    with open(tmp_path / "out" / "fig2.csv", encoding="utf-8", newline="") as f:
        assert f.read() == text


def test_config_defaults():
    config = ExperimentConfig()
    assert config.experiment in EXPERIMENTS
    assert config.sizes == [10, 100] and config.realizations == 500
    assert config.jobs is None


@pytest.mark.parametrize(
    "document",
    [
        {"experiment": "fig9"},
        {"realizations": 0},
        {"colour": "red"},
        {"sizes": ["many"]},
        {"taus": [1.5]},
        {"taus": [0.5]},
        {"experiment": FIG3, "taus": [0.7]},
        {"experiment": TABLE3},
        {"experiment": "svm-wisconsin"},
        {"methods": ["Hoeffding"]},
        {"seed": -1},
        {"jobs": 0},
    ],
)
def test_config_errors(document):
    with pytest.raises(ConfigError):
        config_from_dict(document)


def test_config_rejects_non_objects():
    with pytest.raises(ConfigError):
        config_from_dict([1, 2])
