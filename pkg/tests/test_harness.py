from __future__ import annotations

import json
import math

import numpy as np
import pytest

from causal_bandits.causal_model import DomainError
from causal_bandits.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    RegretRow,
    build_env,
    read_csv,
    run_experiment,
    summarize,
    write_csv,
)
from causal_bandits.parallel_bandit import arm_index


def test_presets():
    a = ExperimentConfig.preset("fig3a")
    assert a.m_values == list(range(2, 51)) and a.T_values == [400] and a.epsilon == 0.3
    b = ExperimentConfig.preset("fig3b")
    assert b.m_values == [2] and b.epsilon == "worst-case"
    assert b.epsilon_for(50) == 0.25
    assert b.epsilon_for(1600) == pytest.approx(math.sqrt(50 / 12800))
    assert ExperimentConfig.preset("fig3c").T_values == [50, 100, 200, 400, 800, 1600]


@pytest.mark.parametrize("bad", [
    {"reps": 0}, {"T_values": [41]}, {"m_values": [51]}, {"epsilon": 0.5}, {"epsilon": "huge"},
    {"algorithms": ["ucb"]}, {"eta_source": "magic"}, {"truncation": "never"}, {"workers": 0},
])
def test_invalid_configs(bad):
    with pytest.raises(ValueError):
        ExperimentConfig.preset("custom", **bad)


def test_q1_one_is_domain_error():
    with pytest.raises(DomainError):
        ExperimentConfig.preset("custom", q1=1.0)


def test_build_env_means_invariant_in_m():
    cfg = ExperimentConfig.preset("fig3a")
    ref = build_env(cfg, 2, 400).true_means()
    assert ref[arm_index(0, 1)] == pytest.approx(0.8)
    assert ref[arm_index(0, 0)] == pytest.approx(0.5)
    for m in (1, 10, 25, 50):
        np.testing.assert_allclose(build_env(cfg, m, 400).true_means(), ref, atol=1e-15)


def test_custom_q1():
    cfg = ExperimentConfig.preset("custom", q1=0.5, epsilon=0.1)
    env = build_env(cfg, 1, 100)
    assert env.true_means()[arm_index(0, 0)] == pytest.approx(0.4)
    assert env.true_means()[0] == pytest.approx(0.5)


def test_single_replication_se_zero():
    mean, se = summarize(np.array([0.3]))
    assert mean == 0.3 and se == 0.0


def test_csv_round_trip_and_empty(tmp_path):
    p = tmp_path / "empty.csv"
    write_csv([], p)
    assert p.read_text() == ",".join(CSV_COLUMNS) + "\n"
    rows = [RegretRow("fig3c", "alg1", 50, 2, 400, 0.1 + 0.2, 7, 1 / 3, 0.0123456789012345)]
    p = tmp_path / "r.csv"
    write_csv(rows, p)
    assert read_csv(p) == rows


def test_fig3c_rows_and_skips(tmp_path):
    cfg = ExperimentConfig.preset("fig3c", reps=5, T_values=[50, 200], algorithms=["alg1", "alg2", "sr"])
    rows = run_experiment(cfg)
    keys = [(r.T, r.algorithm) for r in rows]
    assert keys == [(50, "alg1"), (50, "alg2"), (200, "alg1"), (200, "alg2"), (200, "sr")]
    for r in rows:
        assert 0 <= r.mean_regret <= 1 and r.stderr >= 0 and r.reps == 5


def test_explicit_eta_and_levels():
    cfg = ExperimentConfig.preset("custom", N=4, m_values=[2], T_values=[40], reps=3, algorithms=["alg2"],
                                  eta_source=[1 / 9] * 9, truncation=[2.0] * 9)
    rows = run_experiment(cfg)
    assert len(rows) == 1


def test_algorithm_order_does_not_change_results():
    base = dict(N=6, m_values=[2], T_values=[60], reps=20)
    a = run_experiment(ExperimentConfig.preset("custom", algorithms=["alg1", "sr"], **base))
    b = run_experiment(ExperimentConfig.preset("custom", algorithms=["sr", "alg1"], **base))
    assert sorted(a, key=lambda r: r.algorithm) == sorted(b, key=lambda r: r.algorithm)


def test_replication_independence():
    base = dict(N=10, m_values=[2], T_values=[100], reps=300, algorithms=["alg1"])
    a = run_experiment(ExperimentConfig.preset("custom", seed=1, **base))[0]
    b = run_experiment(ExperimentConfig.preset("custom", seed=2, **base))[0]
    assert abs(a.mean_regret - b.mean_regret) <= 6 * math.hypot(a.stderr, b.stderr)


def test_parallel_workers_match_serial(tmp_path):
    base = dict(N=8, m_values=[2, 4], T_values=[40], reps=12, seed=99)
    serial = run_experiment(ExperimentConfig.preset("custom", **base))
    par = run_experiment(ExperimentConfig.preset("custom", workers=2, **base))
    write_csv(serial, tmp_path / "s.csv")
    write_csv(par, tmp_path / "p.csv")
    assert (tmp_path / "s.csv").read_bytes() == (tmp_path / "p.csv").read_bytes()


def test_config_file_round_trip(tmp_path):
    cfg = ExperimentConfig.preset("custom", eta_source=[0.5, 0.5], truncation="infinity", N=3, reps=4)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.load(path) == cfg
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"bogus": 1})
