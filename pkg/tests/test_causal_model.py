from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causal_bandits.causal_model import (
    Action,
    CapacityError,
    CausalModel,
    InvalidActionError,
    Variable,
    chain_model,
    confounded_model,
    interventional_parent_dist,
    parallel_actions,
    parallel_model,
    sample,
    sample_batch,
    true_mean,
)
from causal_bandits.oracle import brute_conditional, brute_parent_marginal, brute_true_mean
from helpers import random_model


def test_action_normalises_and_rejects_duplicates():
    a = Action(((2, 1), (0, 0)))
    assert a.assignments == ((0, 0), (2, 1))
    assert str(a) == "do(X1=0,X3=1)"
    assert Action().is_empty and str(Action()) == "do()"
    with pytest.raises(InvalidActionError):
        Action(((1, 0), (1, 1)))


def test_invalid_actions_rejected():
    m = confounded_model()
    with pytest.raises(InvalidActionError):
        m.validate_action(Action(((0, 2),)))
    with pytest.raises(InvalidActionError):
        m.validate_action(Action(((7, 0),)))
    with pytest.raises(InvalidActionError):
        m.validate_action(Action(((m.reward, 1),)))
    with pytest.raises(InvalidActionError):
        sample(m, Action(((0, 5),)), np.random.default_rng(0))


def test_cycle_and_bad_cpt_rejected():
    with pytest.raises(ValueError):
        CausalModel([Variable("A", 2, ("B",), [[1, 0], [0, 1]]), Variable("B", 2, ("A",), [[1, 0], [0, 1]]),
                     Variable("Y", 2, ("A",), [[0.5, 0.5], [0.5, 0.5]])], "Y")
    with pytest.raises(ValueError):
        CausalModel([Variable("A", 2, (), [[0.6, 0.6]]), Variable("Y", 2, ("A",), [[0.5, 0.5], [0.5, 0.5]])], "Y")
    with pytest.raises(ValueError):
        CausalModel([Variable("A", 2, (), [[0.5, 0.5]]), Variable("Y", 3, ("A",), np.full((2, 3), 1 / 3))], "Y")


def test_parent_order_is_declared_order():
    m = confounded_model()
    assert m.reward_parents == (0, 1)
    assert m.order.index(0) < m.order.index(1) < m.order.index(2)


def test_parallel_zero_q_observes_all_zero():
    m = parallel_model([0.0] * 5, lambda x: 0.5)
    vals = sample_batch(m, Action(), 200, np.random.default_rng(1))
    assert np.all(vals[:, :5] == 0)


def test_deterministic_chain_propagates_intervention():
    m = chain_model(6, p_x1=0.0, deterministic=True)
    vals = sample_batch(m, Action(((0, 1),)), 100, np.random.default_rng(2))
    assert np.all(vals[:, :6] == 1)


def test_confounded_do_x2_joint_matches_hand_enumeration():
    m = confounded_model(p_x1=0.3, deterministic=True)
    f = interventional_parent_dist(m, Action(((1, 1),)))
    # Pa(Y) = (X1, X2), X2 fastest: only (0,1) and (1,1) have mass
    np.testing.assert_allclose(f.table, [0.0, 0.7, 0.0, 0.3], atol=1e-15)
    assert f.prob([[0, 1]])[0] == pytest.approx(0.7)
    # P(Y | do(X2=1)) = sum_x1 P(x1) P(Y | x1, X2=1)
    assert true_mean(m, Action(((1, 1),))) == pytest.approx(0.7 * 0.4 + 0.3 * 0.8)


def test_parallel_single_intervention_factor():
    q = [0.2, 0.6, 0.9]
    m = parallel_model(q)
    f = interventional_parent_dist(m, Action(((1, 1),)))
    for x, p in f.as_dict().items():
        want = (q[0] if x[0] else 1 - q[0]) * (1.0 if x[1] == 1 else 0.0) * (q[2] if x[2] else 1 - q[2])
        assert p == pytest.approx(want, abs=1e-15)


def test_constant_reward_mean():
    m = parallel_model([0.3, 0.4], lambda x: 0.37)
    for a in m.actions:
        assert true_mean(m, a) == pytest.approx(0.37, abs=1e-15)


def test_section5_reward_means():
    eps = 0.3
    m = parallel_model([0.0, 0.0, 0.5], lambda x: 0.5 + eps if x[0] == 1 else 0.5)
    assert true_mean(m, Action(((0, 1),))) == pytest.approx(0.8)
    assert true_mean(m, Action(((2, 0),))) == pytest.approx(0.5)


def test_capacity_error():
    m = parallel_model([0.5] * 4)
    with pytest.raises(CapacityError):
        interventional_parent_dist(m, Action(), cap=8)
    interventional_parent_dist(m, Action(), cap=16)


def test_observational_marginal_matches_brute_force(rng):
    for _ in range(30):
        m = random_model(rng)
        f = interventional_parent_dist(m, Action())
        np.testing.assert_allclose(f.table, brute_parent_marginal(m, Action()), atol=1e-12, rtol=0)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_interventional_factor_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    for a in m.actions:
        f = interventional_parent_dist(m, a)
        assert abs(f.table.sum() - 1) < 1e-12
        np.testing.assert_allclose(f.table, brute_parent_marginal(m, a), atol=1e-12, rtol=0)
        assert true_mean(m, a) == pytest.approx(brute_true_mean(m, a), abs=1e-12)


@pytest.mark.parametrize("family", ["parallel", "confounded", "chain", "random"])
def test_empirical_mean_converges(family):
    rng = np.random.default_rng(7)
    m = {
        "parallel": parallel_model([0.2, 0.5, 0.7]),
        "confounded": confounded_model(p_x1=0.4, deterministic=False),
        "chain": chain_model(3, p_x1=0.3, deterministic=False),
        "random": random_model(np.random.default_rng(3)),
    }[family]
    n = 100_000
    for a in m.actions:
        _, y = m.sample_rounds(np.zeros(n, dtype=np.int64), rng, [a])
        mu = true_mean(m, a)
        assert abs(y.mean() - mu) <= 4 * math.sqrt(mu * (1 - mu) / n) + 4 / n


def test_correlation_is_not_causation():
    m = confounded_model(p_x1=0.3, deterministic=True)
    cond = brute_conditional(m, {1: 1})
    do = true_mean(m, Action(((1, 1),)))
    assert cond == pytest.approx(0.8)
    assert abs(cond - do) > 0.2


def test_sampling_is_seed_deterministic():
    m = chain_model(4, p_x1=0.4, deterministic=False)
    a = sample_batch(m, Action(((1, 0),)), 500, np.random.default_rng(11))
    b = sample_batch(m, Action(((1, 0),)), 500, np.random.default_rng(11))
    assert np.array_equal(a, b)


def test_model_file_round_trip(tmp_path, rng):
    m = random_model(rng)
    path = tmp_path / "model.json"
    m.save(path)
    m2 = CausalModel.load(path)
    assert m2.to_dict() == m.to_dict()
    assert m2.actions == m.actions
    data = json.loads(path.read_text())
    data["actions"] = [{"Z9": 0}]
    with pytest.raises(InvalidActionError):
        CausalModel.from_dict(data)


def test_parallel_actions_order():
    acts = parallel_actions(2)
    assert [str(a) for a in acts] == ["do()", "do(X1=0)", "do(X1=1)", "do(X2=0)", "do(X2=1)"]
