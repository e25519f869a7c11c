"""Brute-force references for tests and for regenerating derived values.

Everything here is deliberately literal: explicit loops over the definitions,
no sorting tricks, no caching, and no code shared with the modules being
checked (only the model/environment containers are reused).
"""

from __future__ import annotations

import itertools
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .causal_model import Action, CapacityError, CausalModel, DomainError, ParentFactor
from .parallel_bandit import ParallelEnv

GRID_CAP = 2_000_000


def oracle_m_q(q: Sequence[float]) -> int:
    """Scan ``tau = 2..N`` and return the first with ``|I_tau| <= tau``."""
    n = len(q)
    if n < 2:
        raise DomainError("m(q) needs at least two variables")
    for tau in range(2, n + 1):
        count = 0
        for qi in q:
            if min(qi, 1 - qi) < 1 / tau:
                count += 1
        if count <= tau:
            return tau
    raise AssertionError("tau = N always satisfies the condition")


# -- joint enumeration -------------------------------------------------------


def _joint_weight(model: CausalModel, action: Action, x: tuple[int, ...]) -> float:
    pinned = dict(action.assignments)
    w = 1.0
    for k in range(model.n_variables):
        if k in pinned:
            if x[k] != pinned[k]:
                return 0.0
            continue
        row = 0
        for p in model.parents[k]:
            row = row * model.arities[p] + x[p]
        w *= model.cpts[k][row][x[k]]
    return w


def brute_parent_marginal(model: CausalModel, action: Action) -> np.ndarray:
    """``P(Pa(Y) | action)`` by summing the mutilated joint over every assignment."""
    pa = model.reward_parents
    size = math.prod(model.arities[p] for p in pa)
    out = [0.0] * size
    for x in itertools.product(*(range(a) for a in model.arities)):
        idx = 0
        for p in pa:
            idx = idx * model.arities[p] + x[p]
        out[idx] += _joint_weight(model, action, x)
    return np.array(out)


def brute_true_mean(model: CausalModel, action: Action) -> float:
    total = 0.0
    for x in itertools.product(*(range(a) for a in model.arities)):
        if x[model.reward] == 1:
            total += _joint_weight(model, action, x)
    return total


def brute_conditional(model: CausalModel, given: dict[int, int]) -> float:
    """Observational ``P(Y=1 | given)``."""
    num = den = 0.0
    for x in itertools.product(*(range(a) for a in model.arities)):
        if all(x[v] == val for v, val in given.items()):
            w = _joint_weight(model, Action(), x)
            den += w
            if x[model.reward] == 1:
                num += w
    return num / den


def oracle_parallel_tables(q: Sequence[float], actions: Sequence[Action]) -> list[list[float]]:
    """``P_b(x)`` over ``{0,1}^N`` (``X_N`` fastest) for each parallel action."""
    tables = []
    for a in actions:
        pinned = dict(a.assignments)
        row = []
        for x in itertools.product((0, 1), repeat=len(q)):
            w = 1.0
            for k, xk in enumerate(x):
                if k in pinned:
                    w *= 1.0 if xk == pinned[k] else 0.0
                else:
                    w *= q[k] if xk == 1 else 1 - q[k]
            row.append(w)
        tables.append(row)
    return tables


def _tables(factors) -> list[list[float]]:
    out = []
    for f in factors:
        t = f.table if isinstance(f, ParentFactor) else f
        out.append([float(v) for v in t])
    return out


def oracle_m_eta(factors, eta) -> float:
    """``max_a sum_s P_a(s)^2 / Q(s)`` with explicit loops."""
    P = _tables(factors)
    eta = [float(e) for e in eta]
    best = -math.inf
    for a in range(len(P)):
        total = 0.0
        for s in range(len(P[a])):
            if P[a][s] == 0:
                continue
            Q = sum(eta[b] * P[b][s] for b in range(len(P)))
            if Q == 0:
                total = math.inf
                break
            total += P[a][s] ** 2 / Q
        best = max(best, total)
    return best


def simplex_grid(n: int, step: float) -> np.ndarray:
    k = int(round(1.0 / step))
    if abs(k * step - 1.0) > 1e-12:
        raise DomainError("grid step must divide 1")
    if math.comb(k + n - 1, n - 1) > GRID_CAP:
        raise CapacityError("simplex grid too large")
    pts = []
    for c in itertools.product(range(k + 1), repeat=n - 1):
        s = sum(c)
        if s <= k:
            pts.append(c + (k - s,))
    return np.array(pts, dtype=float) / k


def grid_eta(factors, step: float = 0.05) -> tuple[np.ndarray, float]:
    """Grid point of the simplex with the smallest ``m(eta)``."""
    P = np.array(_tables(factors))
    G = simplex_grid(len(P), step)
    Q = G @ P
    vals = np.zeros((len(G), len(P)))
    for a in range(len(P)):
        on = P[a] > 0
        with np.errstate(divide="ignore"):
            terms = P[a, on] ** 2 / Q[:, on]
        vals[:, a] = terms.sum(axis=1)
    worst = vals.max(axis=1)
    i = int(np.argmin(worst))
    return G[i], float(worst[i])


def empirical_bias(model: CausalModel, actions: Sequence[Action], action: int, eta, B: float, T: int,
                   reps: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte-Carlo ``mu_a - E[mu_hat_a]`` with its standard error.

    Re-implements the truncated estimator from brute-force tables so that it
    can vouch for the production code path.
    """
    P = np.array([brute_parent_marginal(model, a) for a in actions])
    eta = np.asarray(eta, dtype=float)
    mu = brute_true_mean(model, actions[action])
    pa = model.reward_parents
    played = rng.choice(len(actions), size=reps * T, p=eta)
    values, y = model.sample_rounds(played, rng, actions)
    idx = np.zeros(len(y), dtype=np.int64)
    for p in pa:
        idx = idx * model.arities[p] + values[:, p]
    Q = eta @ P[:, idx]
    r = P[action, idx] / Q
    z = y * r * (r <= B)
    est = z.reshape(reps, T).mean(axis=1)
    se = est.std(ddof=1) / math.sqrt(reps) if reps > 1 else 0.0
    return float(mu - est.mean()), float(se)


def hard_instance(N: int, q: Sequence[float], i: int, epsilon: float) -> ParallelEnv:
    """Environment with reward ``1/2 + eps 1{X_i = 1}`` (``i`` 1-based); ``i = 0`` is flat 1/2."""
    if len(q) != N:
        raise DomainError("q must have N entries")
    if i == 0:
        return ParallelEnv(q, [0.5], support=())
    if not 1 <= i <= N:
        raise DomainError(f"favoured variable must be in 1..{N}")
    if not 0 < epsilon <= 0.25:
        raise DomainError("epsilon must lie in (0, 1/4]")
    return ParallelEnv(q, [0.5, 0.5 + epsilon], support=(i - 1,))


def worst_case_gap(m: int, T: int) -> float:
    return min(0.25, math.sqrt(m / (18 * T)))


# -- derived example values ---------------------------------------------------


def derived_values() -> list[dict]:
    """Recompute every hand-derived example value from the oracles."""
    from .causal_model import confounded_model, parallel_actions

    out = []

    def record(name, value, method):
        if isinstance(value, np.ndarray):
            value = value.tolist()
        out.append({"name": name, "value": value, "method": method})

    record("m_q_N6", oracle_m_q([0, 0, 0.4, 0.5, 0.5, 0.5]), "definitional scan of tau = 2..6")

    conf = confounded_model(p_x1=0.3, deterministic=True)
    marg = brute_parent_marginal(conf, Action(((1, 1),)))
    record("confounded_do_x2_1_joint", marg.tolist(), "full-joint enumeration, Pa(Y)=(X1,X2), X2 fastest")
    record("confounded_do_x2_1_p_x1_0_x2_1", float(marg[1]), "equals P(X1=0)=0.7")

    acts = parallel_actions(2)
    tables = oracle_parallel_tables([0.5, 0.5], acts)
    eta = [1.0, 0.0, 0.0, 0.0, 0.0]  # m(q)=2: no arm has P(X_i=j) < 1/2
    s = 1 * 2 + 0  # x = (1, 0)
    q_mass = sum(e * t[s] for e, t in zip(eta, tables))
    record("ratio_parallel_N2_do_x1_1_at_10", tables[2][s] / q_mass, "explicit 4-state tables")

    acts3 = parallel_actions(3)
    t3 = oracle_parallel_tables([0.1, 0.5, 0.5], acts3)
    g, v = grid_eta(t3, 0.05)
    record("grid_eta_parallel_q_0.1_0.5_0.5", {"eta": g.tolist(), "m": v}, "0.05 simplex grid over 7 actions")

    record("theorem3_B_m2_T400_A101", math.sqrt(2 * 400 / math.log(2 * 400 * 101)), "direct arithmetic")

    record("appendix_c_q_half_N3", [1.0] + [0.0] * 6, "no arm below 1/m; do() takes 1 - D = 1")
    n = 4
    w = [0.0] * (2 * n + 1)
    for i in range(n):
        w[2 + 2 * i] = 1 / (2 * n)
    w[0] = 1 - sum(w)
    record("appendix_c_q_zero_N4", w, "each do(X_i=1) gets 1/(2N); do() gets 1 - D = 1/2")

    env = hard_instance(5, [0.2, 0.3, 0.4, 0.1, 0.5], 3, 0.1)
    record("hard_instance_i3_eps0.1", {"do(X3=1)": env.mean_of(Action(((2, 1),))), "do()": env.mean_of(Action())},
           "expectation over X_3 ~ Bernoulli(0.4)")

    q1, eps = 0.5, 0.1
    eps_p = q1 * eps / (1 - q1)
    record("eps_prime_q1_half", {"eps_prime": eps_p, "mu_do_x1_0": 0.5 - eps_p}, "eps' = q1 eps / (1 - q1)")

    disjoint = [[0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.5]]
    g, v = grid_eta(disjoint, 0.05)
    record("grid_eta_disjoint_pair", {"eta": g.tolist(), "m": v}, "0.05 simplex grid")

    q_half = [0.5] * 4
    m_hat = oracle_m_q(q_half)
    flagged = 1 + sum(1 for qi in q_half for p in (1 - qi, qi) if p <= 1 / m_hat)
    record("alg1_q_hat_half_flagged", {"m_hat": m_hat, "flagged": flagged}, "trace of the flagging rule with p_hat(do())=0")
    return out


def write_provenance(path) -> list[dict]:
    values = derived_values()
    Path(path).write_text(json.dumps(values, indent=2) + "\n", encoding="utf-8")
    return values
