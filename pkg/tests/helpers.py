"""Random fixtures shared by the test modules."""

from __future__ import annotations

import itertools

import numpy as np

from causal_bandits.causal_model import Action, CausalModel, Variable


def random_cpt(rng: np.random.Generator, rows: int, arity: int, zero_prob: float = 0.2) -> np.ndarray:
    cpt = rng.dirichlet(np.ones(arity), size=rows)
    mask = rng.random(cpt.shape) < zero_prob
    cpt = np.where(mask, 0.0, cpt)
    for r in range(rows):
        if cpt[r].sum() == 0:
            cpt[r, rng.integers(arity)] = 1.0
    return cpt / cpt.sum(axis=1, keepdims=True)


def random_model(rng: np.random.Generator, n_vars: int | None = None, max_arity: int = 3,
                 zero_prob: float = 0.2, n_actions: int | None = None) -> CausalModel:
    """Random DAG over ``X1..Xn`` plus a binary ``Y`` with at least one parent."""
    n = int(rng.integers(2, 5)) if n_vars is None else n_vars
    arities = [int(rng.integers(2, max_arity + 1)) for _ in range(n)]
    variables = []
    for k in range(n):
        parents = [f"X{p + 1}" for p in range(k) if rng.random() < 0.5]
        rows = int(np.prod([arities[int(p[1:]) - 1] for p in parents], dtype=np.int64))
        variables.append(Variable(f"X{k + 1}", arities[k], tuple(parents), random_cpt(rng, rows, arities[k], zero_prob)))
    pa = [f"X{p + 1}" for p in range(n) if rng.random() < 0.6] or [f"X{n}"]
    rows = int(np.prod([arities[int(p[1:]) - 1] for p in pa], dtype=np.int64))
    variables.append(Variable("Y", 2, tuple(pa), random_cpt(rng, rows, 2, 0.0)))
    all_actions = [Action()] + [Action(((v, x),)) for v in range(n) for x in range(arities[v])]
    all_actions += [Action(((v, x), (w, z))) for v, w in itertools.combinations(range(n), 2)
                    for x in range(arities[v]) for z in range(arities[w])]
    k = len(all_actions) if n_actions is None else min(n_actions, len(all_actions))
    pick = sorted(rng.choice(len(all_actions), size=k, replace=False))
    return CausalModel(variables, "Y", [all_actions[i] for i in pick])


def random_q(rng: np.random.Generator, n: int) -> np.ndarray:
    """Mix of exact boundary values, extremes and interior probabilities."""
    kind = rng.integers(4, size=n)
    tau = rng.integers(2, max(3, n + 1), size=n)
    q = np.where(kind == 0, rng.random(n), 0.0)
    q = np.where(kind == 1, 1.0 / tau, q)
    q = np.where(kind == 2, 1.0 - 1.0 / tau, q)
    q = np.where(kind == 3, rng.choice([0.0, 1.0, 0.5], size=n), q)
    return q


def random_eta(rng: np.random.Generator, n: int, zero_prob: float = 0.0) -> np.ndarray:
    w = rng.dirichlet(np.ones(n))
    if zero_prob:
        w = np.where(rng.random(n) < zero_prob, 0.0, w)
        if w.sum() == 0:
            w[0] = 1.0
    return w / w.sum()
