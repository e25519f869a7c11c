"""Parallel causal bandit: independent binary causes of a binary reward.

Actions are ordered ``do(), do(X_1=0), do(X_1=1), ..., do(X_N=0), do(X_N=1)``
so ``do(X_i=j)`` (0-based ``i``) sits at index ``1 + 2*i + j``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .causal_model import (
    Action,
    CapacityError,
    CausalModel,
    DomainError,
    ENUMERATION_CAP,
    InvalidActionError,
    parallel_actions,
    parallel_model,
)


def arm_index(i: int, j: int) -> int:
    """Position of ``do(X_i=j)`` in the standard parallel action order."""
    return 1 + 2 * i + j


class ParallelEnv:
    """``N`` independent ``Bernoulli(q_i)`` causes and a reward rule.

    The reward ``P(Y=1 | x)`` is a table over the coordinates listed in
    ``support`` (first listed coordinate most significant), so rules that
    depend on a few variables stay exact for large ``N``.  ``support=None``
    means the table covers all ``N`` coordinates.
    """

    def __init__(self, q: Sequence[float], reward_table: Sequence[float], support: Sequence[int] | None = None):
        self.q = np.asarray(q, dtype=float).copy()
        if self.q.ndim != 1 or len(self.q) < 1:
            raise ValueError("q must be a non-empty vector")
        if np.any((self.q < 0) | (self.q > 1)):
            raise ValueError("q entries must lie in [0, 1]")
        self.q.setflags(write=False)
        self.N = len(self.q)
        self.support = tuple(range(self.N)) if support is None else tuple(int(s) for s in support)
        if any(not 0 <= s < self.N for s in self.support) or len(set(self.support)) != len(self.support):
            raise ValueError("support must list distinct coordinates")
        self.reward_table = np.asarray(reward_table, dtype=float).reshape(-1).copy()
        if len(self.reward_table) != 2 ** len(self.support):
            raise ValueError("reward table must have 2**len(support) entries")
        if np.any((self.reward_table < 0) | (self.reward_table > 1)):
            raise ValueError("reward values must lie in [0, 1]")
        self.reward_table.setflags(write=False)
        self.actions: tuple[Action, ...] = tuple(parallel_actions(self.N))
        self._weights = 2 ** np.arange(len(self.support) - 1, -1, -1, dtype=np.int64)
        self._true_means: np.ndarray | None = None

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def reward_prob(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        if not self.support:
            return np.full(X.shape[0], self.reward_table[0])
        return self.reward_table[X[:, list(self.support)].astype(np.int64) @ self._weights]

    def _fixed(self, actions: Sequence[Action]) -> np.ndarray:
        fixed = np.full((len(actions), self.N), -1, dtype=np.int64)
        for r, a in enumerate(actions):
            for v, x in a.assignments:
                if not 0 <= v < self.N or x not in (0, 1):
                    raise InvalidActionError(f"invalid action {a} for a parallel env with N={self.N}")
                fixed[r, v] = x
        return fixed

    def sample_rounds(self, action_idx, rng: np.random.Generator, actions: Sequence[Action] | None = None):
        """Sample ``(X, y)`` for each entry of ``action_idx``; ``X`` is ``n x N``."""
        actions = self.actions if actions is None else tuple(actions)
        fixed = self._fixed(actions)[np.asarray(action_idx, dtype=np.int64)]
        n = fixed.shape[0]
        X = (rng.random((n, self.N)) < self.q).astype(np.int64)
        X = np.where(fixed >= 0, fixed, X)
        y = (rng.random(n) < self.reward_prob(X)).astype(np.int64)
        return X, y

    def mean_of(self, action: Action, cap: int = ENUMERATION_CAP) -> float:
        """Exact ``E[Y | action]`` by enumerating the reward's support."""
        k = len(self.support)
        if 2**k > cap:
            raise CapacityError(f"reward support of {k} variables exceeds the cap")
        pinned = action.as_dict()
        probs = []
        for s in self.support:
            if s in pinned:
                probs.append((1.0 - pinned[s], float(pinned[s])))
            else:
                probs.append((1.0 - self.q[s], self.q[s]))
        total = 0.0
        for idx, xs in enumerate(itertools.product((0, 1), repeat=k)):
            w = math.prod(p[x] for p, x in zip(probs, xs))
            total += w * self.reward_table[idx]
        return float(total)

    def true_means(self) -> np.ndarray:
        if self._true_means is None:
            means = np.array([self.mean_of(a) for a in self.actions])
            means.setflags(write=False)
            self._true_means = means
        return self._true_means

    def as_model(self) -> CausalModel:
        """Equivalent :class:`CausalModel` (dense ``Y`` table; small ``N`` only)."""
        if 2**self.N > ENUMERATION_CAP:
            raise CapacityError("dense reward table too large")
        table = self.reward_prob(np.array(list(itertools.product((0, 1), repeat=self.N))))
        return parallel_model(self.q, table, self.actions)


def compute_m(q: Sequence[float]) -> int:
    """Difficulty index: smallest ``tau`` in ``2..N`` with ``|I_tau| <= tau``.

    ``I_tau`` collects the coordinates with ``min(q_i, 1 - q_i) < 1/tau``.
    Sorting the imbalances lets each ``|I_tau|`` be read off by bisection.
    """
    q = np.asarray(q, dtype=float)
    n = len(q)
    if n < 2:
        raise DomainError("m(q) needs at least two variables")
    imbalance = np.sort(np.minimum(q, 1.0 - q))
    for tau in range(2, n + 1):
        size = int(np.searchsorted(imbalance, 1.0 / tau, side="left"))
        if size <= tau:
            return tau
    return n  # unreachable: |I_N| <= N


@dataclass
class Alg1State:
    """Bookkeeping of one run of the parallel bandit algorithm."""

    T: int
    counts: np.ndarray  # phase-1 T_a per action (do() holds T/2)
    mu_hat: np.ndarray
    p_hat: np.ndarray
    q_hat: np.ndarray
    m_hat: int
    flagged: list[int] = field(default_factory=list)
    budget: int = 0  # T_A
    pulls: dict[int, int] = field(default_factory=dict)
    chosen: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("counts", "mu_hat", "p_hat", "q_hat"):
            d[k] = np.asarray(d[k]).tolist()
        d["pulls"] = {str(a): n for a, n in self.pulls.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def run_algorithm1(env: ParallelEnv, T: int, rng: np.random.Generator) -> tuple[Action, Alg1State]:
    """Observe for ``T/2`` rounds, then spend ``T/2`` on the rarely seen arms."""
    if T < 2 or T % 2:
        raise DomainError(f"horizon must be even and at least 2, got {T}")
    half = T // 2
    N = env.N
    n_act = 2 * N + 1

    X, y = env.sample_rounds(np.zeros(half, dtype=np.int64), rng)
    ones = X.sum(axis=0)
    y_ones = (X * y[:, None]).sum(axis=0)
    counts = np.empty(n_act, dtype=np.int64)
    sums = np.empty(n_act, dtype=float)
    counts[0] = half
    sums[0] = y.sum()
    counts[1::2] = half - ones
    counts[2::2] = ones
    sums[1::2] = y.sum() - y_ones
    sums[2::2] = y_ones

    mu_hat = np.divide(sums, counts, out=np.zeros(n_act), where=counts > 0)
    p_hat = 2.0 * counts / T
    p_hat[0] = 0.0  # do() is always re-estimated
    q_hat = p_hat[2::2].copy()
    m_hat = compute_m(q_hat)

    flagged = [a for a in range(n_act) if p_hat[a] <= 1.0 / m_hat]
    budget = T // (2 * len(flagged))
    leftover = half - budget * len(flagged)
    pulls = {a: budget + (1 if r < leftover else 0) for r, a in enumerate(flagged)}

    design = np.repeat(np.array(flagged, dtype=np.int64), [pulls[a] for a in flagged])
    _, y2 = env.sample_rounds(design, rng)
    offsets = np.cumsum([0] + [pulls[a] for a in flagged])
    for r, a in enumerate(flagged):
        n_a = pulls[a]
        mu_hat[a] = y2[offsets[r]:offsets[r + 1]].mean() if n_a else 0.0

    chosen = int(np.argmax(mu_hat))
    state = Alg1State(T, counts, mu_hat, p_hat, q_hat, m_hat, flagged, budget, pulls, chosen)
    return env.actions[chosen], state


def simple_regret(env, chosen: Action | int) -> float:
    """``mu* - mu_chosen`` from exact means."""
    means = env.true_means()
    idx = chosen if isinstance(chosen, (int, np.integer)) else env.actions.index(chosen)
    return float(means.max() - means[idx])


def single_cause_env(N: int, m: int, epsilon: float, q1: float | None = None) -> ParallelEnv:
    """Reward depends on ``X_1`` only: ``1/2 + eps`` if ``X_1 = 1`` else ``1/2 - eps'``.

    ``q_i = 0`` for ``i <= m`` and ``1/2`` otherwise, with ``eps' = q_1 eps / (1 - q_1)``
    so that ``do()`` and every action not touching ``X_1`` have mean ``1/2``.
    """
    if not 1 <= m <= N:
        raise DomainError(f"need 1 <= m <= N, got m={m}, N={N}")
    q = np.where(np.arange(N) < m, 0.0, 0.5)
    if q1 is not None:
        q[0] = q1
    if q[0] >= 1.0:
        raise DomainError("q_1 must be below 1 for eps' to be defined")
    eps_prime = q[0] * epsilon / (1.0 - q[0])
    return ParallelEnv(q, [0.5 - eps_prime, 0.5 + epsilon], support=(0,))

