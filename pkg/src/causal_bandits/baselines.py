"""Successive Rejects for fixed-budget best-arm identification.

Uses the Audibert-Bubeck-Munos schedule: with
``logbar(K) = 1/2 + sum_{i=2}^K 1/i`` phase ``k`` ends once every survivor
has ``n_k = ceil((T - K) / (logbar(K) (K + 1 - k)))`` pulls, and the
empirically worst survivor is then dropped.  The algorithm ignores all
covariates and treats each action as an independent arm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .causal_model import Action, DomainError


@dataclass(frozen=True)
class SRSchedule:
    K: int
    T: int
    n: tuple[int, ...]  # cumulative per-arm pulls n_1..n_{K-1}

    @property
    def total_pulls(self) -> int:
        return sum(self.n) + self.n[-1]


def log_bar(K: int) -> float:
    return 0.5 + sum(1.0 / i for i in range(2, K + 1))


def sr_schedule(K: int, T: int) -> SRSchedule:
    if K < 2:
        raise DomainError("Successive Rejects needs at least two arms")
    if T < K:
        raise DomainError(f"budget T={T} is smaller than the number of arms K={K}")
    lb = log_bar(K)
    n = tuple(math.ceil((T - K) / (lb * (K + 1 - k))) for k in range(1, K))
    return SRSchedule(K, T, n)


def successive_reject(env, T: int, rng: np.random.Generator, arms=None) -> Action:
    """Return the surviving arm after ``K - 1`` elimination phases.

    ``env`` must provide ``actions`` and ``sample_rounds(idx, rng, actions)``.
    Arms never pulled keep estimate 0; ties eliminate the lowest index.
    """
    arms = tuple(env.actions if arms is None else arms)
    K = len(arms)
    schedule = sr_schedule(K, T)
    sums = np.zeros(K)
    counts = np.zeros(K, dtype=np.int64)
    alive = np.arange(K)
    prev = 0
    for n_k in schedule.n:
        extra = n_k - prev
        prev = n_k
        if extra > 0:
            design = np.repeat(alive, extra)
            _, y = env.sample_rounds(design, rng, arms)
            sums[alive] += y.reshape(len(alive), extra).sum(axis=1)
            counts[alive] += extra
        means = np.divide(sums[alive], counts[alive], out=np.zeros(len(alive)), where=counts[alive] > 0)
        alive = np.delete(alive, int(np.argmin(means)))
    return arms[int(alive[0])]
