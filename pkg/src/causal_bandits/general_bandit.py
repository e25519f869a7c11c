"""Truncated importance-weighted best-arm identification for known graphs.

Actions are played from a sampling distribution ``eta``.  Every sample feeds
every arm's estimate through the ratio ``R_a = P_a(Pa(Y)) / Q(Pa(Y))`` with
``Q = sum_b eta_b P_b``.  ``m(eta) = max_a E_a[R_a]`` measures how hard the
instance is under ``eta`` and is convex in ``eta``.

Two factor-set representations provide ``P_a`` over the reward parents:

``DenseFactors``
    explicit tables from :func:`interventional_parent_dist`; any model whose
    parent space fits the enumeration cap.
``ParallelFactors``
    the product form of the parallel graph.  Ratios cost ``O(N)`` per sample
    and ``m(eta)`` is computed exactly by enumerating per-group counts of
    exchangeable coordinates, so ``N = 50`` instances stay exact.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import binom

from .causal_model import (
    ENUMERATION_CAP,
    Action,
    CapacityError,
    CausalModel,
    DomainError,
    InconsistencyError,
    InvalidActionError,
    ParentFactor,
    interventional_parent_dist,
)
from .parallel_bandit import ParallelEnv, arm_index, compute_m

_SUM_TOL = 1e-9


@dataclass(frozen=True)
class EtaDistribution:
    """Sampling distribution over the action set."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size == 0:
            raise ValueError("eta must have at least one entry")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("eta weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > _SUM_TOL:
            raise ValueError(f"eta weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, n: int) -> EtaDistribution:
        return cls(np.full(n, 1.0 / n))

    def __len__(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class TruncationLevels:
    """Per-action truncation levels; ``np.inf`` disables truncation."""

    levels: np.ndarray

    def __post_init__(self):
        b = np.array(self.levels, dtype=float).reshape(-1)
        if np.any(np.isnan(b)) or np.any(b < 0):
            raise ValueError("truncation levels must be nonnegative")
        b.setflags(write=False)
        object.__setattr__(self, "levels", b)

    @classmethod
    def infinite(cls, n: int) -> TruncationLevels:
        return cls(np.full(n, np.inf))

    @property
    def disabled(self) -> bool:
        return bool(np.all(np.isinf(self.levels)))


def _weights(eta) -> np.ndarray:
    if isinstance(eta, EtaDistribution):
        return eta.weights
    return EtaDistribution(eta).weights


# -- factor sets -----------------------------------------------------------


class DenseFactors:
    """Explicit ``P_a(Pa(Y))`` tables, one row per action."""

    def __init__(self, factors: Sequence[ParentFactor]):
        if not factors:
            raise ValueError("need at least one factor")
        first = factors[0]
        for f in factors:
            if f.parents != first.parents or f.arities != first.arities:
                raise ValueError("factors must share one Pa(Y) space")
        self.factors = tuple(factors)
        self.actions = tuple(f.action for f in factors)
        self.parents = first.parents
        self.arities = first.arities
        self.P = np.vstack([f.table for f in factors])
        self.P.setflags(write=False)

    @classmethod
    def from_model(cls, model: CausalModel, actions: Sequence[Action] | None = None,
                   cap: int = ENUMERATION_CAP) -> DenseFactors:
        actions = model.actions if actions is None else actions
        return cls([interventional_parent_dist(model, a, cap) for a in actions])

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def orbits(self) -> list[np.ndarray]:
        return [np.array([a]) for a in range(self.n_actions)]

    def ratios(self, pa_values, eta) -> np.ndarray:
        """``R_a`` for each row of parent values; NaN marks ``Q = 0 < P_a``."""
        w = _weights(eta)
        idx = self.factors[0].index_of(pa_values)
        Pc = self.P[:, idx].T  # (n, |A|)
        Q = Pc @ w
        with np.errstate(divide="ignore", invalid="ignore"):
            R = Pc / Q[:, None]
        R[(Q == 0)[:, None] & (Pc == 0)] = 0.0
        R[(Q == 0)[:, None] & (Pc > 0)] = np.nan
        return R

    def action_values(self, eta) -> np.ndarray:
        w = _weights(eta)
        Q = w @ self.P
        pos = Q > 0
        vals = (self.P[:, pos] ** 2 / Q[pos]).sum(axis=1)
        vals[(self.P[:, ~pos] > 0).any(axis=1)] = np.inf
        return vals

    def gradient(self, eta, a: int) -> np.ndarray:
        w = _weights(eta)
        Q = w @ self.P
        pos = Q > 0
        Pa = self.P[a, pos]
        return -(self.P[:, pos] * (Pa**2 / Q[pos] ** 2)).sum(axis=1)


class ParallelFactors:
    """Product-form factors of the parallel graph (``Pa(Y) = X_1..X_N``).

    Every action must be ``do()`` or a single binary assignment.
    """

    def __init__(self, q: Sequence[float], actions: Sequence[Action] | None = None, cap: int = ENUMERATION_CAP):
        self.q = np.asarray(q, dtype=float).copy()
        self.N = len(self.q)
        self.p = np.stack([1.0 - self.q, self.q], axis=1)  # p[i, j] = P(X_i = j)
        if actions is None:
            actions = ParallelEnv(self.q, [0.5], support=()).actions
        self.actions = tuple(actions)
        self.parents = tuple(range(self.N))
        self.cap = cap
        self._empty: list[int] = []
        self._arm = np.full((self.N, 2), -1, dtype=np.int64)
        for r, a in enumerate(self.actions):
            if a.is_empty:
                self._empty.append(r)
            elif len(a.assignments) == 1 and 0 <= a.assignments[0][0] < self.N and a.assignments[0][1] in (0, 1):
                i, j = a.assignments[0]
                if self._arm[i, j] >= 0:
                    raise InvalidActionError(f"duplicate action {a}")
                self._arm[i, j] = r
            else:
                raise InvalidActionError(f"{a} is not a parallel-graph action")
        if len(self._empty) > 1:
            raise InvalidActionError("duplicate do() action")

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def _split(self, w: np.ndarray):
        e0 = w[self._empty[0]] if self._empty else 0.0
        E = np.where(self._arm >= 0, w[np.maximum(self._arm, 0)], 0.0)
        return float(e0), E

    def orbits(self) -> list[np.ndarray]:
        """Action classes exchanged by permuting coordinates with equal ``q``."""
        present = {i: tuple(j for j in (0, 1) if self._arm[i, j] >= 0) for i in range(self.N)}
        classes: dict = {}
        for r, a in enumerate(self.actions):
            if a.is_empty:
                key = ("empty",)
            else:
                i, j = a.assignments[0]
                key = (self.q[i], j, present[i])
            classes.setdefault(key, []).append(r)
        return [np.array(v) for v in classes.values()]

    def probs(self, X) -> np.ndarray:
        """``P_b(x)`` for every row and action, by direct products."""
        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        base = self.p[np.arange(self.N), X]
        out = np.empty((X.shape[0], self.n_actions))
        for r, a in enumerate(self.actions):
            f = base.copy()
            for i, j in a.assignments:
                f[:, i] = (X[:, i] == j).astype(float)
            out[:, r] = f.prod(axis=1)
        return out

    def ratios(self, X, eta) -> np.ndarray:
        """``R_a(x)`` for every row of ``X``; NaN marks ``Q = 0 < P_a``."""
        w = _weights(eta)
        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        n = X.shape[0]
        cols = np.arange(self.N)
        base = self.p[cols, X]
        zero = base == 0
        nz = zero.sum(axis=1)
        e0, E = self._split(w)
        R = np.zeros((n, self.n_actions))

        # rows with positive base probability: P_b / pi = w_b(x)
        ok = nz == 0
        if ok.any():
            Xo = X[ok]
            inv = 1.0 / base[ok]
            S = e0 + (E[cols, Xo] * inv).sum(axis=1)
            W = np.zeros((Xo.shape[0], self.n_actions))
            if self._empty:
                W[:, self._empty[0]] = 1.0
            for j in (0, 1):
                mask = self._arm[:, j] >= 0
                W[:, self._arm[mask, j]] = (Xo[:, mask] == j) * inv[:, mask]
            with np.errstate(divide="ignore", invalid="ignore"):
                Ro = W / S[:, None]
            dead = S == 0
            Ro[dead] = np.where(W[dead] > 0, np.nan, 0.0)
            R[ok] = Ro

        # one zero-probability coordinate: only the action forcing it has mass
        one = np.flatnonzero(nz == 1)
        if one.size:
            i = zero[one].argmax(axis=1)
            b = self._arm[i, X[one, i]]
            has = b >= 0
            rows, acts = one[has], b[has]
            wb = w[acts]
            R[rows, acts] = np.where(wb > 0, 1.0 / np.where(wb > 0, wb, 1.0), np.nan)
        return R

    # exact m(eta) ---------------------------------------------------------

    def _grid(self, e0: float, E: np.ndarray, exclude: int | None):
        """Joint law of per-group one-counts for ``x ~ pi`` (``exclude`` dropped).

        Returns ``(pmf, S, groups)`` where ``S = e0 + sum_i E[i, x_i] / p_i(x_i)``
        over the included coordinates and ``groups`` lists
        ``(members, q, counts-array)`` aligned with the grid axes.
        """
        buckets: dict = defaultdict(list)
        for i in range(self.N):
            if i != exclude:
                buckets[(self.q[i], E[i, 0], E[i, 1])].append(i)
        size = 1
        for (qg, _, _), members in buckets.items():
            if 0.0 < qg < 1.0:
                size *= len(members) + 1
        if size > self.cap:
            raise CapacityError(f"m(eta) enumeration needs {size} states (cap {self.cap})")

        ndim = len(buckets)
        pmf = np.ones((1,) * ndim)
        S = np.full((1,) * ndim, e0)
        groups = []
        for axis, ((qg, e_0, e_1), members) in enumerate(buckets.items()):
            n = len(members)
            if qg == 0.0:
                c = np.array([0.0])
            elif qg == 1.0:
                c = np.array([float(n)])
            else:
                c = np.arange(n + 1, dtype=float)
            probs = binom.pmf(c, n, qg) if 0.0 < qg < 1.0 else np.ones(1)
            contrib = np.zeros_like(c)
            if qg > 0:
                contrib = contrib + c * e_1 / qg
            if qg < 1:
                contrib = contrib + (n - c) * e_0 / (1.0 - qg)
            shape = [1] * ndim
            shape[axis] = len(c)
            pmf = pmf * probs.reshape(shape)
            S = S + contrib.reshape(shape)
            groups.append((members, qg, c.reshape(shape)))
        return pmf, S, groups

    def _target(self, a: int):
        """``(k, l)`` for arm actions, ``None`` for ``do()``."""
        asg = self.actions[a].assignments
        return asg[0] if asg else None

    def _value_and_grid(self, w: np.ndarray, a: int):
        e0, E = self._split(w)
        target = self._target(a)
        if target is not None and self.p[target] == 0:
            return None
        if target is None:
            coef = 1.0
            pmf, S, groups = self._grid(e0, E, None)
        else:
            k, l = target
            coef = 1.0 / self.p[k, l]
            pmf, S, groups = self._grid(e0 + E[k, l] * coef, E, k)
        return coef, pmf, S, groups

    def _expect(self, coef, pmf, S) -> float:
        live = pmf > 0
        if np.any(S[live] <= 0):
            return math.inf
        return float((pmf[live] * coef / S[live]).sum())

    def action_values(self, eta) -> np.ndarray:
        w = _weights(eta)
        e0, E = self._split(w)
        out = np.empty(self.n_actions)
        cache: dict = {}
        for a in range(self.n_actions):
            target = self._target(a)
            if target is not None and self.p[target] == 0:
                k, l = target
                out[a] = 1.0 / E[k, l] if E[k, l] > 0 else math.inf
                continue
            if target is None:
                key = None
            else:
                k, l = target
                key = (self.q[k], E[k, 0], E[k, 1], l)
            if key not in cache:
                coef, pmf, S, _ = self._value_and_grid(w, a)
                cache[key] = self._expect(coef, pmf, S)
            out[a] = cache[key]
        return out

    def gradient(self, eta, a: int) -> np.ndarray:
        """Derivative of ``E_a[R_a]`` with respect to each ``eta_b``."""
        w = _weights(eta)
        grad = np.zeros(self.n_actions)
        res = self._value_and_grid(w, a)
        if res is None:
            grad[a] = -1.0 / w[a] ** 2 if w[a] > 0 else -math.inf
            return grad
        coef, pmf, S, groups = res
        live = pmf > 0
        G = np.zeros_like(pmf * S)
        G[live] = (pmf * coef / S**2)[live] if np.all(S[live] > 0) else np.inf
        total = G.sum()
        if self._empty:
            grad[self._empty[0]] = -total
        for members, qg, c in groups:
            n = len(members)
            frac1 = c / n
            for j, frac in ((1, frac1), (0, 1.0 - frac1)):
                pj = qg if j == 1 else 1.0 - qg
                if pj == 0:
                    continue
                val = -(G * frac).sum() / pj
                for i in members:
                    if self._arm[i, j] >= 0:
                        grad[self._arm[i, j]] = val
        target = self._target(a)
        if target is not None:
            k, l = target
            if self._arm[k, l] >= 0:
                grad[self._arm[k, l]] = -total * coef
        return grad

    def dense(self) -> DenseFactors:
        """Equivalent dense tables (small ``N`` only)."""
        if 2**self.N > self.cap:
            raise CapacityError("parent space too large for dense tables")
        X = np.array(np.unravel_index(np.arange(2**self.N), (2,) * self.N)).T
        P = self.probs(X)
        arities = (2,) * self.N
        return DenseFactors([ParentFactor(a, self.parents, arities, P[:, r].copy()) for r, a in enumerate(self.actions)])


def as_factor_set(factors):
    if isinstance(factors, (DenseFactors, ParallelFactors)):
        return factors
    return DenseFactors(list(factors))


def factor_set_for(env, actions: Sequence[Action] | None = None, cap: int = ENUMERATION_CAP):
    """Factor set matching an environment's action set."""
    if isinstance(env, ParallelEnv):
        return ParallelFactors(env.q, env.actions if actions is None else actions, cap)
    return DenseFactors.from_model(env, actions, cap)


def _action_index(fs, a) -> int:
    if isinstance(a, (int, np.integer)):
        return int(a)
    return fs.actions.index(a)


def ratio(factors, eta, a, x) -> float:
    """``P_a(pa(x)) / Q(pa(x))`` for a single assignment ``x``.

    ``x`` is a full assignment (model column layout); states with
    ``P_a = Q = 0`` give 0.
    """
    fs = as_factor_set(factors)
    x = np.asarray(x, dtype=np.int64).reshape(1, -1)
    r = fs.ratios(x[:, list(fs.parents)], eta)[0, _action_index(fs, a)]
    if np.isnan(r):
        raise InconsistencyError("Q(pa(x)) = 0 while P_a(pa(x)) > 0")
    return float(r)


def m_eta(factors, eta) -> float:
    """``max_a E_a[P_a / Q]`` by exact enumeration."""
    return float(as_factor_set(factors).action_values(eta).max())


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


@dataclass
class EtaOptimum:
    eta: EtaDistribution
    value: float
    converged: bool
    iterations: int
    trace: list[tuple[int, float]] = field(default_factory=list, repr=False)


def optimize_eta(factors, tol: float = 1e-4, max_iters: int = 5000, step: float = 1.0,
                 window: int = 500) -> EtaOptimum:
    """Minimise ``m(eta)`` by projected subgradient descent on the simplex.

    Steps are ``step / sqrt(k)`` along the normalised subgradient of the
    maximising action (lowest index on ties); the best iterate is returned.
    Weights are tied within the factor set's symmetry orbits, which keeps
    the minimum unchanged because ``m`` is convex and orbit-invariant.
    Stops when the best value improves by less than ``tol / 10`` over
    ``window`` iterations.
    """
    fs = as_factor_set(factors)
    n = fs.n_actions
    orbits = fs.orbits()
    owner = np.empty(n, dtype=np.int64)
    for g, members in enumerate(orbits):
        owner[members] = g
    sizes = np.array([len(m) for m in orbits], dtype=float)

    def expand(wg):
        eta = wg[owner] / sizes[owner]
        return eta / eta.sum()

    wg = sizes / n
    best_w, best = wg.copy(), math.inf
    history: list[float] = []
    trace: list[tuple[int, float]] = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        eta = expand(wg)
        values = fs.action_values(eta)
        a = int(np.argmax(values))
        f = float(values[a])
        trace.append((it, f))
        if f < best:
            best, best_w = f, wg.copy()
        history.append(best)
        if len(history) > window and history[-window - 1] - best < tol / 10:
            converged = True
            break
        if math.isinf(f):
            g = -np.isinf(values).astype(float)
        else:
            g = fs.gradient(eta, a)
        gw = np.bincount(owner, weights=g, minlength=len(orbits)) / sizes
        norm = np.linalg.norm(gw)
        if norm == 0 or not np.isfinite(norm):
            converged = norm == 0
            break
        wg = project_simplex(wg - step / math.sqrt(it) * gw / norm)
    return EtaOptimum(EtaDistribution(expand(best_w)), best, converged, it, trace)


def theorem3_truncation(m_value: float, T: int, action_count: int) -> TruncationLevels:
    """Common truncation level ``sqrt(m T / log(2 T |A|))`` for every action."""
    if T < 1 or action_count < 1:
        raise DomainError("need T >= 1 and at least one action")
    arg = 2.0 * T * action_count
    if arg <= 1.0:
        raise DomainError("log(2T|A|) must be positive")
    if m_value < 0:
        raise DomainError("m(eta) must be nonnegative")
    return TruncationLevels(np.full(action_count, math.sqrt(m_value * T / math.log(arg))))


def parallel_eta(q: Sequence[float]) -> EtaDistribution:
    """Sampling distribution giving ``m(eta) <= 2 m(q)`` on the parallel graph.

    Arm ``do(X_i=j)`` gets ``1/(2m)`` when ``P(X_i=j) < 1/m`` and 0 otherwise;
    ``do()`` takes the rest, which is at least 1/2.
    """
    q = np.asarray(q, dtype=float)
    m = compute_m(q)
    eta = np.zeros(2 * len(q) + 1)
    for i, qi in enumerate(q):
        for j, pj in ((0, 1.0 - qi), (1, qi)):
            if pj < 1.0 / m:
                eta[arm_index(i, j)] = 1.0 / (2 * m)
    eta[0] = 1.0 - eta[1:].sum()
    return EtaDistribution(eta)


@dataclass
class Alg2State:
    """Output of one run of the importance-weighted algorithm."""

    mu_hat: np.ndarray
    played: np.ndarray
    assignments: np.ndarray
    rewards: np.ndarray
    m_value: float
    chosen: int
    summands: np.ndarray = field(default=None, repr=False)


def run_algorithm2(env, actions: Sequence[Action] | None, eta, B, T: int, rng: np.random.Generator,
                   factors=None, m_value: float | None = None) -> tuple[Action, Alg2State]:
    """Sample ``T`` actions from ``eta`` and estimate every arm at once.

    ``mu_hat_a = (1/T) sum_t Y_t R_a(X_t) 1{R_a(X_t) <= B_a}``; the arm with the
    largest estimate (lowest index on ties) is returned.
    """
    actions = tuple(env.actions if actions is None else actions)
    fs = as_factor_set(factors) if factors is not None else factor_set_for(env, actions)
    if fs.actions != actions:
        raise ValueError("factor set and action list disagree")
    w = _weights(eta)
    if len(w) != len(actions):
        raise ValueError("eta length must match the action set")
    levels = B.levels if isinstance(B, TruncationLevels) else TruncationLevels(B).levels
    if len(levels) != len(actions):
        raise ValueError("truncation levels must match the action set")
    if T < 0:
        raise DomainError("T must be nonnegative")
    if m_value is None:
        m_value = m_eta(fs, w)

    n_act = len(actions)
    played = rng.choice(n_act, size=T, p=w) if T else np.zeros(0, dtype=np.int64)
    assignments, rewards = env.sample_rounds(played, rng, actions)
    if T:
        R = fs.ratios(assignments[:, list(fs.parents)], w)
        if np.isnan(R).any():
            raise InconsistencyError("sampled state has zero mixture probability")
        Z = rewards[:, None] * np.where(R <= levels, R, 0.0)
        mu_hat = Z.sum(axis=0) / T
    else:
        Z = np.zeros((0, n_act))
        mu_hat = np.zeros(n_act)
    chosen = int(np.argmax(mu_hat))
    state = Alg2State(mu_hat, played, assignments, rewards, float(m_value), chosen, Z)
    return actions[chosen], state
