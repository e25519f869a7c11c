"""Discrete causal models with do-interventions.

A model is a DAG over finite discrete variables, one CPT per variable and a
binary reward variable ``Y``.  Interventions mutilate the graph: intervened
variables are pinned to their values and lose their incoming edges.

CPT layout
----------
Parents of every variable are kept in the model's declared variable order.
Row ``r`` of a CPT corresponds to the parent assignment whose mixed-radix
index is ``r``, with the *last* parent varying fastest (the order produced by
``itertools.product`` / ``np.ndindex``).  The same convention indexes the
joint parent space of ``ParentFactor`` tables.
"""

from __future__ import annotations

import itertools
import json
import math
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

ENUMERATION_CAP = 2**20
_ROW_TOL = 1e-12


class CausalBanditError(Exception):
    """Base class for errors raised by this package."""


class DomainError(CausalBanditError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class InvalidActionError(CausalBanditError, ValueError):
    """An action references an unknown variable or an out-of-arity value."""


class CapacityError(CausalBanditError):
    """An exact enumeration would exceed the configured state cap."""


class InconsistencyError(CausalBanditError):
    """Importance ratio requested where the mixture has no mass but the target does."""


@dataclass(frozen=True, order=True)
class Action:
    """A partial assignment ``do(X=x)``; the empty assignment is ``do()``.

    ``assignments`` holds ``(variable index, value)`` pairs sorted by index.
    """

    assignments: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        pairs = tuple(sorted((int(v), int(x)) for v, x in self.assignments))
        ids = [v for v, _ in pairs]
        if len(set(ids)) != len(ids):
            raise InvalidActionError(f"variable assigned twice in {pairs}")
        object.__setattr__(self, "assignments", pairs)

    @classmethod
    def of(cls, mapping: Mapping[int, int]) -> Action:
        return cls(tuple(mapping.items()))

    @property
    def is_empty(self) -> bool:
        return not self.assignments

    def as_dict(self) -> dict[int, int]:
        return dict(self.assignments)

    def label(self, names: Sequence[str] | None = None) -> str:
        parts = []
        for v, x in self.assignments:
            name = names[v] if names is not None else f"X{v + 1}"
            parts.append(f"{name}={x}")
        return "do(" + ",".join(parts) + ")"

    def __str__(self) -> str:
        return self.label()


EMPTY_ACTION = Action()


@dataclass(frozen=True)
class Variable:
    """Declaration of one variable: name, arity, parent names and CPT rows."""

    name: str
    arity: int
    parents: tuple[str, ...] = ()
    cpt: np.ndarray = field(default=None, repr=False)


class CausalModel:
    """DAG over discrete variables with dense CPTs and a reward variable.

    Parameters
    ----------
    variables : sequence of Variable
        Declared in the order that fixes the mixed-radix convention.  Parent
        names may be listed in any order; they are re-sorted into declared
        order and the CPT is expected in that sorted layout.
    reward : str
        Name of the binary reward variable ``Y``.
    actions : sequence of Action, optional
        The allowed action set carried alongside the model (e.g. from a model
        file).
    """

    def __init__(self, variables: Sequence[Variable], reward: str, actions: Sequence[Action] | None = None):
        self.names: tuple[str, ...] = tuple(v.name for v in variables)
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate variable names")
        index = {n: i for i, n in enumerate(self.names)}
        self.index = index
        self.arities: tuple[int, ...] = tuple(int(v.arity) for v in variables)
        if any(a < 1 for a in self.arities):
            raise ValueError("arities must be positive")
        parents = []
        for v in variables:
            try:
                ps = sorted(index[p] for p in v.parents)
            except KeyError as exc:
                raise ValueError(f"unknown parent {exc} of {v.name}") from None
            if len(set(ps)) != len(ps):
                raise ValueError(f"repeated parent of {v.name}")
            parents.append(tuple(ps))
        self.parents: tuple[tuple[int, ...], ...] = tuple(parents)
        self.order: tuple[int, ...] = _topological_order(self.parents)

        cpts = []
        for k, v in enumerate(variables):
            rows = int(np.prod([self.arities[p] for p in self.parents[k]], dtype=np.int64))
            cpt = np.array(v.cpt, dtype=float).reshape(rows, self.arities[k])
            if np.any(cpt < 0) or np.any(cpt > 1):
                raise ValueError(f"CPT entries of {v.name} must lie in [0, 1]")
            if np.any(np.abs(cpt.sum(axis=1) - 1.0) > _ROW_TOL):
                raise ValueError(f"CPT rows of {v.name} must sum to 1")
            cpt.setflags(write=False)
            cpts.append(cpt)
        self.cpts: tuple[np.ndarray, ...] = tuple(cpts)

        if reward not in index:
            raise ValueError(f"unknown reward variable {reward!r}")
        self.reward = index[reward]
        if self.arities[self.reward] != 2:
            raise ValueError("reward variable must be binary")
        self.actions: tuple[Action, ...] = tuple(actions) if actions is not None else ()
        for a in self.actions:
            self.validate_action(a)

        self._strides = tuple(_strides([self.arities[p] for p in ps]) for ps in self.parents)
        self._cumcpts = tuple(_cumulative(c) for c in self.cpts)

    # -- structure -----------------------------------------------------

    @property
    def n_variables(self) -> int:
        return len(self.names)

    @property
    def reward_parents(self) -> tuple[int, ...]:
        return self.parents[self.reward]

    def ancestors(self, nodes: Iterable[int]) -> set[int]:
        seen: set[int] = set()
        stack = list(nodes)
        while stack:
            k = stack.pop()
            for p in self.parents[k]:
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen

    def validate_action(self, action: Action) -> None:
        for v, x in action.assignments:
            if not 0 <= v < self.n_variables:
                raise InvalidActionError(f"unknown variable index {v}")
            if v == self.reward:
                raise InvalidActionError("the reward variable cannot be intervened on")
            if not 0 <= x < self.arities[v]:
                raise InvalidActionError(f"value {x} out of range for {self.names[v]}")

    def action(self, **assignments: int) -> Action:
        """Build an action from variable names, e.g. ``model.action(X1=1)``."""
        try:
            a = Action(tuple((self.index[n], x) for n, x in assignments.items()))
        except KeyError as exc:
            raise InvalidActionError(f"unknown variable {exc}") from None
        self.validate_action(a)
        return a

    def label(self, action: Action) -> str:
        return action.label(self.names)

    def parent_index(self, k: int, values: np.ndarray) -> np.ndarray:
        """Mixed-radix CPT row of variable ``k`` for assignment rows ``values``."""
        idx = np.zeros(values.shape[0], dtype=np.int64)
        for p, s in zip(self.parents[k], self._strides[k]):
            idx += values[:, p].astype(np.int64) * s
        return idx

    # -- sampling ------------------------------------------------------

    def sample_rounds(self, action_idx, rng: np.random.Generator, actions: Sequence[Action] | None = None):
        """Sample one assignment per entry of ``action_idx``.

        Returns ``(assignments, y)`` where ``assignments`` has one column per
        variable (including ``Y``).
        """
        actions = self.actions if actions is None else tuple(actions)
        action_idx = np.asarray(action_idx, dtype=np.int64)
        fixed = np.full((len(actions), self.n_variables), -1, dtype=np.int64)
        for i, a in enumerate(actions):
            self.validate_action(a)
            for v, x in a.assignments:
                fixed[i, v] = x
        return self._sample_fixed(fixed[action_idx], rng)

    def _sample_fixed(self, fixed: np.ndarray, rng: np.random.Generator):
        n = fixed.shape[0]
        values = np.zeros((n, self.n_variables), dtype=np.int64)
        for k in self.order:
            u = rng.random(n)
            cum = self._cumcpts[k][self.parent_index(k, values)]
            drawn = (u[:, None] >= cum[:, :-1]).sum(axis=1)
            values[:, k] = np.where(fixed[:, k] >= 0, fixed[:, k], drawn)
        return values, values[:, self.reward].copy()

    # -- serialisation -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "variables": [
                {
                    "name": self.names[k],
                    "arity": self.arities[k],
                    "parents": [self.names[p] for p in self.parents[k]],
                    "cpt": self.cpts[k].tolist(),
                }
                for k in range(self.n_variables)
            ],
            "reward": self.names[self.reward],
            "actions": [{self.names[v]: x for v, x in a.assignments} for a in self.actions],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> CausalModel:
        variables = [
            Variable(v["name"], int(v["arity"]), tuple(v.get("parents", ())), np.asarray(v["cpt"], dtype=float))
            for v in data["variables"]
        ]
        names = {v.name: i for i, v in enumerate(variables)}
        actions = None
        if "actions" in data:
            actions = []
            for spec in data["actions"]:
                try:
                    actions.append(Action(tuple((names[n], int(x)) for n, x in spec.items())))
                except KeyError as exc:
                    raise InvalidActionError(f"unknown variable {exc} in action set") from None
        return cls(variables, data["reward"], actions)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> CausalModel:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _topological_order(parents: Sequence[Sequence[int]]) -> tuple[int, ...]:
    n = len(parents)
    state = [0] * n  # 0 new, 1 on stack, 2 done
    order: list[int] = []

    def visit(k: int) -> None:
        # iterative DFS; recursion depth would limit long chains
        stack = [(k, iter(parents[k]))]
        state[k] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                state[node] = 2
                order.append(node)
            elif state[nxt] == 1:
                raise ValueError("the parent relation contains a cycle")
            elif state[nxt] == 0:
                state[nxt] = 1
                stack.append((nxt, iter(parents[nxt])))

    for k in range(n):
        if state[k] == 0:
            visit(k)
    return tuple(order)


def _strides(arities: Sequence[int]) -> tuple[int, ...]:
    out = []
    s = 1
    for a in reversed(arities):
        out.append(s)
        s *= a
    return tuple(reversed(out))


def _cumulative(cpt: np.ndarray) -> np.ndarray:
    cum = np.cumsum(cpt, axis=1)
    cum[:, -1] = 1.0
    return cum


def sample(model: CausalModel, action: Action, rng: np.random.Generator) -> np.ndarray:
    """Draw one full assignment from the mutilated model."""
    values, _ = model.sample_rounds([0], rng, actions=[action])
    return values[0]


def sample_batch(model: CausalModel, action: Action, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` full assignments under a single action."""
    values, _ = model.sample_rounds(np.zeros(n, dtype=np.int64), rng, actions=[action])
    return values


# -- exact interventional distributions ------------------------------------


@dataclass(frozen=True)
class ParentFactor:
    """Exact distribution of the reward parents under one action.

    ``table`` is flat over the joint ``Pa(Y)`` space in mixed-radix order.
    """

    action: Action
    parents: tuple[int, ...]
    arities: tuple[int, ...]
    table: np.ndarray = field(repr=False)

    def index_of(self, pa_values) -> np.ndarray:
        """Flat table index of parent-value rows (shape ``(n, len(parents))``)."""
        pa_values = np.atleast_2d(np.asarray(pa_values, dtype=np.int64))
        idx = np.zeros(pa_values.shape[0], dtype=np.int64)
        for col, s in enumerate(_strides(self.arities)):
            idx += pa_values[:, col] * s
        return idx

    def prob(self, pa_values) -> np.ndarray:
        return self.table[self.index_of(pa_values)]

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {pa: float(self.table[i]) for i, pa in enumerate(itertools.product(*map(range, self.arities)))}


def parent_space_size(model: CausalModel) -> int:
    return math.prod(model.arities[p] for p in model.reward_parents)


def interventional_parent_dist(model: CausalModel, action: Action, cap: int = ENUMERATION_CAP) -> ParentFactor:
    """Exact ``P(Pa(Y) | action)`` by the truncated factorisation.

    Intervened variables are pinned (their CPT slices are taken at the forced
    value and their own factor is dropped); every other ancestor of ``Pa(Y)``
    is summed out by variable elimination.
    """
    model.validate_action(action)
    pa = model.reward_parents
    size = parent_space_size(model)
    if size > cap:
        raise CapacityError(f"Pa(Y) joint space has {size} states (cap {cap})")
    pinned = action.as_dict()
    relevant = model.ancestors(pa) | set(pa)

    factors: list[tuple[tuple[int, ...], np.ndarray]] = []
    for k in sorted(relevant):
        if k in pinned:
            continue
        ps = model.parents[k]
        tensor = model.cpts[k].reshape(*[model.arities[p] for p in ps], model.arities[k])
        slicer = tuple(pinned[p] if p in pinned else slice(None) for p in ps)
        tensor = tensor[slicer + (slice(None),)]
        scope = tuple(p for p in ps if p not in pinned) + (k,)
        factors.append((scope, tensor))

    free_pa = tuple(p for p in pa if p not in pinned)
    eliminate = [k for k in sorted(relevant) if k not in pinned and k not in free_pa]
    factors = _eliminate(factors, eliminate, model.arities, cap)
    marginal = _contract(factors, free_pa, model.arities, cap)

    table = np.zeros([model.arities[p] for p in pa])
    slicer = tuple(pinned[p] if p in pinned else slice(None) for p in pa)
    table[slicer] = marginal
    flat = table.reshape(-1)
    flat.setflags(write=False)
    return ParentFactor(action, pa, tuple(model.arities[p] for p in pa), flat)


def _eliminate(factors, order, arities, cap):
    remaining = list(order)
    while remaining:
        # greedy: variable whose elimination yields the smallest new factor
        def cost(v):
            scope = set()
            for s, _ in factors:
                if v in s:
                    scope.update(s)
            return math.prod(arities[u] for u in scope)

        v = min(remaining, key=lambda u: (cost(u), u))
        remaining.remove(v)
        touching = [f for f in factors if v in f[0]]
        if not touching:
            continue
        factors = [f for f in factors if v not in f[0]]
        scope = tuple(sorted(set().union(*(s for s, _ in touching)) - {v}))
        factors.append((scope, _contract(touching, scope, arities, cap)))
    return factors


def _contract(factors, out_scope, arities, cap):
    variables = sorted(set(out_scope).union(*(s for s, _ in factors)) if factors else set(out_scope))
    if math.prod(arities[v] for v in variables) > cap:
        raise CapacityError("intermediate factor exceeds the enumeration cap")
    letters = string.ascii_letters
    if len(variables) > len(letters):
        raise CapacityError("too many variables in a single factor")
    sym = {v: letters[i] for i, v in enumerate(variables)}
    if not factors:
        return np.ones([arities[v] for v in out_scope])
    spec = ",".join("".join(sym[v] for v in s) for s, _ in factors)
    spec += "->" + "".join(sym[v] for v in out_scope)
    return np.einsum(spec, *(t for _, t in factors))


def reward_given_parents(model: CausalModel) -> np.ndarray:
    """``P(Y=1 | Pa(Y))`` as a flat table in mixed-radix order."""
    return model.cpts[model.reward][:, 1]


def true_mean(model: CausalModel, action: Action, cap: int = ENUMERATION_CAP) -> float:
    """Exact ``E[Y | action]``."""
    factor = interventional_parent_dist(model, action, cap)
    return float(factor.table @ reward_given_parents(model))


# -- builders for the three standard graph families -------------------------


def _bernoulli_rows(p1) -> np.ndarray:
    p1 = np.atleast_1d(np.asarray(p1, dtype=float))
    return np.stack([1.0 - p1, p1], axis=1)


def parallel_model(q: Sequence[float], reward: Callable[[tuple[int, ...]], float] | Sequence[float] | None = None,
                   actions: Sequence[Action] | None = None) -> CausalModel:
    """Independent binary causes ``X_1..X_N`` of ``Y``.

    ``reward`` gives ``P(Y=1 | x)`` either as a callable on the value tuple or
    as a flat table over ``{0,1}^N`` (``X_N`` fastest).  Defaults to the
    standard action set ``do(), do(X_1=0), do(X_1=1), ...``.
    """
    q = [float(v) for v in q]
    n = len(q)
    if reward is None:
        def reward(x):
            return (1 + sum(x)) / (n + 2)
    if callable(reward):
        table = [reward(x) for x in itertools.product((0, 1), repeat=n)]
    else:
        table = list(reward)
    variables = [Variable(f"X{i + 1}", 2, (), _bernoulli_rows(qi)) for i, qi in enumerate(q)]
    variables.append(Variable("Y", 2, tuple(f"X{i + 1}" for i in range(n)), _bernoulli_rows(table)))
    if actions is None:
        actions = parallel_actions(n)
    return CausalModel(variables, "Y", actions)


def parallel_actions(n: int) -> list[Action]:
    """``do()`` followed by ``do(X_i=0), do(X_i=1)`` for ``i = 1..n``."""
    acts = [EMPTY_ACTION]
    for i in range(n):
        acts.append(Action(((i, 0),)))
        acts.append(Action(((i, 1),)))
    return acts


def confounded_model(p_x1: float = 0.5, deterministic: bool = True, flip: float = 0.2,
                     reward: Sequence[float] = (0.2, 0.4, 0.6, 0.8)) -> CausalModel:
    """``X_1 -> X_2``, ``X_1 -> Y``, ``X_2 -> Y``.

    ``X_2`` copies ``X_1`` (or flips it with probability ``flip`` when not
    deterministic).  ``reward`` is ``P(Y=1 | X_1, X_2)`` with ``X_2`` fastest.
    """
    e = 0.0 if deterministic else float(flip)
    variables = [
        Variable("X1", 2, (), _bernoulli_rows(p_x1)),
        Variable("X2", 2, ("X1",), np.array([[1 - e, e], [e, 1 - e]])),
        Variable("Y", 2, ("X1", "X2"), _bernoulli_rows(reward)),
    ]
    actions = [EMPTY_ACTION] + [Action(((v, x),)) for v in (0, 1) for x in (0, 1)]
    return CausalModel(variables, "Y", actions)


def chain_model(n: int, p_x1: float = 0.0, deterministic: bool = True, flip: float = 0.1,
                reward: Sequence[float] = (0.3, 0.7)) -> CausalModel:
    """``X_1 -> X_2 -> ... -> X_N -> Y``.

    Each ``X_k`` copies its parent, or flips it with probability ``flip`` when
    not deterministic.  ``reward`` is ``P(Y=1 | X_N)``.
    """
    if n < 1:
        raise ValueError("chain needs at least one variable")
    e = 0.0 if deterministic else float(flip)
    copy = np.array([[1 - e, e], [e, 1 - e]])
    variables = [Variable("X1", 2, (), _bernoulli_rows(p_x1))]
    for k in range(2, n + 1):
        variables.append(Variable(f"X{k}", 2, (f"X{k - 1}",), copy))
    variables.append(Variable("Y", 2, (f"X{n}",), _bernoulli_rows(reward)))
    return CausalModel(variables, "Y", parallel_actions(n))
