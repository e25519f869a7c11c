"""Replicated simple-regret experiments on the single-cause reward family.

Every environment has ``q_i = 0`` for ``i <= m`` and ``1/2`` otherwise, and
``Y ~ Bernoulli(1/2 + eps)`` when ``X_1 = 1``, ``Bernoulli(1/2 - eps')``
otherwise.  Each replication draws from its own generator seeded by
``(seed, replication, algorithm, m, T)``, so results do not depend on grid
order, algorithm order, or the number of worker processes.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import successive_reject
from .causal_model import DomainError
from .general_bandit import (
    EtaDistribution,
    ParallelFactors,
    TruncationLevels,
    m_eta,
    optimize_eta,
    parallel_eta,
    run_algorithm2,
    theorem3_truncation,
)
from .parallel_bandit import ParallelEnv, run_algorithm1, single_cause_env

log = logging.getLogger(__name__)

ALGORITHMS = ("alg1", "alg2", "alg2-untruncated", "sr")
EXPERIMENTS = ("fig3a", "fig3b", "fig3c", "custom")
ETA_SOURCES = ("optimized", "appendix-c", "uniform")
TRUNCATIONS = ("theorem3", "infinity")
DEFAULT_T_GRID = [50, 100, 200, 400, 800, 1600]
CSV_COLUMNS = ("experiment", "algorithm", "N", "m", "T", "epsilon", "reps", "mean_regret", "stderr")


@dataclass
class ExperimentConfig:
    """Grid, reward gap rule and algorithm settings of one experiment.

    ``epsilon`` is a number or ``"worst-case"`` (``sqrt(N / 8T)`` capped at
    1/4).  ``eta_source`` and ``truncation`` also accept explicit per-action
    lists, which is how tuned vectors round-trip through config files.
    """

    experiment: str = "custom"
    N: int = 50
    m_values: list[int] = field(default_factory=lambda: [2])
    T_values: list[int] = field(default_factory=lambda: [400])
    epsilon: float | str = 0.3
    reps: int = 1000
    seed: int = 0
    algorithms: list[str] = field(default_factory=lambda: list(ALGORITHMS))
    eta_source: str | list[float] = "optimized"
    truncation: str | list[float] = "theorem3"
    q1: float | None = None
    workers: int = 1

    def __post_init__(self):
        self.m_values = [int(m) for m in self.m_values]
        self.T_values = [int(t) for t in self.T_values]
        self.algorithms = list(self.algorithms)

    @classmethod
    def preset(cls, name: str, **overrides) -> ExperimentConfig:
        if name not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {name!r}")
        base: dict = {"experiment": name}
        if name == "fig3a":
            base.update(N=50, m_values=list(range(2, 51)), T_values=[400], epsilon=0.3)
        elif name == "fig3b":
            base.update(N=50, m_values=[2], T_values=list(DEFAULT_T_GRID), epsilon="worst-case")
        elif name == "fig3c":
            base.update(N=50, m_values=[2], T_values=list(DEFAULT_T_GRID), epsilon=0.3)
        base.update(overrides)
        cfg = cls(**base)
        cfg.validate()
        return cfg

    @classmethod
    def from_dict(cls, data: dict, experiment: str | None = None) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        name = experiment or data.pop("experiment", "custom")
        data.pop("experiment", None)
        return cls.preset(name, **data)

    @classmethod
    def load(cls, path, experiment: str | None = None) -> ExperimentConfig:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")), experiment)

    def to_dict(self) -> dict:
        return asdict(self)

    def epsilon_for(self, T: int) -> float:
        if self.epsilon == "worst-case":
            return min(math.sqrt(self.N / (8.0 * T)), 0.25)
        return float(self.epsilon)

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.N < 2:
            raise ValueError("N must be at least 2")
        for m in self.m_values:
            if not 1 <= m <= self.N:
                raise ValueError(f"m={m} must lie in 1..N")
        for T in self.T_values:
            if T < 2 or T % 2:
                raise ValueError(f"T={T} must be even and at least 2")
        if isinstance(self.epsilon, str):
            if self.epsilon != "worst-case":
                raise ValueError(f"unknown epsilon rule {self.epsilon!r}")
        for T in self.T_values:
            if not 0 < self.epsilon_for(T) < 0.5:
                raise ValueError("epsilon must lie in (0, 1/2)")
        bad = set(self.algorithms) - set(ALGORITHMS)
        if bad:
            raise ValueError(f"unknown algorithms {sorted(bad)}")
        if isinstance(self.eta_source, str) and self.eta_source not in ETA_SOURCES:
            raise ValueError(f"unknown eta source {self.eta_source!r}")
        if isinstance(self.truncation, str) and self.truncation not in TRUNCATIONS:
            raise ValueError(f"unknown truncation {self.truncation!r}")
        if self.q1 is not None and not 0 <= self.q1 < 1:
            raise DomainError("q1 must lie in [0, 1) for eps' to be defined")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass(frozen=True)
class RegretRow:
    experiment: str
    algorithm: str
    N: int
    m: int
    T: int
    epsilon: float
    reps: int
    mean_regret: float
    stderr: float


def build_env(config: ExperimentConfig, m: int, T: int) -> ParallelEnv:
    """Environment for one grid point; the best arm is ``do(X_1=1)``."""
    return single_cause_env(config.N, m, config.epsilon_for(T), config.q1)


def choose_eta(config: ExperimentConfig, factors: ParallelFactors) -> EtaDistribution:
    src = config.eta_source
    if not isinstance(src, str):
        return EtaDistribution(src)
    if src == "uniform":
        return EtaDistribution.uniform(factors.n_actions)
    if src == "appendix-c":
        return parallel_eta(factors.q)
    return optimize_eta(factors).eta


def choose_truncation(config: ExperimentConfig, algorithm: str, m_value: float, T: int, n: int) -> TruncationLevels:
    if algorithm == "alg2-untruncated" or config.truncation == "infinity":
        return TruncationLevels.infinite(n)
    if not isinstance(config.truncation, str):
        return TruncationLevels(config.truncation)
    return theorem3_truncation(m_value, T, n)


@dataclass
class _Task:
    algorithm: str
    env: ParallelEnv
    T: int
    seed: int
    m: int
    factors: ParallelFactors | None = None
    eta: EtaDistribution | None = None
    B: TruncationLevels | None = None
    m_value: float | None = None


def replication_rng(seed: int, rep: int, algorithm: str, m: int, T: int) -> np.random.Generator:
    return np.random.default_rng([seed, rep, ALGORITHMS.index(algorithm), m, T])


def _run_one(task: _Task, rep: int) -> float:
    rng = replication_rng(task.seed, rep, task.algorithm, task.m, task.T)
    env = task.env
    if task.algorithm == "alg1":
        _, state = run_algorithm1(env, task.T, rng)
        idx = state.chosen
    elif task.algorithm == "sr":
        idx = env.actions.index(successive_reject(env, task.T, rng))
    else:
        _, state = run_algorithm2(env, env.actions, task.eta, task.B, task.T, rng,
                                  factors=task.factors, m_value=task.m_value)
        idx = state.chosen
    means = env.true_means()
    return float(means.max() - means[idx])


def _run_chunk(args) -> list[float]:
    task, start, stop = args
    return [_run_one(task, r) for r in range(start, stop)]


def replicate(task: _Task, reps: int, workers: int = 1, executor=None) -> np.ndarray:
    """Per-replication regrets, always in replication order."""
    if executor is None or workers <= 1:
        return np.array(_run_chunk((task, 0, reps)))
    chunk = max(1, math.ceil(reps / (4 * workers)))
    jobs = [(task, s, min(s + chunk, reps)) for s in range(0, reps, chunk)]
    out: list[float] = []
    for part in executor.map(_run_chunk, jobs):
        out.extend(part)
    return np.array(out)


def summarize(regrets: np.ndarray) -> tuple[float, float]:
    mean = float(regrets.mean())
    se = float(regrets.std(ddof=1) / math.sqrt(len(regrets))) if len(regrets) > 1 else 0.0
    return mean, se


def run_experiment(config: ExperimentConfig) -> list[RegretRow]:
    """Mean simple regret and its standard error per grid point and algorithm."""
    config.validate()
    rows: list[RegretRow] = []
    executor = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    eta_cache: dict = {}
    try:
        for m in config.m_values:
            for T in config.T_values:
                env = build_env(config, m, T)
                eps = config.epsilon_for(T)
                for alg in config.algorithms:
                    task = _Task(alg, env, T, config.seed, m)
                    if alg == "sr" and T < env.n_actions:
                        log.warning("skipping sr at T=%d: fewer rounds than %d arms", T, env.n_actions)
                        continue
                    if alg.startswith("alg2"):
                        factors = ParallelFactors(env.q, env.actions)
                        key = (tuple(env.q),)
                        if key not in eta_cache:
                            eta = choose_eta(config, factors)
                            eta_cache[key] = (eta, m_eta(factors, eta))
                        task.factors = factors
                        task.eta, task.m_value = eta_cache[key]
                        task.B = choose_truncation(config, alg, task.m_value, T, env.n_actions)
                    regrets = replicate(task, config.reps, config.workers, executor)
                    mean, se = summarize(regrets)
                    rows.append(RegretRow(config.experiment, alg, config.N, m, T, eps, config.reps, mean, se))
                    log.info("%s m=%d T=%d %s: %.4f +- %.4f", config.experiment, m, T, alg, mean, se)
    finally:
        if executor is not None:
            executor.shutdown()
    return rows


def write_csv(rows: Sequence[RegretRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([r.experiment, r.algorithm, r.N, r.m, r.T, repr(float(r.epsilon)), r.reps,
                             repr(float(r.mean_regret)), repr(float(r.stderr))])


def read_csv(path) -> list[RegretRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        return [
            RegretRow(d["experiment"], d["algorithm"], int(d["N"]), int(d["m"]), int(d["T"]), float(d["epsilon"]),
                      int(d["reps"]), float(d["mean_regret"]), float(d["stderr"]))
            for d in reader
        ]

