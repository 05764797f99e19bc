"""Monte Carlo replication of the synthetic benchmarks.

Replicate ``r`` draws its data with seed ``base_seed + r`` and uses the same
seed for fold assignment, so any replicate can be rerun on its own. Results
are merged by replicate index, which makes tables independent of the worker
count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .domain import Effect
from .estimator import DEFAULT_V, EFFECT_ORDER, crossfit, estimate
from .nuisance import DnnLearner, FitPlan, LinearLearner, OracleLearner
from .synth import TRUE_EFFECTS, ScenarioSpec, generate, oracle_for

HIST_BINS = 20


class ReplicateFailed(RuntimeError):
    def __init__(self, replicate: int, cause: BaseException):
        super().__init__(f"replicate {replicate} failed: {cause!r}")
        self.replicate = replicate


def make_learner(name: str, scenario: ScenarioSpec, grid=None):
    if name == "oracle":
        return OracleLearner(oracle_for(scenario))
    if name == "linear":
        return LinearLearner()
    if name == "dnn":
        return DnnLearner(grid) if grid is not None else DnnLearner()
    raise ValueError(f"unknown learner {name!r}")


@dataclass(frozen=True)
class BenchmarkConfig:
    scenario: ScenarioSpec
    replicates: int
    learners: tuple = ()
    V: int = DEFAULT_V
    parallelism: int = 1

    def __post_init__(self):
        if self.replicates < 2:
            raise ValueError("need at least 2 replicates")
        if not self.learners:
            object.__setattr__(self, "learners", (make_learner("oracle", self.scenario),))
        object.__setattr__(self, "learners", tuple(self.learners))
        names = [lr.name for lr in self.learners]
        if len(set(names)) != len(names):
            raise ValueError(f"learner names must be unique, got {names}")
        if not 2 <= self.V <= 10:
            raise ValueError("V must lie in [2, 10]")
        if self.parallelism < 1:
            raise ValueError("parallelism must be at least 1")

    def replicate_seed(self, r: int) -> int:
        return self.scenario.seed + r


def run_replicate(config: BenchmarkConfig, r: int) -> dict[str, dict[str, tuple[float, float]]]:
    """Estimates and model variances of every effect, per learner, for replicate ``r``."""
    seed = config.replicate_seed(r)
    with threadpool_limits(1):
        table, _ = generate(config.scenario.with_seed(seed))
        plan = FitPlan(table.mediator_kind)
        out = {}
        for learner in config.learners:
            reports = estimate(crossfit(table, config.V, learner, plan, seed))
            out[learner.name] = {rep.effect.value: (rep.estimate, rep.variance) for rep in reports}
    return out


def _guarded(args):
    config, r = args
    try:
        return run_replicate(config, r)
    except Exception as exc:  # noqa: BLE001 - re-raised with the replicate index
        raise ReplicateFailed(r, exc) from exc


@dataclass(frozen=True)
class BenchmarkRow:
    learner: str
    effect: Effect
    bias: float
    se: float
    se_sample: float
    rmse: float
    cp: float
    mean_model_se: float
    histogram: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "learner": self.learner, "effect": self.effect.value, "bias": self.bias,
            "se": self.se, "se_sample": self.se_sample, "rmse": self.rmse, "cp": self.cp,
            "mean_model_se": self.mean_model_se, "histogram": self.histogram,
        }


@dataclass(frozen=True)
class BenchmarkTable:
    rows: tuple[BenchmarkRow, ...]
    replicates: int
    estimates: dict = field(default_factory=dict, compare=False)

    def row(self, learner: str, effect) -> BenchmarkRow:
        effect = Effect(effect)
        for r in self.rows:
            if r.learner == learner and r.effect is effect:
                return r
        raise KeyError((learner, effect))

    def to_dict(self) -> dict:
        return {"replicates": self.replicates, "rows": [r.to_dict() for r in self.rows],
                "estimates": self.estimates}

    def to_text(self) -> str:
        head = f"{'effect':<8}{'learner':<10}{'Bias':>9}{'SE':>9}{'RMSE':>9}{'CP':>8}{'ModelSE':>10}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(f"{r.effect.value:<8}{r.learner:<10}{r.bias:>9.3f}{r.se:>9.3f}"
                         f"{r.rmse:>9.3f}{r.cp:>8.3f}{r.mean_model_se:>10.3f}")
        return "\n".join(lines) + "\n"


def summarize(results: Sequence[dict], truths=TRUE_EFFECTS) -> BenchmarkTable:
    """Collapse per-replicate results into bias / SE / RMSE / coverage rows.

    ``se`` divides by R so that rmse**2 == bias**2 + se**2 exactly;
    ``se_sample`` divides by R - 1.
    """
    R = len(results)
    rows, raw = [], {}
    for learner in results[0]:
        raw[learner] = {}
        for effect in EFFECT_ORDER:
            est = np.array([res[learner][effect.value][0] for res in results])
            var = np.array([res[learner][effect.value][1] for res in results])
            truth = truths[effect]
            err = est - truth
            bias = float(err.mean())
            se = float(est.std())
            half = 1.959964 * np.sqrt(var)
            cover = np.abs(err) <= half
            counts, edges = np.histogram(est, bins=HIST_BINS)
            rows.append(BenchmarkRow(
                learner=learner, effect=effect, bias=bias, se=se,
                se_sample=float(est.std(ddof=1)),
                rmse=math.sqrt(float(np.mean(err ** 2))),
                cp=float(cover.mean()),
                mean_model_se=float(np.sqrt(var).mean()),
                histogram={"counts": counts.tolist(), "edges": edges.tolist()},
            ))
            raw[learner][effect.value] = est.tolist()
    return BenchmarkTable(tuple(rows), R, raw)


def run_benchmark(config: BenchmarkConfig) -> BenchmarkTable:
    """Run every replicate (in parallel when asked) and summarise them."""
    jobs = [(config, r) for r in range(config.replicates)]
    if config.parallelism == 1:
        results = [_guarded(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=config.parallelism) as pool:
            results = list(pool.map(_guarded, jobs))
    return summarize(results)
