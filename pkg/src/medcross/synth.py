"""Synthetic mediation scenarios with closed-form nuisance functions.

All five cases share the structural equations

    D ~ Bernoulli(s(d(X))),  M = 0.2 D + m(X) + e_M,  Y = 0.2 D + M + y(X) + e_Y

with X uniform on [-1, 1]^p and standard normal errors, so that
tau_tot = 0.4 and NDE(d) = NIE(d) = 0.2 in every case. The cases differ
only in the mean functions d, m and y.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import stats
from scipy.stats import qmc

from .domain import Effect, MediatorKind, NuisanceFit, ObservationTable
from .wavelet import DEFAULT_RESOLUTION, HolderSpec, build_scaling_table, eta

TREATMENT_SHIFT = 0.2
TRUE_EFFECTS = {
    Effect.TOTAL: 0.4,
    Effect.NDE0: 0.2,
    Effect.NDE1: 0.2,
    Effect.NIE0: 0.2,
    Effect.NIE1: 0.2,
}


class Case(enum.IntEnum):
    CASE1 = 1
    CASE2 = 2
    CASE3 = 3
    CASE4 = 4
    CASE5 = 5


DEFAULT_ALPHA = {Case.CASE3: 1.2, Case.CASE4: 0.6, Case.CASE5: 1.5}


class UnsupportedDimension(ValueError):
    pass


class ScenarioMismatch(ValueError):
    pass


def relevant_dim(case: Case) -> int:
    return 3 if case is Case.CASE5 else 5


@dataclass(frozen=True)
class ScenarioSpec:
    case_id: Case
    n: int
    p: int = 5
    alpha: float | None = None
    seed: int = 0

    def __post_init__(self):
        case = Case(self.case_id)
        object.__setattr__(self, "case_id", case)
        if self.alpha is None and case in DEFAULT_ALPHA:
            object.__setattr__(self, "alpha", DEFAULT_ALPHA[case])
        if self.n < 100:
            raise ValueError(f"n must be at least 100, got {self.n}")
        if self.p < relevant_dim(case):
            raise UnsupportedDimension(
                f"case {int(case)} needs p >= {relevant_dim(case)}, got {self.p}")

    def with_seed(self, seed: int) -> "ScenarioSpec":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        return {"case": int(self.case_id), "n": self.n, "p": self.p,
                "alpha": self.alpha, "seed": self.seed}


@lru_cache(maxsize=4)
def _table(resolution: int):
    return build_scaling_table(resolution)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class OracleNuisance:
    """True nuisance functions of a scenario.

    Holds only scalars so it pickles cheaply into worker processes.
    """

    case_id: Case
    p: int = 5
    alpha: float | None = None
    resolution: int = DEFAULT_RESOLUTION

    truth = TRUE_EFFECTS

    def _eta(self, x):
        return eta(x, HolderSpec(self.alpha), _table(self.resolution))

    def mean_functions(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """d(x), m(x), y(x) evaluated row-wise."""
        x = np.atleast_2d(x)
        case = self.case_id
        x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
        if case is Case.CASE1:
            x4, x5 = x[:, 3], x[:, 4]
            s5 = x[:, :5].sum(axis=1)
            d = x1 * x2 + x3 * x4 * x5 + np.sin(x1)
            m = 4.0 * np.sin(3.0 * x[:, :5]).sum(axis=1)
            y = (x1 + x2) ** 2 + 5.0 * np.sin(s5)
        elif case is Case.CASE2:
            sx = np.sin(x[:, :5])
            a1 = x1 * x2
            a2 = x3 * x[:, 3] * x[:, 4]
            a3 = sx[:, 0] * sx[:, 1]
            a4 = sx[:, 2] * sx[:, 3] * sx[:, 4]
            b1, b2 = np.sin(a1 + a2), np.sin(a2)
            d = 0.5 * np.sin(b1 + b2) + 0.5 * (a3 + a4)
            m = 5.0 * np.sin(sx.sum(axis=1))
            c1 = np.sin(x1 + x2)
            c2 = np.sin(x[:, 2:5].sum(axis=1))
            c3 = np.sin(x[:, :5].sum(axis=1))
            y = 10.0 * np.sin(np.sin(c1 + c2) + c3)
        elif case in (Case.CASE3, Case.CASE4):
            base = x1 * x2 + x3 * x[:, 3] * x[:, 4]
            d = base + 0.5 * self._eta(0.2 * x1)
            m = self._eta(0.5 * x[:, :5]).sum(axis=1)
            y = x1 * x2 + 3.0 * self._eta(0.2 * x[:, :5].sum(axis=1))
        else:
            inner = self._eta(x[:, :3].sum(axis=1))
            outer = self._eta(self._eta(x[:, :3]).sum(axis=1))
            d = 0.2 * inner + 0.2 * outer
            m = 0.5 * inner + 0.2 * outer
            y = 0.2 * inner + 0.5 * outer
        return d, m, y

    def propensity(self, x) -> np.ndarray:
        """a(1 | x)."""
        return _sigmoid(self.mean_functions(x)[0])

    def mediator_density(self, m, x, d) -> np.ndarray:
        """f(m | x, d): normal with mean 0.2 d + m(x) and unit variance."""
        mean = TREATMENT_SHIFT * d + self.mean_functions(x)[1]
        return stats.norm.pdf(np.asarray(m) - mean)

    def outcome_regression(self, x, d, m) -> np.ndarray:
        """mu(x, d, m) = 0.2 d + m + y(x)."""
        return TREATMENT_SHIFT * d + np.asarray(m) + self.mean_functions(x)[2]

    def cross_regression(self, x, d, d_prime) -> np.ndarray:
        """Integral of mu(x, d, m) against f(m | x, d')."""
        _, mx, yx = self.mean_functions(x)
        return TREATMENT_SHIFT * d + TREATMENT_SHIFT * d_prime + mx + yx

    def propensity_given_mediator(self, x, m) -> np.ndarray:
        """a(1 | x, m) by Bayes' rule from a(1 | x) and the two mediator densities."""
        dx, mx, _ = self.mean_functions(x)
        m = np.asarray(m)
        # log f(m|x,1) - log f(m|x,0) for unit-variance normals
        log_ratio = TREATMENT_SHIFT * (m - mx) - 0.5 * TREATMENT_SHIFT ** 2
        return _sigmoid(dx + log_ratio)

    def phi(self, d: int, d_prime: int, log2_points: int = 18) -> float:
        """E[Y(d, M(d'))] with E[m(X) + y(X)] by scrambled-Sobol quadrature."""
        k = relevant_dim(self.case_id)
        u = qmc.Sobol(k, scramble=True, seed=12345).random_base2(log2_points)
        x = np.zeros((len(u), self.p))
        x[:, :k] = 2.0 * u - 1.0
        _, mx, yx = self.mean_functions(x)
        return TREATMENT_SHIFT * (d + d_prime) + float(np.mean(mx + yx))


def oracle_for(spec: ScenarioSpec) -> OracleNuisance:
    return OracleNuisance(spec.case_id, spec.p, spec.alpha)


def _stream(seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seq))


def generate(spec: ScenarioSpec) -> tuple[ObservationTable, OracleNuisance]:
    """Draw one sample of size ``spec.n`` and return it with its oracle.

    Each draw family has its own counter-based stream spawned from the seed:
    relevant covariates, treatment uniforms, mediator noise, outcome noise,
    and finally the irrelevant covariates. Changing ``p`` therefore leaves
    D, M and Y untouched.
    """
    k = relevant_dim(spec.case_id)
    s_rel, s_d, s_m, s_y, s_irr = np.random.SeedSequence(spec.seed).spawn(5)
    n = spec.n
    x = np.empty((n, spec.p))
    x[:, :k] = _stream(s_rel).uniform(-1.0, 1.0, size=(n, k))
    if spec.p > k:
        x[:, k:] = _stream(s_irr).uniform(-1.0, 1.0, size=(n, spec.p - k))

    oracle = oracle_for(spec)
    dx, mx, yx = oracle.mean_functions(x)
    d = (_stream(s_d).uniform(size=n) < _sigmoid(dx)).astype(np.float64)
    m = TREATMENT_SHIFT * d + mx + _stream(s_m).standard_normal(n)
    y = TREATMENT_SHIFT * d + m + yx + _stream(s_y).standard_normal(n)
    table = ObservationTable(x, d, m, y, MediatorKind.CONTINUOUS)
    return table, oracle


def oracle_nuisance_fit(table: ObservationTable, oracle: OracleNuisance) -> NuisanceFit:
    """Closed-form nuisance values on every row of ``table`` (no clipping)."""
    if table.p != oracle.p:
        raise ScenarioMismatch(f"table has {table.p} covariates, oracle expects {oracle.p}")
    if table.mediator_kind is not MediatorKind.CONTINUOUS:
        raise ScenarioMismatch("synthetic scenarios use a continuous mediator")
    x, m = table.x, table.m
    cross = np.empty((table.n, 2, 2))
    for d in (0, 1):
        for dp in (0, 1):
            cross[:, d, dp] = oracle.cross_regression(x, d, dp)
    return NuisanceFit(
        a_x=oracle.propensity(x),
        a_xm=oracle.propensity_given_mediator(x, m),
        mu_d0=oracle.outcome_regression(x, 0, m),
        mu_d1=oracle.outcome_regression(x, 1, m),
        cross_mu=cross,
    )
