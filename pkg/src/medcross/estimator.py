"""Influence-function scores, V-fold cross-fitting and effect estimates.

The score for phi(d, d') = E[Y(d, M(d'))] is

    w_{d,d'} * (Y - mu(X, d, M))
      + (1 - 1{D = d'} / a(d'|X)) * E[mu(X, d, M) | X, D = d']
      + 1{D = d'} / a(d'|X) * mu(X, d, M)

with ``w = 1{D = d} f(M|X,d') / (a(d|X) f(M|X,d))``. With a continuous
mediator the density ratio is rewritten through a(d|X, M):
``f(m|x,d') / (a(d|x) f(m|x,d)) = a(d'|x,m) / (a(d'|x) a(d|x,m))``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .domain import (
    PAIRS,
    Effect,
    EffectReport,
    MediatorKind,
    NuisanceFit,
    ObservationTable,
    PhiScores,
    effect_arithmetic,
    validate_table,
)
from .folds import FoldAssignment
from .nuisance import FitPlan, fit_nuisances

log = logging.getLogger(__name__)

DEFAULT_V = 5
EFFECT_ORDER = (Effect.TOTAL, Effect.NDE0, Effect.NDE1, Effect.NIE0, Effect.NIE1)


class UncoveredRow(IndexError):
    pass


class NonDiscreteLaw(ValueError):
    pass


def _rows(table: ObservationTable, fit: NuisanceFit, rows):
    if rows is None:
        rows = np.arange(table.n)
    rows = np.asarray(rows)
    if fit.n != len(rows):
        raise UncoveredRow(f"fit covers {fit.n} rows but {len(rows)} were requested")
    return rows


def _arm(p1: np.ndarray, d: int) -> np.ndarray:
    return p1 if d == 1 else 1.0 - p1


def score_phi(d: int, d_prime: int, table: ObservationTable, fit: NuisanceFit,
              rows=None) -> np.ndarray:
    """Per-row scores whose mean estimates E[Y(d, M(d'))]."""
    rows = _rows(table, fit, rows)
    D, Y = table.d[rows], table.y[rows]
    hit_d = (D == d).astype(np.float64)
    hit_dp = (D == d_prime).astype(np.float64)
    a_dp = _arm(fit.a_x, d_prime)
    if d == d_prime:
        ratio = 1.0 / a_dp
    elif fit.mediator_kind is MediatorKind.CONTINUOUS:
        ratio = _arm(fit.a_xm, d_prime) / (a_dp * _arm(fit.a_xm, d))
    else:
        ratio = fit.f_m(d_prime) / (_arm(fit.a_x, d) * fit.f_m(d))
    mu = fit.mu(d)
    ipw = hit_dp / a_dp
    return hit_d * ratio * (Y - mu) + (1.0 - ipw) * fit.cross_mu[:, d, d_prime] + ipw * mu


def score_phi_total(d: int, table: ObservationTable, fit: NuisanceFit, rows=None) -> np.ndarray:
    """Per-row augmented-IPW scores whose mean estimates E[Y(d)]."""
    rows = _rows(table, fit, rows)
    ipw = (table.d[rows] == d) / _arm(fit.a_x, d)
    return ipw * table.y[rows] + (1.0 - ipw) * fit.cross_mu[:, d, d]


def _out_of_fold_losses(table: ObservationTable, fit: NuisanceFit, rows) -> dict[str, float]:
    D, M, Y = table.d[rows], table.m[rows], table.y[rows]
    ce = lambda p, t: float(np.mean(-(t * np.log(p) + (1 - t) * np.log(1 - p))))
    out = {"a_x": ce(fit.a_x, D)}
    out["mu"] = float(np.mean((np.where(D == 1, fit.mu_d1, fit.mu_d0) - Y) ** 2))
    if fit.a_xm is not None:
        out["a_xm"] = ce(fit.a_xm, D)
    else:
        out["f_m"] = float(np.mean(-np.log(np.where(D == 1, fit.f_m_d1, fit.f_m_d0))))
    return out


def crossfit(table: ObservationTable, V: int, kind, plan: FitPlan | None = None,
             seed: int = 0) -> PhiScores:
    """Score every row with nuisances trained on the other V - 1 folds."""
    if not 2 <= V <= 10:
        raise ValueError(f"V must lie in [2, 10], got {V}")
    table = validate_table(table, folds=V)
    if plan is None:
        plan = FitPlan(table.mediator_kind)
    folds = FoldAssignment.make(table.n, V, seed)
    psi = {k: np.empty(table.n) for k in PAIRS}
    psi_total = {d: np.empty(table.n) for d in (0, 1)}
    losses: dict[str, float] = {}
    for v, rows in enumerate(folds.folds):
        train = table.take(folds.complement(v))
        fit = fit_nuisances(train, table.take(rows), kind, plan, seed=seed * 1000 + v)
        for d, dp in PAIRS:
            psi[d, dp][rows] = score_phi(d, dp, table, fit, rows)
        for d in (0, 1):
            psi_total[d][rows] = score_phi_total(d, table, fit, rows)
        for name, value in _out_of_fold_losses(table, fit, rows).items():
            losses[name] = losses.get(name, 0.0) + value * len(rows) / table.n
    return PhiScores(psi, psi_total, losses)


def _variance(diff: np.ndarray, tau: float) -> float:
    n = len(diff)
    return float(np.sum(diff * diff)) / n ** 2 - tau * tau / n


def estimate(scores: PhiScores) -> list[EffectReport]:
    """Point estimates, variances and 95% Wald intervals for the five effects.

    Effects come from the four phi-hat means so that
    Total = NDE(0) + NIE(1) = NDE(1) + NIE(0) holds by construction.
    Negative variance estimates are floored at zero and flagged.
    """
    if not scores.complete:
        raise ValueError("scores are missing a (d, d') pair or an arm")
    n = scores.n
    phi_hat = {k: float(np.mean(v)) for k, v in scores.psi.items()}
    effects = effect_arithmetic(phi_hat)
    diffs = {
        Effect.TOTAL: scores.psi_total[1] - scores.psi_total[0],
        Effect.NDE0: scores.psi[1, 0] - scores.psi[0, 0],
        Effect.NDE1: scores.psi[1, 1] - scores.psi[0, 1],
        Effect.NIE0: scores.psi[0, 1] - scores.psi[0, 0],
        Effect.NIE1: scores.psi[1, 1] - scores.psi[1, 0],
    }
    reports = []
    for effect in EFFECT_ORDER:
        var = _variance(diffs[effect], effects[effect])
        if var < 0:
            log.warning("negative variance estimate for %s floored at 0", effect.value)
        reports.append(EffectReport.from_estimate(effect, effects[effect], var, n))
    return reports


# Discrete instances --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscreteNuisance:
    """Nuisance values on a finite covariate support with a binary mediator.

    ``a1[x] = P(D=1|x)``, ``f1[x, d] = P(M=1|x, d)``, ``mu[x, d, m]``.
    """

    a1: np.ndarray
    f1: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        for name, shape_tail in (("a1", ()), ("f1", (2,)), ("mu", (2, 2))):
            v = np.array(getattr(self, name), dtype=np.float64)
            if v.shape[1:] != shape_tail or not np.all(np.isfinite(v)):
                raise NonDiscreteLaw(f"{name} has shape {v.shape}; expected (K,)+{shape_tail}")
            object.__setattr__(self, name, v)
        if not (len(self.a1) == len(self.f1) == len(self.mu)):
            raise NonDiscreteLaw("nuisance arrays disagree on the support size")

    def a(self, d: int) -> np.ndarray:
        return _arm(self.a1, d)

    def f(self, m: int, d: int) -> np.ndarray:
        return _arm(self.f1[:, d], m)


@dataclass(frozen=True)
class BiasTerms:
    term_af: float
    term_fmu: float
    term_amu: float

    @property
    def total(self) -> float:
        return self.term_af + self.term_fmu + self.term_amu


def _check_law(p_x, truth: DiscreteNuisance, fit: DiscreteNuisance | None = None) -> np.ndarray:
    p_x = np.asarray(p_x, dtype=np.float64)
    if p_x.ndim != 1 or len(p_x) != len(truth.a1) or np.any(p_x < 0) \
            or not math.isclose(p_x.sum(), 1.0, abs_tol=1e-12):
        raise NonDiscreteLaw("p_x must be a probability vector over the covariate support")
    if fit is not None and len(fit.a1) != len(p_x):
        raise NonDiscreteLaw("fit and truth live on different supports")
    return p_x


def enumerate_phi(truth: DiscreteNuisance, p_x, d: int, d_prime: int) -> float:
    """sum_x p(x) sum_m mu(x, d, m) f(m | x, d')."""
    p_x = _check_law(p_x, truth)
    return float(sum(np.sum(p_x * truth.mu[:, d, m] * truth.f(m, d_prime)) for m in (0, 1)))


def discrete_table(truth: DiscreteNuisance, p_x):
    """All (x, D, M) cells with their probabilities and Y set to E[Y | x, D, M].

    Scores are linear in Y, so averaging them over these cells with the
    returned weights gives their exact expectation under the law.
    """
    p_x = _check_law(p_x, truth)
    K = len(p_x)
    xs, ds, ms, ys, ws = [], [], [], [], []
    for x in range(K):
        for d in (0, 1):
            for m in (0, 1):
                xs.append(x)
                ds.append(d)
                ms.append(m)
                ys.append(truth.mu[x, d, m])
                ws.append(p_x[x] * truth.a(d)[x] * truth.f(m, d)[x])
    xs = np.array(xs)
    table = ObservationTable(xs.astype(float), ds, ms, ys, MediatorKind.BINARY)
    return table, np.array(ws), xs


def discrete_fit(fit: DiscreteNuisance, table: ObservationTable, cells: np.ndarray) -> NuisanceFit:
    m = table.m.astype(int)
    cross = np.empty((table.n, 2, 2))
    for d in (0, 1):
        for dp in (0, 1):
            cross[:, d, dp] = sum(fit.mu[cells, d, mm] * fit.f(mm, dp)[cells] for mm in (0, 1))
    return NuisanceFit(
        a_x=fit.a1[cells],
        mu_d0=fit.mu[cells, 0, m],
        mu_d1=fit.mu[cells, 1, m],
        cross_mu=cross,
        f_m_d0=np.where(m == 1, fit.f1[cells, 0], 1 - fit.f1[cells, 0]),
        f_m_d1=np.where(m == 1, fit.f1[cells, 1], 1 - fit.f1[cells, 1]),
    )


def expected_score(truth: DiscreteNuisance, fit: DiscreteNuisance, p_x,
                   d: int, d_prime: int) -> float:
    """E[psi~_{d,d'}] under the true law, by running :func:`score_phi` on every cell."""
    table, w, cells = discrete_table(truth, p_x)
    _check_law(p_x, truth, fit)
    scores = score_phi(d, d_prime, table, discrete_fit(fit, table, cells))
    return float(np.dot(w, scores))


def bias_decomposition(truth: DiscreteNuisance, fit: DiscreteNuisance, p_x,
                       d: int, d_prime: int) -> BiasTerms:
    """Split E[phi~(d, d') - phi(d, d')] into three products of nuisance errors.

    term_af  - propensity error at d' times mediator-density error at d'
    term_fmu - density-ratio error times outcome-regression error
    term_amu - propensity error at d times outcome-regression error
    """
    p_x = _check_law(p_x, truth, fit)
    a_dp, at_dp = truth.a(d_prime), fit.a(d_prime)
    a_d, at_d = truth.a(d), fit.a(d)
    t1 = t2 = t3 = 0.0
    for m in (0, 1):
        f_d, f_dp = truth.f(m, d), truth.f(m, d_prime)
        ft_d, ft_dp = fit.f(m, d), fit.f(m, d_prime)
        mu_t, mu = fit.mu[:, d, m], truth.mu[:, d, m]
        t1 += np.sum(p_x * (1 - a_dp / at_dp) * (ft_dp / f_dp - 1) * mu_t * f_dp)
        t2 += np.sum(p_x * (1 - (f_d / ft_d) * (ft_dp / f_dp)) * (mu_t - mu) * f_dp)
        t3 += np.sum(p_x * (1 - a_d / at_d) * (ft_dp / ft_d) * (mu_t - mu) * f_d)
    return BiasTerms(float(t1), float(t2), float(t3))


@dataclass(frozen=True)
class BiasBound:
    """``|bias| <= constant * rate`` with the rates measured in L2."""

    constant: float
    rate: float
    r_a: float
    r_f: tuple[float, float]
    r_mu: float

    @property
    def value(self) -> float:
        return self.constant * self.rate


def bias_bound(truth: DiscreteNuisance, fit: DiscreteNuisance, p_x,
               d: int, d_prime: int) -> BiasBound:
    """Cauchy-Schwarz bound on the bias of the (d, d') estimator.

    ``r_a`` is the L2(p_x) norm of the propensity error; the density and
    outcome errors are measured under F(x, m | D = 0). The constant collects
    the positivity bounds of the instance and the largest density ratio
    between p(x) and F(x, m | D = 0).
    """
    p_x = _check_law(p_x, truth, fit)
    a0 = truth.a(0)
    nu = np.stack([p_x * a0 / np.sum(p_x * a0) * truth.f(m, 0) for m in (0, 1)], axis=1)
    kappa = float(np.max(p_x[:, None] / nu))
    norm = lambda g: float(np.sqrt(np.sum(nu * g ** 2)))

    r_a = float(np.sqrt(np.sum(p_x * (fit.a1 - truth.a1) ** 2)))
    delta_f = lambda dd: np.stack([fit.f(m, dd) - truth.f(m, dd) for m in (0, 1)], axis=1)
    r_f = (norm(delta_f(0)), norm(delta_f(1)))
    r_mu = norm(fit.mu[:, d, :] - truth.mu[:, d, :])

    at_min = float(min(fit.a(0).min(), fit.a(1).min()))
    ft = np.stack([fit.f(m, dd) for m in (0, 1) for dd in (0, 1)])
    ft_min, ft_max = float(ft.min()), float(ft.max())
    f_max = float(max(truth.f(m, dd).max() for m in (0, 1) for dd in (0, 1)))
    mu_t_max = float(np.abs(fit.mu).max())

    c_af = mu_t_max / at_min * math.sqrt(2 * kappa)
    c_fmu = 2 * kappa * f_max / ft_min
    c_amu = ft_max / (at_min * ft_min) * f_max * math.sqrt(2 * kappa)
    rf = max(r_f)
    rate = max(r_a * rf, rf * r_mu, r_a * r_mu)
    return BiasBound(c_af + c_fmu + c_amu, rate, r_a, r_f, r_mu)
