"""Nuisance learners: fit on one split, predict on another.

Three learners share one interface:

* :class:`DnnLearner` - ReLU networks, hyperparameters chosen per target by
  k-fold cross-validation over a grid.
* :class:`OracleLearner` - the true nuisance functions of a synthetic scenario.
* :class:`LinearLearner` - least squares / logistic regression baselines.

:func:`fit_nuisances` runs a learner over a :class:`FitPlan` and applies the
positivity and boundedness clips.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import optimize, special

from . import neurnet
from .domain import (
    MediatorKind,
    NuisanceFit,
    ObservationTable,
    PROPENSITY_CLIP,
    clip_fit,
    outcome_bounds,
)
from .folds import split_indices
from .neurnet import NetworkSpec
from .synth import OracleNuisance, oracle_nuisance_fit


class EmptyGrid(ValueError):
    pass


class InsufficientData(ValueError):
    pass


class PredictionNonFinite(FloatingPointError):
    pass


BINARY_TARGETS = ("a_x", "f_m", "mu")
CONTINUOUS_TARGETS = ("a_x", "a_xm", "mu", "cross_mu_d0", "cross_mu_d1")


@dataclass(frozen=True)
class FitPlan:
    """Which regressions to run for a given mediator type.

    The continuous path replaces the mediator density by the propensity
    given (X, M) and fits the two ``cross_mu_d*`` regressions after ``mu``,
    on mu-hat's own predictions.
    """

    mediator_kind: MediatorKind

    def __post_init__(self):
        object.__setattr__(self, "mediator_kind", MediatorKind(self.mediator_kind))

    @property
    def targets(self) -> tuple[str, ...]:
        if self.mediator_kind is MediatorKind.BINARY:
            return BINARY_TARGETS
        return CONTINUOUS_TARGETS


def default_grid() -> list[NetworkSpec]:
    """Depth 1-3, width 10-500, input L1 0-0.4, 100 or 500 epochs, batch 100."""
    return [
        NetworkSpec(depth=L, width=K, l1_input=lam, epochs=ep, batch_size=100)
        for L, K, lam, ep in itertools.product((1, 2, 3), (10, 50, 100, 500),
                                               (0.0, 0.1, 0.4), (100, 500))
    ]


_GRID_KEYS = {"depth": "depth", "width": "width", "l1": "l1_input", "epochs": "epochs",
              "lr": "learning_rate", "optimizer": "optimizer", "batch_size": "batch_size"}


def grid_from_json(doc) -> list[NetworkSpec]:
    """Build a grid from a JSON document (string, dict or list).

    A dict maps each key to a value or list of values and expands to the
    Cartesian product; a list gives the grid points explicitly.
    Keys: depth, width, l1, epochs, lr, optimizer, batch_size.
    """
    if isinstance(doc, str):
        doc = json.loads(doc)
    if isinstance(doc, dict):
        keys = list(doc)
        values = [v if isinstance(v, list) else [v] for v in doc.values()]
        points = [dict(zip(keys, combo)) for combo in itertools.product(*values)]
    elif isinstance(doc, list):
        points = doc
    else:
        raise ValueError("grid document must be an object or a list of objects")
    grid = []
    for point in points:
        unknown = set(point) - set(_GRID_KEYS)
        if unknown:
            raise ValueError(f"unknown grid keys: {sorted(unknown)}")
        grid.append(NetworkSpec(**{_GRID_KEYS[k]: v for k, v in point.items()}))
    if not grid:
        raise EmptyGrid("grid document is empty")
    return grid


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts]).generate_state(1)[0])


def cv_losses(grid: Sequence[NetworkSpec], data, folds: int = 3, seed: int = 0) -> np.ndarray:
    """Mean validation loss (no penalty) of each grid point over ``folds`` folds."""
    x, y = data
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    blocks = split_indices(len(y), folds, seed)
    out = np.zeros(len(grid))
    for g, spec in enumerate(grid):
        for v, val in enumerate(blocks):
            tr = np.setdiff1d(np.arange(len(y)), val)
            model = neurnet.train((x[tr], y[tr]), replace(spec, init_seed=_derive_seed(spec.init_seed, seed, v)))
            out[g] += neurnet.data_loss(model, x[val], y[val])
    return out / folds


def cv_select(grid: Sequence[NetworkSpec], data, folds: int = 3, seed: int = 0) -> NetworkSpec:
    """Grid point with the lowest mean validation loss.

    Ties go to the point with fewer parameters, then to the earlier point.
    """
    if not grid:
        raise EmptyGrid("hyperparameter grid is empty")
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if len(grid) == 1:
        return grid[0]
    losses = cv_losses(grid, data, folds, seed)
    n_in = np.atleast_2d(data[0]).shape[1]
    best = min(range(len(grid)), key=lambda g: (losses[g], grid[g].n_parameters(n_in), g))
    return grid[best]


class _Regressions:
    """Shared driver: builds design matrices for each target of a plan."""

    name = "base"

    def regress(self, target, x_train, y_train, x_preds, binary, seed):
        raise NotImplementedError

    def fit_predict(self, train: ObservationTable, predict_on: ObservationTable,
                    plan: FitPlan, seed: int = 0) -> NuisanceFit:
        xt, xp = train.x, predict_on.x
        dt, mt, yt = train.d, train.m, train.y
        mp = predict_on.m
        ones_t, ones_p = np.ones(train.n), np.ones(predict_on.n)

        def col(*cols):
            return np.column_stack(cols)

        seeds = {t: _derive_seed(seed, i) for i, t in enumerate(plan.targets)}
        (a_x,) = self.regress("a_x", xt, dt, [xp], True, seeds["a_x"])

        if plan.mediator_kind is MediatorKind.BINARY:
            f1_d0, f1_d1 = self.regress("f_m", col(xt, dt), mt,
                                        [col(xp, 0 * ones_p), col(xp, ones_p)], True, seeds["f_m"])
            f1 = np.clip(np.column_stack([f1_d0, f1_d1]), PROPENSITY_CLIP, 1 - PROPENSITY_CLIP)
            preds = self.regress("mu", col(xt, dt, mt), yt,
                                 [col(xp, d * ones_p, m_val * ones_p) for d in (0, 1) for m_val in (0, 1)]
                                 + [col(xp, d * ones_p, mp) for d in (0, 1)],
                                 False, seeds["mu"])
            lo, hi = outcome_bounds(yt)
            mu_grid = np.clip(np.array(preds[:4]).reshape(2, 2, -1), lo, hi)  # [d, m, row]
            cross = np.empty((predict_on.n, 2, 2))
            for d in (0, 1):
                for dp in (0, 1):
                    cross[:, d, dp] = mu_grid[d, 1] * f1[:, dp] + mu_grid[d, 0] * (1 - f1[:, dp])
            f_obs = lambda d: np.where(mp == 1, f1[:, d], 1 - f1[:, d])
            return NuisanceFit(a_x=a_x, mu_d0=preds[4], mu_d1=preds[5], cross_mu=cross,
                               f_m_d0=f_obs(0), f_m_d1=f_obs(1))

        (a_xm,) = self.regress("a_xm", col(xt, mt), dt, [col(xp, mp)], True, seeds["a_xm"])
        mu_pred = self.regress("mu", col(xt, dt, mt), yt,
                               [col(xt, 0 * ones_t, mt), col(xt, ones_t, mt),
                                col(xp, 0 * ones_p, mp), col(xp, ones_p, mp)],
                               False, seeds["mu"])
        lo, hi = outcome_bounds(yt)
        cross = np.empty((predict_on.n, 2, 2))
        for d in (0, 1):
            # second stage: regress mu-hat(X, d, M) on (X, D) over the training rows
            target = np.clip(mu_pred[d], lo, hi)
            c0, c1 = self.regress(f"cross_mu_d{d}", col(xt, dt), target,
                                  [col(xp, 0 * ones_p), col(xp, ones_p)], False,
                                  seeds[f"cross_mu_d{d}"])
            cross[:, d, 0], cross[:, d, 1] = c0, c1
        return NuisanceFit(a_x=a_x, a_xm=a_xm, mu_d0=mu_pred[2], mu_d1=mu_pred[3],
                           cross_mu=cross)


@dataclass
class DnnLearner(_Regressions):
    """ReLU-network learner.

    Features are standardised with training-split moments; continuous targets
    are standardised too and mapped back after prediction. ``selected`` pins
    a spec per target name and skips cross-validation for that target.
    """

    grid: list[NetworkSpec] = field(default_factory=default_grid)
    cv_folds: int = 3
    selected: dict[str, NetworkSpec] = field(default_factory=dict)
    name: str = "dnn"

    def __post_init__(self):
        if not self.grid:
            raise EmptyGrid("DNN learner needs a nonempty grid")
        self.chosen: dict[str, NetworkSpec] = {}

    def _spec_for(self, target, x, y, binary, seed):
        grid = [s.for_binary_target() if binary else s.for_continuous_target() for s in self.grid]
        if target in self.selected:
            spec = self.selected[target]
            spec = spec.for_binary_target() if binary else spec.for_continuous_target()
        else:
            spec = cv_select(grid, (x, y), self.cv_folds, seed)
        self.chosen[target] = spec
        return spec

    def regress(self, target, x_train, y_train, x_preds, binary, seed):
        mean = x_train.mean(axis=0)
        sd = x_train.std(axis=0)
        sd[sd < 1e-12] = 1.0
        z = lambda a: (a - mean) / sd
        xs = z(x_train)
        if binary:
            ys, y_mean, y_sd = y_train, 0.0, 1.0
        else:
            y_mean, y_sd = float(y_train.mean()), float(y_train.std()) or 1.0
            ys = (y_train - y_mean) / y_sd
        spec = self._spec_for(target, xs, ys, binary, seed)
        model = neurnet.train((xs, ys), replace(spec, init_seed=_derive_seed(spec.init_seed, seed)))
        return [y_mean + y_sd * neurnet.forward(model, z(xp)) for xp in x_preds]

    def tuned_on(self, tune: ObservationTable, plan: FitPlan, seed: int = 0) -> "DnnLearner":
        """Select one spec per target by CV on a separate tuning sample."""
        probe = DnnLearner(self.grid, self.cv_folds)
        probe.fit_predict(tune, tune.take(np.arange(min(tune.n, 2))), plan, seed)
        return DnnLearner(self.grid, self.cv_folds, dict(probe.chosen), self.name)


def _add_intercept(x):
    return np.column_stack([np.ones(len(x)), x])


def _logistic_fit(x, y):
    def objective(beta):
        z = x @ beta
        loss = np.mean(np.logaddexp(0.0, z) - y * z)
        grad = x.T @ (special.expit(z) - y) / len(y)
        return loss, grad

    res = optimize.minimize(objective, np.zeros(x.shape[1]), jac=True, method="L-BFGS-B",
                            options={"gtol": 1e-8, "maxiter": 10_000})
    return res.x


@dataclass
class LinearLearner(_Regressions):
    """Least squares for continuous targets, logistic regression for binary ones."""

    name: str = "linear"

    def regress(self, target, x_train, y_train, x_preds, binary, seed):
        xa = _add_intercept(x_train)
        if binary:
            beta = _logistic_fit(xa, y_train)
            return [special.expit(_add_intercept(xp) @ beta) for xp in x_preds]
        beta, *_ = np.linalg.lstsq(xa, y_train, rcond=None)
        return [_add_intercept(xp) @ beta for xp in x_preds]


@dataclass
class OracleLearner:
    """Returns the scenario's true nuisance values; ignores the training split."""

    oracle: OracleNuisance
    name: str = "oracle"

    def fit_predict(self, train, predict_on, plan, seed=0) -> NuisanceFit:
        if plan.mediator_kind is not MediatorKind.CONTINUOUS:
            raise ValueError("oracle learner supports the continuous-mediator plan only")
        return oracle_nuisance_fit(predict_on, self.oracle)


Learner = DnnLearner | LinearLearner | OracleLearner


def fit_nuisances(train: ObservationTable, predict_on: ObservationTable, kind,
                  plan: FitPlan, seed: int = 0) -> NuisanceFit:
    """Fit every nuisance of ``plan`` on ``train`` and evaluate it on ``predict_on``.

    Only the covariates and, where the plan needs them as features, the
    mediator of ``predict_on`` are read. Clipping bounds come from ``train``.
    """
    if train.n == 0:
        raise InsufficientData("empty training split")
    if np.all(train.d == 1) or np.all(train.d == 0):
        raise InsufficientData("a treatment arm is empty in the training split")
    raw = kind.fit_predict(train, predict_on, plan, seed)
    fit = clip_fit(raw, outcome_bounds(train.y))
    for name in ("a_x", "a_xm", "f_m_d0", "f_m_d1", "mu_d0", "mu_d1", "cross_mu"):
        v = getattr(fit, name)
        if v is not None and not np.all(np.isfinite(v)):
            raise PredictionNonFinite(f"{kind.name} learner produced non-finite {name}")
    return fit
