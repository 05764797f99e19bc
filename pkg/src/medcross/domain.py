"""Core data model: observation tables, nuisance fits, scores and effect reports.

Everything here is immutable after construction. Arrays are stored as
read-only float64 numpy arrays so that tables can be shared freely between
folds, replicates and worker processes.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

Z_975 = 1.959964
PROPENSITY_CLIP = 0.01
OUTCOME_RANGE_PAD = 0.10


class MediatorKind(str, enum.Enum):
    BINARY = "binary"
    CONTINUOUS = "continuous"


class Effect(str, enum.Enum):
    TOTAL = "total"
    NDE0 = "nde0"
    NDE1 = "nde1"
    NIE0 = "nie0"
    NIE1 = "nie1"


PAIRS = ((0, 0), (0, 1), (1, 0), (1, 1))


class ValidationError(ValueError):
    """Base class for malformed observation tables."""


class NonBinaryTreatment(ValidationError):
    pass


class NonFiniteEntry(ValidationError):
    pass


class MediatorKindMismatch(ValidationError):
    pass


class MissingPhi(KeyError):
    pass


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if ndim == 2 and arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != ndim:
        raise ValidationError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ObservationTable:
    """Columnar sample of (X, D, M, Y).

    Construct directly for trusted data; pass through :func:`validate_table`
    before estimation.
    """

    x: np.ndarray
    d: np.ndarray
    m: np.ndarray
    y: np.ndarray
    mediator_kind: MediatorKind = MediatorKind.CONTINUOUS
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x, 2))
        for name in ("d", "m", "y"):
            object.__setattr__(self, name, _frozen(getattr(self, name), 1))
        object.__setattr__(self, "mediator_kind", MediatorKind(self.mediator_kind))
        n = self.x.shape[0]
        if not (len(self.d) == len(self.m) == len(self.y) == n):
            raise ValidationError("x, d, m and y must have the same number of rows")
        if not self.covariate_names:
            names = tuple(f"X{j + 1}" for j in range(self.p))
            object.__setattr__(self, "covariate_names", names)
        elif len(self.covariate_names) != self.p:
            raise ValidationError("covariate_names length does not match x")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def take(self, rows) -> "ObservationTable":
        rows = np.asarray(rows)
        return ObservationTable(
            self.x[rows], self.d[rows], self.m[rows], self.y[rows],
            self.mediator_kind, self.covariate_names,
        )

    def with_columns(self, **changes) -> "ObservationTable":
        cols = dict(x=self.x, d=self.d, m=self.m, y=self.y,
                    mediator_kind=self.mediator_kind,
                    covariate_names=self.covariate_names)
        cols.update(changes)
        return ObservationTable(**cols)


def validate_table(raw: ObservationTable, folds: int | None = None) -> ObservationTable:
    """Check every table invariant and return the table unchanged.

    Raises
    ------
    NonFiniteEntry
        A NaN or infinite value appears in any column.
    NonBinaryTreatment
        ``d`` contains a value other than 0 or 1.
    MediatorKindMismatch
        The table is tagged binary but ``m`` is not 0/1.
    ValidationError
        Empty table, or fewer than ``2 * folds`` rows.
    """
    if raw.n == 0:
        raise ValidationError("table is empty")
    for name in ("x", "d", "m", "y"):
        col = getattr(raw, name)
        if not np.all(np.isfinite(col)):
            raise NonFiniteEntry(f"column {name!r} contains NaN or infinite values")
    if not np.all((raw.d == 0) | (raw.d == 1)):
        bad = np.unique(raw.d[(raw.d != 0) & (raw.d != 1)])
        raise NonBinaryTreatment(f"treatment takes values outside {{0, 1}}: {bad[:5].tolist()}")
    if raw.mediator_kind is MediatorKind.BINARY and not np.all((raw.m == 0) | (raw.m == 1)):
        raise MediatorKindMismatch("mediator tagged binary but takes values outside {0, 1}")
    if folds is not None and raw.n < 2 * folds:
        raise ValidationError(f"need at least {2 * folds} rows for {folds} folds, got {raw.n}")
    return raw


def read_csv(path, mediator_kind=MediatorKind.CONTINUOUS) -> ObservationTable:
    """Read a table with columns ``D``, ``M``, ``Y`` plus covariates.

    Covariates are every other column, kept in file order.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    for col in ("D", "M", "Y"):
        if header.count(col) != 1:
            raise ValidationError(f"{path}: expected exactly one column named {col!r}")
    if any(len(r) != len(header) for r in rows):
        raise ValidationError(f"{path}: ragged rows")
    try:
        values = np.array([[float(v) for v in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    values = values.reshape(len(rows), len(header))
    idx = {h: i for i, h in enumerate(header)}
    cov = [i for i, h in enumerate(header) if h not in ("D", "M", "Y")]
    return ObservationTable(
        x=values[:, cov], d=values[:, idx["D"]], m=values[:, idx["M"]],
        y=values[:, idx["Y"]], mediator_kind=mediator_kind,
        covariate_names=tuple(header[i] for i in cov),
    )


def write_csv(table: ObservationTable, path) -> None:
    """Write ``X1..Xp, D, M, Y`` with round-trip float formatting."""
    header = list(table.covariate_names) + ["D", "M", "Y"]
    data = np.column_stack([table.x, table.d, table.m, table.y])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def outcome_bounds(y: np.ndarray, pad: float = OUTCOME_RANGE_PAD) -> tuple[float, float]:
    lo, hi = float(np.min(y)), float(np.max(y))
    span = hi - lo
    return lo - pad * span, hi + pad * span


@dataclass(frozen=True, eq=False)
class NuisanceFit:
    """Fitted nuisance values for a set of rows.

    ``mu_d0``/``mu_d1`` hold mu(X, d, M) at the observed mediator.
    ``cross_mu[:, d, d']`` holds E[mu(X, d, M) | X, D = d'].
    Exactly one of ``a_xm`` (continuous mediator) or the pair
    ``f_m_d0``/``f_m_d1`` (binary mediator, density at the observed M)
    is set.
    """

    a_x: np.ndarray
    mu_d0: np.ndarray
    mu_d1: np.ndarray
    cross_mu: np.ndarray
    a_xm: np.ndarray | None = None
    f_m_d0: np.ndarray | None = None
    f_m_d1: np.ndarray | None = None

    def __post_init__(self):
        for name in ("a_x", "mu_d0", "mu_d1", "a_xm", "f_m_d0", "f_m_d1"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, _frozen(v, 1))
        object.__setattr__(self, "cross_mu", _frozen(self.cross_mu, 3))
        n = len(self.a_x)
        if self.cross_mu.shape != (n, 2, 2):
            raise ValueError(f"cross_mu must have shape ({n}, 2, 2)")
        has_bayes = self.a_xm is not None
        has_density = self.f_m_d0 is not None and self.f_m_d1 is not None
        if has_bayes == has_density or (self.f_m_d0 is None) != (self.f_m_d1 is None):
            raise ValueError("set exactly one of a_xm or (f_m_d0, f_m_d1)")

    @property
    def n(self) -> int:
        return len(self.a_x)

    @property
    def mediator_kind(self) -> MediatorKind:
        return MediatorKind.CONTINUOUS if self.a_xm is not None else MediatorKind.BINARY

    def mu(self, d: int) -> np.ndarray:
        return self.mu_d1 if d == 1 else self.mu_d0

    def f_m(self, d: int) -> np.ndarray:
        return self.f_m_d1 if d == 1 else self.f_m_d0

    def take(self, rows) -> "NuisanceFit":
        rows = np.asarray(rows)
        pick = lambda v: None if v is None else v[rows]
        return NuisanceFit(
            self.a_x[rows], self.mu_d0[rows], self.mu_d1[rows], self.cross_mu[rows],
            pick(self.a_xm), pick(self.f_m_d0), pick(self.f_m_d1),
        )


def clip_fit(fit: NuisanceFit, y_bounds: tuple[float, float],
             c: float = PROPENSITY_CLIP) -> NuisanceFit:
    """Apply the positivity and boundedness clips. Idempotent."""
    lo, hi = y_bounds
    clip_p = lambda v: None if v is None else np.clip(v, c, 1.0 - c)
    return NuisanceFit(
        a_x=clip_p(fit.a_x),
        mu_d0=np.clip(fit.mu_d0, lo, hi),
        mu_d1=np.clip(fit.mu_d1, lo, hi),
        cross_mu=np.clip(fit.cross_mu, lo, hi),
        a_xm=clip_p(fit.a_xm),
        # binary-mediator masses are probabilities, so the same clip keeps them positive
        f_m_d0=clip_p(fit.f_m_d0),
        f_m_d1=clip_p(fit.f_m_d1),
    )


@dataclass(frozen=True, eq=False)
class PhiScores:
    """Per-observation scores for every (d, d') pair and for each arm.

    ``psi[(d, d')]`` estimates E[Y(d, M(d'))]; ``psi_total[d]`` estimates
    E[Y(d)]. ``nuisance_loss`` carries out-of-fold losses for diagnostics.
    """

    psi: Mapping[tuple[int, int], np.ndarray]
    psi_total: Mapping[int, np.ndarray]
    nuisance_loss: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(v) for v in list(self.psi.values()) + list(self.psi_total.values())}
        if len(lengths) > 1:
            raise ValueError("score vectors have different lengths")

    @property
    def n(self) -> int:
        return len(next(iter(self.psi.values())))

    @property
    def complete(self) -> bool:
        return set(self.psi) == set(PAIRS) and set(self.psi_total) == {0, 1}


def effect_arithmetic(phi_hat: Mapping[tuple[int, int], float]) -> dict[Effect, float]:
    """Turn potential-outcome means phi(d, d') into the five effects.

    >>> e = effect_arithmetic({(1, 1): 0.4, (0, 0): 0.0, (1, 0): 0.2, (0, 1): 0.2})
    >>> round(e[Effect.TOTAL], 12), round(e[Effect.NDE1], 12)
    (0.4, 0.2)
    """
    missing = [k for k in PAIRS if k not in phi_hat]
    if missing:
        raise MissingPhi(f"phi missing for {missing}")
    phi = {k: float(phi_hat[k]) for k in PAIRS}
    if not all(math.isfinite(v) for v in phi.values()):
        raise MissingPhi("phi values must be finite")
    return {
        Effect.TOTAL: phi[1, 1] - phi[0, 0],
        Effect.NDE0: phi[1, 0] - phi[0, 0],
        Effect.NDE1: phi[1, 1] - phi[0, 1],
        Effect.NIE0: phi[0, 1] - phi[0, 0],
        Effect.NIE1: phi[1, 1] - phi[1, 0],
    }


@dataclass(frozen=True)
class EffectReport:
    effect: Effect
    estimate: float
    variance: float
    ci_low: float
    ci_high: float
    n: int
    variance_floored: bool = False

    @classmethod
    def from_estimate(cls, effect, estimate, variance, n) -> "EffectReport":
        floored = variance < 0
        variance = max(float(variance), 0.0)
        half = Z_975 * math.sqrt(variance)
        return cls(Effect(effect), float(estimate), variance,
                   estimate - half, estimate + half, int(n), floored)

    @property
    def se(self) -> float:
        return math.sqrt(self.variance)

    def covers(self, truth: float) -> bool:
        return self.ci_low <= truth <= self.ci_high

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "se": self.se,
            "ci95": [self.ci_low, self.ci_high],
            "n": self.n,
            "warnings": ["variance estimate was negative and floored at 0"]
            if self.variance_floored else [],
        }


def reports_by_effect(reports: Sequence[EffectReport]) -> dict[Effect, EffectReport]:
    return {r.effect: r for r in reports}
