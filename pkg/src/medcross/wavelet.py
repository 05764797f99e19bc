"""Daubechies-6 scaling function and the wavelet-built Hölder test function.

The scaling function is tabulated on a dyadic grid by the cascade algorithm
and evaluated between grid points by linear interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SUPPORT = 5
DEFAULT_RESOLUTION = 12
DEFAULT_LEVELS = (0, 3, 6, 9, 10, 16)

# Two-scale coefficients phi(t) = sum_k h_k phi(2t - k), 15 significant digits
# (the orthonormal db3 low-pass filter times sqrt(2)).
D6_FILTER = np.array([
    0.470467207784164,
    1.14111691583144,
    0.650365000526232,
    -0.190934415568327,
    -0.120832208310396,
    0.0498174997368838,
])


class ResolutionOutOfRange(ValueError):
    pass


def _normalized_filter() -> np.ndarray:
    return D6_FILTER * (2.0 / D6_FILTER.sum())


def _integer_samples(h: np.ndarray) -> np.ndarray:
    """phi at 0..5: the eigenvector of the refinement operator with eigenvalue 1."""
    inner = np.arange(1, SUPPORT)
    a = np.zeros((len(inner), len(inner)))
    for r, j in enumerate(inner):
        for c, i in enumerate(inner):
            k = 2 * j - i
            if 0 <= k < len(h):
                a[r, c] = h[k]
    w, v = np.linalg.eig(a)
    vec = np.real(v[:, np.argmin(np.abs(w - 1.0))])
    vec = vec / vec.sum()
    return np.concatenate([[0.0], vec, [0.0]])


@dataclass(frozen=True, eq=False)
class ScalingTable:
    values: np.ndarray
    resolution: int

    @property
    def step(self) -> float:
        return 2.0 ** -self.resolution

    @property
    def grid(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.step


def build_scaling_table(resolution: int = DEFAULT_RESOLUTION) -> ScalingTable:
    """Tabulate the D6 scaling function on [0, 5] with spacing ``2**-resolution``.

    The refinement is seeded with the exact values at the integers, so every
    grid sample is the exact dyadic value up to rounding.
    """
    if not 4 <= resolution <= 20:
        raise ResolutionOutOfRange(f"resolution must lie in [4, 20], got {resolution}")
    h = _normalized_filter()
    vals = _integer_samples(h)
    for i in range(resolution):
        stride = 2 ** i
        new = np.zeros(2 * SUPPORT * stride + 1)
        for k, hk in enumerate(h):
            new[k * stride:k * stride + len(vals)] += hk * vals
        vals = new
    vals[0] = vals[-1] = 0.0
    vals.setflags(write=False)
    return ScalingTable(vals, resolution)


def eval_scaling(table: ScalingTable, t):
    """Linear interpolation of the tabulated scaling function; 0 off [0, 5]."""
    t = np.asarray(t, dtype=np.float64)
    pos = t * 2.0 ** table.resolution
    inside = (t > 0) & (t < SUPPORT)
    pos = np.where(inside, pos, 0.0)
    i = np.minimum(np.floor(pos).astype(np.int64), len(table.values) - 2)
    frac = pos - i
    out = table.values[i] * (1.0 - frac) + table.values[i + 1] * frac
    out = np.where(inside, out, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class HolderSpec:
    """Parameters of the multi-level test function.

    ``normalized`` selects the L2-normalised dilation ``2**(j/2) phi(2**j x - l)``
    instead of the bare ``phi(2**j x - l)``.
    """

    alpha: float
    levels: tuple[int, ...] = DEFAULT_LEVELS
    coeff_exponent: float = 0.25
    normalized: bool = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        levels = tuple(sorted(int(j) for j in self.levels))
        if not levels:
            raise ValueError("levels must be nonempty")
        object.__setattr__(self, "levels", levels)

    def level_weight(self, j: int) -> float:
        w = 2.0 ** (-j * (self.alpha + self.coeff_exponent))
        return w * 2.0 ** (j / 2) if self.normalized else w


def eta(x, spec: HolderSpec, table: ScalingTable):
    """Sum over levels j and shifts l of ``2**(-j(alpha + 0.25)) w_{j,l}(x)``.

    For each level only the five shifts whose support window contains
    ``2**j x`` are visited; every other term is exactly zero.
    """
    x = np.asarray(x, dtype=np.float64)
    total = np.zeros_like(x)
    for j in spec.levels:
        t = x * 2.0 ** j
        base = np.floor(t)
        level = np.zeros_like(x)
        for k in range(SUPPORT):
            # shift l = base - k puts the argument at t - base + k in [k, k + 1)
            level += eval_scaling(table, t - base + k)
        total += spec.level_weight(j) * level
    return float(total) if total.ndim == 0 else total
