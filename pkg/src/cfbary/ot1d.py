"""One-dimensional optimal transport over empirical distributions.

Everything here works on sorted samples. Quantile functions are the
left-continuous generalized inverse of the right-continuous step CDF, so
distances and barycenters are exact integrals over the merged probability
breakpoints, not approximations on a grid.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from cfbary._backend import kernels

__all__ = [
    "ContractError",
    "EmpiricalDist",
    "QuantileTable",
    "cdf_eval",
    "quantile_eval",
    "w2_squared",
    "w2_to_table",
    "barycenter_quantiles",
    "merged_rank_grid",
    "transport_to_barycenter",
    "w2_squared_bruteforce",
    "ks_distance",
]

BRUTEFORCE_MAX = 8


class ContractError(ValueError):
    """An argument violates a documented precondition."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def rank_grid(n: int) -> np.ndarray:
    """Right ends ``i/n`` of the probability pieces of an n-point sample."""
    return np.arange(1, n + 1, dtype=np.float64) / n


@dataclass(frozen=True, eq=False)
class EmpiricalDist:
    """Sorted, immutable multiset of finite scores."""

    values: np.ndarray
    _grid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64).ravel()
        if vals.size == 0:
            raise ContractError("EmpiricalDist needs at least one value")
        if not np.all(np.isfinite(vals)):
            raise ContractError("EmpiricalDist values must be finite")
        vals.sort(kind="stable")
        object.__setattr__(self, "values", _frozen(vals))
        object.__setattr__(self, "_grid", _frozen(rank_grid(vals.size)))

    @classmethod
    def from_sorted(cls, values: np.ndarray) -> "EmpiricalDist":
        """Wrap an already sorted float64 array without re-sorting it."""
        obj = object.__new__(cls)
        vals = np.ascontiguousarray(values, dtype=np.float64)
        if vals.size == 0:
            raise ContractError("EmpiricalDist needs at least one value")
        object.__setattr__(obj, "values", _frozen(vals))
        object.__setattr__(obj, "_grid", _frozen(rank_grid(vals.size)))
        return obj

    @property
    def count(self) -> int:
        return int(self.values.size)

    @property
    def grid(self) -> np.ndarray:
        return self._grid

    def as_table(self) -> "QuantileTable":
        return QuantileTable.from_arrays(self._grid, self.values)

    def __len__(self) -> int:
        return self.count

    def __repr__(self) -> str:
        return f"EmpiricalDist(count={self.count}, min={self.values[0]:g}, max={self.values[-1]:g})"


@dataclass(frozen=True, eq=False)
class QuantileTable:
    """Step quantile function: value ``q[k]`` on the piece ``(grid[k-1], grid[k]]``.

    With ``interpolate=True`` the table is read piecewise linearly through
    the piece midpoints instead (opt-in; the step convention is the default).
    """

    grid: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        g = np.array(self.grid, dtype=np.float64).ravel()
        q = np.array(self.q, dtype=np.float64).ravel()
        if g.size == 0 or g.size != q.size:
            raise ContractError("grid and q must be non-empty and aligned")
        if g[0] <= 0.0 or g[-1] > 1.0 or np.any(np.diff(g) <= 0):
            raise ContractError("grid must be strictly increasing in (0, 1]")
        if np.any(np.diff(q) < 0):
            raise ContractError("quantile values must be non-decreasing")
        object.__setattr__(self, "grid", _frozen(g))
        object.__setattr__(self, "q", _frozen(q))

    @classmethod
    def from_arrays(cls, grid: np.ndarray, q: np.ndarray) -> "QuantileTable":
        """Trusted constructor: skips validation (inputs already checked)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "grid", _frozen(np.ascontiguousarray(grid, dtype=np.float64)))
        object.__setattr__(obj, "q", _frozen(np.ascontiguousarray(q, dtype=np.float64)))
        return obj

    def __call__(self, u, interpolate: bool = False):
        u_arr = np.asarray(u, dtype=np.float64)
        if interpolate:
            # piecewise linear through the piece midpoints, flat beyond the ends
            out = np.interp(u_arr, self.midpoints, self.q)
        else:
            idx = np.searchsorted(self.grid, u_arr, side="left")
            out = self.q[np.minimum(idx, self.grid.size - 1)]
        return float(out) if out.ndim == 0 else out

    @property
    def midpoints(self) -> np.ndarray:
        return (self.grid + np.concatenate(([0.0], self.grid[:-1]))) / 2.0

    def __len__(self) -> int:
        return int(self.grid.size)


def cdf_eval(dist: EmpiricalDist, t):
    """Fraction of sample values ``<= t`` (right-continuous step CDF)."""
    c = np.searchsorted(dist.values, t, side="right")
    out = c / dist.count
    return float(out) if np.ndim(out) == 0 else out


def quantile_eval(dist: EmpiricalDist, u):
    """``inf{y : F(y) >= u}``; ``u = 0`` returns the sample minimum."""
    u_arr = np.asarray(u, dtype=np.float64)
    if np.any((u_arr < 0) | (u_arr > 1)):
        raise ContractError("quantile level must lie in [0, 1]")
    idx = np.searchsorted(dist.grid, u_arr, side="left")
    out = dist.values[np.minimum(idx, dist.count - 1)]
    return float(out) if out.ndim == 0 else out


def _as_steps(x) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(x, EmpiricalDist):
        return x.grid, x.values
    if isinstance(x, QuantileTable):
        return x.grid, x.q
    raise TypeError(f"expected EmpiricalDist or QuantileTable, got {type(x).__name__}")


def w2_squared(a, b) -> float:
    """Squared W2 distance, integrated exactly over merged breakpoints.

    Accepts EmpiricalDist or QuantileTable for either argument (a table whose
    grid ends at 1 is a discrete law with masses given by its grid steps).
    """
    ga, qa = _as_steps(a)
    gb, qb = _as_steps(b)
    if ga[-1] != 1.0 or gb[-1] != 1.0:
        raise ContractError("W2 needs quantile tables covering (0, 1]")
    return max(float(kernels.w2_steps(ga, qa, gb, qb)), 0.0)


w2_to_table = w2_squared


def merged_rank_grid(counts: Sequence[int]) -> np.ndarray:
    """Deduplicated union of ``{i/N}`` over all sample sizes ``N``."""
    counts = [int(c) for c in counts]
    if len(counts) == 1:
        return rank_grid(counts[0])
    return np.unique(np.concatenate([rank_grid(c) for c in counts]))


def barycenter_quantiles(
    dists: Sequence[EmpiricalDist],
    weights: Sequence[float],
    grid: np.ndarray | None = None,
) -> QuantileTable:
    """Weighted sum of the input quantile functions, tabulated on ``grid``.

    The default grid is the merged rank grid of all inputs, on which the
    table is the exact barycenter (not an interpolation of it).
    """
    w = np.asarray(weights, dtype=np.float64)
    if len(dists) == 0 or w.shape != (len(dists),):
        raise ContractError("need one weight per distribution")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ContractError(f"weights must be non-negative and sum to 1 (got {w.sum()!r})")
    if grid is None:
        g = merged_rank_grid([d.count for d in dists])
    else:
        g = np.asarray(grid, dtype=np.float64)
        if g.size == 0 or g[0] <= 0 or g[-1] > 1 or np.any(np.diff(g) <= 0):
            raise ContractError("grid must be strictly increasing in (0, 1]")
    # reference plus weighted offsets: identical inputs reproduce their quantiles exactly
    ref = quantile_eval(dists[0], g)
    q = ref.copy()
    for d, ws in zip(dists[1:], w[1:]):
        q += ws * (quantile_eval(d, g) - ref)
    # weighted sums of non-decreasing arrays are non-decreasing up to rounding
    np.maximum.accumulate(q, out=q)
    return QuantileTable.from_arrays(g, q)


def transport_to_barycenter(source: EmpiricalDist, bary: QuantileTable, z, interpolate: bool = False):
    """Push ``z`` through the source CDF and then through the barycenter quantile.

    Step mode: a CDF value of 0 (``z`` below the source sample) maps to the
    first table entry. Interpolated mode: the percentile is the linear
    interpolation of ``(x_(i), (i - 1/2)/n)`` and the table is read linearly
    between piece midpoints. Both are non-decreasing in ``z``.
    """
    scalar = np.ndim(z) == 0
    z_arr = np.ascontiguousarray(np.atleast_1d(z), dtype=np.float64)
    if interpolate:
        u = np.interp(z_arr, source.values, (np.arange(source.count) + 0.5) / source.count)
        out = bary(u, interpolate=True)
    else:
        out = kernels.transport(source.values, bary.grid, bary.q, z_arr)
    return float(out[0]) if scalar else out


def ks_distance(a: EmpiricalDist, b: EmpiricalDist) -> float:
    """``sup_t |F_a(t) - F_b(t)|``, attained at a sample point."""
    pts = np.concatenate([a.values, b.values])
    return float(np.max(np.abs(cdf_eval(a, pts) - cdf_eval(b, pts))))


@lru_cache(maxsize=None)
def _permutations(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.intp)


def w2_squared_bruteforce(a: EmpiricalDist, b: EmpiricalDist) -> float:
    """Testing oracle: minimum coupling cost without using sortedness.

    Equal sizes enumerate every permutation. Unequal sizes replicate each
    atom up to the common multiple of the sizes, which turns uniform-mass
    transport into an assignment problem solved exactly.
    """
    na, nb = a.count, b.count
    if na > BRUTEFORCE_MAX or nb > BRUTEFORCE_MAX:
        raise ContractError(f"brute force limited to {BRUTEFORCE_MAX} points per side")
    # shuffle so the oracle never benefits from the sorted storage order
    xa = a.values[::-1].copy()
    xb = b.values.copy()
    if na == nb:
        perms = _permutations(na)
        costs = ((xa[None, :] - xb[perms]) ** 2).sum(axis=1)
        return float(costs.min() / na)
    from scipy.optimize import linear_sum_assignment

    m = math.lcm(na, nb)
    ra = np.repeat(xa, m // na)
    rb = np.repeat(xb, m // nb)
    cost = (ra[:, None] - rb[None, :]) ** 2
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / m)
