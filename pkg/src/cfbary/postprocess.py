"""Interval-wise barycenter post-processing of black-box regression scores.

Within each proxy interval, a score is ranked against its group's CDF fold
and mapped to the barycenter of the groups' quantile folds. The relaxed
predictor mixes the raw score back in with weight ``sqrt(alpha)``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from cfbary import __version__
from cfbary.ot1d import (
    ContractError,
    EmpiricalDist,
    QuantileTable,
    barycenter_quantiles,
    transport_to_barycenter,
    w2_squared,
)
from cfbary.partition import (
    Dataset,
    Partition,
    assign,
    cell_counts,
    group_weights,
    split_folds,
)

__all__ = [
    "FitError",
    "FitConfig",
    "GroupFit",
    "CellModel",
    "FairModel",
    "estimate_lcdf",
    "select_l_star",
    "compute_delta_star",
    "calibrate_alpha",
    "empirical_unfairness_bb",
    "fit",
    "predict",
]

LCDF_FLOOR = 1e-6
LCDF_MIN_SAMPLES = 10
FORMAT_VERSION = 1


class FitError(ValueError):
    """The data cannot support the requested fit."""


@dataclass(frozen=True)
class FitConfig:
    """Post-processor settings.

    ``L`` is an interval count or ``"auto"`` for the plug-in rule. Give at
    most one of ``alpha`` (fixed relaxation) and ``budget`` (unfairness budget
    from which alpha is calibrated); neither means ``alpha = 0``.
    ``delta_override`` replaces the theoretical bound as the feasibility floor
    when calibrating from a budget. By default each cell's whole sample feeds
    both the quantile and the CDF estimates; ``split=True`` uses two disjoint
    seeded halves instead.
    """

    L: int | str = "auto"
    alpha: float | None = None
    budget: float | None = None
    seed: int = 0
    min_cell: int = 10
    probe_L: int = 10
    grid_size: int = 100
    split: bool = False
    interpolate: bool = False
    delta_override: float | None = None

    def __post_init__(self):
        if self.alpha is not None and self.budget is not None:
            raise ContractError("give either alpha or budget, not both")
        if self.alpha is not None and not 0.0 <= self.alpha <= 1.0:
            raise ContractError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.budget is not None and self.budget < 0:
            raise ContractError("budget must be non-negative")
        if self.L != "auto" and (not isinstance(self.L, (int, np.integer)) or isinstance(self.L, bool) or self.L < 1):
            raise ContractError(f"L must be 'auto' or a positive integer, got {self.L!r}")
        if self.min_cell < 1 or self.probe_L < 1 or self.grid_size < 2:
            raise ContractError("min_cell, probe_L must be >= 1 and grid_size >= 2")


@dataclass(frozen=True, eq=False)
class GroupFit:
    quantile_fold: EmpiricalDist
    cdf_fold: EmpiricalDist
    source_cell: int


@dataclass(frozen=True, eq=False)
class CellModel:
    groups: tuple[GroupFit, ...]
    bary: QuantileTable
    degenerate: bool

    def per_group_quantile(self, s: int) -> QuantileTable:
        return self.groups[s].quantile_fold.as_table()


@dataclass(frozen=True, eq=False)
class FairModel:
    config: FitConfig
    labels: tuple[str, ...]
    partition: Partition
    weights: np.ndarray
    cells: tuple[CellModel, ...]
    alpha: float
    m_hat: float
    lcdf_hat: float | None
    l_star: int
    delta_star: float | None
    u_hat_bb: float | None
    seed: int
    budget_feasible: bool | None = None

    @property
    def K(self) -> int:
        return len(self.labels)

    @property
    def n_degenerate(self) -> int:
        return sum(c.degenerate for c in self.cells)

    def fair_scores(self, v, s, score) -> np.ndarray:
        """Fully fair (alpha = 0) predictions, vectorized."""
        v, s, score = np.broadcast_arrays(
            np.asarray(v, dtype=np.float64), np.asarray(s, dtype=np.int64), np.asarray(score, dtype=np.float64)
        )
        shape = score.shape
        v, s, score = v.ravel(), s.ravel(), score.ravel()
        if np.any((s < 0) | (s >= self.K)):
            raise ContractError("unknown group code")
        if np.any(~((v >= 0) & (v <= 1))):
            raise ContractError("proxy v outside [0, 1]")
        z = np.clip(score, -self.m_hat, self.m_hat)
        out = np.empty(z.shape, dtype=np.float64)
        key = self.partition.cell_index(v) * self.K + s
        order = np.argsort(key, kind="stable")
        bounds = np.searchsorted(key[order], np.arange(self.partition.L * self.K + 1))
        for k in np.flatnonzero(np.diff(bounds)):
            cell, grp = divmod(int(k), self.K)
            idx = order[bounds[k]:bounds[k + 1]]
            cm = self.cells[cell]
            out[idx] = transport_to_barycenter(
                cm.groups[grp].cdf_fold, cm.bary, z[idx], interpolate=self.config.interpolate
            )
        return out.reshape(shape)

    def predict(self, v, s, score, alpha: float | None = None) -> np.ndarray:
        a = self.alpha if alpha is None else float(alpha)
        if not 0.0 <= a <= 1.0:
            raise ContractError(f"alpha must lie in [0, 1], got {a}")
        score = np.asarray(score, dtype=np.float64)
        fair = self.fair_scores(v, s, score)
        r = math.sqrt(a)
        return r * score + (1.0 - r) * fair

    def predict_dataset(self, data: Dataset, alpha: float | None = None) -> np.ndarray:
        return self.predict(data.v, data.s, data.score, alpha=alpha)

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        return {
            "format": "cfbary.FairModel",
            "version": FORMAT_VERSION,
            "package_version": __version__,
            "config": cfg,
            "labels": list(self.labels),
            "L": self.partition.L,
            "weights": self.weights.tolist(),
            "alpha": self.alpha,
            "m_hat": self.m_hat,
            "lcdf_hat": self.lcdf_hat,
            "l_star": self.l_star,
            "delta_star": self.delta_star,
            "u_hat_bb": self.u_hat_bb,
            "seed": self.seed,
            "budget_feasible": self.budget_feasible,
            "cells": [
                {
                    "degenerate": c.degenerate,
                    "bary_grid": c.bary.grid.tolist(),
                    "bary_q": c.bary.q.tolist(),
                    "groups": [
                        {
                            "source_cell": g.source_cell,
                            "quantile_fold": g.quantile_fold.values.tolist(),
                            "cdf_fold": g.cdf_fold.values.tolist(),
                        }
                        for g in c.groups
                    ],
                }
                for c in self.cells
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "FairModel":
        if d.get("format") != "cfbary.FairModel":
            raise ValueError("not a cfbary model document")
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        cells = tuple(
            CellModel(
                groups=tuple(
                    GroupFit(
                        quantile_fold=EmpiricalDist.from_sorted(np.array(g["quantile_fold"], dtype=np.float64)),
                        cdf_fold=EmpiricalDist.from_sorted(np.array(g["cdf_fold"], dtype=np.float64)),
                        source_cell=int(g["source_cell"]),
                    )
                    for g in c["groups"]
                ),
                bary=QuantileTable.from_arrays(np.array(c["bary_grid"]), np.array(c["bary_q"])),
                degenerate=bool(c["degenerate"]),
            )
            for c in d["cells"]
        )
        return cls(
            config=FitConfig(**d["config"]),
            labels=tuple(d["labels"]),
            partition=Partition(int(d["L"])),
            weights=np.array(d["weights"], dtype=np.float64),
            cells=cells,
            alpha=float(d["alpha"]),
            m_hat=float(d["m_hat"]),
            lcdf_hat=d["lcdf_hat"],
            l_star=int(d["l_star"]),
            delta_star=d["delta_star"],
            u_hat_bb=d["u_hat_bb"],
            seed=int(d["seed"]),
            budget_feasible=d.get("budget_feasible"),
        )

    @classmethod
    def from_json(cls, text: str) -> "FairModel":
        return cls.from_dict(json.loads(text))


def predict(model: FairModel, v, s, score, alpha: float | None = None):
    """``sqrt(a) * score + (1 - sqrt(a)) * fair(score)`` for the cell of ``v``."""
    out = model.predict(v, s, score, alpha=alpha)
    return float(out) if np.ndim(out) == 0 else out


def _sorted_blocks(values: np.ndarray, cells) -> list[np.ndarray]:
    """Sorted value array for each (cell, group) block of an assignment."""
    nblocks = cells.starts.size - 1
    sizes = np.diff(cells.starts)
    block_of = np.repeat(np.arange(nblocks), sizes)
    vals = values[cells.order]
    srt = vals[np.lexsort((vals, block_of))]
    return [srt[cells.starts[k]:cells.starts[k + 1]] for k in range(nblocks)]


def _nearest_valid(valid: np.ndarray, cell: int) -> int | None:
    """Index of the closest True entry, ties to the lower index."""
    cand = np.flatnonzero(valid)
    if cand.size == 0:
        return None
    dist = np.abs(cand - cell)
    return int(cand[np.argmin(dist)])  # argmin returns the first (lowest) on ties


def estimate_lcdf(data: Dataset, probe_L: int = 10, grid_size: int = 100, m_hat: float | None = None) -> float:
    """Finite-difference estimate of the Lipschitz constant of ``v -> F(. | v, s)``.

    Largest CDF gap between adjacent probe cells (over groups and a uniform
    threshold grid on ``[-M, M]``) divided by the cell spacing ``1/probe_L``.
    Pairs where either cell has fewer than 10 samples are skipped.
    """
    if data.n < 2 * data.K * probe_L:
        raise ContractError(f"need n >= 2*K*probe_L = {2 * data.K * probe_L} records, got {data.n}")
    m = float(np.max(np.abs(data.score))) if m_hat is None else float(m_hat)
    t = np.linspace(-m, m, grid_size)
    cells = assign(Partition(probe_L), data)
    blocks = _sorted_blocks(data.score, cells)
    best = -1.0
    for s in range(data.K):
        F = np.full((probe_L, grid_size), np.nan)
        for c in range(probe_L):
            b = blocks[c * data.K + s]
            if b.size >= LCDF_MIN_SAMPLES:
                F[c] = np.searchsorted(b, t, side="right") / b.size
        gaps = np.abs(np.diff(F, axis=0))
        ok = ~np.isnan(gaps[:, 0])
        if ok.any():
            best = max(best, float(np.max(gaps[ok])) * probe_L)
    if best < 0:
        raise FitError(f"every adjacent probe-cell pair has < {LCDF_MIN_SAMPLES} samples; use a smaller probe_L")
    return max(best, LCDF_FLOOR)


def select_l_star(n: int, K: int, lcdf_hat: float, min_cell: int = 10) -> int:
    """``floor((8 Lcdf^2 n / (K ln(2Kn)))^(1/3))``, capped so cells keep ``min_cell`` per group."""
    if n < 2 or K < 1 or not lcdf_hat > 0:
        raise ContractError("need n >= 2, K >= 1, lcdf_hat > 0")
    raw = (8.0 * lcdf_hat ** 2 * n / (K * math.log(2 * K * n))) ** (1.0 / 3.0)
    cap = n // (K * min_cell)
    return max(1, min(math.floor(raw), cap))


def compute_delta_star(n: int, K: int, lcdf_hat: float, m_hat: float) -> float:
    """High-probability unfairness bound ``40 M^2 (Lcdf K ln 2K)^(1/3) (ln n / n)^(1/3)``."""
    if n < 2:
        raise ContractError("need n >= 2")
    c = 40.0 * m_hat ** 2 * (lcdf_hat * K * math.log(2 * K)) ** (1.0 / 3.0)
    return c * (math.log(n) / n) ** (1.0 / 3.0)


def calibrate_alpha(budget: float, delta: float, u_hat: float) -> tuple[float, bool]:
    """Relaxation for a budget; returns ``(alpha, feasible)``.

    ``alpha = 0`` when the floor ``delta`` already meets or exceeds the
    budget, else ``min(1, ((B - delta) / (2 U))^2)``.
    """
    if delta >= budget:
        return 0.0, False
    if u_hat <= 0.0:
        return 1.0, True
    return min(1.0, ((budget - delta) / (2.0 * u_hat)) ** 2), True


def _borrow_sources(blocks, L, K, min_count) -> list[list[int]]:
    """Source cell per (cell, group): itself if it has ``min_count`` records,
    else the nearest cell that does."""
    sizes = np.array([[blocks[c * K + s].size for s in range(K)] for c in range(L)])
    sources = [[c] * K for c in range(L)]
    for s in range(K):
        valid = sizes[:, s] >= min_count
        for c in range(L):
            src = c if valid[c] else _nearest_valid(valid, c)
            if src is None:
                raise FitError(
                    f"group index {s} has fewer than {min_count} records in every cell; "
                    "use fewer intervals" + (" or disable the fold split" if min_count > 1 else "")
                )
            sources[c][s] = src
    return sources


def _unfairness_from_blocks(blocks, p_hat, L, K, w) -> float:
    sources = _borrow_sources(blocks, L, K, 1)
    total = 0.0
    for c in range(L):
        if p_hat[c] == 0:
            continue
        dists = [EmpiricalDist.from_sorted(blocks[sources[c][s] * K + s]) for s in range(K)]
        bary = barycenter_quantiles(dists, w)
        total += p_hat[c] * sum(w[s] * w2_squared(dists[s], bary) for s in range(K))
    return float(total)


def empirical_unfairness_bb(data: Dataset, partition: Partition, weights: Sequence[float] | None = None) -> float:
    """``sum_l sum_s p_l w_s W2^2(mu_{l,s}, bary_l)`` on whole (unsplit) cells.

    Empty cells carry no mass. A group missing from an occupied cell uses the
    sample of its nearest occupied cell.
    """
    w = group_weights(data) if weights is None else np.asarray(weights, dtype=np.float64)
    cells = assign(partition, data)
    blocks = _sorted_blocks(data.score, cells)
    return _unfairness_from_blocks(blocks, cell_counts(cells).p_hat, partition.L, data.K, w)


def fit(data: Dataset, config: FitConfig | None = None, **overrides) -> FairModel:
    """Fit the post-processor on calibration records.

    Keyword overrides are applied to ``config`` (e.g. ``fit(data, L=1)``).
    """
    config = FitConfig() if config is None else config
    if overrides:
        config = replace(config, **overrides)
    n, K = data.n, data.K
    if n == 0:
        raise FitError("no records")
    gcount = np.bincount(data.s, minlength=K)
    missing = [data.labels[s] for s in range(K) if gcount[s] == 0]
    if missing:
        raise FitError(f"group(s) absent from calibration data: {missing}")
    w = gcount / n
    m_hat = float(np.max(np.abs(data.score)))

    lcdf = None
    try:
        lcdf = estimate_lcdf(data, config.probe_L, config.grid_size, m_hat)
    except (ContractError, FitError):
        if config.L == "auto" or (config.budget is not None and config.delta_override is None):
            raise
    L = select_l_star(n, K, lcdf, config.min_cell) if config.L == "auto" else int(config.L)
    l_star = select_l_star(n, K, lcdf, config.min_cell) if lcdf is not None and n >= 2 else L
    delta = compute_delta_star(n, K, lcdf, m_hat) if lcdf is not None and n >= 2 else None

    partition = Partition(L)
    cells = assign(partition, data)
    full_blocks = _sorted_blocks(data.score, cells)
    if config.split:
        f0, f1 = split_folds(cells, config.seed)
        qblocks = _sorted_blocks(data.score, f0)
        cblocks = _sorted_blocks(data.score, f1)
        min_count = 2
    else:
        qblocks = cblocks = full_blocks
        min_count = 1
    sources = _borrow_sources(full_blocks, L, K, min_count)

    cell_models = []
    cache: dict[int, GroupFit] = {}
    for c in range(L):
        groups = []
        for s in range(K):
            k = sources[c][s] * K + s
            if k not in cache:
                cache[k] = GroupFit(
                    quantile_fold=EmpiricalDist.from_sorted(qblocks[k]),
                    cdf_fold=EmpiricalDist.from_sorted(cblocks[k]),
                    source_cell=sources[c][s],
                )
            groups.append(cache[k])
        bary = barycenter_quantiles([g.quantile_fold for g in groups], w)
        degenerate = any(g.source_cell != c for g in groups)
        cell_models.append(CellModel(groups=tuple(groups), bary=bary, degenerate=degenerate))

    u_hat = _unfairness_from_blocks(full_blocks, cell_counts(cells).p_hat, L, K, w)
    feasible = None
    if config.budget is not None:
        floor = config.delta_override if config.delta_override is not None else delta
        alpha, feasible = calibrate_alpha(config.budget, floor, u_hat)
        if not feasible:
            warnings.warn(
                f"budget {config.budget:g} does not exceed the unfairness floor {floor:g}; using alpha=0",
                stacklevel=2,
            )
    else:
        alpha = 0.0 if config.alpha is None else float(config.alpha)

    return FairModel(
        config=config,
        labels=data.labels,
        partition=partition,
        weights=w,
        cells=tuple(cell_models),
        alpha=float(alpha),
        m_hat=m_hat,
        lcdf_hat=lcdf,
        l_star=int(l_star),
        delta_star=delta,
        u_hat_bb=u_hat,
        seed=config.seed,
        budget_feasible=feasible,
    )
