"""Risk and unfairness metrics, plus the L and alpha sweeps."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from cfbary.ot1d import ContractError, EmpiricalDist, barycenter_quantiles, w2_squared
from cfbary.partition import Dataset, group_weights
from cfbary.postprocess import FairModel, FitConfig, fit

__all__ = [
    "EvaluationError",
    "MetricsReport",
    "rmse",
    "cf_unfairness",
    "dp_violation",
    "evaluate",
    "relative_metrics",
    "sweep_L",
    "sweep_alpha",
]

DEFAULT_GRID_POINTS = 50
DEFAULT_WINDOW_H = 0.05
DEFAULT_MIN_PER_GROUP = 10


class EvaluationError(ValueError):
    """A metric cannot be computed on the given records."""


def rmse(predictions, outcomes) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(outcomes, dtype=np.float64)
    if p.shape != y.shape or p.size == 0:
        raise ContractError("predictions and outcomes must be non-empty and equally long")
    return math.sqrt(float(np.mean((p - y) ** 2)))


def _spread_to_barycenter(dists: list[EmpiricalDist], w: np.ndarray) -> float:
    bary = barycenter_quantiles(dists, w)
    return sum(float(ws) * w2_squared(d, bary) for d, ws in zip(dists, w))


def _weights(data: Dataset, weighting: str) -> np.ndarray:
    if weighting == "global":
        return group_weights(data)
    if weighting == "uniform":
        return np.full(data.K, 1.0 / data.K)
    raise ContractError(f"unknown group weighting {weighting!r}")


def cf_unfairness(
    data: Dataset,
    grid_points: int = DEFAULT_GRID_POINTS,
    window_h: float = DEFAULT_WINDOW_H,
    min_per_group: int = DEFAULT_MIN_PER_GROUP,
    weighting: str = "global",
) -> tuple[float, int]:
    """Windowed estimate of the conditional unfairness of ``data.score``.

    For each centre ``v0`` of a uniform grid on [0, 1], records with
    ``|v - v0| <= h`` form a window; if every group has ``min_per_group``
    members there, the window contributes the weighted W2^2 spread of the
    group laws around their barycenter. Returns the mean over valid windows
    and how many windows were valid.
    """
    if not 0.0 < window_h <= 0.5:
        raise ContractError("window_h must lie in (0, 0.5]")
    if grid_points < 1:
        raise ContractError("grid_points must be >= 1")
    w = _weights(data, weighting)
    if np.any(w == 0):
        raise EvaluationError("every group needs at least one record")
    order = np.argsort(data.v, kind="stable")
    vs = data.v[order]
    ss = data.s[order]
    zs = data.score[order]
    centres = np.linspace(0.0, 1.0, grid_points) if grid_points > 1 else np.array([0.5])
    lo = np.searchsorted(vs, centres - window_h, side="left")
    hi = np.searchsorted(vs, centres + window_h, side="right")
    vals = []
    for a, b in zip(lo, hi):
        gs = ss[a:b]
        cnt = np.bincount(gs, minlength=data.K)
        if cnt.min() < min_per_group:
            continue
        z = zs[a:b]
        dists = [EmpiricalDist(z[gs == s]) for s in range(data.K)]
        vals.append(_spread_to_barycenter(dists, w))
    if not vals:
        raise EvaluationError(
            f"no window of half-width {window_h} has {min_per_group} records per group; "
            "increase the window or lower --min-per-group"
        )
    return float(np.mean(vals)), len(vals)


def dp_violation(data: Dataset) -> float:
    """Global parity gap: pairwise W2^2 for two groups, weighted spread otherwise."""
    cnt = np.bincount(data.s, minlength=data.K)
    if data.K == 0 or np.any(cnt == 0):
        missing = [data.labels[s] for s in np.flatnonzero(cnt == 0)]
        raise EvaluationError(f"group(s) without records: {missing}")
    dists = [EmpiricalDist(data.score[data.s == s]) for s in range(data.K)]
    if data.K == 1:
        return 0.0
    if data.K == 2:
        return w2_squared(dists[0], dists[1])
    return _spread_to_barycenter(dists, group_weights(data))


@dataclass(frozen=True)
class MetricsReport:
    rmse: float | None
    cf: float
    dp: float
    n_eval: int
    windows_used: int
    relative: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def evaluate(
    data: Dataset,
    predictions=None,
    grid_points: int = DEFAULT_GRID_POINTS,
    window_h: float = DEFAULT_WINDOW_H,
    min_per_group: int = DEFAULT_MIN_PER_GROUP,
    weighting: str = "global",
) -> MetricsReport:
    """Metrics of ``predictions`` (default: ``data.score``) on ``data``."""
    pred = data.score if predictions is None else np.asarray(predictions, dtype=np.float64)
    d = data.with_scores(pred)
    cf, used = cf_unfairness(d, grid_points, window_h, min_per_group, weighting)
    r = rmse(pred, data.y) if data.y is not None else None
    return MetricsReport(rmse=r, cf=cf, dp=dp_violation(d), n_eval=data.n, windows_used=used)


def relative_metrics(report: MetricsReport, base: MetricsReport) -> dict:
    """Method/base ratios (NaN where the base value is zero)."""
    def ratio(a, b):
        if a is None or b is None or b == 0:
            return float("nan")
        return a / b

    return {
        "rmse": ratio(report.rmse, base.rmse),
        "cf": ratio(report.cf, base.cf),
        "dp": ratio(report.dp, base.dp),
    }


def sweep_L(
    train: Dataset,
    test: Dataset,
    L_values: Sequence[int],
    seed: int = 0,
    config: FitConfig | None = None,
    **metric_kw,
) -> tuple[list[dict], int | None]:
    """Refit at each ``L`` and evaluate on ``test``.

    Returns one row per ``L`` (``L, cf, rmse, dp, windows_used, error``) and the
    plug-in ``L*`` for ``train`` (None if it cannot be estimated). A failing
    ``L`` yields a row with ``error`` set; the sweep continues.
    """
    base = FitConfig(seed=seed) if config is None else replace(config, seed=seed)
    rows = []
    l_star = None
    for L in L_values:
        if int(L) < 1:
            raise ContractError("L values must be positive")
        try:
            model = fit(train, replace(base, L=int(L)))
            if model.lcdf_hat is not None:
                l_star = model.l_star
            rep = evaluate(test, model.predict_dataset(test), **metric_kw)
            rows.append({"L": int(L), "cf": rep.cf, "rmse": rep.rmse, "dp": rep.dp, "windows_used": rep.windows_used, "error": ""})
        except (ValueError, ArithmeticError) as exc:
            rows.append({"L": int(L), "cf": float("nan"), "rmse": float("nan"), "dp": float("nan"), "windows_used": 0, "error": str(exc)})
    return rows, l_star


def sweep_alpha(model: FairModel, test: Dataset, alphas: Sequence[float], **metric_kw) -> list[dict]:
    """Metrics of the relaxed predictor at each ``alpha``; no refitting."""
    fair = model.fair_scores(test.v, test.s, test.score)
    rows = []
    for a in alphas:
        if not 0.0 <= a <= 1.0:
            raise ContractError("alphas must lie in [0, 1]")
        r = math.sqrt(a)
        rep = evaluate(test, r * test.score + (1.0 - r) * fair, **metric_kw)
        rows.append({"alpha": float(a), "cf": rep.cf, "rmse": rep.rmse, "dp": rep.dp})
    return rows
