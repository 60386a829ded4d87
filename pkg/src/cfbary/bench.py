"""Seeded benchmark harness: methods x repeats on synthetic data, CSV output.

Repeat ``r`` uses seed ``config.seed + r`` for every stream it touches
(train data, test data, folds, proxy noise), so any row can be reproduced
alone with ``--seed <row seed> --repeats 1``.
"""
from __future__ import annotations

import csv
import io
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Iterable, Sequence

import numpy as np

from cfbary.metrics import evaluate, relative_metrics
from cfbary.ot1d import ContractError
from cfbary.postprocess import FitConfig, fit
from cfbary.rng import stream
from cfbary.synth import SynthConfig, baseline_fair_k, fit_base_model, generate

__all__ = [
    "CSV_HEADER",
    "SUMMARY_HEADER",
    "CURVE_HEADER",
    "parse_methods",
    "run_benchmark",
    "summarize",
    "rows_to_csv",
    "summary_to_csv",
    "curve_to_csv",
    "l_sweep_curve",
    "alpha_curve",
    "ci99",
]

CSV_HEADER = [
    "method", "seed", "n", "K", "L", "alpha", "rmse", "cf", "dp", "windows_used",
    "fit_ms", "predict_ms", "rel_rmse", "rel_cf", "rel_dp", "error",
]
SUMMARY_HEADER = ["method", "metric", "mean", "lo", "hi", "repeats"]
CURVE_HEADER = ["x", "mean", "lo", "hi", "series"]
BASE_METHODS = ("base", "fair_k", "wfr", "ours")
Z99 = 2.58


def parse_methods(methods: str | Iterable[str]) -> list[str]:
    """``"base,ours,ours_relaxed:0.1"`` -> validated method names."""
    items = methods.split(",") if isinstance(methods, str) else list(methods)
    out = []
    for m in (x.strip() for x in items):
        if not m:
            continue
        if m in BASE_METHODS:
            out.append(m)
        elif m.startswith("ours_relaxed:"):
            try:
                b = float(m.split(":", 1)[1])
            except ValueError:
                raise ContractError(f"bad budget in method {m!r}") from None
            if b < 0:
                raise ContractError(f"negative budget in method {m!r}")
            out.append(m)
        else:
            raise ContractError(f"unknown method {m!r}")
    if not out:
        raise ContractError("no methods given")
    return out


def fmt(x) -> str:
    """17 significant digits; empty for missing values."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return format(float(x), ".17g")


def _proxy(config: SynthConfig, sample, seed: int, purpose: str) -> np.ndarray:
    if config.v_noise <= 0:
        return sample.v
    rng = stream(seed, "perturb", 0 if purpose == "train" else 1)
    return np.clip(sample.v + rng.uniform(-config.v_noise, config.v_noise, sample.n), 0.0, 1.0)


def _one_repeat(config: SynthConfig, methods: Sequence[str], r: int, fit_config: FitConfig,
                timing: bool, metric_kw: dict) -> list[dict]:
    seed = config.seed + r
    train = generate(config, "train", seed)
    test = generate(config, "test", seed)
    base = fit_base_model(train)
    train_ds = train.to_dataset(base.predict(train.base_inputs()), v=_proxy(config, train, seed, "train"))
    test_ds = test.to_dataset(base.predict(test.base_inputs()), v=_proxy(config, test, seed, "test"))
    eval_ds = test.to_dataset(test_ds.score)  # metrics always use the clean proxy

    rows = []
    base_report = None
    for m in ["base"] + [x for x in methods if x != "base"]:
        row = {k: None for k in CSV_HEADER}
        row.update(method=m, seed=seed, n=config.n_train, K=config.K, error="")
        try:
            t0 = time.perf_counter()
            if m == "base":
                pred = test_ds.score
                t1 = time.perf_counter()
            elif m == "fair_k":
                fk = baseline_fair_k(train)
                t1 = time.perf_counter()
                pred = fk.predict(test.v[:, None])
            else:
                if m == "wfr":
                    cfg = replace(fit_config, L=1, alpha=None, budget=None, seed=seed)
                elif m == "ours":
                    cfg = replace(fit_config, alpha=None, budget=None, seed=seed)
                else:
                    cfg = replace(fit_config, alpha=None, budget=float(m.split(":", 1)[1]), seed=seed)
                with warnings.catch_warnings():
                    # an infeasible budget shows up as alpha = 0 in the row
                    warnings.simplefilter("ignore")
                    model = fit(train_ds, cfg)
                t1 = time.perf_counter()
                pred = model.predict_dataset(test_ds)
                row.update(L=model.partition.L, alpha=model.alpha)
            t2 = time.perf_counter()
            rep = evaluate(eval_ds, pred, **metric_kw)
            if m == "base":
                base_report = rep
            row.update(rmse=rep.rmse, cf=rep.cf, dp=rep.dp, windows_used=rep.windows_used)
            if timing:
                row.update(fit_ms=(t1 - t0) * 1e3, predict_ms=(t2 - t1) * 1e3)
            if base_report is not None:
                rel = relative_metrics(rep, base_report)
                row.update(rel_rmse=rel["rmse"], rel_cf=rel["cf"], rel_dp=rel["dp"])
        except Exception as exc:  # noqa: BLE001 - recorded per row, run continues
            row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        if m in methods:
            rows.append(row)
    return rows


def run_benchmark(
    config: SynthConfig,
    methods: Sequence[str] = BASE_METHODS,
    repeats: int = 30,
    fit_config: FitConfig | None = None,
    timing: bool = False,
    threads: int | None = None,
    **metric_kw,
) -> list[dict]:
    """Per-repeat, per-method metric rows, ordered by repeat then method.

    Timing columns stay empty unless ``timing`` is set, keeping the output a
    pure function of the arguments.
    """
    if repeats < 1:
        raise ContractError("repeats must be >= 1")
    methods = parse_methods(methods)
    fit_config = FitConfig() if fit_config is None else fit_config
    threads = threads or int(os.environ.get("CFBARY_THREADS", "1") or 1)
    job = lambda r: _one_repeat(config, methods, r, fit_config, timing, metric_kw)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            chunks = list(ex.map(job, range(repeats)))
    else:
        chunks = [job(r) for r in range(repeats)]
    return [row for chunk in chunks for row in chunk]


def ci99(values) -> tuple[float, float, float]:
    """Mean and normal 99% interval ``mean -/+ 2.58 sd / sqrt(R)``."""
    x = np.asarray([v for v in values if v is not None and not math.isnan(v)], dtype=np.float64)
    if x.size == 0:
        return float("nan"), float("nan"), float("nan")
    m = float(x.mean())
    half = Z99 * float(x.std(ddof=1)) / math.sqrt(x.size) if x.size > 1 else 0.0
    return m, m - half, m + half


def summarize(rows: list[dict]) -> list[dict]:
    out = []
    methods = list(dict.fromkeys(r["method"] for r in rows))
    for m in methods:
        mine = [r for r in rows if r["method"] == m and not r["error"]]
        for metric in ("rmse", "cf", "dp", "rel_rmse", "rel_cf", "rel_dp"):
            mean, lo, hi = ci99([r[metric] for r in mine])
            out.append({"method": m, "metric": metric, "mean": mean, "lo": lo, "hi": hi, "repeats": len(mine)})
    return out


def _to_csv(rows: list[dict], header: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([r[k] if isinstance(r[k], str) else fmt(r[k]) for k in header])
    return buf.getvalue()


def rows_to_csv(rows: list[dict]) -> str:
    return _to_csv(rows, CSV_HEADER)


def summary_to_csv(rows: list[dict]) -> str:
    return _to_csv(rows, SUMMARY_HEADER)


def curve_to_csv(rows: list[dict]) -> str:
    return _to_csv(rows, CURVE_HEADER)


def _datasets(config: SynthConfig, seed: int):
    train = generate(config, "train", seed)
    test = generate(config, "test", seed)
    base = fit_base_model(train)
    return (
        train.to_dataset(base.predict(train.base_inputs())),
        test.to_dataset(base.predict(test.base_inputs())),
    )


def l_sweep_curve(config: SynthConfig, L_values: Sequence[int], repeats: int,
                  fit_config: FitConfig | None = None, **metric_kw) -> list[dict]:
    """Mean/CI of CF, RMSE and DP against ``L`` over repeats, plus an ``l_star`` marker row."""
    from cfbary.metrics import sweep_L

    per_L: dict[int, dict[str, list]] = {int(L): {"cf": [], "rmse": [], "dp": []} for L in L_values}
    stars = []
    for r in range(repeats):
        seed = config.seed + r
        train, test = _datasets(config, seed)
        rows, l_star = sweep_L(train, test, L_values, seed=seed, config=fit_config, **metric_kw)
        if l_star is not None:
            stars.append(l_star)
        for row in rows:
            for series in ("cf", "rmse", "dp"):
                per_L[row["L"]][series].append(row[series])
    out = []
    for series in ("cf", "rmse", "dp"):
        for L, vals in per_L.items():
            m, lo, hi = ci99(vals[series])
            out.append({"x": L, "mean": m, "lo": lo, "hi": hi, "series": series})
    if stars:
        m, lo, hi = ci99(stars)
        out.append({"x": float(np.median(stars)), "mean": m, "lo": lo, "hi": hi, "series": "l_star"})
    return out


def alpha_curve(config: SynthConfig, alphas: Sequence[float], repeats: int,
                fit_config: FitConfig | None = None, **metric_kw) -> list[dict]:
    """Risk/unfairness frontier over ``alpha`` for ours (plug-in L) and WFR (L=1)."""
    from cfbary.metrics import sweep_alpha

    fit_config = FitConfig() if fit_config is None else fit_config
    acc: dict[tuple[str, float], list] = {}
    for r in range(repeats):
        seed = config.seed + r
        train, test = _datasets(config, seed)
        for name, L in (("ours", fit_config.L), ("wfr", 1)):
            model = fit(train, replace(fit_config, L=L, alpha=None, budget=None, seed=seed))
            for row in sweep_alpha(model, test, alphas, **metric_kw):
                for metric in ("cf", "rmse", "dp"):
                    acc.setdefault((f"{name}_{metric}", row["alpha"]), []).append(row[metric])
    out = []
    for (series, a), vals in acc.items():
        m, lo, hi = ci99(vals)
        out.append({"x": a, "mean": m, "lo": lo, "hi": hi, "series": series})
    return out
