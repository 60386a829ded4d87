"""Command-line interface: ``cfbary {fit,predict,evaluate,sweep,synth,bench}``.

Exit codes: 0 success, 2 usage or schema error, 3 some rows could not be
predicted, 4 metrics could not be evaluated.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
import warnings
from dataclasses import replace

import numpy as np

from cfbary import bench
from cfbary.bench import fmt
from cfbary.io import atomic_write, read_table, to_dataset
from cfbary.metrics import (
    DEFAULT_GRID_POINTS,
    DEFAULT_MIN_PER_GROUP,
    DEFAULT_WINDOW_H,
    EvaluationError,
    evaluate,
    sweep_alpha,
    sweep_L,
)
from cfbary.ot1d import ContractError
from cfbary.partition import IngestionError
from cfbary.postprocess import FairModel, FitConfig, FitError, fit
from cfbary.synth import SynthConfig, fit_base_model, generate

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL, EXIT_EVAL = 0, 2, 3, 4


class CLIError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _kv(pairs) -> None:
    for k, v in pairs:
        if v is None:
            v = "none"
        elif isinstance(v, bool):
            v = str(v).lower()
        elif not isinstance(v, str):
            v = fmt(v)
        print(f"{k}={v}")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _L_arg(text: str):
    if text == "auto":
        return "auto"
    try:
        L = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'auto' or a positive integer") from None
    if L < 1:
        raise argparse.ArgumentTypeError("L must be >= 1")
    return L


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _fit_config(args) -> FitConfig:
    if args.alpha is not None and args.budget is not None:
        raise CLIError("--alpha and --budget are mutually exclusive")
    return FitConfig(
        L=args.L,
        alpha=args.alpha,
        budget=args.budget,
        seed=args.seed,
        min_cell=args.min_cell,
        probe_L=args.probe_L,
        split=args.split,
        interpolate=args.interpolate,
        delta_override=args.delta_floor,
    )


def _metric_kw(args) -> dict:
    return dict(grid_points=args.grid, window_h=args.window, min_per_group=args.min_per_group)


def _load(path, jsonl, **kw):
    return to_dataset(read_table(path, jsonl), **kw)


def cmd_fit(args) -> int:
    config = _fit_config(args)
    data, _ = _load(args.input, args.jsonl)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = fit(data, config)
    atomic_write(args.out, model.to_json())
    _kv([
        ("n", data.n),
        ("K", data.K),
        ("L", model.partition.L),
        ("l_star", model.l_star),
        ("delta_star", model.delta_star),
        ("u_hat_bb", model.u_hat_bb),
        ("alpha", model.alpha),
        ("m_hat", model.m_hat),
        ("lcdf_hat", model.lcdf_hat),
        ("degenerate_cells", model.n_degenerate),
        ("budget_feasible", model.budget_feasible),
    ])
    for w in caught:
        print("warning=budget_infeasible")
        print(f"warning: {w.message}", file=sys.stderr)
    return EXIT_OK


def cmd_predict(args) -> int:
    with open(args.model) as fh:
        try:
            model = FairModel.from_json(fh.read())
        except (ValueError, KeyError, TypeError) as exc:
            raise CLIError(f"{args.model}: not a valid model file ({exc})") from None
    table = read_table(args.input, args.jsonl)
    data, unseen = to_dataset(table, labels=model.labels, allow_unseen=True)
    pred = np.full(data.n, np.nan)
    ok = ~unseen
    if ok.any():
        pred[ok] = model.predict(data.v[ok], data.s[ok], data.score[ok], alpha=args.alpha)
    header = [h for h in table.header if h not in ("prediction", "error")] + ["prediction", "error"]
    keep = [table.header.index(h) for h in header[:-2]]
    rows = [
        [r[j] for j in keep] + (["", "unseen_group"] if bad else [fmt(p), ""])
        for r, p, bad in zip(table.rows, pred, unseen)
    ]
    atomic_write(args.out, _csv_text(header, rows))
    n_bad = int(unseen.sum())
    _kv([("rows", data.n), ("predicted", data.n - n_bad), ("errors", n_bad)])
    if n_bad:
        print(f"error: {n_bad} row(s) have a group not seen at fit time", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_evaluate(args) -> int:
    table = read_table(args.input, args.jsonl)
    if table.has("error"):
        j = table.header.index("error")
        keep = [i for i, r in enumerate(table.rows) if not r[j]]
        table = replace(table, rows=[table.rows[i] for i in keep], lines=[table.lines[i] for i in keep])
    column = args.column or ("prediction" if table.has("prediction") else "score")
    data, _ = to_dataset(table, score_column=column)
    report = evaluate(data, weighting=args.weighting, **_metric_kw(args))
    if report.rmse is None:
        print("notice: no y column, rmse omitted", file=sys.stderr)
    if args.out:
        atomic_write(args.out, report.to_json() + "\n")
    _kv([
        ("column", column),
        ("n_eval", report.n_eval),
        ("rmse", report.rmse),
        ("cf", report.cf),
        ("dp", report.dp),
        ("windows_used", report.windows_used),
    ])
    return EXIT_OK


def _synth_config(args, seed=None) -> SynthConfig:
    kind, K = ("multigroup", args.multigroup) if args.multigroup else ("binary", 2)
    return SynthConfig(
        n_train=args.n_train,
        n_test=args.n_test,
        K=K,
        eps_x=args.eps_x,
        eps_y=args.eps_y,
        seed=args.seed if seed is None else seed,
        kind=kind,
        v_noise=getattr(args, "v_noise", 0.0),
    )


def cmd_sweep(args) -> int:
    config = _fit_config(args)
    kw = _metric_kw(args)
    if args.mode == "L":
        values = args.L_values or [1, 2, 4, 8, 16, 32, 64]
        if any(L < 1 for L in values):
            raise CLIError("--L-values must be positive")
    else:
        values = args.alphas if args.alphas is not None else [0.0, 0.25, 0.5, 0.75, 1.0]
        if any(not 0.0 <= a <= 1.0 for a in values):
            raise CLIError("--alphas must lie in [0, 1]")

    if args.input is None:
        sc = _synth_config(args)
        if args.mode == "L":
            rows = bench.l_sweep_curve(sc, values, args.repeats, config, **kw)
            rows = [r for r in rows if r["series"] in (args.metric, "l_star")]
        else:
            rows = bench.alpha_curve(sc, values, args.repeats, config, **kw)
            rows = [r for r in rows if r["series"].endswith("_" + args.metric)]
    else:
        if args.test is None:
            raise CLIError("--test is required with an input file")
        train, _ = _load(args.input, args.jsonl)
        test, _ = _load(args.test, args.jsonl, labels=train.labels)
        if args.metric == "rmse" and test.y is None:
            raise CLIError("--metric rmse needs a y column in the test file")
        rows = []
        if args.mode == "L":
            res, l_star = sweep_L(train, test, values, seed=args.seed, config=config, **kw)
            bad = [r for r in res if r["error"]]
            if bad:
                print(f"warning: {len(bad)} L value(s) failed: {bad[0]['error']}", file=sys.stderr)
            for r in res:
                rows.append({"x": r["L"], "mean": r[args.metric], "lo": r[args.metric], "hi": r[args.metric],
                             "series": args.metric})
            if l_star is not None:
                rows.append({"x": l_star, "mean": l_star, "lo": l_star, "hi": l_star, "series": "l_star"})
        else:
            model = fit(train, replace(config, alpha=None, budget=None))
            for r in sweep_alpha(model, test, values, **kw):
                m = r[args.metric]
                rows.append({"x": r["alpha"], "mean": m, "lo": m, "hi": m, "series": args.metric})
    atomic_write(args.out, bench.curve_to_csv(rows))
    _kv([("mode", args.mode), ("rows", len(rows)), ("out", args.out)])
    return EXIT_OK


def _sample_csv(sample, score) -> str:
    header = ["v", "s", *sample.feature_names, "y", "score"]
    cols = [sample.v, sample.s, *sample.X.T, sample.y, score]
    rows = [[fmt(c[i]) if c is not sample.s else str(int(c[i])) for c in cols] for i in range(sample.n)]
    return _csv_text(header, rows)


def cmd_synth(args) -> int:
    sc = _synth_config(args)
    train = generate(sc, "train")
    test = generate(sc, "test")
    base = fit_base_model(train)
    atomic_write(args.train_out, _sample_csv(train, base.predict(train.base_inputs())))
    if args.test_out:
        atomic_write(args.test_out, _sample_csv(test, base.predict(test.base_inputs())))
    _kv([("kind", sc.kind), ("K", sc.K), ("n_train", sc.n_train), ("n_test", sc.n_test if args.test_out else 0),
         ("seed", sc.seed)])
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        methods = bench.parse_methods(args.methods)
    except ContractError as exc:
        raise CLIError(str(exc)) from None
    rows = bench.run_benchmark(_synth_config(args), methods, args.repeats, _fit_config(args),
                               timing=args.timing, **_metric_kw(args))
    atomic_write(args.out, bench.rows_to_csv(rows))
    summary = bench.summarize(rows)
    if args.summary:
        atomic_write(args.summary, bench.summary_to_csv(summary))
    for r in summary:
        if r["metric"] in ("rmse", "cf", "dp"):
            _kv([(f"{r['method']}.{r['metric']}", r["mean"])])
    failed = sum(1 for r in rows if r["error"])
    if failed:
        print(f"warning: {failed} row(s) recorded an error", file=sys.stderr)
    return EXIT_OK


def _add_fit_flags(p, with_value_flags=True):
    g = p.add_argument_group("post-processor")
    g.add_argument("--L", type=_L_arg, default="auto", help="interval count or 'auto' (default)")
    if with_value_flags:
        g.add_argument("--alpha", type=float, default=None, help="fixed relaxation in [0, 1]")
        g.add_argument("--budget", type=float, default=None, help="unfairness budget; alpha is calibrated")
    else:
        p.set_defaults(alpha=None, budget=None)
    g.add_argument("--min-cell", type=int, default=10)
    g.add_argument("--probe-L", type=int, default=10, help="probe cells for the Lipschitz estimate")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--split", action=argparse.BooleanOptionalAction, default=False,
                   help="separate quantile and CDF halves per cell")
    g.add_argument("--interpolate", action="store_true", help="piecewise linear quantile/CDF reads")
    g.add_argument("--delta-floor", type=float, default=None,
                   help="feasibility floor replacing the theoretical bound in budget calibration")


def _add_metric_flags(p):
    g = p.add_argument_group("metrics")
    g.add_argument("--grid", type=int, default=DEFAULT_GRID_POINTS, help="window centres on [0, 1]")
    g.add_argument("--window", type=float, default=DEFAULT_WINDOW_H, help="window half-width")
    g.add_argument("--min-per-group", type=int, default=DEFAULT_MIN_PER_GROUP)


def _add_synth_flags(p, n_train=1000, n_test=10000):
    g = p.add_argument_group("synthetic data")
    kind = g.add_mutually_exclusive_group()
    kind.add_argument("--binary", action="store_true", help="two-group generator (default)")
    kind.add_argument("--multigroup", type=int, metavar="K", default=None, help="K-group generator")
    g.add_argument("--n-train", type=int, default=n_train)
    g.add_argument("--n-test", type=int, default=n_test)
    g.add_argument("--eps-x", type=float, default=0.5)
    g.add_argument("--eps-y", type=float, default=0.01)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfbary", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a post-processor and write model JSON")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--jsonl", action="store_true", help="input is JSON lines")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="append fair predictions to a data file")
    p.add_argument("model")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=None, help="override the model's relaxation")
    p.add_argument("--jsonl", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="rmse, conditional and global unfairness")
    p.add_argument("input")
    p.add_argument("--column", default=None, help="prediction column (default: prediction, else score)")
    p.add_argument("--weighting", choices=("global", "uniform"), default="global")
    p.add_argument("--out", default=None, help="write the report as JSON")
    p.add_argument("--jsonl", action="store_true")
    _add_metric_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="unfairness/risk curves over L or alpha")
    p.add_argument("input", nargs="?", default=None, help="training file; omit for synthetic repeats")
    p.add_argument("--test", default=None)
    p.add_argument("--mode", choices=("L", "alpha"), required=True)
    p.add_argument("--L-values", type=_int_list, default=None)
    p.add_argument("--alphas", type=_float_list, default=None)
    p.add_argument("--metric", choices=("cf", "rmse", "dp"), default="cf")
    p.add_argument("--repeats", type=int, default=30, help="synthetic repeats")
    p.add_argument("--out", required=True)
    p.add_argument("--jsonl", action="store_true")
    _add_fit_flags(p, with_value_flags=False)
    _add_metric_flags(p)
    _add_synth_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="write synthetic train/test files with a base-model score")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", default=None)
    _add_synth_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="seeded method comparison on synthetic data")
    p.add_argument("--repeats", type=int, default=30)
    p.add_argument("--methods", default="base,fair_k,wfr,ours")
    p.add_argument("--timing", action="store_true", help="fill the fit_ms/predict_ms columns")
    p.add_argument("--v-noise", type=float, default=0.0, help="proxy perturbation half-width")
    p.add_argument("--out", required=True)
    p.add_argument("--summary", default=None, help="write mean and 99%% interval per method and metric")
    _add_fit_flags(p, with_value_flags=False)
    _add_metric_flags(p)
    _add_synth_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except EvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except (IngestionError, ContractError, FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
