"""Command-line entry point.

Exit codes: 0 success, 2 configuration/usage error, 3 data error,
4 numerical failure (diverged training, singular least squares).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from .baselines import NumericalError
from .checkpoint import load_checkpoint, save_checkpoint
from .data import DataError, dump_adjacency, dump_series, load_adjacency, load_series
from .diffcore import ShapeError
from .evaluate import denormalize, evaluate, predict_windows, write_predictions
from .synthetic import seasonal_benchmark
from .train import TrainingDiverged

log = logging.getLogger("colagnn")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4

# named flags -> config keys
FLAG_KEYS = {
    "data": "data.series", "adj": "data.adjacency", "horizon": "experiment.horizon",
    "window": "experiment.window", "seed": "train.seed", "trials": "train.trials",
    "method": "experiment.method", "ablation": "experiment.ablation", "out": "experiment.out",
    "horizons": "experiment.horizons", "methods": "experiment.methods",
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with [data] [model] [train] [experiment] sections")
    for flag in FLAG_KEYS:
        p.add_argument(f"--{flag}", dest=flag)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="colagnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model for one horizon and seed")
    _add_common(p)

    p = sub.add_parser("benchmark", help="method x horizon x seed grid")
    _add_common(p)

    p = sub.add_parser("sweep", help="sensitivity sweep over window or graph-dim")
    _add_common(p)
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma list or start:stop:step (inclusive)")

    p = sub.add_parser("export-attention", help="write raw attention, gate and fused matrices")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--end", help="week label (or 0-based index) of the window's last week; default: last")
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", help="moving-window predictions from checkpoints")
    p.add_argument("--checkpoint", required=True, action="append")
    p.add_argument("--data", required=True)
    p.add_argument("--horizon", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("dump", help="re-emit series/adjacency CSVs in canonical form")
    p.add_argument("--data")
    p.add_argument("--adj")
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="write the phase-lagged synthetic benchmark CSVs")
    p.add_argument("--out", required=True)
    p.add_argument("--locations", type=int, default=10)
    p.add_argument("--weeks", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    return parser


def resolve_config(args: argparse.Namespace, extra: list[str]) -> ex.RunConfig:
    cfg = ex.RunConfig.from_file(args.config) if getattr(args, "config", None) else ex.RunConfig()
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg.set(key, value)
    it = iter(extra)
    for token in it:
        if not token.startswith("--"):
            raise ex.ConfigError(f"unexpected argument {token!r}")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            value = next(it, None)
            if value is None:
                raise ex.ConfigError(f"flag {token} needs a value")
        cfg.set(key, value)
    return cfg.validate()


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False,
                               default=_json_default) + "\n", encoding="utf-8")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def _clean(doc):
    """nan -> None so the JSON stays standard."""
    if isinstance(doc, dict):
        return {str(k): _clean(v) for k, v in doc.items()}
    if isinstance(doc, list):
        return [_clean(v) for v in doc]
    if isinstance(doc, float) and doc != doc:
        return None
    return doc


def _snapshot(cfg: ex.RunConfig, hashes: dict, command: str, **extra) -> dict:
    return {"command": command, "config": cfg.resolved(), "data": hashes, **extra}


# --- commands -------------------------------------------------------------------

def cmd_train(cfg: ex.RunConfig) -> int:
    ds, adj, hashes = ex.load_inputs(cfg)
    method, h, seed, W = cfg.experiment.method, cfg.experiment.horizon, cfg.train.seed, cfg.experiment.window
    out = Path(cfg.experiment.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / f"config_h{h}.resolved.json", _snapshot(cfg, hashes, "train", seed=seed, horizon=h))
    data = ex.prepare_for(method, ds, W, h, cfg, cfg.experiment.arma_q)
    log_path = out / f"train_log_h{h}.csv"
    model, report = ex.build_and_fit(method, data, adj, cfg, seed, W, log_path=log_path)
    save_checkpoint(out / f"checkpoint_h{h}.npz", model, data.normalizer, ds.locations, h,
                    extra={"seed": seed, "method": method, "best_epoch": report.best_epoch if report else None})
    ev = evaluate(model, data.test, data.normalizer)
    write_predictions(out / f"predictions_h{h}.csv", data.test, ev, ds.locations)
    summary = {"horizon": h, "seed": seed, "method": method, "test": ev.metrics()}
    if report:
        summary.update(best_epoch=report.best_epoch, stopped_epoch=report.stopped_epoch,
                       best_val_l1=report.best_val)
    _write_json(out / f"metrics_h{h}.json", _clean(summary))
    print(json.dumps(_clean(summary), sort_keys=True))
    return 0


def cmd_benchmark(cfg: ex.RunConfig) -> int:
    ds, adj, hashes = ex.load_inputs(cfg)
    methods, horizons, seeds = cfg.methods(), cfg.horizons(), cfg.seeds()
    out = Path(cfg.experiment.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.resolved.json", _snapshot(cfg, hashes, "benchmark", seeds=seeds))
    results = ex.run_benchmark(ds, adj, cfg, methods, horizons, seeds)
    _write_json(out / "benchmark.json", _clean(results))
    for method, cells in results.items():
        _write_json(out / f"metrics_{method}.json", _clean(cells))
    table = "\n\n".join(ex.format_table(results, m, horizons) for m in ("rmse", "pcc"))
    (out / "table.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


def parse_values(text: str) -> list[int]:
    if ":" in text:
        try:
            parts = [int(p) for p in text.split(":")]
        except ValueError:
            raise ex.ConfigError(f"--values: expected integers, got {text!r}") from None
        if len(parts) != 3 or parts[2] <= 0:
            raise ex.ConfigError(f"--values range must be start:stop:step, got {text!r}")
        return list(range(parts[0], parts[1] + 1, parts[2]))
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ex.ConfigError(f"--values: expected integers, got {text!r}") from None


def cmd_sweep(cfg: ex.RunConfig, param: str, values_text: str) -> int:
    values = ex.sweep_values(param, parse_values(values_text))
    ds, adj, hashes = ex.load_inputs(cfg)
    method, h, seeds = cfg.experiment.method, cfg.experiment.horizon, cfg.seeds()
    out = Path(cfg.experiment.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.resolved.json", _snapshot(cfg, hashes, "sweep", param=param, values=values,
                                                        seeds=seeds))
    rows = {}
    for v in values:
        vcfg = ex.apply_sweep_value(cfg, param, v)
        try:
            rows[v] = {h: ex.run_cell(method, ds, adj, vcfg, h, seeds)}
        except Exception as exc:  # noqa: BLE001
            rows[v] = {"error": f"{type(exc).__name__}: {exc}"}
    doc = {"param": param, "method": method, "horizon": h, "results": rows}
    _write_json(out / f"sweep_{param}.json", _clean(doc))
    for v, cell in rows.items():
        m = cell.get(h, {}).get("rmse", {}).get("mean") if "error" not in cell else None
        print(f"{param}={v}\trmse={m}")
    return 0


def _write_matrix(path: Path, names, mat: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["", *names])
        for name, row in zip(names, mat):
            w.writerow([name, *(repr(float(v)) for v in row)])


def read_matrix(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in r[1:]] for r in rows[1:]])


def cmd_export_attention(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    model = ck.model
    if getattr(model, "config", None) is None or not model.config.use_location_attention:
        print("export-attention: this checkpoint has no location attention "
              "(trained without it, or not a Cola-GNN model); nothing to export", file=sys.stderr)
        return EXIT_CONFIG
    ds = load_series(args.data)
    if tuple(ds.locations) != ck.locations:
        raise DataError(f"series locations {list(ds.locations)} do not match checkpoint {list(ck.locations)}")
    if args.end is None:
        end = ds.n_weeks - 1
    elif args.end in ds.weeks:
        end = ds.weeks.index(args.end)
    else:
        try:
            end = int(args.end)
        except ValueError:
            raise DataError(f"--end {args.end!r} is neither a week label nor an index") from None
    start = end - model.window + 1
    if start < 0 or end >= ds.n_weeks:
        raise DataError(f"window ending at week index {end} needs {model.window} weeks of history")
    window = ck.normalizer.apply(ds.values[:, start:end + 1])
    attn = model.attention(window[None])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = ck.locations
    _write_matrix(out / "attention_raw.csv", names, attn.raw[0])
    _write_matrix(out / "attention_gate.csv", names, attn.gate[0])
    _write_matrix(out / "attention_fused.csv", names, attn.fused[0])
    _write_matrix(out / "adjacency_normalized.csv", names, model.adjacency)
    print(f"wrote attention for window {ds.weeks[start]}..{ds.weeks[end]} to {out}")
    return 0


def moving_window_predictions(ck, ds) -> list[tuple[str, str, float | None, float]]:
    """``(week, location, y_true, y_pred)`` for every window position of ``ds``.

    Targets beyond the series end get the label ``<last week>+k`` and no truth.
    """
    model, h = ck.model, ck.horizon
    width = ex.input_width(model)
    if ds.n_weeks < width:
        raise DataError(f"series has {ds.n_weeks} weeks; the model needs {width}")
    norm = ck.normalizer.apply(ds.values)
    n_pos = ds.n_weeks - width + 1
    inputs = np.stack([norm[:, s:s + width] for s in range(n_pos)])
    preds = denormalize(predict_windows(model, inputs), ck.normalizer)
    rows = []
    for s in range(n_pos):
        t = s + width + h - 1
        if t < ds.n_weeks:
            label, truth = ds.weeks[t], ds.values[:, t]
        else:
            label, truth = f"{ds.weeks[-1]}+{t - ds.n_weeks + 1}", None
        for i, loc in enumerate(ds.locations):
            rows.append((label, loc, None if truth is None else float(truth[i]), float(preds[s, i])))
    return rows


def cmd_predict(args) -> int:
    ds = load_series(args.data)
    cks = [load_checkpoint(p) for p in args.checkpoint]
    for path, ck in zip(args.checkpoint, cks):
        if ck.locations != tuple(ds.locations):
            raise DataError(f"{path}: locations do not match the series")
    if args.horizon is not None:
        cks = [ck for ck in cks if ck.horizon == args.horizon]
        if not cks:
            raise ex.ConfigError(f"no checkpoint was trained for horizon {args.horizon}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for ck in cks:
        with open(out / f"predictions_h{ck.horizon}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["week", "location", "y_true", "y_pred"])
            for week, loc, yt, yp in moving_window_predictions(ck, ds):
                w.writerow([week, loc, "" if yt is None else repr(yt), repr(yp)])
    if len(cks) > 1:
        # one fixed final window, one prediction per trained horizon
        with open(out / "horizon_curve.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["horizon", "location", "y_pred"])
            for ck in sorted(cks, key=lambda c: c.horizon):
                width = ex.input_width(ck.model)
                window = ck.normalizer.apply(ds.values[:, -width:])
                pred = denormalize(predict_windows(ck.model, window[None]), ck.normalizer)[0]
                for loc, v in zip(ds.locations, pred):
                    w.writerow([ck.horizon, loc, repr(float(v))])
    print(f"wrote predictions for horizons {[ck.horizon for ck in cks]} to {out}")
    return 0


def cmd_dump(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not args.data:
        raise ex.ConfigError("dump needs --data")
    ds = load_series(args.data)
    dump_series(ds, out / "series.csv")
    if args.adj:
        dump_adjacency(load_adjacency(args.adj, ds.locations), out / "adjacency.csv")
    return 0


def cmd_synth(args) -> int:
    bench = seasonal_benchmark(args.locations, args.weeks, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_series(bench.series, out / "series.csv")
    dump_adjacency(bench.adjacency, out / "adjacency.csv")
    print(f"wrote {out / 'series.csv'} and {out / 'adjacency.csv'}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("train", "benchmark", "sweep"):
            cfg = resolve_config(args, extra)
            if args.command == "train":
                return cmd_train(cfg)
            if args.command == "benchmark":
                return cmd_benchmark(cfg)
            return cmd_sweep(cfg, args.param, args.values)
        if extra:
            raise ex.ConfigError(f"unrecognized arguments: {' '.join(extra)}")
        return {"export-attention": cmd_export_attention, "predict": cmd_predict,
                "dump": cmd_dump, "synth": cmd_synth}[args.command](args)
    except ex.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ShapeError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, NumericalError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
