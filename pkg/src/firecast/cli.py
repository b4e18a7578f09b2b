"""Single-binary pipeline CLI.

Subcommands mirror the pipeline stages: ``build`` (raw inputs -> cube),
``synth`` (generated cube), ``extract`` (cube -> shards), ``climatology``,
``train-ref`` / ``predict-ref``, ``eval``, and ``render``. Every run writes a
``run_config.json`` with the fully resolved arguments next to its outputs;
all machine-readable output is JSON. Errors land on stderr as one JSON
object and a nonzero exit code.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .climatology import ClimatologyBaseline
from .dataset import DEFAULT_LEADS, SplitSpec, extract_dataset, load_dataset_manifest
from .evaluate import evaluate_climatology, evaluate_prediction_shards
from .grid import GeoGrid, PatchGridSpec, TimeAxis
from .ingest import build_cube
from .metrics import MetricUndefinedError, write_pr_curve_csv
from .model import load_model, predict_to_shards, save_model, train_on_shards
from .render import RenderSpec, assemble_global_field, load_palette, render_map, render_pair
from .shards import read_shard
from .store import ZarrStore
from .synth import WorldConfig, generate_world
from .variables import (
    DEFAULT_INPUT_CHANNELS,
    DEFAULT_TARGET_VARIABLE,
    CubeManifest,
    default_registry,
    load_manifest,
)


class CliError(Exception):
    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = failures or []


def _parse_years(text):
    """Year set syntax: '2002-2017', '2018', or '2001,2003,2005'."""
    years = set()
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            years.update(range(int(lo), int(hi) + 1))
        elif part:
            years.add(int(part))
    return frozenset(years)


def _parse_leads(text):
    return tuple(int(p) for p in str(text).split(",") if p.strip())


def _write_run_config(out_path, subcommand, args):
    resolved = {k: v for k, v in vars(args).items() if k != "func" and not callable(v)}
    for k, v in list(resolved.items()):
        if isinstance(v, frozenset):
            resolved[k] = sorted(v)
        elif isinstance(v, Path):
            resolved[k] = str(v)
    doc = {"subcommand": subcommand, "version": __version__, "args": resolved}
    out_path = Path(out_path)
    name = f"run_config_{subcommand.replace('-', '_')}.json"
    if out_path.suffix:  # file output: sidecar next to it
        cfg = out_path.with_name(out_path.name + ".run.json")
    else:
        out_path.mkdir(parents=True, exist_ok=True)
        cfg = out_path / name
    cfg.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _lead_dirs(data_path):
    """[(lead, dir)] for a dataset root or a single lead directory."""
    data_path = Path(data_path)
    if (data_path / "manifest.json").exists():
        manifest = load_dataset_manifest(data_path)
        return [(manifest["lead_steps"], data_path)]
    found = []
    for child in sorted(data_path.glob("lead_*")):
        if (child / "manifest.json").exists():
            found.append((load_dataset_manifest(child)["lead_steps"], child))
    if not found:
        raise CliError(f"{data_path} holds no dataset manifest")
    return found


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args):
    config = WorldConfig(
        seed=args.seed,
        grid=GeoGrid.small(args.n_lat),
        years=args.years,
        target_positive_rate=args.positive_rate,
        predictability_decay=args.decay,
        neighborhood_weight=args.neighborhood_weight,
    )
    report = generate_world(config, args.store)
    _write_run_config(Path(args.store), "synth", args)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_build(args):
    with open(args.inputs, encoding="utf-8") as fh:
        inputs = json.load(fh)
    registry = default_registry()
    unknown = [name for name in inputs if name not in registry]
    if unknown:
        raise CliError(f"inputs reference unknown variables: {unknown}")
    names = list(registry) if args.full_registry else [n for n in registry if n in inputs]
    manifest = CubeManifest(
        variables=tuple(registry[n] for n in names),
        axis=TimeAxis(args.start_year, args.end_year),
        grid=GeoGrid.small(args.n_lat) if args.n_lat != 720 else GeoGrid(),
    )
    report = build_cube(manifest, inputs, args.store, ingest_report_path=args.report)
    _write_run_config(Path(args.store), "build", args)
    print(json.dumps(report, indent=2, sort_keys=True))
    failures = [n for n, r in report["variables"].items() if r["status"] != "ok"]
    if failures:
        raise CliError(f"{len(failures)} variable(s) failed", failures=failures)
    return 0


def cmd_extract(args):
    split_spec = None
    if args.train_years or args.val_years or args.test_years:
        if not (args.train_years and args.val_years and args.test_years):
            raise CliError("give all of --train-years/--val-years/--test-years or none")
        split_spec = SplitSpec(
            _parse_years(args.train_years), _parse_years(args.val_years), _parse_years(args.test_years)
        )
    channels = tuple(args.channels.split(",")) if args.channels else DEFAULT_INPUT_CHANNELS
    manifests = extract_dataset(
        args.store,
        args.out,
        leads=_parse_leads(args.leads),
        channels=channels,
        target_variable=args.target,
        split_spec=split_spec,
        patch_spec=PatchGridSpec(patch_px=args.patch_px),
        shard_size=args.shard_size,
        include_invalid=args.include_invalid,
    )
    _write_run_config(Path(args.out), "extract", args)
    summary = [
        {"lead_steps": m["lead_steps"], "splits": {s: m["splits"][s]["samples"] for s in m["splits"]}}
        for m in manifests
    ]
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_climatology(args):
    store = ZarrStore.open(args.store)
    cube = load_manifest(store)
    if args.fit_years:
        fit_years = sorted(_parse_years(args.fit_years))
    else:
        split = SplitSpec.for_axis(cube.axis)
        fit_years = sorted(split.train_years | (split.val_years if args.fit_through_val else set()))
    baseline = ClimatologyBaseline.fit_from_store(store, args.target, fit_years)
    out = args.out or args.store
    baseline.save_to_store(out)
    _write_run_config(Path(out), "climatology", args)
    print(json.dumps({"fit_years": fit_years, "table_array": "climatology", "store": str(out)}, indent=2))
    return 0


def cmd_train_ref(args):
    targets = _lead_dirs(args.data)
    out = Path(args.out)
    single = len(targets) == 1 and out.suffix == ".json"
    if not single:
        out.mkdir(parents=True, exist_ok=True)
    results = []
    for lead, lead_dir in targets:
        model, history = train_on_shards(
            lead_dir,
            hidden_units=args.hidden_units,
            learning_rate=args.learning_rate,
            batch_size=args.batch_size,
            epochs=args.epochs,
            seed=args.seed,
            pos_weight=args.pos_weight,
        )
        path = out if single else out / f"model_lead_{lead}.json"
        save_model(model, path, lead_dir=lead_dir)
        results.append({"lead_steps": lead, "model": str(path), "best_epoch": model.best_epoch_,
                        "final_val_loss": history[-1].get("val_loss")})
    _write_run_config(out if not single else out.parent, "train-ref", args)
    print(json.dumps(results, indent=2, sort_keys=True))
    return 0


def cmd_predict_ref(args):
    targets = _lead_dirs(args.data)
    out = Path(args.out)
    splits = tuple(args.splits.split(","))
    results = []
    for lead, lead_dir in targets:
        model_path = Path(args.model)
        if model_path.is_dir():
            model_path = model_path / f"model_lead_{lead}.json"
        model = load_model(model_path)
        pred_dir = out if len(targets) == 1 else out / f"lead_{lead}"
        predict_to_shards(model, lead_dir, pred_dir, splits=splits)
        results.append({"lead_steps": lead, "out": str(pred_dir)})
    _write_run_config(out, "predict-ref", args)
    print(json.dumps(results, indent=2, sort_keys=True))
    return 0


def cmd_eval(args):
    if bool(args.preds) == bool(args.climatology):
        raise CliError("give exactly one of --preds or --climatology")
    targets = _lead_dirs(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for lead, lead_dir in targets:
        try:
            if args.preds:
                pred_dir = Path(args.preds)
                if not (pred_dir / "manifest.json").exists():
                    pred_dir = pred_dir / f"lead_{lead}"
                acc = evaluate_prediction_shards(
                    lead_dir, pred_dir, split=args.split, n_bins=args.bins, workers=args.workers
                )
                mode = "predictions"
            else:
                acc = evaluate_climatology(
                    lead_dir, args.climatology, split=args.split, n_bins=args.bins, workers=args.workers
                )
                mode = "climatology"
            report = acc.finalize()
        except MetricUndefinedError as exc:
            raise CliError(f"lead {lead}: {exc}") from exc
        doc = {"lead_steps": lead, "split": args.split, "scores": mode, **report.to_dict()}
        path = out / f"report_lead_{lead}_{mode}.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        if args.pr_curve:
            write_pr_curve_csv(acc, out / f"pr_curve_lead_{lead}_{mode}.csv")
        reports.append(doc)
    _write_run_config(out, "eval", args)
    print(json.dumps(reports, indent=2, sort_keys=True))
    return 0


def _render_spec(args):
    palette = load_palette(args.palette) if args.palette else None
    kwargs = {"missing_threshold": args.threshold, "scale": args.scale}
    if palette:
        kwargs["palette"] = palette
    return RenderSpec(**kwargs)


def cmd_render(args):
    spec = _render_spec(args)
    date = dt.date.fromisoformat(args.date)
    if args.store:
        store = ZarrStore.open(args.store)
        cube = load_manifest(store)
        step = cube.axis.date_to_step(date)
        field = store.open_array(args.var).read_region(
            (step, 0, 0), (1, cube.grid.n_lat, cube.grid.n_lon)
        )[0].astype(np.float64)
        render_map(field, spec, args.out, grid=cube.grid)
    else:
        if not (args.preds and args.data):
            raise CliError("render needs either --store/--var or --preds/--data")
        lead, lead_dir = _lead_dirs(args.data)[0]
        manifest = load_dataset_manifest(lead_dir)
        axis = TimeAxis(**manifest["time_axis"])
        step = axis.date_to_step(date)
        grid_shape = (manifest["grid"]["n_lat"], manifest["grid"]["n_lon"])
        pred_dir = Path(args.preds)
        if not (pred_dir / "manifest.json").exists():
            pred_dir = pred_dir / f"lead_{lead}"
        with open(pred_dir / "manifest.json", encoding="utf-8") as fh:
            pred_manifest = json.load(fh)
        pred_arrays = [read_shard(pred_dir / n) for n in pred_manifest["splits"][args.split]["shards"]]
        data_arrays = [read_shard(lead_dir / n) for n in manifest["splits"][args.split]["shards"]]
        for pred, data in zip(pred_arrays, data_arrays):
            pred["valid"] = data["valid"]
        pred_field = assemble_global_field(pred_arrays, "preds", step, grid_shape)
        if args.pair:
            target_field = assemble_global_field(data_arrays, "targets", step, grid_shape)
            render_pair(pred_field, target_field, spec, args.out)
        else:
            render_map(pred_field, spec, args.out)
    _write_run_config(Path(args.out), "render", args)
    print(json.dumps({"out": str(args.out), "date": args.date}, indent=2))
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="firecast",
        description="Burned-area forecasting pipeline: cube building, dataset extraction, baselines, evaluation, maps.",
    )
    parser.add_argument("--version", action="version", version=f"firecast {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate a deterministic synthetic cube")
    p.add_argument("--store", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-lat", type=int, default=64, help="grid rows (columns are 2x)")
    p.add_argument("--years", type=int, default=5)
    p.add_argument("--positive-rate", type=float, default=0.016)
    p.add_argument("--decay", type=float, default=0.75, help="AR(1) anomaly persistence per step")
    p.add_argument("--neighborhood-weight", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build", help="harmonize raw local inputs into a cube store")
    p.add_argument("--store", required=True)
    p.add_argument("--inputs", required=True, help="JSON mapping variable name to source entry")
    p.add_argument("--start-year", type=int, required=True)
    p.add_argument("--end-year", type=int, required=True)
    p.add_argument("--n-lat", type=int, default=720)
    p.add_argument("--full-registry", action="store_true", help="require every registry variable")
    p.add_argument("--report", default=None, help="also write the build report JSON here")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("extract", help="cube -> patch shards per lead")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--leads", default=",".join(str(l) for l in DEFAULT_LEADS))
    p.add_argument("--channels", default=None, help="comma-separated input variables")
    p.add_argument("--target", default=DEFAULT_TARGET_VARIABLE)
    p.add_argument("--patch-px", type=int, default=128)
    p.add_argument("--shard-size", type=int, default=256)
    p.add_argument("--include-invalid", action="store_true", help="score sea/no-data pixels too")
    p.add_argument("--train-years", default=None)
    p.add_argument("--val-years", default=None)
    p.add_argument("--test-years", default=None)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("climatology", help="fit and persist the seasonal-cycle table")
    p.add_argument("--store", required=True)
    p.add_argument("--target", default=DEFAULT_TARGET_VARIABLE)
    p.add_argument("--fit-years", default=None)
    p.add_argument(
        "--fit-through-val",
        "--fit-through-2018",
        action="store_true",
        dest="fit_through_val",
        help="extend the fit window through the validation year",
    )
    p.add_argument("--out", default=None, help="store for the table (default: the cube store)")
    p.set_defaults(func=cmd_climatology)

    p = sub.add_parser("train-ref", help="train the per-pixel reference model")
    p.add_argument("--data", required=True, help="dataset root or one lead directory")
    p.add_argument("--out", required=True, help="model JSON path (single lead) or directory")
    p.add_argument("--hidden-units", type=int, default=0)
    p.add_argument("--learning-rate", type=float, default=2.0)
    p.add_argument("--batch-size", type=int, default=8192)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pos-weight", type=float, default=1.0)
    p.set_defaults(func=cmd_train_ref)

    p = sub.add_parser("predict-ref", help="write probability shards for a split")
    p.add_argument("--model", required=True, help="model JSON or directory of model_lead_*.json")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--splits", default="test")
    p.set_defaults(func=cmd_predict_ref)

    p = sub.add_parser("eval", help="imbalance-aware metrics over a split")
    p.add_argument("--data", required=True)
    p.add_argument("--preds", default=None, help="prediction shards root")
    p.add_argument("--climatology", default=None, help="store holding the climatology table")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--bins", type=int, default=8192)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--pr-curve", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="global prediction/target maps (PNG)")
    p.add_argument("--out", required=True)
    p.add_argument("--date", required=True, help="YYYY-MM-DD inside the time axis")
    p.add_argument("--store", default=None)
    p.add_argument("--var", default=None)
    p.add_argument("--preds", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--split", default="test")
    p.add_argument("--pair", action="store_true", help="prediction and target side by side")
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--scale", default="linear", choices=("linear", "log"))
    p.add_argument("--palette", default=None, help="palette stops JSON")
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        doc = {"error": str(exc), "subcommand": args.subcommand}
        if exc.failures:
            doc["failures"] = exc.failures
        print(json.dumps(doc, sort_keys=True), file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(
            json.dumps({"error": f"{type(exc).__name__}: {exc}", "subcommand": args.subcommand}, sort_keys=True),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
