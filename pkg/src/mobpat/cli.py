"""``mobpat`` command line: file-in, file-out pipeline stages.

Exit codes: 0 success, 1 usage error, 2 data error.  Every run writes a
``manifest.json`` (or ``<out>.manifest.json``) next to its outputs; all files
of a run are staged in memory and renamed into place only once everything
has been computed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, som, synth, viz
from .errors import MobpatError
from .ingest import FORMATS, Dataset, parse_location_tree, parse_records, to_canonical_csv, validate_dataset
from .matrices import (
    DEFAULT_SESSION_TIMEOUT,
    StayInterval,
    TimeBinning,
    bin_labels,
    build_all,
    build_sequence_vectors,
    envelope_to_json,
    matrix_envelope,
    matrix_to_csv,
)
from .predict import MODEL_KINDS, FlowMap, ModelSpec, build_flow_map, evaluate_over_time, evaluate_split
from .predict.evaluate import predict_labels

log = logging.getLogger("mobpat")

ARTIFACTS = ("umatrix", "heatmap", "flowmap", "timecube")
MATRIX_KINDS = ("frequency", "timespent", "sequence", "tom")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _setup_logging() -> None:
    level = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("MOBPAT_LOG", "info").lower(), logging.INFO
    )
    if not log.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("mobpat: %(levelname)s: %(message)s"))
        log.addHandler(handler)
    log.setLevel(level)
    log.propagate = False


# -- file plumbing --------------------------------------------------------------


def _digest(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_atomic(outputs: dict[Path, str]) -> None:
    for path, text in outputs.items():
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def _manifest(args: argparse.Namespace, argv: list[str], inputs: list[str]) -> str:
    params = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    doc = {
        "subcommand": args.command,
        "argv": argv,
        "parameters": params,
        "inputs": {p: _digest(p) for p in inputs if p},
        "seed": args.seed,
        "version": __version__,
    }
    return json.dumps(doc, indent=1, sort_keys=True, default=str) + "\n"


def _parse_time(value: str) -> int:
    from .ingest import parse_timestamp

    return parse_timestamp(value)


def _load(args) -> Dataset:
    tree = None
    if getattr(args, "locations", None):
        tree = parse_location_tree(Path(args.locations).read_bytes())
    d = parse_records(args.format, Path(args.input).read_bytes(), tree)
    problems = validate_dataset(d)
    if problems:
        raise MobpatError(f"dataset fails validation: {', '.join(problems[:5])}")
    log.info("loaded %d records, %d objects, %d locations", len(d.records), d.n_objects, d.n_locations)
    return d


def _binning(args, d: Dataset) -> TimeBinning:
    bin_seconds = int(round(args.bin_minutes * 60))
    if bin_seconds < 1:
        raise UsageError("--bin-minutes must be positive")
    if args.start is None and args.n_bins is None:
        return TimeBinning.covering(d, bin_seconds)
    cover = TimeBinning.covering(d, bin_seconds)
    start = _parse_time(args.start) if args.start is not None else cover.start
    n_bins = args.n_bins if args.n_bins is not None else max(1, -(-(d.time_span()[1] + 1 - start) // bin_seconds))
    return TimeBinning(start, bin_seconds, n_bins)


def _inputs(args) -> list[str]:
    return [p for p in (getattr(args, "input", None), getattr(args, "locations", None), getattr(args, "config", None)) if p]


def _model_specs(args) -> list[ModelSpec]:
    specs = []
    for i, kind in enumerate(k.strip() for k in args.models.split(",") if k.strip()):
        if kind not in MODEL_KINDS:
            raise UsageError(f"unknown model {kind!r}; choose from {', '.join(MODEL_KINDS)}")
        hyper = {}
        if kind == "rnn":
            hyper = {"hidden": args.hidden, "epochs": args.epochs, "lr": args.lr, "cell": args.cell}
        specs.append(ModelSpec(kind, kind, hyper, args.seed + i))
    if not specs:
        raise UsageError("--models is empty")
    return specs


def _render_spec(args) -> viz.RenderSpec:
    try:
        return viz.RenderSpec(width=args.width, height=args.height, ramp=args.ramp)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# -- subcommands ------------------------------------------------------------------


def cmd_ingest(args, argv):
    d = _load(args)
    out = Path(args.out)
    return {
        out: to_canonical_csv(d),
        out.with_suffix(".locations.csv"): d.locations.to_csv(),
        Path(str(out) + ".manifest.json"): _manifest(args, argv, _inputs(args)),
    }


def cmd_synth(args, argv):
    cfg = synth.load_config(Path(args.config).read_text()) if args.config else synth.SynthConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    else:
        args.seed = cfg.seed
    d, truth = synth.generate(cfg)
    out = Path(args.out)
    log.info("generated %d records for %d objects", len(d.records), d.n_objects)
    return {
        out: to_canonical_csv(d),
        out.with_suffix(".locations.csv"): d.locations.to_csv(),
        out.with_suffix(".truth.json"): truth.to_json(),
        Path(str(out) + ".manifest.json"): _manifest(args, argv, _inputs(args)),
    }


def cmd_matrices(args, argv):
    d = _load(args)
    binning = _binning(args, d)
    freq, spent, tom, _ = build_all(d, binning, args.session_timeout)
    rows, cols = d.object_ids, d.locations.names
    which = MATRIX_KINDS if args.which == "all" else (args.which,)
    out_dir = Path(args.out_dir)
    outputs = {}
    if "frequency" in which:
        outputs[out_dir / "frequency.csv"] = matrix_to_csv(freq.counts, rows, cols)
        outputs[out_dir / "frequency.json"] = envelope_to_json(matrix_envelope("frequency", freq.counts, rows, cols, binning))
    if "timespent" in which:
        outputs[out_dir / "timespent.csv"] = matrix_to_csv(spent.seconds, rows, cols)
        outputs[out_dir / "timespent.json"] = envelope_to_json(matrix_envelope("timespent", spent.seconds, rows, cols, binning))
    if "sequence" in which:
        seqs = build_sequence_vectors(d)
        outputs[out_dir / "sequences.json"] = json.dumps(seqs, indent=1, sort_keys=True) + "\n"
    if "tom" in which:
        labels = bin_labels(binning)
        outputs[out_dir / "tom.csv"] = matrix_to_csv(tom.cells, rows, labels)
        outputs[out_dir / "tom.json"] = envelope_to_json(matrix_envelope("tom", tom.cells, rows, labels, binning))
    outputs[out_dir / "manifest.json"] = _manifest(args, argv, _inputs(args))
    return outputs


def _stays_doc(stays_by_obj: dict[str, list[StayInterval]]) -> str:
    doc = {oid: [[s.location_id, s.t_start, s.t_end] for s in stays] for oid, stays in sorted(stays_by_obj.items())}
    return json.dumps({"objects": doc}, indent=1, sort_keys=True) + "\n"


def cmd_cluster(args, argv):
    d = _load(args)
    if d.n_objects == 0:
        raise MobpatError("no objects to cluster")
    binning = _binning(args, d)
    freq, spent, _, stays = build_all(d, binning, args.session_timeout)
    x = som.build_features(freq, spent, args.normalize)
    side = som.default_grid_side(len(x))
    rows = args.rows or side
    cols = args.cols or side
    if rows * cols < 4:
        raise UsageError("grid needs at least 4 nodes")
    schedule = som.TrainSchedule(
        epochs=args.epochs,
        lr0=args.lr0,
        lr1=args.lr1,
        sigma0=args.sigma0 if args.sigma0 is not None else max(rows, cols) / 2,
        sigma1=args.sigma1,
        seed=args.seed,
    )
    grid = som.init_grid(rows, cols, x, args.seed)
    result = som.train(grid, x, schedule)
    u = som.compute_umatrix(result.grid)
    assign = som.assign_and_aggregate(result.grid, x)
    flagged = som.detect_outstanding(u, assign, args.k)
    ids = d.object_ids
    log.info("QE %.4f -> %.4f; %d flagged", result.initial_qe, result.qe_trace[-1], len(flagged))

    flags = [{"object": ids[o], "row": rc[0], "col": rc[1], "u": round(v, 12)} for o, rc, v in flagged]
    u_doc = {
        "rows": rows,
        "cols": cols,
        "values": np.round(u.values, 12).tolist(),
        "hits": assign.hits.tolist(),
        "threshold": round(float(u.values.mean() + args.k * u.values.std()), 12),
        "k": args.k,
        "flags": flags,
        "bmus": {ids[i]: [int(r), int(c)] for i, (r, c) in enumerate(assign.bmus)},
        "qe_initial": round(result.initial_qe, 12),
        "qe_trace": [round(q, 12) for q in result.qe_trace],
    }
    flagged_idx = {o for o, _, _ in flagged}
    stays_by_obj: dict[str, list[StayInterval]] = {}
    for s in stays:
        if s.obj in flagged_idx:
            stays_by_obj.setdefault(ids[s.obj], []).append(s)
    spec = _render_spec(args)
    out_dir = Path(args.out_dir)
    csv_rows = "\n".join(",".join(f"{v:.6f}" for v in row) for row in u.values) + "\n"
    return {
        out_dir / "grid.json": som.grid_to_json(result.grid, schedule),
        out_dir / "umatrix.json": json.dumps(u_doc, indent=1, sort_keys=True) + "\n",
        out_dir / "umatrix.csv": csv_rows,
        out_dir / "flags.json": json.dumps(flags, indent=1, sort_keys=True) + "\n",
        out_dir / "flagged_stays.json": _stays_doc(stays_by_obj),
        out_dir / "umatrix.svg": viz.render_umatrix(u.values, assign.hits, flagged, spec),
        out_dir / "heatmap_frequency.svg": viz.render_heatmap(
            freq.counts, spec, ids, d.locations.names, "visiting frequency"
        ),
        out_dir / "heatmap_timespent.svg": viz.render_heatmap(
            spent.seconds / 60.0, spec, ids, d.locations.names, "time spent (minutes)"
        ),
        out_dir / "timecube.svg": viz.render_timecube(stays_by_obj, d.locations, spec, "outstanding objects"),
        out_dir / "manifest.json": _manifest(args, argv, _inputs(args)),
    }


def _tom(args, d):
    binning = _binning(args, d)
    _, _, tom, _ = build_all(d, binning, args.session_timeout)
    return tom


def cmd_predict(args, argv):
    specs = _model_specs(args)
    d = _load(args)
    tom = _tom(args, d)
    n_bins = tom.binning.n_bins
    split_bin = tom.binning.index(_parse_time(args.split_time))
    if split_bin is None or split_bin <= args.window:
        raise MobpatError(f"--split-time falls outside the usable bins ({args.window + 1}..{n_bins - 1})")
    target = n_bins - 1 if args.target_bin is None else args.target_bin
    if not args.window <= target < n_bins:
        raise MobpatError(f"--target-bin must lie in {args.window}..{n_bins - 1}")
    n_classes = d.n_locations + 1
    report, models, _ = evaluate_split(specs, tom, split_bin, args.window, n_classes=n_classes)
    flow_name = args.flow_model or specs[0].name
    if flow_name not in models:
        raise UsageError(f"--flow-model {flow_name!r} is not among --models")
    cells = tom.cells
    window = cells[:, target - args.window : target]
    pred = predict_labels(models[flow_name], window, np.arange(len(cells)))
    actual = build_flow_map(tom, target - 1, n_locations=d.n_locations, label=f"actual bins {target - 1}->{target}")
    predicted = build_flow_map(
        tom, target - 1, predictions=pred, n_locations=d.n_locations, label=f"{flow_name} predicted bins {target - 1}->{target}"
    )
    report.meta.update({"target_bin": target, "flow_model": flow_name})
    for name, acc in report.accuracy.items():
        log.info("%s held-out accuracy %.4f", name, acc)
    spec = _render_spec(args)
    out_dir = Path(args.out_dir)
    return {
        out_dir / "report.json": report.to_json(),
        out_dir / "flow_actual.json": actual.to_json(),
        out_dir / "flow_predicted.json": predicted.to_json(),
        out_dir / "flow_actual.svg": viz.render_flowmap(actual, d.locations, spec),
        out_dir / "flow_predicted.svg": viz.render_flowmap(predicted, d.locations, spec),
        out_dir / "manifest.json": _manifest(args, argv, _inputs(args)),
    }


def cmd_evaluate(args, argv):
    specs = _model_specs(args)
    d = _load(args)
    tom = _tom(args, d)
    try:
        probes = [int(p) for p in args.probe_minutes.split(",") if p.strip()]
    except ValueError:
        raise UsageError("--probe-minutes takes comma-separated integers") from None
    report = evaluate_over_time(
        specs, tom, args.target_bin, probes, args.window, n_classes=d.n_locations + 1
    )
    out_dir = Path(args.out_dir)
    return {
        out_dir / "evaluation.json": report.to_json(),
        out_dir / "curves.csv": report.curves_csv(),
        out_dir / "manifest.json": _manifest(args, argv, _inputs(args)),
    }


def cmd_render(args, argv):
    spec = _render_spec(args)
    doc = json.loads(Path(args.input).read_text())
    tree = parse_location_tree(Path(args.locations).read_bytes()) if args.locations else None
    try:
        if args.kind == "umatrix":
            svg = viz.render_umatrix(
                np.asarray(doc["values"]),
                np.asarray(doc["hits"]) if "hits" in doc else None,
                [(f["row"], f["col"]) for f in doc.get("flags", [])],
                spec,
            )
        elif args.kind == "heatmap":
            svg = viz.render_heatmap(
                np.asarray(doc["data"], dtype=np.float64), spec, doc.get("row_labels"), doc.get("col_labels"), doc.get("kind", "heat map")
            )
        elif args.kind == "flowmap":
            flow = FlowMap(np.asarray(doc["weights"], dtype=np.int64), doc.get("label", ""))
            svg = viz.render_flowmap(flow, tree or _anonymous_tree(flow.n_locations), spec)
        else:
            stays = {
                oid: [StayInterval(0, int(l), int(a), int(b)) for l, a, b in rows]
                for oid, rows in doc["objects"].items()
            }
            n = max((s.location_id for v in stays.values() for s in v), default=0)
            svg = viz.render_timecube(stays, tree or _anonymous_tree(n), spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise MobpatError(f"{args.input} is not a {args.kind} document: {exc}") from None
    out = Path(args.out)
    return {out: svg, Path(str(out) + ".manifest.json"): _manifest(args, argv, _inputs(args))}


def _anonymous_tree(n: int):
    from .ingest import build_location_tree

    return build_location_tree([(str(k + 1), "site", None) for k in range(n)])


def cmd_replay(args, argv):
    doc = json.loads(Path(args.manifest).read_text())
    inner = doc.get("argv")
    if not isinstance(inner, list) or not inner or inner[0] == "replay":
        raise MobpatError(f"{args.manifest} does not hold a replayable command line")
    for path, digest in doc.get("inputs", {}).items():
        if not Path(path).exists() or _digest(path) != digest:
            raise MobpatError(f"input {path} changed since the manifest was written")
    parser = build_parser()
    inner_args = parser.parse_args(inner)
    return inner_args.func(inner_args, inner)


# -- parser ---------------------------------------------------------------------


def _add_input(p, with_format=True):
    p.add_argument("--in", dest="input", required=True, help="record file")
    if with_format:
        p.add_argument("--format", choices=FORMATS, default="canonical")
    p.add_argument("--locations", help="location tree CSV (name,category,parent,x,y)")


def _add_binning(p):
    p.add_argument("--bin-minutes", type=float, default=60.0)
    p.add_argument("--start", help="first bin start (epoch seconds or ISO-8601); default: aligned first record")
    p.add_argument("--n-bins", type=int)
    p.add_argument("--session-timeout", type=int, default=DEFAULT_SESSION_TIMEOUT, help="seconds a check-in holds")


def _add_models(p, default="rnn,most_frequent,uniform"):
    p.add_argument("--models", default=default, help=f"comma list from: {', '.join(MODEL_KINDS)}")
    p.add_argument("--window", type=int, default=8)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--cell", choices=("elman", "lstm"), default="elman")


def _add_render(p):
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--ramp", choices=sorted(viz.RAMPS), default="sequential")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mobpat", description="movement-pattern analytics pipeline")
    parser.add_argument("--version", action="version", version=f"mobpat {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=None if name == "synth" else 0)
        return p

    p = command("ingest", cmd_ingest, "parse raw records into canonical CSV")
    _add_input(p)
    p.add_argument("--out", required=True)

    p = command("synth", cmd_synth, "generate a seeded synthetic population")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--out", required=True)

    p = command("matrices", cmd_matrices, "build frequency / time-spent / sequence / occupancy matrices")
    _add_input(p)
    _add_binning(p)
    p.add_argument("--which", choices=MATRIX_KINDS + ("all",), default="all")
    p.add_argument("--out-dir", required=True)

    p = command("cluster", cmd_cluster, "train a SOM and flag outstanding objects")
    _add_input(p)
    _add_binning(p)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr0", type=float, default=0.5)
    p.add_argument("--lr1", type=float, default=0.05)
    p.add_argument("--sigma0", type=float)
    p.add_argument("--sigma1", type=float, default=0.1)
    p.add_argument("--k", type=float, default=2.0)
    p.add_argument("--normalize", choices=som.NORMALIZATIONS, default="zscore")
    _add_render(p)
    p.add_argument("--out-dir", required=True)

    p = command("predict", cmd_predict, "train predictors, score a held-out period, emit flow maps")
    _add_input(p)
    _add_binning(p)
    _add_models(p)
    p.add_argument("--split-time", required=True, help="train on labels before this time, test after")
    p.add_argument("--target-bin", type=int, help="bin whose flow map is drawn (default: last)")
    p.add_argument("--flow-model", help="model used for the predicted flow map (default: first)")
    _add_render(p)
    p.add_argument("--out-dir", required=True)

    p = command("evaluate", cmd_evaluate, "accuracy at a target bin as training history grows")
    _add_input(p)
    _add_binning(p)
    _add_models(p)
    p.add_argument("--target-bin", type=int, required=True)
    p.add_argument("--probe-minutes", default="600,1200,2400")
    p.add_argument("--out-dir", required=True)

    p = command("render", cmd_render, "render a JSON artifact to SVG")
    p.add_argument("--kind", choices=ARTIFACTS, required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--locations")
    p.add_argument("--out", required=True)
    _add_render(p)

    p = command("replay", cmd_replay, "re-run the command recorded in a manifest")
    p.add_argument("--manifest", required=True)
    return parser


def dispatch(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        outputs = args.func(args, argv)
        _write_atomic(outputs)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    except (MobpatError, OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        sys.stderr.write(f"mobpat: error: {exc}\n")
        return 2
    for path in sorted(outputs):
        log.debug("wrote %s", path)
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
