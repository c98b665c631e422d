"""Command-line front end: run experiment grids, score them, compare reports.

Commands: run, eval, compare, report, synth. Configuration values resolve
with precedence flags > config file > defaults, and every run directory
receives the resolved config plus the latency traces actually used, so a run
can be reproduced from its own outputs.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import csv
import io
import json
import os
import shutil
import sys
import zlib

from . import dataset_io
from .boxes import GroundTruthSequence
from .metrics import CellMetrics, build_report, evaluate_cell, format_delta, improvement_delta
from .runner import MODES, RunConfig, run
from .schedule import LatencyModel
from .trackers import ExternalTracker, FrameRef, SyntheticTracker, TemplateTracker

CONFIG_DEFAULTS = {
    "dataset": None,
    "synth": None,
    "tracker": "synthetic",
    "modes": ["lae_bare", "lae_pvt"],
    "latency": "constant:0.1",
    "frame_rate": 30.0,
    "seed": 0,
    "jobs": 1,
}


class CliError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# selector parsing


def _parse_options(payload: str) -> tuple[list[str], dict[str, str]]:
    positional: list[str] = []
    options: dict[str, str] = {}
    for part in payload.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" in part:
            key, value = part.split("=", 1)
            options[key.strip()] = value.strip()
        else:
            positional.append(part)
    return positional, options


def parse_latency_spec(spec: str, seed: int) -> LatencyModel:
    """constant:SECONDS | trace:PATH | random:MEAN,STD | wallclock.

    constant and random accept an optional init=SECONDS for a distinct
    first-frame cost, e.g. constant:0.166,init=0.066.
    """
    kind, _, payload = spec.partition(":")
    if kind == "wallclock":
        return LatencyModel.wall_clock()
    if kind == "trace":
        if not payload:
            raise CliError("trace latency needs a path: trace:PATH")
        return LatencyModel.from_trace(dataset_io.read_latency_trace(payload))
    positional, options = _parse_options(payload)
    init = float(options["init"]) if "init" in options else None
    try:
        if kind == "constant":
            return LatencyModel.constant(float(positional[0]), init_latency_s=init)
        if kind == "random":
            return LatencyModel.seeded_random(
                float(positional[0]), float(positional[1]), seed=seed, init_latency_s=init
            )
    except (IndexError, ValueError) as exc:
        raise CliError(f"bad latency spec {spec!r}: {exc}") from None
    raise CliError(f"unknown latency mode in {spec!r}")


def build_tracker(spec: str, truth: GroundTruthSequence, seed: int):
    """synthetic[:noise=S,radius=R] | template[:inflate=F] | external:CMD."""
    kind, _, payload = spec.partition(":")
    if kind == "synthetic":
        _, options = _parse_options(payload)
        try:
            noise = float(options.get("noise", 0.0))
            radius = float(options.get("radius", "inf"))
        except ValueError as exc:
            raise CliError(f"bad tracker spec {spec!r}: {exc}") from None
        return SyntheticTracker(truth, noise_sigma=noise, search_radius=radius, seed=seed)
    if kind == "template":
        _, options = _parse_options(payload)
        return TemplateTracker(inflate=float(options.get("inflate", 2.0)))
    if kind == "external":
        if not payload:
            raise CliError("external tracker needs a command: external:CMD")
        return ExternalTracker(payload)
    raise CliError(f"unknown tracker {spec!r}")


def _cell_seed(base: int, kind: str, sequence: str) -> int:
    # Stable across runs and platforms; independent of mode so every mode of a
    # cell sees identical noise draws.
    return (base ^ zlib.crc32(f"{kind}:{sequence}".encode())) & 0x7FFFFFFF


# ---------------------------------------------------------------------------
# config resolution


def _load_config_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise CliError(f"{path}: config must be a JSON object")
    unknown = set(data) - set(CONFIG_DEFAULTS)
    if unknown:
        raise CliError(f"{path}: unknown config keys {sorted(unknown)}")
    return data


def resolve_config(args: argparse.Namespace) -> dict:
    resolved = dict(CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        resolved.update(_load_config_file(args.config))
    flag_map = {
        "dataset": getattr(args, "dataset", None),
        "synth": getattr(args, "synth", None),
        "tracker": getattr(args, "tracker", None),
        "latency": getattr(args, "latency", None),
        "frame_rate": getattr(args, "frame_rate", None),
        "seed": getattr(args, "seed", None),
        "jobs": getattr(args, "jobs", None),
    }
    if getattr(args, "modes", None):
        flag_map["modes"] = [m.strip() for m in args.modes.split(",") if m.strip()]
    for key, value in flag_map.items():
        if value is not None:
            resolved[key] = value
    for mode in resolved["modes"]:
        if mode not in MODES:
            raise CliError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    if resolved["dataset"] is None and resolved["synth"] is None:
        raise CliError("need a dataset root (--dataset) or a synthetic spec (--synth)")
    # Inline file references so the copied config is self-contained.
    if resolved["dataset"] is not None:
        resolved["dataset"] = os.path.abspath(resolved["dataset"])
    if isinstance(resolved["synth"], str):
        with open(resolved["synth"], "r", encoding="utf-8") as fh:
            resolved["synth"] = json.load(fh)
    if resolved["latency"].startswith("trace:"):
        resolved["latency"] = "trace:" + os.path.abspath(resolved["latency"][6:])
    return resolved


def _load_grid(config: dict) -> list[tuple[str, GroundTruthSequence, str | None]]:
    """All sequences in the experiment: (name, ground truth, image dir)."""
    out: list[tuple[str, GroundTruthSequence, str | None]] = []
    if config["dataset"] is not None:
        for manifest in dataset_io.discover_sequences(
            config["dataset"], frame_rate=config["frame_rate"]
        ):
            out.append((manifest.name, dataset_io.load_sequence(manifest), manifest.image_dir))
    if config["synth"] is not None:
        for entry in config["synth"].get("sequences", []):
            spec = dataset_io.motion_spec_from_dict(entry)
            truth = dataset_io.synth_sequence(spec)
            flags = entry.get("attributes")
            if flags:
                truth = GroundTruthSequence(
                    boxes=truth.boxes, frame_rate=truth.frame_rate,
                    attribute_flags=dict(flags),
                )
            out.append((spec.name, truth, None))
    names = [name for name, _, _ in out]
    if len(set(names)) != len(names):
        raise CliError(f"duplicate sequence names in the grid: {sorted(names)}")
    return out


def _make_provider(image_dir: str | None, total_frames: int | None = None):
    if image_dir is None:
        return None
    frames = sorted(
        os.path.join(image_dir, f)
        for f in os.listdir(image_dir)
        if not f.startswith(".")
    )
    if total_frames is not None and len(frames) < total_frames:
        raise CliError(
            f"{image_dir} holds {len(frames)} images but the sequence has "
            f"{total_frames} annotated frames"
        )

    def provider(frame_id: int) -> FrameRef:
        if frame_id >= len(frames):
            raise CliError(f"no image for frame {frame_id} under {image_dir}")
        path = frames[frame_id]
        return FrameRef(frame_id=frame_id, image=dataset_io.load_grayscale(path), path=path)

    return provider


# ---------------------------------------------------------------------------
# run


def _cell_paths(out_dir: str, sequence: str, mode: str) -> dict[str, str]:
    stem = os.path.join(out_dir, "logs", f"{sequence}__{mode}")
    return {
        "raw": stem + ".raw.jsonl",
        "paired": stem + ".paired.jsonl",
        "trace": stem + ".trace.txt",
    }


def _run_cell(
    config: dict,
    out_dir: str,
    name: str,
    truth: GroundTruthSequence,
    image_dir: str | None,
    mode: str,
) -> None:
    latency = parse_latency_spec(config["latency"], _cell_seed(config["seed"], "latency", name))
    tracker = build_tracker(
        config["tracker"], truth, _cell_seed(config["seed"], "tracker", name)
    )
    provider = _make_provider(image_dir, total_frames=len(truth))
    cfg = RunConfig(
        mode=mode, latency=latency, frame_rate=config["frame_rate"], seed=config["seed"]
    )
    try:
        raw, paired = run(truth, tracker, cfg, provider)
    finally:
        close = getattr(tracker, "close", None)
        if close is not None:
            close()
    paths = _cell_paths(out_dir, name, mode)
    dataset_io.write_raw_log(paths["raw"], raw)
    dataset_io.write_paired_log(paths["paired"], paired)
    dataset_io.write_latency_trace(paths["trace"], latency.emitted)


def cmd_run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    out_dir = args.out
    os.makedirs(os.path.join(out_dir, "logs"), exist_ok=True)
    if getattr(args, "config", None):
        shutil.copyfile(args.config, os.path.join(out_dir, "config.input.json"))
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(config, fh, sort_keys=True, indent=2)
        fh.write("\n")
    grid = _load_grid(config)
    cells = [(name, truth, image_dir, mode)
             for name, truth, image_dir in grid for mode in config["modes"]]
    failures: list[tuple[str, str]] = []

    def execute(cell) -> tuple[str, str] | None:
        name, truth, image_dir, mode = cell
        try:
            _run_cell(config, out_dir, name, truth, image_dir, mode)
            return None
        except Exception as exc:  # a failed cell must not kill the batch
            return (f"{name}__{mode}", str(exc))

    if config["jobs"] > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=config["jobs"]) as pool:
            for result in pool.map(execute, cells):
                if result is not None:
                    failures.append(result)
    else:
        for cell in cells:
            result = execute(cell)
            if result is not None:
                failures.append(result)

    if failures:
        with open(os.path.join(out_dir, "failures.txt"), "w", encoding="utf-8") as fh:
            for cell_id, message in failures:
                fh.write(f"{cell_id}: {message}\n")
        for cell_id, message in failures:
            print(f"FAILED {cell_id}: {message}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args: argparse.Namespace) -> int:
    run_dir = args.run_dir
    config_path = getattr(args, "config", None) or os.path.join(run_dir, "config.json")
    if not os.path.isfile(config_path):
        raise CliError(f"no config at {config_path}; pass --config")
    with open(config_path, "r", encoding="utf-8") as fh:
        config = {**CONFIG_DEFAULTS, **json.load(fh)}
    truths = {name: truth for name, truth, _ in _load_grid(config)}
    logs_dir = os.path.join(run_dir, "logs")
    if not os.path.isdir(logs_dir):
        raise CliError(f"no logs directory under {run_dir}")

    cells: list[CellMetrics] = []
    flags_by_sequence: dict[str, dict[str, bool]] = {}
    for fname in sorted(os.listdir(logs_dir)):
        if not fname.endswith(".raw.jsonl"):
            continue
        stem = fname[: -len(".raw.jsonl")]
        sequence, sep, mode = stem.rpartition("__")
        if not sep or mode not in MODES:
            raise CliError(f"cannot parse cell name from {fname!r}")
        truth = truths.get(sequence)
        if truth is None:
            raise CliError(f"no ground truth for sequence {sequence!r} in the config grid")
        raw = dataset_io.read_raw_log(os.path.join(logs_dir, fname))
        paired = dataset_io.read_paired_log(
            os.path.join(logs_dir, f"{stem}.paired.jsonl")
        )
        trace = dataset_io.read_latency_trace(os.path.join(logs_dir, f"{stem}.trace.txt"))
        cells.append(
            evaluate_cell(
                tracker=config["tracker"],
                mode=mode,
                sequence=sequence,
                paired=paired,
                truth=truth,
                busy_seconds=sum(trace),
                processed_frames=len(raw),
            )
        )
        if truth.attribute_flags:
            flags_by_sequence[sequence] = dict(truth.attribute_flags)
    if not cells:
        raise CliError(f"no result logs under {logs_dir}")

    report = build_report(cells, flags_by_sequence or None)
    out_dir = args.out or run_dir
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "report.csv")
    curves_path = os.path.join(out_dir, "curves.json")
    attr_path = os.path.join(out_dir, "attributes.csv") if report.attributes else None
    dataset_io.write_report(report, csv_path, curves_path, attr_path)
    print(f"wrote {csv_path}")
    print(f"wrote {curves_path}")
    if attr_path:
        print(f"wrote {attr_path}")
    return 0


# ---------------------------------------------------------------------------
# compare


def _comparison_keys(rows: list[dict[str, str]]) -> dict[tuple, dict[str, str]]:
    return {(r["tracker"], r["sequence"], r["mode"]): r for r in rows}


def cmd_compare(args: argparse.Namespace) -> int:
    rows_a = dataset_io.read_report_csv(args.report_a)
    rows_b = dataset_io.read_report_csv(args.report_b)
    if not rows_a or not rows_b:
        raise CliError("cannot compare empty reports")
    keys_a = _comparison_keys(rows_a)
    keys_b = _comparison_keys(rows_b)
    if set(keys_a) != set(keys_b):
        modes_a = {k[2] for k in keys_a}
        modes_b = {k[2] for k in keys_b}
        if len(modes_a) == 1 and len(modes_b) == 1:
            # Single-mode reports compare across modes, cell by cell.
            keys_a = {(k[0], k[1]): v for k, v in keys_a.items()}
            keys_b = {(k[0], k[1]): v for k, v in keys_b.items()}
        if set(keys_a) != set(keys_b):
            only_a = sorted(set(keys_a) - set(keys_b))
            only_b = sorted(set(keys_b) - set(keys_a))
            raise CliError(
                "report grids do not match; "
                f"only in {args.report_a}: {only_a}; only in {args.report_b}: {only_b}"
            )
    out_rows = []
    for key in sorted(keys_a):
        a, b = keys_a[key], keys_b[key]
        auc_a, auc_b = float(a["auc"]), float(b["auc"])
        dp_a, dp_b = float(a["dp"]), float(b["dp"])
        out_rows.append(
            {
                "tracker": a["tracker"],
                "sequence": a["sequence"],
                "mode_a": a["mode"],
                "mode_b": b["mode"],
                "auc_a": f"{auc_a:.4f}",
                "auc_b": f"{auc_b:.4f}",
                "auc_delta_pct": format_delta(improvement_delta(auc_a, auc_b)),
                "dp_a": f"{dp_a:.4f}",
                "dp_b": f"{dp_b:.4f}",
                "dp_delta_pct": format_delta(improvement_delta(dp_a, dp_b)),
            }
        )
    header = list(out_rows[0].keys())
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=header)
    writer.writeheader()
    writer.writerows(out_rows)
    text = buf.getvalue()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# report (pretty printer)


def cmd_report(args: argparse.Namespace) -> int:
    rows = dataset_io.read_report_csv(args.report_csv)
    if not rows:
        raise CliError(f"{args.report_csv}: empty report")
    header = list(rows[0].keys())
    widths = {c: max(len(c), *(len(r[c]) for r in rows)) for c in header}
    print("  ".join(c.ljust(widths[c]) for c in header))
    for r in rows:
        print("  ".join(r[c].ljust(widths[c]) for c in header))
    return 0


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args: argparse.Namespace) -> int:
    with open(args.spec, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    entries = data.get("sequences")
    if not entries:
        raise CliError(f"{args.spec}: no sequences in spec")
    specs = [dataset_io.motion_spec_from_dict(e) for e in entries]
    attributes = {
        str(e.get("name", "synthetic")): e["attributes"]
        for e in entries
        if e.get("attributes")
    }
    dataset_io.materialize_synthetic(specs, args.out, attributes or None)
    print(f"wrote {len(specs)} sequences under {args.out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latbench",
        description="Latency-aware single-object tracking benchmark harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute every (sequence x mode) cell")
    p_run.add_argument("--config", help="JSON config file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--dataset", help="dataset root of sequence directories")
    p_run.add_argument("--synth", help="synthetic motion spec (JSON file)")
    p_run.add_argument("--tracker", help="synthetic[:k=v,...] | template[:k=v] | external:CMD")
    p_run.add_argument("--modes", help=f"comma-separated subset of {','.join(MODES)}")
    p_run.add_argument(
        "--latency", help="constant:SECONDS | trace:PATH | random:MEAN,STD | wallclock"
    )
    p_run.add_argument("--frame-rate", dest="frame_rate", type=float)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--jobs", type=int)
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="score the logs of a run directory")
    p_eval.add_argument("run_dir", help="directory produced by `latbench run`")
    p_eval.add_argument("--config", help="config override (defaults to run_dir/config.json)")
    p_eval.add_argument("--out", help="where to write report files (default: run_dir)")
    p_eval.set_defaults(func=cmd_eval)

    p_cmp = sub.add_parser("compare", help="delta table between two report CSVs")
    p_cmp.add_argument("report_a")
    p_cmp.add_argument("report_b")
    p_cmp.add_argument("--out", help="write the delta CSV here instead of stdout")
    p_cmp.set_defaults(func=cmd_compare)

    p_rep = sub.add_parser("report", help="pretty-print a report CSV")
    p_rep.add_argument("report_csv")
    p_rep.set_defaults(func=cmd_report)

    p_syn = sub.add_parser("synth", help="materialize a synthetic dataset")
    p_syn.add_argument("spec", help="motion spec JSON")
    p_syn.add_argument("--out", required=True, help="dataset root to create")
    p_syn.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, dataset_io.AnnotationError, dataset_io.LogFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
