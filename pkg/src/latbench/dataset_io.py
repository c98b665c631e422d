"""File formats: annotations, latency traces, result logs, reports, images.

Everything written here is deterministic (fixed field order, fixed float
precision) so identical runs produce byte-identical files.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .boxes import (
    BoundingBox,
    GroundTruthSequence,
    PairedEntry,
    PairedResultLog,
    RawEntry,
    RawResultLog,
)
from .metrics import (
    EvaluationReport,
    PRECISION_THRESHOLDS,
    SUCCESS_THRESHOLDS,
    format_delta,
    improvement_delta,
)

ANNOTATION_FILENAME = "groundtruth.txt"
ATTRIBUTES_FILENAME = "attributes.json"


class AnnotationError(ValueError):
    """Malformed annotation file."""


class LogFormatError(ValueError):
    """Malformed result-log file."""


# ---------------------------------------------------------------------------
# annotations


def load_annotations(path: str, frame_rate: float = 30.0) -> GroundTruthSequence:
    """Parse one box per line, x y w h, separated by commas or whitespace.

    Integer and decimal values are both accepted. Gap markers (empty fields
    or NaN) are rejected: the harness requires fully annotated sequences.
    """
    boxes: list[BoundingBox] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            fields = stripped.replace(",", " ").split()
            if len(fields) != 4:
                raise AnnotationError(
                    f"{path}:{lineno}: expected 4 fields, got {len(fields)}"
                )
            try:
                values = [float(f) for f in fields]
            except ValueError:
                raise AnnotationError(
                    f"{path}:{lineno}: non-numeric field in {stripped!r}"
                ) from None
            if not all(math.isfinite(v) for v in values):
                raise AnnotationError(
                    f"{path}:{lineno}: gap marker (NaN/inf) is not supported; "
                    "sequences must be fully annotated"
                )
            try:
                boxes.append(BoundingBox(*values))
            except ValueError as exc:
                raise AnnotationError(f"{path}:{lineno}: {exc}") from None
    if not boxes:
        raise AnnotationError(f"{path}: no annotations found")
    return GroundTruthSequence(boxes=tuple(boxes), frame_rate=frame_rate)


def write_annotations(path: str, truth: GroundTruthSequence) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for b in truth.boxes:
            fh.write(f"{b.x:.6f},{b.y:.6f},{b.w:.6f},{b.h:.6f}\n")


def load_attributes(path: str) -> dict[str, bool]:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or not all(
        isinstance(k, str) and isinstance(v, bool) for k, v in data.items()
    ):
        raise AnnotationError(f"{path}: attributes must be a JSON object of booleans")
    return data


# ---------------------------------------------------------------------------
# sequence discovery


@dataclass(frozen=True)
class SequenceManifest:
    """Where one sequence lives on disk."""

    name: str
    annotation_path: str
    image_dir: str | None = None
    attributes: dict[str, bool] | None = None
    frame_rate: float = 30.0


def discover_sequences(root: str, frame_rate: float = 30.0) -> list[SequenceManifest]:
    """Find sequence directories (anything under root with a groundtruth file)."""
    manifests = []
    for name in sorted(os.listdir(root)):
        seq_dir = os.path.join(root, name)
        ann = os.path.join(seq_dir, ANNOTATION_FILENAME)
        if not os.path.isfile(ann):
            continue
        attrs_path = os.path.join(seq_dir, ATTRIBUTES_FILENAME)
        attrs = load_attributes(attrs_path) if os.path.isfile(attrs_path) else None
        frames = os.path.join(seq_dir, "frames")
        manifests.append(
            SequenceManifest(
                name=name,
                annotation_path=ann,
                image_dir=frames if os.path.isdir(frames) else None,
                attributes=attrs,
                frame_rate=frame_rate,
            )
        )
    if not manifests:
        raise AnnotationError(f"no sequences found under {root}")
    return manifests


def load_sequence(manifest: SequenceManifest) -> GroundTruthSequence:
    truth = load_annotations(manifest.annotation_path, frame_rate=manifest.frame_rate)
    if manifest.attributes is None:
        return truth
    return GroundTruthSequence(
        boxes=truth.boxes,
        frame_rate=truth.frame_rate,
        attribute_flags=dict(manifest.attributes),
    )


# ---------------------------------------------------------------------------
# synthetic sequences


@dataclass(frozen=True)
class MotionSegment:
    """Constant per-frame velocity (x, y, w, h) applied for a number of steps."""

    frames: int
    velocity: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        if self.frames < 1:
            raise ValueError("segment must cover at least one frame step")


@dataclass(frozen=True)
class MotionSpec:
    """Piecewise-linear trajectory: initial box plus velocity segments."""

    initial_box: BoundingBox
    segments: tuple[MotionSegment, ...]
    frame_rate: float = 30.0
    name: str = "synthetic"


def synth_sequence(spec: MotionSpec) -> GroundTruthSequence:
    """Deterministic trajectory; total length is 1 + sum of segment steps."""
    boxes = [spec.initial_box]
    cur = np.array(spec.initial_box.as_tuple(), dtype=float)
    for seg_idx, seg in enumerate(spec.segments):
        v = np.asarray(seg.velocity, dtype=float)
        for _ in range(seg.frames):
            cur = cur + v
            if cur[2] < 1.0 or cur[3] < 1.0:
                raise ValueError(
                    f"segment {seg_idx} shrinks the box below 1px at frame "
                    f"{len(boxes)} (w={cur[2]:.3f}, h={cur[3]:.3f})"
                )
            boxes.append(BoundingBox(*map(float, cur)))
    return GroundTruthSequence(boxes=tuple(boxes), frame_rate=spec.frame_rate)


def motion_spec_from_dict(data: dict) -> MotionSpec:
    """Build a MotionSpec from its JSON form.

    Expected shape:
        {"name": "...", "initial_box": [x, y, w, h], "frame_rate": 30,
         "segments": [{"frames": N, "velocity": [vx, vy, vw, vh]}, ...]}
    """
    try:
        segments = tuple(
            MotionSegment(frames=int(s["frames"]), velocity=tuple(map(float, s["velocity"])))
            for s in data["segments"]
        )
        return MotionSpec(
            initial_box=BoundingBox(*map(float, data["initial_box"])),
            segments=segments,
            frame_rate=float(data.get("frame_rate", 30.0)),
            name=str(data.get("name", "synthetic")),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"bad motion spec: {exc}") from None


def materialize_synthetic(specs: list[MotionSpec], root: str,
                          attributes: dict[str, dict[str, bool]] | None = None) -> None:
    """Write synthetic sequences as a dataset tree of annotation files."""
    os.makedirs(root, exist_ok=True)
    for spec in specs:
        seq_dir = os.path.join(root, spec.name)
        os.makedirs(seq_dir, exist_ok=True)
        write_annotations(os.path.join(seq_dir, ANNOTATION_FILENAME), synth_sequence(spec))
        flags = (attributes or {}).get(spec.name)
        if flags:
            with open(os.path.join(seq_dir, ATTRIBUTES_FILENAME), "w", encoding="utf-8") as fh:
                json.dump(flags, fh, sort_keys=True)
                fh.write("\n")


# ---------------------------------------------------------------------------
# latency traces


def read_latency_trace(path: str) -> list[float]:
    """One positive decimal per line; line 1 is the first-frame latency."""
    durations = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                v = float(stripped)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a number: {stripped!r}") from None
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{path}:{lineno}: durations must be positive, got {v}")
            durations.append(v)
    if not durations:
        raise ValueError(f"{path}: empty latency trace")
    return durations


def write_latency_trace(path: str, durations: list[float]) -> None:
    # repr round-trips doubles exactly, so read(write(x)) == x bit for bit.
    with open(path, "w", encoding="utf-8") as fh:
        for d in durations:
            fh.write(f"{d!r}\n")


# ---------------------------------------------------------------------------
# result logs (JSON lines, 6 fractional digits)


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def _box_json(box: BoundingBox) -> str:
    return f"[{_fmt(box.x)}, {_fmt(box.y)}, {_fmt(box.w)}, {_fmt(box.h)}]"


def write_raw_log(path: str, log: RawResultLog) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write('{"log": "raw"}\n')
        for k, e in enumerate(log.entries):
            fh.write(
                f'{{"k": {k}, "j": {e.frame_id}, "box": {_box_json(e.box)}, '
                f'"t_r": {_fmt(e.finish_time)}}}\n'
            )


def write_paired_log(path: str, log: PairedResultLog) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write('{"log": "paired"}\n')
        for e in log.entries:
            psi = "null" if e.source is None else str(e.source)
            fh.write(
                f'{{"i": {e.frame_id}, "psi": {psi}, "box": {_box_json(e.box)}}}\n'
            )


def _parse_log_line(path: str, lineno: int, line: str, keys: set[str]) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise LogFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise LogFormatError(f"{path}:{lineno}: expected an object")
    if set(obj) != keys:
        unknown = set(obj) - keys
        missing = keys - set(obj)
        detail = []
        if unknown:
            detail.append(f"unknown keys {sorted(unknown)}")
        if missing:
            detail.append(f"missing keys {sorted(missing)}")
        raise LogFormatError(f"{path}:{lineno}: {'; '.join(detail)}")
    return obj


def _parse_box(path: str, lineno: int, raw: object) -> BoundingBox:
    if not isinstance(raw, list) or len(raw) != 4:
        raise LogFormatError(f"{path}:{lineno}: box must be a 4-element array")
    try:
        return BoundingBox(*(float(v) for v in raw))
    except (TypeError, ValueError) as exc:
        raise LogFormatError(f"{path}:{lineno}: bad box: {exc}") from None


def _read_log_lines(path: str, expected_kind: str):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    if not lines:
        raise LogFormatError(f"{path}: missing header line")
    header = _parse_log_line(path, 1, lines[0], {"log"})
    if header["log"] != expected_kind:
        raise LogFormatError(
            f"{path}:1: expected a {expected_kind!r} log, got {header['log']!r}"
        )
    return [(i, ln) for i, ln in enumerate(lines[1:], start=2) if ln.strip()]


def read_raw_log(path: str) -> RawResultLog:
    entries = []
    for lineno, line in _read_log_lines(path, "raw"):
        obj = _parse_log_line(path, lineno, line, {"k", "j", "box", "t_r"})
        if obj["k"] != len(entries):
            raise LogFormatError(f"{path}:{lineno}: expected k={len(entries)}")
        entries.append(
            RawEntry(
                frame_id=int(obj["j"]),
                box=_parse_box(path, lineno, obj["box"]),
                finish_time=float(obj["t_r"]),
            )
        )
    try:
        return RawResultLog(entries=tuple(entries))
    except ValueError as exc:
        raise LogFormatError(f"{path}: {exc}") from None


def read_paired_log(path: str) -> PairedResultLog:
    entries = []
    for lineno, line in _read_log_lines(path, "paired"):
        obj = _parse_log_line(path, lineno, line, {"i", "psi", "box"})
        psi = obj["psi"]
        if psi is not None:
            psi = int(psi)
        entries.append(
            PairedEntry(
                frame_id=int(obj["i"]),
                source=psi,
                box=_parse_box(path, lineno, obj["box"]),
            )
        )
    try:
        return PairedResultLog(entries=tuple(entries))
    except ValueError as exc:
        raise LogFormatError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# reports


def _pick_baseline_mode(modes: list[str]) -> str:
    if "lae_bare" in modes:
        return "lae_bare"
    if "offline" in modes:
        return "offline"
    return modes[0]


def write_report(report: EvaluationReport, csv_path: str, curves_path: str,
                 attributes_csv_path: str | None = None) -> None:
    """Emit the scores table (CSV) and the raw curves (JSON).

    The delta column is the AUC change relative to the report's baseline mode
    (lae_bare when present) for the same tracker and sequence; baseline rows
    show +0.0 against themselves.
    """
    rows = list(report.cells) + list(report.aggregates)
    modes = []
    for c in rows:
        if c.mode not in modes:
            modes.append(c.mode)
    baseline_mode = _pick_baseline_mode(modes)
    baseline_auc = {
        (c.tracker, c.sequence): c.auc for c in rows if c.mode == baseline_mode
    }
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tracker", "mode", "sequence", "auc", "dp", "fps", "delta_pct"])
        for c in rows:
            base = baseline_auc.get((c.tracker, c.sequence))
            delta = format_delta(improvement_delta(base, c.auc)) if base is not None else ""
            writer.writerow(
                [
                    c.tracker,
                    c.mode,
                    c.sequence,
                    f"{c.auc:.4f}",
                    f"{c.dp:.4f}",
                    "" if c.fps is None else f"{c.fps:.2f}",
                    delta,
                ]
            )
    payload = {
        "precision_thresholds": [float(t) for t in PRECISION_THRESHOLDS],
        "success_thresholds": [round(float(t), 6) for t in SUCCESS_THRESHOLDS],
        "cells": [
            {
                "tracker": c.tracker,
                "mode": c.mode,
                "sequence": c.sequence,
                "precision": [round(float(v), 6) for v in c.precision],
                "success": [round(float(v), 6) for v in c.success],
            }
            for c in rows
        ],
    }
    with open(curves_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")
    if attributes_csv_path is not None and report.attributes:
        write_attribute_csv(report, attributes_csv_path)


def write_attribute_csv(report: EvaluationReport, path: str) -> None:
    """Per-attribute aggregates; attributes with no sequences get empty cells."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tracker", "mode", "attribute", "auc", "dp", "sequences"])
        for attr, per_group in report.attributes.items():
            for (tracker, mode), cell in sorted(per_group.items()):
                if cell is None:
                    writer.writerow([tracker, mode, attr, "", "", "0"])
                else:
                    writer.writerow(
                        [tracker, mode, attr, f"{cell.auc:.4f}", f"{cell.dp:.4f}",
                         str(cell.num_sequences)]
                    )


def read_report_csv(path: str) -> list[dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# forecaster state dumps (debugging aid: 8 mean + 64 covariance values)


def dump_forecaster_state(path: str, state) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in state.mean:
            fh.write(f"{float(v)!r}\n")
        for v in state.cov.reshape(-1):
            fh.write(f"{float(v)!r}\n")


def load_forecaster_state(path: str):
    from .forecaster import STATE_DIM, ForecasterState

    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                values.append(float(stripped))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a number: {stripped!r}") from None
    want = STATE_DIM + STATE_DIM * STATE_DIM
    if len(values) != want:
        raise ValueError(f"{path}: expected {want} values, got {len(values)}")
    mean = np.array(values[:STATE_DIM])
    cov = np.array(values[STATE_DIM:]).reshape(STATE_DIM, STATE_DIM)
    return ForecasterState(mean=mean, cov=cov)


# ---------------------------------------------------------------------------
# images


def load_grayscale(path: str) -> np.ndarray:
    """Decode a grayscale image (PGM/PNG and friends) to a float array."""
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=float)
