"""Scoring: precision/success curves, DP, AUC, speed, and attribute slices."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxes import BoundingBox, GroundTruthSequence, PairedResultLog, center_error, iou

PRECISION_THRESHOLDS = np.arange(0, 51, dtype=float)  # pixels, step 1
# overlap grid {0, 0.05, ..., 1.0} as exact k/20 quotients
SUCCESS_THRESHOLDS = np.arange(21, dtype=float) / 20.0
DP_THRESHOLD_PX = 20.0

DEFAULT_ATTRIBUTES = ("SV", "ARV", "OCC", "DEF", "FCM", "IPR", "OPR", "OV", "SOA", "MB")


def _check_lengths(paired: PairedResultLog, truth: GroundTruthSequence) -> None:
    if len(paired) != len(truth):
        raise ValueError(
            f"paired log has {len(paired)} frames but ground truth has {len(truth)}"
        )


def precision_curve(paired: PairedResultLog, truth: GroundTruthSequence) -> np.ndarray:
    """Fraction of frames whose center error is within each pixel threshold."""
    _check_lengths(paired, truth)
    errors = np.array(
        [center_error(e.box, g) for e, g in zip(paired.entries, truth.boxes)]
    )
    return (errors[None, :] <= PRECISION_THRESHOLDS[:, None]).mean(axis=1)


def success_curve(paired: PairedResultLog, truth: GroundTruthSequence) -> np.ndarray:
    """Fraction of frames whose overlap strictly exceeds each threshold."""
    _check_lengths(paired, truth)
    overlaps = np.array(
        [iou(e.box, g) for e, g in zip(paired.entries, truth.boxes)]
    )
    return (overlaps[None, :] > SUCCESS_THRESHOLDS[:, None]).mean(axis=1)


def auc(curve: np.ndarray) -> float:
    """Mean of the success curve over its 21 overlap thresholds."""
    return float(np.mean(curve))


def dp(curve: np.ndarray) -> float:
    """Precision at the 20-pixel center-error threshold."""
    idx = int(np.where(PRECISION_THRESHOLDS == DP_THRESHOLD_PX)[0][0])
    return float(curve[idx])


def fps(processed_frames: int, busy_seconds: float) -> float:
    """Processed frames per second of tracker busy time."""
    if busy_seconds <= 0:
        raise ValueError("busy time must be positive")
    return processed_frames / busy_seconds


def improvement_delta(before: float, after: float) -> float | None:
    """Relative change in percent; None when the baseline is zero (undefined)."""
    if before == 0:
        return None
    return (after - before) / before * 100.0


def format_delta(delta: float | None) -> str:
    """One-decimal signed rendering, e.g. '+54.7'; 'N/A' for undefined."""
    if delta is None:
        return "N/A"
    return f"{delta:+.1f}"


@dataclass
class CellMetrics:
    """Scores for one (tracker, mode, sequence) cell or an aggregate of cells."""

    tracker: str
    mode: str
    sequence: str
    precision: np.ndarray
    success: np.ndarray
    dp: float
    auc: float
    fps: float | None = None
    num_frames: int = 0
    num_sequences: int = 1

    @classmethod
    def from_curves(
        cls,
        tracker: str,
        mode: str,
        sequence: str,
        precision: np.ndarray,
        success: np.ndarray,
        fps: float | None = None,
        num_frames: int = 0,
        num_sequences: int = 1,
    ) -> "CellMetrics":
        return cls(
            tracker=tracker,
            mode=mode,
            sequence=sequence,
            precision=precision,
            success=success,
            dp=dp(precision),
            auc=auc(success),
            fps=fps,
            num_frames=num_frames,
            num_sequences=num_sequences,
        )


def evaluate_cell(
    tracker: str,
    mode: str,
    sequence: str,
    paired: PairedResultLog,
    truth: GroundTruthSequence,
    busy_seconds: float | None = None,
    processed_frames: int | None = None,
) -> CellMetrics:
    """Score one paired log against its ground truth."""
    speed = None
    if busy_seconds is not None and processed_frames is not None:
        speed = fps(processed_frames, busy_seconds)
    return CellMetrics.from_curves(
        tracker,
        mode,
        sequence,
        precision_curve(paired, truth),
        success_curve(paired, truth),
        fps=speed,
        num_frames=len(paired),
    )


def aggregate_cells(cells: list[CellMetrics], sequence_label: str = "ALL") -> CellMetrics:
    """Unweighted mean of per-sequence metrics for one (tracker, mode).

    Sequences are averaged with equal weight rather than pooling frames, so a
    long sequence cannot dominate the aggregate.
    """
    if not cells:
        raise ValueError("nothing to aggregate")
    trackers = {c.tracker for c in cells}
    modes = {c.mode for c in cells}
    if len(trackers) != 1 or len(modes) != 1:
        raise ValueError("aggregate cells must share tracker and mode")
    precision = np.mean([c.precision for c in cells], axis=0)
    success = np.mean([c.success for c in cells], axis=0)
    speeds = [c.fps for c in cells if c.fps is not None]
    return CellMetrics.from_curves(
        cells[0].tracker,
        cells[0].mode,
        sequence_label,
        precision,
        success,
        fps=float(np.mean(speeds)) if speeds else None,
        num_frames=sum(c.num_frames for c in cells),
        num_sequences=len(cells),
    )


@dataclass
class EvaluationReport:
    """Per-cell scores plus per-(tracker, mode) aggregates and attribute slices."""

    cells: list[CellMetrics]
    aggregates: list[CellMetrics] = field(default_factory=list)
    # attribute name -> (tracker, mode) -> aggregated metrics or None if no
    # sequence carries the attribute
    attributes: dict[str, dict[tuple[str, str], CellMetrics | None]] = field(
        default_factory=dict
    )


def attribute_report(
    cells: list[CellMetrics],
    flags_by_sequence: dict[str, dict[str, bool]],
    vocabulary: tuple[str, ...] = DEFAULT_ATTRIBUTES,
) -> dict[str, dict[tuple[str, str], CellMetrics | None]]:
    """Aggregate metrics over the sequences flagged with each attribute.

    Attributes with no flagged sequence map to None (absent, distinct from a
    zero score). Flag names outside the vocabulary are rejected.
    """
    for seq, flags in flags_by_sequence.items():
        for name in flags:
            if name not in vocabulary:
                raise ValueError(
                    f"sequence {seq!r} carries unknown attribute {name!r}; "
                    f"known: {', '.join(vocabulary)}"
                )
    groups: dict[tuple[str, str], list[CellMetrics]] = {}
    for c in cells:
        groups.setdefault((c.tracker, c.mode), []).append(c)
    out: dict[str, dict[tuple[str, str], CellMetrics | None]] = {}
    for attr in vocabulary:
        per_group: dict[tuple[str, str], CellMetrics | None] = {}
        for key, group in groups.items():
            flagged = [
                c for c in group if flags_by_sequence.get(c.sequence, {}).get(attr, False)
            ]
            per_group[key] = (
                aggregate_cells(flagged, sequence_label=attr) if flagged else None
            )
        out[attr] = per_group
    return out


def build_report(
    cells: list[CellMetrics],
    flags_by_sequence: dict[str, dict[str, bool]] | None = None,
    vocabulary: tuple[str, ...] = DEFAULT_ATTRIBUTES,
) -> EvaluationReport:
    """Assemble aggregates (one per tracker/mode) and attribute tables."""
    groups: dict[tuple[str, str], list[CellMetrics]] = {}
    for c in cells:
        groups.setdefault((c.tracker, c.mode), []).append(c)
    aggregates = [aggregate_cells(group) for group in groups.values()]
    attributes: dict[str, dict[tuple[str, str], CellMetrics | None]] = {}
    if flags_by_sequence and any(flags_by_sequence.values()):
        attributes = attribute_report(cells, flags_by_sequence, vocabulary)
    return EvaluationReport(cells=cells, aggregates=aggregates, attributes=attributes)
