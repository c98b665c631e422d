"""Core value types: boxes, annotated sequences, result logs, and box geometry."""
from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in top-left x, y, width, height convention (pixels)."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name, v in (("x", self.x), ("y", self.y), ("w", self.w), ("h", self.h)):
            if not math.isfinite(v):
                raise ValueError(f"box field {name} must be finite, got {v!r}")
        if self.w < 0 or self.h < 0:
            raise ValueError(f"box size must be non-negative, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    def shifted(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0.0 when the union has zero area."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    inter = max(0.0, ix) * max(0.0, iy)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    # float rounding can nudge the ratio just past 1 for near-identical boxes
    return min(1.0, inter / union)


def center_error(a: BoundingBox, b: BoundingBox) -> float:
    """Euclidean distance between the two box centers, in pixels."""
    ax, ay = a.center()
    bx, by = b.center()
    return math.hypot(ax - bx, ay - by)


@dataclass(frozen=True)
class GroundTruthSequence:
    """Fully annotated sequence: one box per world frame at a fixed frame rate.

    Frame i is captured at timestamp i / frame_rate seconds. Gaps (missing
    annotations) are rejected at load time; every frame must carry a box.
    """

    boxes: tuple[BoundingBox, ...]
    frame_rate: float = 30.0
    attribute_flags: dict[str, bool] | None = field(default=None)

    def __post_init__(self) -> None:
        if len(self.boxes) < 1:
            raise ValueError("sequence must contain at least one frame")
        if self.frame_rate <= 0:
            raise ValueError(f"frame rate must be positive, got {self.frame_rate}")

    def __len__(self) -> int:
        return len(self.boxes)

    def timestamp(self, frame_id: int) -> float:
        """World-clock time (seconds) at which frame_id is captured."""
        return frame_id / self.frame_rate


@dataclass(frozen=True)
class RawEntry:
    """One processed frame: input frame id, output box, finish timestamp."""

    frame_id: int
    box: BoundingBox
    finish_time: float


@dataclass(frozen=True)
class RawResultLog:
    """Outputs of the tracker on the (possibly nonconsecutive) frames it processed.

    Frame ids and finish timestamps are both strictly increasing; the id list
    is a subsequence of the world frames.
    """

    entries: tuple[RawEntry, ...]

    def __post_init__(self) -> None:
        prev: RawEntry | None = None
        for e in self.entries:
            if e.frame_id < 0:
                raise ValueError(f"frame id must be non-negative, got {e.frame_id}")
            if prev is not None:
                if e.frame_id <= prev.frame_id:
                    raise ValueError(
                        f"frame ids must be strictly increasing "
                        f"({prev.frame_id} then {e.frame_id})"
                    )
                if e.finish_time <= prev.finish_time:
                    raise ValueError(
                        f"finish times must be strictly increasing "
                        f"({prev.finish_time} then {e.finish_time})"
                    )
            prev = e

    def __len__(self) -> int:
        return len(self.entries)

    def frame_ids(self) -> list[int]:
        return [e.frame_id for e in self.entries]

    def finish_times(self) -> list[float]:
        return [e.finish_time for e in self.entries]


@dataclass(frozen=True)
class PairedEntry:
    """Evaluation-time record for one world frame.

    source is the input frame id of the output shown at this frame, or None
    while no processed output exists yet (the initialization box is shown).
    """

    frame_id: int
    source: int | None
    box: BoundingBox


@dataclass(frozen=True)
class PairedResultLog:
    """Per-world-frame outputs after pairing each frame with the latest result."""

    entries: tuple[PairedEntry, ...]

    def __post_init__(self) -> None:
        prev_source = -1
        seen_source = False
        for i, e in enumerate(self.entries):
            if e.frame_id != i:
                raise ValueError(f"entry {i} carries frame id {e.frame_id}")
            if e.source is None:
                if seen_source:
                    raise ValueError("uninitialized entries must precede paired ones")
                continue
            if e.source > e.frame_id:
                raise ValueError(
                    f"paired source {e.source} is ahead of frame {e.frame_id}"
                )
            if e.source < prev_source:
                raise ValueError("paired source must be non-decreasing")
            prev_source = e.source
            seen_source = True

    def __len__(self) -> int:
        return len(self.entries)

    def boxes(self) -> list[BoundingBox]:
        return [e.box for e in self.entries]
