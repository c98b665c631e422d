"""Latency-aware tracking schedule: which frames get processed, and when.

A tracker that is slower than the camera cannot process every frame. Whenever
it becomes free it grabs the latest frame already captured, or idles until the
next one arrives. This module simulates that schedule for a given source of
per-frame processing times and pairs every world frame with the newest output
available at its capture time.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .boxes import RawResultLog


class TraceExhausted(RuntimeError):
    """Raised when a latency trace is shorter than the schedule needs."""


class LatencyModel:
    """Source of per-processed-frame durations, in seconds.

    Modes:
      constant     every frame costs the same, except an optional distinct
                   first-frame cost covering tracker initialization
      trace        replay a recorded list of durations, first entry included
                   initialization; raises TraceExhausted when it runs out
      random       Gaussian durations from a seeded generator, floored at a
                   small positive value; reproducible per seed
      wallclock    durations are measured by the caller and recorded here

    duration(k) returns the cost of the k-th processing event; k = 0 is the
    first processed frame (frame 0, including initialization). A model keeps
    the durations actually used in ``emitted`` so a run can be replayed from
    a written trace.
    """

    def __init__(
        self,
        mode: str,
        *,
        constant_s: float | None = None,
        trace: list[float] | None = None,
        mean_s: float | None = None,
        std_s: float | None = None,
        seed: int = 0,
        init_latency_s: float | None = None,
        floor_s: float = 1e-3,
    ):
        if mode not in ("constant", "trace", "random", "wallclock"):
            raise ValueError(f"unknown latency mode {mode!r}")
        self.mode = mode
        self.constant_s = constant_s
        self.trace = list(trace) if trace is not None else None
        self.mean_s = mean_s
        self.std_s = std_s
        self.seed = seed
        self.init_latency_s = init_latency_s
        self.floor_s = floor_s
        self._rng: np.random.Generator | None = None
        self.emitted: list[float] = []
        self._validate()

    def _validate(self) -> None:
        if self.mode == "constant":
            if self.constant_s is None or self.constant_s <= 0:
                raise ValueError("constant mode needs a positive duration")
        elif self.mode == "trace":
            if not self.trace:
                raise ValueError("trace mode needs a non-empty trace")
            for i, v in enumerate(self.trace):
                if not (math.isfinite(v) and v > 0):
                    raise ValueError(f"trace entry {i} must be positive, got {v!r}")
        elif self.mode == "random":
            if self.mean_s is None or self.std_s is None:
                raise ValueError("random mode needs mean and std")
            if self.mean_s <= 0 or self.std_s < 0:
                raise ValueError("random mode needs mean > 0 and std >= 0")
        if self.init_latency_s is not None and self.init_latency_s <= 0:
            raise ValueError("init latency must be positive")

    @classmethod
    def constant(cls, seconds: float, init_latency_s: float | None = None) -> "LatencyModel":
        return cls("constant", constant_s=seconds, init_latency_s=init_latency_s)

    @classmethod
    def from_trace(cls, durations: list[float]) -> "LatencyModel":
        return cls("trace", trace=durations)

    @classmethod
    def seeded_random(
        cls,
        mean_s: float,
        std_s: float,
        seed: int = 0,
        init_latency_s: float | None = None,
        floor_s: float = 1e-3,
    ) -> "LatencyModel":
        return cls(
            "random",
            mean_s=mean_s,
            std_s=std_s,
            seed=seed,
            init_latency_s=init_latency_s,
            floor_s=floor_s,
        )

    @classmethod
    def wall_clock(cls) -> "LatencyModel":
        return cls("wallclock")

    @property
    def is_wall_clock(self) -> bool:
        return self.mode == "wallclock"

    def begin_run(self) -> None:
        """Reset per-run state so repeated runs emit identical sequences."""
        self.emitted = []
        if self.mode == "random":
            self._rng = np.random.default_rng(self.seed)

    def duration(self, k: int) -> float:
        """Processing time of the k-th processed frame."""
        if self.mode == "wallclock":
            raise RuntimeError("wall-clock durations are measured, not emitted")
        if self.mode == "constant":
            if k == 0 and self.init_latency_s is not None:
                d = self.init_latency_s
            else:
                d = float(self.constant_s)
        elif self.mode == "trace":
            assert self.trace is not None
            if k >= len(self.trace):
                raise TraceExhausted(
                    f"latency trace has {len(self.trace)} entries but the "
                    f"schedule needs at least {k + 1}"
                )
            d = self.trace[k]
        else:
            if k == 0 and self.init_latency_s is not None:
                d = self.init_latency_s
            else:
                if self._rng is None:
                    self.begin_run()
                assert self._rng is not None
                d = max(self.floor_s, float(self._rng.normal(self.mean_s, self.std_s)))
        self.emitted.append(d)
        return d

    def record(self, seconds: float) -> None:
        """Store a measured duration (wall-clock mode)."""
        if seconds <= 0:
            # Sub-microsecond track calls round up so replay stays causal.
            seconds = 1e-6
        self.emitted.append(seconds)


@dataclass(frozen=True)
class ScheduleResult:
    """Processed frame ids and the times their outputs became available."""

    frames: tuple[int, ...]
    finish_times: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.frames)


def latest_captured_frame(t: float, frame_rate: float, total_frames: int) -> int:
    """Largest frame id whose capture time is <= t, clamped to the sequence end.

    Equality counts as captured. The float product floor is adjusted so the
    result is exactly the argmax over i of (i / frame_rate <= t).
    """
    c = int(math.floor(t * frame_rate))
    while (c + 1) / frame_rate <= t:
        c += 1
    while c > 0 and c / frame_rate > t:
        c -= 1
    return min(max(c, 0), total_frames - 1)


def next_input_frame(
    t_prev: float, frame_rate: float, total_frames: int, j_prev: int
) -> int | None:
    """Frame the tracker processes after finishing at t_prev, or None at the end.

    Returns the latest captured frame if it is newer than the last processed
    one; otherwise the tracker idles until frame j_prev + 1 arrives.
    """
    c = latest_captured_frame(t_prev, frame_rate, total_frames)
    if c > j_prev:
        return c
    if j_prev + 1 >= total_frames:
        return None
    return j_prev + 1


def finish_time(t_prev: float, frame_id: int, frame_rate: float, processing_s: float) -> float:
    """Time at which processing of frame_id completes.

    Work cannot start before the frame is captured, so an idle gap is inserted
    when the tracker is ahead of the camera.
    """
    return max(t_prev, frame_id / frame_rate) + processing_s


def simulate_schedule(
    total_frames: int, frame_rate: float, latency: LatencyModel
) -> ScheduleResult:
    """Run the grab-latest-frame schedule over a whole sequence.

    Frame 0 is always processed first; its cost covers initialization. The
    emitted frame list is a strictly increasing subsequence of the world
    frames starting at 0.
    """
    if total_frames < 1:
        raise ValueError("need at least one frame")
    if latency.is_wall_clock:
        raise RuntimeError("wall-clock latency cannot be simulated ahead of time")
    latency.begin_run()
    frames = [0]
    times = [finish_time(0.0, 0, frame_rate, latency.duration(0))]
    k = 0
    while True:
        nxt = next_input_frame(times[-1], frame_rate, total_frames, frames[-1])
        if nxt is None:
            break
        k += 1
        times.append(finish_time(times[-1], nxt, frame_rate, latency.duration(k)))
        frames.append(nxt)
    return ScheduleResult(frames=tuple(frames), finish_times=tuple(times))


def pair_frame(frame_id: int, frame_rate: float, log: RawResultLog) -> int | None:
    """Input frame id of the newest output finished by frame_id's capture time.

    Returns None while nothing has finished yet, meaning the evaluation shows
    the initialization box.
    """
    if len(log) == 0:
        return None
    t = frame_id / frame_rate
    times = log.finish_times()
    idx = bisect.bisect_right(times, t) - 1
    if idx < 0:
        return None
    return log.entries[idx].frame_id


def pair_all(total_frames: int, frame_rate: float, log: RawResultLog) -> list[int | None]:
    """pair_frame for every world frame in one forward sweep."""
    out: list[int | None] = []
    cur = -1
    n = len(log)
    for i in range(total_frames):
        t = i / frame_rate
        while cur + 1 < n and log.entries[cur + 1].finish_time <= t:
            cur += 1
        out.append(None if cur < 0 else log.entries[cur].frame_id)
    return out
