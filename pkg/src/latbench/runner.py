"""End-to-end run loop: schedule, forecast, track, and pair one sequence.

Modes
  offline        classic protocol: every frame is processed and frame i is
                 scored against output i, ignoring latency entirely
  lae_bare       latency-aware, no forecasting: each frame is scored against
                 the newest (stale) output available at its capture time
  lae_pre_only   a Kalman filter predicts the target state at each processed
                 frame to place the tracker's search prior, and its updated
                 state is what the run logs as the output for that frame
  lae_post_only  raw outputs feed a second Kalman filter that extrapolates
                 each emitted box forward to the frame being scored
  lae_pvt        both filters enabled
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

from .boxes import (
    BoundingBox,
    GroundTruthSequence,
    PairedEntry,
    PairedResultLog,
    RawEntry,
    RawResultLog,
)
from .forecaster import extrapolate_box, init_forecaster, predict, update
from .metrics import (
    auc,
    dp,
    improvement_delta,
    precision_curve,
    success_curve,
)
from .schedule import LatencyModel, finish_time, next_input_frame
from .trackers import FrameRef, Tracker

MODES = ("offline", "lae_bare", "lae_pvt", "lae_pre_only", "lae_post_only")

FrameProvider = Callable[[int], FrameRef]


@dataclass(frozen=True)
class RunConfig:
    """One cell of the experiment grid."""

    mode: str
    latency: LatencyModel
    frame_rate: float = 30.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")


def _default_provider(frame_id: int) -> FrameRef:
    return FrameRef(frame_id=frame_id)


def _timed_track(
    tracker: Tracker, frame: FrameRef, prior: BoundingBox
) -> tuple[BoundingBox, float]:
    t0 = time.monotonic()
    box = tracker.track(frame, prior)
    measured = time.monotonic() - t0
    # External trackers report the request/response time themselves, which
    # excludes client-side overhead.
    reported = getattr(tracker, "last_duration", None)
    return box, reported if reported is not None else measured


def run(
    seq: GroundTruthSequence,
    tracker: Tracker,
    cfg: RunConfig,
    frame_provider: FrameProvider | None = None,
) -> tuple[RawResultLog, PairedResultLog]:
    """Execute one sequence under one mode; returns (raw log, paired log)."""
    provider = frame_provider or _default_provider
    total = len(seq)
    rate = cfg.frame_rate
    init_box = seq.boxes[0]
    latency = cfg.latency
    latency.begin_run()

    if latency.is_wall_clock:
        t0 = time.monotonic()
        tracker.initialize(provider(0), init_box)
        measured = time.monotonic() - t0
        reported = getattr(tracker, "last_duration", None)
        latency.record(reported if reported is not None else measured)
        first_cost = latency.emitted[0]
    else:
        tracker.initialize(provider(0), init_box)
        first_cost = latency.duration(0)

    if cfg.mode == "offline":
        return _run_offline(seq, tracker, latency, provider, first_cost, rate)

    use_pre = cfg.mode in ("lae_pvt", "lae_pre_only")
    use_post = cfg.mode in ("lae_pvt", "lae_post_only")

    # Tracking pass: walk the grab-latest-frame schedule. Processing frame 0
    # is the initialization itself and logs the initialization box.
    pre_state = init_forecaster(init_box) if use_pre else None
    t_r = finish_time(0.0, 0, rate, first_cost)
    raw_entries = [RawEntry(frame_id=0, box=init_box, finish_time=t_r)]
    last_box = init_box
    last_frame = 0
    k = 0
    while True:
        nxt = next_input_frame(t_r, rate, total, last_frame)
        if nxt is None:
            break
        k += 1
        dt = nxt - last_frame
        if use_pre:
            pre_state = predict(pre_state, dt)
            prior = extrapolate_box(pre_state, 0)
        else:
            prior = last_box
        if latency.is_wall_clock:
            measured_box, cost = _timed_track(tracker, provider(nxt), prior)
            latency.record(cost)
            cost = latency.emitted[-1]
        else:
            measured_box = tracker.track(provider(nxt), prior)
            cost = latency.duration(k)
        if use_pre:
            pre_state = update(pre_state, measured_box)
            out_box = extrapolate_box(pre_state, 0)
        else:
            out_box = measured_box
        t_r = finish_time(t_r, nxt, rate, cost)
        raw_entries.append(RawEntry(frame_id=nxt, box=out_box, finish_time=t_r))
        last_box = out_box
        last_frame = nxt
    raw = RawResultLog(entries=tuple(raw_entries))

    # Pairing pass: score each world frame against the newest finished output.
    # The extrapolation filter updates once per distinct raw output the moment
    # it becomes the paired one (catching up over any outputs that were never
    # the newest), and predicts afresh every frame from its last update.
    post_state = init_forecaster(init_box) if use_post else None
    consumed = 0
    paired_entries: list[PairedEntry] = []
    cur = -1
    n = len(raw_entries)
    for i in range(total):
        t_g = i / rate
        while cur + 1 < n and raw_entries[cur + 1].finish_time <= t_g:
            cur += 1
        if cur < 0:
            paired_entries.append(PairedEntry(frame_id=i, source=None, box=init_box))
            continue
        src = raw_entries[cur].frame_id
        if use_post and src > 0:
            while consumed < cur:
                consumed += 1
                e = raw_entries[consumed]
                step = e.frame_id - raw_entries[consumed - 1].frame_id
                post_state = update(predict(post_state, step), e.box)
            box = extrapolate_box(post_state, i - src)
        else:
            box = raw_entries[cur].box
        paired_entries.append(PairedEntry(frame_id=i, source=src, box=box))
    return raw, PairedResultLog(entries=tuple(paired_entries))


def _run_offline(
    seq: GroundTruthSequence,
    tracker: Tracker,
    latency: LatencyModel,
    provider: FrameProvider,
    first_cost: float,
    rate: float,
) -> tuple[RawResultLog, PairedResultLog]:
    init_box = seq.boxes[0]
    t = finish_time(0.0, 0, rate, first_cost)
    raw_entries = [RawEntry(frame_id=0, box=init_box, finish_time=t)]
    paired_entries = [PairedEntry(frame_id=0, source=0, box=init_box)]
    prior = init_box
    for i in range(1, len(seq)):
        if latency.is_wall_clock:
            box, cost = _timed_track(tracker, provider(i), prior)
            latency.record(cost)
            cost = latency.emitted[-1]
        else:
            box = tracker.track(provider(i), prior)
            cost = latency.duration(i)
        t = t + cost
        raw_entries.append(RawEntry(frame_id=i, box=box, finish_time=t))
        paired_entries.append(PairedEntry(frame_id=i, source=i, box=box))
        prior = box
    return (
        RawResultLog(entries=tuple(raw_entries)),
        PairedResultLog(entries=tuple(paired_entries)),
    )


@dataclass(frozen=True)
class ImprovementRecord:
    """Metric values of two runs plus their relative change in percent."""

    mode_before: str
    mode_after: str
    dp_before: float
    dp_after: float
    auc_before: float
    auc_after: float
    dp_delta_pct: float | None
    auc_delta_pct: float | None


def compare(
    seq: GroundTruthSequence,
    tracker: Tracker,
    cfg_before: RunConfig,
    cfg_after: RunConfig,
    frame_provider: FrameProvider | None = None,
) -> ImprovementRecord:
    """Run two configurations on the same sequence and report the change.

    Both runs must share the seed and latency source so the comparison
    isolates the mode difference.
    """
    _, paired_before = run(seq, tracker, cfg_before, frame_provider)
    _, paired_after = run(seq, tracker, cfg_after, frame_provider)
    dp_b = dp(precision_curve(paired_before, seq))
    dp_a = dp(precision_curve(paired_after, seq))
    auc_b = auc(success_curve(paired_before, seq))
    auc_a = auc(success_curve(paired_after, seq))
    return ImprovementRecord(
        mode_before=cfg_before.mode,
        mode_after=cfg_after.mode,
        dp_before=dp_b,
        dp_after=dp_a,
        auc_before=auc_b,
        auc_after=auc_a,
        dp_delta_pct=improvement_delta(dp_b, dp_a),
        auc_delta_pct=improvement_delta(auc_b, auc_a),
    )
