"""Latency-aware benchmark and forecasting harness for single-object tracking."""

from .boxes import (
    BoundingBox,
    GroundTruthSequence,
    PairedEntry,
    PairedResultLog,
    RawEntry,
    RawResultLog,
    center_error,
    iou,
)
from .forecaster import (
    ForecasterState,
    extrapolate_box,
    init_forecaster,
    predict,
    process_noise,
    transition_matrix,
    update,
)
from .runner import MODES, ImprovementRecord, RunConfig, compare, run
from .schedule import (
    LatencyModel,
    ScheduleResult,
    TraceExhausted,
    finish_time,
    next_input_frame,
    pair_all,
    pair_frame,
    simulate_schedule,
)
from .trackers import (
    ExternalTracker,
    ExternalTrackerError,
    FrameRef,
    SyntheticTracker,
    TemplateTracker,
    Tracker,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "ExternalTracker",
    "ExternalTrackerError",
    "ForecasterState",
    "FrameRef",
    "GroundTruthSequence",
    "ImprovementRecord",
    "LatencyModel",
    "MODES",
    "PairedEntry",
    "PairedResultLog",
    "RawEntry",
    "RawResultLog",
    "RunConfig",
    "ScheduleResult",
    "SyntheticTracker",
    "TemplateTracker",
    "TraceExhausted",
    "Tracker",
    "center_error",
    "compare",
    "extrapolate_box",
    "finish_time",
    "init_forecaster",
    "iou",
    "next_input_frame",
    "pair_all",
    "pair_frame",
    "predict",
    "process_noise",
    "run",
    "simulate_schedule",
    "transition_matrix",
    "update",
    "__version__",
]
