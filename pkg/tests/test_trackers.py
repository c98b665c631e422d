from __future__ import annotations

import math
import os
import sys
import textwrap

import numpy as np
import pytest

from latbench.boxes import BoundingBox, GroundTruthSequence, center_error
from latbench.trackers import (
    ExternalTracker,
    ExternalTrackerError,
    FrameRef,
    SyntheticTracker,
    TemplateTracker,
    Tracker,
)

from oracles import ncc_by_loop

ECHO_TRACKER = os.path.join(os.path.dirname(__file__), "..", "scripts", "echo_tracker.py")


def linear_sequence(T=20, speed=4.0, box=(0.0, 0.0, 10.0, 10.0)) -> GroundTruthSequence:
    x, y, w, h = box
    return GroundTruthSequence(
        boxes=tuple(BoundingBox(x + speed * i, y, w, h) for i in range(T))
    )


# ---------------------------------------------------------------------------
# synthetic tracker


def test_synthetic_is_exact_without_noise():
    seq = linear_sequence()
    t = SyntheticTracker(seq, noise_sigma=0.0, search_radius=50.0)
    t.initialize(FrameRef(0), seq.boxes[0])
    assert t.track(FrameRef(3), seq.boxes[2]) == seq.boxes[3]


def test_synthetic_sticks_when_target_out_of_reach():
    seq = linear_sequence(speed=100.0)
    t = SyntheticTracker(seq, noise_sigma=0.0, search_radius=50.0)
    t.initialize(FrameRef(0), seq.boxes[0])
    prior = seq.boxes[0]
    out = t.track(FrameRef(1), prior)  # target jumped 100 px
    assert out == prior


def test_synthetic_conforms_to_protocol():
    assert isinstance(SyntheticTracker(linear_sequence()), Tracker)


def test_synthetic_repeatable_with_fixed_seed():
    seq = linear_sequence()

    def run_once():
        t = SyntheticTracker(seq, noise_sigma=2.0, search_radius=100.0, seed=42)
        t.initialize(FrameRef(0), seq.boxes[0])
        return [t.track(FrameRef(i), seq.boxes[i - 1]) for i in range(1, 10)]

    assert run_once() == run_once()


def test_synthetic_initialize_resets_noise_stream():
    seq = linear_sequence()
    t = SyntheticTracker(seq, noise_sigma=2.0, search_radius=100.0, seed=7)
    t.initialize(FrameRef(0), seq.boxes[0])
    first = [t.track(FrameRef(i), seq.boxes[i - 1]) for i in range(1, 5)]
    t.initialize(FrameRef(0), seq.boxes[0])
    second = [t.track(FrameRef(i), seq.boxes[i - 1]) for i in range(1, 5)]
    assert first == second


# ---------------------------------------------------------------------------
# template tracker


def render(target_x: int, target_y: int, size=8, shape=(60, 80)) -> np.ndarray:
    """Flat background with a textured square pasted at (target_x, target_y)."""
    img = np.full(shape, 100.0)
    rng = np.random.default_rng(0)
    patch = rng.uniform(0, 255, size=(size, size))
    img[target_y : target_y + size, target_x : target_x + size] = patch
    return img


def test_template_recovers_exact_paste_location():
    t = TemplateTracker(inflate=2.0)
    t.initialize(FrameRef(0, image=render(20, 20)), BoundingBox(20, 20, 8, 8))
    for dx, dy in [(0, 0), (3, 2), (-4, 1), (2, -3)]:
        out = t.track(
            FrameRef(1, image=render(20 + dx, 20 + dy)), BoundingBox(20, 20, 8, 8)
        )
        assert out == BoundingBox(20 + dx, 20 + dy, 8, 8)


def test_template_exhaustive_small_grid():
    t = TemplateTracker(inflate=2.0)
    t.initialize(FrameRef(0, image=render(20, 20)), BoundingBox(20, 20, 8, 8))
    prior = BoundingBox(20, 20, 8, 8)
    for dx in range(-3, 4):
        for dy in range(-3, 4):
            out = t.track(FrameRef(1, image=render(20 + dx, 20 + dy)), prior)
            assert center_error(out, BoundingBox(20 + dx, 20 + dy, 8, 8)) == 0.0


def test_template_uniform_image_returns_prior():
    t = TemplateTracker()
    t.initialize(FrameRef(0, image=render(20, 20)), BoundingBox(20, 20, 8, 8))
    prior = BoundingBox(18, 22, 8, 8)
    out = t.track(FrameRef(1, image=np.full((60, 80), 55.0)), prior)
    assert out == prior


def test_template_flat_template_returns_prior():
    t = TemplateTracker()
    flat = np.full((60, 80), 9.0)
    t.initialize(FrameRef(0, image=flat), BoundingBox(20, 20, 8, 8))
    out = t.track(FrameRef(1, image=render(25, 25)), BoundingBox(20, 20, 8, 8))
    assert out == BoundingBox(20, 20, 8, 8)


def test_template_window_smaller_than_template_returns_prior():
    t = TemplateTracker(inflate=1.0)
    t.initialize(FrameRef(0, image=render(20, 20)), BoundingBox(20, 20, 8, 8))
    # a prior shoved into the corner clips the window below the template size
    prior = BoundingBox(-6, -6, 8, 8)
    assert t.track(FrameRef(1, image=render(30, 30)), prior) == prior


def test_template_search_confined_to_window():
    t = TemplateTracker(inflate=2.0)
    t.initialize(FrameRef(0, image=render(20, 20)), BoundingBox(20, 20, 8, 8))
    prior = BoundingBox(20, 20, 8, 8)
    # the target moved far beyond the inflated window; output stays inside it
    out = t.track(FrameRef(1, image=render(60, 40)), prior)
    cx, cy = out.center()
    px, py = prior.center()
    assert abs(cx - px) <= prior.w * 2
    assert abs(cy - py) <= prior.h * 2


def test_template_matches_bruteforce_correlation():
    img = np.random.default_rng(3).uniform(0, 255, size=(40, 50))
    template = img[10:18, 12:20].copy()
    window = img[5:30, 5:35]
    from latbench.trackers import _ncc_scores

    got = _ncc_scores(window, template)
    want = ncc_by_loop(window, template)
    mask = np.isfinite(want)
    assert np.allclose(got[mask], want[mask], atol=1e-9)
    assert np.array_equal(np.isfinite(got), mask)


def test_template_tie_breaks_to_smallest_row_then_column():
    # two identical pastes; the earlier (row, col) one must win
    img = np.full((40, 60), 10.0)
    rng = np.random.default_rng(1)
    patch = rng.uniform(0, 255, size=(6, 6))
    img[20:26, 10:16] = patch
    img[20:26, 30:36] = patch  # same row, later column
    t = TemplateTracker(inflate=6.0)
    init_img = np.full((40, 60), 10.0)
    init_img[20:26, 22:28] = patch
    t.initialize(FrameRef(0, image=init_img), BoundingBox(22, 20, 6, 6))
    out = t.track(FrameRef(1, image=img), BoundingBox(22, 20, 6, 6))
    assert (out.x, out.y) == (10.0, 20.0)


# ---------------------------------------------------------------------------
# external tracker protocol


def echo_command(*extra: str) -> list[str]:
    return [sys.executable, ECHO_TRACKER, *extra]


def test_external_echo_round_trip():
    with ExternalTracker(echo_command()) as t:
        t.initialize(FrameRef(0, path=""), BoundingBox(1, 2, 3, 4))
        prior = BoundingBox(10.5, 20.25, 30.0, 40.125)
        out = t.track(FrameRef(1, path=""), prior)
        assert out == prior
        assert t.last_duration is not None and t.last_duration >= 0


def test_external_box_codec_six_decimals():
    with ExternalTracker(echo_command()) as t:
        t.initialize(FrameRef(0, path=""), BoundingBox(0, 0, 1, 1))
        prior = BoundingBox(1.23456789, 2.3456789, 3.456789012, 4.00000049)
        out = t.track(FrameRef(1, path=""), prior)
        for got, sent in zip(out.as_tuple(), prior.as_tuple()):
            assert got == pytest.approx(sent, abs=5e-7)


def test_external_shift_tracker_applies_shift():
    with ExternalTracker(echo_command("--shift", "5", "-3")) as t:
        t.initialize(FrameRef(0, path=""), BoundingBox(0, 0, 10, 10))
        out = t.track(FrameRef(1, path=""), BoundingBox(10, 10, 10, 10))
        assert out == BoundingBox(15, 7, 10, 10)


def _inline_tracker(body: str) -> list[str]:
    return [sys.executable, "-c", textwrap.dedent(body)]


def test_external_process_death_names_frame():
    cmd = _inline_tracker(
        """
        import json, sys
        line = sys.stdin.readline()
        print(json.dumps({"type": "ready"}), flush=True)
        sys.stdin.readline()  # first track request, then die silently
        """
    )
    t = ExternalTracker(cmd)
    t.initialize(FrameRef(0, path=""), BoundingBox(0, 0, 1, 1))
    with pytest.raises(ExternalTrackerError, match="frame 7"):
        t.track(FrameRef(7, path=""), BoundingBox(0, 0, 1, 1))
    t.close()


def test_external_malformed_message_rejected():
    cmd = _inline_tracker(
        """
        import sys
        sys.stdin.readline()
        print("this is not json", flush=True)
        sys.stdin.readline()
        """
    )
    t = ExternalTracker(cmd)
    with pytest.raises(ExternalTrackerError, match="malformed"):
        t.initialize(FrameRef(0, path=""), BoundingBox(0, 0, 1, 1))
    t.close()


def test_external_wrong_message_type_rejected():
    cmd = _inline_tracker(
        """
        import json, sys
        sys.stdin.readline()
        print(json.dumps({"type": "ready"}), flush=True)
        sys.stdin.readline()
        print(json.dumps({"type": "banana", "box": [1, 2, 3, 4]}), flush=True)
        """
    )
    t = ExternalTracker(cmd)
    t.initialize(FrameRef(0, path=""), BoundingBox(0, 0, 1, 1))
    with pytest.raises(ExternalTrackerError, match="banana"):
        t.track(FrameRef(3, path=""), BoundingBox(0, 0, 1, 1))
    t.close()


def test_external_timeout():
    cmd = _inline_tracker(
        """
        import sys, time
        sys.stdin.readline()
        time.sleep(30)
        """
    )
    t = ExternalTracker(cmd, timeout_s=0.3)
    with pytest.raises(ExternalTrackerError, match="timed out"):
        t.initialize(FrameRef(0, path=""), BoundingBox(0, 0, 1, 1))
    t.close()


def test_external_bad_box_payload():
    cmd = _inline_tracker(
        """
        import json, sys
        sys.stdin.readline()
        print(json.dumps({"type": "ready"}), flush=True)
        sys.stdin.readline()
        print(json.dumps({"type": "result", "box": [1, 2, 3]}), flush=True)
        """
    )
    t = ExternalTracker(cmd)
    t.initialize(FrameRef(0, path=""), BoundingBox(0, 0, 1, 1))
    with pytest.raises(ExternalTrackerError, match="frame 2"):
        t.track(FrameRef(2, path=""), BoundingBox(0, 0, 1, 1))
    t.close()
