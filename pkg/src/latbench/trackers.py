"""Tracker implementations behind a tiny two-call interface.

A tracker is anything with initialize(frame, box) and track(frame, prior).
The prior box is advisory: a bare tracker may ignore it, while the runner's
forecasting modes center it on the predicted target state. Built-in trackers
are desk-scale; heavyweight trackers plug in as external processes speaking a
JSON-lines protocol over stdio.
"""
from __future__ import annotations

import json
import math
import os
import select
import shlex
import subprocess
import time
from dataclasses import dataclass
from typing import Any, Protocol, runtime_checkable

import numpy as np

from .boxes import BoundingBox, GroundTruthSequence, center_error


@dataclass(frozen=True)
class FrameRef:
    """Reference to one world frame as seen by a tracker.

    Built-in synthetic trackers only need the frame id; pixel trackers get a
    grayscale array; external trackers get a path to pass over the wire.
    """

    frame_id: int
    image: Any | None = None
    path: str | None = None


@runtime_checkable
class Tracker(Protocol):
    def initialize(self, frame: FrameRef, box: BoundingBox) -> None: ...

    def track(self, frame: FrameRef, prior: BoundingBox) -> BoundingBox: ...


class SyntheticTracker:
    """Ground-truth oracle with seeded noise and a bounded search radius.

    If the true target center lies within search_radius of the prior center,
    the output is the true box plus Gaussian noise on all four fields.
    Otherwise the target has left the search region and the output sticks at
    the prior, emulating a lost track.
    """

    def __init__(
        self,
        truth: GroundTruthSequence,
        noise_sigma: float = 0.0,
        search_radius: float = math.inf,
        seed: int = 0,
    ):
        self.truth = truth
        self.noise_sigma = noise_sigma
        self.search_radius = search_radius
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def initialize(self, frame: FrameRef, box: BoundingBox) -> None:
        self._rng = np.random.default_rng(self.seed)

    def track(self, frame: FrameRef, prior: BoundingBox) -> BoundingBox:
        true = self.truth.boxes[frame.frame_id]
        if center_error(true, prior) > self.search_radius:
            return prior
        if self.noise_sigma <= 0:
            return true
        n = self._rng.normal(0.0, self.noise_sigma, size=4)
        return BoundingBox(
            true.x + n[0],
            true.y + n[1],
            max(0.0, true.w + n[2]),
            max(0.0, true.h + n[3]),
        )


def _ncc_scores(window: np.ndarray, template: np.ndarray) -> np.ndarray:
    """Normalized cross-correlation of the template at every placement.

    Placements where either side has (numerically) zero variance score -inf,
    since correlation is undefined there.
    """
    th, tw = template.shape
    n = th * tw
    t0 = template - template.mean()
    tvar = float((t0 * t0).sum())
    views = np.lib.stride_tricks.sliding_window_view(window, (th, tw))
    wsum = views.sum(axis=(-2, -1))
    wsq = (views * views).sum(axis=(-2, -1))
    wvar = wsq - wsum * wsum / n
    cross = np.einsum("ijkl,kl->ij", views, t0)
    valid = (wvar > 1e-9) & (tvar > 1e-9)
    scores = np.full(cross.shape, -np.inf)
    denom = np.sqrt(np.where(valid, wvar * tvar, 1.0))
    np.divide(cross, denom, out=scores, where=valid)
    return scores


class TemplateTracker:
    """Grayscale template matcher: best normalized cross-correlation wins.

    The search window is the prior box inflated about its center and clipped
    to the image. Ties go to the smallest row, then column. Degenerate cases
    (window smaller than the template, or nothing correlates) return the
    prior unchanged.
    """

    def __init__(self, inflate: float = 2.0):
        if inflate < 1.0:
            raise ValueError("inflation factor must be >= 1")
        self.inflate = inflate
        self.template: np.ndarray | None = None
        self.size: tuple[float, float] = (0.0, 0.0)

    def initialize(self, frame: FrameRef, box: BoundingBox) -> None:
        if frame.image is None:
            raise ValueError(
                "template tracking needs grayscale frames; the sequence has no images"
            )
        img = np.asarray(frame.image, dtype=float)
        top = max(int(round(box.y)), 0)
        left = max(int(round(box.x)), 0)
        bottom = min(int(round(box.y + box.h)), img.shape[0])
        right = min(int(round(box.x + box.w)), img.shape[1])
        if bottom <= top or right <= left:
            raise ValueError("initialization box lies outside the image")
        self.template = img[top:bottom, left:right].copy()
        self.size = (float(right - left), float(bottom - top))

    def track(self, frame: FrameRef, prior: BoundingBox) -> BoundingBox:
        if self.template is None:
            raise RuntimeError("track() before initialize()")
        if frame.image is None:
            raise ValueError(f"no image for frame {frame.frame_id}")
        img = np.asarray(frame.image, dtype=float)
        cx, cy = prior.center()
        half_w = prior.w * self.inflate / 2.0
        half_h = prior.h * self.inflate / 2.0
        left = max(int(math.floor(cx - half_w)), 0)
        top = max(int(math.floor(cy - half_h)), 0)
        right = min(int(math.ceil(cx + half_w)), img.shape[1])
        bottom = min(int(math.ceil(cy + half_h)), img.shape[0])
        th, tw = self.template.shape
        if right - left < tw or bottom - top < th:
            return prior
        scores = _ncc_scores(img[top:bottom, left:right], self.template)
        if not np.isfinite(scores).any():
            return prior
        row, col = np.unravel_index(int(np.argmax(scores)), scores.shape)
        return BoundingBox(float(left + col), float(top + row), self.size[0], self.size[1])


class ExternalTrackerError(RuntimeError):
    """Protocol failure talking to an external tracker process."""


def _format_box(box: BoundingBox) -> list[float]:
    return [round(float(v), 6) for v in box.as_tuple()]


class ExternalTracker:
    """Client for a tracker running as a child process.

    Wire protocol (one JSON object per line, UTF-8, over stdin/stdout):

        -> {"type": "init", "frame": "<path-or-empty>", "box": [x, y, w, h]}
        <- {"type": "ready"}
        -> {"type": "track", "frame_id": N, "frame": "<path-or-empty>",
            "prior": [x, y, w, h]}
        <- {"type": "result", "box": [x, y, w, h]}
        -> {"type": "quit"}

    Requests are strictly synchronous. The wall-clock time between sending a
    track request and receiving its result is kept in last_duration so a
    wall-clock latency model can record real processing times.
    """

    def __init__(self, command: str | list[str], timeout_s: float = 30.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout_s = timeout_s
        self._proc: subprocess.Popen | None = None
        self._buf = bytearray()
        self.last_duration: float | None = None

    def _ensure_started(self) -> None:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
            self._buf = bytearray()

    def _send(self, obj: dict, context: str) -> None:
        assert self._proc is not None and self._proc.stdin is not None
        try:
            self._proc.stdin.write((json.dumps(obj) + "\n").encode("utf-8"))
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ExternalTrackerError(
                f"external tracker died while sending {context}"
            ) from exc

    def _read_line(self, context: str) -> bytes:
        assert self._proc is not None and self._proc.stdout is not None
        fd = self._proc.stdout.fileno()
        deadline = time.monotonic() + self.timeout_s
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line = bytes(self._buf[:nl])
                del self._buf[: nl + 1]
                return line
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ExternalTrackerError(
                    f"external tracker timed out after {self.timeout_s}s during {context}"
                )
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                raise ExternalTrackerError(
                    f"external tracker exited during {context}"
                )
            self._buf.extend(chunk)

    def _receive(self, expected_type: str, context: str) -> dict:
        line = self._read_line(context)
        try:
            msg = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ExternalTrackerError(
                f"malformed message from external tracker during {context}: {line!r}"
            ) from exc
        if not isinstance(msg, dict) or msg.get("type") != expected_type:
            raise ExternalTrackerError(
                f"unexpected message during {context}: expected "
                f"{expected_type!r}, got {msg!r}"
            )
        return msg

    def initialize(self, frame: FrameRef, box: BoundingBox) -> None:
        self._ensure_started()
        self._send(
            {"type": "init", "frame": frame.path or "", "box": _format_box(box)},
            "initialization",
        )
        t0 = time.monotonic()
        self._receive("ready", "initialization")
        self.last_duration = time.monotonic() - t0

    def track(self, frame: FrameRef, prior: BoundingBox) -> BoundingBox:
        if self._proc is None:
            raise ExternalTrackerError("track() before initialize()")
        context = f"tracking frame {frame.frame_id}"
        self._send(
            {
                "type": "track",
                "frame_id": frame.frame_id,
                "frame": frame.path or "",
                "prior": _format_box(prior),
            },
            context,
        )
        t0 = time.monotonic()
        msg = self._receive("result", context)
        self.last_duration = time.monotonic() - t0
        box = msg.get("box")
        if (
            not isinstance(box, list)
            or len(box) != 4
            or not all(isinstance(v, (int, float)) for v in box)
        ):
            raise ExternalTrackerError(f"bad result box during {context}: {box!r}")
        try:
            return BoundingBox(*(float(v) for v in box))
        except ValueError as exc:
            raise ExternalTrackerError(f"invalid box during {context}: {box!r}") from exc

    def close(self) -> None:
        if self._proc is None:
            return
        try:
            if self._proc.poll() is None and self._proc.stdin is not None:
                self._proc.stdin.write(b'{"type": "quit"}\n')
                self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            pass
        try:
            self._proc.wait(timeout=5.0)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()
        self._proc = None

    def __enter__(self) -> "ExternalTracker":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()
