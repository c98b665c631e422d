"""Constant-velocity Kalman filter over box state.

State is the 8-vector [x, y, w, h, dx, dy, dw, dh] with velocities in pixels
per frame; time intervals are frame-index differences, so the filter is
time-varying: both the transition matrix and the process noise depend on how
many frames elapsed between observations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import BoundingBox

STATE_DIM = 8
MEAS_DIM = 4

# Measurement picks the first four state components.
SLICING_MATRIX = np.hstack([np.eye(MEAS_DIM), np.zeros((MEAS_DIM, MEAS_DIM))])
MEASUREMENT_NOISE = 10.0 * np.eye(MEAS_DIM)
INITIAL_COVARIANCE_SCALE = 10.0
MIN_OUTPUT_SIZE = 1.0


@dataclass(frozen=True)
class ForecasterState:
    """Filter state: 8-vector mean and 8x8 covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        if self.mean.shape != (STATE_DIM,):
            raise ValueError(f"mean must have shape ({STATE_DIM},), got {self.mean.shape}")
        if self.cov.shape != (STATE_DIM, STATE_DIM):
            raise ValueError(f"cov must be {STATE_DIM}x{STATE_DIM}, got {self.cov.shape}")

    def box(self) -> BoundingBox:
        x, y, w, h = self.mean[:MEAS_DIM]
        return BoundingBox(float(x), float(y), float(w), float(h))


def transition_matrix(dt: float) -> np.ndarray:
    """Block matrix [[I, dt*I], [0, I]] advancing position by velocity * dt."""
    f = np.eye(STATE_DIM)
    f[:MEAS_DIM, MEAS_DIM:] = dt * np.eye(MEAS_DIM)
    return f


def process_noise(dt: float) -> np.ndarray:
    """Isotropic process noise dt^2 * I; longer gaps mean larger uncertainty."""
    return (dt * dt) * np.eye(STATE_DIM)


def init_forecaster(box: BoundingBox) -> ForecasterState:
    """State from a single box: zero velocity, covariance 10 * I."""
    mean = np.array([box.x, box.y, box.w, box.h, 0.0, 0.0, 0.0, 0.0])
    cov = INITIAL_COVARIANCE_SCALE * np.eye(STATE_DIM)
    return ForecasterState(mean=mean, cov=cov)


def predict(state: ForecasterState, dt: float) -> ForecasterState:
    """Advance the state by dt frames; the input state is left untouched."""
    f = transition_matrix(dt)
    mean = f @ state.mean
    cov = f @ state.cov @ f.T + process_noise(dt)
    # matmul sums [i,j] and [j,i] in different orders; keep symmetry exact
    cov = (cov + cov.T) / 2.0
    return ForecasterState(mean=mean, cov=cov)


def update(state: ForecasterState, z: BoundingBox) -> ForecasterState:
    """Fold a measured box into a predicted state.

    The innovation covariance is symmetric positive definite because the
    measurement noise is a fixed 10 * I, so the solve cannot fail; the
    posterior covariance is re-symmetrized to suppress float drift.
    """
    h = SLICING_MATRIX
    p = state.cov
    innovation_cov = h @ p @ h.T + MEASUREMENT_NOISE
    gain = np.linalg.solve(innovation_cov, h @ p.T).T
    residual = np.array(z.as_tuple()) - h @ state.mean
    mean = state.mean + gain @ residual
    cov = (np.eye(STATE_DIM) - gain @ h) @ p
    cov = (cov + cov.T) / 2.0
    return ForecasterState(mean=mean, cov=cov)


def extrapolate_box(state: ForecasterState, dt: float) -> BoundingBox:
    """Box read off the state advanced dt frames ahead.

    Width and height are clamped to at least one pixel so downstream metrics
    always see a valid box; the filter state itself is never clamped.
    """
    f = transition_matrix(dt)
    x, y, w, h = (f @ state.mean)[:MEAS_DIM]
    return BoundingBox(
        float(x), float(y),
        max(float(w), MIN_OUTPUT_SIZE),
        max(float(h), MIN_OUTPUT_SIZE),
    )
