"""Constant-velocity Kalman filter over (cx, cy, w, h)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import BBox


@dataclass(frozen=True)
class MotionConfig:
    pos_sigma: float = 1.0   # process noise, px
    vel_sigma: float = 0.5   # process noise, px/frame
    meas_sigma: float = 1.0  # measurement noise, px
    init_pos_sigma: float = 2.0
    init_vel_sigma: float = 10.0


_F = np.eye(8)
_F[:4, 4:] = np.eye(4)
_H = np.eye(4, 8)


@dataclass(frozen=True, eq=False)
class KalmanState:
    mean: np.ndarray
    cov: np.ndarray


def _q(cfg: MotionConfig) -> np.ndarray:
    return np.diag([cfg.pos_sigma ** 2] * 4 + [cfg.vel_sigma ** 2] * 4)


def _measure(b: BBox) -> np.ndarray:
    cx, cy = b.center
    z = np.array([cx, cy, b.w, b.h], dtype=float)
    if not np.isfinite(z).all():
        raise ValueError(f"non-finite measurement {b}")
    return z


def kf_init(b: BBox, cfg: MotionConfig = MotionConfig()) -> KalmanState:
    mean = np.zeros(8)
    mean[:4] = _measure(b)
    cov = np.diag([cfg.init_pos_sigma ** 2] * 4 + [cfg.init_vel_sigma ** 2] * 4)
    return KalmanState(mean, cov)


def kf_predict(s: KalmanState, cfg: MotionConfig = MotionConfig()) -> KalmanState:
    mean = _F @ s.mean
    cov = _F @ s.cov @ _F.T + _q(cfg)
    return KalmanState(mean, 0.5 * (cov + cov.T))


def kf_update(s: KalmanState, b: BBox, cfg: MotionConfig = MotionConfig()) -> KalmanState:
    z = _measure(b)
    R = np.eye(4) * cfg.meas_sigma ** 2
    S = _H @ s.cov @ _H.T + R
    # K = P H^T S^-1, via solve on the symmetric S
    K = np.linalg.solve(S, _H @ s.cov).T
    mean = s.mean + K @ (z - _H @ s.mean)
    # Joseph form keeps the covariance symmetric PSD
    IKH = np.eye(8) - K @ _H
    cov = IKH @ s.cov @ IKH.T + K @ R @ K.T
    return KalmanState(mean, 0.5 * (cov + cov.T))


def predicted_box(s: KalmanState) -> BBox:
    cx, cy, w, h = s.mean[:4]
    w = max(float(w), 0.0)
    h = max(float(h), 0.0)
    return BBox(float(cx) - w / 2.0, float(cy) - h / 2.0, w, h)
