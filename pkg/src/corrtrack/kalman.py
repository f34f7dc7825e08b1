"""Constant-velocity Kalman filter over ``(cx, cy, aspect, h)`` box states.

Noise standard deviations scale with the box height: ``1/20`` of the
height for positions and ``1/160`` for velocities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidBoxError

__all__ = [
    "KalmanState",
    "KalmanFilter",
    "box_to_xyah",
    "xyah_to_box",
    "kalman_init",
    "kalman_predict",
    "kalman_update",
]

NDIM = 4


def _check_box(box):
    box = np.asarray(box, dtype=np.float64)
    if box.shape != (4,) or not np.all(np.isfinite(box)):
        raise InvalidBoxError(f"box must be 4 finite numbers, got {box!r}")
    if box[2] <= 0 or box[3] <= 0:
        raise InvalidBoxError(f"box width and height must be positive, got {tuple(box)}")
    return box


def box_to_xyah(box) -> np.ndarray:
    x, y, w, h = _check_box(box)
    return np.array([x + w / 2, y + h / 2, w / h, h])


def xyah_to_box(xyah) -> np.ndarray:
    cx, cy, a, h = xyah[:4]
    w = a * h
    return np.array([cx - w / 2, cy - h / 2, w, h])


@dataclass(frozen=True, eq=False)
class KalmanState:
    mean: np.ndarray
    covariance: np.ndarray

    def box(self) -> np.ndarray:
        """Top-left ``(x, y, w, h)`` of the current mean."""
        return xyah_to_box(self.mean)


class KalmanFilter:
    """Textbook predict/update with height-scaled process and measurement noise.

    ``measurement_noise`` multiplies the measurement covariance; ``0`` gives a
    filter that trusts measurements exactly (noiseless sensing).
    """

    def __init__(self, std_weight_position=1.0 / 20, std_weight_velocity=1.0 / 160,
                 measurement_noise=1.0):
        self.std_weight_position = std_weight_position
        self.std_weight_velocity = std_weight_velocity
        self.measurement_noise = measurement_noise
        self._motion = np.eye(2 * NDIM)
        self._motion[:NDIM, NDIM:] = np.eye(NDIM)
        self._observe = np.eye(NDIM, 2 * NDIM)

    def initiate(self, box) -> KalmanState:
        z = box_to_xyah(box)
        h = z[3]
        sp, sv = self.std_weight_position, self.std_weight_velocity
        std = [2 * sp * h, 2 * sp * h, 1e-2, 2 * sp * h,
               10 * sv * h, 10 * sv * h, 1e-5, 10 * sv * h]
        return KalmanState(np.r_[z, np.zeros(NDIM)], np.diag(np.square(std)))

    def predict(self, s: KalmanState) -> KalmanState:
        h = s.mean[3]
        sp, sv = self.std_weight_position, self.std_weight_velocity
        q = np.diag(np.square([sp * h, sp * h, 1e-2, sp * h, sv * h, sv * h, 1e-5, sv * h]))
        f = self._motion
        cov = f @ s.covariance @ f.T + q
        return KalmanState(f @ s.mean, 0.5 * (cov + cov.T))

    def project(self, s: KalmanState):
        """Measurement-space mean and covariance."""
        hm = self._observe
        return hm @ s.mean, hm @ s.covariance @ hm.T + self._measurement_cov(s)

    def _measurement_cov(self, s: KalmanState) -> np.ndarray:
        h = s.mean[3]
        sp = self.std_weight_position
        return self.measurement_noise * np.diag(np.square([sp * h, sp * h, 1e-1, sp * h]))

    def update(self, s: KalmanState, box) -> KalmanState:
        z = box_to_xyah(box)
        proj_mean, proj_cov = self.project(s)
        chol = scipy.linalg.cho_factor(proj_cov, lower=True, check_finite=False)
        gain = scipy.linalg.cho_solve(chol, (s.covariance @ self._observe.T).T, check_finite=False).T
        mean = s.mean + gain @ (z - proj_mean)
        # Joseph form keeps the covariance PSD under roundoff
        a = np.eye(2 * NDIM) - gain @ self._observe
        cov = a @ s.covariance @ a.T + gain @ self._measurement_cov(s) @ gain.T
        return KalmanState(mean, 0.5 * (cov + cov.T))


_DEFAULT = KalmanFilter()


def kalman_init(box) -> KalmanState:
    return _DEFAULT.initiate(box)


def kalman_predict(s: KalmanState) -> KalmanState:
    return _DEFAULT.predict(s)


def kalman_update(s: KalmanState, box) -> KalmanState:
    return _DEFAULT.update(s, box)
