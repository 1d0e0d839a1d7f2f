"""Constant-acceleration / constant-angular-velocity kinematics and deskewing.

All relative quantities live in the body frame at the window start.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose, so3_exp
from .imu import GRAVITY, BiasEstimate, ImuSample, ImuWindowSummary
from .local_map import TimedPointCloud


@dataclass
class RelativeMotion:
    delta_rotation: np.ndarray
    delta_translation: np.ndarray
    dt: float

    def as_pose(self) -> Pose:
        return Pose(self.delta_rotation, self.delta_translation)


def so3_exp_batch(phis: np.ndarray) -> np.ndarray:
    """Vectorised Rodrigues formula for an (N, 3) array of rotation vectors."""
    phis = np.asarray(phis, dtype=float).reshape(-1, 3)
    theta = np.linalg.norm(phis, axis=1)
    K = np.zeros((phis.shape[0], 3, 3))
    K[:, 0, 1], K[:, 0, 2] = -phis[:, 2], phis[:, 1]
    K[:, 1, 0], K[:, 1, 2] = phis[:, 2], -phis[:, 0]
    K[:, 2, 0], K[:, 2, 1] = -phis[:, 1], phis[:, 0]
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0, np.sin(safe) / safe)
    b = np.where(small, 0.5, (1.0 - np.cos(safe)) / (safe * safe))
    return np.eye(3)[None] + a[:, None, None] * K + b[:, None, None] * (K @ K)


def model_error_bounds(jerk: float, ang_acc: float, dt: float) -> tuple[float, float]:
    """Worst-case drift of the constant model over ``dt``.

    Position error from unmodelled jerk (m), rotation error from unmodelled
    angular acceleration (same angular unit as ``ang_acc``).
    """
    if jerk < 0 or ang_acc < 0 or dt < 0:
        raise ValueError("bounds take non-negative inputs")
    return jerk * dt ** 3 / 6.0, ang_acc * dt ** 2 / 2.0


class ConstantMotion:
    """Closed-form motion from window-averaged controls."""

    def __init__(self, summary: ImuWindowSummary, v_body: np.ndarray):
        self.accel = np.asarray(summary.mean_accel, dtype=float)
        self.omega = np.asarray(summary.mean_gyro, dtype=float)
        self.v = np.asarray(v_body, dtype=float)
        self.dt = float(summary.dt)
        self.clamped = 0

    def _clamp(self, tau):
        tau = np.asarray(tau, dtype=float)
        c = np.clip(tau, 0.0, self.dt)
        self.clamped += int(np.count_nonzero(c != tau))
        return c

    def pose_at(self, tau):
        """Rotations (N, 3, 3) and translations (N, 3) at offsets ``tau``."""
        tau = self._clamp(np.atleast_1d(tau))
        R = so3_exp_batch(self.omega[None, :] * tau[:, None])
        p = self.v[None, :] * tau[:, None] + 0.5 * self.accel[None, :] * (tau * tau)[:, None]
        return R, p

    def relative(self) -> RelativeMotion:
        return RelativeMotion(so3_exp(self.omega * self.dt),
                              self.v * self.dt + 0.5 * self.accel * self.dt ** 2, self.dt)


class PiecewiseMotion:
    """Per-sample integration of the same model, each step held for one IMU interval.

    Sample k drives the interval ending at its own stamp; the last sample is
    held until the window end.
    """

    def __init__(self, samples: list[ImuSample], bias: BiasEstimate, R_start: np.ndarray,
                 v_body: np.ndarray, t_start: float, dt: float, g: np.ndarray = GRAVITY):
        self.dt = float(dt)
        self.clamped = 0
        g = np.asarray(g, dtype=float)
        stamps = np.array([s.timestamp for s in samples]) - t_start
        acc = np.array([s.accel for s in samples]) - bias.accel_bias
        gyr = np.array([s.gyro for s in samples]) - bias.gyro_bias
        ends = np.clip(stamps, 0.0, self.dt)
        ends[-1] = self.dt
        n = len(samples)
        self.knots = np.r_[0.0, ends]
        self.R = np.empty((n + 1, 3, 3))
        self.p = np.empty((n + 1, 3))
        self.v = np.empty((n + 1, 3))
        self.acc_body = np.empty((n, 3))
        self.omega = gyr
        R, p, v = np.eye(3), np.zeros(3), np.asarray(v_body, dtype=float).copy()
        R_start = np.asarray(R_start, dtype=float)
        for k in range(n):
            self.R[k], self.p[k], self.v[k] = R, p, v
            h = self.knots[k + 1] - self.knots[k]
            R_next = R @ so3_exp(gyr[k] * h)
            a = acc[k] + (R_start @ R_next).T @ g
            self.acc_body[k] = a
            p = p + v * h + 0.5 * (R @ a) * h * h
            v = v + (R @ a) * h
            R = R_next
        self.R[n], self.p[n], self.v[n] = R, p, v

    def pose_at(self, tau):
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        c = np.clip(tau, 0.0, self.dt)
        self.clamped += int(np.count_nonzero(c != tau))
        k = np.clip(np.searchsorted(self.knots, c, side="right") - 1, 0, len(self.omega) - 1)
        h = c - self.knots[k]
        Rk = self.R[k]
        dR = so3_exp_batch(self.omega[k] * h[:, None])
        ra = np.einsum("nij,nj->ni", Rk, self.acc_body[k])
        p = self.p[k] + self.v[k] * h[:, None] + 0.5 * ra * (h * h)[:, None]
        return Rk @ dR, p

    def relative(self) -> RelativeMotion:
        return RelativeMotion(self.R[-1].copy(), self.p[-1].copy(), self.dt)


def relative_motion(summary: ImuWindowSummary, v_body, dt: float | None = None) -> RelativeMotion:
    if dt is not None and dt != summary.dt:
        summary = ImuWindowSummary(summary.mean_accel, summary.mean_gyro,
                                   summary.mean_raw_accel, summary.sigma_a, dt,
                                   summary.sample_count)
    if not summary.dt > 0:
        raise ValueError("dt must be positive")
    return ConstantMotion(summary, v_body).relative()


def pose_in_window(summary: ImuWindowSummary, v_body, tau: float) -> Pose:
    R, p = ConstantMotion(summary, v_body).pose_at(tau)
    return Pose(R[0], p[0])


def deskew_with(cloud: TimedPointCloud, motion, t_start: float) -> TimedPointCloud:
    """Move every point to the body frame at the window end."""
    t_end = t_start + motion.dt
    if len(cloud) == 0:
        return TimedPointCloud(cloud.points.copy(), cloud.stamps.copy(), cloud.frame)
    # spinning sensors fire many points per instant; evaluate each stamp once
    stamps, inv = np.unique(cloud.stamps, return_inverse=True)
    R_u, p_u = motion.pose_at(stamps - t_start)
    R_e, p_e = motion.pose_at(np.array([motion.dt]))
    R_e, p_e = R_e[0], p_e[0]
    inv = inv.reshape(-1)
    world = np.einsum("nij,nj->ni", R_u[inv], cloud.points) + p_u[inv]
    out = (world - p_e) @ R_e
    return TimedPointCloud(out, np.full(len(cloud), t_end), cloud.frame)


def deskew(cloud: TimedPointCloud, summary: ImuWindowSummary, v_body, t_start: float) -> TimedPointCloud:
    return deskew_with(cloud, ConstantMotion(summary, v_body), t_start)

