"""IMU preprocessing: body-frame transform, buffering, initialization, window averaging."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, so3_exp

log = logging.getLogger(__name__)

GRAVITY_MAGNITUDE = 9.81
GRAVITY = np.array([0.0, 0.0, -GRAVITY_MAGNITUDE])


@dataclass
class ImuSample:
    timestamp: float
    accel: np.ndarray
    gyro: np.ndarray

    def __post_init__(self):
        self.timestamp = float(self.timestamp)
        self.accel = np.asarray(self.accel, dtype=float).reshape(3)
        self.gyro = np.asarray(self.gyro, dtype=float).reshape(3)


@dataclass
class Extrinsics:
    lidar_to_body: Pose = field(default_factory=Pose)
    imu_to_body: Pose = field(default_factory=Pose)


@dataclass
class BiasEstimate:
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    frozen: bool = False

    def __setattr__(self, name, value):
        if getattr(self, "frozen", False):
            raise AttributeError("bias estimate is frozen")
        object.__setattr__(self, name, value)
        if name == "frozen" and value:
            self.accel_bias.flags.writeable = False
            self.gyro_bias.flags.writeable = False


@dataclass
class ImuWindowSummary:
    mean_accel: np.ndarray       # bias and gravity compensated
    mean_gyro: np.ndarray        # bias compensated
    mean_raw_accel: np.ndarray   # bias compensated, gravity kept
    sigma_a: float
    dt: float
    sample_count: int


class InitializationError(RuntimeError):
    pass


def transform_sample_to_body(curr: ImuSample, prev: ImuSample | None, ext: Extrinsics,
                             warnings: dict | None = None) -> ImuSample:
    """Express a raw IMU sample in the body frame, including lever-arm terms.

    Angular acceleration is the backward difference of consecutive body-frame
    gyro readings, zero without a usable predecessor.
    """
    R = ext.imu_to_body.R
    t = ext.imu_to_body.t
    gyro = R @ curr.gyro
    accel = R @ curr.accel
    if not t.any():
        return ImuSample(curr.timestamp, accel, gyro)
    ang_acc = np.zeros(3)
    if prev is not None:
        dt = curr.timestamp - prev.timestamp
        if dt > 0:
            ang_acc = (gyro - R @ prev.gyro) / dt
        elif warnings is not None:
            warnings["nonpositive_imu_dt"] = warnings.get("nonpositive_imu_dt", 0) + 1
    accel = accel - np.cross(ang_acc, t) - np.cross(gyro, np.cross(gyro, t))
    return ImuSample(curr.timestamp, accel, gyro)


class ImuBuffer:
    """Queue of body-frame samples, cut into (t_prev, t_curr] windows."""

    def __init__(self, extrinsics: Extrinsics | None = None):
        self.extrinsics = extrinsics or Extrinsics()
        self._queue: deque[ImuSample] = deque()
        self._last_raw: ImuSample | None = None
        self.warnings: dict[str, int] = {}

    def __len__(self):
        return len(self._queue)

    def push(self, sample: ImuSample) -> None:
        if self._last_raw is not None and sample.timestamp <= self._last_raw.timestamp:
            raise ValueError(
                f"IMU timestamp {sample.timestamp} not after {self._last_raw.timestamp}")
        body = transform_sample_to_body(sample, self._last_raw, self.extrinsics, self.warnings)
        self._last_raw = sample
        self._queue.append(body)

    def extend(self, samples) -> None:
        for s in samples:
            self.push(s)

    def cut(self, t_prev: float, t_curr: float) -> list[ImuSample]:
        if not t_prev < t_curr:
            raise ValueError("cut interval must satisfy t_prev < t_curr")
        q = self._queue
        while q and q[0].timestamp <= t_prev:
            q.popleft()
        out = []
        while q and q[0].timestamp <= t_curr:
            out.append(q.popleft())
        return out


def gravity_alignment(mean_accel: np.ndarray, g: np.ndarray = GRAVITY) -> np.ndarray:
    """Zero-yaw rotation R0 with R0 @ mean_accel parallel to -g."""
    up = -np.asarray(g, dtype=float)
    up = up / np.linalg.norm(up)
    a = mean_accel / np.linalg.norm(mean_accel)
    if not np.allclose(up, [0.0, 0.0, 1.0]):
        # general gravity direction: shortest-arc rotation
        axis = np.cross(a, up)
        s = np.linalg.norm(axis)
        ang = math.atan2(s, float(a @ up))
        return so3_exp(axis / s * ang) if s > 1e-12 else np.eye(3)
    roll = math.atan2(a[1], a[2])
    pitch = math.atan2(-a[0], math.hypot(a[1], a[2]))
    cr, sr, cp, sp = math.cos(roll), math.sin(roll), math.cos(pitch), math.sin(pitch)
    Ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return Ry @ Rx


def _shifted_mean(x: np.ndarray) -> np.ndarray:
    # exact for constant rows, unlike a plain sum / n
    return x[0] + (x - x[0]).mean(axis=0)


def initialize(first_window: list[ImuSample], g: np.ndarray = GRAVITY):
    """Constant-bias and initial-attitude estimate from a window assumed motionless.

    Returns ``(BiasEstimate, R0)``.
    """
    if not first_window:
        raise InitializationError("initialization window is empty")
    acc = np.array([s.accel for s in first_window])
    gyr = np.array([s.gyro for s in first_window])
    z_mean = _shifted_mean(acc)
    if np.linalg.norm(z_mean) < 1.0:
        raise InitializationError(
            f"mean accelerometer norm {np.linalg.norm(z_mean):.3f} m/s^2 is too small to "
            "align with gravity; does the sensor report specific force?")
    R0 = gravity_alignment(z_mean, g)
    bias = BiasEstimate(accel_bias=z_mean + R0.T @ g, gyro_bias=_shifted_mean(gyr))
    bias.frozen = True
    return bias, R0


def attitude_from_sample(sample: ImuSample, g: np.ndarray = GRAVITY) -> np.ndarray:
    """Zero-yaw attitude from a single accelerometer reading (no bias estimate)."""
    if np.linalg.norm(sample.accel) < 1.0:
        return np.eye(3)
    return gravity_alignment(sample.accel, g)


def _window_arrays(S, bias):
    stamps = np.array([s.timestamp for s in S])
    acc = np.array([s.accel for s in S]) - bias.accel_bias
    gyr = np.array([s.gyro for s in S]) - bias.gyro_bias
    return stamps, acc, gyr


def summarize_window(S: list[ImuSample], bias: BiasEstimate, R_start: np.ndarray,
                     g: np.ndarray = GRAVITY, dt: float = 0.1, t_start: float | None = None,
                     propagate_attitude: bool = True) -> ImuWindowSummary:
    """Average the window's bias- and gravity-compensated measurements.

    With ``propagate_attitude`` the gravity term of each sample uses the
    attitude integrated from ``R_start`` with the gyro readings; otherwise
    ``R_start`` is used for all samples.
    """
    if not dt > 0:
        raise ValueError("window duration must be positive")
    if not S:
        z = np.zeros(3)
        return ImuWindowSummary(z, z.copy(), z.copy(), 0.0, dt, 0)
    stamps, acc, gyr = _window_arrays(S, bias)
    g = np.asarray(g, dtype=float)
    n = len(S)
    if propagate_attitude:
        t0 = stamps[0] if t_start is None else t_start
        steps = np.diff(np.r_[t0, stamps])
        lin = np.empty((n, 3))
        R = np.asarray(R_start, dtype=float)
        for k in range(n):
            R = R @ so3_exp(gyr[k] * steps[k])
            lin[k] = acc[k] + R.T @ g
    else:
        lin = acc + np.asarray(R_start).T @ g
    norms = np.linalg.norm(acc, axis=1)
    return ImuWindowSummary(
        mean_accel=_shifted_mean(lin),
        mean_gyro=_shifted_mean(gyr),
        mean_raw_accel=_shifted_mean(acc),
        sigma_a=float(norms.std()) if n > 1 else 0.0,
        dt=float(dt),
        sample_count=n,
    )
