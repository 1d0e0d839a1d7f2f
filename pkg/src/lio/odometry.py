"""Per-scan pipeline: IMU window -> prediction -> deskew -> ICP -> map and velocity update."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .geometry import Pose, se3_log_translation
from .imu import (GRAVITY, BiasEstimate, Extrinsics, ImuBuffer, ImuSample, ImuWindowSummary,
                  InitializationError, attitude_from_sample, initialize, summarize_window)
from .local_map import TimedPointCloud, VoxelMap, voxel_downsample
from .motion import ConstantMotion, PiecewiseMotion, deskew_with
from .registration import BodyAccelFilter, SolveReport, register

log = logging.getLogger(__name__)


@dataclass
class State:
    pose: Pose
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    stamp: float = 0.0


def update_velocity(T_prev: Pose, T: Pose, dt: float) -> np.ndarray:
    """Odometry-frame velocity from the SE(3) log of the relative pose."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return T_prev.R @ (se3_log_translation(T_prev.inverse() @ T) / dt)


class Odometry:
    """Stateful LiDAR-inertial odometry. Feed IMU samples, then scans in time order."""

    def __init__(self, config: Config | None = None, extrinsics: Extrinsics | None = None,
                 gravity: np.ndarray = GRAVITY):
        self.config = config or Config()
        self.extrinsics = extrinsics or Extrinsics()
        self.gravity = np.asarray(gravity, dtype=float)
        self.imu = ImuBuffer(self.extrinsics)
        self.map = VoxelMap(self.config.voxel_size, self.config.max_points_per_voxel)
        self.accel_filter = BodyAccelFilter(max_jerk=self.config.max_jerk)
        self.bias: BiasEstimate | None = None
        self.state: State | None = None
        self.last_summary: ImuWindowSummary | None = None
        self.trajectory: list[State] = []
        self.reports: list[SolveReport] = []
        self.warnings: dict[str, int] = {}

    def _warn(self, key, n=1):
        self.warnings[key] = self.warnings.get(key, 0) + n

    def add_imu(self, samples) -> None:
        if isinstance(samples, ImuSample):
            samples = [samples]
        self.imu.extend(samples)

    def _preprocess(self, cloud: TimedPointCloud) -> TimedPointCloud:
        cfg = self.config
        rng = np.linalg.norm(cloud.points, axis=1)
        keep = (rng >= cfg.min_range) & (rng <= cfg.max_range)
        pts = self.extrinsics.lidar_to_body.apply(cloud.points[keep])
        return TimedPointCloud(pts, cloud.stamps[keep], "body")

    def _first_scan(self, cloud, t_start, t_end) -> State:
        cfg = self.config
        window = self.imu.cut(t_start, t_end)
        R0 = np.eye(3)
        if cfg.run_initialization:
            try:
                self.bias, R0 = initialize(window, self.gravity)
            except InitializationError as e:
                log.warning("initialization failed (%s); starting with zero bias", e)
                self._warn("init_failed")
        elif window:
            R0 = attitude_from_sample(window[0], self.gravity)
        if self.bias is None:
            self.bias = BiasEstimate()
            self.bias.frozen = True
        pose = Pose(R0, np.zeros(3))
        merge = voxel_downsample(cloud, 0.5 * cfg.voxel_size)
        self.map.insert(pose.apply(merge.points))
        if window:
            self.last_summary = summarize_window(window, self.bias, R0, self.gravity,
                                                 t_end - t_start, t_start=t_start)
        return State(pose, np.zeros(3), t_end)

    def _motion(self, window, R_prev, v_body, t_prev, dt):
        cfg = self.config
        if not window:
            self._warn("empty_imu_window")
            prev = self.last_summary
            if prev is None:
                prev = ImuWindowSummary(np.zeros(3), np.zeros(3), -R_prev.T @ self.gravity,
                                        0.0, dt, 0)
            summary = ImuWindowSummary(prev.mean_accel, prev.mean_gyro, prev.mean_raw_accel,
                                       prev.sigma_a, dt, 0)
            return ConstantMotion(summary, v_body), (summary if cfg.average_imu else None)
        if cfg.average_imu:
            summary = summarize_window(window, self.bias, R_prev, self.gravity, dt,
                                       t_start=t_prev,
                                       propagate_attitude=cfg.propagate_window_attitude)
            self.last_summary = summary
            return ConstantMotion(summary, v_body), summary
        self.last_summary = summarize_window(window, self.bias, R_prev, self.gravity, dt,
                                             t_start=t_prev)
        return PiecewiseMotion(window, self.bias, R_prev, v_body, t_prev, dt, self.gravity), None

    def process_scan(self, cloud: TimedPointCloud, t_end: float, imu_samples=None,
                     t_start: float | None = None) -> State:
        """Run the full pipeline on one sensor-frame scan ending at ``t_end``.

        ``t_start`` is only needed for the first scan; afterwards the window
        starts at the previous state's stamp.
        """
        cfg = self.config
        if imu_samples:
            self.add_imu(imu_samples)
        body = self._preprocess(cloud)

        if self.state is None:
            if t_start is None:
                t_start = float(cloud.stamps.min()) if len(cloud) else t_end - 0.1
            if not t_start < t_end:
                raise ValueError("scan start must precede scan end")
            self.state = self._first_scan(body, t_start, t_end)
            self.trajectory.append(self.state)
            return self.state

        prev = self.state
        t_prev = prev.stamp
        dt = t_end - t_prev
        if not dt > 0:
            raise ValueError(f"scan end {t_end} does not advance past {t_prev}")
        window = self.imu.cut(t_prev, t_end)
        R_prev = prev.pose.R
        v_body = R_prev.T @ prev.velocity
        motion, summary = self._motion(window, R_prev, v_body, t_prev, dt)

        deskewed = deskew_with(body, motion, t_prev)
        if motion.clamped:
            self._warn("clamped_stamps", motion.clamped)
        merge = voxel_downsample(deskewed, 0.5 * cfg.voxel_size)
        Q = voxel_downsample(merge, 1.5 * cfg.voxel_size) if cfg.double_downsample else merge

        T_hat = prev.pose @ motion.relative().as_pose()
        if len(Q) == 0 or self.map.empty():
            T = T_hat
            self._warn("prediction_only")
        else:
            T, report, self.accel_filter = register(Q.points, self.map, T_hat, summary,
                                                    self.accel_filter, cfg, self.gravity)
            self.reports.append(report)

        if len(merge):
            self.map.insert(T.apply(merge.points))
            self.map.crop(T.t, cfg.map_radius)
        self.state = State(T, update_velocity(prev.pose, T, dt), t_end)
        self.trajectory.append(self.state)
        return self.state
