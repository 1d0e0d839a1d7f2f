"""Synthetic ground truth: analytic trajectories, IMU streams and ray-cast scans.

Trajectories are smooth closed-form functions of a warped time ``u(t)``
that stays at zero during an initial hold and blends into ``u = t`` with
a quintic ramp, so every profile starts at rest and has bounded jerk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .config import ConfigError, parse_floats, read_kv
from .dataset_io import DatasetManifest, scan_filename, write_imu, write_scan
from .geometry import Pose
from .imu import GRAVITY, Extrinsics, ImuSample
from .local_map import TimedPointCloud
from .metrics import Trajectory

PROFILES = ("stationary", "constant_velocity", "figure8", "aggressive")


@dataclass
class TimeWarp:
    hold: float = 0.5
    ramp: float = 2.0

    def __call__(self, t):
        """``(u, du/dt, d2u/dt2)`` for an array of times."""
        t = np.asarray(t, dtype=float)
        if self.ramp <= 0:
            s = t - self.hold
            return np.maximum(s, 0.0), (s > 0).astype(float), np.zeros_like(t)
        x = np.clip((t - self.hold) / self.ramp, 0.0, 1.0)
        u = self.ramp * (x ** 6 - 3 * x ** 5 + 2.5 * x ** 4)
        du = 6 * x ** 5 - 15 * x ** 4 + 10 * x ** 3
        ddu = (30 * x ** 4 - 60 * x ** 3 + 30 * x ** 2) / self.ramp
        after = t > self.hold + self.ramp
        u = np.where(after, 0.5 * self.ramp + (t - self.hold - self.ramp), u)
        return u, du, np.where(after, 0.0, ddu)


@dataclass
class Channel:
    """offset + amp * sin(freq * u + phase) + rate * u + quad * u^2."""

    amp: float = 0.0
    freq: float = 0.0
    phase: float = 0.0
    rate: float = 0.0
    quad: float = 0.0
    offset: float = 0.0

    def eval(self, u, du, ddu):
        arg = self.freq * u + self.phase
        g = self.offset + self.amp * np.sin(arg) + self.rate * u + self.quad * u * u
        g1 = self.amp * self.freq * np.cos(arg) + self.rate + 2 * self.quad * u
        g2 = -self.amp * self.freq ** 2 * np.sin(arg) + 2 * self.quad
        return g, g1 * du, g2 * du * du + g1 * ddu


def _rot_x(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([o, z, z], -1), np.stack([z, c, -s], -1), np.stack([z, s, c], -1)], -2)


def _rot_y(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, z, s], -1), np.stack([z, o, z], -1), np.stack([-s, z, c], -1)], -2)


def _rot_z(a):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(a), np.zeros_like(a)
    return np.stack([np.stack([c, -s, z], -1), np.stack([s, c, z], -1), np.stack([z, z, o], -1)], -2)


def _mv(M, v):
    return np.einsum("nij,nj->ni", M, v)


def _mtv(M, v):
    return np.einsum("nji,nj->ni", M, v)


@dataclass
class TrajectoryProfile:
    """Body pose in the world: position channels x, y, z and Z-Y-X Euler angles."""

    position: tuple = (Channel(), Channel(), Channel())
    roll: Channel = field(default_factory=Channel)
    pitch: Channel = field(default_factory=Channel)
    yaw: Channel = field(default_factory=Channel)
    warp: TimeWarp = field(default_factory=TimeWarp)
    duration: float = 10.0
    name: str = "custom"

    def _pos(self, t):
        w = self.warp(np.atleast_1d(t))
        ch = [c.eval(*w) for c in self.position]
        return [np.stack([c[k] for c in ch], -1) for k in range(3)]

    def position_at(self, t):
        return self._pos(t)[0]

    def velocity_at(self, t):
        return self._pos(t)[1]

    def acceleration_at(self, t):
        return self._pos(t)[2]

    def _angles(self, t):
        w = self.warp(np.atleast_1d(t))
        return self.roll.eval(*w), self.pitch.eval(*w), self.yaw.eval(*w)

    def rotation_at(self, t):
        (phi, _, _), (th, _, _), (psi, _, _) = self._angles(t)
        return _rot_z(psi) @ _rot_y(th) @ _rot_x(phi)

    def angular_rates(self, t):
        """Body-frame angular velocity and its time derivative, each (N, 3)."""
        (phi, dphi, ddphi), (th, dth, ddth), (psi, dpsi, ddpsi) = self._angles(t)
        n = phi.shape[0]
        Rx, Ry = _rot_x(phi), _rot_y(th)
        ex = np.tile([1.0, 0.0, 0.0], (n, 1))
        ey = np.tile([0.0, 1.0, 0.0], (n, 1))
        ez = np.tile([0.0, 0.0, 1.0], (n, 1))
        w1 = _mtv(Ry, ez * dpsi[:, None])
        w1d = -dth[:, None] * np.cross(ey, w1) + _mtv(Ry, ez * ddpsi[:, None])
        w2 = w1 + ey * dth[:, None]
        w2d = w1d + ey * ddth[:, None]
        rw2 = _mtv(Rx, w2)
        omega = rw2 + ex * dphi[:, None]
        omega_dot = -dphi[:, None] * np.cross(ex, rw2) + _mtv(Rx, w2d) + ex * ddphi[:, None]
        return omega, omega_dot

    def pose(self, t: float) -> Pose:
        return Pose(self.rotation_at(t)[0], self.position_at(t)[0])


def make_profile(kind: str, duration: float | None = None, **kw) -> TrajectoryProfile:
    """Named trajectory; keyword overrides: amplitude_x/y/z, speed, yaw/roll/pitch_amplitude."""
    if kind == "stationary":
        return TrajectoryProfile(duration=duration or 10.0, name=kind)
    if kind == "constant_velocity":
        speed = kw.get("speed", 1.0)
        return TrajectoryProfile(
            position=(Channel(rate=speed, offset=-10.0), Channel(offset=3.0), Channel()),
            warp=TimeWarp(0.5, 1.0), duration=duration or 20.0, name=kind)
    if kind == "figure8":
        dur = duration or 60.0
        warp = TimeWarp(kw.get("hold", 0.5), kw.get("ramp", 2.0))
        # one loop in the default 60 s; shorter runs cover part of it
        om = 2 * math.pi / kw.get("loop_period", 60.0 - warp.hold - 0.5 * warp.ramp)
        return TrajectoryProfile(
            position=(Channel(kw.get("amplitude_x", 14.0), om),
                      Channel(kw.get("amplitude_y", 6.0), 2 * om),
                      Channel(kw.get("amplitude_z", 0.3), 3 * om)),
            yaw=Channel(kw.get("yaw_amplitude", 0.6), om),
            roll=Channel(kw.get("roll_amplitude", 0.05), 3 * om),
            pitch=Channel(kw.get("pitch_amplitude", 0.04), 2 * om),
            warp=warp, duration=dur, name=kind)
    if kind == "aggressive":
        dur = duration or 20.0
        om = 2 * math.pi / 9.0
        return TrajectoryProfile(
            position=(Channel(kw.get("amplitude_x", 8.0), om),
                      Channel(kw.get("amplitude_y", 4.0), 2 * om),
                      Channel(kw.get("amplitude_z", 0.3), 5 * om)),
            yaw=Channel(kw.get("yaw_amplitude", 1.0), 1.5 * om),
            roll=Channel(kw.get("roll_amplitude", 0.15), 4 * om),
            pitch=Channel(kw.get("pitch_amplitude", 0.12), 3 * om, 0.5),
            warp=TimeWarp(0.5, 1.0), duration=dur, name=kind)
    raise ValueError(f"unknown profile {kind!r}; choose from {', '.join(PROFILES)}")


@dataclass
class SimImuNoise:
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_noise_std: float = 0.0
    gyro_noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.accel_bias = np.asarray(self.accel_bias, dtype=float)
        self.gyro_bias = np.asarray(self.gyro_bias, dtype=float)
        if self.accel_noise_std < 0 or self.gyro_noise_std < 0:
            raise ValueError("noise standard deviations must be non-negative")


@dataclass
class WorldModel:
    """Enclosing room plus solid obstacle boxes and optional planes ``n . x = d``."""

    room_lo: np.ndarray
    room_hi: np.ndarray
    boxes_lo: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    boxes_hi: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    planes: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))

    def __post_init__(self):
        self.room_lo = np.asarray(self.room_lo, dtype=float)
        self.room_hi = np.asarray(self.room_hi, dtype=float)
        self.boxes_lo = np.asarray(self.boxes_lo, dtype=float).reshape(-1, 3)
        self.boxes_hi = np.asarray(self.boxes_hi, dtype=float).reshape(-1, 3)
        self.planes = np.asarray(self.planes, dtype=float).reshape(-1, 4)

    def check_closed(self, positions: np.ndarray, max_range: float) -> None:
        """Every ray from ``positions`` must hit a surface within ``max_range``."""
        positions = np.atleast_2d(positions)
        inside = np.all((positions > self.room_lo) & (positions < self.room_hi), axis=1)
        if not inside.all():
            raise ValueError("sensor leaves the enclosing room")
        for lo, hi in zip(self.boxes_lo, self.boxes_hi):
            if np.any(np.all((positions >= lo) & (positions <= hi), axis=1)):
                raise ValueError("sensor passes through an obstacle")
        if np.linalg.norm(self.room_hi - self.room_lo) > max_range:
            raise ValueError("room diagonal exceeds the sensor range; world is not closed")

    def cast(self, origins, dirs) -> np.ndarray:
        return kernels.raycast(np.ascontiguousarray(origins), np.ascontiguousarray(dirs),
                               self.room_lo, self.room_hi, self.boxes_lo, self.boxes_hi,
                               self.planes)


def default_world() -> WorldModel:
    """A 60 x 40 x 10 m hall with pillars and crates away from the built-in paths."""
    lo, hi = [], []

    def box(cx, cy, sx, sy, z0, z1):
        lo.append([cx - sx / 2, cy - sy / 2, z0])
        hi.append([cx + sx / 2, cy + sy / 2, z1])

    for cx in (-9.0, 9.0):
        box(cx, 0.0, 1.0, 1.0, -3.0, 7.0)
    for cx in (-20.0, -6.0, 6.0, 20.0):
        box(cx, 12.0, 1.5, 1.5, -3.0, 7.0)
        box(cx + 3.0, -12.0, 1.2, 2.0, -3.0, 7.0)
    box(-25.0, 5.0, 3.0, 4.0, -3.0, -1.0)
    box(24.0, -6.0, 4.0, 2.5, -3.0, 0.5)
    box(0.0, 16.0, 6.0, 2.0, -3.0, 1.5)
    box(0.0, -16.5, 3.0, 3.0, -3.0, 2.5)
    return WorldModel([-30.0, -20.0, -3.0], [30.0, 20.0, 7.0], lo, hi)


@dataclass
class ScanPattern:
    """``rings`` emulates a spinning sensor, ``raster`` a solid-state one."""

    kind: str = "rings"
    rings: int = 32
    elevation_min: float = -25.0
    elevation_max: float = 15.0
    azimuth_steps: int = 900
    raster_rows: int = 48
    raster_cols: int = 160
    raster_hfov: float = 70.0
    raster_vfov: float = 24.0

    def rays(self):
        """Unit directions (N, 3) in the sensor frame and firing-time fractions in [0, 1)."""
        if self.kind == "rings":
            az = 2 * np.pi * np.arange(self.azimuth_steps) / self.azimuth_steps
            el = np.radians(np.linspace(self.elevation_min, self.elevation_max, self.rings))
            A, E = np.meshgrid(az, el, indexing="ij")
            frac = np.repeat(np.arange(self.azimuth_steps) / self.azimuth_steps, self.rings)
        elif self.kind == "raster":
            az = np.radians(np.linspace(-self.raster_hfov / 2, self.raster_hfov / 2, self.raster_cols))
            el = np.radians(np.linspace(-self.raster_vfov / 2, self.raster_vfov / 2, self.raster_rows))
            E, A = np.meshgrid(el, az, indexing="ij")
            n = self.raster_rows * self.raster_cols
            frac = np.arange(n) / n
        else:
            raise ValueError(f"unknown scan pattern {self.kind!r}")
        A, E = A.ravel(), E.ravel()
        d = np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=1)
        return d, frac


def default_extrinsics() -> Extrinsics:
    lidar = Pose(_rot_z(np.array([math.radians(2.0)]))[0], [0.2, 0.0, 0.35])
    imu = Pose(_rot_z(np.array([math.pi / 2]))[0], [-0.1, 0.05, 0.02])
    return Extrinsics(lidar_to_body=lidar, imu_to_body=imu)


def simulate_imu(profile: TrajectoryProfile, noise: SimImuNoise, rate: float,
                 extrinsics: Extrinsics, g=GRAVITY, t_end: float | None = None) -> list[ImuSample]:
    """Raw IMU-frame samples at the IMU mounting point, bias then white noise added."""
    if not rate > 0:
        raise ValueError("rate must be positive")
    t_end = profile.duration if t_end is None else t_end
    n = int(math.floor(t_end * rate + 1e-9)) + 1
    t = np.arange(n) / rate
    R = profile.rotation_at(t)
    a = profile.acceleration_at(t)
    omega, omega_dot = profile.angular_rates(t)
    lever = np.broadcast_to(extrinsics.imu_to_body.t, omega.shape)
    R_bi = extrinsics.imu_to_body.R
    a_imu = a + _mv(R, np.cross(omega_dot, lever) + np.cross(omega, np.cross(omega, lever)))
    f_body = _mtv(R, a_imu - np.asarray(g))
    acc = f_body @ R_bi + noise.accel_bias
    gyr = omega @ R_bi + noise.gyro_bias
    rng = np.random.default_rng(noise.seed)
    acc = acc + rng.normal(size=(n, 3)) * noise.accel_noise_std
    gyr = gyr + rng.normal(size=(n, 3)) * noise.gyro_noise_std
    return [ImuSample(t[k], acc[k], gyr[k]) for k in range(n)]


def simulate_scan(profile: TrajectoryProfile, world: WorldModel, t_start: float, period: float,
                  pattern: ScanPattern | None = None, extrinsics: Extrinsics | None = None,
                  max_range: float = 100.0, range_noise_std: float = 0.0,
                  rng: np.random.Generator | None = None) -> TimedPointCloud:
    """Motion-distorted sensor-frame scan; each return carries its firing time."""
    pattern = pattern or ScanPattern()
    extrinsics = extrinsics or Extrinsics()
    d, frac = pattern.rays()
    stamps = t_start + frac * period
    ut, inv = np.unique(stamps, return_inverse=True)
    R_ob = profile.rotation_at(ut)
    p_ob = profile.position_at(ut)
    R_ol = R_ob @ extrinsics.lidar_to_body.R
    o_l = p_ob + _mv(R_ob, np.broadcast_to(extrinsics.lidar_to_body.t, p_ob.shape))
    origins = o_l[inv]
    dirs = _mv(R_ol[inv], d)
    r = world.cast(origins, dirs)
    if range_noise_std > 0:
        rng = rng or np.random.default_rng(0)
        r = r + rng.normal(size=r.shape) * range_noise_std
    keep = np.isfinite(r) & (r <= max_range) & (r > 0)
    return TimedPointCloud(d[keep] * r[keep, None], stamps[keep], "sensor")


@dataclass
class SimSpec:
    """Everything that defines a synthetic dataset; parsed from a key-value profile file."""

    profile: str = "figure8"
    duration: float | None = None
    imu_rate: float = 100.0
    scan_rate: float = 10.0
    seed: int = 0
    accel_noise_std: float = 0.0
    gyro_noise_std: float = 0.0
    accel_bias: tuple = (0.0, 0.0, 0.0)
    gyro_bias: tuple = (0.0, 0.0, 0.0)
    pattern: str = "rings"
    rings: int = 32
    azimuth_steps: int = 900
    max_range: float = 100.0
    overrides: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "SimSpec":
        kv = read_kv(path)
        spec = cls()
        try:
            for key, value in kv.items():
                if key in ("type", "profile"):
                    spec.profile = value
                elif key in ("accel_bias", "gyro_bias"):
                    setattr(spec, key, tuple(parse_floats(value, 3, key)))
                elif key in ("imu_rate", "scan_rate", "accel_noise_std", "gyro_noise_std",
                             "duration", "max_range"):
                    setattr(spec, key, float(value))
                elif key in ("seed", "rings", "azimuth_steps"):
                    setattr(spec, key, int(value))
                elif key == "pattern":
                    spec.pattern = value
                elif key in ("amplitude_x", "amplitude_y", "amplitude_z", "speed", "loop_period",
                             "hold", "ramp", "yaw_amplitude", "roll_amplitude",
                             "pitch_amplitude"):
                    spec.overrides[key] = float(value)
                else:
                    raise ConfigError(f"{path}: unknown profile key {key!r}")
        except ValueError as e:
            raise ConfigError(f"{path}: {e}") from e
        return spec

    def noise(self) -> SimImuNoise:
        return SimImuNoise(np.array(self.accel_bias), np.array(self.gyro_bias),
                           self.accel_noise_std, self.gyro_noise_std, self.seed)


@dataclass
class SimDataset:
    scans: list            # (cloud, t_start, t_end)
    imu: list
    groundtruth: Trajectory
    extrinsics: Extrinsics
    profile: TrajectoryProfile
    noise: SimImuNoise


def simulate_dataset(spec: SimSpec, world: WorldModel | None = None,
                     extrinsics: Extrinsics | None = None) -> SimDataset:
    world = world or default_world()
    extrinsics = extrinsics or default_extrinsics()
    profile = make_profile(spec.profile, spec.duration, **spec.overrides)
    n_scans = int(math.floor(profile.duration * spec.scan_rate + 1e-9))
    check_t = np.linspace(0.0, profile.duration, 2001)
    world.check_closed(profile.position_at(check_t), spec.max_range)
    pattern = ScanPattern(kind=spec.pattern, rings=spec.rings, azimuth_steps=spec.azimuth_steps)
    noise = spec.noise()
    imu = simulate_imu(profile, noise, spec.imu_rate, extrinsics)
    scans = []
    for k in range(n_scans):
        t0, t1 = k / spec.scan_rate, (k + 1) / spec.scan_rate
        cloud = simulate_scan(profile, world, t0, t1 - t0, pattern, extrinsics, spec.max_range)
        scans.append((cloud, t0, t1))
    ends = np.array([s[2] for s in scans])
    gt = Trajectory.from_poses(ends, [profile.pose(t) for t in ends])
    return SimDataset(scans, imu, gt, extrinsics, profile, noise)


def write_dataset(ds: SimDataset, out_dir, spec: SimSpec | None = None) -> Path:
    from .dataset_io import write_trajectory
    from .odometry import State

    out = Path(out_dir)
    (out / "scans").mkdir(parents=True, exist_ok=True)
    period = ds.scans[1][1] - ds.scans[0][1] if len(ds.scans) > 1 else None
    for cloud, t0, _ in ds.scans:
        write_scan(out / "scans" / scan_filename(t0), cloud, stamp_offset=t0)
    write_imu(out / "imu.csv", ds.imu)
    DatasetManifest(root=out, scan_dir=out / "scans", imu_file=out / "imu.csv",
                    extrinsics=ds.extrinsics, stamp_mode="offset", time_unit="s",
                    scan_period=period).write()
    states = [State(ds.groundtruth.pose(i), stamp=float(ds.groundtruth.stamps[i]))
              for i in range(len(ds.groundtruth))]
    write_trajectory(states, out / "groundtruth.tum")
    if spec is not None:
        lines = [f"type = {spec.profile}", f"seed = {spec.seed}",
                 f"imu_rate = {spec.imu_rate!r}", f"scan_rate = {spec.scan_rate!r}",
                 f"accel_noise_std = {spec.accel_noise_std!r}",
                 f"gyro_noise_std = {spec.gyro_noise_std!r}",
                 "accel_bias = " + " ".join(repr(float(v)) for v in spec.accel_bias),
                 "gyro_bias = " + " ".join(repr(float(v)) for v in spec.gyro_bias),
                 f"pattern = {spec.pattern}", f"rings = {spec.rings}",
                 f"azimuth_steps = {spec.azimuth_steps}", f"max_range = {spec.max_range!r}"]
        if spec.duration is not None:
            lines.append(f"duration = {spec.duration!r}")
        lines += [f"{k} = {v!r}" for k, v in sorted(spec.overrides.items())]
        (out / "profile.txt").write_text("\n".join(lines) + "\n")
    return out
