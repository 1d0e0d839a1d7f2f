"""On-disk formats: binary PLY scans, IMU CSV, key-value manifests, TUM trajectories.

Dataset layout::

    <data-dir>/manifest.txt
    <data-dir>/<scan_dir>/<start_seconds>.ply
    <data-dir>/<imu_file>

Manifest keys: ``scan_dir``, ``imu_file``, ``stamp_mode`` (absolute | offset),
``time_unit`` (s | ms | us | ns, applies to the PLY ``t`` field),
``lidar_to_body`` and ``imu_to_body`` (tx ty tz qx qy qz qw), optional
``scan_period`` in seconds.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, parse_floats, read_kv
from .geometry import Pose
from .imu import Extrinsics, ImuSample
from .local_map import TimedPointCloud

log = logging.getLogger(__name__)

IMU_HEADER = ["timestamp", "ax", "ay", "az", "gx", "gy", "gz"]
TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


class DataError(Exception):
    """Malformed or missing input data."""


# -- PLY ---------------------------------------------------------------------

def write_scan(path, cloud: TimedPointCloud, stamp_offset: float = 0.0) -> None:
    """Binary little-endian PLY: float32 x, y, z and float64 t (= stamp - stamp_offset)."""
    n = len(cloud)
    data = np.empty(n, dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("t", "<f8")])
    data["x"], data["y"], data["z"] = cloud.points.T
    data["t"] = cloud.stamps - stamp_offset
    header = ("ply\nformat binary_little_endian 1.0\n"
              f"element vertex {n}\n"
              "property float x\nproperty float y\nproperty float z\n"
              "property double t\nend_header\n")
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(data.tobytes())


def _read_ply_header(f, path):
    first = f.readline()
    if first.strip() != b"ply":
        raise DataError(f"{path}: not a PLY file")
    fmt = None
    n = None
    props = []
    in_vertex = False
    while True:
        line = f.readline()
        if not line:
            raise DataError(f"{path}: header ends without end_header")
        tok = line.decode("ascii", errors="replace").split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "end_header":
            break
        if tok[0] == "format":
            fmt = tok[1] if len(tok) > 1 else ""
        elif tok[0] == "element":
            if len(tok) != 3:
                raise DataError(f"{path}: malformed element line {line!r}")
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                try:
                    n = int(tok[2])
                except ValueError:
                    raise DataError(f"{path}: bad vertex count {tok[2]!r}") from None
            elif n is None:
                raise DataError(f"{path}: elements before 'vertex' are not supported")
        elif tok[0] == "property" and in_vertex:
            if len(tok) != 3 or tok[1] not in _PLY_TYPES:
                raise DataError(f"{path}: unsupported property line {line!r}")
            props.append((tok[2], _PLY_TYPES[tok[1]]))
    if fmt != "binary_little_endian":
        raise DataError(f"{path}: unsupported PLY format {fmt!r} (need binary_little_endian)")
    if n is None:
        raise DataError(f"{path}: no vertex element")
    return n, props


def load_scan(path, stamp_mode: str = "absolute", time_unit: str = "s",
              scan_start: float | None = None) -> TimedPointCloud:
    """Read one scan. Offsets are made absolute with the start stamp in the filename."""
    path = Path(path)
    try:
        f = open(path, "rb")
    except OSError as e:
        raise DataError(f"{path}: {e}") from e
    with f:
        n, props = _read_ply_header(f, path)
        names = [p[0] for p in props]
        for req in ("x", "y", "z", "t"):
            if req not in names:
                raise DataError(f"{path}: missing vertex property {req!r}")
        dtype = np.dtype([(name, "<" + t) for name, t in props])
        raw = f.read(n * dtype.itemsize)
        if len(raw) < n * dtype.itemsize:
            raise DataError(f"{path}: truncated vertex data")
    data = np.frombuffer(raw, dtype=dtype, count=n)
    for name in ("x", "y", "z", "t"):
        if not np.all(np.isfinite(data[name])):
            raise DataError(f"{path}: non-finite values in field {name!r}")
    points = np.stack([data["x"], data["y"], data["z"]], axis=1).astype(float)
    if time_unit not in TIME_UNITS:
        raise DataError(f"unknown time unit {time_unit!r}")
    stamps = data["t"].astype(float) * TIME_UNITS[time_unit]
    if stamp_mode == "offset":
        start = scan_start if scan_start is not None else scan_start_from_name(path)
        stamps = stamps + start
    elif stamp_mode != "absolute":
        raise DataError(f"unknown stamp mode {stamp_mode!r}")
    return TimedPointCloud(points, stamps, "sensor")


def scan_start_from_name(path) -> float:
    try:
        return float(Path(path).stem)
    except ValueError:
        raise DataError(f"{path}: filename is not '<start_seconds>.ply'") from None


def scan_filename(start: float) -> str:
    return f"{start:.9f}.ply"


# -- IMU CSV -------------------------------------------------------------------

def load_imu(path) -> list[ImuSample]:
    path = Path(path)
    try:
        f = open(path, newline="")
    except OSError as e:
        raise DataError(f"{path}: {e}") from e
    with f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != IMU_HEADER:
            raise DataError(f"{path}: expected header {','.join(IMU_HEADER)}")
        samples: list[ImuSample] = []
        last = -math.inf
        for i, row in enumerate(reader):
            if not row:
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise DataError(f"{path}: row {i} is not numeric") from None
            if len(vals) != 7 or not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}: row {i} must hold 7 finite numbers")
            t = vals[0]
            if t == last:
                continue
            if t < last:
                raise DataError(f"{path}: timestamps go backwards at row {i}")
            last = t
            samples.append(ImuSample(t, vals[1:4], vals[4:7]))
    return samples


def write_imu(path, samples) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(IMU_HEADER)
        for s in samples:
            w.writerow([repr(float(s.timestamp)), *(repr(float(v)) for v in s.accel),
                        *(repr(float(v)) for v in s.gyro)])


# -- trajectories ----------------------------------------------------------------

def _g9(x: float) -> str:
    return f"{x + 0.0:.9g}"


def write_trajectory(states, path) -> None:
    """TUM lines ``timestamp tx ty tz qx qy qz qw``."""
    path = Path(path)
    lines = []
    for s in states:
        t, q = s.pose.t, s.pose.quat
        lines.append(" ".join([f"{s.stamp:.9f}", *(_g9(v) for v in t), *(_g9(v) for v in q)]))
    try:
        path.write_text("".join(line + "\n" for line in lines))
    except OSError as e:
        raise DataError(f"cannot write trajectory {path}: {e}") from e


# -- manifest / dataset ------------------------------------------------------------

def pose_from_values(vals) -> Pose:
    return Pose(translation=vals[:3], quat=vals[3:7])


def pose_to_text(pose: Pose) -> str:
    return " ".join(repr(float(v)) for v in (*pose.t, *pose.quat))


@dataclass
class DatasetManifest:
    root: Path
    scan_dir: Path
    imu_file: Path
    extrinsics: Extrinsics = field(default_factory=Extrinsics)
    stamp_mode: str = "absolute"
    time_unit: str = "s"
    scan_period: float | None = None

    @classmethod
    def load(cls, data_dir) -> "DatasetManifest":
        root = Path(data_dir)
        mpath = root / "manifest.txt"
        if not mpath.is_file():
            raise DataError(f"missing manifest: {mpath}")
        try:
            kv = read_kv(mpath)
            ext = Extrinsics(
                lidar_to_body=pose_from_values(parse_floats(
                    kv.get("lidar_to_body", "0 0 0 0 0 0 1"), 7, "lidar_to_body")),
                imu_to_body=pose_from_values(parse_floats(
                    kv.get("imu_to_body", "0 0 0 0 0 0 1"), 7, "imu_to_body")),
            )
            period = float(kv["scan_period"]) if "scan_period" in kv else None
        except (ConfigError, ValueError) as e:
            raise DataError(f"{mpath}: {e}") from e
        m = cls(root=root, scan_dir=root / kv.get("scan_dir", "scans"),
                imu_file=root / kv.get("imu_file", "imu.csv"), extrinsics=ext,
                stamp_mode=kv.get("stamp_mode", "absolute"),
                time_unit=kv.get("time_unit", "s"), scan_period=period)
        if m.stamp_mode not in ("absolute", "offset"):
            raise DataError(f"{mpath}: stamp_mode must be 'absolute' or 'offset'")
        if m.time_unit not in TIME_UNITS:
            raise DataError(f"{mpath}: unknown time_unit {m.time_unit!r}")
        if not m.scan_dir.is_dir():
            raise DataError(f"missing scan directory: {m.scan_dir}")
        if not m.imu_file.is_file():
            raise DataError(f"missing IMU file: {m.imu_file}")
        return m

    def write(self) -> None:
        lines = [
            f"scan_dir = {self.scan_dir.relative_to(self.root)}",
            f"imu_file = {self.imu_file.relative_to(self.root)}",
            f"stamp_mode = {self.stamp_mode}",
            f"time_unit = {self.time_unit}",
            f"lidar_to_body = {pose_to_text(self.extrinsics.lidar_to_body)}",
            f"imu_to_body = {pose_to_text(self.extrinsics.imu_to_body)}",
        ]
        if self.scan_period is not None:
            lines.append(f"scan_period = {self.scan_period!r}")
        (self.root / "manifest.txt").write_text("\n".join(lines) + "\n")

    def scan_files(self) -> list[tuple[float, Path]]:
        files = [(scan_start_from_name(p), p) for p in self.scan_dir.glob("*.ply")]
        files.sort()
        for (a, pa), (b, _) in zip(files, files[1:]):
            if a == b:
                raise DataError(f"{pa}: duplicate scan start stamp")
        return files

    def iter_scans(self):
        """Yield ``(cloud, t_start, t_end)`` in time order."""
        files = self.scan_files()
        for i, (start, path) in enumerate(files):
            cloud = load_scan(path, self.stamp_mode, self.time_unit, start)
            if self.scan_period is not None:
                end = start + self.scan_period
            elif i + 1 < len(files):
                end = files[i + 1][0]
            else:
                end = float(cloud.stamps.max()) if len(cloud) else start
            if not end > start:
                raise DataError(f"{path}: cannot determine a scan end after {start}")
            yield cloud, start, end
