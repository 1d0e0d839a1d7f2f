import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose, assert_array_equal

from lio.dataset_io import (DataError, DatasetManifest, load_imu, load_scan, scan_filename,
                            write_imu, write_scan, write_trajectory)
from lio.geometry import Pose, so3_exp
from lio.imu import Extrinsics, ImuSample
from lio.local_map import TimedPointCloud
from lio.metrics import read_tum
from lio.odometry import State

from helpers import random_pose


def _ply(path, body: bytes, header_props=("float x", "float y", "float z", "double t"), n=None,
         fmt="binary_little_endian"):
    lines = ["ply", f"format {fmt} 1.0", f"element vertex {n}"]
    lines += [f"property {p}" for p in header_props] + ["end_header"]
    path.write_bytes(("\n".join(lines) + "\n").encode() + body)


def test_hand_written_ply(tmp_path):
    rec = np.array([(1, 2, 3, 0.5), (4, 5, 6, 0.25), (-1, 0, 0.5, 0.0)],
                   dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("t", "<f8")])
    p = tmp_path / "10.000000000.ply"
    _ply(p, rec.tobytes(), n=3)
    cloud = load_scan(p)
    assert_array_equal(cloud.points, [[1, 2, 3], [4, 5, 6], [-1, 0, 0.5]])
    assert_array_equal(cloud.stamps, [0.5, 0.25, 0.0])
    offset = load_scan(p, stamp_mode="offset")
    assert_array_equal(offset.stamps, [10.5, 10.25, 10.0])


def test_extra_properties_are_ignored(tmp_path):
    rec = np.array([(7, 1.0, 2.0, 3.0, 0.1)],
                   dtype=[("i", "u1"), ("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("t", "<f8")])
    p = tmp_path / "s.ply"
    _ply(p, rec.tobytes(), ("uchar i", "float x", "float y", "float z", "double t"), n=1)
    assert_array_equal(load_scan(p).points, [[1.0, 2.0, 3.0]])


@settings(max_examples=30, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(0, 50), st.just(3)),
              elements=st.floats(-1e4, 1e4, width=32)),
       st.floats(0, 1e6))
def test_property_write_read_is_bit_identical(tmp_path_factory, pts, start):
    stamps = start + np.linspace(0.0, 0.1, len(pts))
    cloud = TimedPointCloud(pts.astype(float), stamps)
    p = tmp_path_factory.mktemp("ply") / "scan.ply"
    write_scan(p, cloud)
    back = load_scan(p)
    assert_array_equal(back.points, cloud.points)
    assert_array_equal(back.stamps, cloud.stamps)


@pytest.mark.parametrize("case, field", [
    ("ascii", "format"),
    ("no_t", "'t'"),
    ("nan", "'y'"),
    ("truncated", "truncated"),
])
def test_bad_ply_names_file_and_field(tmp_path, case, field):
    p = tmp_path / f"{case}.ply"
    rec = np.array([(1, np.nan if case == "nan" else 2, 3, 0.0)],
                   dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("t", "<f8")])
    if case == "ascii":
        _ply(p, b"1 2 3 0\n", n=1, fmt="ascii")
    elif case == "no_t":
        _ply(p, rec[["x", "y", "z"]].tobytes(), ("float x", "float y", "float z"), n=1)
    elif case == "truncated":
        _ply(p, rec.tobytes()[:-3], n=1)
    else:
        _ply(p, rec.tobytes(), n=1)
    with pytest.raises(DataError) as e:
        load_scan(p)
    assert str(p) in str(e.value)
    assert field in str(e.value)


def test_scan_filename_roundtrip():
    assert scan_filename(12.3) == "12.300000000.ply"


def _imu_csv(path, rows):
    path.write_text("timestamp,ax,ay,az,gx,gy,gz\n" + "".join(
        ",".join(str(v) for v in r) + "\n" for r in rows))


def test_two_row_imu(tmp_path):
    p = tmp_path / "imu.csv"
    _imu_csv(p, [(0.0, 0, 0, 9.81, 0, 0, 0), (0.01, 1, 2, 3, 4, 5, 6)])
    s = load_imu(p)
    assert len(s) == 2
    assert_array_equal(s[1].gyro, [4, 5, 6])


def test_duplicate_stamps_keep_first(tmp_path):
    p = tmp_path / "imu.csv"
    _imu_csv(p, [(0.0, 1, 0, 0, 0, 0, 0), (0.0, 2, 0, 0, 0, 0, 0), (0.01, 3, 0, 0, 0, 0, 0)])
    s = load_imu(p)
    assert [x.accel[0] for x in s] == [1.0, 3.0]


@pytest.mark.parametrize("rows, msg", [
    ([(0.02, 0, 0, 0, 0, 0, 0), (0.01, 0, 0, 0, 0, 0, 0)], "row 1"),
    ([(0.0, 0, 0, 0, 0, 0)], "row 0"),
    ([(0.0, 0, 0, "nan", 0, 0, 0)], "row 0"),
])
def test_bad_imu_rows(tmp_path, rows, msg):
    p = tmp_path / "imu.csv"
    _imu_csv(p, rows)
    with pytest.raises(DataError, match=msg):
        load_imu(p)


def test_imu_header_required(tmp_path):
    p = tmp_path / "imu.csv"
    p.write_text("t,ax,ay,az,gx,gy,gz\n0,0,0,0,0,0,0\n")
    with pytest.raises(DataError, match="header"):
        load_imu(p)


def test_large_imu_roundtrip(tmp_path, rng):
    t = np.cumsum(rng.uniform(0.001, 0.02, 10_000))
    acc, gyr = rng.normal(size=(2, 10_000, 3))
    samples = [ImuSample(t[i], acc[i], gyr[i]) for i in range(len(t))]
    p = tmp_path / "imu.csv"
    write_imu(p, samples)
    back = load_imu(p)
    assert len(back) == len(samples)
    assert_array_equal([s.timestamp for s in back], t)
    assert_array_equal(np.array([s.accel for s in back]), acc)
    assert_array_equal(np.array([s.gyro for s in back]), gyr)


def test_identity_trajectory_line(tmp_path):
    p = tmp_path / "traj.tum"
    write_trajectory([State(Pose(), stamp=0.0)], p)
    assert p.read_text() == "0.000000000 0 0 0 0 0 0 1\n"
    write_trajectory([], p)
    assert p.read_text() == ""


def test_trajectory_roundtrip(tmp_path, rng):
    states = [State(random_pose(rng, max_t=500.0), stamp=1000.0 + 0.1 * i) for i in range(50)]
    p = tmp_path / "traj.tum"
    write_trajectory(states, p)
    back = read_tum(p)
    for i, s in enumerate(states):
        assert_allclose(back.pose(i).matrix(), s.pose.matrix(), rtol=1e-8, atol=1e-8 * 500)
        assert back.stamps[i] == pytest.approx(s.stamp, abs=1e-9)


def test_trajectory_write_error_names_path(tmp_path):
    bad = tmp_path / "missing" / "traj.tum"
    with pytest.raises(DataError, match="missing"):
        write_trajectory([State(Pose())], bad)


def test_manifest_roundtrip(tmp_path):
    (tmp_path / "scans").mkdir()
    (tmp_path / "imu.csv").write_text("timestamp,ax,ay,az,gx,gy,gz\n")
    ext = Extrinsics(Pose(so3_exp([0, 0, 0.3]), [0.1, 0.2, 0.3]), Pose(translation=[0, 0, 1.0]))
    m = DatasetManifest(tmp_path, tmp_path / "scans", tmp_path / "imu.csv", ext, "offset", "ms", 0.1)
    m.write()
    back = DatasetManifest.load(tmp_path)
    assert back.stamp_mode == "offset" and back.time_unit == "ms"
    assert back.scan_period == 0.1
    assert_allclose(back.extrinsics.lidar_to_body.matrix(), ext.lidar_to_body.matrix(), atol=1e-15)


def test_manifest_iterates_scans_in_order(tmp_path):
    scans = tmp_path / "scans"
    scans.mkdir()
    (tmp_path / "imu.csv").write_text("timestamp,ax,ay,az,gx,gy,gz\n")
    for start in (0.2, 0.0, 0.1):
        write_scan(scans / scan_filename(start),
                   TimedPointCloud(np.ones((2, 3)), [start + 0.01, start + 0.05]), start)
    (tmp_path / "manifest.txt").write_text("stamp_mode = offset\ntime_unit = s\n")
    out = list(DatasetManifest.load(tmp_path).iter_scans())
    assert [(round(s, 9), round(e, 9)) for _, s, e in out] == [(0.0, 0.1), (0.1, 0.2), (0.2, 0.25)]
    assert_allclose(out[1][0].stamps, [0.11, 0.15])


@pytest.mark.parametrize("missing", ["manifest.txt", "scans", "imu.csv"])
def test_manifest_missing_pieces(tmp_path, missing):
    (tmp_path / "scans").mkdir()
    (tmp_path / "imu.csv").write_text("timestamp,ax,ay,az,gx,gy,gz\n")
    (tmp_path / "manifest.txt").write_text("stamp_mode = absolute\n")
    target = tmp_path / missing
    target.rmdir() if target.is_dir() else target.unlink()
    with pytest.raises(DataError, match=missing):
        DatasetManifest.load(tmp_path)
