import filecmp

import numpy as np
import pytest

from lio.cli import main
from lio.dataset_io import write_trajectory
from lio.geometry import Pose, so3_exp
from lio.odometry import State


@pytest.fixture
def tum(tmp_path):
    p = tmp_path / "a.tum"
    states = [State(Pose(so3_exp([0, 0, 0.05 * i]), [0.5 * i, 0.1 * i, 0.0]), stamp=0.1 * i)
              for i in range(60)]
    write_trajectory(states, p)
    return p


def test_evaluate_same_file(tum, capsys):
    assert main(["evaluate", str(tum), str(tum), "--segments", "1,2,5"]) == 0
    out = capsys.readouterr().out
    assert "ATE 0.000 m" in out
    assert "RPE 0.00 %" in out


def test_evaluate_writes_csv(tum, tmp_path, capsys):
    csv = tmp_path / "m.csv"
    assert main(["evaluate", str(tum), str(tum), "--segments", "100", "--csv", str(csv)]) == 0
    assert "RPE n.a." in capsys.readouterr().out
    lines = csv.read_text().splitlines()
    assert lines[0] == "metric,value"
    assert lines[2] == "rpe_percent,n.a."
    assert float(lines[1].split(",")[1]) == pytest.approx(0.0, abs=1e-9)


def test_run_missing_manifest(tmp_path, capsys):
    assert main(["run", "--data-dir", str(tmp_path)]) == 1
    assert str(tmp_path / "manifest.txt") in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["run", "--bogus"],
    ["evaluate", "a.tum"],
    ["evaluate", "a.tum", "b.tum", "--segments", "-1"],
    ["frobnicate"],
])
def test_bad_usage_exits_2(argv, capsys):
    assert main(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_evaluate_missing_file(tmp_path):
    assert main(["evaluate", str(tmp_path / "x.tum"), str(tmp_path / "y.tum")]) == 1


def _tree(root):
    return sorted(p.relative_to(root) for p in root.rglob("*"))


def test_simulate_is_deterministic(tmp_path):
    args = ["simulate", "--profile", "figure8", "--seed", "7", "--duration", "0.5"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--output-dir", str(a)]) == 0
    assert main(args + ["--output-dir", str(b)]) == 0
    files = _tree(a)
    assert files == _tree(b)
    assert len([f for f in files if f.suffix == ".ply"]) == 5
    for f in files:
        if (a / f).is_file():
            assert filecmp.cmp(a / f, b / f, shallow=False), f


def test_simulate_run_evaluate(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["simulate", "--profile", "stationary", "--duration", "1.0",
                 "--output-dir", str(data)]) == 0
    out = tmp_path / "est.tum"
    assert main(["run", "--data-dir", str(data), "--output", str(out)]) == 0
    rows = np.loadtxt(out)
    assert rows.shape == (10, 8)
    assert main(["evaluate", str(out), str(data / "groundtruth.tum"), "--segments", "1"]) == 0
    assert "ATE 0.000 m" in capsys.readouterr().out


def test_simulate_rejects_profile_through_obstacle(tmp_path, capsys):
    spec = tmp_path / "p.txt"
    spec.write_text("type = constant_velocity\nspeed = 3\nduration = 20\n")
    assert main(["simulate", "--profile-file", str(spec), "--output-dir", str(tmp_path / "o")]) == 1
    assert "error" in capsys.readouterr().err
