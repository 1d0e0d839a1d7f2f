"""Trajectory metrics: ATE after rigid alignment and KITTI-style relative error."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Pose

ASSOCIATION_WINDOW = 0.05


class MetricError(ValueError):
    pass


@dataclass
class Trajectory:
    stamps: np.ndarray      # (N,)
    positions: np.ndarray   # (N, 3)
    quats: np.ndarray       # (N, 4) x, y, z, w

    def __len__(self):
        return self.stamps.shape[0]

    @classmethod
    def from_states(cls, states) -> "Trajectory":
        return cls(np.array([s.stamp for s in states], dtype=float),
                   np.array([s.pose.t for s in states], dtype=float).reshape(-1, 3),
                   np.array([s.pose.quat for s in states], dtype=float).reshape(-1, 4))

    @classmethod
    def from_poses(cls, stamps, poses) -> "Trajectory":
        return cls(np.asarray(stamps, dtype=float),
                   np.array([p.t for p in poses]).reshape(-1, 3),
                   np.array([p.quat for p in poses]).reshape(-1, 4))

    def pose(self, i) -> Pose:
        return Pose(translation=self.positions[i], quat=self.quats[i])

    def subset(self, idx) -> "Trajectory":
        return Trajectory(self.stamps[idx], self.positions[idx], self.quats[idx])

    def transformed(self, T: Pose) -> "Trajectory":
        """Left-multiply every pose by ``T``."""
        poses = [T @ self.pose(i) for i in range(len(self))]
        return Trajectory.from_poses(self.stamps, poses)


def read_tum(path) -> Trajectory:
    path = Path(path)
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise MetricError(f"{path}:{lineno}: expected 8 columns")
        rows.append([float(p) for p in parts])
    a = np.array(rows, dtype=float).reshape(-1, 8)
    return Trajectory(a[:, 0], a[:, 1:4], a[:, 4:8])


def associate(est: Trajectory, ref: Trajectory, max_dt: float = ASSOCIATION_WINDOW):
    """Index pairs ``(i_est, i_ref)`` matched by nearest stamp within ``max_dt``."""
    if len(est) == 0 or len(ref) == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    order = np.argsort(ref.stamps, kind="stable")
    rs = ref.stamps[order]
    pos = np.searchsorted(rs, est.stamps)
    lo = np.clip(pos - 1, 0, len(rs) - 1)
    hi = np.clip(pos, 0, len(rs) - 1)
    pick = np.where(np.abs(rs[hi] - est.stamps) < np.abs(rs[lo] - est.stamps), hi, lo)
    ok = np.abs(rs[pick] - est.stamps) <= max_dt
    return np.flatnonzero(ok), order[pick[ok]]


def align_rigid(src: np.ndarray, dst: np.ndarray):
    """Least-squares ``R, t`` with ``R @ src + t ~ dst`` (no scale)."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    C = (dst - mu_d).T @ (src - mu_s)
    U, _, Vt = np.linalg.svd(C)
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt)) or 1.0
    R = U @ D @ Vt
    return R, mu_d - R @ mu_s


def ate(est: Trajectory, ref: Trajectory, max_dt: float = ASSOCIATION_WINDOW) -> float:
    """Position RMSE after SE(3) alignment of the estimate onto the reference."""
    ie, ir = associate(est, ref, max_dt)
    if ie.shape[0] < 3:
        raise MetricError(f"ATE needs at least 3 associated poses, got {ie.shape[0]}")
    P = est.positions[ie]
    G = ref.positions[ir]
    if np.array_equal(P, G):
        return 0.0      # identity alignment; skip SVD round-off
    R, t = align_rigid(P, G)
    res = P @ R.T + t - G
    return float(np.sqrt(np.mean(np.sum(res * res, axis=1))))


def rpe(est: Trajectory, ref: Trajectory, segment_lengths, max_dt: float = ASSOCIATION_WINDOW):
    """Mean translational drift in percent over reference-arc-length segments.

    Every associated pose starts a segment for every length. Returns None
    when the reference is shorter than all requested lengths.
    """
    ie, ir = associate(est, ref, max_dt)
    if ie.shape[0] < 2:
        return None
    E = est.subset(ie)
    G = ref.subset(ir)
    steps = np.linalg.norm(np.diff(G.positions, axis=0), axis=1)
    dist = np.r_[0.0, np.cumsum(steps)]
    n = len(G)
    est_poses = [E.pose(i) for i in range(n)]
    ref_poses = [G.pose(i) for i in range(n)]
    errors = []
    for L in segment_lengths:
        L = float(L)
        if L <= 0:
            raise MetricError("segment lengths must be positive")
        ends = np.searchsorted(dist, dist + L, side="left")
        for i in range(n):
            j = ends[i]
            if j >= n:
                break
            d_ref = ref_poses[i].inverse() @ ref_poses[j]
            d_est = est_poses[i].inverse() @ est_poses[j]
            # translation of d_ref^-1 d_est is R_ref^T (t_est - t_ref); same norm
            errors.append(np.linalg.norm(d_est.t - d_ref.t) / L)
    if not errors:
        return None
    return 100.0 * float(np.mean(errors))


DEFAULT_SEGMENTS = (1, 2, 5, 10, 20, 50, 100)


def report(est: Trajectory, ref: Trajectory, segments=DEFAULT_SEGMENTS) -> dict:
    return {"ate_m": ate(est, ref), "rpe_percent": rpe(est, ref, segments)}
