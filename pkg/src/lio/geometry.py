"""SO(3)/SE(3) helpers used by the estimator.

Rotations are held as unit quaternions (x, y, z, w) inside :class:`Pose`
and exposed as 3x3 matrices. Tangent vectors are ordered (rho, theta):
translation first, rotation second.
"""

from __future__ import annotations

import math

import numpy as np

SMALL_ANGLE = 1e-8
_ORTHO_TOL = 1e-6


def skew(v: np.ndarray) -> np.ndarray:
    """Hat operator: ``skew(a) @ b == np.cross(a, b)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _check_finite(v, name):
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite, got {v!r}")
    return v


def so3_exp(phi) -> np.ndarray:
    """Rodrigues formula, second-order Taylor expansion below ``SMALL_ANGLE``."""
    phi = _check_finite(phi, "rotation vector").reshape(3)
    theta = math.sqrt(float(phi @ phi))
    K = skew(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) + K + 0.5 * (K @ K)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def check_rotation(R: np.ndarray, tol: float = _ORTHO_TOL) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise ValueError("rotation must be a finite 3x3 matrix")
    if np.abs(R.T @ R - np.eye(3)).max() > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError("matrix is not a proper rotation")
    return R


def quat_from_matrix(R: np.ndarray) -> np.ndarray:
    """Shepperd's method; returns (x, y, z, w) with w >= 0."""
    m = R
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    cands = (tr, m[0, 0], m[1, 1], m[2, 2])
    k = int(np.argmax(cands))
    if k == 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        q = np.array([(m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s, 0.25 * s])
    elif k == 1:
        s = 2.0 * math.sqrt(max(1.0 + m[0, 0] - m[1, 1] - m[2, 2], 0.0))
        q = np.array([0.25 * s, (m[0, 1] + m[1, 0]) / s,
                      (m[0, 2] + m[2, 0]) / s, (m[2, 1] - m[1, 2]) / s])
    elif k == 2:
        s = 2.0 * math.sqrt(max(1.0 + m[1, 1] - m[0, 0] - m[2, 2], 0.0))
        q = np.array([(m[0, 1] + m[1, 0]) / s, 0.25 * s,
                      (m[1, 2] + m[2, 1]) / s, (m[0, 2] - m[2, 0]) / s])
    else:
        s = 2.0 * math.sqrt(max(1.0 + m[2, 2] - m[0, 0] - m[1, 1], 0.0))
        q = np.array([(m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s,
                      0.25 * s, (m[1, 0] - m[0, 1]) / s])
    q /= np.linalg.norm(q)
    return -q if q[3] < 0 else q


def matrix_from_quat(q: np.ndarray) -> np.ndarray:
    x, y, z, w = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array([
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ])


def _quat_log(q: np.ndarray) -> np.ndarray:
    if q[3] < 0:
        q = -q
    v = q[:3]
    n = math.sqrt(float(v @ v))
    if n < 1e-12:
        # theta ~ 2n, so phi ~ 2 v / w to second order
        return 2.0 * v / q[3]
    theta = 2.0 * math.atan2(n, q[3])
    return v * (theta / n)


def so3_log(R) -> np.ndarray:
    """Principal logarithm; the result has norm at most pi.

    Goes through the quaternion so the near-pi case does not divide by
    ``sin(theta)``.
    """
    R = check_rotation(R)
    return _quat_log(quat_from_matrix(R))


def left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    theta = math.sqrt(float(phi @ phi))
    K = skew(phi)
    if theta < 1e-5:
        c = 1.0 / 12.0 + theta * theta / 720.0
    else:
        half = 0.5 * theta
        c = (1.0 - half * math.cos(half) / math.sin(half)) / (theta * theta)
    return np.eye(3) - 0.5 * K + c * (K @ K)


class Pose:
    """Rigid transform. ``Pose(R, t) @ p == R @ p + t``."""

    __slots__ = ("quat", "R", "t")

    def __init__(self, rotation=None, translation=None, quat=None):
        if quat is not None:
            q = np.asarray(quat, dtype=float)
            q = q / np.linalg.norm(q)
            self.quat = -q if q[3] < 0 else q
        elif rotation is not None:
            self.quat = quat_from_matrix(check_rotation(rotation))
        else:
            self.quat = np.array([0.0, 0.0, 0.0, 1.0])
        self.R = matrix_from_quat(self.quat)
        self.t = (np.zeros(3) if translation is None
                  else np.array(translation, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "Pose":
        return cls(M[:3, :3], M[:3, 3])

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.R
        M[:3, 3] = self.t
        return M

    def __matmul__(self, other):
        if isinstance(other, Pose):
            return Pose(translation=self.R @ other.t + self.t,
                        quat=quat_mul(self.quat, other.quat))
        return NotImplemented

    def inverse(self) -> "Pose":
        qi = self.quat * np.array([-1.0, -1.0, -1.0, 1.0])
        return Pose(translation=-(self.R.T @ self.t), quat=qi)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array or a single 3-vector."""
        points = np.asarray(points, dtype=float)
        return points @ self.R.T + self.t

    def __repr__(self):
        return f"Pose(t={self.t.tolist()}, q={self.quat.tolist()})"


def se3_boxplus(T: Pose, dx) -> Pose:
    """Apply a (rho, theta) correction: rotation on the right, translation added.

    Blocks are kept separate (SO(3) x R^3), which gives the ICP Jacobian
    ``[I | -R [q]x]``.
    """
    dx = np.asarray(dx, dtype=float)
    if not dx.any():
        return T
    dq = Pose(so3_exp(dx[3:])).quat
    return Pose(translation=T.t + dx[:3], quat=quat_mul(T.quat, dq))


def se3_log(T: Pose) -> np.ndarray:
    """Full SE(3) logarithm as (rho, theta)."""
    phi = _quat_log(T.quat)
    return np.concatenate([left_jacobian_inv(phi) @ T.t, phi])


def se3_log_translation(T: Pose) -> np.ndarray:
    return se3_log(T)[:3]
