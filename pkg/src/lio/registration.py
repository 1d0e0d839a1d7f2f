"""Scan-to-map point-to-point ICP with the accelerometer attitude regularizer."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .geometry import Pose, se3_boxplus, skew
from .imu import GRAVITY, ImuWindowSummary
from .local_map import VoxelMap

log = logging.getLogger(__name__)

MEAS_VAR_FLOOR = 1e-6


class DegenerateSystemError(RuntimeError):
    pass


@dataclass
class BodyAccelFilter:
    """Kalman filter on the true body acceleration, constant-acceleration model."""

    a_b: np.ndarray = field(default_factory=lambda: np.zeros(3))
    P: np.ndarray = field(default_factory=lambda: np.eye(3))
    max_jerk: float = 3.0


def kf_predict(f: BodyAccelFilter, dt: float) -> BodyAccelFilter:
    # jerk uniform on [-j, j] integrated over dt
    if not dt > 0:
        raise ValueError("dt must be positive")
    q = f.max_jerk ** 2 * dt ** 2 / 3.0
    return replace(f, a_b=f.a_b.copy(), P=f.P + q * np.eye(3))


def kf_update(f: BodyAccelFilter, measurement, sigma_a: float,
              floor: float = MEAS_VAR_FLOOR) -> BodyAccelFilter:
    if sigma_a < 0:
        raise ValueError("sigma_a must be non-negative")
    z = np.asarray(measurement, dtype=float)
    Rm = max(sigma_a ** 2 / 3.0, floor) * np.eye(3)
    S = f.P + Rm
    K = np.linalg.solve(S, f.P).T  # P S^-1, both symmetric
    I_K = np.eye(3) - K
    P = I_K @ f.P @ I_K.T + K @ Rm @ K.T
    P = 0.5 * (P + P.T)
    return replace(f, a_b=f.a_b + K @ (z - f.a_b), P=P)


def compute_beta(beta0: float, sigma_a: float) -> float:
    if not beta0 > 0 or sigma_a < 0:
        raise ValueError("need beta0 > 0 and sigma_a >= 0")
    return beta0 * (1.0 + sigma_a ** 2)


def orientation_residual(R, mean_raw_accel, a_b, g=GRAVITY) -> np.ndarray:
    return np.asarray(R) @ (np.asarray(mean_raw_accel) - np.asarray(a_b)) + np.asarray(g)


@dataclass
class OrientationPrior:
    """Gravity-direction term ``(1/beta) * ||R f + g||^2`` with ``f = z_mean - a_b``."""

    specific_force: np.ndarray
    beta: float
    g: np.ndarray = field(default_factory=lambda: GRAVITY.copy())


@dataclass
class CorrespondenceSet:
    source: np.ndarray  # body-frame points q
    target: np.ndarray  # map points m

    def __len__(self):
        return self.source.shape[0]


@dataclass
class SolveReport:
    iterations: int = 0
    final_cost: float = float("nan")
    correspondence_count: int = 0
    converged: bool = False
    delta_norm: float = float("nan")
    costs: list = field(default_factory=list)


def point_jacobian(R: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Jacobian (3, 6) of ``R q + t - m`` under the (rho, theta) correction."""
    return np.hstack([np.eye(3), -np.asarray(R) @ skew(q)])


def prior_jacobian(R: np.ndarray, specific_force: np.ndarray) -> np.ndarray:
    """Jacobian (3, 3) of ``R f + g`` with respect to the rotation correction."""
    return -np.asarray(R) @ skew(specific_force)


def build_system(C: CorrespondenceSet, T: Pose, prior: OrientationPrior | None = None):
    """Gauss-Newton normal equations ``(H, b, chi)`` of the combined cost at ``T``."""
    n = len(C)
    if n == 0:
        raise DegenerateSystemError("no correspondences")
    residuals = T.apply(C.source) - C.target
    H, b, sse = kernels.icp_normal_equations(np.ascontiguousarray(C.source), residuals, T.R)
    H = H / n
    b = b / n
    chi = sse / n
    if prior is not None:
        w = 1.0 / prior.beta
        r = T.R @ prior.specific_force + prior.g
        J = prior_jacobian(T.R, prior.specific_force)
        H[3:, 3:] += w * (J.T @ J)
        b[3:] += w * (J.T @ r)
        chi += w * float(r @ r)
    return H, b, chi


def associate(Q: np.ndarray, voxel_map: VoxelMap, T: Pose, threshold: float) -> CorrespondenceSet:
    nearest, _, found = voxel_map.nearest_neighbors(T.apply(Q), threshold)
    return CorrespondenceSet(Q[found], nearest[found])


def register(Q: np.ndarray, voxel_map: VoxelMap, T_hat: Pose, summary: ImuWindowSummary | None,
             accel_filter: BodyAccelFilter | None, cfg, g=GRAVITY):
    """Refine ``T_hat`` against the map.

    Returns ``(T, report, filter)``. With regularization active the filter is
    advanced once before the iterations and the attitude term is kept fixed
    in ``f`` while following the current rotation iterate.
    """
    Q = np.ascontiguousarray(np.asarray(Q, dtype=float).reshape(-1, 3))
    prior = None
    if cfg.adaptive_regularization and summary is not None and accel_filter is not None:
        accel_filter = kf_predict(accel_filter, summary.dt)
        accel_filter = kf_update(accel_filter, summary.mean_accel, summary.sigma_a)
        beta = compute_beta(cfg.beta0, summary.sigma_a)
        prior = OrientationPrior(summary.mean_raw_accel - accel_filter.a_b, beta,
                                 np.asarray(g, dtype=float))
    T = T_hat
    report = SolveReport()
    for it in range(cfg.max_iterations):
        C = associate(Q, voxel_map, T, cfg.association_threshold)
        if len(C) == 0:
            if it == 0:
                log.warning("no correspondences, keeping the prediction")
            break
        H, b, chi = build_system(C, T, prior)
        try:
            dx = np.linalg.solve(H, -b)
        except np.linalg.LinAlgError:
            log.warning("singular normal equations at iteration %d", it)
            break
        T = se3_boxplus(T, dx)
        report.iterations = it + 1
        report.final_cost = chi
        report.correspondence_count = len(C)
        report.delta_norm = float(np.linalg.norm(dx))
        report.costs.append(chi)
        if report.delta_norm < cfg.convergence_eps:
            report.converged = True
            break
    return T, report, accel_filter
