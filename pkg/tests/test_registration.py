import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lio.config import Config
from lio.geometry import Pose, se3_boxplus, so3_exp, so3_log
from lio.imu import GRAVITY, ImuWindowSummary
from lio.local_map import VoxelMap
from lio.registration import (BodyAccelFilter, CorrespondenceSet, DegenerateSystemError,
                              OrientationPrior, build_system, compute_beta, kf_predict, kf_update,
                              orientation_residual, point_jacobian, prior_jacobian, register)

from helpers import plane_box_cloud, random_pose


def test_kf_predict_adds_jerk_variance():
    f = kf_predict(BodyAccelFilter(P=np.zeros((3, 3)), max_jerk=3.0), 0.1)
    assert_allclose(f.P, 0.03 * np.eye(3), rtol=0, atol=1e-16)
    with pytest.raises(ValueError):
        kf_predict(f, 0.0)


def test_kf_predict_does_not_alias_input():
    f = BodyAccelFilter()
    g = kf_predict(f, 0.1)
    g.a_b[0] = 5.0
    assert f.a_b[0] == 0.0


@pytest.mark.parametrize("p0, sigma, z", [(1.0, 0.5, 2.0), (0.01, 3.0, -1.0), (4.0, 0.0, 0.3)])
def test_kf_update_matches_scalar_filter(p0, sigma, z):
    f = BodyAccelFilter(a_b=np.full(3, 0.1), P=p0 * np.eye(3))
    out = kf_update(f, np.full(3, z), sigma)
    r = max(sigma ** 2 / 3.0, 1e-6)
    k = p0 / (p0 + r)
    assert_allclose(out.a_b, 0.1 + k * (z - 0.1))
    assert_allclose(out.P, (1 - k) * p0 * np.eye(3))


def test_kf_update_keeps_covariance_symmetric_positive(rng):
    A = rng.normal(size=(3, 3))
    f = BodyAccelFilter(P=A @ A.T + 0.1 * np.eye(3))
    for _ in range(50):
        f = kf_update(kf_predict(f, 0.1), rng.normal(size=3), rng.uniform(0, 2))
        assert_allclose(f.P, f.P.T, atol=0)
        assert np.all(np.linalg.eigvalsh(f.P) > 0)


def test_beta_scaling():
    assert compute_beta(200.0, 0.0) == 200.0
    assert compute_beta(200.0, 1.0) == 400.0
    with pytest.raises(ValueError):
        compute_beta(0.0, 1.0)


def test_orientation_residual_zero_at_truth():
    R = so3_exp([0.1, -0.2, 0.3])
    a_b = np.array([0.5, 0.1, 0.0])
    f = R.T @ -GRAVITY + a_b
    assert_allclose(orientation_residual(R, f, a_b), 0.0, atol=1e-14)


def _central_difference(fun, n, eps=1e-6):
    cols = []
    for i in range(n):
        d = np.zeros(n)
        d[i] = eps
        cols.append((fun(d) - fun(-d)) / (2 * eps))
    return np.stack(cols, axis=-1)


def test_point_jacobian_matches_finite_differences(rng):
    for _ in range(10):
        T = random_pose(rng)
        q = rng.normal(size=3) * 5
        m = rng.normal(size=3)
        num = _central_difference(lambda d: se3_boxplus(T, d).apply(q) - m, 6)
        ana = point_jacobian(T.R, q)
        assert np.abs(num - ana).max() <= 1e-5 * max(1.0, np.abs(ana).max())


def test_prior_jacobian_matches_finite_differences(rng):
    f = np.array([0.3, -0.1, 9.7])
    for _ in range(10):
        T = random_pose(rng)
        num = _central_difference(
            lambda d: se3_boxplus(T, np.r_[0, 0, 0, d]).R @ f + GRAVITY, 3)
        ana = prior_jacobian(T.R, f)
        assert np.abs(num - ana).max() <= 1e-5 * max(1.0, np.abs(ana).max())


def test_build_system_matches_dense_sum(rng):
    T = random_pose(rng)
    src = rng.normal(size=(40, 3)) * 3
    tgt = T.apply(src) + rng.normal(size=(40, 3)) * 0.05
    prior = OrientationPrior(np.array([0.1, 0.2, 9.8]), 250.0)
    H, b, chi = build_system(CorrespondenceSet(src, tgt), T, prior)
    H0, b0 = np.zeros((6, 6)), np.zeros(6)
    for q, m in zip(src, tgt):
        J = point_jacobian(T.R, q)
        H0 += J.T @ J / 40
        b0 += J.T @ (T.apply(q) - m) / 40
    Jp = prior_jacobian(T.R, prior.specific_force)
    rp = T.R @ prior.specific_force + GRAVITY
    H0[3:, 3:] += Jp.T @ Jp / 250.0
    b0[3:] += Jp.T @ rp / 250.0
    assert_allclose(H, H0, atol=1e-10)
    assert_allclose(b, b0, atol=1e-12)
    res = T.apply(src) - tgt
    assert chi == pytest.approx(np.mean(np.sum(res * res, axis=1)) + rp @ rp / 250.0)


def test_build_system_gradient_is_half_cost_gradient(rng):
    T = random_pose(rng)
    src = rng.normal(size=(30, 3))
    C = CorrespondenceSet(src, rng.normal(size=(30, 3)))
    prior = OrientationPrior(np.array([0.0, 0.3, 9.81]), 50.0)
    _, b, _ = build_system(C, T, prior)
    grad = _central_difference(lambda d: np.array(build_system(C, se3_boxplus(T, d), prior)[2]), 6)
    assert_allclose(grad, 2 * b, rtol=1e-5, atol=1e-7)


def test_build_system_needs_correspondences():
    with pytest.raises(DegenerateSystemError):
        build_system(CorrespondenceSet(np.zeros((0, 3)), np.zeros((0, 3))), Pose())


def _offset_problem(shift=0.2, angle_deg=5.0):
    cloud = plane_box_cloud()
    m = VoxelMap(1.0, 1000)
    m.insert(cloud)
    axis = np.array([0.3, -0.2, 1.0])
    T_true = Pose(so3_exp(axis / np.linalg.norm(axis) * math.radians(angle_deg)),
                  np.array([1.0, 1.0, 0.5]) / math.sqrt(2.25) * shift)
    return m, T_true.inverse().apply(cloud), T_true


def test_icp_recovers_known_offset():
    m, Q, T_true = _offset_problem()
    T, report, _ = register(Q, m, Pose(), None, None, Config(adaptive_regularization=False))
    err = T_true.inverse() @ T
    assert np.linalg.norm(err.t) <= 1e-3
    assert math.degrees(np.linalg.norm(so3_log(err.R))) <= 0.05
    assert report.converged
    assert report.costs[-1] <= report.costs[0]


def test_icp_without_overlap_keeps_prediction():
    m = VoxelMap()
    m.insert(np.array([[50.0, 50.0, 50.0]]))
    T_hat = Pose(translation=[0.1, 0.0, 0.0])
    T, report, _ = register(np.zeros((5, 3)), m, T_hat, None, None, Config())
    assert T is T_hat
    assert report.iterations == 0


def test_regularized_registration_advances_filter():
    m, Q, T_true = _offset_problem()
    a = np.array([0.2, 0.0, 0.0])
    summary = ImuWindowSummary(a, np.zeros(3), T_true.R.T @ -GRAVITY + a, 0.5, 0.1, 10)
    f0 = BodyAccelFilter()
    T, _, f1 = register(Q, m, Pose(), summary, f0, Config())
    # the filter moves toward the measurement and tightens
    assert 0.0 < f1.a_b[0] < 0.2
    assert np.all(np.diag(f1.P) < np.diag(f0.P) + 0.03)
    # the prior only nudges a well constrained geometric solution
    assert np.linalg.norm((T_true.inverse() @ T).t) <= 5e-3
