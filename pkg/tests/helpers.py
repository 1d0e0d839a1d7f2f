"""Shared test helpers: random poses and hypothesis strategies."""

import numpy as np
from hypothesis import strategies as st

from lio.geometry import Pose, so3_exp

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def random_rotation(rng, max_angle=np.pi):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return so3_exp(axis * rng.uniform(0.0, max_angle))


def random_pose(rng, max_angle=np.pi, max_t=5.0):
    return Pose(random_rotation(rng, max_angle), rng.uniform(-max_t, max_t, 3))


finite = st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)
# rotation vectors strictly inside the principal ball
rotvec = st.tuples(*[st.floats(-1.0, 1.0)] * 3, st.floats(0.0, np.pi - 1e-3)).map(
    lambda v: np.array(v[:3]) / max(np.linalg.norm(v[:3]), 1e-9) * v[3]
    if np.linalg.norm(v[:3]) > 1e-6 else np.zeros(3))


def plane_box_cloud(n=4000, extent=3.0, seed=7):
    """Floor, two walls and a box, sampled at random so there is no lattice to lock onto."""
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(-extent, extent, (2, 3 * n))
    floor = np.stack([a[:n], b[:n], np.full(n, -1.0)], axis=1)
    wall_x = np.stack([np.full(n, extent), a[n:2 * n], 0.5 * b[n:2 * n] + 0.5], axis=1)
    wall_y = np.stack([a[2 * n:], np.full(n, -extent), 0.5 * b[2 * n:] + 0.5], axis=1)
    u, v = rng.uniform(0.0, 1.0, (2, n))
    k = n // 3
    box = np.vstack([
        np.stack([0.5 + u[:k], -1.5 + v[:k], np.zeros(k)], axis=1),
        np.stack([np.full(k, 0.5), -1.5 + u[k:2 * k], v[k:2 * k] - 1.0], axis=1),
        np.stack([0.5 + u[2 * k:3 * k], np.full(k, -1.5), v[2 * k:3 * k] - 1.0], axis=1),
    ])
    return np.vstack([floor, wall_x, wall_y, box])
