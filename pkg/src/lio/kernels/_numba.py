"""numba versions of the hot loops.

Same signatures and outputs as ``_numpy``. Per-query loops use ``prange``;
every output slot is written by exactly one iteration so the result does not
depend on thread scheduling.
"""

import math

import numpy as np
from numba import njit, prange


_OFFSET = 1 << 20


@njit(cache=True)
def _find(sorted_keys, key):
    lo, hi = 0, sorted_keys.shape[0]
    while lo < hi:
        mid = (lo + hi) >> 1
        if sorted_keys[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    if lo < sorted_keys.shape[0] and sorted_keys[lo] == key:
        return lo
    return -1


# neighbour offsets, own voxel first, so later voxels can be pruned against
# the best distance found so far
_ORDER = np.array(sorted(((i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)),
                         key=lambda o: abs(o[0]) + abs(o[1]) + abs(o[2])), dtype=np.int64)


@njit(cache=True)
def _gap(q, c, a, v):
    """Distance along one axis from coordinate q to voxel c + a (zero inside)."""
    if a < 0:
        return q - c * v
    if a > 0:
        return (c + 1) * v - q
    return 0.0


@njit(parallel=True, cache=True)
def _nn_search(queries, sorted_keys, sorted_slots, slot_points, slot_counts, voxel_size,
               max_dist, order):
    m = queries.shape[0]
    nearest = np.zeros((m, 3))
    dist = np.full(m, np.inf)
    found = np.zeros(m, dtype=np.bool_)
    lim = max_dist * max_dist
    for i in prange(m):
        qx, qy, qz = queries[i, 0], queries[i, 1], queries[i, 2]
        cx = int(math.floor(qx / voxel_size))
        cy = int(math.floor(qy / voxel_size))
        cz = int(math.floor(qz / voxel_size))
        best = np.inf
        bs, bk = -1, -1
        for o in range(order.shape[0]):
            a, b, c = order[o, 0], order[o, 1], order[o, 2]
            ex = _gap(qx, cx, a, voxel_size)
            ey = _gap(qy, cy, b, voxel_size)
            ez = _gap(qz, cz, c, voxel_size)
            box = ex * ex + ey * ey + ez * ez
            if box > lim or box >= best:
                continue
            key = (((cx + a + _OFFSET) << 42) | ((cy + b + _OFFSET) << 21)
                   | (cz + c + _OFFSET))
            j = _find(sorted_keys, key)
            if j < 0:
                continue
            s = sorted_slots[j]
            for k in range(slot_counts[s]):
                dx = slot_points[s, k, 0] - qx
                dy = slot_points[s, k, 1] - qy
                dz = slot_points[s, k, 2] - qz
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < best:
                    best = d2
                    bs, bk = s, k
        if bs >= 0 and best <= lim:
            nearest[i, 0] = slot_points[bs, bk, 0]
            nearest[i, 1] = slot_points[bs, bk, 1]
            nearest[i, 2] = slot_points[bs, bk, 2]
            dist[i] = math.sqrt(best)
            found[i] = True
    return nearest, dist, found


def nn_search(queries, sorted_keys, sorted_slots, slot_points, slot_counts, voxel_size, max_dist):
    return _nn_search(queries, sorted_keys, sorted_slots, slot_points, slot_counts,
                      float(voxel_size), float(max_dist), _ORDER)


@njit(cache=True)
def icp_normal_equations(src, residuals, R):
    H = np.zeros((6, 6))
    g = np.zeros(6)
    sse = 0.0
    for i in range(src.shape[0]):
        q0, q1, q2 = src[i, 0], src[i, 1], src[i, 2]
        r0, r1, r2 = residuals[i, 0], residuals[i, 1], residuals[i, 2]
        # J_rot = -R [q]x ; rows of the 3x6 Jacobian
        J = np.zeros((3, 6))
        J[0, 0] = 1.0
        J[1, 1] = 1.0
        J[2, 2] = 1.0
        for a in range(3):
            J[a, 3] = -(R[a, 1] * q2 - R[a, 2] * q1)
            J[a, 4] = -(R[a, 2] * q0 - R[a, 0] * q2)
            J[a, 5] = -(R[a, 0] * q1 - R[a, 1] * q0)
        for u in range(6):
            g[u] += J[0, u] * r0 + J[1, u] * r1 + J[2, u] * r2
            for w in range(u, 6):
                H[u, w] += J[0, u] * J[0, w] + J[1, u] * J[1, w] + J[2, u] * J[2, w]
        sse += r0 * r0 + r1 * r1 + r2 * r2
    for u in range(6):
        for w in range(u):
            H[u, w] = H[w, u]
    return H, g, sse


@njit(cache=True)
def fill_voxels(slot_ids, points, slot_points, slot_counts, cap):
    inserted = 0
    for i in range(slot_ids.shape[0]):
        s = slot_ids[i]
        c = slot_counts[s]
        if c < cap:
            slot_points[s, c, 0] = points[i, 0]
            slot_points[s, c, 1] = points[i, 1]
            slot_points[s, c, 2] = points[i, 2]
            slot_counts[s] = c + 1
            inserted += 1
    return inserted


@njit(parallel=True, cache=True)
def raycast(origins, dirs, room_lo, room_hi, box_lo, box_hi, planes):
    n = origins.shape[0]
    out = np.empty(n)
    eps = 1e-9
    for i in prange(n):
        best = np.inf
        for a in range(3):
            d = dirs[i, a]
            if d > 0.0:
                t = (room_hi[a] - origins[i, a]) / d
            elif d < 0.0:
                t = (room_lo[a] - origins[i, a]) / d
            else:
                continue
            if t < best:
                best = t
        for b in range(box_lo.shape[0]):
            tmin = -np.inf
            tmax = np.inf
            miss = False
            for a in range(3):
                d = dirs[i, a]
                o = origins[i, a]
                if d == 0.0:
                    if o < box_lo[b, a] or o > box_hi[b, a]:
                        miss = True
                        break
                    continue
                t1 = (box_lo[b, a] - o) / d
                t2 = (box_hi[b, a] - o) / d
                if t1 > t2:
                    t1, t2 = t2, t1
                if t1 > tmin:
                    tmin = t1
                if t2 < tmax:
                    tmax = t2
            if not miss and tmax >= tmin and tmin > eps and tmin < best:
                best = tmin
        for p in range(planes.shape[0]):
            den = (dirs[i, 0] * planes[p, 0] + dirs[i, 1] * planes[p, 1]
                   + dirs[i, 2] * planes[p, 2])
            if abs(den) <= 1e-12:
                continue
            num = planes[p, 3] - (origins[i, 0] * planes[p, 0]
                                  + origins[i, 1] * planes[p, 1]
                                  + origins[i, 2] * planes[p, 2])
            t = num / den
            if t > eps and t < best:
                best = t
        out[i] = best
    return out
