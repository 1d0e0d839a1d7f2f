"""Vectorised numpy versions of the hot loops."""

import numpy as np


_OFFSET = 1 << 20
_NEIGHBORS = np.array([(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)],
                      dtype=np.int64)


def _candidate_slots(queries, sorted_keys, sorted_slots, voxel_size):
    """Slot of each of the 27 neighbour voxels per query, -1 where empty."""
    base = np.floor(queries / voxel_size).astype(np.int64)
    c = base[:, None, :] + _NEIGHBORS[None, :, :] + _OFFSET
    keys = (c[..., 0] << 42) | (c[..., 1] << 21) | c[..., 2]
    if sorted_keys.shape[0] == 0:
        return np.full(keys.shape, -1, dtype=np.int64)
    pos = np.minimum(np.searchsorted(sorted_keys, keys), sorted_keys.shape[0] - 1)
    return np.where(sorted_keys[pos] == keys, sorted_slots[pos], -1)


def nn_search(queries, sorted_keys, sorted_slots, slot_points, slot_counts, voxel_size, max_dist):
    m = queries.shape[0]
    cap = slot_points.shape[1]
    if m == 0:
        return np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=bool)
    cand_slots = _candidate_slots(queries, sorted_keys, sorted_slots, voxel_size)
    valid_slot = cand_slots >= 0
    safe = np.where(valid_slot, cand_slots, 0)
    cand = slot_points[safe]  # (m, 27, cap, 3)
    occupied = np.arange(cap)[None, None, :] < slot_counts[safe][:, :, None]
    occupied &= valid_slot[:, :, None]
    d2 = np.sum((cand - queries[:, None, None, :]) ** 2, axis=-1)
    d2 = np.where(occupied, d2, np.inf).reshape(m, -1)
    best = np.argmin(d2, axis=1)
    best_d2 = d2[np.arange(m), best]
    found = best_d2 <= max_dist * max_dist
    nearest = cand.reshape(m, -1, 3)[np.arange(m), best]
    dist = np.sqrt(best_d2)
    nearest[~found] = 0.0
    dist[~found] = np.inf
    return nearest, dist, found


def icp_normal_equations(src, residuals, R):
    """Sum of J^T J and J^T r for point-to-point pairs, J = [I | -R [q]x]."""
    n = src.shape[0]
    H = np.zeros((6, 6))
    g = np.zeros(6)
    if n == 0:
        return H, g, 0.0
    sq = src.sum(axis=0)
    H[:3, :3] = n * np.eye(3)
    sk = np.array([[0.0, -sq[2], sq[1]], [sq[2], 0.0, -sq[0]], [-sq[1], sq[0], 0.0]])
    H[:3, 3:] = -R @ sk
    H[3:, :3] = H[:3, 3:].T
    H[3:, 3:] = np.sum(src * src) * np.eye(3) - src.T @ src
    g[:3] = residuals.sum(axis=0)
    g[3:] = np.cross(src, residuals @ R).sum(axis=0)
    return H, g, float(np.sum(residuals * residuals))


def fill_voxels(slot_ids, points, slot_points, slot_counts, cap):
    n = slot_ids.shape[0]
    if n == 0:
        return 0
    order = np.argsort(slot_ids, kind="stable")
    sids = slot_ids[order]
    starts = np.r_[0, np.flatnonzero(np.diff(sids)) + 1]
    group_start = np.repeat(starts, np.diff(np.r_[starts, n]))
    rank = np.arange(n) - group_start + slot_counts[sids]
    keep = rank < cap
    slot_points[sids[keep], rank[keep]] = points[order[keep]]
    np.add.at(slot_counts, sids[keep], 1)
    return int(keep.sum())


def raycast(origins, dirs, room_lo, room_hi, box_lo, box_hi, planes):
    eps = 1e-9
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        # exit distance from the enclosing room (origins are inside)
        far = np.where(dirs > 0, (room_hi - origins) * inv,
                       np.where(dirs < 0, (room_lo - origins) * inv, np.inf))
        best = far.min(axis=1)
        for lo, hi in zip(box_lo, box_hi):
            t1 = (lo - origins) * inv
            t2 = (hi - origins) * inv
            tmin = np.nanmax(np.minimum(t1, t2), axis=1)
            tmax = np.nanmin(np.maximum(t1, t2), axis=1)
            hit = (tmax >= tmin) & (tmin > eps)
            best = np.where(hit & (tmin < best), tmin, best)
        for n0, n1, n2, d in planes:
            den = dirs[:, 0] * n0 + dirs[:, 1] * n1 + dirs[:, 2] * n2
            num = d - (origins[:, 0] * n0 + origins[:, 1] * n1 + origins[:, 2] * n2)
            t = num / den
            hit = (np.abs(den) > 1e-12) & (t > eps)
            best = np.where(hit & (t < best), t, best)
    return best
