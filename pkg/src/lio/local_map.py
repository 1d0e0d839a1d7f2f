"""Timed point clouds, voxel downsampling and the capped voxel-hash local map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

_OFFSET = 1 << 20
_MASK = (1 << 21) - 1


@dataclass
class TimedPointCloud:
    """Points (N, 3) in meters with per-point stamps (N,) in seconds."""

    points: np.ndarray
    stamps: np.ndarray
    frame: str = "sensor"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.stamps = np.asarray(self.stamps, dtype=float).reshape(-1)
        if self.points.shape[0] != self.stamps.shape[0]:
            raise ValueError("points and stamps differ in length")

    def __len__(self):
        return self.points.shape[0]

    def subset(self, idx) -> "TimedPointCloud":
        return TimedPointCloud(self.points[idx], self.stamps[idx], self.frame)

    @classmethod
    def empty(cls, frame="sensor"):
        return cls(np.zeros((0, 3)), np.zeros(0), frame)


def voxel_coords(points: np.ndarray, cell: float) -> np.ndarray:
    return np.floor(points / cell).astype(np.int64)


def pack_keys(coords: np.ndarray) -> np.ndarray:
    c = coords + _OFFSET
    return (c[..., 0] << 42) | (c[..., 1] << 21) | c[..., 2]


def unpack_keys(keys: np.ndarray) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    return np.stack([(keys >> 42) & _MASK, (keys >> 21) & _MASK, keys & _MASK], axis=-1) - _OFFSET


def voxel_downsample(cloud: TimedPointCloud, cell: float) -> TimedPointCloud:
    """Keep the first point seen in each cell, preserving input order and stamps."""
    if cell <= 0:
        raise ValueError("cell size must be positive")
    if len(cloud) == 0:
        return cloud.subset(slice(None))
    keys = pack_keys(voxel_coords(cloud.points, cell))
    _, first = np.unique(keys, return_index=True)
    return cloud.subset(np.sort(first))


class VoxelMap:
    """Sparse voxel grid, each voxel holding at most ``max_points_per_voxel`` points.

    Storage is a dense ``(slots, cap, 3)`` array plus a key -> slot dict;
    a sorted copy of the keys serves vectorised neighbour lookups.
    """

    def __init__(self, voxel_size: float = 1.0, max_points_per_voxel: int = 20):
        if voxel_size <= 0 or max_points_per_voxel < 1:
            raise ValueError("voxel_size must be > 0 and capacity >= 1")
        self.voxel_size = float(voxel_size)
        self.max_points_per_voxel = int(max_points_per_voxel)
        self._slot_points = np.zeros((64, self.max_points_per_voxel, 3))
        self._counts = np.zeros(64, dtype=np.int64)
        self._keys = np.zeros(64, dtype=np.int64)
        self._n = 0
        self._index: dict[int, int] = {}
        self._sorted_keys = np.zeros(0, dtype=np.int64)
        self._sorted_slots = np.zeros(0, dtype=np.int64)

    def __len__(self):
        return int(self._counts[: self._n].sum())

    @property
    def num_voxels(self) -> int:
        return self._n

    def empty(self) -> bool:
        return self._n == 0

    def points(self) -> np.ndarray:
        cap = self.max_points_per_voxel
        mask = np.arange(cap)[None, :] < self._counts[: self._n, None]
        return self._slot_points[: self._n][mask]

    def voxels(self) -> dict[tuple, np.ndarray]:
        """Mapping from integer voxel coordinates to the stored points."""
        out = {}
        coords = unpack_keys(self._keys[: self._n])
        for s in range(self._n):
            out[tuple(int(c) for c in coords[s])] = self._slot_points[s, : self._counts[s]].copy()
        return out

    def _grow(self, need: int):
        size = self._slot_points.shape[0]
        if need <= size:
            return
        while size < need:
            size *= 2
        pts = np.zeros((size, self.max_points_per_voxel, 3))
        pts[: self._n] = self._slot_points[: self._n]
        counts = np.zeros(size, dtype=np.int64)
        counts[: self._n] = self._counts[: self._n]
        keys = np.zeros(size, dtype=np.int64)
        keys[: self._n] = self._keys[: self._n]
        self._slot_points, self._counts, self._keys = pts, counts, keys

    def _reindex(self):
        keys = self._keys[: self._n]
        order = np.argsort(keys)
        self._sorted_keys = keys[order]
        self._sorted_slots = order.astype(np.int64)

    def insert(self, points: np.ndarray) -> int:
        """Add points (odometry frame); points landing in full voxels are skipped.

        Returns the number of points actually stored.
        """
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        if points.shape[0] == 0:
            return 0
        if not np.all(np.isfinite(points)):
            raise ValueError("cannot insert non-finite points")
        keys = pack_keys(voxel_coords(points, self.voxel_size))
        ukeys, inverse = np.unique(keys, return_inverse=True)
        self._grow(self._n + ukeys.shape[0])
        uslots = np.empty(ukeys.shape[0], dtype=np.int64)
        for i, k in enumerate(ukeys.tolist()):
            s = self._index.get(k)
            if s is None:
                s = self._n
                self._index[k] = s
                self._keys[s] = k
                self._n += 1
            uslots[i] = s
        slot_ids = uslots[inverse.reshape(-1)]
        inserted = kernels.fill_voxels(slot_ids, points, self._slot_points, self._counts,
                                       self.max_points_per_voxel)
        self._reindex()
        return int(inserted)

    def nearest_neighbors(self, queries: np.ndarray, max_dist: float):
        """Batched search. Returns ``(nearest (M,3), dist (M,), found (M,))``."""
        if max_dist <= 0:
            raise ValueError("max_dist must be positive")
        if max_dist > self.voxel_size:
            raise ValueError(
                f"max_dist {max_dist} exceeds voxel size {self.voxel_size}; "
                "the 27-voxel neighbourhood would miss candidates")
        queries = np.ascontiguousarray(np.asarray(queries, dtype=float).reshape(-1, 3))
        return kernels.nn_search(queries, self._sorted_keys, self._sorted_slots,
                                 self._slot_points, self._counts, self.voxel_size, float(max_dist))

    def nearest_neighbor(self, query, max_dist: float):
        """Nearest stored point within ``max_dist`` as ``(point, distance)``, else None."""
        nearest, dist, found = self.nearest_neighbors(np.asarray(query, dtype=float)[None], max_dist)
        if not found[0]:
            return None
        return nearest[0], float(dist[0])

    def crop(self, center, max_range: float) -> None:
        """Drop every voxel whose centre lies farther than ``max_range`` from ``center``."""
        if max_range <= 0:
            raise ValueError("max_range must be positive")
        if self._n == 0:
            return
        centers = (unpack_keys(self._keys[: self._n]) + 0.5) * self.voxel_size
        keep = np.linalg.norm(centers - np.asarray(center, dtype=float), axis=1) <= max_range
        if keep.all():
            return
        idx = np.flatnonzero(keep)
        n = idx.shape[0]
        self._slot_points[:n] = self._slot_points[idx]
        self._counts[:n] = self._counts[idx]
        self._keys[:n] = self._keys[idx]
        self._counts[n: self._n] = 0
        self._n = n
        self._index = {int(k): i for i, k in enumerate(self._keys[:n].tolist())}
        self._reindex()

    def write_ply(self, path) -> None:
        pts = self.points().astype(np.float32)
        with open(path, "w") as f:
            f.write("ply\nformat ascii 1.0\n")
            f.write(f"element vertex {pts.shape[0]}\n")
            f.write("property float x\nproperty float y\nproperty float z\nend_header\n")
            for x, y, z in pts:
                f.write(f"{x:.7g} {y:.7g} {z:.7g}\n")
