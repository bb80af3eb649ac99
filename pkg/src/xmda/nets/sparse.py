"""Sparse voxel machinery for the 3D stream.

A point cloud is hashed to integer voxels at the base resolution; each
coarser level floor-divides the integer coordinates by two. Convolution
is a gather over the 27-voxel neighborhood of active voxels only.
Offsets are ordered so offset[k] == -offset[26-k], which makes the
convolution adjoint one more gather (see kernels.sparse_conv_bwd_input).

Points average-pool into their voxel on the way in and copy their
voxel's feature on the way out; multiple points per voxel therefore
share one feature row, matching one-point-per-voxel behavior at fine
resolutions.
"""

import dataclasses

import numpy as np

from .. import kernels
from .layers import ReLU

OFFSETS = np.array([(dx, dy, dz)
                    for dx in (-1, 0, 1)
                    for dy in (-1, 0, 1)
                    for dz in (-1, 0, 1)], dtype=np.int64)

_PACK_BASE = np.int64(1) << 21
_PACK_OFF = np.int64(1) << 20


def _pack(keys):
    return ((keys[:, 0] + _PACK_OFF) * _PACK_BASE
            + (keys[:, 1] + _PACK_OFF)) * _PACK_BASE + (keys[:, 2] + _PACK_OFF)


def _neighbor_table(keys):
    packed = _pack(keys)
    order = np.argsort(packed, kind="stable")
    sorted_packed = packed[order]
    nv = keys.shape[0]
    nbr = np.empty((nv, 27), dtype=np.int32)
    for k, off in enumerate(OFFSETS):
        cand = _pack(keys + off)
        pos = np.searchsorted(sorted_packed, cand)
        pos = np.clip(pos, 0, nv - 1)
        found = sorted_packed[pos] == cand
        nbr[:, k] = np.where(found, order[pos].astype(np.int32), -1)
    return nbr


@dataclasses.dataclass
class LevelStruct:
    nbr: np.ndarray          # (V, 27) int32, -1 where neighbor inactive
    num_voxels: int


@dataclasses.dataclass
class PointStruct:
    """Per-sample voxelization at every level plus point features."""

    point2vox: np.ndarray    # (N,) int32 into level-0 voxels
    levels: list             # [LevelStruct] fine -> coarse
    pools: list              # child->parent index arrays between levels
    pfeat: np.ndarray        # (N, 4) float: z plus in-voxel offsets


def build_point_struct(coords, resolution, num_levels):
    keys = np.floor(coords / resolution).astype(np.int64)
    packed = _pack(keys)
    uniq, inverse = np.unique(packed, return_inverse=True)
    # recover integer keys of the unique voxels, sorted by packed value
    first = np.zeros(len(uniq), dtype=np.int64)
    first[inverse[::-1]] = np.arange(len(packed) - 1, -1, -1)
    vox_keys = keys[first]

    point2vox = inverse.astype(np.int32)
    levels = [LevelStruct(nbr=_neighbor_table(vox_keys),
                          num_voxels=len(vox_keys))]
    pools = []
    cur = vox_keys
    for _ in range(1, num_levels):
        parent_keys = np.floor_divide(cur, 2)
        ppacked = _pack(parent_keys)
        puniq, pinv = np.unique(ppacked, return_inverse=True)
        pfirst = np.zeros(len(puniq), dtype=np.int64)
        pfirst[pinv[::-1]] = np.arange(len(ppacked) - 1, -1, -1)
        pools.append(pinv.astype(np.int32))
        cur = parent_keys[pfirst]
        levels.append(LevelStruct(nbr=_neighbor_table(cur),
                                  num_voxels=len(cur)))

    centers = (vox_keys[point2vox] + 0.5) * resolution
    offsets = (coords - centers) / resolution
    pfeat = np.concatenate([coords[:, 2:3], offsets], axis=1)
    return PointStruct(point2vox=point2vox, levels=levels, pools=pools,
                       pfeat=pfeat)


def concat_structs(structs):
    """Merge per-sample structures into one batch with offset indices."""
    num_levels = len(structs[0].levels)
    p2v, pfeat = [], []
    nbr = [[] for _ in range(num_levels)]
    pools = [[] for _ in range(num_levels - 1)]
    voff = [0] * num_levels
    for st in structs:
        p2v.append(st.point2vox.astype(np.int64) + voff[0])
        pfeat.append(st.pfeat)
        for li, lv in enumerate(st.levels):
            t = lv.nbr.astype(np.int64)
            nbr[li].append(np.where(t < 0, -1, t + voff[li]))
        for pi, pool in enumerate(st.pools):
            pools[pi].append(pool.astype(np.int64) + voff[pi + 1])
        for li, lv in enumerate(st.levels):
            voff[li] += lv.num_voxels
    levels = [LevelStruct(nbr=np.concatenate(nbr[li]).astype(np.int32),
                          num_voxels=voff[li])
              for li in range(num_levels)]
    return PointStruct(
        point2vox=np.concatenate(p2v).astype(np.int32),
        levels=levels,
        pools=[np.concatenate(p).astype(np.int32) for p in pools],
        pfeat=np.concatenate(pfeat),
    )


class SparseConv:
    def __init__(self, store, name, cin, cout):
        self.store = store
        self.w = store.add(f"{name}.w", (27, cin, cout), fan_in=27 * cin)
        self.b = store.add(f"{name}.b", (cout,))
        self._x = None
        self._nbr = None

    def forward(self, x, nbr):
        self._x, self._nbr = x, nbr
        return kernels.sparse_conv_fwd(x, nbr, self.store.view(self.w),
                                       self.store.view(self.b))

    def backward(self, gy):
        gw, gb = kernels.sparse_conv_bwd_params(self._x, self._nbr, gy)
        self.store.grad_view(self.w)[...] += gw
        self.store.grad_view(self.b)[...] += gb
        return kernels.sparse_conv_bwd_input(gy, self._nbr,
                                             self.store.view(self.w))


class VoxelPool:
    """Mean-pool rows into segments; backward spreads grad / count."""

    def __init__(self):
        self._seg = None
        self._counts = None

    def forward(self, x, seg, nseg):
        y, counts = kernels.segment_mean_fwd(x, seg, nseg)
        self._seg, self._counts = seg, counts
        return y

    def backward(self, gy):
        return kernels.segment_mean_bwd(gy, self._seg, self._counts)


class VoxelUnpool:
    """Copy each parent row to its children; backward is segment sum."""

    def __init__(self):
        self._seg = None
        self._nseg = None

    def forward(self, x, seg, nseg):
        self._seg, self._nseg = seg, nseg
        return kernels.gather_rows(x, seg)

    def backward(self, gy):
        return kernels.scatter_rows_add(gy, self._seg, self._nseg)


class SparseConvBlock:
    def __init__(self, store, name, cin, cout):
        self.conv = SparseConv(store, name, cin, cout)
        self.relu = ReLU()

    def forward(self, x, nbr):
        return self.relu.forward(self.conv.forward(x, nbr))

    def backward(self, gy):
        return self.conv.backward(self.relu.backward(gy))
