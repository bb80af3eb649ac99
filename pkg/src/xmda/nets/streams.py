"""The two modality backbones.

Stream2D: encoder-decoder over the image with max-pool downsampling,
nearest-neighbor upsampling and additive skip connections; the output
keeps full resolution and ``base`` channels.

Stream3D: per-point encoder, mean pooling into base voxels, a sparse
encoder-decoder over the voxel hash (widths doubling per level), then a
copy back to points with a point-wise skip. Each stream sees only its
own modality.
"""

import dataclasses

import numpy as np

from .. import kernels
from .layers import Conv3x3, Linear, MaxPool2, ReLU, Upsample2
from .sparse import SparseConvBlock, VoxelPool, VoxelUnpool


@dataclasses.dataclass
class Net2DConfig:
    base: int = 16           # channel width at full resolution
    depth: int = 3           # number of 2x downsamplings
    lift: str = "nearest"    # feature sampling at projected pixels

    def to_json(self):
        return dataclasses.asdict(self)


@dataclasses.dataclass
class Net3DConfig:
    base: int = 16           # channel width at the finest voxel level
    levels: int = 3          # voxel pyramid levels
    resolution: float = 0.05  # base voxel size, meters

    def to_json(self):
        d = dataclasses.asdict(self)
        d["resolution"] = float(self.resolution)
        return d


class ConvBlock:
    def __init__(self, store, name, cin, cout):
        self.conv = Conv3x3(store, name, cin, cout)
        self.relu = ReLU()

    def forward(self, x):
        return self.relu.forward(self.conv.forward(x))

    def backward(self, gy):
        return self.conv.backward(self.relu.backward(gy))


class Stream2D:
    def __init__(self, store, prefix, cfg, in_ch=3):
        self.cfg = cfg
        widths = [cfg.base * (1 << l) for l in range(cfg.depth + 1)]
        self.stem = ConvBlock(store, f"{prefix}.stem", in_ch, widths[0])
        self.enc = []
        for l in range(1, cfg.depth + 1):
            self.enc.append((MaxPool2(),
                             ConvBlock(store, f"{prefix}.enc{l}",
                                       widths[l - 1], widths[l])))
        self.dec = []
        for l in range(cfg.depth, 0, -1):
            self.dec.append((Upsample2(),
                             ConvBlock(store, f"{prefix}.dec{l}",
                                       widths[l], widths[l - 1])))
        self.out_dim = widths[0]
        self._e = None

    def forward(self, images):
        h, w = images.shape[1], images.shape[2]
        if h % (1 << self.cfg.depth) or w % (1 << self.cfg.depth):
            raise ValueError(
                f"image size {h}x{w} not divisible by 2^{self.cfg.depth}")
        e = [self.stem.forward(images)]
        for pool, block in self.enc:
            e.append(block.forward(pool.forward(e[-1])))
        d = e[-1]
        for i, (up, block) in enumerate(self.dec):
            skip = e[self.cfg.depth - 1 - i]
            d = block.forward(up.forward(d)) + skip
        self._e = e
        return d

    def backward(self, gd):
        depth = self.cfg.depth
        g_e = [None] * (depth + 1)
        for i in range(depth):                   # undo decoder, last first
            up, block = self.dec[depth - 1 - i]
            lvl = i                              # skip level of that block
            g_e[lvl] = gd if g_e[lvl] is None else g_e[lvl] + gd
            gd = up.backward(block.backward(gd))
        g_e[depth] = gd if g_e[depth] is None else g_e[depth] + gd
        for l in range(depth, 0, -1):
            pool, block = self.enc[l - 1]
            g = pool.backward(block.backward(g_e[l]))
            g_e[l - 1] = g if g_e[l - 1] is None else g_e[l - 1] + g
        return self.stem.backward(g_e[0])


class Stream3D:
    def __init__(self, store, prefix, cfg, in_dim=4):
        self.cfg = cfg
        widths = [cfg.base * (1 << l) for l in range(cfg.levels)]
        self.pmlp = Linear(store, f"{prefix}.point", in_dim, widths[0])
        self.prelu = ReLU()
        self.ppool = VoxelPool()
        self.enc = [SparseConvBlock(store, f"{prefix}.enc0",
                                    widths[0], widths[0])]
        self.pools = []
        for l in range(1, cfg.levels):
            self.pools.append(VoxelPool())
            self.enc.append(SparseConvBlock(store, f"{prefix}.enc{l}",
                                            widths[l - 1], widths[l]))
        self.dec = []
        self.unpools = []
        for l in range(cfg.levels - 2, -1, -1):
            self.unpools.append(VoxelUnpool())
            self.dec.append(SparseConvBlock(store, f"{prefix}.dec{l}",
                                            widths[l + 1], widths[l]))
        self.punpool = VoxelUnpool()
        self.out_dim = widths[0]
        self._e = None

    def forward(self, struct):
        x = self.prelu.forward(self.pmlp.forward(struct.pfeat))
        v = self.ppool.forward(x, struct.point2vox,
                               struct.levels[0].num_voxels)
        e = [self.enc[0].forward(v, struct.levels[0].nbr)]
        for l in range(1, self.cfg.levels):
            pooled = self.pools[l - 1].forward(
                e[-1], struct.pools[l - 1], struct.levels[l].num_voxels)
            e.append(self.enc[l].forward(pooled, struct.levels[l].nbr))
        d = e[-1]
        for i, block in enumerate(self.dec):
            lvl = self.cfg.levels - 2 - i
            up = self.unpools[i].forward(d, struct.pools[lvl],
                                         struct.levels[lvl + 1].num_voxels)
            d = block.forward(up, struct.levels[lvl].nbr) + e[lvl]
        out = self.punpool.forward(d, struct.point2vox,
                                   struct.levels[0].num_voxels) + x
        self._e = e
        return out

    def backward(self, gout):
        levels = self.cfg.levels
        gx = gout                                  # point-skip branch
        gd = self.punpool.backward(gout)
        g_e = [None] * levels
        for i in range(len(self.dec) - 1, -1, -1):
            lvl = levels - 2 - i
            g_e[lvl] = gd if g_e[lvl] is None else g_e[lvl] + gd
            gd = self.unpools[i].backward(self.dec[i].backward(gd))
        g_e[levels - 1] = gd if g_e[levels - 1] is None else g_e[levels - 1] + gd
        for l in range(levels - 1, 0, -1):
            g = self.pools[l - 1].backward(self.enc[l].backward(g_e[l]))
            g_e[l - 1] = g if g_e[l - 1] is None else g_e[l - 1] + g
        gv = self.enc[0].backward(g_e[0])
        gx = gx + self.ppool.backward(gv)
        self.pmlp.backward(self.prelu.backward(gx))
