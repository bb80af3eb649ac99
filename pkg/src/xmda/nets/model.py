"""Dual-stream and fusion models over batches of samples.

A batch pack concatenates the per-sample point arrays (3D side) and
stacks images (2D side); per-sample voxel structures are merged with
offset indices so one kernel call serves the whole batch. Projected
pixel indices are precomputed per sample and cached.
"""

import dataclasses

import numpy as np

from .. import geometry, kernels
from ..errors import ShapeMismatch
from .heads import PredictionSet, ensemble  # noqa: F401  (re-export)
from .layers import Linear, ReLU, SoftmaxHead
from .params import ParamStore
from .sparse import build_point_struct, concat_structs
from .streams import Net2DConfig, Net3DConfig, Stream2D, Stream3D


@dataclasses.dataclass
class BatchPack:
    images: np.ndarray        # (B, H, W, 3)
    bi: np.ndarray            # (sumN,) batch index per point
    vi: np.ndarray            # (sumN,) pixel row per point
    ui: np.ndarray            # (sumN,) pixel col per point
    frac_u: np.ndarray        # bilinear fractions, None for nearest
    frac_v: np.ndarray
    struct: object            # merged PointStruct
    sample_ptr: np.ndarray    # (B+1,) point offsets per sample
    labels: np.ndarray        # (sumN,) int32 or None

    @property
    def num_points(self):
        return int(self.sample_ptr[-1])

    @property
    def batch_size(self):
        return len(self.sample_ptr) - 1


def build_pack(samples, net3d_cfg, dtype, labels=None, lift="nearest",
               struct_cache=None, cache_keys=None):
    images = np.stack([s.image for s in samples]).astype(dtype)
    h, w = images.shape[1], images.shape[2]
    bi, vi, ui, fu, fv, structs, ptr = [], [], [], [], [], [], [0]
    for b, s in enumerate(samples):
        if lift == "bilinear":
            u = np.clip(s.pixel_uv[:, 0], 0.0, w - 1.0)
            v = np.clip(s.pixel_uv[:, 1], 0.0, h - 1.0)
            u0 = np.floor(u).astype(np.int32)
            v0 = np.floor(v).astype(np.int32)
            ui.append(u0)
            vi.append(v0)
            fu.append((u - u0).astype(dtype))
            fv.append((v - v0).astype(dtype))
        else:
            u0, v0 = geometry.pixel_indices(s.pixel_uv, (h, w))
            ui.append(u0)
            vi.append(v0)
        bi.append(np.full(s.num_points, b, dtype=np.int32))
        key = None if cache_keys is None else cache_keys[b]
        if struct_cache is not None and key in struct_cache:
            st = struct_cache[key]
        else:
            st = build_point_struct(s.cloud.coords, net3d_cfg.resolution,
                                    net3d_cfg.levels)
            if struct_cache is not None and key is not None:
                struct_cache[key] = st
        structs.append(st)
        ptr.append(ptr[-1] + s.num_points)
    struct = concat_structs(structs)
    struct.pfeat = struct.pfeat.astype(dtype)
    return BatchPack(
        images=images,
        bi=np.concatenate(bi),
        vi=np.concatenate(vi),
        ui=np.concatenate(ui),
        frac_u=np.concatenate(fu) if fu else None,
        frac_v=np.concatenate(fv) if fv else None,
        struct=struct,
        sample_ptr=np.array(ptr, dtype=np.int64),
        labels=(None if labels is None
                else np.concatenate(labels).astype(np.int32)),
    )


class _Lift:
    """Gather per-point rows from the 2D feature map (and scatter back)."""

    def __init__(self, mode):
        self.mode = mode
        self._pack = None
        self._shape = None

    def forward(self, fmap, pack):
        self._pack, self._shape = pack, fmap.shape
        if self.mode == "nearest":
            return kernels.gather_pixels(fmap, pack.bi, pack.vi, pack.ui)
        h, w = fmap.shape[1], fmap.shape[2]
        u1 = np.minimum(pack.ui + 1, w - 1)
        v1 = np.minimum(pack.vi + 1, h - 1)
        fu = pack.frac_u[:, None]
        fv = pack.frac_v[:, None]
        return (kernels.gather_pixels(fmap, pack.bi, pack.vi, pack.ui)
                * (1 - fu) * (1 - fv)
                + kernels.gather_pixels(fmap, pack.bi, pack.vi, u1)
                * fu * (1 - fv)
                + kernels.gather_pixels(fmap, pack.bi, v1, pack.ui)
                * (1 - fu) * fv
                + kernels.gather_pixels(fmap, pack.bi, v1, u1) * fu * fv)

    def backward(self, g):
        pack, shape = self._pack, self._shape
        if self.mode == "nearest":
            return kernels.scatter_pixels_add(shape, pack.bi, pack.vi,
                                              pack.ui, g)
        h, w = shape[1], shape[2]
        u1 = np.minimum(pack.ui + 1, w - 1)
        v1 = np.minimum(pack.vi + 1, h - 1)
        fu = pack.frac_u[:, None]
        fv = pack.frac_v[:, None]
        out = kernels.scatter_pixels_add(shape, pack.bi, pack.vi, pack.ui,
                                         g * (1 - fu) * (1 - fv))
        out += kernels.scatter_pixels_add(shape, pack.bi, pack.vi, u1,
                                          g * fu * (1 - fv))
        out += kernels.scatter_pixels_add(shape, pack.bi, v1, pack.ui,
                                          g * (1 - fu) * fv)
        out += kernels.scatter_pixels_add(shape, pack.bi, v1, u1,
                                          g * fu * fv)
        return out


class DualStreamModel:
    """Two independent modality streams, each with main + mimicry heads.

    With ``dual_head=False`` the mimicry heads are dropped and the main
    heads serve both roles (the naive single-head wiring, kept for the
    ablation): the mimicry entries of the prediction set then alias the
    main maps and mimicry gradients flow into the main heads.
    """

    def __init__(self, num_classes, net2d=None, net3d=None,
                 dtype=np.float32, init_seed=0, dual_head=True):
        self.num_classes = num_classes
        self.net2d = net2d or Net2DConfig()
        self.net3d = net3d or Net3DConfig()
        self.dtype = np.dtype(dtype)
        self.init_seed = init_seed
        self.dual_head = dual_head

        self.store2d = ParamStore(self.dtype)
        self.stream2d = Stream2D(self.store2d, "s2d", self.net2d)
        self.head_2d = SoftmaxHead(self.store2d, "s2d.head_main",
                                   self.stream2d.out_dim, num_classes)
        self.head_2d_mimic = (SoftmaxHead(self.store2d, "s2d.head_mimic",
                                          self.stream2d.out_dim, num_classes)
                              if dual_head else None)

        self.store3d = ParamStore(self.dtype)
        self.stream3d = Stream3D(self.store3d, "s3d", self.net3d)
        self.head_3d = SoftmaxHead(self.store3d, "s3d.head_main",
                                   self.stream3d.out_dim, num_classes)
        self.head_3d_mimic = (SoftmaxHead(self.store3d, "s3d.head_mimic",
                                          self.stream3d.out_dim, num_classes)
                              if dual_head else None)

        rng = np.random.default_rng(np.random.SeedSequence([init_seed, 101]))
        self.store2d.finalize(rng)
        self.store3d.finalize(rng)
        self.lift = _Lift(self.net2d.lift)

    # -- batched API -----------------------------------------------------

    def forward_batch(self, pack):
        fmap = self.stream2d.forward(pack.images)
        f2 = self.lift.forward(fmap, pack)
        if f2.shape[0] != pack.struct.pfeat.shape[0]:
            raise ShapeMismatch("lifted 2D rows != 3D point count")
        f3 = self.stream3d.forward(pack.struct)
        p_2d = self.head_2d.forward(f2)
        p_3d = self.head_3d.forward(f3)
        return PredictionSet(
            p_2d=p_2d,
            p_3d=p_3d,
            p_2d_to_3d=(self.head_2d_mimic.forward(f2) if self.dual_head
                        else p_2d),
            p_3d_to_2d=(self.head_3d_mimic.forward(f3) if self.dual_head
                        else p_3d),
        )

    def backward_batch(self, g_2d=None, g_3d=None, g_2d_to_3d=None,
                       g_3d_to_2d=None):
        if not self.dual_head:
            if g_2d_to_3d is not None:
                g_2d = g_2d_to_3d if g_2d is None else g_2d + g_2d_to_3d
                g_2d_to_3d = None
            if g_3d_to_2d is not None:
                g_3d = g_3d_to_2d if g_3d is None else g_3d + g_3d_to_2d
                g_3d_to_2d = None
        gf2 = gf3 = None
        if g_2d is not None:
            gf2 = self.head_2d.backward(g_2d)
        if g_2d_to_3d is not None:
            g = self.head_2d_mimic.backward(g_2d_to_3d)
            gf2 = g if gf2 is None else gf2 + g
        if gf2 is not None:
            self.stream2d.backward(self.lift.backward(gf2))
        if g_3d is not None:
            gf3 = self.head_3d.backward(g_3d)
        if g_3d_to_2d is not None:
            g = self.head_3d_mimic.backward(g_3d_to_2d)
            gf3 = g if gf3 is None else gf3 + g
        if gf3 is not None:
            self.stream3d.backward(gf3)

    def zero_grad(self):
        self.store2d.zero_grad()
        self.store3d.zero_grad()

    # -- single-sample API ------------------------------------------------

    def forward_dual(self, sample):
        """Run both streams on one frame; four (N, C) probability maps."""
        if sample.num_points < 1:
            raise ShapeMismatch("sample has no points")
        pack = build_pack([sample], self.net3d, self.dtype,
                          lift=self.net2d.lift)
        return self.forward_batch(pack)

    def stores(self):
        return {"2d": self.store2d, "3d": self.store3d}

    def arch_json(self):
        return {
            "type": "dual",
            "num_classes": self.num_classes,
            "dtype": self.dtype.name,
            "init_seed": self.init_seed,
            "dual_head": self.dual_head,
            "net2d": self.net2d.to_json(),
            "net3d": self.net3d.to_json(),
        }


@dataclasses.dataclass
class FusionPredictions:
    p_fuse: np.ndarray
    p_2d_to_fuse: np.ndarray = None
    p_3d_to_fuse: np.ndarray = None


class FusionModel:
    """Late fusion of the two streams into one joint prediction.

    ``vanilla`` concatenates features into a mixing layer and a single
    fused head. ``xmuda_fusion`` adds one uni-modal head per stream
    whose job is to mimic the fused output.
    """

    def __init__(self, num_classes, mode="vanilla", net2d=None, net3d=None,
                 hidden=32, dtype=np.float32, init_seed=0):
        if mode not in ("vanilla", "xmuda_fusion"):
            raise ValueError(f"unknown fusion mode {mode!r}")
        self.num_classes = num_classes
        self.mode = mode
        self.hidden = hidden
        self.net2d = net2d or Net2DConfig()
        self.net3d = net3d or Net3DConfig()
        self.dtype = np.dtype(dtype)
        self.init_seed = init_seed

        self.store = ParamStore(self.dtype)
        self.stream2d = Stream2D(self.store, "s2d", self.net2d)
        self.stream3d = Stream3D(self.store, "s3d", self.net3d)
        fin = self.stream2d.out_dim + self.stream3d.out_dim
        self.mix = Linear(self.store, "fuse.mix", fin, hidden)
        self.mix_relu = ReLU()
        self.head_fuse = SoftmaxHead(self.store, "fuse.head", hidden,
                                     num_classes)
        if mode == "xmuda_fusion":
            self.head_2d_fuse = SoftmaxHead(self.store, "s2d.head_fuse",
                                            self.stream2d.out_dim,
                                            num_classes)
            self.head_3d_fuse = SoftmaxHead(self.store, "s3d.head_fuse",
                                            self.stream3d.out_dim,
                                            num_classes)
        self.store.finalize(
            np.random.default_rng(np.random.SeedSequence([init_seed, 202])))
        self.lift = _Lift(self.net2d.lift)
        self._f2 = None
        self._f3 = None

    def forward_batch(self, pack):
        fmap = self.stream2d.forward(pack.images)
        f2 = self.lift.forward(fmap, pack)
        f3 = self.stream3d.forward(pack.struct)
        if f2.shape[0] != f3.shape[0]:
            raise ShapeMismatch("lifted 2D rows != 3D point count")
        self._f2, self._f3 = f2, f3
        mixed = self.mix_relu.forward(
            self.mix.forward(np.concatenate([f2, f3], axis=1)))
        p_fuse = self.head_fuse.forward(mixed)
        if self.mode == "vanilla":
            return FusionPredictions(p_fuse=p_fuse)
        return FusionPredictions(
            p_fuse=p_fuse,
            p_2d_to_fuse=self.head_2d_fuse.forward(f2),
            p_3d_to_fuse=self.head_3d_fuse.forward(f3),
        )

    def backward_batch(self, g_fuse=None, g_2d_to_fuse=None,
                       g_3d_to_fuse=None):
        n2 = self.stream2d.out_dim
        gf2 = gf3 = None
        if g_fuse is not None:
            g = self.mix.backward(
                self.mix_relu.backward(self.head_fuse.backward(g_fuse)))
            gf2, gf3 = g[:, :n2], g[:, n2:]
        if g_2d_to_fuse is not None:
            g = self.head_2d_fuse.backward(g_2d_to_fuse)
            gf2 = g if gf2 is None else gf2 + g
        if g_3d_to_fuse is not None:
            g = self.head_3d_fuse.backward(g_3d_to_fuse)
            gf3 = g if gf3 is None else gf3 + g
        if gf2 is not None:
            self.stream2d.backward(self.lift.backward(gf2))
        if gf3 is not None:
            self.stream3d.backward(gf3)

    def zero_grad(self):
        self.store.zero_grad()

    def forward_fusion(self, sample):
        pack = build_pack([sample], self.net3d, self.dtype,
                          lift=self.net2d.lift)
        return self.forward_batch(pack)

    def stores(self):
        return {"fusion": self.store}

    def arch_json(self):
        return {
            "type": "fusion",
            "mode": self.mode,
            "hidden": self.hidden,
            "num_classes": self.num_classes,
            "dtype": self.dtype.name,
            "init_seed": self.init_seed,
            "net2d": self.net2d.to_json(),
            "net3d": self.net3d.to_json(),
        }


def model_from_arch(arch):
    net2d = Net2DConfig(**arch["net2d"])
    net3d = Net3DConfig(**arch["net3d"])
    if arch["type"] == "dual":
        return DualStreamModel(arch["num_classes"], net2d=net2d, net3d=net3d,
                               dtype=arch["dtype"],
                               init_seed=arch.get("init_seed", 0),
                               dual_head=arch.get("dual_head", True))
    return FusionModel(arch["num_classes"], mode=arch["mode"], net2d=net2d,
                       net3d=net3d, hidden=arch["hidden"],
                       dtype=arch["dtype"],
                       init_seed=arch.get("init_seed", 0))
