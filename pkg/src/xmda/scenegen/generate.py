"""Deterministic generator of paired, calibrated 2D/3D samples.

The camera sits at the LiDAR origin so both sensors see the same first
surface along any shared direction. After projection, each image pixel
claimed by one or more points is painted with the class color of the
nearest point on it, and points whose pixel is won by a different class
are dropped. With zero noise and unit brightness this makes the palette
color at every surviving point's pixel equal that point's class color,
which is the generator's correctness oracle.
"""

import dataclasses

import numpy as np

from .. import geometry
from ..errors import EmptyFov
from ..sample import Sample
from . import world as world_mod

LIDAR_ELEVATION_DEG = (-30.0, -6.0)
LIDAR_AZIMUTH_DEG = (-45.0, 45.0)
CAMERA_HFOV_DEG = 70.0
CAMERA_PITCH_DEG = 10.0


@dataclasses.dataclass
class DomainSpec:
    """Knobs of one synthetic domain; each axis is a controllable shift."""

    seed: int = 0
    num_classes: int = 6
    class_priors: tuple = (0.30, 0.14, 0.13, 0.15, 0.14, 0.14)
    lidar_rings: int = 16
    points_per_ring: int = 36
    brightness: float = 1.0
    texture_noise_std: float = 0.02
    layout_scale: float = 1.0
    sensor_height: float = 1.8
    image_hw: tuple = (32, 48)
    name: str = "domain"

    def __post_init__(self):
        priors = np.asarray(self.class_priors, dtype=np.float64)
        if len(priors) != self.num_classes:
            raise ValueError("class_priors length != num_classes")
        if (priors < 0).any() or abs(priors.sum() - 1.0) > 1e-9:
            raise ValueError("class_priors must be nonnegative and sum to 1")
        if self.lidar_rings < 1:
            raise ValueError("lidar_rings must be >= 1")
        if not 0.0 < self.brightness <= 2.0:
            raise ValueError("brightness must be in (0, 2]")
        if self.texture_noise_std < 0:
            raise ValueError("texture_noise_std must be >= 0")
        if self.layout_scale <= 0:
            raise ValueError("layout_scale must be > 0")

    def to_json(self):
        d = dataclasses.asdict(self)
        d["class_priors"] = list(self.class_priors)
        d["image_hw"] = list(self.image_hw)
        return d

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        d["class_priors"] = tuple(d["class_priors"])
        d["image_hw"] = tuple(d["image_hw"])
        return cls(**d)


def build_camera(spec):
    h, w = spec.image_hw
    fx = (w / 2.0) / np.tan(np.radians(CAMERA_HFOV_DEG) / 2.0)
    k = np.array([[fx, 0.0, w / 2.0],
                  [0.0, fx, h / 2.0],
                  [0.0, 0.0, 1.0]])
    # world x-forward/y-left/z-up -> camera z-forward/x-right/y-down
    r_base = np.array([[0.0, -1.0, 0.0],
                       [0.0, 0.0, -1.0],
                       [1.0, 0.0, 0.0]])
    a = np.radians(CAMERA_PITCH_DEG)
    r_pitch = np.array([[1.0, 0.0, 0.0],
                        [0.0, np.cos(a), -np.sin(a)],
                        [0.0, np.sin(a), np.cos(a)]])
    r = r_pitch @ r_base
    center = np.array([0.0, 0.0, spec.sensor_height])
    return geometry.CameraModel(k=k, r=r, t=-r @ center, image_size=(h, w))


def lidar_directions(spec):
    el = np.radians(np.linspace(*LIDAR_ELEVATION_DEG, spec.lidar_rings))
    az = np.radians(np.linspace(*LIDAR_AZIMUTH_DEG, spec.points_per_ring))
    el_g, az_g = np.meshgrid(el, az, indexing="ij")
    el_f, az_f = el_g.ravel(), az_g.ravel()
    return np.stack([np.cos(el_f) * np.cos(az_f),
                     np.cos(el_f) * np.sin(az_f),
                     np.sin(el_f)], axis=1)


def pixel_directions(cam):
    h, w = cam.image_size
    u, v = np.meshgrid(np.arange(w, dtype=np.float64),
                       np.arange(h, dtype=np.float64), indexing="xy")
    ones = np.ones_like(u)
    d_cam = np.stack([u.ravel(), v.ravel(), ones.ravel()], axis=1)
    d_cam = d_cam @ np.linalg.inv(cam.k).T
    d_world = d_cam @ cam.r
    return d_world / np.linalg.norm(d_world, axis=1, keepdims=True)


def generate_scene(spec, frame_id):
    """Render one paired sample; bit-deterministic in (spec.seed, frame_id)."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, frame_id]))
    world = world_mod.build_world(rng, spec)
    origin = np.array([0.0, 0.0, spec.sensor_height])
    cam = build_camera(spec)
    h, w = spec.image_hw
    pal = world_mod.palette(spec.num_classes)

    hit, t_hit, cls_hit = world_mod.cast_rays(world, lidar_directions(spec),
                                              origin)
    points = origin + lidar_directions(spec)[hit] * t_hit[hit, None]
    labels = cls_hit[hit].astype(np.int32)

    img_cls = np.full(h * w, -1, dtype=np.int32)
    p_hit, p_t, p_cls = world_mod.cast_rays(world, pixel_directions(cam),
                                            origin)
    img_cls[p_hit] = p_cls[p_hit]
    img_cls = img_cls.reshape(h, w)

    cloud = geometry.PointCloud(points)
    uv, depth, in_fov = geometry.project_points(cloud, cam)
    if not in_fov.any():
        raise EmptyFov(f"frame {frame_id} has no visible points")
    points, labels = points[in_fov], labels[in_fov]
    uv, depth = uv[in_fov], depth[in_fov]

    # nearest point wins each pixel; points shadowed by another class drop
    ui, vi = geometry.pixel_indices(uv, (h, w))
    flat = vi.astype(np.int64) * w + ui
    order = np.lexsort((np.arange(len(flat)), depth))
    uniq, first = np.unique(flat[order], return_index=True)
    win_cls = np.full(h * w, -1, dtype=np.int32)
    win_cls[uniq] = labels[order][first]
    keep = labels == win_cls[flat]
    points, labels, uv = points[keep], labels[keep], uv[keep]
    img_cls.ravel()[uniq] = win_cls[uniq]

    image = np.where(img_cls[:, :, None] >= 0,
                     pal[np.maximum(img_cls, 0)],
                     world_mod.SKY_COLOR).astype(np.float32)
    image = image * np.float32(spec.brightness)
    if spec.texture_noise_std > 0:
        image = image + rng.normal(
            0.0, spec.texture_noise_std, size=image.shape).astype(np.float32)
    image = np.clip(image, 0.0, 1.0).astype(np.float32)

    return Sample(
        image=image,
        cloud=geometry.PointCloud(points),
        labels=labels,
        pixel_uv=uv,
        cam=cam,
        meta={"domain": spec.name, "frame_id": int(frame_id),
              "num_classes": int(spec.num_classes)},
    )
