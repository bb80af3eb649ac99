"""Pinhole projection, field-of-view filtering, voxelization, feature lifting.

Conventions: world frame is x-forward / y-left / z-up, camera frame is
OpenCV-style z-forward / x-right / y-down. ``u`` indexes columns, ``v``
rows; integer pixel coordinates are pixel centers, and the image spans
the half-open box [0, W) x [0, H).
"""

import dataclasses

import numpy as np

from .errors import EmptyFov, InvalidResolution, OutOfBounds


@dataclasses.dataclass
class CameraModel:
    """Pinhole camera: intrinsics ``k``, world->camera rigid transform (r, t)."""

    k: np.ndarray            # 3x3 intrinsics, pixels
    r: np.ndarray            # 3x3 rotation, world -> camera
    t: np.ndarray            # 3-vector translation, meters
    image_size: tuple        # (H, W)

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=np.float64)
        self.r = np.asarray(self.r, dtype=np.float64)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        self.validate()

    def validate(self):
        h, w = self.image_size
        fx, fy = self.k[0, 0], self.k[1, 1]
        cx, cy = self.k[0, 2], self.k[1, 2]
        if fx <= 0 or fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= cx < w and 0 <= cy < h):
            raise ValueError("principal point outside image bounds")
        if not np.allclose(self.r @ self.r.T, np.eye(3), atol=1e-6):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(self.r) - 1.0) > 1e-6:
            raise ValueError("rotation determinant must be +1")

    def to_json(self):
        return {
            "k": self.k.tolist(),
            "r": self.r.tolist(),
            "t": self.t.tolist(),
            "image_size": list(self.image_size),
        }

    @classmethod
    def from_json(cls, d):
        return cls(k=np.array(d["k"]), r=np.array(d["r"]), t=np.array(d["t"]),
                   image_size=tuple(d["image_size"]))


@dataclasses.dataclass
class PointCloud:
    coords: np.ndarray               # (N, 3) meters
    intensity: np.ndarray = None     # optional (N,) in [0, 1]

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 3)
        if not np.isfinite(self.coords).all():
            raise ValueError("point coordinates must be finite")

    def __len__(self):
        return self.coords.shape[0]


@dataclasses.dataclass
class VoxelGrid:
    """Sparse partition of point indices into cubic cells.

    Cell of a point p is floor(p / resolution), componentwise, using the
    mathematical floor so negative coordinates partition unambiguously.
    """

    resolution: float
    cells: dict                      # (i, j, k) -> list of point indices


def project_points(cloud, cam):
    """Project points through the pinhole model.

    Returns continuous pixel coordinates (N, 2) as (u, v), camera-frame
    depths (N,), and an in-view mask. Points behind the camera get
    depth <= 0 and NaN pixel coordinates; they are flagged, not errors.
    A point is in view iff depth > 0 and 0 <= u < W and 0 <= v < H.
    """
    h, w = cam.image_size
    p_cam = cloud.coords @ cam.r.T + cam.t
    depth = p_cam[:, 2]
    uv = np.full((len(cloud), 2), np.nan)
    front = depth > 0
    proj = p_cam[front] @ cam.k.T
    uv[front, 0] = proj[:, 0] / proj[:, 2]
    uv[front, 1] = proj[:, 1] / proj[:, 2]
    in_fov = front & (uv[:, 0] >= 0) & (uv[:, 0] < w) \
        & (uv[:, 1] >= 0) & (uv[:, 1] < h)
    return uv, depth, in_fov


def fov_filter(sample):
    """Keep exactly the points the camera sees, in original order.

    Labels and pixel coordinates are filtered consistently and the
    sample's ``pixel_uv`` is (re)computed from the camera. Raises
    ``EmptyFov`` when nothing survives, so degenerate frames can be
    skipped upstream.
    """
    uv, _, in_fov = project_points(sample.cloud, sample.cam)
    if not in_fov.any():
        raise EmptyFov(f"no point projects into the image for {sample.meta}")
    cloud = PointCloud(sample.cloud.coords[in_fov])
    if sample.cloud.intensity is not None:
        cloud.intensity = sample.cloud.intensity[in_fov]
    return dataclasses.replace(
        sample,
        cloud=cloud,
        labels=None if sample.labels is None else sample.labels[in_fov],
        pixel_uv=uv[in_fov],
    )


def voxelize(cloud, resolution):
    """Partition points into cells of ``resolution`` meters."""
    if resolution <= 0:
        raise InvalidResolution(f"resolution must be > 0, got {resolution}")
    keys = np.floor(cloud.coords / resolution).astype(np.int64)
    cells = {}
    for i, key in enumerate(map(tuple, keys)):
        cells.setdefault(key, []).append(i)
    return VoxelGrid(resolution=float(resolution), cells=cells)


def pixel_indices(uv, image_size):
    """Nearest-pixel indices for continuous (u, v), rounding halves down.

    Coordinates in [W-0.5, W) have no integer pixel to their right, so
    the result is clamped to the nearest valid pixel. Raises
    ``OutOfBounds`` for coordinates outside [0, W) x [0, H).
    """
    h, w = image_size
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    if ((uv[:, 0] < 0) | (uv[:, 0] >= w) | (uv[:, 1] < 0)
            | (uv[:, 1] >= h)).any():
        raise OutOfBounds("pixel coordinates outside the image")
    ui = np.minimum(np.ceil(uv[:, 0] - 0.5), w - 1).astype(np.int32)
    vi = np.minimum(np.ceil(uv[:, 1] - 0.5), h - 1).astype(np.int32)
    return ui, vi


def lift_2d_features(feature_map, pixel_uv, mode="nearest"):
    """Sample per-point feature rows from a dense (H, W, F) map.

    ``nearest`` gathers the feature at the nearest integer pixel;
    ``bilinear`` blends the four surrounding pixels (clamped at edges).
    """
    fmap = np.asarray(feature_map)
    h, w = fmap.shape[0], fmap.shape[1]
    if mode == "nearest":
        ui, vi = pixel_indices(pixel_uv, (h, w))
        return fmap[vi, ui]
    if mode == "bilinear":
        uv = np.asarray(pixel_uv, dtype=np.float64).reshape(-1, 2)
        if ((uv[:, 0] < 0) | (uv[:, 0] >= w) | (uv[:, 1] < 0)
                | (uv[:, 1] >= h)).any():
            raise OutOfBounds("pixel coordinates outside the image")
        u = np.clip(uv[:, 0], 0.0, w - 1.0)
        v = np.clip(uv[:, 1], 0.0, h - 1.0)
        u0 = np.floor(u).astype(np.int32)
        v0 = np.floor(v).astype(np.int32)
        u1 = np.minimum(u0 + 1, w - 1)
        v1 = np.minimum(v0 + 1, h - 1)
        fu = (u - u0)[:, None]
        fv = (v - v0)[:, None]
        return (fmap[v0, u0] * (1 - fu) * (1 - fv)
                + fmap[v0, u1] * fu * (1 - fv)
                + fmap[v1, u0] * (1 - fu) * fv
                + fmap[v1, u1] * fu * fv)
    raise ValueError(f"unknown sampling mode {mode!r}")
