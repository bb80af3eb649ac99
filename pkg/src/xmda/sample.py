"""One calibrated frame: image, point cloud, labels, projection, camera.

Disk layout (one directory per sample): raw little-endian arrays
``image.f32``, ``points.f32``, ``labels.i32``, ``uv.f32`` plus a
``sample.json`` sidecar carrying shapes, the camera model and metadata.
"""

import dataclasses
import json
import pathlib

import numpy as np

from .geometry import CameraModel, PointCloud


@dataclasses.dataclass
class Sample:
    image: np.ndarray          # (H, W, 3) float32 in [0, 1]
    cloud: PointCloud
    labels: np.ndarray         # (N,) int32 in [0, C) or -1 (ignore)
    pixel_uv: np.ndarray       # (N, 2) continuous (u, v), in bounds
    cam: CameraModel
    meta: dict                 # domain id, frame id, num_classes, ...

    def __post_init__(self):
        n = len(self.cloud)
        if self.labels is not None and len(self.labels) != n:
            raise ValueError("labels length != point count")
        if self.pixel_uv is not None and len(self.pixel_uv) != n:
            raise ValueError("pixel_uv length != point count")

    @property
    def num_points(self):
        return len(self.cloud)


def save_sample(sample, sample_dir):
    d = pathlib.Path(sample_dir)
    d.mkdir(parents=True, exist_ok=True)
    image = np.ascontiguousarray(sample.image, dtype="<f4")
    points = np.ascontiguousarray(sample.cloud.coords, dtype="<f4")
    labels = np.ascontiguousarray(sample.labels, dtype="<i4")
    uv = np.ascontiguousarray(sample.pixel_uv, dtype="<f4")
    (d / "image.f32").write_bytes(image.tobytes())
    (d / "points.f32").write_bytes(points.tobytes())
    (d / "labels.i32").write_bytes(labels.tobytes())
    (d / "uv.f32").write_bytes(uv.tobytes())
    sidecar = {
        "image_shape": list(image.shape),
        "num_points": int(points.shape[0]),
        "camera": sample.cam.to_json(),
        "meta": sample.meta,
    }
    (d / "sample.json").write_text(json.dumps(sidecar, sort_keys=True))


def load_sample(sample_dir):
    d = pathlib.Path(sample_dir)
    sidecar = json.loads((d / "sample.json").read_text())
    h, w, c = sidecar["image_shape"]
    n = sidecar["num_points"]
    image = np.frombuffer((d / "image.f32").read_bytes(), dtype="<f4")
    points = np.frombuffer((d / "points.f32").read_bytes(), dtype="<f4")
    labels = np.frombuffer((d / "labels.i32").read_bytes(), dtype="<i4")
    uv = np.frombuffer((d / "uv.f32").read_bytes(), dtype="<f4")
    return Sample(
        image=image.reshape(h, w, c).copy(),
        cloud=PointCloud(points.reshape(n, 3).astype(np.float64)),
        labels=labels.copy(),
        pixel_uv=uv.reshape(n, 2).astype(np.float64),
        cam=CameraModel.from_json(sidecar["camera"]),
        meta=sidecar["meta"],
    )
