"""Prediction containers and probability ensembling."""

import dataclasses

import numpy as np

from ..errors import ShapeMismatch


@dataclasses.dataclass
class PredictionSet:
    """The four per-point class-probability maps, each (N, C)."""

    p_2d: np.ndarray
    p_3d: np.ndarray
    p_2d_to_3d: np.ndarray
    p_3d_to_2d: np.ndarray

    def __post_init__(self):
        shapes = {a.shape for a in (self.p_2d, self.p_3d, self.p_2d_to_3d,
                                    self.p_3d_to_2d)}
        if len(shapes) != 1:
            raise ShapeMismatch(f"prediction shapes differ: {shapes}")


def ensemble(p_2d, p_3d):
    """Mean of the two probability maps; normalized by construction."""
    p_2d = np.asarray(p_2d)
    p_3d = np.asarray(p_3d)
    if p_2d.shape != p_3d.shape:
        raise ShapeMismatch(
            f"cannot ensemble {p_2d.shape} with {p_3d.shape}")
    return 0.5 * (p_2d + p_3d)
