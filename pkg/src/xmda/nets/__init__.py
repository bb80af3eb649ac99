from .checkpoint import (load_checkpoint, load_manifest, params_hash,
                         save_checkpoint)
from .heads import PredictionSet, ensemble
from .model import (BatchPack, DualStreamModel, FusionModel,
                    FusionPredictions, build_pack, model_from_arch)
from .params import Adam, ParamStore
from .streams import Net2DConfig, Net3DConfig, Stream2D, Stream3D

__all__ = [
    "load_checkpoint", "load_manifest", "params_hash", "save_checkpoint",
    "PredictionSet", "ensemble", "BatchPack", "DualStreamModel",
    "FusionModel", "FusionPredictions", "build_pack", "model_from_arch",
    "Adam", "ParamStore", "Net2DConfig", "Net3DConfig", "Stream2D",
    "Stream3D",
]
