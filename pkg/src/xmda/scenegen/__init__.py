from .generate import DomainSpec, build_camera, generate_scene
from .io import generate_dataset, materialize
from .mappings import ClassMapping, apply_class_mapping, load_mapping
from .scenario import SampleRef, SplitSet, derive_seed, make_scenario
from .world import SKY_COLOR, build_world, palette

__all__ = [
    "DomainSpec", "build_camera", "generate_scene", "generate_dataset",
    "materialize", "ClassMapping", "apply_class_mapping", "load_mapping",
    "SampleRef", "SplitSet", "derive_seed", "make_scenario", "SKY_COLOR",
    "build_world", "palette",
]
