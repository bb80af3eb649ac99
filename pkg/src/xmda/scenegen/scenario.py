"""Scenario presets: paired source/target domains plus split structure.

A preset id is ``<name>/<regime>``, e.g. ``synth-lighting/uda``. Presets
are JSON documents shipped with the package; ``make_scenario`` resolves
one into disjoint splits of (domain, frame_id) references without
materializing any data.
"""

import dataclasses
import json
import zlib
from importlib import resources

import numpy as np

from ..errors import UnknownPreset
from .generate import DomainSpec

PRESET_NAMES = ("synth-layout", "synth-lighting", "synth-sensor",
                "synth-density", "synth-weather")
REGIMES = ("uda", "ssda")

# frame-id bases keep every split disjoint within the target domain
_FRAME_BASE = {
    "source_train": 0,
    "target_train": 0,
    "target_labeled": 0,
    "target_unlabeled": 10_000,
    "target_val": 20_000,
    "target_test": 30_000,
}

UDA_SPLITS = ("source_train", "target_train", "target_val", "target_test")
SSDA_SPLITS = ("source_train", "target_labeled", "target_unlabeled",
               "target_val", "target_test")


@dataclasses.dataclass(frozen=True)
class SampleRef:
    domain: str
    frame_id: int


@dataclasses.dataclass
class SplitSet:
    preset: str
    regime: str
    seed: int
    num_classes: int
    domain_specs: dict        # "source"/"target" -> DomainSpec
    splits: dict              # split name -> list[SampleRef]

    def split_names(self):
        return UDA_SPLITS if self.regime == "uda" else SSDA_SPLITS


def derive_seed(seed, name):
    """Stable child seed for a named substream."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])


def load_preset(name):
    try:
        path = resources.files("xmda.data.presets").joinpath(f"{name}.json")
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise UnknownPreset(
            f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}")


def make_scenario(preset, seed=0):
    """Resolve ``<name>/<regime>`` into a SplitSet of disjoint references."""
    if "/" not in preset:
        raise UnknownPreset(
            f"preset must be '<name>/<regime>', got {preset!r}")
    name, regime = preset.rsplit("/", 1)
    if regime not in REGIMES:
        raise UnknownPreset(f"unknown regime {regime!r}; use uda or ssda")
    doc = load_preset(name)

    specs = {}
    for domain in ("source", "target"):
        fields = dict(doc["base"])
        fields.update(doc.get(domain, {}))
        fields["seed"] = derive_seed(seed, domain)
        fields["name"] = domain
        specs[domain] = DomainSpec.from_json(fields)

    sizes = doc["splits"][regime]
    splits = {}
    for split, count in sizes.items():
        domain = "source" if split.startswith("source") else "target"
        base = _FRAME_BASE[split]
        splits[split] = [SampleRef(domain, base + i) for i in range(count)]

    expected = UDA_SPLITS if regime == "uda" else SSDA_SPLITS
    if tuple(sorted(splits)) != tuple(sorted(expected)):
        raise UnknownPreset(f"preset {name!r} lacks splits for {regime}")
    if regime == "ssda":
        n_u = len(splits["target_unlabeled"])
        n_l = len(splits["target_labeled"])
        if n_u < 5 * n_l:
            raise ValueError("ssda preset must satisfy |T_u| >= 5 |T_l|")

    return SplitSet(preset=preset, regime=regime, seed=seed,
                    num_classes=doc["base"]["num_classes"],
                    domain_specs=specs, splits=splits)
