"""Class-mapping tables: raw dataset labels -> shared training classes.

Shipped tables mirror the cross-dataset label groupings used by the
driving scenarios; the synthetic generator itself emits already-mapped
labels, so these are data plus one pure function.
"""

import json
from importlib import resources

import numpy as np

from ..errors import UnmappedLabel

SHIPPED_MAPPINGS = ("virtualkitti_semantickitti", "a2d2_semantickitti",
                    "semantickitti_nuscenes")

IGNORE = -1


class ClassMapping:
    """One side of a mapping table: ordered raw names -> target indices."""

    def __init__(self, raw_names, target_names, table):
        self.raw_names = list(raw_names)
        self.target_names = list(target_names)
        self.table = dict(table)
        idx = {n: i for i, n in enumerate(self.target_names)}
        self.index_map = np.array(
            [IGNORE if table[n] == "ignore" else idx[table[n]]
             for n in self.raw_names], dtype=np.int32)

    @property
    def num_classes(self):
        return len(self.target_names)


def load_mapping(name, side):
    path = resources.files("xmda.data.class_maps").joinpath(f"{name}.json")
    doc = json.loads(path.read_text())
    if side not in doc["sides"]:
        raise KeyError(f"mapping {name!r} has sides {list(doc['sides'])}")
    table = doc["sides"][side]
    return ClassMapping(raw_names=list(table), target_names=doc["classes"],
                        table=table)


def apply_class_mapping(labels, mapping):
    """Map raw integer labels through a table; -1 passes through as ignore.

    ``mapping`` is a ClassMapping (raw id = position in its raw-name
    order) or a plain dict of raw id -> mapped id.
    """
    labels = np.asarray(labels)
    if isinstance(mapping, ClassMapping):
        index_map = mapping.index_map
    else:
        if not mapping:
            raise UnmappedLabel("empty mapping table")
        hi = max(mapping)
        index_map = np.full(hi + 1, np.iinfo(np.int32).min, dtype=np.int32)
        for k, v in mapping.items():
            if k < 0:
                raise UnmappedLabel(f"raw label {k} must be >= 0")
            index_map[k] = v
    out = np.full(labels.shape, IGNORE, dtype=np.int32)
    valid = labels >= 0
    raw = labels[valid]
    if raw.size and (raw >= len(index_map)).any():
        bad = int(raw[raw >= len(index_map)][0])
        raise UnmappedLabel(f"raw label {bad} not covered by the mapping")
    mapped = index_map[raw]
    if (mapped == np.iinfo(np.int32).min).any():
        bad = int(raw[mapped == np.iinfo(np.int32).min][0])
        raise UnmappedLabel(f"raw label {bad} not covered by the mapping")
    out[valid] = mapped
    return out
