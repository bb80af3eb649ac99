"""Read access to a materialized dataset, with label-read accounting.

Samples are cached in memory (desk-scale datasets are a few MB). Label
arrays are only handed out through ``labels_for``, which counts reads
per (split, context); unsupervised training regimes are audited by
asserting zero train-context reads on their unlabeled splits.
"""

import json
import pathlib

import numpy as np

from .errors import ConfigSplitMismatch
from .sample import load_sample


class Dataset:
    def __init__(self, root):
        self.root = pathlib.Path(root)
        self.meta = json.loads((self.root / "meta.json").read_text())
        self.splits = {}
        for idx_file in sorted(self.root.glob("*.json")):
            if idx_file.name == "meta.json":
                continue
            self.splits[idx_file.stem] = json.loads(idx_file.read_text())
        self._cache = {}
        self.label_reads = {s: {"train": 0, "eval": 0}
                            for s in self.splits}

    @property
    def num_classes(self):
        return int(self.meta["num_classes"])

    def split_size(self, split):
        self._check_split(split)
        return len(self.splits[split])

    def _check_split(self, split):
        if split not in self.splits:
            raise ConfigSplitMismatch(
                f"dataset at {self.root} has no split {split!r}; "
                f"available: {sorted(self.splits)}")

    def sample(self, split, i):
        self._check_split(split)
        key = (split, i)
        if key not in self._cache:
            self._cache[key] = load_sample(self.root / self.splits[split][i])
        return self._cache[key]

    def labels_for(self, split, i, context):
        """Label array of one sample; every call is counted per context."""
        if context not in ("train", "eval"):
            raise ValueError("context must be 'train' or 'eval'")
        s = self.sample(split, i)
        self.label_reads[split][context] += 1
        return s.labels

    def class_counts(self, split, context="train"):
        """Per-class label counts over a split (ignore index excluded)."""
        counts = np.zeros(self.num_classes, dtype=np.int64)
        for i in range(self.split_size(split)):
            y = self.labels_for(split, i, context)
            y = y[y >= 0]
            counts += np.bincount(y, minlength=self.num_classes)
        return counts

    def class_frequencies(self, split, context="train"):
        """Per-class label frequency over a split (ignore index excluded)."""
        counts = self.class_counts(split, context)
        total = counts.sum()
        if total == 0:
            return np.zeros(self.num_classes)
        return counts / total
