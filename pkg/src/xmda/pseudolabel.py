"""Offline extraction of confident pseudo-labels from a final checkpoint.

Selection is class-balanced: for each class, points argmax-predicted as
that class are ranked by confidence over the whole split and the top
``p`` fraction (ceil, ties included) is kept; everything else gets the
ignore index. The 2D and 3D label sets are extracted independently from
the two main heads. Only a checkpoint marked final may be used; picking
a best-validation checkpoint would smuggle in a supervised signal.
"""

import dataclasses
import json
import math
import pathlib

import numpy as np

from .errors import EmptySplit, StaleCheckpoint
from .nets import load_checkpoint
from .nets.model import build_pack


@dataclasses.dataclass
class PseudoLabelSet:
    labels_2d: list            # per-sample (N,) int32, -1 = not selected
    labels_3d: list
    thresholds_2d: list        # per-class confidence cutoffs (None = empty)
    thresholds_3d: list
    p: float
    checkpoint_hash: str
    split: str

    def manifest(self):
        return {
            "p": self.p,
            "split": self.split,
            "checkpoint_sha256": self.checkpoint_hash,
            "thresholds": {"2d": self.thresholds_2d,
                           "3d": self.thresholds_3d},
        }


def _select(argmax_list, conf_list, num_classes, p):
    """Class-balanced top-p selection; returns labels and thresholds."""
    argmax_all = np.concatenate(argmax_list)
    conf_all = np.concatenate(conf_list)
    thresholds = [None] * num_classes
    keep_all = np.zeros(len(argmax_all), dtype=bool)
    for c in range(num_classes):
        mask = argmax_all == c
        m_c = int(mask.sum())
        if m_c == 0:
            continue
        take = math.ceil(p * m_c)
        if take == 0:
            thresholds[c] = float("inf")
            continue
        confs = np.sort(conf_all[mask])[::-1]
        thr = float(confs[take - 1])
        thresholds[c] = thr
        keep_all |= mask & (conf_all >= thr)
    labels = []
    lo = 0
    for a in argmax_list:
        hi = lo + len(a)
        lab = np.where(keep_all[lo:hi], a, -1).astype(np.int32)
        labels.append(lab)
        lo = hi
    return labels, thresholds


def extract(ckpt_dir, dataset, split, p=0.9, batch_size=8):
    """Pseudo-labels for every sample of an unlabeled split."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    model, manifest = load_checkpoint(ckpt_dir)
    if not manifest.get("is_final", False):
        raise StaleCheckpoint(
            f"{ckpt_dir} is not a final checkpoint; pseudo-labels must "
            "come from the last iteration of a finished run")
    n = dataset.split_size(split)
    if n == 0:
        raise EmptySplit(f"split {split!r} is empty")

    arg2, conf2, arg3, conf3 = [], [], [], []
    for lo in range(0, n, batch_size):
        samples = [dataset.sample(split, i)
                   for i in range(lo, min(lo + batch_size, n))]
        pack = build_pack(samples, model.net3d, model.dtype,
                          lift=model.net2d.lift)
        preds = model.forward_batch(pack)
        for b in range(len(samples)):
            s, e = pack.sample_ptr[b], pack.sample_ptr[b + 1]
            p2, p3 = preds.p_2d[s:e], preds.p_3d[s:e]
            arg2.append(p2.argmax(axis=1).astype(np.int32))
            conf2.append(p2.max(axis=1).astype(np.float64))
            arg3.append(p3.argmax(axis=1).astype(np.int32))
            conf3.append(p3.max(axis=1).astype(np.float64))

    c = dataset.num_classes
    labels_2d, thr_2d = _select(arg2, conf2, c, p)
    labels_3d, thr_3d = _select(arg3, conf3, c, p)
    return PseudoLabelSet(labels_2d=labels_2d, labels_3d=labels_3d,
                          thresholds_2d=thr_2d, thresholds_3d=thr_3d,
                          p=p, checkpoint_hash=manifest["params_sha256"],
                          split=split)


def coverage_report(pls):
    """Per-class selected counts and fractions for both modalities."""
    if not pls.labels_2d:
        raise EmptySplit("pseudo-label set is empty")
    out = {}
    for mod, labels in (("2d", pls.labels_2d), ("3d", pls.labels_3d)):
        all_lab = np.concatenate(labels)
        n_classes = len(pls.thresholds_2d)
        per_class = {}
        for c in range(n_classes):
            selected = int((all_lab == c).sum())
            per_class[c] = {"selected": selected}
        total = len(all_lab)
        kept = int((all_lab >= 0).sum())
        out[mod] = {"per_class": per_class, "total_points": total,
                    "selected_points": kept,
                    "fraction": kept / total if total else 0.0}
    return out


def selection_fractions(pls, argmax_list, modality="2d"):
    """Fraction of argmax-predicted points kept, per class."""
    labels = pls.labels_2d if modality == "2d" else pls.labels_3d
    n_classes = len(pls.thresholds_2d)
    pred = np.concatenate(argmax_list)
    lab = np.concatenate(labels)
    fr = {}
    for c in range(n_classes):
        m = int((pred == c).sum())
        fr[c] = (int((lab == c).sum()) / m) if m else 0.0
    return fr


def save_pseudo_labels(pls, root, dataset):
    """Persist beside the dataset layout: <root>/<sample>/pl_{2d,3d}.i32."""
    root = pathlib.Path(root)
    rels = dataset.splits[pls.split]
    for rel, l2, l3 in zip(rels, pls.labels_2d, pls.labels_3d):
        d = root / rel
        d.mkdir(parents=True, exist_ok=True)
        (d / "pl_2d.i32").write_bytes(
            np.ascontiguousarray(l2, dtype="<i4").tobytes())
        (d / "pl_3d.i32").write_bytes(
            np.ascontiguousarray(l3, dtype="<i4").tobytes())
    (root / "pl_manifest.json").write_text(
        json.dumps(pls.manifest(), indent=2, sort_keys=True))
    return root


def load_pseudo_labels(root, dataset, split):
    root = pathlib.Path(root)
    manifest = json.loads((root / "pl_manifest.json").read_text())
    labels_2d, labels_3d = [], []
    for rel in dataset.splits[split]:
        d = root / rel
        labels_2d.append(np.frombuffer((d / "pl_2d.i32").read_bytes(),
                                       dtype="<i4").copy())
        labels_3d.append(np.frombuffer((d / "pl_3d.i32").read_bytes(),
                                       dtype="<i4").copy())
    return PseudoLabelSet(
        labels_2d=labels_2d, labels_3d=labels_3d,
        thresholds_2d=manifest["thresholds"]["2d"],
        thresholds_3d=manifest["thresholds"]["3d"],
        p=manifest["p"], checkpoint_hash=manifest["checkpoint_sha256"],
        split=manifest["split"])
