"""Segmentation metrics, ensembling evaluation, and report bookkeeping.

IoU is computed per class from a confusion matrix (rows = truth,
columns = prediction, ignore index excluded); classes absent from both
truth and prediction are excluded from the mIoU mean. Scores print in
percentage points with one decimal, mirroring how such tables are
usually published.
"""

import dataclasses
import json
import pathlib

import numpy as np

from .errors import EmptyMatrix, LengthMismatch, MissingReport
from .nets import ensemble, load_checkpoint
from .nets.model import build_pack

HEAD_ORDER = ("2d", "3d", "2d3d", "fuse")
HEAD_LABEL = {"2d": "2D", "3d": "3D", "2d3d": "2D+3D", "fuse": "Fused"}


class ConfusionMatrix:
    def __init__(self, num_classes):
        self.num_classes = num_classes
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    @property
    def total(self):
        return int(self.counts.sum())

    def add(self, other):
        self.counts += other.counts
        return self


def accumulate(cm, pred, truth):
    """Count (truth, prediction) pairs for non-ignored points."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"pred {pred.shape} vs truth {truth.shape}")
    keep = truth >= 0
    c = cm.num_classes
    flat = truth[keep].astype(np.int64) * c + pred[keep].astype(np.int64)
    cm.counts += np.bincount(flat, minlength=c * c).reshape(c, c)
    return cm


def miou(cm):
    """Per-class IoU and their mean over classes present in the data."""
    if cm.total == 0:
        raise EmptyMatrix("no evaluated points")
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    union = tp + fp + fn
    iou = np.full(cm.num_classes, np.nan)
    present = union > 0
    iou[present] = tp[present] / union[present]
    return {"per_class_iou": [None if not p else float(v)
                              for p, v in zip(present, iou)],
            "miou": float(np.mean(iou[present]))}


@dataclasses.dataclass
class MetricsReport:
    heads: dict                 # head name -> {"per_class_iou", "miou"}
    split_id: str = ""
    checkpoint_id: str = ""
    extras: dict = dataclasses.field(default_factory=dict)

    def miou_of(self, head):
        return self.heads[head]["miou"]

    def to_json(self):
        return {"heads": self.heads, "split_id": self.split_id,
                "checkpoint_id": self.checkpoint_id, "extras": self.extras}

    @classmethod
    def from_json(cls, d):
        return cls(heads=d["heads"], split_id=d.get("split_id", ""),
                   checkpoint_id=d.get("checkpoint_id", ""),
                   extras=d.get("extras", {}))


def evaluate_model(model, dataset, split, context="eval", batch_size=8):
    """Forward a split and report mIoU for 2D, 3D and their ensemble."""
    c = dataset.num_classes
    cms = {h: ConfusionMatrix(c) for h in ("2d", "3d", "2d3d")}
    agree = agree_n = 0
    for lo in range(0, dataset.split_size(split), batch_size):
        idxs = range(lo, min(lo + batch_size, dataset.split_size(split)))
        samples = [dataset.sample(split, i) for i in idxs]
        labels = [dataset.labels_for(split, i, context) for i in idxs]
        pack = build_pack(samples, model.net3d, model.dtype,
                          lift=model.net2d.lift)
        preds = model.forward_batch(pack)
        truth = np.concatenate(labels)
        a2 = preds.p_2d.argmax(axis=1)
        a3 = preds.p_3d.argmax(axis=1)
        accumulate(cms["2d"], a2, truth)
        accumulate(cms["3d"], a3, truth)
        accumulate(cms["2d3d"], ensemble(preds.p_2d, preds.p_3d).argmax(axis=1),
                   truth)
        agree += int((a2 == a3).sum())
        agree_n += len(a2)
    heads = {h: miou(cms[h]) for h in cms}
    return MetricsReport(heads=heads, split_id=split,
                         extras={"agreement_2d3d": agree / max(agree_n, 1)})


def evaluate_fusion_model(model, dataset, split, context="eval",
                          batch_size=8):
    c = dataset.num_classes
    cm = ConfusionMatrix(c)
    for lo in range(0, dataset.split_size(split), batch_size):
        idxs = range(lo, min(lo + batch_size, dataset.split_size(split)))
        samples = [dataset.sample(split, i) for i in idxs]
        labels = [dataset.labels_for(split, i, context) for i in idxs]
        pack = build_pack(samples, model.net3d, model.dtype,
                          lift=model.net2d.lift)
        preds = model.forward_batch(pack)
        accumulate(cm, preds.p_fuse.argmax(axis=1), np.concatenate(labels))
    return MetricsReport(heads={"fuse": miou(cm)}, split_id=split)


def evaluate_checkpoint(ckpt_dir, dataset, split):
    model, manifest = load_checkpoint(ckpt_dir)
    fn = (evaluate_model if manifest["arch"]["type"] == "dual"
          else evaluate_fusion_model)
    report = fn(model, dataset, split)
    report.checkpoint_id = f"iter{manifest['iteration']:06d}"
    return report


# ------------------------------------------------------------------ deltas

def report_deltas(reports):
    """Oracle-baseline gap and pseudo-labeled-SSDA advantage, per head.

    ``reports`` maps names to MetricsReport; requires baseline+oracle
    (domain gap) or baseline+xmossda_pl (unsupervised advantage).
    """
    out = {}
    if "baseline" in reports and "oracle" in reports:
        base, orac = reports["baseline"], reports["oracle"]
        out["domain_gap"] = {
            h: orac.miou_of(h) - base.miou_of(h)
            for h in orac.heads if h in base.heads}
    if "baseline" in reports and "xmossda_pl" in reports:
        base, meth = reports["baseline"], reports["xmossda_pl"]
        out["unsupervised_advantage"] = {
            h: meth.miou_of(h) - base.miou_of(h)
            for h in meth.heads if h in base.heads}
        out["unsupervised_advantage_relative"] = {
            h: (meth.miou_of(h) - base.miou_of(h)) / base.miou_of(h)
            for h in meth.heads if h in base.heads}
    if not out:
        raise MissingReport(
            "need baseline+oracle or baseline+xmossda_pl; got "
            f"{sorted(reports)}")
    return out


def _fmt(x):
    return f"{100 * x:.1f}"


def format_table(reports, with_deltas=True):
    """Aligned text table: one row per report, 2D/3D/2D+3D columns."""
    heads = [h for h in HEAD_ORDER
             if any(h in r.heads for r in reports.values())]
    name_w = max(len(n) for n in reports) + 2
    name_w = max(name_w, len("Domain gap (O-B)") + 2)
    lines = ["Method".ljust(name_w)
             + "".join(HEAD_LABEL[h].rjust(8) for h in heads)]
    for name, rep in reports.items():
        row = name.ljust(name_w)
        for h in heads:
            row += (_fmt(rep.miou_of(h)) if h in rep.heads else "-").rjust(8)
        lines.append(row)
    if with_deltas:
        try:
            deltas = report_deltas(reports)
        except MissingReport:
            deltas = {}
        if "domain_gap" in deltas:
            row = "Domain gap (O-B)".ljust(name_w)
            for h in heads:
                v = deltas["domain_gap"].get(h)
                row += (_fmt(v) if v is not None else "-").rjust(8)
            lines.append(row)
        if "unsupervised_advantage" in deltas:
            row = "Unsup. advantage".ljust(name_w)
            for h in heads:
                v = deltas["unsupervised_advantage"].get(h)
                r = deltas["unsupervised_advantage_relative"].get(h)
                cell = f"{_fmt(v)} (+{100 * r:.1f}%)" if v is not None else "-"
                row += cell.rjust(16)
            lines.append(row)
    return "\n".join(lines)


def load_fixture(path):
    """Published-table fixture -> named MetricsReports (values are %)."""
    doc = json.loads(pathlib.Path(path).read_text())
    reports = {}
    for name, heads in doc["reports"].items():
        reports[name] = MetricsReport(
            heads={h: {"per_class_iou": None, "miou": v / 100.0}
                   for h, v in heads.items()},
            split_id=doc.get("table", ""))
    return reports
