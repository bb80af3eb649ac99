"""Training objectives.

Primitives operate on one sample's (N, C) probability map and return
the loss value (and, in the ``*_grad`` variants, the gradient w.r.t.
the probabilities). The cross-modal loss treats its target argument as
a constant: no gradient is ever produced for it, which is what confines
each stream's update to its own parameters.

Composite objectives average per-sample losses over each batch, one
batch mean per domain term.
"""

import dataclasses

import numpy as np

from .errors import AllIgnored

EPS = 1e-8


@dataclasses.dataclass
class LossWeights:
    """Scalar weights of the cross-modal and pseudo-label terms."""

    lambda_s: float = 1.0      # cross-modal weight on source
    lambda_t: float = 0.1      # cross-modal weight on (unlabeled) target
    lambda_tl: float = None    # cross-modal weight on labeled target
    lambda_tu: float = 0.1     # cross-modal weight on unlabeled target (ssda)
    lambda_pl: float = 1.0     # pseudo-label segmentation weight

    def __post_init__(self):
        if self.lambda_tl is None:
            self.lambda_tl = self.lambda_s
        for name in ("lambda_s", "lambda_t", "lambda_tl", "lambda_tu",
                     "lambda_pl"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def to_json(self):
        return dataclasses.asdict(self)


def seg_loss(p, y, w=None):
    """Class-weighted cross-entropy over non-ignored points."""
    return seg_loss_grad(p, y, w)[0]


def seg_loss_grad(p, y, w=None):
    y = np.asarray(y)
    valid = y >= 0
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise AllIgnored("every label is the ignore index")
    rows = np.nonzero(valid)[0]
    cols = y[valid]
    pv = p[rows, cols]
    wv = np.ones(n_valid) if w is None else np.asarray(w, dtype=float)[cols]
    pc = np.maximum(pv, EPS)
    val = -float((wv * np.log(pc)).sum()) / n_valid
    gp = np.zeros_like(p)
    gp[rows, cols] = np.where(pv > EPS, -wv / (n_valid * pc), 0.0)
    return val, gp


def xm_loss(p_target, q_mimic):
    """KL(P || Q): how badly the mimicking head matches its target.

    Nonnegative, zero iff the rows agree; the target is a constant.
    """
    return xm_loss_grad(p_target, q_mimic)[0]


def xm_loss_grad(p_target, q_mimic):
    p = np.asarray(p_target)
    q = np.asarray(q_mimic)
    n = p.shape[0]
    qc = np.maximum(q, EPS)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log(np.maximum(p, EPS)), 0.0)
    val = float((plogp - p * np.log(qc)).sum()) / n
    gq = np.where(q > EPS, -p / (n * qc), 0.0)
    return val, gq


def entropy_loss(p):
    """Mean per-point Shannon entropy; ln C at uniform, 0 at one-hot."""
    return entropy_loss_grad(p)[0]


def entropy_loss_grad(p):
    p = np.asarray(p)
    n = p.shape[0]
    pc = np.maximum(p, EPS)
    val = -float((p * np.log(pc)).sum()) / n
    gp = -(np.log(pc) + (p > EPS)) / n
    return val, gp


def class_weights(frequencies, smoothing=1.02):
    """Log-smoothed inverse-frequency weights, normalized to mean one."""
    f = np.asarray(frequencies, dtype=float)
    if (f < 0).any():
        raise ValueError("frequencies must be nonnegative")
    w = 1.0 / np.log(smoothing + f)
    return w * (len(w) / w.sum())


# ----------------------------------------------------------------- batches

def _mean(values):
    return float(np.mean(values)) if values else 0.0


def seg_batch(probs, labels, w=None):
    """Mean over a batch of per-sample seg losses."""
    return _mean([seg_loss(p, y, w) for p, y in zip(probs, labels)])


def pl_seg_batch(probs, pseudo, w=None):
    """Pseudo-label seg term; a sample with no selected point adds 0."""
    vals = []
    for p, y in zip(probs, pseudo):
        if y is None or not (np.asarray(y) >= 0).any():
            vals.append(0.0)
        else:
            vals.append(seg_loss(p, y, w))
    return _mean(vals)


def xm_batch(preds, stream):
    """Mean cross-modal loss of one stream's mimicry head over a batch.

    stream "2d": KL(P_3D || P_2D->3D);  stream "3d": KL(P_2D || P_3D->2D).
    """
    if stream == "2d":
        return _mean([xm_loss(pr.p_3d, pr.p_2d_to_3d) for pr in preds])
    return _mean([xm_loss(pr.p_2d, pr.p_3d_to_2d) for pr in preds])


def uda_objective(src_preds, src_labels, tgt_preds, weights, class_w=None,
                  tgt_pseudo_2d=None, tgt_pseudo_3d=None):
    """Per-stream unsupervised-adaptation objective on one batch pair.

    Returns (loss_2d, loss_3d). Each stream combines supervised
    cross-entropy on source, the cross-modal term on source and target,
    and optionally a pseudo-label term on target.
    """
    loss_2d = seg_batch([pr.p_2d for pr in src_preds], src_labels, class_w)
    loss_3d = seg_batch([pr.p_3d for pr in src_preds], src_labels, class_w)
    if weights.lambda_s > 0:
        loss_2d += weights.lambda_s * xm_batch(src_preds, "2d")
        loss_3d += weights.lambda_s * xm_batch(src_preds, "3d")
    if weights.lambda_t > 0:
        loss_2d += weights.lambda_t * xm_batch(tgt_preds, "2d")
        loss_3d += weights.lambda_t * xm_batch(tgt_preds, "3d")
    if weights.lambda_pl > 0 and tgt_pseudo_2d is not None:
        loss_2d += weights.lambda_pl * pl_seg_batch(
            [pr.p_2d for pr in tgt_preds], tgt_pseudo_2d, class_w)
        loss_3d += weights.lambda_pl * pl_seg_batch(
            [pr.p_3d for pr in tgt_preds], tgt_pseudo_3d, class_w)
    return loss_2d, loss_3d


def ssda_objective(src_preds, src_labels, tl_preds, tl_labels, tu_preds,
                   weights, class_w=None, tu_pseudo_2d=None,
                   tu_pseudo_3d=None):
    """Per-stream semi-supervised objective over the three batch parts."""
    loss_2d = seg_batch([pr.p_2d for pr in src_preds], src_labels, class_w)
    loss_3d = seg_batch([pr.p_3d for pr in src_preds], src_labels, class_w)
    loss_2d += seg_batch([pr.p_2d for pr in tl_preds], tl_labels, class_w)
    loss_3d += seg_batch([pr.p_3d for pr in tl_preds], tl_labels, class_w)
    if weights.lambda_s > 0:
        loss_2d += weights.lambda_s * xm_batch(src_preds, "2d")
        loss_3d += weights.lambda_s * xm_batch(src_preds, "3d")
    if weights.lambda_tl > 0:
        loss_2d += weights.lambda_tl * xm_batch(tl_preds, "2d")
        loss_3d += weights.lambda_tl * xm_batch(tl_preds, "3d")
    if weights.lambda_tu > 0:
        loss_2d += weights.lambda_tu * xm_batch(tu_preds, "2d")
        loss_3d += weights.lambda_tu * xm_batch(tu_preds, "3d")
    if weights.lambda_pl > 0 and tu_pseudo_2d is not None:
        loss_2d += weights.lambda_pl * pl_seg_batch(
            [pr.p_2d for pr in tu_preds], tu_pseudo_2d, class_w)
        loss_3d += weights.lambda_pl * pl_seg_batch(
            [pr.p_3d for pr in tu_preds], tu_pseudo_3d, class_w)
    return loss_2d, loss_3d


def split_predictions(batch_preds, sample_ptr):
    """Slice one batched PredictionSet into per-sample views."""
    from .nets.heads import PredictionSet
    out = []
    for b in range(len(sample_ptr) - 1):
        lo, hi = sample_ptr[b], sample_ptr[b + 1]
        out.append(PredictionSet(
            p_2d=batch_preds.p_2d[lo:hi],
            p_3d=batch_preds.p_3d[lo:hi],
            p_2d_to_3d=batch_preds.p_2d_to_3d[lo:hi],
            p_3d_to_2d=batch_preds.p_3d_to_2d[lo:hi]))
    return out
