"""Training loops for every regime.

One iteration draws the regime's batch parts (e.g. one source batch and
one target batch), accumulates gradients from all parts, then steps the
two per-stream optimizers in a fixed 2D-then-3D order. All randomness
flows from the config seed through named substreams (init, one batching
stream per split), so the parameter trajectory is bit-reproducible and
so that adding a part (say, an unlabeled target batch) never perturbs
another part's draw sequence.

Label access goes through the dataset's counting guard: unsupervised
regimes never read target-train labels in a train context, and the
recorded counts prove it.
"""

import dataclasses
import hashlib
import json
import pathlib
import time

import numpy as np

from . import losses
from .errors import ConfigSplitMismatch, NonFiniteLoss
from .evaluation import evaluate_fusion_model, evaluate_model
from .losses import LossWeights, seg_loss_grad, xm_loss_grad
from .nets import Adam, DualStreamModel, FusionModel, save_checkpoint
from .nets.checkpoint import params_hash
from .nets.model import build_pack
from .scenegen.scenario import derive_seed

REGIMES = ("src_only", "trg_only", "src_plus_trg", "xmuda", "xmuda_pl",
           "xmossda", "xmossda_pl", "fusion_vanilla", "fusion_xmuda",
           "single_head_ablation", "supervised_xm")

MIXED_REGIMES = ("src_plus_trg", "xmossda", "xmossda_pl")
PL_REGIMES = ("xmuda_pl", "xmossda_pl")
FUSION_REGIMES = ("fusion_vanilla", "fusion_xmuda")


@dataclasses.dataclass
class TrainConfig:
    regime: str
    iterations: int = 2000
    batch_size: int = 8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weights: LossWeights = dataclasses.field(default_factory=LossWeights)
    seed: int = 0
    val_interval: int = 500
    net2d: dict = dataclasses.field(
        default_factory=lambda: {"base": 16, "depth": 3, "lift": "nearest"})
    net3d: dict = dataclasses.field(
        default_factory=lambda: {"base": 16, "levels": 3,
                                 "resolution": 0.05})
    fusion_hidden: int = 32
    use_class_weights: bool = True
    pl_class_weights: bool = True
    pseudo_p: float = 0.9
    stage2_seed: int = None
    log_batches: bool = True

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if self.regime in MIXED_REGIMES and self.batch_size % 2:
            raise ValueError(
                f"regime {self.regime} mixes 50/50 batches; batch_size "
                "must be even")

    def to_json(self):
        d = dataclasses.asdict(self)
        d["weights"] = self.weights.to_json()
        return d

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        d["weights"] = LossWeights(**d.get("weights", {}))
        return cls(**d)

    def config_hash(self):
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclasses.dataclass
class RunManifest:
    config_hash: str
    regime: str
    iterations: int
    loss_log: list
    val_history: list
    best_val_iteration: int
    best_val_score: float
    final_iteration: int
    best_checkpoint: str
    final_checkpoint: str
    final_params_sha256: str
    best_params_sha256: str
    draw_counts: dict
    label_reads: dict
    runtime_s: float
    stage_dirs: dict = dataclasses.field(default_factory=dict)

    def to_json(self):
        return dataclasses.asdict(self)


class _Cursor:
    """Shuffled epoch iterator over one split, on its own RNG stream."""

    def __init__(self, n, rng):
        self.n = n
        self.rng = rng
        self._order = []
        self._pos = 0

    def next(self, k):
        out = []
        while len(out) < k:
            if self._pos >= len(self._order):
                self._order = self.rng.permutation(self.n)
                self._pos = 0
            out.append(int(self._order[self._pos]))
            self._pos += 1
        return out


@dataclasses.dataclass
class _Part:
    """One batch component: where it comes from and which losses apply."""

    split: str
    count: int
    labeled: bool
    xm_weight: float
    use_pl: bool = False


def _labeled_target_split(dataset):
    if "target_train" in dataset.splits:
        return "target_train"
    if "target_labeled" in dataset.splits:
        return "target_labeled"
    raise ConfigSplitMismatch("dataset has no labeled target split")


def _parts_for(config, dataset):
    b = config.batch_size
    w = config.weights
    r = config.regime
    if r == "src_only" or r == "fusion_vanilla":
        return [_Part("source_train", b, True, 0.0)]
    if r == "trg_only":
        return [_Part(_labeled_target_split(dataset), b, True, 0.0)]
    if r == "src_plus_trg":
        return [_Part("source_train", b // 2, True, 0.0),
                _Part(_labeled_target_split(dataset), b // 2, True, 0.0)]
    if r == "supervised_xm":
        return [_Part(_labeled_target_split(dataset), b, True, w.lambda_s)]
    if r in ("xmuda", "xmuda_pl", "single_head_ablation", "fusion_xmuda"):
        return [_Part("source_train", b, True, w.lambda_s),
                _Part("target_train", b, False, w.lambda_t,
                      use_pl=r == "xmuda_pl")]
    if r in ("xmossda", "xmossda_pl"):
        return [_Part("source_train", b // 2, True, w.lambda_s),
                _Part("target_labeled", b // 2, True, w.lambda_tl),
                _Part("target_unlabeled", b, False, w.lambda_tu,
                      use_pl=r == "xmossda_pl")]
    raise ValueError(r)


def _check_splits(config, dataset):
    needed = {p.split for p in _parts_for(config, dataset)}
    needed.add("target_val")
    missing = needed - set(dataset.splits)
    if missing:
        raise ConfigSplitMismatch(
            f"regime {config.regime} needs splits {sorted(missing)} "
            f"not present in {sorted(dataset.splits)}")


def _class_weights(config, dataset, parts):
    if not config.use_class_weights:
        return None
    counts = np.zeros(dataset.num_classes, dtype=np.int64)
    for p in parts:
        if p.labeled:
            counts += dataset.class_counts(p.split, context="train")
    total = counts.sum()
    if total == 0:
        return None
    return losses.class_weights(counts / total)


def _build_model(config, dataset):
    from .nets import Net2DConfig, Net3DConfig
    net2d = Net2DConfig(**config.net2d)
    net3d = Net3DConfig(**config.net3d)
    init_seed = derive_seed(config.seed, "init")
    if config.regime in FUSION_REGIMES:
        mode = ("vanilla" if config.regime == "fusion_vanilla"
                else "xmuda_fusion")
        return FusionModel(dataset.num_classes, mode=mode, net2d=net2d,
                           net3d=net3d, hidden=config.fusion_hidden,
                           init_seed=init_seed)
    dual_head = config.regime != "single_head_ablation"
    return DualStreamModel(dataset.num_classes, net2d=net2d, net3d=net3d,
                           init_seed=init_seed, dual_head=dual_head)


def _dual_part_step(model, pack, part, weights, class_w, pl_w, pseudo,
                    loss_acc):
    """Forward one part, compute its loss terms and backprop them."""
    preds = model.forward_batch(pack)
    ptr = pack.sample_ptr
    nb = pack.batch_size
    g2d = g3d = g23 = g32 = None
    for b in range(nb):
        lo, hi = ptr[b], ptr[b + 1]
        if part.labeled:
            y = pack.labels[lo:hi]
            v, gp = seg_loss_grad(preds.p_2d[lo:hi], y, class_w)
            g2d = np.zeros_like(preds.p_2d) if g2d is None else g2d
            g2d[lo:hi] += gp / nb
            loss_acc["seg_2d"] += v / nb
            v, gp = seg_loss_grad(preds.p_3d[lo:hi], y, class_w)
            g3d = np.zeros_like(preds.p_3d) if g3d is None else g3d
            g3d[lo:hi] += gp / nb
            loss_acc["seg_3d"] += v / nb
        if part.use_pl and pseudo is not None and weights.lambda_pl > 0:
            y2, y3 = pseudo[b]
            if (y2 >= 0).any():
                v, gp = seg_loss_grad(preds.p_2d[lo:hi], y2, pl_w)
                g2d = np.zeros_like(preds.p_2d) if g2d is None else g2d
                g2d[lo:hi] += weights.lambda_pl * gp / nb
                loss_acc["pl_2d"] += weights.lambda_pl * v / nb
            if (y3 >= 0).any():
                v, gp = seg_loss_grad(preds.p_3d[lo:hi], y3, pl_w)
                g3d = np.zeros_like(preds.p_3d) if g3d is None else g3d
                g3d[lo:hi] += weights.lambda_pl * gp / nb
                loss_acc["pl_3d"] += weights.lambda_pl * v / nb
        if part.xm_weight > 0:
            v, gq = xm_loss_grad(preds.p_3d[lo:hi], preds.p_2d_to_3d[lo:hi])
            g23 = np.zeros_like(preds.p_2d) if g23 is None else g23
            g23[lo:hi] += part.xm_weight * gq / nb
            loss_acc["xm_2d"] += part.xm_weight * v / nb
            v, gq = xm_loss_grad(preds.p_2d[lo:hi], preds.p_3d_to_2d[lo:hi])
            g32 = np.zeros_like(preds.p_3d) if g32 is None else g32
            g32[lo:hi] += part.xm_weight * gq / nb
            loss_acc["xm_3d"] += part.xm_weight * v / nb
    if any(g is not None for g in (g2d, g3d, g23, g32)):
        model.backward_batch(g_2d=g2d, g_3d=g3d, g_2d_to_3d=g23,
                             g_3d_to_2d=g32)


def _fusion_part_step(model, pack, part, loss_acc):
    preds = model.forward_batch(pack)
    ptr = pack.sample_ptr
    nb = pack.batch_size
    gf = g2f = g3f = None
    for b in range(nb):
        lo, hi = ptr[b], ptr[b + 1]
        if part.labeled:
            v, gp = seg_loss_grad(preds.p_fuse[lo:hi], pack.labels[lo:hi])
            gf = np.zeros_like(preds.p_fuse) if gf is None else gf
            gf[lo:hi] += gp / nb
            loss_acc["seg_fuse"] += v / nb
        if part.xm_weight > 0 and preds.p_2d_to_fuse is not None:
            v, gq = xm_loss_grad(preds.p_fuse[lo:hi],
                                 preds.p_2d_to_fuse[lo:hi])
            g2f = np.zeros_like(preds.p_fuse) if g2f is None else g2f
            g2f[lo:hi] += part.xm_weight * gq / nb
            loss_acc["xm_2d_fuse"] += part.xm_weight * v / nb
            v, gq = xm_loss_grad(preds.p_fuse[lo:hi],
                                 preds.p_3d_to_fuse[lo:hi])
            g3f = np.zeros_like(preds.p_fuse) if g3f is None else g3f
            g3f[lo:hi] += part.xm_weight * gq / nb
            loss_acc["xm_3d_fuse"] += part.xm_weight * v / nb
    if any(g is not None for g in (gf, g2f, g3f)):
        model.backward_batch(g_fuse=gf, g_2d_to_fuse=g2f, g_3d_to_fuse=g3f)


def train(config, dataset, run_dir, pseudo_labels=None):
    """Run one training regime end to end; returns the run manifest."""
    t_start = time.perf_counter()
    run = pathlib.Path(run_dir)
    run.mkdir(parents=True, exist_ok=True)
    (run / "config.json").write_text(
        json.dumps(config.to_json(), indent=2, sort_keys=True))

    _check_splits(config, dataset)
    if config.regime in PL_REGIMES and pseudo_labels is None:
        raise ConfigSplitMismatch(
            f"regime {config.regime} requires pseudo labels")

    parts = _parts_for(config, dataset)
    fusion = config.regime in FUSION_REGIMES
    model = _build_model(config, dataset)
    class_w = _class_weights(config, dataset, parts)
    pl_w = class_w if config.pl_class_weights else None

    opts = [Adam(store, lr=config.lr, beta1=config.beta1,
                 beta2=config.beta2, eps=config.adam_eps)
            for _, store in sorted(model.stores().items())]

    cursors = {
        p.split: _Cursor(dataset.split_size(p.split), np.random.default_rng(
            np.random.SeedSequence(
                [derive_seed(config.seed, "batch/" + p.split)])))
        for p in parts}
    struct_cache = {}
    draw_counts = {p.split: 0 for p in parts}
    batch_log = [] if config.log_batches else None

    loss_log = []
    val_history = []
    best_iter, best_score = -1, -np.inf
    select_head = "fuse" if fusion else "2d3d"

    def validate(iteration):
        nonlocal best_iter, best_score
        fn = evaluate_fusion_model if fusion else evaluate_model
        rep = fn(model, dataset, "target_val")
        entry = {"iteration": iteration,
                 **{f"miou_{h}": rep.heads[h]["miou"] for h in rep.heads},
                 "per_class_iou": {h: rep.heads[h]["per_class_iou"]
                                   for h in rep.heads},
                 **rep.extras}
        val_history.append(entry)
        score = rep.heads[select_head]["miou"]
        if score > best_score:
            best_score, best_iter = score, iteration
            save_checkpoint(model, run / "checkpoints" / "best", iteration,
                            is_final=False)
        return entry

    for it in range(1, config.iterations + 1):
        model.zero_grad()
        loss_acc = {k: 0.0 for k in
                    ("seg_2d", "seg_3d", "xm_2d", "xm_3d", "pl_2d", "pl_3d",
                     "seg_fuse", "xm_2d_fuse", "xm_3d_fuse")}
        drawn = {}
        for part in parts:
            idxs = cursors[part.split].next(part.count)
            draw_counts[part.split] += len(idxs)
            drawn[part.split] = idxs
            samples = [dataset.sample(part.split, i) for i in idxs]
            labels = ([dataset.labels_for(part.split, i, "train")
                       for i in idxs] if part.labeled else None)
            pack = build_pack(samples, model.net3d, model.dtype,
                              labels=labels, lift=model.net2d.lift,
                              struct_cache=struct_cache,
                              cache_keys=[(part.split, i) for i in idxs])
            if fusion:
                _fusion_part_step(model, pack, part, loss_acc)
            else:
                pseudo = None
                if part.use_pl and pseudo_labels is not None:
                    pseudo = [(pseudo_labels.labels_2d[i],
                               pseudo_labels.labels_3d[i]) for i in idxs]
                _dual_part_step(model, pack, part, config.weights, class_w,
                                pl_w, pseudo, loss_acc)
        if fusion:
            total = {"loss_fuse": loss_acc["seg_fuse"]
                     + loss_acc["xm_2d_fuse"] + loss_acc["xm_3d_fuse"]}
        else:
            total = {"loss_2d": loss_acc["seg_2d"] + loss_acc["xm_2d"]
                     + loss_acc["pl_2d"],
                     "loss_3d": loss_acc["seg_3d"] + loss_acc["xm_3d"]
                     + loss_acc["pl_3d"]}
        if not all(np.isfinite(v) for v in total.values()):
            dump = run / "diagnostics.json"
            dump.write_text(json.dumps(
                {"iteration": it, "losses": loss_acc, "total": total},
                indent=2))
            raise NonFiniteLoss(
                f"non-finite loss at iteration {it}", dump_path=str(dump))
        for opt in opts:
            opt.step()
        loss_log.append({"iteration": it, **total,
                         **{k: v for k, v in loss_acc.items() if v}})
        if batch_log is not None:
            batch_log.append({"iteration": it, "drawn": drawn})
        if config.val_interval > 0 and it % config.val_interval == 0:
            validate(it)

    final_iter = config.iterations
    save_checkpoint(model, run / "checkpoints" / "final", final_iter,
                    is_final=True)
    final_hash = params_hash(model)
    if best_iter < 0:
        best_iter = final_iter
        best_score = float("nan")
        save_checkpoint(model, run / "checkpoints" / "best", final_iter,
                        is_final=False)

    from .nets import load_manifest
    best_hash = load_manifest(run / "checkpoints" / "best")["params_sha256"]

    manifest = RunManifest(
        config_hash=config.config_hash(),
        regime=config.regime,
        iterations=config.iterations,
        loss_log=loss_log,
        val_history=val_history,
        best_val_iteration=best_iter,
        best_val_score=float(best_score),
        final_iteration=final_iter,
        best_checkpoint=f"iter{best_iter:06d}",
        final_checkpoint=f"iter{final_iter:06d}",
        final_params_sha256=final_hash,
        best_params_sha256=best_hash,
        draw_counts=draw_counts,
        label_reads={k: dict(v) for k, v in dataset.label_reads.items()},
        runtime_s=time.perf_counter() - t_start,
    )
    (run / "manifest.json").write_text(
        json.dumps(manifest.to_json(), indent=2, sort_keys=True))
    with (run / "metrics.jsonl").open("w") as fh:
        for entry in val_history:
            fh.write(json.dumps(entry) + "\n")
    if batch_log is not None:
        with (run / "batch_log.jsonl").open("w") as fh:
            for entry in batch_log:
                fh.write(json.dumps(entry) + "\n")
    return manifest


def train_two_stage_pl(config, dataset, run_dir):
    """Self-training: stage-1 run, offline pseudo-labels, fresh stage 2."""
    from .pseudolabel import extract, save_pseudo_labels

    if config.regime not in PL_REGIMES:
        raise ValueError("two-stage training requires a *_pl regime")
    run = pathlib.Path(run_dir)
    stage1_regime = "xmuda" if config.regime == "xmuda_pl" else "xmossda"
    stage1_cfg = dataclasses.replace(config, regime=stage1_regime)
    m1 = train(stage1_cfg, dataset, run / "stage1")

    unlabeled = ("target_train" if config.regime == "xmuda_pl"
                 else "target_unlabeled")
    pls = extract(run / "stage1" / "checkpoints" / "final", dataset,
                  unlabeled, p=config.pseudo_p)
    if pls.checkpoint_hash != m1.final_params_sha256:
        raise ConfigSplitMismatch(
            "pseudo-label set does not match the stage-1 final checkpoint")
    save_pseudo_labels(pls, run / "pseudo_labels", dataset)

    stage2_seed = (config.stage2_seed if config.stage2_seed is not None
                   else derive_seed(config.seed, "stage2"))
    stage2_cfg = dataclasses.replace(config, seed=stage2_seed,
                                     stage2_seed=stage2_seed)
    m2 = train(stage2_cfg, dataset, run / "stage2", pseudo_labels=pls)
    m2.stage_dirs = {"stage1": str(run / "stage1"),
                     "stage2": str(run / "stage2"),
                     "pseudo_labels": str(run / "pseudo_labels")}
    summary = {
        "regime": config.regime,
        "stage1": m1.to_json(),
        "stage2": m2.to_json(),
        "pseudo_label_manifest": pls.manifest(),
    }
    (run / "manifest.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True))
    return m2


def train_oracle(dataset, run_dir, mix_source=False, **overrides):
    """Supervised upper bound on labeled target, optionally 50/50 mixed."""
    regime = "src_plus_trg" if mix_source else "trg_only"
    config = TrainConfig(regime=regime, **overrides)
    return train(config, dataset, run_dir)
