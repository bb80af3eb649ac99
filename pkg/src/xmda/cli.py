"""Command-line surface.

Subcommands: generate, train, pseudo-label, evaluate, report,
ablate-head. Exit codes: 0 success, 1 runtime failure, 2 usage error
(including unknown presets). Commands refuse to overwrite an existing
non-empty output unless --force is given.
"""

import argparse
import dataclasses
import json
import pathlib
import shutil
import sys

from .errors import UnknownPreset, XmdaError


def _fail(msg, code=1):
    print(f"error: {msg}", file=sys.stderr)
    return code


def _prepare_out(path, force):
    out = pathlib.Path(path)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise XmdaError(
                f"{out} exists and is not empty; pass --force to replace")
        shutil.rmtree(out)
    return out


def cmd_generate(args):
    from .scenegen import generate_dataset
    try:
        _prepare_out(args.out, args.force)
        out = generate_dataset(args.preset, args.out, seed=args.seed,
                               force=True)
    except UnknownPreset as e:
        return _fail(e, code=2)
    print(f"dataset written to {out}")
    return 0


def cmd_train(args):
    from .dataset import Dataset
    from .pseudolabel import load_pseudo_labels
    from .trainer import PL_REGIMES, TrainConfig, train, train_two_stage_pl

    doc = json.loads(pathlib.Path(args.config).read_text())
    config = TrainConfig.from_json(doc["train"])
    dataset_dir = doc["dataset"]
    out = doc["output"]
    _prepare_out(out, args.force)
    pathlib.Path(out).mkdir(parents=True, exist_ok=True)
    resolved = {"dataset": str(dataset_dir), "output": str(out),
                "train": config.to_json(),
                "pseudo_labels": doc.get("pseudo_labels")}
    (pathlib.Path(out) / "scenario.json").write_text(
        json.dumps(resolved, indent=2, sort_keys=True))

    dataset = Dataset(dataset_dir)
    if config.regime in PL_REGIMES and doc.get("pseudo_labels") is None:
        manifest = train_two_stage_pl(config, dataset, out)
    else:
        pls = None
        if doc.get("pseudo_labels"):
            split = ("target_train" if "target_train" in dataset.splits
                     else "target_unlabeled")
            pls = load_pseudo_labels(doc["pseudo_labels"], dataset, split)
        manifest = train(config, dataset, out, pseudo_labels=pls)
    print(f"run written to {out} (final checkpoint "
          f"{manifest.final_checkpoint}, sha256 "
          f"{manifest.final_params_sha256[:12]})")
    return 0


def cmd_pseudo_label(args):
    from .dataset import Dataset
    from .pseudolabel import coverage_report, extract, save_pseudo_labels

    dataset = Dataset(args.dataset)
    pls = extract(args.checkpoint, dataset, args.split, p=args.p)
    _prepare_out(args.out, args.force)
    save_pseudo_labels(pls, args.out, dataset)
    cov = coverage_report(pls)
    print(json.dumps({m: {"fraction": cov[m]["fraction"]} for m in cov},
                     indent=2))
    print(f"pseudo labels written to {args.out}")
    return 0


def cmd_evaluate(args):
    from .dataset import Dataset
    from .evaluation import evaluate_checkpoint

    dataset = Dataset(args.dataset)
    report = evaluate_checkpoint(args.checkpoint, dataset, args.split)
    text = json.dumps(report.to_json(), indent=2)
    if args.out:
        pathlib.Path(args.out).write_text(text)
    print(text)
    return 0


def cmd_report(args):
    from .evaluation import (MetricsReport, format_table, load_fixture,
                             report_deltas)

    reports = {}
    for fx in args.fixture or []:
        reports.update(load_fixture(fx))
    for spec in args.runs or []:
        if "=" not in spec:
            raise UnknownPreset(f"--runs entries are name=dir, got {spec!r}")
        name, d = spec.split("=", 1)
        rep_file = pathlib.Path(d) / f"report_{args.split}.json"
        if not rep_file.exists():
            from .errors import MissingReport
            raise MissingReport(
                f"{rep_file} not found; run `xmda evaluate` first")
        reports[name] = MetricsReport.from_json(
            json.loads(rep_file.read_text()))
    if not reports:
        return _fail("nothing to report; pass --runs and/or --fixture", 2)
    table = format_table(reports)
    print(table)
    if args.json:
        doc = {"reports": {k: v.to_json() for k, v in reports.items()}}
        try:
            doc["deltas"] = report_deltas(reports)
        except XmdaError:
            pass
        pathlib.Path(args.json).write_text(json.dumps(doc, indent=2))
    return 0


def cmd_ablate_head(args):
    from .experiments import desk_config, head_ablation

    cfg = desk_config(iterations=args.iterations,
                      seed=args.seeds[0])
    entries = head_ablation(cfg, args.dataset, args.out, args.seeds)
    for e in entries:
        print(f"{e['head']:>6}  lambda_t={e['lambda_t']:<6} "
              f"mIoU2D={100 * e['miou_2d_test_mean']:.1f} "
              f"agreement={e['agreement_val_mean']:.3f}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="xmda",
        description="Cross-modal 2D/3D domain adaptation, desk scale.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="materialize a scenario preset")
    g.add_argument("--preset", required=True,
                   help="e.g. synth-lighting/uda")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--force", action="store_true")
    g.set_defaults(fn=cmd_generate)

    t = sub.add_parser("train", help="run a training scenario config")
    t.add_argument("--config", required=True,
                   help="JSON with dataset/output/train sections")
    t.add_argument("--force", action="store_true")
    t.set_defaults(fn=cmd_train)

    pl = sub.add_parser("pseudo-label",
                        help="extract pseudo labels from a final checkpoint")
    pl.add_argument("--checkpoint", required=True)
    pl.add_argument("--dataset", required=True)
    pl.add_argument("--split", default="target_train")
    pl.add_argument("--p", type=float, default=0.9)
    pl.add_argument("--out", required=True)
    pl.add_argument("--force", action="store_true")
    pl.set_defaults(fn=cmd_pseudo_label)

    e = sub.add_parser("evaluate", help="evaluate a checkpoint on a split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--split", default="target_test")
    e.add_argument("--out")
    e.set_defaults(fn=cmd_evaluate)

    r = sub.add_parser("report", help="print a comparison table")
    r.add_argument("--runs", nargs="*", metavar="NAME=DIR")
    r.add_argument("--fixture", nargs="*")
    r.add_argument("--split", default="target_test")
    r.add_argument("--json")
    r.set_defaults(fn=cmd_report)

    a = sub.add_parser("ablate-head",
                       help="single- vs dual-head lambda_t sweep")
    a.add_argument("--dataset", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    a.add_argument("--iterations", type=int, default=2000)
    a.set_defaults(fn=cmd_ablate_head)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except UnknownPreset as e:
        return _fail(e, code=2)
    except XmdaError as e:
        extra = getattr(e, "dump_path", None)
        msg = f"{e} (diagnostics: {extra})" if extra else str(e)
        return _fail(msg, code=1)


if __name__ == "__main__":
    sys.exit(main())
