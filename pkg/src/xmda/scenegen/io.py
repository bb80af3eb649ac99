"""Dataset materialization: render a SplitSet to its on-disk layout.

Layout::

    <out>/meta.json                  resolved preset, seed, domain specs
    <out>/<split>.json               index: list of sample dir relpaths
    <out>/samples/<split>/<00000>/   one directory per sample

Frame rendering is pure per frame, so materialization parallelizes over
frames (``XMDA_NUM_WORKERS`` threads; the raycaster releases the GIL).
"""

import concurrent.futures
import json
import os
import pathlib

from ..errors import IoFailure
from ..sample import save_sample
from .generate import generate_scene
from .scenario import make_scenario


def num_workers():
    try:
        return max(1, int(os.environ.get("XMDA_NUM_WORKERS", "1")))
    except ValueError:
        return 1


def materialize(splitset, out_dir, force=False):
    out = pathlib.Path(out_dir)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise IoFailure(f"{out} exists and is not empty; pass force")
    out.mkdir(parents=True, exist_ok=True)

    meta = {
        "preset": splitset.preset,
        "regime": splitset.regime,
        "seed": splitset.seed,
        "num_classes": splitset.num_classes,
        "domain_specs": {k: v.to_json()
                         for k, v in splitset.domain_specs.items()},
        "splits": {k: len(v) for k, v in splitset.splits.items()},
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    jobs = []
    for split, refs in splitset.splits.items():
        index = []
        for i, ref in enumerate(refs):
            rel = f"samples/{split}/{i:05d}"
            index.append(rel)
            jobs.append((splitset.domain_specs[ref.domain], ref.frame_id,
                         out / rel))
        (out / f"{split}.json").write_text(json.dumps(index, indent=0))

    def render(job):
        spec, frame_id, path = job
        save_sample(generate_scene(spec, frame_id), path)

    workers = num_workers()
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            list(pool.map(render, jobs))
    else:
        for job in jobs:
            render(job)
    return out


def generate_dataset(preset, out_dir, seed=0, force=False):
    return materialize(make_scenario(preset, seed=seed), out_dir, force=force)
