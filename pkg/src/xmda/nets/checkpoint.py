"""Checkpoint files: JSON manifest + raw little-endian f32 blobs.

One blob per parameter, named by its parameter path; reload is
bit-exact for float32 models. The manifest carries the architecture,
iteration, finality flag and optional RNG state, plus a sha256 over the
parameter bytes used for identity checks.
"""

import hashlib
import json
import pathlib

import numpy as np

from .model import model_from_arch


def params_hash(model):
    h = hashlib.sha256()
    for store_name, store in sorted(model.stores().items()):
        for name in store.names():
            h.update(f"{store_name}:{name}".encode())
            h.update(np.ascontiguousarray(store.view(name),
                                          dtype="<f4").tobytes())
    return h.hexdigest()


def save_checkpoint(model, ckpt_dir, iteration, is_final, rng_state=None):
    d = pathlib.Path(ckpt_dir)
    (d / "params").mkdir(parents=True, exist_ok=True)
    entries = []
    for store_name, store in sorted(model.stores().items()):
        for name in store.names():
            arr = np.ascontiguousarray(store.view(name), dtype="<f4")
            fname = f"{store_name}.{name}.f32"
            (d / "params" / fname).write_bytes(arr.tobytes())
            entries.append({"name": f"{store_name}.{name}",
                            "file": fname,
                            "shape": list(arr.shape)})
    manifest = {
        "format": 1,
        "arch": model.arch_json(),
        "iteration": int(iteration),
        "is_final": bool(is_final),
        "rng_state": rng_state,
        "params": entries,
        "params_sha256": params_hash(model),
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                sort_keys=True))
    return manifest


def load_manifest(ckpt_dir):
    return json.loads((pathlib.Path(ckpt_dir) / "manifest.json").read_text())


def load_checkpoint(ckpt_dir):
    d = pathlib.Path(ckpt_dir)
    manifest = load_manifest(d)
    model = model_from_arch(manifest["arch"])
    stores = model.stores()
    for entry in manifest["params"]:
        store_name, pname = entry["name"].split(".", 1)
        raw = (d / "params" / entry["file"]).read_bytes()
        arr = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"])
        view = stores[store_name].view(pname)
        view[...] = arr.astype(view.dtype)
    return model, manifest
