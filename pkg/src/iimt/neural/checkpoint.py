"""Directory checkpoints: ``meta.json`` plus one raw little-endian float32 file per tensor."""

import hashlib
import json
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np
import torch

from ..errors import DependencyError, InputError


def params_digest(state):
    h = hashlib.sha256()
    for name in sorted(state):
        h.update(name.encode())
        h.update(state[name].detach().cpu().to(torch.float32).numpy().astype("<f4").tobytes())
    return h.hexdigest()


def save_checkpoint(directory, component, module, config=None, step=0, extra=None):
    """Write atomically: build in a sibling temp dir, then rename over the target."""
    directory = Path(directory)
    directory.parent.mkdir(parents=True, exist_ok=True)
    state = module.state_dict()
    tmp = Path(tempfile.mkdtemp(prefix=f".{directory.name}-", dir=directory.parent))
    try:
        entries = []
        for name, tensor in state.items():
            arr = tensor.detach().cpu().to(torch.float32).contiguous().numpy().astype("<f4")
            fname = f"{name}.bin"
            arr.tofile(tmp / fname)
            entries.append({"name": name, "shape": list(arr.shape), "file": fname})
        meta = {
            "component": component,
            "step": step,
            "config": config or {},
            "dtype": "float32-le",
            "params": entries,
            "digest": params_digest(state),
        }
        if extra:
            meta.update(extra)
        (tmp / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
        if directory.exists():
            shutil.rmtree(directory)
        os.replace(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return directory


def read_meta(directory):
    path = Path(directory) / "meta.json"
    if not path.exists():
        raise DependencyError(f"no checkpoint at {directory}")
    return json.loads(path.read_text())


def load_checkpoint(directory, module, component=None):
    meta = read_meta(directory)
    if component is not None and meta["component"] != component:
        raise InputError(f"checkpoint {directory} holds {meta['component']!r}, not {component!r}")
    current = module.state_dict()
    loaded = {}
    for entry in meta["params"]:
        name = entry["name"]
        if name not in current:
            raise InputError(f"unexpected parameter {name!r} in {directory}")
        arr = np.fromfile(Path(directory) / entry["file"], dtype="<f4").reshape(entry["shape"])
        if tuple(arr.shape) != tuple(current[name].shape):
            raise InputError(
                f"shape mismatch for {name}: {arr.shape} vs {tuple(current[name].shape)}"
            )
        loaded[name] = torch.from_numpy(arr.copy()).to(current[name].dtype)
    missing = set(current) - set(loaded)
    if missing:
        raise InputError(f"checkpoint {directory} lacks parameters: {sorted(missing)[:5]}")
    module.load_state_dict(loaded)
    return meta
