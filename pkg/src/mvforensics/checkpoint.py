"""Single-file checkpoint archive: a versioned JSON header describing every
tensor (name, dtype, shape, byte length) followed by the raw tensor payloads."""

import json
import struct
from dataclasses import dataclass, field

import numpy as np
import torch

MAGIC = b"MVFCKPT1"


@dataclass
class Checkpoint:
    stage: str
    epoch: int
    config: dict
    metrics: dict
    tensors: dict = field(default_factory=dict)   # name -> np.ndarray
    extra: dict = field(default_factory=dict)

    def state_dict(self, prefix):
        plen = len(prefix) + 1
        return {name[plen:]: torch.from_numpy(arr.copy())
                for name, arr in self.tensors.items() if name.startswith(prefix + ".")}


def _to_numpy(value):
    if torch.is_tensor(value):
        return value.detach().cpu().numpy()
    return np.asarray(value)


def save_checkpoint(path, stage, epoch, config, metrics, tensors, extra=None):
    arrays = {name: np.ascontiguousarray(_to_numpy(t)) for name, t in tensors.items()}
    index = []
    for name, arr in arrays.items():
        index.append({"name": name, "dtype": arr.dtype.str,
                      "shape": list(arr.shape), "nbytes": int(arr.nbytes)})
    header = {
        "format_version": 1,
        "stage": stage,
        "epoch": int(epoch),
        "config": config,
        "metrics": metrics,
        "tensors": index,
        "extra": extra or {},
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name, arr in arrays.items():
            fh.write(arr.tobytes())
    return path


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"not a checkpoint file: {path}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        tensors = {}
        for entry in header["tensors"]:
            raw = fh.read(entry["nbytes"])
            arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"]))
            tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return Checkpoint(header["stage"], header["epoch"], header["config"],
                      header["metrics"], tensors, header.get("extra", {}))


def module_tensors(module: torch.nn.Module, prefix) -> dict:
    return {f"{prefix}.{name}": tensor for name, tensor in module.state_dict().items()}


def optimizer_tensors(optimizer, named_params, prefix="optim") -> dict:
    """Momentum buffers keyed by parameter name, for exact training resumes."""
    out = {}
    lookup = {id(p): name for name, p in named_params}
    for group in optimizer.param_groups:
        for p in group["params"]:
            state = optimizer.state.get(p, {})
            buf = state.get("momentum_buffer")
            if buf is not None and id(p) in lookup:
                out[f"{prefix}.{lookup[id(p)]}.momentum_buffer"] = buf
    return out


def restore_optimizer(optimizer, named_params, ckpt: Checkpoint, prefix="optim"):
    lookup = dict(named_params)
    for key, arr in ckpt.tensors.items():
        if not key.startswith(prefix + "."):
            continue
        name = key[len(prefix) + 1:-len(".momentum_buffer")]
        p = lookup.get(name)
        if p is not None:
            optimizer.state[p] = {"momentum_buffer": torch.from_numpy(arr.copy())}
