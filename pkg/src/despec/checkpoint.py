"""Single-file checkpoint container.

Layout: 8-byte magic, little-endian u32 format version, u64 header length,
a canonical JSON header, then the raw tensor blobs the header indexes by
offset. Identical state always encodes to identical bytes.
"""

from __future__ import annotations

import json
import os
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import torch

MAGIC = b"DESPECK\x00"
FORMAT_VERSION = 1

_DTYPES = {
    torch.float32: "float32",
    torch.float64: "float64",
    torch.int64: "int64",
    torch.int32: "int32",
    torch.uint8: "uint8",
    torch.bool: "bool",
}


class CheckpointError(RuntimeError):
    pass


@dataclass
class Checkpoint:
    iteration: int
    config: dict[str, Any]
    config_digest: str
    generator_spec: dict[str, Any]
    generator_state: dict[str, torch.Tensor]
    optimizer_states: dict[str, dict[str, Any]] = field(default_factory=dict)
    discriminator_spec: Optional[dict[str, Any]] = None
    discriminator_state: Optional[dict[str, torch.Tensor]] = None
    # sampler state: numpy bit-generator state, current permutation, cursor
    rng: dict[str, Any] = field(default_factory=dict)
    torch_rng: Optional[torch.Tensor] = None


def _flatten_optimizer(name: str, sd: dict, tensors: dict[str, torch.Tensor]) -> dict:
    state_meta = {}
    for idx, st in sd["state"].items():
        entry = {}
        for k, v in st.items():
            if isinstance(v, torch.Tensor):
                key = f"optim/{name}/{idx}/{k}"
                tensors[key] = v
                entry[k] = {"tensor": key}
            else:
                entry[k] = v
        state_meta[str(idx)] = entry
    groups = [{k: (list(v) if isinstance(v, tuple) else v) for k, v in g.items()} for g in sd["param_groups"]]
    return {"state": state_meta, "param_groups": groups}


def _unflatten_optimizer(meta: dict, tensors: dict[str, torch.Tensor]) -> dict:
    state = {}
    for idx, entry in meta["state"].items():
        state[int(idx)] = {k: (tensors[v["tensor"]] if isinstance(v, dict) and "tensor" in v else v) for k, v in entry.items()}
    groups = [{k: (tuple(v) if k == "betas" else v) for k, v in g.items()} for g in meta["param_groups"]]
    return {"state": state, "param_groups": groups}


def encode(ckpt: Checkpoint) -> bytes:
    tensors: dict[str, torch.Tensor] = {}
    for k, v in ckpt.generator_state.items():
        tensors[f"generator/{k}"] = v
    if ckpt.discriminator_state is not None:
        for k, v in ckpt.discriminator_state.items():
            tensors[f"discriminator/{k}"] = v
    optim = {name: _flatten_optimizer(name, sd, tensors) for name, sd in ckpt.optimizer_states.items()}
    if ckpt.torch_rng is not None:
        tensors["rng/torch"] = ckpt.torch_rng
    rng = dict(ckpt.rng)
    if "perm" in rng:
        tensors["rng/perm"] = torch.as_tensor(np.asarray(rng.pop("perm"), dtype=np.int64))

    index = []
    blobs = []
    offset = 0
    for name, t in sorted(tensors.items()):
        t = t.detach().cpu().contiguous()
        if t.dtype not in _DTYPES:
            raise CheckpointError(f"unsupported dtype {t.dtype} for {name}")
        raw = t.numpy().astype(t.numpy().dtype.newbyteorder("<"), copy=False).tobytes()
        index.append({"name": name, "dtype": _DTYPES[t.dtype], "shape": list(t.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)

    header = {
        "version": FORMAT_VERSION,
        "iteration": ckpt.iteration,
        "config": ckpt.config,
        "config_digest": ckpt.config_digest,
        "generator_spec": ckpt.generator_spec,
        "discriminator_spec": ckpt.discriminator_spec,
        "has_discriminator": ckpt.discriminator_state is not None,
        "optimizers": optim,
        "rng": rng,
        "tensors": index,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(hbytes)) + hbytes + b"".join(blobs)


def decode(data: bytes) -> Checkpoint:
    if data[:8] != MAGIC:
        raise CheckpointError("not a despec checkpoint (bad magic)")
    version, hlen = struct.unpack("<IQ", data[8:20])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {version}, expected {FORMAT_VERSION}")
    header = json.loads(data[20 : 20 + hlen])
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint header version {header.get('version')}, expected {FORMAT_VERSION}")
    base = 20 + hlen
    tensors: dict[str, torch.Tensor] = {}
    for item in header["tensors"]:
        start = base + item["offset"]
        buf = data[start : start + item["nbytes"]]
        if len(buf) != item["nbytes"]:
            raise CheckpointError(f"truncated checkpoint at tensor {item['name']}")
        arr = np.frombuffer(buf, dtype=np.dtype(item["dtype"]).newbyteorder("<")).reshape(item["shape"])
        tensors[item["name"]] = torch.from_numpy(arr.astype(np.dtype(item["dtype"]), copy=True))

    def section(prefix):
        n = len(prefix)
        return {k[n:]: v for k, v in tensors.items() if k.startswith(prefix)}

    rng = dict(header["rng"])
    if "rng/perm" in tensors:
        rng["perm"] = tensors["rng/perm"].numpy().tolist()
    return Checkpoint(
        iteration=header["iteration"],
        config=header["config"],
        config_digest=header["config_digest"],
        generator_spec=header["generator_spec"],
        generator_state=section("generator/"),
        optimizer_states={k: _unflatten_optimizer(v, tensors) for k, v in header["optimizers"].items()},
        discriminator_spec=header["discriminator_spec"],
        discriminator_state=section("discriminator/") if header["has_discriminator"] else None,
        rng=rng,
        torch_rng=tensors.get("rng/torch"),
    )


def checkpoint_save(ckpt: Checkpoint, path: str | os.PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode(ckpt))
    os.replace(tmp, path)


def checkpoint_load(path: str | os.PathLike, expected_digest: Optional[str] = None) -> Checkpoint:
    ckpt = decode(Path(path).read_bytes())
    if expected_digest is not None and ckpt.config_digest != expected_digest:
        warnings.warn(
            f"{path}: checkpoint config digest {ckpt.config_digest[:12]} differs from {expected_digest[:12]}",
            stacklevel=2,
        )
    return ckpt
