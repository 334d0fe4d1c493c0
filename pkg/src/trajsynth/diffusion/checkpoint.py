"""Checkpoint files.

Layout (all integers little-endian)::

    offset  size  field
    0       4     magic b"TSDM"
    4       4     uint32 format version (1)
    8       4     uint32 header length H in bytes
    12      H     UTF-8 JSON header:
                    {"denoiser": {...DenoiserConfig...},
                     "schedule": {"T", "beta_start", "beta_end"} or {"alpha": [...]},
                     "tensors": [{"name": str, "shape": [int, ...]}, ...],
                     "extra": {...}}
    12+H    ...   float32 little-endian tensor data, concatenated in header order

The tensor list covers every entry of the model's ``state_dict`` in order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from ..errors import ParseError
from .denoiser import Denoiser, DenoiserConfig
from .schedule import NoiseSchedule

MAGIC = b"TSDM"
VERSION = 1


def save_checkpoint(path, model: Denoiser, schedule: NoiseSchedule, extra: dict | None = None) -> None:
    state = model.state_dict()
    header = {
        "denoiser": model.cfg.to_dict(),
        "schedule": schedule.to_dict(),
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in state.items()],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for v in state.values():
            fh.write(v.detach().cpu().numpy().astype("<f4").tobytes())


def load_checkpoint(path) -> tuple[Denoiser, NoiseSchedule, dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ParseError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: corrupt header: {exc}") from exc
    model = Denoiser(DenoiserConfig(**header["denoiser"]))
    schedule = NoiseSchedule.from_dict(header["schedule"])
    offset = 12 + hlen
    state = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        chunk = raw[offset : offset + 4 * count]
        if len(chunk) != 4 * count:
            raise ParseError(f"{path}: truncated tensor {entry['name']}")
        arr = np.frombuffer(chunk, dtype="<f4").reshape(entry["shape"])
        state[entry["name"]] = torch.from_numpy(arr.astype(np.float32))
        offset += 4 * count
    model.load_state_dict(state)
    model.eval()
    return model, schedule, header.get("extra", {})
