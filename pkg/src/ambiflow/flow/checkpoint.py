"""Deterministic, bit-exact checkpoint files (``"format": "checkpoint.v1"``).

Plain JSON text: float64 values serialize through Python's shortest
round-trip repr, so save -> load -> save reproduces the file byte for byte.
The meta block carries the flow configuration, permutations, pose
normalization constants, and the resolved config hash.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..diffcore import Tensor

CHECKPOINT_FORMAT = "checkpoint.v1"

__all__ = ["CHECKPOINT_FORMAT", "save_checkpoint", "load_checkpoint"]


def save_checkpoint(path, params: dict[str, Tensor], meta: dict) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "meta": meta,
        "params": {
            name: {"shape": list(t.shape), "data": t.data.reshape(-1).tolist()}
            for name, t in sorted(params.items())
        },
    }
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(text + "\n")
    tmp.replace(path)


def load_checkpoint(path) -> tuple[dict[str, Tensor], dict]:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {payload.get('format')!r}")
    params = {
        name: Tensor(np.array(entry["data"], dtype=np.float64).reshape(entry["shape"]),
                     requires_grad=True, name=name)
        for name, entry in payload["params"].items()
    }
    return params, payload["meta"]
