"""Run-length mask coding for the HTTP API.

A mask travels as alternating run counts over row-major pixel order, starting
with a run of zeros (possibly length 0). Counts must sum to width * height.
"""

from __future__ import annotations

import numpy as np

from .errors import MaskError
from .geometry import as_bool_mask


def encode_mask(mask: np.ndarray) -> dict:
    mask = as_bool_mask(mask)
    h, w = mask.shape
    flat = mask.ravel().astype(np.int8)
    if flat.size == 0:
        return {"width": w, "height": h, "runs": []}
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0] == 1:  # stream must open with the zero run
        runs.insert(0, 0)
    return {"width": w, "height": h, "runs": runs}


def decode_mask(payload: dict) -> np.ndarray:
    w, h = int(payload["width"]), int(payload["height"])
    runs = [int(r) for r in payload["runs"]]
    if any(r < 0 for r in runs):
        raise MaskError("run lengths must be nonnegative")
    if sum(runs) != w * h:
        raise MaskError(f"run lengths sum to {sum(runs)}, expected {w * h}")
    values = np.arange(len(runs)) % 2  # 0s first, then alternating
    flat = np.repeat(values.astype(bool), runs)
    return flat.reshape(h, w)
