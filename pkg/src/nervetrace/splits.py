"""Stratified k-fold split generation at video granularity.

Strata are the cross-product of acquisition side, gain setting, and subject
sex. Each stratum is shuffled once by seed and dealt into k test groups;
fold i tests on group i and divides the rest 61:19 into train and val.
Videos without the target structure never leave the train side.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParamError
from .store import VideoRecord

STRATA_CASCADE = (
    ("side", "gain", "sex"),
    ("side", "gain"),
    ("side",),
    (),
)


@dataclass(frozen=True)
class SplitSpec:
    k: int = 5
    proportions: tuple[int, int, int] = (61, 19, 20)  # train, val, test percent
    strata_keys: tuple[str, ...] = ("side", "gain", "sex")
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ParamError("k must be >= 2")
        if sum(self.proportions) != 100:
            raise ParamError("proportions must sum to 100")


@dataclass(frozen=True)
class Fold:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]

    def to_json(self) -> dict:
        return {"train": sorted(self.train), "val": sorted(self.val),
                "test": sorted(self.test)}


def _stratum_key(video: VideoRecord, keys: Sequence[str]) -> tuple:
    values = []
    for key in keys:
        if key == "sex":
            values.append(video.patient.sex if video.patient else "unknown")
        else:
            values.append(getattr(video, key))
    return tuple(values)


def _choose_strata(videos: Sequence[VideoRecord], spec: SplitSpec) -> dict:
    """Group by the finest stratification whose strata all hold at least k
    videos, falling back through coarser key sets with a warning."""
    start = STRATA_CASCADE.index(tuple(spec.strata_keys)) \
        if tuple(spec.strata_keys) in STRATA_CASCADE else 0
    for keys in STRATA_CASCADE[start:]:
        strata: dict[tuple, list[VideoRecord]] = {}
        for v in videos:
            strata.setdefault(_stratum_key(v, keys), []).append(v)
        if all(len(group) >= spec.k for group in strata.values()):
            if keys != tuple(spec.strata_keys):
                warnings.warn(
                    f"strata over {spec.strata_keys} too small for k={spec.k}; "
                    f"using {keys or ('<single stratum>',)}", stacklevel=3)
            return strata
    warnings.warn(
        f"fewer than k={spec.k} eligible videos; some test sets will be empty",
        stacklevel=3)
    return strata


def _largest_remainder(quotas: Sequence[float], total: int) -> list[int]:
    """Integer apportionment: floor everything, then hand the remaining
    seats to the largest fractional parts (ties to the lower index)."""
    floors = [math.floor(q) for q in quotas]
    remainders = [q - f for q, f in zip(quotas, floors)]
    seats = total - sum(floors)
    order = sorted(range(len(quotas)), key=lambda i: (-remainders[i], i))
    for i in order[:max(seats, 0)]:
        floors[i] += 1
    return floors


def stratified_kfold(videos: Sequence[VideoRecord], spec: SplitSpec) -> list[Fold]:
    """k folds of disjoint test sets covering every eligible video exactly
    once, with per-stratum balance and train/val at the configured ratio."""
    always_train = sorted(v.id for v in videos if v.plexus == "none")
    eligible = [v for v in videos if v.plexus != "none"]

    strata = _choose_strata(eligible, spec)
    rng = np.random.default_rng(spec.seed)
    shuffled: dict[tuple, list[str]] = {}
    for key in sorted(strata):  # fixed iteration order keeps the seed meaningful
        ids = sorted(v.id for v in strata[key])
        shuffled[key] = [ids[i] for i in rng.permutation(len(ids))]

    # Deal test groups. Whole rounds go fold by fold; leftover videos land on
    # whichever fold currently has the smallest test set, which keeps the
    # global test sizes within one video of each other.
    test_groups: dict[tuple, list[list[str]]] = {}
    fold_sizes = [0] * spec.k
    for key in sorted(shuffled):
        ids = shuffled[key]
        base = len(ids) // spec.k
        groups = [ids[i * base:(i + 1) * base] for i in range(spec.k)]
        for extra in ids[base * spec.k:]:
            lightest = min(range(spec.k), key=lambda i: (fold_sizes[i] + len(groups[i]), i))
            groups[lightest].append(extra)
        for i in range(spec.k):
            fold_sizes[i] += len(groups[i])
        test_groups[key] = groups

    p_train, p_val, _ = spec.proportions
    val_share = p_val / (p_train + p_val)

    folds = []
    for i in range(spec.k):
        train: list[str] = list(always_train)
        val: list[str] = []
        test: list[str] = []
        keys = sorted(shuffled)
        remainders = []
        for key in keys:
            held_out = set(test_groups[key][i])
            test.extend(test_groups[key][i])
            remainders.append([vid for vid in shuffled[key] if vid not in held_out])
        # two-level apportionment: per-stratum val quotas, but the global
        # val count is pinned first so fold-level proportions stay within
        # one video of the target
        quotas = [val_share * len(rem) for rem in remainders]
        total_val = int(round(sum(quotas)))
        val_counts = _largest_remainder(quotas, total_val)
        for rem, n_val in zip(remainders, val_counts):
            val.extend(rem[:n_val])
            train.extend(rem[n_val:])
        folds.append(Fold(train=tuple(train), val=tuple(val), test=tuple(test)))
    return folds


def write_splits(folds: Sequence[Fold], seed: int, path: str | Path) -> None:
    payload = {"seed": seed, "folds": [f.to_json() for f in folds]}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_splits(path: str | Path) -> tuple[int, list[Fold]]:
    payload = json.loads(Path(path).read_text())
    folds = [Fold(train=tuple(f["train"]), val=tuple(f["val"]), test=tuple(f["test"]))
             for f in payload["folds"]]
    return int(payload["seed"]), folds
