"""Readers for the nervetrace on-disk dataset layout.

The layout is consumed purely through files (manifest.json, labels/*.json,
splits.json, frame and mask PNGs); nothing here imports the annotation
package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch.utils.data import Dataset

from .config import TrainConfig
from .errors import ConfigError


def read_manifest(root: str | Path) -> dict[str, dict]:
    """Video records keyed by id."""
    path = Path(root) / "manifest.json"
    if not path.exists():
        raise ConfigError(f"{root} is not a dataset root (no manifest.json)")
    manifest = json.loads(path.read_text())
    return {v["id"]: v for v in manifest["videos"]}


def read_labels(root: str | Path, video_id: str) -> dict[int, dict]:
    """Frame labels keyed by index; empty when the video has none."""
    path = Path(root) / "labels" / f"{video_id}.json"
    if not path.exists():
        return {}
    raw = json.loads(path.read_text())
    return {int(f["idx"]): f for f in raw.get("frames", [])}


def read_splits(root: str | Path) -> list[dict]:
    path = Path(root) / "splits.json"
    if not path.exists():
        raise ConfigError(f"no splits.json under {root}")
    return json.loads(path.read_text())["folds"]


def frame_path(root: str | Path, video_id: str, idx: int) -> Path:
    return Path(root) / "frames" / video_id / f"{idx:06}.png"


def mask_path(root: str | Path, video_id: str, idx: int) -> Path:
    return Path(root) / "masks" / video_id / f"{idx:06}.png"


def load_frame(root: str | Path, video_id: str, idx: int,
               size: tuple[int, int]) -> np.ndarray:
    """Grayscale frame resized to (w, h), float32 in [0, 1]."""
    img = Image.open(frame_path(root, video_id, idx)).convert("L")
    img = img.resize(size, Image.BILINEAR)
    return np.asarray(img, dtype=np.float32) / 255.0


def load_mask(root: str | Path, video_id: str, idx: int,
              size: tuple[int, int]) -> np.ndarray:
    mask = Image.open(mask_path(root, video_id, idx)).convert("L")
    mask = mask.resize(size, Image.NEAREST)
    return np.asarray(mask) > 127


@dataclass(frozen=True)
class FrameItem:
    video_id: str
    frame_idx: int
    plexus: str
    gain: str
    positive: bool


def labeled_items(root: str | Path, video_ids: list[str],
                  manifest: dict[str, dict]) -> list[FrameItem]:
    """Supervised frames for the given videos: positives carry their mask,
    negatives an empty target, discarded frames are left out entirely."""
    items = []
    for vid in video_ids:
        if vid not in manifest:
            raise ConfigError(f"video {vid!r} not present in the manifest")
        record = manifest[vid]
        for idx, label in sorted(read_labels(root, vid).items()):
            if label["status"] == "discarded":
                continue
            items.append(FrameItem(
                video_id=vid,
                frame_idx=idx,
                plexus=record["plexus"],
                gain=record["gain"],
                positive=label["status"] == "positive",
            ))
    return items


def resolve_input_resolution(cfg: TrainConfig, manifest: dict[str, dict],
                             video_ids: list[str]) -> tuple[int, int]:
    """The (w, h) the network runs at: the config override when given, else
    the videos' shared evaluation resolution."""
    if cfg.input_resolution is not None:
        return tuple(cfg.input_resolution)
    resolutions = {tuple(manifest[v]["eval_resolution"]) for v in video_ids
                   if v in manifest}
    if not resolutions:
        raise ConfigError("no videos to infer an input resolution from")
    if len(resolutions) > 1:
        raise ConfigError(
            f"videos span multiple eval resolutions {sorted(resolutions)}; "
            f"set input_resolution explicitly")
    return resolutions.pop()


class SegmentationFrames(Dataset):
    """Labeled frames as (image, target) tensor pairs.

    Images are 3xHxW (the gray channel repeated for the RGB-shaped
    backbone), targets one channel per class. Augmentation draws are a pure
    function of (seed, epoch, item index) so a rerun with the same seed sees
    the same jitter.
    """

    def __init__(self, root: str | Path, items: list[FrameItem],
                 cfg: TrainConfig, size: tuple[int, int],
                 augment: bool = False):
        self.root = Path(root)
        self.items = items
        self.cfg = cfg
        self.size = size
        self.augment = augment and cfg.augment.enabled
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, i: int):
        item = self.items[i]
        frame = load_frame(self.root, item.video_id, item.frame_idx, self.size)
        w, h = self.size
        target = np.zeros((len(self.cfg.classes), h, w), dtype=np.float32)
        if item.positive and item.plexus in self.cfg.classes:
            channel = self.cfg.classes.index(item.plexus)
            target[channel] = load_mask(
                self.root, item.video_id, item.frame_idx, self.size)

        image = torch.from_numpy(frame)[None].repeat(3, 1, 1)
        target_t = torch.from_numpy(target)
        if self.augment:
            image, target_t = self._jitter(image, target_t, item, i)
        return image, target_t

    def _jitter(self, image, target, item: FrameItem, i: int):
        import torchvision.transforms.functional as TF

        rng = np.random.default_rng((self.cfg.seed, self.epoch, i))
        a = self.cfg.augment
        if rng.random() < a.flip_probability:
            image = torch.flip(image, dims=[2])
            target = torch.flip(target, dims=[2])
        if a.rotation_degrees > 0:
            angle = float(rng.uniform(-a.rotation_degrees, a.rotation_degrees))
            image = TF.rotate(image, angle,
                              interpolation=TF.InterpolationMode.BILINEAR)
            target = TF.rotate(target, angle)
        lo, hi = a.gamma_ranges.get(item.gain, (1.0, 1.0))
        gamma = float(rng.uniform(lo, hi))
        image = image.clamp(0.0, 1.0) ** gamma
        return image, target
