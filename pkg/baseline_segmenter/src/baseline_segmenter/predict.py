"""Inference over dataset videos, written in the evaluator's layout."""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .data import load_frame, read_manifest
from .errors import ConfigError
from .train import default_device, load_checkpoint

PROB_SCALE = 65535  # probabilities persist as 16-bit grayscale PNGs


def _write_probability(path: Path, prob: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    scaled = np.round(prob * PROB_SCALE).astype(np.uint16)
    Image.fromarray(scaled).save(path)  # uint16 maps to 16-bit grayscale


def _write_mask(path: Path, mask: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8)).save(path)


def predict_masks(checkpoint: str | Path, root: str | Path,
                  video_ids: list[str], out_dir: str | Path,
                  binarize_tau: float = 0.5) -> dict:
    """Run a checkpoint over whole videos.

    Writes, per class and frame, a binary mask under masks/ and the raw
    probability map under prob/; either subtree is a valid prediction
    directory for the dataset evaluator. Returns the run metadata, which is
    also saved as run.json.
    """
    if not 0.0 < binarize_tau < 1.0:
        raise ConfigError("binarize_tau must lie in (0, 1)")
    model, cfg, size = load_checkpoint(checkpoint)
    manifest = read_manifest(root)
    out_dir = Path(out_dir)

    aspect = size[0] / size[1]
    for vid in video_ids:
        if vid not in manifest:
            raise ConfigError(f"video {vid!r} not present in the manifest")
        ew, eh = manifest[vid]["eval_resolution"]
        if abs(ew / eh - aspect) > 0.01 * aspect:
            raise ConfigError(
                f"video {vid!r} evaluates at {ew}x{eh} but the checkpoint "
                f"was trained at {size[0]}x{size[1]}; aspect ratios differ")

    device = default_device()
    model.to(device)
    n_frames = 0
    start = time.perf_counter()
    with torch.no_grad():
        for vid in video_ids:
            for idx in range(manifest[vid]["n_frames"]):
                frame = load_frame(root, vid, idx, size)
                image = torch.from_numpy(frame)[None].repeat(3, 1, 1)[None]
                prob = torch.sigmoid(model(image.to(device)))[0].cpu().numpy()
                for channel, cls in enumerate(cfg.classes):
                    name = f"{idx:06}.png"
                    _write_probability(
                        out_dir / "prob" / cls / vid / name, prob[channel])
                    _write_mask(out_dir / "masks" / cls / vid / name,
                                prob[channel] >= binarize_tau)
                n_frames += 1
    elapsed = time.perf_counter() - start

    run = {
        "checkpoint": str(checkpoint),
        "cfg_sha256": cfg.content_hash(),
        "videos": sorted(video_ids),
        "n_frames": n_frames,
        "binarize_tau": binarize_tau,
        "input_resolution": list(size),
        "frames_per_second": round(n_frames / elapsed, 2) if elapsed else None,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run.json").write_text(json.dumps(run, indent=2) + "\n")
    return run
