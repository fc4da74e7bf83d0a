"""Training, early stopping, checkpointing, and fine-tuning."""

from __future__ import annotations

import copy
import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader

from .config import TrainConfig
from .data import (
    SegmentationFrames,
    labeled_items,
    read_manifest,
    resolve_input_resolution,
)
from .errors import ConfigError
from .models import build_model, freeze_pooled_batchnorm


def default_device() -> torch.device:
    return torch.device("cuda" if torch.cuda.is_available() else "cpu")


def _epoch_pass(model, loader, loss_fn, device, optimizer=None) -> float:
    total, count = 0.0, 0
    for images, targets in loader:
        images = images.to(device)
        targets = targets.to(device)
        logits = model(images)
        loss = loss_fn(logits, targets)
        if optimizer is not None:
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        total += float(loss.detach()) * images.shape[0]
        count += images.shape[0]
    return total / max(count, 1)


def _val_pass(model, loader, loss_fn, device) -> tuple[float, float]:
    """Mean loss and mean per-frame dice at the 0.5 threshold."""
    total, dice_total, count = 0.0, 0.0, 0
    for images, targets in loader:
        images = images.to(device)
        targets = targets.to(device)
        logits = model(images)
        total += float(loss_fn(logits, targets)) * images.shape[0]
        pred = (torch.sigmoid(logits) >= 0.5).cpu().numpy()
        gt = (targets >= 0.5).cpu().numpy()
        for b in range(images.shape[0]):
            dice_total += dice_score(pred[b], gt[b])
        count += images.shape[0]
    return total / max(count, 1), dice_total / max(count, 1)


def _run_training(model, cfg: TrainConfig, train_ds, val_ds, epochs: int,
                  log: list[dict]) -> dict:
    torch.manual_seed(cfg.seed)
    device = default_device()
    model.to(device)
    loss_fn = nn.BCEWithLogitsLoss()
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    train_loader = DataLoader(train_ds, batch_size=cfg.batch_size, shuffle=True,
                              generator=torch.Generator().manual_seed(cfg.seed))
    val_loader = DataLoader(val_ds, batch_size=cfg.batch_size)

    # globally pooled norm layers cannot take statistics from a 1-sample
    # batch, which appears when the dataset size leaves a remainder of one
    single_sample_batches = (cfg.batch_size == 1
                             or len(train_ds) % cfg.batch_size == 1)
    best_loss = float("inf")
    best_state = copy.deepcopy(model.state_dict())
    best_epoch = -1
    stale = 0
    for epoch in range(epochs):
        train_ds.set_epoch(epoch)
        model.train()
        if single_sample_batches:
            freeze_pooled_batchnorm(model)
        train_loss = _epoch_pass(model, train_loader, loss_fn, device,
                                 optimizer)
        model.eval()
        with torch.no_grad():
            val_loss, val_dice = _val_pass(model, val_loader, loss_fn, device)
        log.append({"epoch": epoch, "train_loss": train_loss,
                    "val_loss": val_loss, "val_dice": val_dice})
        if val_loss < best_loss:
            best_loss = val_loss
            best_state = copy.deepcopy(model.state_dict())
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.load_state_dict(best_state)
    model.cpu()  # checkpoints store host tensors regardless of train device
    return {"best_epoch": best_epoch, "best_val_loss": best_loss,
            "epochs_run": len(log)}


def save_checkpoint(path: str | Path, model, cfg: TrainConfig,
                    input_resolution: tuple[int, int], summary: dict,
                    log: list[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"state_dict": model.state_dict(),
                "cfg": cfg.to_json(),
                "input_resolution": list(input_resolution)}, path)
    sidecar = {
        "cfg": cfg.to_json(),
        "cfg_sha256": cfg.content_hash(),
        "input_resolution": list(input_resolution),
        **summary,
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")
    path.with_suffix(".log.json").write_text(json.dumps(log, indent=2) + "\n")
    return path


def load_checkpoint(path: str | Path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no checkpoint at {path}")
    blob = torch.load(path, map_location="cpu", weights_only=False)
    cfg = TrainConfig.from_json(blob["cfg"])
    model = build_model(cfg.model, len(cfg.classes), pretrained=False)
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, cfg, tuple(blob["input_resolution"])


def train(root: str | Path, split: dict, cfg: TrainConfig,
          out: str | Path) -> Path:
    """Fit one fold and write the checkpoint.

    `split` holds video-id lists under "train" and "val", in the shape the
    splits.json folds use.
    """
    manifest = read_manifest(root)
    train_items = labeled_items(root, list(split["train"]), manifest)
    if not train_items:
        raise ConfigError("training split has no labeled frames")
    val_items = labeled_items(root, list(split.get("val", [])), manifest)
    if not val_items:
        val_items = train_items  # overfit runs validate on the train frame

    size = resolve_input_resolution(
        cfg, manifest, list(split["train"]) + list(split.get("val", [])))
    train_ds = SegmentationFrames(root, train_items, cfg, size, augment=True)
    val_ds = SegmentationFrames(root, val_items, cfg, size)

    # seed before construction so weight init is part of the reproducible run
    torch.manual_seed(cfg.seed)
    model = build_model(cfg.model, len(cfg.classes), cfg.pretrained)
    log: list[dict] = []
    start = time.perf_counter()
    summary = _run_training(model, cfg, train_ds, val_ds, cfg.epochs, log)
    summary["train_seconds"] = round(time.perf_counter() - start, 3)
    summary["n_train_frames"] = len(train_items)
    summary["n_val_frames"] = len(val_items)
    return save_checkpoint(out, model, cfg, size, summary, log)


def fine_tune(checkpoint: str | Path, root: str | Path, split: dict,
              out: str | Path, epochs: int = 25, **overrides) -> Path:
    """Continue training an existing checkpoint on another dataset.

    Zero epochs is allowed and copies the checkpoint unchanged, which gives
    a clean "before" point for before/after comparisons.
    """
    if epochs < 0 or epochs > 50:
        raise ConfigError("fine-tune epochs must lie in [0, 50]")
    model, cfg, size = load_checkpoint(checkpoint)
    if overrides:
        cfg = replace(cfg, **overrides)

    manifest = read_manifest(root)
    train_items = labeled_items(root, list(split["train"]), manifest)
    if epochs > 0 and not train_items:
        raise ConfigError("fine-tuning split has no labeled frames")
    val_items = labeled_items(root, list(split.get("val", [])), manifest)
    if not val_items:
        val_items = train_items

    log: list[dict] = []
    summary = {"best_epoch": -1, "best_val_loss": None, "epochs_run": 0}
    start = time.perf_counter()
    if epochs > 0:
        train_ds = SegmentationFrames(root, train_items, cfg, size, augment=True)
        val_ds = SegmentationFrames(root, val_items, cfg, size)
        summary = _run_training(model, cfg, train_ds, val_ds, epochs, log)
    summary["train_seconds"] = round(time.perf_counter() - start, 3)
    summary["fine_tuned_from"] = str(checkpoint)
    summary["fine_tune_epochs"] = epochs
    summary["fine_tune_videos"] = sorted(split["train"])
    return save_checkpoint(out, model, cfg, size, summary, log)


def dice_score(pred: np.ndarray, gt: np.ndarray) -> float:
    pred = pred.astype(bool)
    gt = gt.astype(bool)
    denom = int(pred.sum()) + int(gt.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((pred & gt).sum()) / denom
