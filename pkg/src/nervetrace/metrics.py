"""Detection and segmentation scoring.

Protocol, applied per nerve class: resize every mask to the video's
evaluation resolution (width 256), drop predicted components smaller than a
per-class minimum area, classify each frame as TP/FP/FN/TN at one or more
IoU thresholds, and compute dice three ways:

    all_videos       every evaluable frame of every video
    class_videos     every evaluable frame, class-matching videos only
    positive_frames  structure-present frames of class-matching videos

A frame with empty ground truth and an empty surviving prediction scores
iou = dice = 1.0. Per-video numbers are frame means; the dataset aggregate
is the unweighted mean +/- population SD across videos.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import cv2
import numpy as np
from PIL import Image

from .errors import EmptyReportError, EmptyVideoError, ParamError
from .geometry import as_bool_mask, require_same_shape

DEFAULT_IOU_THRESHOLDS = (0.25, 0.50)
DEFAULT_MIN_AREA = {"scbp": 3240, "isc": 914}
EVAL_WIDTH = 256
MIN_AREA_FRACTION = 0.2
PR_TAUS = tuple(np.round(np.arange(0.05, 0.951, 0.05), 2).tolist())


class DetectionOutcome(enum.Enum):
    TRUE_POSITIVE = "true_positive"
    FALSE_POSITIVE = "false_positive"
    FALSE_NEGATIVE = "false_negative"
    TRUE_NEGATIVE = "true_negative"


class DiceVariant(enum.Enum):
    ALL_VIDEOS = "all_videos"
    CLASS_VIDEOS = "class_videos"
    POSITIVE_FRAMES = "positive_frames"


@dataclass(frozen=True)
class MetricsConfig:
    iou_thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS
    min_area: Mapping[str, int] = field(
        default_factory=lambda: dict(DEFAULT_MIN_AREA))
    eval_width: int = EVAL_WIDTH

    def __post_init__(self):
        for t in self.iou_thresholds:
            if not 0.0 < t < 1.0:
                raise ParamError(f"IoU threshold {t} outside (0, 1)")
        for cls, area in self.min_area.items():
            if area <= 0:
                raise ParamError(f"min_area for {cls!r} must be > 0")


# -- mask-level primitives ------------------------------------------------

def normalize_resolution(img: np.ndarray, target: tuple[int, int],
                         *, is_mask: bool) -> np.ndarray:
    """Resize to (width, height). Masks go nearest-neighbour and return
    strictly binary; frames interpolate bilinearly."""
    w, h = target
    if is_mask:
        mask = as_bool_mask(img)
        if mask.shape == (h, w):
            return mask
        resized = cv2.resize(mask.astype(np.uint8), (w, h),
                             interpolation=cv2.INTER_NEAREST)
        return resized > 0
    img = np.asarray(img)
    if img.shape[:2] == (h, w):
        return img
    return cv2.resize(img, (w, h), interpolation=cv2.INTER_LINEAR)


def iou(a: np.ndarray, b: np.ndarray) -> float:
    a, b = as_bool_mask(a), as_bool_mask(b)
    require_same_shape(a, b, "masks")
    inter = int(np.logical_and(a, b).sum())
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    return inter / union


def dice(a: np.ndarray, b: np.ndarray) -> float:
    a, b = as_bool_mask(a), as_bool_mask(b)
    require_same_shape(a, b, "masks")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2 * int(np.logical_and(a, b).sum()) / total


def filter_small_components(mask: np.ndarray, min_area: int) -> np.ndarray:
    """Drop 8-connected components with strictly fewer than min_area pixels.
    Components exactly at min_area survive."""
    if min_area < 0:
        raise ParamError("min_area must be >= 0")
    mask = as_bool_mask(mask)
    if min_area <= 1 or not mask.any():
        return mask.copy()
    n, labels = cv2.connectedComponents(mask.astype(np.uint8), connectivity=8)
    counts = np.bincount(labels.ravel(), minlength=n)
    keep = counts >= min_area
    keep[0] = False  # background label
    return keep[labels]


def classify_frame(pred: np.ndarray, gt: np.ndarray, t: float,
                   min_area: int) -> DetectionOutcome:
    """Single detection verdict for one frame. The prediction is min-area
    filtered first; a surviving prediction that misses the IoU bar counts
    as a false positive, not a miss."""
    pred = filter_small_components(pred, min_area)
    gt = as_bool_mask(gt)
    require_same_shape(pred, gt, "masks")
    gt_present = bool(gt.any())
    pred_present = bool(pred.any())
    if not gt_present:
        return (DetectionOutcome.FALSE_POSITIVE if pred_present
                else DetectionOutcome.TRUE_NEGATIVE)
    if not pred_present:
        return DetectionOutcome.FALSE_NEGATIVE
    if iou(pred, gt) >= t:
        return DetectionOutcome.TRUE_POSITIVE
    return DetectionOutcome.FALSE_POSITIVE


def derive_min_area(gt_areas: Sequence[int]) -> int:
    """Minimum-area cutoff from data: 20% of the median structure area,
    rounded to the nearest pixel."""
    if not len(gt_areas):
        raise EmptyReportError("no ground-truth areas to derive a cutoff from")
    return int(round(MIN_AREA_FRACTION * float(np.median(gt_areas))))


# -- per-video scoring ----------------------------------------------------

@dataclass(frozen=True)
class FrameEval:
    """One frame ready for scoring, already at the evaluation resolution.
    pred None means the model emitted nothing; gt None means the structure
    is absent."""

    pred: np.ndarray | None
    gt: np.ndarray | None
    status: str = "positive"


@dataclass
class DetectionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def add(self, outcome: DetectionOutcome) -> None:
        if outcome is DetectionOutcome.TRUE_POSITIVE:
            self.tp += 1
        elif outcome is DetectionOutcome.FALSE_POSITIVE:
            self.fp += 1
        elif outcome is DetectionOutcome.FALSE_NEGATIVE:
            self.fn += 1
        else:
            self.tn += 1

    def rates(self) -> tuple[float, float, float]:
        """(precision, recall, f1). A video where nothing was there and
        nothing was predicted counts as perfect; otherwise ratios with an
        empty denominator fall to 0."""
        if self.tp == 0 and self.fp == 0 and self.fn == 0:
            return 1.0, 1.0, 1.0
        precision = self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0
        recall = self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else 0.0)
        return precision, recall, f1

    def to_json(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass
class VideoMetrics:
    n_frames: int
    counts: dict[float, DetectionCounts]
    precision: dict[float, float]
    recall: dict[float, float]
    f1: dict[float, float]
    dice_all: float
    dice_positive: float | None  # None when the video has no positive frames


def _frame_shape(frame: FrameEval) -> tuple[int, int] | None:
    if frame.gt is not None:
        return frame.gt.shape
    if frame.pred is not None:
        return frame.pred.shape
    return None


def _materialize(frame: FrameEval) -> tuple[np.ndarray, np.ndarray]:
    shape = _frame_shape(frame) or (1, 1)
    pred = frame.pred if frame.pred is not None else np.zeros(shape, bool)
    gt = frame.gt if frame.gt is not None else np.zeros(shape, bool)
    return as_bool_mask(pred), as_bool_mask(gt)


def evaluate_video(frames: Sequence[FrameEval], cfg: MetricsConfig,
                   min_area: int) -> VideoMetrics:
    evaluable = [f for f in frames if f.status != "discarded"]
    if not evaluable:
        raise EmptyVideoError("video has no evaluable frames")

    counts = {t: DetectionCounts() for t in cfg.iou_thresholds}
    dice_values: list[float] = []
    dice_positive: list[float] = []
    for frame in evaluable:
        pred, gt = _materialize(frame)
        filtered = filter_small_components(pred, min_area)
        for t in cfg.iou_thresholds:
            counts[t].add(classify_frame(pred, gt, t, min_area))
        d = dice(filtered, gt)
        dice_values.append(d)
        if gt.any():
            dice_positive.append(d)

    precision, recall, f1 = {}, {}, {}
    for t, c in counts.items():
        precision[t], recall[t], f1[t] = c.rates()
    return VideoMetrics(
        n_frames=len(evaluable),
        counts=counts,
        precision=precision, recall=recall, f1=f1,
        dice_all=float(np.mean(dice_values)),
        dice_positive=float(np.mean(dice_positive)) if dice_positive else None,
    )


# -- aggregation ----------------------------------------------------------

def mean_sd(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


@dataclass
class VideoReport:
    """Scores for one video under one nerve class."""

    video_id: str
    plexus: str            # the class being scored
    is_class_video: bool
    metrics: VideoMetrics

    def to_json(self) -> dict:
        m = self.metrics
        detection = {
            f"{t:g}": {**m.counts[t].to_json(), "precision": m.precision[t],
                       "recall": m.recall[t], "f1": m.f1[t]}
            for t in sorted(m.counts)
        }
        return {
            "video_id": self.video_id,
            "plexus": self.plexus,
            "is_class_video": self.is_class_video,
            "n_frames": m.n_frames,
            "detection": detection,
            "dice": {
                "all_videos": m.dice_all,
                "class_videos": m.dice_all if self.is_class_video else None,
                "positive_frames": m.dice_positive if self.is_class_video else None,
            },
        }


def aggregate(per_video: Sequence[VideoReport], cfg: MetricsConfig) -> dict:
    """Unweighted mean +/- population SD across videos. Detection rates and
    the class-scoped dice variants average over class-matching videos only;
    the all-videos dice spans the full pool."""
    if not per_video:
        raise EmptyReportError("nothing to aggregate")
    class_videos = [v for v in per_video if v.is_class_video]
    out: dict = {"n_videos": len(per_video), "n_class_videos": len(class_videos)}

    detection = {}
    for t in cfg.iou_thresholds:
        stats = {}
        for name in ("precision", "recall", "f1"):
            values = [getattr(v.metrics, name)[t] for v in class_videos]
            if values:
                m, sd = mean_sd(values)
                stats[name] = {"mean": m, "sd": sd}
            else:
                stats[name] = None
        detection[f"{t:g}"] = stats
    out["detection"] = detection

    dice_stats: dict = {}
    m, sd = mean_sd([v.metrics.dice_all for v in per_video])
    dice_stats["all_videos"] = {"mean": m, "sd": sd}
    for variant, values in (
        ("class_videos", [v.metrics.dice_all for v in class_videos]),
        ("positive_frames", [v.metrics.dice_positive for v in class_videos
                             if v.metrics.dice_positive is not None]),
    ):
        if values:
            m, sd = mean_sd(values)
            dice_stats[variant] = {"mean": m, "sd": sd}
        else:
            dice_stats[variant] = None
    out["dice"] = dice_stats
    return out


# -- precision-recall sweep ----------------------------------------------

@dataclass(frozen=True)
class PrPoint:
    tau: float
    precision: float
    recall: float


def pr_curve(prob_maps: Sequence[np.ndarray], gts: Sequence[np.ndarray],
             t: float, min_area: int,
             taus: Sequence[float] = PR_TAUS) -> list[PrPoint]:
    """Sweep the binarization threshold and pool detection counts over the
    whole frame set at one IoU threshold."""
    if len(prob_maps) != len(gts):
        raise ParamError("probability maps and ground truths must align")
    points = []
    for tau in taus:
        counts = DetectionCounts()
        for prob, gt in zip(prob_maps, gts):
            pred = np.asarray(prob, dtype=np.float64) >= tau
            counts.add(classify_frame(pred, gt, t, min_area))
        precision, recall, _ = counts.rates()
        points.append(PrPoint(tau=float(tau), precision=precision, recall=recall))
    return points


def write_pr_csv(points: Sequence[PrPoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau", "precision", "recall"])
        for p in points:
            writer.writerow([f"{p.tau:g}", f"{p.precision:.6f}", f"{p.recall:.6f}"])


# -- dataset-level driver -------------------------------------------------

def _read_probability(path: Path) -> np.ndarray | None:
    """Prediction PNG as a probability map in [0, 1]. 16-bit files carry
    graded scores, 8-bit files are effectively binary."""
    if not path.exists():
        return None
    img = Image.open(path)
    arr = np.asarray(img)
    if arr.dtype == np.uint16 or img.mode in ("I", "I;16"):
        return arr.astype(np.float64) / 65535.0
    return arr.astype(np.float64) / 255.0


def _pred_file(pred_dir: Path, plexus: str, video_id: str, idx: int) -> Path:
    # two-class runs keep per-class subdirectories; single-class runs put
    # video directories at the top level
    classed = pred_dir / plexus / video_id / f"{idx:06}.png"
    if (pred_dir / plexus).is_dir():
        return classed
    return pred_dir / video_id / f"{idx:06}.png"


def evaluate_dataset(store, pred_dir: str | Path,
                     classes: Sequence[str] = ("scbp", "isc"),
                     video_ids: Sequence[str] | None = None,
                     cfg: MetricsConfig | None = None,
                     with_pr: bool = True) -> dict:
    """Score a prediction run against stored ground truth and return the
    report structure (config, per_video rows, per-class aggregates, and
    PR sweep points when requested)."""
    cfg = cfg or MetricsConfig()
    pred_dir = Path(pred_dir)
    videos = store.videos()
    if video_ids is not None:
        wanted = set(video_ids)
        videos = [v for v in videos if v.id in wanted]
    if not videos:
        raise EmptyReportError("no videos selected for evaluation")

    per_video: list[VideoReport] = []
    aggregates: dict = {}
    curves: dict = {}
    for plexus in classes:
        min_area = cfg.min_area[plexus]
        rows: list[VideoReport] = []
        pooled_probs: list[np.ndarray] = []
        pooled_gts: list[np.ndarray] = []
        for video in videos:
            target = tuple(video.eval_resolution)
            frames = []
            for idx in store.evaluable_frames(video.id):
                label = store.labels(video.id)[idx]
                gt = None
                if label.status == "positive" and video.plexus == plexus:
                    gt = normalize_resolution(
                        store.read_ground_truth(video.id, idx), target, is_mask=True)
                prob = _read_probability(_pred_file(pred_dir, plexus, video.id, idx))
                if prob is None:
                    pred = None
                    prob_n = np.zeros((target[1], target[0]))
                else:
                    prob_n = normalize_resolution(prob, target, is_mask=False)
                    pred = prob_n >= 0.5
                frames.append(FrameEval(pred=pred, gt=gt, status=label.status))
                if with_pr:
                    pooled_probs.append(prob_n)
                    pooled_gts.append(gt if gt is not None
                                      else np.zeros((target[1], target[0]), bool))
            if not frames:
                continue
            metrics = evaluate_video(frames, cfg, min_area)
            rows.append(VideoReport(video_id=video.id, plexus=plexus,
                                    is_class_video=video.plexus == plexus,
                                    metrics=metrics))
        if rows:
            aggregates[plexus] = aggregate(rows, cfg)
            per_video.extend(rows)
        if with_pr and pooled_probs:
            curves[plexus] = {
                f"{t:g}": pr_curve(pooled_probs, pooled_gts, t, min_area)
                for t in cfg.iou_thresholds
            }

    if not per_video:
        raise EmptyReportError("no evaluable frames in the selected videos")
    return {
        "config": {
            "iou_thresholds": list(cfg.iou_thresholds),
            "min_area": dict(cfg.min_area),
            "eval_width": cfg.eval_width,
            "classes": list(classes),
            "pred_dir": str(pred_dir),
        },
        "per_video": [r.to_json() for r in per_video],
        "aggregate": aggregates,
        "pr": curves,
    }


def write_report(report: dict, out_path: str | Path) -> list[Path]:
    """Write report.json plus one PR CSV per (class, IoU threshold).
    Returns every path written."""
    out_path = Path(out_path)
    curves = report.pop("pr", {})
    written = [out_path]
    out_path.write_text(json.dumps(report, indent=2) + "\n")
    for plexus, per_threshold in curves.items():
        for t, points in per_threshold.items():
            pct = int(round(float(t) * 100))
            csv_path = out_path.with_name(
                f"{out_path.stem}_pr_{plexus}_iou{pct}.csv")
            write_pr_csv(points, csv_path)
            written.append(csv_path)
    return written
