"""Canonical on-disk dataset layout and its manifest/label bookkeeping.

Layout (bit-exact contract shared with every other stage):

    manifest.json
    frames/{video_id}/{idx:06}.png     8-bit grayscale
    masks/{video_id}/{idx:06}.png      0/255 ground truth
    labels/{video_id}.json             frame statuses + contour params
    sessions/{video_id}.jsonl          append-only annotation event log
    pred/{run_name}/{video_id}/...     model predictions, same file scheme
"""

from __future__ import annotations

import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from filelock import FileLock
from PIL import Image

from .contours import GacParams
from .errors import IngestError, MaskError, MetadataError
from .geometry import as_bool_mask

PLEXUSES = ("scbp", "isc", "none")
SIDES = ("left", "right")
GAINS = ("low", "medium", "high")
SEXES = ("male", "female")
STATUSES = ("positive", "negative", "discarded")
PROVENANCES = ("seed", "tracked_approved", "manual")

EVAL_WIDTH = 256
# per-machine normalization targets; anything unlisted gets the square default
EVAL_RESOLUTIONS = {"sonosite": (256, 192)}
DEFAULT_EVAL_RESOLUTION = (256, 256)

MIN_FRAME_SIDE = 64


@dataclass(frozen=True)
class PatientMeta:
    """Subject demographics recorded at acquisition time."""

    age: float
    sex: str
    height: float  # cm
    bmi: float     # kg/m^2

    def __post_init__(self):
        if not 20 <= self.age <= 80:
            raise MetadataError(f"age {self.age} outside the 20-80 inclusion range")
        if self.sex not in SEXES:
            raise MetadataError(f"sex must be one of {SEXES}")
        if self.bmi <= 0:
            raise MetadataError("bmi must be > 0")

    def to_json(self) -> dict:
        return {"age": self.age, "sex": self.sex, "height": self.height, "bmi": self.bmi}

    @classmethod
    def from_json(cls, obj: dict) -> "PatientMeta":
        return cls(age=obj["age"], sex=obj["sex"], height=obj["height"], bmi=obj["bmi"])


@dataclass(frozen=True)
class VideoRecord:
    """One ultrasound clip: frame sequence plus acquisition metadata."""

    id: str
    machine: str          # esaote / sonosite / butterfly / free-form other
    plexus: str
    side: str
    gain: str
    width: int
    height: int
    n_frames: int
    eval_resolution: tuple[int, int]
    depth_setting: str = ""
    patient: PatientMeta | None = None

    def __post_init__(self):
        if not self.id:
            raise MetadataError("video id must be nonempty")
        if not self.machine:
            raise MetadataError("machine must be nonempty")
        if self.plexus not in PLEXUSES:
            raise MetadataError(f"plexus must be one of {PLEXUSES}")
        if self.side not in SIDES:
            raise MetadataError(f"side must be one of {SIDES}")
        if self.gain not in GAINS:
            raise MetadataError(f"gain must be one of {GAINS}")
        if self.n_frames < 1:
            raise MetadataError("video must contain at least one frame")
        if self.width < MIN_FRAME_SIDE or self.height < MIN_FRAME_SIDE:
            raise MetadataError(f"frames must be at least {MIN_FRAME_SIDE} px per side")
        if self.eval_resolution[0] != EVAL_WIDTH:
            raise MetadataError(f"eval_resolution width must be {EVAL_WIDTH}")

    def to_json(self) -> dict:
        obj = {
            "id": self.id,
            "machine": self.machine,
            "plexus": self.plexus,
            "side": self.side,
            "gain": self.gain,
            "depth_setting": self.depth_setting,
            "width": self.width,
            "height": self.height,
            "n_frames": self.n_frames,
            "eval_resolution": list(self.eval_resolution),
        }
        obj["patient"] = self.patient.to_json() if self.patient else None
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "VideoRecord":
        patient = obj.get("patient")
        return cls(
            id=obj["id"],
            machine=obj["machine"],
            plexus=obj["plexus"],
            side=obj["side"],
            gain=obj["gain"],
            depth_setting=obj.get("depth_setting", ""),
            width=int(obj["width"]),
            height=int(obj["height"]),
            n_frames=int(obj["n_frames"]),
            eval_resolution=tuple(obj["eval_resolution"]),
            patient=PatientMeta.from_json(patient) if patient else None,
        )


@dataclass(frozen=True)
class FrameLabel:
    """Annotation status of one frame within a video."""

    frame_idx: int
    status: str
    provenance: str | None = None
    gac_params: GacParams | None = None

    def __post_init__(self):
        if self.status not in STATUSES:
            raise MaskError(f"status must be one of {STATUSES}")
        if self.provenance is not None and self.provenance not in PROVENANCES:
            raise MaskError(f"provenance must be one of {PROVENANCES}")

    def to_json(self) -> dict:
        obj: dict = {"idx": self.frame_idx, "status": self.status}
        if self.provenance is not None:
            obj["provenance"] = self.provenance
        if self.gac_params is not None:
            obj["gac_params"] = self.gac_params.to_json()
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "FrameLabel":
        params = obj.get("gac_params")
        return cls(
            frame_idx=int(obj["idx"]),
            status=obj["status"],
            provenance=obj.get("provenance"),
            gac_params=GacParams.from_json(params) if params else None,
        )


def default_eval_resolution(machine: str) -> tuple[int, int]:
    return EVAL_RESOLUTIONS.get(machine, DEFAULT_EVAL_RESOLUTION)


def _write_json_atomic(path: Path, obj) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _load_frames(source) -> list[np.ndarray]:
    """Decode a frame directory, video file, or in-memory array sequence into
    8-bit grayscale arrays."""
    if isinstance(source, (list, tuple)):
        frames = [_to_gray_u8(np.asarray(f)) for f in source]
    elif isinstance(source, np.ndarray) and source.ndim == 3:
        frames = [_to_gray_u8(f) for f in source]
    else:
        path = Path(source)
        if path.is_dir():
            files = sorted(
                p for p in path.iterdir()
                if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
            )
            if not files:
                raise IngestError(f"no frame images found in {path}")
            frames = [np.asarray(Image.open(p).convert("L")) for p in files]
        elif path.is_file():
            frames = _decode_video(path)
        else:
            raise IngestError(f"source {path} is neither a directory nor a file")
    if not frames:
        raise IngestError("source contains no frames")
    shape = frames[0].shape
    for i, f in enumerate(frames):
        if f.shape != shape:
            raise IngestError(
                f"frame {i} has shape {f.shape}, expected {shape} (all frames must match)"
            )
    return frames


def _decode_video(path: Path) -> list[np.ndarray]:
    import cv2

    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise IngestError(f"could not open video file {path}")
    frames = []
    while True:
        ok, frame = cap.read()
        if not ok:
            break
        if frame.ndim == 3:
            frame = cv2.cvtColor(frame, cv2.COLOR_BGR2GRAY)
        frames.append(frame.astype(np.uint8))
    cap.release()
    return frames


def _to_gray_u8(frame: np.ndarray) -> np.ndarray:
    if frame.ndim == 3:
        frame = frame.mean(axis=2)
    if frame.dtype == np.uint8:
        return frame
    arr = np.asarray(frame, dtype=np.float64)
    if arr.max() <= 1.0:
        arr = arr * 255.0
    return np.clip(np.round(arr), 0, 255).astype(np.uint8)


class DatasetStore:
    """Filesystem-backed dataset with per-video advisory write locking."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._locks: dict[str, FileLock] = {}

    # -- creation / paths -------------------------------------------------

    @classmethod
    def create(cls, root: str | Path) -> "DatasetStore":
        store = cls(root)
        store.root.mkdir(parents=True, exist_ok=True)
        for sub in ("frames", "masks", "labels", "sessions", "pred", "locks"):
            (store.root / sub).mkdir(exist_ok=True)
        if not store.manifest_path.exists():
            _write_json_atomic(store.manifest_path, {"videos": []})
        return store

    @classmethod
    def open(cls, root: str | Path) -> "DatasetStore":
        store = cls(root)
        if not store.manifest_path.exists():
            raise MetadataError(f"{store.root} is not a dataset root (no manifest.json)")
        return store

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    def frame_path(self, video_id: str, idx: int) -> Path:
        return self.root / "frames" / video_id / f"{idx:06}.png"

    def mask_path(self, video_id: str, idx: int) -> Path:
        return self.root / "masks" / video_id / f"{idx:06}.png"

    def labels_path(self, video_id: str) -> Path:
        return self.root / "labels" / f"{video_id}.json"

    def session_log_path(self, video_id: str) -> Path:
        return self.root / "sessions" / f"{video_id}.jsonl"

    def pred_path(self, run_name: str, video_id: str, idx: int) -> Path:
        return self.root / "pred" / run_name / video_id / f"{idx:06}.png"

    def video_lock(self, video_id: str) -> FileLock:
        """Advisory writer lock for one video. Instances are cached so a
        session holding the lock can reenter it through store operations.
        thread_local is off because the HTTP service acquires in a worker
        thread and releases at shutdown from another."""
        if video_id not in self._locks:
            lock_dir = self.root / "locks"
            lock_dir.mkdir(exist_ok=True)
            self._locks[video_id] = FileLock(str(lock_dir / f"{video_id}.lock"),
                                             thread_local=False)
        return self._locks[video_id]

    # -- manifest ---------------------------------------------------------

    def videos(self) -> list[VideoRecord]:
        manifest = json.loads(self.manifest_path.read_text())
        return [VideoRecord.from_json(v) for v in manifest["videos"]]

    def video_ids(self) -> list[str]:
        return [v.id for v in self.videos()]

    def video(self, video_id: str) -> VideoRecord:
        for v in self.videos():
            if v.id == video_id:
                return v
        raise KeyError(f"unknown video {video_id!r}")

    def _append_manifest(self, record: VideoRecord) -> None:
        manifest = json.loads(self.manifest_path.read_text())
        manifest["videos"].append(record.to_json())
        _write_json_atomic(self.manifest_path, manifest)

    # -- ingest -----------------------------------------------------------

    def ingest_video(self, source, *, id: str, machine: str | None = None,
                     plexus: str | None = None, side: str | None = None,
                     gain: str | None = None, depth_setting: str = "",
                     patient: PatientMeta | None = None,
                     eval_resolution: tuple[int, int] | None = None) -> VideoRecord:
        """Re-encode a source clip into the canonical layout and register it."""
        missing = [k for k, v in
                   (("machine", machine), ("plexus", plexus), ("side", side), ("gain", gain))
                   if v is None]
        if missing:
            raise MetadataError(f"missing required metadata: {', '.join(missing)}")
        if any(v.id == id for v in self.videos()):
            raise IngestError(f"video id {id!r} already ingested")

        frames = _load_frames(source)
        h, w = frames[0].shape
        record = VideoRecord(
            id=id, machine=machine, plexus=plexus, side=side, gain=gain,
            depth_setting=depth_setting, width=w, height=h, n_frames=len(frames),
            eval_resolution=tuple(eval_resolution) if eval_resolution
            else default_eval_resolution(machine),
            patient=patient,
        )
        with self.video_lock(id):
            frame_dir = self.root / "frames" / id
            frame_dir.mkdir(parents=True, exist_ok=True)
            for i, frame in enumerate(frames):
                Image.fromarray(frame, mode="L").save(frame_dir / f"{i:06}.png")
            _write_json_atomic(self.labels_path(id),
                               {"frames": [], "seed_frames": [], "tracker": "kcf"})
            self._append_manifest(record)
        return record

    # -- frames and masks -------------------------------------------------

    def read_frame(self, video_id: str, idx: int) -> np.ndarray:
        path = self.frame_path(video_id, idx)
        if not path.exists():
            raise KeyError(f"no frame {idx} for video {video_id!r}")
        return np.asarray(Image.open(path).convert("L"))

    def read_frame_bytes(self, video_id: str, idx: int) -> bytes:
        path = self.frame_path(video_id, idx)
        if not path.exists():
            raise KeyError(f"no frame {idx} for video {video_id!r}")
        return path.read_bytes()

    def write_ground_truth(self, video_id: str, frame_idx: int, mask: np.ndarray,
                           params: GacParams, provenance: str = "manual") -> None:
        """Persist a ground-truth mask and mark the frame positive.

        Re-committing a frame replaces the previous mask; the label slot is
        idempotent.
        """
        video = self.video(video_id)
        mask = as_bool_mask(mask)
        if mask.shape != (video.height, video.width):
            raise MaskError(
                f"mask shape {mask.shape} does not match video "
                f"{(video.height, video.width)}"
            )
        with self.video_lock(video_id):
            mask_dir = self.root / "masks" / video_id
            mask_dir.mkdir(parents=True, exist_ok=True)
            Image.fromarray((mask.astype(np.uint8)) * 255, mode="L").save(
                mask_dir / f"{frame_idx:06}.png")
            self._set_label(video_id, FrameLabel(frame_idx, "positive", provenance, params))

    def read_ground_truth(self, video_id: str, frame_idx: int) -> np.ndarray:
        path = self.mask_path(video_id, frame_idx)
        if not path.exists():
            raise KeyError(f"no ground-truth mask for {video_id!r} frame {frame_idx}")
        return np.asarray(Image.open(path).convert("L")) > 0

    def read_prediction(self, run_name: str, video_id: str, idx: int) -> np.ndarray | None:
        """Prediction mask for one frame, or None when the model emitted no file
        (treated as an empty prediction)."""
        path = self.pred_path(run_name, video_id, idx)
        if not path.exists():
            return None
        return np.asarray(Image.open(path).convert("L")) > 0

    def set_frame_status(self, video_id: str, frame_idx: int, status: str,
                         provenance: str | None = None) -> None:
        """Record a negative or discarded frame; drops any stored mask so the
        positive-iff-mask invariant holds."""
        if status == "positive":
            raise MaskError("positive labels are written via write_ground_truth")
        self.video(video_id)
        with self.video_lock(video_id):
            mask_file = self.mask_path(video_id, frame_idx)
            if mask_file.exists():
                mask_file.unlink()
            self._set_label(video_id, FrameLabel(frame_idx, status, provenance, None))

    def reset_annotations(self, video_id: str) -> None:
        """Drop every mask and label for a video, leaving frames and the
        session log untouched. Used before replaying a log from scratch."""
        self.video(video_id)
        with self.video_lock(video_id):
            mask_dir = self.root / "masks" / video_id
            if mask_dir.exists():
                for p in mask_dir.glob("*.png"):
                    p.unlink()
            _write_json_atomic(self.labels_path(video_id),
                               {"frames": [], "seed_frames": [], "tracker": "kcf"})

    def record_seed_frame(self, video_id: str, frame_idx: int) -> None:
        with self.video_lock(video_id):
            labels = self._load_labels(video_id)
            if frame_idx not in labels["seed_frames"]:
                labels["seed_frames"].append(frame_idx)
                labels["seed_frames"].sort()
            _write_json_atomic(self.labels_path(video_id), labels)

    # -- labels -----------------------------------------------------------

    def _load_labels(self, video_id: str) -> dict:
        path = self.labels_path(video_id)
        if path.exists():
            return json.loads(path.read_text())
        return {"frames": [], "seed_frames": [], "tracker": "kcf"}

    def _set_label(self, video_id: str, label: FrameLabel) -> None:
        labels = self._load_labels(video_id)
        frames = [f for f in labels["frames"] if f["idx"] != label.frame_idx]
        frames.append(label.to_json())
        frames.sort(key=lambda f: f["idx"])
        labels["frames"] = frames
        _write_json_atomic(self.labels_path(video_id), labels)

    def labels(self, video_id: str) -> dict[int, FrameLabel]:
        """All frame labels for a video, keyed by frame index. Every frame has
        at most one label; unlabeled frames are simply absent."""
        raw = self._load_labels(video_id)
        return {int(f["idx"]): FrameLabel.from_json(f) for f in raw["frames"]}

    def seed_frames(self, video_id: str) -> list[int]:
        return list(self._load_labels(video_id)["seed_frames"])

    def positive_frames(self, video_id: str) -> list[int]:
        return sorted(i for i, l in self.labels(video_id).items() if l.status == "positive")

    def evaluable_frames(self, video_id: str) -> list[int]:
        """Labeled frames that enter training and evaluation: positives and
        negatives. Discarded frames never appear here."""
        return sorted(i for i, l in self.labels(video_id).items()
                      if l.status in ("positive", "negative"))

    # -- statistics -------------------------------------------------------

    def dataset_stats(self) -> "StatsReport":
        return dataset_stats(self)


def _mean_sd(values: Sequence[float]) -> tuple[float, float]:
    if not values:
        return 0.0, 0.0
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())  # population SD


@dataclass
class GroupStats:
    n_videos: int = 0
    n_frames: int = 0
    n_positive_frames: int = 0
    sex: dict = field(default_factory=lambda: {"male": 0, "female": 0})
    age_mean: float = 0.0
    age_sd: float = 0.0
    height_mean: float = 0.0
    height_sd: float = 0.0
    bmi_mean: float = 0.0
    bmi_sd: float = 0.0

    def to_json(self) -> dict:
        return {
            "n_videos": self.n_videos,
            "n_frames": self.n_frames,
            "n_positive_frames": self.n_positive_frames,
            "sex": dict(self.sex),
            "age_mean": self.age_mean, "age_sd": self.age_sd,
            "height_mean": self.height_mean, "height_sd": self.height_sd,
            "bmi_mean": self.bmi_mean, "bmi_sd": self.bmi_sd,
        }


@dataclass
class StatsReport:
    """Dataset summary in the shape of the published patient-characteristics
    table: totals plus per-plexus breakdown."""

    total: GroupStats
    scbp: GroupStats
    isc: GroupStats

    def to_json(self) -> dict:
        return {"total": self.total.to_json(), "scbp": self.scbp.to_json(),
                "isc": self.isc.to_json()}


def dataset_stats(store: DatasetStore) -> StatsReport:
    """Video/frame/positive counts, sex tallies and demographic mean +/- SD,
    overall and per plexus. An empty manifest yields a zero-filled report."""
    groups: dict[str, list[VideoRecord]] = {"total": [], "scbp": [], "isc": []}
    for video in store.videos():
        groups["total"].append(video)
        if video.plexus in ("scbp", "isc"):
            groups[video.plexus].append(video)

    def build(videos: list[VideoRecord]) -> GroupStats:
        stats = GroupStats()
        ages, heights, bmis = [], [], []
        for v in videos:
            stats.n_videos += 1
            stats.n_frames += v.n_frames
            stats.n_positive_frames += len(store.positive_frames(v.id))
            if v.patient is not None:
                stats.sex[v.patient.sex] += 1
                ages.append(v.patient.age)
                heights.append(v.patient.height)
                bmis.append(v.patient.bmi)
        stats.age_mean, stats.age_sd = _mean_sd(ages)
        stats.height_mean, stats.height_sd = _mean_sd(heights)
        stats.bmi_mean, stats.bmi_sd = _mean_sd(bmis)
        return stats

    return StatsReport(total=build(groups["total"]), scbp=build(groups["scbp"]),
                       isc=build(groups["isc"]))
