"""Human-in-the-loop annotation sessions.

Workflow per video: seed boxes on one frame, track them forward (or
backward) so following frames arrive as pending guesses, review each guess
in order, fuse the approved boxes into a blob, shrink it onto the nerve
boundary, and commit the result as ground truth.

Every mutating operation appends one line to `sessions/{video_id}.jsonl`;
replaying that log against the same frames reproduces the committed masks
bit for bit, because tracking and contour refinement are deterministic.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Sequence

import numpy as np
from filelock import Timeout

from .contours import GacParams, inverse_gaussian_gradient, morph_gac, propose_contours
from .errors import MaskError, SeedError, StateError
from .geometry import BoundingBox, GeometryError
from .store import DatasetStore
from .tracking import LOW_CONFIDENCE_PEAK, kcf_init, kcf_step

LOCK_TIMEOUT = 2.0  # seconds to wait for another process to let go of a video


class FrameState(Enum):
    UNVISITED = "unvisited"
    PENDING = "pending"
    APPROVED = "approved"
    COMMITTED = "committed"
    NEGATIVE = "negative"
    DISCARDED = "discarded"


VERDICTS = ("approve", "reject", "negative", "discard")


@dataclass(frozen=True)
class PendingFrame:
    frame_idx: int
    boxes: tuple[BoundingBox, ...]
    confidence: float
    flagged: bool  # low tracker confidence, queue for a second look

    def to_json(self) -> dict:
        return {
            "frame": self.frame_idx,
            "boxes": [b.to_json() for b in self.boxes],
            "confidence": self.confidence,
            "flagged": self.flagged,
        }


def fuse_boxes(boxes: Sequence[BoundingBox], frame_dims: tuple[int, int]) -> np.ndarray:
    """Union of box interiors as a binary mask over (height, width)."""
    if not boxes:
        raise SeedError("cannot fuse an empty box list")
    h, w = frame_dims
    mask = np.zeros((h, w), dtype=bool)
    for box in boxes:
        if not box.intersects(w, h):
            raise GeometryError(f"box {box} lies entirely outside the {w}x{h} frame")
        x0, y0, x1, y1 = box.clipped(w, h)
        mask[y0:y1, x0:x1] = True
    return mask


_registry: dict[tuple[str, str], "AnnotationSession"] = {}
_registry_guard = threading.Lock()


class AnnotationSession:
    """Single mutating session over one video. Holds the video's file lock
    for its lifetime; a second open on the same video raises StateError."""

    def __init__(self, store: DatasetStore, video_id: str, *, log: bool = True):
        self.store = store
        self.video = store.video(video_id)  # KeyError for unknown ids
        self.video_id = video_id
        self._log_enabled = log
        self._dims = (self.video.height, self.video.width)

        key = (str(store.root.resolve()), video_id)
        with _registry_guard:
            if key in _registry:
                raise StateError(f"video {video_id!r} already has an active session")
            _registry[key] = self
        self._registry_key = key

        self._lock = store.video_lock(video_id)
        try:
            self._lock.acquire(timeout=LOCK_TIMEOUT)
        except Timeout:
            with _registry_guard:
                _registry.pop(key, None)
            raise StateError(
                f"video {video_id!r} is locked by another process") from None

        self._states: dict[int, FrameState] = {}
        self._boxes: dict[int, tuple[BoundingBox, ...]] = {}
        self._pending_order: list[int] = []
        self._trackers: list = []
        self._tracker_frame: int | None = None
        self._seed_frames: set[int] = set(store.seed_frames(video_id))
        for idx, label in store.labels(video_id).items():
            self._states[idx] = {
                "positive": FrameState.COMMITTED,
                "negative": FrameState.NEGATIVE,
                "discarded": FrameState.DISCARDED,
            }[label.status]
        self._closed = False

    # -- lifecycle --------------------------------------------------------

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        with _registry_guard:
            _registry.pop(self._registry_key, None)
        self._lock.release()

    def __enter__(self) -> "AnnotationSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _require_open(self) -> None:
        if self._closed:
            raise StateError("session is closed")

    # -- introspection ----------------------------------------------------

    def state(self, frame_idx: int) -> FrameState:
        return self._states.get(frame_idx, FrameState.UNVISITED)

    def boxes(self, frame_idx: int) -> tuple[BoundingBox, ...]:
        return self._boxes.get(frame_idx, ())

    @property
    def cursor(self) -> int | None:
        """Next frame awaiting a verdict, if any."""
        return self._pending_order[0] if self._pending_order else None

    def pending(self) -> list[dict]:
        out = []
        for idx in self._pending_order:
            out.append({
                "frame": idx,
                "state": FrameState.PENDING.value,
                "boxes": [b.to_json() for b in self._boxes[idx]],
            })
        return out

    def to_json(self) -> dict:
        return {
            "video_id": self.video_id,
            "cursor": self.cursor,
            "tracker_frame": self._tracker_frame,
            "active_trackers": len(self._trackers),
            "seed_frames": sorted(self._seed_frames),
            "pending": self.pending(),
            "frames": {
                str(i): self._states[i].value for i in sorted(self._states)
            },
        }

    # -- event log --------------------------------------------------------

    def _append_event(self, op: str, frame_idx: int | None, payload: dict) -> None:
        if not self._log_enabled:
            return
        event = {
            "ts": datetime.now(timezone.utc).isoformat(),
            "op": op,
            "frame_idx": frame_idx,
            "payload": payload,
        }
        path = self.store.session_log_path(self.video_id)
        with open(path, "a") as fh:
            fh.write(json.dumps(event) + "\n")

    # -- operations -------------------------------------------------------

    def set_seed(self, frame_idx: int, boxes: Sequence[BoundingBox]) -> None:
        """Start (or restart) tracking from hand-drawn boxes. Any guesses
        still awaiting review are dropped; the seeded frame itself counts
        as approved."""
        self._require_open()
        if not boxes:
            raise SeedError("at least one seed box is required")
        if not 0 <= frame_idx < self.video.n_frames:
            raise SeedError(f"frame {frame_idx} outside video of "
                            f"{self.video.n_frames} frames")
        h, w = self._dims
        for box in boxes:
            if not box.intersects(w, h):
                raise GeometryError(f"seed box {box} outside the frame")

        for idx in self._pending_order:
            self._states.pop(idx, None)
            self._boxes.pop(idx, None)
        self._pending_order.clear()

        frame = self.store.read_frame(self.video_id, frame_idx)
        self._trackers = [kcf_init(frame, box) for box in boxes]
        self._tracker_frame = frame_idx
        self._states[frame_idx] = FrameState.APPROVED
        self._boxes[frame_idx] = tuple(boxes)
        self._seed_frames.add(frame_idx)
        self.store.record_seed_frame(self.video_id, frame_idx)
        self._append_event("seed", frame_idx,
                           {"boxes": [b.to_json() for b in boxes]})

    def propagate(self, count: int, direction: str = "forward") -> list[PendingFrame]:
        """Step every tracker through up to `count` adjacent frames, queueing
        each as pending. Stops at the video boundary."""
        self._require_open()
        if not self._trackers:
            raise StateError("no active trackers; seed a frame first")
        if direction not in ("forward", "backward"):
            raise StateError(f"unknown direction {direction!r}")
        step = 1 if direction == "forward" else -1

        results: list[PendingFrame] = []
        for _ in range(count):
            nxt = self._tracker_frame + step
            if not 0 <= nxt < self.video.n_frames:
                break
            frame = self.store.read_frame(self.video_id, nxt)
            boxes, peaks = [], []
            for model in self._trackers:
                box, peak = kcf_step(model, frame)
                boxes.append(box)
                peaks.append(peak)
            self._tracker_frame = nxt
            confidence = float(min(peaks))
            entry = PendingFrame(
                frame_idx=nxt, boxes=tuple(boxes), confidence=confidence,
                flagged=confidence < LOW_CONFIDENCE_PEAK)
            results.append(entry)
            if self.state(nxt) is FrameState.UNVISITED:
                self._states[nxt] = FrameState.PENDING
                self._boxes[nxt] = tuple(boxes)
                self._pending_order.append(nxt)
        self._append_event("propagate", None, {
            "count": count,
            "direction": direction,
            "results": [r.to_json() for r in results],
        })
        return results

    def review(self, frame_idx: int, verdict: str) -> FrameState:
        self._require_open()
        if verdict not in VERDICTS:
            raise StateError(f"unknown verdict {verdict!r}")
        state = self.state(frame_idx)

        if verdict == "approve":
            if state is not FrameState.PENDING:
                raise StateError(f"frame {frame_idx} is {state.value}, not pending")
            if self._pending_order[0] != frame_idx:
                raise StateError(
                    f"frame {self._pending_order[0]} must be reviewed first")
            self._pending_order.pop(0)
            self._states[frame_idx] = FrameState.APPROVED
        elif verdict == "reject":
            if state is not FrameState.PENDING:
                raise StateError(f"frame {frame_idx} is {state.value}, not pending")
            # everything from the rejected frame onward is machine guesswork
            # built on a bad track; clear it and stop the trackers
            pos = self._pending_order.index(frame_idx)
            for idx in self._pending_order[pos:]:
                self._states.pop(idx, None)
                self._boxes.pop(idx, None)
            del self._pending_order[pos:]
            self._trackers = []
            self._tracker_frame = None
        elif verdict in ("negative", "discard"):
            if frame_idx in self._pending_order:
                self._pending_order.remove(frame_idx)
            self._boxes.pop(frame_idx, None)
            new_state = (FrameState.NEGATIVE if verdict == "negative"
                         else FrameState.DISCARDED)
            self._states[frame_idx] = new_state
            self.store.set_frame_status(
                self.video_id, frame_idx,
                "negative" if verdict == "negative" else "discarded")

        self._append_event("review", frame_idx, {"verdict": verdict})
        return self.state(frame_idx)

    def proposals(self, frame_idx: int, grid: Sequence[GacParams],
                  deadline: float | None = None,
                  ) -> list[tuple[GacParams, np.ndarray]]:
        """Candidate refined masks for a pending or approved frame."""
        self._require_open()
        if self.state(frame_idx) not in (FrameState.PENDING, FrameState.APPROVED):
            raise StateError(
                f"frame {frame_idx} has no boxes to refine "
                f"(state {self.state(frame_idx).value})")
        frame = self.store.read_frame(self.video_id, frame_idx)
        fused = fuse_boxes(self._boxes[frame_idx], self._dims)
        return propose_contours(frame, fused, list(grid), deadline=deadline)

    def refine_and_commit(self, frame_idx: int, params: GacParams,
                          mask: np.ndarray) -> None:
        """Persist a chosen proposal as ground truth. The mask is recomputed
        from the approved boxes and must match exactly; anything else means
        the caller is committing a mask this session never produced."""
        refined = self._refined_mask(frame_idx, params)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != refined.shape or not np.array_equal(mask, refined):
            raise MaskError(
                "mask does not match the contour computed from these parameters")
        self._commit(frame_idx, params, refined)

    def _refined_mask(self, frame_idx: int, params: GacParams) -> np.ndarray:
        self._require_open()
        if self.state(frame_idx) is not FrameState.APPROVED:
            raise StateError(
                f"commit requires an approved frame, not {self.state(frame_idx).value}")
        frame = self.store.read_frame(self.video_id, frame_idx)
        fused = fuse_boxes(self._boxes[frame_idx], self._dims)
        edge = inverse_gaussian_gradient(frame, alpha=params.edge_alpha,
                                         sigma=params.edge_sigma)
        return morph_gac(edge, fused, params)

    def _commit(self, frame_idx: int, params: GacParams, mask: np.ndarray) -> None:
        provenance = "seed" if frame_idx in self._seed_frames else "tracked_approved"
        self.store.write_ground_truth(self.video_id, frame_idx, mask, params,
                                      provenance=provenance)
        self._states[frame_idx] = FrameState.COMMITTED
        self._append_event("commit", frame_idx, {
            "params": params.to_json(),
            "mask_sha256": mask_digest(mask),
        })


def mask_digest(mask: np.ndarray) -> str:
    return hashlib.sha256(
        np.ascontiguousarray(mask, dtype=np.uint8).tobytes()).hexdigest()


def active_session(store: DatasetStore, video_id: str) -> AnnotationSession | None:
    with _registry_guard:
        return _registry.get((str(store.root.resolve()), video_id))


def replay_session(store: DatasetStore, video_id: str) -> dict:
    """Re-execute a recorded event log headlessly. Tracking and refinement
    are recomputed, so committed masks come out identical to the originals;
    logged digests are checked to prove it."""
    log_path = store.session_log_path(video_id)
    if not log_path.exists():
        raise StateError(f"no session log for video {video_id!r}")
    events = [json.loads(line) for line in log_path.read_text().splitlines() if line]

    store.reset_annotations(video_id)  # the log is the source of truth
    committed = 0
    with AnnotationSession(store, video_id, log=False) as session:
        for event in events:
            op, frame_idx, payload = event["op"], event["frame_idx"], event["payload"]
            if op == "seed":
                session.set_seed(
                    frame_idx, [BoundingBox.from_json(b) for b in payload["boxes"]])
            elif op == "propagate":
                session.propagate(payload["count"],
                                  payload.get("direction", "forward"))
            elif op == "review":
                session.review(frame_idx, payload["verdict"])
            elif op == "commit":
                params = GacParams.from_json(payload["params"])
                mask = session._refined_mask(frame_idx, params)
                digest = mask_digest(mask)
                if digest != payload["mask_sha256"]:
                    raise MaskError(
                        f"replay of frame {frame_idx} produced digest {digest[:12]}, "
                        f"log says {payload['mask_sha256'][:12]}")
                session._commit(frame_idx, params, mask)
                committed += 1
            else:
                raise StateError(f"unknown op {op!r} in session log")
    return {"events": len(events), "committed": committed}
