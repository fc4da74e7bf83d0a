"""HTTP façade over the dataset store and annotation sessions.

Every handler adapts one library call to JSON; masks travel as run-length
payloads. Mutating session endpoints are serialized per session, and a
request that finds the session busy gets 409 with a retry hint rather than
queueing behind a long tracker run.
"""

from __future__ import annotations

import threading
import time
import uuid
from contextlib import asynccontextmanager
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field

from . import rle
from .contours import GacParams
from .errors import NerveTraceError, StateError
from .geometry import BoundingBox
from .sessions import AnnotationSession
from .store import DatasetStore

PROPOSAL_GRID_CAP = 24
PROPOSAL_BUDGET_S = 10.0
RETRY_AFTER_MS = 250


class BoxModel(BaseModel):
    x: int
    y: int
    w: int
    h: int

    def to_box(self) -> BoundingBox:
        return BoundingBox(x=self.x, y=self.y, w=self.w, h=self.h)


class RleModel(BaseModel):
    width: int
    height: int
    runs: list[int]


class SeedRequest(BaseModel):
    frame: int
    boxes: list[BoxModel]


class PropagateRequest(BaseModel):
    count: int = Field(ge=1)
    direction: str = "forward"


class VerdictRequest(BaseModel):
    verdict: str


class GacParamsModel(BaseModel):
    iterations: int
    smoothing: int = 1
    threshold: float = 0.35
    balloon: float = -1.0
    edge_alpha: float = 100.0
    edge_sigma: float = 2.0

    def to_params(self) -> GacParams:
        return GacParams(iterations=self.iterations, smoothing=self.smoothing,
                         threshold=self.threshold, balloon=self.balloon,
                         edge_alpha=self.edge_alpha, edge_sigma=self.edge_sigma)


class ProposalsRequest(BaseModel):
    grid: list[GacParamsModel]


class CommitRequest(BaseModel):
    params: GacParamsModel
    mask: RleModel


class _SessionSlot:
    """A live session plus the non-blocking gate that serializes its
    mutating requests."""

    def __init__(self, session: AnnotationSession):
        self.session = session
        self.gate = threading.Lock()


def create_app(store: DatasetStore) -> FastAPI:
    sessions: dict[str, _SessionSlot] = {}

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        for slot in sessions.values():
            slot.session.close()
        sessions.clear()

    app = FastAPI(title="nervetrace", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"],
    )

    def _error(status: int, message: str, **extra) -> JSONResponse:
        return JSONResponse(status_code=status, content={"detail": message, **extra})

    @app.exception_handler(RequestValidationError)
    async def _malformed(request: Request, exc: RequestValidationError):
        return _error(400, f"malformed request body: {exc.errors()[:3]}")

    @app.exception_handler(KeyError)
    async def _missing(request: Request, exc: KeyError):
        return _error(404, str(exc.args[0]) if exc.args else "not found")

    @app.exception_handler(StateError)
    async def _conflict(request: Request, exc: StateError):
        return _error(409, str(exc))

    @app.exception_handler(NerveTraceError)
    async def _domain(request: Request, exc: NerveTraceError):
        return _error(400, str(exc))

    def _slot(session_id: str) -> _SessionSlot:
        slot = sessions.get(session_id)
        if slot is None:
            raise KeyError(f"unknown session {session_id!r}")
        return slot

    def _busy() -> JSONResponse:
        return _error(409, "session is busy with another request; retry shortly",
                      retry_after_ms=RETRY_AFTER_MS)

    def _session_state(session_id: str, session: AnnotationSession) -> dict:
        return {"session_id": session_id, **session.to_json()}

    # -- videos -----------------------------------------------------------

    @app.get("/videos")
    def list_videos():
        return [v.to_json() for v in store.videos()]

    @app.get("/videos/{video_id}")
    def get_video(video_id: str):
        return store.video(video_id).to_json()

    @app.get("/videos/{video_id}/frames/{idx}")
    def get_frame(video_id: str, idx: int):
        return Response(content=store.read_frame_bytes(video_id, idx),
                        media_type="image/png")

    @app.get("/videos/{video_id}/ground_truth/{idx}")
    def get_ground_truth(video_id: str, idx: int):
        return rle.encode_mask(store.read_ground_truth(video_id, idx))

    # -- session lifecycle ------------------------------------------------

    @app.post("/videos/{video_id}/session", status_code=201)
    def create_session(video_id: str):
        session = AnnotationSession(store, video_id)
        session_id = uuid.uuid4().hex[:12]
        sessions[session_id] = _SessionSlot(session)
        return _session_state(session_id, session)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        slot = _slot(session_id)
        return _session_state(session_id, slot.session)

    @app.get("/sessions/{session_id}/pending")
    def get_pending(session_id: str):
        return _slot(session_id).session.pending()

    # -- session mutation -------------------------------------------------

    @app.post("/sessions/{session_id}/seed")
    def post_seed(session_id: str, body: SeedRequest):
        slot = _slot(session_id)
        if not slot.gate.acquire(blocking=False):
            return _busy()
        try:
            slot.session.set_seed(body.frame, [b.to_box() for b in body.boxes])
            return _session_state(session_id, slot.session)
        finally:
            slot.gate.release()

    @app.post("/sessions/{session_id}/propagate")
    def post_propagate(session_id: str, body: PropagateRequest):
        slot = _slot(session_id)
        if not slot.gate.acquire(blocking=False):
            return _busy()
        try:
            results = slot.session.propagate(body.count, body.direction)
            return [r.to_json() for r in results]
        finally:
            slot.gate.release()

    @app.post("/sessions/{session_id}/frames/{idx}/verdict")
    def post_verdict(session_id: str, idx: int, body: VerdictRequest):
        slot = _slot(session_id)
        if not slot.gate.acquire(blocking=False):
            return _busy()
        try:
            state = slot.session.review(idx, body.verdict)
            return {"frame": idx, "state": state.value}
        finally:
            slot.gate.release()

    @app.post("/sessions/{session_id}/frames/{idx}/proposals")
    def post_proposals(session_id: str, idx: int, body: ProposalsRequest):
        slot = _slot(session_id)
        if len(body.grid) > PROPOSAL_GRID_CAP:
            return _error(400, f"proposal grid capped at {PROPOSAL_GRID_CAP} entries")
        if not slot.gate.acquire(blocking=False):
            return _busy()
        try:
            deadline = time.monotonic() + PROPOSAL_BUDGET_S
            results = slot.session.proposals(
                idx, [g.to_params() for g in body.grid], deadline=deadline)
            return [{"params": params.to_json(), "mask": rle.encode_mask(mask)}
                    for params, mask in results]
        finally:
            slot.gate.release()

    @app.post("/sessions/{session_id}/frames/{idx}/commit")
    def post_commit(session_id: str, idx: int, body: CommitRequest):
        slot = _slot(session_id)
        if not slot.gate.acquire(blocking=False):
            return _busy()
        try:
            mask = rle.decode_mask(body.mask.model_dump())
            slot.session.refine_and_commit(idx, body.params.to_params(), mask)
            return {"frame": idx, "state": "committed"}
        finally:
            slot.gate.release()

    return app


def serve(data_root: str | Path, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    store = DatasetStore.open(data_root)
    uvicorn.run(create_app(store), host=host, port=port)
