/**
 * Browser entry point: wires the session controller to a canvas, a pending
 * queue, a proposal picker, and the keyboard.
 */

import { ApiClient } from "./api.js";
import type { Box, Proposal } from "./api.js";
import { decodeMask } from "./rle.js";
import {
  BOX_COLOR,
  PROPOSAL_COLOR,
  cloneRaster,
  composeView,
  outlineBox,
  outlineMask,
  type Raster,
} from "./overlay.js";
import { SessionController, type UiSessionState } from "./state.js";

const params = new URLSearchParams(window.location.search);
const apiBase = params.get("api") ?? window.location.origin;
const api = new ApiClient(apiBase);

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

const root = document.getElementById("app")!;
const banner = el("div", "banner hidden");
const topBar = el("div", "top-bar");
const videoSelect = el("select");
const statusLine = el("span", "status");
const stage = el("div", "stage");
const canvas = el("canvas");
const sidebar = el("div", "sidebar");
const overlayBar = el("div", "overlay-bar");
const actionBar = el("div", "action-bar");
const pendingList = el("ul", "pending-list");
const proposalStrip = el("div", "proposal-strip");

topBar.append(videoSelect, statusLine);
stage.append(canvas);
sidebar.append(overlayBar, actionBar, el("h3", undefined, "Pending"), pendingList);
root.append(banner, topBar, stage, sidebar, proposalStrip);

const ctx = canvas.getContext("2d")!;

let controller: SessionController | null = null;
let baseRaster: Raster | null = null;
let baseFrame = -1;
let groundTruth: Uint8Array | null = null;
let groundTruthFrame = -1;
let draftBoxes: Box[] = [];
let dragStart: { x: number; y: number } | null = null;
let dragCurrent: { x: number; y: number } | null = null;

function showError(message: string | null): void {
  banner.textContent = message ?? "";
  banner.classList.toggle("hidden", message === null);
}

async function fetchFrameRaster(videoId: string, frame: number): Promise<Raster> {
  const img = new Image();
  img.crossOrigin = "anonymous";
  img.src = api.frameUrl(videoId, frame);
  await img.decode();
  const off = document.createElement("canvas");
  off.width = img.naturalWidth;
  off.height = img.naturalHeight;
  const offCtx = off.getContext("2d")!;
  offCtx.drawImage(img, 0, 0);
  const data = offCtx.getImageData(0, 0, off.width, off.height);
  return { width: data.width, height: data.height, data: data.data };
}

function toFrameCoords(event: MouseEvent, state: UiSessionState): { x: number; y: number } {
  const rect = canvas.getBoundingClientRect();
  const { zoom, panX, panY } = state.viewport;
  return {
    x: Math.round((event.clientX - rect.left - panX) / zoom),
    y: Math.round((event.clientY - rect.top - panY) / zoom),
  };
}

function currentBoxes(state: UiSessionState): Box[] {
  const entry = state.pending.find((p) => p.frame === state.cursor);
  return entry ? entry.boxes : [];
}

function selectedProposalMask(state: UiSessionState): Uint8Array | undefined {
  if (state.selectedProposal === null) return undefined;
  const proposal = state.proposals[state.selectedProposal];
  return proposal ? decodeMask(proposal.mask) : undefined;
}

function renderCanvas(state: UiSessionState): void {
  if (!baseRaster) return;
  const composed = composeView(baseRaster, {
    mode: state.overlay,
    boxes: currentBoxes(state),
    groundTruth: state.overlay === "ground_truth" && groundTruthFrame === state.cursor
      ? groundTruth ?? undefined
      : undefined,
    proposalMask: selectedProposalMask(state),
  });
  for (const box of draftBoxes) outlineBox(composed, box, PROPOSAL_COLOR, 2);
  if (dragStart && dragCurrent) {
    outlineBox(composed, rubberBand(), BOX_COLOR, 1);
  }

  const { zoom, panX, panY } = state.viewport;
  canvas.width = stage.clientWidth || composed.width;
  canvas.height = stage.clientHeight || composed.height;
  const off = document.createElement("canvas");
  off.width = composed.width;
  off.height = composed.height;
  const offCtx = off.getContext("2d")!;
  const pixels = offCtx.createImageData(composed.width, composed.height);
  pixels.data.set(composed.data);
  offCtx.putImageData(pixels, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.setTransform(zoom, 0, 0, zoom, panX, panY);
  ctx.drawImage(off, 0, 0);
  ctx.setTransform(1, 0, 0, 1, 0, 0);
}

function rubberBand(): Box {
  const x0 = Math.min(dragStart!.x, dragCurrent!.x);
  const y0 = Math.min(dragStart!.y, dragCurrent!.y);
  return {
    x: x0,
    y: y0,
    w: Math.abs(dragCurrent!.x - dragStart!.x),
    h: Math.abs(dragCurrent!.y - dragStart!.y),
  };
}

function renderStatus(state: UiSessionState): void {
  const frameState = state.frames[String(state.cursor)] ?? "unvisited";
  statusLine.textContent =
    `frame ${state.cursor + 1}/${state.nFrames} (${frameState})` +
    ` | pending ${state.pending.length}` +
    ` | trackers ${state.activeTrackers}` +
    (state.drawMode ? " | drawing seed boxes" : "") +
    (state.busy ? " | working..." : "");
}

function renderPendingList(state: UiSessionState): void {
  pendingList.replaceChildren();
  for (const entry of state.pending) {
    const item = el("li", entry.frame === state.cursor ? "current" : undefined,
      `frame ${entry.frame} (${entry.boxes.length} boxes)`);
    item.onclick = () => controller?.goTo(entry.frame);
    pendingList.append(item);
  }
}

function proposalThumbnail(proposal: Proposal, index: number, state: UiSessionState): HTMLCanvasElement {
  const thumb = document.createElement("canvas");
  if (!baseRaster) return thumb;
  const composed = cloneRaster(baseRaster);
  outlineMask(composed, decodeMask(proposal.mask), PROPOSAL_COLOR);
  const scale = 160 / composed.width;
  thumb.width = 160;
  thumb.height = Math.round(composed.height * scale);
  thumb.className = index === state.selectedProposal ? "thumb selected" : "thumb";
  thumb.title = `iterations ${proposal.params.iterations}, threshold ${proposal.params.threshold}`;
  const off = document.createElement("canvas");
  off.width = composed.width;
  off.height = composed.height;
  const offCtx = off.getContext("2d")!;
  const pixels = offCtx.createImageData(composed.width, composed.height);
  pixels.data.set(composed.data);
  offCtx.putImageData(pixels, 0, 0);
  thumb.getContext("2d")!.drawImage(off, 0, 0, thumb.width, thumb.height);
  thumb.onclick = () => controller?.submit({ kind: "pick_proposal", index });
  return thumb;
}

function renderProposals(state: UiSessionState): void {
  proposalStrip.replaceChildren();
  if (state.overlay !== "proposals") return;
  state.proposals.forEach((proposal, index) => {
    proposalStrip.append(proposalThumbnail(proposal, index, state));
  });
  if (state.proposals.length > 0) {
    const confirm = el("button", "confirm", "Commit selected");
    confirm.disabled = state.selectedProposal === null || state.busy;
    confirm.onclick = () => void controller?.confirmProposal();
    proposalStrip.append(confirm);
  }
}

function renderActionBar(state: UiSessionState): void {
  actionBar.replaceChildren();
  const buttons: [string, () => void, boolean][] = [
    ["Approve (A)", () => void controller?.submit({ kind: "approve" }),
      controller?.isLegal({ kind: "approve" }) ?? false],
    ["Reject (R)", () => void controller?.submit({ kind: "reject" }),
      controller?.isLegal({ kind: "reject" }) ?? false],
    ["Negative (N)", () => void controller?.submit({ kind: "negative" }), true],
    ["Discard (D)", () => void controller?.submit({ kind: "discard" }), true],
    ["Propagate 10 (Space)", () => void controller?.submit({ kind: "propagate" }),
      controller?.isLegal({ kind: "propagate" }) ?? false],
    ["Draw seeds", () => controller?.enterDrawMode(), true],
    ["Proposals", () => void controller?.loadProposals(), true],
  ];
  for (const [label, handler, legal] of buttons) {
    const button = el("button", undefined, label);
    button.disabled = state.busy || !legal;
    button.onclick = handler;
    actionBar.append(button);
  }
  if (state.drawMode) {
    const send = el("button", "confirm", `Seed with ${draftBoxes.length} boxes`);
    send.disabled = state.busy || draftBoxes.length === 0;
    send.onclick = () => {
      const boxes = draftBoxes;
      draftBoxes = [];
      void controller?.submit({ kind: "draw_seed", frame: state.cursor, boxes });
    };
    actionBar.append(send);
  }
}

function renderOverlayBar(state: UiSessionState): void {
  overlayBar.replaceChildren();
  for (const mode of ["boxes", "fused_mask", "proposals", "ground_truth"] as const) {
    const button = el("button", mode === state.overlay ? "active" : undefined, mode);
    button.onclick = () => controller?.setOverlay(mode);
    overlayBar.append(button);
  }
}

async function render(state: UiSessionState): Promise<void> {
  showError(state.error);
  renderStatus(state);
  renderPendingList(state);
  renderOverlayBar(state);
  renderActionBar(state);
  renderProposals(state);
  try {
    if (baseFrame !== state.cursor) {
      baseRaster = await fetchFrameRaster(state.videoId, state.cursor);
      baseFrame = state.cursor;
    }
    if (
      state.overlay === "ground_truth" &&
      groundTruthFrame !== state.cursor &&
      state.frames[String(state.cursor)] === "committed"
    ) {
      groundTruth = decodeMask(await api.groundTruth(state.videoId, state.cursor));
      groundTruthFrame = state.cursor;
    }
  } catch (err) {
    showError(err instanceof Error ? err.message : String(err));
    return;
  }
  renderCanvas(state);
}

canvas.addEventListener("mousedown", (event) => {
  const state = controller?.getState();
  if (!state) return;
  if (state.drawMode && event.button === 0) {
    dragStart = toFrameCoords(event, state);
    dragCurrent = dragStart;
  }
});

canvas.addEventListener("mousemove", (event) => {
  const state = controller?.getState();
  if (!state || !dragStart) return;
  dragCurrent = toFrameCoords(event, state);
  renderCanvas(state);
});

canvas.addEventListener("mouseup", (event) => {
  const state = controller?.getState();
  if (!state || !dragStart) return;
  dragCurrent = toFrameCoords(event, state);
  const box = rubberBand();
  dragStart = null;
  dragCurrent = null;
  if (box.w > 2 && box.h > 2) draftBoxes.push(box);
  void render(state);
});

canvas.addEventListener("wheel", (event) => {
  const state = controller?.getState();
  if (!state) return;
  event.preventDefault();
  const zoom = Math.min(8, Math.max(0.25, state.viewport.zoom * Math.exp(-event.deltaY / 400)));
  controller?.setViewport({ ...state.viewport, zoom });
});

window.addEventListener("keydown", (event) => {
  if (event.target instanceof HTMLInputElement || event.target instanceof HTMLSelectElement) {
    return;
  }
  if (!controller) return;
  if (event.key === "Enter") {
    void controller.confirmProposal();
    return;
  }
  if (event.key === "ArrowRight" || event.key === "ArrowLeft") {
    const delta = event.key === "ArrowRight" ? 1 : -1;
    controller.goTo(controller.getState().cursor + delta);
    return;
  }
  const submitted = controller.handleKey(event.key);
  if (submitted) event.preventDefault();
});

async function openVideo(videoId: string): Promise<void> {
  try {
    controller = await SessionController.open(api, videoId);
    baseFrame = -1;
    groundTruthFrame = -1;
    draftBoxes = [];
    controller.onChange((state) => void render(state));
    await render(controller.getState());
  } catch (err) {
    showError(err instanceof Error ? err.message : String(err));
  }
}

async function boot(): Promise<void> {
  try {
    const videos = await api.listVideos();
    videoSelect.replaceChildren();
    for (const video of videos) {
      const option = el("option", undefined, `${video.id} (${video.plexus}, ${video.n_frames} frames)`);
      option.value = video.id;
      videoSelect.append(option);
    }
    videoSelect.onchange = () => void openVideo(videoSelect.value);
    const wanted = params.get("video") ?? videos[0]?.id;
    if (wanted) {
      videoSelect.value = wanted;
      await openVideo(wanted);
    } else {
      showError("dataset has no videos");
    }
  } catch (err) {
    showError(err instanceof Error ? err.message : String(err));
  }
}

void boot();
