/**
 * Client-side session state and the action loop.
 *
 * The controller never invents annotation state: every mutation goes to the
 * API, and the local view is updated to exactly the transition the server
 * applied, so an incremental update always matches a fresh refetch. A 409
 * response means the view was stale or the session busy; the controller
 * refetches and re-renders instead of retrying.
 */

import { ApiError } from "./api.js";
import type {
  Box,
  GacParams,
  PendingEntry,
  Proposal,
  ReviewApi,
  SessionState,
} from "./api.js";

export type OverlayMode = "boxes" | "fused_mask" | "proposals" | "ground_truth";

export type ReviewAction =
  | { kind: "draw_seed"; frame: number; boxes: Box[] }
  | { kind: "approve" }
  | { kind: "reject" }
  | { kind: "negative" }
  | { kind: "discard" }
  | { kind: "pick_proposal"; index: number }
  | { kind: "propagate"; count?: number };

export const DEFAULT_PROPAGATE_COUNT = 10;

export const DEFAULT_KEYMAP: Readonly<Record<string, ReviewAction>> = {
  a: { kind: "approve" },
  r: { kind: "reject" },
  n: { kind: "negative" },
  d: { kind: "discard" },
  " ": { kind: "propagate" },
};

/** 3x3 contour grid: shrink length crossed with edge-stop sensitivity. */
export const DEFAULT_PROPOSAL_GRID: Partial<GacParams>[] = [15, 25, 40].flatMap(
  (iterations) => [0.25, 0.3, 0.35].map((threshold) => ({ iterations, threshold })),
);

export interface Viewport {
  zoom: number;
  panX: number;
  panY: number;
}

export interface UiSessionState {
  videoId: string;
  nFrames: number;
  /** Frame on screen; stays within [0, nFrames). */
  cursor: number;
  overlay: OverlayMode;
  pending: PendingEntry[];
  /** Frame index (as string) to state name; unvisited frames are absent. */
  frames: Record<string, string>;
  seedFrames: number[];
  trackerFrame: number | null;
  activeTrackers: number;
  /** Reject drops the user here to redraw seed boxes on the same frame. */
  drawMode: boolean;
  proposals: Proposal[];
  selectedProposal: number | null;
  /** One in-flight mutating request; actions are ignored while set. */
  busy: boolean;
  /** Banner text, or null when the last request succeeded. */
  error: string | null;
  viewport: Viewport;
  keymap: Record<string, ReviewAction>;
}

type Listener = (state: UiSessionState) => void;

export class SessionController {
  private state: UiSessionState;
  private listeners: Listener[] = [];

  private constructor(
    private readonly api: ReviewApi,
    readonly sessionId: string,
    videoId: string,
    nFrames: number,
    initial: SessionState,
  ) {
    this.state = {
      videoId,
      nFrames,
      cursor: 0,
      overlay: "boxes",
      pending: [],
      frames: {},
      seedFrames: [],
      trackerFrame: null,
      activeTrackers: 0,
      drawMode: false,
      proposals: [],
      selectedProposal: null,
      busy: false,
      error: null,
      viewport: { zoom: 1, panX: 0, panY: 0 },
      keymap: { ...DEFAULT_KEYMAP },
    };
    this.applyServer(initial);
  }

  static async open(api: ReviewApi, videoId: string): Promise<SessionController> {
    const video = await api.getVideo(videoId);
    const initial = await api.createSession(videoId);
    return new SessionController(api, initial.session_id, videoId, video.n_frames, initial);
  }

  getState(): UiSessionState {
    return this.state;
  }

  onChange(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  private clampFrame(idx: number): number {
    return Math.min(Math.max(idx, 0), Math.max(this.state.nFrames - 1, 0));
  }

  /** Replace annotation state with a full server snapshot. */
  private applyServer(s: SessionState): void {
    this.state.pending = s.pending.map((p) => ({ ...p, boxes: p.boxes.map((b) => ({ ...b })) }));
    this.state.frames = { ...s.frames };
    this.state.seedFrames = [...s.seed_frames];
    this.state.trackerFrame = s.tracker_frame;
    this.state.activeTrackers = s.active_trackers;
    this.state.cursor = s.cursor !== null ? s.cursor : this.clampFrame(this.state.cursor);
    this.state.proposals = [];
    this.state.selectedProposal = null;
  }

  async resync(): Promise<void> {
    this.applyServer(await this.api.getSession(this.sessionId));
    if (this.state.overlay === "proposals") this.state.overlay = "boxes";
    this.emit();
  }

  /** Serialize mutations; false means the action never reached the API
   * (busy, illegal, or it failed and the error banner/state refetch took
   * over). */
  private async mutate(fn: () => Promise<void>): Promise<boolean> {
    if (this.state.busy) return false;
    this.state.busy = true;
    this.state.error = null;
    this.emit();
    try {
      await fn();
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        try {
          await this.resync();
        } catch (refetchErr) {
          this.state.error = refetchErr instanceof Error ? refetchErr.message : String(refetchErr);
        }
      } else {
        this.state.error = err instanceof Error ? err.message : String(err);
      }
      return false;
    } finally {
      this.state.busy = false;
      this.emit();
    }
  }

  isLegal(action: ReviewAction): boolean {
    const s = this.state;
    const cursorState = s.frames[String(s.cursor)];
    switch (action.kind) {
      case "draw_seed":
        return action.boxes.length > 0 && action.frame >= 0 && action.frame < s.nFrames;
      case "approve":
        return s.pending.length > 0 && s.pending[0]!.frame === s.cursor;
      case "reject":
        return cursorState === "pending";
      case "negative":
      case "discard":
        return true;
      case "pick_proposal":
        return action.index >= 0 && action.index < s.proposals.length;
      case "propagate":
        return s.activeTrackers > 0;
    }
  }

  async submit(action: ReviewAction): Promise<boolean> {
    if (this.state.busy || !this.isLegal(action)) return false;
    switch (action.kind) {
      case "draw_seed":
        return this.mutate(async () => {
          const s = await this.api.seed(this.sessionId, action.frame, action.boxes);
          this.applyServer(s);
          this.state.cursor = action.frame;
          this.state.drawMode = false;
          this.state.overlay = "boxes";
        });
      case "propagate":
        return this.mutate(async () => {
          const count = action.count ?? DEFAULT_PROPAGATE_COUNT;
          const results = await this.api.propagate(this.sessionId, count);
          for (const r of results) {
            this.state.trackerFrame = r.frame;
            // frames the tracker crossed but the annotator already labeled
            // stay as they are; only unvisited ones join the queue
            if (this.state.frames[String(r.frame)] === undefined) {
              this.state.frames[String(r.frame)] = "pending";
              this.state.pending.push({ frame: r.frame, state: "pending", boxes: r.boxes });
            }
          }
          if (this.state.pending.length > 0) {
            this.state.cursor = this.state.pending[0]!.frame;
            this.state.overlay = "boxes";
          }
        });
      case "approve":
        return this.mutate(async () => {
          const head = this.state.pending[0]!;
          const res = await this.api.verdict(this.sessionId, head.frame, "approve");
          this.state.pending.shift();
          this.state.frames[String(head.frame)] = res.state;
          this.state.cursor = this.state.pending[0]?.frame ?? head.frame;
        });
      case "reject":
        return this.mutate(async () => {
          const target = this.state.cursor;
          await this.api.verdict(this.sessionId, target, "reject");
          // the server discards the rejected guess and everything queued
          // after it, and deactivates the trackers
          const pos = this.state.pending.findIndex((p) => p.frame === target);
          for (const dropped of this.state.pending.slice(pos)) {
            delete this.state.frames[String(dropped.frame)];
          }
          this.state.pending = this.state.pending.slice(0, pos);
          this.state.activeTrackers = 0;
          this.state.trackerFrame = null;
          this.state.drawMode = true;
          this.state.overlay = "boxes";
        });
      case "negative":
      case "discard":
        return this.mutate(async () => {
          const target = this.state.cursor;
          const res = await this.api.verdict(this.sessionId, target, action.kind);
          const pos = this.state.pending.findIndex((p) => p.frame === target);
          if (pos >= 0) this.state.pending.splice(pos, 1);
          this.state.frames[String(target)] = res.state;
          if (pos >= 0 && this.state.pending.length > 0) {
            const next = this.state.pending[Math.min(pos, this.state.pending.length - 1)]!;
            this.state.cursor = next.frame;
          }
        });
      case "pick_proposal":
        this.state.selectedProposal = action.index;
        this.state.overlay = "proposals";
        this.emit();
        return true;
    }
  }

  /** Fetch refinement candidates for the frame on screen. */
  async loadProposals(grid: Partial<GacParams>[] = DEFAULT_PROPOSAL_GRID): Promise<boolean> {
    const frameState = this.state.frames[String(this.state.cursor)];
    if (this.state.busy || (frameState !== "pending" && frameState !== "approved")) {
      return false;
    }
    return this.mutate(async () => {
      const target = this.state.cursor;
      this.state.proposals = await this.api.proposals(this.sessionId, target, grid);
      this.state.selectedProposal = null;
      this.state.overlay = "proposals";
    });
  }

  /** Commit the picked proposal: the exact params and mask the server sent
   * back, which it verifies against its own recomputation. */
  async confirmProposal(): Promise<boolean> {
    const sel = this.state.selectedProposal;
    const frameState = this.state.frames[String(this.state.cursor)];
    if (this.state.busy || sel === null || frameState !== "approved") return false;
    return this.mutate(async () => {
      const target = this.state.cursor;
      const chosen = this.state.proposals[sel]!;
      const res = await this.api.commit(this.sessionId, target, chosen.params, chosen.mask);
      this.state.frames[String(target)] = res.state;
      this.state.proposals = [];
      this.state.selectedProposal = null;
      this.state.overlay = "ground_truth";
    });
  }

  /** Returns the submitted action, or null for an unbound key. */
  handleKey(key: string): Promise<boolean> | null {
    const action = this.state.keymap[key] ?? this.state.keymap[key.toLowerCase()];
    if (!action) return null;
    return this.submit(action);
  }

  /** Navigate; zoom and pan are deliberately untouched. */
  goTo(frame: number): void {
    this.state.cursor = this.clampFrame(frame);
    this.emit();
  }

  setOverlay(mode: OverlayMode): void {
    this.state.overlay = mode;
    this.emit();
  }

  setViewport(viewport: Viewport): void {
    this.state.viewport = { ...viewport };
    this.emit();
  }

  enterDrawMode(): void {
    this.state.drawMode = true;
    this.emit();
  }
}
