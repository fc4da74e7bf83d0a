/**
 * Typed client for the annotation service. Field names mirror the wire
 * format exactly; masks are run-length payloads (see rle.ts).
 */

import type { RleMask } from "./rle.js";

export interface Box {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface GacParams {
  iterations: number;
  smoothing: number;
  threshold: number;
  balloon: number;
  edge_alpha: number;
  edge_sigma: number;
}

export interface VideoInfo {
  id: string;
  machine: string;
  plexus: string;
  side: string;
  gain: string;
  depth_setting: string;
  width: number;
  height: number;
  n_frames: number;
  eval_resolution: [number, number];
  patient: {
    age: number;
    sex: string;
    height: number;
    bmi: number;
  } | null;
}

export interface PendingEntry {
  frame: number;
  state: "pending";
  boxes: Box[];
}

export interface SessionState {
  session_id: string;
  video_id: string;
  cursor: number | null;
  tracker_frame: number | null;
  active_trackers: number;
  seed_frames: number[];
  pending: PendingEntry[];
  frames: Record<string, string>;
}

export interface PropagateResult {
  frame: number;
  boxes: Box[];
  confidence: number;
  flagged: boolean;
}

export interface VerdictResult {
  frame: number;
  state: string;
}

export interface Proposal {
  params: GacParams;
  mask: RleMask;
}

export type Verdict = "approve" | "reject" | "negative" | "discard";

/** Error body is {"detail": ...}; busy responses add retry_after_ms. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
    readonly retryAfterMs: number | null = null,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

/** The endpoint surface the session controller depends on; the live
 * implementation is ApiClient, tests substitute an in-memory double. */
export interface ReviewApi {
  listVideos(): Promise<VideoInfo[]>;
  getVideo(videoId: string): Promise<VideoInfo>;
  frameUrl(videoId: string, idx: number): string;
  groundTruth(videoId: string, idx: number): Promise<RleMask>;
  createSession(videoId: string): Promise<SessionState>;
  getSession(sessionId: string): Promise<SessionState>;
  getPending(sessionId: string): Promise<PendingEntry[]>;
  seed(sessionId: string, frame: number, boxes: Box[]): Promise<SessionState>;
  propagate(sessionId: string, count: number, direction?: string): Promise<PropagateResult[]>;
  verdict(sessionId: string, frame: number, verdict: Verdict): Promise<VerdictResult>;
  proposals(sessionId: string, frame: number, grid: Partial<GacParams>[]): Promise<Proposal[]>;
  commit(sessionId: string, frame: number, params: GacParams, mask: RleMask): Promise<VerdictResult>;
}

export class ApiClient implements ReviewApi {
  constructor(readonly baseUrl: string) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await fetch(this.baseUrl + path, init);
    if (!response.ok) {
      let detail = response.statusText;
      let retryAfterMs: number | null = null;
      try {
        const payload = await response.json();
        if (typeof payload?.detail === "string") detail = payload.detail;
        if (typeof payload?.retry_after_ms === "number") retryAfterMs = payload.retry_after_ms;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail, retryAfterMs);
    }
    return (await response.json()) as T;
  }

  listVideos(): Promise<VideoInfo[]> {
    return this.request("GET", "/videos");
  }

  getVideo(videoId: string): Promise<VideoInfo> {
    return this.request("GET", `/videos/${encodeURIComponent(videoId)}`);
  }

  frameUrl(videoId: string, idx: number): string {
    return `${this.baseUrl}/videos/${encodeURIComponent(videoId)}/frames/${idx}`;
  }

  groundTruth(videoId: string, idx: number): Promise<RleMask> {
    return this.request("GET", `/videos/${encodeURIComponent(videoId)}/ground_truth/${idx}`);
  }

  createSession(videoId: string): Promise<SessionState> {
    return this.request("POST", `/videos/${encodeURIComponent(videoId)}/session`);
  }

  getSession(sessionId: string): Promise<SessionState> {
    return this.request("GET", `/sessions/${sessionId}`);
  }

  getPending(sessionId: string): Promise<PendingEntry[]> {
    return this.request("GET", `/sessions/${sessionId}/pending`);
  }

  seed(sessionId: string, frame: number, boxes: Box[]): Promise<SessionState> {
    return this.request("POST", `/sessions/${sessionId}/seed`, { frame, boxes });
  }

  propagate(sessionId: string, count: number, direction = "forward"): Promise<PropagateResult[]> {
    return this.request("POST", `/sessions/${sessionId}/propagate`, { count, direction });
  }

  verdict(sessionId: string, frame: number, verdict: Verdict): Promise<VerdictResult> {
    return this.request("POST", `/sessions/${sessionId}/frames/${frame}/verdict`, { verdict });
  }

  proposals(sessionId: string, frame: number, grid: Partial<GacParams>[]): Promise<Proposal[]> {
    return this.request("POST", `/sessions/${sessionId}/frames/${frame}/proposals`, { grid });
  }

  commit(sessionId: string, frame: number, params: GacParams, mask: RleMask): Promise<VerdictResult> {
    return this.request("POST", `/sessions/${sessionId}/frames/${frame}/commit`, { params, mask });
  }
}
