/**
 * Drives the full review loop through the session controller against a real
 * server process: seed boxes are drawn, the tracker propagates them, five
 * guesses are approved, a contour proposal is picked and committed, and the
 * resulting labels are verified server-side.
 */

import { type ChildProcess, spawn } from "node:child_process";
import path from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { decodeMask, maskArea } from "../src/rle.js";
import { SessionController, type UiSessionState } from "../src/state.js";

const FIXTURE = path.join(path.dirname(fileURLToPath(import.meta.url)), "serve_fixture.py");
const SEED_BOX = { x: 56, y: 46, w: 28, h: 28 };
const GRID = [
  { iterations: 25, threshold: 0.3, edge_alpha: 1000.0 },
  { iterations: 15, threshold: 0.3, edge_alpha: 1000.0 },
  { iterations: 40, threshold: 0.35, edge_alpha: 1000.0 },
];

let server: ChildProcess;
let api: ApiClient;
let sessionId: string;

function comparable(state: UiSessionState) {
  return {
    pending: state.pending,
    frames: state.frames,
    seedFrames: state.seedFrames,
    trackerFrame: state.trackerFrame,
    activeTrackers: state.activeTrackers,
  };
}

beforeAll(async () => {
  server = spawn("python3", [FIXTURE], { stdio: ["ignore", "pipe", "pipe"] });
  const stderr: string[] = [];
  server.stderr!.on("data", (chunk) => stderr.push(String(chunk)));

  const port = await new Promise<number>((resolve, reject) => {
    let buffer = "";
    const timer = setTimeout(
      () => reject(new Error(`fixture server never printed a port\n${stderr.join("")}`)),
      60_000);
    server.stdout!.on("data", (chunk) => {
      buffer += String(chunk);
      const line = buffer.split("\n")[0];
      if (line && buffer.includes("\n")) {
        clearTimeout(timer);
        resolve(JSON.parse(line).port as number);
      }
    });
    server.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`fixture server exited with ${code}\n${stderr.join("")}`));
    });
  });

  api = new ApiClient(`http://127.0.0.1:${port}`);
  for (let attempt = 0; ; attempt++) {
    try {
      await api.listVideos();
      break;
    } catch (err) {
      if (attempt >= 150) throw err;
      await new Promise((r) => setTimeout(r, 200));
    }
  }
});

afterAll(() => {
  server?.kill("SIGTERM");
});

describe("review loop against a live server", () => {
  it("seed, propagate, approve x5, pick a proposal, commit", async () => {
    const controller = await SessionController.open(api, "clip");
    sessionId = controller.sessionId;

    expect(await controller.submit(
      { kind: "draw_seed", frame: 0, boxes: [SEED_BOX] })).toBe(true);
    let state = controller.getState();
    expect(state.frames["0"]).toBe("approved");
    expect(state.seedFrames).toEqual([0]);
    expect(state.activeTrackers).toBe(1);

    expect(await controller.submit({ kind: "propagate" })).toBe(true);
    state = controller.getState();
    expect(state.pending.map((p) => p.frame)).toEqual([1, 2, 3, 4, 5, 6, 7, 8, 9, 10]);
    expect(state.cursor).toBe(1);
    // tracked boxes keep the seed's shape and drift with the target
    for (const entry of state.pending) {
      expect(entry.boxes).toHaveLength(1);
      expect(entry.boxes[0]!.w).toBe(SEED_BOX.w);
    }

    for (let i = 0; i < 5; i++) {
      expect(await controller.handleKey("a")).toBe(true);
    }
    state = controller.getState();
    for (const idx of [1, 2, 3, 4, 5]) {
      expect(state.frames[String(idx)]).toBe("approved");
    }
    expect(state.cursor).toBe(6);

    controller.goTo(5);
    expect(await controller.loadProposals(GRID)).toBe(true);
    state = controller.getState();
    expect(state.proposals).toHaveLength(3);
    expect(state.overlay).toBe("proposals");

    expect(await controller.submit({ kind: "pick_proposal", index: 0 })).toBe(true);
    const picked = controller.getState().proposals[0]!;
    expect(maskArea(picked.mask)).toBeGreaterThan(0);
    expect(await controller.confirmProposal()).toBe(true);
    state = controller.getState();
    expect(state.frames["5"]).toBe("committed");
    expect(state.overlay).toBe("ground_truth");

    // the server agrees with every incremental update the client made
    const session = await api.getSession(controller.sessionId);
    expect(session.frames).toEqual({
      "0": "approved", "1": "approved", "2": "approved", "3": "approved",
      "4": "approved", "5": "committed", "6": "pending", "7": "pending",
      "8": "pending", "9": "pending", "10": "pending",
    });
    expect(session.seed_frames).toEqual([0]);
    expect(session.cursor).toBe(6);
    expect(session.pending.map((p) => p.frame)).toEqual([6, 7, 8, 9, 10]);

    // committed ground truth round-trips as the picked proposal, bit for bit
    const stored = await api.groundTruth("clip", 5);
    expect(stored.width).toBe(200);
    expect(stored.height).toBe(160);
    expect(decodeMask(stored)).toEqual(decodeMask(picked.mask));

    const incremental = structuredClone(comparable(controller.getState()));
    await controller.resync();
    expect(comparable(controller.getState())).toEqual(incremental);

    // negative and discard persist, reject clears the remaining queue
    expect(controller.getState().cursor).toBe(6);
    expect(await controller.handleKey("n")).toBe(true);
    expect(await controller.handleKey("d")).toBe(true);
    state = controller.getState();
    expect(state.frames["6"]).toBe("negative");
    expect(state.frames["7"]).toBe("discarded");
    expect(state.cursor).toBe(8);

    expect(await controller.handleKey("r")).toBe(true);
    state = controller.getState();
    expect(state.pending).toEqual([]);
    expect(state.drawMode).toBe(true);
    expect(state.cursor).toBe(8);
    expect(state.activeTrackers).toBe(0);
    expect(state.frames["8"]).toBeUndefined();

    const refetched = await api.getSession(controller.sessionId);
    expect(refetched.frames["6"]).toBe("negative");
    expect(refetched.frames["7"]).toBe("discarded");
    expect(refetched.frames["8"]).toBeUndefined();
    expect(refetched.active_trackers).toBe(0);

    // recovery: new seeds on the rejected frame restart the loop
    expect(await controller.submit(
      { kind: "draw_seed", frame: 8, boxes: [{ x: 68, y: 54, w: 28, h: 28 }] })).toBe(true);
    expect(await controller.submit({ kind: "propagate", count: 2 })).toBe(true);
    state = controller.getState();
    expect(state.pending.map((p) => p.frame)).toEqual([9, 10]);
    expect(state.seedFrames).toEqual([0, 8]);

    const final = structuredClone(comparable(controller.getState()));
    await controller.resync();
    expect(comparable(controller.getState())).toEqual(final);
  });

  it("second session on the same video conflicts while the first is open", async () => {
    await expect(api.createSession("clip")).rejects.toMatchObject({ status: 409 });
  });

  it("unknown video and malformed body map to 404 and 400", async () => {
    await expect(api.getVideo("nope")).rejects.toMatchObject({ status: 404 });
    const response = await fetch(`${api.baseUrl}/sessions/${sessionId}/seed`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: "{}",
    });
    expect(response.status).toBe(400);
  });
});
