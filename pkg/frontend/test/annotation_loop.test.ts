// Scripted end-to-end annotation session against the real posefactory
// service: exact synthetic clicks for 3 keypoints across 4 frames commit
// a pose within 1e-6 of ground truth; a deliberately 20px-wrong click
// shows a red residual overlay, and correcting it restores green.

import { execFile, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import net from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, Camera, Pose } from "../src/api.js";
import { SessionViewModel } from "../src/state.js";

const execFileAsync = promisify(execFile);

const KEYPOINTS: [number, number, number][] = [
  [0.06, 0, 0],
  [0, 0.06, 0],
  [0, 0, 0.06],
];

interface AnnotationRecord {
  frame_index: number;
  camera: Camera;
  object_id: string;
  keypoint_id: number;
  pixel: [number, number];
  occluded: boolean;
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = net.createServer();
    srv.listen(0, "127.0.0.1", () => {
      const addr = srv.address();
      if (addr && typeof addr === "object") {
        const port = addr.port;
        srv.close(() => resolve(port));
      } else {
        reject(new Error("no port"));
      }
    });
  });
}

function rotationOf(pose: Pose): number[][] {
  if (!pose.rotation) throw new Error("pose has no rotation matrix");
  return pose.rotation;
}

function geodesicAngle(a: number[][], b: number[][]): number {
  // angle of a @ b^T via trace
  let trace = 0;
  for (let i = 0; i < 3; i++) {
    for (let k = 0; k < 3; k++) {
      trace += a[i][k] * b[i][k]; // (a b^T)_ii = sum_k a_ik b_ik
    }
  }
  const c = Math.min(1, Math.max(-1, (trace - 1) / 2));
  return Math.acos(c);
}

describe("annotation loop against the live service", () => {
  const root = mkdtempSync(join(tmpdir(), "posefactory-ui-"));
  let server: ChildProcess | null = null;
  let base = "";
  let annotations: AnnotationRecord[] = [];
  let groundTruthPose: { rotation: number[][]; translation: number[] };

  beforeAll(async () => {
    const diameter = Math.sqrt(0.06 * 0.06 + 0.06 * 0.06);
    const spec = {
      scene_id: "uiscene",
      rng_seed: 17,
      pixel_noise_sigma: 0.0,
      annotated_frame_count: 4,
      trajectory: { kind: "arc", frame_count: 40 },
      objects: [
        {
          model: {
            object_id: "tripod",
            keypoints: KEYPOINTS,
            model_points: KEYPOINTS,
            diameter,
            symmetry: { kind: "none" },
          },
          pose: {
            quaternion: [0.9659258262890683, 0.0, 0.0, 0.25881904510252074],
            translation: [0.02, -0.01, 0.03],
          },
        },
      ],
    };
    const specPath = join(root, "spec.json");
    writeFileSync(specPath, JSON.stringify(spec));
    await execFileAsync("posefactory", ["--root", root, "simulate", specPath]);

    annotations = JSON.parse(
      readFileSync(join(root, "scenes", "uiscene", "annotations.json"), "utf-8"),
    ).annotations;
    const truth = JSON.parse(
      readFileSync(join(root, "scenes", "uiscene", "ground_truth.json"), "utf-8"),
    );
    groundTruthPose = truth.object_world_poses.tripod;

    const port = await freePort();
    base = `http://127.0.0.1:${port}`;
    server = spawn("posefactory", ["--root", root, "serve", "--port", String(port)], {
      stdio: "ignore",
    });
    const deadline = Date.now() + 30_000;
    for (;;) {
      try {
        const r = await fetch(`${base}/scenes`);
        if (r.ok) break;
      } catch {
        // server still starting
      }
      if (Date.now() > deadline) throw new Error("service did not start");
      await new Promise((resolve) => setTimeout(resolve, 150));
    }
  }, 60_000);

  afterAll(() => {
    server?.kill();
  });

  it("commits an exact pose and color-codes a wrong click red then green", async () => {
    const vm = new SessionViewModel(new ApiClient(base));
    await vm.refreshScenes();
    expect(vm.scenes.map((s) => s.scene_id)).toContain("uiscene");
    await vm.openSession("uiscene", "tripod");
    expect(vm.session?.keypoint_count).toBe(3);
    expect(vm.session!.selected_frames).toHaveLength(4);
    // click on the frames that carry exact synthetic projections; the
    // session's FPS suggestion may tie-break differently on an arc
    const frames = [...new Set(annotations.map((a) => a.frame_index))].sort(
      (a, b) => a - b,
    );
    expect(frames).toHaveLength(4);

    const exact = (frame: number, camera: Camera, kid: number): [number, number] => {
      const a = annotations.find(
        (x) => x.frame_index === frame && x.camera === camera && x.keypoint_id === kid,
      );
      if (!a) throw new Error(`no exact projection for frame ${frame} ${camera} kp${kid}`);
      return a.pixel;
    };

    // keypoint 0: one exact stereo pair, then a click 20px off in a second frame
    await vm.clickKeypoint(frames[0], "left", 0, exact(frames[0], "left", 0));
    await vm.clickKeypoint(frames[0], "right", 0, exact(frames[0], "right", 0));
    const good = exact(frames[1], "left", 0);
    await vm.clickKeypoint(frames[1], "left", 0, [good[0] + 20, good[1]]);

    let overlay = vm.overlayMarkers(frames[1], "left");
    const wrong = overlay.find((m) => m.keypointId === 0);
    expect(wrong).toBeDefined();
    expect(wrong!.residualPx).not.toBeNull();
    expect(wrong!.residualPx!).toBeGreaterThan(2.0);
    expect(wrong!.status).toBe("bad"); // red overlay before commit

    // correcting the click restores green everywhere for keypoint 0
    await vm.clickKeypoint(frames[1], "left", 0, good);
    overlay = vm.overlayMarkers(frames[1], "left");
    const fixed = overlay.find((m) => m.keypointId === 0);
    expect(fixed!.status).toBe("good");
    for (const frame of frames) {
      for (const camera of ["left", "right"] as Camera[]) {
        for (const m of vm.overlayMarkers(frame, camera)) {
          if (m.status !== null) expect(m.status).toBe("good");
        }
      }
    }

    // commit before the other keypoints are clicked: 409 checklist
    await vm.commitSession();
    expect(vm.committed).toBe(false);
    expect(vm.banner?.tone).toBe("error");

    // exact clicks for all 3 keypoints across all 4 frames, both cameras
    for (const a of annotations) {
      if (!frames.includes(a.frame_index)) continue;
      await vm.clickKeypoint(a.frame_index, a.camera, a.keypoint_id, a.pixel);
    }
    expect(vm.pendingKeypoints()).toEqual([]);

    await vm.commitSession();
    expect(vm.committed).toBe(true);
    expect(vm.commitResult).not.toBeNull();
    expect(vm.commitResult!.reprojection_rmse_px).toBeLessThan(1e-6);

    const est = vm.commitResult!.world_pose;
    const angle = geodesicAngle(rotationOf(est), groundTruthPose.rotation);
    expect(angle).toBeLessThan(1e-6);
    for (let i = 0; i < 3; i++) {
      expect(
        Math.abs(est.translation[i] - groundTruthPose.translation[i]),
      ).toBeLessThan(1e-6);
    }

    // the UI state round-trips a reload from the service event log
    const reloaded = new SessionViewModel(new ApiClient(base));
    await reloaded.refreshScenes();
    await reloaded.resumeSession(vm.session!.session_id);
    expect(reloaded.committed).toBe(true);
    expect(reloaded.session?.clicks.length).toBe(vm.session?.clicks.length);
  }, 120_000);
});
