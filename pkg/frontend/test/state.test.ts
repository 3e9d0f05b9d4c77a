import { describe, expect, it } from "vitest";

import {
  Click,
  SessionState,
  TriangulationResponse,
} from "../src/api.js";
import {
  AnnotationApi,
  SessionViewModel,
  classifyResidual,
  keypointPalette,
} from "../src/state.js";

function baseSession(clicks: Click[] = []): SessionState {
  return {
    session_id: "s1",
    scene_id: "scene",
    object_id: "widget",
    status: "open",
    keypoint_count: 3,
    selected_frames: [0, 5, 9, 12],
    clicks,
  };
}

function emptyTriangulation(): TriangulationResponse {
  return { session_id: "s1", keypoints: {} };
}

class FakeApi implements AnnotationApi {
  session: SessionState = baseSession();
  tri: TriangulationResponse = emptyTriangulation();
  failNextPut = false;
  commitError: { status: number; body: object } | null = null;
  putCalls = 0;

  async listScenes() {
    return [{ scene_id: "scene", n_frames: 20, objects: ["widget"] }];
  }

  async sceneFrames() {
    return {
      scene_id: "scene",
      selected: this.session.selected_frames,
      valid_frames: [0, 5, 9, 12],
      frames: [],
    };
  }

  async openSession() {
    return this.session;
  }

  async sessionState() {
    return this.session;
  }

  async putClick(_sid: string, click: Click) {
    this.putCalls += 1;
    if (this.failNextPut) {
      this.failNextPut = false;
      const { NetworkError } = await import("../src/api.js");
      throw new NetworkError("connection refused");
    }
    const key = (c: Click) =>
      `${c.frame_index}/${c.camera}/${c.keypoint_id}`;
    const clicks = this.session.clicks.filter((c) => key(c) !== key(click));
    this.session = { ...this.session, clicks: [...clicks, click] };
    return this.session;
  }

  async triangulation() {
    return this.tri;
  }

  async commit() {
    if (this.commitError !== null) {
      const { ApiError } = await import("../src/api.js");
      throw new ApiError(this.commitError.status, this.commitError.body as never);
    }
    return {
      session_id: "s1",
      object_id: "widget",
      world_pose: { rotation: [[1, 0, 0], [0, 1, 0], [0, 0, 1]], translation: [0, 0, 0] as [number, number, number] },
      reprojection_rmse_px: 0.12,
      labeled_frames: 4,
    };
  }
}

async function openVm(api: FakeApi): Promise<SessionViewModel> {
  const vm = new SessionViewModel(api);
  await vm.refreshScenes();
  await vm.openSession("scene", "widget");
  return vm;
}

describe("palette and residual classification", () => {
  it("assigns distinct colors per keypoint", () => {
    const palette = keypointPalette(4);
    expect(palette.map((p) => p.id)).toEqual([0, 1, 2, 3]);
    expect(new Set(palette.map((p) => p.color)).size).toBe(4);
  });

  it("classifies residuals against the 2px default", () => {
    expect(classifyResidual(0.4)).toBe("good");
    expect(classifyResidual(1.99)).toBe("good");
    expect(classifyResidual(2.0)).toBe("bad");
    expect(classifyResidual(21.7)).toBe("bad");
  });
});

describe("click flow", () => {
  it("first click draws no overlay (service returns none)", async () => {
    const api = new FakeApi();
    const vm = await openVm(api);
    await vm.clickKeypoint(0, "left", 0, [100, 120]);
    expect(vm.clickMarkers(0, "left")).toHaveLength(1);
    expect(vm.overlayMarkers(0, "left")).toHaveLength(0);
  });

  it("second click surfaces the service overlay in all frames", async () => {
    const api = new FakeApi();
    const vm = await openVm(api);
    await vm.clickKeypoint(0, "left", 0, [100, 120]);
    api.tri = {
      session_id: "s1",
      keypoints: {
        "0": {
          position: [0.01, 0.02, 0.03],
          rmse_px: 0.3,
          n_views: 2,
          reprojections: {
            "0": { left: [100.1, 120.2], right: [90.0, 120.0] },
            "5": { left: [230.0, 180.0], right: null },
            "9": { left: [10.0, 20.0], right: [11.0, 21.0] },
            "12": { left: null, right: null },
          },
          residuals: [
            { frame_index: 0, camera: "left", residual_px: 0.3 },
            { frame_index: 5, camera: "left", residual_px: 0.5 },
          ],
        },
      },
    };
    await vm.clickKeypoint(5, "left", 0, [230, 180]);
    expect(vm.overlayMarkers(0, "left")[0].status).toBe("good");
    expect(vm.overlayMarkers(0, "right")[0].residualPx).toBeNull();
    expect(vm.overlayMarkers(5, "right")).toHaveLength(0); // null reprojection
    expect(vm.overlayMarkers(9, "left")).toHaveLength(1); // un-clicked frame still overlaid
    expect(vm.residualSummary()[0].status).toBe("good");
  });

  it("keeps state and offers retry on network failure", async () => {
    const api = new FakeApi();
    const vm = await openVm(api);
    await vm.clickKeypoint(0, "left", 0, [100, 120]);
    api.failNextPut = true;
    await vm.clickKeypoint(5, "left", 0, [230, 180]);
    expect(vm.session?.clicks).toHaveLength(1); // failed click not recorded
    expect(vm.banner?.tone).toBe("error");
    expect(vm.banner?.retry).toBeDefined();
    await vm.banner?.retry?.();
    expect(vm.session?.clicks).toHaveLength(2);
    expect(vm.banner).toBeNull();
  });

  it("rejects clicks after commit with a message", async () => {
    const api = new FakeApi();
    const vm = await openVm(api);
    await vm.commitSession();
    expect(vm.committed).toBe(true);
    const before = api.putCalls;
    await vm.clickKeypoint(0, "left", 0, [1, 2]);
    expect(api.putCalls).toBe(before); // no request sent
    expect(vm.banner?.tone).toBe("error");
  });
});

describe("commit flow", () => {
  it("renders the 409 checklist of underconstrained keypoints", async () => {
    const api = new FakeApi();
    const vm = await openVm(api);
    api.commitError = {
      status: 409,
      body: {
        kind: "underconstrained",
        detail: "keypoints need clicks in at least 2 frames",
        underconstrained_keypoints: [1, 2],
      },
    };
    await vm.commitSession();
    expect(vm.underconstrained).toEqual([1, 2]);
    expect(vm.banner?.text).toContain("kp1");
    expect(vm.banner?.text).toContain("kp2");
    expect(vm.committed).toBe(false);
  });

  it("locks the session and shows the fitted pose summary on success", async () => {
    const api = new FakeApi();
    const vm = await openVm(api);
    await vm.commitSession();
    expect(vm.committed).toBe(true);
    expect(vm.commitResult?.reprojection_rmse_px).toBeCloseTo(0.12);
    expect(vm.banner?.tone).toBe("success");
  });

  it("tracks pending keypoints toward the two-click requirement", async () => {
    const api = new FakeApi();
    const vm = await openVm(api);
    expect(vm.pendingKeypoints()).toEqual([0, 1, 2]);
    await vm.clickKeypoint(0, "left", 0, [1, 1]);
    await vm.clickKeypoint(5, "left", 0, [2, 2]);
    expect(vm.pendingKeypoints()).toEqual([1, 2]);
  });
});

describe("session restore", () => {
  it("rebuilds the view model from the service state", async () => {
    const api = new FakeApi();
    api.session = baseSession([
      { frame_index: 0, camera: "left", keypoint_id: 0, pixel: [5, 6], occluded: false },
    ]);
    const vm = new SessionViewModel(api);
    await vm.resumeSession("s1");
    expect(vm.session?.clicks).toHaveLength(1);
    expect(vm.palette).toHaveLength(3);
  });
});
