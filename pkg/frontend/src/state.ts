// Session view model: everything the annotator sees, sourced from the
// service. The residual summary and 3D keypoints are stored verbatim
// from the triangulation response; the only client-side logic is
// bookkeeping and color classification against the pixel threshold.

import {
  ApiClient,
  ApiError,
  Camera,
  Click,
  CommitResponse,
  NetworkError,
  SceneFrames,
  SceneSummary,
  SessionState,
  TriangulationResponse,
} from "./api.js";

export type AnnotationApi = Pick<
  ApiClient,
  | "listScenes"
  | "sceneFrames"
  | "openSession"
  | "sessionState"
  | "putClick"
  | "triangulation"
  | "commit"
>;

export const DEFAULT_RESIDUAL_THRESHOLD_PX = 2.0;

export type ResidualStatus = "good" | "bad";

export interface KeypointStyle {
  id: number;
  name: string;
  color: string;
}

export interface Banner {
  tone: "info" | "error" | "success";
  text: string;
  retry?: () => Promise<void>;
}

export function keypointPalette(count: number): KeypointStyle[] {
  const palette: KeypointStyle[] = [];
  for (let k = 0; k < count; k++) {
    const hue = Math.round((360 * k) / Math.max(count, 1));
    palette.push({ id: k, name: `kp${k}`, color: `hsl(${hue}, 85%, 55%)` });
  }
  return palette;
}

export function classifyResidual(
  residualPx: number,
  thresholdPx: number = DEFAULT_RESIDUAL_THRESHOLD_PX,
): ResidualStatus {
  return residualPx < thresholdPx ? "good" : "bad";
}

export interface OverlayMarker {
  keypointId: number;
  pixel: [number, number];
  residualPx: number | null; // null when this frame/camera has no click
  status: ResidualStatus | null;
  color: string;
}

export interface ClickMarker {
  keypointId: number;
  pixel: [number, number];
  occluded: boolean;
  color: string;
}

export class SessionViewModel {
  scenes: SceneSummary[] = [];
  sceneFrames: SceneFrames | null = null;
  session: SessionState | null = null;
  triangulation: TriangulationResponse | null = null;
  commitResult: CommitResponse | null = null;
  palette: KeypointStyle[] = [];
  activeKeypoint = 0;
  banner: Banner | null = null;
  underconstrained: number[] = [];
  residualThresholdPx = DEFAULT_RESIDUAL_THRESHOLD_PX;

  constructor(private readonly api: AnnotationApi) {}

  get committed(): boolean {
    return this.session?.status === "committed";
  }

  async refreshScenes(): Promise<void> {
    this.scenes = await this.api.listScenes();
  }

  async openSession(sceneId: string, objectId: string): Promise<void> {
    this.session = await this.api.openSession(sceneId, objectId);
    this.sceneFrames = await this.api.sceneFrames(sceneId);
    this.palette = keypointPalette(this.session.keypoint_count);
    this.triangulation = null;
    this.commitResult = null;
    this.underconstrained = [];
    this.activeKeypoint = 0;
    this.banner = null;
    if (this.session.clicks.length > 0) {
      // resumed session: restore the overlay from the service
      await this.refreshTriangulation();
    }
  }

  async resumeSession(sessionId: string): Promise<void> {
    this.session = await this.api.sessionState(sessionId);
    this.sceneFrames = await this.api.sceneFrames(this.session.scene_id);
    this.palette = keypointPalette(this.session.keypoint_count);
    this.commitResult = null;
    this.underconstrained = [];
    this.banner = null;
    await this.refreshTriangulation();
  }

  private async refreshTriangulation(): Promise<void> {
    if (this.session === null) return;
    this.triangulation = await this.api.triangulation(this.session.session_id);
  }

  /** Record a keypoint click and refresh the overlay with fresh service
   * data. Network failures leave all local state intact and surface a
   * retry action on the banner. */
  async clickKeypoint(
    frameIndex: number,
    camera: Camera,
    keypointId: number,
    pixel: [number, number],
    occluded = false,
  ): Promise<void> {
    if (this.session === null) {
      throw new Error("no open session");
    }
    if (this.committed) {
      this.banner = { tone: "error", text: "session is committed; clicks are disabled" };
      return;
    }
    const click: Click = {
      frame_index: frameIndex,
      camera,
      keypoint_id: keypointId,
      pixel,
      occluded,
    };
    try {
      this.session = await this.api.putClick(this.session.session_id, click);
      await this.refreshTriangulation();
      this.banner = null;
    } catch (err) {
      if (err instanceof NetworkError) {
        this.banner = {
          tone: "error",
          text: "network failure; click not recorded",
          retry: () => this.clickKeypoint(frameIndex, camera, keypointId, pixel, occluded),
        };
        return;
      }
      if (err instanceof ApiError) {
        this.banner = { tone: "error", text: `${err.body.kind}: ${JSON.stringify(err.body.detail)}` };
        return;
      }
      throw err;
    }
  }

  async commitSession(): Promise<void> {
    if (this.session === null) {
      throw new Error("no open session");
    }
    try {
      this.commitResult = await this.api.commit(this.session.session_id);
      this.session = { ...this.session, status: "committed" };
      this.underconstrained = [];
      this.banner = {
        tone: "success",
        text:
          `pose committed: reprojection RMSE ` +
          `${this.commitResult.reprojection_rmse_px.toFixed(3)} px over ` +
          `${this.commitResult.labeled_frames} frames`,
      };
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.underconstrained = err.body.underconstrained_keypoints ?? [];
        this.banner = {
          tone: "error",
          text:
            this.underconstrained.length > 0
              ? `need clicks in at least 2 frames for: ` +
                this.underconstrained.map((k) => this.keypointName(k)).join(", ")
              : `commit rejected: ${JSON.stringify(err.body.detail)}`,
        };
        return;
      }
      if (err instanceof NetworkError) {
        this.banner = {
          tone: "error",
          text: "network failure during commit",
          retry: () => this.commitSession(),
        };
        return;
      }
      throw err;
    }
  }

  keypointName(id: number): string {
    return this.palette[id]?.name ?? `kp${id}`;
  }

  keypointColor(id: number): string {
    return this.palette[id]?.color ?? "hsl(0, 0%, 60%)";
  }

  /** Clicks recorded on one frame/camera, styled for drawing. */
  clickMarkers(frameIndex: number, camera: Camera): ClickMarker[] {
    if (this.session === null) return [];
    return this.session.clicks
      .filter((c) => c.frame_index === frameIndex && c.camera === camera)
      .map((c) => ({
        keypointId: c.keypoint_id,
        pixel: c.pixel,
        occluded: c.occluded,
        color: this.keypointColor(c.keypoint_id),
      }));
  }

  /** Reprojection overlay for one frame/camera. Only keypoints present in
   * the service triangulation response (>= 2 clicks) appear. */
  overlayMarkers(frameIndex: number, camera: Camera): OverlayMarker[] {
    if (this.triangulation === null) return [];
    const markers: OverlayMarker[] = [];
    for (const [kidStr, kp] of Object.entries(this.triangulation.keypoints)) {
      const keypointId = Number(kidStr);
      const entry = kp.reprojections[String(frameIndex)];
      const pixel = entry?.[camera];
      if (!pixel) continue;
      const residual = kp.residuals.find(
        (r) => r.frame_index === frameIndex && r.camera === camera,
      );
      markers.push({
        keypointId,
        pixel,
        residualPx: residual ? residual.residual_px : null,
        status: residual ? classifyResidual(residual.residual_px, this.residualThresholdPx) : null,
        color: this.keypointColor(keypointId),
      });
    }
    return markers;
  }

  /** Per-keypoint residual summary, verbatim from the service response. */
  residualSummary(): { keypointId: number; name: string; rmsePx: number; status: ResidualStatus }[] {
    if (this.triangulation === null) return [];
    return Object.entries(this.triangulation.keypoints).map(([kidStr, kp]) => {
      const keypointId = Number(kidStr);
      return {
        keypointId,
        name: this.keypointName(keypointId),
        rmsePx: kp.rmse_px,
        status: classifyResidual(
          Math.max(kp.rmse_px, ...kp.residuals.map((r) => r.residual_px)),
          this.residualThresholdPx,
        ),
      };
    });
  }

  /** Keypoints still lacking the two clicks commit requires. */
  pendingKeypoints(): number[] {
    if (this.session === null) return [];
    const counts = new Map<number, number>();
    for (const c of this.session.clicks) {
      if (!c.occluded) {
        counts.set(c.keypoint_id, (counts.get(c.keypoint_id) ?? 0) + 1);
      }
    }
    const pending: number[] = [];
    for (let k = 0; k < (this.session.keypoint_count ?? 0); k++) {
      if ((counts.get(k) ?? 0) < 2) pending.push(k);
    }
    return pending;
  }
}
