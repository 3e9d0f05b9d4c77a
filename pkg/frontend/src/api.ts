// Typed client for the posefactory annotation service. All geometry shown
// in the UI comes from these responses; the client never recomputes it.

export type Camera = "left" | "right";

export interface Pose {
  rotation?: number[][];
  quaternion?: number[];
  translation: [number, number, number];
}

export interface SceneSummary {
  scene_id: string;
  n_frames: number;
  objects: string[];
}

export interface FrameInfo {
  frame_index: number;
  pose_left: Pose;
  pose_right: Pose;
  image_left: string | null;
  image_right: string | null;
}

export interface SceneFrames {
  scene_id: string;
  selected: number[];
  valid_frames: number[];
  frames: FrameInfo[];
}

export interface Click {
  frame_index: number;
  camera: Camera;
  keypoint_id: number;
  pixel: [number, number];
  occluded: boolean;
}

export interface SessionState {
  session_id: string;
  scene_id: string;
  object_id: string;
  status: "open" | "committed";
  keypoint_count: number;
  selected_frames: number[];
  clicks: Click[];
}

export interface ReprojectionEntry {
  left: [number, number] | null;
  right: [number, number] | null;
}

export interface ResidualEntry {
  frame_index: number;
  camera: Camera;
  residual_px: number;
}

export interface KeypointTriangulation {
  position: [number, number, number];
  rmse_px: number;
  n_views: number;
  reprojections: Record<string, ReprojectionEntry>;
  residuals: ResidualEntry[];
}

export interface TriangulationResponse {
  session_id: string;
  keypoints: Record<string, KeypointTriangulation>;
}

export interface CommitResponse {
  session_id: string;
  object_id: string;
  world_pose: Pose;
  reprojection_rmse_px: number;
  labeled_frames: number;
}

export interface ErrorBody {
  kind: string;
  detail: unknown;
  underconstrained_keypoints?: number[];
}

/** Service error carrying the HTTP status and parsed body. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: ErrorBody,
  ) {
    super(`HTTP ${status}: ${JSON.stringify(body.detail)}`);
  }
}

/** Network-level failure (server unreachable); the UI offers a retry. */
export class NetworkError extends Error {}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, {
        method,
        headers: body === undefined ? {} : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new NetworkError(String(err));
    }
    let parsed: unknown = null;
    try {
      parsed = await response.json();
    } catch {
      parsed = { kind: "invalid_response", detail: "response was not JSON" };
    }
    if (!response.ok) {
      throw new ApiError(response.status, parsed as ErrorBody);
    }
    return parsed as T;
  }

  listScenes(): Promise<SceneSummary[]> {
    return this.request("GET", "/scenes");
  }

  sceneFrames(sceneId: string, count?: number): Promise<SceneFrames> {
    const query = count === undefined ? "" : `?count=${count}`;
    return this.request("GET", `/scenes/${encodeURIComponent(sceneId)}/frames${query}`);
  }

  imageUrl(sceneId: string, camera: Camera, frameIndex: number): string {
    return `${this.baseUrl}/scenes/${encodeURIComponent(sceneId)}/images/${camera}/${frameIndex}`;
  }

  openSession(sceneId: string, objectId: string): Promise<SessionState> {
    return this.request("POST", "/sessions", { scene_id: sceneId, object_id: objectId });
  }

  sessionState(sessionId: string): Promise<SessionState> {
    return this.request("GET", `/sessions/${sessionId}`);
  }

  putClick(sessionId: string, click: Click): Promise<SessionState> {
    return this.request("PUT", `/sessions/${sessionId}/clicks`, click);
  }

  triangulation(sessionId: string): Promise<TriangulationResponse> {
    return this.request("GET", `/sessions/${sessionId}/triangulation`);
  }

  commit(sessionId: string): Promise<CommitResponse> {
    return this.request("POST", `/sessions/${sessionId}/commit`);
  }
}
