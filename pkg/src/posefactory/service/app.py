"""FastAPI surface of the annotation service.

Endpoints mirror AnnotationService one to one; all request and response
bodies are JSON. Schema violations return 400 (not FastAPI's default
422), unknown ids 404, and conflicts (double commit, underconstrained
keypoints) 409 with the offending keypoint ids in the body.
"""

from __future__ import annotations

import mimetypes
from pathlib import Path
from typing import Literal, Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from ..schemas import SceneSpecFileModel
from .core import AnnotationService, ApiError


class SceneSummary(BaseModel):
    scene_id: str
    n_frames: int
    objects: list[str]


class PoseBody(BaseModel):
    rotation: Optional[list[list[float]]] = None
    quaternion: Optional[list[float]] = None
    translation: tuple[float, float, float]


class FrameInfo(BaseModel):
    frame_index: int
    pose_left: PoseBody
    pose_right: PoseBody
    image_left: Optional[str] = None
    image_right: Optional[str] = None


class SceneFramesResponse(BaseModel):
    scene_id: str
    selected: list[int]
    valid_frames: list[int]
    frames: list[FrameInfo]


class OpenSessionRequest(BaseModel):
    scene_id: str
    object_id: str


class ClickBody(BaseModel):
    frame_index: int
    camera: Literal["left", "right"]
    keypoint_id: int = Field(ge=0)
    pixel: tuple[float, float]
    occluded: bool = False


class SessionState(BaseModel):
    session_id: str
    scene_id: str
    object_id: str
    status: Literal["open", "committed"]
    keypoint_count: int
    selected_frames: list[int]
    clicks: list[ClickBody]


class KeypointTriangulation(BaseModel):
    position: tuple[float, float, float]
    rmse_px: float
    n_views: int
    reprojections: dict[str, dict[str, Optional[tuple[float, float]]]]
    residuals: list[dict]


class TriangulationResponse(BaseModel):
    session_id: str
    keypoints: dict[str, KeypointTriangulation]


class CommitResponse(BaseModel):
    session_id: str
    object_id: str
    world_pose: PoseBody
    reprojection_rmse_px: float
    labeled_frames: int


class PipelineRunRequest(BaseModel):
    scene_id: str
    seed: Optional[int] = None
    threads: int = 1


class SimulateRequest(BaseModel):
    spec: SceneSpecFileModel
    seed: Optional[int] = None


class EvaluateRequest(BaseModel):
    predictions: str
    ground_truth: str
    out: str = "report"


class ErrorAnalysisRequest(BaseModel):
    scene_id: str
    trials: int = Field(default=1000, ge=1)
    dither_sigma_px: Optional[float] = None
    seed: int = 0
    threads: int = 1


def create_app(root, seed: int = 0, ui_dir=None) -> FastAPI:
    service = AnnotationService(root, seed=seed)
    app = FastAPI(title="posefactory annotation service", version="1")
    app.state.service = service
    # the annotation frontend may be served from another origin
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ApiError)
    async def api_error_handler(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status_code, content=exc.payload())

    @app.exception_handler(RequestValidationError)
    async def validation_handler(_request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"kind": "schema", "detail": exc.errors()},
        )

    @app.get("/scenes", response_model=list[SceneSummary])
    def list_scenes():
        return service.list_scenes()

    @app.get("/scenes/{scene_id}/frames", response_model=SceneFramesResponse)
    def scene_frames(scene_id: str, count: Optional[int] = None):
        return service.scene_frames(scene_id, count)

    @app.get("/scenes/{scene_id}/images/{camera}/{frame_index}")
    def scene_image(scene_id: str, camera: Literal["left", "right"], frame_index: int):
        path = service.image_path(scene_id, camera, frame_index)
        media_type = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
        return FileResponse(path, media_type=media_type)

    @app.post("/sessions", response_model=SessionState, status_code=201)
    def open_session(body: OpenSessionRequest):
        return service.open_session(body.scene_id, body.object_id)

    @app.get("/sessions/{session_id}", response_model=SessionState)
    def session_state(session_id: str):
        return service.session_state(service._get_session(session_id))

    @app.put("/sessions/{session_id}/clicks", response_model=SessionState)
    def record_click(session_id: str, body: ClickBody):
        return service.record_click(
            session_id,
            frame_index=body.frame_index,
            camera=body.camera,
            keypoint_id=body.keypoint_id,
            pixel=body.pixel,
            occluded=body.occluded,
        )

    @app.get("/sessions/{session_id}/triangulation", response_model=TriangulationResponse)
    def triangulation(session_id: str):
        return service.triangulation(session_id)

    @app.post("/sessions/{session_id}/commit", response_model=CommitResponse)
    def commit(session_id: str):
        return service.commit(session_id)

    @app.post("/pipeline/run")
    def pipeline_run(body: PipelineRunRequest):
        return service.run_pipeline_cmd(body.scene_id, body.seed, body.threads)

    @app.post("/simulate")
    def simulate(body: SimulateRequest):
        return service.simulate_cmd(body.spec, body.seed)

    @app.post("/evaluate")
    def evaluate(body: EvaluateRequest):
        return service.evaluate_cmd(body.predictions, body.ground_truth, body.out)

    @app.post("/error-analysis")
    def error_analysis(body: ErrorAnalysisRequest):
        return service.error_analysis_cmd(
            body.scene_id,
            trials=body.trials,
            dither_sigma_px=body.dither_sigma_px,
            seed=body.seed,
            threads=body.threads,
        )

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
