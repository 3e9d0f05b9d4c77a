"""Application layer: everything the HTTP endpoints and the CLI can do.

Stateless with respect to requests; scene geometry is computed once per
scene and cached. Annotation sessions are persisted as append-only JSONL
event logs under <root>/sessions/, so a crash never loses clicks.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import geom
from ..errors import (
    KeypointUnderconstrained,
    PoseFactoryError,
    SchemaError,
)
from ..estimators import RansacConfig, triangulate_point
from ..metrics import PosePairing, add_accuracy, add_auc
from ..pipeline import (
    DEFAULT_ANNOTATION_FRAMES,
    build_fiducial_map,
    fit_and_propagate,
    localize_moving_frames,
    localize_static_cameras,
    run_pipeline,
    select_annotation_frames,
    triangulate_object_keypoints,
)
from ..scene import Annotation, SceneRecord
from ..schemas import (
    AnnotationsFileModel,
    EvaluationFileModel,
    ErrorReportFileModel,
    GroundTruthFileModel,
    ObjectPosesModel,
    ObjectReportModel,
    PoseModel,
    PosesFileModel,
    ProjectLayout,
    ReportFileModel,
    SceneSpecFileModel,
    ValidityModel,
    ground_truth_to_file,
    load_model_file,
    poses_file_from_result,
    scene_record_to_files,
    spec_from_file,
    write_model_file,
)
from ..simulation import generate_scene, monte_carlo_label_error, reprojection_rmse


class ApiError(Exception):
    """Service-level error with an HTTP status and a JSON payload."""

    def __init__(self, status_code: int, kind: str, detail: str, **extra):
        self.status_code = status_code
        self.kind = kind
        self.detail = detail
        self.extra = extra
        super().__init__(detail)

    def payload(self) -> dict:
        return {"kind": self.kind, "detail": self.detail, **self.extra}


@dataclass
class Session:
    session_id: str
    scene_id: str
    object_id: str
    status: str = "open"  # open | committed
    # (frame_index, camera, keypoint_id) -> (pixel tuple, occluded)
    clicks: dict = field(default_factory=dict)
    selected_frames: list = field(default_factory=list)

    def click_list(self) -> list:
        return [
            {
                "frame_index": f,
                "camera": c,
                "keypoint_id": k,
                "pixel": list(pix),
                "occluded": occ,
            }
            for (f, c, k), (pix, occ) in sorted(self.clicks.items())
        ]


@dataclass
class SceneRuntime:
    record: SceneRecord
    localized: bool = False

    def ensure_localized(self, config: RansacConfig):
        if self.localized:
            return
        record = self.record
        record.static_views = localize_static_cameras(
            record.board,
            record.static_board_detections,
            record.static_intrinsics,
            config,
        )
        record.fiducial_map = build_fiducial_map(
            record.static_views, record.static_marker_detections, record.marker_sizes
        )
        record.moving_poses, record.validity = localize_moving_frames(record, config)
        self.localized = True


class AnnotationService:
    """Shared application layer over one project root."""

    def __init__(self, root, seed: int = 0):
        self.layout = ProjectLayout(root)
        self.seed = seed
        self._scenes: dict[str, SceneRuntime] = {}
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        # per-session ordering contract: mutations are serialized
        self._session_lock = threading.Lock()
        self._load_sessions()

    # -- scene access -----------------------------------------------------

    def _config(self, seed=None) -> RansacConfig:
        return RansacConfig(seed=self.seed if seed is None else seed)

    def runtime(self, scene_id: str, localize: bool = True) -> SceneRuntime:
        with self._lock:
            rt = self._scenes.get(scene_id)
            if rt is None:
                if scene_id not in self.layout.scene_ids():
                    raise ApiError(404, "unknown_scene", f"unknown scene {scene_id!r}")
                try:
                    record = self.layout.load_scene_record(scene_id)
                except SchemaError as exc:
                    raise ApiError(
                        400, "schema", str(exc), file=exc.path
                    ) from exc
                rt = SceneRuntime(record=record)
                self._scenes[scene_id] = rt
        if localize:
            try:
                rt.ensure_localized(self._config())
            except PoseFactoryError as exc:
                raise ApiError(422, "pipeline", f"scene localization failed: {exc}") from exc
        return rt

    def list_scenes(self) -> list:
        out = []
        for scene_id in self.layout.scene_ids():
            rt = self.runtime(scene_id, localize=False)
            out.append(
                {
                    "scene_id": scene_id,
                    "n_frames": len(rt.record.frames),
                    "objects": list(rt.record.object_ids),
                }
            )
        return out

    def scene_frames(self, scene_id: str, count: int | None = None) -> dict:
        rt = self.runtime(scene_id)
        record = rt.record
        n = count or DEFAULT_ANNOTATION_FRAMES
        valid = record.valid_frame_indices()
        if not valid:
            raise ApiError(422, "pipeline", "scene has no valid frames")
        n = min(n, len(valid))
        selected = select_annotation_frames(record.moving_poses, n)
        frames = []
        image_refs = self._image_refs(scene_id)
        for j in valid:
            frames.append(
                {
                    "frame_index": j,
                    "pose_left": PoseModel.from_pose(record.moving_poses[j]).model_dump(),
                    "pose_right": PoseModel.from_pose(
                        record.rig.right_view(record.moving_poses[j])
                    ).model_dump(),
                    "image_left": image_refs.get((j, "left")),
                    "image_right": image_refs.get((j, "right")),
                }
            )
        return {
            "scene_id": scene_id,
            "selected": selected,
            "valid_frames": valid,
            "frames": frames,
        }

    def _image_refs(self, scene_id: str) -> dict:
        refs = {}
        images = self.layout.scene_dir(scene_id) / "images"
        if images.is_dir():
            for path in images.iterdir():
                stem = path.stem  # "<frame:06d>_<camera>"
                parts = stem.split("_")
                if len(parts) == 2 and parts[0].isdigit() and parts[1] in ("left", "right"):
                    refs[(int(parts[0]), parts[1])] = f"images/{path.name}"
        return refs

    def image_path(self, scene_id: str, camera: str, frame_index: int) -> Path:
        refs = self._image_refs(scene_id)
        rel = refs.get((frame_index, camera))
        if rel is None:
            raise ApiError(
                404, "unknown_image",
                f"no image for scene {scene_id} frame {frame_index} camera {camera}",
            )
        return self.layout.scene_dir(scene_id) / rel

    # -- sessions ---------------------------------------------------------

    @property
    def _sessions_dir(self) -> Path:
        return self.layout.root / "sessions"

    def _session_log(self, session_id: str) -> Path:
        return self._sessions_dir / f"{session_id}.jsonl"

    def _append_event(self, session_id: str, event: dict) -> None:
        self._sessions_dir.mkdir(parents=True, exist_ok=True)
        with self._session_log(session_id).open("a") as fh:
            fh.write(json.dumps(event) + "\n")

    def _load_sessions(self) -> None:
        if not self._sessions_dir.is_dir():
            return
        for path in sorted(self._sessions_dir.glob("*.jsonl")):
            session = None
            for line in path.read_text().splitlines():
                if not line.strip():
                    continue
                event = json.loads(line)
                if event["event"] == "open":
                    session = Session(
                        session_id=event["session_id"],
                        scene_id=event["scene_id"],
                        object_id=event["object_id"],
                        selected_frames=event.get("selected_frames", []),
                    )
                elif session is not None and event["event"] == "click":
                    key = (event["frame_index"], event["camera"], event["keypoint_id"])
                    session.clicks[key] = (tuple(event["pixel"]), event["occluded"])
                elif session is not None and event["event"] == "commit":
                    session.status = "committed"
            if session is not None:
                self._sessions[session.session_id] = session

    def _get_session(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise ApiError(404, "unknown_session", f"unknown session {session_id!r}")
        return session

    def session_state(self, session: Session) -> dict:
        rt = self.runtime(session.scene_id, localize=False)
        model = rt.record.models.get(session.object_id)
        return {
            "session_id": session.session_id,
            "scene_id": session.scene_id,
            "object_id": session.object_id,
            "status": session.status,
            "keypoint_count": 0 if model is None else len(model.canonical_keypoints),
            "selected_frames": session.selected_frames,
            "clicks": session.click_list(),
        }

    def open_session(self, scene_id: str, object_id: str) -> dict:
        rt = self.runtime(scene_id)
        if object_id not in rt.record.object_ids:
            raise ApiError(
                404, "unknown_object",
                f"scene {scene_id!r} has no object {object_id!r}",
            )
        if object_id not in rt.record.models:
            raise ApiError(
                404, "unknown_object",
                f"no model file for object {object_id!r}",
            )
        n = min(DEFAULT_ANNOTATION_FRAMES, len(rt.record.moving_poses))
        selected = select_annotation_frames(rt.record.moving_poses, n)
        session = Session(
            session_id=uuid.uuid4().hex,
            scene_id=scene_id,
            object_id=object_id,
            selected_frames=selected,
        )
        self._sessions[session.session_id] = session
        self._append_event(
            session.session_id,
            {
                "event": "open",
                "session_id": session.session_id,
                "scene_id": scene_id,
                "object_id": object_id,
                "selected_frames": selected,
            },
        )
        return self.session_state(session)

    def record_click(
        self,
        session_id: str,
        frame_index: int,
        camera: str,
        keypoint_id: int,
        pixel,
        occluded: bool = False,
    ) -> dict:
        session = self._get_session(session_id)
        if session.status == "committed":
            raise ApiError(409, "committed", "session is committed and immutable")
        rt = self.runtime(session.scene_id)
        record = rt.record
        if frame_index not in record.moving_poses:
            raise ApiError(
                400, "invalid_frame", f"frame {frame_index} is not a valid frame"
            )
        model = record.models[session.object_id]
        if not (0 <= keypoint_id < len(model.canonical_keypoints)):
            raise ApiError(
                400, "invalid_keypoint",
                f"keypoint {keypoint_id} outside [0, {len(model.canonical_keypoints)})",
            )
        intr = record.rig.left if camera == "left" else record.rig.right
        if not (0 <= pixel[0] <= intr.image_width - 1 and 0 <= pixel[1] <= intr.image_height - 1):
            raise ApiError(400, "invalid_pixel", f"pixel {pixel} outside the image")
        key = (frame_index, camera, keypoint_id)
        value = (tuple(float(v) for v in pixel), bool(occluded))
        with self._session_lock:
            if session.clicks.get(key) != value:  # repeated identical click is a no-op
                session.clicks[key] = value
                self._append_event(
                    session_id,
                    {
                        "event": "click",
                        "frame_index": frame_index,
                        "camera": camera,
                        "keypoint_id": keypoint_id,
                        "pixel": list(value[0]),
                        "occluded": value[1],
                    },
                )
        return self.session_state(session)

    def _session_observations(self, session: Session, record: SceneRecord) -> dict:
        """keypoint id -> list of (view, pixel) from non-occluded clicks."""
        obs = {}
        for (frame, camera, kid), (pixel, occluded) in session.clicks.items():
            if occluded or frame not in record.moving_poses:
                continue
            obs.setdefault(kid, []).append(
                (record.view_for(frame, camera), np.asarray(pixel))
            )
        return obs

    def triangulation(self, session_id: str) -> dict:
        session = self._get_session(session_id)
        rt = self.runtime(session.scene_id)
        record = rt.record
        obs = self._session_observations(session, record)
        keypoints = {}
        for kid, views in sorted(obs.items()):
            if len(views) < 2:
                continue
            tp = triangulate_point(views)
            reprojections = {}
            for j in record.valid_frame_indices():
                entry = {}
                for camera in ("left", "right"):
                    view = record.view_for(j, camera)
                    pix, z = geom.project_points(view, tp.position[None, :])
                    inside = z[0] > 1e-9 and bool(view.intrinsics.contains(pix)[0])
                    entry[camera] = list(pix[0]) if inside else None
                reprojections[str(j)] = entry
            residuals = []
            for (frame, camera, k), (pixel, occluded) in sorted(session.clicks.items()):
                if k != kid or occluded or frame not in record.moving_poses:
                    continue
                view = record.view_for(frame, camera)
                pix, z = geom.project_points(view, tp.position[None, :])
                r = float(np.linalg.norm(pix[0] - np.asarray(pixel))) if z[0] > 1e-9 else float("inf")
                residuals.append(
                    {"frame_index": frame, "camera": camera, "residual_px": r}
                )
            keypoints[str(kid)] = {
                "position": list(tp.position),
                "rmse_px": tp.reprojection_rmse_px,
                "n_views": tp.view_count,
                "reprojections": reprojections,
                "residuals": residuals,
            }
        return {"session_id": session_id, "keypoints": keypoints}

    def commit(self, session_id: str) -> dict:
        with self._session_lock:
            return self._commit_locked(session_id)

    def _commit_locked(self, session_id: str) -> dict:
        session = self._get_session(session_id)
        if session.status == "committed":
            raise ApiError(409, "committed", "session already committed",
                           underconstrained_keypoints=[])
        rt = self.runtime(session.scene_id)
        record = rt.record
        model = record.models[session.object_id]
        obs = self._session_observations(session, record)
        underconstrained = sorted(k for k, v in obs.items() if len(v) < 2)
        usable = {k: v for k, v in obs.items() if len(v) >= 2}
        if underconstrained or len(usable) < 3:
            detail = "keypoints need clicks in at least 2 frames"
            if len(usable) < 3:
                detail = (
                    f"only {len(usable)} keypoints have >= 2 clicks; "
                    "3 required for pose fitting"
                )
            raise ApiError(
                409, "underconstrained", detail,
                underconstrained_keypoints=underconstrained,
            )

        annotations = [
            Annotation(
                frame_index=frame,
                camera=camera,
                object_id=session.object_id,
                keypoint_id=kid,
                pixel=np.asarray(pixel),
                occluded=occluded,
            )
            for (frame, camera, kid), (pixel, occluded) in sorted(session.clicks.items())
        ]
        record.annotations = [
            a for a in record.annotations if a.object_id != session.object_id
        ] + annotations
        try:
            keypoints = triangulate_object_keypoints(record, session.object_id)
            frame_poses = fit_and_propagate(
                record, session.object_id, keypoints, model, self._config()
            )
        except KeypointUnderconstrained as exc:
            raise ApiError(
                409, "underconstrained", str(exc),
                underconstrained_keypoints=list(exc.keypoint_ids),
            ) from exc
        except PoseFactoryError as exc:
            raise ApiError(422, "pipeline", str(exc)) from exc

        rmse = reprojection_rmse(record, session.object_id)
        self._write_annotations(record)
        self._merge_poses_file(record, session.object_id, frame_poses, keypoints, rmse)
        session.status = "committed"
        self._append_event(session_id, {"event": "commit"})
        return {
            "session_id": session_id,
            "object_id": session.object_id,
            "world_pose": PoseModel.from_pose(
                record.object_world_poses[session.object_id]
            ).model_dump(),
            "reprojection_rmse_px": rmse,
            "labeled_frames": len(frame_poses),
        }

    def _write_annotations(self, record: SceneRecord) -> None:
        _, _, annotations_file = scene_record_to_files(record)
        write_model_file(
            self.layout.scene_dir(record.scene_id) / "annotations.json",
            annotations_file,
        )

    def _merge_poses_file(self, record, object_id, frame_poses, keypoints, rmse) -> None:
        path = self.layout.scene_dir(record.scene_id) / "poses.json"
        if path.exists():
            poses_file = load_model_file(path, PosesFileModel)
        else:
            poses_file = PosesFileModel(scene_id=record.scene_id)
        poses_file.objects[object_id] = ObjectPosesModel(
            world_pose=PoseModel.from_pose(record.object_world_poses[object_id]),
            reprojection_rmse_px=rmse,
            frame_poses={str(j): PoseModel.from_pose(p) for j, p in frame_poses.items()},
            keypoints_world={str(k): tuple(tp.position) for k, tp in keypoints.items()},
        )
        poses_file.validity = [
            ValidityModel(
                frame_index=v.frame_index,
                detected_markers=v.detected_markers,
                detected_corners=v.detected_corners,
                valid=v.valid,
                reason=v.reason,
            )
            for v in record.validity
        ]
        write_model_file(path, poses_file)

    # -- batch commands ----------------------------------------------------

    def run_pipeline_cmd(self, scene_id: str, seed: int | None = None,
                         threads: int = 1) -> dict:
        if scene_id not in self.layout.scene_ids():
            raise ApiError(404, "unknown_scene", f"unknown scene {scene_id!r}")
        try:
            record = self.layout.load_scene_record(scene_id, require_annotations=True)
        except SchemaError as exc:
            raise ApiError(400, "schema", str(exc), file=exc.path) from exc
        missing = [oid for oid in {a.object_id for a in record.annotations}
                   if oid not in record.models]
        if missing:
            raise ApiError(
                400, "schema",
                f"no model files for annotated objects: {sorted(missing)}",
                file=str(self.layout.models_dir),
            )
        try:
            result = run_pipeline(
                record, record.models, self._config(seed), threads=threads
            )
        except KeypointUnderconstrained as exc:
            raise ApiError(
                409, "underconstrained", str(exc),
                underconstrained_keypoints=list(exc.keypoint_ids),
            ) from exc
        except PoseFactoryError as exc:
            raise ApiError(422, "pipeline", str(exc)) from exc
        poses_file = poses_file_from_result(result)
        path = self.layout.scene_dir(scene_id) / "poses.json"
        write_model_file(path, poses_file)
        self._scenes[scene_id] = SceneRuntime(record=record, localized=True)
        return {
            "scene_id": scene_id,
            "poses_path": str(path),
            "total_frames": len(record.frames),
            "valid_frames": result.valid_frame_count,
            "objects": {
                oid: {
                    "reprojection_rmse_px": result.reprojection_rmse_px[oid],
                    "labeled_frames": len(result.frame_poses[oid]),
                }
                for oid in result.world_poses
            },
        }

    def simulate_cmd(self, spec_model: SceneSpecFileModel,
                     seed: int | None = None) -> dict:
        if seed is not None:
            spec_model = spec_model.model_copy(update={"rng_seed": seed})
        try:
            spec = spec_from_file(spec_model)
            record, truth = generate_scene(spec)
        except PoseFactoryError as exc:
            raise ApiError(400, "invalid_spec", str(exc)) from exc
        scene_dir = self.layout.write_scene(record)
        write_model_file(
            scene_dir / "ground_truth.json",
            ground_truth_to_file(record.scene_id, truth),
        )
        self._scenes.pop(record.scene_id, None)
        return {
            "scene_id": record.scene_id,
            "path": str(scene_dir),
            "frames": len(record.frames),
            "annotations": len(record.annotations),
            "objects": list(record.object_ids),
        }

    def evaluate_cmd(self, predictions_path, ground_truth_path,
                     out_name: str = "report") -> dict:
        try:
            preds = load_model_file(predictions_path, EvaluationFileModel)
            gts = load_model_file(ground_truth_path, EvaluationFileModel)
        except SchemaError as exc:
            raise ApiError(400, "schema", str(exc), file=exc.path) from exc
        models = self.layout.load_models()
        unknown = {
            e.object_id for e in list(preds.entries) + list(gts.entries)
        } - set(models)
        if unknown:
            raise ApiError(
                400, "schema", f"unknown object ids: {sorted(unknown)}",
                file=str(self.layout.models_dir),
            )
        by_key = {(e.object_id, e.sample_id): e for e in preds.entries}
        per_object_pairs: dict = {}
        missing_total = 0
        for gt in gts.entries:
            pred = by_key.get((gt.object_id, gt.sample_id))
            predicted_pose = None
            if pred is not None and pred.pose is not None:
                predicted_pose = pred.pose.to_pose()
            else:
                missing_total += 1
            per_object_pairs.setdefault(gt.object_id, []).append(
                PosePairing(predicted_pose, gt.pose.to_pose(), models[gt.object_id])
            )
        report = ReportFileModel(missing_predictions=missing_total)
        for oid in sorted(per_object_pairs):
            pairs = per_object_pairs[oid]
            accuracy, _ = add_accuracy(pairs)
            auc = add_auc(pairs)
            n_missing = sum(1 for p in pairs if p.predicted is None)
            report.per_object[oid] = ObjectReportModel(
                auc_percent=100.0 * auc,
                accuracy_percent=100.0 * accuracy,
                count=len(pairs),
                missing=n_missing,
            )
        if report.per_object:
            report.mean_auc_percent = float(
                np.mean([r.auc_percent for r in report.per_object.values()])
            )
            report.mean_accuracy_percent = float(
                np.mean([r.accuracy_percent for r in report.per_object.values()])
            )
        json_path = self.layout.reports_dir / f"{out_name}.json"
        write_model_file(json_path, report)
        text = render_report_table(report)
        text_path = self.layout.reports_dir / f"{out_name}.txt"
        text_path.write_text(text)
        return {
            "report": report.model_dump(),
            "report_path": str(json_path),
            "table": text,
        }

    def error_analysis_cmd(
        self,
        scene_id: str,
        trials: int = 1000,
        dither_sigma_px: float | None = None,
        seed: int = 0,
        threads: int = 1,
    ) -> dict:
        rt = self.runtime(scene_id)
        record = rt.record
        if not record.annotations:
            raise ApiError(409, "no_annotations",
                           f"scene {scene_id!r} has no committed annotations")
        if dither_sigma_px is None:
            # drive the dither from measured reprojection statistics
            sigmas = []
            for oid in sorted({a.object_id for a in record.annotations}):
                if oid not in record.object_world_poses:
                    self._fit_object(record, oid)
                sigmas.append(reprojection_rmse(record, oid))
            dither_sigma_px = float(np.mean(sigmas)) if sigmas else 1.0
        truth = self._load_ground_truth(scene_id)
        try:
            report = monte_carlo_label_error(
                record,
                dither_sigma_px=dither_sigma_px,
                trials=trials,
                ground_truth=truth,
                seed=seed,
                threads=threads,
            )
        except PoseFactoryError as exc:
            raise ApiError(422, "pipeline", str(exc)) from exc
        file_model = ErrorReportFileModel(
            scene_id=scene_id,
            per_keypoint_rmse_m={
                f"{oid}/{kid}": v for (oid, kid), v in report.per_keypoint_rmse_m.items()
            },
            mean_rmse_m=report.mean_rmse_m,
            trials=report.trials,
            dither_sigma_px=report.dither_sigma_px,
            vs_ground_truth_mean_rmse_m=report.vs_ground_truth_mean_rmse_m,
            warning=report.warning,
        )
        path = self.layout.scene_dir(scene_id) / "error_report.json"
        write_model_file(path, file_model)
        return {"report": file_model.model_dump(), "report_path": str(path)}

    def _fit_object(self, record: SceneRecord, object_id: str) -> None:
        model = record.models.get(object_id)
        if model is None:
            raise ApiError(400, "schema", f"no model for object {object_id!r}",
                           file=str(self.layout.models_dir))
        try:
            keypoints = triangulate_object_keypoints(record, object_id)
            fit_and_propagate(record, object_id, keypoints, model, self._config())
        except KeypointUnderconstrained as exc:
            raise ApiError(
                409, "underconstrained", str(exc),
                underconstrained_keypoints=list(exc.keypoint_ids),
            ) from exc
        except PoseFactoryError as exc:
            raise ApiError(422, "pipeline", str(exc)) from exc

    def _load_ground_truth(self, scene_id: str):
        path = self.layout.scene_dir(scene_id) / "ground_truth.json"
        if not path.exists():
            return None
        gt_file = load_model_file(path, GroundTruthFileModel)
        from ..scene import GroundTruth

        return GroundTruth(
            static_views=[],
            fiducial_map={},
            moving_poses={},
            keypoints_world={
                oid: np.asarray(kps) for oid, kps in gt_file.keypoints_world.items()
            },
            object_world_poses={
                oid: p.to_pose() for oid, p in gt_file.object_world_poses.items()
            },
            validity=[],
            annotated_frames=list(gt_file.annotated_frames),
        )


def render_report_table(report: ReportFileModel) -> str:
    """Aligned text table: one row per object plus the mean row."""
    name_width = max([len("object")] + [len(k) for k in report.per_object])
    lines = [
        f"{'object':<{name_width}}  {'ADD(-S) AUC':>12}  {'ADD(-S) acc':>12}  {'n':>5}  {'missing':>7}"
    ]
    for oid, row in report.per_object.items():
        lines.append(
            f"{oid:<{name_width}}  {row.auc_percent:12.2f}  "
            f"{row.accuracy_percent:12.2f}  {row.count:5d}  {row.missing:7d}"
        )
    lines.append(
        f"{'MEAN':<{name_width}}  {report.mean_auc_percent:12.2f}  "
        f"{report.mean_accuracy_percent:12.2f}"
    )
    return "\n".join(lines) + "\n"
