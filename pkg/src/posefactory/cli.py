"""Command-line interface: a thin client of the annotation service layer.

Each batch subcommand issues the same operation the HTTP service exposes.
By default it runs against the project root in process; with --server it
talks to a remote posefactory service over HTTP instead.

Exit codes: 0 success, 2 missing or schema-invalid file, 3 under-
constrained keypoints, 1 anything else.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .errors import SchemaError
from .schemas import DATA_ROOT_ENV, SceneSpecFileModel, load_model_file
from .service.core import AnnotationService, ApiError

EXIT_SCHEMA = 2
EXIT_UNDERCONSTRAINED = 3

_KIND_EXIT_CODES = {
    "schema": EXIT_SCHEMA,
    "invalid_spec": EXIT_SCHEMA,
    "unknown_scene": EXIT_SCHEMA,
    "underconstrained": EXIT_UNDERCONSTRAINED,
}


class RemoteClient:
    """HTTP transport to a running posefactory service."""

    def __init__(self, base_url: str):
        import httpx

        self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(base_url=self.base_url, timeout=600.0)

    def post(self, path: str, payload: dict) -> dict:
        response = self._client.post(path, json=payload)
        body = response.json()
        if response.status_code >= 400:
            raise ApiError(
                response.status_code,
                body.get("kind", "remote"),
                str(body.get("detail", body)),
                **{k: v for k, v in body.items() if k not in ("kind", "detail")},
            )
        return body


class ServiceClient:
    """Dispatches operations locally or over HTTP."""

    def __init__(self, root: Path, server: str | None, seed: int | None):
        self.root = root
        self.remote = RemoteClient(server) if server else None
        self.local = None if server else AnnotationService(root, seed=seed or 0)

    def pipeline_run(self, scene_id, seed, threads):
        if self.remote:
            return self.remote.post(
                "/pipeline/run",
                {"scene_id": scene_id, "seed": seed, "threads": threads},
            )
        return self.local.run_pipeline_cmd(scene_id, seed, threads)

    def simulate(self, spec_model, seed):
        if self.remote:
            return self.remote.post(
                "/simulate", {"spec": spec_model.model_dump(), "seed": seed}
            )
        return self.local.simulate_cmd(spec_model, seed)

    def evaluate(self, predictions, ground_truth, out):
        if self.remote:
            return self.remote.post(
                "/evaluate",
                {"predictions": predictions, "ground_truth": ground_truth, "out": out},
            )
        return self.local.evaluate_cmd(predictions, ground_truth, out)

    def error_analysis(self, scene_id, trials, sigma, seed, threads):
        if self.remote:
            return self.remote.post(
                "/error-analysis",
                {
                    "scene_id": scene_id,
                    "trials": trials,
                    "dither_sigma_px": sigma,
                    "seed": seed,
                    "threads": threads,
                },
            )
        return self.local.error_analysis_cmd(
            scene_id, trials=trials, dither_sigma_px=sigma, seed=seed, threads=threads
        )


def _fail(exc: ApiError):
    payload = exc.payload()
    click.echo(f"error [{payload.get('kind')}]: {payload.get('detail')}", err=True)
    if payload.get("underconstrained_keypoints"):
        click.echo(
            f"underconstrained keypoints: {payload['underconstrained_keypoints']}",
            err=True,
        )
    sys.exit(_KIND_EXIT_CODES.get(exc.kind, 1))


pass_client = click.make_pass_decorator(ServiceClient)


@click.group()
@click.option(
    "--root",
    type=click.Path(path_type=Path),
    envvar=DATA_ROOT_ENV,
    default=".",
    show_default=True,
    help=f"Project root (env {DATA_ROOT_ENV}).",
)
@click.option("--server", default=None, help="URL of a running posefactory service.")
@click.option("--seed", type=int, default=None, help="RANSAC seed override.")
@click.pass_context
def main(ctx, root, server, seed):
    """Multi-view 6D pose annotation, simulation, and evaluation."""
    ctx.obj = ServiceClient(root, server, seed)


@main.group()
def pipeline():
    """Annotation pipeline commands."""


@pipeline.command("run")
@click.argument("scene_id")
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=int, default=1, show_default=True)
@pass_client
def pipeline_run(client, scene_id, seed, threads):
    """Run the seven-step pipeline on SCENE_ID and write poses.json."""
    try:
        out = client.pipeline_run(scene_id, seed, threads)
    except ApiError as exc:
        _fail(exc)
    click.echo(
        f"scene {out['scene_id']}: {out['valid_frames']}/{out['total_frames']} "
        f"valid frames -> {out['poses_path']}"
    )
    for oid, info in out["objects"].items():
        click.echo(
            f"  {oid}: reprojection RMSE {info['reprojection_rmse_px']:.4f} px "
            f"over {info['labeled_frames']} frames"
        )


@main.command()
@click.argument("spec_path", type=click.Path(path_type=Path))
@click.option("--seed", type=int, default=None, help="Override the spec's rng_seed.")
@pass_client
def simulate(client, spec_path, seed):
    """Generate a synthetic scene from SPEC_PATH into the project root."""
    try:
        spec_model = load_model_file(spec_path, SceneSpecFileModel)
    except SchemaError as exc:
        click.echo(f"error [schema]: {exc}", err=True)
        sys.exit(EXIT_SCHEMA)
    try:
        out = client.simulate(spec_model, seed)
    except ApiError as exc:
        _fail(exc)
    click.echo(
        f"wrote scene {out['scene_id']} ({out['frames']} frames, "
        f"{out['annotations']} annotations) to {out['path']}"
    )


@main.command()
@click.option("--predictions", required=True, type=str)
@click.option("--ground-truth", "ground_truth", required=True, type=str)
@click.option("--out", default="report", show_default=True)
@pass_client
def evaluate(client, predictions, ground_truth, out):
    """Evaluate predicted poses: ADD(-S) accuracy and AUC per object."""
    try:
        result = client.evaluate(predictions, ground_truth, out)
    except ApiError as exc:
        _fail(exc)
    click.echo(result["table"], nl=False)
    click.echo(f"report written to {result['report_path']}")


@main.command("error-analysis")
@click.argument("scene_id")
@click.option("--trials", type=int, default=1000, show_default=True)
@click.option("--sigma", type=float, default=None,
              help="Dither sigma in px (default: measured reprojection RMSE).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", type=int, default=1, show_default=True)
@pass_client
def error_analysis(client, scene_id, trials, sigma, seed, threads):
    """Monte Carlo labeling-error estimate for SCENE_ID."""
    try:
        out = client.error_analysis(scene_id, trials, sigma, seed, threads)
    except ApiError as exc:
        _fail(exc)
    report = out["report"]
    click.echo(
        f"scene {scene_id}: mean 3D keypoint RMSE "
        f"{report['mean_rmse_m'] * 1000:.3f} mm over {report['trials']} trials "
        f"(dither sigma {report['dither_sigma_px']:.3f} px)"
    )
    if report.get("warning"):
        click.echo(f"warning: {report['warning']}")
    click.echo(f"report written to {out['report_path']}")


@main.command()
@click.option("--port", type=int, default=8035, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--ui", type=click.Path(path_type=Path), default=None,
              help="Directory with the built annotation frontend to serve at /.")
@click.pass_context
def serve(ctx, port, host, ui):
    """Serve the HTTP annotation API for the browser frontend."""
    import uvicorn

    from .service.app import create_app

    client = ctx.obj
    app = create_app(client.root, seed=0, ui_dir=ui)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
