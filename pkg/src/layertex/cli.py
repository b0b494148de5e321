"""Command-line client for the texturing pipeline.

All orchestration lives behind the service layer; this client only parses
flags into a JobRequest and routes it either in-process or to a running
server (--server URL). Exit codes: 0 ok, 2 validation error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from pydantic import ValidationError

from .errors import ConfigError
from .pipeline import EXIT_OK, EXIT_STAGE_FAILURE, EXIT_VALIDATION, PipelineConfig
from .service.jobs import collect_stats, execute_job
from .service.models import JobRequest, StatsResponse

log = logging.getLogger(__name__)


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mesh", required=True, help="input OBJ mesh")
    p.add_argument("--workdir", required=True, help="working directory for artifacts")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--provider", help="texture provider: procedural | dir:<path>")
    p.add_argument("--seed", type=int, help="provider seed")
    p.add_argument("--levels", type=int, dest="h_max", help="maximum hit level")
    p.add_argument("--ray-res", type=int, dest="ray_resolution", help="rays per view edge")
    p.add_argument("--view-res", type=int, dest="view_resolution", help="view image edge")
    p.add_argument("--uv-res", type=int, dest="uv_resolution", help="texture edge")
    p.add_argument("--tau", type=float, help="softmax temperature")
    p.add_argument("--threads", type=int, help="worker threads for per-view stages")
    p.add_argument("--camera-distance", type=float, dest="camera_distance")
    p.add_argument("--camera-fov", type=float, dest="camera_fov_deg")
    p.add_argument(
        "--prompt-level",
        nargs=2,
        action="append",
        metavar=("K", "TEXT"),
        help="per-level prompt, repeatable",
    )
    p.add_argument("--server", help="base URL of a running service; default is in-process")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layertex",
        description="Occlusion-aware layered mesh texturing pipeline",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("run", "run the full pipeline"),
        ("decompose", "stages 1-5: mesh, superfaces, weights, levels, level sets"),
        ("render", "stage 6: per-level depth maps and the provider manifest"),
        ("blend", "stages 7-9: provider images, unprojection, final blend"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common_flags(p)

    p_stats = sub.add_parser("stats", help="per-level decomposition and coverage tables")
    p_stats.add_argument("--workdir", required=True)
    p_stats.add_argument("--server", help="base URL of a running service")

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8123)
    return parser


_CONFIG_FLAGS = (
    "provider",
    "seed",
    "h_max",
    "ray_resolution",
    "view_resolution",
    "uv_resolution",
    "tau",
    "threads",
    "camera_distance",
    "camera_fov_deg",
)


def _build_config(args: argparse.Namespace) -> PipelineConfig:
    base: dict = {}
    if args.config:
        base = PipelineConfig.from_file(args.config).model_dump()
    for flag in _CONFIG_FLAGS:
        value = getattr(args, flag, None)
        if value is not None:
            base[flag] = value
    if args.prompt_level:
        prompts = dict(base.get("prompts") or {})
        for level, text in args.prompt_level:
            try:
                prompts[int(level)] = text
            except ValueError:
                raise ConfigError(f"--prompt-level expects an integer level, got {level!r}")
        base["prompts"] = prompts
    try:
        return PipelineConfig.model_validate(base)
    except ValidationError as exc:
        raise ConfigError(str(exc))


def _print_report_summary(report: dict) -> None:
    stages = report.get("stages", {})
    for name, entry in stages.items():
        if entry.get("skipped"):
            print(f"  {name:<14} skipped (unchanged)")
        else:
            print(f"  {name:<14} {entry.get('elapsed_s', 0):>8.2f}s")
    if "coverage" in report:
        print(f"  coverage       {report['coverage']:.4f}")


def _run_remote(server: str, request: JobRequest) -> int:
    import httpx

    with httpx.Client(base_url=server, timeout=30.0) as client:
        resp = client.post("/jobs", json=request.model_dump(mode="json"))
        if resp.status_code in (400, 422):
            print(f"validation error: {resp.text}", file=sys.stderr)
            return EXIT_VALIDATION
        resp.raise_for_status()
        job_id = resp.json()["id"]
        print(f"job {job_id} submitted to {server}")
        while True:
            status = client.get(f"/jobs/{job_id}").json()
            if status["state"] in ("done", "failed"):
                break
            time.sleep(0.5)
    if status.get("report"):
        _print_report_summary(status["report"])
    if status["state"] == "failed":
        print(f"job failed: {status.get('error')}", file=sys.stderr)
        return status.get("exit_code") or EXIT_STAGE_FAILURE
    return EXIT_OK


def _print_stats(stats: StatsResponse) -> None:
    print(f"workdir: {stats.workdir}")
    if stats.faces is not None:
        print(f"faces: {stats.faces}   superfaces: {stats.superfaces}")
    if stats.face_level_disagreements is not None:
        print(f"face/superface argmax disagreements: {stats.face_level_disagreements}")
    if stats.levels:
        print(f"{'level':>5} {'superfaces':>11} {'init faces':>11} {'residual':>9} {'texels':>9}")
        for row in stats.levels:
            texels = row.masked_texels if row.masked_texels is not None else "-"
            print(
                f"{row.level:>5} {row.superfaces:>11} {row.init_faces:>11} "
                f"{row.residual_faces:>9} {texels:>9}"
            )
    if stats.coverage is not None:
        print(f"coverage: {stats.coverage:.4f}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )

    if args.command == "serve":
        import uvicorn

        from .service import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return EXIT_OK

    if args.command == "stats":
        if args.server:
            import httpx

            with httpx.Client(base_url=args.server, timeout=30.0) as client:
                resp = client.get("/stats", params={"workdir": args.workdir})
                if resp.status_code != 200:
                    print(f"error: {resp.text}", file=sys.stderr)
                    return EXIT_VALIDATION
                _print_stats(StatsResponse.model_validate(resp.json()))
        else:
            _print_stats(collect_stats(args.workdir))
        return EXIT_OK

    stages = {"run": "all", "decompose": "decompose", "render": "render", "blend": "blend"}[
        args.command
    ]
    try:
        config = _build_config(args)
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    request = JobRequest(mesh=args.mesh, workdir=args.workdir, stages=stages, config=config)
    if args.server:
        return _run_remote(args.server, request)

    status = execute_job(request)
    if status.report:
        _print_report_summary(status.report)
    if status.state == "failed":
        print(f"failed: {status.error}", file=sys.stderr)
    return status.exit_code if status.exit_code is not None else EXIT_STAGE_FAILURE


if __name__ == "__main__":
    sys.exit(main())
