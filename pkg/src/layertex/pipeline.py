"""Stage orchestration: configuration, artifacts, resumability, reporting.

The working directory is the API between stages. Every stage writes its
artifact(s) and a report entry; a stage is skipped when its recorded input
hash (config subset + upstream artifact bytes) is unchanged and its outputs
still exist. All stage outputs are deterministic functions of their inputs,
so a deleted artifact is reproduced byte-identically on rerun.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from pathlib import Path
from typing import Callable

import numpy as np
from PIL import Image
from pydantic import BaseModel, Field, field_validator

from . import geometry, levelsets, providers, raycast, superfaces, uvblend
from .cameras import CameraRig, build_camera_rig
from .errors import ConfigError, LayertexError, StageError
from .raster import write_depth_png
from .uvblend import UVLayer

log = logging.getLogger(__name__)

STAGES = (
    "prepare_mesh",
    "superfaces",
    "weight_table",
    "hit_levels",
    "level_sets",
    "render",
    "provider",
    "unproject",
    "blend",
)

STAGE_GROUPS = {
    "all": STAGES,
    "decompose": STAGES[0:5],
    "render": STAGES[5:6],
    "blend": STAGES[6:9],
}

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_STAGE_FAILURE = 3


class PipelineConfig(BaseModel):
    """Validated run configuration; file values can be overridden by flags."""

    ray_resolution: int = 1536
    view_resolution: int = 768
    uv_resolution: int = 1024
    h_max: int = Field(default=4, ge=1, le=8)
    normal_angle_threshold_deg: float = Field(default=45.0, gt=0.0, le=90.0)
    camera_distance: float = 6.0
    camera_fov_deg: float = 22.0
    tau: float = 1.0
    seed: int = 0
    gutter_px: int = Field(default=4, ge=0)
    threads: int = Field(default=1, ge=1)
    prompts: dict[int, str] = Field(default_factory=dict)
    palette: dict[int, str | list[int] | dict] | None = None
    provider: str = "procedural"
    background: tuple[int, int, int] = (0, 0, 0)
    dump_buffers: bool = False  # also write raw face-id/cosine buffers per view

    @field_validator("ray_resolution", "view_resolution", "uv_resolution")
    @classmethod
    def _min_resolution(cls, v: int) -> int:
        if v < 64:
            raise ValueError(f"resolution {v} below the minimum of 64")
        return v

    @field_validator("camera_distance")
    @classmethod
    def _outside_circumsphere(cls, v: float) -> float:
        if v <= 0.87:
            raise ValueError("camera distance must exceed the unit-box circumsphere (> 0.87)")
        return v

    @field_validator("tau")
    @classmethod
    def _positive_tau(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("tau must be positive")
        return v

    @field_validator("provider")
    @classmethod
    def _known_provider(cls, v: str) -> str:
        if v != "procedural" and not v.startswith("dir:"):
            raise ValueError("provider must be 'procedural' or 'dir:<path>'")
        return v

    @staticmethod
    def from_file(path: str | Path) -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
        return PipelineConfig.model_validate(data)


def _sha256(*parts: bytes) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.hexdigest()


def _file_bytes(path: Path) -> bytes:
    return path.read_bytes() if path.exists() else b"<missing>"


def _config_bytes(config: PipelineConfig, fields: tuple[str, ...]) -> bytes:
    subset = {f: getattr(config, f) for f in fields}
    return json.dumps(subset, sort_keys=True, default=str).encode()


class Pipeline:
    """Executes the stage chain inside a working directory."""

    def __init__(self, config: PipelineConfig, mesh_path: str | Path, workdir: str | Path):
        self.config = config
        self.mesh_path = Path(mesh_path)
        self.workdir = Path(workdir)
        self.report: dict = {"mesh": str(mesh_path), "stages": {}}
        self._state_path = self.workdir / ".stage_state.json"
        self._report_path = self.workdir / "report.json"
        # in-memory handoffs; every stage can also rebuild from artifacts
        self._mesh: geometry.Mesh | None = None
        self._superfaces: superfaces.SuperfaceSet | None = None
        self._table: raycast.WeightTable | None = None
        self._assignment: raycast.HitLevelAssignment | None = None
        self._sets: levelsets.LevelSets | None = None
        self._rig: CameraRig | None = None

    # -- paths ------------------------------------------------------------
    @property
    def normalized_mesh_path(self) -> Path:
        return self.workdir / "mesh_normalized.obj"

    @property
    def prepared_mesh_path(self) -> Path:
        return self.workdir / "mesh_prepared.obj"

    @property
    def superfaces_path(self) -> Path:
        return self.workdir / "superfaces.json"

    @property
    def weight_table_path(self) -> Path:
        return self.workdir / "weight_table.npz"

    @property
    def hitlevels_path(self) -> Path:
        return self.workdir / "hitlevels.json"

    @property
    def levelsets_path(self) -> Path:
        return self.workdir / "levelsets.json"

    @property
    def manifest_path(self) -> Path:
        return self.workdir / "manifest.json"

    @property
    def views_dir(self) -> Path:
        return self.workdir / "views"

    @property
    def final_path(self) -> Path:
        return self.workdir / "final.png"

    def layer_path(self, level: int) -> Path:
        return self.workdir / f"layer_L{level}.npz"

    # -- rig and lazy artifact loading -------------------------------------
    def rig(self, resolution: int) -> CameraRig:
        return build_camera_rig(
            distance=self.config.camera_distance,
            fov_deg=self.config.camera_fov_deg,
            resolution=resolution,
        )

    def _load_mesh_prepared(self) -> geometry.Mesh:
        if self._mesh is None:
            mesh = geometry.load_mesh(self.prepared_mesh_path)
            payload = json.loads(self.superfaces_path.read_text())
            self._mesh = mesh.with_superfaces(np.asarray(payload["assignment"], dtype=np.int32))
        return self._mesh

    def _load_levelsets(self) -> levelsets.LevelSets:
        if self._sets is None:
            payload = json.loads(self.levelsets_path.read_text())
            mesh = self._load_mesh_prepared()
            self._sets = levelsets.LevelSets.from_payload(payload, mesh.num_faces)
        return self._sets

    # -- stage implementations ---------------------------------------------
    def _stage_prepare_mesh(self) -> dict:
        mesh = geometry.load_mesh(self.mesh_path)
        mesh = geometry.normalize_unit_box(mesh)
        geometry.save_mesh_obj(mesh, self.normalized_mesh_path)
        return {"vertices": mesh.num_vertices, "faces": mesh.num_faces, "has_uv": mesh.uv is not None}

    def _stage_superfaces(self) -> dict:
        mesh = geometry.load_mesh(self.normalized_mesh_path)
        adjacency = geometry.build_topology(mesh)
        sf = superfaces.segment_superfaces(
            mesh, adjacency, self.config.normal_angle_threshold_deg
        )
        if mesh.uv is None:
            atlas = superfaces.generate_uv_atlas(
                mesh, sf, self.config.uv_resolution, self.config.gutter_px
            )
            mesh = mesh.with_uv(atlas.uv)
            atlas_generated = True
        else:
            atlas_generated = False
        mesh = mesh.with_superfaces(sf.assignment)
        self._mesh = mesh
        self._superfaces = sf
        geometry.save_mesh_obj(mesh, self.prepared_mesh_path)
        payload = superfaces.superfaces_payload(mesh, sf)
        payload["atlas_generated"] = atlas_generated
        self.superfaces_path.write_text(json.dumps(payload, indent=1) + "\n")
        return {"superfaces": sf.count, "atlas_generated": atlas_generated}

    def _stage_weight_table(self) -> dict:
        mesh = self._load_mesh_prepared()
        rig = self.rig(self.config.ray_resolution)
        table = raycast.compute_weight_table(
            mesh, rig, self.config.ray_resolution, threads=self.config.threads
        )
        self._table = table
        rows, cols = np.nonzero(table.weights)
        np.savez_compressed(
            self.weight_table_path,
            faces=rows.astype(np.int32),
            orders=(cols + 1).astype(np.int32),
            weights=table.weights[rows, cols],
            num_faces=np.int64(mesh.num_faces),
        )
        return {"rays_per_view": self.config.ray_resolution**2, "entries": int(len(rows))}

    def _load_weight_table(self) -> raycast.WeightTable:
        if self._table is None:
            data = np.load(self.weight_table_path)
            weights = np.zeros((int(data["num_faces"]), raycast.ORDER_CAP))
            weights[data["faces"], data["orders"] - 1] = data["weights"]
            self._table = raycast.WeightTable(weights=weights)
        return self._table

    def _load_superfaces(self) -> superfaces.SuperfaceSet:
        if self._superfaces is None:
            payload = json.loads(self.superfaces_path.read_text())
            assignment = np.asarray(payload["assignment"], dtype=np.int32)
            seeds = np.asarray([s["seed_face"] for s in payload["superfaces"]], dtype=np.int32)
            self._superfaces = superfaces.SuperfaceSet(
                assignment=assignment, count=int(payload["count"]), seed_faces=seeds
            )
        return self._superfaces

    def _stage_hit_levels(self) -> dict:
        table = self._load_weight_table()
        sf = self._load_superfaces()
        assignment = raycast.assign_superface_levels(sf, table, self.config.h_max)
        self._assignment = assignment
        self.hitlevels_path.write_text(json.dumps(assignment.payload(), indent=1) + "\n")
        levels, counts = np.unique(assignment.superface_level, return_counts=True)
        return {
            "max_level": assignment.max_level,
            "superfaces_per_level": {int(l): int(c) for l, c in zip(levels, counts)},
            "face_level_disagreements": assignment.disagreement_count,
        }

    def _stage_level_sets(self) -> dict:
        if self._assignment is None:
            table = self._load_weight_table()
            sf = self._load_superfaces()
            self._assignment = raycast.assign_superface_levels(sf, table, self.config.h_max)
        sets = levelsets.build_level_sets(self._assignment)
        self._sets = sets
        self.levelsets_path.write_text(json.dumps(sets.payload()) + "\n")
        return {
            "levels": sets.num_levels,
            "init_sizes": {lf.level: len(lf.init_faces) for lf in sets},
            "residual_sizes": {lf.level: len(lf.residual_faces) for lf in sets},
        }

    def _stage_render(self) -> dict:
        mesh = self._load_mesh_prepared()
        sets = self._load_levelsets()
        rig = self.rig(self.config.view_resolution)
        written = 0
        for lf in sets:
            buffers = uvblend.render_level_buffers(
                mesh, sets, lf.level, rig, threads=self.config.threads
            )
            for vi, buf in enumerate(buffers):
                name = providers.DEPTH_IMAGE_NAME.format(level=lf.level, view=vi)
                write_depth_png(self.workdir / name, buf.depth, rig[vi].near, rig[vi].far)
                written += 1
                if self.config.dump_buffers:
                    np.savez_compressed(
                        self.workdir / f"buffers_L{lf.level}_V{vi:02d}.npz",
                        depth=buf.depth.astype(np.float32),
                        face_id=buf.face_id,
                        cosine=buf.cosine.astype(np.float32),
                    )
        manifest = providers.build_manifest(
            mesh_path=str(self.prepared_mesh_path.name),
            rig=rig,
            levels=[lf.level for lf in sets],
            prompts=self.config.prompts,
            view_resolution=(self.config.view_resolution, self.config.view_resolution),
            base_dir=self.workdir,
        )
        manifest.save(self.manifest_path)
        return {"depth_maps": written, "manifest": str(self.manifest_path.name)}

    def _stage_provider(self) -> dict:
        manifest = providers.RenderManifest.load(self.manifest_path)
        if self.config.provider == "procedural":
            output = providers.procedural_generate_views(
                manifest, seed=self.config.seed, palette=self.config.palette
            )
            providers.save_provider_output(output, self.views_dir)
            source = "procedural"
        else:
            directory = self.config.provider[len("dir:"):]
            output = providers.load_directory_textures(directory, manifest)
            providers.save_provider_output(output, self.views_dir)
            source = directory
        return {"views": len(output), "source": source}

    def _stage_unproject(self) -> dict:
        mesh = self._load_mesh_prepared()
        sets = self._load_levelsets()
        manifest = providers.RenderManifest.load(self.manifest_path)
        images = providers.load_directory_textures(self.views_dir, manifest)
        rig = self.rig(self.config.view_resolution)
        geometry_map = uvblend.build_uv_geometry(mesh, self.config.uv_resolution)

        info: dict = {"levels": {}}
        for lf in sets:
            view_images = [images[(lf.level, vi)] for vi in range(len(rig))]
            layer = uvblend.build_uv_layer(
                mesh,
                sets,
                lf.level,
                rig,
                view_images,
                geometry_map,
                threads=self.config.threads,
            )
            np.savez_compressed(
                self.layer_path(lf.level),
                texture=layer.texture.astype(np.float32),
                weight=layer.weight.astype(np.float32),
                mask=layer.mask,
                occupied=geometry_map.occupied,
            )
            tex_path = self.workdir / f"texture_L{lf.level}.png"
            Image.fromarray(
                np.clip(np.round(layer.texture * 255.0), 0, 255).astype(np.uint8), "RGB"
            ).save(tex_path)
            _write_pgm16(self.workdir / f"weights_L{lf.level}.pgm", layer.weight)
            info["levels"][lf.level] = {
                "masked_texels": int(layer.mask.sum()),
                "max_weight": float(layer.weight.max()),
            }
        return info

    def _stage_blend(self) -> dict:
        sets = self._load_levelsets()
        layers = []
        occupied = None
        for lf in sets:
            data = np.load(self.layer_path(lf.level))
            layers.append(
                UVLayer(
                    level=lf.level,
                    texture=data["texture"].astype(np.float64),
                    weight=data["weight"].astype(np.float64),
                    mask=data["mask"],
                )
            )
            occupied = data["occupied"]
        background = tuple(c / 255.0 for c in self.config.background)
        blended = uvblend.blend_levels(
            layers, temperature=self.config.tau, background=background, occupied=occupied
        )
        Image.fromarray(blended.to_uint8(), "RGB").save(self.final_path)
        self.report["coverage"] = blended.coverage
        self.report["levels"] = len(layers)
        return {
            "coverage": blended.coverage,
            "covered_texels": int(blended.covered.sum()),
            "occupied_texels": int(occupied.sum()),
        }

    # -- orchestration ------------------------------------------------------
    def _stage_inputs(self, stage: str) -> bytes:
        c = self.config
        if stage == "prepare_mesh":
            return _file_bytes(self.mesh_path)
        if stage == "superfaces":
            return _file_bytes(self.normalized_mesh_path) + _config_bytes(
                c, ("normal_angle_threshold_deg", "uv_resolution", "gutter_px")
            )
        if stage == "weight_table":
            return _file_bytes(self.prepared_mesh_path) + _config_bytes(
                c, ("ray_resolution", "camera_distance", "camera_fov_deg")
            )
        if stage == "hit_levels":
            return (
                _file_bytes(self.weight_table_path)
                + _file_bytes(self.superfaces_path)
                + _config_bytes(c, ("h_max",))
            )
        if stage == "level_sets":
            return _file_bytes(self.hitlevels_path)
        if stage == "render":
            return (
                _file_bytes(self.prepared_mesh_path)
                + _file_bytes(self.levelsets_path)
                + _config_bytes(
                    c,
                    (
                        "view_resolution",
                        "camera_distance",
                        "camera_fov_deg",
                        "prompts",
                        "dump_buffers",
                    ),
                )
            )
        if stage == "provider":
            return _file_bytes(self.manifest_path) + _config_bytes(
                c, ("provider", "seed", "palette")
            )
        if stage == "unproject":
            views_hash = b""
            if self.views_dir.exists():
                for f in sorted(self.views_dir.glob("*.png")):
                    views_hash += _sha256(f.read_bytes()).encode()
            return (
                _file_bytes(self.manifest_path)
                + views_hash
                + _config_bytes(c, ("uv_resolution", "threads"))
            )
        if stage == "blend":
            layers_hash = b""
            for f in sorted(self.workdir.glob("layer_L*.npz")):
                layers_hash += _sha256(f.read_bytes()).encode()
            return layers_hash + _config_bytes(c, ("tau", "background"))
        raise ValueError(f"unknown stage {stage}")

    def _stage_outputs(self, stage: str) -> list[Path]:
        if stage == "prepare_mesh":
            return [self.normalized_mesh_path]
        if stage == "superfaces":
            return [self.superfaces_path, self.prepared_mesh_path]
        if stage == "weight_table":
            return [self.weight_table_path]
        if stage == "hit_levels":
            return [self.hitlevels_path]
        if stage == "level_sets":
            return [self.levelsets_path]
        if stage == "render":
            return [self.manifest_path]
        if stage == "provider":
            return [self.views_dir]
        if stage == "unproject":
            if not self.levelsets_path.exists():
                return [self.layer_path(1)]
            payload = json.loads(self.levelsets_path.read_text())
            return [self.layer_path(e["level"]) for e in payload["levels"]]
        if stage == "blend":
            return [self.final_path]
        return []

    def run(self, stages: str = "all") -> dict:
        """Run a stage group; returns the report. Raises StageError on failure."""
        if stages not in STAGE_GROUPS:
            raise ConfigError(f"unknown stage group {stages!r}")
        self.workdir.mkdir(parents=True, exist_ok=True)
        state = {}
        if self._state_path.exists():
            state = json.loads(self._state_path.read_text())

        impls: dict[str, Callable[[], dict]] = {
            "prepare_mesh": self._stage_prepare_mesh,
            "superfaces": self._stage_superfaces,
            "weight_table": self._stage_weight_table,
            "hit_levels": self._stage_hit_levels,
            "level_sets": self._stage_level_sets,
            "render": self._stage_render,
            "provider": self._stage_provider,
            "unproject": self._stage_unproject,
            "blend": self._stage_blend,
        }

        for stage in STAGE_GROUPS[stages]:
            input_hash = _sha256(self._stage_inputs(stage))
            outputs_exist = all(p.exists() for p in self._stage_outputs(stage))
            if state.get(stage) == input_hash and outputs_exist:
                log.info("stage %s: unchanged, skipping", stage)
                self.report["stages"][stage] = {"skipped": True}
                continue
            t0 = time.perf_counter()
            try:
                info = impls[stage]()
            except LayertexError as exc:
                self._write_report()
                raise StageError(stage, str(exc)) from exc
            except Exception as exc:  # noqa: BLE001 - stage boundary
                self._write_report()
                raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc
            elapsed = time.perf_counter() - t0
            entry = {"skipped": False, "elapsed_s": round(elapsed, 4)}
            entry.update(info)
            self.report["stages"][stage] = entry
            state[stage] = input_hash
            self._state_path.write_text(json.dumps(state, indent=1))
            self._write_report()
            log.info("stage %s: done in %.2fs", stage, elapsed)
        self._write_report()
        return self.report

    def _write_report(self) -> None:
        merged = self.report
        if self._report_path.exists():
            try:
                previous = json.loads(self._report_path.read_text())
            except json.JSONDecodeError:
                previous = {}
            previous_stages = previous.get("stages", {})
            previous_stages.update(merged["stages"])
            merged = {**previous, **merged, "stages": previous_stages}
            self.report = merged
        self._report_path.write_text(json.dumps(merged, indent=1) + "\n")


def _write_pgm16(path: Path, values: np.ndarray) -> None:
    """Debug-grade 16-bit PGM; values scaled to the full range, max in header."""
    peak = float(values.max())
    scale = 65535.0 / peak if peak > 0 else 1.0
    data = np.clip(np.round(values * scale), 0, 65535).astype(">u2")
    header = f"P5\n# max_value {peak:.9g}\n{values.shape[1]} {values.shape[0]}\n65535\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(data.tobytes())


def run_pipeline(
    config: PipelineConfig,
    mesh_path: str | Path,
    workdir: str | Path,
    stages: str = "all",
) -> tuple[int, dict]:
    """Execute the pipeline; returns (exit_code, report)."""
    try:
        pipeline = Pipeline(config, mesh_path, workdir)
        if not Path(mesh_path).exists():
            raise ConfigError(f"mesh file not found: {mesh_path}")
        try:
            Path(workdir).mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"workdir is not writable: {exc}")
        report = pipeline.run(stages)
        return EXIT_OK, report
    except ConfigError as exc:
        log.error("validation: %s", exc)
        return EXIT_VALIDATION, {"error": str(exc), "kind": "validation"}
    except StageError as exc:
        log.error("%s", exc)
        return EXIT_STAGE_FAILURE, {"error": str(exc), "kind": "stage", "stage": exc.stage}
