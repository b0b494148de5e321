import json

import numpy as np
import pytest
from PIL import Image

from layertex import pipeline as pl
from layertex.errors import ConfigError

SMALL = dict(
    ray_resolution=128,
    view_resolution=128,
    uv_resolution=256,
    camera_distance=3.0,
    camera_fov_deg=45.0,
    palette={1: "red", 2: "blue"},
)


def run_small(mesh_path, workdir, stages="all", **overrides):
    config = pl.PipelineConfig(**{**SMALL, **overrides})
    return pl.run_pipeline(config, mesh_path, workdir, stages=stages)


def test_full_run_produces_artifacts(nested_obj, tmp_path):
    workdir = tmp_path / "work"
    code, report = run_small(nested_obj, workdir)
    assert code == pl.EXIT_OK
    assert report["levels"] == 2
    assert report["coverage"] > 0.9
    for name in (
        "mesh_normalized.obj",
        "mesh_prepared.obj",
        "superfaces.json",
        "weight_table.npz",
        "hitlevels.json",
        "levelsets.json",
        "manifest.json",
        "final.png",
        "report.json",
        "texture_L1.png",
        "texture_L2.png",
        "weights_L1.pgm",
    ):
        assert (workdir / name).exists(), name
    assert len(list((workdir / "views").glob("view_*.png"))) == 34
    assert len(list(workdir.glob("depth_L*_V*.png"))) == 34


def test_rerun_skips_all_stages(nested_obj, tmp_path):
    import time

    workdir = tmp_path / "work"
    run_small(nested_obj, workdir)
    t0 = time.perf_counter()
    code, report = run_small(nested_obj, workdir)
    elapsed = time.perf_counter() - t0
    assert code == pl.EXIT_OK
    assert all(entry.get("skipped") for entry in report["stages"].values())
    assert elapsed < 1.0


def test_stage_isolation_reproduces_bytes(nested_obj, tmp_path):
    workdir = tmp_path / "work"
    run_small(nested_obj, workdir)
    final = (workdir / "final.png").read_bytes()
    hitlevels = (workdir / "hitlevels.json").read_bytes()
    (workdir / "final.png").unlink()
    (workdir / "hitlevels.json").unlink()
    code, report = run_small(nested_obj, workdir)
    assert code == pl.EXIT_OK
    assert report["stages"]["weight_table"].get("skipped")
    assert not report["stages"]["hit_levels"].get("skipped")
    assert not report["stages"]["blend"].get("skipped")
    assert (workdir / "final.png").read_bytes() == final
    assert (workdir / "hitlevels.json").read_bytes() == hitlevels


def test_config_change_invalidates_downstream(nested_obj, tmp_path):
    workdir = tmp_path / "work"
    run_small(nested_obj, workdir)
    code, report = run_small(nested_obj, workdir, tau=2.0)
    assert code == pl.EXIT_OK
    assert report["stages"]["unproject"].get("skipped")
    assert not report["stages"]["blend"].get("skipped")


def test_validation_errors():
    with pytest.raises(Exception):
        pl.PipelineConfig(h_max=0)
    with pytest.raises(Exception):
        pl.PipelineConfig(ray_resolution=32)
    with pytest.raises(Exception):
        pl.PipelineConfig(provider="ftp://nope")
    with pytest.raises(Exception):
        pl.PipelineConfig(camera_distance=0.5)


def test_missing_mesh_is_validation_exit(tmp_path):
    code, report = pl.run_pipeline(pl.PipelineConfig(), tmp_path / "nope.obj", tmp_path / "w")
    assert code == pl.EXIT_VALIDATION
    assert report["kind"] == "validation"


def test_unwritable_workdir_is_validation_exit(tmp_path, nested_obj):
    blocker = tmp_path / "blocker"
    blocker.write_text("a file, not a directory")
    code, report = pl.run_pipeline(pl.PipelineConfig(), nested_obj, blocker / "w")
    assert code == pl.EXIT_VALIDATION
    assert "workdir" in report["error"]


def test_stage_failure_reports_stage(tmp_path):
    bad = tmp_path / "bad.obj"
    bad.write_text("v 0 0 0\nv 1 0 0\nf 1 2 99\n")
    code, report = pl.run_pipeline(pl.PipelineConfig(), bad, tmp_path / "w")
    assert code == pl.EXIT_STAGE_FAILURE
    assert report["stage"] == "prepare_mesh"


def test_subcommand_stage_groups(nested_obj, tmp_path):
    workdir = tmp_path / "work"
    code, _ = run_small(nested_obj, workdir, stages="decompose")
    assert code == pl.EXIT_OK
    assert (workdir / "levelsets.json").exists()
    assert not (workdir / "manifest.json").exists()

    code, _ = run_small(nested_obj, workdir, stages="render")
    assert code == pl.EXIT_OK
    assert (workdir / "manifest.json").exists()
    assert not (workdir / "final.png").exists()

    code, _ = run_small(nested_obj, workdir, stages="blend")
    assert code == pl.EXIT_OK
    assert (workdir / "final.png").exists()


def test_blend_without_render_fails_cleanly(nested_obj, tmp_path):
    code, report = run_small(nested_obj, tmp_path / "w", stages="blend")
    assert code == pl.EXIT_STAGE_FAILURE
    assert report["stage"] == "provider"


def test_directory_provider_roundtrip(nested_obj, tmp_path):
    # first run renders and generates procedurally; reuse those views as an
    # external directory for a second workdir
    w1 = tmp_path / "w1"
    run_small(nested_obj, w1)
    w2 = tmp_path / "w2"
    code, report = run_small(nested_obj, w2, provider=f"dir:{w1 / 'views'}")
    assert code == pl.EXIT_OK
    assert report["stages"]["provider"]["source"] == str(w1 / "views")
    a = np.asarray(Image.open(w1 / "final.png"))
    b = np.asarray(Image.open(w2 / "final.png"))
    assert (a == b).all()


def test_manifest_matches_contract(nested_obj, tmp_path):
    workdir = tmp_path / "work"
    run_small(nested_obj, workdir, stages="decompose")
    run_small(nested_obj, workdir, stages="render")
    manifest = json.loads((workdir / "manifest.json").read_text())
    assert manifest["schema"] == 1
    assert len(manifest["levels"]) == 2
    for block in manifest["levels"]:
        assert len(block["views"]) == 17
        for v in block["views"]:
            assert (workdir / v["depth_path"]).exists()
            cam = v["camera"]
            assert set(cam) == {"position", "look_at", "up", "fov_deg", "resolution", "near", "far"}


def test_config_file_and_overrides(tmp_path, nested_obj):
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps({**SMALL, "seed": 9, "tau": 2.0}))
    config = pl.PipelineConfig.from_file(cfg_path)
    assert config.seed == 9
    assert config.tau == 2.0
    with pytest.raises(ConfigError):
        pl.PipelineConfig.from_file(tmp_path / "absent.json")


def test_input_uvs_pass_through(tmp_path, unit_cube):
    # a mesh that already carries UVs keeps them; no atlas is generated
    from layertex import geometry, superfaces

    adj = geometry.build_topology(unit_cube)
    sf = superfaces.segment_superfaces(unit_cube, adj, 30.0)
    atlas = superfaces.generate_uv_atlas(unit_cube, sf, 256, 4)
    mesh = unit_cube.with_uv(atlas.uv)
    mesh_path = tmp_path / "cube_uv.obj"
    geometry.save_mesh_obj(mesh, mesh_path)

    workdir = tmp_path / "w"
    code, report = run_small(mesh_path, workdir, stages="decompose")
    assert code == pl.EXIT_OK
    assert report["stages"]["superfaces"]["atlas_generated"] is False
    prepared = geometry.load_mesh(workdir / "mesh_prepared.obj")
    np.testing.assert_allclose(prepared.uv, mesh.uv, atol=1e-12)


def test_dump_buffers_flag(nested_obj, tmp_path):
    workdir = tmp_path / "w"
    code, _ = run_small(nested_obj, workdir, stages="decompose")
    assert code == pl.EXIT_OK
    code, _ = run_small(nested_obj, workdir, stages="render", dump_buffers=True)
    assert code == pl.EXIT_OK
    dumps = sorted(workdir.glob("buffers_L*_V*.npz"))
    assert len(dumps) == 34
    data = np.load(dumps[0])
    assert set(data.files) == {"depth", "face_id", "cosine"}
    assert data["face_id"].shape == (128, 128)


def test_prompts_reach_manifest(nested_obj, tmp_path):
    workdir = tmp_path / "work"
    config = pl.PipelineConfig(**SMALL, prompts={1: "rusted hull", 2: "glowing core"})
    code, _ = pl.run_pipeline(config, nested_obj, workdir, stages="decompose")
    assert code == pl.EXIT_OK
    code, _ = pl.run_pipeline(config, nested_obj, workdir, stages="render")
    assert code == pl.EXIT_OK
    manifest = json.loads((workdir / "manifest.json").read_text())
    prompts = {b["level"]: b["prompt"] for b in manifest["levels"]}
    assert prompts == {1: "rusted hull", 2: "glowing core"}
