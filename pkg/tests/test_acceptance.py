"""Acceptance suite: one test per criterion, each printing PASS/FAIL.

Run with `pytest tests/test_acceptance.py -v -s`. Thresholds and tolerances
are pinned here and only here; the per-module suites cover finer behavior.
"""

from __future__ import annotations

import json
import shutil
import subprocess
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from layertex import (
    cameras,
    geometry,
    levelsets,
    pipeline as pl,
    primitives,
    providers,
    raster,
    raycast,
    superfaces,
    uvblend,
)

from .conftest import rig_as_tuples
from .oracles import analytic_sphere_orders, brute_force_weight_table
from .test_uvblend import checker_roundtrip_psnr

REPO_ROOT = Path(__file__).resolve().parent.parent


@contextmanager
def criterion(name: str):
    info: dict = {}
    try:
        yield info
    except BaseException:
        print(f"\n[ACCEPTANCE] {name}: FAIL")
        raise
    detail = ", ".join(f"{k}={v}" for k, v in info.items())
    print(f"\n[ACCEPTANCE] {name}: PASS" + (f" ({detail})" if detail else ""))


def _decompose(mesh, rig, ray_res, threshold=45.0, h_max=4, threads=1):
    adj = geometry.build_topology(mesh)
    sf = superfaces.segment_superfaces(mesh, adj, threshold)
    table = raycast.compute_weight_table(mesh, rig, ray_res, threads=threads)
    assignment = raycast.assign_superface_levels(sf, table, h_max)
    return sf, table, assignment


def default_rig(resolution):
    cfg = pl.PipelineConfig()
    return cameras.build_camera_rig(
        distance=cfg.camera_distance, fov_deg=cfg.camera_fov_deg, resolution=resolution
    )


def test_convex_hit_levels(icosphere320):
    """Icosphere at 256^2 rays: every superface level 1, oracle-exact, < 10 s."""
    with criterion("convex-hit-levels") as info:
        rig = default_rig(256)
        t0 = time.perf_counter()
        sf, table, assignment = _decompose(icosphere320, rig, 256, threads=1)
        elapsed = time.perf_counter() - t0
        assert (assignment.superface_level == 1).all()

        oracle = brute_force_weight_table(icosphere320, rig_as_tuples(rig), 256)
        np.testing.assert_allclose(table.weights, oracle, rtol=1e-9, atol=1e-12)
        oracle_levels = raycast.assign_superface_levels(
            sf, raycast.WeightTable(weights=oracle), 4
        )
        assert (oracle_levels.superface_level == assignment.superface_level).all()
        assert elapsed < 10.0
        info["superfaces"] = sf.count
        info["time_s"] = round(elapsed, 2)


def test_nested_sphere_layering(nested):
    """Outer superfaces level 1, >= 95% of inner at level 2, analytic oracle."""
    with criterion("nested-sphere-layering") as info:
        rig = default_rig(256)
        t0 = time.perf_counter()
        sf, table, assignment = _decompose(nested, rig, 256)
        elapsed = time.perf_counter() - t0

        sphere_table = analytic_sphere_orders(rig_as_tuples(rig), 256, [0.5, 0.25])
        assert int(np.argmax(sphere_table[0])) == 0  # outer dominant at order 1
        assert int(np.argmax(sphere_table[1])) == 1  # inner dominant at order 2

        outer_sf = sorted(set(sf.assignment[:1280].tolist()))
        inner_sf = sorted(set(sf.assignment[1280:].tolist()))
        assert set(outer_sf).isdisjoint(inner_sf)
        outer_levels = assignment.superface_level[outer_sf]
        inner_levels = assignment.superface_level[inner_sf]
        assert (outer_levels == 1).all()
        inner_l2 = float((inner_levels == 2).mean())
        assert inner_l2 >= 0.95
        assert elapsed < 60.0
        info["inner_level2"] = round(inner_l2, 3)
        info["time_s"] = round(elapsed, 2)


def test_backface_ordering(icosphere320):
    """Negating every normal moves 100% of superfaces from level 1 to level 2."""
    with criterion("backface-ordering") as info:
        rig = default_rig(256)
        _, _, before = _decompose(icosphere320, rig, 256)
        flipped = icosphere320.with_flipped_winding()
        _, _, after = _decompose(flipped, rig, 256)
        assert (before.superface_level == 1).all()
        assert (after.superface_level == 2).all()
        info["superfaces"] = len(after.superface_level)


def _fixtures_with_levels():
    rig = default_rig(192)
    fixtures = {
        "cube": geometry.normalize_unit_box(primitives.cube()),
        "icosphere": geometry.normalize_unit_box(primitives.icosphere(2, 0.5)),
        "nested_spheres": geometry.normalize_unit_box(primitives.nested_spheres()),
        "three_shells": geometry.normalize_unit_box(primitives.concentric_shells()),
        "open_box": geometry.normalize_unit_box(primitives.open_box()),
    }
    out = {}
    for name, mesh in fixtures.items():
        sf, table, assignment = _decompose(mesh, rig, 192)
        out[name] = (mesh, assignment, levelsets.build_level_sets(assignment))
    return rig, out


def test_level_set_algebra():
    """Init sets partition F; the residual chain equals the set-difference oracle."""
    with criterion("level-set-algebra") as info:
        _, fixtures = _fixtures_with_levels()
        for name, (mesh, assignment, sets) in fixtures.items():
            n = mesh.num_faces
            all_faces = set(range(n))
            init_union: set[int] = set()
            for lf in sets:
                members = set(lf.init_faces.tolist())
                assert init_union.isdisjoint(members), name
                init_union |= members
            assert init_union == all_faces, name

            textured: set[int] = set()
            for lf in sets:
                expected_res = all_faces - textured
                assert set(lf.residual_faces.tolist()) == expected_res, name
                assert set(np.nonzero(lf.flip)[0].tolist()) == all_faces - expected_res, name
                textured |= set(lf.init_faces.tolist())
        info["fixtures"] = len(fixtures)


def test_reveal_property():
    """Flip+cull coverage of residual faces >= init-only rasterization, and
    silhouettes stay within 1% of level 1 on watertight fixtures."""
    with criterion("reveal-property") as info:
        rig, fixtures = _fixtures_with_levels()
        checked = 0
        for name in ("nested_spheres", "open_box"):
            mesh, assignment, sets = fixtures[name]
            assert sets.num_levels >= 2, f"{name} must decompose into multiple levels"
            for lf in sets:
                if lf.level < 2:
                    continue
                res_mask = np.zeros(mesh.num_faces, dtype=bool)
                res_mask[lf.residual_faces] = True
                init_mask = np.zeros(mesh.num_faces, dtype=bool)
                init_mask[lf.init_faces] = True
                for view in rig:
                    buf = raster.render_level_view(mesh, sets, lf.level, view)
                    reveal_cov = int(
                        ((buf.face_id >= 0) & res_mask[np.clip(buf.face_id, 0, None)]).sum()
                    )
                    alone = raster.render_view(mesh, view, active=init_mask)
                    alone_cov = int(alone.coverage_mask().sum())
                    assert reveal_cov >= alone_cov, (name, lf.level)
                    checked += 1
        for name in ("nested_spheres", "three_shells"):
            mesh, assignment, sets = fixtures[name]
            for view in rig:
                sil1 = raster.render_level_view(mesh, sets, 1, view).coverage_mask()
                for lf in sets:
                    if lf.level < 2:
                        continue
                    silk = raster.render_level_view(mesh, sets, lf.level, view).coverage_mask()
                    assert np.logical_xor(sil1, silk).mean() <= 0.01, (name, lf.level)
        info["view_level_pairs"] = checked


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    """Shared end-to-end nested-sphere run at the documented scaled-down sizes."""
    base = tmp_path_factory.mktemp("accept")
    mesh_path = base / "nested.obj"
    geometry.save_mesh_obj(geometry.normalize_unit_box(primitives.nested_spheres()), mesh_path)
    workdir = base / "work"
    config = pl.PipelineConfig(
        ray_resolution=256,
        view_resolution=256,
        uv_resolution=512,
        palette={1: "red", 2: "blue"},
        seed=11,
    )
    code, report = pl.run_pipeline(config, mesh_path, workdir)
    assert code == pl.EXIT_OK
    return config, mesh_path, workdir, report


def test_blend_normalization(pipeline_run):
    """Sum of normalized weights is 1 +- 1e-6 on every masked texel; single-cover
    texels copy their layer bit-exactly; softmax is shift invariant."""
    with criterion("blend-normalization") as info:
        config, mesh_path, workdir, report = pipeline_run
        layers = []
        for level in (1, 2):
            data = np.load(workdir / f"layer_L{level}.npz")
            layers.append(
                uvblend.UVLayer(
                    level=level,
                    texture=data["texture"].astype(np.float64),
                    weight=data["weight"].astype(np.float64),
                    mask=data["mask"],
                )
            )
        blended = uvblend.blend_levels(layers, temperature=config.tau)
        covered = blended.covered
        wsum = blended.normalized_weights.sum(axis=0)
        assert np.abs(wsum[covered] - 1.0).max() <= 1e-6
        assert (wsum[covered] != 0).all() and covered.any()

        single = layers[0].mask & ~layers[1].mask
        assert single.any()
        assert (blended.image[single] == layers[0].texture[single]).all()
        single2 = layers[1].mask & ~layers[0].mask
        assert single2.any()
        assert (blended.image[single2] == layers[1].texture[single2]).all()

        shifted = [
            uvblend.UVLayer(
                level=l.level, texture=l.texture, weight=l.weight + 7.5, mask=l.mask
            )
            for l in layers
        ]
        blended_shifted = uvblend.blend_levels(shifted, temperature=config.tau)
        delta = np.abs(blended.normalized_weights - blended_shifted.normalized_weights)
        assert delta[:, covered].max() <= 1e-6
        info["masked_texels"] = int(covered.sum())


def test_unprojection_roundtrip():
    """512^2 checker -> 8 views at 768^2 -> texture: PSNR >= 30 dB, < 30 s."""
    with criterion("unprojection-roundtrip") as info:
        t0 = time.perf_counter()
        value = checker_roundtrip_psnr(512, 768, 64)
        elapsed = time.perf_counter() - t0
        assert value >= 30.0
        assert elapsed < 30.0
        info["psnr_db"] = round(value, 1)
        info["time_s"] = round(elapsed, 1)


def test_dual_prompt_analog(pipeline_run):
    """Per-level palettes land on their faces: coverage >= 99%, outer texels
    red and inner texels blue within 32/255 for >= 95% each."""
    with criterion("dual-prompt-analog") as info:
        config, mesh_path, workdir, report = pipeline_run
        assert report["levels"] == 2
        coverage = report["coverage"]
        assert coverage >= 0.99

        final = np.asarray(Image.open(workdir / "final.png")).astype(np.int64)
        mesh = geometry.load_mesh(workdir / "mesh_prepared.obj")
        geom = uvblend.build_uv_geometry(mesh, config.uv_resolution)
        data = np.load(workdir / "layer_L1.npz")
        covered = np.load(workdir / "layer_L1.npz")["mask"] | np.load(
            workdir / "layer_L2.npz"
        )["mask"]

        outer_tex = geom.occupied & (geom.face_id < 1280) & covered
        inner_tex = geom.occupied & (geom.face_id >= 1280) & covered
        red_ok = (np.abs(final[outer_tex] - [255, 0, 0]).max(axis=1) <= 32).mean()
        blue_ok = (np.abs(final[inner_tex] - [0, 0, 255]).max(axis=1) <= 32).mean()
        assert red_ok >= 0.95
        assert blue_ok >= 0.95
        info["coverage"] = round(coverage, 4)
        info["outer_red"] = round(float(red_ok), 4)
        info["inner_blue"] = round(float(blue_ok), 4)


def test_full_pipeline_determinism(tmp_path):
    """Same config at 1 and 8 threads: byte-identical final.png, stable counts."""
    with criterion("determinism") as info:
        mesh_path = tmp_path / "nested.obj"
        geometry.save_mesh_obj(
            geometry.normalize_unit_box(primitives.nested_spheres()), mesh_path
        )
        digests = []
        reports = []
        for threads in (1, 8):
            workdir = tmp_path / f"w{threads}"
            config = pl.PipelineConfig(
                ray_resolution=128,
                view_resolution=128,
                uv_resolution=256,
                palette={1: "red", 2: "blue"},
                threads=threads,
            )
            code, report = pl.run_pipeline(config, mesh_path, workdir)
            assert code == pl.EXIT_OK
            digests.append((workdir / "final.png").read_bytes())
            reports.append(report)
        assert digests[0] == digests[1]
        keys = ("levels", "coverage")
        for key in keys:
            assert reports[0][key] == reports[1][key]
        stage_counts_0 = reports[0]["stages"]["level_sets"]
        stage_counts_1 = reports[1]["stages"]["level_sets"]
        assert stage_counts_0["init_sizes"] == stage_counts_1["init_sizes"]
        info["final_png_bytes"] = len(digests[0])


def test_runtime_trend_with_face_count():
    """Hit-level assignment time increases monotonically from ~5k to ~40k faces."""
    with criterion("runtime-trend") as info:
        rig = default_rig(128)
        times = []
        sizes = []
        for n_lat, n_lon in ((51, 50), (51, 100), (101, 100), (101, 200)):
            mesh = geometry.normalize_unit_box(primitives.uv_sphere(n_lat, n_lon))
            adj = geometry.build_topology(mesh)
            sf = superfaces.segment_superfaces(mesh, adj, 45.0)
            t0 = time.perf_counter()
            table = raycast.compute_weight_table(mesh, rig, 128, threads=1)
            raycast.assign_superface_levels(sf, table, 4)
            times.append(time.perf_counter() - t0)
            sizes.append(mesh.num_faces)
        assert sizes == [5000, 10000, 20000, 40000]
        for a, b in zip(times, times[1:]):
            assert b > a, times
        info["times_s"] = [round(t, 2) for t in times]


SD_PROVIDER_DIR = REPO_ROOT / "sd_provider"


@pytest.mark.skipif(
    not (SD_PROVIDER_DIR / "dist" / "cli.js").exists(),
    reason="secondary provider not built (run npm install && npm run build in sd_provider/)",
)
def test_secondary_provider_contract(pipeline_run, tmp_path):
    """[SECONDARY] sd_provider --dry-run emits 34 valid images that drive blend."""
    with criterion("secondary-provider-contract") as info:
        config, mesh_path, workdir, _ = pipeline_run
        manifest_path = workdir / "manifest.json"
        out_dir = tmp_path / "generated"
        proc = subprocess.run(
            [
                "node",
                str(SD_PROVIDER_DIR / "dist" / "cli.js"),
                "--manifest",
                str(manifest_path),
                "--out",
                str(out_dir),
                "--seed",
                "3",
                "--dry-run",
            ],
            capture_output=True,
            text=True,
            timeout=300,
        )
        assert proc.returncode == 0, proc.stderr
        images = sorted(out_dir.glob("view_L*_V*.png"))
        assert len(images) == 34

        manifest = providers.RenderManifest.load(manifest_path)
        output = providers.load_directory_textures(out_dir, manifest)
        assert len(output) == 34

        blend_work = tmp_path / "blendwork"
        shutil.copytree(workdir, blend_work)
        (blend_work / "final.png").unlink()
        state = blend_work / ".stage_state.json"
        state.unlink()
        cfg = config.model_copy(update={"provider": f"dir:{out_dir}"})
        code, report = pl.run_pipeline(cfg, mesh_path, blend_work, stages="blend")
        assert code == pl.EXIT_OK
        assert (blend_work / "final.png").exists()
        info["images"] = len(images)
        info["coverage"] = round(report["coverage"], 4)
