import json

import numpy as np
import pytest
from PIL import Image

from layertex import cameras, providers, raster
from layertex.errors import ProviderError


@pytest.fixture()
def small_manifest(tmp_path):
    """2-level, 3-view manifest with real depth maps on disk."""
    rig = cameras.CameraRig(cameras.build_camera_rig(distance=2.0, resolution=48).views[:3])
    depth = np.full((48, 48), np.inf)
    depth[8:40, 8:40] = 2.0  # square silhouette
    for level in (1, 2):
        for vi, view in enumerate(rig):
            name = providers.DEPTH_IMAGE_NAME.format(level=level, view=vi)
            raster.write_depth_png(tmp_path / name, depth, view.near, view.far)
    manifest = providers.build_manifest(
        mesh_path="mesh.obj",
        rig=rig,
        levels=[1, 2],
        prompts={1: "outer shell", 2: "hidden core"},
        view_resolution=(48, 48),
        base_dir=tmp_path,
    )
    manifest.save(tmp_path / "manifest.json")
    return manifest, tmp_path


def test_manifest_roundtrip(small_manifest):
    manifest, tmp_path = small_manifest
    again = providers.RenderManifest.load(tmp_path / "manifest.json")
    assert again.to_dict() == manifest.to_dict()
    assert again.levels == [1, 2]
    assert len(again.views_of(1)) == 3
    assert again.prompts[2] == "hidden core"


def test_manifest_unknown_schema(tmp_path, small_manifest):
    manifest, base = small_manifest
    data = manifest.to_dict()
    data["schema"] = 99
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ProviderError, match="schema"):
        providers.RenderManifest.load(path)


def test_manifest_duplicate_entry_rejected(small_manifest):
    manifest, _ = small_manifest
    data = manifest.to_dict()
    data["levels"][0]["views"].append(data["levels"][0]["views"][0])
    with pytest.raises(ProviderError, match="duplicate"):
        providers.RenderManifest.from_dict(data)


def test_procedural_deterministic(small_manifest):
    manifest, _ = small_manifest
    a = providers.procedural_generate_views(manifest, seed=7, palette={1: "red", 2: "blue"})
    b = providers.procedural_generate_views(manifest, seed=7, palette={1: "red", 2: "blue"})
    assert set(a) == {(lvl, v) for lvl in (1, 2) for v in range(3)}
    for key in a:
        assert (a[key] == b[key]).all()


def test_procedural_noise_seed_sensitivity(small_manifest):
    manifest, _ = small_manifest
    a = providers.procedural_generate_views(manifest, seed=7, palette={1: {"type": "noise"}})
    b = providers.procedural_generate_views(manifest, seed=8, palette={1: {"type": "noise"}})
    assert (a[(1, 0)] != b[(1, 0)]).any()


def test_procedural_respects_silhouette(small_manifest):
    manifest, _ = small_manifest
    out = providers.procedural_generate_views(manifest, seed=0, palette={1: "red", 2: "blue"})
    img = out[(1, 0)]
    assert (img[20, 20] == [255, 0, 0]).all()  # inside the square
    assert (img[0, 0] == 0).all()  # background stays black
    img2 = out[(2, 0)]
    assert (img2[20, 20] == [0, 0, 255]).all()


def test_procedural_checker_pattern(small_manifest):
    manifest, _ = small_manifest
    out = providers.procedural_generate_views(
        manifest,
        seed=0,
        palette={1: {"type": "checker", "colors": ["white", "gray"], "cell_px": 8}},
    )
    img = out[(1, 0)]
    assert (img[9, 9] != img[9, 17]).any()  # adjacent cells differ


def test_procedural_missing_depth(tmp_path, small_manifest):
    manifest, base = small_manifest
    (base / "depth_L1_V00.png").unlink()
    with pytest.raises(ProviderError, match="missing depth"):
        providers.procedural_generate_views(manifest, seed=0)


def test_save_and_load_directory(small_manifest, tmp_path):
    manifest, _ = small_manifest
    out = providers.procedural_generate_views(manifest, seed=3)
    views_dir = tmp_path / "views"
    written = providers.save_provider_output(out, views_dir)
    assert len(written) == 6
    loaded = providers.load_directory_textures(views_dir, manifest)
    for key in out:
        assert (loaded[key] == out[key]).all()


def test_load_directory_lists_all_missing(small_manifest, tmp_path):
    manifest, _ = small_manifest
    out = providers.procedural_generate_views(manifest, seed=3)
    views_dir = tmp_path / "views"
    providers.save_provider_output(out, views_dir)
    (views_dir / "view_L2_V01.png").unlink()
    (views_dir / "view_L1_V02.png").unlink()
    with pytest.raises(ProviderError) as err:
        providers.load_directory_textures(views_dir, manifest)
    message = str(err.value)
    assert "view_L2_V01.png" in message and "view_L1_V02.png" in message
    assert "2 view image(s) missing" in message


def test_load_directory_dimension_mismatch(small_manifest, tmp_path):
    manifest, _ = small_manifest
    out = providers.procedural_generate_views(manifest, seed=3)
    views_dir = tmp_path / "views"
    providers.save_provider_output(out, views_dir)
    Image.new("RGB", (32, 32)).save(views_dir / "view_L1_V01.png")
    with pytest.raises(ProviderError, match="view_L1_V01.png is 32x32"):
        providers.load_directory_textures(views_dir, manifest)


def test_unknown_color_and_pattern(small_manifest):
    manifest, _ = small_manifest
    with pytest.raises(ProviderError, match="unknown color"):
        providers.procedural_generate_views(manifest, seed=0, palette={1: "vermilion"})
    with pytest.raises(ProviderError, match="unknown pattern"):
        providers.procedural_generate_views(manifest, seed=0, palette={1: {"type": "swirl"}})
