import numpy as np
import pytest

from layertex import geometry, primitives, superfaces
from layertex.errors import AtlasPackingError

from .oracles import region_grow_reference


def _segment(mesh, threshold):
    adj = geometry.build_topology(mesh)
    return superfaces.segment_superfaces(mesh, adj, threshold), adj


def test_cube_threshold_30(unit_cube):
    sf, adj = _segment(unit_cube, 30.0)
    assert sf.count == 6
    assert sorted(sf.sizes().tolist()) == [2] * 6
    ref = region_grow_reference(unit_cube.face_normals, adj, 30.0)
    assert (sf.assignment == ref).all()


def test_icosphere_threshold_89(icosphere320):
    # seed-normal growth splits a closed sphere into a few broad caps; the
    # reference sweep must agree exactly
    sf, adj = _segment(icosphere320, 89.0)
    ref = region_grow_reference(icosphere320.face_normals, adj, 89.0)
    assert (sf.assignment == ref).all()
    assert sf.count == int(ref.max()) + 1
    # every face normal stays within the threshold of its seed's normal
    seeds = sf.seed_faces[sf.assignment]
    dots = np.einsum("fc,fc->f", icosphere320.face_normals, icosphere320.face_normals[seeds])
    assert (dots >= np.cos(np.radians(89.0)) - 1e-9).all()


def test_threshold_zero_merges_coplanar_only(unit_cube):
    sf, _ = _segment(unit_cube, 0.0)
    assert sf.count == 6  # coplanar pairs still merge at 0 degrees
    sizes = sf.sizes()
    assert (sizes == 2).all()


def test_partition_and_connectivity(nested):
    sf, adj = _segment(nested, 45.0)
    assert sf.sizes().sum() == nested.num_faces
    assert set(np.unique(sf.assignment)) == set(range(sf.count))
    # BFS inside each superface reaches every member
    for s in range(sf.count):
        members = set(sf.members(s).tolist())
        start = next(iter(members))
        seen = {start}
        frontier = [start]
        while frontier:
            f = frontier.pop()
            for nb in adj[f]:
                if nb in members and nb not in seen:
                    seen.add(nb)
                    frontier.append(nb)
        assert seen == members


def test_segmentation_deterministic(nested):
    sf1, _ = _segment(nested, 45.0)
    sf2, _ = _segment(nested, 45.0)
    assert (sf1.assignment == sf2.assignment).all()


def _rasterize_chart_masks(mesh, sf, res):
    """Nearest-texel rasterization of each chart for overlap checks."""
    from layertex.uvblend import build_uv_geometry

    geom = build_uv_geometry(mesh, res)
    masks = []
    for s in range(sf.count):
        face_set = set(sf.members(s).tolist())
        mask = np.isin(geom.face_id, list(face_set)) & geom.occupied
        masks.append(mask)
    return masks


def test_atlas_cube_charts_disjoint_with_gutter(unit_cube):
    sf, _ = _segment(unit_cube, 30.0)
    atlas = superfaces.generate_uv_atlas(unit_cube, sf, texture_res=1024, gutter_px=4)
    mesh = unit_cube.with_uv(atlas.uv)
    masks = _rasterize_chart_masks(mesh, sf, 1024)
    ys, xs = np.mgrid[0:1024, 0:1024]
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            assert not (masks[i] & masks[j]).any()
            # min pairwise texel distance >= gutter
            pi = np.stack([ys[masks[i]], xs[masks[i]]], axis=1)
            pj = np.stack([ys[masks[j]], xs[masks[j]]], axis=1)
            # compare bounding boxes first to keep this cheap
            gap_y = max(pj[:, 0].min() - pi[:, 0].max(), pi[:, 0].min() - pj[:, 0].max())
            gap_x = max(pj[:, 1].min() - pi[:, 1].max(), pi[:, 1].min() - pj[:, 1].max())
            assert max(gap_x, gap_y) >= 4


def test_atlas_single_quad():
    quad = primitives.quad()
    sf, _ = _segment(quad, 45.0)
    assert sf.count == 1
    atlas = superfaces.generate_uv_atlas(quad, sf, texture_res=256, gutter_px=4)
    assert atlas.uv.min() >= 0.0 and atlas.uv.max() <= 1.0
    # axis-aligned square chart: UV extents match in both axes
    extent = atlas.uv.reshape(-1, 2).max(axis=0) - atlas.uv.reshape(-1, 2).min(axis=0)
    assert extent[0] == pytest.approx(extent[1], rel=1e-6)


def test_atlas_area_proportionality(nested):
    sf, _ = _segment(nested, 45.0)
    atlas = superfaces.generate_uv_atlas(nested, sf, texture_res=1024, gutter_px=4)
    areas3d = nested.areas()
    for s in range(sf.count):
        members = sf.members(s)
        uv_tris = atlas.uv[members]
        e1 = uv_tris[:, 1] - uv_tris[:, 0]
        e2 = uv_tris[:, 2] - uv_tris[:, 0]
        uv_area = float(np.abs(0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])).sum())
        ratio = uv_area / float(areas3d[members].sum())
        if s == 0:
            base = ratio
        else:
            assert ratio == pytest.approx(base, rel=0.20)


def test_atlas_all_faces_covered(nested):
    sf, _ = _segment(nested, 45.0)
    atlas = superfaces.generate_uv_atlas(nested, sf, texture_res=512, gutter_px=4)
    tri_area = np.abs(
        0.5
        * (
            (atlas.uv[:, 1, 0] - atlas.uv[:, 0, 0]) * (atlas.uv[:, 2, 1] - atlas.uv[:, 0, 1])
            - (atlas.uv[:, 1, 1] - atlas.uv[:, 0, 1]) * (atlas.uv[:, 2, 0] - atlas.uv[:, 0, 0])
        )
    )
    assert (tri_area > 0).all()


def test_packing_failure_reports_scale():
    # an absurd gutter makes the per-chart padding alone overflow the square
    mesh = primitives.cube()
    sf, _ = _segment(mesh, 30.0)
    with pytest.raises(AtlasPackingError) as err:
        superfaces.generate_uv_atlas(mesh, sf, texture_res=64, gutter_px=20)
    assert err.value.required_scale >= 0.0
