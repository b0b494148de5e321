from __future__ import annotations

import pytest

from layertex import cameras, geometry, primitives, raycast, raster


@pytest.fixture(scope="session", autouse=True)
def warm_numba():
    """Compile the numba kernels once so timed tests measure steady state."""
    mesh = geometry.normalize_unit_box(primitives.cube())
    rig = cameras.build_camera_rig(resolution=16)
    raycast.compute_weight_table(mesh, rig, 16)
    raster.render_view(mesh, rig[0])
    from layertex import uvblend
    from layertex.superfaces import generate_uv_atlas, segment_superfaces

    adj = geometry.build_topology(mesh)
    sf = segment_superfaces(mesh, adj, 45.0)
    atlas = generate_uv_atlas(mesh, sf, 64, 2)
    uvblend.build_uv_geometry(mesh.with_uv(atlas.uv), 64)


@pytest.fixture(scope="session")
def unit_cube():
    return geometry.normalize_unit_box(primitives.cube())


@pytest.fixture(scope="session")
def icosphere320():
    return geometry.normalize_unit_box(primitives.icosphere(2, 0.5))


@pytest.fixture(scope="session")
def nested():
    return geometry.normalize_unit_box(primitives.nested_spheres())


@pytest.fixture(scope="session")
def small_rig():
    return cameras.build_camera_rig(distance=3.0, fov_deg=45.0, resolution=64)


def rig_as_tuples(rig):
    """Camera parameters in the plain-tuple form the oracles consume."""
    return [
        (tuple(v.position), tuple(v.look_at), tuple(v.up), v.fov_deg) for v in rig
    ]


@pytest.fixture(scope="session")
def nested_decomposition(nested):
    """Shared decomposition of the nested-sphere fixture at test scale."""
    from layertex import levelsets, superfaces

    adj = geometry.build_topology(nested)
    sf = superfaces.segment_superfaces(nested, adj, 45.0)
    rig = cameras.build_camera_rig(distance=3.0, fov_deg=45.0, resolution=128)
    table = raycast.compute_weight_table(nested, rig, 128)
    assignment = raycast.assign_superface_levels(sf, table, 4)
    sets = levelsets.build_level_sets(assignment)
    return {"superfaces": sf, "rig": rig, "table": table, "assignment": assignment, "sets": sets}


def write_obj(tmp_path, mesh, name="mesh.obj"):
    path = tmp_path / name
    geometry.save_mesh_obj(mesh, path)
    return path


@pytest.fixture()
def nested_obj(tmp_path, nested):
    return write_obj(tmp_path, nested, "nested.obj")
