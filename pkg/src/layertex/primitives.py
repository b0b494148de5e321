"""Procedural meshes used for demos, diagnostics, and the test fixtures."""

from __future__ import annotations

import math

import numpy as np

from .geometry import Mesh, mesh_from_arrays


def quad(normal_axis: str = "x", size: float = 1.0) -> Mesh:
    """Unit square (two triangles) centered at the origin, facing +axis."""
    s = size / 2.0
    if normal_axis == "x":
        verts = np.array([[0, -s, -s], [0, s, -s], [0, s, s], [0, -s, s]], dtype=np.float64)
    elif normal_axis == "y":
        verts = np.array([[s, 0, -s], [-s, 0, -s], [-s, 0, s], [s, 0, s]], dtype=np.float64)
    elif normal_axis == "z":
        verts = np.array([[-s, -s, 0], [s, -s, 0], [s, s, 0], [-s, s, 0]], dtype=np.float64)
    else:
        raise ValueError(f"unknown axis {normal_axis!r}")
    faces = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    return mesh_from_arrays(verts, faces)


def cube(size: float = 1.0) -> Mesh:
    """Axis-aligned cube, 12 triangles, outward CCW winding."""
    s = size / 2.0
    v = np.array(
        [
            [-s, -s, -s], [s, -s, -s], [s, s, -s], [-s, s, -s],
            [-s, -s, s], [s, -s, s], [s, s, s], [-s, s, s],
        ],
        dtype=np.float64,
    )
    quads = [
        (1, 2, 6, 5),  # +x
        (3, 0, 4, 7),  # -x
        (2, 3, 7, 6),  # +y
        (0, 1, 5, 4),  # -y
        (4, 5, 6, 7),  # +z
        (3, 2, 1, 0),  # -z
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append([a, b, c])
        faces.append([a, c, d])
    return mesh_from_arrays(v, np.array(faces, dtype=np.int32))


def icosphere(subdivisions: int = 2, radius: float = 0.5) -> Mesh:
    """Subdivided icosahedron with outward normals; 20 * 4^n faces."""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=np.float64) for v in verts]

    def push(p: np.ndarray) -> int:
        verts.append(p)
        return len(verts) - 1

    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                midpoint[key] = push((verts[a] + verts[b]) * 0.5)
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces

    v = np.asarray(verts, dtype=np.float64)
    v = v / np.linalg.norm(v, axis=1, keepdims=True) * radius
    return mesh_from_arrays(v, np.array(faces, dtype=np.int32))


def uv_sphere(n_lat: int, n_lon: int, radius: float = 0.5) -> Mesh:
    """Latitude/longitude sphere with 2 * n_lat * n_lon triangles."""
    verts = [np.array([0.0, 0.0, radius]), np.array([0.0, 0.0, -radius])]
    rings: list[list[int]] = []
    for i in range(1, n_lat):
        theta = math.pi * i / n_lat
        ring = []
        for j in range(n_lon):
            phi = 2.0 * math.pi * j / n_lon
            verts.append(
                radius
                * np.array(
                    [math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)]
                )
            )
            ring.append(len(verts) - 1)
        rings.append(ring)

    faces = []
    top, bottom = 0, 1
    first = rings[0]
    for j in range(n_lon):
        faces.append([top, first[j], first[(j + 1) % n_lon]])
    for i in range(len(rings) - 1):
        a, b = rings[i], rings[i + 1]
        for j in range(n_lon):
            j2 = (j + 1) % n_lon
            faces.append([a[j], b[j], b[j2]])
            faces.append([a[j], b[j2], a[j2]])
    last = rings[-1]
    for j in range(n_lon):
        faces.append([bottom, last[(j + 1) % n_lon], last[j]])
    return mesh_from_arrays(np.asarray(verts), np.array(faces, dtype=np.int32))


def _merge(meshes: list[Mesh]) -> Mesh:
    verts = []
    faces = []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += m.num_vertices
    return mesh_from_arrays(np.vstack(verts), np.vstack(faces).astype(np.int32))


def nested_spheres(
    outer_radius: float = 0.5,
    inner_radius: float = 0.25,
    outer_subdivisions: int = 3,
    inner_subdivisions: int = 2,
) -> Mesh:
    """Two concentric icospheres with outward normals; the canonical two-layer fixture."""
    return _merge(
        [icosphere(outer_subdivisions, outer_radius), icosphere(inner_subdivisions, inner_radius)]
    )


def concentric_shells(radii: tuple[float, ...] = (0.5, 0.35, 0.2), subdivisions: int = 2) -> Mesh:
    """N concentric icosphere shells, outermost first."""
    return _merge([icosphere(subdivisions, r) for r in radii])


def open_box(size: float = 1.0, wall_inset: float = 0.08) -> Mesh:
    """Double-walled box, open at the top.

    Outer shell (bottom + 4 walls) faces outward; the inner shell, inset by
    wall_inset, faces into the cavity. Mimics assets authored with separate
    interior and exterior surfaces.
    """
    s = size / 2.0
    t = s - wall_inset * size

    def walls(h: float, half: float, top: float, inward: bool) -> list[Mesh]:
        # h: floor height; half: half-width; top: rim height
        parts = []
        corners = [
            ((half, -half), (half, half)),    # +x wall
            ((half, half), (-half, half)),    # +y wall
            ((-half, half), (-half, -half)),  # -x wall
            ((-half, -half), (half, -half)),  # -y wall
        ]
        for (x0, y0), (x1, y1) in corners:
            quad_pts = np.array(
                [[x0, y0, h], [x1, y1, h], [x1, y1, top], [x0, y0, top]], dtype=np.float64
            )
            faces = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
            if inward:
                faces = faces[:, [0, 2, 1]]
            parts.append(mesh_from_arrays(quad_pts, faces))
        return parts

    # outer floor, normal -z (outward = down)
    floor_out = mesh_from_arrays(
        np.array([[-s, -s, -s], [s, -s, -s], [s, s, -s], [-s, s, -s]], dtype=np.float64),
        np.array([[0, 2, 1], [0, 3, 2]], dtype=np.int32),
    )
    # inner floor, normal +z (up into the cavity)
    fz = -s + wall_inset * size
    floor_in = mesh_from_arrays(
        np.array([[-t, -t, fz], [t, -t, fz], [t, t, fz], [-t, t, fz]], dtype=np.float64),
        np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32),
    )
    outer_walls = walls(-s, s, s, inward=False)
    inner_walls = walls(fz, t, s - wall_inset * size, inward=True)
    return _merge([floor_out] + outer_walls + [floor_in] + inner_walls)
