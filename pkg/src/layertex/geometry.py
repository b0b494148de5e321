"""Triangle mesh container, OBJ ingestion, normalization, and face adjacency."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import MeshError

log = logging.getLogger(__name__)

# Faces smaller than this (at unit-box scale) are dropped at load time.
DEGENERATE_AREA = 1e-12


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(n == 0.0, 1.0, n)


def face_normals_from_winding(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Unit normals from counter-clockwise winding (CCW seen from outside)."""
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    return _unit(np.cross(b - a, c - a))


def face_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=-1)


@dataclass(frozen=True)
class Mesh:
    """Indexed triangle mesh. Immutable after construction; shareable across threads.

    vertices:      (V, 3) float64 positions in scene units
    faces:         (F, 3) int32 vertex indices, CCW = outward
    face_normals:  (F, 3) float64 unit normals
    uv:            optional (F, 3, 2) float64 per-corner coordinates in [0, 1]^2
    superface_id:  optional (F,) int32 cluster labels
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_normals: np.ndarray
    uv: np.ndarray | None = None
    superface_id: np.ndarray | None = None

    def __post_init__(self):
        if len(self.faces) == 0:
            raise MeshError("mesh has no faces")
        if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
            raise MeshError("face index out of range")
        for arr in (self.vertices, self.faces, self.face_normals, self.uv, self.superface_id):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def areas(self) -> np.ndarray:
        return face_areas(self.vertices, self.faces)

    def with_uv(self, uv: np.ndarray) -> "Mesh":
        uv = np.ascontiguousarray(uv, dtype=np.float64)
        if uv.shape != (self.num_faces, 3, 2):
            raise MeshError(f"uv shape {uv.shape} does not match face count {self.num_faces}")
        return replace(self, uv=uv)

    def with_superfaces(self, labels: np.ndarray) -> "Mesh":
        labels = np.ascontiguousarray(labels, dtype=np.int32)
        return replace(self, superface_id=labels)

    def with_flipped_winding(self) -> "Mesh":
        """Reverse every face's vertex order; normals negate exactly."""
        faces = np.ascontiguousarray(self.faces[:, [0, 2, 1]])
        normals = np.ascontiguousarray(-self.face_normals)
        uv = None if self.uv is None else np.ascontiguousarray(self.uv[:, [0, 2, 1], :])
        return Mesh(self.vertices, faces, normals, uv=uv, superface_id=self.superface_id)


def mesh_from_arrays(
    vertices: np.ndarray,
    faces: np.ndarray,
    uv: np.ndarray | None = None,
    drop_degenerate: bool = False,
) -> Mesh:
    """Build a Mesh, computing normals from winding.

    With drop_degenerate, faces below the area threshold (measured at the scale
    the mesh will have after unit-box normalization) are removed with a logged count.
    """
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    faces = np.ascontiguousarray(faces, dtype=np.int32)
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise MeshError(f"faces must be (F, 3), got {faces.shape}")
    if len(faces) == 0:
        raise MeshError("mesh has no faces")
    if faces.min() < 0 or faces.max() >= len(vertices):
        raise MeshError("face index out of range")

    extent = vertices.max(axis=0) - vertices.min(axis=0)
    scale = 1.0 / extent.max() if extent.max() > 0 else 1.0
    areas = face_areas(vertices, faces) * scale * scale
    degenerate = areas <= DEGENERATE_AREA
    if degenerate.any():
        if not drop_degenerate:
            raise MeshError(f"{int(degenerate.sum())} degenerate faces (area <= {DEGENERATE_AREA})")
        log.warning("dropping %d degenerate faces", int(degenerate.sum()))
        faces = np.ascontiguousarray(faces[~degenerate])
        if uv is not None:
            uv = np.ascontiguousarray(uv[~degenerate])
        if len(faces) == 0:
            raise MeshError("all faces degenerate")

    normals = face_normals_from_winding(vertices, faces)
    if uv is not None:
        uv = np.ascontiguousarray(uv, dtype=np.float64)
    return Mesh(vertices, faces, normals, uv=uv)


def _resolve_obj_index(token: str, count: int, line_no: int, kind: str) -> int:
    try:
        idx = int(token)
    except ValueError:
        raise MeshError(f"line {line_no}: malformed {kind} index '{token}'")
    if idx > 0:
        idx -= 1
    elif idx < 0:
        idx += count
    else:
        raise MeshError(f"line {line_no}: {kind} index 0 is not valid in OBJ")
    if idx < 0 or idx >= count:
        raise MeshError(f"line {line_no}: {kind} index {token} out of range (have {count})")
    return idx


def load_mesh(path: str | Path) -> Mesh:
    """Load a Wavefront OBJ triangle mesh (quads and n-gons fan-triangulated).

    Reads v / vt / f records; vn records are ignored and normals are recomputed
    from winding. Per-corner UVs are kept only if every face carries them.
    """
    path = Path(path)
    if not path.exists():
        raise MeshError(f"mesh file not found: {path}")

    positions: list[list[float]] = []
    texcoords: list[list[float]] = []
    corner_v: list[list[int]] = []
    corner_vt: list[list[int]] = []

    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            tag = tokens[0]
            if tag == "v":
                if len(tokens) < 4:
                    raise MeshError(f"line {line_no}: vertex needs 3 coordinates")
                try:
                    positions.append([float(t) for t in tokens[1:4]])
                except ValueError:
                    raise MeshError(f"line {line_no}: malformed vertex coordinate")
            elif tag == "vt":
                if len(tokens) < 3:
                    raise MeshError(f"line {line_no}: texture coordinate needs 2 values")
                try:
                    texcoords.append([float(tokens[1]), float(tokens[2])])
                except ValueError:
                    raise MeshError(f"line {line_no}: malformed texture coordinate")
            elif tag == "f":
                if len(tokens) < 4:
                    raise MeshError(f"line {line_no}: face needs at least 3 vertices")
                vs: list[int] = []
                vts: list[int] = []
                for t in tokens[1:]:
                    parts = t.split("/")
                    vs.append(_resolve_obj_index(parts[0], len(positions), line_no, "vertex"))
                    if len(parts) > 1 and parts[1]:
                        vts.append(_resolve_obj_index(parts[1], len(texcoords), line_no, "texcoord"))
                    else:
                        vts.append(-1)
                # fan triangulation around the first corner
                for i in range(1, len(vs) - 1):
                    corner_v.append([vs[0], vs[i], vs[i + 1]])
                    corner_vt.append([vts[0], vts[i], vts[i + 1]])
            # other records (vn, o, g, s, usemtl, mtllib, ...) are ignored

    if not corner_v:
        raise MeshError(f"{path}: no faces found")
    if not positions:
        raise MeshError(f"{path}: no vertices found")

    vertices = np.asarray(positions, dtype=np.float64)
    faces = np.asarray(corner_v, dtype=np.int32)
    vt_idx = np.asarray(corner_vt, dtype=np.int64)

    uv = None
    if len(texcoords) > 0 and (vt_idx >= 0).all():
        uv = np.asarray(texcoords, dtype=np.float64)[vt_idx]
    elif (vt_idx >= 0).any():
        log.warning("%s: only some faces carry UVs; discarding the UV channel", path)

    return mesh_from_arrays(vertices, faces, uv=uv, drop_degenerate=True)


def save_mesh_obj(mesh: Mesh, path: str | Path) -> None:
    """Write vertices, per-corner UVs, and faces as OBJ with stable formatting."""
    path = Path(path)
    lines: list[str] = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    if mesh.uv is not None:
        flat_uv = mesh.uv.reshape(-1, 2)
        for t in flat_uv:
            lines.append(f"vt {t[0]:.17g} {t[1]:.17g}")
        for i, f in enumerate(mesh.faces):
            t0, t1, t2 = 3 * i + 1, 3 * i + 2, 3 * i + 3
            lines.append(f"f {f[0] + 1}/{t0} {f[1] + 1}/{t1} {f[2] + 1}/{t2}")
    else:
        for f in mesh.faces:
            lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def normalize_unit_box(mesh: Mesh) -> Mesh:
    """Uniformly scale and translate so the bounding box is centered at the
    origin with maximum extent 1.0 (touching [-0.5, 0.5]^3 on the longest axis).
    """
    lo, hi = mesh.bounds()
    extent = hi - lo
    max_extent = float(extent.max())
    if max_extent <= 0.0:
        raise MeshError("zero-extent mesh: all vertices coincide")
    center = (lo + hi) * 0.5
    vertices = (mesh.vertices - center) / max_extent
    # Direction of normals is invariant under uniform scale + translation.
    return Mesh(
        np.ascontiguousarray(vertices),
        mesh.faces,
        mesh.face_normals,
        uv=mesh.uv,
        superface_id=mesh.superface_id,
    )


def build_topology(mesh: Mesh) -> list[list[int]]:
    """Per-face lists of faces sharing an edge (orientation-agnostic).

    Non-manifold edges are allowed; every edge-sharing face is listed.
    Neighbor lists are sorted ascending for deterministic traversal.
    """
    edge_faces: dict[tuple[int, int], list[int]] = {}
    faces = mesh.faces
    for fi in range(len(faces)):
        a, b, c = int(faces[fi, 0]), int(faces[fi, 1]), int(faces[fi, 2])
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            edge_faces.setdefault(key, []).append(fi)
    neighbors: list[set[int]] = [set() for _ in range(len(faces))]
    for members in edge_faces.values():
        if len(members) < 2:
            continue
        for fi in members:
            neighbors[fi].update(m for m in members if m != fi)
    return [sorted(n) for n in neighbors]
