"""Face clustering into superfaces and the fallback planar UV atlas.

Superfaces are edge-connected, low-curvature face clusters: region growing
admits a neighbor when its normal stays within the configured angle of the
region seed's normal. They are the unit of visibility-layer assignment, and
each one becomes a chart when the input mesh carries no UVs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import AtlasPackingError, ConfigError
from .geometry import Mesh

log = logging.getLogger(__name__)

# Slack on the dot-product admission test so a 0-degree threshold still
# merges coplanar faces despite rounding in the normals.
_DOT_EPS = 1e-9


@dataclass(frozen=True)
class SuperfaceSet:
    """Partition of faces into contiguous clusters with ids 0..count-1."""

    assignment: np.ndarray  # (F,) int32
    count: int
    seed_faces: np.ndarray  # (count,) int32, region-growing seed of each cluster

    def __post_init__(self):
        self.assignment.setflags(write=False)
        self.seed_faces.setflags(write=False)

    def members(self, sf: int) -> np.ndarray:
        return np.nonzero(self.assignment == sf)[0]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.count)


def segment_superfaces(
    mesh: Mesh,
    adjacency: list[list[int]],
    normal_angle_threshold_deg: float = 45.0,
) -> SuperfaceSet:
    """Greedy BFS region growing over the face adjacency.

    Seeds are the lowest-index unassigned face; a neighbor joins a region iff
    the angle between its normal and the seed's normal is within the
    threshold. Deterministic given face order.
    """
    if not (0.0 <= normal_angle_threshold_deg <= 90.0):
        raise ConfigError("normal angle threshold must be in [0, 90] degrees")
    cos_thresh = math.cos(math.radians(normal_angle_threshold_deg)) - _DOT_EPS

    n_faces = mesh.num_faces
    normals = mesh.face_normals
    assignment = np.full(n_faces, -1, dtype=np.int32)
    seeds: list[int] = []

    for seed in range(n_faces):
        if assignment[seed] >= 0:
            continue
        sf = len(seeds)
        seeds.append(seed)
        seed_normal = normals[seed]
        assignment[seed] = sf
        queue = [seed]
        while queue:
            face = queue.pop(0)
            for nb in adjacency[face]:
                if assignment[nb] >= 0:
                    continue
                if float(normals[nb] @ seed_normal) >= cos_thresh:
                    assignment[nb] = sf
                    queue.append(nb)

    return SuperfaceSet(
        assignment=assignment,
        count=len(seeds),
        seed_faces=np.asarray(seeds, dtype=np.int32),
    )


def superface_mean_normals(mesh: Mesh, superfaces: SuperfaceSet) -> np.ndarray:
    """Area-weighted mean normal per superface, unit length."""
    areas = mesh.areas()
    sums = np.zeros((superfaces.count, 3))
    np.add.at(sums, superfaces.assignment, mesh.face_normals * areas[:, None])
    norms = np.linalg.norm(sums, axis=1, keepdims=True)
    # A degenerate mean (normals cancel) falls back to the seed face normal.
    fallback = mesh.face_normals[superfaces.seed_faces]
    return np.where(norms > 1e-12, sums / np.maximum(norms, 1e-12), fallback)


@dataclass(frozen=True)
class UVAtlas:
    """Per-corner UV coordinates plus the packed chart rectangles."""

    uv: np.ndarray  # (F, 3, 2) in [0, 1]^2
    chart_bounds: np.ndarray  # (S, 4): u0, v0, u1, v1 of each padded cell
    gutter_px: int
    texture_res: int

    def __post_init__(self):
        self.uv.setflags(write=False)
        self.chart_bounds.setflags(write=False)


def _plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal basis of the plane orthogonal to `normal`."""
    axis = int(np.argmin(np.abs(normal)))
    ref = np.zeros(3)
    ref[axis] = 1.0
    u = np.cross(ref, normal)
    u = u / np.linalg.norm(u)
    v = np.cross(normal, u)
    return u, v


def _shelf_pack(
    sizes: np.ndarray, order: np.ndarray, pad: float
) -> tuple[np.ndarray, float] | None:
    """Shelf-pack padded boxes into the unit square; None if they overflow.

    Returns per-chart (x, y) origins of the padded cells and the used height.
    """
    origins = np.zeros((len(sizes), 2))
    x = 0.0
    y = 0.0
    shelf_h = 0.0
    for idx in order:
        w = sizes[idx, 0] + 2 * pad
        h = sizes[idx, 1] + 2 * pad
        if w > 1.0 + 1e-12:
            return None
        if x + w > 1.0 + 1e-12:
            y += shelf_h
            x = 0.0
            shelf_h = 0.0
        if y + h > 1.0 + 1e-12:
            return None
        origins[idx] = (x, y)
        x += w
        shelf_h = max(shelf_h, h)
    return origins, y + shelf_h


def generate_uv_atlas(
    mesh: Mesh,
    superfaces: SuperfaceSet,
    texture_res: int = 1024,
    gutter_px: int = 4,
) -> UVAtlas:
    """Planar-project each superface and shelf-pack the charts with a gutter.

    Every chart is projected onto the plane orthogonal to its area-weighted
    mean normal and scaled by one global factor, so UV area tracks 3D area up
    to projection distortion. Raises AtlasPackingError when the charts cannot
    fit even after one global rescale retry.
    """
    pad = gutter_px / texture_res
    min_side = 1.0 / texture_res

    mean_normals = superface_mean_normals(mesh, superfaces)
    local_uv = np.zeros((mesh.num_faces, 3, 2))
    sizes = np.zeros((superfaces.count, 2))
    for sf in range(superfaces.count):
        member = superfaces.members(sf)
        u, v = _plane_basis(mean_normals[sf])
        pts = mesh.vertices[mesh.faces[member]]  # (m, 3, 3)
        proj = np.stack([pts @ u, pts @ v], axis=-1)  # (m, 3, 2)
        lo = proj.reshape(-1, 2).min(axis=0)
        proj = proj - lo
        local_uv[member] = proj
        sizes[sf] = np.maximum(proj.reshape(-1, 2).max(axis=0), min_side)

    # One global scale keeps UV area proportional to 3D area across charts.
    total_area = float((sizes[:, 0] * sizes[:, 1]).sum())
    scale = math.sqrt(0.55 / total_area) if total_area > 0 else 1.0
    max_side = float(sizes.max())
    scale = min(scale, (1.0 - 2 * pad) / max_side)

    order = np.lexsort((np.arange(superfaces.count), -sizes[:, 1]))

    packed = _shelf_pack(sizes * scale, order, pad)
    if packed is None:
        retry_scale = scale * 0.7
        packed = _shelf_pack(sizes * retry_scale, order, pad)
        if packed is None:
            # Bisect only to report a scale that would have fit.
            lo, hi = 0.0, retry_scale
            for _ in range(40):
                mid = (lo + hi) / 2
                if _shelf_pack(sizes * mid, order, pad) is None:
                    hi = mid
                else:
                    lo = mid
            raise AtlasPackingError(
                f"cannot pack {superfaces.count} charts at gutter {gutter_px}px "
                f"(gutter overhead too large); a global scale of {lo:.3g} would fit",
                required_scale=lo,
            )
        scale = retry_scale

    origins, _ = packed
    uv = np.zeros((mesh.num_faces, 3, 2))
    bounds = np.zeros((superfaces.count, 4))
    for sf in range(superfaces.count):
        member = superfaces.members(sf)
        content_origin = origins[sf] + pad
        uv[member] = local_uv[member] * scale + content_origin
        w, h = sizes[sf] * scale
        bounds[sf] = (*origins[sf], origins[sf][0] + w + 2 * pad, origins[sf][1] + h + 2 * pad)

    uv = np.clip(uv, 0.0, 1.0)
    return UVAtlas(uv=uv, chart_bounds=bounds, gutter_px=gutter_px, texture_res=texture_res)


def superfaces_payload(mesh: Mesh, superfaces: SuperfaceSet) -> dict:
    """JSON-ready summary: per-face ids plus per-superface statistics."""
    mean_normals = superface_mean_normals(mesh, superfaces)
    sizes = superfaces.sizes()
    return {
        "count": int(superfaces.count),
        "assignment": [int(x) for x in superfaces.assignment],
        "superfaces": [
            {
                "id": i,
                "face_count": int(sizes[i]),
                "seed_face": int(superfaces.seed_faces[i]),
                "mean_normal": [round(float(x), 9) for x in mean_normals[i]],
            }
            for i in range(superfaces.count)
        ],
    }
