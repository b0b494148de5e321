"""UV-space texture assembly: texel lifting, view unprojection, level blending.

Every texel is lifted to its 3D surface point once per mesh/atlas. For each
visibility level, texels of the level's residual faces gather color and an
|n . d| confidence from every view in which their surface point is actually
the visible fragment. Levels are then merged with a masked, numerically
stable softmax over the accumulated confidences.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .cameras import CameraRig
from .errors import BlendError, ProviderError
from .geometry import Mesh
from .levelsets import LevelSets
from .raster import ViewBuffers, render_level_view

log = logging.getLogger(__name__)

# Shadow-map style bias floor for the reprojection visibility test, scene
# units. The effective bias grows with the projected pixel footprint over the
# surface slope, since the buffer stores depth at the pixel center while the
# texel's point sits anywhere inside the pixel. Face-id equality is still
# required, so a wider bias cannot bind a texel to the wrong surface.
DEPTH_AGREEMENT_EPS = 1e-3
_SLOPE_COS_FLOOR = 0.05

# Texels dilated past chart borders to stop bilinear seam bleed.
GUTTER_DILATION = 2


@njit(cache=True, nogil=True)
def _uv_raster_kernel(uv, verts, faces, res, face_id, points):
    """Rasterize faces in UV space; first-come claim per texel."""
    for f in range(faces.shape[0]):
        x0 = uv[f, 0, 0] * res
        y0 = (1.0 - uv[f, 0, 1]) * res
        x1 = uv[f, 1, 0] * res
        y1 = (1.0 - uv[f, 1, 1]) * res
        x2 = uv[f, 2, 0] * res
        y2 = (1.0 - uv[f, 2, 1]) * res
        area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area2 == 0.0:
            continue
        flipped = area2 < 0.0
        if flipped:
            x1, y1, x2, y2 = x2, y2, x1, y1
            area2 = -area2

        lo_x = max(int(np.floor(min(x0, min(x1, x2)) - 0.5)), 0)
        hi_x = min(int(np.ceil(max(x0, max(x1, x2)) + 0.5)), res - 1)
        lo_y = max(int(np.floor(min(y0, min(y1, y2)) - 0.5)), 0)
        hi_y = min(int(np.ceil(max(y0, max(y1, y2)) + 0.5)), res - 1)

        e0dx, e0dy = x1 - x0, y1 - y0
        e1dx, e1dy = x2 - x1, y2 - y1
        e2dx, e2dy = x0 - x2, y0 - y2
        b0 = e0dy < 0.0 or (e0dy == 0.0 and e0dx > 0.0)
        b1 = e1dy < 0.0 or (e1dy == 0.0 and e1dx > 0.0)
        b2 = e2dy < 0.0 or (e2dy == 0.0 and e2dx > 0.0)

        av = faces[f, 0]
        bv = faces[f, 1] if not flipped else faces[f, 2]
        cv = faces[f, 2] if not flipped else faces[f, 1]

        for py in range(lo_y, hi_y + 1):
            cy = py + 0.5
            for px in range(lo_x, hi_x + 1):
                if face_id[py, px] >= 0:
                    continue
                cx = px + 0.5
                w0 = (cy - y0) * e0dx - (cx - x0) * e0dy
                w1 = (cy - y1) * e1dx - (cx - x1) * e1dy
                w2 = (cy - y2) * e2dx - (cx - x2) * e2dy
                if w0 < 0.0 or (w0 == 0.0 and not b0):
                    continue
                if w1 < 0.0 or (w1 == 0.0 and not b1):
                    continue
                if w2 < 0.0 or (w2 == 0.0 and not b2):
                    continue
                # affine barycentric from edge functions: w1 is opposite
                # vertex b... (w1: weight of vertex a, w2: b, w0: c)
                wa = w1 / area2
                wb = w2 / area2
                wc = w0 / area2
                face_id[py, px] = f
                for c in range(3):
                    points[py, px, c] = (
                        wa * verts[av, c] + wb * verts[bv, c] + wc * verts[cv, c]
                    )


@dataclass(frozen=True)
class UVGeometry:
    """Per-texel surface binding of the UV atlas at a given resolution."""

    face_id: np.ndarray  # (R, R) int32, -1 where unclaimed
    points: np.ndarray  # (R, R, 3) float64 surface points
    occupied: np.ndarray  # (R, R) bool: true chart texels (pre-dilation)

    def __post_init__(self):
        self.face_id.setflags(write=False)
        self.points.setflags(write=False)
        self.occupied.setflags(write=False)


def build_uv_geometry(mesh: Mesh, uv_res: int) -> UVGeometry:
    """Lift every claimed texel center to its face and 3D point, then dilate
    the maps into the gutter so later bilinear reads cannot hit background."""
    if mesh.uv is None:
        raise ValueError("mesh has no UV channel")
    face_id = np.full((uv_res, uv_res), -1, dtype=np.int32)
    points = np.zeros((uv_res, uv_res, 3), dtype=np.float64)
    _uv_raster_kernel(
        np.ascontiguousarray(mesh.uv),
        mesh.vertices,
        mesh.faces,
        uv_res,
        face_id,
        points,
    )
    occupied = face_id >= 0

    # fixed-neighbor-order dilation keeps results deterministic
    offsets = ((-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1))
    for _ in range(GUTTER_DILATION):
        claimed = face_id >= 0
        grown_fid = face_id.copy()
        grown_pts = points.copy()
        filled = claimed.copy()
        for dy, dx in offsets:
            src = np.roll(np.roll(face_id, dy, axis=0), dx, axis=1)
            src_pts = np.roll(np.roll(points, dy, axis=0), dx, axis=1)
            if dy > 0:
                src[:dy] = -1
            elif dy < 0:
                src[dy:] = -1
            if dx > 0:
                src[:, :dx] = -1
            elif dx < 0:
                src[:, dx:] = -1
            adopt = (~filled) & (src >= 0)
            grown_fid[adopt] = src[adopt]
            grown_pts[adopt] = src_pts[adopt]
            filled |= adopt
        face_id = grown_fid
        points = grown_pts

    return UVGeometry(face_id=face_id, points=points, occupied=occupied)


@dataclass(frozen=True)
class UVLayer:
    """One level's texture, accumulated view confidence, and validity mask."""

    level: int
    texture: np.ndarray  # (R, R, 3) float64 in [0, 1]
    weight: np.ndarray  # (R, R) float64, sum of per-view |n . d|
    mask: np.ndarray  # (R, R) bool, weight > 0

    def __post_init__(self):
        self.texture.setflags(write=False)
        self.weight.setflags(write=False)
        self.mask.setflags(write=False)


def _accumulate_views(
    mesh: Mesh,
    geometry: UVGeometry,
    residual_lookup: np.ndarray,
    rig: CameraRig,
    buffers: list[ViewBuffers],
    view_images: list[np.ndarray] | None,
):
    """Shared core of weight rasterization and unprojection.

    Returns (weight, color_sum); color_sum is None when no images were given.
    Only texels whose face is in the residual set accumulate anything.
    """
    res = geometry.face_id.shape[0]
    sel = (geometry.face_id >= 0) & residual_lookup[geometry.face_id]
    ys, xs = np.nonzero(sel)
    fids = geometry.face_id[ys, xs].astype(np.int64)
    pts = geometry.points[ys, xs]
    normals = mesh.face_normals[fids]

    weight_flat = np.zeros(len(ys), dtype=np.float64)
    color_flat = np.zeros((len(ys), 3), dtype=np.float64) if view_images is not None else None

    # probe the projection's pixel first, then its ring, in a fixed order
    probe_offsets = ((0, 0), (0, -1), (0, 1), (-1, 0), (1, 0), (-1, -1), (-1, 1), (1, -1), (1, 1))

    for vi, view in enumerate(rig):
        buf = buffers[vi]
        h, w = buf.depth.shape
        px, py, dist, in_front = view.project(pts)
        ix = np.floor(px).astype(np.int64)
        iy = np.floor(py).astype(np.int64)
        rays = view.ray_directions()
        footprint = dist * (2.0 * view.tan_half_fov / h)

        # A texel counts as seen when a probed pixel shows its own face at an
        # agreeing depth; the first matching pixel supplies the ray for |n . d|.
        w_v = np.zeros(len(ys), dtype=np.float64)
        unmatched = in_front.copy()
        for dy, dx in probe_offsets:
            if not unmatched.any():
                break
            jx = ix + dx
            jy = iy + dy
            inside = unmatched & (jx >= 0) & (jx < w) & (jy >= 0) & (jy < h)
            if not inside.any():
                continue
            jxc = np.clip(jx, 0, w - 1)
            jyc = np.clip(jy, 0, h - 1)
            cand = inside & (buf.face_id[jyc, jxc] == fids)
            if not cand.any():
                continue
            cos_nd = np.abs(np.einsum("nc,nc->n", normals, rays[jyc, jxc]))
            bias = DEPTH_AGREEMENT_EPS + footprint / np.maximum(cos_nd, _SLOPE_COS_FLOOR)
            cand &= np.abs(buf.depth[jyc, jxc] - dist) <= bias
            w_v = np.where(cand, cos_nd, w_v)
            unmatched &= ~cand

        visible = w_v > 0.0
        if not visible.any():
            continue
        weight_flat += w_v

        if color_flat is not None:
            # bilinear sample between pixel centers at the continuous projection
            img = view_images[vi]
            vis_idx = np.nonzero(visible)[0]
            fx = px[vis_idx] - 0.5
            fy = py[vis_idx] - 0.5
            x0 = np.floor(fx).astype(np.int64)
            y0 = np.floor(fy).astype(np.int64)
            tx = (fx - x0)[:, None]
            ty = (fy - y0)[:, None]
            x0c = np.clip(x0, 0, w - 1)
            x1c = np.clip(x0 + 1, 0, w - 1)
            y0c = np.clip(y0, 0, h - 1)
            y1c = np.clip(y0 + 1, 0, h - 1)
            t00 = img[y0c, x0c].astype(np.float64)
            t10 = img[y0c, x1c].astype(np.float64)
            t01 = img[y1c, x0c].astype(np.float64)
            t11 = img[y1c, x1c].astype(np.float64)
            sample = (t00 * (1 - tx) + t10 * tx) * (1 - ty) + (
                t01 * (1 - tx) + t11 * tx
            ) * ty
            color_flat[vis_idx] += w_v[vis_idx, None] * (sample / 255.0)

    weight = np.zeros((res, res), dtype=np.float64)
    weight[ys, xs] = weight_flat
    color = None
    if color_flat is not None:
        color = np.zeros((res, res, 3), dtype=np.float64)
        color[ys, xs] = color_flat
    return weight, color


def _residual_lookup(sets: LevelSets, level: int, num_faces: int) -> np.ndarray:
    lookup = np.zeros(num_faces, dtype=bool)
    lookup[sets[level].residual_faces] = True
    return lookup


def rasterize_level_weights(
    mesh: Mesh,
    sets: LevelSets,
    level: int,
    rig: CameraRig,
    buffers: list[ViewBuffers],
    geometry: UVGeometry,
) -> tuple[np.ndarray, np.ndarray]:
    """Accumulated per-texel view confidence W and validity mask M for a level."""
    lookup = _residual_lookup(sets, level, mesh.num_faces)
    weight, _ = _accumulate_views(mesh, geometry, lookup, rig, buffers, None)
    return weight, weight > 0


def unproject_views_to_uv(
    mesh: Mesh,
    sets: LevelSets,
    level: int,
    rig: CameraRig,
    buffers: list[ViewBuffers],
    view_images: list[np.ndarray],
    geometry: UVGeometry,
    background: tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> np.ndarray:
    """Confidence-weighted average of view colors per texel, (R, R, 3) in [0, 1]."""
    for vi, img in enumerate(view_images):
        h, w = buffers[vi].depth.shape
        if img.shape[:2] != (h, w):
            raise ProviderError(
                f"view {vi} image is {img.shape[1]}x{img.shape[0]}, expected {w}x{h}"
            )
    lookup = _residual_lookup(sets, level, mesh.num_faces)
    weight, color = _accumulate_views(mesh, geometry, lookup, rig, buffers, view_images)
    out = np.empty_like(color)
    out[:] = np.asarray(background, dtype=np.float64)
    covered = weight > 0
    out[covered] = color[covered] / weight[covered, None]
    return out


def build_uv_layer(
    mesh: Mesh,
    sets: LevelSets,
    level: int,
    rig: CameraRig,
    view_images: list[np.ndarray],
    geometry: UVGeometry,
    threads: int = 1,
    buffers: list[ViewBuffers] | None = None,
) -> UVLayer:
    """Render (or reuse) the level's view buffers and build its UV layer."""
    if buffers is None:
        buffers = render_level_buffers(mesh, sets, level, rig, threads=threads)
    weight, color = _accumulate_views(
        mesh,
        geometry,
        _residual_lookup(sets, level, mesh.num_faces),
        rig,
        buffers,
        view_images,
    )
    texture = np.zeros_like(color)
    covered = weight > 0
    texture[covered] = color[covered] / weight[covered, None]
    return UVLayer(level=level, texture=texture, weight=weight, mask=covered)


def render_level_buffers(
    mesh: Mesh,
    sets: LevelSets,
    level: int,
    rig: CameraRig,
    threads: int = 1,
) -> list[ViewBuffers]:
    """Rasterize every rig view of one level, optionally across threads."""
    if threads <= 1:
        return [render_level_view(mesh, sets, level, view) for view in rig]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda v: render_level_view(mesh, sets, level, v), rig))


@dataclass(frozen=True)
class BlendedTexture:
    """Softmax-merged final texture with its normalized per-level weights."""

    image: np.ndarray  # (R, R, 3) float64 in [0, 1]
    normalized_weights: np.ndarray  # (L, R, R) float64
    covered: np.ndarray  # (R, R) bool: any level mask set
    coverage: float  # fraction of occupied chart texels covered

    def __post_init__(self):
        self.image.setflags(write=False)
        self.normalized_weights.setflags(write=False)
        self.covered.setflags(write=False)

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.round(self.image * 255.0), 0, 255).astype(np.uint8)


def blend_levels(
    layers: list[UVLayer],
    temperature: float = 1.0,
    background: tuple[float, float, float] = (0.0, 0.0, 0.0),
    occupied: np.ndarray | None = None,
) -> BlendedTexture:
    """Merge per-level textures with a masked softmax over accumulated weights.

    Computed with max-subtraction, which leaves the result identical to the
    plain exponential form. A texel covered by a single level copies that
    layer's texel exactly. Raises BlendError when nothing is covered at all.
    """
    if not layers:
        raise BlendError("no layers to blend")
    if temperature <= 0:
        raise BlendError("temperature must be positive")
    res = layers[0].texture.shape[0]
    for layer in layers:
        if layer.texture.shape[0] != res:
            raise BlendError("layers disagree on texture resolution")

    masks = np.stack([layer.mask for layer in layers])  # (L, R, R)
    weights = np.stack([layer.weight for layer in layers]) / temperature
    covered = masks.any(axis=0)
    if not covered.any():
        raise BlendError(
            "zero coverage: no texel is visible in any view at any level "
            f"(layer mask counts: {[int(m.sum()) for m in masks]})"
        )

    shifted = np.where(masks, weights, -np.inf)
    peak = shifted.max(axis=0)
    peak = np.where(covered, peak, 0.0)
    expw = np.where(masks, np.exp(shifted - peak[None]), 0.0)
    denom = expw.sum(axis=0)
    safe_denom = np.where(denom > 0, denom, 1.0)
    norm = expw / safe_denom[None]

    textures = np.stack([layer.texture for layer in layers])
    image = np.einsum("lij,lijc->ijc", norm, textures)
    image[~covered] = np.asarray(background, dtype=np.float64)

    if occupied is None:
        coverage = float(covered.mean())
    else:
        total = int(occupied.sum())
        coverage = float((covered & occupied).sum() / total) if total else 0.0
    return BlendedTexture(
        image=image, normalized_weights=norm, covered=covered, coverage=coverage
    )
