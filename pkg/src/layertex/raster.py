"""Deterministic software rasterizer producing depth / face-id / cosine buffers.

Coverage uses screen-space edge functions with an antisymmetric fill rule, so
triangles sharing an edge never double-claim or orphan a pixel center. Depth
and cosine are evaluated per pixel from the actual pixel ray (ray-plane
intersection), which makes them perspective-correct by construction and
consistent with the ray caster's distances.

Backface culling is per pixel: a fragment survives only when its effective
normal (negated for flipped faces) points against that pixel's ray.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from PIL import Image

from .cameras import ViewCamera
from .geometry import Mesh
from .levelsets import LevelSets

# Fragments within this camera-space distance are considered a depth tie,
# resolved in favor of the unflipped (texture-target) face.
DEPTH_TIE_EPS = 1e-5

# Camera-space forward clip plane for projective safety; not a visibility near plane.
_Z_CLIP = 1e-4

# 16-bit depth PNG: [near, far] maps to [0, 65534]; 65535 marks a miss.
DEPTH_MISS = 65535


@dataclass(frozen=True)
class ViewBuffers:
    """Per-pixel rasterization output for one (level, view) pair."""

    depth: np.ndarray  # (H, W) float64 camera-space distance, +inf for miss
    face_id: np.ndarray  # (H, W) int32, -1 for miss
    cosine: np.ndarray  # (H, W) float64 |n(f) . d| of the visible fragment

    def __post_init__(self):
        self.depth.setflags(write=False)
        self.face_id.setflags(write=False)
        self.cosine.setflags(write=False)

    def coverage_mask(self) -> np.ndarray:
        return self.face_id >= 0


@njit(cache=True, nogil=True)
def _raster_kernel(
    verts,
    faces,
    normals,
    flip,
    active,
    cam_pos,
    cam_right,
    cam_up,
    cam_forward,
    tan_x,
    tan_y,
    depth,
    face_id,
    cosine,
):
    height, width = depth.shape
    poly_x = np.empty(4, dtype=np.float64)
    poly_y = np.empty(4, dtype=np.float64)
    poly_z = np.empty(4, dtype=np.float64)
    clip_x = np.empty(4, dtype=np.float64)
    clip_y = np.empty(4, dtype=np.float64)
    clip_z = np.empty(4, dtype=np.float64)
    sx = np.empty(4, dtype=np.float64)
    sy = np.empty(4, dtype=np.float64)

    for f in range(faces.shape[0]):
        if not active[f]:
            continue
        nx, ny, nz = normals[f, 0], normals[f, 1], normals[f, 2]
        if flip[f]:
            ex, ey, ez = -nx, -ny, -nz
        else:
            ex, ey, ez = nx, ny, nz

        # camera-space corners
        for c in range(3):
            v = verts[faces[f, c]]
            qx = v[0] - cam_pos[0]
            qy = v[1] - cam_pos[1]
            qz = v[2] - cam_pos[2]
            poly_x[c] = qx * cam_right[0] + qy * cam_right[1] + qz * cam_right[2]
            poly_y[c] = qx * cam_up[0] + qy * cam_up[1] + qz * cam_up[2]
            poly_z[c] = qx * cam_forward[0] + qy * cam_forward[1] + qz * cam_forward[2]

        # clip against the forward plane z = _Z_CLIP (Sutherland-Hodgman)
        n_out = 0
        for c in range(3):
            c2 = (c + 1) % 3
            z1 = poly_z[c]
            z2 = poly_z[c2]
            if z1 >= _Z_CLIP:
                clip_x[n_out] = poly_x[c]
                clip_y[n_out] = poly_y[c]
                clip_z[n_out] = z1
                n_out += 1
            if (z1 >= _Z_CLIP) != (z2 >= _Z_CLIP):
                s = (_Z_CLIP - z1) / (z2 - z1)
                clip_x[n_out] = poly_x[c] + s * (poly_x[c2] - poly_x[c])
                clip_y[n_out] = poly_y[c] + s * (poly_y[c2] - poly_y[c])
                clip_z[n_out] = _Z_CLIP
                n_out += 1
        if n_out < 3:
            continue

        for c in range(n_out):
            sx[c] = (clip_x[c] / (clip_z[c] * tan_x) + 1.0) * 0.5 * width
            sy[c] = (1.0 - clip_y[c] / (clip_z[c] * tan_y)) * 0.5 * height

        # plane for per-pixel depth: original face plane
        v0 = verts[faces[f, 0]]

        for tri in range(n_out - 2):
            i0, i1, i2 = 0, tri + 1, tri + 2
            x0, y0 = sx[i0], sy[i0]
            x1, y1 = sx[i1], sy[i1]
            x2, y2 = sx[i2], sy[i2]
            area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
            if area2 == 0.0:
                continue
            if area2 < 0.0:
                x1, y1, x2, y2 = x2, y2, x1, y1

            lo_x = int(np.floor(min(x0, min(x1, x2)) - 0.5))
            hi_x = int(np.ceil(max(x0, max(x1, x2)) + 0.5))
            lo_y = int(np.floor(min(y0, min(y1, y2)) - 0.5))
            hi_y = int(np.ceil(max(y0, max(y1, y2)) + 0.5))
            lo_x = max(lo_x, 0)
            lo_y = max(lo_y, 0)
            hi_x = min(hi_x, width - 1)
            hi_y = min(hi_y, height - 1)
            if lo_x > hi_x or lo_y > hi_y:
                continue

            # edge deltas (winding normalized to positive area)
            e0dx, e0dy = x1 - x0, y1 - y0
            e1dx, e1dy = x2 - x1, y2 - y1
            e2dx, e2dy = x0 - x2, y0 - y2
            # antisymmetric zero-edge ownership: accept w == 0 only when the
            # edge points "down", or horizontally to the right
            b0 = e0dy < 0.0 or (e0dy == 0.0 and e0dx > 0.0)
            b1 = e1dy < 0.0 or (e1dy == 0.0 and e1dx > 0.0)
            b2 = e2dy < 0.0 or (e2dy == 0.0 and e2dx > 0.0)

            for py in range(lo_y, hi_y + 1):
                cy = py + 0.5
                for px in range(lo_x, hi_x + 1):
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

                    # pixel ray in world space
                    ndc_x = (cx / width * 2.0 - 1.0) * tan_x
                    ndc_y = (1.0 - cy / height * 2.0) * tan_y
                    dx = cam_forward[0] + ndc_x * cam_right[0] + ndc_y * cam_up[0]
                    dy = cam_forward[1] + ndc_x * cam_right[1] + ndc_y * cam_up[1]
                    dz = cam_forward[2] + ndc_x * cam_right[2] + ndc_y * cam_up[2]
                    inv_len = 1.0 / np.sqrt(dx * dx + dy * dy + dz * dz)
                    dx *= inv_len
                    dy *= inv_len
                    dz *= inv_len

                    # per-pixel backface cull against the effective normal
                    if ex * dx + ey * dy + ez * dz >= 0.0:
                        continue

                    den = nx * dx + ny * dy + nz * dz
                    if abs(den) < 1e-12:
                        continue
                    t = (
                        (v0[0] - cam_pos[0]) * nx
                        + (v0[1] - cam_pos[1]) * ny
                        + (v0[2] - cam_pos[2]) * nz
                    ) / den
                    if t <= 0.0:
                        continue

                    old = depth[py, px]
                    if t < old - DEPTH_TIE_EPS:
                        take = True
                    elif t <= old + DEPTH_TIE_EPS:
                        # depth tie: prefer the unflipped (texture target) face;
                        # equal flip state keeps the earlier (lower id) face
                        old_f = face_id[py, px]
                        take = old_f >= 0 and flip[old_f] and not flip[f]
                    else:
                        take = False
                    if take:
                        depth[py, px] = t
                        face_id[py, px] = f
                        cosine[py, px] = abs(nx * dx + ny * dy + nz * dz)


def render_view(
    mesh: Mesh,
    view: ViewCamera,
    flip: np.ndarray | None = None,
    active: np.ndarray | None = None,
) -> ViewBuffers:
    """Rasterize faces with per-pixel backface culling.

    flip marks faces rendered with negated normals; active restricts the face
    set (inactive faces are skipped entirely).
    """
    w, h = view.resolution
    depth = np.full((h, w), np.inf, dtype=np.float64)
    face_id = np.full((h, w), -1, dtype=np.int32)
    cosine = np.zeros((h, w), dtype=np.float64)

    if flip is None:
        flip = np.zeros(mesh.num_faces, dtype=bool)
    if active is None:
        active = np.ones(mesh.num_faces, dtype=bool)
    right, up, forward = view.basis()

    _raster_kernel(
        mesh.vertices,
        mesh.faces,
        mesh.face_normals,
        np.ascontiguousarray(flip, dtype=np.bool_),
        np.ascontiguousarray(active, dtype=np.bool_),
        np.ascontiguousarray(view.position),
        np.ascontiguousarray(right),
        np.ascontiguousarray(up),
        np.ascontiguousarray(forward),
        view.tan_half_fov * view.aspect,
        view.tan_half_fov,
        depth,
        face_id,
        cosine,
    )
    return ViewBuffers(depth=depth, face_id=face_id, cosine=cosine)


def render_level_view(mesh: Mesh, sets: LevelSets, level: int, view: ViewCamera) -> ViewBuffers:
    """Render one visibility level: all faces, already-textured ones flipped."""
    return render_view(mesh, view, flip=sets[level].flip)


def barycentric_3d(points: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of points w.r.t. triangles (a, b, c), all (N, 3)."""
    v0 = b - a
    v1 = c - a
    v2 = points - a
    d00 = np.einsum("ij,ij->i", v0, v0)
    d01 = np.einsum("ij,ij->i", v0, v1)
    d11 = np.einsum("ij,ij->i", v1, v1)
    d20 = np.einsum("ij,ij->i", v2, v0)
    d21 = np.einsum("ij,ij->i", v2, v1)
    denom = d00 * d11 - d01 * d01
    denom = np.where(np.abs(denom) < 1e-30, 1.0, denom)
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    u = 1.0 - v - w
    return np.stack([u, v, w], axis=-1)


def sample_texture(texture: np.ndarray, u: np.ndarray, v: np.ndarray, bilinear: bool = True) -> np.ndarray:
    """Sample an (R, R, C) texture at UV coordinates (v up, origin bottom-left)."""
    res_y, res_x = texture.shape[:2]
    fx = u * res_x - 0.5
    fy = (1.0 - v) * res_y - 0.5
    if not bilinear:
        ix = np.clip(np.round(fx).astype(np.int64), 0, res_x - 1)
        iy = np.clip(np.round(fy).astype(np.int64), 0, res_y - 1)
        return texture[iy, ix].astype(np.float64)
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    tx = (fx - x0)[..., None]
    ty = (fy - y0)[..., None]
    x0c = np.clip(x0, 0, res_x - 1)
    x1c = np.clip(x0 + 1, 0, res_x - 1)
    y0c = np.clip(y0, 0, res_y - 1)
    y1c = np.clip(y0 + 1, 0, res_y - 1)
    t00 = texture[y0c, x0c].astype(np.float64)
    t10 = texture[y0c, x1c].astype(np.float64)
    t01 = texture[y1c, x0c].astype(np.float64)
    t11 = texture[y1c, x1c].astype(np.float64)
    top = t00 * (1 - tx) + t10 * tx
    bot = t01 * (1 - tx) + t11 * tx
    return top * (1 - ty) + bot * ty


def shade_view(
    mesh: Mesh,
    view: ViewCamera,
    buffers: ViewBuffers,
    texture: np.ndarray,
    bilinear: bool = True,
    background: tuple[int, int, int] = (0, 0, 0),
) -> np.ndarray:
    """Texture-map a rendered view from the mesh's UV channel, (H, W, 3) uint8."""
    if mesh.uv is None:
        raise ValueError("mesh has no UV channel")
    h, w = buffers.depth.shape
    out = np.empty((h, w, 3), dtype=np.uint8)
    out[:] = np.asarray(background, dtype=np.uint8)

    mask = buffers.coverage_mask()
    if not mask.any():
        return out
    ys, xs = np.nonzero(mask)
    fids = buffers.face_id[ys, xs].astype(np.int64)
    dirs = view.ray_directions()[ys, xs]
    pts = view.position[None, :] + dirs * buffers.depth[ys, xs][:, None]

    tri = mesh.vertices[mesh.faces[fids]]
    bary = barycentric_3d(pts, tri[:, 0], tri[:, 1], tri[:, 2])
    uv = np.einsum("nc,ncd->nd", bary, mesh.uv[fids])
    colors = sample_texture(texture, uv[:, 0], uv[:, 1], bilinear=bilinear)
    out[ys, xs] = np.clip(np.round(colors), 0, 255).astype(np.uint8)
    return out


def encode_depth_png(depth: np.ndarray, near: float, far: float) -> np.ndarray:
    """Quantize camera-space distance to the 16-bit PNG payload."""
    finite = np.isfinite(depth)
    scaled = np.zeros_like(depth)
    scaled[finite] = (depth[finite] - near) / (far - near)
    vals = np.clip(np.round(scaled * 65534.0), 0, 65534).astype(np.uint16)
    vals[~finite] = DEPTH_MISS
    return vals


def decode_depth_png(vals: np.ndarray, near: float, far: float) -> np.ndarray:
    depth = near + vals.astype(np.float64) / 65534.0 * (far - near)
    depth[vals == DEPTH_MISS] = np.inf
    return depth


def write_depth_png(path, depth: np.ndarray, near: float, far: float) -> None:
    vals = encode_depth_png(depth, near, far)
    Image.fromarray(vals).save(path)  # uint16 -> 16-bit grayscale


def read_depth_png(path) -> np.ndarray:
    """Raw 16-bit payload; use decode_depth_png with the manifest near/far."""
    with Image.open(path) as img:
        return np.asarray(img, dtype=np.uint16)
