"""Multi-view ray casting: per-face directional weights by intersection order.

One primary ray is cast through every pixel of every rig view. A ray's
intersections with the mesh are sorted by distance; the k-th surface crossing
on face f adds max(-n(f) . d, 0) to the weight entry (f, k). Back-facing
crossings contribute zero weight but still occupy their order slot, which is
what lets interior faces with inward normals receive higher orders from rays
arriving on their far side. Each superface's level is the order with the
largest aggregated weight.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .cameras import CameraRig
from .errors import ConfigError
from .geometry import Mesh
from .superfaces import SuperfaceSet

log = logging.getLogger(__name__)

# Maximum surface crossings tracked per ray and maximum stored order.
MAX_HITS_PER_RAY = 64
ORDER_CAP = 32

# Crossings closer than this along the ray form one coincidence group:
# front-facing members are ordered first, and same-oriented duplicates
# (shared-edge double hits) collapse to a single crossing.
COINCIDENT_EPS = 1e-6

_LEAF_SIZE = 4


@dataclass(frozen=True)
class TriangleBVH:
    """Flat median-split BVH over mesh triangles; internal only, never serialized."""

    node_min: np.ndarray
    node_max: np.ndarray
    node_left: np.ndarray  # internal: left child index; leaf: -1
    node_right: np.ndarray
    node_start: np.ndarray  # leaf: first triangle slot
    node_count: np.ndarray  # leaf: triangle count, 0 for internal
    tri_v0: np.ndarray
    tri_e1: np.ndarray
    tri_e2: np.ndarray
    tri_face: np.ndarray  # slot -> original face id


def build_bvh(mesh: Mesh) -> TriangleBVH:
    verts = mesh.vertices
    faces = mesh.faces
    tri = verts[faces]  # (F, 3, 3)
    lo = tri.min(axis=1)
    hi = tri.max(axis=1)
    centroids = tri.mean(axis=1)

    order = np.arange(len(faces))
    node_min, node_max = [], []
    node_left, node_right = [], []
    node_start, node_count = [], []

    # Iterative top-down build; stack holds (node index, slot range).
    def new_node() -> int:
        node_min.append(np.zeros(3))
        node_max.append(np.zeros(3))
        node_left.append(-1)
        node_right.append(-1)
        node_start.append(0)
        node_count.append(0)
        return len(node_min) - 1

    root = new_node()
    stack = [(root, 0, len(faces))]
    while stack:
        node, start, end = stack.pop()
        idx = order[start:end]
        node_min[node] = lo[idx].min(axis=0)
        node_max[node] = hi[idx].max(axis=0)
        if end - start <= _LEAF_SIZE:
            node_start[node] = start
            node_count[node] = end - start
            continue
        cent = centroids[idx]
        spread = cent.max(axis=0) - cent.min(axis=0)
        axis = int(np.argmax(spread))
        if spread[axis] <= 0.0:
            node_start[node] = start
            node_count[node] = end - start
            continue
        mid = (end - start) // 2
        local = np.argpartition(cent[:, axis], mid, kind="introselect")
        order[start:end] = idx[local]
        left = new_node()
        right = new_node()
        node_left[node] = left
        node_right[node] = right
        stack.append((left, start, start + mid))
        stack.append((right, start + mid, end))

    v0 = np.ascontiguousarray(tri[order, 0])
    e1 = np.ascontiguousarray(tri[order, 1] - tri[order, 0])
    e2 = np.ascontiguousarray(tri[order, 2] - tri[order, 0])
    return TriangleBVH(
        node_min=np.ascontiguousarray(node_min, dtype=np.float64),
        node_max=np.ascontiguousarray(node_max, dtype=np.float64),
        node_left=np.asarray(node_left, dtype=np.int32),
        node_right=np.asarray(node_right, dtype=np.int32),
        node_start=np.asarray(node_start, dtype=np.int32),
        node_count=np.asarray(node_count, dtype=np.int32),
        tri_v0=v0,
        tri_e1=e1,
        tri_e2=e2,
        tri_face=np.ascontiguousarray(order, dtype=np.int32),
    )


@njit(cache=True, nogil=True)
def _collect_and_accumulate(
    origin,
    dirs,
    node_min,
    node_max,
    node_left,
    node_right,
    node_start,
    node_count,
    tri_v0,
    tri_e1,
    tri_e2,
    tri_face,
    normals,
    weights,
):
    """Cast all rays of one view and accumulate (face, order) weights."""
    n_rays = dirs.shape[0]
    order_cap = weights.shape[1]
    stack = np.empty(64, dtype=np.int32)
    hit_t = np.empty(MAX_HITS_PER_RAY, dtype=np.float64)
    hit_f = np.empty(MAX_HITS_PER_RAY, dtype=np.int32)

    for r in range(n_rays):
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        inv_x = 1.0 / dx if dx != 0.0 else np.inf
        inv_y = 1.0 / dy if dy != 0.0 else np.inf
        inv_z = 1.0 / dz if dz != 0.0 else np.inf

        n_hits = 0
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            node = stack[top]
            # slab test
            t1 = (node_min[node, 0] - origin[0]) * inv_x
            t2 = (node_max[node, 0] - origin[0]) * inv_x
            tmin = min(t1, t2)
            tmax = max(t1, t2)
            t1 = (node_min[node, 1] - origin[1]) * inv_y
            t2 = (node_max[node, 1] - origin[1]) * inv_y
            tmin = max(tmin, min(t1, t2))
            tmax = min(tmax, max(t1, t2))
            t1 = (node_min[node, 2] - origin[2]) * inv_z
            t2 = (node_max[node, 2] - origin[2]) * inv_z
            tmin = max(tmin, min(t1, t2))
            tmax = min(tmax, max(t1, t2))
            if tmax < max(tmin, 0.0):
                continue
            if node_left[node] < 0:
                start = node_start[node]
                for s in range(start, start + node_count[node]):
                    # Moller-Trumbore with slightly inclusive edges; duplicate
                    # crossings on shared edges collapse in the coincidence pass.
                    px = dy * tri_e2[s, 2] - dz * tri_e2[s, 1]
                    py = dz * tri_e2[s, 0] - dx * tri_e2[s, 2]
                    pz = dx * tri_e2[s, 1] - dy * tri_e2[s, 0]
                    det = tri_e1[s, 0] * px + tri_e1[s, 1] * py + tri_e1[s, 2] * pz
                    if abs(det) < 1e-12:
                        continue
                    inv_det = 1.0 / det
                    sx = origin[0] - tri_v0[s, 0]
                    sy = origin[1] - tri_v0[s, 1]
                    sz = origin[2] - tri_v0[s, 2]
                    u = (sx * px + sy * py + sz * pz) * inv_det
                    if u < -1e-12 or u > 1.0 + 1e-12:
                        continue
                    qx = sy * tri_e1[s, 2] - sz * tri_e1[s, 1]
                    qy = sz * tri_e1[s, 0] - sx * tri_e1[s, 2]
                    qz = sx * tri_e1[s, 1] - sy * tri_e1[s, 0]
                    v = (dx * qx + dy * qy + dz * qz) * inv_det
                    if v < -1e-12 or u + v > 1.0 + 1e-12:
                        continue
                    t = (tri_e2[s, 0] * qx + tri_e2[s, 1] * qy + tri_e2[s, 2] * qz) * inv_det
                    if t <= 1e-9:
                        continue
                    if n_hits < MAX_HITS_PER_RAY:
                        hit_t[n_hits] = t
                        hit_f[n_hits] = tri_face[s]
                        n_hits += 1
            else:
                stack[top] = node_left[node]
                top += 1
                stack[top] = node_right[node]
                top += 1

        if n_hits == 0:
            continue

        # sort by (t, face id) for a deterministic base order
        for i in range(1, n_hits):
            tt = hit_t[i]
            ff = hit_f[i]
            j = i - 1
            while j >= 0 and (hit_t[j] > tt or (hit_t[j] == tt and hit_f[j] > ff)):
                hit_t[j + 1] = hit_t[j]
                hit_f[j + 1] = hit_f[j]
                j -= 1
            hit_t[j + 1] = tt
            hit_f[j + 1] = ff

        # front-facing crossings first within each coincidence group
        for i in range(1, n_hits):
            j = i
            while j > 0 and hit_t[j] - hit_t[j - 1] < COINCIDENT_EPS:
                w_prev = -(
                    normals[hit_f[j - 1], 0] * dx
                    + normals[hit_f[j - 1], 1] * dy
                    + normals[hit_f[j - 1], 2] * dz
                )
                w_cur = -(
                    normals[hit_f[j], 0] * dx
                    + normals[hit_f[j], 1] * dy
                    + normals[hit_f[j], 2] * dz
                )
                if w_cur > 0.0 and w_prev <= 0.0:
                    hit_t[j], hit_t[j - 1] = hit_t[j - 1], hit_t[j]
                    hit_f[j], hit_f[j - 1] = hit_f[j - 1], hit_f[j]
                    j -= 1
                else:
                    break

        # accumulate orders, skipping repeat faces and same-oriented coincident
        # duplicates (one geometric crossing shared by two triangles)
        k = 0
        prev_face = -1
        prev_t = -1.0
        for i in range(n_hits):
            f = hit_f[i]
            seen = False
            for j in range(i):
                if hit_f[j] == f:
                    seen = True
                    break
            if seen:
                continue
            duplicate = False
            if prev_face >= 0 and hit_t[i] - prev_t < COINCIDENT_EPS:
                dot = (
                    normals[f, 0] * normals[prev_face, 0]
                    + normals[f, 1] * normals[prev_face, 1]
                    + normals[f, 2] * normals[prev_face, 2]
                )
                if dot > 1.0 - 1e-6:
                    duplicate = True
            if duplicate:
                continue
            k += 1
            prev_face = f
            prev_t = hit_t[i]
            if k > order_cap:
                break
            w = -(normals[f, 0] * dx + normals[f, 1] * dy + normals[f, 2] * dz)
            if w > 0.0:
                weights[f, k - 1] += w


@dataclass(frozen=True)
class WeightTable:
    """Accumulated directional weight per (face, intersection order).

    Dense storage (F, ORDER_CAP); zero entries are implicit. Orders are
    1-based in the public accessors.
    """

    weights: np.ndarray

    def __post_init__(self):
        self.weights.setflags(write=False)

    @property
    def num_faces(self) -> int:
        return self.weights.shape[0]

    @property
    def max_order(self) -> int:
        nonzero = np.nonzero(self.weights.any(axis=0))[0]
        return int(nonzero[-1]) + 1 if len(nonzero) else 0

    def entry(self, face: int, order: int) -> float:
        return float(self.weights[face, order - 1])

    def entries(self):
        """Yield ((face, order), weight) for every stored (nonzero) entry."""
        rows, cols = np.nonzero(self.weights)
        for f, c in zip(rows, cols):
            yield (int(f), int(c) + 1), float(self.weights[f, c])

    def order_sums(self, face_ids: np.ndarray) -> np.ndarray:
        return self.weights[face_ids].sum(axis=0)


def compute_weight_table(
    mesh: Mesh,
    rig: CameraRig,
    ray_resolution: int | tuple[int, int] | None = None,
    threads: int = 1,
    bvh: TriangleBVH | None = None,
) -> WeightTable:
    """Cast one ray per pixel per view and accumulate the weight table.

    Views may be traced concurrently; per-view tables are reduced in rig
    order, so the result is independent of the thread count.
    """
    if bvh is None:
        bvh = build_bvh(mesh)
    normals = np.ascontiguousarray(mesh.face_normals)
    n_faces = mesh.num_faces

    if ray_resolution is None:
        resolutions = [v.resolution for v in rig]
    elif isinstance(ray_resolution, int):
        resolutions = [(ray_resolution, ray_resolution)] * len(rig)
    else:
        resolutions = [tuple(ray_resolution)] * len(rig)

    def cast_one(view_idx: int) -> np.ndarray:
        view = rig[view_idx]
        w, h = resolutions[view_idx]
        cam = view if view.resolution == (w, h) else _with_resolution(view, (w, h))
        dirs = np.ascontiguousarray(cam.ray_directions().reshape(-1, 3))
        weights = np.zeros((n_faces, ORDER_CAP), dtype=np.float64)
        _collect_and_accumulate(
            np.ascontiguousarray(cam.position),
            dirs,
            bvh.node_min,
            bvh.node_max,
            bvh.node_left,
            bvh.node_right,
            bvh.node_start,
            bvh.node_count,
            bvh.tri_v0,
            bvh.tri_e1,
            bvh.tri_e2,
            bvh.tri_face,
            normals,
            weights,
        )
        return weights

    if threads <= 1:
        partials = [cast_one(i) for i in range(len(rig))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(cast_one, range(len(rig))))

    total = np.zeros((n_faces, ORDER_CAP), dtype=np.float64)
    for part in partials:  # canonical rig order
        total += part
    return WeightTable(weights=total)


def _with_resolution(view, resolution):
    from dataclasses import replace

    return replace(view, resolution=resolution)


@dataclass(frozen=True)
class HitLevelAssignment:
    """Visibility layer per superface (and derived per-face levels)."""

    superface_level: np.ndarray  # (S,) int32 in [1, h_max]
    face_level: np.ndarray  # (F,) int32
    h_max: int
    disagreement_count: int  # faces whose individual argmax differs from their superface's
    superface_order_sums: np.ndarray  # (S, ORDER_CAP) raw aggregated weights

    def __post_init__(self):
        self.superface_level.setflags(write=False)
        self.face_level.setflags(write=False)
        self.superface_order_sums.setflags(write=False)

    @property
    def max_level(self) -> int:
        return int(self.superface_level.max())

    def payload(self) -> dict:
        hist_orders = max(int(self.superface_order_sums.any(axis=0).sum()), 1)
        return {
            "h_max": self.h_max,
            "max_level": self.max_level,
            "face_level_disagreements": self.disagreement_count,
            "superfaces": [
                {
                    "id": i,
                    "level": int(self.superface_level[i]),
                    "weight_histogram": [
                        round(float(w), 6) for w in self.superface_order_sums[i, :hist_orders]
                    ],
                }
                for i in range(len(self.superface_level))
            ],
        }


def _fold_and_argmax(rows: np.ndarray, h_max: int) -> np.ndarray:
    """Fold orders above h_max into h_max, then take the dominant order.

    Ties break toward the smaller order; all-zero rows fall back to h_max.
    """
    cap = min(h_max, rows.shape[1])
    folded = rows[:, :cap].copy()
    if rows.shape[1] > cap:
        folded[:, cap - 1] += rows[:, cap:].sum(axis=1)
    levels = np.argmax(folded, axis=1).astype(np.int32) + 1
    empty = ~(folded > 0).any(axis=1)
    levels[empty] = h_max
    return levels


def assign_superface_levels(
    superfaces: SuperfaceSet,
    table: WeightTable,
    h_max: int = 4,
) -> HitLevelAssignment:
    """Aggregate weights per superface and pick each one's dominant order."""
    if h_max < 1:
        raise ConfigError("h_max must be >= 1")

    sums = np.zeros((superfaces.count, table.weights.shape[1]))
    np.add.at(sums, superfaces.assignment, table.weights)
    sf_levels = _fold_and_argmax(sums, h_max)

    face_levels = sf_levels[superfaces.assignment]
    individual = _fold_and_argmax(table.weights, h_max)
    disagreements = int((individual != face_levels).sum())
    if disagreements:
        log.debug("%d faces argmax to a different order than their superface", disagreements)

    return HitLevelAssignment(
        superface_level=sf_levels,
        face_level=np.ascontiguousarray(face_levels, dtype=np.int32),
        h_max=h_max,
        disagreement_count=disagreements,
        superface_order_sums=sums,
    )
