"""Pinhole view cameras and the multi-view capture rig.

The default rig observes the normalized unit-box mesh from 17 directions:
8 around the equator at 45 degree azimuth spacing, 8 at 45 degrees elevation,
and one top-down view. View index order is the canonical reduction order for
every accumulation in the pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

# Circumsphere radius of the normalized unit box.
UNIT_BOX_CIRCUMRADIUS = math.sqrt(3.0) / 2.0


@dataclass(frozen=True)
class ViewCamera:
    """Pinhole camera looking at the mesh center."""

    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray
    fov_deg: float
    resolution: tuple[int, int]  # (width, height)
    near: float
    far: float

    def __post_init__(self):
        if self.near >= self.far:
            raise ConfigError(f"near ({self.near}) must be < far ({self.far})")
        if self.resolution[0] <= 0 or self.resolution[1] <= 0:
            raise ConfigError("camera resolution must be positive")
        for arr in (self.position, self.look_at, self.up):
            arr.setflags(write=False)

    @property
    def width(self) -> int:
        return self.resolution[0]

    @property
    def height(self) -> int:
        return self.resolution[1]

    @property
    def tan_half_fov(self) -> float:
        return math.tan(math.radians(self.fov_deg) / 2.0)

    @property
    def aspect(self) -> float:
        return self.resolution[0] / self.resolution[1]

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal (right, up, forward) frame."""
        forward = self.look_at - self.position
        forward = forward / np.linalg.norm(forward)
        right = np.cross(forward, self.up)
        nr = np.linalg.norm(right)
        if nr < 1e-12:
            raise ConfigError("camera up vector is parallel to the view direction")
        right = right / nr
        up = np.cross(right, forward)
        return right, up, forward

    def ray_directions(self) -> np.ndarray:
        """Normalized primary-ray directions through all pixel centers, (H, W, 3)."""
        right, up, forward = self.basis()
        w, h = self.resolution
        ndc_x = (np.arange(w, dtype=np.float64) + 0.5) / w * 2.0 - 1.0
        ndc_y = 1.0 - (np.arange(h, dtype=np.float64) + 0.5) / h * 2.0
        sx = ndc_x * self.tan_half_fov * self.aspect
        sy = ndc_y * self.tan_half_fov
        d = (
            forward[None, None, :]
            + sx[None, :, None] * right[None, None, :]
            + sy[:, None, None] * up[None, None, :]
        )
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def pixel_ray(self, ix: int, iy: int) -> np.ndarray:
        """Normalized ray direction through the center of pixel (column ix, row iy)."""
        right, up, forward = self.basis()
        w, h = self.resolution
        sx = ((ix + 0.5) / w * 2.0 - 1.0) * self.tan_half_fov * self.aspect
        sy = (1.0 - (iy + 0.5) / h * 2.0) * self.tan_half_fov
        d = forward + sx * right + sy * up
        return d / np.linalg.norm(d)

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Project world points to continuous pixel coordinates.

        Returns (px, py, dist, in_front): pixel x/y such that a point on the
        pixel (i, j) center ray projects to (i + 0.5, j + 0.5); dist is the
        Euclidean camera-to-point distance used for depth comparison.
        """
        right, up, forward = self.basis()
        q = points - self.position
        zf = q @ forward
        xr = q @ right
        yu = q @ up
        in_front = zf > 1e-9
        safe_z = np.where(in_front, zf, 1.0)
        w, h = self.resolution
        ndc_x = xr / (safe_z * self.tan_half_fov * self.aspect)
        ndc_y = yu / (safe_z * self.tan_half_fov)
        px = (ndc_x + 1.0) * 0.5 * w
        py = (1.0 - ndc_y) * 0.5 * h
        dist = np.linalg.norm(q, axis=-1)
        return px, py, dist, in_front

    def to_dict(self) -> dict:
        return {
            "position": [float(x) for x in self.position],
            "look_at": [float(x) for x in self.look_at],
            "up": [float(x) for x in self.up],
            "fov_deg": float(self.fov_deg),
            "resolution": [int(self.resolution[0]), int(self.resolution[1])],
            "near": float(self.near),
            "far": float(self.far),
        }

    @staticmethod
    def from_dict(d: dict) -> "ViewCamera":
        return ViewCamera(
            position=np.asarray(d["position"], dtype=np.float64),
            look_at=np.asarray(d["look_at"], dtype=np.float64),
            up=np.asarray(d["up"], dtype=np.float64),
            fov_deg=float(d["fov_deg"]),
            resolution=(int(d["resolution"][0]), int(d["resolution"][1])),
            near=float(d["near"]),
            far=float(d["far"]),
        )


@dataclass(frozen=True)
class CameraRig:
    """Ordered list of views; index order is the canonical reduction order."""

    views: tuple[ViewCamera, ...]

    def __len__(self) -> int:
        return len(self.views)

    def __iter__(self):
        return iter(self.views)

    def __getitem__(self, i: int) -> ViewCamera:
        return self.views[i]

    def to_list(self) -> list[dict]:
        return [v.to_dict() for v in self.views]

    @staticmethod
    def from_list(items: list[dict]) -> "CameraRig":
        return CameraRig(tuple(ViewCamera.from_dict(d) for d in items))


def build_camera_rig(
    distance: float = 1.8,
    fov_deg: float = 45.0,
    resolution: int | tuple[int, int] = 1536,
    near: float | None = None,
    far: float | None = None,
) -> CameraRig:
    """Build the canonical 17-view rig around the origin.

    Ordering: equatorial azimuths 0..315 in 45 degree steps, the same azimuths
    at 45 degrees elevation, then the top view. All positions are at the same
    distance; the camera must sit outside the unit-box circumsphere.
    """
    if distance <= 0.87:
        raise ConfigError(
            f"camera distance {distance} places the camera inside the unit-box "
            f"circumsphere (radius {UNIT_BOX_CIRCUMRADIUS:.4f})"
        )
    if isinstance(resolution, int):
        resolution = (resolution, resolution)
    if near is None:
        near = max(distance - 0.9, 0.05 * distance)
    if far is None:
        far = distance + 0.9

    origin = np.zeros(3)
    views: list[ViewCamera] = []

    def add(azimuth_deg: float, elevation_deg: float, up: tuple[float, float, float]):
        az = math.radians(azimuth_deg)
        el = math.radians(elevation_deg)
        pos = distance * np.array(
            [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
        )
        views.append(
            ViewCamera(
                position=pos,
                look_at=origin.copy(),
                up=np.array(up, dtype=np.float64),
                fov_deg=fov_deg,
                resolution=resolution,
                near=near,
                far=far,
            )
        )

    for az in range(0, 360, 45):
        add(az, 0.0, (0.0, 0.0, 1.0))
    for az in range(0, 360, 45):
        add(az, 45.0, (0.0, 0.0, 1.0))
    add(0.0, 90.0, (1.0, 0.0, 0.0))
    return CameraRig(tuple(views))
