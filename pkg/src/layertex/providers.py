"""Texture content providers and the render manifest they consume.

A provider turns the manifest (per-level prompts, per-view depth maps and
cameras) into one RGB image per (level, view). The procedural provider keeps
the pipeline self-contained; the directory provider is the integration seam
for external generators, which only need to honor the manifest schema and the
`view_L{level}_V{view:02}.png` naming.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .cameras import CameraRig
from .errors import ProviderError
from .raster import DEPTH_MISS, read_depth_png

log = logging.getLogger(__name__)

MANIFEST_SCHEMA = 1

VIEW_IMAGE_NAME = "view_L{level}_V{view:02d}.png"
DEPTH_IMAGE_NAME = "depth_L{level}_V{view:02d}.png"

_NAMED_COLORS = {
    "red": (255, 0, 0),
    "green": (0, 200, 0),
    "blue": (0, 0, 255),
    "yellow": (255, 220, 0),
    "orange": (255, 140, 0),
    "purple": (160, 0, 200),
    "white": (255, 255, 255),
    "gray": (128, 128, 128),
}


@dataclass(frozen=True)
class ManifestEntry:
    level: int
    view: int
    depth_path: str  # relative to the manifest directory
    camera: dict


@dataclass(frozen=True)
class RenderManifest:
    """Schema-versioned description of everything a provider needs."""

    mesh_path: str
    view_resolution: tuple[int, int]
    near: float
    far: float
    prompts: dict[int, str]
    entries: tuple[ManifestEntry, ...]
    base_dir: Path = field(default_factory=Path)

    @property
    def levels(self) -> list[int]:
        return sorted({e.level for e in self.entries})

    def views_of(self, level: int) -> list[ManifestEntry]:
        return [e for e in self.entries if e.level == level]

    def depth_file(self, entry: ManifestEntry) -> Path:
        return self.base_dir / entry.depth_path

    def to_dict(self) -> dict:
        levels = {}
        for e in self.entries:
            levels.setdefault(e.level, []).append(e)
        return {
            "schema": MANIFEST_SCHEMA,
            "mesh": self.mesh_path,
            "view_resolution": list(self.view_resolution),
            "near": self.near,
            "far": self.far,
            "levels": [
                {
                    "level": lvl,
                    "prompt": self.prompts.get(lvl, ""),
                    "views": [
                        {"view": e.view, "depth_path": e.depth_path, "camera": e.camera}
                        for e in sorted(members, key=lambda e: e.view)
                    ],
                }
                for lvl, members in sorted(levels.items())
            ],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "RenderManifest":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ProviderError(f"cannot read manifest {path}: {exc}")
        return RenderManifest.from_dict(data, base_dir=path.parent)

    @staticmethod
    def from_dict(data: dict, base_dir: Path | None = None) -> "RenderManifest":
        schema = data.get("schema")
        if schema != MANIFEST_SCHEMA:
            raise ProviderError(
                f"unsupported manifest schema {schema!r} (expected {MANIFEST_SCHEMA})"
            )
        entries = []
        prompts = {}
        for level_block in data["levels"]:
            lvl = int(level_block["level"])
            prompts[lvl] = level_block.get("prompt", "")
            for v in level_block["views"]:
                entries.append(
                    ManifestEntry(
                        level=lvl,
                        view=int(v["view"]),
                        depth_path=v["depth_path"],
                        camera=v["camera"],
                    )
                )
        seen = set()
        for e in entries:
            key = (e.level, e.view)
            if key in seen:
                raise ProviderError(f"duplicate manifest entry for level {e.level} view {e.view}")
            seen.add(key)
        return RenderManifest(
            mesh_path=data["mesh"],
            view_resolution=(int(data["view_resolution"][0]), int(data["view_resolution"][1])),
            near=float(data["near"]),
            far=float(data["far"]),
            prompts=prompts,
            entries=tuple(entries),
            base_dir=base_dir or Path(),
        )


def build_manifest(
    mesh_path: str,
    rig: CameraRig,
    levels: list[int],
    prompts: dict[int, str],
    view_resolution: tuple[int, int],
    base_dir: Path,
) -> RenderManifest:
    entries = []
    for lvl in levels:
        for vi, view in enumerate(rig):
            entries.append(
                ManifestEntry(
                    level=lvl,
                    view=vi,
                    depth_path=DEPTH_IMAGE_NAME.format(level=lvl, view=vi),
                    camera=view.to_dict(),
                )
            )
    view = rig[0]
    return RenderManifest(
        mesh_path=mesh_path,
        view_resolution=view_resolution,
        near=view.near,
        far=view.far,
        prompts={int(k): v for k, v in prompts.items()},
        entries=tuple(entries),
        base_dir=base_dir,
    )


# provider outputs: {(level, view): (H, W, 3) uint8}
ProviderOutput = dict[tuple[int, int], np.ndarray]


def _hash_noise(seed: int, level: int, view: int, height: int, width: int) -> np.ndarray:
    """Deterministic per-pixel hash noise in [0, 255], integer mixing only."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.uint64)
    h = (
        ys * np.uint64(2654435761)
        ^ xs * np.uint64(40503)
        ^ np.uint64((seed * 1000003 + level * 8191 + view * 131) & 0xFFFFFFFFFFFFFFFF)
    )
    h = (h ^ (h >> np.uint64(33))) * np.uint64(0xFF51AFD7ED558CCD)
    h = h ^ (h >> np.uint64(33))
    rgb = np.stack(
        [(h >> np.uint64(shift)) & np.uint64(0xFF) for shift in (0, 8, 16)], axis=-1
    )
    return rgb.astype(np.uint8)


def _resolve_color(spec) -> tuple[int, int, int]:
    if isinstance(spec, str):
        if spec not in _NAMED_COLORS:
            raise ProviderError(f"unknown color name {spec!r}")
        return _NAMED_COLORS[spec]
    c = tuple(int(x) for x in spec)
    if len(c) != 3:
        raise ProviderError(f"color must have 3 channels, got {spec!r}")
    return c


def _pattern_image(pattern: dict, seed: int, level: int, view: int, shape) -> np.ndarray:
    height, width = shape
    kind = pattern.get("type", "solid")
    if kind == "solid":
        color = _resolve_color(pattern.get("color", "gray"))
        img = np.empty((height, width, 3), dtype=np.uint8)
        img[:] = color
        return img
    if kind == "checker":
        c0 = _resolve_color(pattern.get("colors", ["white", "gray"])[0])
        c1 = _resolve_color(pattern.get("colors", ["white", "gray"])[1])
        cell = int(pattern.get("cell_px", 32))
        ys, xs = np.mgrid[0:height, 0:width]
        board = ((ys // cell) + (xs // cell)) % 2
        palette = np.array([c0, c1], dtype=np.uint8)
        return palette[board]
    if kind == "noise":
        return _hash_noise(seed, level, view, height, width)
    raise ProviderError(f"unknown pattern type {kind!r}")


def normalize_palette(palette: dict | None) -> dict[int, dict]:
    """Accept {level: color-name | [r,g,b] | pattern-dict} and normalize."""
    result: dict[int, dict] = {}
    if not palette:
        return result
    for key, value in palette.items():
        lvl = int(key)
        if isinstance(value, dict):
            result[lvl] = value
        else:
            result[lvl] = {"type": "solid", "color": value}
    return result


def procedural_generate_views(
    manifest: RenderManifest,
    seed: int = 0,
    palette: dict | None = None,
) -> ProviderOutput:
    """Deterministic per-level patterns drawn where the depth map is finite."""
    palette = normalize_palette(palette)
    default_cycle = ["gray", "red", "blue", "green", "yellow", "purple", "orange", "white"]
    out: ProviderOutput = {}
    for entry in manifest.entries:
        depth_file = manifest.depth_file(entry)
        if not depth_file.exists():
            raise ProviderError(f"missing depth map: {depth_file}")
        depth_vals = read_depth_png(depth_file)
        finite = depth_vals != DEPTH_MISS
        pattern = palette.get(
            entry.level,
            {"type": "solid", "color": default_cycle[entry.level % len(default_cycle)]},
        )
        img = _pattern_image(pattern, seed, entry.level, entry.view, depth_vals.shape)
        img = np.where(finite[..., None], img, np.uint8(0))
        out[(entry.level, entry.view)] = img
    return out


def load_directory_textures(directory: str | Path, manifest: RenderManifest) -> ProviderOutput:
    """Load and validate externally generated view images.

    All missing files are listed together; the first dimension mismatch names
    its offender.
    """
    directory = Path(directory)
    missing = []
    for entry in manifest.entries:
        name = VIEW_IMAGE_NAME.format(level=entry.level, view=entry.view)
        if not (directory / name).exists():
            missing.append(name)
    if missing:
        raise ProviderError(
            f"{len(missing)} view image(s) missing from {directory}: " + ", ".join(missing)
        )

    w, h = manifest.view_resolution
    out: ProviderOutput = {}
    for entry in manifest.entries:
        name = VIEW_IMAGE_NAME.format(level=entry.level, view=entry.view)
        with Image.open(directory / name) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
        if arr.shape[:2] != (h, w):
            raise ProviderError(
                f"{name} is {arr.shape[1]}x{arr.shape[0]}, manifest requires {w}x{h}"
            )
        out[(entry.level, entry.view)] = arr
    return out


def save_provider_output(out: ProviderOutput, directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for (level, view), img in sorted(out.items()):
        path = directory / VIEW_IMAGE_NAME.format(level=level, view=view)
        Image.fromarray(img, mode="RGB").save(path)
        written.append(path)
    return written
