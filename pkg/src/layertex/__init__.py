"""Occlusion-aware layered mesh texturing.

Decomposes a triangle mesh into visibility layers by multi-view ray casting,
progressively exposes interior geometry through residual face sets with
normal flipping and backface culling, and merges per-layer UV textures with a
visibility-weighted softmax blend.
"""

from .cameras import CameraRig, ViewCamera, build_camera_rig
from .geometry import Mesh, build_topology, load_mesh, normalize_unit_box
from .levelsets import LevelSets, build_level_sets
from .raycast import HitLevelAssignment, WeightTable, assign_superface_levels, compute_weight_table
from .superfaces import SuperfaceSet, UVAtlas, generate_uv_atlas, segment_superfaces

__version__ = "0.1.0"

__all__ = [
    "CameraRig",
    "ViewCamera",
    "build_camera_rig",
    "Mesh",
    "build_topology",
    "load_mesh",
    "normalize_unit_box",
    "LevelSets",
    "build_level_sets",
    "HitLevelAssignment",
    "WeightTable",
    "assign_superface_levels",
    "compute_weight_table",
    "SuperfaceSet",
    "UVAtlas",
    "generate_uv_atlas",
    "segment_superfaces",
    "__version__",
]
