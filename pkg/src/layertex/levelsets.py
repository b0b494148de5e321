"""Per-level face sets: initial, residual, and the flip flags that realize them.

Level k renders the residual faces (everything not yet textured before k)
with their true normals, plus every already-textured face with a negated
normal. Backface culling then hides the near side of textured shells while
their far side stays visible as silhouette context.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raycast import HitLevelAssignment


@dataclass(frozen=True)
class LevelFaces:
    """Face sets of one visibility level (1-based)."""

    level: int
    init_faces: np.ndarray  # faces assigned exactly this level
    residual_faces: np.ndarray  # faces not textured before this level
    flip: np.ndarray  # (F,) bool: True for faces rendered with negated normals

    def __post_init__(self):
        self.init_faces.setflags(write=False)
        self.residual_faces.setflags(write=False)
        self.flip.setflags(write=False)


@dataclass(frozen=True)
class LevelSets:
    levels: tuple[LevelFaces, ...]

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)

    def __getitem__(self, level: int) -> LevelFaces:
        """Access by 1-based level id."""
        return self.levels[level - 1]

    def payload(self) -> dict:
        return {
            "num_levels": self.num_levels,
            "levels": [
                {
                    "level": lf.level,
                    "init_faces": [int(f) for f in lf.init_faces],
                    "residual_faces": [int(f) for f in lf.residual_faces],
                }
                for lf in self.levels
            ],
        }

    @staticmethod
    def from_payload(payload: dict, num_faces: int) -> "LevelSets":
        levels = []
        for entry in payload["levels"]:
            residual = np.asarray(entry["residual_faces"], dtype=np.int64)
            flip = np.ones(num_faces, dtype=bool)
            flip[residual] = False
            levels.append(
                LevelFaces(
                    level=int(entry["level"]),
                    init_faces=np.asarray(entry["init_faces"], dtype=np.int64),
                    residual_faces=residual,
                    flip=flip,
                )
            )
        return LevelSets(levels=tuple(levels))


def build_level_sets(assignment: HitLevelAssignment) -> LevelSets:
    """Construct the residual chain from per-face levels.

    The number of levels is the maximum assigned level. Residual sets start
    at the full face set and lose each level's initial faces; a face is
    flipped at level k exactly when it is not residual there.
    """
    face_level = assignment.face_level
    n_faces = len(face_level)
    h = int(face_level.max())

    levels = []
    residual = np.arange(n_faces, dtype=np.int64)
    for k in range(1, h + 1):
        init = np.nonzero(face_level == k)[0]
        flip = np.ones(n_faces, dtype=bool)
        flip[residual] = False
        levels.append(
            LevelFaces(
                level=k,
                init_faces=init,
                residual_faces=residual,
                flip=flip,
            )
        )
        residual = np.setdiff1d(residual, init, assume_unique=True)
    return LevelSets(levels=tuple(levels))
