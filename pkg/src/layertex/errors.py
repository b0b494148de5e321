"""Exception hierarchy shared across the pipeline."""


class LayertexError(Exception):
    """Base class for all package errors."""


class MeshError(LayertexError):
    """Malformed, empty, or otherwise unusable mesh input."""


class ConfigError(LayertexError):
    """Invalid pipeline configuration (maps to exit code 2)."""


class AtlasPackingError(LayertexError):
    """UV charts could not be packed into the unit square."""

    def __init__(self, message: str, required_scale: float):
        super().__init__(message)
        self.required_scale = required_scale


class ProviderError(LayertexError):
    """Texture provider could not produce or validate its images."""


class BlendError(LayertexError):
    """Texture blending failed (e.g. zero coverage)."""


class StageError(LayertexError):
    """A pipeline stage failed (maps to exit code 3)."""

    def __init__(self, stage: str, message: str, artifact: str | None = None):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage
        self.artifact = artifact
