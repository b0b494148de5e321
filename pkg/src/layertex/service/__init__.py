"""HTTP service wrapping the texturing pipeline."""

from .app import create_app

__all__ = ["create_app"]
