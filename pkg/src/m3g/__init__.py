"""Multimodal neighborhood embeddings from imagery, POIs, distance and mobility."""
from ._accel import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
