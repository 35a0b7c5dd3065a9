"""Labelled cladograms, the leaf-move chain on them, and its diffusion-scale generators."""

from .errors import CladoflowError
from .tree import Cladogram, validate_cladogram

__version__ = "0.1.0"

__all__ = ["Cladogram", "CladoflowError", "validate_cladogram", "__version__"]
