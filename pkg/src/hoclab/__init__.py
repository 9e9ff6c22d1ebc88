"""Numerical laboratory for selection-mutation dynamics with parent-independent mutation."""

__version__ = "0.1.0"

from .core import (GridFn, Measure, Model, ModelSpec, TraitGrid, build_grid, canonical,
                   discretize_model, pair, quad)
from .kernels import BACKEND
from .spectral import ConservativeModel, SpectralReport, analyze

__all__ = [
    "__version__", "BACKEND", "GridFn", "Measure", "Model", "ModelSpec", "TraitGrid",
    "build_grid", "canonical", "discretize_model", "pair", "quad",
    "ConservativeModel", "SpectralReport", "analyze",
]
