"""Brute-force references: dense generators, matrix exponentials, refined quadrature.

Dense coordinates are ``[atom at 0, cell masses]`` (density times width), so
conservativeness of a generator is a zero column-sum property.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.linalg

from .core import Measure, Model, TraitGrid, quad, rediscretize
from .errors import ConfigurationError
from .spectral import ConservativeModel

MAX_DENSE = 256
INTEGRANDS = ("Q/a", "Q/(lam+a)", "Q/(lam+a)^2", "Q*a", "Q*a^-q")


@dataclass(frozen=True)
class DenseGenerator:
    matrix: np.ndarray
    conservative: bool

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def to_coords(m: Measure, grid: TraitGrid) -> np.ndarray:
    return np.concatenate([[m.atom0], m.dens * grid.weights])


def from_coords(y: np.ndarray, grid: TraitGrid) -> Measure:
    return Measure(y[0], np.asarray(y[1:]) / grid.weights)


def dense_generator(model: Union[Model, ConservativeModel]) -> DenseGenerator:
    """Dense matrix of the linear or conservative generator in mass coordinates."""
    if model.n > MAX_DENSE:
        raise ConfigurationError(f"dense oracle limited to {MAX_DENSE} cells, got {model.n}")
    w = model.grid.weights
    if isinstance(model, ConservativeModel):
        rates = np.concatenate([[model.ba0], model.ba])
        source = np.concatenate([[0.0], model.bQ * w])
        A = -np.diag(rates) + np.outer(source, rates)
        return DenseGenerator(A, True)
    rates = np.concatenate([[model.a0], model.a])
    source = np.concatenate([[0.0], model.Q * w])
    A = -np.diag(rates) + np.outer(source, np.ones_like(rates))
    return DenseGenerator(A, False)


def expm_propagate(gen: DenseGenerator, u0: np.ndarray, t: float) -> np.ndarray:
    """``exp(t A) u0`` by scaling and squaring with Pade approximants."""
    if not t >= 0:
        raise ConfigurationError(f"t must be >= 0, got {t}")
    u0 = np.asarray(u0, dtype=float)
    if t == 0:
        return u0.copy()
    return scipy.linalg.expm(t * gen.matrix) @ u0


@dataclass(frozen=True)
class QuadratureRefinement:
    value: float
    error: float
    divergent: bool
    values: tuple
    n_cells: tuple


def _integrand(model: Model, kind: str, lam: float, q: Optional[float]) -> np.ndarray:
    a, Q = model.a, model.Q
    if kind == "Q/a":
        return Q / a
    if kind == "Q/(lam+a)":
        return Q / (lam + a)
    if kind == "Q/(lam+a)^2":
        return Q / (lam + a) ** 2
    if kind == "Q*a":
        return Q * a
    if q is None:
        raise ConfigurationError("integrand Q*a^-q needs q")
    return Q * a ** -q


def refine_quadrature(model: Model, integrand: str, levels: int = 3, lam: float = 0.0,
                      q: Optional[float] = None) -> QuadratureRefinement:
    """Quadrature of ``integrand`` on successively refined grids.

    Starts on the model's grid with the fitness uncalibrated, doubles the
    cells and deepens the grading at each level.  The error estimate is the
    last difference; ``divergent`` is set when the differences do not shrink.
    """
    if integrand not in INTEGRANDS:
        raise ConfigurationError(f"unknown integrand {integrand!r}; choose from {INTEGRANDS}")
    if levels < 2:
        raise ConfigurationError(f"need at least 2 levels, got {levels}")
    grid = model.grid
    values, sizes = [], []
    for _ in range(levels):
        m = rediscretize(model, grid, calibrate=False)
        values.append(quad(_integrand(m, integrand, lam, q), grid))
        sizes.append(grid.n_cells)
        grid = grid.refined()
    diffs = np.diff(values)
    growing = bool(np.all(np.abs(diffs[1:]) >= 0.9 * np.abs(diffs[:-1])))
    significant = abs(diffs[-1]) > 1e-3 * abs(values[-1])
    divergent = significant and (growing if diffs.size > 1 else abs(diffs[-1]) > 0.05 * abs(values[-2]))
    return QuadratureRefinement(values[-1], float(abs(diffs[-1])), bool(divergent),
                                tuple(values), tuple(sizes))


def closed_form_lambda_affine(slope: float) -> float:
    """Closed-form growth rate for ``Q = 1``, ``a = slope * x`` on ``[0, 1]``.

    Solves ``int_0^1 dx / (lam + slope x) = log((lam + slope)/lam) / slope = 1``.
    """
    return slope / math.expm1(slope)
