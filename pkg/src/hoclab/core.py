"""Trait grid, model data and the atom-plus-density measure representation.

Traits live on an interval ``[lo, hi]`` containing 0.  Cells are graded
geometrically toward 0, where the fitness vanishes and integrands such as
``Q/a`` or ``Q/a**2`` blow up.  The optimal trait 0 is never a cell: it is a
dedicated slot that carries the atom of a measure (``Measure.atom0``) or the
value of a test function at 0 (``GridFn.value0``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ModelError

DEFAULT_GRADING = 1.2
DEFAULT_DEPTH = 1e-12
# Each refinement level pushes the smallest cell this many decades closer to 0.
REFINE_DEPTH_FACTOR = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _side_widths(length: float, n: int, grading: float, depth: float) -> np.ndarray:
    """Cell widths on one side of 0, ordered from 0 outward.

    ``m`` innermost cells shrink by ``1/grading`` per cell toward 0; the
    remaining ``n - m`` cells share one uniform width ``H``.  ``m`` is the
    smallest count bringing the innermost width below ``depth * length``,
    capped at ``n`` (pure geometric partition).
    """
    if grading == 1.0:
        return np.full(n, length / n)
    g = grading
    for m in range(n + 1):
        big = length / ((n - m) + (1.0 - g ** -m) / (g - 1.0))
        if big * g ** -m <= depth * length:
            break
    widths = np.empty(n)
    widths[:m] = big * g ** -np.arange(m, 0, -1, dtype=float)
    widths[m:] = big
    return widths


@dataclass(frozen=True)
class TraitGrid:
    lo: float
    hi: float
    n_cells: int
    edges: np.ndarray
    midpoints: np.ndarray
    weights: np.ndarray
    grading: float
    depth: float = DEFAULT_DEPTH

    def refined(self) -> "TraitGrid":
        """Twice the cells, innermost cell pushed deeper toward 0."""
        return build_grid(self.lo, self.hi, 2 * self.n_cells, self.grading,
                          self.depth * REFINE_DEPTH_FACTOR)

    @property
    def min_width(self) -> float:
        return float(self.weights.min())

    def overlap(self, lo: float, hi: float) -> np.ndarray:
        """Length of each cell inside ``[lo, hi]``."""
        left = np.maximum(self.edges[:-1], lo)
        right = np.minimum(self.edges[1:], hi)
        return np.clip(right - left, 0.0, None)


def build_grid(lo: float, hi: float, n_cells: int, grading: float = DEFAULT_GRADING,
               depth: float = DEFAULT_DEPTH) -> TraitGrid:
    """Partition ``[lo, hi]`` into cells graded toward 0.

    When ``lo < 0 < hi`` both sides are graded toward 0 and 0 is an edge;
    cells are split between the sides in proportion to their lengths.
    """
    if not (math.isfinite(lo) and math.isfinite(hi)) or not lo <= 0.0 <= hi or lo >= hi:
        raise ConfigurationError(f"need lo <= 0 <= hi and lo < hi, got [{lo}, {hi}]")
    if int(n_cells) != n_cells or n_cells < 4:
        raise ConfigurationError(f"n_cells must be an integer >= 4, got {n_cells}")
    if not grading >= 1.0:
        raise ConfigurationError(f"grading must be >= 1, got {grading}")
    if not 0.0 < depth < 1.0:
        raise ConfigurationError(f"depth must lie in (0, 1), got {depth}")
    n_cells = int(n_cells)

    if lo < 0.0 < hi:
        n_left = int(round(n_cells * (-lo) / (hi - lo)))
        n_left = min(max(n_left, 1), n_cells - 1)
        left = _side_widths(-lo, n_left, grading, depth)
        right = _side_widths(hi, n_cells - n_left, grading, depth)
        edges = np.concatenate([-np.cumsum(left)[::-1], [0.0], np.cumsum(right)])
        edges[0], edges[-1] = lo, hi
    elif lo == 0.0:
        edges = np.concatenate([[0.0], np.cumsum(_side_widths(hi, n_cells, grading, depth))])
        edges[-1] = hi
    else:
        # hi == 0: grade toward the right endpoint
        edges = np.concatenate([-np.cumsum(_side_widths(-lo, n_cells, grading, depth))[::-1], [0.0]])
        edges[0] = lo

    weights = np.diff(edges)
    if np.any(weights <= 0.0):
        raise ConfigurationError("grid too deep for double precision; lower depth or grading")
    mids = 0.5 * (edges[:-1] + edges[1:])
    return TraitGrid(float(lo), float(hi), n_cells, _frozen(edges), _frozen(mids),
                     _frozen(weights), float(grading), float(depth))


def quad(values, grid: TraitGrid) -> float:
    """Midpoint rule: ``sum(values * weights)``."""
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n_cells,):
        raise ConfigurationError(f"expected {grid.n_cells} cell values, got shape {values.shape}")
    return float(np.dot(values, grid.weights))


# ----------------------------------------------------------------------------
# measures and test functions


@dataclass
class Measure:
    """Atom at trait 0 plus a piecewise-constant density on the cells."""

    atom0: float
    dens: np.ndarray

    def __post_init__(self):
        self.atom0 = float(self.atom0)
        self.dens = np.asarray(self.dens, dtype=float)

    def total_mass(self, grid: TraitGrid) -> float:
        return self.atom0 + quad(self.dens, grid)

    def scaled(self, c: float) -> "Measure":
        return Measure(c * self.atom0, c * self.dens)

    def copy(self) -> "Measure":
        return Measure(self.atom0, self.dens.copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([[self.atom0], self.dens])

    @classmethod
    def from_vector(cls, y) -> "Measure":
        return cls(y[0], np.array(y[1:], dtype=float))

    @classmethod
    def dirac0(cls, grid: TraitGrid, mass: float = 1.0) -> "Measure":
        return cls(mass, np.zeros(grid.n_cells))

    @classmethod
    def uniform(cls, grid: TraitGrid, mass: float = 1.0) -> "Measure":
        return cls(0.0, np.full(grid.n_cells, mass / (grid.hi - grid.lo)))

    @classmethod
    def cell_mass(cls, grid: TraitGrid, index: int, mass: float = 1.0) -> "Measure":
        """All mass spread over a single cell (discrete stand-in for a Dirac at a trait)."""
        dens = np.zeros(grid.n_cells)
        dens[index] = mass / grid.weights[index]
        return cls(0.0, dens)


@dataclass
class GridFn:
    """A function of the trait: its value at 0 and its value on each cell."""

    value0: float
    values: np.ndarray

    def __post_init__(self):
        self.value0 = float(self.value0)
        self.values = np.asarray(self.values, dtype=float)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([[self.value0], self.values])

    @classmethod
    def from_vector(cls, y) -> "GridFn":
        return cls(y[0], np.array(y[1:], dtype=float))

    @classmethod
    def constant(cls, grid: TraitGrid, c: float = 1.0) -> "GridFn":
        return cls(c, np.full(grid.n_cells, float(c)))


def pair(mu: Measure, f: GridFn, grid: TraitGrid) -> float:
    """Duality bracket ``<mu, f>``.

    The atom term is skipped when the atom is exactly 0, so that test
    functions which are infinite at 0 (the critical-regime ``h``) pair with
    atom-free measures.
    """
    if mu.dens.shape != f.values.shape:
        raise ConfigurationError("measure and function live on different grids")
    atom_term = mu.atom0 * f.value0 if mu.atom0 != 0.0 else 0.0
    return atom_term + quad(mu.dens * f.values, grid)


# ----------------------------------------------------------------------------
# model specification


@dataclass(frozen=True)
class Fitness:
    """``power``: c|x|^p; ``affine``: c0 + c1|x|; ``table``: per-cell values."""

    family: str = "power"
    c: float = 1.0
    p: float = 1.0
    c0: float = 0.0
    c1: float = 1.0
    values: Optional[tuple] = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        ax = np.abs(x)
        if self.family == "power":
            return self.c * ax ** self.p
        if self.family == "affine":
            return self.c0 + self.c1 * ax
        if self.family == "table":
            vals = np.asarray(self.values, dtype=float)
            if vals.shape != np.shape(x):
                raise ModelError(f"fitness table has {vals.size} entries, grid has {np.size(x)} cells")
            return vals.copy()
        raise ModelError(f"unknown fitness family {self.family!r}")

    def at_zero(self) -> float:
        if self.family == "affine":
            return self.c0
        return 0.0


@dataclass(frozen=True)
class Mutation:
    """``uniform``; ``power``: density proportional to |x|^s; ``table``."""

    family: str = "uniform"
    s: float = 1.0
    values: Optional[tuple] = None

    def __call__(self, x: np.ndarray, lo: float, hi: float) -> np.ndarray:
        if self.family == "uniform":
            return np.full(np.shape(x), 1.0 / (hi - lo))
        if self.family == "power":
            norm = (abs(lo) ** (self.s + 1) + hi ** (self.s + 1)) / (self.s + 1)
            return np.abs(x) ** self.s / norm
        if self.family == "table":
            vals = np.asarray(self.values, dtype=float)
            if vals.shape != np.shape(x):
                raise ModelError(f"mutation table has {vals.size} entries, grid has {np.size(x)} cells")
            return vals.copy()
        raise ModelError(f"unknown mutation family {self.family!r}")


@dataclass(frozen=True)
class AnalyticMeta:
    """Known closed-form facts about a model, used for regime classification."""

    rho: Optional[float] = None
    exponent: Optional[float] = None
    regime: Optional[str] = None


@dataclass(frozen=True)
class ModelSpec:
    lo: float = 0.0
    hi: float = 1.0
    fitness: Fitness = field(default_factory=Fitness)
    mutation: Mutation = field(default_factory=Mutation)
    meta: AnalyticMeta = field(default_factory=AnalyticMeta)
    # rescale the discrete fitness so that quad(Q/a) equals meta.rho exactly
    calibrate_rho: bool = False
    name: str = ""

    def validate(self) -> None:
        f = self.fitness
        if f.family == "power":
            if not f.c > 0:
                raise ModelError(f"power fitness needs c > 0, got {f.c}")
            if not 0 < f.p <= 2:
                raise ModelError(f"power fitness needs 0 < p <= 2, got {f.p}")
        elif f.family == "affine":
            if f.c0 != 0.0:
                raise ModelError("fitness must vanish at the optimal trait (c0 = 0)")
            if not f.c1 > 0:
                raise ModelError(f"affine fitness needs c1 > 0, got {f.c1}")
        elif f.family != "table":
            raise ModelError(f"unknown fitness family {f.family!r}")
        m = self.mutation
        if m.family == "power" and not m.s >= 0:
            raise ModelError(f"power mutation needs s >= 0, got {m.s}")
        if m.family not in ("uniform", "power", "table"):
            raise ModelError(f"unknown mutation family {m.family!r}")
        if self.calibrate_rho and not (self.meta.rho is not None and math.isfinite(self.meta.rho)):
            raise ModelError("calibrate_rho requires a finite meta.rho")


@dataclass(frozen=True)
class Model:
    grid: TraitGrid
    a: np.ndarray
    Q: np.ndarray
    spec: ModelSpec
    a0: float = 0.0

    @property
    def n(self) -> int:
        return self.grid.n_cells


def discretize_model(spec: ModelSpec, grid: TraitGrid) -> Model:
    """Evaluate fitness and mutation density at cell midpoints.

    Q is rescaled so that ``quad(Q) == 1`` on this grid.  With
    ``spec.calibrate_rho`` the fitness is also rescaled so that ``quad(Q/a)``
    equals the declared rho, which keeps the discrete problem in the declared
    regime (critical models otherwise drift by the quadrature error).
    """
    spec.validate()
    if not (spec.lo == grid.lo and spec.hi == grid.hi):
        raise ConfigurationError(f"grid [{grid.lo}, {grid.hi}] does not match model domain [{spec.lo}, {spec.hi}]")
    x = grid.midpoints
    a = np.asarray(spec.fitness(x), dtype=float)
    Q = np.asarray(spec.mutation(x, spec.lo, spec.hi), dtype=float)
    if not np.all(np.isfinite(a)) or np.any(a <= 0.0):
        raise ModelError("fitness must be positive at every cell midpoint")
    if not np.all(np.isfinite(Q)) or np.any(Q <= 0.0):
        raise ModelError("mutation density must be positive at every cell midpoint")
    if spec.fitness.at_zero() != 0.0:
        raise ModelError("fitness must vanish at the optimal trait")
    Q = Q / quad(Q, grid)
    if spec.calibrate_rho:
        a = a * (quad(Q / a, grid) / spec.meta.rho)
    return Model(grid, _frozen(a), _frozen(Q), spec, 0.0)


def rediscretize(model: Model, grid: TraitGrid, calibrate: Optional[bool] = None) -> Model:
    """The same model on another grid; table families stay on the original grid."""
    spec = model.spec
    if calibrate is not None and calibrate != spec.calibrate_rho:
        spec = replace(spec, calibrate_rho=calibrate)
    if "table" in (spec.fitness.family, spec.mutation.family):
        grid = model.grid
    return discretize_model(spec, grid)


# ----------------------------------------------------------------------------
# canonical models used throughout tests and the acceptance suite

def model_fast() -> ModelSpec:
    """Q = 1, a(x) = x on [0, 1]; rho is infinite."""
    return ModelSpec(0.0, 1.0, Fitness("power", c=1.0, p=1.0), Mutation("uniform"),
                     AnalyticMeta(rho=math.inf, exponent=1.0, regime="fast"), name="F")


def model_critical(calibrate: bool = True) -> ModelSpec:
    """Q = 1, a(x) = (4/3) x^(1/4) on [0, 1]; rho = 1."""
    return ModelSpec(0.0, 1.0, Fitness("power", c=4.0 / 3.0, p=0.25), Mutation("uniform"),
                     AnalyticMeta(rho=1.0, exponent=0.25, regime="critical"),
                     calibrate_rho=calibrate, name="S")


def model_subcritical(calibrate: bool = True) -> ModelSpec:
    """Q = 1, a(x) = 4 sqrt(x) on [0, 1]; rho = 1/2."""
    return ModelSpec(0.0, 1.0, Fitness("power", c=4.0, p=0.5), Mutation("uniform"),
                     AnalyticMeta(rho=0.5, exponent=0.5, regime="subcritical"),
                     calibrate_rho=calibrate, name="C")


CANONICAL = {"F": model_fast, "S": model_critical, "C": model_subcritical}


def canonical(name: str, n_cells: int = 512, grading: float = DEFAULT_GRADING,
              depth: float = DEFAULT_DEPTH, **kw) -> Model:
    spec = CANONICAL[name](**kw)
    return discretize_model(spec, build_grid(spec.lo, spec.hi, n_cells, grading, depth))


