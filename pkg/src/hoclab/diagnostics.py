"""Norms, Phi-entropies, dissipations, Cesaro means, atom estimates and rate fits.

Hook factories at the bottom turn these into callables ``(t, state) -> dict``
that :mod:`hoclab.dynamics` evaluates at each sample instant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import GridFn, Measure, Model, TraitGrid, quad
from .errors import ConfigurationError, DomainError, NumericalError, UnsupportedError
from .kernels import bregman_sum
from .spectral import ConservativeModel

XLOGX_FLOOR = 1e-300
RELIABLE_R2 = 0.98
MIN_FIT_POINTS = 10


def _cells(f: Union[GridFn, np.ndarray]) -> np.ndarray:
    return np.asarray(f.values if isinstance(f, GridFn) else f, dtype=float)


# ----------------------------------------------------------------------------
# distances

NORM_KINDS = ("tv", "tv_weighted", "lp_gamma_h", "linf_ratio")


@dataclass(frozen=True)
class NormSpec:
    """Which distance to compute.

    ``tv_weighted`` needs ``weight``; ``lp_gamma_h`` needs ``gamma``, ``h``
    and ``p``; ``linf_ratio`` needs ``reference``.
    """

    kind: str = "tv"
    weight: Optional[GridFn] = None
    p: float = 1.0
    gamma: Optional[Measure] = None
    h: Optional[GridFn] = None
    reference: Optional[Measure] = None

    def __post_init__(self):
        if self.kind not in NORM_KINDS:
            raise ConfigurationError(f"unknown norm {self.kind!r}")
        if not self.p >= 1:
            raise ConfigurationError(f"norm exponent p must be >= 1, got {self.p}")
        if self.kind == "tv_weighted":
            if self.weight is None:
                raise ConfigurationError("tv_weighted needs a weight function")
            if np.any(self.weight.values < 0) or self.weight.value0 < 0:
                raise ConfigurationError("tv_weighted weight must be nonnegative")
        if self.kind == "lp_gamma_h" and (self.gamma is None or self.h is None):
            raise ConfigurationError("lp_gamma_h needs gamma and h")
        if self.kind == "linf_ratio" and self.reference is None:
            raise ConfigurationError("linf_ratio needs a reference measure")


def distance(u: Measure, v: Measure, spec: NormSpec, grid: TraitGrid) -> float:
    if u.dens.shape != (grid.n_cells,) or v.dens.shape != (grid.n_cells,):
        raise ConfigurationError("measures do not match the grid")
    d_atom = abs(u.atom0 - v.atom0)
    d_dens = np.abs(u.dens - v.dens)
    if spec.kind == "tv":
        return d_atom + quad(d_dens, grid)
    if spec.kind == "tv_weighted":
        w = spec.weight
        atom_term = w.value0 * d_atom if d_atom != 0.0 else 0.0
        return atom_term + quad(d_dens * w.values, grid)
    if spec.kind == "lp_gamma_h":
        g = spec.gamma.dens
        ratio = np.divide(d_dens, g, out=np.zeros_like(d_dens), where=g > 0)
        return quad(ratio ** spec.p * g * spec.h.values, grid) ** (1.0 / spec.p)
    # linf_ratio
    ref = spec.reference
    if u.atom0 != 0.0 or v.atom0 != 0.0 or ref.atom0 != 0.0:
        raise UnsupportedError("linf_ratio is defined for atom-free measures only")
    if np.any(ref.dens <= 0):
        raise ConfigurationError("linf_ratio reference density must be positive on every cell")
    return float(np.max(d_dens / ref.dens))


# ----------------------------------------------------------------------------
# Phi-entropies


@dataclass(frozen=True)
class Phi:
    """Convex function for entropies: ``abs_p`` is ``|x|**p`` (1 <= p <= 2), ``xlogx``."""

    kind: str = "abs_p"
    p: float = 2.0

    def __post_init__(self):
        if self.kind == "abs_p":
            if not 1.0 <= self.p <= 2.0:
                raise ConfigurationError(f"abs_p needs 1 <= p <= 2, got {self.p}")
        elif self.kind != "xlogx":
            raise ConfigurationError(f"unknown Phi {self.kind!r}")

    def check(self, x) -> None:
        x = np.asarray(x)
        if not np.all(np.isfinite(x)):
            raise DomainError("Phi argument must be finite")
        if self.kind == "xlogx" and np.any(x < 0):
            raise DomainError("x log x needs a nonnegative argument")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "abs_p":
            return np.abs(x) ** self.p
        xc = np.maximum(x, XLOGX_FLOOR)
        return np.where(x > 0, xc * np.log(xc), 0.0)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "abs_p":
            return self.p * np.sign(x) * np.abs(x) ** (self.p - 1.0)
        return np.log(np.maximum(x, XLOGX_FLOOR)) + 1.0


def phi_entropy(f, pi: np.ndarray, phi: Phi, grid: TraitGrid) -> float:
    """``quad(Phi(f) pi) - Phi(quad(f pi))``, the Jensen gap of ``f`` under ``pi``."""
    f = _cells(f)
    phi.check(f)
    return quad(phi(f) * pi, grid) - float(phi(quad(f * pi, grid)))


def phi_dissipation(f, bQ: np.ndarray, phi: Phi, grid: TraitGrid) -> float:
    """Double Bregman sum ``sum_ij [Phi(f_i) - Phi(f_j) - Phi'(f_j)(f_i - f_j)] Q_i Q_j``."""
    f = _cells(f)
    phi.check(f)
    return bregman_sum(f, phi(f), phi.deriv(f), np.asarray(bQ) * grid.weights)


def kl_divergence(f: np.ndarray, g: np.ndarray, grid: TraitGrid) -> float:
    """``quad(f log(f/g))`` with ``0 log 0 = 0``."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if np.any(f < 0) or np.any(g < 0):
        raise DomainError("KL divergence needs nonnegative densities")
    pos = f > 0
    if np.any(g[pos] <= 0):
        raise DomainError("KL divergence: f is not absolutely continuous with respect to g")
    terms = np.zeros_like(f)
    terms[pos] = f[pos] * np.log(f[pos] / g[pos])
    return quad(terms, grid)


# ----------------------------------------------------------------------------
# Cesaro means and the emerging atom


class CesaroAccumulator:
    """Trapezoid-rule running integral of ``v_s`` and its time average."""

    def __init__(self):
        self._t0: Optional[float] = None
        self._t: Optional[float] = None
        self._last: Optional[np.ndarray] = None
        self._integral: Optional[np.ndarray] = None

    def add(self, t: float, m: Measure) -> None:
        v = m.to_vector()
        if self._t is None:
            self._t0 = self._t = float(t)
            self._last = v
            self._integral = np.zeros_like(v)
            return
        if not t > self._t:
            raise ConfigurationError(f"Cesaro times must increase ({t} after {self._t})")
        self._integral += 0.5 * (t - self._t) * (v + self._last)
        self._t, self._last = float(t), v

    @property
    def elapsed(self) -> float:
        return 0.0 if self._t is None else self._t - self._t0

    def mean(self) -> Measure:
        if self._t is None:
            raise ConfigurationError("empty Cesaro accumulator")
        if self.elapsed == 0.0:
            return Measure.from_vector(self._last.copy())
        return Measure.from_vector(self._integral / self.elapsed)


def cesaro_accumulate(state: Optional[CesaroAccumulator], v: Measure, t: float) -> CesaroAccumulator:
    state = state or CesaroAccumulator()
    state.add(t, v)
    return state


def atom_correction(model: Model, eps: float) -> float:
    """``int_{|x| <= eps} Q/a``, the absolutely continuous mass inside the atom window."""
    return float(np.dot(model.grid.overlap(-eps, eps), model.Q / model.a))


def atom_mass(m: Measure, eps: float, grid: TraitGrid, model: Optional[Model] = None) -> tuple[float, float]:
    """Mass of ``m`` in ``[-eps, eps]`` and the matching ``Q/a`` correction.

    Cells straddling the window edge contribute the overlapping fraction.
    The correction is 0 when no model is supplied.
    """
    if not eps > grid.min_width:
        raise ConfigurationError(f"eps = {eps:g} must exceed the smallest cell width {grid.min_width:g}")
    mass = m.atom0 + float(np.dot(grid.overlap(-eps, eps), m.dens))
    return mass, (atom_correction(model, eps) if model is not None else 0.0)


# ----------------------------------------------------------------------------
# rate fits


@dataclass(frozen=True)
class RateFit:
    kind: str
    rate: float
    r2: float
    window: tuple
    n_points: int

    @property
    def reliable(self) -> bool:
        return self.r2 >= RELIABLE_R2

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rate": self.rate, "r2": self.r2, "window": list(self.window),
                "n_points": self.n_points, "reliable": self.reliable}


def fit_rate(t, values, window: Optional[Sequence[float]] = None, kind: str = "exponential") -> RateFit:
    """Least-squares decay rate of ``values``.

    ``exponential`` regresses ``log(value)`` on ``t``, ``polynomial`` on
    ``log t``; the rate is minus the slope.  The default window is the tail
    half of the sampled time range.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if kind not in ("exponential", "polynomial"):
        raise ConfigurationError(f"unknown fit kind {kind!r}")
    if window is None:
        window = (0.5 * (t[0] + t[-1]), t[-1])
    lo, hi = float(window[0]), float(window[1])
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    ts, vs = t[sel], values[sel]
    if ts.size < MIN_FIT_POINTS:
        raise ConfigurationError(f"need at least {MIN_FIT_POINTS} points in [{lo}, {hi}], got {ts.size}")
    if not np.all(vs > 0) or not np.all(np.isfinite(vs)):
        raise NumericalError("rate fit needs positive finite values in the window")
    if kind == "polynomial":
        if np.any(ts <= 0):
            raise ConfigurationError("polynomial fit needs t > 0")
        x = np.log(ts)
    else:
        x = ts
    y = np.log(vs)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(kind, float(-slope), float(min(max(r2, 0.0), 1.0)), (lo, hi), int(ts.size))


# ----------------------------------------------------------------------------
# generator self-tests


def dual_generator_apply(cmodel: ConservativeModel, f: GridFn) -> GridFn:
    """``L* f = ba (<bQ, f> - f)`` on the cells and at 0."""
    mean = quad(cmodel.bQ * f.values, cmodel.grid)
    return GridFn(cmodel.ba0 * (mean - f.value0), cmodel.ba * (mean - f.values))


def drift_residual(cmodel: ConservativeModel, q: float) -> float:
    """Max over cells of ``|L* V - (||1/ba||_q^q ba - ba^(1-q))|`` with ``V = ba^-q``.

    The difference is scaled by the largest term entering it (at least 1):
    near trait 0 in the critical regime ``ba^(1-q)`` reaches 1e4 or more and
    the bare difference is pure rounding at that scale.
    """
    if not q > 1:
        raise ConfigurationError(f"q must exceed 1, got {q}")
    if np.any(cmodel.ba <= 0):
        raise ConfigurationError("drift residual needs ba > 0 on every cell")
    V = cmodel.ba ** -q
    lv = dual_generator_apply(cmodel, GridFn(0.0, V)).values
    moment = quad(cmodel.bQ * V, cmodel.grid)
    tail = cmodel.ba ** (1.0 - q)
    closed = moment * cmodel.ba - tail
    scale = max(1.0, float(np.max(tail)), moment * float(np.max(cmodel.ba)))
    return float(np.max(np.abs(lv - closed))) / scale


def mean_fitness_cesaro(log, name: str = "mean_fitness") -> np.ndarray:
    """Running trapezoid average of ``<v_s, a>`` from a run log."""
    if name not in log.diagnostics:
        raise ConfigurationError(f"run log has no {name!r} series")
    t = log.t
    v = np.asarray(log.diagnostics[name], dtype=float)
    out = np.empty_like(v)
    out[0] = v[0]
    integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (v[1:] + v[:-1]))])
    span = t - t[0]
    np.divide(integral, span, out=out, where=span > 0)
    return out


def lemma_floor(model: Model, t: float) -> np.ndarray:
    """Pointwise lower bound ``(1 - e^-t) Q / (a + 1)`` on the nonlinear density."""
    return -math.expm1(-t) * model.Q / (model.a + 1.0)


# ----------------------------------------------------------------------------
# hook factories


def mean_fitness_hook(model: Model, name: str = "mean_fitness"):
    def hook(t, m):
        return {name: m.atom0 * model.a0 + quad(m.dens * model.a, model.grid)}
    return hook


def distance_hook(name: str, target: Measure, spec: NormSpec, grid: TraitGrid):
    def hook(t, m):
        return {name: distance(m, target, spec, grid)}
    return hook


def entropy_hook(name: str, pi: np.ndarray, phi: Phi, grid: TraitGrid):
    def hook(t, f):
        return {name: phi_entropy(f, pi, phi, grid)}
    return hook


def floor_hook(model: Model, name: str = "floor_margin"):
    """Smallest ``dens - floor`` over cells; nonnegative when the floor holds."""
    def hook(t, m):
        return {name: float(np.min(m.dens - lemma_floor(model, t)))}
    return hook


class CesaroHook:
    """Accumulates the Cesaro mean and reports its atom mass for each ``eps``."""

    def __init__(self, grid: TraitGrid, eps_list: Sequence[float] = (), prefix: str = "cesaro_atom"):
        self.grid = grid
        self.eps_list = list(eps_list)
        self.prefix = prefix
        self.acc = CesaroAccumulator()

    def column(self, eps: float) -> str:
        return f"{self.prefix}_{eps:g}"

    def __call__(self, t, m):
        self.acc.add(t, m)
        mean = self.acc.mean()
        return {self.column(eps): atom_mass(mean, eps, self.grid)[0] for eps in self.eps_list}
