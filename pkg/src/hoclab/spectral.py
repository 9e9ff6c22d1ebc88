"""Perron eigenelements of the linear selection-mutation operator.

The linear flow ``u' = -a u + Q <u, 1>`` has growth rate ``lambda``, the
root of ``F(lambda) = int Q / (lambda + a) = 1`` when ``rho = F(0) > 1`` and
0 otherwise.  Its right eigenmeasure ``gamma`` and left eigenfunction ``h``
are explicit, and conjugating by ``h`` gives a conservative jump process
(:class:`ConservativeModel`) with rates ``ba = alpha (lambda + a)``, jump law
``bQ = gamma`` and invariant density ``pi = bQ / ba``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .core import _frozen, GridFn, Measure, Model, TraitGrid, pair, quad, rediscretize
from .errors import DegenerateCriticalError, NumericalError, UnsupportedError

REGIMES = ("fast", "critical", "subcritical")
RHO_MARGIN = 1e-3
DIVERGENCE_RATIO = 0.05
ALPHA_AGREEMENT = 0.01
LAMBDA_TOL = 1e-12
MAX_DOUBLINGS = 200
# an atom more negative than this means the model was put in the wrong regime
ATOM_TOL = 1e-6


def perron_value(model: Model, lam: float) -> float:
    """``F(lam) = quad(Q / (lam + a))``, strictly decreasing in ``lam``."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return quad(model.Q / (lam + model.a), model.grid)


def estimate_rho(model: Model, ratio: float = DIVERGENCE_RATIO) -> tuple[float, float, bool]:
    """Estimate ``rho = int Q/a`` on the run grid and on its refinement.

    Both estimates use the uncalibrated fitness so that a divergent integral
    is seen growing.  ``divergent`` is set when the refined value exceeds the
    coarse one by more than ``ratio`` (relative).
    """
    coarse_model = rediscretize(model, model.grid, calibrate=False)
    fine_model = rediscretize(model, model.grid.refined(), calibrate=False)
    coarse = perron_value(coarse_model, 0.0)
    fine = perron_value(fine_model, 0.0)
    divergent = fine > coarse and (fine - coarse) > ratio * abs(coarse)
    return coarse, fine, bool(divergent)


def solve_lambda(model: Model, tol: float = LAMBDA_TOL, divergent: bool = False) -> float:
    """Root of ``F(lam) = 1`` by bisection; 0 when ``F(0) <= 1`` and not divergent."""
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if not divergent and perron_value(model, 0.0) <= 1.0:
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(MAX_DOUBLINGS):
        if perron_value(model, hi) < 1.0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise NumericalError(f"no bracket for lambda after {MAX_DOUBLINGS} doublings")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if perron_value(model, mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _infer_regime(lam: float, model: Model) -> str:
    if lam > 0:
        return "fast"
    rho = perron_value(model, 0.0)
    return "subcritical" if rho < 1.0 - RHO_MARGIN else "critical"


def build_gamma(model: Model, lam: float, regime: Optional[str] = None) -> Measure:
    """Perron eigenmeasure: density ``Q/(lam + a)``, plus atom ``1 - rho`` if subcritical."""
    regime = regime or _infer_regime(lam, model)
    if regime != "subcritical":
        return Measure(0.0, model.Q / (lam + model.a))
    dens = model.Q / model.a
    atom = 1.0 - quad(dens, model.grid)
    if atom < -ATOM_TOL:
        raise NumericalError(f"negative atom {atom:.3g}: model is not subcritical on this grid")
    return Measure(max(atom, 0.0), dens)


def _second_moment(model: Model, lam: float) -> float:
    return quad(model.Q / (lam + model.a) ** 2, model.grid)


def build_h(model: Model, lam: float, regime: Optional[str] = None) -> tuple[Optional[float], GridFn]:
    """Dual eigenfunction ``h`` normalized by ``<gamma, h> = 1``, and ``alpha``.

    Fast and critical: ``alpha = quad(Q/(lam+a)^2)``, ``h = 1/(alpha (lam + a))``;
    in the critical regime ``h(0)`` is infinite.  Subcritical: ``h`` is the
    indicator of 0 scaled by ``1/(1 - rho)``, and ``alpha`` is ``None``.

    Raises :class:`DegenerateCriticalError` in the critical regime when
    ``quad(Q/a^2)`` does not settle under refinement (``1/a`` not in ``L^2(Q)``).
    """
    regime = regime or _infer_regime(lam, model)
    if regime == "subcritical":
        rho = quad(model.Q / model.a, model.grid)
        return None, GridFn(1.0 / (1.0 - rho), np.zeros(model.n))
    alpha = _second_moment(model, lam)
    if regime == "critical":
        fine = _second_moment(rediscretize(model, model.grid.refined()), lam)
        if not math.isfinite(fine) or abs(fine - alpha) > ALPHA_AGREEMENT * alpha:
            raise DegenerateCriticalError(
                f"quad(Q/a^2) not converged ({alpha:.6g} -> {fine:.6g}); no normalizable h")
    value0 = 1.0 / (alpha * lam) if lam > 0 else math.inf
    return alpha, GridFn(value0, 1.0 / (alpha * (lam + model.a)))


@dataclass(frozen=True)
class ConservativeModel:
    """h-transformed generator: jump rate ``ba``, jump law ``bQ``, invariant density ``pi``."""

    grid: TraitGrid
    ba: np.ndarray
    ba0: float
    bQ: np.ndarray
    pi: np.ndarray
    lam: float
    alpha: float

    @property
    def n(self) -> int:
        return self.grid.n_cells

    @property
    def inf_rate(self) -> float:
        return float(min(self.ba0, self.ba.min()))


def h_transform(model: Model, lam: float, alpha: Optional[float]) -> ConservativeModel:
    """Conservative model with ``ba = alpha (lam + a)``, ``bQ = gamma`` and ``pi = bQ/ba``.

    ``bQ`` is rescaled to unit mass on the grid so that the discrete
    generator conserves mass exactly.
    """
    if alpha is None or not alpha > 0 or not math.isfinite(alpha):
        raise UnsupportedError("h-transform needs a finite alpha (fast or non-degenerate critical regime)")
    ba = alpha * (lam + model.a)
    bQ = model.Q / (lam + model.a)
    bQ = bQ / quad(bQ, model.grid)
    return ConservativeModel(model.grid, _frozen(ba), float(alpha * lam), _frozen(bQ), _frozen(bQ / ba),
                             float(lam), float(alpha))


def eigen_residual(model: Model, lam: float, gamma: Measure, h: GridFn) -> tuple[float, float, float]:
    """Residuals of ``A gamma = lam gamma``, ``A* h = lam h`` and ``<gamma, h> = 1``.

    The first is measured in total variation, the second in the sup norm
    over cells (and the 0 slot when ``h(0)`` is finite).
    """
    g = model.grid
    mass = gamma.total_mass(g)
    r_dens = -model.a * gamma.dens + model.Q * mass - lam * gamma.dens
    r_atom = -model.a0 * gamma.atom0 - lam * gamma.atom0
    res_gamma = abs(r_atom) + quad(np.abs(r_dens), g)
    qh = quad(model.Q * h.values, g)
    res = np.abs(-model.a * h.values + qh - lam * h.values)
    res_h = float(res.max())
    if math.isfinite(h.value0):
        res_h = max(res_h, abs(-model.a0 * h.value0 + qh - lam * h.value0))
    return float(res_gamma), res_h, abs(pair(gamma, h, g) - 1.0)


@dataclass
class SpectralReport:
    rho_coarse: float
    rho_fine: float
    divergent: bool
    lam: float
    alpha: Optional[float]
    regime: str
    residuals: dict = field(default_factory=dict)
    degenerate: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        for k in ("rho_coarse", "rho_fine"):
            if not math.isfinite(d[k]):
                d[k] = None
        return d


@dataclass
class Spectrum:
    """A report plus the eigenelements it was computed from."""

    report: SpectralReport
    gamma: Measure
    h: Optional[GridFn]
    cmodel: Optional[ConservativeModel]


def classify(model: Model, rho_fine: float, divergent: bool, override: Optional[str] = None) -> str:
    """Regime: explicit override, then the declared rho, then the refined estimate."""
    if override is not None:
        if override not in REGIMES:
            raise ValueError(f"unknown regime {override!r}")
        return override
    meta = model.spec.meta
    if meta.regime is not None:
        return meta.regime
    rho = meta.rho if meta.rho is not None else (math.inf if divergent else rho_fine)
    if rho > 1.0 + RHO_MARGIN:
        return "fast"
    if rho < 1.0 - RHO_MARGIN:
        return "subcritical"
    return "critical"


def analyze(model: Model, regime: Optional[str] = None, tol: float = LAMBDA_TOL,
            ratio: float = DIVERGENCE_RATIO) -> Spectrum:
    """Full spectral pass: rho estimates, regime, lambda, gamma, h, h-transform."""
    rho_coarse, rho_fine, divergent = estimate_rho(model, ratio)
    regime = classify(model, rho_fine, divergent, regime)
    if regime == "fast":
        lam = solve_lambda(model, tol, divergent=True)
        if lam <= 0:
            raise NumericalError("fast regime declared but F(0) <= 1 on this grid")
    else:
        lam = 0.0
    gamma = build_gamma(model, lam, regime)
    degenerate = False
    try:
        alpha, h = build_h(model, lam, regime)
    except DegenerateCriticalError:
        alpha, h, degenerate = None, None, True
    cmodel = h_transform(model, lam, alpha) if alpha is not None else None
    residuals = {}
    if h is not None:
        rg, rh, pe = eigen_residual(model, lam, gamma, h)
        residuals = {"gamma": rg, "h": rh, "pairing": pe}
        if cmodel is not None:
            residuals["pi_mass"] = abs(quad(cmodel.pi, model.grid) - 1.0)
    report = SpectralReport(rho_coarse, rho_fine, divergent, lam, alpha, regime, residuals, degenerate)
    return Spectrum(report, gamma, h, cmodel)
