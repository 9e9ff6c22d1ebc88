"""Scenario orchestration: config -> spectral pass -> evolution -> fits -> files."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

from . import __version__
from .core import GridFn, Measure, Model, build_grid, discretize_model, pair, quad
from .diagnostics import (CesaroHook, NormSpec, Phi, RateFit, atom_correction, atom_mass,
                          distance, fit_rate, floor_hook, kl_divergence, mean_fitness_cesaro,
                          mean_fitness_hook, phi_entropy)
from .dynamics import (RunLog, evolve_conservative_dual, evolve_conservative_measure,
                       evolve_linear, evolve_nonlinear)
from .errors import ConfigurationError, UnsupportedError
from .spectral import Spectrum, analyze

if TYPE_CHECKING:
    from .config import DiagnosticConfig, RunConfig


def _diag_columns(d: "DiagnosticConfig") -> list:
    if d.kind == "atom_mass":
        prefix = d.name or ("cesaro_atom" if d.cesaro else "atom")
        return [f"{prefix}_{eps:g}" for eps in d.eps]
    if d.name:
        return [d.name]
    if d.kind == "distance":
        suffix = f"_p{d.p:g}" if d.norm == "lp_gamma_h" else ""
        return [f"{d.norm}{suffix}_{d.target}"]
    if d.kind == "entropy":
        return [f"entropy_{d.phi}" + (f"{d.p:g}" if d.phi == "abs_p" else "")]
    return {"mean_fitness": ["mean_fitness"], "lambda_hat": ["lambda_hat"],
            "floor": ["floor_margin"], "kl": ["kl_pi"]}[d.kind]


def diagnostic_columns(cfg: "RunConfig") -> list:
    """CSV diagnostic column names, in configuration order."""
    cols = []
    for d in cfg.diagnostics:
        cols.extend(_diag_columns(d))
    return cols


def build_model(cfg: "RunConfig") -> Model:
    spec = cfg.model.to_spec()
    grid = build_grid(spec.lo, spec.hi, cfg.grid.n_cells, cfg.grid.grading, cfg.grid.depth)
    return discretize_model(spec, grid)


def _require(obj, what: str):
    if obj is None:
        raise UnsupportedError(f"{what} is not available in this regime")
    return obj


def build_initial(cfg: "RunConfig", model: Model, spectrum: Spectrum):
    """Initial measure (or test function for the dual flow) described by ``run.initial``."""
    init, g, eq = cfg.run.initial, model.grid, cfg.run.equation
    n = model.n
    if eq == "dual":
        if init.kind == "constant":
            return GridFn.constant(g, init.value)
        if init.kind == "bump":
            x = g.midpoints
            return GridFn(float(init.trait_lo <= 0.0 <= init.trait_hi),
                          ((x >= init.trait_lo) & (x <= init.trait_hi)).astype(float))
        if init.kind == "random":
            rng = np.random.default_rng(init.seed)
            return GridFn(rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0, n))
        if init.kind == "table":
            if init.values is None or len(init.values) != n:
                raise ConfigurationError(f"run.initial.values: need {n} entries")
            return GridFn(init.atom0, np.asarray(init.values, dtype=float))
        raise ConfigurationError(f"run.initial.kind: {init.kind!r} is not a test function")
    if init.kind == "uniform":
        m = Measure.uniform(g)
    elif init.kind == "atom0":
        m = Measure.dirac0(g)
    elif init.kind == "gamma":
        m = spectrum.gamma.copy()
    elif init.kind == "pi":
        m = Measure(0.0, _require(spectrum.cmodel, "pi").pi.copy())
    elif init.kind == "mix":
        m = Measure(init.atom_weight, Measure.uniform(g, 1.0 - init.atom_weight).dens)
    elif init.kind == "cell":
        if not g.lo <= init.trait <= g.hi:
            raise ConfigurationError("run.initial.trait: outside the domain")
        idx = min(int(np.searchsorted(g.edges, init.trait, side="right")) - 1, n - 1)
        m = Measure.cell_mass(g, idx)
    elif init.kind == "table":
        if init.values is None or len(init.values) != n:
            raise ConfigurationError(f"run.initial.values: need {n} entries")
        m = Measure(init.atom0, np.asarray(init.values, dtype=float))
    else:
        raise ConfigurationError(f"run.initial.kind: {init.kind!r} is not a measure")
    if eq == "nonlinear":
        total = m.total_mass(g)
        if not total > 0:
            raise ConfigurationError("run.initial: zero initial mass")
        m = m.scaled(1.0 / total)
    return m


def _target(d: "DiagnosticConfig", spectrum: Spectrum, u0, model: Model) -> Measure:
    if d.target == "gamma":
        return spectrum.gamma
    if d.target == "pi":
        return Measure(0.0, _require(spectrum.cmodel, "pi").pi)
    h = _require(spectrum.h, "h")
    return spectrum.gamma.scaled(pair(u0, h, model.grid))


def _norm(d: "DiagnosticConfig", spectrum: Spectrum) -> NormSpec:
    if d.norm == "tv":
        return NormSpec("tv")
    if d.norm == "tv_weighted":
        return NormSpec("tv_weighted", weight=_require(spectrum.h, "h"))
    if d.norm == "lp_gamma_h":
        return NormSpec("lp_gamma_h", p=d.p, gamma=spectrum.gamma, h=_require(spectrum.h, "h"))
    return NormSpec("linf_ratio", reference=spectrum.gamma)


def build_hooks(cfg: "RunConfig", model: Model, spectrum: Spectrum, u0):
    """Hooks in configuration order, plus the Cesaro accumulators (for the summary)."""
    g, eq = model.grid, cfg.run.equation
    hooks, cesaro = [], []
    measure_flow = eq in ("nonlinear", "linear", "conservative")
    for d in cfg.diagnostics:
        cols = _diag_columns(d)
        col = cols[0] if cols else None
        if d.kind in ("distance", "atom_mass", "mean_fitness", "floor", "kl") and not measure_flow:
            raise ConfigurationError(f"diagnostics: {d.kind} needs a measure-valued flow, not {eq}")
        if d.kind == "distance":
            target, spec = _target(d, spectrum, u0, model), _norm(d, spectrum)
            hooks.append(lambda t, m, c=col, tg=target, sp=spec: {c: distance(m, tg, sp, g)})
        elif d.kind == "atom_mass":
            for eps in d.eps:
                if not eps > g.min_width:
                    raise ConfigurationError(f"diagnostics.eps: {eps:g} is below the smallest cell width")
            if d.cesaro:
                hook = CesaroHook(g, d.eps, d.name or "cesaro_atom")
                cesaro.append(hook)
                hooks.append(hook)
            else:
                names = _diag_columns(d)
                hooks.append(lambda t, m, e=tuple(d.eps), nm=tuple(names):
                             {c: atom_mass(m, eps, g)[0] for c, eps in zip(nm, e)})
        elif d.kind == "mean_fitness":
            hooks.append(mean_fitness_hook(model, col))
        elif d.kind == "lambda_hat":
            if eq != "nonlinear":
                raise ConfigurationError("diagnostics: lambda_hat is only defined for the nonlinear flow")
            hooks.append(lambda t, m, c=col: {c: math.nan})  # filled from the run log afterwards
        elif d.kind == "floor":
            if eq != "nonlinear":
                raise ConfigurationError("diagnostics: floor is only defined for the nonlinear flow")
            hooks.append(floor_hook(model, col))
        elif d.kind == "entropy":
            cm = _require(spectrum.cmodel, "the conservative model")
            phi = Phi(d.phi, d.p if d.phi == "abs_p" else 2.0)
            if eq == "dual":
                hooks.append(lambda t, f, c=col, ph=phi: {c: phi_entropy(f, cm.pi, ph, g)})
            elif eq == "conservative":
                hooks.append(lambda t, m, c=col, ph=phi:
                             {c: phi_entropy(m.dens / cm.pi, cm.pi, ph, g) if m.atom0 == 0 else math.nan})
            else:
                raise ConfigurationError("diagnostics: entropy needs the conservative or dual flow")
        elif d.kind == "kl":
            if eq != "conservative":
                raise ConfigurationError("diagnostics: kl needs the conservative flow")
            cm = _require(spectrum.cmodel, "the conservative model")
            hooks.append(lambda t, m, c=col: {c: kl_divergence(m.dens, cm.pi, g)})
    return hooks, cesaro


@dataclass
class ScenarioResult:
    config: "RunConfig"
    model: Model
    spectrum: Spectrum
    log: RunLog
    fits: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)


def run_scenario(cfg: "RunConfig") -> ScenarioResult:
    model = build_model(cfg)
    spectrum = analyze(model, cfg.run.regime)
    u0 = build_initial(cfg, model, spectrum)
    hooks, cesaro = build_hooks(cfg, model, spectrum, u0)
    r = cfg.run
    kw = dict(hooks=hooks, sample_stride=r.sample_stride, snapshot_times=r.snapshot_times, scheme=r.scheme)
    if r.equation == "nonlinear":
        log = evolve_nonlinear(model, u0, r.t_final, r.dt, **kw)
    elif r.equation == "linear":
        log = evolve_linear(model, u0, r.t_final, r.dt, **kw)
    else:
        cm = _require(spectrum.cmodel, "the conservative model")
        flow = evolve_conservative_measure if r.equation == "conservative" else evolve_conservative_dual
        log = flow(cm, u0, r.t_final, r.dt, **kw)
    for d in cfg.diagnostics:
        if d.kind == "lambda_hat":
            log.diagnostics[_diag_columns(d)[0]] = list(log.growth)

    fits = []
    for fc in cfg.fits:
        try:
            series = log.series(fc.series)
        except KeyError as exc:
            raise ConfigurationError(f"fits.series: {exc.args[0]}") from exc
        fit: RateFit = fit_rate(log.t, series, fc.window, fc.kind)
        fits.append({"series": fc.series, **fit.to_dict()})

    extras = {"final_mass": log.mass[-1], "final_log_mass": log.log_mass[-1]}
    if log.growth:
        extras["lambda_hat"] = log.growth[-1]
    for d in cfg.diagnostics:
        if d.kind == "mean_fitness":
            extras["mean_fitness_cesaro"] = float(mean_fitness_cesaro(log, _diag_columns(d)[0])[-1])
    rho_disc = quad(model.Q / model.a, model.grid)
    for hook in cesaro:
        mean = hook.acc.mean()
        extras.setdefault("cesaro_atoms", [])
        for eps in hook.eps_list:
            mass, corr = atom_mass(mean, eps, model.grid, model)
            extras["cesaro_atoms"].append({
                "eps": eps, "mass": mass, "correction": corr,
                "expected": max(1.0 - rho_disc, 0.0) + atom_correction(model, eps)})
    return ScenarioResult(cfg, model, spectrum, log, fits, extras)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _fmt(x: float) -> str:
    return repr(float(x))


def summary_dict(res: ScenarioResult) -> dict:
    return _clean({
        "version": __version__,
        "spectral": res.spectrum.report.to_dict(),
        "fits": res.fits,
        "extras": res.extras,
        "config": res.config.model_dump(mode="json"),
    })


def write_outputs(res: ScenarioResult, directory: str) -> list:
    """Write ``series.csv``, ``summary.json`` and optional snapshot CSVs; returns the paths."""
    os.makedirs(directory, exist_ok=True)
    log = res.log
    cols = diagnostic_columns(res.config)
    paths = []
    series_path = os.path.join(directory, "series.csv")
    with open(series_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "mass", "log_mass"] + cols)
        for i, t in enumerate(log.times):
            w.writerow([_fmt(t), _fmt(log.mass[i]), _fmt(log.log_mass[i])]
                       + [_fmt(log.diagnostics[c][i]) for c in cols])
    paths.append(series_path)

    summary = summary_dict(res)
    if res.config.output.snapshots and log.snapshots:
        snaps = []
        x = res.model.grid.midpoints
        for t, state in sorted(log.snapshots.items()):
            name = f"snapshot_t{t:g}.csv"
            is_measure = isinstance(state, Measure)
            with open(os.path.join(directory, name), "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["midpoint", "density" if is_measure else "value"])
                vals = state.dens if is_measure else state.values
                for xi, vi in zip(x, vals):
                    w.writerow([_fmt(xi), _fmt(vi)])
            entry = {"t": t, "file": name}
            entry["atom0" if is_measure else "value0"] = state.atom0 if is_measure else state.value0
            snaps.append(_clean(entry))
            paths.append(os.path.join(directory, name))
        summary["snapshots"] = snaps
    summary_path = os.path.join(directory, "summary.json")
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    paths.append(summary_path)
    return paths
