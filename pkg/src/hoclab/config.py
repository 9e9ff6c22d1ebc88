"""Run configuration: a JSON document validated with pydantic.

Unknown keys are rejected everywhere.  Validation failures are re-raised as
:class:`hoclab.errors.ConfigurationError` whose message starts with the
dotted field path (``run.dt: ...``).
"""

from __future__ import annotations

import json
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .core import (CANONICAL, DEFAULT_DEPTH, DEFAULT_GRADING, AnalyticMeta, Fitness, ModelSpec,
                   Mutation)
from .errors import ConfigurationError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FitnessConfig(_Strict):
    family: Literal["power", "affine", "table"] = "power"
    c: float = 1.0
    p: float = 1.0
    c0: float = 0.0
    c1: float = 1.0
    values: Optional[List[float]] = None


class MutationConfig(_Strict):
    family: Literal["uniform", "power", "table"] = "uniform"
    s: float = 1.0
    values: Optional[List[float]] = None


class MetaConfig(_Strict):
    rho: Optional[float] = None
    exponent: Optional[float] = None
    regime: Optional[Literal["fast", "critical", "subcritical"]] = None


class ModelConfig(_Strict):
    """Either ``canonical`` (``F``, ``S`` or ``C``) or an explicit model."""

    canonical: Optional[Literal["F", "S", "C"]] = None
    lo: float = 0.0
    hi: float = 1.0
    fitness: FitnessConfig = Field(default_factory=FitnessConfig)
    mutation: MutationConfig = Field(default_factory=MutationConfig)
    meta: MetaConfig = Field(default_factory=MetaConfig)
    calibrate_rho: Optional[bool] = None
    name: str = ""

    def to_spec(self) -> ModelSpec:
        if self.canonical is not None:
            builder = CANONICAL[self.canonical]
            if self.calibrate_rho is not None and self.canonical != "F":
                return builder(calibrate=self.calibrate_rho)
            return builder()
        f, m, meta = self.fitness, self.mutation, self.meta
        return ModelSpec(
            self.lo, self.hi,
            Fitness(f.family, f.c, f.p, f.c0, f.c1, tuple(f.values) if f.values else None),
            Mutation(m.family, m.s, tuple(m.values) if m.values else None),
            AnalyticMeta(meta.rho, meta.exponent, meta.regime),
            bool(self.calibrate_rho), self.name)


class GridConfig(_Strict):
    n_cells: int = Field(512, ge=4)
    grading: float = Field(DEFAULT_GRADING, ge=1.0)
    depth: float = Field(DEFAULT_DEPTH, gt=0.0, lt=1.0)


class InitialConfig(_Strict):
    """Initial state.

    ``uniform``, ``atom0``, ``gamma``, ``pi``: as named.  ``mix``:
    ``atom_weight`` at 0 plus the rest spread uniformly.  ``cell``: all mass in
    the cell containing ``trait``.  ``table``: explicit ``atom0`` and
    ``values``.  For the dual flow: ``constant`` (``value``), ``bump``
    (indicator of ``[trait_lo, trait_hi]``), ``random`` (uniform in
    ``[0.2, 2]`` per cell, from ``seed``), ``table``.
    """

    kind: Literal["uniform", "atom0", "gamma", "pi", "mix", "cell", "table",
                  "constant", "bump", "random"] = "uniform"
    atom_weight: float = Field(0.0, ge=0.0, le=1.0)
    trait: float = 0.5
    atom0: float = 0.0
    values: Optional[List[float]] = None
    value: float = 1.0
    trait_lo: float = 0.25
    trait_hi: float = 0.75
    seed: int = 0


class RunSection(_Strict):
    equation: Literal["nonlinear", "linear", "conservative", "dual"] = "nonlinear"
    t_final: float = Field(10.0, gt=0.0)
    dt: float = Field(0.01, gt=0.0)
    sample_stride: int = Field(10, ge=1)
    scheme: Literal["auto", "etd2", "etd4"] = "auto"
    regime: Optional[Literal["fast", "critical", "subcritical"]] = None
    initial: InitialConfig = Field(default_factory=InitialConfig)
    snapshot_times: List[float] = Field(default_factory=list)


class DiagnosticConfig(_Strict):
    """One diagnostic hook.

    kinds: ``distance`` (``norm``, ``target``, ``p``), ``atom_mass`` (``eps``
    list, Cesaro mean if ``cesaro``), ``mean_fitness``, ``lambda_hat``,
    ``floor``, ``entropy`` (``phi``, ``p``), ``kl``.
    """

    kind: Literal["distance", "atom_mass", "mean_fitness", "lambda_hat", "floor", "entropy", "kl"]
    name: Optional[str] = None
    norm: Literal["tv", "tv_weighted", "lp_gamma_h", "linf_ratio"] = "tv"
    target: Literal["gamma", "pi", "limit"] = "gamma"
    p: float = Field(1.0, ge=1.0)
    eps: List[float] = Field(default_factory=list)
    cesaro: bool = True
    phi: Literal["abs_p", "xlogx"] = "abs_p"


class FitConfig(_Strict):
    series: str
    kind: Literal["exponential", "polynomial"] = "exponential"
    window: Optional[Tuple[float, float]] = None


class OutputConfig(_Strict):
    directory: str = "hoclab_out"
    snapshots: bool = False


class RunConfig(_Strict):
    model: ModelConfig = Field(default_factory=ModelConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    run: RunSection = Field(default_factory=RunSection)
    diagnostics: List[DiagnosticConfig] = Field(default_factory=list)
    fits: List[FitConfig] = Field(default_factory=list)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def _unique_names(self):
        from .scenario import diagnostic_columns
        cols = diagnostic_columns(self)
        dup = {c for c in cols if cols.count(c) > 1}
        if dup:
            raise ValueError(f"duplicate diagnostic columns {sorted(dup)}")
        return self


def _format_error(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def parse_config(document: Union[str, bytes, dict]) -> RunConfig:
    """Validate a JSON document (text or already-decoded dict) into a :class:`RunConfig`."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"<document>: invalid JSON ({exc})") from exc
    if not isinstance(document, dict):
        raise ConfigurationError("<root>: config must be a JSON object")
    try:
        return RunConfig.model_validate(document)
    except ValidationError as exc:
        raise ConfigurationError(_format_error(exc)) from exc
