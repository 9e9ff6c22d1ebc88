"""Time integration of the four flows.

Every flow is a rank-one system on the vector ``[slot 0, cell 1, ..., cell n]``
and is advanced by :class:`hoclab.kernels.RankOneStepper`:

* linear:        ``u' = -a u + Q <u, 1>``
* nonlinear:     the linear flow renormalized to unit mass after every step
* conservative:  ``mu' = -ba mu + <mu, ba> bQ``
* dual:          ``phi' = ba (<bQ, phi> - phi)``

Measures are stored as densities, so the pairing vector ``c`` carries the
cell weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .core import GridFn, Measure, Model
from .errors import ConfigurationError, NumericalError
from .kernels import RankOneStepper
from .spectral import ConservativeModel

State = Union[Measure, GridFn]
Hook = Callable[[float, State], Mapping[str, float]]

DEFAULT_DT = 0.01
DEFAULT_STRIDE = 10
MASS_OVERFLOW = 1e290


@dataclass
class RunLog:
    """Sampled output of one run.

    ``growth`` is the nonlinear-run estimate of ``d/dt log <u_t, 1>`` over
    each sampling interval (empty for the other flows).
    """

    times: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    log_mass: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    snapshots: dict = field(default_factory=dict)
    growth: list = field(default_factory=list)
    final: Optional[State] = None

    def record(self, t: float, mass: float, log_mass: float, values: Mapping[str, float]) -> None:
        if self.times and not t > self.times[-1]:
            raise NumericalError(f"sample times must increase ({t} after {self.times[-1]})")
        self.times.append(float(t))
        self.mass.append(float(mass))
        self.log_mass.append(float(log_mass))
        for name, value in values.items():
            series = self.diagnostics.setdefault(name, [math.nan] * (len(self.times) - 1))
            series.append(float(value))
        for series in self.diagnostics.values():
            if len(series) < len(self.times):
                series.append(math.nan)

    def series(self, name: str) -> np.ndarray:
        if name == "mass":
            return np.asarray(self.mass)
        if name == "log_mass":
            return np.asarray(self.log_mass)
        if name == "lambda_hat":
            return np.asarray(self.growth)
        if name not in self.diagnostics:
            raise KeyError(f"run log has no series {name!r}")
        return np.asarray(self.diagnostics[name])

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times)


def _step_count(T: float, dt: float) -> int:
    if not T >= 0:
        raise ConfigurationError(f"T must be >= 0, got {T}")
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(T, 1.0):
        raise ConfigurationError(f"T = {T} is not a multiple of dt = {dt}")
    return n


def _drive(stepper: RankOneStepper, y: np.ndarray, T: float, dt: float, *, renorm: bool,
           to_state: Callable[[np.ndarray], State], mass_of: Callable[[np.ndarray], float],
           hooks: Iterable[Hook], stride: int, snapshot_times: Sequence[float],
           check_overflow: bool = False) -> RunLog:
    nsteps = _step_count(T, dt)
    if int(stride) != stride or stride < 1:
        raise ConfigurationError(f"sample_stride must be an integer >= 1, got {stride}")
    hooks = list(hooks)
    snap_steps = {int(round(ts / dt)): ts for ts in snapshot_times if 0 <= ts <= T}
    sample_steps = set(range(0, nsteps + 1, stride)) | {nsteps}
    events = sorted(sample_steps | set(snap_steps))
    log = RunLog()
    log_acc = 0.0 if renorm else None
    last_sample = (0, 0.0)

    def sample(k: int) -> None:
        nonlocal last_sample
        t = k * dt
        state = to_state(y)
        values = {}
        for hook in hooks:
            values.update(hook(t, state))
        if renorm:
            k0, acc0 = last_sample
            log.growth.append((log_acc - acc0) / ((k - k0) * dt) if k > k0 else math.nan)
            last_sample = (k, log_acc)
            log.record(t, 1.0, log_acc, values)
        else:
            m = mass_of(y)
            log.record(t, m, math.log(m) if m > 0 else math.nan, values)

    done = 0
    for k in events:
        if k > done:
            inc = stepper.advance(y, k - done, renorm)
            if renorm:
                log_acc += inc
            done = k
            if not np.all(np.isfinite(y)):
                raise NumericalError(f"non-finite state at t = {k * dt:g}")
            if check_overflow and abs(mass_of(y)) > MASS_OVERFLOW:
                raise NumericalError(f"mass overflow at t = {k * dt:g}; use the nonlinear flow or a shorter horizon")
        if k in snap_steps:
            log.snapshots[snap_steps[k]] = to_state(y.copy())
        if k in sample_steps:
            sample(k)
    log.final = to_state(y.copy())
    return log


def _linear_stepper(model: Model, dt: float, scheme: str) -> RankOneStepper:
    w = model.grid.weights
    r = np.concatenate([[model.a0], model.a])
    s = np.concatenate([[0.0], model.Q])
    c = np.concatenate([[1.0], w])
    return RankOneStepper(r, s, c, dt, scheme)


def _measure_mass(weights: np.ndarray) -> Callable[[np.ndarray], float]:
    return lambda y: float(y[0] + np.dot(weights, y[1:]))


def _check_measure(m: Measure, n: int, what: str) -> None:
    if m.dens.shape != (n,):
        raise ConfigurationError(f"{what} has {m.dens.size} cells, grid has {n}")
    if m.atom0 < 0 or np.any(m.dens < 0) or not np.all(np.isfinite(m.dens)):
        raise ConfigurationError(f"{what} must be a finite nonnegative measure")


def etd_step_linear(model: Model, u: Measure, dt: float, scheme: str = "auto") -> Measure:
    """One exponential step of the linear flow (atom at 0 is left unchanged)."""
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    y = u.to_vector()
    _linear_stepper(model, dt, scheme).advance(y, 1)
    return Measure.from_vector(y)


def evolve_linear(model: Model, u0: Measure, T: float, dt: float = DEFAULT_DT,
                  hooks: Iterable[Hook] = (), sample_stride: int = DEFAULT_STRIDE,
                  snapshot_times: Sequence[float] = (), scheme: str = "auto") -> RunLog:
    """Linear non-conservative flow; raises :class:`NumericalError` on mass overflow."""
    _check_measure(u0, model.n, "u0")
    return _drive(_linear_stepper(model, dt, scheme), u0.to_vector(), T, dt, renorm=False,
                  to_state=Measure.from_vector, mass_of=_measure_mass(model.grid.weights),
                  hooks=hooks, stride=sample_stride, snapshot_times=snapshot_times,
                  check_overflow=True)


def evolve_nonlinear(model: Model, v0: Measure, T: float, dt: float = DEFAULT_DT,
                     hooks: Iterable[Hook] = (), sample_stride: int = DEFAULT_STRIDE,
                     snapshot_times: Sequence[float] = (), scheme: str = "auto") -> RunLog:
    """Normalized selection-mutation flow: the linear flow renormalized to unit mass.

    ``log_mass`` holds the accumulated log of the linear-flow mass and
    ``growth`` its slope over each sampling interval.
    """
    _check_measure(v0, model.n, "v0")
    total = v0.total_mass(model.grid)
    if abs(total - 1.0) > 1e-10:
        raise ConfigurationError(f"v0 must be a probability measure, total mass is {total!r}")
    return _drive(_linear_stepper(model, dt, scheme), v0.to_vector(), T, dt, renorm=True,
                  to_state=Measure.from_vector, mass_of=_measure_mass(model.grid.weights),
                  hooks=hooks, stride=sample_stride, snapshot_times=snapshot_times)


def evolve_conservative_measure(cmodel: ConservativeModel, mu0: Measure, T: float,
                                dt: float = DEFAULT_DT, hooks: Iterable[Hook] = (),
                                sample_stride: int = DEFAULT_STRIDE,
                                snapshot_times: Sequence[float] = (),
                                scheme: str = "auto") -> RunLog:
    """Conservative jump flow acting on measures; mass is conserved, not enforced."""
    _check_measure(mu0, cmodel.n, "mu0")
    w = cmodel.grid.weights
    r = np.concatenate([[cmodel.ba0], cmodel.ba])
    s = np.concatenate([[0.0], cmodel.bQ])
    c = np.concatenate([[cmodel.ba0], w * cmodel.ba])
    return _drive(RankOneStepper(r, s, c, dt, scheme), mu0.to_vector(), T, dt, renorm=False,
                  to_state=Measure.from_vector, mass_of=_measure_mass(w), hooks=hooks,
                  stride=sample_stride, snapshot_times=snapshot_times)


def evolve_conservative_dual(cmodel: ConservativeModel, f0: GridFn, T: float,
                             dt: float = DEFAULT_DT, hooks: Iterable[Hook] = (),
                             sample_stride: int = DEFAULT_STRIDE,
                             snapshot_times: Sequence[float] = (),
                             scheme: str = "auto") -> RunLog:
    """Dual (test-function) flow; ``mass`` records ``<pi, phi_t>``, which is conserved."""
    if f0.values.shape != (cmodel.n,):
        raise ConfigurationError(f"f0 has {f0.values.size} cells, grid has {cmodel.n}")
    w = cmodel.grid.weights
    r = np.concatenate([[cmodel.ba0], cmodel.ba])
    c = np.concatenate([[0.0], w * cmodel.bQ])
    y = f0.to_vector()
    if not np.all(np.isfinite(y)):
        raise ConfigurationError("f0 must be finite")
    wpi = w * cmodel.pi
    return _drive(RankOneStepper(r, r, c, dt, scheme), y, T, dt, renorm=False,
                  to_state=GridFn.from_vector, mass_of=lambda v: float(np.dot(wpi, v[1:])),
                  hooks=hooks, stride=sample_stride, snapshot_times=snapshot_times)
