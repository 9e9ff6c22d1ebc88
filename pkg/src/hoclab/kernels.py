"""Backend selection and exponential-integrator coefficients.

The compiled extension ``hoclab._kernels`` is used when it imports; otherwise
the numpy fallback ``hoclab._kernels_py`` is used.  Setting the environment
variable ``HOCLAB_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("HOCLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def use_backend(name: str) -> None:
    """Switch backend at runtime (``"cython"`` or ``"python"``); used by the benchmark."""
    global _impl, BACKEND
    if name == "python":
        _impl, BACKEND = _kernels_py, "python"
    elif name == "cython":
        from . import _kernels as compiled
        _impl, BACKEND = compiled, "cython"
    else:
        raise ValueError(f"unknown backend {name!r}")


def phi_functions(x: np.ndarray):
    """``phi_1, phi_2, phi_3`` evaluated at ``-x`` for ``x >= 0``.

    ``phi_k(z) = sum_j z**j / (j + k)!``.  A 25-term Taylor sum is used below
    ``x = 0.5`` where the closed forms cancel catastrophically.
    """
    x = np.asarray(x, dtype=float)
    small = x < 0.5
    xs = np.where(small, x, 0.0)
    series = np.zeros((3,) + x.shape)
    term_pow = np.ones_like(xs)
    for j in range(25):
        for k in (1, 2, 3):
            series[k - 1] += term_pow / math.factorial(j + k)
        term_pow = term_pow * (-xs)
    xl = np.where(small, 1.0, x)
    p1 = -np.expm1(-xl) / xl
    p2 = (1.0 - p1) / xl
    p3 = (0.5 - p2) / xl
    return (np.where(small, series[0], p1), np.where(small, series[1], p2),
            np.where(small, series[2], p3))


# largest rate * dt for which every ETD4 weight and stage stays nonnegative
ETD4_POSITIVE_LIMIT = 1.0


@dataclass
class RankOneStepper:
    """Fixed-step exponential integrator for ``y' = -r y + s (c . y)``.

    ``scheme``: ``"etd2"`` exact decay with a Heun-corrected source (second
    order, positive for every dt); ``"etd4"`` Cox-Matthews ETD Runge-Kutta 4;
    ``"auto"`` picks ``etd4`` when ``max(r) * dt <= 1`` and ``etd2`` otherwise.
    """

    r: np.ndarray
    s: np.ndarray
    c: np.ndarray
    dt: float
    scheme: str = "auto"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        self.r = np.ascontiguousarray(self.r, dtype=float)
        self.s = np.ascontiguousarray(self.s, dtype=float)
        self.c = np.ascontiguousarray(self.c, dtype=float)
        if self.scheme == "auto":
            self.scheme = "etd4" if float(self.r.max()) * self.dt <= ETD4_POSITIVE_LIMIT else "etd2"
        x = self.r * self.dt
        self.E = np.exp(-x)
        if self.scheme == "etd2":
            self.K = self.dt * phi_functions(x)[0]
        elif self.scheme == "etd4":
            self.E2 = np.exp(-0.5 * x)
            self.K2 = 0.5 * self.dt * phi_functions(0.5 * x)[0]
            p1, p2, p3 = phi_functions(x)
            self.f1 = self.dt * (p1 - 3.0 * p2 + 4.0 * p3)
            self.f2 = self.dt * (p2 - 2.0 * p3)
            self.f3 = self.dt * (4.0 * p3 - p2)
        else:
            raise ValueError(f"unknown scheme {self.scheme!r}")

    def advance(self, y: np.ndarray, nsteps: int, renorm: bool = False) -> float:
        """Advance ``y`` in place by ``nsteps`` steps; returns accumulated log-normalizers."""
        if nsteps <= 0:
            return 0.0
        if self.scheme == "etd2":
            return _impl.etd2_advance(y, self.E, self.K, self.s, self.c, int(nsteps), bool(renorm))
        return _impl.etd4_advance(y, self.E, self.E2, self.K2, self.f1, self.f2, self.f3,
                                  self.s, self.c, int(nsteps), bool(renorm))


def bregman_sum(f, phi_f, dphi_f, q) -> float:
    arrs = [np.ascontiguousarray(v, dtype=float) for v in (f, phi_f, dphi_f, q)]
    return float(_impl.bregman_sum(*arrs))
