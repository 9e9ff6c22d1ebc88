"""Pure numpy implementations of the hot loops (fallback for ``_kernels``).

All time-stepping kernels integrate a rank-one exponential system

    y' = -r * y + s * (c . y)

in place on ``y``.  Slot 0 is the trait-0 slot, slots 1.. the cells; the
per-slot coefficient arrays are precomputed by :mod:`hoclab.kernels`.
With ``renorm`` the state is divided by ``c . y`` after every step and the
accumulated log of those factors is returned.
"""

import math

import numpy as np


def etd2_advance(y, E, K, s, c, nsteps, renorm):
    logacc = 0.0
    for _ in range(nsteps):
        S0 = c @ y
        ystar = E * y + K * s * S0
        S1 = c @ ystar
        y[:] = E * y + K * s * (0.5 * (S0 + S1))
        if renorm:
            m = c @ y
            y /= m
            logacc += math.log(m)
    return logacc


def etd4_advance(y, E, E2, K2, f1, f2, f3, s, c, nsteps, renorm):
    logacc = 0.0
    for _ in range(nsteps):
        S0 = c @ y
        Ey = E2 * y
        ya = Ey + K2 * s * S0
        Sa = c @ ya
        yb = Ey + K2 * s * Sa
        Sb = c @ yb
        yc = E2 * ya + K2 * s * (2.0 * Sb - S0)
        Sc = c @ yc
        y[:] = E * y + s * (f1 * S0 + 2.0 * f2 * (Sa + Sb) + f3 * Sc)
        if renorm:
            m = c @ y
            y /= m
            logacc += math.log(m)
    return logacc


def bregman_sum(f, phi_f, dphi_f, q, block=1024):
    """``sum_ij q_i q_j [phi(f_i) - phi(f_j) - phi'(f_j)(f_i - f_j)]``; rows in blocks."""
    total = 0.0
    n = f.shape[0]
    for start in range(0, n, block):
        sl = slice(start, start + block)
        gap = (phi_f[:, None] - phi_f[None, sl]) - dphi_f[None, sl] * (f[:, None] - f[None, sl])
        total += float(q @ gap @ q[sl])
    return total
