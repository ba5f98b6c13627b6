"""Bessel functions J0, J1, Y0, Y1 and Hankel functions of orders 0 and 1.

Real positive arguments only.  For ``x <= CROSSOVER`` the ascending power
series are summed (in extended precision when the platform has it); above
it the Hankel asymptotic expansion is summed until its terms stop
decreasing.  Both branches stay below 1e-10 absolute error at the
crossover, and the asymptotic branch only improves for larger ``x``.
"""
from __future__ import annotations

import numpy as np

CROSSOVER = 12.0

_EULER_GAMMA = 0.57721566490153286060651209008240243
_N_SERIES = 90
_N_ASYMPTOTIC = 40
_LD = np.longdouble


def _as_array(x):
    x = np.asarray(x, dtype=float)
    return x, x.ndim == 0


def _series(x, order):
    """Ascending series of ``(J, Y)`` of order 0 or 1."""
    z = x.astype(_LD)
    q = -(z * z) / 4
    term = np.ones_like(z) if order == 0 else z / 2
    j = np.zeros_like(z)
    s = np.zeros_like(z)
    # psi(k + 1) + psi(k + 1 + order), with psi(k + 1) = -gamma + H_k
    harm, harm_n = _LD(0), _LD(0) if order == 0 else _LD(1)
    for k in range(_N_SERIES):
        if k:
            term = term * q / (k * (k + order))
            harm += _LD(1) / k
            harm_n += _LD(1) / (k + order)
        j += term
        s += term * (harm + harm_n - 2 * _LD(_EULER_GAMMA))
    log = np.log(z / 2)
    pi = _LD(np.pi)
    y = 2 / pi * log * j - s / pi
    if order == 1:
        y -= 2 / (pi * z)
    return j.astype(float), y.astype(float)


def _asymptotic(x, order):
    """Hankel asymptotic expansion of ``(J, Y)`` of order 0 or 1."""
    mu = 4.0 * order * order
    p = np.ones_like(x)
    qs = np.zeros_like(x)
    term = np.ones_like(x)
    last = np.full_like(x, np.inf)
    active = np.ones(x.shape, dtype=bool)
    for k in range(1, _N_ASYMPTOTIC):
        term = term * (mu - (2 * k - 1) ** 2) / (k * 8 * x)
        size = np.abs(term)
        # stop once the series starts to diverge or drops below roundoff
        active &= (size < last) & (last > 1e-17)
        last = np.where(active, size, last)
        t = np.where(active, term, 0.0)
        # i^k cycles 1, i, -1, -i: even k feed P, odd k feed Q
        if k % 4 == 1:
            qs += t
        elif k % 4 == 2:
            p -= t
        elif k % 4 == 3:
            qs -= t
        else:
            p += t
    w = x - (2 * order + 1) * np.pi / 4
    amp = np.sqrt(2 / (np.pi * x))
    return amp * (p * np.cos(w) - qs * np.sin(w)), amp * (p * np.sin(w) + qs * np.cos(w))


def _bessel(x, order, which, allow_zero):
    x, scalar = _as_array(x)
    if allow_zero:
        if np.any(x < 0) or np.any(np.isnan(x)):
            raise ValueError("Bessel J requires x >= 0")
    elif np.any(~(x > 0)):
        raise ValueError("Bessel Y and Hankel functions require x > 0")
    out = np.empty(x.shape, dtype=complex if which == "jy" else float)
    small = x <= CROSSOVER
    parts = []
    if np.any(small):
        xs = x[small]
        pos = xs > 0
        j, y = np.zeros_like(xs), np.full_like(xs, -np.inf)
        if np.any(pos):
            j[pos], y[pos] = _series(xs[pos], order)
        j[~pos] = 1.0 if order == 0 else 0.0
        parts.append((small, j, y))
    if np.any(~small):
        j, y = _asymptotic(x[~small], order)
        parts.append((~small, j, y))
    for mask, j, y in parts:
        out[mask] = j if which == "j" else y if which == "y" else j + 1j * y
    return out[()] if scalar else out


def bessel_j0(x):
    """Bessel function of the first kind, order 0 (``x >= 0``)."""
    return _bessel(x, 0, "j", True)


def bessel_j1(x):
    """Bessel function of the first kind, order 1 (``x >= 0``)."""
    return _bessel(x, 1, "j", True)


def bessel_y0(x):
    """Bessel function of the second kind, order 0 (``x > 0``)."""
    return _bessel(x, 0, "y", False)


def bessel_y1(x):
    """Bessel function of the second kind, order 1 (``x > 0``)."""
    return _bessel(x, 1, "y", False)


def hankel1(order, x):
    """Hankel function of the first kind ``J + iY`` of order 0 or 1."""
    if order not in (0, 1):
        raise ValueError(f"only orders 0 and 1 are implemented, got {order}")
    return _bessel(x, order, "jy", False)


def hankel2(order, x):
    """Hankel function of the second kind ``J - iY`` of order 0 or 1."""
    return np.conj(hankel1(order, x))
