"""Univariate and tensor-product B-spline bases on open uniform knot vectors.

All indices in this module are 0-based.  A univariate basis with ``m``
functions of degree ``p`` has ``m - p`` elements of width ``h = 1/(m - p)``;
function ``k`` is supported on elements ``k - p, ..., k`` (clipped).

Functions ``p <= k < m - p`` are *cardinal*: pure translates of one reference
spline.  Their centers form the lattice ``(k - (p - 1)/2) * h``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


def find_span(knots, p, x):
    """Knot span index ``mu`` with ``knots[mu] <= x < knots[mu+1]``.

    Right-continuous; the right end of the parameter range is assigned to the
    last nonempty span so that the last basis function equals 1 there.
    """
    knots = np.asarray(knots, dtype=float)
    x = np.asarray(x, dtype=float)
    n = len(knots) - p - 1
    mu = np.searchsorted(knots, x, side="right") - 1
    return np.clip(mu, p, n - 1)


def basis_funs(knots, p, x, mu=None, deriv=0):
    """Nonzero basis values (and optionally first derivatives) at ``x``.

    Returns ``(mu, values)`` or ``(mu, values, derivs)`` where ``values`` has
    shape ``x.shape + (p + 1,)`` and entry ``r`` belongs to function
    ``mu - p + r``.
    """
    knots = np.asarray(knots, dtype=float)
    x = np.asarray(x, dtype=float)
    if mu is None:
        mu = find_span(knots, p, x)
    mu = np.asarray(mu)
    left = np.empty(x.shape + (p + 1,))
    right = np.empty(x.shape + (p + 1,))
    # ndu[j] holds the degree-j triangle row; kept for the derivative
    ndu = [np.ones(x.shape + (1,))]
    for j in range(1, p + 1):
        left[..., j] = x - knots[mu + 1 - j]
        right[..., j] = knots[mu + j] - x
        prev = ndu[-1]
        cur = np.zeros(x.shape + (j + 1,))
        saved = np.zeros(x.shape)
        for r in range(j):
            denom = right[..., r + 1] + left[..., j - r]
            temp = prev[..., r] / denom
            cur[..., r] = saved + right[..., r + 1] * temp
            saved = left[..., j - r] * temp
        cur[..., j] = saved
        ndu.append(cur)
    values = ndu[p]
    if deriv == 0:
        return mu, values
    if p == 0:
        return mu, values, np.zeros_like(values)
    lower = ndu[p - 1]
    derivs = np.zeros_like(values)
    for r in range(p + 1):
        acc = np.zeros(x.shape)
        if r >= 1:
            i = mu - p + r
            d = knots[i + p] - knots[i]
            acc = acc + lower[..., r - 1] / np.where(d > 0, d, 1.0) * (d > 0)
        if r <= p - 1:
            i = mu - p + r + 1
            d = knots[i + p] - knots[i]
            acc = acc - lower[..., r] / np.where(d > 0, d, 1.0) * (d > 0)
        derivs[..., r] = p * acc
    return mu, values, derivs


def collocation_matrix(knots, p, x, deriv=0):
    """Dense matrix ``A[a, k] = b_k^{(deriv)}(x[a])`` for all basis functions."""
    knots = np.asarray(knots, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = len(knots) - p - 1
    out = basis_funs(knots, p, x, deriv=deriv)
    mu, vals = out[0], out[1 + deriv]
    A = np.zeros((len(x), n))
    rows = np.repeat(np.arange(len(x)), p + 1)
    cols = (mu[:, None] - p + np.arange(p + 1)[None, :]).ravel()
    A[rows, cols] = vals.ravel()
    return A


@dataclass(frozen=True)
class KnotVector:
    """Open uniform knot vector of degree ``p`` with ``m`` basis functions."""

    p: int
    m: int
    knots: np.ndarray = field(repr=False, compare=False)

    @property
    def h(self):
        return 1.0 / (self.m - self.p)

    @property
    def n_elements(self):
        return self.m - self.p


def make_open_uniform(p, m):
    """Build the open uniform knot vector with ``m`` functions of degree ``p``.

    Knots are stored as exact ratios ``j / (m - p)`` rounded once to double.
    """
    p, m = int(p), int(m)
    if p < 1:
        raise ValueError(f"degree must be >= 1, got {p}")
    if m <= 2 * p:
        raise ValueError(f"need m > 2p for cardinal functions to exist (p={p}, m={m})")
    ne = m - p
    interior = np.arange(1, ne) / ne
    knots = np.concatenate([np.zeros(p + 1), interior, np.ones(p + 1)])
    knots.setflags(write=False)
    return KnotVector(p=p, m=m, knots=knots)


def eval_basis(kv, k, x, deriv=0):
    """Value (``deriv=0``) or first derivative of basis function ``k`` at ``x``."""
    if not 0 <= k < kv.m:
        raise IndexError(f"basis index {k} out of range for m={kv.m}")
    x = np.asarray(x, dtype=float)
    out = basis_funs(kv.knots, kv.p, x.ravel(), deriv=deriv)
    mu, vals = out[0], out[1 + deriv]
    r = k - (mu - kv.p)
    hit = (r >= 0) & (r <= kv.p)
    res = np.where(hit, np.take_along_axis(vals, np.clip(r, 0, kv.p)[:, None], 1)[:, 0], 0.0)
    return res.reshape(x.shape) if x.ndim else float(res[0])


def cardinal_centers(kv):
    """Centers of the cardinal functions ``k = p, ..., m - p - 1``."""
    k = np.arange(kv.p, kv.m - kv.p)
    return (k - (kv.p - 1) / 2) * kv.h


def gauss_legendre(n):
    """``n``-point Gauss-Legendre nodes and weights on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1) / 2, w / 2


class TensorBasis:
    """Tensor-product basis with the same degree and size in every direction.

    Global indices are colexicographic: ``i = i1 + i2 * m`` (0-based).
    """

    def __init__(self, p, m, dim=2):
        if dim != 2:
            raise NotImplementedError("only two-dimensional bases are implemented")
        self.kv = make_open_uniform(p, m)
        self.p = self.kv.p
        self.m = self.kv.m
        self.dim = dim

    def __repr__(self):
        return f"TensorBasis(p={self.p}, m={self.m})"

    @property
    def h(self):
        return self.kv.h

    @property
    def n_elements(self):
        return self.kv.n_elements

    @property
    def N(self):
        return self.m ** self.dim

    @property
    def n_cardinal(self):
        return (self.m - 2 * self.p) ** self.dim

    def colex(self, multi):
        return colex(multi, self.m)

    def multi_index(self, i):
        return colex_inverse(i, self.m, self.dim)

    def is_cardinal(self, i):
        multi = self.multi_index(i)
        return all(self.p <= c < self.m - self.p for c in multi)

    def centers(self):
        return cardinal_centers(self.kv)

    def element_tables(self, nq=None):
        """Per-element basis values at Gauss points, cached per ``nq``.

        Returns ``(nodes, weights, V, D)``: ``V[e, s, g]`` and ``D[e, s, g]``
        are value and derivative of function ``e + s`` at point
        ``(e + nodes[g]) * h``.
        """
        return _element_tables(self.p, self.m, self.p + 1 if nq is None else int(nq))


@lru_cache(maxsize=32)
def _element_tables(p, m, nq):
    kv = make_open_uniform(p, m)
    nodes, weights = gauss_legendre(nq)
    ne = kv.n_elements
    e = np.arange(ne)
    x = (e[:, None] + nodes[None, :]) * kv.h
    mu = np.broadcast_to((e + p)[:, None], x.shape)
    _, vals, ders = basis_funs(kv.knots, p, x, mu=mu, deriv=1)
    # (e, g, s) -> (e, s, g)
    V = np.ascontiguousarray(vals.transpose(0, 2, 1))
    D = np.ascontiguousarray(ders.transpose(0, 2, 1))
    for arr in (V, D, nodes, weights):
        arr.setflags(write=False)
    return nodes, weights, V, D


def colex(multi, m):
    """Colexicographic global index of a 0-based multi-index."""
    multi = tuple(int(c) for c in multi)
    if any(c < 0 or c >= m for c in multi):
        raise IndexError(f"multi-index {multi} out of range for m={m}")
    i = 0
    for c in reversed(multi):
        i = i * m + c
    return i


def colex_inverse(i, m, dim=2):
    i = int(i)
    if not 0 <= i < m ** dim:
        raise IndexError(f"global index {i} out of range for m={m}, dim={dim}")
    multi = []
    for _ in range(dim):
        multi.append(i % m)
        i //= m
    return tuple(multi)


def is_cardinal(basis, i):
    return basis.is_cardinal(i)
