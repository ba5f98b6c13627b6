"""Surrogate matrix assembly for tensor-product B-spline Galerkin matrices.

On a patch, the rows of a matrix belonging to interior basis functions are
translates of one stencil whose entries vary smoothly with the position of
the row.  The surrogate method assembles only the rows of a coarse lattice of
sample points exactly, interpolates every stencil entry with a spline of
degree ``q`` over that lattice, and evaluates the interpolant at all interior
rows.  Rows near the patch boundary (a frame of width ``2p``) are assembled
exactly.

The interpolated part uses only the upper half of the stencil; the lower half
is filled by symmetry so that the surrogate is exactly symmetric.  The
stiffness diagonal is set to the negative sum of the off-diagonal entries,
which keeps constants in the kernel (kernel preservation).  The optional
volume-preserving mass adds the exact integrals of the basis functions to a
zero-row-sum surrogate so that row sums match exactly.

Indices are 0-based throughout.  The interior lattice in each direction is
``2p, ..., m - 2p - 1`` (``L = m - 4p`` candidates).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .assembly import FORMS, RowSelector, assemble_band, band_to_csr, glue, integrate_basis
from .splines import collocation_matrix

SAMPLING_STRATEGIES = ("fixed", "helmholtz", "pml", "mesh_dependent")

# guards floor() against values like 2.9999999999999996
_FLOOR_EPS = 1e-12


def sample_positions(L, M):
    """Indices in ``0..L-1`` of ``M`` (nearly) equispaced sample points.

    The first and last candidate are always included.  The stride is
    ``(L - 1) / ceil((L - 1) / M)`` and position ``k`` rounds ``k * stride``
    half up.
    """
    L, M = int(L), int(M)
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    if L < 1:
        raise ValueError(f"no interior lattice (L={L})")
    if L == 1:
        return np.array([0])
    n = math.ceil((L - 1) / M)
    stride = (L - 1) / n
    idx = np.floor(np.arange(n + 1) * stride + 0.5).astype(np.int64)
    idx[-1] = L - 1
    return np.unique(idx)


@dataclass(frozen=True)
class SampleGrid:
    """Sample points of one direction of the interior lattice.

    Attributes:
        m: Number of basis functions per direction.
        p: Spline degree.
        M: Requested number of intervals between sample points.
        local: Sample positions in ``0..L-1``.
        indices: Basis indices of the sample rows (``local + 2p``).
        H: Largest gap between consecutive sample points in reference units.
    """

    m: int
    p: int
    M: int
    local: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    H: float

    @property
    def L(self):
        return self.m - 4 * self.p

    @property
    def n_samples(self):
        return len(self.local)

    @property
    def positions(self):
        """Reference-domain centers of the sampled basis functions."""
        return (self.indices - (self.p - 1) / 2) / (self.m - self.p)


def select_sample_points(m, p, M):
    """Sample grid with about ``M`` intervals over the interior lattice.

    Examples:
        >>> select_sample_points(19, 2, 5).local
        array([ 0,  5, 10])
    """
    L = m - 4 * p
    local = sample_positions(L, M)
    gaps = np.diff(local)
    H = (gaps.max() if len(gaps) else 0) / (m - p)
    return SampleGrid(m=m, p=p, M=int(M), local=local, indices=local + 2 * p, H=float(H))


def mesh_dependent_M(m, p, q, strategy="helmholtz", **params):
    """Number of sample intervals as a function of the mesh.

    Strategies:
        ``helmholtz``: ``max(1, floor(c * m**(1 - (p+1)/(q+1))))`` with ``c=0.5``.
        ``pml``: ``max(2, floor(c * h**((p - q + 1/2)/(q+1))))`` with ``c=2``.
        ``mesh_dependent``: ``max(1, floor(C * h**(eps - 1 + (p+a)/(q+b))))`` with
            defaults ``C=1, eps=0, a=0, b=0``.  Then ``H = M h`` and
            ``H**(q+b) <= C**(q+b) * h**(p+a)`` up to the ``eps`` margin.
    """
    h = 1.0 / (m - p)
    if strategy in ("helmholtz", "pml") and q <= p:
        raise ValueError(f"mesh-dependent sampling needs q > p (got p={p}, q={q})")
    if strategy == "helmholtz":
        c = params.get("c", 0.5)
        return max(1, math.floor(c * m ** (1 - (p + 1) / (q + 1)) + _FLOOR_EPS))
    if strategy == "pml":
        c = params.get("c", 2.0)
        return max(2, math.floor(c * h ** ((p - q + 0.5) / (q + 1)) + _FLOOR_EPS))
    if strategy == "mesh_dependent":
        C, eps = params.get("C", 1.0), params.get("eps", 0.0)
        a, b = params.get("a", 0), params.get("b", 0)
        if q + b <= p + a:
            raise ValueError("mesh-dependent sampling needs q + b > p + a")
        return max(1, math.floor(C * h ** (eps - 1 + (p + a) / (q + b)) + _FLOOR_EPS))
    raise ValueError(f"unknown sampling strategy {strategy!r}")


@dataclass
class SurrogateConfig:
    """Parameters of the surrogate assembly.

    Attributes:
        q: Interpolation degree (``q >= 1``).
        M: Sample intervals for the ``fixed`` strategy.
        strategy: One of ``fixed``, ``helmholtz``, ``pml``, ``mesh_dependent``.
        params: Extra parameters for the strategy.
        kernel_preserving: Set the stiffness diagonal from the row sums.
        volume_preserving: Use the volume-preserving mass.
    """

    q: int = 3
    M: int = 8
    strategy: str = "fixed"
    params: dict = field(default_factory=dict)
    kernel_preserving: bool = True
    volume_preserving: bool = False

    def __post_init__(self):
        if self.q < 1:
            raise ValueError(f"interpolation degree must be >= 1, got {self.q}")
        if self.strategy not in SAMPLING_STRATEGIES:
            raise ValueError(f"unknown sampling strategy {self.strategy!r}")
        if self.strategy == "fixed" and self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")

    def resolve_M(self, m, p):
        if self.strategy == "fixed":
            return self.M
        return mesh_dependent_M(m, p, self.q, self.strategy, **self.params)


def upper_offsets(p):
    """Offsets ``(d1, d2)`` with positive colex order ``d1 + d2 * (2p+1)``."""
    return [(d1, d2) for d2 in range(0, p + 1) for d1 in range(-p, p + 1)
            if d2 > 0 or d1 > 0]


def interpolation_knots(sites, q):
    """Knot vector for degree-``q`` interpolation at strictly increasing ``sites``.

    End knots have multiplicity ``q + 1``.  Interior knots are placed at the
    sites (odd ``q``) or at midpoints of consecutive sites (even ``q``),
    skipping the ones nearest the ends (not-a-knot).
    """
    sites = np.asarray(sites, dtype=float)
    n = len(sites)
    if n < q + 1:
        raise ValueError(f"degree {q} interpolation needs at least {q + 1} sites, got {n}")
    if q % 2:
        k = (q + 1) // 2
        inner = sites[k:n - k]
    else:
        k = q // 2
        mid = (sites[:-1] + sites[1:]) / 2
        inner = mid[k:n - 1 - k]
    return np.concatenate([np.full(q + 1, sites[0]), inner, np.full(q + 1, sites[-1])])


def _banded(A):
    """Diagonal-ordered form of a dense banded matrix for ``solve_banded``."""
    n = A.shape[0]
    r, c = np.nonzero(A)
    lo = int(max(0, (r - c).max())) if len(r) else 0
    up = int(max(0, (c - r).max())) if len(r) else 0
    ab = np.zeros((lo + up + 1, n))
    for d in range(-lo, up + 1):
        diag = np.diagonal(A, d)
        if d >= 0:
            ab[up - d, d:] = diag
        else:
            ab[up - d, :n + d] = diag
    return (lo, up), ab


@dataclass
class Interpolant1D:
    """Degree-``q`` spline interpolation operator on one set of sites."""

    sites: np.ndarray
    q: int
    knots: np.ndarray = field(repr=False)
    _bands: tuple = field(repr=False)

    @classmethod
    def build(cls, sites, q):
        sites = np.asarray(sites, dtype=float)
        if len(sites) == 1:
            return cls(sites, 0, np.array([sites[0], sites[0]]), None)
        knots = interpolation_knots(sites, q)
        A = collocation_matrix(knots, q, sites)
        return cls(sites, q, knots, _banded(A))

    def coefficients(self, values):
        """Spline coefficients interpolating ``values`` along axis 0."""
        if self._bands is None:
            return np.asarray(values)
        values = np.asarray(values)
        flat = values.reshape(len(self.sites), -1)
        (lo, up), ab = self._bands
        return sla.solve_banded((lo, up), ab, flat, check_finite=False).reshape(values.shape)

    def evaluation_matrix(self, x):
        x = np.asarray(x, dtype=float)
        if self._bands is None:
            return np.ones((len(x), 1))
        return collocation_matrix(self.knots, self.q, x)


@dataclass
class StencilSet:
    """Interpolated stencil functions of one patch and one bilinear form.

    ``coef[a, b, r]`` is the tensor spline coefficient of upper offset ``r``;
    offset ``-1`` of the list (when present) is the diagonal.
    """

    grid: SampleGrid
    q: int
    offsets: list
    coef: np.ndarray = field(repr=False)
    interp: Interpolant1D = field(repr=False)

    def evaluate(self, local1=None, local2=None):
        """Stencil values at interior lattice rows, shape ``(n1, n2, n_offsets)``."""
        L = self.grid.L
        local1 = np.arange(L) if local1 is None else np.asarray(local1)
        local2 = np.arange(L) if local2 is None else np.asarray(local2)
        B1 = self.interp.evaluation_matrix(local1)
        B2 = self.interp.evaluation_matrix(local2)
        n = self.coef.shape[0]
        tmp = (B1 @ self.coef.reshape(n, -1)).reshape(len(local1), n, -1)
        # contract the second spline direction
        return np.einsum("ajr,bj->abr", tmp, B2, optimize=True)


def sample_stencils(geom, basis, grid, form, weight=None, out=None):
    """Assemble the sample rows exactly and return their stencil tables.

    Returns ``(tables, band)`` where ``tables[a, b, d1 + p, d2 + p]`` is the
    entry of sample row ``(grid.indices[a], grid.indices[b])`` at offset
    ``(d1, d2)`` and ``band`` is the patch band with the sample rows filled.
    """
    idx = grid.indices
    band = assemble_band(geom, basis, form, RowSelector.block(idx, idx), weight, out)
    return band[np.ix_(idx, idx)], band


def interpolate_stencils(tables, grid, q, offsets):
    """Fit tensor splines to the stencil tables of the listed offsets.

    The degree is lowered to ``n_samples - 1`` when there are too few sample
    points; the effective degree is stored on the result.
    """
    p = grid.p
    q_eff = min(q, grid.n_samples - 1)
    interp = Interpolant1D.build(grid.local, q_eff)
    T = np.stack([tables[:, :, d1 + p, d2 + p] for d1, d2 in offsets], axis=-1)
    C = interp.coefficients(T)
    C = interp.coefficients(C.transpose(1, 0, 2)).transpose(1, 0, 2)
    return StencilSet(grid=grid, q=q_eff, offsets=list(offsets), coef=C, interp=interp)


def _shift(arr, d1, d2, fill=0):
    """``out[i1, i2] = arr[i1 + d1, i2 + d2]`` (``fill`` outside the range)."""
    m1, m2 = arr.shape[:2]
    out = np.full_like(arr, fill)
    s1 = slice(max(0, -d1), min(m1, m1 - d1))
    s2 = slice(max(0, -d2), min(m2, m2 - d2))
    t1 = slice(max(0, d1), min(m1, m1 + d1))
    t2 = slice(max(0, d2), min(m2, m2 + d2))
    out[s1, s2] = arr[t1, t2]
    return out


def _inner_mask(m, p):
    r = np.arange(m)
    inner1 = (r >= 2 * p) & (r < m - 2 * p)
    return inner1[:, None] & inner1[None, :]


def _combine(stencils, basis, exact, diagonal):
    """Surrogate band from interpolated stencils and exact frame rows.

    ``diagonal`` is ``"interpolate"`` (use the diagonal stencil) or
    ``"kernel"`` (negative off-diagonal row sum).
    """
    m, p = basis.m, basis.p
    L, lo, hi = m - 4 * p, 2 * p, m - 2 * p
    inner = _inner_mask(m, p)
    U = np.zeros_like(exact)
    if L > 0:
        vals = stencils.evaluate()
        for r, (d1, d2) in enumerate(stencils.offsets):
            U[lo:hi, lo:hi, d1 + p, d2 + p] = vals[:, :, r]
        # sample rows are known exactly
        idx = stencils.grid.indices
        ix = np.ix_(idx, idx)
        for d1, d2 in stencils.offsets:
            U[ix + (d1 + p, d2 + p)] = exact[ix + (d1 + p, d2 + p)]
    out = np.zeros_like(exact)
    for d1, d2 in upper_offsets(p):
        a, b = d1 + p, d2 + p
        na, nb = -d1 + p, -d2 + p
        inner_j = _shift(inner, d1, d2, fill=True)
        # row i, upper offset: pair (i, i+d); row j = i+d sees offset -d
        up = np.where(inner & inner_j, U[:, :, a, b], exact[:, :, a, b])
        # the frame row of the pair decides when exactly one side is frame
        up = np.where(inner & ~inner_j, _shift(exact[:, :, na, nb], d1, d2), up)
        out[:, :, a, b] = up
        out[:, :, na, nb] = _shift(up, -d1, -d2)
    # entries pointing outside the patch are structural zeros
    cols_ok = _valid_offsets(m, p)
    out *= cols_ok
    if diagonal == "kernel":
        out[:, :, p, p] = 0
        out[:, :, p, p] = -out.sum(axis=(2, 3))
    else:
        out[:, :, p, p] = np.where(inner, U[:, :, p, p], exact[:, :, p, p])
    return out


def _valid_offsets(m, p):
    i = np.arange(m)
    d = np.arange(-p, p + 1)
    ok = (i[:, None] + d[None, :] >= 0) & (i[:, None] + d[None, :] < m)
    return ok[:, None, :, None] & ok[None, :, None, :]


def _exact_rows(geom, basis, grid, form, weight):
    m, p = basis.m, basis.p
    rows = RowSelector.frame(m, 2 * p)
    if grid is not None:
        rows = rows | RowSelector.block(grid.indices, grid.indices)
    return assemble_band(geom, basis, form, rows, weight)


def _patch_band(geom, basis, form, config, weight, diagonal, timings):
    m, p = basis.m, basis.p
    t0 = time.perf_counter()
    grid = select_sample_points(m, p, config.resolve_M(m, p)) if m - 4 * p > 0 else None
    exact = _exact_rows(geom, basis, grid, form, weight)
    t1 = time.perf_counter()
    offsets = upper_offsets(p) + ([] if diagonal == "kernel" else [(0, 0)])
    stencils = None
    if grid is not None:
        stencils = interpolate_stencils(exact[np.ix_(grid.indices, grid.indices)], grid, config.q, offsets)
    t2 = time.perf_counter()
    band = _combine(stencils, basis, exact, diagonal) if grid is not None else exact
    t3 = time.perf_counter()
    timings["sample"] += t1 - t0
    timings["interpolate"] += t2 - t1
    timings["evaluate"] += t3 - t2
    return band, grid, stencils


def build_surrogate_mass(stencils, basis, exact_band):
    """Symmetric surrogate mass band with interpolated diagonal.

    Args:
        stencils: Interpolated stencils including the ``(0, 0)`` offset.
        basis: Patch basis.
        exact_band: Band holding the exact frame and sample rows.
    """
    return _combine(stencils, basis, exact_band, "interpolate")


def build_surrogate_stiffness(stencils, basis, exact_band):
    """Symmetric kernel-preserving surrogate stiffness band."""
    return _combine(stencils, basis, exact_band, "kernel")


def build_volume_preserving_mass(stencils, basis, exact_band, volumes):
    """Mass band with exact row sums ``volumes`` (integrals of the basis functions).

    The off-diagonal part is the surrogate of the mass; the diagonal is
    ``volumes - (off-diagonal row sum)``.
    """
    band = _combine(stencils, basis, exact_band, "kernel")
    band[:, :, basis.p, basis.p] += np.asarray(volumes).reshape(basis.m, basis.m, order="F")
    return band


def count_rows_by_kind(basis, grid):
    """Exact row counts by how the surrogate fills them.

    Keys:
        ``boundary_quadrature_rows``: the exact frame of width ``2p`` (rows
            whose stencil reaches a non-cardinal function).
        ``noncardinal_rows``: subset of the frame belonging to non-cardinal
            functions.
        ``sample_quadrature_rows``: interior rows assembled at sample points.
        ``cardinal_eval_rows``: interior rows filled from the interpolants.
        ``quadrature_fraction``: share of all rows assembled by quadrature.
    """
    m, p = basis.m, basis.p
    inner = max(m - 4 * p, 0)
    sampled = grid.n_samples ** 2 if grid is not None else 0
    boundary = m * m - inner * inner
    return {
        "total_rows": m * m,
        "boundary_quadrature_rows": boundary,
        "noncardinal_rows": m * m - (m - 2 * p) ** 2,
        "sample_quadrature_rows": sampled,
        "cardinal_eval_rows": inner * inner - sampled,
        "quadrature_fraction": (boundary + sampled) / (m * m),
    }


def surrogate_matrix(domain, basis, form, config, weight=None):
    """Assemble a glued surrogate matrix and its provenance record.

    Args:
        domain: Multi-patch domain.
        basis: Basis shared by all patches.
        form: ``"stiffness"``, ``"mass"`` or ``"weighted_mass"``.
        config: :class:`SurrogateConfig`.
        weight: Weight ``w(x, y)`` for the weighted mass.

    Returns:
        ``(A, info)`` with ``A`` in CSR format and ``info`` a dict recording
        ``M``, requested and effective ``q``, ``H``, row counts and timings.
    """
    if form not in FORMS:
        raise ValueError(f"unknown form {form!r}")
    if form == "weighted_mass" and weight is None:
        raise ValueError("weighted_mass needs a weight function")
    if form == "stiffness":
        diagonal = "kernel" if config.kernel_preserving else "interpolate"
    else:
        diagonal = "kernel" if config.volume_preserving else "interpolate"
    timings = {"sample": 0.0, "interpolate": 0.0, "evaluate": 0.0, "volumes": 0.0, "glue": 0.0}
    volumes = None
    if diagonal == "kernel" and form != "stiffness":
        t = time.perf_counter()
        volumes = integrate_basis(domain, basis, weight)
        timings["volumes"] = time.perf_counter() - t
    mats, grid, q_eff = [], None, None
    for k, geom in enumerate(domain.patches):
        band, grid, st = _patch_band(geom, basis, form, config, weight, diagonal, timings)
        if volumes is not None:
            band[:, :, basis.p, basis.p] += volumes[k].reshape(basis.m, basis.m, order="F")
        if st is not None:
            q_eff = st.q
        mats.append(band_to_csr(band, basis.m, basis.p))
    t = time.perf_counter()
    A = glue(domain, basis, mats)
    timings["glue"] = time.perf_counter() - t
    timings["total"] = sum(timings.values())
    counts = count_rows_by_kind(basis, grid)
    info = {
        "form": form,
        "M": grid.M if grid is not None else 0,
        "q": config.q,
        "q_effective": q_eff if q_eff is not None else config.q,
        "H": grid.H if grid is not None else 0.0,
        "n_samples": grid.n_samples if grid is not None else 0,
        "n_patches": len(domain.patches),
        "counts": counts,
        "timings": timings,
    }
    return A, info
