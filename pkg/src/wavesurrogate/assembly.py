"""Element-loop Gauss quadrature assembly of stiffness, mass and boundary mass.

Per patch, a matrix is held in *band* layout ``band[i1, i2, d1 + p, d2 + p]``:
the entry of row ``(i1, i2)`` in column ``(i1 + d1, i2 + d2)``.  This is the
natural layout of stencil functions and converts to CSR in one pass.

Rows are selected through :class:`RowSelector`, a union of tensor blocks of
row indices.  Full assembly is selective assembly with every row selected, so
a selected row is bit-identical to the same row of the full matrix.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import FACE_NORMALS, FACES, face_indices, glue_dofs
from .splines import gauss_legendre

FORMS = ("stiffness", "mass", "weighted_mass")

# elements x local-matrix entries held in one temporary during quadrature
_CHUNK_ENTRIES = 2_000_000


@dataclass(frozen=True)
class RowSelector:
    """Set of patch-local rows as a union of disjoint tensor blocks ``rows1 x rows2``."""

    blocks: tuple

    @classmethod
    def all(cls, m):
        r = np.arange(m)
        return cls(((r, r),))

    @classmethod
    def block(cls, rows1, rows2):
        return cls(((np.unique(np.asarray(rows1, dtype=np.int64)),
                     np.unique(np.asarray(rows2, dtype=np.int64))),))

    @classmethod
    def frame(cls, m, width):
        """All rows with some index component within ``width`` of the boundary."""
        width = min(width, (m + 1) // 2)
        r = np.arange(m)
        edge = np.concatenate([np.arange(width), np.arange(m - width, m)])
        edge = np.unique(edge)
        inner = np.arange(width, m - width)
        blocks = [(edge, r)]
        if len(inner):
            blocks.append((inner, edge))
        return cls(tuple(blocks))

    @classmethod
    def from_indices(cls, indices, m):
        """Rows given by colex global indices (grouped into one block per ``i2``)."""
        idx = np.unique(np.asarray(indices, dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= m * m):
            raise IndexError("row index out of range")
        i1, i2 = idx % m, idx // m
        blocks = tuple((i1[i2 == c], np.array([c])) for c in np.unique(i2))
        return cls(blocks)

    def __or__(self, other):
        return RowSelector(self.blocks + other.blocks)

    def indices(self, m):
        out = [(r1[:, None] + m * r2[None, :]).ravel() for r1, r2 in self.blocks]
        return np.unique(np.concatenate(out)) if out else np.zeros(0, dtype=np.int64)

    def count(self, m):
        return len(self.indices(m))


def element_range(rows, p, ne):
    """Elements (per direction) in the supports of the given univariate rows."""
    rows = np.asarray(rows, dtype=np.int64)
    e = (rows[:, None] - np.arange(p + 1)[None, :]).ravel()
    return np.unique(e[(e >= 0) & (e < ne)])


def active_elements(rows, basis):
    """Sorted ``(e1, e2)`` pairs of elements needed to assemble ``rows``."""
    if not isinstance(rows, RowSelector):
        rows = RowSelector.from_indices(rows, basis.m)
    ne, p = basis.n_elements, basis.p
    pairs = []
    for r1, r2 in rows.blocks:
        E1, E2 = element_range(r1, p, ne), element_range(r2, p, ne)
        pairs.append(np.stack(np.meshgrid(E1, E2, indexing="ij"), -1).reshape(-1, 2))
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(np.concatenate(pairs), axis=0)


def _quad_points(E, nodes, h):
    return ((E[:, None] + nodes[None, :]) * h).ravel()


def _geometry_block(geom, x1q, x2q, n1, n2, G):
    J = geom.jacobian(x1q[:, None], x2q[None, :])
    shape = (len(x1q), len(x2q))
    J = [np.broadcast_to(c, shape).reshape(n1, G, n2, G).transpose(0, 2, 1, 3) for c in J]
    return J


def element_matrices(geom, basis, E1, E2, form, weight=None):
    """Local element matrices ``(len(E1), len(E2), S, S)`` with ``S = (p+1)^2``.

    Local index of function ``(e1 + s1, e2 + s2)`` is ``s1 * (p + 1) + s2``.
    Quadrature uses the ``(p + 1)``-point Gauss rule per direction.
    """
    if form not in FORMS:
        raise ValueError(f"unknown form {form!r}")
    p, h = basis.p, basis.h
    nodes, weights, V, D = basis.element_tables()
    G, P = len(nodes), p + 1
    S = P * P
    dtype = complex if geom.is_complex else float
    n1, n2 = len(E1), len(E2)
    out = np.zeros((n1, n2, S, S), dtype=dtype)
    x2q = _quad_points(E2, nodes, h)
    V2, D2 = V[E2], D[E2]
    chunk = max(1, _CHUNK_ENTRIES // max(1, n2 * S * S))
    wq = h * h * weights[:, None] * weights[None, :]
    for c0 in range(0, n1, chunk):
        Ec = E1[c0:c0 + chunk]
        nc = len(Ec)
        x1q = _quad_points(Ec, nodes, h)
        J11, J12, J21, J22 = _geometry_block(geom, x1q, x2q, nc, n2, G)
        det = J11 * J22 - J12 * J21
        V1, D1 = V[Ec], D[Ec]
        acc = out[c0:c0 + nc]
        if form == "stiffness":
            c11 = wq * (J12 * J12 + J22 * J22) / det
            c12 = -wq * (J11 * J12 + J21 * J22) / det
            c22 = wq * (J11 * J11 + J21 * J21) / det
        else:
            c00 = wq * det
            if form == "weighted_mass":
                if weight is None:
                    raise ValueError("weighted_mass requires a weight function")
                X, Y = geom.real_map()(x1q[:, None], x2q[None, :])
                wv = np.broadcast_to(weight(X, Y), (len(x1q), len(x2q)))
                wv = wv.reshape(nc, G, n2, G).transpose(0, 2, 1, 3)
                c00 = c00 * wv
        for g1 in range(G):
            for g2 in range(G):
                v = (V1[:, None, :, None, g1] * V2[None, :, None, :, g2]).reshape(nc, n2, S)
                if form == "stiffness":
                    gx = (D1[:, None, :, None, g1] * V2[None, :, None, :, g2]).reshape(nc, n2, S)
                    gy = (V1[:, None, :, None, g1] * D2[None, :, None, :, g2]).reshape(nc, n2, S)
                    xy = gx[..., :, None] * gy[..., None, :]
                    acc += (c11[:, :, g1, g2, None, None] * (gx[..., :, None] * gx[..., None, :])
                            + c12[:, :, g1, g2, None, None] * (xy + xy.transpose(0, 1, 3, 2))
                            + c22[:, :, g1, g2, None, None] * (gy[..., :, None] * gy[..., None, :]))
                else:
                    acc += c00[:, :, g1, g2, None, None] * (v[..., :, None] * v[..., None, :])
    return out


def assemble_band(geom, basis, form, rows=None, weight=None, out=None):
    """Assemble selected rows of one patch matrix in band layout.

    Unselected rows are left untouched in ``out`` (zero when freshly created).
    """
    m, p, ne = basis.m, basis.p, basis.n_elements
    P, W = p + 1, 2 * p + 1
    rows = RowSelector.all(m) if rows is None else rows
    dtype = complex if geom.is_complex else float
    if out is None:
        out = np.zeros((m, m, W, W), dtype=dtype)
    for R1, R2 in rows.blocks:
        if len(R1) == 0 or len(R2) == 0:
            continue
        E1, E2 = element_range(R1, p, ne), element_range(R2, p, ne)
        Kloc = element_matrices(geom, basis, E1, E2, form, weight)
        pos1 = np.full(ne, -1)
        pos1[E1] = np.arange(len(E1))
        pos2 = np.full(ne, -1)
        pos2[E2] = np.arange(len(E2))
        block = np.zeros((len(R1), len(R2), W, W), dtype=dtype)
        for s1 in range(P):
            e1 = R1 - s1
            ok1 = (e1 >= 0) & (e1 < ne)
            i1 = pos1[np.clip(e1, 0, ne - 1)]
            for s2 in range(P):
                e2 = R2 - s2
                ok2 = (e2 >= 0) & (e2 < ne)
                i2 = pos2[np.clip(e2, 0, ne - 1)]
                ok = ok1[:, None] & ok2[None, :]
                sub = Kloc[i1[:, None], i2[None, :], s1 * P + s2]
                for t1 in range(P):
                    for t2 in range(P):
                        block[:, :, t1 - s1 + p, t2 - s2 + p] += np.where(ok, sub[:, :, t1 * P + t2], 0)
        out[np.ix_(R1, R2)] = block
    return out


def band_structure(m, p):
    """Column indices and validity mask of the band layout (colex, 0-based)."""
    W = 2 * p + 1
    i1 = np.arange(m)[:, None, None, None]
    i2 = np.arange(m)[None, :, None, None]
    d1 = np.arange(-p, p + 1)[None, None, :, None]
    d2 = np.arange(-p, p + 1)[None, None, None, :]
    j1, j2 = i1 + d1, i2 + d2
    valid = (j1 >= 0) & (j1 < m) & (j2 >= 0) & (j2 < m)
    cols = np.broadcast_to(j1 + m * j2, (m, m, W, W))
    return cols, valid


def band_to_csr(band, m, p):
    """Convert a band array to CSR (colex rows, all structural entries kept)."""
    W = 2 * p + 1
    cols, valid = band_structure(m, p)
    # rows in colex order: index i2 slowest, offsets ordered (d2, d1) so columns increase
    order = (1, 0, 3, 2)
    vals = band.transpose(order).reshape(m * m, W * W)
    cols = cols.transpose(order).reshape(m * m, W * W)
    mask = valid.transpose(order).reshape(m * m, W * W)
    indptr = np.concatenate([[0], np.cumsum(mask.sum(1))])
    return sp.csr_matrix((vals[mask], cols[mask], indptr), shape=(m * m, m * m))


def csr_to_band(A, m, p):
    """Inverse of :func:`band_to_csr` for matrices with band sparsity."""
    W = 2 * p + 1
    A = sp.coo_matrix(A)
    i1, i2 = A.row % m, A.row // m
    d1, d2 = A.col % m - i1, A.col // m - i2
    band = np.zeros((m, m, W, W), dtype=A.dtype)
    band[i1, i2, d1 + p, d2 + p] = A.data
    return band


def glue(domain, basis, patch_mats, dofmap=None):
    """Sum patch-local matrices into the global numbering."""
    if len(patch_mats) == 1 and not domain.interfaces:
        return sp.csr_matrix(patch_mats[0])
    dofmap = glue_dofs(domain, basis) if dofmap is None else dofmap
    rows, cols, vals = [], [], []
    for idx, A in zip(dofmap.local_to_global, patch_mats):
        A = sp.coo_matrix(A)
        rows.append(idx[A.row])
        cols.append(idx[A.col])
        vals.append(A.data)
    n = dofmap.n_global
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def glue_vector(domain, basis, parts, dofmap=None):
    if len(parts) == 1 and not domain.interfaces:
        return np.asarray(parts[0])
    dofmap = glue_dofs(domain, basis) if dofmap is None else dofmap
    return dofmap.gather(parts, average=False)


def _assemble(domain, basis, form, rows, weight, patch):
    if rows is not None and patch is None:
        if len(domain.patches) != 1:
            raise ValueError("row selection on a multi-patch domain needs an explicit patch index")
        patch = 0
    if patch is not None:
        band = assemble_band(domain.patches[patch], basis, form, rows, weight)
        return band_to_csr(band, basis.m, basis.p)
    mats = [band_to_csr(assemble_band(g, basis, form, None, weight), basis.m, basis.p)
            for g in domain.patches]
    return glue(domain, basis, mats)


def assemble_stiffness(domain, basis, rows=None, patch=None):
    """Stiffness matrix ``K_ij = a(B_j, B_i)``.

    With ``rows`` (or ``patch``) the patch-local matrix restricted to those
    rows is returned; otherwise the glued global matrix.
    """
    return _assemble(domain, basis, "stiffness", rows, None, patch)


def assemble_mass(domain, basis, rows=None, weight=None, patch=None):
    """Mass matrix, optionally weighted by ``weight(x, y)`` at physical points."""
    form = "mass" if weight is None else "weighted_mass"
    return _assemble(domain, basis, form, rows, weight, patch)


def _face_geometry(geom, face, t):
    """Reference points, tangent measure and outward unit normal along a face."""
    zero, one = np.zeros_like(t), np.ones_like(t)
    x1, x2 = {"west": (zero, t), "east": (one, t), "south": (t, zero), "north": (t, one)}[face]
    J11, J12, J21, J22 = geom.jacobian(x1, x2)
    if face in ("west", "east"):
        tx, ty = J12, J22
    else:
        tx, ty = J11, J21
    # non-conjugated length so that complex-stretched faces stay analytic
    meas = np.sqrt(tx * tx + ty * ty)
    n1, n2 = FACE_NORMALS[face]
    nx, ny = J22 * n1 - J21 * n2, -J12 * n1 + J11 * n2
    nn = np.sqrt(nx * nx + ny * ny)
    return x1, x2, meas, nx / nn, ny / nn


def _selected_faces(domain, faces):
    if faces is None:
        return domain.exterior_faces()
    return [tuple(f) for f in faces]


def assemble_boundary_mass(domain, basis, weight=None, faces=None, patch_local=False):
    """Boundary mass ``B_ij = int_{faces} B_j B_i ds`` (exterior faces by default)."""
    m, p, h = basis.m, basis.p, basis.h
    nodes, weights, V, _ = basis.element_tables()
    ne, P = basis.n_elements, p + 1
    dtype = complex if domain.is_complex else float
    per_patch = [([], [], []) for _ in domain.patches]
    e = np.arange(ne)
    t = _quad_points(e, nodes, h)
    for ell, face in _selected_faces(domain, faces):
        geom = domain.patches[ell]
        x1, x2, meas, _, _ = _face_geometry(geom, face, t)
        c = (h * weights[None, :] * meas.reshape(ne, len(nodes))).astype(dtype)
        if weight is not None:
            X, Y = geom.real_map()(x1, x2)
            c = c * np.broadcast_to(weight(X, Y), t.shape).reshape(ne, len(nodes))
        local = np.einsum("eg,esg,etg->est", c, V, V)
        fidx = face_indices(face, m)
        s = np.arange(P)
        rows = fidx[e[:, None, None] + s[None, :, None]] + 0 * s[None, None, :]
        cols = fidx[e[:, None, None] + s[None, None, :]] + 0 * s[None, :, None]
        per_patch[ell][0].append(rows.ravel())
        per_patch[ell][1].append(cols.ravel())
        per_patch[ell][2].append(local.ravel())
    mats = []
    for r, c, v in per_patch:
        if r:
            A = sp.csr_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
                              shape=(m * m, m * m), dtype=dtype)
        else:
            A = sp.csr_matrix((m * m, m * m), dtype=dtype)
        mats.append(A)
    if patch_local:
        return mats
    return glue(domain, basis, mats)


def _volume_integrals(geom, basis, f, nq=None):
    """``int f B_i det J`` for every patch-local function (f on real physical points)."""
    m, p, h = basis.m, basis.p, basis.h
    nodes, weights, V, _ = basis.element_tables(nq)
    ne, G, P = basis.n_elements, len(nodes), p + 1
    e = np.arange(ne)
    xq = _quad_points(e, nodes, h)
    J11, J12, J21, J22 = (np.broadcast_to(c, (len(xq), len(xq))) for c in geom.jacobian(xq[:, None], xq[None, :]))
    det = J11 * J22 - J12 * J21
    if f is None:
        vals = det
    else:
        X, Y = geom.real_map()(xq[:, None], xq[None, :])
        vals = det * np.broadcast_to(f(X, Y), det.shape)
    vals = (h * h * vals).reshape(ne, G, ne, G) * weights[None, :, None, None] * weights[None, None, None, :]
    loc = np.einsum("agbh,asg,bth->abst", vals, V, V)
    out = np.zeros((m, m), dtype=loc.dtype)
    for s1 in range(P):
        for s2 in range(P):
            out[s1:s1 + ne, s2:s2 + ne] += loc[:, :, s1, s2]
    return out.ravel(order="F")


def integrate_basis(domain, basis, weight=None):
    """Per-patch vectors ``D_i = int B_i`` (physical measure)."""
    return [_volume_integrals(g, basis, weight) for g in domain.patches]


def assemble_rhs(domain, basis, f=None, g=None, faces=None):
    """Load vector ``int f B_i + int_{faces} g B_i ds``.

    ``f(x, y)`` is evaluated at real physical points; ``g(x, y, nx, ny)``
    additionally receives the outward unit normal of the real geometry.
    """
    m, p, h = basis.m, basis.p, basis.h
    parts = []
    for geom in domain.patches:
        if f is None:
            parts.append(np.zeros(m * m, dtype=complex))
        else:
            parts.append(_volume_integrals(geom, basis, f).astype(complex))
    if g is not None:
        nodes, weights, V, _ = basis.element_tables()
        ne, P = basis.n_elements, p + 1
        e = np.arange(ne)
        t = _quad_points(e, nodes, h)
        for ell, face in _selected_faces(domain, faces):
            real = domain.patches[ell].real_map()
            x1, x2, meas, nx, ny = _face_geometry(real, face, t)
            X, Y = real(x1, x2)
            vals = (h * meas * np.broadcast_to(g(X, Y, nx, ny), t.shape)).reshape(ne, len(nodes)) * weights[None, :]
            if domain.patches[ell].is_complex:
                _, _, cmeas, _, _ = _face_geometry(domain.patches[ell], face, t)
                vals = vals * (cmeas / meas).reshape(ne, len(nodes))
            loc = np.einsum("eg,esg->es", vals, V)
            fidx = face_indices(face, m)
            np.add.at(parts[ell], fidx[e[:, None] + np.arange(P)[None, :]], loc)
    return glue_vector(domain, basis, parts)


class Timer:
    """Monotonic wall-clock context manager."""

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start
        return False


__all__ = [
    "FACES", "RowSelector", "active_elements", "assemble_band", "assemble_boundary_mass",
    "assemble_mass", "assemble_rhs", "assemble_stiffness", "band_to_csr", "csr_to_band",
    "element_matrices", "glue", "integrate_basis", "Timer",
]
