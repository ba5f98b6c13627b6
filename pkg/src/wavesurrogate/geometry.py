"""Analytic geometry maps, multi-patch domains and PML coordinate stretching.

A map takes reference coordinates ``(x1, x2)`` in ``[0, 1]^2`` (any
broadcastable arrays) to physical coordinates.  ``jacobian`` returns the four
entries ``(J11, J12, J21, J22)`` with ``Jab = d phi_a / d xhat_b``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

FACES = ("west", "east", "south", "north")

# reference outward normals of the four faces
FACE_NORMALS = {
    "west": (-1.0, 0.0),
    "east": (1.0, 0.0),
    "south": (0.0, -1.0),
    "north": (0.0, 1.0),
}


class GeometryMap:
    """Base class for smooth maps from the unit square."""

    smooth = True
    is_complex = False

    def __call__(self, x1, x2):
        raise NotImplementedError

    def jacobian(self, x1, x2):
        raise NotImplementedError

    def real_map(self):
        """The underlying real map (differs from ``self`` only for PML maps)."""
        return self


class AffineMap(GeometryMap):
    def __init__(self, A, b=(0.0, 0.0)):
        self.A = np.asarray(A, dtype=float).reshape(2, 2)
        self.b = np.asarray(b, dtype=float).reshape(2)
        if np.linalg.det(self.A) <= 0:
            raise ValueError("affine map must preserve orientation (det A > 0)")

    def __repr__(self):
        return f"AffineMap(A={self.A.tolist()}, b={self.b.tolist()})"

    def __call__(self, x1, x2):
        A, b = self.A, self.b
        return A[0, 0] * x1 + A[0, 1] * x2 + b[0], A[1, 0] * x1 + A[1, 1] * x2 + b[1]

    def jacobian(self, x1, x2):
        shape = np.broadcast(np.asarray(x1), np.asarray(x2)).shape
        return tuple(np.full(shape, v) for v in self.A.ravel())


class AnnulusSector(GeometryMap):
    """Polar sector ``r0 <= r <= r1``, ``theta0 <= theta <= theta1``.

    With ``bump > 0`` the radius is reparametrized as
    ``r0 + (r1 - r0) x1 + bump * sin(2 pi x2) * x1 (1 - x1)``; the image is
    unchanged but the map is no longer a pure polar map.
    """

    def __init__(self, r0=1.0, r1=2.0, theta0=0.0, theta1=np.pi / 2, bump=0.0):
        self.r0, self.r1 = float(r0), float(r1)
        self.theta0, self.theta1 = float(theta0), float(theta1)
        self.bump = float(bump)
        if abs(self.bump) >= (self.r1 - self.r0):
            raise ValueError("bump amplitude too large: map would fold")

    def __repr__(self):
        return (f"AnnulusSector(r0={self.r0}, r1={self.r1}, theta0={self.theta0:.6g}, "
                f"theta1={self.theta1:.6g}, bump={self.bump})")

    def _radius(self, x1, x2):
        dr = self.r1 - self.r0
        if self.bump == 0.0:
            return self.r0 + dr * x1, dr + 0.0 * x2, 0.0 * x1 + 0.0 * x2
        s = np.sin(2 * np.pi * x2)
        r = self.r0 + dr * x1 + self.bump * s * x1 * (1 - x1)
        r1 = dr + self.bump * s * (1 - 2 * x1)
        r2 = self.bump * 2 * np.pi * np.cos(2 * np.pi * x2) * x1 * (1 - x1)
        return r, r1, r2

    def __call__(self, x1, x2):
        r, _, _ = self._radius(x1, x2)
        t = self.theta0 + (self.theta1 - self.theta0) * x2
        return r * np.cos(t), r * np.sin(t)

    def jacobian(self, x1, x2):
        r, r1, r2 = self._radius(x1, x2)
        dt = self.theta1 - self.theta0
        t = self.theta0 + dt * x2
        c, s = np.cos(t), np.sin(t)
        return r1 * c, r2 * c - r * dt * s, r1 * s, r2 * s + r * dt * c


class PlateWithHolePatch(GeometryMap):
    """One half of the quarter plate ``(0, w)^2`` minus the disk of radius ``R``.

    The lower patch spans polar angles ``[0, pi/4]`` and blends the hole arc
    with the edge ``x = w``; the upper patch spans ``[pi/4, pi/2]`` and blends
    with ``y = w``.  Both maps are smooth up to the boundary.
    """

    def __init__(self, upper, radius=1.0, width=2.0):
        self.upper = bool(upper)
        self.R = float(radius)
        self.w = float(width)

    def __repr__(self):
        return f"PlateWithHolePatch(upper={self.upper}, radius={self.R}, width={self.w})"

    def _theta(self, x2):
        return (np.pi / 4) * (x2 + (1.0 if self.upper else 0.0))

    def _outer(self, t):
        if self.upper:
            return self.w / np.tan(t), self.w + 0.0 * t, -self.w / np.sin(t) ** 2, 0.0 * t
        return self.w + 0.0 * t, self.w * np.tan(t), 0.0 * t, self.w / np.cos(t) ** 2

    def __call__(self, x1, x2):
        t = self._theta(x2)
        ox, oy, _, _ = self._outer(t)
        cx, cy = self.R * np.cos(t), self.R * np.sin(t)
        return (1 - x1) * cx + x1 * ox, (1 - x1) * cy + x1 * oy

    def jacobian(self, x1, x2):
        t = self._theta(x2)
        ox, oy, dox, doy = self._outer(t)
        cx, cy = self.R * np.cos(t), self.R * np.sin(t)
        dcx, dcy = -cy, cx
        q = np.pi / 4
        return (ox - cx, q * ((1 - x1) * dcx + x1 * dox),
                oy - cy, q * ((1 - x1) * dcy + x1 * doy))


class BilinearStrip(GeometryMap):
    """Region ``0 < x < width`` between two straight lines.

    ``lower = (a0, a1)`` and ``upper = (b0, b1)`` describe ``y = a0 + a1 x`` and
    ``y = b0 + b1 x``.
    """

    def __init__(self, width, lower, upper):
        self.width = float(width)
        self.lower = tuple(float(v) for v in lower)
        self.upper = tuple(float(v) for v in upper)
        for x in (0.0, self.width):
            if self.upper[0] + self.upper[1] * x <= self.lower[0] + self.lower[1] * x:
                raise ValueError("upper line must lie above lower line")

    def __repr__(self):
        return f"BilinearStrip(width={self.width}, lower={self.lower}, upper={self.upper})"

    def __call__(self, x1, x2):
        X = self.width * x1
        lo = self.lower[0] + self.lower[1] * X
        hi = self.upper[0] + self.upper[1] * X
        return X + 0.0 * x2, lo + x2 * (hi - lo)

    def jacobian(self, x1, x2):
        X = self.width * x1
        lo = self.lower[0] + self.lower[1] * X
        hi = self.upper[0] + self.upper[1] * X
        shape = np.broadcast(np.asarray(x1), np.asarray(x2)).shape
        a1, b1 = self.lower[1], self.upper[1]
        return (np.full(shape, self.width), np.zeros(shape),
                self.width * (a1 + x2 * (b1 - a1)), (hi - lo) + 0.0 * x2)


@dataclass(frozen=True)
class PmlStretch:
    """Complex coordinate stretch ``x + i C/omega ((x - ell)/(L - ell))^n`` beyond ``ell``."""

    ell: float
    L: float
    C: float
    n: int
    omega: float

    def __post_init__(self):
        if self.ell >= self.L:
            raise ValueError(f"PML interface ell={self.ell} must be below outer coordinate L={self.L}")
        if self.n < 1:
            raise ValueError("PML exponent must be >= 1")
        if self.omega <= 0:
            raise ValueError("angular frequency must be positive")
        if self.C < 0:
            raise ValueError("PML strength must be non-negative")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        t = np.clip((x - self.ell) / (self.L - self.ell), 0.0, None)
        return x + 1j * (self.C / self.omega) * t ** self.n

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        t = np.clip((x - self.ell) / (self.L - self.ell), 0.0, None)
        return 1.0 + 1j * (self.C / self.omega) * self.n * t ** (self.n - 1) / (self.L - self.ell) * (x > self.ell)


class StretchedMap(GeometryMap):
    """Composition of a real map with a per-axis complex stretch."""

    is_complex = True

    def __init__(self, base, stretch, axes=(0, 1)):
        self.base = base
        self.stretch = stretch
        self.axes = tuple(axes)
        self.smooth = base.smooth

    def __repr__(self):
        return f"StretchedMap({self.base!r}, {self.stretch!r}, axes={self.axes})"

    def real_map(self):
        return self.base.real_map()

    def __call__(self, x1, x2):
        X = list(self.base(x1, x2))
        for a in self.axes:
            X[a] = self.stretch(X[a])
        return tuple(np.asarray(v, dtype=complex) for v in X)

    def jacobian(self, x1, x2):
        X = self.base(x1, x2)
        J = [np.asarray(v, dtype=complex) for v in self.base.jacobian(x1, x2)]
        for a in self.axes:
            d = self.stretch.derivative(X[a])
            J[2 * a] = J[2 * a] * d
            J[2 * a + 1] = J[2 * a + 1] * d
        return tuple(J)


class Interface(NamedTuple):
    """Conforming interface: face ``face_a`` of patch ``a`` glued to ``face_b`` of ``b``."""

    a: int
    face_a: str
    b: int
    face_b: str
    reversed: bool = False


class MultiPatchDomain:
    """Ordered patches glued along full faces."""

    def __init__(self, patches, interfaces=(), name=None):
        self.patches = list(patches)
        self.interfaces = [Interface(*itf) for itf in interfaces]
        self.name = name
        for itf in self.interfaces:
            for patch, face in ((itf.a, itf.face_a), (itf.b, itf.face_b)):
                if not 0 <= patch < len(self.patches):
                    raise ValueError(f"interface refers to missing patch {patch}")
                if face not in FACES:
                    raise ValueError(f"unknown face {face!r}")

    def __repr__(self):
        return f"MultiPatchDomain(name={self.name!r}, patches={len(self.patches)})"

    def __len__(self):
        return len(self.patches)

    @property
    def is_complex(self):
        return any(p.is_complex for p in self.patches)

    def exterior_faces(self):
        glued = set()
        for itf in self.interfaces:
            glued.add((itf.a, itf.face_a))
            glued.add((itf.b, itf.face_b))
        return [(ell, f) for ell in range(len(self.patches)) for f in FACES if (ell, f) not in glued]

    def area(self, n=32):
        """Physical area by tensor Gauss quadrature of ``det J``."""
        from .splines import gauss_legendre
        x, w = gauss_legendre(n)
        total = 0.0
        for patch in self.patches:
            J11, J12, J21, J22 = patch.jacobian(x[:, None], x[None, :])
            total = total + np.sum(w[:, None] * w[None, :] * (J11 * J22 - J12 * J21))
        return total


def jacobian(geom, x1, x2):
    """Jacobian of ``geom`` at reference points, as a ``(..., 2, 2)`` array."""
    J11, J12, J21, J22 = geom.jacobian(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
    return np.stack([np.stack([J11, J12], -1), np.stack([J21, J22], -1)], -2)


PERTURBED_ANNULUS_AMPLITUDE = 0.15


def builtin_geometry(name, **params):
    """Construct one of the built-in benchmark domains by name.

    Names: ``unit_square``, ``affine`` (``A``, ``b``), ``rectangle``
    (``width``, ``height``), ``quarter_annulus``, ``perturbed_annulus``
    (``amplitude``), ``plate_with_hole_2patch``, ``wedge_3patch``,
    ``annulus_ring_4patch``.
    """
    if name == "unit_square":
        return MultiPatchDomain([AffineMap(np.eye(2))], name=name)
    if name == "affine":
        return MultiPatchDomain([AffineMap(params.get("A", np.eye(2)), params.get("b", (0.0, 0.0)))],
                                name=name)
    if name == "rectangle":
        w, ht = float(params.get("width", 1.0)), float(params.get("height", params.get("width", 1.0)))
        return MultiPatchDomain([AffineMap([[w, 0.0], [0.0, ht]])], name=name)
    if name == "quarter_annulus":
        return MultiPatchDomain([AnnulusSector()], name=name)
    if name == "perturbed_annulus":
        a = float(params.get("amplitude", PERTURBED_ANNULUS_AMPLITUDE))
        return MultiPatchDomain([AnnulusSector(bump=a)], name=name)
    if name == "plate_with_hole_2patch":
        patches = [PlateWithHolePatch(upper=False), PlateWithHolePatch(upper=True)]
        return MultiPatchDomain(patches, [(0, "north", 1, "south")], name=name)
    if name == "wedge_3patch":
        patches = [
            BilinearStrip(6.0, (0.0, 0.0), (2.0, 1 / 3)),
            BilinearStrip(6.0, (2.0, 1 / 3), (6.0, -1 / 6)),
            BilinearStrip(6.0, (6.0, -1 / 6), (10.0, 0.0)),
        ]
        return MultiPatchDomain(patches, [(0, "north", 1, "south"), (1, "north", 2, "south")], name=name)
    if name == "annulus_ring_4patch":
        q = np.pi / 2
        patches = [AnnulusSector(theta0=k * q, theta1=(k + 1) * q) for k in range(4)]
        interfaces = [(k, "north", (k + 1) % 4, "south") for k in range(4)]
        return MultiPatchDomain(patches, interfaces, name=name)
    raise ValueError(f"unknown geometry {name!r}")


def pml_wrap(domain, stretch, axes=(0, 1)):
    """Wrap every patch of ``domain`` with the complex stretch on ``axes``."""
    if not isinstance(stretch, PmlStretch):
        stretch = PmlStretch(**stretch)
    patches = [StretchedMap(p, stretch, axes) for p in domain.patches]
    return MultiPatchDomain(patches, domain.interfaces, name=f"{domain.name}+pml")


def face_indices(face, m):
    """Patch-local colex indices of the ``m`` functions on a face, in face order."""
    t = np.arange(m)
    if face == "west":
        return t * m
    if face == "east":
        return (m - 1) + t * m
    if face == "south":
        return t
    if face == "north":
        return t + (m - 1) * m
    raise ValueError(f"unknown face {face!r}")


class DofMap:
    """Patch-local to global DOF numbering with C0 gluing."""

    def __init__(self, local_to_global, n_global):
        self.local_to_global = local_to_global
        self.n_global = n_global

    def __repr__(self):
        return f"DofMap(patches={len(self.local_to_global)}, n_global={self.n_global})"

    @property
    def multiplicity(self):
        counts = np.zeros(self.n_global, dtype=int)
        for idx in self.local_to_global:
            np.add.at(counts, idx, 1)
        return counts

    def scatter(self, u):
        """Global vector -> list of patch-local vectors."""
        u = np.asarray(u)
        return [u[idx] for idx in self.local_to_global]

    def gather(self, parts, average=True):
        """Patch-local vectors -> global vector (averaging shared DOFs)."""
        dtype = np.result_type(*[np.asarray(p).dtype for p in parts])
        out = np.zeros(self.n_global, dtype=dtype)
        for idx, part in zip(self.local_to_global, parts):
            np.add.at(out, idx, part)
        if average:
            out = out / self.multiplicity
        return out


def glue_dofs(domain, basis):
    """Merge coincident interface DOFs of conforming patches.

    Raises ``ValueError`` for a basis with a different number of functions on
    the two sides of an interface (only one basis size is supported, so this
    fires when ``basis`` is a per-patch list of unequal sizes).
    """
    bases = basis if isinstance(basis, (list, tuple)) else [basis] * len(domain.patches)
    sizes = [b.m for b in bases]
    offsets = np.concatenate([[0], np.cumsum([s * s for s in sizes])])
    parent = np.arange(offsets[-1])

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    for itf in domain.interfaces:
        ma, mb = sizes[itf.a], sizes[itf.b]
        if ma != mb:
            raise ValueError(f"non-matching interface between patches {itf.a} and {itf.b}: {ma} vs {mb}")
        ia = offsets[itf.a] + face_indices(itf.face_a, ma)
        ib = offsets[itf.b] + face_indices(itf.face_b, mb)
        if itf.reversed:
            ib = ib[::-1]
        for x, y in zip(ia, ib):
            rx, ry = find(x), find(y)
            if rx != ry:
                parent[max(rx, ry)] = min(rx, ry)

    roots = np.array([find(i) for i in range(offsets[-1])])
    _, first = np.unique(roots, return_index=True)
    order = np.argsort(first)
    renumber = np.empty(offsets[-1], dtype=np.int64)
    uniq_roots = roots[first[order]]
    lookup = dict(zip(uniq_roots.tolist(), range(len(uniq_roots))))
    renumber = np.array([lookup[r] for r in roots.tolist()], dtype=np.int64)
    parts = [renumber[offsets[k]:offsets[k + 1]] for k in range(len(sizes))]
    return DofMap(parts, len(uniq_roots))
