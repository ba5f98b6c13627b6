"""Helmholtz problems with impedance and Dirichlet conditions on spline domains.

The discrete system is ``A = K - M_{k^2} - i B_k`` with stiffness ``K``, mass
``M`` weighted by ``k^2`` and boundary mass ``B`` weighted by ``k`` on the
impedance faces.  For constant ``k`` this is ``K - k^2 M - i k B``.  In
surrogate mode ``K`` and ``M`` are replaced by their surrogates while ``B``
stays exact.

Sign conventions: ``-lap u - k^2 u = f`` in the domain and
``du/dn - i k u = g`` on impedance faces, with test functions not conjugated
(the basis is real).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import specfun
from .assembly import (assemble_boundary_mass, assemble_mass, assemble_rhs,
                       assemble_stiffness)
from .geometry import face_indices, glue_dofs
from .splines import collocation_matrix, gauss_legendre
from .surrogate import SurrogateConfig, surrogate_matrix

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    """Raised when a solve misses the residual contract."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass
class HelmholtzProblem:
    """Helmholtz boundary value problem on a multi-patch domain.

    Attributes:
        domain: Domain, possibly with complex-stretched patches.
        k: Constant wave number or callable ``k(x, y)`` on real coordinates.
        f: Source ``f(x, y)``, or ``None`` for zero.
        g: Impedance data ``g(x, y, nx, ny)``, or ``None`` for zero.
        dirichlet_faces: ``(patch, face)`` pairs with ``u = 0``.
        impedance_faces: ``(patch, face)`` pairs with impedance conditions;
            defaults to every exterior face that is not Dirichlet.
    """

    domain: object
    k: object
    f: object = None
    g: object = None
    dirichlet_faces: tuple = ()
    impedance_faces: tuple = None

    def __post_init__(self):
        self.dirichlet_faces = tuple(tuple(f) for f in self.dirichlet_faces)
        if self.impedance_faces is None:
            self.impedance_faces = tuple(f for f in self.domain.exterior_faces()
                                         if f not in self.dirichlet_faces)
        else:
            self.impedance_faces = tuple(tuple(f) for f in self.impedance_faces)
        if not callable(self.k) and not float(self.k) > 0 and self.impedance_faces:
            raise ValueError("impedance conditions need a positive wave number")

    @property
    def variable_k(self):
        return callable(self.k)

    def k_squared(self):
        k = self.k
        return (lambda x, y: np.asarray(k(x, y)) ** 2) if self.variable_k else float(k) ** 2


@dataclass
class AssembledSystem:
    """System matrix and load vector with Dirichlet rows eliminated.

    Attributes:
        A: Reduced CSR matrix on the free DOFs.
        b: Reduced load vector.
        free: Global indices of the free DOFs.
        n_dofs: Number of global DOFs before elimination.
        mode: ``"standard"`` or ``"surrogate"``.
        timings: Seconds spent on each assembled matrix.
        provenance: Surrogate records per form (empty for standard mode).
    """

    A: sp.csr_matrix
    b: np.ndarray
    free: np.ndarray
    n_dofs: int
    mode: str
    basis: object = field(repr=False, default=None)
    domain: object = field(repr=False, default=None)
    timings: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def assembly_seconds(self):
        return sum(self.timings.get(key, 0.0) for key in ("stiffness", "mass", "boundary"))


@dataclass
class DiscreteSolution:
    """Global coefficient vector ``u`` of ``u_h = sum_i u_i B_i``."""

    u: np.ndarray
    basis: object = field(repr=False)
    domain: object = field(repr=False)
    residual: float = 0.0
    solve_seconds: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.u)):
            raise ValueError("solution has non-finite entries")


def dirichlet_dofs(domain, basis, faces):
    """Global DOF indices on the given ``(patch, face)`` pairs."""
    dofmap = glue_dofs(domain, basis)
    out = [dofmap.local_to_global[ell][face_indices(face, basis.m)] for ell, face in faces]
    return np.unique(np.concatenate(out)) if out else np.zeros(0, dtype=np.int64)


def build_system(problem, basis, mode="standard", config=None):
    """Assemble the (reduced) Helmholtz system.

    Args:
        problem: :class:`HelmholtzProblem`.
        basis: Tensor basis shared by all patches.
        mode: ``"standard"`` or ``"surrogate"``.
        config: :class:`SurrogateConfig` for surrogate mode.
    """
    if mode not in ("standard", "surrogate"):
        raise ValueError(f"unknown mode {mode!r}")
    domain = problem.domain
    timings, prov = {}, {}
    k2 = problem.k_squared()
    t = time.perf_counter()
    if mode == "standard":
        K = assemble_stiffness(domain, basis)
    else:
        config = SurrogateConfig() if config is None else config
        K, prov["stiffness"] = surrogate_matrix(domain, basis, "stiffness", config)
    timings["stiffness"] = time.perf_counter() - t
    t = time.perf_counter()
    weight = k2 if problem.variable_k else None
    if mode == "standard":
        M = assemble_mass(domain, basis, weight=weight)
    else:
        form = "weighted_mass" if problem.variable_k else "mass"
        M, prov["mass"] = surrogate_matrix(domain, basis, form, config, weight=weight)
    timings["mass"] = time.perf_counter() - t
    t = time.perf_counter()
    if problem.impedance_faces:
        B = assemble_boundary_mass(domain, basis, weight=problem.k if problem.variable_k else None,
                                   faces=problem.impedance_faces)
    else:
        B = sp.csr_matrix(K.shape)
    timings["boundary"] = time.perf_counter() - t
    if problem.variable_k:
        A = K - M - 1j * B
    else:
        A = K - k2 * M - 1j * float(problem.k) * B
    t = time.perf_counter()
    b = assemble_rhs(domain, basis, problem.f, problem.g, faces=problem.impedance_faces)
    timings["rhs"] = time.perf_counter() - t
    n = A.shape[0]
    fixed = dirichlet_dofs(domain, basis, problem.dirichlet_faces)
    free = np.setdiff1d(np.arange(n), fixed)
    A = sp.csr_matrix(A, dtype=complex)
    if len(fixed):
        A = A[free][:, free]
        b = b[free]
    return AssembledSystem(A=A.tocsr(), b=np.asarray(b, dtype=complex), free=free, n_dofs=n,
                           mode=mode, basis=basis, domain=domain, timings=timings, provenance=prov)


def relative_residual(A, u, b):
    nb = np.linalg.norm(b)
    r = np.linalg.norm(A @ u - b)
    return r / nb if nb > 0 else r


def solve_sparse(A, b, tol=RESIDUAL_TOL, refine=2):
    """Sparse LU solve with residual check and iterative refinement.

    Returns ``(u, residual)``; raises :class:`SolverError` when the relative
    residual stays above ``tol``.
    """
    A = sp.csc_matrix(A)
    dtype = np.result_type(A.dtype, np.asarray(b).dtype)
    try:
        lu = spla.splu(A.astype(dtype))
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}", np.inf) from exc
    u = lu.solve(np.asarray(b, dtype=dtype))
    res = relative_residual(A, u, b)
    for _ in range(refine):
        if res <= tol or not np.isfinite(res):
            break
        u = u + lu.solve(b - A @ u)
        res = relative_residual(A, u, b)
    if not np.isfinite(res) or res > tol:
        raise SolverError("linear solve missed the residual tolerance", res)
    return u, res


def solve(system, tol=RESIDUAL_TOL):
    """Solve an :class:`AssembledSystem` and expand to all global DOFs."""
    t = time.perf_counter()
    ured, res = solve_sparse(system.A, system.b, tol)
    u = np.zeros(system.n_dofs, dtype=complex)
    u[system.free] = ured
    return DiscreteSolution(u=u, basis=system.basis, domain=system.domain, residual=res,
                            solve_seconds=time.perf_counter() - t)


@dataclass
class ManufacturedSolution:
    """Exact field with gradient and matching data ``f`` and ``g``."""

    u: object
    grad: object
    f: object
    g: object


def manufactured_solution_2d(k, source=(0.0, 0.0)):
    """Outgoing point-source field ``u = (i/4) H0(k r)`` with ``f = 0``.

    ``g = du/dn - i k u`` is returned for use on impedance faces.  ``r`` is
    the distance to ``source``, which must lie outside the domain.
    """
    k = float(k)
    x0, y0 = source

    def _r(x, y):
        r = np.hypot(np.asarray(x) - x0, np.asarray(y) - y0)
        if np.any(r == 0):
            raise ValueError("point-source field is singular at the source")
        return r

    def u(x, y):
        return 0.25j * specfun.hankel1(0, k * _r(x, y))

    def grad(x, y):
        r = _r(x, y)
        c = -0.25j * k * specfun.hankel1(1, k * r) / r
        return c * (np.asarray(x) - x0), c * (np.asarray(y) - y0)

    def g(x, y, nx, ny):
        gx, gy = grad(x, y)
        return gx * nx + gy * ny - 1j * k * u(x, y)

    return ManufacturedSolution(u=u, grad=grad, f=None, g=g)


def sine_solution_2d(k, c=4.0):
    """``u = sin(c pi x) sin(c pi y)`` with data for wave number ``k`` (constant or field)."""
    w = c * np.pi
    kf = k if callable(k) else (lambda x, y, _k=float(k): _k)

    def u(x, y):
        return np.sin(w * x) * np.sin(w * y)

    def grad(x, y):
        return w * np.cos(w * x) * np.sin(w * y), w * np.sin(w * x) * np.cos(w * y)

    def f(x, y):
        return (2 * w * w - np.asarray(kf(x, y)) ** 2) * u(x, y)

    def g(x, y, nx, ny):
        gx, gy = grad(x, y)
        return gx * nx + gy * ny - 1j * np.asarray(kf(x, y)) * u(x, y)

    return ManufacturedSolution(u=u, grad=grad, f=f, g=g)


def wedge_wavenumber(x, y):
    """Piecewise wave number of the layered wedge on ``(0, 6) x (0, 10)``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    lower = y < x / 3 + 2
    upper = y >= 6 - x / 6
    mid = 5 * np.sin(2 * np.pi * y) + 15
    out = np.where(lower, 20.0, np.where(upper, 30.0, mid))
    return out[()] if out.ndim == 0 else out


def _patch_fields(solution, geom_index, nq):
    """Quadrature data and ``u_h``, ``grad u_h`` on one patch (real geometry)."""
    basis, domain = solution.basis, solution.domain
    dofmap = glue_dofs(domain, basis)
    m, p, h = basis.m, basis.p, basis.h
    ne = basis.n_elements
    nodes, weights = gauss_legendre(nq)
    t = ((np.arange(ne)[:, None] + nodes[None, :]) * h).ravel()
    wt = (np.broadcast_to(weights, (ne, nq)) * h).ravel()
    knots = basis.kv.knots
    V = collocation_matrix(knots, p, t)
    D = collocation_matrix(knots, p, t, deriv=1)
    C = solution.u[dofmap.local_to_global[geom_index]].reshape(m, m, order="F")
    uh = V @ C @ V.T
    du1 = D @ C @ V.T
    du2 = V @ C @ D.T
    geom = domain.patches[geom_index].real_map()
    X, Y = geom(t[:, None], t[None, :])
    J11, J12, J21, J22 = (np.broadcast_to(c, uh.shape) for c in geom.jacobian(t[:, None], t[None, :]))
    det = J11 * J22 - J12 * J21
    # physical gradient: J^{-T} times the reference gradient
    gx = (J22 * du1 - J21 * du2) / det
    gy = (-J12 * du1 + J11 * du2) / det
    dx = np.abs(det) * wt[:, None] * wt[None, :]
    return np.broadcast_to(X, uh.shape), np.broadcast_to(Y, uh.shape), dx, uh, gx, gy


def _k_field(k, X, Y):
    return np.broadcast_to(np.asarray(k(X, Y)) if callable(k) else float(k), X.shape)


def _norm_parts(solution, u, grad, k, region, nq):
    """Squared L2, H1-seminorm and k-weighted L2 of the error and the exact field."""
    err = np.zeros(3)
    ref = np.zeros(3)
    p = solution.basis.p
    nq = p + 2 if nq is None else nq
    for ell in range(len(solution.domain.patches)):
        X, Y, dx, uh, gx, gy = _patch_fields(solution, ell, nq)
        if region is not None:
            dx = dx * region(X, Y)
        kk = _k_field(k, X, Y) if k is not None else np.ones_like(X)
        ue = np.zeros_like(uh) if u is None else np.broadcast_to(u(X, Y), uh.shape)
        ge = (np.zeros_like(uh), np.zeros_like(uh)) if grad is None else grad(X, Y)
        e0 = np.abs(uh - ue) ** 2
        e1 = np.abs(gx - ge[0]) ** 2 + np.abs(gy - ge[1]) ** 2
        r0 = np.abs(ue) ** 2
        r1 = np.abs(ge[0]) ** 2 + np.abs(ge[1]) ** 2
        err += [np.sum(dx * e0), np.sum(dx * e1), np.sum(dx * kk ** 2 * e0)]
        ref += [np.sum(dx * r0), np.sum(dx * r1), np.sum(dx * kk ** 2 * r0)]
    return err, ref


def error_norms(solution, u, grad, k=1.0, region=None, nq=None):
    """Relative errors of ``u_h`` against an exact field.

    Quadrature uses ``p + 2`` Gauss points per direction on every element of
    the real (unstretched) geometry.

    Args:
        solution: :class:`DiscreteSolution`.
        u: Exact field ``u(x, y)``.
        grad: Exact gradient ``grad(x, y) -> (ux, uy)``.
        k: Wave number (constant or field) of the k-weighted norm
            ``|grad v|^2 + k^2 |v|^2``.
        region: Optional indicator ``region(x, y)`` restricting the integrals.

    Returns:
        Dict with ``L2_rel``, ``H1semi_rel`` and ``Hnorm_rel``.
    """
    err, ref = _norm_parts(solution, u, grad, k, region, nq)
    href = ref[1] + ref[2]
    if ref[0] == 0 or href == 0:
        raise ValueError("exact solution has zero norm")
    return {
        "L2_rel": float(np.sqrt(err[0] / ref[0])),
        "H1semi_rel": float(np.sqrt(err[1] / ref[1])) if ref[1] > 0 else float(np.sqrt(err[1])),
        "Hnorm_rel": float(np.sqrt((err[1] + err[2]) / href)),
    }


def field_norms(solution, k=1.0, region=None, nq=None):
    """Absolute ``L2``, ``H1semi`` and k-weighted norms of ``u_h``."""
    # against a zero field the "error" is u_h itself
    err, _ = _norm_parts(solution, None, None, k, region, nq)
    return {"L2": float(np.sqrt(err[0])), "H1semi": float(np.sqrt(err[1])),
            "Hnorm": float(np.sqrt(err[1] + err[2]))}


def _check_same_space(a, b):
    if a.basis.m != b.basis.m or a.basis.p != b.basis.p or a.domain is not b.domain or a.u.shape != b.u.shape:
        raise ValueError("solutions live in different discrete spaces")


def consistency_error(standard, surrogate, k, region=None, nq=None):
    """k-weighted norm of ``u_h - u~_h`` (absolute)."""
    _check_same_space(standard, surrogate)
    diff = DiscreteSolution(u=standard.u - surrogate.u, basis=standard.basis, domain=standard.domain)
    return field_norms(diff, k, region, nq)["Hnorm"]


def relative_difference(standard, surrogate, k=1.0, region=None, nq=None):
    """Relative ``L2`` and k-weighted differences of two discrete solutions."""
    _check_same_space(standard, surrogate)
    diff = DiscreteSolution(u=standard.u - surrogate.u, basis=standard.basis, domain=standard.domain)
    d = field_norms(diff, k, region, nq)
    s = field_norms(standard, k, region, nq)
    return {"L2_rel": d["L2"] / s["L2"], "Hnorm_rel": d["Hnorm"] / s["Hnorm"]}


def evaluate(solution, patch, x1, x2):
    """``u_h`` on the tensor grid ``x1 x x2`` of reference points of one patch."""
    basis = solution.basis
    dofmap = glue_dofs(solution.domain, basis)
    m, p = basis.m, basis.p
    C = solution.u[dofmap.local_to_global[patch]].reshape(m, m, order="F")
    V1 = collocation_matrix(basis.kv.knots, p, np.asarray(x1, dtype=float))
    V2 = collocation_matrix(basis.kv.knots, p, np.asarray(x2, dtype=float))
    return V1 @ C @ V2.T
