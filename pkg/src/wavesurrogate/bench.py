"""Experiment runner: INI configs in, one CSV plus a text summary out.

A config file holds one section per experiment::

    [convergence]
    kind = convergence
    geometry = quarter_annulus
    p = 2
    q = 5
    m = 16, 32, 64, 128
    k = 8
    sampling = helmholtz

Keys (defaults in brackets):

``kind``
    ``convergence``, ``k_sweep``, ``speedup``, ``pml``, ``wedge`` or
    ``row_audit``.
``geometry`` [quarter_annulus] and ``geometry_params`` (``name=value, ...``)
    Built-in domain.
``p`` [2], ``q`` [5], ``m`` (list), ``k`` (list)
    Degree, interpolation degree, basis sizes, wave numbers.
``sampling`` [fixed], ``M`` [5], ``sampling_params``
    Sample-point strategy (``fixed``, ``helmholtz``, ``pml``,
    ``mesh_dependent``) and its parameters.
``volume_preserving`` [false]
    Use the volume-preserving surrogate mass.
``modes`` [standard, surrogate]
``solution`` [hankel]
    ``hankel`` (point source) or ``sine`` (``sin(c pi x) sin(c pi y)``);
    ``source`` [0, 0] and ``sine_c`` [4] parametrize them.
``pml`` [ell=3, L=4, C=5, n=2]
    Stretch of the ``pml`` kind; the frequency equals ``k``.
``solver_tol`` [1e-10], ``repeat`` [1]

Each (m, k) pair is one cell.  Cells run on a thread pool; timings are
medians over ``repeat`` runs taken inside the worker.
"""
from __future__ import annotations

import configparser
import csv
import io
import math
import os
import statistics
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import helmholtz as hz
from .geometry import PmlStretch, builtin_geometry, pml_wrap
from .splines import TensorBasis
from .surrogate import SAMPLING_STRATEGIES, SurrogateConfig, count_rows_by_kind, select_sample_points

SCHEMA_VERSION = 1
KINDS = ("convergence", "k_sweep", "speedup", "pml", "wedge", "row_audit")
THREADS_ENV = "WAVESURROGATE_THREADS"


def _floats(text):
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _params(text):
    out = {}
    for item in text.replace(";", ",").split(","):
        if not item.strip():
            continue
        key, _, value = item.partition("=")
        out[key.strip()] = float(value)
    return out


@dataclass
class ExperimentConfig:
    """One experiment section of a config file."""

    name: str
    kind: str
    geometry: str = "quarter_annulus"
    geometry_params: dict = field(default_factory=dict)
    p: int = 2
    q: int = 5
    m: list = field(default_factory=list)
    k: list = field(default_factory=list)
    sampling: str = "fixed"
    M: int = 5
    sampling_params: dict = field(default_factory=dict)
    volume_preserving: bool = False
    modes: tuple = ("standard", "surrogate")
    solution: str = "hankel"
    source: tuple = (0.0, 0.0)
    sine_c: float = 4.0
    pml: dict = field(default_factory=lambda: {"ell": 3.0, "L": 4.0, "C": 5.0, "n": 2})
    solver_tol: float = hz.RESIDUAL_TOL
    repeat: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"[{self.name}] unknown kind {self.kind!r}")
        if not self.m:
            raise ValueError(f"[{self.name}] empty m list")
        if self.kind not in ("wedge", "row_audit") and not self.k:
            raise ValueError(f"[{self.name}] empty k list")
        if self.repeat < 1:
            raise ValueError(f"[{self.name}] repeat must be >= 1")
        if self.sampling not in SAMPLING_STRATEGIES:
            raise ValueError(f"[{self.name}] unknown sampling {self.sampling!r}")
        if not set(self.modes) <= {"standard", "surrogate"} or not self.modes:
            raise ValueError(f"[{self.name}] modes must be standard and/or surrogate")
        if self.solution not in ("hankel", "sine"):
            raise ValueError(f"[{self.name}] unknown solution {self.solution!r}")

    @classmethod
    def from_section(cls, name, sec):
        kw = {"name": name, "kind": sec.get("kind", "").strip()}
        if "geometry" in sec:
            kw["geometry"] = sec["geometry"].strip()
        for key in ("geometry_params", "sampling_params", "pml"):
            if key in sec:
                kw[key] = _params(sec[key])
        for key in ("p", "q", "M", "repeat"):
            if key in sec:
                kw[key] = sec.getint(key)
        if "m" in sec:
            kw["m"] = _ints(sec["m"])
        if "k" in sec:
            kw["k"] = _floats(sec["k"])
        if "sampling" in sec:
            kw["sampling"] = sec["sampling"].strip()
        if "volume_preserving" in sec:
            kw["volume_preserving"] = sec.getboolean("volume_preserving")
        if "modes" in sec:
            kw["modes"] = tuple(v.strip() for v in sec["modes"].split(",") if v.strip())
        if "solution" in sec:
            kw["solution"] = sec["solution"].strip()
        if "source" in sec:
            kw["source"] = tuple(_floats(sec["source"]))
        for key in ("sine_c", "solver_tol"):
            if key in sec:
                kw[key] = sec.getfloat(key)
        known = {f.name for f in fields(cls)}
        unknown = set(sec.keys()) - known
        if unknown:
            raise ValueError(f"[{name}] unknown keys: {', '.join(sorted(unknown))}")
        return cls(**kw)

    def surrogate_config(self):
        return SurrogateConfig(q=self.q, M=self.M, strategy=self.sampling, params=dict(self.sampling_params),
                               volume_preserving=self.volume_preserving)

    def cells(self):
        ks = [0.0] if self.kind in ("wedge", "row_audit") else self.k
        return [(m, k) for m in self.m for k in ks]


def load_config(path):
    """Parse an INI file into a list of :class:`ExperimentConfig`."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    with open(path) as fh:
        parser.read_file(fh)
    configs = [ExperimentConfig.from_section(name, parser[name]) for name in parser.sections()]
    if not configs:
        raise ValueError(f"{path}: no experiment sections")
    return configs


@dataclass
class ResultRow:
    """One CSV row: a (mesh, wave number, mode) cell.

    For the wedge, ``k`` is 0 (the wave number is the layered field).
    Standard rows carry ``M = 0``, ``H = 0`` and a quadrature fraction of 1.
    """

    experiment: str
    m: int
    p: int
    q: int
    k: float
    M: int
    H: float
    mode: str
    dofs: int
    assembly_seconds: float
    solve_seconds: float
    L2_rel: float
    H1semi_rel: float
    Hnorm_rel: float
    consistency_Hnorm_rel: float
    quadrature_row_fraction: float
    residual: float
    error: str = ""

    def finite(self):
        return all(math.isfinite(getattr(self, f.name)) for f in fields(self)
                   if isinstance(getattr(self, f.name), float))


COLUMNS = [f.name for f in fields(ResultRow)]


def _median(values):
    return float(statistics.median(values))


def _problem(cfg, k):
    """Domain, problem, exact field and error region of one cell."""
    if cfg.kind == "wedge":
        domain = builtin_geometry("wedge_3patch")
        exact = hz.sine_solution_2d(hz.wedge_wavenumber, cfg.sine_c)
        prob = hz.HelmholtzProblem(domain, hz.wedge_wavenumber, f=exact.f, g=exact.g)
        return prob, exact, hz.wedge_wavenumber, None
    if cfg.kind == "pml":
        pml = dict(cfg.pml)
        width = pml.get("L", 4.0)
        stretch = PmlStretch(ell=pml.get("ell", 3.0), L=width, C=pml.get("C", 5.0),
                             n=int(pml.get("n", 2)), omega=k)
        domain = pml_wrap(builtin_geometry("rectangle", width=width), stretch)
        exact = hz.manufactured_solution_2d(k, cfg.source)
        prob = hz.HelmholtzProblem(domain, k, g=exact.g, dirichlet_faces=[(0, "east"), (0, "north")])
        ell = stretch.ell
        return prob, exact, k, (lambda x, y: ((x <= ell) & (y <= ell)).astype(float))
    domain = builtin_geometry(cfg.geometry, **cfg.geometry_params)
    if cfg.solution == "sine":
        exact = hz.sine_solution_2d(k, cfg.sine_c)
        prob = hz.HelmholtzProblem(domain, k, f=exact.f, g=exact.g)
    else:
        exact = hz.manufactured_solution_2d(k, cfg.source)
        prob = hz.HelmholtzProblem(domain, k, g=exact.g)
    return prob, exact, k, None


def _audit_rows(cfg, m):
    basis = TensorBasis(cfg.p, m)
    sc = cfg.surrogate_config()
    grid = select_sample_points(m, cfg.p, sc.resolve_M(m, cfg.p)) if m - 4 * cfg.p > 0 else None
    counts = count_rows_by_kind(basis, grid)
    return ResultRow(cfg.name, m, cfg.p, cfg.q, 0.0, grid.M if grid else 0, grid.H if grid else 0.0,
                     "surrogate", m * m, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, counts["quadrature_fraction"], 0.0)


def run_cell(cfg, m, k):
    """All rows of one (m, k) cell.  Failures become rows with an error note."""
    if cfg.kind == "row_audit":
        return [_audit_rows(cfg, m)], {}
    basis = TensorBasis(cfg.p, m)
    prob, exact, kn, region = _problem(cfg, k)
    sc = cfg.surrogate_config()
    sols, rows, extra = {}, [], {}
    for mode in cfg.modes:
        try:
            asm, slv, sol, system = [], [], None, None
            for _ in range(cfg.repeat):
                system = hz.build_system(prob, basis, mode, sc if mode == "surrogate" else None)
                sol = hz.solve(system, cfg.solver_tol)
                asm.append(system.assembly_seconds)
                slv.append(sol.solve_seconds)
            errs = hz.error_norms(sol, exact.u, exact.grad, kn, region)
            sols[mode] = sol
            info = system.provenance.get("stiffness", {})
            counts = info.get("counts", {})
            rows.append(ResultRow(
                cfg.name, m, cfg.p, cfg.q, float(k), int(info.get("M", 0)), float(info.get("H", 0.0)), mode,
                int(system.n_dofs), _median(asm), _median(slv), errs["L2_rel"], errs["H1semi_rel"],
                errs["Hnorm_rel"], 0.0, float(counts.get("quadrature_fraction", 1.0)), float(sol.residual)))
        except Exception as exc:  # recorded, run continues
            rows.append(ResultRow(cfg.name, m, cfg.p, cfg.q, float(k), 0, 0.0, mode, 0, 0.0, 0.0,
                                  0.0, 0.0, 0.0, 0.0, 0.0, 0.0, error=f"{type(exc).__name__}: {exc}"))
    if "standard" in sols and "surrogate" in sols:
        ref = hz.field_norms(sols["standard"], kn, region)["Hnorm"]
        diff = hz.consistency_error(sols["standard"], sols["surrogate"], kn, region)
        for row in rows:
            if row.mode == "surrogate" and not row.error:
                row.consistency_Hnorm_rel = diff / ref
        if cfg.kind == "pml":
            extra["pml"] = _pml_location(sols["standard"], sols["surrogate"], prob)
            extra["pml"]["L2_diff_rel"] = hz.relative_difference(
                sols["standard"], sols["surrogate"], kn, region)["L2_rel"]
    return rows, extra


def _pml_location(standard, surrogate, prob, n=401):
    """Where ``|u_h - u~_h|`` peaks on a reference grid, and whether inside the layer."""
    t = np.linspace(0.0, 1.0, n)
    diff = np.abs(hz.evaluate(standard, 0, t, t) - hz.evaluate(surrogate, 0, t, t))
    i, j = np.unravel_index(np.argmax(diff), diff.shape)
    geom = prob.domain.patches[0]
    x, y = geom.real_map()(t[i], t[j])
    ell = geom.stretch.ell
    return {"x": float(x), "y": float(y), "max_diff": float(diff[i, j]),
            "in_layer": bool(x > ell or y > ell)}


def slope(hs, errors):
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    hs, errors = np.log(np.asarray(hs, float)), np.log(np.asarray(errors, float))
    return float(np.polyfit(hs, errors, 1)[0])


def speedup_report(rows):
    """Assembly speed-up ``100 (t_std / t_surr - 1)`` per (experiment, m, k).

    Raises ``ValueError`` when a surrogate row has no standard partner.
    """
    std = {(r.experiment, r.m, r.k): r for r in rows if r.mode == "standard" and not r.error}
    out = {}
    for r in rows:
        if r.mode != "surrogate" or r.error:
            continue
        key = (r.experiment, r.m, r.k)
        if key not in std:
            raise ValueError(f"no standard row paired with {key}")
        out[key] = speedup_percent(std[key].assembly_seconds, r.assembly_seconds)
    return out


def speedup_percent(t_standard, t_surrogate):
    return 100.0 * (t_standard / t_surrogate - 1.0)


def summarize(cfg, rows, extras):
    """Human-readable lines for one experiment."""
    lines = [f"[{cfg.name}] kind={cfg.kind} geometry={cfg.geometry if cfg.kind not in ('pml', 'wedge') else cfg.kind}"]
    good = [r for r in rows if not r.error]
    for r in rows:
        if r.error:
            lines.append(f"  FAILED m={r.m} k={r.k:g} mode={r.mode}: {r.error}")
    if cfg.kind == "row_audit":
        for r in good:
            lines.append(f"  m={r.m} M={r.M} quadrature rows {100 * r.quadrature_row_fraction:.2f}%")
        return lines
    if cfg.kind == "convergence":
        for mode in cfg.modes:
            sel = sorted((r for r in good if r.mode == mode), key=lambda r: r.m)
            for k in sorted({r.k for r in sel}):
                pts = [r for r in sel if r.k == k]
                if len(pts) >= 2:
                    s = slope([1.0 / (r.m - r.p) for r in pts], [r.Hnorm_rel for r in pts])
                    lines.append(f"  {mode} k={k:g}: Hnorm slope {s:.3f}")
    if cfg.kind == "k_sweep":
        for m in sorted({r.m for r in good}):
            cons = [r.consistency_Hnorm_rel for r in good if r.m == m and r.mode == "surrogate"]
            if cons and min(cons) > 0:
                lines.append(f"  m={m}: consistency max/min over k = {max(cons) / min(cons):.3f}")
    try:
        for (_, m, k), pct in sorted(speedup_report(good).items()):
            lines.append(f"  m={m} k={k:g}: assembly speed-up {pct:.1f}%")
    except ValueError as exc:
        lines.append(f"  speed-up unavailable: {exc}")
    for (m, k), ex in sorted(extras.items()):
        if "pml" in ex:
            e = ex["pml"]
            lines.append(f"  m={m} k={k:g}: L2 difference in region {e['L2_diff_rel']:.3e}; max |diff| "
                         f"{e['max_diff']:.3e} at ({e['x']:.3f}, {e['y']:.3f}) in layer: {e['in_layer']}")
    return lines


def default_threads():
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return 1


def run(configs, out_dir=".", threads=None, repeat=None):
    """Run every experiment, write ``results.csv`` and ``summary.txt``.

    Returns ``(rows, summary_lines, ok)``; ``ok`` is false if any cell failed.
    """
    if isinstance(configs, ExperimentConfig):
        configs = [configs]
    if repeat is not None:
        for c in configs:
            c.repeat = int(repeat)
            c.__post_init__()
    threads = default_threads() if threads is None else max(1, int(threads))
    tasks = [(c, m, k) for c in configs for (m, k) in c.cells()]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_safe_cell, c, m, k) for c, m, k in tasks]
        results = [f.result() for f in futures]
    rows, summary = [], []
    for c in configs:
        crow, cextra = [], {}
        for (cc, m, k), (r, ex) in zip(tasks, results):
            if cc is c:
                crow.extend(r)
                if ex:
                    cextra[(m, k)] = ex
        rows.extend(crow)
        summary.extend(summarize(c, crow, cextra))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(rows, out / "results.csv")
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    ok = all(not r.error and r.finite() for r in rows)
    return rows, summary, ok


def _safe_cell(cfg, m, k):
    try:
        return run_cell(cfg, m, k)
    except Exception:
        note = traceback.format_exc(limit=1).strip().splitlines()[-1]
        return [ResultRow(cfg.name, m, cfg.p, cfg.q, float(k), 0, 0.0, mode, 0, 0.0, 0.0, 0.0, 0.0, 0.0,
                          0.0, 0.0, 0.0, error=note) for mode in cfg.modes], {}


def write_csv(rows, path):
    """CSV with a ``#schema=1`` comment line before the header."""
    buf = io.StringIO()
    buf.write(f"#schema={SCHEMA_VERSION}\n")
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        d = asdict(r)
        writer.writerow({c: (repr(v) if isinstance(v, float) else v) for c, v in d.items()})
    Path(path).write_text(buf.getvalue())


def read_csv(path):
    """Rows of a CSV written by :func:`write_csv`."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != f"#schema={SCHEMA_VERSION}":
        raise ValueError(f"{path}: missing or unsupported schema line")
    out = []
    for d in csv.DictReader(lines[1:]):
        kw = {}
        for f in fields(ResultRow):
            v = d[f.name]
            kw[f.name] = int(v) if f.type in ("int", int) else float(v) if f.type in ("float", float) else v
        out.append(ResultRow(**kw))
    return out


def audit(configs):
    """Row-count audit lines for every experiment and mesh of ``configs``."""
    lines = []
    for c in configs:
        for m in c.m:
            if m <= 2 * c.p:
                lines.append(f"[{c.name}] m={m}: no cardinal functions")
                continue
            basis = TensorBasis(c.p, m)
            grid = None
            if m - 4 * c.p > 0:
                grid = select_sample_points(m, c.p, c.surrogate_config().resolve_M(m, c.p))
            counts = count_rows_by_kind(basis, grid)
            lines.append(
                f"[{c.name}] m={m} p={c.p} M={grid.M if grid else 0}: total={counts['total_rows']} "
                f"boundary={counts['boundary_quadrature_rows']} (noncardinal={counts['noncardinal_rows']}) "
                f"samples={counts['sample_quadrature_rows']} evaluated={counts['cardinal_eval_rows']} "
                f"quadrature={100 * counts['quadrature_fraction']:.2f}%")
    return lines
