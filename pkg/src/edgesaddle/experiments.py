"""Right-hand sides, single solves and parameter sweeps.

A sweep is described by a :class:`SweepSpec` (loadable from JSON) and
produces one :class:`SweepRow` per (mesh, k, eta, run, rhs) cell.  Rows are
emitted in grid order regardless of the order in which cells finish.
"""
from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .krylov import SolveReport, minres, pcg
from .mesh import gen_lshape, gen_square
from .saddle import (
    EXACT,
    InnerPolicy,
    PreconditionerConfig,
    build_system,
    direct_solve_k0,
    make_preconditioner,
)

__all__ = [
    "RHS_KINDS",
    "build_rhs",
    "solve_case",
    "make_mesh",
    "mesh_name",
    "SweepSpec",
    "SweepRow",
    "run_sweep",
    "rows_to_csv",
    "CSV_COLUMNS",
]

RHS_KINDS = ("ones", "df0g", "rf0g", "rfrg")
METHODS = ("cg", "minres")
DIRECT_TOL = 1e-8

CSV_COLUMNS = ("mesh", "k", "eta", "precond", "method", "rhs", "iters", "converged",
               "breakdown", "lambda_min", "error", "time")


def build_rhs(sys, kind="ones", seed=0):
    """Right-hand side ``(f, g)``.

    ``ones``: all entries one.  ``df0g``: ``f = (I - B^T L^{-1} C^T) f0`` for a
    seeded uniform ``f0`` (so ``C^T f = 0``) and ``g = 0``.  ``rf0g``: uniform
    ``f``, ``g = 0``.  ``rfrg``: both uniform.
    """
    if kind not in RHS_KINDS:
        raise ValueError(f"unknown right-hand side {kind!r}; choose from {RHS_KINDS}")
    if kind == "ones":
        return np.ones(sys.n), np.ones(sys.m)
    rng = np.random.default_rng(seed)
    f = rng.uniform(size=sys.n)
    g = rng.uniform(size=sys.m) if kind == "rfrg" else np.zeros(sys.m)
    if kind == "df0g" and sys.m:
        f = f - sys.B.T @ sys.solver("L", EXACT).solve(sys.C.T @ f)
    return f, g


def _with_inner_tol(config, inner_tol):
    if inner_tol is None:
        return config
    inner = config.inner
    if inner.kind == "exact":
        inner = InnerPolicy("chebyshev", float(inner_tol), precond="jacobi")
    else:
        inner = replace(inner, tol=float(inner_tol))
    return replace(config, inner=inner)


def solve_case(sys, config, method="cg", rhs_kind="ones", tol=1e-6, inner_tol=None,
               seed=0, max_it=200):
    """Solve one system with one preconditioner and Krylov method from a zero initial guess.

    ``inner_tol`` overrides the tolerance of ``config.inner``; with exact inner
    solves it switches to Chebyshev inner iterations at that tolerance.
    Outer CG runs in flexible mode when the inner solves are tolerance-stopped
    CG (a nonlinear preconditioner).  Failures inside the iteration are
    reported in the returned :class:`SolveReport`, not raised.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    config = _with_inner_tol(config, inner_tol)
    f, g = build_rhs(sys, rhs_kind, seed)
    echo = {
        "precond": config.to_dict(), "method": method, "rhs": rhs_kind, "seed": seed,
        "tol": tol, "max_it": max_it, "n": sys.n, "m": sys.m, "k": sys.k,
        "eta": config.resolved_eta(sys.k) if config.kind != "DirectK0" else None,
    }

    if config.kind == "DirectK0":
        start = time.perf_counter()
        res = direct_solve_k0(sys, f, g)
        report = SolveReport("direct-k0", res.inner_iterations, [res.relative_residual],
                             res.relative_residual <= DIRECT_TOL, config=echo,
                             x=np.concatenate([res.u, res.p]))
        if not res.inner_converged:
            report.warnings.append("inner CG on the singular curl-curl system stagnated")
        report.wall_time = time.perf_counter() - start
        return report

    pc = make_preconditioner(sys, config)
    b = np.concatenate([f, g])
    warnings = []
    if not pc.symmetric and pc.ip.kind == "euclidean":
        warnings.append("experimental: non-symmetric preconditioner in the euclidean inner product")
    if not config.inner.linear and method == "minres":
        warnings.append("tolerance-stopped inner CG makes the preconditioner nonlinear")
    flexible = method == "cg" and not config.inner.linear
    solver = pcg if method == "cg" else minres
    kwargs = {"flexible": True} if flexible else {}
    report = solver(pc.operator, pc.apply, b, ip=pc.ip, tol=tol, max_it=max_it, **kwargs)
    report.method = f"{config.kind}-{method}"
    report.config = {**echo, **report.config, "inner_stats": pc.inner_stats()}
    report.warnings = warnings + report.warnings
    return report


def make_mesh(domain, level, grading=1.0):
    if domain == "square":
        return gen_square(level, grading)
    if domain == "lshape":
        return gen_lshape(level, grading)
    raise ValueError(f"unknown domain {domain!r}")


def mesh_name(domain, level, grading):
    return f"{domain}-L{level}-g{grading:g}"


@dataclass
class SweepSpec:
    """A grid of solves.

    ``eta`` is either ``{"k2plus": [c1, c2, ...]}`` (``eta = k^2 + c``) or
    ``{"values": [...]}`` (the same explicit values for every ``k``).
    ``runs`` pairs a preconditioner config (without ``eta``) with a method.
    """

    domain: str = "square"
    levels: list = field(default_factory=lambda: [1, 2, 3])
    grading: float = 1.0
    ks: list = field(default_factory=lambda: [0.0, 1.0, 2.0, 4.0])
    eta: dict = field(default_factory=lambda: {"k2plus": [1.0]})
    runs: list = field(default_factory=lambda: [{"precond": {"kind": "P"}, "method": "cg"},
                                                {"precond": {"kind": "Mdiag"}, "method": "minres"}])
    rhs: list = field(default_factory=lambda: ["ones"])
    tol: float = 1e-6
    inner: str = "exact"
    max_it: int = 200
    seed: int = 0
    lambda_min: bool = False
    output: str | None = None
    title: str = ""

    def __post_init__(self):
        if not self.levels or not self.ks or not self.runs or not self.rhs:
            raise ValueError("levels, ks, runs and rhs must be non-empty")
        if not self.tol > 0:
            raise ValueError("outer tolerance must be positive")
        if set(self.eta) not in ({"k2plus"}, {"values"}) or not list(self.eta.values())[0]:
            raise ValueError('eta must be {"k2plus": [...]} or {"values": [...]}')
        make_mesh(self.domain, 1, self.grading)
        InnerPolicy.parse(self.inner)
        for run in self.runs:
            if run.get("method") not in METHODS:
                raise ValueError(f"run {run} needs a method in {METHODS}")
            PreconditionerConfig.from_dict({**run["precond"], "inner": self.inner})
        for kind in self.rhs:
            if kind not in RHS_KINDS:
                raise ValueError(f"unknown right-hand side {kind!r}")

    def etas(self, k):
        if "k2plus" in self.eta:
            return [k * k + float(c) for c in self.eta["k2plus"]]
        return [float(v) for v in self.eta["values"]]

    def cells(self):
        for level in self.levels:
            for k in self.ks:
                for eta in self.etas(k):
                    for run in self.runs:
                        for rhs in self.rhs:
                            yield level, float(k), eta, run, rhs

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown sweep fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_dict(self):
        return asdict(self)


@dataclass
class SweepRow:
    mesh: str
    k: float
    eta: float
    precond: str
    method: str
    rhs: str
    iters: int | None
    converged: bool
    breakdown: bool
    lambda_min: float | None
    error: str
    time: float

    def as_csv(self):
        def num(x):
            return "" if x is None else f"{x:.10g}"
        return [self.mesh, num(self.k), num(self.eta), self.precond, self.method, self.rhs,
                "" if self.iters is None else str(self.iters), str(self.converged).lower(),
                str(self.breakdown).lower(), num(self.lambda_min), self.error, f"{self.time:.4f}"]


def _precond_label(pdict):
    kind = pdict["kind"]
    if kind == "Mtri":
        return f"Mtri(eps={pdict.get('epsilon')})"
    if kind == "PD" and pdict.get("d_scale") is not None:
        return f"PD(d={pdict['d_scale']})"
    return kind


def _run_cell(spec, systems, lam_cache, cell):
    level, k, eta, run, rhs = cell
    name = mesh_name(spec.domain, level, spec.grading)
    pdict = dict(run["precond"])
    start = time.perf_counter()
    lam = None
    try:
        sys = systems[level].with_k(k)
        if spec.lambda_min:
            key = (level, k, eta)
            if key not in lam_cache:
                from .spectral import lambda_min_Aeta
                lam_cache[key] = lambda_min_Aeta(sys, eta)
            lam = lam_cache[key]
        config = PreconditionerConfig.from_dict({**pdict, "eta": eta, "inner": spec.inner})
        rep = solve_case(sys, config, run["method"], rhs, spec.tol, seed=spec.seed, max_it=spec.max_it)
        return SweepRow(name, k, eta, _precond_label(pdict), run["method"], rhs, rep.iterations,
                        rep.converged, rep.breakdown, lam, "", time.perf_counter() - start)
    except Exception as exc:  # recorded in-row; the sweep continues
        return SweepRow(name, k, eta, _precond_label(pdict), run["method"], rhs, None, False, False,
                        lam, f"{type(exc).__name__}: {exc}", time.perf_counter() - start)


def run_sweep(spec, jobs=1):
    """Run every cell of ``spec``; ``jobs`` cells run concurrently."""
    systems = {level: build_system(make_mesh(spec.domain, level, spec.grading)) for level in spec.levels}
    lam_cache = {}
    cells = list(spec.cells())
    if jobs <= 1:
        return [_run_cell(spec, systems, lam_cache, c) for c in cells]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda c: _run_cell(spec, systems, lam_cache, c), cells))


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow(row.as_csv())
    return buf.getvalue()

