"""Command-line driver: ``edgesaddle {solve,sweep,verify,mesh,spectrum}``.

Exit codes: 0 success, 1 usage error, 2 a solve that did not converge (or
broke down) or a verification suite that failed.

Relative output paths are resolved against ``$EDGESADDLE_OUTPUT_DIR`` when
that variable is set.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import genspd, saddle, spectral
from .experiments import RHS_KINDS, SweepSpec, make_mesh, mesh_name, rows_to_csv, run_sweep, solve_case
from .linalg import write_matrix_market
from .mesh import mesh_stats, write_triangle
from .saddle import InnerPolicy, PreconditionerConfig, build_system

OUTPUT_ENV = "EDGESADDLE_OUTPUT_DIR"
PRECOND_CHOICES = {"P": "P", "Mtri": "Mtri", "Mdiag": "Mdiag", "P0": "P0", "PD": "PD", "directk0": "DirectK0"}
SUITES = ("structure", "inverse", "spectral", "appendix", "all")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _output_path(path):
    p = Path(path)
    base = os.environ.get(OUTPUT_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _emit(text, out):
    if out:
        _output_path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serialisable: {type(x).__name__}")


def list_presets():
    return sorted(p.name[:-5] for p in resources.files("edgesaddle.presets").iterdir()
                  if p.name.endswith(".json"))


def load_preset(name):
    path = resources.files("edgesaddle.presets") / f"{name}.json"
    if not path.is_file():
        raise UsageError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    return json.loads(path.read_text())


def _add_mesh_args(p, level=3):
    p.add_argument("--domain", choices=("square", "lshape"), default="square")
    p.add_argument("--level", type=int, default=level)
    p.add_argument("--grading", type=float, default=1.0)


def _mesh(args):
    if args.level < 1:
        raise UsageError("--level must be >= 1")
    if not 0 < args.grading <= 1:
        raise UsageError("--grading must lie in (0, 1]")
    return make_mesh(args.domain, args.level, args.grading)


# --------------------------------------------------------------------- solve

def cmd_solve(args):
    kind = PRECOND_CHOICES[args.precond]
    if kind == "DirectK0" and args.k != 0:
        raise UsageError("--precond directk0 requires --k 0")
    if kind == "Mtri" and args.epsilon is None:
        raise UsageError("--precond Mtri requires --epsilon")
    if args.tol <= 0:
        raise UsageError("--tol must be positive")
    try:
        inner = InnerPolicy.parse(args.inner)
        config = PreconditionerConfig(kind, eta=args.eta, epsilon=args.epsilon,
                                      d_scale=args.d_scale, inner=inner)
        sys_ = build_system(_mesh(args), args.k)
        if kind in ("P", "Mtri", "Mdiag") and config.resolved_eta(args.k) <= args.k ** 2:
            raise UsageError("--eta must exceed k^2")
        report = solve_case(sys_, config, args.method, args.rhs, args.tol, seed=args.seed,
                            max_it=args.max_it)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = report.to_dict()
    out["mesh"] = mesh_name(args.domain, args.level, args.grading)
    if not args.keep_history:
        out["relative_residuals"] = out["relative_residuals"][-1:]
    _emit(_json(out), args.out)
    return 0 if report.converged and not report.breakdown else 2


# --------------------------------------------------------------------- sweep

def cmd_sweep(args):
    if args.list:
        print("\n".join(list_presets()))
        return 0
    if bool(args.preset) == bool(args.spec):
        raise UsageError("give exactly one of --preset or --spec")
    data = load_preset(args.preset) if args.preset else json.loads(Path(args.spec).read_text())
    if args.levels:
        data["levels"] = args.levels
    if args.inner:
        data["inner"] = args.inner
    try:
        spec = SweepSpec.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid sweep spec: {exc}") from exc
    rows = run_sweep(spec, jobs=args.jobs)
    _emit(rows_to_csv(rows), args.out or spec.output)
    return 0


# --------------------------------------------------------------------- verify

def _suite_structure(args):
    if args.domain_given:
        meshes = [(args.domain, args.level, args.grading)]
    else:
        meshes = [(d, lev, 1.0) for d in ("square", "lshape") for lev in (1, 2, 3, 4)]
    out = []
    for domain, level, grading in meshes:
        rep = saddle.verify_structure(build_system(make_mesh(domain, level, grading)))
        out.append({"mesh": mesh_name(domain, level, grading), **rep.to_dict()})
    return all(r["passed"] for r in out), out


def _suite_inverse(args):
    sys_ = build_system(_mesh(args), args.k)
    eta = args.eta if args.eta is not None else sys_.k2 + 1.0
    rep = saddle.verify_T_properties(sys_, eta)
    K = saddle.dense_K(sys_)
    inv1 = saddle.dense_K_inverse(sys_, eta)
    inv2 = saddle.dense_K_inverse(sys_, sys_.k2 + 8.0)
    rep.add("K*Kinv=I", np.abs(K @ inv1 - np.eye(sys_.size)).max(), 1e-8)
    rep.add("eta-independence", np.abs(inv1 - inv2).max(), 1e-8)
    return rep.passed, rep.to_dict()


def _suite_spectral(args):
    sys_ = build_system(_mesh(args), args.k)
    eta = args.eta if args.eta is not None else sys_.k2 + 1.0
    rep = spectral.spectrum_preconditioned(sys_, PreconditionerConfig("P", eta=eta))
    mdiag = spectral.spectrum_preconditioned(sys_, PreconditionerConfig("Mdiag", eta=eta),
                                             alpha_bar=rep.alpha_bar)
    bounds = spectral.check_eigenvalue_bounds(rep)
    ok = (rep.multiplicity_of_one == 2 * sys_.m and mdiag.multiplicity_of_extra == sys_.m
          and (bounds["passed"] or rep.bound_lower is None))
    detail = {
        "n": sys_.n, "m": sys_.m, "k": sys_.k, "eta": eta,
        "alpha_bar": rep.alpha_bar, "lambda_min_Aeta": rep.lambda_min_Aeta,
        "multiplicity_of_one": rep.multiplicity_of_one, "bound_lower": rep.bound_lower,
        "bounds": bounds, "violations": rep.violations,
        "mdiag_extra_eigenvalue": mdiag.extra_eigenvalue,
        "mdiag_multiplicity_of_extra": mdiag.multiplicity_of_extra,
    }
    return ok, detail


def appendix_shapes(count, seed):
    """Deterministic list of admissible shapes ``(m, n, k, l)`` with all dimensions <= 8."""
    rng = np.random.default_rng(seed)
    shapes = []
    while len(shapes) < count:
        m, n = (int(v) for v in rng.integers(1, 9, 2))
        k = int(rng.integers(0, m + 1))
        l = n + k - m
        if 0 <= l <= min(n, 8):
            shapes.append((m, n, k, l))
    return shapes


def _suite_appendix(args):
    hand = genspd.hand_instance()
    hand_inv = genspd.inverse_nullspace(hand)
    expected = np.array([[1.0, 0, 0], [0, 0, 1], [0, 1, 0]])
    hand_ok = bool(np.array_equal(hand_inv, expected)) and genspd.verify_instance(hand).passed
    failures = []
    for i, shape in enumerate(appendix_shapes(args.instances, args.seed)):
        gs = genspd.random_admissible(*shape, seed=args.seed * 100003 + i)
        rep = genspd.verify_instance(gs, seed=i)
        if not rep.passed:
            failures.append({"shape": shape, "failures": [c.name for c in rep.failures()]})
    return hand_ok and not failures, {"hand_instance": hand_ok, "instances": args.instances,
                                      "failures": failures}


def cmd_verify(args):
    suites = ("structure", "inverse", "spectral", "appendix") if args.suite == "all" else (args.suite,)
    runners = {"structure": _suite_structure, "inverse": _suite_inverse,
               "spectral": _suite_spectral, "appendix": _suite_appendix}
    result, ok = {}, True
    for name in suites:
        passed, detail = runners[name](args)
        result[name] = {"passed": passed, "detail": detail}
        ok &= passed
    result["passed"] = ok
    _emit(_json(result), args.out)
    return 0 if ok else 2


# --------------------------------------------------------------------- mesh / spectrum

def cmd_mesh(args):
    mesh = _mesh(args)
    stats = mesh_stats(mesh)
    if args.export:
        stem = mesh_name(args.domain, args.level, args.grading)
        node, ele = write_triangle(mesh)
        _output_path(Path(args.export) / f"{stem}.node").write_text(node)
        _output_path(Path(args.export) / f"{stem}.ele").write_text(ele)
        if args.matrices:
            sys_ = build_system(mesh)
            for name in "AMBCL":
                write_matrix_market(getattr(sys_, name), str(_output_path(Path(args.export) / f"{stem}-{name}.mtx")))
            _output_path(Path(args.export) / f"{stem}-sizes.json").write_text(
                _json({"n": sys_.n, "m": sys_.m}))
    _emit(_json(stats), args.out)
    return 0


def cmd_spectrum(args):
    sys_ = build_system(_mesh(args), args.k)
    eta = args.eta if args.eta is not None else sys_.k2 + 1.0
    if args.what == "K-vs-Aeta":
        _emit(_json(spectral.spectrum_K_vs_Aeta(sys_, eta, args.cutoff)), args.out)
        return 0
    kind = PRECOND_CHOICES[args.what]
    if kind == "Mtri" and args.epsilon is None:
        raise UsageError("Mtri requires --epsilon")
    try:
        rep = spectral.spectrum_preconditioned(
            sys_, PreconditionerConfig(kind, eta=eta, epsilon=args.epsilon))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _emit(rep.to_csv() if args.csv else _json(rep.to_dict()), args.out)
    return 0


# --------------------------------------------------------------------- parser

def build_parser():
    parser = _Parser(prog="edgesaddle", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve one saddle system and print a JSON report")
    _add_mesh_args(p)
    p.add_argument("--k", type=float, default=0.0)
    p.add_argument("--eta", type=float, default=None, help="default k^2 + 1")
    p.add_argument("--precond", choices=tuple(PRECOND_CHOICES), default="P")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--d-scale", type=float, default=None, help="PD only: D = d_scale * L (default -1/eta)")
    p.add_argument("--method", choices=("cg", "minres"), default="cg")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-it", type=int, default=200)
    p.add_argument("--inner", default="exact", help="exact | pcg:TOL[:ilu|jacobi|none] | cheb:TOL")
    p.add_argument("--rhs", choices=RHS_KINDS, default="ones")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--keep-history", action="store_true", help="include every residual in the JSON")
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run a parameter sweep and write CSV")
    p.add_argument("--preset")
    p.add_argument("--spec", help="path to a sweep spec JSON file")
    p.add_argument("--levels", type=int, nargs="+")
    p.add_argument("--inner")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--list", action="store_true", help="list built-in presets")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run property suites; exit 0 iff all pass")
    p.add_argument("--suite", choices=SUITES, default="all")
    _add_mesh_args(p, level=2)
    p.add_argument("--k", type=float, default=0.0)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("mesh", help="mesh statistics, Triangle and MatrixMarket export")
    _add_mesh_args(p)
    p.add_argument("--export", help="directory for .node/.ele files")
    p.add_argument("--matrices", action="store_true", help="also export A, M, B, C, L")
    p.add_argument("--out")
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("spectrum", help="eigenvalue data for plotting")
    _add_mesh_args(p, level=2)
    p.add_argument("what", choices=("P", "Mtri", "Mdiag", "K-vs-Aeta"))
    p.add_argument("--k", type=float, default=0.0)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--cutoff", type=float, default=0.3)
    p.add_argument("--csv", action="store_true", help="one-column CSV instead of JSON")
    p.add_argument("--out")
    p.set_defaults(func=cmd_spectrum)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    raw = sys.argv[1:] if argv is None else list(argv)
    args.domain_given = any(a == "--domain" or a.startswith("--domain=") for a in raw)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"edgesaddle {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
