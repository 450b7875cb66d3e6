"""Command-line front end: ``szasz-lab <command> [options]``.

Every command accepts ``--config FILE`` (JSON with the same keys as the long
options, dashes replaced by underscores); flags given on the command line
override the file.  Outputs carry the library version and a hash of the
resolved configuration.  Exit codes: 0 success, 2 usage error, 3 numerical
failure; errors are also written to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics_lab import (
    DEFAULT_N_GRID, _jsonable, corner_b1_fit, corner_sweep, poisson_refinement,
    voronovskaya_extract, voronovskaya_theory, wall_sweep,
)
from .errors import (
    ConvergenceError, DependencyError, DomainError, ExpressionError, NumericalInstabilityError,
    TruncationLimitError,
)
from .functions import parse_function, polynomial_degree
from .kernel_quadrature import QuadratureNorms, QuadratureSpec, kernel_diag, norm_table, tyz_ratio
from .lattice import TruncationPolicy
from .lattice_operators import generalized_operator
from .prob_bridge import (
    LatticeDistribution, monte_carlo_expectation, operator_identities, pascal_sweep, scaled,
)
from .toric_models import MODEL_NAMES, get_model, resolve_model

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3
USAGE_ERRORS = (KeyError, ValueError, ExpressionError, DomainError, FileNotFoundError, json.JSONDecodeError)
NUMERICAL_ERRORS = (ConvergenceError, NumericalInstabilityError, TruncationLimitError, DependencyError,
                    FloatingPointError, np.linalg.LinAlgError)

DEFAULTS = {
    "model": "bargmann-fock",
    "f": "t^2",
    "x": ["0.5"],
    "N": [10],
    "epsilon": 1e-14,
    "normalization": "kernel-sum",
    "nodes": 64,
    "rel_tol": 1e-10,
    "calibration": None,
    "seed": 20240611,
    "count": 1_000_000,
    "alpha_max": None,
    "x_along": ["0.4"],
    "k_max": None,
    "degree": 3,
    "output": None,
    "csv": None,
    "jobs": None,
}


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    """Resolved settings of one command run; ``hash`` identifies it in outputs."""

    kind: str
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **{k: v for k, v in self.settings.items() if k not in ("output", "csv", "jobs")}}

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        return cls(kind=doc.pop("kind"), settings=doc)

    @property
    def hash(self) -> str:
        text = json.dumps(_jsonable(self.to_dict()), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def provenance(self) -> dict:
        return {"version": __version__, "config_hash": self.hash, "config": _jsonable(self.to_dict())}

    def __getattr__(self, name):
        try:
            return self.__dict__["settings"][name]
        except KeyError:
            raise AttributeError(name) from None


# ---------------------------------------------------------------------------
# Parsing helpers


def _points(values, dimension: int) -> list:
    out = []
    for v in values:
        parts = [float(p) for p in str(v).replace(";", ",").split(",") if p.strip()]
        if len(parts) != dimension:
            raise UsageError(f"point {v!r} needs {dimension} comma-separated coordinates")
        out.append(parts if dimension > 1 else parts[0])
    return out


def _policy(cfg) -> TruncationPolicy:
    return TruncationPolicy(epsilon=float(cfg.epsilon))


def _quad_spec(cfg) -> QuadratureSpec:
    return QuadratureSpec(nodes_per_axis=int(cfg.nodes), rel_tol=float(cfg.rel_tol),
                          calibration_constant=cfg.calibration)


def _jobs(cfg) -> int:
    if cfg.jobs:
        return max(1, int(cfg.jobs))
    env = os.environ.get("SZASZ_LAB_JOBS")
    return max(1, int(env)) if env else 1


def _csv_text(header: dict, columns, rows) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(_jsonable(header), sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _emit(text: str, target) -> None:
    if target:
        Path(target).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_json(doc: dict, cfg) -> None:
    doc = {**cfg.provenance(), **doc}
    _emit(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n", cfg.output)


# ---------------------------------------------------------------------------
# Commands


def cmd_models(cfg) -> dict:
    rows = []
    for name in ("bargmann-fock", "fubini-study-cp1", "bergman-ball-1", "bergman-ball-2",
                 "product:fubini-study-cp1xfubini-study-cp1"):
        m = get_model(name)
        rows.append({
            "name": m.name, "dimension": m.dimension, "rho_domain": m.rho_domain, "min_N": m.min_N,
            "facets": [[list(v), lam] for v, lam in m.polytope.facets],
            "closed_norms": m.has_closed_norms,
            "kernel_diag_closed": m.log_kernel_diag is not None,
            "kernel_stated_differs": m.log_stated_kernel_diag is not None,
        })
    _emit_json({"registry": list(MODEL_NAMES), "models": rows}, cfg)
    return {}


def cmd_eval(cfg) -> dict:
    model = resolve_model(cfg.model)
    f = parse_function(cfg.f, model.dimension)
    pts = _points(cfg.x, model.dimension)
    policy = _policy(cfg)
    tasks = [(x, int(n)) for x in pts for n in cfg.N]

    def run(task):
        x, n = task
        value, table = generalized_operator(model, f, n, x, policy, normalization=cfg.normalization)
        return value, table.tail_bound

    with ThreadPoolExecutor(max_workers=_jobs(cfg)) as pool:
        results = list(pool.map(run, tasks))
    rows = [(json.dumps(x), n, v, tb) for (x, n), (v, tb) in zip(tasks, results)]
    _emit(_csv_text(cfg.provenance(), ["x", "N", "value", "tail_bound"], rows), cfg.output)
    return {}


def cmd_norms(cfg) -> dict:
    model = resolve_model(cfg.model)
    spec = _quad_spec(cfg)
    texts = []
    for n in cfg.N:
        n = int(n)
        amax = int(cfg.alpha_max) if cfg.alpha_max is not None else 4 * n
        lo, hi = model.polytope.lattice_bounds(n)
        hi = np.minimum(np.where(np.isfinite(hi), hi, amax), amax)
        lo = np.maximum(np.where(np.isfinite(lo), lo, -amax), -amax)
        axes = [np.arange(int(a), int(b) + 1) for a, b in zip(lo, hi)]
        grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
        grid = grid[model.polytope.contains_lattice(grid, n)]
        table = norm_table(model, n, grid, spec, jobs=_jobs(cfg))
        text = table.to_csv()
        first, _, body = text.partition("\n")
        header = {**json.loads(first[2:]), **cfg.provenance()}
        texts.append("# " + json.dumps(_jsonable(header), sort_keys=True) + "\n" + body)
    _emit("".join(texts), cfg.output)
    return {}


def cmd_kernel(cfg) -> dict:
    model = resolve_model(cfg.model)
    spec = _quad_spec(cfg)
    norms = QuadratureNorms(model, spec)
    pts = _points(cfg.x, model.dimension)
    rows, tyz = [], []
    for x in pts:
        for n in cfg.N:
            B, partial = kernel_diag(model, int(n), x, spec, _policy(cfg), norms=norms)
            rows.append({"x": x, "N": int(n), "B": B, "closed_form": model.kernel_diag(int(n)),
                         "stated": model.stated_kernel_diag(int(n)), "shells": len(partial)})
        if len(cfg.N) >= 2:
            res = tyz_ratio(model, cfg.N, x, spec)
            tyz.append({"x": x, **asdict(res)})
    by_N = {}
    for r in rows:
        by_N.setdefault(r["N"], []).append(r["B"])
    spread = {n: (max(v) - min(v)) / abs(np.mean(v)) for n, v in by_N.items()}
    _emit_json({"kind": "kernel", "model": model.name, "rows": rows, "tyz": tyz,
                "x_spread": spread}, cfg)
    if cfg.csv:
        _emit(_csv_text(cfg.provenance(), ["x", "N", "B", "closed_form"],
                        [(json.dumps(r["x"]), r["N"], r["B"], r["closed_form"]) for r in rows]), cfg.csv)
    return {}


def cmd_voronovskaya(cfg) -> dict:
    model = resolve_model(cfg.model)
    f = parse_function(cfg.f, model.dimension)
    quadratic = polynomial_degree(f) == 2
    out = []
    for x in _points(cfg.x, model.dimension):
        fit = voronovskaya_extract(model, f, x, cfg.N, int(cfg.degree), cfg.normalization,
                                   _policy(cfg), jobs=_jobs(cfg))
        theory = voronovskaya_theory(model, f, x)
        rel = abs(fit.c1 - theory) / abs(theory) if theory else abs(fit.c1)
        out.append({"x": x, "fit": fit.to_dict(), "theory_c1": theory, "c1_rel_error": rel,
                    "c0_rel_error": abs(fit.c0 - float(f(np.atleast_1d(x)))) / max(1e-300, abs(float(f(np.atleast_1d(x))))),
                    "verdict_c1": (rel <= 0.01) if quadratic else None,
                    "residual_slope_ok": -2.3 <= fit.residual_slope <= -1.7})
    _emit_json({"kind": "voronovskaya", "model": model.name, "f": f.tag, "quadratic": quadratic,
                "normalization": cfg.normalization, "points": out}, cfg)
    if cfg.csv:
        rows = [(json.dumps(p["x"]), n, v, r) for p in out
                for n, v, r in zip(p["fit"]["N_grid"], p["fit"]["values"], p["fit"]["residuals"])]
        _emit(_csv_text(cfg.provenance(), ["x", "N", "value", "residual"], rows), cfg.csv)
    return {}


def cmd_corner(cfg) -> dict:
    model = resolve_model(cfg.model)
    f = parse_function(cfg.f, model.dimension)
    out = []
    for x in _points(cfg.x, model.dimension):
        rep = corner_b1_fit(model, f, x, cfg.N, int(cfg.degree), cfg.normalization, _policy(cfg), jobs=_jobs(cfg))
        d = rep.to_dict()
        d["x"] = x
        if f.support is not None:
            sweep = corner_sweep(model, f, x, cfg.N, cfg.normalization, _policy(cfg), jobs=_jobs(cfg))
            d["distance_slope"] = sweep.slope
        out.append(d)
    _emit_json({"kind": "corner", "model": model.name, "f": f.tag, "normalization": cfg.normalization,
                "points": out}, cfg)
    return {}


def cmd_wall(cfg) -> dict:
    model = resolve_model(cfg.model)
    f = parse_function(cfg.f, model.dimension)
    x_along = [float(v) for v in cfg.x_along]
    m_wall = model.dimension - len(x_along)
    out = []
    for x in _points(cfg.x, m_wall):
        sweep = wall_sweep(model, f, x, x_along, cfg.N, _policy(cfg), jobs=_jobs(cfg))
        out.append({"x_wall": x, "x_along": x_along, **sweep.to_dict(),
                    "verdict": abs(sweep.slope + 1) <= 0.15})
    _emit_json({"kind": "wall", "model": model.name, "f": f.tag, "points": out}, cfg)
    return {}


def cmd_poisson_limit(cfg) -> dict:
    out = []
    for x in _points(cfg.x, 1):
        rep = poisson_refinement(x, None if cfg.k_max is None else int(cfg.k_max), cfg.N)
        d = rep.to_dict()
        d["verdict_first_order"] = abs(rep.slope + 1) <= 0.1 if x > 0 else None
        d["verdict_second_order"] = abs(rep.corrected_slope + 2) <= 0.2 if x > 0 else None
        out.append(d)
    _emit_json({"kind": "poisson-limit", "points": out}, cfg)
    if cfg.csv:
        rows = [(p["x"], n, s, c) for p in out for n, s, c in zip(p["N_grid"], p["sup_residual"], p["corrected_residual"])]
        _emit(_csv_text(cfg.provenance(), ["x", "N", "sup_residual", "corrected_residual"], rows), cfg.csv)
    return {}


def cmd_prob_check(cfg) -> dict:
    f = parse_function(cfg.f, 1)
    out = []
    seed = int(cfg.seed)
    stream = 0
    for x in _points(cfg.x, 1):
        for n in cfg.N:
            n = int(n)
            ident = [dict(asdict(c), ok=c.ok) for c in operator_identities(f, n, x, float(cfg.epsilon))]
            g = scaled(f, n)
            dists = [LatticeDistribution.poisson(n * x), LatticeDistribution.negbinomial_failures(n, 1 / (1 + x))]
            if 0 < x < 1:
                dists.insert(0, LatticeDistribution.binomial(n, x))
            mc = []
            for d in dists:
                res = monte_carlo_expectation(d, g, int(cfg.count), seed, stream)
                stream += 1
                mc.append(dict(res.to_dict(), ok=res.z_score <= 4))
            out.append({"x": x, "N": n, "identities": ident, "monte_carlo": mc})
    pascal = [pascal_sweep(f, x).to_dict() for x in _points(cfg.x, 1) if x > 0]
    _emit_json({"kind": "prob-check", "f": f.tag, "seed": seed, "points": out, "pascal": pascal}, cfg)
    return {}


COMMANDS = {
    "models": cmd_models,
    "eval": cmd_eval,
    "norms": cmd_norms,
    "kernel": cmd_kernel,
    "voronovskaya": cmd_voronovskaya,
    "corner": cmd_corner,
    "wall": cmd_wall,
    "poisson-limit": cmd_poisson_limit,
    "prob-check": cmd_prob_check,
}

COMMAND_DEFAULTS = {
    "voronovskaya": {"N": list(DEFAULT_N_GRID)},
    "corner": {"model": "fubini-study-cp1", "N": list(DEFAULT_N_GRID), "x": ["0.7"]},
    "wall": {"model": "product:fubini-study-cp1xfubini-study-cp1", "f": "smooth-bump:center=2,radius=2.5",
             "N": [8, 16, 32, 64, 128, 256, 512, 1024], "x": ["1.1"]},
    "poisson-limit": {"N": [10, 20, 40, 80, 160, 320, 640, 1280, 2560], "x": ["1"]},
    "prob-check": {"f": "gaussian-bump", "x": ["0.5"], "N": [20]},
    "norms": {"N": [4]},
    "kernel": {"x": ["0.2", "0.5", "0.8"], "N": [8, 16, 32]},
}


def cmd_report(cfg) -> dict:
    """Run the ``experiments`` list of a config file (or a small default suite)."""
    experiments = cfg.settings.get("experiments") or [
        {"kind": "eval", "model": "fubini-study-cp1", "f": "t^2", "N": [4], "x": ["0.5"]},
        {"kind": "poisson-limit"},
        {"kind": "corner", "N": [32, 64, 128, 256, 512]},
    ]
    jobs = _jobs(cfg)

    def run(spec):
        spec = dict(spec)
        kind = spec.pop("kind")
        if kind not in COMMANDS:
            raise UsageError(f"unknown experiment kind {kind!r}")
        sub = _resolve(kind, spec, {})
        buf = io.StringIO()
        sub.settings["output"] = None
        old, sys.stdout = sys.stdout, buf
        try:
            COMMANDS[kind](sub)
        finally:
            sys.stdout = old
        text = buf.getvalue()
        try:
            return {"kind": kind, "result": json.loads(text)}
        except json.JSONDecodeError:
            return {"kind": kind, "config_hash": sub.hash, "csv": text}

    # stdout capture is process-wide, so experiments run one at a time here
    results = [run(e) for e in experiments]
    _emit_json({"kind": "report", "jobs": jobs, "experiments": results}, cfg)
    return {}


COMMANDS["report"] = cmd_report


# ---------------------------------------------------------------------------
# Argument parsing


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="szasz-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; command-line flags override its fields")
        p.add_argument("--output", "-o", help="output file (default: stdout)")
        p.add_argument("--jobs", type=int, help="worker threads (default: $SZASZ_LAB_JOBS or 1)")
        return p

    def model_args(p, need_f=True):
        p.add_argument("--model", help="registry name, JSON document or path to one (default: bargmann-fock)")
        if need_f:
            p.add_argument("--f", help="test function: tag (monomial-k, gaussian-bump, smooth-bump, "
                                       "cosine-window, optional ':key=value,...') or expression in t / s,t / t1..tm")
        p.add_argument("--x", nargs="+", help="evaluation points; coordinates comma-separated")
        p.add_argument("--N", nargs="+", type=int, help="N values or grid")
        p.add_argument("--epsilon", type=float, help="truncation tail bound (default 1e-14)")

    common(sub.add_parser("models", help="list built-in models"))
    p = common(sub.add_parser("eval", help="evaluate the operator (CSV: x, N, value, tail_bound)"))
    model_args(p)
    p.add_argument("--normalization", choices=["kernel-sum", "paper-prefactor"])
    for name, helptext in (("norms", "monomial norms by quadrature (CSV)"),
                           ("kernel", "diagonal Bergman kernel by quadrature (JSON)")):
        p = common(sub.add_parser(name, help=helptext))
        model_args(p, need_f=False)
        p.add_argument("--nodes", type=int, help="Gauss-Legendre nodes per panel (default 64)")
        p.add_argument("--rel-tol", type=float, help="quadrature relative tolerance (default 1e-10)")
        p.add_argument("--calibration", type=float, help="angular constant (default: from alpha = 0)")
        if name == "norms":
            p.add_argument("--alpha-max", type=int, help="largest alpha per axis (default 4N)")
        else:
            p.add_argument("--csv", help="also write a tidy CSV here")
    for name in ("voronovskaya", "corner"):
        p = common(sub.add_parser(name, help=f"{name} expansion fit (JSON)"))
        model_args(p)
        p.add_argument("--normalization", choices=["kernel-sum", "paper-prefactor"])
        p.add_argument("--degree", type=int, help="fit degree in 1/N (default 3)")
        p.add_argument("--csv", help="also write a tidy CSV here")
    p = common(sub.add_parser("wall", help="wall scaling on a product model (JSON)"))
    model_args(p)
    p.add_argument("--x-along", nargs="+", help="fixed coordinates along the wall")
    p = common(sub.add_parser("poisson-limit", help="binomial vs Poisson residuals (JSON)"))
    p.add_argument("--x", nargs="+")
    p.add_argument("--N", nargs="+", type=int)
    p.add_argument("--k-max", type=int)
    p.add_argument("--csv", help="also write a tidy CSV here")
    p = common(sub.add_parser("prob-check", help="operator = expectation identities and Monte Carlo (JSON)"))
    model_args(p)
    p.add_argument("--count", type=int, help="Monte Carlo draws (default 1e6)")
    p.add_argument("--seed", type=int)
    common(sub.add_parser("report", help="run the experiments listed in --config"))
    return parser


def _resolve(kind: str, file_doc: dict, flags: dict) -> ExperimentConfig:
    settings = dict(DEFAULTS)
    settings.update(COMMAND_DEFAULTS.get(kind, {}))
    unknown = set(file_doc) - set(settings) - {"experiments", "kind"}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    settings.update({k: v for k, v in file_doc.items() if k != "kind"})
    settings.update({k: v for k, v in flags.items() if v is not None})
    for key in ("x", "x_along"):
        if not isinstance(settings[key], list):
            settings[key] = [settings[key]]
        settings[key] = [str(v) for v in settings[key]]
    if not isinstance(settings["N"], list):
        settings["N"] = [settings["N"]]
    settings["N"] = [int(n) for n in settings["N"]]
    return ExperimentConfig(kind=kind, settings=settings)


def _fail(exc: Exception, code: int) -> int:
    kind = type(exc).__name__
    message = str(exc.args[0]) if isinstance(exc, KeyError) and exc.args else str(exc)
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        file_doc = json.loads(Path(args.config).read_text()) if args.config else {}
        if not isinstance(file_doc, dict):
            raise UsageError("config file must hold a JSON object")
        cfg = _resolve(args.command, file_doc, flags)
        COMMANDS[args.command](cfg)
    except UsageError as exc:
        return _fail(exc, EXIT_USAGE)
    except NUMERICAL_ERRORS as exc:
        return _fail(exc, EXIT_NUMERICAL)
    except USAGE_ERRORS as exc:
        return _fail(exc, EXIT_USAGE)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
