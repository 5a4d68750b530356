"""Command-line front end.

Configs are INI files.  Every section and key is checked against a fixed
schema; an unknown one aborts with exit status 1 and the offending
``section.key`` path.  Results go to ``<out>/results.jsonl`` (sorted keys,
one record per line), tables to ``<out>/<name>.csv`` and run metadata with
timestamps to ``<out>/metadata.json``, so the first two are byte-identical
across reruns with the same config and seed, whatever the worker count.

Exit status: 0 success, 2 when any verdict fails, 1 on errors.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from . import bernstein as bs
from . import heatkernel as hk
from .config import SolverConfig
from .errors import SbmfkError, SchemaError
from .sbm import Interval, dump_paths, exit_moment, first_exit, make_domain, resolve_steps

COMMANDS = ("psi", "sample", "kernel", "solve", "eigen", "abp", "principles", "report")

_SPEC_KEYS = {"kind", "alpha", "beta", "mass", "drift", "table_y", "table_nu"} | {f"scaling.{k}" for k in bs.SCALING_KEYS}
SCHEMA: dict[str, set[str]] = {
    "run": {"seed", "command"},
    "spec": _SPEC_KEYS,
    "domain": {"kind", "lo", "hi", "center", "radius", "r_in", "r_out", "d"},
    "potential": {"kind", "value", "lo", "hi"},
    "source": {"kind", "value", "lo", "hi", "p"},
    "solver": {"dt", "t_max", "n_paths", "ci_level", "bridge_correction"},
    "psi": {"u", "gamma"},
    "sample": {"u", "t", "n"},
    "kernel": {"d", "t", "r"},
    "solve": {"points", "moments"},
    "eigen": {"t_grid", "replicates", "x_set", "oracle"},
    "abp": {"check", "p", "n_grid", "T"},
    "principles": {"checks", "lambda", "delta", "d"},
    "report": {"inputs"},
}


class UsageError(SbmfkError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 instead of argparse's 2, which is reserved for verdicts
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sbmfk", description="Subordinate Brownian motion Feynman-Kac toolkit")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="INI config file")
    p.add_argument("--seed", type=int, help="global seed (overrides run.seed)")
    p.add_argument("--workers", type=int, help="worker threads (default: logical cores)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--dump-paths", type=int, default=0, metavar="N", help="write the first N solve paths to paths.csv")
    return p


# ============================================================== config


@dataclass
class RunConfig:
    command: str
    seed: int
    sections: dict[str, dict[str, str]]
    workers: int | None = None
    dump_paths: int = 0
    source_path: str | None = None

    def get(self, section: str, key: str, default: Any = None) -> Any:
        return self.sections.get(section, {}).get(key, default)

    def floats(self, section: str, key: str, default=None) -> list[float] | None:
        raw = self.get(section, key)
        if raw is None:
            return default
        return _floats(raw, f"{section}.{key}")

    def number(self, section: str, key: str, default=None, kind=float):
        raw = self.get(section, key)
        if raw is None:
            return default
        try:
            return kind(raw)
        except ValueError:
            raise SchemaError(f"{section}.{key}", f"expected a {kind.__name__}, got {raw!r}") from None


def _floats(raw: str, path: str) -> list[float]:
    try:
        return [float(v) for v in raw.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise SchemaError(path, f"expected a comma-separated list of numbers, got {raw!r}") from None


def load_config(path: Path | None, command: str, seed: int | None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive
    if path is not None:
        if not path.exists():
            raise SchemaError(str(path), "config file not found")
        parser.read(path)
    sections = {}
    for name in parser.sections():
        if name not in SCHEMA:
            raise SchemaError(name, "unknown section")
        keys = dict(parser[name])
        for k in keys:
            if k not in SCHEMA[name]:
                raise SchemaError(f"{name}.{k}", "unknown key")
        sections[name] = keys
    run = sections.get("run", {})
    if "command" in run and run["command"] != command:
        raise SchemaError("run.command", f"config is for {run['command']!r}, not {command!r}")
    if seed is None:
        if "seed" not in run:
            raise SchemaError("run.seed", "a seed is required (config or --seed)")
        try:
            seed = int(run["seed"])
        except ValueError:
            raise SchemaError("run.seed", "expected an integer") from None
    if seed < 0:
        raise SchemaError("run.seed", "seed must be non-negative")
    return RunConfig(command, int(seed), sections, source_path=str(path) if path else None)


def _spec(rc: RunConfig) -> bs.BernsteinSpec:
    sec = rc.sections.get("spec")
    if not sec:
        raise SchemaError("spec", "section required")
    try:
        kind = bs.Kind(sec.get("kind", ""))
    except ValueError:
        raise SchemaError("spec.kind", f"unknown kind {sec.get('kind')!r}") from None
    allowed = {"kind", *bs._PARAM_FIELDS[kind]} | {f"scaling.{k}" for k in bs.SCALING_KEYS}
    for k in sec:
        if k not in allowed:
            raise SchemaError(f"spec.{k}", f"not a parameter of kind {kind.value!r}")
    data: dict[str, Any] = {}
    for k, v in sec.items():
        data[k] = _floats(v, f"spec.{k}") if k.startswith("table_") else (v if k == "kind" else _num(v, f"spec.{k}"))
    try:
        return bs.spec_from_dict(data)
    except SbmfkError as exc:
        raise SchemaError("spec", str(exc)) from None


def _num(raw: str, path: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise SchemaError(path, f"expected a number, got {raw!r}") from None


def _domain(rc: RunConfig):
    sec = rc.sections.get("domain")
    if not sec:
        raise SchemaError("domain", "section required")
    params: dict[str, Any] = {}
    for k, v in sec.items():
        if k == "kind":
            continue
        vals = _floats(v, f"domain.{k}")
        params[k] = vals if (k in ("center",) or (sec["kind"] == "box" and k in ("lo", "hi"))) else vals[0]
    try:
        return make_domain(sec.get("kind", ""), **params)
    except SbmfkError as exc:
        raise SchemaError("domain", str(exc)) from None


def _solver(rc: RunConfig) -> SolverConfig:
    sec = rc.sections.get("solver", {})
    kw: dict[str, Any] = {"seed": rc.seed, "workers": rc.workers}
    for k, v in sec.items():
        if k == "bridge_correction":
            if v.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise SchemaError("solver.bridge_correction", "expected a boolean")
            kw[k] = v.lower() in ("true", "1", "yes")
        elif k == "n_paths":
            kw[k] = int(_num(v, "solver.n_paths"))
        else:
            kw[k] = _num(v, f"solver.{k}")
    try:
        return SolverConfig(**kw)
    except SbmfkError as exc:
        raise SchemaError("solver", str(exc)) from None


def _field(rc: RunConfig, section: str, default_kind: str) -> tuple[Callable | None, dict]:
    """Potential or source as a callable of points (n, d) plus its description."""
    sec = rc.sections.get(section, {})
    kind = sec.get("kind", default_kind)
    if kind == "zero":
        return None, {"kind": kind, "value": 0.0}
    value = rc.number(section, "value", 1.0)
    desc = {"kind": kind, "value": value}
    if kind == "constant":
        return (lambda x: np.full(x.shape[0], value)), desc
    if kind == "quadratic":
        return (lambda x: value * np.sum(x * x, axis=1)), desc
    if kind == "indicator":
        lo, hi = rc.number(section, "lo", 0.0), rc.number(section, "hi", math.inf)
        desc.update(lo=lo, hi=hi)
        return (lambda x: value * ((x[:, 0] > lo) & (x[:, 0] < hi))), desc
    raise SchemaError(f"{section}.kind", f"unknown kind {kind!r}")


def _potential(vfn, desc: dict, dom):
    from .fk_solver import Potential

    if vfn is None:
        return None
    sup = float(np.max(np.abs(vfn(dom.line_grid(257)))))
    return Potential(vfn, sup, desc["value"] >= 0)


# ============================================================== output


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


@dataclass
class Outcome:
    records: list[dict] = field(default_factory=list)
    tables: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)
    passed: bool = True

    def add(self, record: str, /, **payload) -> None:
        rec = {"record": record, **payload}
        if "pass" in rec:
            self.passed = self.passed and bool(rec["pass"])
        self.records.append(rec)


def _estimate(est) -> dict:
    return {"mean": est.mean, "stderr": est.stderr, "n": est.n_paths, "flags": list(est.flags)}


def write_outputs(out: Path, rc: RunConfig, outcome: Outcome, started: float) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.jsonl", "w", newline="\n") as fh:
        for rec in outcome.records:
            fh.write(json.dumps(_clean(rec), sort_keys=True) + "\n")
    for name, (header, rows) in outcome.tables.items():
        with open(out / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    meta = {"command": rc.command, "seed": rc.seed, "config": rc.source_path, "workers": rc.workers,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(started)),
            "elapsed_s": round(time.time() - started, 3), "version": __version__,
            "python": platform.python_version(), "numpy": np.__version__}
    with open(out / "metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ============================================================== commands


def cmd_psi(rc: RunConfig) -> Outcome:
    spec = _spec(rc)
    u = rc.floats("psi", "u", list(np.geomspace(1e-3, 1e3, 13)))
    gam = rc.floats("psi", "gamma", [1.0, 2.0, 4.0, 8.0, 16.0])
    oc = Outcome()
    vals = bs.evaluate(spec, np.asarray(u))
    oc.tables["psi"] = (["u", "psi"], [[a, b] for a, b in zip(u, np.atleast_1d(vals))])
    oc.add("spec", deterministic=True, **{"spec": bs.spec_to_dict(spec), "label": spec.label})
    sc = spec.scaling
    for side, theta in (("lower", sc.theta_low), ("upper", sc.theta_up)):
        grid = [x for x in u if x > theta] or [theta + 1.0]
        rep = bs.check_scaling(spec, side, grid, gam)
        oc.add("scaling", deterministic=True, side=side, mu=rep.mu, c=rep.c, theta=rep.theta,
               worst_ratio=rep.worst_ratio, witness=list(rep.witness), **{"pass": rep.passed})
    return oc


def cmd_sample(rc: RunConfig) -> Outcome:
    from .subordinator import make_sampler, verify_laplace_grid

    spec = _spec(rc)
    u = rc.floats("sample", "u", [0.1, 0.5, 1.0, 2.0, 5.0])
    t = rc.floats("sample", "t", [0.1, 0.5, 1.0, 2.0, 5.0])
    n = rc.number("sample", "n", 100000, int)
    sampler = make_sampler(spec, seed=rc.seed)
    checks = verify_laplace_grid(sampler, u, t, n, workers=rc.workers)
    oc = Outcome()
    rows = []
    for c in checks:
        rows.append([c.u, c.t, c.estimate.mean, c.estimate.stderr, c.target, c.z_score])
        oc.add("laplace", u=c.u, t=c.t, target=c.target, z=c.z_score, **_estimate(c.estimate),
               **{"pass": abs(c.z_score) < 4})
    oc.tables["laplace"] = (["u", "t", "mean", "stderr", "target", "z"], rows)
    return oc


def cmd_kernel(rc: RunConfig) -> Outcome:
    spec = _spec(rc)
    d = rc.number("kernel", "d", 1, int)
    ts = rc.floats("kernel", "t", [0.1, 1.0])
    rs = rc.floats("kernel", "r", [0.0, 0.5, 1.0, 2.0, 4.0])
    oc = Outcome()
    rows = []
    for t in ts:
        for r in rs:
            q = hk.density(spec, t, d, r)
            rows.append([t, r, q])
            oc.add("density", deterministic=True, t=t, r=r, d=d, q=q)
    oc.tables["kernel"] = (["t", "r", "q"], rows)
    rep = hk.diagonal_bound(spec, d)
    oc.add("on_diagonal_bound", deterministic=True, d=d, **{k: v for k, v in rep.to_dict().items() if k != "passed"},
           **{"pass": rep.passed})
    return oc


def cmd_solve(rc: RunConfig) -> Outcome:
    from .fk_solver import SourceTerm, solve_dirichlet

    spec, dom, cfg = _spec(rc), _domain(rc), _solver(rc)
    vfn, vdesc = _field(rc, "potential", "zero")
    ffn, fdesc = _field(rc, "source", "constant")
    pts = rc.floats("solve", "points", None)
    pts = dom.line_grid(5) if pts is None else np.asarray(pts).reshape(-1, dom.dim)
    pot = _potential(vfn, vdesc, dom)
    src = 0.0 if ffn is None else SourceTerm(ffn, rc.number("source", "p", 2.0))
    oc = Outcome()
    rows = []
    for i, x in enumerate(pts):
        est = solve_dirichlet(spec, dom, pot, src, x, cfg, stream=i)
        rows.append([*np.atleast_1d(x).tolist(), est.mean, est.stderr, est.n_paths])
        oc.add("solution", x=np.atleast_1d(x), potential=vdesc, source=fdesc, **_estimate(est))
    oc.tables["solution"] = ([f"x{i}" for i in range(dom.dim)] + ["mean", "stderr", "n"], rows)
    for k in [int(v) for v in rc.floats("solve", "moments", [])]:
        est = exit_moment(spec, dom, dom.center, k, cfg, stream=500 + k)
        oc.add("exit_moment", k=k, x=dom.center, **_estimate(est))
    if rc.dump_paths:
        rec = first_exit(spec, dom.center, dom, cfg, stream=900, record=rc.dump_paths)
        oc.tables["__paths__"] = ([], getattr(rec, "_records", []))
    return oc


def cmd_eigen(rc: RunConfig) -> Outcome:
    from .spectral import estimate_lambda_star, grid_oracle_1d

    spec, dom, cfg = _spec(rc), _domain(rc), _solver(rc)
    vfn, vdesc = _field(rc, "potential", "zero")
    tg = rc.floats("eigen", "t_grid", None)
    xs = rc.floats("eigen", "x_set", None)
    reps = rc.number("eigen", "replicates", 8, int)
    xs = None if xs is None else np.asarray(xs).reshape(-1, dom.dim)
    est = estimate_lambda_star(spec, dom, vfn, xs, tg, cfg, replicates=reps)
    oc = Outcome()
    oc.add("lambda_star", potential=vdesc, mean=est.lambda_star, stderr=est.stderr, n=cfg.n_paths,
           **{k: v for k, v in est.to_dict().items() if k not in ("lambda_star", "stderr")})
    oc.tables["survival"] = (["t", "log_u"], [[a, b] for a, b in zip(est.t_grid, est.log_u)])
    want = rc.get("eigen", "oracle", "auto").lower()
    if want in ("auto", "true") and isinstance(dom, Interval) and spec.kind in (bs.Kind.LINEAR, bs.Kind.STABLE):
        pot = None if vfn is None else (lambda x: vfn(x.reshape(-1, 1)))
        o = grid_oracle_1d(spec, dom, pot, n_cells=200)
        rel = abs(est.lambda_star / o.lambda_star - 1)
        oc.add("grid_oracle", deterministic=True, lambda_star=o.lambda_star, meshes=list(o.meshes),
               mesh_values=list(o.lambda_meshes), relative_gap=rel, **{"pass": rel < 0.05})
    return oc


def cmd_abp(rc: RunConfig) -> Outcome:
    from .fk_solver import SourceTerm, abp_bound, parabolic_abp_bound
    from .principles import narrow_domain_check

    spec, dom, cfg = _spec(rc), _domain(rc), _solver(rc)
    vfn, vdesc = _field(rc, "potential", "zero")
    ffn, fdesc = _field(rc, "source", "constant")
    check = rc.get("abp", "check", "elliptic")
    oc = Outcome()
    if check == "narrow":
        pot = (lambda x: np.zeros(x.shape[0])) if vfn is None else vfn
        v = narrow_domain_check(spec, dom, pot, cfg)
        oc.add("verdict", **v.to_dict())
        return oc
    if ffn is None:
        raise SchemaError("source.kind", "the ABP check needs a non-zero source")
    p = rc.number("abp", "p", rc.number("source", "p", 2.0))
    src = SourceTerm(ffn, p)
    pot = _potential(vfn, vdesc, dom)
    n_grid = rc.number("abp", "n_grid", 9, int)
    if check == "elliptic":
        rep = abp_bound(spec, dom, pot, src, p, cfg, n_grid=n_grid)
    elif check == "parabolic":
        rep = parabolic_abp_bound(spec, dom, pot, src, rc.number("abp", "T", 1.0), p, cfg, n_grid=n_grid)
    else:
        raise SchemaError("abp.check", f"unknown check {check!r}")
    consts = {k: v for k, v in rep.constants.items() if k != "profile"}
    oc.add("abp", kind=rep.kind, mean=rep.lhs, stderr=rep.lhs_stderr, n=cfg.n_paths, rhs=rep.rhs,
           constants=consts, notes=list(rep.notes), potential=vdesc, source=fdesc, **{"pass": rep.passed})
    return oc


def cmd_principles(rc: RunConfig) -> Outcome:
    from . import principles as pr

    spec = _spec(rc)
    checks = [c.strip() for c in rc.get("principles", "checks", "classify").split(",") if c.strip()]
    oc = Outcome()
    for name in checks:
        if name == "classify":
            d = rc.number("principles", "d", 1, int)
            oc.add("classification", deterministic=True, **pr.classify(spec, d).to_dict())
        elif name == "maxprinciple":
            dom = _domain(rc)
            vfn, _ = _field(rc, "potential", "zero")
            ffn, _ = _field(rc, "source", "constant")
            lams = rc.floats("principles", "lambda", [0.0])
            scan = pr.maxprinciple_scan(spec, dom, None if vfn is None else (lambda x: vfn(x.reshape(-1, 1))),
                                        lambda x: ffn(x.reshape(-1, 1)), lams)
            oc.add("verdict", **scan.verdict.to_dict())
        elif name == "antimax":
            dom = _domain(rc)
            vfn, _ = _field(rc, "potential", "zero")
            ffn, _ = _field(rc, "source", "constant")
            deltas = rc.floats("principles", "delta", [0.05, 0.1, 0.2])
            rep = pr.antimax_scan(spec, dom, None if vfn is None else (lambda x: vfn(x.reshape(-1, 1))),
                                  lambda x: ffn(x.reshape(-1, 1)), deltas)
            oc.add("antimax", deterministic=True, **rep.to_dict(), **{"pass": all(rep.weak)})
        elif name == "narrow":
            dom, cfg = _domain(rc), _solver(rc)
            vfn, _ = _field(rc, "potential", "zero")
            pot = (lambda x: np.zeros(x.shape[0])) if vfn is None else vfn
            oc.add("verdict", **pr.narrow_domain_check(spec, dom, pot, cfg).to_dict())
        elif name == "liouville":
            d = rc.number("principles", "d", 1, int)
            rep = pr.liouville_checks(spec, d, _solver(rc))
            oc.add("liouville", **rep.to_dict())
        else:
            raise SchemaError("principles.checks", f"unknown check {name!r}")
    return oc


def cmd_report(rc: RunConfig, out: Path) -> Outcome:
    raw = rc.get("report", "inputs")
    dirs = [Path(p.strip()) for p in raw.split(",")] if raw else sorted(p for p in out.parent.glob("*") if p.is_dir())
    oc = Outcome()
    rows = []
    for d in dirs:
        f = d / "results.jsonl"
        if not f.exists() or d.resolve() == out.resolve():
            continue
        for i, line in enumerate(f.read_text().splitlines()):
            rec = json.loads(line)
            if "pass" in rec:
                rows.append([str(d), i, rec.get("record", ""), str(bool(rec["pass"]))])
    n_fail = sum(r[3] == "False" for r in rows)
    oc.tables["summary"] = (["run", "line", "record", "pass"], rows)
    oc.add("summary", deterministic=True, verdicts=len(rows), failures=n_fail, **{"pass": n_fail == 0})
    return oc


def run(argv: list[str] | None = None) -> int:
    started = time.time()
    args = build_parser().parse_args(argv)
    try:
        rc = load_config(args.config, args.command, args.seed)
        rc.workers = args.workers
        rc.dump_paths = int(args.dump_paths)
        if args.command == "report":
            outcome = cmd_report(rc, args.out)
        else:
            outcome = globals()[f"cmd_{args.command}"](rc)
        paths = outcome.tables.pop("__paths__", None)
        write_outputs(args.out, rc, outcome, started)
        if paths is not None:
            dim = len(paths[1][0]) - 4 if paths[1] else 1
            dump_paths(paths[1], args.out / "paths.csv", dim)
    except SchemaError as exc:
        sys.stderr.write(f"config error at {exc.path}: {exc.message}\n")
        return 1
    except (SbmfkError, OSError) as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1
    return 0 if outcome.passed else 2


def main() -> None:
    raise SystemExit(run())
