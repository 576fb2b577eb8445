"""ringcap command line.

Subcommands: cap, distort, verify-ring, setfunc, metric, suite.  Every run
writes a JSON summary (floats at 12 significant digits, seed included) into
the output directory, plus CSV ledgers and SVG figures where relevant.

Exit codes: 0 all checks pass, 1 tolerance violations, 2 configuration or
solver error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import tomli

from . import plotting
from .capacity import SolverOptions, cap_radial_oracle, capacity
from .capmetric import capacitary_distance, check_metric_axioms
from .geometry import BoxCondenserParams, make_ball_ring, make_box_condenser
from .inequalities import (CondenserSampler, box_partition, variation_estimate, verify_ring_pp,
                           verify_ring_pq)
from .mappings import distortion_norm, finite_distortion_check, parse_mapping, unit_disk, unit_square
from .suite import CRITERIA, FAIL, SuiteConfig, dumps, offcenter_rings, origin_rings, run_suite

log = logging.getLogger("ringcap")

COMMANDS = ("cap", "distort", "verify-ring", "setfunc", "metric", "suite")
DOMAINS = {"disk": unit_disk, "square": unit_square}


@dataclass
class RunConfig:
    command: str = "suite"
    p: float = 2.0
    q: Optional[float] = None
    res: Optional[int] = None
    dim: int = 2
    mapping: str = "identity"
    domain: str = "disk"
    shape: str = "annulus:0.5,1"
    rings: str = "origin-centered:5"
    points: str = "-0.4,0;0.4,0;0,0.4"
    partition: int = 4
    budget: int = 10
    method: str = "auto"
    seed: int = 0
    tolerance: float = 0.03
    only: list = field(default_factory=list)
    suite: dict = field(default_factory=dict)
    out: str = "ringcap-out"

    def validate(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}; use disk or square")
        if self.method not in ("auto", "numeric", "oracle"):
            raise ValueError(f"unknown method {self.method!r}")
        bad = set(self.suite) - {f.name for f in fields(SuiteConfig)}
        if bad:
            raise ValueError(f"unknown suite settings: {', '.join(sorted(bad))}")

    def record(self) -> dict:
        """The config as written into outputs; the output path is left out so
        runs into different directories stay comparable."""
        d = asdict(self)
        d.pop("out")
        return d


def load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    with open(path, "rb") as fh:
        data = tomli.load(fh)
    flat = dict(data.get("run", {}))
    flat.update({k: v for k, v in data.items() if not isinstance(v, dict)})
    if "suite" in data:
        flat["suite"] = dict(data["suite"])
    known = {f.name for f in fields(RunConfig)}
    bad = set(flat) - known
    if bad:
        raise ValueError(f"unknown config keys: {', '.join(sorted(bad))}")
    return flat


# ---------------------------------------------------------------- parsing

def _floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def parse_shape(text: str, dim: int = 2):
    """annulus:a,b | ball-ring:c1,...,cn,rF,rG | box:l1,...,ln,r,t"""
    kind, _, rest = text.partition(":")
    vals = _floats(rest)
    if kind == "annulus":
        if len(vals) != 2:
            raise ValueError("annulus needs two radii")
        return make_ball_ring([0.0] * dim, vals[0], vals[1], name=text)
    if kind == "ball-ring":
        if len(vals) != dim + 2:
            raise ValueError(f"ball-ring needs {dim} centre coordinates and two radii")
        return make_ball_ring(vals[:dim], vals[dim], vals[dim + 1], name=text)
    if kind == "box":
        if len(vals) != dim + 2:
            raise ValueError(f"box needs {dim} semiaxes, r and t")
        return make_box_condenser(BoxCondenserParams(tuple(vals[:dim]), vals[dim], vals[dim + 1]),
                                  name=text)
    raise ValueError(f"unknown condenser kind {kind!r}")


def parse_rings(text: str, region, seed: int) -> list:
    kind, _, rest = text.partition(":")
    try:
        k = int(rest)
    except ValueError:
        raise ValueError(f"ring count must be an integer in {text!r}") from None
    if k < 1:
        raise ValueError("ring count must be positive")
    if kind == "origin-centered":
        return origin_rings(k, region.dim, region)
    if kind == "offcenter":
        return offcenter_rings(k, region, seed)
    raise ValueError(f"unknown ring family {kind!r}")


def parse_points(text: str) -> list:
    return [tuple(_floats(chunk)) for chunk in text.split(";") if chunk.strip()]


# ---------------------------------------------------------------- output

def _cell(v):
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(json.loads(dumps(v)), separators=(",", ":"))
    r = json.loads(dumps(v))
    return "" if r is None else r


def write_csv(path: Path, rows: list):
    if not rows:
        return
    cols = list(rows[0])
    for r in rows[1:]:
        cols += [c for c in r if c not in cols]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: _cell(r.get(c, "")) for c in cols})


class Writer:
    def __init__(self, out: str):
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)

    def json(self, name: str, obj) -> Path:
        path = self.dir / f"{name}.json"
        path.write_text(dumps(obj))
        return path

    def csv(self, name: str, rows: list) -> Path:
        path = self.dir / f"{name}.csv"
        write_csv(path, rows)
        return path

    def figure(self, name: str, draw) -> Path:
        path = self.dir / f"{name}.svg"
        draw(path)
        return path


def _solver(cfg: RunConfig, default_res: int, p: Optional[float] = None) -> SolverOptions:
    return SolverOptions(p=cfg.p if p is None else p, res=cfg.res or default_res)


def _mapping(cfg: RunConfig):
    return parse_mapping(cfg.mapping, cfg.dim, DOMAINS[cfg.domain](cfg.dim))


# ---------------------------------------------------------------- commands

def cmd_cap(cfg: RunConfig, w: Writer):
    R = parse_shape(cfg.shape, cfg.dim)
    opts = _solver(cfg, 128)
    method = "numeric" if cfg.method == "auto" else cfg.method
    res = capacity(R, cfg.p, method=method, opts=opts, bounds=True)
    out = {"shape": cfg.shape, "result": res.to_json(), "method": res.method}
    checks = {}
    if res.lower_bound is not None and res.upper_bound is not None:
        checks["bound_bracket"] = res.lower_bound <= res.value <= res.upper_bound
    if R.is_concentric_balls():
        exact = cap_radial_oracle(R.F.ball[1], R.G.ball[1], R.dim, cfg.p)
        out["oracle"] = exact
        out["rel_error"] = (res.value - exact) / exact
    out["checks"] = checks
    return out, all(checks.values())


def cmd_distort(cfg: RunConfig, w: Writer):
    phi = _mapping(cfg)
    q = cfg.p if cfg.q is None else cfg.q
    rep = distortion_norm(phi, cfg.p, q, res=cfg.res or 128)
    ok, bad = finite_distortion_check(phi)
    return {"mapping": phi.name, "domain": cfg.domain, "report": rep.as_dict(),
            "finite_distortion_violations": [list(map(float, x)) for x in bad][:20]}, ok


def cmd_verify_ring(cfg: RunConfig, w: Writer):
    phi = _mapping(cfg)
    rings = parse_rings(cfg.rings, phi.codomain(), cfg.seed)
    opts = _solver(cfg, 128)
    if cfg.q is None or cfg.q == cfg.p:
        rep = verify_ring_pp(phi, rings, cfg.p, opts, cfg.method, cfg.tolerance)
    else:
        rep = verify_ring_pq(phi, rings, cfg.p, cfg.q, opts, cfg.method, cfg.tolerance)
    w.csv("verify-ring", [r.row() for r in rep.records])
    w.figure("verify-ring", lambda path: plotting.plot_ring_ratios(rep.records, rep.constant,
                                                                   path, cfg.tolerance))
    return {"mapping": phi.name, "rings": cfg.rings, **rep.summary()}, rep.ok


def cmd_setfunc(cfg: RunConfig, w: Writer):
    if cfg.q is None:
        raise ValueError("setfunc needs --q below --p")
    phi = _mapping(cfg)
    img = phi.codomain()
    part = box_partition(img.lo, img.hi, cfg.partition)
    est = variation_estimate(phi, part, cfg.p, cfg.q, cfg.budget,
                             CondenserSampler(phi, seed=cfg.seed), _solver(cfg, 48), cfg.method)
    rows = [{"lo": A.lo.tolist(), "hi": A.hi.tolist(), "psi": e.psi_value,
             "witness": e.best_witness, "samples": e.sampled_condensers}
            for A, e in zip(part, est.per_set)]
    w.csv("setfunc", rows)
    vals = [e.psi_value for e in est.per_set]
    if img.dim == 2:
        w.figure("setfunc", lambda path: plotting.plot_partition(part, vals, path))
    limit = est.bound * (1 + cfg.tolerance)
    return {"mapping": phi.name, "boxes": len(part), "total": est.total, "M": est.bound,
            "limit": limit}, est.total <= limit


def cmd_metric(cfg: RunConfig, w: Writer):
    D = DOMAINS[cfg.domain](cfg.dim)
    pts = parse_points(cfg.points)
    if len(pts) < 2:
        raise ValueError("metric needs at least two points")
    opts = _solver(cfg, 64)
    if len(pts) == 2:
        r = capacitary_distance(pts[0], pts[1], D, cfg.p, opts, seed=cfg.seed)
        queries, ok, axioms = [r], True, None
    else:
        rep = check_metric_axioms(D, cfg.p, pts, opts, cfg.seed)
        queries, ok = rep.queries, rep.ok
        axioms = {k: v for k, v in rep.to_json().items() if k != "distances"}
    w.figure("metric", lambda path: plotting.plot_metric_curves(D, queries, path))
    w.csv("metric", [{k: v for k, v in q.to_json().items() if k != "curve"} for q in queries])
    return {"domain": cfg.domain, "pairs": [q.to_json() for q in queries], "axioms": axioms}, ok


def cmd_suite(cfg: RunConfig, w: Writer):
    scfg = SuiteConfig(**{"seed": cfg.seed, **cfg.suite,
                          **({"res": cfg.res} if cfg.res else {})})
    verdicts = run_suite(scfg, cfg.only or None)
    for v in verdicts:
        for stem, rows in v.ledgers.items():
            w.csv(stem, rows)
        for stem, draw in v.figures.items():
            w.figure(stem, draw)
        print(f"{v.name:24s} {v.status}", file=sys.stderr)
    timing = {v.name: v.timing for v in verdicts}
    timing["total_s"] = sum(v.timing.get("criterion_s", 0.0) for v in verdicts)
    (w.dir / "timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")
    out = {"suite": asdict(scfg), "criteria": {v.name: v.summary() for v in verdicts},
           "runtime_budget_s": scfg.metric_budget_s}
    return out, not any(v.status == FAIL for v in verdicts)


HANDLERS = {"cap": cmd_cap, "distort": cmd_distort, "verify-ring": cmd_verify_ring,
            "setfunc": cmd_setfunc, "metric": cmd_metric, "suite": cmd_suite}


def run(cfg: RunConfig) -> int:
    """Execute one configured command; returns the process exit code."""
    try:
        cfg.validate()
        w = Writer(cfg.out)
        body, ok = HANDLERS[cfg.command](cfg, w)
    except (ValueError, KeyError, OSError, ArithmeticError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2
    doc = {"command": cfg.command, "seed": cfg.seed, "config": cfg.record(), "passed": ok,
           **body}
    w.json("suite-summary" if cfg.command == "suite" else cfg.command, doc)
    sys.stdout.write(dumps(doc))
    return 0 if ok else 1


# ---------------------------------------------------------------- argparse

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file; flags override its values")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory (default ringcap-out)")
    common.add_argument("--p", type=float)
    common.add_argument("--q", type=float)
    common.add_argument("--res", type=int, help="grid cells across the condenser or domain")
    common.add_argument("--dim", type=int)
    common.add_argument("--map", dest="mapping", help="identity | linear:a,b,c,d | radial:alpha "
                        "| composed:[m1;m2]")
    common.add_argument("--domain", choices=sorted(DOMAINS))
    common.add_argument("--method", choices=("auto", "numeric", "oracle"))
    common.add_argument("--tolerance", type=float)
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="ringcap", description="p-capacities of ring condensers "
                                 "and distortion inequalities for mappings")
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("cap", parents=[common], help="capacity of one condenser")
    s.add_argument("--shape", help="annulus:a,b | ball-ring:cx,cy,rF,rG | box:l1,l2,r,t")
    sub.add_parser("distort", parents=[common], help="distortion norm K_{p,q} of a mapping")
    s = sub.add_parser("verify-ring", parents=[common], help="ring capacity inequality")
    s.add_argument("--rings", help="origin-centered:N | offcenter:N")
    s = sub.add_parser("setfunc", parents=[common], help="capacity set function over a partition")
    s.add_argument("--partition", type=int, help="boxes per axis")
    s.add_argument("--budget", type=int, help="condensers sampled per set (>= 10)")
    s = sub.add_parser("metric", parents=[common], help="capacitary distances")
    s.add_argument("--points", help='"x1,y1;x2,y2;..."')
    s = sub.add_parser("suite", parents=[common], help="acceptance battery")
    s.add_argument("--only", help="comma separated criteria: " + ", ".join(CRITERIA))
    return ap


def config_from_args(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    values = load_config(args.config)
    for k, v in vars(args).items():
        if k in ("config", "verbose") or v is None:
            continue
        values[k] = [s.strip() for s in v.split(",") if s.strip()] if k == "only" else v
    values["command"] = args.command
    if args.verbose:
        logging.basicConfig(level=logging.INFO)
    return RunConfig(**values)


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
    except (ValueError, OSError, tomli.TOMLDecodeError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
