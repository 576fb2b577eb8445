"""Acceptance battery.

Each criterion is a function of a :class:`SuiteConfig` returning a
:class:`Verdict`.  Verdicts carry only deterministic data; wall-clock times go
to ``Verdict.timing`` and are written to a separate file by the CLI.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import plotting
from .capacity import (SolverOptions, cap_lower_bound_measure, cap_numeric, cap_radial_oracle,
                       cap_upper_bound, capacity)
from .capmetric import check_lipschitz, check_metric_axioms
from .geometry import (BoxCondenserParams, RingCondenser, ball, box, make_ball_ring,
                       make_box_condenser, pullback_condenser)
from .inequalities import (CondenserSampler, box_partition, psi_estimate, variation_estimate,
                           verify_ring_pp, verify_ring_pq)
from .mappings import distortion_norm, identity, linear, radial_stretch, unit_disk, unit_square

PASS, FAIL, LOWRES = "pass", "fail", "insufficient resolution"


@dataclass
class SuiteConfig:
    seed: int = 0
    res: int = 256  # finest level of the convergence criteria
    res_ring: int = 128
    res_psi: int = 48
    res_metric: int = 64
    budget: int = 10
    tol_oracle: float = 0.02
    tol_nonconformal: float = 0.03
    tol_equality_oracle: float = 0.01
    tol_equality_grid: float = 0.04
    tol_offcenter: float = 0.03
    tol_pq: float = 0.03
    tol_variation: float = 0.05
    tol_symmetry: float = 0.02
    tol_triangle: float = 0.05
    tol_lipschitz: float = 0.05
    solve_budget_s: float = 60.0
    metric_budget_s: float = 1800.0


@dataclass
class Verdict:
    name: str
    status: str
    details: dict = field(default_factory=dict)
    ledgers: dict = field(default_factory=dict)  # file stem -> list of row dicts
    figures: dict = field(default_factory=dict)  # file stem -> callable(path)
    timing: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def summary(self) -> dict:
        return {"status": self.status, "details": self.details}


def _opts(res: int, p: float = 2.0) -> SolverOptions:
    return SolverOptions(p=p, res=res)


def _timed(fn, *a, **kw):
    t = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t


def _status(ok: bool) -> str:
    return PASS if ok else FAIL


# ---------------------------------------------------------------- capacity

ORACLE_ANNULI = {"annulus_0.5_1": (0.5, 1.0), "annulus_1_e": (1.0, math.e)}


def _levels(cfg: SuiteConfig) -> list:
    return [cfg.res // 4, cfg.res // 2, cfg.res]


def crit_radial_oracle(cfg: SuiteConfig) -> Verdict:
    if cfg.res < 256:
        return Verdict("radial_oracle", LOWRES, {"res": cfg.res, "required": 256})
    rows, series, times = [], {}, []
    ok = True
    details = {}
    for name, (a, b) in ORACLE_ANNULI.items():
        R = make_ball_ring((0.0, 0.0), a, b)
        exact = cap_radial_oracle(a, b, 2, 2.0)
        errs = []
        for res in _levels(cfg):
            out, dt = _timed(cap_numeric, R, _opts(res))
            times.append(dt)
            err = (out.value - exact) / exact
            errs.append(err)
            rows.append({"condenser": name, "res": res, "h": out.grid_h, "value": out.value,
                         "oracle": exact, "rel_error": err, "converged": out.converged})
        mono = all(abs(e2) < abs(e1) for e1, e2 in zip(errs, errs[1:]))
        good = abs(errs[-1]) <= cfg.tol_oracle and mono
        ok &= good
        series[name] = (_levels(cfg), errs)
        details[name] = {"oracle": exact, "rel_errors": errs, "monotone": mono, "ok": good}
    within = max(times) <= cfg.solve_budget_s
    details["solve_time_within_budget"] = within
    ok &= within
    return Verdict("radial_oracle", _status(ok), details, {"radial_oracle": rows},
                   {"convergence": lambda path: plotting.plot_convergence(series, path)},
                   {"max_solve_s": max(times)})


def crit_nonconformal(cfg: SuiteConfig) -> Verdict:
    if cfg.res < 256:
        return Verdict("nonconformal_exponent", LOWRES, {"res": cfg.res, "required": 256})
    R = make_ball_ring((0.0, 0.0), 0.5, 1.0)
    exact = cap_radial_oracle(0.5, 1.0, 2, 1.5)
    out, dt = _timed(cap_numeric, R, _opts(cfg.res, 1.5))
    err = (out.value - exact) / exact
    return Verdict("nonconformal_exponent", _status(abs(err) <= cfg.tol_nonconformal),
                   {"p": 1.5, "res": cfg.res, "value": out.value, "oracle": exact,
                    "rel_error": err, "converged": out.converged}, timing={"solve_s": dt})


def bracket_condensers() -> list:
    """Test condensers with convex F: (condenser, resolution scale)."""
    rot = np.array([[math.cos(0.5), -math.sin(0.5)], [math.sin(0.5), math.cos(0.5)]])
    ell = linear([[2.0, 0.0], [0.0, 1.0]])
    return [
        (make_ball_ring((0.0, 0.0), 0.5, 1.0, name="annulus_0.5_1"), 1.0),
        (make_ball_ring((0.3, -0.2), 0.2, 0.7, name="ring_offset"), 1.0),
        (make_ball_ring((0.0, 0.0), 0.1, 1.0, name="annulus_0.1_1"), 1.0),
        (pullback_condenser(ell, make_ball_ring((0.2, 0.1), 0.3, 0.8, name="ellipse_ring")), 1.0),
        (make_box_condenser(BoxCondenserParams((1.0, 1.0), 0.5, 0.5), name="box_t0.5"), 1.0),
        (make_box_condenser(BoxCondenserParams((2.0, 0.5), 0.3, 1.0, (0.1, 0.2),
                                               tuple(map(tuple, rot))), name="box_rot"), 1.0),
        (make_ball_ring((0.0, 0.0, 0.0), 0.5, 1.0, name="ball3d_0.5_1"), 0.25),
    ]


def crit_bound_bracket(cfg: SuiteConfig) -> Verdict:
    rows, viol = [], []
    for R, scale in bracket_condensers():
        for p in (1.5, 2.0, 3.0):
            res = max(16, int(cfg.res_ring * scale))
            out = cap_numeric(R, _opts(res, p))
            lo, hi = cap_lower_bound_measure(R, p), cap_upper_bound(R, p)
            good = lo <= out.value <= hi
            rid = f"{R.name}_p{p:g}"
            rows.append({"id": rid, "dim": R.dim, "p": p, "res": res, "lower": lo,
                         "value": out.value, "upper": hi, "ok": good})
            if not good:
                viol.append(rid)
    return Verdict("bound_bracket", _status(not viol),
                   {"n_checked": len(rows), "violations": viol}, {"bound_bracket": rows})


# ---------------------------------------------------------------- ring inequalities

EQUALITY_RINGS = [(0.05, 0.9), (0.1, 0.8), (0.2, 0.9), (0.3, 0.6), (0.05, 0.4)]


def origin_rings(k: int, n: int = 2, region=None) -> list:
    """Origin-centred rings from a fixed radius list, scaled to fit ``region``."""
    region = region or unit_disk(n)
    scale = float(min(-region.lo.max(), region.hi.min()))
    if not scale > 0:
        raise ValueError("region does not contain the origin")
    scale = min(scale, 1.0)
    base = EQUALITY_RINGS * (k // len(EQUALITY_RINGS) + 1)
    return [make_ball_ring(np.zeros(n), a * scale, b * scale, region, name=f"origin{i:02d}")
            for i, (a, b) in enumerate(base[:k])]


def offcenter_rings(k: int, region, seed: int, r_range=(0.1, 0.45),
                    ratio_range=(1.5, 4.0)) -> list:
    """Seeded ball rings inside ``region``, none centred at the origin."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < k:
        c = region.lo + rng.random(region.dim) * (region.hi - region.lo)
        rG = rng.uniform(*r_range)
        rF = rG / rng.uniform(*ratio_range)
        if np.linalg.norm(c) < 0.05:
            continue
        try:
            out.append(make_ball_ring(c, rF, rG, region, name=f"ring{len(out):02d}"))
        except ValueError:
            continue
    return out


def crit_ring_pp_equality(cfg: SuiteConfig) -> Verdict:
    phi = radial_stretch(4.0, 2, unit_disk())
    K = distortion_norm(phi, 2.0, 2.0).K_pq
    rings = origin_rings(5)
    oracle = verify_ring_pp(phi, rings, 2.0, method="auto", K=K)
    grid = verify_ring_pp(phi, rings, 2.0, _opts(2 * cfg.res_ring), method="numeric", K=K)
    dev_o = [abs(r.ratio - K) / K for r in oracle.records]
    dev_g = [abs(r.ratio - K) / K for r in grid.records]
    ok = (max(dev_o) <= cfg.tol_equality_oracle and max(dev_g) <= cfg.tol_equality_grid
          and abs(K - 2.0) <= 1e-9 * 2)
    rows = ([{**r.row(), "method": "oracle"} for r in oracle.records]
            + [{**r.row(), "method": "grid"} for r in grid.records])
    return Verdict("ring_pp_equality", _status(ok),
                   {"K_p": K, "max_rel_dev_oracle": max(dev_o), "max_rel_dev_grid": max(dev_g),
                    "oracle": oracle.summary(), "grid": grid.summary()},
                   {"ring_pp_equality": rows},
                   {"ring_pp_equality": lambda path: plotting.plot_ring_ratios(
                       grid.records, K, path, cfg.tol_equality_grid)})


def crit_ring_pp_offcenter(cfg: SuiteConfig) -> Verdict:
    phi = linear([[2.0, 0.0], [0.0, 1.0]], unit_disk())
    K = distortion_norm(phi, 2.0, 2.0).K_pq
    rings = offcenter_rings(5, phi.codomain(), cfg.seed)
    rep = verify_ring_pp(phi, rings, 2.0, _opts(cfg.res_ring), method="auto", K=K,
                         tol=cfg.tol_offcenter)
    limit = math.sqrt(2.0) * (1 + cfg.tol_offcenter)
    ok = all(r.ratio <= limit for r in rep.records if r.skipped is None) and rep.ok
    return Verdict("ring_pp_offcenter", _status(ok), {**rep.summary(), "limit": limit},
                   {"ring_pp_offcenter": [r.row() for r in rep.records]},
                   {"ring_pp_offcenter": lambda path: plotting.plot_ring_ratios(
                       rep.records, K, path, cfg.tol_offcenter)})


def crit_ring_pq(cfg: SuiteConfig) -> Verdict:
    phi = linear([[2.0, 0.0], [0.0, 1.0]], unit_square())
    K = distortion_norm(phi, 3.0, 2.0).K_pq
    rings = offcenter_rings(10, phi.codomain(), cfg.seed)
    rep = verify_ring_pq(phi, rings, 3.0, 2.0, _opts(cfg.res_ring), method="auto", K=K,
                         tol=cfg.tol_pq)
    worst = min((r.slack / r.bound for r in rep.records if r.skipped is None), default=math.nan)
    return Verdict("ring_pq", _status(rep.ok and len(rep.records) == 10),
                   {**rep.summary(), "min_relative_slack": worst},
                   {"ring_pq": [r.row() for r in rep.records]},
                   {"ring_pq": lambda path: plotting.plot_ring_ratios(rep.records, K, path,
                                                                       cfg.tol_pq)})


# ---------------------------------------------------------------- set function

def nested_boxes(k: int, region, seed: int) -> list:
    """k pairs (inner, outer) of open boxes with inner inside outer inside region."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < k:
        c = rng.uniform(-0.5, 0.5, region.dim)
        half = rng.uniform(0.12, 0.3, region.dim)
        lo, hi = c - half, c + half
        corners = np.array(list(np.ndindex(*([2] * region.dim))), dtype=float)
        if not np.all(region.contains(lo + corners * (hi - lo))):
            continue
        frac = rng.uniform(0.4, 0.8)
        shift = rng.uniform(0, 1 - frac, region.dim) * (hi - lo)
        ilo = lo + shift
        out.append((box(ilo, ilo + frac * (hi - lo), closed=False), box(lo, hi, closed=False)))
    return out


def crit_setfunc_monotone(cfg: SuiteConfig) -> Verdict:
    phi = radial_stretch(4.0, 2, unit_disk())
    sampler = CondenserSampler(phi, seed=cfg.seed)
    opts = _opts(cfg.res_psi)
    rows, neg, viol = [], [], []
    for i, (A1, A2) in enumerate(nested_boxes(20, phi.codomain(), cfg.seed)):
        e1 = psi_estimate(phi, A1, 3.0, 2.0, sampler, cfg.budget, opts)
        e2 = psi_estimate(phi, A2, 3.0, 2.0, sampler, cfg.budget, opts, inherit=[e1])
        if not (e1.psi_value > 0 and e2.psi_value > 0):
            neg.append(i)
        if e1.psi_value > e2.psi_value:
            viol.append(i)
        rows.append({"pair": i, "inner_lo": A1.lo.tolist(), "inner_hi": A1.hi.tolist(),
                     "outer_lo": A2.lo.tolist(), "outer_hi": A2.hi.tolist(),
                     "psi_inner": e1.psi_value, "psi_outer": e2.psi_value,
                     "witness_inner": e1.best_witness, "witness_outer": e2.best_witness,
                     "samples_inner": e1.sampled_condensers,
                     "samples_outer": e2.sampled_condensers})
    return Verdict("setfunc_monotone", _status(not neg and not viol),
                   {"pairs": len(rows), "non_positive": neg, "monotonicity_violations": viol},
                   {"setfunc_monotone": rows})


def crit_variation_bound(cfg: SuiteConfig) -> Verdict:
    details, rows, figs = {}, [], {}
    ok = True
    for label, phi in (("identity", identity(2, unit_square())),
                       ("diag_2_1", linear([[2.0, 0.0], [0.0, 1.0]], unit_square()))):
        img = phi.codomain()
        part = box_partition(img.lo, img.hi, 4)
        est = variation_estimate(phi, part, 3.0, 2.0, cfg.budget,
                                 CondenserSampler(phi, seed=cfg.seed), _opts(cfg.res_psi))
        limit = est.bound * (1 + cfg.tol_variation)
        good = est.total <= limit
        ok &= good
        vals = [e.psi_value for e in est.per_set]
        details[label] = {"total": est.total, "M": est.bound, "limit": limit, "ok": good,
                          "boxes": len(part)}
        for A, e in zip(part, est.per_set):
            rows.append({"map": label, "lo": A.lo.tolist(), "hi": A.hi.tolist(),
                         "psi": e.psi_value, "witness": e.best_witness,
                         "samples": e.sampled_condensers})
        figs[f"variation_{label}"] = (lambda part, vals: lambda path: plotting.plot_partition(
            part, vals, path))(part, vals)
    return Verdict("variation_bound", _status(ok), details, {"variation_bound": rows}, figs)


# ---------------------------------------------------------------- metric

METRIC_POINTS = [(-0.4, 0.0), (0.4, 0.0), (0.0, 0.4), (0.1, -0.3)]


def crit_metric_axioms(cfg: SuiteConfig) -> Verdict:
    D = unit_disk()
    details, rows, figs, timing = {}, [], {}, {}
    ok = True
    t_all = time.perf_counter()
    for p in (1.5, 2.0):
        rep, dt = _timed(check_metric_axioms, D, p, METRIC_POINTS, _opts(cfg.res_metric, p),
                         cfg.seed, cfg.tol_symmetry, cfg.tol_triangle)
        timing[f"p{p:g}_s"] = dt
        ok &= rep.ok
        js = rep.to_json()
        details[f"p{p:g}"] = {k: js[k] for k in ("ok", "symmetry", "triangle", "positivity")}
        for q in rep.queries:
            rows.append({"p": p, "x": list(q.x), "y": list(q.y), "d": q.d_value,
                         "straight": q.straight_value, "evaluations": q.iterations})
        figs[f"metric_p{p:g}"] = (lambda qs: lambda path: plotting.plot_metric_curves(
            D, qs, path))(rep.queries)
    total = time.perf_counter() - t_all
    timing["total_s"] = total
    within = total <= cfg.metric_budget_s
    details["runtime_within_budget"] = within
    return Verdict("metric_axioms", _status(ok and within), details, {"metric_axioms": rows},
                   figs, timing)


LIPSCHITZ_CASES = {
    "identity": (lambda: identity(2, unit_disk()),
                 [((-0.4, 0.0), (0.4, 0.0)), ((0.0, -0.3), (0.2, 0.4)), ((-0.3, 0.3), (0.3, 0.1))]),
    "diag_2_1": (lambda: linear([[2.0, 0.0], [0.0, 1.0]], unit_disk()),
                 [((-1.0, 0.0), (1.0, 0.0)), ((0.0, -0.5), (0.0, 0.5)),
                  ((-0.8, 0.3), (0.6, -0.3))]),
    "radial_4": (lambda: radial_stretch(4.0, 2, unit_disk()),
                 [((0.05, 0.0), (0.4, 0.0)), ((0.0, 0.1), (0.0, 0.5)), ((0.1, 0.1), (0.3, 0.3))]),
}


def crit_lipschitz(cfg: SuiteConfig) -> Verdict:
    details, rows = {}, []
    ok = True
    for label, (make, pairs) in LIPSCHITZ_CASES.items():
        phi = make()
        K, recs = check_lipschitz(phi, pairs, 2.0, 2.0, _opts(cfg.res_metric), cfg.seed,
                                  cfg.tol_lipschitz)
        good = all(r.status != "violated" for r in recs)
        ok &= good
        details[label] = {"K": K, "statuses": [r.status for r in recs],
                          "min_relative_slack": min(r.slack / r.bound for r in recs), "ok": good}
        rows += [{"map": label, **r.row()} for r in recs]
    return Verdict("lipschitz", _status(ok), details, {"lipschitz": rows})


# ---------------------------------------------------------------- diagnostics

SHRINK_K = (2, 4, 8, 16, 32)


def crit_zero_capacity(cfg: SuiteConfig) -> Verdict:
    x0 = np.array([0.2, 0.1])
    G = ball((0.0, 0.0), 1.0, closed=False)
    details, rows, figs = {}, [], {}
    ok = True
    for p in (1.5, 2.0):
        vals = []
        for k in SHRINK_K:
            R = RingCondenser(ball(x0, 1.0 / k), G, name=f"shrink_k{k}")
            v = capacity(R, p, method="numeric", opts=_opts(cfg.res_ring * 2, p)).value
            vals.append(v)
            rows.append({"p": p, "k": k, "radius": 1.0 / k, "value": v})
        mono = all(b < a for a, b in zip(vals, vals[1:]))
        ok &= mono
        details[f"p{p:g}"] = {"k": list(SHRINK_K), "values": vals, "monotone": mono}
        figs[f"shrink_p{p:g}"] = (lambda vals: lambda path: plotting.plot_sequence(
            list(SHRINK_K), vals, path, "k (F radius 1/k)", "p-capacity", logx=True))(vals)
    return Verdict("zero_capacity_limit", _status(ok), details, {"zero_capacity_limit": rows},
                   figs)


def crit_reproducibility(cfg: SuiteConfig) -> Verdict:
    """Re-run two seeded criteria and compare their serialized summaries."""
    digests = {}
    ok = True
    for name in ("ring_pq", "ring_pp_offcenter"):
        a = dumps(CRITERIA[name](cfg).summary())
        b = dumps(CRITERIA[name](cfg).summary())
        digests[name] = a == b
        ok &= a == b
    return Verdict("reproducibility", _status(ok), {"identical": digests, "seed": cfg.seed})


CRITERIA: dict[str, Callable[[SuiteConfig], Verdict]] = {
    "radial_oracle": crit_radial_oracle,
    "nonconformal_exponent": crit_nonconformal,
    "bound_bracket": crit_bound_bracket,
    "ring_pp_equality": crit_ring_pp_equality,
    "ring_pp_offcenter": crit_ring_pp_offcenter,
    "ring_pq": crit_ring_pq,
    "setfunc_monotone": crit_setfunc_monotone,
    "variation_bound": crit_variation_bound,
    "metric_axioms": crit_metric_axioms,
    "lipschitz": crit_lipschitz,
    "zero_capacity_limit": crit_zero_capacity,
    "reproducibility": crit_reproducibility,
}


def run_suite(cfg: SuiteConfig, only: Optional[list] = None) -> list:
    names = list(CRITERIA) if not only else list(only)
    unknown = [n for n in names if n not in CRITERIA]
    if unknown:
        raise KeyError(f"unknown criterion: {', '.join(unknown)}")
    out = []
    for name in names:
        v, dt = _timed(CRITERIA[name], cfg)
        v.timing["criterion_s"] = dt
        out.append(v)
    return out


# ---------------------------------------------------------------- serialization

def _round(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.12g}")
    if isinstance(x, dict):
        return {str(k): _round(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round(v) for v in x]
    if isinstance(x, np.ndarray):
        return _round(x.tolist())
    if hasattr(x, "__dataclass_fields__"):
        return _round(asdict(x))
    return x


def dumps(obj) -> str:
    """JSON with floats at 12 significant digits and sorted keys."""
    return json.dumps(_round(obj), indent=2, sort_keys=True) + "\n"
