"""Ring capacity inequalities and the capacity set function.

All capacities here are computed through :func:`ringcap.capacity.capacity`;
the ratio of a pulled-back condenser to its original is compared against
the distortion norm of the mapping.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .capacity import CondenserTooThin, SolverOptions, capacity
from .geometry import (BoxCondenserParams, ImplicitSet, RingCondenser, ball, box,
                       contained_in, lattice_members, make_ball_ring, make_box_condenser,
                       pullback_condenser, set_volume)
from .mappings import MappingSpec, distortion_norm
from .parallel import pmap

log = logging.getLogger(__name__)


@dataclass
class RingInequalityRecord:
    id: str
    p: float
    q: float
    lhs: float = math.nan
    rhs_base: float = math.nan
    ratio: float = math.nan
    bound: float = math.nan
    slack: float = math.nan
    converged: bool = True
    skipped: Optional[str] = None

    def row(self) -> dict:
        return {"id": self.id, "p": self.p, "q": self.q, "lhs": self.lhs,
                "rhs": self.rhs_base, "ratio": self.ratio, "bound": self.bound,
                "slack": self.slack, "converged": self.converged,
                "skipped": self.skipped or ""}


@dataclass
class RingReport:
    records: list
    constant: float  # K_p or K_{p,q}
    sup_ratio: float
    tolerance: float
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> dict:
        return {"constant": self.constant, "sup_ratio": self.sup_ratio,
                "tolerance": self.tolerance, "violations": self.violations,
                "n_records": len(self.records),
                "n_skipped": sum(r.skipped is not None for r in self.records)}


def _cap_root(R: RingCondenser, p: float, method: str, opts: SolverOptions):
    res = capacity(R, p, method=method, opts=opts)
    return res.value ** (1 / p), res.converged


def _one_record(phi, R, p, q, method, opts, K):
    rec = RingInequalityRecord(R.name, p, q)
    try:
        rhs, c1 = _cap_root(R, p, method, opts)
        if rhs == 0.0:
            rec.skipped = "zero base capacity"
            return rec
        lhs, c2 = _cap_root(pullback_condenser(phi, R), q, method, opts)
    except CondenserTooThin as exc:
        rec.skipped = str(exc)
        return rec
    rec.lhs, rec.rhs_base = lhs, rhs
    rec.ratio = lhs / rhs
    rec.bound = K * rhs
    rec.slack = rec.bound - lhs
    rec.converged = c1 and c2
    return rec


def _zero_capacity(R: RingCondenser, p: float) -> bool:
    """Points (and sets of vanishing size) carry no p-capacity for p <= n."""
    F = R.F
    return p <= R.dim and F.ball is not None and F.ball[1] == 0.0


def verify_ring_pp(phi: MappingSpec, condensers: Sequence[RingCondenser], p: float,
                   opts: Optional[SolverOptions] = None, method: str = "numeric",
                   tol: float = 0.03, K: Optional[float] = None) -> RingReport:
    """Check cp_p^(1/p)(phi^-1 R) <= K_p(phi) cp_p^(1/p)(R) on each condenser."""
    return _verify(phi, condensers, p, p, opts, method, tol, K)


def verify_ring_pq(phi: MappingSpec, condensers: Sequence[RingCondenser], p: float, q: float,
                   opts: Optional[SolverOptions] = None, method: str = "numeric",
                   tol: float = 0.03, K: Optional[float] = None) -> RingReport:
    """Check cp_q^(1/q)(phi^-1 R) <= K_{p,q}(phi) cp_p^(1/p)(R) on each condenser."""
    n = phi.dim
    if not n - 1 < q < p:
        raise ValueError("need n-1 < q < p")
    return _verify(phi, condensers, p, q, opts, method, tol, K)


def _verify(phi, condensers, p, q, opts, method, tol, K):
    opts = opts or SolverOptions()
    if K is None:
        K = distortion_norm(phi, p, q).K_pq
    named = [R if R.name else RingCondenser(R.F, R.G, R.ambient, name=f"R{i:03d}")
             for i, R in enumerate(condensers)]

    def one(R):
        if _zero_capacity(R, p):
            return RingInequalityRecord(R.name, p, q, skipped="zero base capacity")
        return _one_record(phi, R, p, q, method, opts, K)

    records = pmap(one, named)
    records.sort(key=lambda r: r.id)
    used = [r for r in records if r.skipped is None and r.converged]
    sup = max((r.ratio for r in used), default=math.nan)
    viol = [r.id for r in used if r.slack < -tol * r.bound]
    return RingReport(records, K, sup, tol, viol)


# ---------------------------------------------------------------- set function

@dataclass
class Sample:
    condenser: RingCondenser
    value: float  # ratio^(pq/(p-q))


@dataclass
class SetFunctionEstimate:
    region: ImplicitSet
    psi_value: float
    sampled_condensers: int
    best_witness: str
    samples: list = field(default_factory=list, repr=False)


class CondenserSampler:
    """Draws ball rings and plate condensers inside a region.

    Centres and radii are drawn in coordinates normalised to the region's
    bounding box, so regions that are translated or scaled copies of each other
    receive translated or scaled copies of the same condensers.
    """

    def __init__(self, phi: MappingSpec, seed: int = 0, ratio_range=(1.5, 4.0),
                 aspects=(0.1, 0.5, 1.0), boxes: bool = True):
        self.phi = phi
        self.seed = seed
        self.ratio_range = ratio_range
        self.aspects = tuple(aspects) if boxes else ()

    def draw(self, region: ImplicitSet, budget: int) -> list:
        n = region.dim
        span = region.hi - region.lo
        if not np.all(span > 0):
            return []
        size = float(span.min())
        rng = np.random.default_rng(self.seed)
        out = []
        for _ in range(50 * budget):
            if len(out) >= budget:
                break
            u = rng.random(n)
            k = rng.uniform(*self.ratio_range)
            rG = rng.uniform(0.1, 0.5) * size
            c = region.lo + u * span
            if not _ball_inside(c, rG, region):
                continue
            out.append(make_ball_ring(c, rG / k, rG, name=f"ball{len(out):02d}"))
        c = (region.lo + region.hi) / 2
        if self.aspects and region.contains(c[None])[0]:
            lam, Vt = _local_stretch(self.phi, c)
            for t in self.aspects:
                r = 0.45 * size / (1 + t * lam[0])
                for _ in range(8):
                    R = make_box_condenser(BoxCondenserParams(tuple(lam), r, t, tuple(c),
                                                              tuple(map(tuple, Vt.T))),
                                           name=f"box_t{t:g}")
                    if contained_in(R.G, region, 33):
                        out.append(R)
                        break
                    r *= 0.7
        return out


def _local_stretch(phi: MappingSpec, c: np.ndarray):
    """Singular values and right frame of D phi^-1 at c; isotropic where singular."""
    try:
        Dinv = phi.inverse_jacobian_at(c[None])[0]
    except np.linalg.LinAlgError:
        Dinv = None
    if Dinv is None or not np.all(np.isfinite(Dinv)):
        return np.ones(len(c)), np.eye(len(c))
    _, lam, Vt = np.linalg.svd(Dinv)
    return lam, Vt


def _ball_inside(c, r, region: ImplicitSet) -> bool:
    B = ball(c, r * (1 - 1e-9))
    v = B.boundary(128)[0]
    return bool(np.all(region.contains(np.vstack([v, c[None]]))))


def _ratio_power(phi, R, p, q, opts, method):
    kappa = p * q / (p - q)
    if _zero_capacity(R, p):
        return None
    try:
        rhs = _refined_capacity(R, p, method, opts) ** (1 / p)
        if rhs == 0.0:
            return None
        lhs = _refined_capacity(pullback_condenser(phi, R), q, method, opts) ** (1 / q)
    except CondenserTooThin:
        log.info("skipping %s: too thin for the grid", R.name)
        return None
    return (lhs / rhs) ** kappa


def _refined_capacity(R: RingCondenser, p: float, method: str, opts: SolverOptions,
                      retries: int = 2) -> float:
    o = _res_for(R, opts)
    for k in range(retries + 1):
        try:
            return capacity(R, p, method=method, opts=o).value
        except CondenserTooThin:
            if k == retries or o.res >= 1024:
                raise
            o = SolverOptions(**{**o.__dict__, "res": min(2 * o.res, 1024)})


def _res_for(R: RingCondenser, opts: SolverOptions) -> SolverOptions:
    """Raise the resolution until dist(F, dG) spans at least three cells."""
    extent = float(np.max(R.G.hi - R.G.lo))
    try:
        d = R.clearance()
    except ValueError:
        return opts
    need = int(math.ceil(3 * extent / max(d, 1e-12)))
    if need <= opts.res:
        return opts
    return SolverOptions(**{**opts.__dict__, "res": min(need, 1024)})


def psi_estimate(phi: MappingSpec, region: ImplicitSet, p: float, q: float,
                 sampler: Optional[CondenserSampler] = None, budget: int = 10,
                 opts: Optional[SolverOptions] = None, method: str = "auto",
                 inherit: Sequence[SetFunctionEstimate] = ()) -> SetFunctionEstimate:
    """Sampled lower estimate of Psi_{p,q}(region).

    Samples of the estimates in ``inherit`` whose condensers lie inside
    ``region`` are reused, which makes the estimate monotone under inclusion.
    """
    if budget < 10:
        raise ValueError("budget must be at least 10")
    if not q < p:
        raise ValueError("need q < p")
    opts = opts or SolverOptions(res=64)
    sampler = sampler or CondenserSampler(phi)
    if region.volume == 0.0 or not len(lattice_members(region, 17)):
        raise ValueError("region is empty")
    drawn = sampler.draw(region, budget)
    values = pmap(lambda R: _ratio_power(phi, R, p, q, opts, method), drawn)
    samples = [Sample(R, v) for R, v in zip(drawn, values) if v is not None]
    for est in inherit:
        for s in est.samples:
            if contained_in(s.condenser.G, region, 33):
                samples.append(s)
    if not samples:
        raise ValueError("no valid condenser fits inside the region")
    best = max(samples, key=lambda s: s.value)
    return SetFunctionEstimate(region, best.value, len(samples), best.condenser.name, samples)


@dataclass
class VariationEstimate:
    family: list
    per_set: list
    total: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.total <= self.bound


def box_partition(lo, hi, k: int) -> list:
    """k^n congruent open boxes tiling [lo, hi]."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = len(lo)
    step = (hi - lo) / k
    out = []
    for idx in np.ndindex(*([k] * n)):
        a = lo + np.array(idx) * step
        out.append(box(a, a + step, closed=False))
    return out


def check_disjoint(family: Sequence[ImplicitSet], k: int = 17) -> bool:
    for i, A in enumerate(family):
        pts = lattice_members(A, k)
        for B in family[i + 1:]:
            if len(pts) and np.any(B.contains(pts)):
                return False
    return True


def variation_estimate(phi: MappingSpec, partition: Sequence[ImplicitSet], p: float, q: float,
                       budget: int = 10, sampler: Optional[CondenserSampler] = None,
                       opts: Optional[SolverOptions] = None, method: str = "auto",
                       K: Optional[float] = None) -> VariationEstimate:
    """Sum of Psi estimates over a disjoint family, against M = K_{p,q}^(pq/(p-q))."""
    if not check_disjoint(partition):
        raise ValueError("partition sets overlap")
    if K is None:
        K = distortion_norm(phi, p, q).K_pq
    per = [psi_estimate(phi, A, p, q, sampler, budget, opts, method) for A in partition]
    total = float(sum(e.psi_value for e in per))
    return VariationEstimate(list(partition), per, total, K ** (p * q / (p - q)))


def density_quotients(phi: MappingSpec, x, radii: Sequence[float], p: float, q: float,
                      domain: ImplicitSet, sampler: Optional[CondenserSampler] = None,
                      budget: int = 10, opts: Optional[SolverOptions] = None,
                      method: str = "auto") -> np.ndarray:
    """Psi(B(x, r)) / |B(x, r)| for a decreasing sequence of radii."""
    radii = [float(r) for r in radii]
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly decreasing")
    x = np.asarray(x, dtype=float)
    out = []
    for r in radii:
        B = ball(x, r, closed=False)
        if not _ball_inside(x, r, domain):
            raise ValueError("ball escapes the domain")
        est = psi_estimate(phi, B, p, q, sampler, budget, opts, method)
        out.append(est.psi_value / set_volume(B))
    return np.array(out)
