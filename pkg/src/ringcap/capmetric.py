"""Capacitary distance d_p(x, y) = inf over curves of cp_p^(1/p)(curve; domain).

A curve is a polyline thickened to a tube of fixed radius (two grid cells by
default); the infimum over curves is approached by a compass search on the
normal offsets of interior control points, started from the straight segment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .capacity import CondenserTooThin, SolverOptions, cap_numeric
from .geometry import Grid, ImplicitSet, RingCondenser, tube
from .mappings import MappingSpec, distortion_norm
from .parallel import pmap


class ClearanceError(ValueError):
    pass


def check_exponent(p: float, n: int):
    if not n - 1 < p <= n:
        raise ValueError(f"p out of admissible range ({n - 1}, {n}] for n={n}")


def domain_grid(domain: ImplicitSet, res: int) -> Grid:
    return Grid.for_box(domain.lo, domain.hi, res)


@dataclass
class CurveCapacity:
    value: float  # cp_p^(1/p) of the tube at tube_radius
    half_tube_value: Optional[float]
    tube_radius: float
    h: float


def _clearance_ok(vertices: np.ndarray, domain: ImplicitSet, margin: float) -> bool:
    pts = _densify(vertices, margin / 2)
    if not np.all(domain.contains(pts)):
        return False
    if domain.boundary is None:
        return True
    d, _ = cKDTree(domain.boundary(2048)[0]).query(pts)
    return bool(d.min() >= margin)


def _densify(V: np.ndarray, step: float) -> np.ndarray:
    out = [V[:1]]
    for a, b in zip(V[:-1], V[1:]):
        k = max(1, int(math.ceil(np.linalg.norm(b - a) / step)))
        out.append(a + np.linspace(0, 1, k + 1)[1:, None] * (b - a))
    return np.vstack(out)


def curve_capacity(vertices, domain: ImplicitSet, p: float, tube_radius: Optional[float] = None,
                   opts: Optional[SolverOptions] = None, bias: bool = True,
                   grid: Optional[Grid] = None) -> CurveCapacity:
    """cp_p^(1/p)(tube(curve); domain), optionally also at half the tube radius."""
    V = np.atleast_2d(np.asarray(vertices, dtype=float))
    n = V.shape[1]
    check_exponent(p, n)
    opts = opts or SolverOptions(res=64)
    opts = SolverOptions(**{**opts.__dict__, "p": p})
    grid = grid or domain_grid(domain, opts.res)
    r = 2 * grid.h if tube_radius is None else float(tube_radius)
    if not _clearance_ok(V, domain, r + 2 * grid.h):
        raise ClearanceError("curve too close to the domain boundary")
    R = RingCondenser(tube(V, r), domain)
    val = cap_numeric(R, opts, grid=grid).value ** (1 / p)
    half = None
    if bias:
        half = cap_numeric(RingCondenser(tube(V, r / 2), domain), opts,
                           grid=grid).value ** (1 / p)
    return CurveCapacity(val, half, r, grid.h)


@dataclass
class MetricQueryResult:
    x: tuple
    y: tuple
    p: float
    d_value: float
    best_curve: np.ndarray = field(repr=False)
    iterations: int
    tube_radius: float
    straight_value: float
    half_tube_value: Optional[float] = None

    def to_json(self) -> dict:
        return {"x": list(self.x), "y": list(self.y), "p": self.p, "d": self.d_value,
                "straight": self.straight_value, "half_tube": self.half_tube_value,
                "tube_radius": self.tube_radius, "iterations": self.iterations,
                "curve": np.asarray(self.best_curve).tolist()}


def _normals(d: np.ndarray) -> np.ndarray:
    n = len(d)
    u = d / np.linalg.norm(d)
    basis = np.linalg.svd(u[None])[2][1:]
    return basis if n > 2 else np.array([[-u[1], u[0]]])


def capacitary_distance(x, y, domain: ImplicitSet, p: float, opts: Optional[SolverOptions] = None,
                        m: int = 5, seed: int = 0, levels: int = 3, step0: float = 0.15,
                        tube_radius: Optional[float] = None, bias: bool = False) -> MetricQueryResult:
    """Upper estimate of d_p(x, y) by local search over polylines."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    check_exponent(p, n)
    opts = opts or SolverOptions(res=64)
    grid = domain_grid(domain, opts.res)
    r = 2 * grid.h if tube_radius is None else float(tube_radius)
    if np.allclose(x, y):
        return MetricQueryResult(tuple(x), tuple(y), p, 0.0, x[None], 0, r, 0.0)
    L = float(np.linalg.norm(y - x))
    s = np.linspace(0, 1, m + 2)[1:-1]
    base = x + s[:, None] * (y - x)
    N = _normals(y - x)
    # offsets are stored against the parameter running from x to y, so the
    # reversed query polls mirrored control points in mirrored order
    coef = np.zeros((m, len(N)))

    def curve(c):
        return np.vstack([x, base + c @ N, y])

    def evaluate(c):
        try:
            return curve_capacity(curve(c), domain, p, r, opts, bias=False, grid=grid).value
        except (ClearanceError, CondenserTooThin):
            return math.inf

    best = evaluate(coef)
    if not math.isfinite(best):
        raise ClearanceError("no feasible initial curve")
    straight = best
    rng = np.random.default_rng(seed)
    evals = 1
    step = step0 * L
    for _ in range(levels):
        improved = True
        while improved:
            improved = False
            order = rng.permutation(coef.size)
            for k in order:
                for sgn in (1.0, -1.0):
                    trial = coef.copy()
                    trial.flat[k] += sgn * step
                    v = evaluate(trial)
                    evals += 1
                    if v < best * (1 - 1e-9):
                        best, coef, improved = v, trial, True
                        break
        step /= 2
    half = None
    if bias:
        half = curve_capacity(curve(coef), domain, p, r, opts, grid=grid).half_tube_value
    return MetricQueryResult(tuple(x), tuple(y), p, best, curve(coef), evals, r, straight, half)


@dataclass
class AxiomReport:
    p: float
    distances: dict
    symmetry: list
    triangle: list
    positivity: list
    queries: list = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return (all(e["status"] == "pass" for e in self.symmetry)
                and all(e["status"] != "violated" for e in self.triangle)
                and all(e["status"] == "pass" for e in self.positivity))

    def to_json(self) -> dict:
        return {"p": self.p, "ok": self.ok, "symmetry": self.symmetry,
                "triangle": self.triangle, "positivity": self.positivity,
                "distances": {f"{i}-{j}": v for (i, j), v in sorted(self.distances.items())}}


def check_metric_axioms(domain: ImplicitSet, p: float, points: Sequence, opts=None, seed: int = 0,
                        tol_sym: float = 0.02, tol_tri: float = 0.05) -> AxiomReport:
    """Symmetry, triangle inequality and positivity of the computed distances."""
    pts = [np.asarray(v, dtype=float) for v in points]
    if len(pts) < 3:
        raise ValueError("need at least three points")
    k = len(pts)
    keys = [(i, j) for i in range(k) for j in range(k) if i != j]
    found = pmap(lambda ij: capacitary_distance(pts[ij[0]], pts[ij[1]], domain, p, opts,
                                                seed=seed), keys)
    D = {ij: r.d_value for ij, r in zip(keys, found)}
    sym, pos = [], []
    for i in range(k):
        for j in range(i + 1, k):
            a, b = D[(i, j)], D[(j, i)]
            mean = (a + b) / 2
            dev = abs(a - b) / mean if mean > 0 else 0.0
            sym.append({"pair": [i, j], "d_ij": a, "d_ji": b, "rel_dev": dev,
                        "status": "pass" if dev <= tol_sym else "violated"})
            coincide = bool(np.allclose(pts[i], pts[j]))
            good = (mean == 0.0) if coincide else (min(a, b) > 0.0)
            pos.append({"pair": [i, j], "d": min(a, b), "coincident": coincide,
                        "status": "pass" if good else "violated"})
    tri = []
    sd = {key: min(D[key], D[key[::-1]]) for key in D}
    for i in range(k):
        for j in range(k):
            for l in range(k):
                if len({i, j, l}) < 3 or i > l:
                    continue
                lhs = sd[(i, l)]
                rhs = sd[(i, j)] + sd[(j, l)]
                if lhs <= rhs * (1 - tol_tri):
                    status = "pass"
                elif lhs <= rhs * (1 + tol_tri):
                    status = "tight"
                else:
                    status = "violated"
                tri.append({"triple": [i, j, l], "d_ik": lhs, "d_ij+d_jk": rhs,
                            "status": status})
    return AxiomReport(p, D, sym, tri, pos, found)


@dataclass
class LipschitzRecord:
    x: tuple
    y: tuple
    lhs: float
    rhs: float
    bound: float
    slack: float
    status: str

    def row(self) -> dict:
        return {"x": list(self.x), "y": list(self.y), "lhs": self.lhs, "rhs": self.rhs,
                "bound": self.bound, "slack": self.slack, "status": self.status}


def check_lipschitz(phi: MappingSpec, pairs: Sequence, p: float, q: float, opts=None,
                    seed: int = 0, tol: float = 0.05, K: Optional[float] = None):
    """d_q(phi^-1 x, phi^-1 y; domain) <= K_{p,q} d_p(x, y; image) for pairs in the image."""
    n = phi.dim
    if not n - 1 < q <= p <= n:
        raise ValueError("need n-1 < q <= p <= n")
    if K is None:
        K = distortion_norm(phi, p, q).K_pq
    Om, Omt = phi.domain, phi.codomain()
    out = []
    for x, y in pairs:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        rhs = capacitary_distance(x, y, Omt, p, opts, seed=seed).d_value
        xs, ys = phi.inverse(x[None])[0], phi.inverse(y[None])[0]
        lhs = capacitary_distance(xs, ys, Om, q, opts, seed=seed).d_value
        bound = K * rhs
        slack = bound - lhs
        if slack >= 0:
            status = "pass"
        elif slack >= -tol * bound:
            status = "flagged"
        else:
            status = "violated"
        out.append(LipschitzRecord(tuple(x), tuple(y), lhs, rhs, bound, slack, status))
    return K, out


@dataclass(frozen=True)
class DualityExponents:
    p: float
    q: float
    n: int
    p_dual: float
    q_dual: float


def duality_exponents(p: float, q: float, n: int) -> DualityExponents:
    """p' = p/(p-n+1), q' = q/(q-n+1)."""
    if not (p > n - 1 and q > n - 1):
        raise ValueError("p and q must exceed n-1")
    return DualityExponents(p, q, n, p / (p - n + 1), q / (q - n + 1))
