"""Variational p-capacity of ring condensers.

The admissible class is discretised by nodal values on a uniform grid: nodes
in F are clamped to 1, nodes outside G to 0.  The energy of a grid function is
summed over cells, each cell contributing the average of its 2^n corner
gradients (one-sided differences along the cell edges meeting at the corner).
For p = 2 this is the average of the two P1 triangulations' Dirichlet forms.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy import integrate, ndimage
from scipy.sparse.linalg import spsolve

from .geometry import Grid, ImplicitSet, RingCondenser, set_volume

log = logging.getLogger(__name__)

INTERIOR, ONE, ZERO = 0, 1, 2


class CondenserTooThin(ValueError):
    pass


@dataclass
class SolverOptions:
    p: float = 2.0
    epsilon_reg: float = 1e-2
    epsilon_min: float = 1e-6
    tol: float = 1e-8
    max_iter: int = 400
    continuation_steps: int = 3
    res: int = 128

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if self.epsilon_reg < 0 or self.epsilon_min < 0:
            raise ValueError("epsilon_reg must be non-negative")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.values.shape != tuple(self.grid.shape) or self.mask.shape != self.values.shape:
            raise ValueError("field shape does not match grid")

    def is_admissible(self, atol: float = 0.0) -> bool:
        v, m = self.values, self.mask
        return bool(np.all(v[m == ONE] == 1.0) and np.all(v[m == ZERO] == 0.0)
                    and np.all((v >= -atol) & (v <= 1 + atol)))


@dataclass
class CapacityResult:
    value: float
    p: float
    grid_h: float
    iterations: int = 0
    final_energy_delta: float = 0.0
    converged: bool = True
    lower_bound: Optional[float] = None
    upper_bound: Optional[float] = None
    method: str = "numeric"
    field: Optional[ScalarField] = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {"value": self.value, "p": self.p, "h": self.grid_h,
                "lower_bound": self.lower_bound, "upper_bound": self.upper_bound,
                "iterations": self.iterations, "converged": self.converged}


# ---------------------------------------------------------------- energy

def _corner_slices(shape, axis, corner):
    """Index pairs (hi, lo) of the edge along ``axis`` through ``corner`` of every cell."""
    hi, lo = [], []
    for b, m in enumerate(shape):
        if b == axis:
            hi.append(slice(1, m))
            lo.append(slice(0, m - 1))
        else:
            s = slice(corner[b], corner[b] + m - 1)
            hi.append(s)
            lo.append(s)
    return tuple(hi), tuple(lo)


def p_energy(f: ScalarField, p: float, epsilon_reg: float = 0.0) -> float:
    """Sum over cells of (|grad f|^2 + eps^2)^(p/2) h^n, averaged over cell corners."""
    v, h = f.values, f.grid.h
    n = v.ndim
    total = 0.0
    for c in itertools.product((0, 1), repeat=n):
        s = 0.0
        for a in range(n):
            hi, lo = _corner_slices(v.shape, a, c)
            s = s + ((v[hi] - v[lo]) / h) ** 2
        total += float(np.sum((s + epsilon_reg ** 2) ** (p / 2)))
    return total * h ** n / 2 ** n


class _Discretization:
    """Sparse corner-gradient operators restricted to cells touching free nodes."""

    def __init__(self, grid: Grid, mask: np.ndarray):
        self.grid = grid
        self.mask = mask
        n = grid.dim
        shape = mask.shape
        free = mask.ravel() == INTERIOR
        self.free_index = np.full(mask.size, -1)
        self.free_index[free] = np.arange(int(free.sum()))
        self.nfree = int(free.sum())
        idx = np.arange(mask.size).reshape(shape)
        cell_free = np.zeros(tuple(m - 1 for m in shape), dtype=bool)
        for c in itertools.product((0, 1), repeat=n):
            cell_free |= (mask == INTERIOR)[tuple(slice(o, o + m - 1) for o, m in zip(c, shape))]
        active = cell_free.ravel()
        f0 = (mask == ONE).astype(float).ravel()
        h = grid.h
        self.weight = h ** n / 2 ** n
        self.D, self.b = [], []
        for a in range(n):
            rows, cols, data, const = [], [], [], []
            offset = 0
            for c in itertools.product((0, 1), repeat=n):
                hs, ls = _corner_slices(shape, a, c)
                hi = idx[hs].ravel()[active]
                lo = idx[ls].ravel()[active]
                r = offset + np.arange(len(hi))
                for nodes, sign in ((hi, 1.0), (lo, -1.0)):
                    fi = self.free_index[nodes]
                    keep = fi >= 0
                    rows.append(r[keep])
                    cols.append(fi[keep])
                    data.append(np.full(int(keep.sum()), sign / h))
                const.append((f0[hi] - f0[lo]) / h)
                offset += len(hi)
            self.D.append(sp.csr_matrix((np.concatenate(data),
                                         (np.concatenate(rows), np.concatenate(cols))),
                                        shape=(offset, self.nfree)))
            self.b.append(np.concatenate(const))
        self.DT = [D.T.tocsr() for D in self.D]

    def gradients(self, x):
        return [D @ x + b for D, b in zip(self.D, self.b)]

    def energy(self, x, p, eps):
        s = sum(g * g for g in self.gradients(x))
        return self.weight * float(np.sum((s + eps * eps) ** (p / 2)))

    def derivatives(self, x, p, eps):
        g = self.gradients(x)
        s = sum(gi * gi for gi in g) + eps * eps
        e = self.weight * float(np.sum(s ** (p / 2)))
        c1 = p * s ** (p / 2 - 1)
        grad = self.weight * sum(DT @ (c1 * gi) for DT, gi in zip(self.DT, g))
        c2 = p * (p - 2) * s ** (p / 2 - 2) if p != 2 else None
        n = len(g)
        H = None
        for a in range(n):
            for b in range(a, n):
                w = c2 * g[a] * g[b] if c2 is not None else 0.0
                if a == b:
                    w = c1 + w
                if np.isscalar(w) and w == 0.0:
                    continue
                blk = self.DT[a] @ sp.diags(w) @ self.D[b]
                if a != b:
                    blk = blk + blk.T
                H = blk if H is None else H + blk
        return e, grad, self.weight * H.tocsc()


def _linear_solve(H, rhs, dim):
    if dim == 2 or H.shape[0] < 2_000:
        return spsolve(H, rhs, permc_spec="MMD_AT_PLUS_A")
    import pyamg

    ml = pyamg.smoothed_aggregation_solver(H.tocsr(), symmetry="symmetric")
    return ml.solve(rhs, tol=1e-11, accel="cg", maxiter=500)


def _minimize(disc: _Discretization, p: float, opts: SolverOptions):
    h = disc.grid.h
    x = np.zeros(disc.nfree)
    # the p = 2 minimiser is one linear solve and a good start for every p
    _, g, H = disc.derivatives(x, 2.0, 0.0)
    x = np.clip(x - _linear_solve(H, g, disc.grid.dim), 0.0, 1.0)
    iterations = 1
    if p == 2.0:
        return x, iterations, 0.0, True
    steps = max(1, opts.continuation_steps)
    eps_seq = np.geomspace(opts.epsilon_reg, opts.epsilon_min, steps) / h if opts.epsilon_reg > 0 \
        else np.zeros(1)
    delta, converged = math.inf, False
    for eps in eps_seq:
        E = disc.energy(x, p, eps)
        stage_done = False
        while iterations < opts.max_iter:
            E, g, H = disc.derivatives(x, p, eps)
            d = -_linear_solve(H, g, disc.grid.dim)
            t = 1.0
            accepted = False
            for _ in range(40):
                xt = np.clip(x + t * d, 0.0, 1.0)
                Et = disc.energy(xt, p, eps)
                if Et <= E + 1e-4 * float(g @ (xt - x)) or Et < E * (1 - 1e-15):
                    accepted = True
                    break
                t *= 0.5
            iterations += 1
            if not accepted:
                delta = 0.0
                stage_done = True
                break
            delta = (E - Et) / max(E, 1e-300)
            x = xt
            if delta < opts.tol:
                stage_done = True
                break
        converged = stage_done
        if not stage_done:
            break
    return x, iterations, delta, converged


def node_mask(R: RingCondenser, grid: Grid) -> np.ndarray:
    X = grid.nodes()
    F = R.F.thicken(grid.h) if R.F.thicken is not None else R.F
    inF = F.contains(X)
    inG = R.G.contains(X)
    mask = np.full(grid.shape, ZERO, dtype=np.int8)
    mask[inG] = INTERIOR
    mask[inF] = ONE
    if not inF.any():
        raise CondenserTooThin("condenser too thin: F holds no grid node")
    if np.any(inF & ~inG):
        raise CondenserTooThin("F is not contained in G on the grid")
    return mask


def condenser_grid(R: RingCondenser, res: int) -> Grid:
    G = R.G
    # the half-cell offset keeps symmetric boundaries away from grid nodes
    h = float(np.max(G.hi - G.lo)) / (res + 0.5)
    center = R.F.ball[0] if R.F.ball is not None else None
    if R.F.kind in ("plate",) and R.F.params.get("center") is not None:
        center = np.asarray(R.F.params["center"])
    return Grid.around(G.lo, G.hi, h, center=center)


def _check_clearance(mask: np.ndarray, h: float):
    d = ndimage.distance_transform_edt(mask != ZERO) * h
    if float(d[mask == ONE].min()) < 2 * h * (1 - 1e-9):
        raise CondenserTooThin("condenser too thin for grid: dist(F, dG) < 2h")
    _, nF = ndimage.label(mask == ONE, structure=np.ones((3,) * mask.ndim))
    if nF != 1:
        raise CondenserTooThin(f"F is not resolved by the grid ({nF} components)")


def cap_numeric(R: RingCondenser, opts: Optional[SolverOptions] = None,
                grid: Optional[Grid] = None, keep_field: bool = False) -> CapacityResult:
    """Minimise the grid p-energy over admissible nodal functions."""
    opts = opts or SolverOptions()
    grid = grid or condenser_grid(R, opts.res)
    mask = node_mask(R, grid)
    _check_clearance(mask, grid.h)
    disc = _Discretization(grid, mask)
    x, iters, delta, converged = _minimize(disc, opts.p, opts)
    value = disc.energy(x, opts.p, 0.0)
    if not converged:
        log.warning("capacity solve did not converge in %d iterations", opts.max_iter)
    fld = None
    if keep_field:
        vals = (mask == ONE).astype(float).ravel()
        vals[disc.free_index >= 0] = x
        fld = ScalarField(grid, vals.reshape(grid.shape), mask)
    return CapacityResult(value, opts.p, grid.h, iters, delta, converged, field=fld)


# ---------------------------------------------------------------- radial oracle

def sphere_area(n: int) -> float:
    """(n-1)-measure of the unit sphere in R^n."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def cap_radial_oracle(r_F: float, r_G: float, n: int, p: float) -> float:
    """p-capacity of concentric balls: the energy of the radial extremal,
    integrated numerically."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    if not 0 < r_F < r_G:
        raise ValueError("need 0 < r_F < r_G")
    if p == n:
        L = math.log(r_G / r_F)
        du = lambda rho: 1.0 / (rho * L)  # noqa: E731
    else:
        beta = (p - n) / (p - 1)
        den = r_F ** beta - r_G ** beta
        du = lambda rho: abs(beta * rho ** (beta - 1) / den)  # noqa: E731
    val, _ = integrate.quad(lambda rho: du(rho) ** p * rho ** (n - 1), r_F, r_G,
                            epsabs=0.0, epsrel=1e-12, limit=200)
    return sphere_area(n) * val


def cap_radial_closed_form(r_F: float, r_G: float, n: int, p: float) -> float:
    """omega_{n-1} (integral of rho^{-(n-1)/(p-1)} over [r_F, r_G])^(1-p)."""
    if p == n:
        I = math.log(r_G / r_F)
    else:
        beta = (p - n) / (p - 1)
        I = abs((r_G ** beta - r_F ** beta) / beta)
    return sphere_area(n) * I ** (1 - p)


# ---------------------------------------------------------------- bounds

def cap_upper_bound(R: RingCondenser, p: float) -> float:
    """(|G \\ F|^(1/p) / dist(F, dG))^p."""
    d = R.clearance()
    if not d > 0:
        raise ValueError("dist(F, dG) must be positive")
    gap = set_volume(R.G) - set_volume(R.F)
    return gap / d ** p


def cap_lower_bound_measure(R: RingCondenser, p: float) -> float:
    """(m_{n-1}(dF) / |G|^(1-1/p))^p, certified for convex F."""
    if not R.F.convex:
        raise ValueError("lower bound requires convex F")
    S = R.F.surface_area(4096)
    if S is None:
        raise ValueError("lower bound requires a boundary mesh for F")
    return (S / set_volume(R.G) ** (1 - 1 / p)) ** p


def cap_lower_bound_diam(R: RingCondenser, p: float) -> float:
    """diam(F)^(p/(n-1)) / |G|^(p(1/(n-1) - 1/p)); unit constant, diagnostic only."""
    n = R.dim
    diam = R.F.diameter()
    return diam ** (p / (n - 1)) / set_volume(R.G) ** (p * (1 / (n - 1) - 1 / p))


def attach_bounds(res: CapacityResult, R: RingCondenser) -> CapacityResult:
    try:
        res.upper_bound = cap_upper_bound(R, res.p)
    except ValueError:
        res.upper_bound = None
    try:
        res.lower_bound = cap_lower_bound_measure(R, res.p)
    except ValueError:
        res.lower_bound = None
    return res


def capacity(R: RingCondenser, p: float, method: str = "auto",
             opts: Optional[SolverOptions] = None, bounds: bool = False) -> CapacityResult:
    """cp_p(F; G) by the radial oracle when R is a pair of concentric balls
    (method auto/oracle), otherwise by the grid solver."""
    opts = opts or SolverOptions()
    if opts.p != p:
        opts = SolverOptions(**{**opts.__dict__, "p": p})
    if method in ("auto", "oracle") and R.is_concentric_balls():
        out = CapacityResult(cap_radial_oracle(R.F.ball[1], R.G.ball[1], R.dim, p), p, 0.0,
                             method="oracle")
    elif method == "oracle":
        raise ValueError("radial oracle needs concentric balls")
    else:
        out = cap_numeric(R, opts)
    return attach_bounds(out, R) if bounds else out
