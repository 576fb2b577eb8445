"""Implicit sets, grids and ring condensers.

Every set is a vectorised membership predicate plus an axis-aligned bounding
box.  Shapes that admit closed forms (balls, boxes, plates and their linear
preimages) also carry their volume, a boundary mesh and a convexity flag, so
the capacity bounds can be evaluated without sampling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

PREIMAGE_PAD = 0.05

Mesh = tuple  # (vertices (k, n), simplices (m, n) int)


@dataclass(frozen=True, eq=False)
class ImplicitSet:
    contains: Callable[[np.ndarray], np.ndarray]
    lo: np.ndarray
    hi: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)
    volume: Optional[float] = None
    convex: bool = False
    boundary: Optional[Callable[[int], Mesh]] = None
    ball: Optional[tuple] = None  # (center, radius) when the set is exactly a ball
    thicken: Optional[Callable[[float], "ImplicitSet"]] = None

    @property
    def dim(self) -> int:
        return len(self.lo)

    def __call__(self, pts) -> np.ndarray:
        return self.contains(np.asarray(pts, dtype=float))

    def surface_area(self, k: int = 512) -> Optional[float]:
        """Measure of the boundary mesh; for convex sets the inscribed mesh
        never exceeds the true boundary measure."""
        if self.boundary is None:
            return None
        return mesh_measure(*self.boundary(k))

    def diameter(self, k: int = 256) -> float:
        if self.ball is not None:
            return 2.0 * self.ball[1]
        if self.boundary is None:
            raise ValueError(f"diameter unavailable for kind {self.kind!r}")
        v = np.unique(self.boundary(k)[0], axis=0)
        if len(v) < 2:
            return 0.0
        from scipy.spatial import ConvexHull
        from scipy.spatial.distance import pdist

        try:
            v = v[ConvexHull(v).vertices]
        except Exception:  # degenerate (flat) point clouds
            pass
        return float(pdist(v).max())


def mesh_measure(vertices: np.ndarray, simplices: np.ndarray) -> float:
    if len(simplices) == 0:
        return 0.0
    s = vertices[simplices]
    if vertices.shape[1] == 2:
        return float(np.linalg.norm(s[:, 1] - s[:, 0], axis=1).sum())
    cr = np.cross(s[:, 1] - s[:, 0], s[:, 2] - s[:, 0])
    return float(0.5 * np.linalg.norm(cr, axis=1).sum())


def _unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def _circle_mesh(k: int) -> Mesh:
    t = 2 * np.pi * np.arange(k) / k
    v = np.column_stack([np.cos(t), np.sin(t)])
    s = np.column_stack([np.arange(k), (np.arange(k) + 1) % k])
    return v, s


def _sphere_mesh(k: int) -> Mesh:
    nlat = max(4, int(math.sqrt(k)))
    nlon = 2 * nlat
    th = np.pi * np.arange(1, nlat) / nlat
    ph = 2 * np.pi * np.arange(nlon) / nlon
    T, P = np.meshgrid(th, ph, indexing="ij")
    ring = np.column_stack([(np.sin(T) * np.cos(P)).ravel(),
                            (np.sin(T) * np.sin(P)).ravel(), np.cos(T).ravel()])
    v = np.vstack([[0, 0, 1.0], ring, [0, 0, -1.0]])
    south = len(v) - 1
    idx = lambda i, j: 1 + i * nlon + (j % nlon)  # noqa: E731
    tris = []
    for j in range(nlon):
        tris.append((0, idx(0, j), idx(0, j + 1)))
        tris.append((south, idx(nlat - 2, j + 1), idx(nlat - 2, j)))
        for i in range(nlat - 2):
            tris.append((idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)))
            tris.append((idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)))
    return v, np.array(tris)


def _box_mesh(half: np.ndarray, k: int) -> Mesh:
    """Boundary of the centred box [-half, half], subdivided."""
    n = len(half)
    if n == 2:
        m = max(2, k // 4)
        t = np.linspace(-1, 1, m + 1)[:-1]
        hx, hy = half
        v = np.vstack([np.column_stack([t * hx, -hy + 0 * t]),
                       np.column_stack([hx + 0 * t, t * hy]),
                       np.column_stack([-t * hx, hy + 0 * t]),
                       np.column_stack([-hx + 0 * t, -t * hy])])
        kk = len(v)
        return v, np.column_stack([np.arange(kk), (np.arange(kk) + 1) % kk])
    m = max(2, int(math.sqrt(k / 6)))
    t = np.linspace(-1, 1, m + 1)
    U, V = np.meshgrid(t, t, indexing="ij")
    verts, tris = [], []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        for sgn in (-1.0, 1.0):
            base = sum(len(x) for x in verts)
            pts = np.zeros((U.size, 3))
            pts[:, axis] = sgn * half[axis]
            pts[:, others[0]] = U.ravel() * half[others[0]]
            pts[:, others[1]] = V.ravel() * half[others[1]]
            verts.append(pts)
            for i in range(m):
                for j in range(m):
                    a = base + i * (m + 1) + j
                    tris.append((a, a + m + 1, a + m + 2))
                    tris.append((a, a + m + 2, a + 1))
    return np.vstack(verts), np.array(tris)


# ---------------------------------------------------------------- constructors

def ball(center, radius: float, closed: bool = True) -> ImplicitSet:
    c = np.asarray(center, dtype=float)
    r = float(radius)
    if r < 0:
        raise ValueError("radius must be non-negative")
    n = len(c)
    if closed:
        def contains(x):
            return np.sum((x - c) ** 2, axis=-1) <= r * r
    else:
        def contains(x):
            return np.sum((x - c) ** 2, axis=-1) < r * r

    def boundary(k):
        v, s = _circle_mesh(k) if n == 2 else _sphere_mesh(k)
        return c + r * v, s

    return ImplicitSet(contains, c - r, c + r, "ball",
                       params={"center": c.tolist(), "radius": r, "closed": closed},
                       volume=_unit_ball_volume(n) * r ** n, convex=True,
                       boundary=boundary, ball=(c, r))


def box(lo, hi, closed: bool = True) -> ImplicitSet:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(hi < lo):
        raise ValueError("box corners out of order")
    if closed:
        def contains(x):
            return np.all((x >= lo) & (x <= hi), axis=-1)
    else:
        def contains(x):
            return np.all((x > lo) & (x < hi), axis=-1)
    mid, half = (lo + hi) / 2, (hi - lo) / 2

    def boundary(k):
        v, s = _box_mesh(half, k)
        return mid + v, s

    return ImplicitSet(contains, lo, hi, "box",
                       params={"lo": lo.tolist(), "hi": hi.tolist(), "closed": closed},
                       volume=float(np.prod(hi - lo)), convex=True, boundary=boundary)


def oriented_box(center, half, frame=None, closed: bool = True, kind: str = "box") -> ImplicitSet:
    """Box {center + frame @ u : |u_i| <= half_i}; frame columns are the local axes."""
    c = np.asarray(center, dtype=float)
    half = np.asarray(half, dtype=float)
    n = len(c)
    Q = np.eye(n) if frame is None else np.asarray(frame, dtype=float)
    if closed:
        def contains(x):
            u = (x - c) @ Q
            return np.all(np.abs(u) <= half * (1 + 1e-12), axis=-1)
    else:
        def contains(x):
            u = (x - c) @ Q
            return np.all(np.abs(u) < half, axis=-1)
    ext = np.abs(Q) @ half

    def boundary(k):
        v, s = _box_mesh(half, k)
        return c + v @ Q.T, s

    return ImplicitSet(contains, c - ext, c + ext, kind,
                       params={"center": c.tolist(), "half": half.tolist(),
                               "frame": Q.tolist(), "closed": closed},
                       volume=float(np.prod(2 * half)), convex=True, boundary=boundary)


def plate(center, half, frame=None) -> ImplicitSet:
    """Flat (n-1)-dimensional plate normal to the last local axis.

    It has measure zero; ``thicken(h)`` returns the one-grid-layer version the
    solver clamps to 1.
    """
    c = np.asarray(center, dtype=float)
    half = np.asarray(half, dtype=float)
    n = len(c)
    Q = np.eye(n) if frame is None else np.asarray(frame, dtype=float)
    full = np.append(half, 0.0)
    S = oriented_box(c, full, Q, kind="plate")

    def thicken(h):
        normal = Q[:, -1]
        w = 0.5 * h * np.abs(normal).sum() * (1 + 1e-9)
        T = oriented_box(c, np.append(half, w), Q, kind="plate")
        return replace(T, volume=0.0, boundary=S.boundary, thicken=None)

    return replace(S, volume=0.0, thicken=thicken)


def tube(vertices, radius: float) -> ImplicitSet:
    """Closed radius-neighbourhood of a polyline."""
    V = np.atleast_2d(np.asarray(vertices, dtype=float))
    r = float(radius)

    def contains(x):
        return polyline_distance(x, V) <= r

    return ImplicitSet(contains, V.min(axis=0) - r, V.max(axis=0) + r, "tube",
                       params={"vertices": V.tolist(), "radius": r},
                       convex=len(V) == 1 or (len(V) == 2),
                       ball=(V[0], r) if np.allclose(V, V[0]) else None)


def polyline_distance(x: np.ndarray, V: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = np.sqrt(np.sum((x - V[0]) ** 2, axis=-1))
    for a, b in zip(V[:-1], V[1:]):
        ab = b - a
        L2 = float(ab @ ab)
        if L2 == 0.0:
            continue
        t = np.clip(((x - a) @ ab) / L2, 0.0, 1.0)
        proj = a + t[..., None] * ab
        d = np.minimum(d, np.sqrt(np.sum((x - proj) ** 2, axis=-1)))
    return d


def intersection(a: ImplicitSet, b: ImplicitSet) -> ImplicitSet:
    lo = np.maximum(a.lo, b.lo)
    hi = np.minimum(a.hi, b.hi)
    if np.any(hi < lo):
        hi = lo.copy()
    return ImplicitSet(lambda x: a.contains(x) & b.contains(x), lo, hi, "intersection",
                       params={"a": a.params, "b": b.params},
                       convex=a.convex and b.convex)


def _bbox_boundary_samples(lo, hi, k: int = 64) -> np.ndarray:
    n = len(lo)
    t = np.linspace(0.0, 1.0, k)
    pts = []
    for axis in range(n):
        others = [a for a in range(n) if a != axis]
        grids = np.meshgrid(*([t] * (n - 1)), indexing="ij")
        for side in (0.0, 1.0):
            u = np.zeros((grids[0].size, n))
            u[:, axis] = side
            for o, g in zip(others, grids):
                u[:, o] = g.ravel()
            pts.append(lo + u * (hi - lo))
    return np.vstack(pts)


def preimage(base: ImplicitSet, mapping, pad: float = PREIMAGE_PAD) -> ImplicitSet:
    """The set {x : mapping(x) in base}."""
    bpts = mapping.inverse(_bbox_boundary_samples(base.lo, base.hi))
    if not np.all(np.isfinite(bpts)):
        raise ValueError("mapping is not invertible on the condenser region")
    lo, hi = bpts.min(axis=0), bpts.max(axis=0)
    span = hi - lo
    lo, hi = lo - pad * span, hi + pad * span
    boundary = None
    if base.boundary is not None:
        def boundary(k):
            v, s = base.boundary(k)
            return mapping.inverse(v), s
    linear = mapping.kind in ("identity", "linear")
    volume = None
    if base.volume is not None and linear:
        volume = base.volume / abs(np.linalg.det(mapping.matrix))
    thicken = None
    if base.thicken is not None:
        # a layer of width h in the source must map to at least h*stretch in the
        # target; sqrt(n) covers the turn of the layer normal under the map
        stretch = mapping.max_stretch(lo, hi) * math.sqrt(len(lo))

        def thicken(h):
            return preimage(base.thicken(h * stretch), mapping, pad)
    return ImplicitSet(lambda x: base.contains(mapping.forward(x)), lo, hi, "preimage",
                       params={"base": base.params, "mapping": mapping.name},
                       volume=volume, convex=base.convex and linear, boundary=boundary,
                       ball=mapping.preimage_ball(base.ball) if base.ball is not None else None,
                       thicken=thicken)


# ---------------------------------------------------------------- grids

@dataclass(frozen=True)
class Grid:
    origin: np.ndarray
    h: float
    shape: tuple

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @classmethod
    def around(cls, lo, hi, h: float, center=None, margin: int = 1) -> "Grid":
        """Grid containing a node at ``center`` that covers [lo, hi] with
        ``margin`` spare cells on each side."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        c = (lo + hi) / 2 if center is None else np.asarray(center, dtype=float)
        kmin = np.floor((lo - c) / h - 1e-9).astype(int) - margin
        kmax = np.ceil((hi - c) / h + 1e-9).astype(int) + margin
        return cls(c + kmin * h, float(h), tuple(int(v) for v in kmax - kmin + 1))

    @classmethod
    def for_box(cls, lo, hi, res: int, margin: int = 1) -> "Grid":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        return cls.around(lo, hi, float(np.max(hi - lo)) / res, margin=margin)

    def axes(self) -> list:
        return [self.origin[a] + self.h * np.arange(m) for a, m in enumerate(self.shape)]

    def nodes(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def cell_centers(self) -> np.ndarray:
        ax = [x[:-1] + 0.5 * self.h for x in self.axes()]
        return np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1)

    @property
    def extent(self) -> tuple:
        return self.origin, self.origin + self.h * (np.array(self.shape) - 1)


# ---------------------------------------------------------------- condensers

def lattice_members(S: ImplicitSet, k: int = 65) -> np.ndarray:
    axes = [np.linspace(l, u, k) for l, u in zip(S.lo, S.hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, S.dim)
    return pts[S.contains(pts)]


def contained_in(inner: ImplicitSet, outer: ImplicitSet, k: int = 65) -> bool:
    """Sampled check that inner lies inside outer."""
    pts = lattice_members(inner, k)
    if inner.boundary is not None:
        v = inner.boundary(256)[0]
        pts = np.vstack([pts, v[inner.contains(v)]])
    return bool(np.all(outer.contains(pts))) if len(pts) else True


@dataclass(frozen=True, eq=False)
class RingCondenser:
    F: ImplicitSet
    G: ImplicitSet
    ambient: Optional[ImplicitSet] = None
    name: str = ""

    def __post_init__(self):
        if self.F.dim != self.G.dim:
            raise ValueError("F and G live in different dimensions")
        if not contained_in(self.F, self.G):
            raise ValueError("F is not contained in G")
        if self.ambient is not None and not contained_in(self.G, self.ambient):
            raise ValueError("G escapes ambient")

    @property
    def dim(self) -> int:
        return self.G.dim

    def clearance(self) -> float:
        """dist(F, boundary of G)."""
        F, G = self.F, self.G
        if F.ball is not None and G.ball is not None:
            return float(G.ball[1] - np.linalg.norm(F.ball[0] - G.ball[0]) - F.ball[1])
        if G.boundary is None:
            raise ValueError("clearance needs a boundary mesh of G")
        gb = G.boundary(4096)[0]
        fpts = F.boundary(4096)[0] if F.boundary is not None else lattice_members(F, 129)
        if len(fpts) == 0:
            fpts = np.atleast_2d((F.lo + F.hi) / 2)
        d, _ = cKDTree(gb).query(fpts)
        return float(d.min())

    def is_concentric_balls(self) -> bool:
        F, G = self.F, self.G
        return (F.ball is not None and G.ball is not None
                and np.allclose(F.ball[0], G.ball[0], atol=1e-12 * max(1.0, G.ball[1])))


def make_ball_ring(center, r_F: float, r_G: float, ambient: Optional[ImplicitSet] = None,
                   name: str = "") -> RingCondenser:
    if not 0 < r_F < r_G:
        raise ValueError("radius ordering violated: need 0 < r_F < r_G")
    F = ball(center, r_F, closed=True)
    G = ball(center, r_G, closed=False)
    if ambient is not None:
        v = G.boundary(512)[0]
        c = np.asarray(center, dtype=float)
        inner = c + (v - c) * (1 - 1e-9)
        if not np.all(ambient.contains(np.vstack([inner, c]))):
            raise ValueError("outer ball escapes ambient")
    return RingCondenser(F, G, ambient, name=name)


@dataclass(frozen=True)
class BoxCondenserParams:
    lam: tuple
    r: float
    t: float
    center: Optional[tuple] = None
    frame: Optional[tuple] = None

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if not np.all(lam > 0):
            raise ValueError("semiaxes must be positive")
        if np.any(np.diff(lam) > 0):
            raise ValueError("semiaxes must be sorted non-increasing")
        if not self.r > 0:
            raise ValueError("r must be positive")
        if not self.t > 0:
            raise ValueError("t must be positive")


def box_condenser_volume(params: BoxCondenserParams) -> float:
    lam = np.asarray(params.lam, dtype=float)
    n = len(lam)
    return float(2 ** n * lam[-1] * params.r ** n * params.t
                 * np.prod(1 + params.t * lam[:-1]))


def make_box_condenser(params: BoxCondenserParams, name: str = "") -> RingCondenser:
    """Plate F = {y_n = 0, |y_i| <= r} inside the box
    G = {|y_n| < r t lam_n, |y_i| < r + r t lam_i}."""
    lam = np.asarray(params.lam, dtype=float)
    n = len(lam)
    r, t = params.r, params.t
    c = np.zeros(n) if params.center is None else np.asarray(params.center, dtype=float)
    Q = None if params.frame is None else np.asarray(params.frame, dtype=float)
    F = plate(c, np.full(n - 1, r), Q)
    half = np.append(r + r * t * lam[:-1], r * t * lam[-1])
    G = oriented_box(c, half, Q, closed=False)
    return RingCondenser(F, G, name=name)


def pullback_condenser(mapping, R: RingCondenser, pad: float = PREIMAGE_PAD) -> RingCondenser:
    """(phi^-1(F); phi^-1(G)) for a homeomorphism phi."""
    if mapping.kind == "identity":
        return R
    amb = preimage(R.ambient, mapping, pad) if R.ambient is not None else None
    return RingCondenser(preimage(R.F, mapping, pad), preimage(R.G, mapping, pad), amb,
                         name=R.name)


# ---------------------------------------------------------------- measure

@dataclass(frozen=True)
class Measurement:
    value: float
    error: float
    method: str


def measure(S: ImplicitSet, method: str = "monte-carlo", samples: int = 100_000,
            h: Optional[float] = None, seed: int = 0) -> Measurement:
    """Volume of S by Monte Carlo (error = standard error) or by counting grid
    cells (error = volume of cells the boundary may cross)."""
    if samples < 100:
        raise ValueError("sample count must be at least 100")
    span = S.hi - S.lo
    box_vol = float(np.prod(span))
    if box_vol == 0.0:
        return Measurement(0.0, 0.0, method)
    if method == "monte-carlo":
        rng = np.random.default_rng(seed)
        hits = 0
        done = 0
        while done < samples:
            m = min(200_000, samples - done)
            hits += int(np.count_nonzero(S.contains(S.lo + rng.random((m, S.dim)) * span)))
            done += m
        frac = hits / samples
        return Measurement(box_vol * frac, box_vol * math.sqrt(frac * (1 - frac) / samples),
                           method)
    if method == "grid":
        if h is None:
            h = float(span.max()) / round(samples ** (1 / S.dim))
        counts = np.ceil(span / h - 1e-9).astype(int)
        axes = [l + h * (np.arange(m + 1)) for l, m in zip(S.lo, counts)]
        centers = [a[:-1] + h / 2 for a in axes]
        C = np.stack(np.meshgrid(*centers, indexing="ij"), axis=-1)
        inside = S.contains(C)
        corners = S.contains(np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1))
        mixed = np.zeros_like(inside)
        for off in np.ndindex(*([2] * S.dim)):
            sl = tuple(slice(o, o + m) for o, m in zip(off, counts))
            mixed |= corners[sl] != inside
        cell = h ** S.dim
        return Measurement(float(inside.sum()) * cell, float(mixed.sum()) * cell, method)
    raise ValueError(f"unknown measure method {method!r}")


def set_volume(S: ImplicitSet, h: Optional[float] = None) -> float:
    if S.volume is not None:
        return S.volume
    return measure(S, "grid", h=h or float((S.hi - S.lo).max()) / 512).value
