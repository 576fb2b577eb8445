"""Analytic test homeomorphisms and their distortion functionals."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import Grid, ImplicitSet, ball, box


@dataclass(frozen=True, eq=False)
class MappingSpec:
    """Homeomorphism phi with its inverse and derivative.

    ``forward``, ``inverse`` and ``jacobian`` act on arrays of points with the
    coordinate in the last axis.  When ``jacobian`` is None, centred finite
    differences with step 1e-5*scale are used.
    """

    kind: str
    forward: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray]
    dim: int
    name: str
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    domain: Optional[ImplicitSet] = None
    singular_points: tuple = ()
    matrix: Optional[np.ndarray] = None
    alpha: Optional[float] = None
    parts: tuple = ()
    scale: float = 1.0

    def jacobian_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.jacobian is not None:
            return self.jacobian(x)
        return finite_difference_jacobian(self.forward, x, 1e-5 * self.scale)

    def inverse_jacobian_at(self, y) -> np.ndarray:
        """D(phi^-1)(y) as the inverse of D phi at phi^-1(y)."""
        return np.linalg.inv(self.jacobian_at(self.inverse(np.asarray(y, dtype=float))))

    def with_domain(self, domain: ImplicitSet) -> "MappingSpec":
        from dataclasses import replace

        return replace(self, domain=domain,
                       scale=float(np.max(domain.hi - domain.lo)))

    def codomain(self) -> ImplicitSet:
        """phi(domain), as a membership predicate."""
        from .geometry import _bbox_boundary_samples

        D = self.domain
        if D is None:
            raise ValueError("mapping has no domain")
        v = self.forward(_bbox_boundary_samples(D.lo, D.hi))
        if D.boundary is not None:
            v = np.vstack([v, self.forward(D.boundary(1024)[0])])
        lo, hi = v.min(axis=0), v.max(axis=0)
        img_ball = self.image_ball(D.ball) if D.ball is not None else None
        linear = self.kind in ("identity", "linear")
        if img_ball is not None:
            lo, hi = img_ball[0] - img_ball[1], img_ball[0] + img_ball[1]
            pad = 0.0
        else:
            # affine images of the sampled extremes are exact; otherwise pad
            pad = 0.0 if linear else 0.05 * (hi - lo)
        boundary = None
        if D.boundary is not None:
            def boundary(k):
                vv, s = D.boundary(k)
                return self.forward(vv), s
        vol = D.volume * abs(np.linalg.det(self.matrix)) if (linear and D.volume) else None
        return ImplicitSet(lambda y: D.contains(self.inverse(y)), lo - pad, hi + pad,
                           "image", params={"domain": D.params, "mapping": self.name},
                           volume=vol, convex=D.convex and linear, boundary=boundary,
                           ball=img_ball)

    def preimage_ball(self, b) -> Optional[tuple]:
        """(center, radius) of phi^-1(ball) when that preimage is itself a ball."""
        c, r = b
        if self.kind == "identity":
            return (np.asarray(c, dtype=float), float(r))
        if self.kind == "radial" and np.allclose(c, 0.0):
            return (np.zeros(self.dim), float(r) ** (1.0 / self.alpha))
        if self.kind == "linear":
            s = np.linalg.svd(self.matrix, compute_uv=False)
            if np.allclose(s, s[0]):
                return (self.inverse(np.asarray(c, dtype=float)), float(r) / s[0])
        return None

    def image_ball(self, b) -> Optional[tuple]:
        c, r = b
        if self.kind == "identity":
            return (np.asarray(c, dtype=float), float(r))
        if self.kind == "radial" and np.allclose(c, 0.0):
            return (np.zeros(self.dim), float(r) ** self.alpha)
        return None

    def max_stretch(self, lo, hi, k: int = 9) -> float:
        """Largest operator norm of D phi sampled on a lattice over [lo, hi]."""
        axes = [np.linspace(l, u, k) for l, u in zip(lo, hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        return float(np.max(operator_norm(self.jacobian_at(pts))))


def finite_difference_jacobian(f, x: np.ndarray, step: float) -> np.ndarray:
    n = x.shape[-1]
    J = np.empty(x.shape + (n,))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        J[..., :, j] = (f(x + e) - f(x - e)) / (2 * step)
    return J


def operator_norm(J: np.ndarray) -> np.ndarray:
    """Largest singular value of each matrix in a stack."""
    return np.linalg.svd(J, compute_uv=False)[..., 0]


# ---------------------------------------------------------------- catalog

def identity(n: int = 2, domain: Optional[ImplicitSet] = None) -> MappingSpec:
    m = MappingSpec("identity", lambda x: np.array(x, dtype=float),
                    lambda y: np.array(y, dtype=float), n, "identity",
                    jacobian=lambda x: np.broadcast_to(np.eye(n), np.shape(x) + (n,)).copy(),
                    matrix=np.eye(n))
    return m.with_domain(domain) if domain is not None else m


def linear(A, domain: Optional[ImplicitSet] = None) -> MappingSpec:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("linear map needs a square matrix")
    if abs(np.linalg.det(A)) < 1e-12 * max(1.0, np.abs(A).max()) ** n:
        raise ValueError("singular matrix: not a homeomorphism")
    Ainv = np.linalg.inv(A)
    name = "linear:" + ",".join(f"{v:g}" for v in A.ravel())
    m = MappingSpec("linear", lambda x: np.asarray(x, dtype=float) @ A.T,
                    lambda y: np.asarray(y, dtype=float) @ Ainv.T, n, name,
                    jacobian=lambda x: np.broadcast_to(A, np.shape(x) + (n,)).copy(),
                    matrix=A)
    return m.with_domain(domain) if domain is not None else m


def radial_stretch(alpha: float, n: int = 2, domain: Optional[ImplicitSet] = None) -> MappingSpec:
    """x -> |x|^(alpha-1) x."""
    a = float(alpha)
    if not a > 0:
        raise ValueError("radial exponent must be positive")

    def forward(x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(r > 0, r ** (a - 1) * x, 0.0)
        return out

    def inverse(y):
        y = np.asarray(y, dtype=float)
        r = np.linalg.norm(y, axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(r > 0, r ** (1 / a - 1) * y, 0.0)
        return out

    def jac(x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(r[..., None] > 0, x / r[..., None], 0.0)
            s = np.where(r > 0, r ** (a - 1), 0.0 if a > 1 else np.inf)
        I = np.broadcast_to(np.eye(n), x.shape + (n,))
        return s[..., None, None] * (I + (a - 1) * u[..., :, None] * u[..., None, :])

    m = MappingSpec("radial", forward, inverse, n, f"radial:{a:g}", jacobian=jac,
                    singular_points=(np.zeros(n),), alpha=a)
    return m.with_domain(domain) if domain is not None else m


def composed(maps: Sequence[MappingSpec], domain: Optional[ImplicitSet] = None) -> MappingSpec:
    """maps[-1] o ... o maps[0] (the first map is applied first)."""
    maps = tuple(maps)
    if not maps:
        raise ValueError("composition of no maps")
    n = maps[0].dim

    def forward(x):
        for m in maps:
            x = m.forward(x)
        return x

    def inverse(y):
        for m in reversed(maps):
            y = m.inverse(y)
        return y

    def jac(x):
        J = np.broadcast_to(np.eye(n), np.shape(x) + (n,))
        for m in maps:
            J = m.jacobian_at(x) @ J
            x = m.forward(x)
        return J

    sing = []
    pre = []
    for m in maps:
        sing.extend(inverse_prefix(pre, p) for p in m.singular_points)
        pre.append(m)
    mat = None
    if all(m.matrix is not None for m in maps):
        mat = np.eye(n)
        for m in maps:
            mat = m.matrix @ mat
    name = "composed:[" + ";".join(m.name for m in maps) + "]"
    kind = "linear" if mat is not None else "composed"
    spec = MappingSpec(kind, forward, inverse, n, name, jacobian=jac,
                       singular_points=tuple(sing), matrix=mat, parts=maps)
    return spec.with_domain(domain) if domain is not None else spec


def inverse_prefix(prefix, point):
    for m in reversed(prefix):
        point = m.inverse(point)
    return point


def parse_mapping(text: str, n: int = 2, domain: Optional[ImplicitSet] = None) -> MappingSpec:
    """identity | linear:a11,a12,... | radial:alpha | composed:[m1;m2;...]"""
    text = text.strip()
    head, _, rest = text.partition(":")
    if head == "identity":
        return identity(n, domain)
    if head == "linear":
        vals = [float(v) for v in rest.split(",") if v.strip()]
        k = int(round(math.sqrt(len(vals))))
        if k * k != len(vals):
            raise ValueError(f"linear map needs n*n entries, got {len(vals)}")
        return linear(np.reshape(vals, (k, k)), domain)
    if head == "radial":
        return radial_stretch(float(rest), n, domain)
    if head == "composed":
        inner = rest.strip()
        if not (inner.startswith("[") and inner.endswith("]")):
            raise ValueError("composed map must be written composed:[m1;m2]")
        return composed([parse_mapping(s, n) for s in _split_top(inner[1:-1])], domain)
    raise ValueError(f"unknown mapping kind {head!r}")


def _split_top(s: str) -> list:
    out, depth, cur = [], 0, ""
    for ch in s:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == ";" and depth == 0:
            out.append(cur)
            cur = ""
        else:
            cur += ch
    if cur.strip():
        out.append(cur)
    return out


def unit_disk(n: int = 2) -> ImplicitSet:
    return ball(np.zeros(n), 1.0, closed=False)


def unit_square(n: int = 2) -> ImplicitSet:
    return box(np.zeros(n), np.ones(n), closed=False)


# ---------------------------------------------------------------- distortion

class DistortionUndefined(ValueError):
    """J(x) = 0 while D phi(x) != 0: phi has no finite distortion at x."""


def dilatation_p(phi: MappingSpec, x, p: float) -> np.ndarray:
    """K_p(x) = |D phi(x)| / |J(x, phi)|^(1/p) for a point or a stack of points."""
    x = np.asarray(x, dtype=float)
    J = phi.jacobian_at(x)
    norm = operator_norm(J)
    det = np.abs(np.linalg.det(J))
    bad = _jacobian_vanishes(det, norm, phi.dim)
    if np.any(bad):
        raise DistortionUndefined("distortion undefined: J = 0 but D phi != 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        K = np.where(norm > 0, norm / det ** (1.0 / p), 0.0)
    return K if K.ndim else float(K)


def _jacobian_vanishes(det, norm, n):
    # relative to |D phi|^n, so maps that are merely small near a point are not flagged
    return (norm > 0) & (det <= 1e-12 * norm ** n)


@dataclass
class DistortionReport:
    p: float
    q: float
    kappa: float
    K_pq: float
    Kp_field: np.ndarray = field(repr=False)
    finite_distortion_ok: bool = True
    refinement_delta: float = 0.0
    h: float = 0.0

    def as_dict(self) -> dict:
        return {"p": self.p, "q": self.q, "kappa": self.kappa, "K_pq": self.K_pq,
                "Kp_min": float(self.Kp_field.min()), "Kp_max": float(self.Kp_field.max()),
                "finite_distortion_ok": self.finite_distortion_ok,
                "refinement_delta": self.refinement_delta, "h": self.h}


def kappa_of(p: float, q: float) -> float:
    """1/kappa = 1/q - 1/p; infinite when p == q."""
    if q > p:
        raise ValueError("need q <= p")
    return math.inf if p == q else p * q / (p - q)


def _quadrature_nodes(phi: MappingSpec, h: float):
    D = phi.domain
    if D is None:
        raise ValueError("distortion norm needs a mapping domain")
    g = Grid(D.lo.copy(), h, tuple(int(v) for v in np.ceil((D.hi - D.lo) / h - 1e-9) + 1))
    C = g.cell_centers().reshape(-1, phi.dim)
    keep = D.contains(C)
    for s in phi.singular_points:
        keep &= np.linalg.norm(C - s, axis=-1) > 2 * h
    return C[keep]


def distortion_norm(phi: MappingSpec, p: float, q: float, h: Optional[float] = None,
                    res: int = 128) -> DistortionReport:
    """K_{p,q}(phi; domain) = ||K_p | L_kappa(domain)|| by midpoint quadrature.

    For p == q the essential sup is the max over quadrature nodes, reported
    with the change against a grid of half the spacing.
    """
    if q > p:
        raise ValueError("need q <= p")
    D = phi.domain
    if h is None:
        h = float(np.max(D.hi - D.lo)) / res
    kappa = kappa_of(p, q)

    def evaluate(hh):
        K = dilatation_p(phi, _quadrature_nodes(phi, hh), p)
        if math.isinf(kappa):
            return float(np.max(K)), K
        return float((np.sum(K ** kappa) * hh ** phi.dim) ** (1 / kappa)), K

    value, K = evaluate(h)
    fine, _ = evaluate(h / 2)
    ok, _ = finite_distortion_check(phi, samples=2000)
    return DistortionReport(p, q, kappa, value, K, ok, abs(fine - value), h)


def finite_distortion_check(phi: MappingSpec, samples: int = 10_000, seed: int = 0):
    """Flag sample points where J vanishes but D phi does not."""
    D = phi.domain
    rng = np.random.default_rng(seed)
    if D is not None:
        pts = D.lo + rng.random((samples, phi.dim)) * (D.hi - D.lo)
        pts = pts[D.contains(pts)]
    else:
        pts = rng.uniform(-1, 1, (samples, phi.dim))
    if phi.singular_points:
        pts = np.vstack([pts] + [np.atleast_2d(s) for s in phi.singular_points])
    J = phi.jacobian_at(pts)
    det = np.abs(np.linalg.det(J))
    norm = operator_norm(J)
    bad = _jacobian_vanishes(det, norm, phi.dim)
    return (not bool(np.any(bad))), [tuple(map(float, x)) for x in pts[bad]]


def check_inverse(phi: MappingSpec, samples: int = 10_000, seed: int = 0) -> float:
    """Largest |phi(phi^-1(y)) - y| over samples of the codomain."""
    T = phi.codomain()
    rng = np.random.default_rng(seed)
    y = T.lo + rng.random((samples, phi.dim)) * (T.hi - T.lo)
    y = y[T.contains(y)]
    return float(np.max(np.linalg.norm(phi.forward(phi.inverse(y)) - y, axis=-1)))
