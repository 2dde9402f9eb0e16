"""Gauges, Wulff shapes, dual gauges, and restricted gauges.

A gauge is a nonnegative, positively 1-homogeneous, convex function on R^n.
Its Wulff shape is W = {x : x . nu < H(nu) for every unit nu}.  Sup-type
evaluations (dual gauge, restricted gauge) run over a deterministic
low-discrepancy direction set refined by local ascent.
"""

from __future__ import annotations

import numpy as np

from .cones import ConvexCone
from .errors import DegenerateGauge, EmptyIntersection
from .sampling import unit_directions

BOUNDARY_TOL = 1e-9  # membership margin; ties resolve to "outside"


class Gauge:
    """Wraps a vectorized evaluator H : (..., n) -> (...).

    Optional metadata carries closed forms (dual, Wulff radial function,
    kink directions) that downstream quadrature may exploit; the generic
    numeric paths never require them.
    """

    def __init__(self, n, fn, *, positive_on_sphere, tag=("custom",),
                 dual_closed=None, wulff_radial=None, radial_kinks=(),
                 base=None, cone=None):
        self.n = int(n)
        self._fn = fn
        self.positive_on_sphere = bool(positive_on_sphere)
        self.tag = tag
        self.dual_closed = dual_closed
        self._wulff_radial = wulff_radial
        self.radial_kinks = tuple(radial_kinks)  # n=2 angles where rho has kinks
        self.base = base
        self.cone = cone
        self._numeric_dual = None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self._fn(x)

    # ------------------------------------------------------------- dual/radial
    def dual_value(self, z):
        """H°(z), preferring an attached closed form."""
        if self.dual_closed is not None:
            return self.dual_closed(np.asarray(z, dtype=float))
        if self._numeric_dual is None:
            self._numeric_dual = _make_numeric_dual(self)
        return self._numeric_dual(z)

    def wulff_radius(self, dirs):
        """Radial function of the Wulff shape, rho(v) = 1/H°(v) for unit v."""
        dirs = np.asarray(dirs, dtype=float)
        if self._wulff_radial is not None:
            return self._wulff_radial(dirs)
        hd = self.dual_value(dirs)
        with np.errstate(divide="ignore"):
            return np.where(hd > 0.0, 1.0 / np.maximum(hd, 1e-300), np.inf)


class WulffBody:
    """Open convex set W = {x : x . nu < H(nu) for all unit nu}."""

    def __init__(self, gauge: Gauge):
        self.gauge = gauge

    def membership(self, x) -> np.ndarray:
        return wulff_membership(self, x)

    @property
    def bounding_radius(self) -> float:
        if not self.gauge.positive_on_sphere and self.gauge.tag[0] != "restricted":
            return np.inf
        dirs = unit_directions(self.gauge.n)
        return float(np.max(self.gauge.wulff_radius(dirs)))


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def gauge_p_norm(n: int, p: float) -> Gauge:
    """The p-norm gauge; its Wulff shape is the open unit ball of the conjugate p'."""
    if not (p >= 1.0 or p == np.inf):
        raise DegenerateGauge(f"p-norm gauge needs p >= 1, got {p}")
    q = _conjugate_exponent(p)

    def fn(x):
        return _pnorm(x, p)

    def dual(z):
        return _pnorm(z, q)

    def radial(v):
        d = _pnorm(v, q)
        return np.where(d > 0.0, 1.0 / np.maximum(d, 1e-300), np.inf)

    kinks = ()
    if n == 2:
        if q == np.inf:  # W is the cube; rho kinks on the diagonals
            kinks = tuple(np.pi / 4.0 + k * np.pi / 2.0 for k in range(4))
        elif q == 1.0:  # W is the cross-polytope; rho kinks on the axes
            kinks = tuple(k * np.pi / 2.0 for k in range(4))
    return Gauge(n, fn, positive_on_sphere=True, tag=("pnorm", p),
                 dual_closed=dual, wulff_radial=radial, radial_kinks=kinks)


def euclidean_gauge(n: int) -> Gauge:
    return gauge_p_norm(n, 2.0)


def ellipse_gauge(A) -> Gauge:
    """Support function sqrt(x^T A x) of the ellipsoid {z^T A^{-1} z < 1}."""
    A = np.asarray(A, dtype=float)
    if not np.allclose(A, A.T) or np.any(np.linalg.eigvalsh(A) <= 0.0):
        raise DegenerateGauge("ellipse gauge needs a symmetric positive definite matrix")
    Ainv = np.linalg.inv(A)
    n = A.shape[0]

    def fn(x):
        return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", x, A, x), 0.0))

    def dual(z):
        return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", z, Ainv, z), 0.0))

    def radial(v):
        return 1.0 / dual(v)

    return Gauge(n, fn, positive_on_sphere=True, tag=("ellipse", A),
                 dual_closed=dual, wulff_radial=radial)


def custom_gauge(n: int, fn, positive_on_sphere: bool = True) -> Gauge:
    return Gauge(n, fn, positive_on_sphere=positive_on_sphere)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def dual_gauge(H: Gauge, ascent_steps: int = 20) -> Gauge:
    """H°(z) = sup{z . y : H(y) <= 1}, by refined spherical maximization.

    Requires H > 0 on the sphere; raises DegenerateGauge otherwise.  The
    returned gauge carries the closed-form facts (H°)° = H and
    W(H°) = {H < 1} as metadata.
    """
    numeric = _make_numeric_dual(H, ascent_steps=ascent_steps)

    def radial(v):
        hv = H(v)
        return np.where(hv > 0.0, 1.0 / np.maximum(hv, 1e-300), np.inf)

    return Gauge(H.n, numeric, positive_on_sphere=True, tag=("dual", H.tag),
                 dual_closed=None, wulff_radial=radial, base=H)


def restricted_gauge(H: Gauge, cone: ConvexCone, grid: int = 2048) -> Gauge:
    """Gauge H0 of the convex body W ∩ Σ: H0(x) = sup{z . x : z in W ∩ Σ}.

    H0 <= H everywhere and H0 vanishes on the inward normals' opposites.
    Rejects unbounded W ∩ Σ (rho infinite somewhere on the closed cap).
    """
    n = H.n
    if n == 2:
        lo, hi = cone.theta_interval
        theta = np.linspace(lo, hi, grid)
        cap_dirs = np.column_stack([np.cos(theta), np.sin(theta)])
    else:
        cap_dirs = unit_directions(n, 8192)
        cap_dirs = cap_dirs[cone.contains(cap_dirs, margin=-1e-12)]
        if cap_dirs.shape[0] == 0:
            raise EmptyIntersection("cone cap has no sampled directions")
    rho = H.wulff_radius(cap_dirs)
    if not np.all(np.isfinite(rho)):
        raise EmptyIntersection("W ∩ Σ is unbounded; restricted gauge undefined")
    if np.max(rho) <= 0.0:
        raise EmptyIntersection("no point found in both W and Σ")
    points = cap_dirs * rho[:, None]  # boundary of W along the cap

    if n == 2:
        lo_hi = (lo, hi, bool(cone.periodic_cap))

        def fn(x):
            return _restricted_sup_2d(H, lo_hi, x)
    else:
        def fn(x):
            x = np.asarray(x, dtype=float)
            flat = x.reshape(-1, n)
            vals = np.maximum(flat @ points.T, 0.0).max(axis=1)
            return vals.reshape(x.shape[:-1])

    def radial(v):
        return H.wulff_radius(v)

    return Gauge(n, fn, positive_on_sphere=False, tag=("restricted", H.tag),
                 wulff_radial=radial, radial_kinks=H.radial_kinks,
                 base=H, cone=cone)


def wulff_membership(W: WulffBody, x) -> np.ndarray:
    """x in W, with a 1e-9 absolute boundary margin; ties count as outside."""
    H = W.gauge
    x = np.asarray(x, dtype=float)
    if H.tag[0] == "restricted":
        base_in = wulff_membership(WulffBody(H.base), x)
        return base_in & H.cone.contains(x)
    if H.positive_on_sphere:
        return H.dual_value(x) < 1.0 - BOUNDARY_TOL
    dirs = unit_directions(H.n)
    gap = x @ dirs.T - H(dirs)
    return np.max(gap, axis=-1) < -BOUNDARY_TOL


# ---------------------------------------------------------------------------
# checks used by tests and the catalog
# ---------------------------------------------------------------------------

def check_gauge_homogeneity(H: Gauge, samples: int, seed: int) -> float:
    """Max |H(t x) - t H(x)| / max(t H(x), tiny) over random (x, t)."""
    from .sampling import rng_for

    rng = rng_for(seed, stream=11)
    x = rng.standard_normal((samples, H.n))
    t = rng.uniform(0.1, 10.0, size=samples)
    lhs = H(x * t[:, None])
    rhs = t * H(x)
    return float(np.max(np.abs(lhs - rhs) / np.maximum(rhs, 1e-30)))


def check_gauge_convexity(H: Gauge, samples: int, seed: int) -> float:
    """Max midpoint-convexity defect H((x+y)/2) - (H(x)+H(y))/2 over random pairs."""
    from .sampling import rng_for

    rng = rng_for(seed, stream=12)
    x = rng.standard_normal((samples, H.n))
    y = rng.standard_normal((samples, H.n))
    mid = H(0.5 * (x + y))
    return float(np.max(mid - 0.5 * (H(x) + H(y))))


# ---------------------------------------------------------------------------
# internals
# ---------------------------------------------------------------------------

def _pnorm(x, p):
    ax = np.abs(np.asarray(x, dtype=float))
    if p == np.inf:
        return ax.max(axis=-1)
    if p == 1.0:
        return ax.sum(axis=-1)
    if p == 2.0:
        return np.sqrt((ax * ax).sum(axis=-1))
    # rescale to avoid overflow for large exponents
    m = ax.max(axis=-1, keepdims=True)
    safe = np.where(m > 0.0, m, 1.0)
    return (np.power(ax / safe, p).sum(axis=-1)) ** (1.0 / p) * safe[..., 0]


def _conjugate_exponent(p: float) -> float:
    if p == 1.0:
        return np.inf
    if p == np.inf:
        return 1.0
    return p / (p - 1.0)


def _make_numeric_dual(H: Gauge, ascent_steps: int = 20):
    dirs = unit_directions(H.n)
    hd = H(dirs)
    if np.min(hd) < 1e-12:
        raise DegenerateGauge("gauge vanishes at a sampled direction; dual undefined")

    if H.n == 2:
        theta = np.arctan2(dirs[:, 1], dirs[:, 0])
        dtheta = 2.0 * np.pi / dirs.shape[0]

        def dual(z):
            z = np.asarray(z, dtype=float)
            flat = z.reshape(-1, 2)
            scores = (flat @ dirs.T) / hd
            j = np.argmax(scores, axis=1)
            t0 = theta[j]
            lo, hi = t0 - 1.5 * dtheta, t0 + 1.5 * dtheta
            f = _golden_max(lambda t: _angle_score(H, flat, t), lo, hi)
            out = np.maximum(f, scores[np.arange(flat.shape[0]), j])
            out[np.linalg.norm(flat, axis=1) == 0.0] = 0.0
            return out.reshape(z.shape[:-1])

        return dual

    def dual(z):
        z = np.asarray(z, dtype=float)
        flat = z.reshape(-1, H.n)
        scores = (flat @ dirs.T) / hd
        j = np.argmax(scores, axis=1)
        u = dirs[j].copy()
        f = scores[np.arange(flat.shape[0]), j]
        step = np.full(flat.shape[0], 2.0 * np.pi / np.sqrt(dirs.shape[0]))
        for _ in range(ascent_steps):
            gH = _fd_gradient(H, u)
            hu = H(u)
            g = (flat - (f / hu)[:, None] * gH) / hu[:, None]
            g -= (np.einsum("ij,ij->i", g, u))[:, None] * u
            cand = u + step[:, None] * g
            cand /= np.linalg.norm(cand, axis=1, keepdims=True)
            fc = np.einsum("ij,ij->i", flat, cand) / H(cand)
            better = fc > f
            u[better] = cand[better]
            f = np.where(better, fc, f)
            step = np.where(better, step * 1.1, step * 0.5)
        f[np.linalg.norm(flat, axis=1) == 0.0] = 0.0
        return f.reshape(z.shape[:-1])

    return dual


def _angle_score(H, flat, t):
    u = np.stack([np.cos(t), np.sin(t)], axis=-1)
    return np.einsum("ij,ij->i", flat, u) / H(u)


def _golden_max(f, lo, hi, iters: int = 60):
    """Vectorized golden-section maximization on per-element brackets."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = np.array(lo, dtype=float), np.array(hi, dtype=float)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        swap = fc < fd
        a = np.where(swap, c, a)
        b = np.where(~swap, d, b)
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        fc, fd = f(c), f(d)
    return np.maximum(fc, fd)


def _restricted_sup_2d(H, lo_hi, x):
    lo, hi, periodic = lo_hi
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1, 2)
    grid = np.linspace(lo, hi, 1024)
    u = np.column_stack([np.cos(grid), np.sin(grid)])
    rho = H.wulff_radius(u)
    vals = (flat @ u.T) * rho[None, :]
    j = np.argmax(vals, axis=1)
    t0 = grid[j]
    dt = (hi - lo) / (grid.size - 1)

    def score(t):
        tc = t if periodic else np.clip(t, lo, hi)
        uu = np.stack([np.cos(tc), np.sin(tc)], axis=-1)
        return np.einsum("ij,ij->i", flat, uu) * H.wulff_radius(uu)

    f = _golden_max(score, t0 - 1.5 * dt, t0 + 1.5 * dt)
    f = np.maximum(f, vals[np.arange(flat.shape[0]), j])
    return np.maximum(f, 0.0).reshape(x.shape[:-1])


def _fd_gradient(H, u, h: float = 1e-6):
    n = u.shape[1]
    g = np.empty_like(u)
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        g[:, k] = (H(u + e) - H(u - e)) / (2.0 * h)
    return g
