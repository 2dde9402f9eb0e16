"""Weighted volumes w(E ∩ Σ) and anisotropic perimeters P_{w,H}(E; Σ).

Deterministic quadrature integrates over the spherical cap with the radial
integral in closed form (the weight is homogeneous, so along each ray
w(t u) = t^alpha w(u)); Monte Carlo samples the same parametrization.
Boundary lying on the cone's boundary is never counted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cones import ConvexCone
from .errors import CurvatureUndefined, InvalidParameters, ToleranceNotMet
from .gauges import Gauge
from .regions import Ball, Polytope2D, StarSet2D, StarSet3D, WulffSector
from .sampling import rng_for
from .weights import Weight

_GL_LO = np.polynomial.legendre.leggauss(10)
_GL_HI = np.polynomial.legendre.leggauss(20)
_FD_THETA = 1e-6


@dataclass(frozen=True)
class QuadratureSpec:
    method: str = "deterministic"  # deterministic | monte_carlo
    rel_tol: float = 1e-7
    max_panels: int = 20000
    samples: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if self.rel_tol <= 0.0:
            raise InvalidParameters("quadrature tolerance must be positive")
        if self.method not in ("deterministic", "monte_carlo"):
            raise InvalidParameters(f"unknown quadrature method '{self.method}'")


@dataclass
class MeasureResult:
    value: float
    error_estimate: float
    method: str


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def weighted_volume(E, w: Weight, cone: ConvexCone,
                    q: QuadratureSpec = QuadratureSpec()) -> MeasureResult:
    """Integral of w over E ∩ Σ via polar coordinates with exact radial part."""
    D = w.n + w.alpha

    def integrand_2d(theta):
        u = np.column_stack([np.cos(theta), np.sin(theta)])
        t0, t1 = E.sections(u)
        with np.errstate(all="ignore"):
            b = np.nan_to_num(w.on_sphere(u), nan=0.0)
        return b * (t1**D - t0**D) / D

    def integrand_3d(theta, phi, frame):
        u = _sph_dirs(theta, phi, frame)
        t0, t1 = E.sections(u)
        with np.errstate(all="ignore"):
            b = np.nan_to_num(w.on_sphere(u), nan=0.0)
        return b * (t1**D - t0**D) / D * np.sin(theta)

    return _cap_integral(E, w, cone, q, integrand_2d, integrand_3d, "volume")


def weighted_perimeter(E, w: Weight, H: Gauge, cone: ConvexCone,
                       q: QuadratureSpec = QuadratureSpec()) -> MeasureResult:
    """Integral of H(nu) w over (boundary of E) ∩ Σ.

    Radial-graph regions use the exact unnormalized-normal identity
    H(nu) dS = H(rho u - rho' tau) dtheta; balls and polygons are
    parametrized directly and clipped against the cone.
    """
    if isinstance(E, Ball):
        return _ball_perimeter(E, w, H, cone, q)
    if isinstance(E, Polytope2D):
        return _polytope_perimeter(E, w, H, cone, q)
    if isinstance(E, (WulffSector, StarSet2D)) and E.n == 2:
        def integrand_2d(theta):
            rho, rho_p = _rho_and_prime(E, theta)
            u = np.column_stack([np.cos(theta), np.sin(theta)])
            tau = np.column_stack([-np.sin(theta), np.cos(theta)])
            nvec = rho[:, None] * u - rho_p[:, None] * tau
            x = rho[:, None] * u
            with np.errstate(all="ignore"):
                return np.nan_to_num(w(x) * H(nvec), nan=0.0)

        return _cap_integral(E, w, cone, q, integrand_2d, None, "perimeter")
    if isinstance(E, (WulffSector, StarSet3D)) and E.n == 3:
        def integrand_3d(theta, phi, frame):
            u, e_t, e_p = _sph_frame(theta, phi, frame)
            rho, d_t, d_p = _rho_and_partials(E, theta, phi, frame)
            grad = d_t[:, None] * e_t + (d_p / np.maximum(np.sin(theta), 1e-300))[:, None] * e_p
            nvec = rho[:, None] * u - grad
            x = rho[:, None] * u
            with np.errstate(all="ignore"):
                return np.nan_to_num(w(x) * rho * H(nvec) * np.sin(theta), nan=0.0)

        return _cap_integral(E, w, cone, q, None, integrand_3d, "perimeter")
    raise InvalidParameters(f"perimeter not implemented for {type(E).__name__} in n={E.n}")


def per_vol_identity_check(w: Weight, H: Gauge, cone: ConvexCone,
                           q: QuadratureSpec = QuadratureSpec()) -> dict:
    """Both sides of P_{w,H}(W; Σ) = D * w(W ∩ Σ), computed independently."""
    E = WulffSector(H, 1.0)
    D = w.n + w.alpha
    per = weighted_perimeter(E, w, H, cone, q)
    vol = weighted_volume(E, w, cone, q)
    rhs = D * vol.value
    gap = abs(per.value - rhs) / max(abs(rhs), 1e-300)
    return {"lhs": per.value, "rhs": rhs, "rel_gap": gap,
            "lhs_error": per.error_estimate, "rhs_error": D * vol.error_estimate}


def generalized_mean_curvature(E, w: Weight, x) -> float:
    """H_w = H_eucl + (1/n) d_nu w / w, with H_eucl(sphere of radius R) = 1/R."""
    x = np.asarray(x, dtype=float)
    n = E.n
    if isinstance(E, Ball):
        r = np.linalg.norm(x - E.center)
        if abs(r - E.radius) > 1e-8 * E.radius:
            raise CurvatureUndefined("point is not on the ball boundary")
        nu = (x - E.center) / r
        h_eucl = 1.0 / E.radius
    elif n == 2 and isinstance(E, (WulffSector, StarSet2D)):
        theta = float(np.arctan2(x[1], x[0]))
        rho, rho_p, rho_pp = _rho_derivatives_2d(E, theta)
        if abs(np.linalg.norm(x) - rho) > 1e-6 * rho:
            raise CurvatureUndefined("point is not on the boundary graph")
        denom = rho**2 + rho_p**2
        h_eucl = (rho**2 + 2.0 * rho_p**2 - rho * rho_pp) / denom**1.5
        u = np.array([np.cos(theta), np.sin(theta)])
        tau = np.array([-np.sin(theta), np.cos(theta)])
        nu = (rho * u - rho_p * tau) / np.sqrt(denom)
    else:
        raise CurvatureUndefined(f"curvature not available for {type(E).__name__} in n={n}")
    wx = float(w(x))
    if wx <= 0.0:
        raise CurvatureUndefined("weight vanishes at the boundary point")
    return float(h_eucl + (w.gradient(x) @ nu) / (n * wx))


# ---------------------------------------------------------------------------
# cap integration dispatch
# ---------------------------------------------------------------------------

def _cap_integral(E, w, cone, q, integrand_2d, integrand_3d, label):
    if E.n == 2:
        intervals, brk = _angular_domain_2d(E, cone)
        if not intervals:
            return MeasureResult(0.0, 0.0, f"{label}: empty angular support")
        if q.method == "monte_carlo":
            return _mc_intervals(integrand_2d, intervals, q, label)
        val, err, panels = _adaptive_gl(integrand_2d, intervals, q.rel_tol,
                                        q.max_panels, breakpoints=brk)
        return MeasureResult(val, err, f"{label}: gl-adaptive n=2, panels={panels}")
    if E.n == 3:
        box = cone.angular_box()
        if box is None:
            raise InvalidParameters("n=3 quadrature needs an axis-aligned cone cap")
        (t0, t1), (p0, p1), frame = box
        f = (lambda th, ph: integrand_3d(th, ph, frame))
        if q.method == "monte_carlo":
            return _mc_box(f, (t0, t1, p0, p1), q, label)
        val, err, cells = _adaptive_gl2d(f, (t0, t1, p0, p1), q.rel_tol, q.max_panels)
        return MeasureResult(val, err, f"{label}: gl-adaptive n=3, cells={cells}")
    raise InvalidParameters("measure operations support n = 2 or 3 deterministically")


def _angular_domain_2d(E, cone):
    lo, hi = cone.theta_interval
    cap = [(lo, hi)]
    brk = []
    support = None
    if isinstance(E, Ball):
        support = E.support_arc()
    elif isinstance(E, Polytope2D):
        if not E.contains_origin():
            ang = np.array(E.radial_kinks())
            c = np.arctan2(np.sin(ang).mean(), np.cos(ang).mean())
            dev = np.arctan2(np.sin(ang - c), np.cos(ang - c))
            support = (c + dev.min(), c + dev.max())
    elif isinstance(E, StarSet2D) and not E.periodic:
        if E.theta_lo > lo + 1e-9 or E.theta_hi < hi - 1e-9:
            raise InvalidParameters("star mesh must cover the cone cap")
    intervals = cap if support is None else _clip_arc(support, cap)
    for k in E.radial_kinks():
        brk.extend(k + 2.0 * np.pi * s for s in (-1, 0, 1))
    return intervals, brk


def _clip_arc(arc, cap):
    a, b = arc
    out = []
    for shift in (-2.0 * np.pi, 0.0, 2.0 * np.pi):
        for (lo, hi) in cap:
            s, t = max(a + shift, lo), min(b + shift, hi)
            if t > s + 1e-14:
                out.append((s, t))
    return out


# ---------------------------------------------------------------------------
# boundary parametrizations for balls and polygons (n = 2)
# ---------------------------------------------------------------------------

def _ball_perimeter(E, w, H, cone, q):
    if E.n != 2:
        return _ball_perimeter_3d(E, w, H, cone, q)

    def boundary_point(t):
        return E.center[None, :] + E.radius * np.column_stack([np.cos(t), np.sin(t)])

    intervals = _inside_intervals_on_circle(E, cone)
    if not intervals:
        return MeasureResult(0.0, 0.0, "perimeter: boundary outside cone")

    def integrand(t):
        x = boundary_point(t)
        nu = np.column_stack([np.cos(t), np.sin(t)])
        with np.errstate(all="ignore"):
            return np.nan_to_num(w(x) * H(nu) * E.radius, nan=0.0)

    if q.method == "monte_carlo":
        return _mc_intervals(integrand, intervals, q, "perimeter")
    val, err, panels = _adaptive_gl(integrand, intervals, q.rel_tol, q.max_panels)
    return MeasureResult(val, err, f"perimeter: ball boundary, panels={panels}")


def _inside_intervals_on_circle(E, cone, probes: int = 4096):
    """Parameter intervals of the circle boundary lying inside the open cone."""
    if cone.is_full:
        return [(0.0, 2.0 * np.pi)]
    t = np.linspace(0.0, 2.0 * np.pi, probes, endpoint=False)
    x = E.center[None, :] + E.radius * np.column_stack([np.cos(t), np.sin(t)])
    slack = (x @ cone.normals.T).min(axis=1)
    inside = slack > 0.0
    if not inside.any():
        return []
    if inside.all():
        return [(0.0, 2.0 * np.pi)]

    def slack_at(tt):
        xx = E.center + E.radius * np.array([np.cos(tt), np.sin(tt)])
        return float(np.min(xx @ cone.normals.T))

    # locate crossings by bisection between probe points
    crossings = []
    for i in range(probes):
        jn = (i + 1) % probes
        if inside[i] != inside[jn]:
            a, b = t[i], t[i] + 2.0 * np.pi / probes
            fa = slack_at(a)
            for _ in range(60):
                m = 0.5 * (a + b)
                fm = slack_at(m)
                if (fa > 0.0) == (fm > 0.0):
                    a, fa = m, fm
                else:
                    b = m
            crossings.append(0.5 * (a + b))
    crossings.sort()
    intervals = []
    for i, c in enumerate(crossings):
        d = crossings[(i + 1) % len(crossings)]
        if d <= c:
            d += 2.0 * np.pi
        mid = 0.5 * (c + d)
        if slack_at(mid) > 0.0:
            intervals.append((c, d))
    return intervals


def _ball_perimeter_3d(E, w, H, cone, q):
    """Sphere boundary clipped to the cone; indicator integrand, fixed fine grid."""
    def integrand(theta, phi):
        nu = np.column_stack([np.sin(theta) * np.cos(phi),
                              np.sin(theta) * np.sin(phi), np.cos(theta)])
        x = E.center[None, :] + E.radius * nu
        inside = cone.contains(x).astype(float)
        with np.errstate(all="ignore"):
            vals = np.nan_to_num(w(x) * H(nu), nan=0.0)
        return vals * inside * E.radius**2 * np.sin(theta)

    box = (0.0, np.pi, 0.0, 2.0 * np.pi)
    if q.method == "monte_carlo":
        return _mc_box(integrand, box, q, "perimeter")
    coarse = _midpoint_box(integrand, box, 256, 512)
    fine = _midpoint_box(integrand, box, 512, 1024)
    return MeasureResult(fine, abs(fine - coarse), "perimeter: sphere midpoint grid")


def _polytope_perimeter(E, w, H, cone, q):
    total, err = 0.0, 0.0
    panels = 0
    for i in range(E.vertices.shape[0]):
        v0 = E.vertices[i]
        v1 = E.vertices[(i + 1) % E.vertices.shape[0]]
        edge = v1 - v0
        length = np.linalg.norm(edge)
        nu = E.normals[i]
        hnu = float(H(nu))
        spans = _segment_inside_cone(v0, edge, cone)
        for (s0, s1) in spans:
            def integrand(s, v0=v0, edge=edge, hnu=hnu, length=length):
                x = v0[None, :] + s[:, None] * edge[None, :]
                with np.errstate(all="ignore"):
                    return np.nan_to_num(w(x), nan=0.0) * hnu * length

            val, er, p = _adaptive_gl(integrand, [(s0, s1)], q.rel_tol, q.max_panels)
            total += val
            err += er
            panels += p
    return MeasureResult(total, err, f"perimeter: polygon edges, panels={panels}")


def _segment_inside_cone(v0, edge, cone):
    """Sub-intervals of s in [0,1] with v0 + s*edge strictly inside the cone."""
    if cone.is_full:
        return [(0.0, 1.0)]
    lo, hi = 0.0, 1.0
    pieces = [(lo, hi)]
    for a in cone.normals:
        c0, c1 = float(a @ v0), float(a @ edge)
        new = []
        for (s0, s1) in pieces:
            if abs(c1) < 1e-15:
                if c0 > 0.0:
                    new.append((s0, s1))
                continue
            s_cross = -c0 / c1
            if c1 > 0.0:
                s0n = max(s0, s_cross)
                if s1 > s0n + 1e-14:
                    new.append((s0n, s1))
            else:
                s1n = min(s1, s_cross)
                if s1n > s0 + 1e-14:
                    new.append((s0, s1n))
        pieces = new
    return pieces


# ---------------------------------------------------------------------------
# radial-function helpers
# ---------------------------------------------------------------------------

def _rho_and_prime(E, theta):
    if isinstance(E, StarSet2D):
        return E.rho_of_theta(theta), E.rho_prime(theta)
    rho = _rho_theta(E, theta)
    rp = (_rho_theta(E, theta + _FD_THETA) - _rho_theta(E, theta - _FD_THETA)) / (2.0 * _FD_THETA)
    return rho, rp


def _rho_theta(E, theta):
    u = np.column_stack([np.cos(theta), np.sin(theta)])
    return E.rho(u)


def _rho_derivatives_2d(E, theta):
    if isinstance(E, StarSet2D):
        rho = float(E.rho_of_theta(theta))
        rp = float(E.rho_prime(theta))
        rpp = float(E.rho_second(theta))
        probe = np.array([E.rho_second(theta - 10 * _FD_THETA),
                          E.rho_second(theta + 10 * _FD_THETA)])
        if np.max(np.abs(probe - rpp)) > 1e3 * (abs(rpp) + 1.0) * _FD_THETA * 10:
            raise CurvatureUndefined("radial mesh has a kink at the requested point")
        return rho, rp, rpp
    th = np.array([theta - _FD_THETA, theta, theta + _FD_THETA])
    r = _rho_theta(E, th)
    rho = float(r[1])
    rp = float((r[2] - r[0]) / (2.0 * _FD_THETA))
    rpp = float((r[2] - 2.0 * r[1] + r[0]) / _FD_THETA**2)
    return rho, rp, rpp


def _rho_and_partials(E, theta, phi, frame):
    if isinstance(E, StarSet3D):
        return E.rho_tp(theta, phi), *E.rho_partials(theta, phi)
    d = _FD_THETA

    def rho_at(th, ph):
        return E.rho(_sph_dirs(th, ph, frame))

    rho = rho_at(theta, phi)
    dt = (rho_at(theta + d, phi) - rho_at(theta - d, phi)) / (2.0 * d)
    dp = (rho_at(theta, phi + d) - rho_at(theta, phi - d)) / (2.0 * d)
    return rho, dt, dp


def _sph_dirs(theta, phi, frame):
    local = np.column_stack([np.sin(theta) * np.cos(phi),
                             np.sin(theta) * np.sin(phi), np.cos(theta)])
    return local @ frame.T


def _sph_frame(theta, phi, frame):
    u = _sph_dirs(theta, phi, frame)
    e_t = np.column_stack([np.cos(theta) * np.cos(phi),
                           np.cos(theta) * np.sin(phi), -np.sin(theta)]) @ frame.T
    e_p = np.column_stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)]) @ frame.T
    return u, e_t, e_p


# ---------------------------------------------------------------------------
# quadrature engines
# ---------------------------------------------------------------------------

def _panel_values(f, a, b):
    """(I_low, I_high) Gauss-Legendre estimates on panels given by arrays a < b."""
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    lo_nodes, lo_wts = _GL_LO
    hi_nodes, hi_wts = _GL_HI
    t_lo = mid[:, None] + half[:, None] * lo_nodes[None, :]
    t_hi = mid[:, None] + half[:, None] * hi_nodes[None, :]
    f_lo = f(t_lo.ravel()).reshape(t_lo.shape)
    f_hi = f(t_hi.ravel()).reshape(t_hi.shape)
    return (f_lo @ lo_wts) * half, (f_hi @ hi_wts) * half


def _adaptive_gl(f, intervals, rel_tol, max_panels, breakpoints=()):
    a_list, b_list = [], []
    for (lo, hi) in intervals:
        cuts = sorted({lo, hi, *[c for c in breakpoints if lo + 1e-13 < c < hi - 1e-13]})
        for s, t in zip(cuts[:-1], cuts[1:]):
            m = 0.5 * (s + t)
            a_list += [s, m]
            b_list += [m, t]
    a = np.array(a_list)
    b = np.array(b_list)
    i_lo, i_hi = _panel_values(f, a, b)
    err = np.abs(i_hi - i_lo)
    for _ in range(60):
        total = float(i_hi.sum())
        tol_abs = rel_tol * max(abs(total), float(np.abs(i_hi).sum()), 1e-300)
        if err.sum() <= tol_abs:
            break
        if a.size >= max_panels:
            raise ToleranceNotMet(
                f"adaptive quadrature exceeded {max_panels} panels "
                f"(err {err.sum():.3e} > tol {tol_abs:.3e})")
        cut = max(np.partition(err, -max(1, err.size // 8))[-max(1, err.size // 8)],
                  tol_abs / max(a.size, 1))
        split = err >= cut
        keep = ~split
        mid = 0.5 * (a[split] + b[split])
        new_a = np.concatenate([a[keep], a[split], mid])
        new_b = np.concatenate([b[keep], mid, b[split]])
        ns_lo, ns_hi = _panel_values(f, np.concatenate([a[split], mid]),
                                     np.concatenate([mid, b[split]]))
        i_lo = np.concatenate([i_lo[keep], ns_lo])
        i_hi = np.concatenate([i_hi[keep], ns_hi])
        err = np.concatenate([err[keep], np.abs(ns_hi - ns_lo)])
        a, b = new_a, new_b
    return float(i_hi.sum()), float(err.sum()), int(a.size)


def _tensor_cell(f, cell, m):
    t0, t1, p0, p1 = cell
    nodes, wts = np.polynomial.legendre.leggauss(m)
    th = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * nodes
    ph = 0.5 * (p0 + p1) + 0.5 * (p1 - p0) * nodes
    TH, PH = np.meshgrid(th, ph, indexing="ij")
    vals = f(TH.ravel(), PH.ravel()).reshape(m, m)
    scale = 0.25 * (t1 - t0) * (p1 - p0)
    return float(wts @ vals @ wts) * scale


def _adaptive_gl2d(f, box, rel_tol, max_cells):
    cells = [box]
    lo = [_tensor_cell(f, box, 12)]
    hi = [_tensor_cell(f, box, 24)]
    for _ in range(40):
        total = sum(hi)
        tol_abs = rel_tol * max(abs(total), sum(abs(v) for v in hi), 1e-300)
        errs = [abs(h - l) for h, l in zip(hi, lo)]
        if sum(errs) <= tol_abs:
            break
        if len(cells) >= max_cells:
            raise ToleranceNotMet("2-D adaptive quadrature exceeded its cell budget")
        order = np.argsort(errs)[::-1]
        split_idx = set(order[:max(1, len(order) // 4)].tolist())
        new_cells, new_lo, new_hi = [], [], []
        for i, cell in enumerate(cells):
            if i not in split_idx or errs[i] <= tol_abs / (4 * len(cells)):
                new_cells.append(cell)
                new_lo.append(lo[i])
                new_hi.append(hi[i])
                continue
            t0, t1, p0, p1 = cell
            tm, pm = 0.5 * (t0 + t1), 0.5 * (p0 + p1)
            for child in ((t0, tm, p0, pm), (t0, tm, pm, p1),
                          (tm, t1, p0, pm), (tm, t1, pm, p1)):
                new_cells.append(child)
                new_lo.append(_tensor_cell(f, child, 12))
                new_hi.append(_tensor_cell(f, child, 24))
        cells, lo, hi = new_cells, new_lo, new_hi
    err = sum(abs(h - l) for h, l in zip(hi, lo))
    return float(sum(hi)), float(err), len(cells)


def _midpoint_box(f, box, m1, m2):
    t0, t1, p0, p1 = box
    th = t0 + (t1 - t0) * (np.arange(m1) + 0.5) / m1
    ph = p0 + (p1 - p0) * (np.arange(m2) + 0.5) / m2
    TH, PH = np.meshgrid(th, ph, indexing="ij")
    vals = f(TH.ravel(), PH.ravel())
    return float(vals.sum()) * (t1 - t0) * (p1 - p0) / (m1 * m2)


def _mc_intervals(f, intervals, q, label):
    lengths = np.array([b - a for (a, b) in intervals])
    total_len = float(lengths.sum())
    rng = rng_for(q.seed, stream=101)
    u = rng.uniform(0.0, total_len, size=q.samples)
    edges = np.concatenate([[0.0], np.cumsum(lengths)])
    idx = np.searchsorted(edges, u, side="right") - 1
    idx = np.clip(idx, 0, len(intervals) - 1)
    t = np.array([intervals[i][0] for i in idx]) + (u - edges[idx])
    vals = f(t)
    mean = float(vals.mean())
    std = float(vals.std(ddof=1)) if q.samples > 1 else 0.0
    return MeasureResult(mean * total_len, std * total_len / np.sqrt(q.samples),
                         f"{label}: mc({q.samples}, seed={q.seed})")


def _mc_box(f, box, q, label):
    t0, t1, p0, p1 = box
    rng = rng_for(q.seed, stream=102)
    th = rng.uniform(t0, t1, size=q.samples)
    ph = rng.uniform(p0, p1, size=q.samples)
    vals = f(th, ph)
    area = (t1 - t0) * (p1 - p0)
    mean = float(vals.mean())
    std = float(vals.std(ddof=1)) if q.samples > 1 else 0.0
    return MeasureResult(mean * area, std * area / np.sqrt(q.samples),
                         f"{label}: mc({q.samples}, seed={q.seed})")
