"""Isoperimetric quotients and perturbative searches for counterexamples.

The scale-invariant quotient Q = P_{w,H}(E; Σ) / w(E ∩ Σ)^{(D-1)/D} is
minimized by Wulff sectors r W ∩ Σ for admissible weights; the sharp value
follows from the perimeter-volume identity as Q* = D w(W ∩ Σ)^{1/D}.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cones import ConvexCone
from .gauges import Gauge
from .measure import QuadratureSpec, weighted_perimeter, weighted_volume
from .regions import Ball, StarSet2D, StarSet3D, WulffSector
from .sampling import rng_for
from .weights import Weight


@dataclass
class QuotientResult:
    perimeter: float
    volume: float
    D: float
    quotient: float
    sharp: float
    margin: float
    quotient_error: float
    sharp_error: float


@dataclass
class PerturbationSpec:
    amplitude: float = 0.2
    max_modes: int = 6
    translations: bool = True
    scalings: bool = True

    def __post_init__(self):
        if not 0.0 < self.amplitude <= 0.5:
            raise ValueError("perturbation amplitude must lie in (0, 0.5]")


@dataclass
class SearchResult:
    trials: int
    sharp: float
    min_quotient: float
    argmin: str
    violations: list = field(default_factory=list)
    rows: list = field(default_factory=list)


def quotient(E, w: Weight, H: Gauge, cone: ConvexCone,
             q: QuadratureSpec = QuadratureSpec(),
             sharp: tuple | None = None) -> QuotientResult:
    """Quotient of E and its margin over the Wulff-sector value."""
    D = w.n + w.alpha
    per = weighted_perimeter(E, w, H, cone, q)
    vol = weighted_volume(E, w, cone, q)
    if vol.value <= 0.0:
        raise ValueError("candidate set has nonpositive weighted volume")
    kappa = (D - 1.0) / D
    Q = per.value / vol.value**kappa
    q_err = per.error_estimate / vol.value**kappa \
        + per.value * kappa * vol.error_estimate / vol.value**(kappa + 1.0)
    if sharp is None:
        sharp = sharp_constant(w, H, cone, q)
    q_star, q_star_err = sharp
    return QuotientResult(per.value, vol.value, D, Q, q_star, Q - q_star,
                          q_err, q_star_err)


def sharp_constant(w: Weight, H: Gauge, cone: ConvexCone,
                   q: QuadratureSpec = QuadratureSpec()) -> tuple:
    """Q* = D * w(W ∩ Σ)^{1/D}, closed form from the perimeter-volume identity."""
    D = w.n + w.alpha
    vol = weighted_volume(WulffSector(H, 1.0), w, cone, q)
    if vol.value <= 0.0:
        raise ValueError("Wulff sector has nonpositive weighted volume")
    q_star = D * vol.value ** (1.0 / D)
    q_err = q_star * vol.error_estimate / (D * vol.value)
    return q_star, q_err


def scaling_invariance_check(E, w: Weight, H: Gauge, cone: ConvexCone, scales,
                             q: QuadratureSpec = QuadratureSpec()) -> float:
    """Max relative deviation of Q(rE) from Q(E) over the given scales."""
    sharp = sharp_constant(w, H, cone, q)
    base = quotient(E, w, H, cone, q, sharp=sharp).quotient
    worst = 0.0
    for r in scales:
        if r <= 0.0:
            raise ValueError("scales must be positive")
        qr = quotient(E.scaled(r), w, H, cone, q, sharp=sharp).quotient
        worst = max(worst, abs(qr / base - 1.0))
    return worst


def perturbation_search(w: Weight, H: Gauge, cone: ConvexCone,
                        spec: PerturbationSpec = PerturbationSpec(),
                        trials: int = 200, seed: int = 0,
                        q: QuadratureSpec | None = None) -> SearchResult:
    """Evaluate Q over random perturbations of the Wulff sector.

    Candidates: radial perturbations rho = rho_W (1 + delta xi), scaled
    copies, and (isotropic H) translated balls, clipped by the cone through
    the measure operations.  A violation is any Q < Q* - 3 * combined error;
    admissible weights must produce none, and for inadmissible weights the
    search is the refutation tool.
    """
    if trials < 1:
        raise ValueError("search needs at least one trial")
    if q is None:
        q = QuadratureSpec(rel_tol=1e-5)  # candidates carry their own error bars
    sharp_spec = QuadratureSpec(method=q.method, rel_tol=min(q.rel_tol, 1e-7),
                                max_panels=q.max_panels, samples=q.samples, seed=q.seed)
    sharp = sharp_constant(w, H, cone, sharp_spec)
    candidates = [_make_candidate(i, w, H, cone, spec, seed) for i in range(trials)]

    def evaluate(item):
        kind, descr, region = item
        res = quotient(region, w, H, cone, q, sharp=sharp)
        return kind, descr, res

    workers = int(os.environ.get("CONEISO_THREADS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            evaluated = list(pool.map(evaluate, candidates))
    else:
        evaluated = [evaluate(c) for c in candidates]

    out = SearchResult(trials=trials, sharp=sharp[0],
                       min_quotient=np.inf, argmin="")
    for i, (kind, descr, res) in enumerate(evaluated):
        tol = 3.0 * (res.quotient_error + res.sharp_error)
        violation = res.quotient < res.sharp - tol
        row = {"trial": i, "kind": kind, "candidate": descr,
               "quotient": res.quotient, "margin": res.margin,
               "tolerance": tol, "violation": bool(violation)}
        out.rows.append(row)
        if violation:
            out.violations.append(row)
        if res.quotient < out.min_quotient:
            out.min_quotient = res.quotient
            out.argmin = f"{kind}: {descr}"
    return out


# ---------------------------------------------------------------------------
# candidate generation
# ---------------------------------------------------------------------------

def _make_candidate(i, w, H, cone, spec, seed):
    rng = rng_for(seed, stream=1000 + i)
    kind = i % 8
    if spec.translations and kind == 6 and H.tag == ("pnorm", 2.0):
        return _translated_ball(rng, cone)
    if spec.scalings and kind == 7:
        r = float(rng.uniform(0.5, 2.0))
        return "scaled_wulff", f"r={r:.4f}", WulffSector(H, r)
    return _perturbed_star(rng, H, cone, spec)


def _translated_ball(rng, cone):
    if cone.is_full:
        u = rng.standard_normal(cone.n)
        u /= np.linalg.norm(u)
    else:
        u = _interior_direction(cone, rng)
    shift = float(rng.uniform(0.0, 0.8))
    c = shift * u
    return "translated_ball", f"center={np.round(c, 4).tolist()}", Ball(c, 1.0)


def _interior_direction(cone, rng):
    for _ in range(256):
        u = rng.standard_normal(cone.n)
        u /= np.linalg.norm(u)
        if cone.contains(u, margin=0.1):
            return u
    raise RuntimeError("could not sample an interior direction")


def _perturbed_star(rng, H, cone, spec):
    delta = float(rng.uniform(0.2, 1.0)) * spec.amplitude
    k_max = spec.max_modes
    if cone.n == 2:
        lo, hi = cone.theta_interval
        coeff = rng.standard_normal(k_max + 1)
        periodic = cone.periodic_cap
        phases = rng.uniform(0.0, 2.0 * np.pi, size=k_max + 1)

        def xi(theta):
            s = np.zeros_like(theta)
            for k in range(k_max + 1):
                if periodic:
                    s += coeff[k] * np.cos(k * theta + phases[k])
                else:
                    s += coeff[k] * np.cos(k * np.pi * (theta - lo) / (hi - lo))
            return s

        grid = np.linspace(lo, hi, 1024)
        norm = float(np.max(np.abs(xi(grid)))) or 1.0

        def rho(theta):
            u = np.column_stack([np.cos(theta), np.sin(theta)])
            return H.wulff_radius(u) * (1.0 + delta * xi(theta) / norm)

        region = StarSet2D.from_function(rho, lo, hi, nodes=2048, periodic=periodic)
        return "star", f"delta={delta:.4f}, modes={k_max}", region

    box = cone.angular_box()
    if box is None:
        raise ValueError("n=3 star candidates need an axis-aligned cone cap")
    (t0, t1), (p0, p1), frame = box
    a = rng.standard_normal((k_max + 1, k_max + 1))
    th = np.linspace(max(t0, 1e-4), min(t1, np.pi - 1e-4), 48)
    ph = np.linspace(p0, p1, 48)
    TH, PH = np.meshgrid(th, ph, indexing="ij")
    that = (TH - t0) / (t1 - t0)
    phat = (PH - p0) / (p1 - p0)
    xi = np.zeros_like(TH)
    for k in range(k_max + 1):
        for l in range(k_max + 1):
            xi += a[k, l] * np.cos(k * np.pi * that) * np.cos(l * np.pi * phat)
    xi /= max(float(np.max(np.abs(xi))), 1e-300)
    local = np.stack([np.sin(TH) * np.cos(PH), np.sin(TH) * np.sin(PH),
                      np.cos(TH)], axis=-1)
    dirs = local @ frame.T
    base = H.wulff_radius(dirs.reshape(-1, 3)).reshape(TH.shape)
    region = StarSet3D(th, ph, base * (1.0 + delta * xi), frame=frame)
    return "star", f"delta={delta:.4f}, modes={k_max}x{k_max}", region
