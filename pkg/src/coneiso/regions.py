"""Candidate set representations: Wulff sectors, star sets, polytopes, balls.

Every region answers radial-section queries (the interval of t with
t*direction inside the set), which is what the polar-coordinate quadrature
consumes; homogeneous weights make the radial integral closed-form.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateBoundary, InvalidParameters
from .gauges import Gauge


class WulffSector:
    """scale * W(H), to be intersected with a cone by the measure operations."""

    def __init__(self, gauge: Gauge, scale: float = 1.0):
        if scale <= 0.0:
            raise InvalidParameters("Wulff sector scale must be positive")
        self.gauge = gauge
        self.scale = float(scale)
        self.n = gauge.n

    def rho(self, dirs):
        return self.scale * self.gauge.wulff_radius(dirs)

    def sections(self, dirs):
        r = self.rho(dirs)
        return np.zeros_like(r), r

    def radial_kinks(self):
        return list(self.gauge.radial_kinks)

    def scaled(self, r: float) -> "WulffSector":
        return WulffSector(self.gauge, self.scale * r)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        inside = self.gauge.dual_value(x) < self.scale
        if self.gauge.tag[0] == "restricted":
            inside = self.gauge.base.dual_value(x) < self.scale
            inside &= self.gauge.cone.contains(x)
        return inside

    def level(self, x):
        """Dual-gauge level H°(x) - scale, negative inside W (cone handled by the grid box)."""
        g = self.gauge.base if self.gauge.tag[0] == "restricted" else self.gauge
        return g.dual_value(np.asarray(x, dtype=float)) - self.scale

    def bounding_box(self):
        from .sampling import unit_directions

        dirs = unit_directions(self.n, 512)
        pts = dirs * self.rho(dirs)[:, None]
        return pts.min(axis=0), pts.max(axis=0)


class StarSet2D:
    """Star-shaped set {t Theta(theta): 0 <= t < rho(theta)} over an angle interval.

    rho is given on a uniform theta mesh and interpolated with a cubic spline
    (periodic on the full circle).  The mesh must cover the cone cap so that
    the only boundary inside the cone is the radial graph.
    """

    def __init__(self, theta_nodes, rho_values, periodic: bool):
        from scipy.interpolate import CubicSpline

        theta_nodes = np.asarray(theta_nodes, dtype=float)
        rho_values = np.asarray(rho_values, dtype=float)
        if np.any(rho_values <= 0.0):
            raise InvalidParameters("star set needs a strictly positive radial function")
        self.periodic = bool(periodic)
        self.theta_lo = float(theta_nodes[0])
        self.theta_hi = float(theta_nodes[-1])
        if periodic:
            if not np.isclose(rho_values[0], rho_values[-1]):
                raise InvalidParameters("periodic star set needs matching endpoint values")
            self._spline = CubicSpline(theta_nodes, rho_values, bc_type="periodic")
        else:
            self._spline = CubicSpline(theta_nodes, rho_values, bc_type="natural")
        self._dspline = self._spline.derivative()
        self._d2spline = self._dspline.derivative()
        self.n = 2

    @staticmethod
    def from_function(fn, lo: float, hi: float, nodes: int = 2048,
                      periodic: bool | None = None) -> "StarSet2D":
        if periodic is None:
            periodic = np.isclose(hi - lo, 2.0 * np.pi)
        theta = np.linspace(lo, hi, nodes + 1)
        vals = np.asarray(fn(theta), dtype=float)
        if periodic:
            vals[-1] = vals[0]
        return StarSet2D(theta, vals, periodic)

    def _wrap(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.periodic:
            span = self.theta_hi - self.theta_lo
            return self.theta_lo + np.mod(theta - self.theta_lo, span)
        return np.clip(theta, self.theta_lo, self.theta_hi)

    def rho(self, dirs):
        dirs = np.asarray(dirs, dtype=float)
        theta = np.arctan2(dirs[..., 1], dirs[..., 0])
        return self.rho_of_theta(theta)

    def rho_of_theta(self, theta):
        return self._spline(self._wrap(theta))

    def rho_prime(self, theta):
        return self._dspline(self._wrap(theta))

    def rho_second(self, theta):
        return self._d2spline(self._wrap(theta))

    def sections(self, dirs):
        r = self.rho(dirs)
        return np.zeros_like(r), r

    def radial_kinks(self):
        return []

    def scaled(self, r: float) -> "StarSet2D":
        theta = self._spline.x
        return StarSet2D(theta, r * self._spline(theta), self.periodic)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        theta = np.arctan2(x[..., 1], x[..., 0])
        return np.linalg.norm(x, axis=-1) < self.rho_of_theta(theta)

    def level(self, x):
        """Signed distance surrogate |x| - rho(theta), negative inside."""
        x = np.asarray(x, dtype=float)
        theta = np.arctan2(x[..., 1], x[..., 0])
        return np.linalg.norm(x, axis=-1) - self.rho_of_theta(theta)

    def bounding_box(self):
        theta = np.linspace(self.theta_lo, self.theta_hi, 4096)
        pts = np.column_stack([np.cos(theta), np.sin(theta)]) * self.rho_of_theta(theta)[:, None]
        lo = np.minimum(pts.min(axis=0), 0.0)
        hi = np.maximum(pts.max(axis=0), 0.0)
        return lo, hi


class StarSet3D:
    """Radial graph over a (theta, phi) box on the sphere, bicubic-interpolated."""

    def __init__(self, theta_nodes, phi_nodes, rho_values, frame=None):
        from scipy.interpolate import RectBivariateSpline

        rho_values = np.asarray(rho_values, dtype=float)
        if np.any(rho_values <= 0.0):
            raise InvalidParameters("star set needs a strictly positive radial function")
        self.theta_nodes = np.asarray(theta_nodes, dtype=float)
        self.phi_nodes = np.asarray(phi_nodes, dtype=float)
        self._spline = RectBivariateSpline(self.theta_nodes, self.phi_nodes, rho_values)
        self.frame = np.eye(3) if frame is None else np.asarray(frame, dtype=float)
        self.n = 3

    def rho_tp(self, theta, phi):
        return self._spline(theta, phi, grid=False)

    def rho_partials(self, theta, phi):
        dt = self._spline(theta, phi, dx=1, grid=False)
        dp = self._spline(theta, phi, dy=1, grid=False)
        return dt, dp

    def rho(self, dirs):
        local = np.asarray(dirs, dtype=float) @ self.frame
        theta = np.arccos(np.clip(local[..., 2], -1.0, 1.0))
        phi = np.arctan2(local[..., 1], local[..., 0])
        phi = np.where(phi < self.phi_nodes[0], phi + 2.0 * np.pi, phi)
        return self.rho_tp(theta, phi)

    def sections(self, dirs):
        r = self.rho(dirs)
        return np.zeros_like(r), r

    def radial_kinks(self):
        return []

    def scaled(self, r: float) -> "StarSet3D":
        vals = self._spline(self.theta_nodes, self.phi_nodes)
        return StarSet3D(self.theta_nodes, self.phi_nodes, r * vals, frame=self.frame)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x, axis=-1) < self.rho(x / np.maximum(
            np.linalg.norm(x, axis=-1, keepdims=True), 1e-300))


class Ball:
    """Open Euclidean ball B_R(c)."""

    def __init__(self, center, radius: float):
        if radius <= 0.0:
            raise InvalidParameters("ball radius must be positive")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.n = self.center.size

    def sections(self, dirs):
        dirs = np.asarray(dirs, dtype=float)
        b = dirs @ self.center
        disc = b**2 - (self.center @ self.center - self.radius**2)
        ok = disc > 0.0
        root = np.sqrt(np.maximum(disc, 0.0))
        t0 = np.maximum(b - root, 0.0)
        t1 = np.maximum(b + root, 0.0)
        t1 = np.where(ok, t1, 0.0)
        t0 = np.where(ok, t0, 0.0)
        return t0, t1

    def support_arc(self):
        """Angle interval of rays hitting the ball (n=2), or None for all."""
        c = np.linalg.norm(self.center)
        if c <= self.radius:
            return None
        psi = float(np.arctan2(self.center[1], self.center[0]))
        gamma = float(np.arcsin(self.radius / c))
        return (psi - gamma, psi + gamma)

    def radial_kinks(self):
        return []

    def scaled(self, r: float) -> "Ball":
        return Ball(r * self.center, r * self.radius)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.center, axis=-1) < self.radius

    def level(self, x):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.center, axis=-1) - self.radius

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius


class Polytope2D:
    """Convex polygon with counterclockwise vertices and outward edge normals."""

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise InvalidParameters("polygon needs at least 3 planar vertices")
        area2 = float(np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1]))
        if area2 == 0.0:
            raise DegenerateBoundary("polygon has zero area")
        if area2 < 0.0:
            v = v[::-1]
        edges = np.roll(v, -1, axis=0) - v
        lengths = np.linalg.norm(edges, axis=1)
        if np.any(lengths == 0.0):
            raise DegenerateBoundary("polygon has a zero-length edge")
        normals = np.column_stack([edges[:, 1], -edges[:, 0]]) / lengths[:, None]
        cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - \
            edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
        if np.any(cross < -1e-12 * lengths**2):
            raise InvalidParameters("only convex polygons are supported")
        self.vertices = v
        self.normals = normals
        self.offsets = np.einsum("ij,ij->i", v, normals)
        self.n = 2

    def sections(self, dirs):
        dirs = np.asarray(dirs, dtype=float)
        dots = dirs @ self.normals.T  # (..., m)
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = self.offsets / dots
        upper = np.where(dots > 1e-15, bound, np.inf).min(axis=-1)
        lower = np.where(dots < -1e-15, bound, -np.inf).max(axis=-1)
        blocked = np.any((np.abs(dots) <= 1e-15) & (self.offsets < 0.0), axis=-1)
        t0 = np.maximum(lower, 0.0)
        t1 = np.maximum(upper, 0.0)
        empty = blocked | (t1 <= t0)
        return np.where(empty, 0.0, t0), np.where(empty, 0.0, t1)

    def radial_kinks(self):
        return [float(np.arctan2(v[1], v[0])) for v in self.vertices]

    def scaled(self, r: float) -> "Polytope2D":
        return Polytope2D(r * self.vertices)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return np.all(x @ self.normals.T < self.offsets, axis=-1)

    def contains_origin(self) -> bool:
        return bool(np.all(self.offsets > 0.0))

    def level(self, x):
        """max_i (x . nu_i - d_i): exact signed distance for boxes, negative inside."""
        x = np.asarray(x, dtype=float)
        return np.max(x @ self.normals.T - self.offsets, axis=-1)

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)
