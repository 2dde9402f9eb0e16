"""Open convex cones with vertex at the origin.

Supported representations: the full space, a half-space, a polyhedral cone
given by unit inward normals, and a planar sector.  Smooth non-polyhedral
cones must be approximated by the caller with many half-spaces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidCone
from .sampling import unit_directions

FULL = "full"
HALFSPACE = "halfspace"
POLYHEDRAL = "polyhedral"
SECTOR = "sector"


@dataclass(frozen=True)
class ConvexCone:
    """Open convex cone {x : a_i . x > 0 for all i} (no normals = full space)."""

    n: int
    kind: str
    normals: np.ndarray = field(default=None, repr=False)  # (k, n) unit inward
    theta_interval: tuple | None = None  # n=2 cap as an angle interval

    # ------------------------------------------------------------------ build
    @staticmethod
    def full_space(n: int) -> "ConvexCone":
        return ConvexCone(n=n, kind=FULL, normals=np.zeros((0, n)),
                          theta_interval=(0.0, 2.0 * np.pi) if n == 2 else None)

    @staticmethod
    def half_space(normal) -> "ConvexCone":
        a = np.asarray(normal, dtype=float)
        nrm = np.linalg.norm(a)
        if nrm == 0.0:
            raise InvalidCone("half-space normal must be nonzero")
        a = a / nrm
        cone = ConvexCone(n=a.size, kind=HALFSPACE, normals=a[None, :])
        if a.size == 2:
            object.__setattr__(cone, "theta_interval", _cap_interval_2d(cone.normals))
        return cone

    @staticmethod
    def polyhedral(normals) -> "ConvexCone":
        a = np.atleast_2d(np.asarray(normals, dtype=float))
        nrms = np.linalg.norm(a, axis=1)
        if np.any(nrms == 0.0):
            raise InvalidCone("zero normal in polyhedral cone")
        a = a / nrms[:, None]
        n = a.shape[1]
        # feasibility by direction sampling
        u = unit_directions(n, 4096)
        slack = (u @ a.T).min(axis=1)
        if slack.max() <= 1e-9:
            raise InvalidCone("polyhedral cone has empty interior")
        cone = ConvexCone(n=n, kind=POLYHEDRAL, normals=a)
        if n == 2:
            object.__setattr__(cone, "theta_interval", _cap_interval_2d(a))
        return cone

    @staticmethod
    def sector_2d(beta: float, axis_angle: float = None) -> "ConvexCone":
        """Planar sector of opening beta centered on axis_angle (default: bisector of the first quadrant style, beta/2)."""
        if not 0.0 < beta <= 2.0 * np.pi:
            raise InvalidCone(f"sector opening must lie in (0, 2*pi], got {beta}")
        if beta > np.pi + 1e-15:
            raise InvalidCone(f"sector opening {beta} > pi is not convex")
        if axis_angle is None:
            axis_angle = beta / 2.0  # sector spans (0, beta)
        lo = axis_angle - beta / 2.0
        hi = axis_angle + beta / 2.0
        # inward normals of the two edge rays; they coincide when beta = pi
        n1 = np.array([np.cos(lo + np.pi / 2.0), np.sin(lo + np.pi / 2.0)])
        n2 = np.array([np.cos(hi - np.pi / 2.0), np.sin(hi - np.pi / 2.0)])
        normals = n1[None, :] if abs(beta - np.pi) < 1e-14 else np.vstack([n1, n2])
        cone = ConvexCone(n=2, kind=SECTOR, normals=normals, theta_interval=(lo, hi))
        return cone

    @staticmethod
    def orthant(n: int) -> "ConvexCone":
        return ConvexCone.polyhedral(np.eye(n))

    # ------------------------------------------------------------ membership
    @property
    def is_full(self) -> bool:
        return self.normals.shape[0] == 0

    def contains(self, x, margin: float = 0.0) -> np.ndarray:
        """Membership of the open cone; margin is relative to |x|."""
        x = np.asarray(x, dtype=float)
        if self.is_full:
            return np.ones(x.shape[:-1], dtype=bool)
        slack = np.min(x @ self.normals.T, axis=-1)
        if margin == 0.0:
            return slack > 0.0
        return slack > margin * np.linalg.norm(x, axis=-1)

    def boundary_distance(self, x) -> np.ndarray:
        """dist(x, boundary) for x inside; equals min_i a_i . x for unit normals."""
        x = np.asarray(x, dtype=float)
        if self.is_full:
            raise InvalidCone("full space has no boundary")
        return np.min(x @ self.normals.T, axis=-1)

    # --------------------------------------------------------------- caps
    @property
    def periodic_cap(self) -> bool:
        return self.n == 2 and self.is_full

    def angular_box(self):
        """For n=3 cones aligned with the axes, the cap as a (theta, phi, Q) box.

        Returns ((theta_lo, theta_hi), (phi_lo, phi_hi), Q) with directions
        Q @ (sin t cos p, sin t sin p, cos t), or None when the cap is not a
        coordinate box.
        """
        if self.n != 3:
            return None
        if self.is_full:
            return (0.0, np.pi), (0.0, 2.0 * np.pi), np.eye(3)
        if self.kind == HALFSPACE:
            q = _rotation_to_e3(self.normals[0])
            return (0.0, np.pi / 2.0), (0.0, 2.0 * np.pi), q
        # axis-aligned polyhedral: normals must be standard basis vectors
        eye = np.eye(3)
        idx = []
        for a in self.normals:
            match = np.argmax(a @ eye.T)
            if not np.allclose(a, eye[match], atol=1e-12):
                return None
            idx.append(int(match))
        axes = set(idx)
        theta = (0.0, np.pi / 2.0) if 2 in axes else (0.0, np.pi)
        if {0, 1} <= axes:
            phi = (0.0, np.pi / 2.0)
        elif 0 in axes:
            phi = (-np.pi / 2.0, np.pi / 2.0)
        elif 1 in axes:
            phi = (0.0, np.pi)
        else:
            phi = (0.0, 2.0 * np.pi)
        return theta, phi, np.eye(3)

    def grid_aligned(self) -> bool:
        """Whether the boundary lies on coordinate planes (orthant-like or axis half-space)."""
        if self.is_full:
            return True
        eye = np.eye(self.n)
        for a in self.normals:
            j = int(np.argmax(np.abs(a)))
            if not (np.allclose(a, eye[j], atol=1e-12) or np.allclose(a, -eye[j], atol=1e-12)):
                return False
        return True


def _cap_interval_2d(normals: np.ndarray) -> tuple:
    """Exact angle interval of {theta : a_i . (cos, sin) > 0 for all i}."""
    u = unit_directions(2, 2048)
    slack = (u @ normals.T).min(axis=1)
    k = int(np.argmax(slack))
    if slack[k] <= 0.0:
        raise InvalidCone("cone cap is empty")
    theta_star = np.arctan2(u[k, 1], u[k, 0])
    lo, hi = -np.inf, np.inf
    for a in normals:
        phi = np.arctan2(a[1], a[0])
        c_lo, c_hi = phi - np.pi / 2.0, phi + np.pi / 2.0
        shift = 2.0 * np.pi * np.round((theta_star - 0.5 * (c_lo + c_hi)) / (2.0 * np.pi))
        lo = max(lo, c_lo + shift)
        hi = min(hi, c_hi + shift)
    if not lo < hi:
        raise InvalidCone("cone cap is empty")
    return (lo, hi)


def _rotation_to_e3(v: np.ndarray) -> np.ndarray:
    """Orthogonal Q with Q @ e3 = v."""
    v = v / np.linalg.norm(v)
    if np.allclose(v, [0.0, 0.0, 1.0]):
        return np.eye(3)
    if np.allclose(v, [0.0, 0.0, -1.0]):
        return np.diag([1.0, -1.0, -1.0])
    a = np.array([0.0, 0.0, 1.0])
    w = np.cross(a, v)
    s = np.linalg.norm(w)
    c = float(a @ v)
    wx = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
    return np.eye(3) + wx + wx @ wx * ((1 - c) / s**2)
