"""Numerical toolkit for sharp weighted anisotropic isoperimetric inequalities in convex cones."""

from .cones import ConvexCone
from .gauges import (
    Gauge,
    WulffBody,
    dual_gauge,
    ellipse_gauge,
    euclidean_gauge,
    gauge_p_norm,
    restricted_gauge,
    wulff_membership,
)

__all__ = [
    "ConvexCone",
    "Gauge",
    "WulffBody",
    "dual_gauge",
    "ellipse_gauge",
    "euclidean_gauge",
    "gauge_p_norm",
    "restricted_gauge",
    "wulff_membership",
]

__version__ = "0.1.0"
