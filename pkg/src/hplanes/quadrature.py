"""Quadrature rules shared across the package.

Conventions: plane integrals carry the hyperbolic area weight dx dy / y^2
and are computed by tensor Gauss-Legendre with the y direction mapped
through log y (the 1/y^2 weight concentrates mass at small y, the log map
makes the effective resolution uniform).  Rotation-angle integrals use the
uniform rule on [0, pi) with weight dtheta/pi, which is spectrally accurate
for the periodic integrands that occur here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadratureSpec:
    """Plain record describing a 1D rule; serialized in experiment configs."""

    node_count: int
    scheme_id: str = "trapezoid_periodic"

    def __post_init__(self):
        if self.node_count < 2:
            raise ValueError(f"node_count must be >= 2, got {self.node_count}")
        if self.scheme_id not in ("trapezoid_periodic", "gauss_legendre"):
            raise ValueError(f"unknown scheme_id {self.scheme_id!r}")

    def to_dict(self) -> dict:
        return {"node_count": self.node_count, "scheme_id": self.scheme_id}

    @classmethod
    def from_dict(cls, d: dict) -> "QuadratureSpec":
        return cls(node_count=int(d["node_count"]), scheme_id=str(d["scheme_id"]))


def gauss_legendre(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def composite_gauss(a: float, b: float, panel_width: float, nodes_per_panel: int = 16):
    """Composite Gauss-Legendre rule: panels of roughly `panel_width`."""
    n_panels = max(1, int(np.ceil((b - a) / panel_width)))
    edges = np.linspace(a, b, n_panels + 1)
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(lo, hi, nodes_per_panel)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def periodic_rule(n: int, period: float = np.pi) -> tuple[np.ndarray, np.ndarray]:
    """Uniform nodes on [0, period) with equal weights summing to `period`.

    Exact for trigonometric polynomials e^{2*pi*i*k*x/period} with |k| < n.
    """
    theta = np.arange(n) * (period / n)
    w = np.full(n, period / n)
    return theta, w


def log_y_rule(y_min: float, y_max: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for integrals of the form int f(y) dy / y^2.

    Substituting y = e^u gives int f(e^u) e^{-u} du; the returned weights
    already include the e^{-u} factor, so sum(w * f(y)) approximates the
    weighted integral.
    """
    if y_min <= 0:
        raise ValueError("y_min must be positive")
    u, wu = gauss_legendre(np.log(y_min), np.log(y_max), n)
    y = np.exp(u)
    return y, wu / y


def plane_rule(x_min, x_max, y_min, y_max, nx, ny):
    """Tensor rule for int f(x, y) dx dy / y^2 over a rectangle.

    Returns flat arrays (X, Y, W) with sum(W * f(X, Y)) the approximation.
    """
    x, wx = gauss_legendre(x_min, x_max, nx)
    y, wy = log_y_rule(y_min, y_max, ny)
    X, Y = np.meshgrid(x, y, indexing="ij")
    W = np.outer(wx, wy)
    return X.ravel(), Y.ravel(), W.ravel()
