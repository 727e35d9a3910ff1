"""Exact model geometry of the hyperbolic plane and its d-fold products.

The upper half plane H = {z : Im z > 0} carries the isometric action of
PSL(2, R) by fractional linear maps.  Group elements are stored in p*k
coordinates: g = p_z k_theta with

    p_z     = [[sqrt(y), x/sqrt(y)], [0, 1/sqrt(y)]]   (z = x + iy)
    k_theta = [[cos t, sin t], [-sin t, cos t]],   theta in [0, pi)

so that p_z(i) = z and k stabilizes i.  The Haar measure factors as
dg = (dx dy / y^2)(dtheta / pi).  Products of d planes are handled
factor-wise; the geodesic flow at energy vector E acts on the right by
diag(exp(sqrt(E_j) t), exp(-sqrt(E_j) t)) in each factor.

All types are immutable value objects and all operations are pure
functions, safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MIN_HEIGHT = 1e-300


class HeightError(ValueError):
    """Raised when a plane point's height is non-positive or denormal."""


class DecompositionError(ValueError):
    """Raised when a matrix cannot be factored as p_z * k_theta."""


@dataclass(frozen=True)
class PlanePoint:
    """A point x + iy of the upper half plane (y strictly positive)."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise HeightError(f"non-finite coordinates ({self.x}, {self.y})")
        if self.y <= MIN_HEIGHT:
            raise HeightError(f"height y={self.y} below {MIN_HEIGHT}")

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)

    @classmethod
    def from_complex(cls, z: complex) -> "PlanePoint":
        return cls(float(z.real), float(z.imag))


I_POINT = PlanePoint(0.0, 1.0)


def _reduce_theta(theta: float) -> float:
    """Reduce mod pi into [0, pi); the group is projective."""
    t = math.fmod(theta, math.pi)
    if t < 0:
        t += math.pi
    if t >= math.pi:  # fmod rounding at the boundary
        t -= math.pi
    return t + 0.0 if t != 0.0 else 0.0  # canonicalize -0.0


@dataclass(frozen=True)
class GroupElement:
    """g = p_z k_theta in PSL(2, R)."""

    z: PlanePoint
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", _reduce_theta(float(self.theta)))

    def matrix(self) -> np.ndarray:
        x, y, t = self.z.x, self.z.y, self.theta
        sy = math.sqrt(y)
        p = np.array([[sy, x / sy], [0.0, 1.0 / sy]])
        k = np.array([[math.cos(t), math.sin(t)], [-math.sin(t), math.cos(t)]])
        return p @ k

    @classmethod
    def identity(cls) -> "GroupElement":
        return cls(I_POINT, 0.0)

    @classmethod
    def rotation(cls, theta: float) -> "GroupElement":
        return cls(I_POINT, theta)

    @classmethod
    def from_point(cls, z: PlanePoint) -> "GroupElement":
        return cls(z, 0.0)


@dataclass(frozen=True)
class ProductGroupElement:
    """Element of the d-fold product group, one GroupElement per factor."""

    factors: tuple[GroupElement, ...]

    def __post_init__(self):
        if len(self.factors) < 1:
            raise ValueError("need at least one factor")
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def d(self) -> int:
        return len(self.factors)

    @classmethod
    def identity(cls, d: int) -> "ProductGroupElement":
        return cls(tuple(GroupElement.identity() for _ in range(d)))


@dataclass(frozen=True)
class EnergyVector:
    """Nonnegative per-factor energies; on a shell they sum to one."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if any(v < 0 or not math.isfinite(v) for v in vals):
            raise ValueError(f"energies must be finite and nonnegative: {vals}")
        object.__setattr__(self, "values", vals)

    @property
    def d(self) -> int:
        return len(self.values)

    def is_shell(self, tol: float = 1e-12) -> bool:
        return abs(sum(self.values) - 1.0) <= tol

    @classmethod
    def shell(cls, values) -> "EnergyVector":
        e = cls(tuple(values))
        if not e.is_shell():
            raise ValueError(f"shell energies must sum to 1, got {sum(e.values)}")
        return e


def mobius_act(g: GroupElement, w: PlanePoint) -> PlanePoint:
    """Apply the fractional linear map of g to w; the image height is
    positive for any real matrix of positive determinant."""
    m = g.matrix()
    return apply_matrix(m, w)


def apply_matrix(m: np.ndarray, w: PlanePoint) -> PlanePoint:
    a, b, c, d = float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1])
    z = w.z
    denom = c * z + d
    img = (a * z + b) / denom
    return PlanePoint(img.real, img.imag)


def hyperbolic_distance(z1: PlanePoint, z2: PlanePoint) -> float:
    """Distance for curvature -1: cosh d = 1 + |z1 - z2|^2 / (2 y1 y2)."""
    dx = z1.x - z2.x
    dy = z1.y - z2.y
    arg = 1.0 + (dx * dx + dy * dy) / (2.0 * z1.y * z2.y)
    return math.acosh(max(arg, 1.0))


def distance_to_i(z: PlanePoint) -> float:
    return hyperbolic_distance(z, I_POINT)


def decompose_pk(mat: np.ndarray, det_tol: float | None = 1e-6) -> GroupElement:
    """Factor a (projective) SL(2, R) matrix as p_z k_theta.

    The rotation part is read off the bottom row, the point as the image of
    i.  With det_tol set, matrices whose determinant differs from 1 by more
    than the tolerance are rejected; pass None to skip the check (internal
    callers that renormalize exactly).  The matrix is rescaled by
    1/sqrt(det) either way, so mild round-off does not leak into the
    coordinates.
    """
    m = np.asarray(mat, dtype=float)
    if m.shape != (2, 2):
        raise DecompositionError(f"expected a 2x2 matrix, got shape {m.shape}")
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if not math.isfinite(det) or det <= 0:
        raise DecompositionError(f"matrix determinant {det} is not positive")
    if det_tol is not None and abs(det - 1.0) > det_tol:
        raise DecompositionError(
            f"matrix determinant {det} differs from 1 by more than {det_tol}"
        )
    m = m / math.sqrt(det)
    c, dd = m[1, 0], m[1, 1]
    theta = math.atan2(-c, dd)
    z = apply_matrix(m, I_POINT)
    return GroupElement(z, theta)


def decompose_pk_arrays(a, b, c, d):
    """Vectorized p*k factorization from matrix entries (det assumed 1).

    Returns (x, y, theta) arrays: y = 1/(c^2 + d^2), z = M(i), theta mod pi.
    """
    denom2 = c * c + d * d
    y = 1.0 / denom2
    x = (b * d + a * c) / denom2
    theta = np.mod(np.arctan2(-c, d), np.pi)
    return x, y, theta


def compose(g1: GroupElement, g2: GroupElement) -> GroupElement:
    """Group product g1 * g2 via matrix multiplication."""
    return decompose_pk(g1.matrix() @ g2.matrix(), det_tol=None)


def flow_matrix(t: float) -> np.ndarray:
    return np.array([[math.exp(t), 0.0], [0.0, math.exp(-t)]])


def geodesic_flow(
    g: ProductGroupElement, E: EnergyVector, t: float
) -> ProductGroupElement:
    """Right action of the energy-E geodesic flow at time t.

    Factor j is multiplied on the right by diag(e^{s}, e^{-s}) with
    s = sqrt(E_j) t and re-factored into p*k form.  Exponentials stay
    representable for |sqrt(E_j) t| <= ~700; practical accuracy holds for
    |t| <= 10 at unit energies.
    """
    if E.d != g.d:
        raise ValueError(f"energy dimension {E.d} != group dimension {g.d}")
    if not math.isfinite(t):
        raise ValueError("flow time must be finite")
    out = []
    for gj, ej in zip(g.factors, E.values):
        s = math.sqrt(ej) * t
        if s == 0.0:
            out.append(gj)
            continue
        m = gj.matrix() @ flow_matrix(s)
        out.append(decompose_pk(m, det_tol=None))
    return ProductGroupElement(tuple(out))


def group_coordinates_arrays(x, y, theta):
    """Vectorized matrix entries of p_z k_theta.

    p_z k_theta = [[sy*ct - (x/sy)*st, sy*st + (x/sy)*ct],
                   [-st/sy,            ct/sy]]
    """
    ct, st = np.cos(theta), np.sin(theta)
    sy = np.sqrt(y)
    a = sy * ct - (x / sy) * st
    b = sy * st + (x / sy) * ct
    c = -st / sy
    d = ct / sy
    return a, b, c, d


def flow_coordinates_arrays(x, y, theta, t: float):
    """Vectorized single-factor flow: coordinates of p_z k_theta * A(t)."""
    a, b, c, d = group_coordinates_arrays(x, y, theta)
    et, emt = math.exp(t), math.exp(-t)
    return decompose_pk_arrays(a * et, b * emt, c * et, d * emt)
