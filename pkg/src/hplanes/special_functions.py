"""Spherical building blocks on the hyperbolic plane.

phi_r(x + iy) = y^{ir + 1/2} is the elementary Laplacian eigenfunction with
eigenvalue 1/4 + r^2; averaging it against the rotation character
chi_n(k_theta) = e^{2 i n theta} over the stabilizer of i yields the
generalized spherical function

    Phi_{r,n}(z) = (1/pi) int_0^pi phi_r(k_{-theta} z) e^{2 i n theta} dtheta.

Phi_{r,n} and Phi_{-r,n} share the eigenvalue and K-type, so they agree up
to the explicit ratio P_n(2ir)/P_n(-2ir) of rising products; for large real
r the rotation average is an oscillatory integral whose two nondegenerate
critical points force |Phi_{r,n}(z)| to decay like r^{-1/2} away from i,
with an amplitude beating at frequency d(z, i) in r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import PlanePoint, distance_to_i
from .quadrature import QuadratureSpec, periodic_rule

POLE_GUARD = 1e-12


class ResolutionError(ValueError):
    """Rotation quadrature too coarse for the requested oscillation."""


class FitError(ValueError):
    """Decay-exponent fit is degenerate (underflow or bad grid)."""


def _as_complex(r) -> complex:
    return complex(r)


@dataclass(frozen=True)
class SpectralPoint:
    """Vector of spectral parameters; each component real or purely
    imaginary with |Im| < 1/2 so every eigenvalue 1/4 + r^2 is positive."""

    r: tuple[complex, ...]

    def __post_init__(self):
        vals = tuple(complex(v) for v in self.r)
        for v in vals:
            if v.real != 0.0 and v.imag != 0.0:
                raise ValueError(f"component {v} is neither real nor imaginary")
            if v.real == 0.0 and not abs(v.imag) < 0.5:
                raise ValueError(f"imaginary component {v} must have |Im| < 1/2")
        object.__setattr__(self, "r", vals)

    @property
    def d(self) -> int:
        return len(self.r)

    @property
    def eigenvalues(self) -> tuple[float, ...]:
        return tuple(0.25 + (v * v).real for v in self.r)

    def is_exceptional(self) -> bool:
        return any(v.real == 0.0 and v.imag != 0.0 for v in self.r)


@dataclass(frozen=True)
class KType:
    """Integer vector indexing the rotation characters chi_n."""

    n: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "n", tuple(int(v) for v in self.n))

    @property
    def d(self) -> int:
        return len(self.n)


def eval_phi_r(r, z: PlanePoint) -> complex:
    """y^{ir + 1/2} on the principal branch (y > 0)."""
    rr = _as_complex(r)
    return complex(np.exp((1j * rr + 0.5) * math.log(z.y)))


def phi_r_heights(r, y) -> np.ndarray:
    """Vectorized y^{ir + 1/2} for an array of heights."""
    rr = _as_complex(r)
    return np.exp((1j * rr + 0.5) * np.log(y))


def eval_p_n(x, n: int) -> complex:
    """Rising product P_n(x) = prod_{k=0}^{|n|-1} ((x+1)/2 + k); P_0 = 1."""
    xx = _as_complex(x)
    out = 1.0 + 0.0j
    base = (xx + 1.0) / 2.0
    for k in range(abs(int(n))):
        out *= base + k
    return out


def p_ratio(r, n: int) -> complex:
    """P_n(2ir) / P_n(-2ir) by factor-wise cancellation.

    Each factor is (ir + 1/2 + k)/(-ir + 1/2 + k); a vanishing denominator
    (possible only at exceptional imaginary r) raises instead of returning
    an overflowed quotient.
    """
    rr = _as_complex(r)
    out = 1.0 + 0.0j
    for k in range(abs(int(n))):
        num = 1j * rr + 0.5 + k
        den = -1j * rr + 0.5 + k
        if abs(den) < POLE_GUARD:
            raise ZeroDivisionError(
                f"P_{n}(-2ir) factor vanishes at r={rr} (k={k})"
            )
        out *= num / den
    return out


def rotated_heights(z: PlanePoint, theta: np.ndarray) -> np.ndarray:
    """Im(k_{-theta} z) = y / |z sin(theta) + cos(theta)|^2, vectorized."""
    zz = z.z
    denom = zz * np.sin(theta) + np.cos(theta)
    return z.y / np.abs(denom) ** 2


def _phase_derivative_bound(z: PlanePoint, samples: int = 128) -> float:
    """Crude max |d/dtheta log Im(k_{-theta} z)| used for the Nyquist guard."""
    theta = np.linspace(0.0, np.pi, samples, endpoint=False)
    ly = np.log(rotated_heights(z, theta))
    d = np.abs(np.diff(np.concatenate([ly, ly[:1]]))) / (np.pi / samples)
    return float(d.max())


def default_spherical_spec(r) -> QuadratureSpec:
    """Node count scaling with the oscillation frequency |r|."""
    rr = _as_complex(r)
    n = max(256, 16 * int(math.ceil(abs(rr))))
    return QuadratureSpec(node_count=n, scheme_id="trapezoid_periodic")


def required_nodes(r, z: PlanePoint) -> int:
    """Minimum rotation nodes: ~6 per oscillation cycle of the integrand."""
    rr = abs(_as_complex(r))
    cycles = rr * _phase_derivative_bound(z) / (2.0 * math.pi) * math.pi
    return max(64, int(math.ceil(6.0 * cycles)))


def eval_spherical(
    r, n: int, z: PlanePoint, quad: QuadratureSpec | None = None
) -> complex:
    """Rotation average Phi_{r,n}(z) by the uniform periodic rule."""
    if quad is None:
        quad = default_spherical_spec(r)
    need = required_nodes(r, z)
    if quad.node_count < need:
        raise ResolutionError(
            f"{quad.node_count} rotation nodes < {need} required for "
            f"|r|={abs(complex(r)):.3g} at d(z,i)={distance_to_i(z):.3g}"
        )
    theta, w = periodic_rule(quad.node_count)
    heights = rotated_heights(z, theta)
    rr = _as_complex(r)
    vals = np.exp((1j * rr + 0.5) * np.log(heights) + 2j * n * theta)
    return complex(np.sum(vals * w) / math.pi)


def eval_spherical_heights(rs: np.ndarray, n: int, s: np.ndarray, node_count: int):
    """Phi_{r,n}(i e^s) for grids of spectral parameters and radii.

    Returns an array of shape (len(rs), len(s)).  This is the workhorse for
    radial transforms: on the imaginary axis the rotated height is
    y / (sin^2(theta)(y^2 - 1) + 1) with y = e^s.
    """
    rs = np.asarray(rs, dtype=complex)
    s = np.asarray(s, dtype=float)
    theta, w = periodic_rule(node_count)
    y = np.exp(s)
    denom = np.sin(theta)[None, :] ** 2 * (y[:, None] ** 2 - 1.0) + 1.0
    log_h = np.log(y)[:, None] - np.log(denom)  # (s, theta)
    char = np.exp(2j * n * theta) * w / math.pi  # (theta,)
    out = np.empty((len(rs), len(s)), dtype=complex)
    half = np.exp(0.5 * log_h)
    for i, r in enumerate(rs):
        osc = np.exp(1j * r * log_h)
        out[i] = (half * osc) @ char
    return out


def spherical_symmetry_residual(r: float, n: int, z: PlanePoint) -> float:
    """|Phi_{r,n}(z) - (P_n(2ir)/P_n(-2ir)) Phi_{-r,n}(z)|."""
    rr = float(r)
    if n != 0 and rr == 0.0:
        raise ValueError("r must be nonzero when n != 0")
    lhs = eval_spherical(rr, n, z)
    rhs = p_ratio(rr, n) * eval_spherical(-rr, n, z)
    return abs(lhs - rhs)


def beat_locked_r_grid(
    z: PlanePoint, r_min: float, r_max: float, points: int = 32, n: int = 0
) -> np.ndarray:
    """Arithmetic r grid locked to the amplitude beat of |Phi_{r,n}(z)|.

    The large-r amplitude oscillates with period pi / d(z, i); sampling at
    an integer multiple of that period freezes the oscillatory factor so a
    log-log fit sees the decay envelope alone.  The offset is chosen (by a
    coarse scan near r_min) away from the amplitude nulls.
    """
    s = distance_to_i(z)
    if s <= 0:
        raise ValueError("z must differ from i")
    period = math.pi / s
    mult = max(1, int(math.ceil((r_max - r_min) / (period * (points - 1)))))
    step = mult * period
    # scan one beat period for the offset with the largest amplitude
    probes = r_min + period * np.linspace(0.0, 1.0, 17, endpoint=False)
    amps = [abs(eval_spherical(rp, n, z)) for rp in probes]
    r0 = float(probes[int(np.argmax(amps))])
    grid = r0 + step * np.arange(points)
    return grid[grid <= r_max + 1e-9]


def decay_exponent_fit(n: int, z: PlanePoint, r_grid) -> float:
    """Least-squares slope of log |Phi_{r,n}(z)| against log r.

    Requires z away from i (the amplitude is constant there) and grid values
    >= 20 so the asymptotic regime applies.
    """
    if distance_to_i(z) < 0.05:
        raise ValueError("z too close to i: no stationary-phase decay there")
    r = np.asarray(r_grid, dtype=float)
    if r.size < 3 or np.any(np.diff(r) <= 0):
        raise ValueError("r_grid must be increasing with at least 3 points")
    if r[0] < 20.0:
        raise ValueError("r_grid minimum must be >= 20")
    vals = np.array([abs(eval_spherical(rr, n, z)) for rr in r])
    if np.any(vals < 1e-280):
        raise FitError("spherical values underflow; fit degenerate")
    slope, _ = np.polyfit(np.log(r), np.log(vals), 1)
    return float(slope)
