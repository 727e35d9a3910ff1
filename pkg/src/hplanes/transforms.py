"""K-type transforms on the hyperbolic plane and the product quantization.

The n-spherical transform pairs a compactly supported K-type-n function
against the generalized spherical function,

    S_n(f)(r) = int_H f(z) Phi_{r,-n}(z) dz,

with inversion (1/2pi) int_0^inf h(r) Phi_{-r,n}(z) r tanh(pi r) dr; the
transform maps onto the Paley-Wiener space PW_n, and a window of uniform
exponential type R inverts to a function supported in d(z, i) < R.  The
Helgason-Fourier transform f~(r, k) = int f(z) phi_{-r}(k^{-1} z) dz
restricts on K-type-n functions to chi_n(k) S_n f(-r).

Geometry conventions: a point z decomposes as z = k_alpha(i e^s) with
s = d(z, i) and alpha read from the disc coordinate u = (z-i)/(z+i) via
u(k_alpha z) = e^{2 i alpha} u(z); a K-type-n function is therefore
(u/|u|)^n times a radial profile, and its transform reduces to the radial
integral 2 pi int F(s) Phi_{r,-n}(i e^s) sinh(s) ds.  The 2D "plane" path
integrates dx dy / y^2 over a bounding box of the support and serves as an
independent cross-check of the radial path.

Convolution against f in C_n^infty and the product quantization: for a
product symbol a(g) h(r) with h_j in PW_{n_j}, the operator acts as
Op(a) phi(z) = a(p_z) (L[f_1] x ... x L[f_d] phi)(z) with f_j the inverse
transform of h_j; its diagonal matrix element against a joint
eigenfunction equals h(r) <a phi_{-n}, phi_0>, computed here by two
independent routes.

All operations are pure once the radial interpolation tables of a
constructed convolution kernel are built (initialize-then-share).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .geometry import GroupElement, PlanePoint, distance_to_i
from .lie_operators import (
    BoxDomain,
    LiftSequence,
    ModelEigenfunction,
    SmoothObservable,
    build_lift,
    pairing,
)
from .quadrature import composite_gauss, gauss_legendre, periodic_rule
from .special_functions import eval_spherical_heights
from .windows import WindowFunction, functional_equation_residual

SUPPORT_ESCAPE_TOL = 1e-12


class SupportEscapeError(ValueError):
    """Function mass leaks through the quadrature domain boundary."""


class TailDecayError(ValueError):
    """Window does not decay as declared at the truncation radius."""


class DomainCoverageError(ValueError):
    """Convolution domain does not cover the kernel support."""


def disc_coordinates(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(s, u) with s = d(z, i) and u = (z - i)/(z + i) the disc coordinate."""
    z = np.asarray(z, dtype=complex)
    u = (z - 1j) / (z + 1j)
    au = np.abs(u)
    s = 2.0 * np.arctanh(np.minimum(au, 1.0 - 1e-16))
    return s, u


@dataclass(frozen=True)
class KTypeFunction:
    """Smooth compactly supported function with f(k_a z) = e^{2 i n a} f(z).

    Defined by its radial profile F(s) = f(i e^s) on s >= 0; values
    elsewhere follow from equivariance: f = (u/|u|)^n F(d(z, i)).
    """

    n: int
    R_supp: float
    radial: Callable[[np.ndarray], np.ndarray]

    def __call__(self, z) -> np.ndarray:
        scalar = np.isscalar(z) or np.ndim(z) == 0
        zz = np.atleast_1d(np.asarray(z, dtype=complex))
        s, u = disc_coordinates(zz)
        vals = np.asarray(self.radial(s), dtype=complex)
        if self.n != 0:
            au = np.abs(u)
            phase = np.ones_like(u)
            ok = au > 1e-300
            phase[ok] = (u[ok] / au[ok]) ** self.n
            vals = vals * phase
        return complex(vals[0]) if scalar else vals


def ktype_bump(n: int, R: float = 2.0, sigma: float = 0.2) -> KTypeFunction:
    """Reference bump in C_n^infty: Gaussian radial core, compact support.

    F(s) = tanh(s/2)^{|n|} exp(-(s/sigma)^2/2) c(s) with c a smooth cutoff
    transitioning on [0.75 R, R].  The Gaussian is ~ 6e-13 where the cutoff
    starts to act (at the defaults), so the spherical transform decays at
    the Gaussian rate exp(-(r sigma)^2/2) down to that floor.  The
    tanh^{|n|} factor is |u|^{|n|}, which together with the K-type phase
    makes f = u^n * (smooth radial in |u|^2), i.e. genuinely smooth at i.
    """
    nn = abs(int(n))
    cut = _SmoothCutoff(R)

    def profile(s):
        s = np.asarray(s, dtype=float)
        out = np.exp(-0.5 * (s / sigma) ** 2) * cut(s)
        if nn:
            out = out * np.tanh(s / 2.0) ** nn
        return out

    return KTypeFunction(n=int(n), R_supp=float(R), radial=profile)


@dataclass(frozen=True)
class _SmoothCutoff:
    """Even C^inf cutoff: 1 near 0, 0 beyond R, transition on [lo_frac R, R]."""

    R: float
    lo_frac: float = 0.75

    def __call__(self, s):
        s = np.abs(np.asarray(s, dtype=float))
        out = np.zeros_like(s)
        lo, hi = self.lo_frac * self.R, self.R
        out[s <= lo] = 1.0
        mid = (s > lo) & (s < hi)
        t = (s[mid] - lo) / (hi - lo)
        a = np.exp(-1.0 / (1.0 - t))  # smooth partition step
        b = np.exp(-1.0 / t)
        out[mid] = a / (a + b)
        return out


def support_box(center: complex, radius: float) -> tuple[float, float, float, float]:
    """Bounding rectangle of the disc d(z, center) <= radius.

    The affine isometry z -> x0 + y0 z maps the unit-center disc to the
    disc around center = x0 + i y0, so the box is x0 +- y0 sinh(R),
    y0 e^{+-R}.
    """
    x0, y0 = center.real, center.imag
    return (
        x0 - y0 * math.sinh(radius),
        x0 + y0 * math.sinh(radius),
        y0 * math.exp(-radius),
        y0 * math.exp(radius),
    )


def _plane_grid(center: complex, radius: float, nodes: int):
    x_lo, x_hi, y_lo, y_hi = support_box(center, radius)
    x, wx = gauss_legendre(x_lo, x_hi, nodes)
    u, wu = gauss_legendre(math.log(y_lo), math.log(y_hi), nodes)
    y = np.exp(u)
    X, Y = np.meshgrid(x, y, indexing="ij")
    W = np.outer(wx, wu / y)  # dx dy / y^2 through the log map
    return X.ravel(), Y.ravel(), W.ravel()


def spherical_values(r, n: int, z: np.ndarray, node_count: int | None = None):
    """Phi_{r,n} at an array of points via rotation quadrature."""
    z = np.asarray(z, dtype=complex)
    rr = complex(r)
    if node_count is None:
        node_count = max(256, 16 * int(math.ceil(abs(rr))) )
    theta, w = periodic_rule(node_count)
    denom = z[:, None] * np.sin(theta)[None, :] + np.cos(theta)[None, :]
    heights = z.imag[:, None] / np.abs(denom) ** 2
    char = np.exp(2j * n * theta) * w / math.pi
    return np.exp((1j * rr + 0.5) * np.log(heights)) @ char


def spherical_transform(
    f: KTypeFunction,
    r,
    method: str = "plane",
    nodes: int = 96,
    radial_nodes: int = 320,
) -> complex:
    """S_n(f)(r) by 2D plane quadrature or the radial reduction.

    The plane path integrates f(z) Phi_{r,-n}(z) dx dy / y^2 over the
    support's bounding box and checks that no mass escapes it; the radial
    path uses 2 pi int F(s) Phi_{r,-n}(i e^s) sinh(s) ds.  The two
    coordinate systems are mutually independent cross-checks.
    """
    rs = np.atleast_1d(np.asarray(r, dtype=complex))
    out = spherical_transform_many(f, rs, method=method, nodes=nodes,
                                   radial_nodes=radial_nodes)
    return complex(out[0]) if np.isscalar(r) or np.ndim(r) == 0 else out


def spherical_transform_many(
    f: KTypeFunction,
    rs: np.ndarray,
    method: str = "plane",
    nodes: int = 96,
    radial_nodes: int = 320,
) -> np.ndarray:
    rs = np.asarray(rs, dtype=complex)
    r_peak = float(np.max(np.abs(rs))) if rs.size else 1.0
    if method == "radial":
        s, ws = gauss_legendre(0.0, f.R_supp, radial_nodes)
        prof = np.asarray(f.radial(s), dtype=complex)
        theta_nodes = max(256, 16 * int(math.ceil(r_peak + 1)))
        phi = eval_spherical_heights(rs, -f.n, s, theta_nodes)
        return 2.0 * math.pi * phi @ (prof * np.sinh(s) * ws)
    if method != "plane":
        raise ValueError(f"unknown method {method!r}")
    X, Y, W = _plane_grid(1j, f.R_supp, nodes)
    Z = X + 1j * Y
    fv = f(Z)
    peak = float(np.max(np.abs(fv))) + 1e-300
    edge = _boundary_max(f, f.R_supp)
    if edge > SUPPORT_ESCAPE_TOL * peak:
        raise SupportEscapeError(
            f"|f| = {edge:.3g} at the support boundary exceeds "
            f"{SUPPORT_ESCAPE_TOL} * peak"
        )
    theta_nodes = max(256, 16 * int(math.ceil(r_peak + 1)))
    theta, wt = periodic_rule(theta_nodes)
    denom = Z[:, None] * np.sin(theta)[None, :] + np.cos(theta)[None, :]
    log_h = np.log(Y[:, None] / np.abs(denom) ** 2)
    char = np.exp(-2j * f.n * theta) * wt / math.pi
    out = np.empty(rs.shape, dtype=complex)
    base = fv * W
    for i, rr in enumerate(rs):
        phi_vals = np.exp((1j * rr + 0.5) * log_h) @ char
        out[i] = np.sum(base * phi_vals)
    return out


def _boundary_max(f: KTypeFunction, radius: float) -> float:
    s = np.full(64, radius)
    alpha = np.linspace(0.0, math.pi, 64, endpoint=False)
    z = _polar_points(s, alpha)
    return float(np.max(np.abs(f(z))))


def _polar_points(s: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """z = k_alpha (i e^s) from geodesic polar coordinates."""
    w = 1j * np.exp(s)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return (w * ca + sa) / (-w * sa + ca)


def transform_window(f: KTypeFunction, r_max: float = 46.0,
                     grid_points: int = 1401) -> WindowFunction:
    """Tabulate S_n f on [0, r_max] and wrap it as a window function.

    Values beyond the table are clamped to zero, which is exact to the
    table's own floor for transforms that have decayed by r_max (checked:
    the last tabulated value must sit below 1e-12 of the peak).  Only real
    evaluation points are supported; this is the natural carrier for
    round-trip tests of the inversion formula.
    """
    rg = np.linspace(0.0, float(r_max), grid_points)
    hv = spherical_transform_many(f, rg, method="radial")
    peak = float(np.abs(hv).max())
    if abs(hv[-1]) > 1e-12 * peak:
        raise TailDecayError(
            f"transform has not decayed by r_max={r_max}: "
            f"|h| = {abs(hv[-1]):.3g} vs peak {peak:.3g}"
        )
    spr = CubicSpline(rg, hv.real)
    spi = CubicSpline(rg, hv.imag)

    def _eval(arr: np.ndarray) -> np.ndarray:
        if np.any(arr.imag != 0.0):
            raise ValueError("tabulated window supports real arguments only")
        x = np.abs(arr.real)
        out = np.zeros_like(arr, dtype=complex)
        inside = x <= r_max
        out[inside] = spr(x[inside]) + 1j * spi(x[inside])
        if f.n != 0:
            # h(-r) = (P_n(-2ir)/P_n(2ir)) h(r): restore odd-side values
            # at x = -r: h(x) = P_n(2ix)/P_n(-2ix) h(r) by the functional eq.
            neg = (arr.real < 0) & inside
            if np.any(neg):
                from .windows import p_pair

                num, den = p_pair(arr[neg], f.n)
                out[neg] = out[neg] * num / den
        return out

    return WindowFunction(n=f.n, exponential_type=f.R_supp, L=0.0, delta=None,
                          kind="generic", _eval=_eval)


def _tail_budget(h: WindowFunction, r_max: float) -> tuple[float, float]:
    """(estimated tail integral beyond r_max, scale of the full integral).

    The tail of int |h(r)| r dr is estimated from samples on
    [r_max, 1.3 r_max] extended by the last measured e-folding length; the
    scale is a coarse quadrature of the same integrand up to r_max.
    """
    rs_in = np.linspace(0.0, r_max, 160)
    scale = float(np.trapz(np.abs(h(rs_in.astype(complex))) * rs_in, rs_in))
    rs_out = np.linspace(r_max, 1.3 * r_max, 24)
    vals = np.abs(h(rs_out.astype(complex))) + 1e-300
    seg = float(np.trapz(vals * rs_out, rs_out))
    drop = math.log(vals[0] / vals[-1]) if vals[-1] < vals[0] else 0.1
    efold = 0.3 * r_max / max(drop, 0.1)
    tail = seg + vals[-1] * rs_out[-1] * efold
    return tail, scale + 1e-300


def default_r_max(h: WindowFunction, tail_tol: float = 1e-9) -> float:
    """Smallest truncation radius (on a coarse grid) meeting the tail budget."""
    base = max(2.0 * h.L + 20.0, 30.0)
    for r_max in base * np.array([1.0, 1.5, 2.25, 3.5, 5.0, 8.0]):
        tail, scale = _tail_budget(h, float(r_max))
        if tail <= tail_tol * scale:
            return float(r_max)
    return float(base * 8.0)


def inverse_spherical_transform(
    h: WindowFunction,
    z,
    r_max: float | None = None,
    nodes_per_unit: float = 2.0,
    tail_tol: float = 1e-9,
):
    """S_n^{-1} h at one or many points by truncated r-quadrature.

    The integrand h(r) Phi_{-r,n}(z) r tanh(pi r) oscillates in r at rate
    d(z, i), so the composite Gauss panels scale with the largest requested
    radius; the truncation radius must meet the declared-decay tail budget
    (measured tail integral below tail_tol times the integral scale).
    """
    scalar = np.isscalar(z) or isinstance(z, PlanePoint) or np.ndim(z) == 0
    if isinstance(z, PlanePoint):
        zz = np.atleast_1d(z.z)
    else:
        zz = np.atleast_1d(np.asarray(z, dtype=complex))
    if r_max is None:
        r_max = default_r_max(h, tail_tol)
    tail, scale = _tail_budget(h, float(r_max))
    if tail > tail_tol * scale:
        raise TailDecayError(
            f"estimated tail {tail:.3g} beyond r_max={r_max} exceeds "
            f"{tail_tol} * scale {scale:.3g}; window does not decay as declared"
        )
    s, u = disc_coordinates(zz)
    s_max = float(np.max(s))
    # 16-node Gauss panels spanning at most ~pi of integrand phase each
    panel = 2.0 * math.pi / (nodes_per_unit * (s_max + 0.5))
    rq, wq = composite_gauss(0.0, float(r_max), panel_width=panel, nodes_per_panel=16)
    hv = h(rq.astype(complex))
    weight = hv * rq * np.tanh(math.pi * rq) * wq / (2.0 * math.pi)
    theta_nodes = max(256, 16 * int(math.ceil(r_max + 1)))
    phi = eval_spherical_heights(-rq, h.n, s, theta_nodes)  # (r, z)
    vals = weight @ phi
    if h.n != 0:
        au = np.abs(u)
        phase = np.ones_like(u)
        ok = au > 1e-300
        phase[ok] = (u[ok] / au[ok]) ** h.n
        vals = vals * phase
    return complex(vals[0]) if scalar else vals


def helgason_fourier(f, r, alpha: float, nodes: int = 96,
                     R_supp: float | None = None) -> complex:
    """f~(r, k_alpha) = int f(z) phi_{-r}(k_alpha^{-1} z) dz.

    f is any smooth compactly supported callable on complex points; for a
    KTypeFunction the support radius is taken from the function itself.
    """
    if R_supp is None:
        if not isinstance(f, KTypeFunction):
            raise DomainCoverageError("R_supp required for generic functions")
        R_supp = f.R_supp
    X, Y, W = _plane_grid(1j, R_supp, nodes)
    Z = X + 1j * Y
    ca, sa = math.cos(-alpha), math.sin(-alpha)
    ZK = (Z * ca + sa) / (-Z * sa + ca)
    rr = complex(r)
    vals = np.asarray(f(Z), dtype=complex)
    return complex(np.sum(W * vals * np.exp((-1j * rr + 0.5) * np.log(ZK.imag))))


def convolution_operator(f: KTypeFunction, u: Callable, g: GroupElement,
                         nodes: int = 96) -> complex:
    """L[f]u(g) = int f(g^{-1} w) u(w) dw over the translated support."""
    z0 = _apply_matrix_complex(g.matrix(), 1j)
    X, Y, W = _plane_grid(z0, f.R_supp, nodes)
    ZW = X + 1j * Y
    m = g.matrix()
    inv = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])
    Zpre = (inv[0, 0] * ZW + inv[0, 1]) / (inv[1, 0] * ZW + inv[1, 1])
    fv = f(Zpre)
    uv = np.asarray(u(ZW), dtype=complex)
    return complex(np.sum(W * fv * uv))


def _apply_matrix_complex(m: np.ndarray, z: complex) -> complex:
    return (m[0, 0] * z + m[0, 1]) / (m[1, 0] * z + m[1, 1])


def r_from_energy(E: float) -> complex:
    """Spectral parameter of the energy parametrization r = sqrt(E - 1/4)."""
    if E >= 0.25:
        return complex(math.sqrt(E - 0.25))
    return 1j * math.sqrt(0.25 - E)


# ---------------------------------------------------------------------------
# quantization


@dataclass(frozen=True)
class ProductSymbol:
    """Symbol a(g) h(r) = a(g) prod_j h_j(r_j) with h_j in PW_{n_j}.

    The observable's per-factor K-types must match the windows' n's; mixed
    symbols are decomposed into K-types by the caller.
    """

    a: SmoothObservable
    windows: tuple[WindowFunction, ...]

    def __post_init__(self):
        if len(self.windows) != self.a.d:
            raise ValueError("need one window per factor")

    @property
    def ktypes(self) -> tuple[int, ...]:
        return tuple(h.n for h in self.windows)


@dataclass
class RadialKernel:
    """Tabulated inverse transform f_j = S_n^{-1} h_j as a KTypeFunction.

    The radial profile is sampled on a uniform s grid and interpolated with
    a cubic spline; support radius = the window's exponential type.
    """

    window: WindowFunction
    s_points: int = 800
    r_max: float | None = None
    fn: KTypeFunction = field(init=False)

    def __post_init__(self):
        R = self.window.exponential_type
        s = np.linspace(0.0, R + 1e-9, self.s_points)
        # evaluate the inversion integral on the radial ray
        zray = 1j * np.exp(s)
        vals = inverse_spherical_transform(self.window, zray, r_max=self.r_max)
        sp_re = CubicSpline(s, vals.real)
        sp_im = CubicSpline(s, vals.imag)

        def profile(sq):
            sq = np.asarray(sq, dtype=float)
            out = np.zeros_like(sq, dtype=complex)
            inside = sq <= R
            out[inside] = sp_re(sq[inside]) + 1j * sp_im(sq[inside])
            return out

        self.fn = KTypeFunction(n=self.window.n, R_supp=float(R), radial=profile)


def quantize_expectation(
    sym: ProductSymbol,
    base: ModelEigenfunction,
    domain: BoxDomain,
    N: int | None = None,
    conv_nodes: int = 96,
    outer_nodes: int = 64,
    validate: bool = True,
) -> tuple[complex, complex]:
    """Diagonal matrix element of Op(a h) two ways.

    Returns (lhs, rhs): lhs integrates a(p_z) (x_j L[f_j] phi)(z)
    conj(phi(z)) with f_j the tabulated inverse transforms of the windows
    (the convolution route, never invoking the ladder); rhs is
    h(r) <a phi_{-n}, phi_0> from the lift closed form.  Agreement is the
    two-route consistency check; each route is the other's oracle.
    """
    if base.d != sym.a.d:
        raise ValueError("dimension mismatch between symbol and eigenfunction")
    if base.r.is_exceptional():
        raise ValueError("exceptional base not supported in quantization")
    for j, (fo, h) in enumerate(zip(sym.a.factors, sym.windows)):
        if len(fo.modes) != 1 or fo.modes[0][0] != h.n:
            raise ValueError(
                f"factor {j}: observable K-type {[m for m, _ in fo.modes]} "
                f"does not match window n={h.n}"
            )
    if validate:
        for h in sym.windows:
            xs = np.linspace(0.05, max(3.0 * h.L + 10.0, 20.0), 80)
            resid = functional_equation_residual(h, xs)
            scale = float(np.max(np.abs(h(xs.astype(complex))))) + 1e-300
            if resid > 1e-8 * max(1.0, scale):
                raise ValueError(
                    f"window (n={h.n}) functional-equation residual {resid:.3g}"
                )
    try:
        kernels = [RadialKernel(h) for h in sym.windows]
    except (TailDecayError, ValueError) as e:
        raise RuntimeError("building convolution kernels failed") from e
    n_vec = sym.ktypes
    hr = 1.0 + 0.0j
    for h, r_j in zip(sym.windows, base.r.r):
        hr *= h(complex(r_j))

    # rhs: lift route
    depth = max(abs(v) for v in n_vec) if n_vec else 0
    lift = build_lift(base, max(depth, 1), verify=False)
    minus_n = tuple(-v for v in n_vec)
    rhs = hr * pairing(lift[minus_n], lift[(0,) * base.d], sym.a, domain)

    # lhs: convolution route, factor by factor (product structure)
    try:
        lhs = _convolution_route(sym, base, kernels, domain, conv_nodes,
                                 outer_nodes)
    except SupportEscapeError as e:
        raise RuntimeError("convolution route failed") from e
    return lhs, rhs


def _convolution_route(sym, base, kernels, domain, conv_nodes, outer_nodes):
    """<Op(a) phi, phi> by explicit per-factor convolutions.

    For each term pair (m, m') of the model eigenfunction the integrand
    factorizes across the d planes; each factor is an outer z-integral over
    the observable support of a(p_z) (L[f_j] phi_m^j)(z) conj(phi_m'^j(z)).
    """
    d = base.d
    coeffs = np.array([c for c, _ in base.terms])
    n_terms = len(coeffs)
    factor_mats = []
    for j in range(d):
        box = domain.boxes[j]
        x, wx = gauss_legendre(box.x_min, box.x_max, outer_nodes)
        uu, wu = gauss_legendre(math.log(box.y_min), math.log(box.y_max),
                                outer_nodes)
        y = np.exp(uu)
        X, Y = np.meshgrid(x, y, indexing="ij")
        WZ = np.outer(wx, wu / y).ravel()
        Z = (X + 1j * Y).ravel()
        av = sym.a.factor_values(j, X.ravel(), Y.ravel(),
                                 np.zeros(Z.size))
        r_j = base.r.r[j]
        mat = np.empty((n_terms, n_terms), dtype=complex)
        conv_cache = {}
        for m, (_, alphas) in enumerate(base.terms):
            al = alphas[j]
            if al not in conv_cache:
                conv_cache[al] = _lf_on_grid(kernels[j], r_j, al, Z,
                                             conv_nodes)
            conv_vals = conv_cache[al]
            for mp, (_, alphas_p) in enumerate(base.terms):
                phi_mp = _phi_values(r_j, alphas_p[j], Z)
                mat[m, mp] = np.sum(WZ * av * conv_vals * np.conj(phi_mp))
        factor_mats.append(mat)
    total = 0.0 + 0.0j
    for m in range(n_terms):
        for mp in range(n_terms):
            prod = coeffs[m] * np.conj(coeffs[mp])
            for j in range(d):
                prod *= factor_mats[j][m, mp]
            total += prod
    return complex(total)


def _phi_values(r: complex, alpha: float, Z: np.ndarray) -> np.ndarray:
    ca, sa = math.cos(alpha), math.sin(alpha)
    ZR = (Z * ca + sa) / (-Z * sa + ca)
    return np.exp((1j * r + 0.5) * np.log(ZR.imag))


def _lf_on_grid(kernel: RadialKernel, r: complex, alpha: float,
                Z: np.ndarray, nodes: int) -> np.ndarray:
    """(L[f] phi_r(k_alpha .))(z) on a grid of outer points z.

    The w-integral runs over the kernel support translated to each z; the
    quadrature grid is built per outer point in the disc model of the
    translate (an affine map), so the node count is uniform in z.
    """
    f = kernel.fn
    R = f.R_supp
    out = np.empty(Z.shape, dtype=complex)
    # reference grid on the unit-center disc bounding box; substituting
    # w = p_z(w') and using dw/y^2 invariance leaves f evaluated on the
    # reference grid for every outer point
    X0, Y0, W0 = _plane_grid(1j, R, nodes)
    base = W0 * f(X0 + 1j * Y0)
    for i, z0 in enumerate(Z):
        ZW = z0.real + z0.imag * (X0 + 1j * Y0)
        out[i] = np.sum(base * _phi_values(r, alpha, ZW))
    return out
