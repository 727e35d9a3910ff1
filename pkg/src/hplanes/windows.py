"""Paley-Wiener window constructions.

PW_n(C) is the space of entire functions of uniform exponential type
satisfying P_n(2ir) h(-r) = P_n(-2ir) h(r).  Windows built here:

* ``smoothed_indicator`` -- 1_delta, the unit indicator mollified by the
  scaled kernel rho_delta.  The kernel rho is pinned down concretely as the
  normalized inverse transform of (beta * beta)(t)/(beta * beta)(0) with
  beta a standard bump on [-1/2, 1/2]; the self-convolution on the Fourier
  side makes rho nonnegative on the real line, even, of exponential type 1,
  with unit mass.
* ``make_correction`` -- F_delta, an entire interpolation function equal to
  1 at prescribed points i*m/2 on the imaginary axis and O(delta) on the
  real line, built from a sine-kernel partial-fraction sum.
* ``make_window`` -- h_{L,delta}, a delta-approximation of the indicator of
  [L - 1/2, L + 1/2] lying in PW_n; for n != 0 the correction function
  cancels the poles of the ratio P_n(2ix)/P_n(-2ix).
* ``pw_window`` -- a generic small-type PW_n window for transform tests.

Evaluation strategy: everything reduces to quadratures against two cached
tables, the Fourier-side profile rho_hat on [-1, 1] (used for complex
arguments) and the cumulative distribution of rho (used for fast real-line
evaluation).  Tables are built once per grid spec and persisted via
:mod:`hplanes.cache`; initialization must complete before concurrent use.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from . import cache
from .quadrature import gauss_legendre
from .special_functions import eval_p_n

_DEFAULT_GRID = {
    "t_points": 4001,  # rho_hat table on [0, 1]
    "v_points": 25001,  # rho table on [0, v_max]
    "v_max": 250.0,
    "conv_nodes": 512,  # Gauss nodes for the defining self-convolution
    "osc_nodes": 3072,  # Gauss nodes for the oscillatory inverse transform
}


class PoleProximityError(ArithmeticError):
    """Evaluation landed on an uncancelled pole (construction bug)."""


def _beta(t: np.ndarray) -> np.ndarray:
    """Standard bump supported on |t| < 1/2."""
    out = np.zeros_like(t, dtype=float)
    inside = np.abs(t) < 0.5
    ti = t[inside]
    out[inside] = np.exp(-1.0 / (0.25 - ti * ti))
    return out


class MollifierTables:
    """Cached tables defining the mollifier rho.

    ``rho_hat(t)`` is the normalized self-convolution of the bump (support
    [-1, 1], value 1 at 0); ``rho(v)`` its inverse Fourier transform under
    g(x) = (1/2pi) int ghat(t) e^{ixt} dt; ``rho_cdf`` the cumulative mass.
    The total-mass identity 2 * int_0^inf rho = rho_hat(0) = 1 is checked at
    build time, tying the two tables together.
    """

    def __init__(self, grid: dict | None = None):
        self.grid = dict(_DEFAULT_GRID if grid is None else grid)
        data = cache.load_arrays("mollifier", self.grid)
        if data is None:
            data = self._build()
            cache.save_arrays("mollifier", self.grid, data)
        self.t_grid = data["t_grid"]
        self.rho_hat_vals = data["rho_hat_vals"]
        self.v_grid = data["v_grid"]
        self.rho_vals = data["rho_vals"]
        self._hat_spline = CubicSpline(self.t_grid, self.rho_hat_vals)
        self._rho_spline = CubicSpline(self.v_grid, self.rho_vals)
        self._cdf_spline = self._rho_spline.antiderivative()
        self._half_mass = float(self._cdf_spline(self.v_grid[-1]))
        if abs(2.0 * self._half_mass - 1.0) > 1e-8:
            raise RuntimeError(
                f"mollifier mass check failed: 2*{self._half_mass} != 1"
            )

    def _build(self) -> dict:
        g = self.grid
        t_grid = np.linspace(0.0, 1.0, int(g["t_points"]))
        s_nodes, s_w = gauss_legendre(-0.5, 0.5, int(g["conv_nodes"]))
        beta_s = _beta(s_nodes)
        # (beta*beta)(t) = int beta(s) beta(t - s) ds, computed in chunks
        conv = np.empty_like(t_grid)
        chunk = 256
        for i in range(0, len(t_grid), chunk):
            tt = t_grid[i : i + chunk, None]
            conv[i : i + chunk] = (_beta(tt - s_nodes[None, :]) * beta_s) @ s_w
        conv /= conv[0]
        v_grid = np.linspace(0.0, float(g["v_max"]), int(g["v_points"]))
        tq, tw = gauss_legendre(0.0, 1.0, int(g["osc_nodes"]))
        hat_q = CubicSpline(t_grid, conv)(tq) * tw / math.pi
        rho_vals = np.empty_like(v_grid)
        for i in range(0, len(v_grid), 2048):
            vv = v_grid[i : i + 2048, None]
            rho_vals[i : i + 2048] = np.cos(vv * tq[None, :]) @ hat_q
        return {
            "t_grid": t_grid,
            "rho_hat_vals": conv,
            "v_grid": v_grid,
            "rho_vals": rho_vals,
        }

    def rho_hat(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        inside = np.abs(t) <= 1.0
        out[inside] = self._hat_spline(np.abs(t[inside]))
        return out

    def rho(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        out = np.zeros_like(v)
        inside = np.abs(v) <= self.v_grid[-1]
        out[inside] = self._rho_spline(np.abs(v[inside]))
        return out

    def rho_cdf(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        a = np.minimum(np.abs(v), self.v_grid[-1])
        half = self._cdf_spline(a) / (2.0 * self._half_mass)
        return np.where(v >= 0, 0.5 + half, 0.5 - half)

    def rho_complex(self, w) -> np.ndarray:
        """rho at complex arguments via the compactly supported transform."""
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        nodes = _osc_node_count(1.0, float(np.max(np.abs(w.real))) + 4.0)
        tq, tw = gauss_legendre(-1.0, 1.0, nodes)
        prof = self.rho_hat(tq) * tw / (2.0 * math.pi)
        return np.exp(1j * np.outer(w, tq)) @ prof


_tables_lock = threading.Lock()
_tables: MollifierTables | None = None


def mollifier_tables() -> MollifierTables:
    """Shared default tables (initialize-then-share)."""
    global _tables
    with _tables_lock:
        if _tables is None:
            _tables = MollifierTables()
        return _tables


def _osc_node_count(t_span: float, max_abs_re: float) -> int:
    """Nodes for int over |t| <= t_span of a smooth profile times e^{iwt}."""
    cycles = t_span * (max_abs_re + 2.0) / (2.0 * math.pi)
    return int(max(512, math.ceil(16 * cycles)))


@dataclass(frozen=True)
class WindowFunction:
    """An even-type analytic test function with window metadata.

    ``kind`` is one of "mollified-indicator" (plain 1_delta pair, n = 0),
    "corrected" (pole-cancelling construction, n != 0) or "generic".
    Callable on real or complex scalars and arrays.
    """

    n: int
    exponential_type: float
    L: float
    delta: float | None
    kind: str
    _eval: Callable = field(repr=False)

    def __call__(self, x):
        scalar = np.isscalar(x) or np.ndim(x) == 0
        arr = np.atleast_1d(np.asarray(x, dtype=complex))
        out = self._eval(arr)
        return complex(out[0]) if scalar else out


def smoothed_indicator(x, delta: float, tables: MollifierTables | None = None):
    """1_delta = rho_delta * indicator([-1/2, 1/2]) on the real line.

    Equals the difference of the rho CDF at the scaled endpoints; exact up
    to table interpolation error.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    tb = tables or mollifier_tables()
    x = np.asarray(x, dtype=float)
    return tb.rho_cdf((x + 0.5) / delta) - tb.rho_cdf((x - 0.5) / delta)


def smoothed_indicator_complex(w, delta: float, tables: MollifierTables | None = None):
    """1_delta continued to complex arguments.

    The transform of 1_delta is rho_hat(delta t) * 2 sin(t/2)/t supported on
    |t| <= 1/delta, so the continuation is a single compact quadrature; it
    agrees with the CDF path on the real line.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    tb = tables or mollifier_tables()
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    t_span = 1.0 / delta
    nodes = _osc_node_count(t_span, float(np.max(np.abs(w.real))) + 1.0)
    tq, tw = gauss_legendre(-t_span, t_span, nodes)
    sinc_half = np.where(np.abs(tq) < 1e-12, 1.0, 2.0 * np.sin(tq / 2.0) / tq)
    prof = tb.rho_hat(delta * tq) * sinc_half * tw / (2.0 * math.pi)
    return np.exp(1j * np.outer(w, tq)) @ prof


def make_mollifier(delta: float, tables: MollifierTables | None = None) -> WindowFunction:
    """The smoothed indicator 1_delta as a window object (around 0)."""
    tb = tables or mollifier_tables()

    def _eval(arr: np.ndarray) -> np.ndarray:
        if np.all(arr.imag == 0.0):
            return smoothed_indicator(arr.real, delta, tb).astype(complex)
        return smoothed_indicator_complex(arr, delta, tb)

    return WindowFunction(
        n=0,
        exponential_type=1.0 / delta,
        L=0.0,
        delta=delta,
        kind="mollified-indicator",
        _eval=_eval,
    )


class CorrectionFunction:
    """Entire interpolation function F_delta.

    F_delta(i m / 2) = 1 at the configured integer points m, and
    |F_delta| = O(delta) on the real line.  The generator

        G(x) = sin(x/delta) * prod_m (2x - i m) / (x/delta - m pi)

    vanishes at every interpolation point p_m = i m / 2 with a derivative of
    size ~ sinh(|m| / (2 delta)), and is bounded on R; the partial-fraction
    sum F = sum_m G(x) / (G'(p_m) (x - p_m)) interpolates.  Each term is
    evaluated with the factor (2x - im) = 2(x - p_m) cancelled
    algebraically, and the sine is paired with the nearest denominator zero
    x = delta m' pi, so there are no removable-singularity blowups.
    """

    def __init__(self, delta: float, n: int):
        if not 0.0 < delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {delta}")
        if n == 0:
            raise ValueError("correction is unused for n = 0")
        self.delta = float(delta)
        self.n = int(n)
        ms: set[int] = set()
        for m in range(1, abs(self.n) + 1):
            ms.update((m, -m))
        for m in range(1, 2 * abs(self.n), 2):
            ms.update((m, -m))
        self.points_m = tuple(sorted(ms))
        worst = max(abs(m) for m in self.points_m) / (2.0 * self.delta)
        if worst > 700.0:
            raise OverflowError(
                f"sinh({worst:.0f}) overflows; delta too small for |n|={abs(n)}"
            )
        self._gprime = {m: self._term_core(np.array([0.5j * m]), m)[0] for m in self.points_m}

    def _sine_kernel(self, u: np.ndarray) -> np.ndarray:
        """sin(u) / prod_m (u - m pi), singularities healed by pairing."""
        poles = np.array(self.points_m, dtype=float) * math.pi
        dist = np.abs(u[:, None] - poles[None, :])
        j0 = np.argmin(dist, axis=1)
        pole0 = poles[j0]
        m0 = np.asarray(self.points_m)[j0]
        du = u - pole0
        # sin(u) = (-1)^{m0} sin(du); ratio sin(du)/du via series near 0
        small = np.abs(du) < 1e-4
        ratio = np.empty_like(u)
        ratio[~small] = np.sin(du[~small]) / du[~small]
        ds = du[small]
        ratio[small] = 1.0 - ds * ds / 6.0 * (1.0 - ds * ds / 20.0)
        out = np.where(m0 % 2 == 0, 1.0, -1.0) * ratio
        for j, pole in enumerate(poles):
            div = np.where(j0 == j, 1.0, u - pole)  # paired factor already in ratio
            out = out / div
        return out

    def _term_core(self, x: np.ndarray, m: int) -> np.ndarray:
        """2 sin(x/d) prod_{m' != m} (2x - im') / prod_{m'} (x/d - m' pi).

        This equals G(x)/(x - p_m); at x = p_m it is exactly G'(p_m), so the
        interpolation property holds to machine precision by construction.
        """
        vals = 2.0 * self._sine_kernel(x / self.delta)
        for mp in self.points_m:
            if mp != m:
                vals = vals * (2.0 * x - 1j * mp)
        return vals

    def __call__(self, x):
        scalar = np.isscalar(x) or np.ndim(x) == 0
        arr = np.atleast_1d(np.asarray(x, dtype=complex))
        out = np.zeros_like(arr)
        for m in self.points_m:
            out = out + self._term_core(arr, m) / self._gprime[m]
        return complex(out[0]) if scalar else out


def make_correction(delta: float, n: int) -> CorrectionFunction:
    """Correction function for the K-type-n window construction.

    Interpolation points cover both |m| <= |n| and the odd integers up to
    2|n| - 1; the odd points sit exactly where P_n(-2ix) vanishes, so the
    (1 - F_delta) factors in ``make_window`` cancel every pole of the
    P_n ratio.
    """
    return CorrectionFunction(delta, n)


def p_pair(x: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """(P_n(2ix), P_n(-2ix)) evaluated factor-wise."""
    num = np.ones_like(x, dtype=complex)
    den = np.ones_like(x, dtype=complex)
    for k in range(abs(int(n))):
        num = num * (1j * x + 0.5 + k)
        den = den * (-1j * x + 0.5 + k)
    return num, den


def make_window(
    L: float, delta: float, n: int, tables: MollifierTables | None = None
) -> WindowFunction:
    """delta-approximating window around L in PW_n.

    n = 0:   h(x) = 1_delta(-x - L) + 1_delta(x - L)
    n != 0:  h(x) = (1 - F(x)) 1_delta(x - L)
                    + (P_n(2ix)/P_n(-2ix)) (1 - F(-x)) 1_delta(-x - L)

    The functional equation holds identically for either form; for n != 0
    the correction zeros cancel the ratio poles at x = -i(k + 1/2).  Near a
    pole the ratio term is evaluated as a divided-difference quotient of
    the two entire factors; a non-vanishing numerator within 1e-10 of a
    pole raises PoleProximityError.
    """
    if L < 0.5:
        raise ValueError(f"window center L must be >= 1/2, got {L}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    tb = tables or mollifier_tables()

    def ind(arr):
        if np.all(arr.imag == 0.0):
            return smoothed_indicator(arr.real, delta, tb).astype(complex)
        return smoothed_indicator_complex(arr, delta, tb)

    if n == 0:

        def _eval(arr: np.ndarray) -> np.ndarray:
            return ind(-arr - L) + ind(arr - L)

        return WindowFunction(
            n=0,
            exponential_type=1.0 / delta,
            L=float(L),
            delta=float(delta),
            kind="mollified-indicator",
            _eval=_eval,
        )

    corr = make_correction(delta, n)

    def mirrored(arr: np.ndarray) -> np.ndarray:
        return (1.0 - corr(-arr)) * ind(-arr - L)

    def _eval(arr: np.ndarray) -> np.ndarray:
        first = (1.0 - corr(arr)) * ind(arr - L)
        num, den = p_pair(arr, n)
        out = np.empty_like(arr)
        near = np.abs(den) < 1e-6
        ok = ~near
        out[ok] = first[ok] + num[ok] * mirrored(arr[ok]) / den[ok]
        if np.any(near):
            bad = arr[near]
            top = mirrored(bad)
            scale = np.abs(ind(-bad - L)) + 1.0
            at_pole = np.abs(den[near]) < 1e-10
            if np.any(at_pole & (np.abs(top) > 1e-8 * scale)):
                raise PoleProximityError(
                    "window numerator fails to vanish at a P_n ratio pole"
                )
            h = 1e-5
            dtop = (mirrored(bad + h) - mirrored(bad - h)) / (2.0 * h)
            _, den_p = p_pair(bad + h, n)
            _, den_m = p_pair(bad - h, n)
            dden = (den_p - den_m) / (2.0 * h)
            out[near] = first[near] + num[near] * dtop / dden
        return out

    return WindowFunction(
        n=int(n),
        exponential_type=2.0 / delta,
        L=float(L),
        delta=float(delta),
        kind="corrected",
        _eval=_eval,
    )


def pw_window(n: int, L: float, half_width: float = 1.0,
              tables: MollifierTables | None = None) -> WindowFunction:
    """Small-exponential-type window in PW_n (kind "generic").

    h(x) = P_n(2ix) (rho((x - L)/a) + rho((x + L)/a)) / |P_n(2iL)| with
    a = half_width is entire of type a and satisfies the functional
    equation because the symmetric rho pair is even.  Useful where a small
    support radius of the inverse transform matters more than a sharp
    window profile.
    """
    tb = tables or mollifier_tables()
    a = float(half_width)
    scale = abs(eval_p_n(2j * L, n))
    scale = scale if scale > 0 else 1.0

    def _eval(arr: np.ndarray) -> np.ndarray:
        if np.all(arr.imag == 0.0):
            pair = (tb.rho((arr.real - L) / a) + tb.rho((arr.real + L) / a)).astype(complex)
        else:
            pair = tb.rho_complex((arr - L) / a) + tb.rho_complex((arr + L) / a)
        num, _ = p_pair(arr, n)
        return num * pair / scale

    return WindowFunction(
        n=int(n),
        exponential_type=a,
        L=float(L),
        delta=None,
        kind="generic",
        _eval=_eval,
    )


def functional_equation_residual(h: WindowFunction, xs) -> float:
    """max |P_n(2ix) h(-x) - P_n(-2ix) h(x)| over a real grid."""
    xs = np.asarray(xs, dtype=float)
    num, den = p_pair(xs.astype(complex), h.n)
    lhs = num * h(-xs)
    rhs = den * h(xs)
    return float(np.max(np.abs(lhs - rhs)))


def exponential_type_excess(h: WindowFunction, x_max: float = 30.0) -> float:
    """Measured strip growth rate minus the declared exponential type.

    Compares the sup of |h| on the line Im = 1 against the sup on R; for a
    function of uniform exponential type R the ratio is bounded by ~ e^R.
    Positive return values flag a declared-type violation.
    """
    xs = np.linspace(0.0, x_max, 121)
    sup_real = float(np.max(np.abs(h(xs.astype(complex)))))
    sup_up = float(np.max(np.abs(h(xs + 1j))))
    if sup_real <= 0:
        return float("-inf")
    return math.log(sup_up / sup_real) - h.exponential_type
