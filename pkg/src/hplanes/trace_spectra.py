"""Trace-formula terms, synthetic spectra, and eigenvalue counting.

The product-group Selberg trace formula pairs a spectral test function
h(r) = prod_j h_j(r_j) (each factor even, holomorphic in a strip) with
geometric data of conjugacy classes:

    sum_k h(r_k) = prod_j (1/4pi) int h_j(r) r tanh(pi r) dr
                   + sum_{classes} c_gamma prod_j h~_j(gamma_j)

where the per-factor orbital weight is hat{h}(l)/sinh(l/2) for a
hyperbolic factor of translation length l and
(1/sin t) int cosh((pi - 2t) r)/cosh(pi r) h(r) dr for an elliptic factor
of angle t.  The Fourier convention here is
hat{h}(t) = (1/2pi) int h(r) e^{-i r t} dr (the paper-side normalization
is absorbed into fitted harness constants and documented at every output).

Lattices themselves are out of scope: centralizer covolumes c_gamma are
caller-supplied inputs, and spectra are synthetic point sets generated
with the Weyl-consistent intensity c * r_1...r_d dr on a coordinate box,
optionally with exceptional (imaginary-coordinate) slabs of strictly lower
order, matching the density-zero behavior of exceptional eigenfunctions.

Generation is seeded and single-threaded for reproducibility; evaluators
are pure; window counting can be partitioned freely.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .quadrature import composite_gauss
from .windows import WindowFunction

PARABOLIC_TOL = 1e-12


class ParabolicElementError(ValueError):
    """|trace| = 2: excluded, co-compact lattices have no parabolics."""


class DecayHypothesisError(ValueError):
    """Test function violates the required strip decay."""


@dataclass(frozen=True)
class Hyperbolic:
    """Hyperbolic factor with translation length l > 0."""

    length: float

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"translation length must be positive: {self.length}")


@dataclass(frozen=True)
class Elliptic:
    """Elliptic factor with rotation angle in (0, pi)."""

    angle: float

    def __post_init__(self):
        if not 0.0 < self.angle < math.pi:
            raise ValueError(f"elliptic angle must lie in (0, pi): {self.angle}")


@dataclass(frozen=True)
class ConjugacyClassDatum:
    """Per-factor classification plus the centralizer covolume weight.

    No factor may be parabolic (irreducible co-compact lattices contain
    none); the covolume c_gamma is an input, never computed here.
    """

    factors: tuple
    c_gamma: float

    def __post_init__(self):
        if not self.factors:
            raise ValueError("need at least one factor")
        for f in self.factors:
            if not isinstance(f, (Hyperbolic, Elliptic)):
                raise TypeError(f"factor {f!r} is neither hyperbolic nor elliptic")
        if not self.c_gamma > 0:
            raise ValueError(f"centralizer covolume must be positive: {self.c_gamma}")

    @property
    def d(self) -> int:
        return len(self.factors)


def classify_element(trace: float):
    """Hyperbolic/elliptic classification of a PSL(2, R) element by trace.

    Hyperbolic: |tr| > 2, length l = 2 arccosh(|tr|/2); elliptic: |tr| < 2,
    angle arccos(|tr|/2) -- the conjugate rotation angle in (0, pi/2]
    modulo the projective identification.  Parabolic traces (within
    PARABOLIC_TOL of |tr| = 2) are rejected.
    """
    a = abs(float(trace)) / 2.0
    if abs(a - 1.0) <= PARABOLIC_TOL / 2.0:
        raise ParabolicElementError(f"trace {trace} is parabolic (|tr| = 2)")
    if a > 1.0:
        return Hyperbolic(length=2.0 * math.acosh(a))
    return Elliptic(angle=math.acos(a))


def _window_support_radius(h) -> float:
    L = getattr(h, "L", 0.0) or 0.0
    return max(2.0 * L + 30.0, 60.0)


def hat_transform(h, t: float, r_max: float | None = None) -> complex:
    """hat{h}(t) = (1/2pi) int_R h(r) e^{-i r t} dr by panel quadrature.

    Real and even in t for even real h.  The integrand must have decayed by
    the truncation radius; otherwise the decay violation is raised.
    """
    if r_max is None:
        r_max = _window_support_radius(h)
    panel = 2.0 * math.pi / (2.0 * (abs(t) + 0.5))
    rq, wq = composite_gauss(-r_max, r_max, panel_width=panel, nodes_per_panel=16)
    hv = np.asarray(h(rq.astype(complex)), dtype=complex)
    _check_decay(h, r_max)
    return complex(np.sum(hv * np.exp(-1j * rq * t) * wq) / (2.0 * math.pi))


def _check_decay(h, r_max: float, tol: float = 1e-8):
    edge = np.abs(np.asarray(h(np.array([r_max, -r_max], dtype=complex))))
    mid = np.abs(np.asarray(h(np.linspace(0, r_max, 64).astype(complex))))
    peak = float(mid.max()) + 1e-300
    if float(edge.max()) > tol * peak:
        raise DecayHypothesisError(
            f"|h| = {float(edge.max()):.3g} at r = {r_max} exceeds {tol} * peak"
        )


def identity_term(h_list) -> float:
    """prod_j (1/4pi) int_R h_j(r) r tanh(pi r) dr."""
    out = 1.0
    for h in h_list:
        r_max = _window_support_radius(h)
        _check_decay(h, r_max)
        rq, wq = composite_gauss(-r_max, r_max, panel_width=2.0, nodes_per_panel=16)
        hv = np.asarray(h(rq.astype(complex)), dtype=complex)
        val = np.sum(hv * rq * np.tanh(math.pi * rq) * wq) / (4.0 * math.pi)
        out *= float(val.real)
    return out


def elliptic_factor(h, angle: float, r_max: float | None = None) -> float:
    """(1/sin t) int cosh((pi - 2t) r)/cosh(pi r) h(r) dr.

    The ratio decays like e^{-2 min(t, pi - t) |r|}; angles within 0.05 of
    the endpoints get an extended integration range.
    """
    gap = min(angle, math.pi - angle)
    if r_max is None:
        r_max = max(_window_support_radius(h), -math.log(1e-14) / (2.0 * gap))
    rq, wq = composite_gauss(-r_max, r_max, panel_width=2.0, nodes_per_panel=16)
    hv = np.asarray(h(rq.astype(complex)), dtype=complex)
    # cosh ratio computed in log space to avoid overflow at large r
    log_ratio = (
        np.logaddexp((math.pi - 2 * angle) * rq, -(math.pi - 2 * angle) * rq)
        - np.logaddexp(math.pi * rq, -math.pi * rq)
    )
    val = np.sum(hv * np.exp(log_ratio) * wq) / math.sin(angle)
    return float(val.real)


def orbital_term(datum: ConjugacyClassDatum, h_list) -> float:
    """c_gamma prod_j h~_j(gamma_j) for one conjugacy class."""
    if len(h_list) != datum.d:
        raise ValueError("need one test function per factor")
    out = datum.c_gamma
    for factor, h in zip(datum.factors, h_list):
        if isinstance(factor, Hyperbolic):
            l = factor.length
            out *= float(hat_transform(h, l).real) / math.sinh(l / 2.0)
        else:
            out *= elliptic_factor(h, factor.angle)
    return float(out)


def load_conjugacy_data(path) -> list[ConjugacyClassDatum]:
    """Read class data from the declarative JSON config format.

    Schema: a list of {"factors": [{"type": "hyperbolic", "length": ...} |
    {"type": "elliptic", "angle": ...}], "c_gamma": ...}.
    """
    import json

    with open(path) as fh:
        raw = json.load(fh)
    out = []
    for i, entry in enumerate(raw):
        factors = []
        for j, f in enumerate(entry["factors"]):
            kind = f.get("type")
            if kind == "hyperbolic":
                factors.append(Hyperbolic(length=float(f["length"])))
            elif kind == "elliptic":
                factors.append(Elliptic(angle=float(f["angle"])))
            else:
                raise ValueError(f"entry {i} factor {j}: unknown type {kind!r}")
        out.append(ConjugacyClassDatum(tuple(factors), float(entry["c_gamma"])))
    return out


# ---------------------------------------------------------------------------
# synthetic spectra


@dataclass(frozen=True)
class ExceptionalSlab:
    """Exceptional points: imaginary coordinates on the axes in `subset`,
    Weyl-consistent real coordinates elsewhere, at the given rate."""

    subset: tuple[int, ...]
    rate: float


@dataclass(frozen=True)
class CountWindow:
    """Sup-norm window of side epsilon around the center L."""

    L: tuple[float, ...]
    epsilon: float = 1.0

    def __post_init__(self):
        if any(v < 0.5 for v in self.L):
            raise ValueError("window centers must be >= 1/2")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in (0, 1]")


@dataclass
class SyntheticSpectrum:
    """Finite multiset of spectral points emulating a Weyl-law spectrum.

    points has shape (N, d) complex; a point is exceptional iff any
    coordinate is purely imaginary.  Unit-window counts around L
    concentrate near density_constant * L_1...L_d.
    """

    points: np.ndarray
    density_constant: float
    seed: int
    box: tuple[float, float]
    profile: tuple[ExceptionalSlab, ...] = ()
    generator: str = "poisson"

    @property
    def d(self) -> int:
        return self.points.shape[1] if self.points.size else 0

    @property
    def exceptional_mask(self) -> np.ndarray:
        if not self.points.size:
            return np.zeros(0, dtype=bool)
        return np.any(self.points.imag != 0.0, axis=1)

    def real_points(self) -> np.ndarray:
        return self.points[~self.exceptional_mask].real

    def to_csv(self) -> str:
        """Versioned columnar text format, one row per point."""
        buf = io.StringIO()
        slabs = ";".join(
            f"{'/'.join(map(str, s.subset))}:{s.rate!r}" for s in self.profile
        )
        buf.write(
            f"# hplanes-spectrum v1 d={self.d} seed={self.seed} "
            f"density={self.density_constant!r} box={self.box[0]!r},{self.box[1]!r} "
            f"generator={self.generator} slabs={slabs}\n"
        )
        cols = [f"r{j+1}_re,r{j+1}_im" for j in range(self.d)]
        buf.write(",".join(cols) + ",exceptional\n")
        exc = self.exceptional_mask
        for row, e in zip(self.points, exc):
            vals = []
            for v in row:
                vals.append(repr(float(v.real)))
                vals.append(repr(float(v.imag)))
            buf.write(",".join(vals) + (",1" if e else ",0") + "\n")
        return buf.getvalue()

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_csv())

    @classmethod
    def load(cls, path) -> "SyntheticSpectrum":
        with open(path) as fh:
            header = fh.readline().strip()
            if not header.startswith("# hplanes-spectrum v1 "):
                raise ValueError(f"unrecognized spectrum header: {header!r}")
            meta = dict(
                kv.split("=", 1) for kv in header[len("# hplanes-spectrum v1 "):].split()
            )
            fh.readline()  # column header
            rows = []
            for line in fh:
                parts = line.strip().split(",")
                if not parts or parts == [""]:
                    continue
                vals = [float(p) for p in parts[:-1]]
                rows.append([complex(vals[2 * j], vals[2 * j + 1])
                             for j in range(len(vals) // 2)])
        d = int(meta["d"])
        pts = np.array(rows, dtype=complex).reshape(len(rows), d)
        box = tuple(float(v) for v in meta["box"].split(","))
        slabs = []
        if meta.get("slabs"):
            for part in meta["slabs"].split(";"):
                axes, rate = part.split(":")
                slabs.append(ExceptionalSlab(
                    tuple(int(a) for a in axes.split("/")), float(rate)))
        return cls(points=pts, density_constant=float(meta["density"]),
                   seed=int(meta["seed"]), box=(box[0], box[1]),
                   profile=tuple(slabs), generator=meta.get("generator", "poisson"))


def _sample_weyl_coords(rng, n: int, lo: float, hi: float) -> np.ndarray:
    """Coordinates with density proportional to r on [lo, hi]."""
    u = rng.uniform(0.0, 1.0, n)
    return np.sqrt(lo * lo + u * (hi * hi - lo * lo))


def generate_spectrum(
    c: float,
    d: int = 1,
    r_max: float = 100.0,
    seed: int = 0,
    profile: tuple[ExceptionalSlab, ...] = (),
    r_min: float = 0.5,
    generator: str = "poisson",
) -> SyntheticSpectrum:
    """Seeded synthetic spectrum with intensity c * r_1...r_d on the box.

    The intensity realizes the two-sided Weyl bounds: a unit window around
    L holds about c * L_1...L_d points.  "poisson" draws a Poisson point
    process; "jittered" places one point uniformly in each cell of a
    lattice in the volume coordinates v_j = r_j^2 / 2 (same mean, lower
    variance).  Exceptional slabs add points with imaginary coordinates on
    the subset axes at rates of strictly lower order.
    """
    if c < 0:
        raise ValueError("density constant must be nonnegative")
    if r_max < 2.0:
        raise ValueError("r_max must be >= 2")
    rng = np.random.default_rng(seed)
    blocks = []
    v_lo, v_hi = 0.5 * r_min * r_min, 0.5 * r_max * r_max
    if c > 0 and generator == "poisson":
        lam = c * (v_hi - v_lo) ** d
        n = int(rng.poisson(lam))
        pts = np.empty((n, d), dtype=complex)
        for j in range(d):
            pts[:, j] = _sample_weyl_coords(rng, n, r_min, r_max)
        blocks.append(pts)
    elif c > 0 and generator == "jittered":
        side = (1.0 / c) ** (1.0 / d)
        edges = np.arange(v_lo, v_hi, side)
        grids = np.meshgrid(*([edges] * d), indexing="ij")
        cells = np.stack([g.ravel() for g in grids], axis=1)
        jitter = rng.uniform(0.0, side, cells.shape)
        v = np.minimum(cells + jitter, v_hi - 1e-12)
        blocks.append(np.sqrt(2.0 * v).astype(complex))
    elif c > 0:
        raise ValueError(f"unknown generator {generator!r}")
    for slab in profile:
        if not slab.subset or any(j >= d or j < 0 for j in slab.subset):
            raise ValueError(f"bad exceptional subset {slab.subset}")
        others = [j for j in range(d) if j not in slab.subset]
        lam = slab.rate * (v_hi - v_lo) ** len(others)
        n = int(rng.poisson(lam))
        pts = np.empty((n, d), dtype=complex)
        for j in slab.subset:
            pts[:, j] = 1j * rng.uniform(0.05, 0.45, n)
        for j in others:
            pts[:, j] = _sample_weyl_coords(rng, n, r_min, r_max)
        blocks.append(pts)
    points = (np.concatenate(blocks, axis=0) if blocks
              else np.zeros((0, d), dtype=complex))
    return SyntheticSpectrum(points=points, density_constant=float(c),
                             seed=int(seed), box=(r_min, r_max),
                             profile=tuple(profile), generator=generator)


def count_window(spec: SyntheticSpectrum, w: CountWindow) -> int:
    """Exact count of real spectrum points with |r - L|_inf <= eps/2."""
    pts = spec.real_points()
    if not pts.size:
        return 0
    L = np.asarray(w.L, dtype=float)
    if L.size != spec.d:
        raise ValueError(f"window dimension {L.size} != spectrum dimension {spec.d}")
    inside = np.all(np.abs(pts - L[None, :]) <= w.epsilon / 2.0, axis=1)
    return int(np.count_nonzero(inside))


def window_values(h_list, pts: np.ndarray, L: np.ndarray) -> np.ndarray:
    """prod_j h_j(r_j - L_j) over rows of pts (possibly complex)."""
    out = np.ones(pts.shape[0], dtype=complex)
    for j, h in enumerate(h_list):
        out = out * np.asarray(h(pts[:, j] - L[j]), dtype=complex)
    return out


def smoothing_defect(spec: SyntheticSpectrum, L, windows) -> float:
    """(1/ prod L_j) sum over real points of |h_{L,delta}(r) - Theta(r - L)|.

    Theta is the product of unit-interval indicators; windows are the
    per-factor delta-approximations centered at the corresponding L_j.
    The defect scales like sqrt(delta) for Weyl-consistent spectra.
    """
    L = np.asarray(L, dtype=float)
    pts = spec.real_points()
    if not pts.size:
        return 0.0
    hv = np.ones(pts.shape[0], dtype=complex)
    for j, h in enumerate(windows):
        hv = hv * np.asarray(h(pts[:, j].astype(complex)), dtype=complex)
    theta = np.all(np.abs(pts - L[None, :]) <= 0.5, axis=1).astype(float)
    return float(np.sum(np.abs(hv.real - theta)) / np.prod(L))


def exceptional_weighted_sum(spec: SyntheticSpectrum, h_list, L) -> float:
    """(1 / prod L_j) sum over exceptional points of prod h_j(r_j).

    The test functions are already centered at the window position (e.g.
    windows built around L_j); L only supplies the normalization.  Each
    h_j must decay at least cubically in the closed strip |Im r| <= 1/2
    (validated by sampling on the strip boundary); for density-zero
    exceptional sets the normalized sum tends to 0 along growing L.
    """
    L = np.asarray(L, dtype=float)
    for h in h_list:
        _validate_strip_decay(h)
    pts = spec.points[spec.exceptional_mask]
    if not pts.size:
        return 0.0
    vals = np.ones(pts.shape[0], dtype=complex)
    for j, h in enumerate(h_list):
        vals = vals * np.asarray(h(pts[:, j]), dtype=complex)
    return float(np.sum(np.abs(vals)) / np.prod(L))


def _validate_strip_decay(h, c_min: float = 0.1):
    """Check |h(x + i/2)| <= C / |x|^3 on strip-boundary samples."""
    xs = np.array([8.0, 16.0, 32.0, 64.0])
    vals = np.abs(np.asarray(h((xs + 0.5j))))
    peak = float(np.max(np.abs(np.asarray(h(np.linspace(0, 8, 33).astype(complex))))))
    bound = (peak + 1.0) * (8.0 / xs) ** 3
    if np.any(vals > np.maximum(bound, 1e-12) * (1.0 + c_min)):
        raise DecayHypothesisError(
            "test function violates cubic decay in the strip |Im r| <= 1/2"
        )
