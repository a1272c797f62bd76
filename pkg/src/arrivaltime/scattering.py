"""Stationary 1-D scattering and arrival behind a barrier.

T(p) and R(p) follow the convention

    x -> -inf:  e^{ipx/hbar} + R e^{-ipx/hbar}
    x -> +inf:  T e^{ipx/hbar}

Both solvers start from the transmitted wave on the right edge of the
support and carry (psi, psi') leftwards.  The state is rescaled after every
piece and the log of the scale is accumulated, so deep tunnelling
underflows T gracefully instead of overflowing intermediate values.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arrival import arrival_distribution
from .core import MomentumGrid, UnitSystem, WavePacket
from .errors import (
    EvanescentOverflow,
    GridMismatch,
    NonFiniteSupport,
    NotAsymptotic,
    UnitarityViolation,
)

UNITARITY_TOL = 1e-10
#: Detector must sit this many packet widths beyond the potential.
ASYMPTOTIC_WIDTHS = 10.0


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Real potential with finite support.

    ``kind="piecewise"`` holds ordered, non-overlapping (x_left, x_right, V)
    segments.  ``kind="sampled"`` holds nodes (x_i, V_i) joined linearly; a
    repeated x encodes a jump.  V = 0 outside the support in both cases.
    """

    kind: str
    segments: tuple = ()
    x: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "piecewise":
            segs = tuple((float(a), float(b), float(v)) for a, b, v in self.segments)
            for a, b, v in segs:
                if not (np.isfinite(a) and np.isfinite(b)):
                    raise NonFiniteSupport("segment edges must be finite")
                if not b > a:
                    raise ValueError(f"segment [{a}, {b}] is empty")
                if not np.isfinite(v):
                    raise ValueError("segment heights must be finite")
            for (_, b, _), (a, _, _) in zip(segs, segs[1:]):
                if a < b:
                    raise ValueError("segments must be ordered and non-overlapping")
            object.__setattr__(self, "segments", segs)
        elif self.kind == "sampled":
            x = np.asarray(self.x, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if x.ndim != 1 or x.shape != v.shape or x.size < 2:
                raise ValueError("sampled potential needs matching 1-D x and values")
            if not np.all(np.isfinite(x)):
                raise NonFiniteSupport("sample positions must be finite")
            if not np.all(np.isfinite(v)):
                raise ValueError("sampled values must be finite")
            if np.any(np.diff(x) < 0):
                raise ValueError("sample positions must be non-decreasing")
            object.__setattr__(self, "x", x)
            object.__setattr__(self, "values", v)
        else:
            raise ValueError(f"unknown potential kind {self.kind!r}")

    @classmethod
    def zero(cls):
        return cls("piecewise", ())

    @classmethod
    def piecewise(cls, segments):
        return cls("piecewise", tuple(segments))

    @classmethod
    def rectangular(cls, height, width, left=0.0):
        return cls("piecewise", ((left, left + width, height),))

    @classmethod
    def double_rectangular(cls, height, width, gap, left=0.0):
        b = left + width
        return cls("piecewise", ((left, b, height), (b + gap, b + gap + width, height)))

    @classmethod
    def sampled(cls, x, values):
        return cls("sampled", x=x, values=values)

    @classmethod
    def gaussian_bump(cls, height, width, center=0.0, reach=8.0, n=2001):
        """Sampled exp(-(x-c)^2 / (2 width^2)) bump, cut at +-reach widths."""
        x = np.linspace(center - reach * width, center + reach * width, n)
        return cls.sampled(x, height * np.exp(-((x - center) ** 2) / (2 * width**2)))

    @property
    def is_zero(self):
        if self.kind == "piecewise":
            return all(v == 0 for _, _, v in self.segments)
        return bool(np.all(self.values == 0))

    @property
    def support(self):
        if self.kind == "piecewise":
            if not self.segments:
                return None
            return self.segments[0][0], self.segments[-1][1]
        return float(self.x[0]), float(self.x[-1])

    @property
    def breakpoints(self):
        """Sorted positions where V jumps."""
        if self.kind == "piecewise":
            pts = {e for a, b, _ in self.segments for e in (a, b)}
        else:
            x, v = self.x, self.values
            pts = set(x[1:][np.diff(x) == 0].tolist())
            if v[0] != 0:
                pts.add(float(x[0]))
            if v[-1] != 0:
                pts.add(float(x[-1]))
        return np.array(sorted(pts))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        if self.kind == "piecewise":
            for a, b, v in self.segments:
                out[(x >= a) & (x < b)] = v
            return out
        inside = (x >= self.x[0]) & (x <= self.x[-1])
        out[inside] = np.interp(x[inside], self.x, self.values)
        return out

    def to_samples(self, spacing=0.01):
        """Dense sampled copy of a piecewise potential (jumps as repeated x)."""
        if self.kind == "sampled":
            return self
        xs, vs = [], []
        edges = []
        for a, b, v in self.segments:
            edges.append((a, b, v))
        prev = None
        for a, b, v in edges:
            if prev is not None and a > prev:
                xs += [prev, a]
                vs += [0.0, 0.0]
            n = max(int(np.ceil((b - a) / spacing)), 1)
            seg = np.linspace(a, b, n + 1)
            xs += list(seg)
            vs += [v] * seg.size
            prev = b
        if not xs:
            return PotentialSpec.sampled([0.0, 1.0], [0.0, 0.0])
        xs = [xs[0]] + xs + [xs[-1]]
        vs = [0.0] + vs + [0.0]
        return PotentialSpec.sampled(xs, vs)


@dataclass(frozen=True, eq=False)
class ScatteringCoefficients:
    grid: MomentumGrid
    T: np.ndarray
    R: np.ndarray
    units: UnitSystem = field(default_factory=UnitSystem)

    @property
    def transmission(self):
        return np.abs(self.T) ** 2

    @property
    def reflection(self):
        return np.abs(self.R) ** 2


def _segment_step(k, d):
    """Backward propagator over length d (x -> x - d) for constant k, scaled.

    Returns the matrix entries divided by exp(|Im k| d) and that log-scale.
    """
    kd = k * d
    s = np.abs(kd.imag)
    e1 = np.exp(1j * kd - s)
    e2 = np.exp(-1j * kd - s)
    cos = (e1 + e2) / 2
    small = np.abs(kd) < 1e-4
    k_safe = np.where(small, 1.0, k)
    sin_over_k = np.where(small, d * (1 - kd**2 / 6) * np.exp(-s), (e1 - e2) / (2j * k_safe))
    k_sin = np.where(small, k * kd * (1 - kd**2 / 6) * np.exp(-s), k_safe * (e1 - e2) / 2j)
    # [psi(x-d), psi'(x-d)] = [[cos, -sin/k], [k sin, cos]] @ [psi(x), psi'(x)]
    return cos, -sin_over_k, k_sin, s


def _pieces(segments, support):
    """Contiguous constant pieces covering support, including zero gaps."""
    out = []
    prev = support[0]
    for a, b, v in segments:
        if a > prev:
            out.append((prev, a, 0.0))
        out.append((a, b, v))
        prev = b
    return out


def _match(p, x_left, x_right, psi, dpsi, logscale, hbar):
    k = p / hbar
    a = (psi + dpsi / (1j * k)) * np.exp(-1j * k * x_left) / 2
    b = (psi - dpsi / (1j * k)) * np.exp(1j * k * x_left) / 2
    with np.errstate(over="ignore", divide="ignore", invalid="ignore", under="ignore"):
        T = np.exp(-logscale) / a
        R = b / a
    if not (np.all(np.isfinite(T)) and np.all(np.isfinite(R))):
        raise EvanescentOverflow("scaled propagation failed to produce finite coefficients")
    return T, R


def _start(p, x_right, hbar):
    k = p / hbar
    psi = np.exp(1j * k * x_right)
    return psi, 1j * k * psi


def _renormalize(psi, dpsi, k0, logscale):
    size = np.maximum(np.abs(psi), np.abs(dpsi) / k0)
    size = np.where(size > 0, size, 1.0)
    return psi / size, dpsi / size, logscale + np.log(size)


def transfer_coefficients(segments, p, units):
    """T, R for constant pieces by exact transfer matrices (V may be complex)."""
    p = np.asarray(p, dtype=float)
    hbar, m = units.hbar, units.mass
    if not segments:
        return np.ones(p.shape, complex), np.zeros(p.shape, complex)
    support = (segments[0][0], segments[-1][1])
    E = p**2 / (2 * m)
    psi, dpsi = _start(p, support[1], hbar)
    logscale = np.zeros(p.shape)
    k0 = p / hbar
    for a, b, v in reversed(_pieces(segments, support)):
        k = np.sqrt((2 * m * (E - v)).astype(complex)) / hbar
        c, s12, s21, lg = _segment_step(k, b - a)
        psi, dpsi = c * psi + s12 * dpsi, s21 * psi + c * dpsi
        psi, dpsi, logscale = _renormalize(psi, dpsi, k0, logscale + lg)
    return _match(p, support[0], support[1], psi, dpsi, logscale, hbar)


_G = np.sqrt(3.0) / 6


def _magnus_coefficients(x, values, p, units, max_step):
    """Fourth-order Magnus integration of psi'' = 2m(V - E)/hbar^2 psi.

    V is linear between nodes; every step exponentiates a traceless 2x2
    generator, so the Wronskian, and hence |T|^2 + |R|^2, is conserved to
    rounding.
    """
    hbar, m = units.hbar, units.mass
    E = p**2 / (2 * m)
    psi, dpsi = _start(p, x[-1], hbar)
    logscale = np.zeros(p.shape)
    k0 = p / hbar
    c = 2 * m / hbar**2
    for i in range(x.size - 2, -1, -1):
        xa, xb = x[i], x[i + 1]
        if xb == xa:
            continue
        va, vb = values[i], values[i + 1]
        n = max(int(np.ceil((xb - xa) / max_step)), 1)
        h = -(xb - xa) / n
        for j in range(n):
            xr = xb + j * h
            xm = xr + h / 2
            x1, x2 = xm - _G * h, xm + _G * h
            v1 = va + (vb - va) * (x1 - xa) / (xb - xa)
            v2 = va + (vb - va) * (x2 - xa) / (xb - xa)
            q1, q2 = c * (v1 - E), c * (v2 - E)
            alpha = (np.sqrt(3.0) / 12) * h**2 * (q1 - q2)
            beta = h
            gamma = h / 2 * (q1 + q2)
            mu = np.sqrt((alpha**2 + beta * gamma).astype(complex))
            small = np.abs(mu) < 1e-4
            mu_safe = np.where(small, 1.0, mu)
            ch = np.where(small, 1 + mu**2 / 2, np.cosh(mu_safe))
            sh = np.where(small, 1 + mu**2 / 6, np.sinh(mu_safe) / mu_safe)
            psi, dpsi = ((ch + sh * alpha) * psi + sh * beta * dpsi,
                         sh * gamma * psi + (ch - sh * alpha) * dpsi)
        psi, dpsi, logscale = _renormalize(psi, dpsi, k0, logscale)
    return _match(p, x[0], x[-1], psi, dpsi, logscale, hbar)


def solve_coefficients(potential, grid, units=None, max_step=None, check=True):
    """T(p), R(p) on a positive momentum grid."""
    units = units or UnitSystem()
    p = grid.samples
    if not np.all(p > 0):
        raise GridMismatch("scattering coefficients need a positive-momentum grid")
    if potential.is_zero:
        T, R = np.ones(p.size, dtype=complex), np.zeros(p.size, dtype=complex)
    elif potential.kind == "piecewise":
        T, R = transfer_coefficients(potential.segments, p, units)
    else:
        if max_step is None:
            kmax = np.sqrt(2 * units.mass * (p.max() ** 2 / (2 * units.mass)
                                             + np.abs(potential.values).max())) / units.hbar
            max_step = 0.05 / kmax
        T, R = _magnus_coefficients(potential.x, potential.values, p, units, max_step)
    if check:
        err = np.max(np.abs(np.abs(T) ** 2 + np.abs(R) ** 2 - 1))
        if err > UNITARITY_TOL:
            raise UnitarityViolation(f"|T|^2 + |R|^2 deviates from 1 by {err:.3g}")
    return ScatteringCoefficients(grid, T, R, units)


def _coefficients_on(packet, coeffs):
    """T, R on the packet grid; interpolate modulus and unwrapped phase otherwise."""
    if coeffs.grid.same_as(packet.grid):
        return coeffs.T, coeffs.R
    cp = coeffs.grid.samples
    p = packet.p
    if p.min() < cp.min() or p.max() > cp.max():
        raise GridMismatch("coefficient grid does not cover the packet support")

    def interp(z):
        mod = np.interp(p, cp, np.abs(z))
        ph = np.interp(p, cp, np.unwrap(np.angle(z)))
        return mod * np.exp(1j * ph)

    return interp(coeffs.T), interp(coeffs.R)


def transmitted_packet(packet_in, coeffs):
    """Freely evolving transmitted state T(p) psi_in(p) (unnormalized)."""
    if packet_in.direction != 1:
        raise ValueError("scattering pipeline expects a right-moving packet")
    T, _ = _coefficients_on(packet_in, coeffs)
    return packet_in.with_amplitudes(T * packet_in.amplitudes, truncated_mass=0.0)


def outgoing_asymptote(packet_in, coeffs):
    """Out state split into T psi_in on +p and R psi_in attached to -p."""
    if packet_in.direction != 1:
        raise ValueError("scattering pipeline expects a right-moving packet")
    T, R = _coefficients_on(packet_in, coeffs)
    transmitted = packet_in.with_amplitudes(T * packet_in.amplitudes, truncated_mass=0.0)
    reflected = WavePacket(packet_in.grid.mirrored(), (R * packet_in.amplitudes)[::-1], -1,
                           packet_in.units, falloff_tol=packet_in.falloff_tol)
    return transmitted, reflected


def transmittance(packet_in, coeffs):
    T, _ = _coefficients_on(packet_in, coeffs)
    return float(np.sum(packet_in.weights * np.abs(T) ** 2 * packet_in.density))


def asymptotic_margin(packet):
    """max(10 hbar/sigma_p, 10 spatial widths) with sigma_p the amplitude width."""
    sigma_p = np.sqrt(2.0) * packet.momentum_spread
    width = np.sqrt(2.0) * packet.position_spread
    return ASYMPTOTIC_WIDTHS * max(packet.units.hbar / sigma_p, width)


def minimum_detector(potential, packet):
    support = potential.support
    if support is None or potential.is_zero:
        return -np.inf
    return support[1] + asymptotic_margin(packet)


def barrier_arrival_distribution(packet_in, coeffs, X, grid=None, potential=None, **kw):
    """Unnormalized arrival density behind the barrier; total = transmittance.

    With ``potential`` given the detector is checked against the asymptotic
    margin measured from the potential's right edge.
    """
    if potential is not None:
        xmin = minimum_detector(potential, packet_in)
        if X < xmin:
            raise NotAsymptotic(f"detector at {X:g} is closer than the asymptotic margin; "
                                f"need X >= {xmin:g}", minimum_x=xmin)
    tr = transmitted_packet(packet_in, coeffs)
    return arrival_distribution(tr, X, grid, **kw)


def presets():
    """Named potentials used by the checks: one of each supported shape."""
    return {
        "rectangular": PotentialSpec.rectangular(10.0, 1.0),
        "double_rectangular": PotentialSpec.double_rectangular(10.0, 1.0, 1.0),
        "bump": PotentialSpec.gaussian_bump(10.0, 0.5),
        "zero": PotentialSpec.zero(),
        "deep": PotentialSpec.rectangular(50.0, 1.0),
    }
