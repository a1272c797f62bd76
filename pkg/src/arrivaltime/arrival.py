"""Arrival-time amplitudes and distributions.

The amplitude for arriving at detector X at time t is

    A(t; X) = h^(-1/2) * integral dp sqrt(|p|/m) exp(-i (E_p t - p X) / hbar) psi(p)

taken over the packet's half-line.  Working in p instead of E removes the
E^(-1/4) endpoint singularity of the energy-representation integral.

Distributions are stored against physical time t for both directions.  For
right-moving packets t coincides with the eigenvalue tau of the time
operator; for left-moving packets t = -tau, which is why the mean over the
stored grid needs no extra sign.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from ._fourier import chirp_z
from .core import UnitSystem, WavePacket, _is_uniform, trapezoid_weights, translate
from .errors import EmptyDistribution, QuadratureUnresolved, WindowTooNarrow

#: Default number of time samples.
N_TIMES = 4096
#: Auto-window half-width in units of the estimated arrival-time spread.
WINDOW_SPREADS = 12.0
#: Free packets must have at least 1 - WINDOW_TOL of their norm in the window.
WINDOW_TOL = 1e-4
#: Product sizes above this use the chirp-z route.
_DIRECT_LIMIT = 1 << 21
_MAX_ENERGY_NODES = 1 << 22
#: Above this many energy nodes ``auto`` prefers direct summation.
_AUTO_ENERGY_NODES = 1 << 20


@dataclass(frozen=True, eq=False)
class TimeGrid:
    samples: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.samples, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if t.ndim != 1 or t.shape != w.shape or t.size < 2:
            raise ValueError("time grid needs matching 1-D samples and weights (n >= 2)")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time samples must be strictly increasing")
        if np.any(w <= 0):
            raise ValueError("time weights must be positive")
        object.__setattr__(self, "samples", t)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, lo, hi, n=N_TIMES):
        t = np.linspace(lo, hi, int(n))
        return cls(t, trapezoid_weights(t))

    def __len__(self):
        return self.samples.size

    @cached_property
    def is_uniform(self):
        return _is_uniform(self.samples)

    def shifted(self, s):
        return TimeGrid(self.samples + s, self.weights)

    def mirrored(self):
        return TimeGrid(-self.samples[::-1], self.weights[::-1].copy())


@dataclass(frozen=True, eq=False)
class ArrivalDistribution:
    """Arrival density on a time grid.

    ``expected_total`` is the packet norm, i.e. what ``total`` would be on an
    infinite window; the difference bounds the window truncation.
    """

    times: TimeGrid
    values: np.ndarray
    detector: float
    direction: int
    total: float
    expected_total: float
    units: UnitSystem = field(default_factory=UnitSystem)
    amplitudes: np.ndarray | None = None

    def __post_init__(self):
        if np.any(self.values < 0):
            raise ValueError("arrival density must be non-negative")

    @property
    def truncation(self):
        return max(self.expected_total - self.total, 0.0)


@dataclass(frozen=True)
class MomentReport:
    mean: float
    spread: float
    energy_mean: float
    energy_spread: float
    product: float
    truncation: float = 0.0


def _kernel_weights(packet):
    """Quadrature-weighted amplitudes c_i = h^(-1/2) w_i sqrt(|p_i|/m) psi_i."""
    u = packet.units
    return packet.weights * np.sqrt(np.abs(packet.p) / u.mass) * packet.amplitudes / np.sqrt(u.h)


def _check_resolution(packet, times):
    """Raise if the integrand phase moves more than pi between momentum nodes."""
    _check_arrays(packet.p, packet.position_mean, packet.units, times)


def _check_arrays(p, xc, units, times):
    dp = np.diff(p)
    pm = 0.5 * (p[1:] + p[:-1])
    for t in (times[0], times[-1]):
        step = np.max(np.abs(pm * t / units.mass + xc) * dp) / units.hbar
        if step > np.pi:
            raise QuadratureUnresolved(
                f"phase step {step:.3g} rad between momentum nodes at t={t:g}; refine the grid"
            )


def _direct_arrays(p, c, units, times, chunk=256):
    """sum_i c_i exp(-i E_i t / hbar) for pre-weighted coefficients c."""
    E = p**2 / (2 * units.mass * units.hbar)
    out = np.empty(times.size, dtype=complex)
    for s in range(0, times.size, chunk):
        t = times[s:s + chunk]
        out[s:s + chunk] = np.exp(-1j * np.outer(t, E)) @ c
    return out


def _direct(packet, times):
    return _direct_arrays(packet.p, _kernel_weights(packet), packet.units, times)


def _by_speed(packet):
    """Index order that sorts the packet's nodes by increasing |p|."""
    n = len(packet.p)
    return np.arange(n) if packet.direction > 0 else np.arange(n)[::-1]


def _energy_nodes(q_lo, q_hi, xc, direction, units, t0, t1):
    """Energy-grid size resolving the demodulated phase for |p| in [q_lo, q_hi].

    The phase rate in E is t + m x_c / p, which grows without bound as p -> 0,
    so the slow end of a packet sets the cost.
    """
    m = units.mass
    rate = max(abs(t + m * xc / (direction * q)) for t in (t0, t1) for q in (q_lo, q_hi))
    dE = (np.pi / 8) / max(rate / units.hbar, 1e-300)
    return int(np.ceil((q_hi**2 - q_lo**2) / (2 * m) / dE)) + 1


def _split_index(packet, t0, t1, budget):
    """Smallest k such that nodes k.. (sorted by |p|) fit an energy grid of ``budget``."""
    q = np.abs(packet.p[_by_speed(packet)])
    xc, d, u = packet.position_mean, packet.direction, packet.units
    for k in np.unique(np.linspace(0, q.size - 3, 257).astype(int)):
        if _energy_nodes(q[k], q[-1], xc, d, u, t0, t1) <= budget:
            return int(k)
    return None


def _chirp_z(packet, t0, dt, n, start=0):
    """A(t0 + k dt), k < n, from nodes ``start``.. (by |p|) via a uniform energy grid.

    The packet is demodulated by its centroid before spline resampling so the
    interpolated function is slowly varying; the removed phase is restored
    exactly on the energy nodes.  The sum is done with Bluestein's algorithm.
    """
    u = packet.units
    m, hbar = u.mass, u.hbar
    d = packet.direction
    xc = packet.position_mean
    idx = _by_speed(packet)[start:]
    q = np.abs(packet.p[idx])
    nE = max(4 * q.size, _energy_nodes(q[0], q[-1], xc, d, u, t0, t0 + (n - 1) * dt))
    if nE > _MAX_ENERGY_NODES:
        raise QuadratureUnresolved(f"energy grid would need {nE} nodes")
    smooth = CubicSpline(q, packet.amplitudes[idx] * np.exp(1j * d * q * xc / hbar))
    E_lo = q[0] ** 2 / (2 * m)
    E = np.linspace(E_lo, q[-1] ** 2 / (2 * m), nE)
    qE = np.sqrt(2 * m * E)
    g = (m / (2 * E)) ** 0.25 * smooth(qE) * np.exp(-1j * d * qE * xc / hbar)
    g *= trapezoid_weights(E) / np.sqrt(u.h)
    step = E[1] - E[0]
    g *= np.exp(-1j * np.arange(nE) * step * t0 / hbar)
    raw = chirp_z(g, n, step * dt / hbar)
    tk = t0 + dt * np.arange(n)
    return np.exp(-1j * E_lo * tk / hbar) * raw


def _split(packet, times, start):
    """Direct sum over the slowest nodes up to ``start``, chirp-z over the rest."""
    dt = times[1] - times[0]
    out = _chirp_z(packet, times[0], dt, times.size, start)
    if start > 0:
        idx = _by_speed(packet)[:start + 1]
        p = packet.p[idx]
        u = packet.units
        w = trapezoid_weights(np.abs(p))
        c = w * np.sqrt(np.abs(p) / u.mass) * packet.amplitudes[idx] / np.sqrt(u.h)
        _check_arrays(np.sort(p), packet.position_mean, u, times)
        out = out + _direct_arrays(p, c, u, times)
    return out


def arrival_amplitudes(packet, X, times, method="auto"):
    """A(t_j; X) for an array of times.

    ``auto`` sums directly for small problems or irregular times.  Otherwise it
    uses the chirp-z route, handing the slowest momenta to direct summation
    when resolving them on the energy grid would be too expensive.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    shifted = translate(packet, X)
    if method == "auto":
        uniform = times.size > 2 and _is_uniform(times)
        big = times.size * len(packet.p) > _DIRECT_LIMIT
        if uniform and big:
            start = _split_index(shifted, times[0], times[-1], _AUTO_ENERGY_NODES)
            if start is not None:
                return _split(shifted, times, start)
        method = "direct"
    if method == "direct":
        _check_resolution(shifted, times)
        return _direct(shifted, times)
    if method == "czt":
        if times.size > 1 and not _is_uniform(times):
            raise ValueError("chirp-z evaluation needs uniformly spaced times")
        dt = times[1] - times[0] if times.size > 1 else 1.0
        return _chirp_z(shifted, times[0], dt, times.size)
    raise ValueError(f"unknown method {method!r}")


def arrival_amplitude(packet, X, t):
    """Single amplitude <t, +-; X | psi> by direct summation."""
    return complex(arrival_amplitudes(packet, X, [t], method="direct")[0])


def estimate_window(packet, X):
    """Centre and spread estimate of arrival times from classical transit m(X - x)/p."""
    m = packet.units.mass
    xc = packet.position_mean
    t_cl = m * (X - xc) / packet.p
    centre = packet.expectation(t_cl)
    var = packet.expectation((t_cl - centre) ** 2)
    var += (m * packet.position_spread * packet.expectation(1 / np.abs(packet.p))) ** 2
    return centre, float(np.sqrt(var))


def auto_time_grid(packet, X, n=N_TIMES, spreads=WINDOW_SPREADS):
    centre, spread = estimate_window(packet, X)
    hw = spreads * max(spread, 1e-12)
    return TimeGrid.uniform(centre - hw, centre + hw, n)


def _distribution(packet, X, grid, method):
    amp = arrival_amplitudes(packet, X, grid.samples, method)
    vals = np.abs(amp) ** 2
    total = float(np.sum(grid.weights * vals))
    return ArrivalDistribution(grid, vals, X, packet.direction, total, packet.norm,
                               packet.units, amp)


def arrival_distribution(packet, X, grid=None, *, n=N_TIMES, method="auto",
                         window_tol=WINDOW_TOL, max_refine=8):
    """Arrival density Pi(t; X) = |A(t; X)|^2 on ``grid``.

    Without a grid the window is centred on the classical transit time and
    widened on whichever side still carries density, until the captured
    probability stops changing or the momentum grid can no longer resolve it.
    """
    if grid is None:
        centre, spread = estimate_window(packet, X)
        hw = WINDOW_SPREADS * max(spread, 1e-12)
        lo, hi = centre - hw, centre + hw
        dist = _distribution(packet, X, TimeGrid.uniform(lo, hi, n), method)
        scale = max(packet.norm, 1e-300)
        for _ in range(max_refine):
            if dist.truncation <= 1e-12 * scale:
                break
            # Grow only the sides where the density has not yet died away;
            # slow momentum components give one-sided late tails.
            width = hi - lo
            edge = 1e-13 * scale / width
            grow_lo, grow_hi = dist.values[0] > edge, dist.values[-1] > edge
            if not (grow_lo or grow_hi):
                break
            new_lo = lo - 0.25 * width if grow_lo else lo
            new_hi = hi + 0.25 * width if grow_hi else hi
            try:
                wider = _distribution(packet, X, TimeGrid.uniform(new_lo, new_hi, n), method)
            except QuadratureUnresolved:
                break
            converged = abs(wider.total - dist.total) <= 1e-10 * scale
            dist, lo, hi = wider, new_lo, new_hi
            if converged:
                break
    else:
        dist = _distribution(packet, X, grid, method)
    if dist.expected_total > 0 and dist.truncation > window_tol * dist.expected_total:
        raise WindowTooNarrow(
            f"window captures {dist.total:.8g} of {dist.expected_total:.8g}"
        )
    return dist


def mean_arrival(dist):
    if not dist.total > 0:
        raise EmptyDistribution("distribution has zero total probability")
    w = dist.times.weights * dist.values
    return float(np.sum(w * dist.times.samples) / dist.total)


def arrival_spread(dist):
    mean = mean_arrival(dist)
    w = dist.times.weights * dist.values
    return float(np.sqrt(np.sum(w * (dist.times.samples - mean) ** 2) / dist.total))


def moment_report(packet, dist):
    """Energy and arrival-time moments; ``product`` is Delta E * Delta t_X."""
    E = packet.energies
    e_mean = packet.expectation(E)
    e_spread = float(np.sqrt(packet.expectation((E - e_mean) ** 2)))
    t_mean = mean_arrival(dist)
    t_spread = arrival_spread(dist)
    return MomentReport(t_mean, t_spread, e_mean, e_spread, e_spread * t_spread,
                        dist.truncation)


def free_evolve(packet, t):
    """Schrodinger-picture free evolution by t: arrivals happen t earlier."""
    phase = np.exp(-1j * packet.energies * t / packet.units.hbar)
    return packet.with_amplitudes(packet.amplitudes * phase)


def time_shift(packet, s):
    """Delay the packet by s, so Pi_new(t) = Pi_old(t - s) at every detector."""
    return free_evolve(packet, -s)


def time_reverse(packet):
    """psi(p) -> conj(psi(-p)); the direction flips and Pi_rev(t) = Pi(-t)."""
    return WavePacket(packet.grid.mirrored(), np.conj(packet.amplitudes[::-1]),
                      -packet.direction, packet.units, packet.truncated_mass,
                      packet.falloff_tol)
