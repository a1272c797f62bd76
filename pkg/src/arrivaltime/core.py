"""Units, momentum grids and directed wave packets.

Packets live in the momentum representation.  Amplitudes are normalized
against the grid's quadrature weights, so ``sum(w * |psi|**2)`` is the
discrete version of <psi|psi>.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import ndtr

from .errors import (
    DirectionalityViolation,
    EmptyGrid,
    LowMomentumViolation,
    OutOfSupport,
)

#: Reach of the default grid around a Gaussian centre, in units of sigma_p.
GRID_REACH = 8.0
#: Largest probability mass build_gaussian may discard outside the grid.
TRUNCATION_LIMIT = 1e-8
#: Default bound on |psi(p_edge)| / |p_edge| * <|p|>^(3/2) at the low-momentum edge.
FALLOFF_TOL = 1e-3
#: Default grids stop at this fraction of |p0| on the slow side.
LOW_FLOOR = 0.05


@dataclass(frozen=True)
class UnitSystem:
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not self.hbar > 0:
            raise ValueError(f"hbar must be positive, got {self.hbar}")
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")

    @property
    def h(self):
        return 2.0 * np.pi * self.hbar


def trapezoid_weights(samples):
    samples = np.asarray(samples, dtype=float)
    w = np.empty_like(samples)
    d = np.diff(samples)
    w[0] = d[0] / 2
    w[-1] = d[-1] / 2
    w[1:-1] = (d[:-1] + d[1:]) / 2
    return w


def _is_uniform(samples, rtol=1e-9):
    d = np.diff(samples)
    return bool(np.all(np.abs(d - d[0]) <= rtol * abs(d[0])))


@dataclass(frozen=True, eq=False)
class MomentumGrid:
    """Ordered momentum nodes with quadrature weights."""

    samples: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.samples, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if p.ndim != 1 or p.shape != w.shape or p.size < 2:
            raise EmptyGrid("momentum grid needs matching 1-D samples and weights (n >= 2)")
        if not np.all(np.isfinite(p)) or np.any(np.diff(p) <= 0):
            raise ValueError("momentum samples must be finite and strictly increasing")
        if np.any(w <= 0):
            raise ValueError("quadrature weights must be positive")
        object.__setattr__(self, "samples", p)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, lo, hi, n):
        p = np.linspace(lo, hi, int(n))
        return cls(p, trapezoid_weights(p))

    @classmethod
    def for_gaussian(cls, p0, sigma_p, n=4096, reach=GRID_REACH):
        """Uniform grid over p0 +- reach*sigma_p, floored at LOW_FLOOR * |p0|."""
        sign = 1.0 if p0 > 0 else -1.0
        c = abs(p0)
        lo = max(c - reach * sigma_p, LOW_FLOOR * c)
        hi = c + reach * sigma_p
        grid = cls.uniform(lo, hi, n)
        return grid if sign > 0 else grid.mirrored()

    def __len__(self):
        return self.samples.size

    @property
    def direction(self):
        if np.all(self.samples > 0):
            return 1
        if np.all(self.samples < 0):
            return -1
        return 0

    @cached_property
    def is_uniform(self):
        return _is_uniform(self.samples)

    @property
    def spacing(self):
        return float(np.max(np.diff(self.samples)))

    def mirrored(self):
        """Grid at -p (reversed so it stays increasing)."""
        return MomentumGrid(-self.samples[::-1], self.weights[::-1].copy())

    def same_as(self, other):
        return (
            len(self) == len(other)
            and np.array_equal(self.samples, other.samples)
            and np.array_equal(self.weights, other.weights)
        )


@dataclass(frozen=True, eq=False)
class WavePacket:
    """Momentum-space amplitudes of a directed state.

    ``direction`` is +1 for states built from positive momenta only and -1
    for negative momenta only.  Packets are not required to be normalized:
    transmitted states carry the transmittance as their norm.
    """

    grid: MomentumGrid
    amplitudes: np.ndarray
    direction: int
    units: UnitSystem = field(default_factory=UnitSystem)
    truncated_mass: float = 0.0
    falloff_tol: float = FALLOFF_TOL

    def __post_init__(self):
        psi = np.asarray(self.amplitudes, dtype=complex)
        if psi.shape != self.grid.samples.shape:
            raise ValueError("amplitudes must match the grid")
        if not np.all(np.isfinite(psi)):
            raise ValueError("amplitudes must be finite")
        if self.direction not in (1, -1):
            raise ValueError(f"direction must be +1 or -1, got {self.direction}")
        if self.grid.direction != self.direction:
            raise DirectionalityViolation(
                f"grid momenta do not all have sign {self.direction:+d}"
            )
        edge = 0 if self.direction > 0 else -1
        q = np.abs(self.grid.samples)
        mass = self.grid.weights * np.abs(psi) ** 2
        if mass.sum() > 0:
            # |psi|/|p| has units p^(-3/2); <|p|>^(3/2) makes the test scale free.
            ratio = abs(psi[edge]) / q[edge] * (np.sum(mass * q) / mass.sum()) ** 1.5
            if ratio > self.falloff_tol:
                raise LowMomentumViolation(
                    f"|psi(p)|/|p| * <|p|>^1.5 = {ratio:.3g} at the low-momentum edge "
                    f"exceeds {self.falloff_tol:g}"
                )
        object.__setattr__(self, "amplitudes", psi)

    @property
    def p(self):
        return self.grid.samples

    @property
    def weights(self):
        return self.grid.weights

    @property
    def energies(self):
        return self.p**2 / (2 * self.units.mass)

    def with_amplitudes(self, amplitudes, **changes):
        return replace(self, amplitudes=amplitudes, **changes)

    @cached_property
    def density(self):
        return np.abs(self.amplitudes) ** 2

    @cached_property
    def norm(self):
        return float(np.sum(self.weights * self.density))

    def expectation(self, values):
        """<f(p)> with respect to |psi|^2, normalized by the packet norm."""
        if self.norm == 0:
            return 0.0
        return float(np.sum(self.weights * self.density * values) / self.norm)

    @cached_property
    def _polar_derivatives(self):
        """d|psi|/dp and the unwrapped phase slope; both are smooth for chirped packets."""
        mod = np.abs(self.amplitudes)
        theta = np.unwrap(np.angle(self.amplitudes))
        return (CubicSpline(self.p, mod)(self.p, 1),
                CubicSpline(self.p, theta)(self.p, 1))

    @cached_property
    def position_mean(self):
        """<x> = <psi| i hbar d/dp |psi> = -hbar <d theta / dp>."""
        if self.norm == 0:
            return 0.0
        _, dtheta = self._polar_derivatives
        return float(-self.units.hbar * self.expectation(dtheta))

    @cached_property
    def position_spread(self):
        if self.norm == 0:
            return 0.0
        dmod, dtheta = self._polar_derivatives
        x2 = self.units.hbar**2 * (np.sum(self.weights * dmod**2) / self.norm
                                   + self.expectation(dtheta**2))
        return float(np.sqrt(max(x2 - self.position_mean**2, 0.0)))

    @cached_property
    def momentum_spread(self):
        mean = self.expectation(self.p)
        return float(np.sqrt(max(self.expectation(self.p**2) - mean**2, 0.0)))

    @cached_property
    def _spline(self):
        return CubicSpline(self.p, self.amplitudes)

    def interpolate(self, p):
        """Cubic interpolation of psi(p); node values are returned unchanged."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        lo, hi = self.p[0], self.p[-1]
        tol = 1e-12 * max(abs(lo), abs(hi))
        if np.any(p < lo - tol) or np.any(p > hi + tol):
            raise OutOfSupport(f"momentum outside packet grid [{lo:g}, {hi:g}]")
        out = self._spline(np.clip(p, lo, hi))
        idx = np.clip(np.searchsorted(self.p, p), 1, len(self.p) - 1)
        for j in (idx - 1, idx):
            hit = np.abs(self.p[j] - p) <= tol
            out[hit] = self.amplitudes[j[hit]]
        return out


@dataclass(frozen=True)
class GaussianSpec:
    """psi(p) ~ exp(-(p - p0)^2 / (2 sigma_p^2)) exp(-i p x0 / hbar).

    ``sigma_p`` is the amplitude width, so |psi|^2 has standard deviation
    sigma_p / sqrt(2) and the position-space amplitude width is hbar/sigma_p.
    The sign of p0 sets the direction.
    """

    p0: float
    sigma_p: float
    x0: float = 0.0
    units: UnitSystem = field(default_factory=UnitSystem)
    directionality: float = 5.0

    def __post_init__(self):
        if not self.sigma_p > 0:
            raise ValueError(f"sigma_p must be positive, got {self.sigma_p}")
        if abs(self.p0) < self.directionality * self.sigma_p:
            raise DirectionalityViolation(
                f"|p0|/sigma_p = {abs(self.p0) / self.sigma_p:.3g} is below {self.directionality:g}"
            )

    @property
    def direction(self):
        return 1 if self.p0 > 0 else -1

    def amplitude(self, p):
        """Analytically normalized amplitude (no truncation)."""
        p = np.asarray(p, dtype=float)
        s = self.sigma_p
        env = (np.pi * s**2) ** -0.25 * np.exp(-((p - self.p0) ** 2) / (2 * s**2))
        return env * np.exp(-1j * p * self.x0 / self.units.hbar)

    def mass_outside(self, lo, hi):
        """Probability of |psi|^2 outside [lo, hi]."""
        s = self.sigma_p / np.sqrt(2.0)
        return float(ndtr((lo - self.p0) / s) + ndtr((self.p0 - hi) / s))


def build_gaussian(spec, grid=None, n=4096):
    """Directed Gaussian packet on ``grid``, renormalized after truncation."""
    if grid is None:
        grid = MomentumGrid.for_gaussian(spec.p0, spec.sigma_p, n)
    d = spec.direction
    if grid.direction != d:
        raise EmptyGrid(f"grid does not lie on the {d:+d} momentum half-line")
    c, s = abs(spec.p0), spec.sigma_p
    need_lo = max(c - GRID_REACH * s, LOW_FLOOR * c)
    need_hi = c + GRID_REACH * s
    q = d * grid.samples
    slack = max(grid.spacing, 1e-3 * s)
    if q.min() > need_lo + slack or q.max() < need_hi - slack:
        raise EmptyGrid(
            f"grid [{q.min():g}, {q.max():g}] does not cover [{need_lo:g}, {need_hi:g}]"
        )
    lost = spec.mass_outside(grid.samples[0], grid.samples[-1])
    if lost > TRUNCATION_LIMIT:
        raise DirectionalityViolation(
            f"truncating to the {d:+d} half-line discards probability {lost:.3g}"
        )
    psi = spec.amplitude(grid.samples)
    psi = psi / np.sqrt(np.sum(grid.weights * np.abs(psi) ** 2))
    return WavePacket(grid, psi, d, spec.units, truncated_mass=lost)


def two_mode_packet(p1, p2, sigma_p, weight, x0=0.0, units=None, n=4096):
    """Superposition of two Gaussians centred on p1 and p2 at the same x0.

    ``weight`` is the amplitude of the p2 mode relative to the p1 mode.  With
    both momenta positive and p1/p2 < weight < 1 the plane-wave current has
    negative stretches even though every component moves right.
    """
    units = units or UnitSystem()
    first = GaussianSpec(p1, sigma_p, x0, units)
    second = GaussianSpec(p2, sigma_p, x0, units)
    if first.direction != second.direction:
        raise DirectionalityViolation("both modes must move in the same direction")
    lo, hi = sorted((abs(p1), abs(p2)))
    grid = MomentumGrid.uniform(max(lo - GRID_REACH * sigma_p, LOW_FLOOR * lo),
                                hi + GRID_REACH * sigma_p, n)
    if first.direction < 0:
        grid = grid.mirrored()
    lost = first.mass_outside(grid.samples[0], grid.samples[-1])
    if lost > TRUNCATION_LIMIT:
        raise DirectionalityViolation(
            f"truncating to the {first.direction:+d} half-line discards probability {lost:.3g}"
        )
    return packet_from_function(lambda p: first.amplitude(p) + weight * second.amplitude(p),
                                grid, units, truncated_mass=lost)


def packet_from_function(func, grid, units=None, normalize=True, **kw):
    """Sample an arbitrary amplitude function on a directed grid."""
    units = units or UnitSystem()
    psi = np.asarray(func(grid.samples), dtype=complex)
    if normalize:
        nrm = np.sum(grid.weights * np.abs(psi) ** 2)
        if nrm == 0:
            raise ValueError("cannot normalize a zero packet")
        psi = psi / np.sqrt(nrm)
    return WavePacket(grid, psi, grid.direction, units, **kw)


def energy_amplitude(packet, E):
    """<E, +-|psi> = (m / 2E)^(1/4) psi(+-sqrt(2 m E))."""
    E = np.asarray(E, dtype=float)
    if np.any(E <= 0):
        raise OutOfSupport("energy must be positive")
    m = packet.units.mass
    p = packet.direction * np.sqrt(2 * m * E)
    val = (m / (2 * E)) ** 0.25 * packet.interpolate(p)
    return val[0] if val.size == 1 and E.ndim == 0 else val


def total_probability(packet):
    return packet.norm


def translate(packet, X):
    """Packet seen from a detector at X: amplitudes times exp(i p X / hbar)."""
    if X == 0:
        return packet
    phase = np.exp(1j * packet.p * X / packet.units.hbar)
    return packet.with_amplitudes(packet.amplitudes * phase)
