"""Time-domain oracle: split-operator evolution and detector flux.

Nothing here uses the arrival-time kernels; the module only borrows the
arrival module's window estimate to decide how long to run.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from ._fourier import chirp_z
from .arrival import arrival_distribution, free_evolve
from .core import UnitSystem
from .errors import AliasingRisk, StabilityViolation, ZeroThroughput
from .scattering import solve_coefficients, transfer_coefficients, transmitted_packet


#: Space step times the wavenumber of the largest potential jump.
JUMP_RESOLUTION = 0.07
#: Cells crossed per step at the jump velocity hbar k_jump / m.
JUMP_COURANT = 0.7


def _jump_wavenumber(potential, edges, units):
    eps = 1e-9 * max(1.0, float(np.max(np.abs(edges))))
    jump = np.max(np.abs(potential(edges + eps) - potential(edges - eps)))
    return max(np.sqrt(2 * units.mass * jump) / units.hbar, 1e-300)


@dataclass(frozen=True)
class SpaceGrid:
    """Periodic grid x_j = x_min + j dx, j < n."""

    x_min: float
    x_max: float
    n: int

    @classmethod
    def aligned(cls, x_lo, x_hi, dx_max, edges=()):
        """Grid covering [x_lo, x_hi] whose cells tile the intervals between ``edges``.

        Nodes sit at cell centres, so a step potential sampled on the nodes
        has its jumps exactly on cell boundaries.  When no spacing up to
        four times finer than ``dx_max`` fits every edge, only the first edge
        is matched.
        """
        edges = np.sort(np.asarray(edges, dtype=float))
        if edges.size == 0:
            return cls.covering(x_lo, x_hi, dx_max)
        span = edges[-1] - edges[0]
        dx = dx_max
        if span > 0:
            base = int(np.ceil(span / dx_max))
            for cells in range(base, 4 * base + 1):
                trial = span / cells
                k = (edges - edges[0]) / trial
                if np.all(np.abs(k - np.round(k)) < 1e-9 * cells):
                    dx = trial
                    break
        below = int(np.ceil((edges[0] - x_lo) / dx + 0.5))
        x_min = edges[0] + (0.5 - below) * dx
        n = 256
        while x_min + n * dx < x_hi:
            n *= 2
        return cls(x_min, x_min + n * dx, n)

    def __post_init__(self):
        if self.n < 256 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 256, got {self.n}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @classmethod
    def covering(cls, x_min, x_max, dx_max):
        n = 256
        while (x_max - x_min) / n > dx_max:
            n *= 2
        return cls(x_min, x_max, n)

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.n

    @property
    def x(self):
        return self.x_min + self.dx * np.arange(self.n)

    @property
    def k(self):
        return 2 * np.pi * np.fft.fftfreq(self.n, self.dx)

    def nyquist_momentum(self, units):
        return np.pi * units.hbar / self.dx


@dataclass(frozen=True)
class AbsorberSpec:
    """Imaginary potential -iW(x) with W = strength * r^4.

    r rises linearly from 0 at ``start`` to 1 at ``stop`` and stays at 1
    beyond ``stop``; ``stop < start`` makes a left-hand absorber.
    """

    start: float
    stop: float
    strength: float

    def __post_init__(self):
        if self.strength < 0:
            raise ValueError("absorber strength must be non-negative")
        if self.start == self.stop:
            raise ValueError("absorber ramp must have non-zero length")

    def __call__(self, x):
        r = np.clip((np.asarray(x, dtype=float) - self.start) / (self.stop - self.start), 0, 1)
        return self.strength * r**4


@dataclass(frozen=True, eq=False)
class FluxRecord:
    detector: float
    times: np.ndarray
    current: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("flux times must be strictly increasing")

    @property
    def weights(self):
        t = self.times
        w = np.empty_like(t)
        d = np.diff(t)
        w[0], w[-1] = d[0] / 2, d[-1] / 2
        w[1:-1] = (d[:-1] + d[1:]) / 2
        return w


def _significant_momenta(packet, rel=1e-14):
    mass = packet.weights * packet.density
    keep = mass > rel * mass.max()
    q = np.abs(packet.p[keep])
    return q.min(), q.max()


def to_position(packet, grid, t=0.0):
    """psi(x, t) of the freely evolved packet on the space grid."""
    u = packet.units
    if packet.norm > 0:
        _, qmax = _significant_momenta(packet)
        if qmax > grid.nyquist_momentum(u):
            raise AliasingRisk(f"packet momentum {qmax:g} exceeds grid Nyquist "
                               f"{grid.nyquist_momentum(u):g}")
    c = packet.weights * packet.amplitudes * np.exp(-1j * packet.energies * t / u.hbar)
    c = c / np.sqrt(u.h)
    p = packet.p
    x = grid.x
    if packet.grid.is_uniform:
        dp = p[1] - p[0]
        pre = c * np.exp(1j * np.arange(p.size) * dp * grid.x_min / u.hbar)
        raw = chirp_z(pre, grid.n, -dp * grid.dx / u.hbar)
        return np.exp(1j * p[0] * x / u.hbar) * raw
    out = np.empty(grid.n, dtype=complex)
    for s in range(0, grid.n, 512):
        out[s:s + 512] = np.exp(1j * np.outer(x[s:s + 512], p) / u.hbar) @ c
    return out


def norm(psi, grid):
    return float(grid.dx * np.sum(np.abs(psi) ** 2))


class SplitOperator:
    """Strang splitting exp(-iK dt/2) exp(-i(V - iW) dt) exp(-iK dt/2)."""

    def __init__(self, grid, dt, potential=None, absorbers=(), units=None):
        self.grid = grid
        self.dt = dt
        self.units = units = units or UnitSystem()
        if isinstance(absorbers, AbsorberSpec):
            absorbers = (absorbers,)
        self.absorbers = tuple(absorbers)
        x = grid.x
        V = np.zeros(grid.n) if potential is None else np.asarray(potential(x), dtype=float)
        W = np.zeros(grid.n)
        for a in self.absorbers:
            W += a(x)
        self.V, self.W = V, W
        p = units.hbar * grid.k
        self.p = p
        self.half_kinetic = np.exp(-1j * p**2 / (2 * units.mass) * dt / (2 * units.hbar))
        self.potential_step = np.exp(-1j * V * dt / units.hbar - W * dt / units.hbar)

    def check_stability(self, psi, rel=1e-14):
        spec = np.abs(np.fft.fft(psi)) ** 2
        keep = spec > rel * spec.sum()
        p_max = np.abs(self.p[keep]).max() if np.any(keep) else 0.0
        phase = self.dt * p_max**2 / (2 * self.units.mass * self.units.hbar)
        if phase >= 0.5:
            raise StabilityViolation(f"kinetic phase per step {phase:.3g} >= 0.5; reduce dt")

    def step(self, psi):
        psi = np.fft.ifft(self.half_kinetic * np.fft.fft(psi))
        psi = self.potential_step * psi
        return np.fft.ifft(self.half_kinetic * np.fft.fft(psi))


def propagate(psi0, grid, dt, steps, potential=None, absorbers=(), units=None,
              t0=0.0, record_every=1):
    """Yield (t, psi) for the initial state and every ``record_every`` steps."""
    prop = SplitOperator(grid, dt, potential, absorbers, units)
    psi = np.asarray(psi0, dtype=complex)
    prop.check_stability(psi)
    yield t0, psi
    for k in range(1, steps + 1):
        psi = prop.step(psi)
        if k % record_every == 0 or k == steps:
            yield t0 + k * dt, psi


def _interpolation_rows(grid, detectors):
    """Rows mapping FFT coefficients to psi and dpsi/dx at off-grid points.

    The Nyquist mode is split evenly between +-k, so a real psi interpolates
    to a real function and carries no spurious current.
    """
    d = np.atleast_1d(np.asarray(detectors, dtype=float))[:, None] - grid.x_min
    k = grid.k
    phase = np.exp(1j * k * d)
    dphase = 1j * k * phase
    ny = grid.n // 2
    kn = abs(k[ny])
    phase[:, ny] = np.cos(kn * d[:, 0])
    dphase[:, ny] = -kn * np.sin(kn * d[:, 0])
    return phase / grid.n, dphase / grid.n


def wavefunction_at(psi, grid, X, derivative="spectral"):
    """psi(X) and d psi/dx (X), spectrally interpolated or by a 4th-order stencil."""
    if derivative == "spectral":
        coef = np.fft.fft(psi)
        phase, dphase = _interpolation_rows(grid, [X])
        return (phase @ coef)[0], (dphase @ coef)[0]
    if derivative == "stencil":
        j = (X - grid.x_min) / grid.dx
        i = int(round(j))
        if abs(j - i) > 1e-9:
            raise ValueError("stencil derivative needs the detector on a grid node")
        idx = (i + np.arange(-2, 3)) % grid.n
        f = psi[idx]
        d = (f[0] - 8 * f[1] + 8 * f[3] - f[4]) / (12 * grid.dx)
        return f[2], d
    raise ValueError(f"unknown derivative {derivative!r}")


def current(psi, grid, X, units=None, derivative="spectral"):
    """J(X) = (hbar/m) Im(conj(psi) dpsi/dx)."""
    units = units or UnitSystem()
    f, df = wavefunction_at(psi, grid, X, derivative)
    return float(units.hbar / units.mass * np.imag(np.conj(f) * df))


def flux_at(trajectory, X, grid, units=None, derivative="spectral"):
    """Sample the current at X along a trajectory of (t, psi) pairs.

    The spectral route does one FFT per time step, shared by all detectors.
    """
    units = units or UnitSystem()
    detectors = np.atleast_1d(np.asarray(X, dtype=float))
    scale = units.hbar / units.mass
    if derivative == "spectral":
        phase, dphase = _interpolation_rows(grid, detectors)
    times, rows = [], []
    for t, psi in trajectory:
        times.append(t)
        if derivative == "spectral":
            coef = np.fft.fft(psi)
            f, df = phase @ coef, dphase @ coef
            rows.append(scale * np.imag(np.conj(f) * df))
        else:
            rows.append([current(psi, grid, x, units, derivative) for x in detectors])
    times = np.asarray(times)
    rows = np.asarray(rows, dtype=float)
    records = [FluxRecord(float(x), times, rows[:, i]) for i, x in enumerate(detectors)]
    return records[0] if np.ndim(X) == 0 else records


def throughput(record):
    """Signed integrated current; negative for left-moving packets."""
    return float(np.sum(record.weights * record.current))


def flux_mean_arrival(record, direction=1):
    """Flux-weighted mean time, with the current oriented along ``direction``."""
    w = direction * record.weights * record.current
    total = np.sum(w)
    if not total > 0:
        raise ZeroThroughput(f"integrated flux {total:.3g} is not positive")
    return float(np.sum(w * record.times) / total)


def current_minimum(record, points=5):
    """(t, J) at the minimum of the current, refined by a local quartic fit.

    The record only holds J on the time steps, which see a sharp dip from
    slightly above; the fit recovers the continuous minimum to O(dt^5).
    """
    J, t = record.current, record.times
    i = int(np.argmin(J))
    half = points // 2
    if i < half or i + half >= t.size:
        return float(t[i]), float(J[i])
    sl = slice(i - half, i + half + 1)
    fit = np.poly1d(np.polyfit(t[sl] - t[i], J[sl], points - 1))
    roots = fit.deriv().r
    roots = roots[np.isreal(roots)].real
    roots = roots[np.abs(roots) <= t[i + 1] - t[i]]
    if roots.size == 0:
        return float(t[i]), float(J[i])
    r = roots[np.argmin(fit(roots))]
    return float(t[i] + r), float(min(fit(r), J[i]))


def absorber_leakage(absorber, edge, momenta, weights=None, units=None, slices=400):
    """Reflected plus transmitted probability of a plane-wave band hitting the absorber.

    The ramp is sliced into constant pieces and the plateau runs to ``edge``;
    both are solved exactly with complex transfer matrices.
    """
    units = units or UnitSystem()
    momenta = np.atleast_1d(momenta)
    a, b = sorted((absorber.start, absorber.stop))
    ramp = abs(absorber.stop - absorber.start)
    plateau = abs(edge - absorber.stop)
    edges = np.linspace(0.0, ramp, slices + 1)
    mids = 0.5 * (edges[1:] + edges[:-1])
    W = absorber.strength * (mids / ramp) ** 4
    segments = [(lo, hi, -1j * w) for lo, hi, w in zip(edges[:-1], edges[1:], W)]
    if plateau > 0:
        segments.append((ramp, ramp + plateau, -1j * absorber.strength))
    T, R = transfer_coefficients(segments, momenta, units)
    leak = np.abs(T) ** 2 + np.abs(R) ** 2
    if weights is None:
        return leak
    weights = np.asarray(weights, dtype=float)
    return float(np.sum(weights * leak) / np.sum(weights))


def tune_absorber(start, stop, edge, momenta, weights, units=None,
                  strengths=np.logspace(-1, 3, 21)):
    """Strength minimizing the weighted leakage over a momentum band.

    A coarse logarithmic scan brackets the minimum, which is then polished
    by a bounded scalar search in log-strength.
    """
    def leak(log_s):
        return absorber_leakage(AbsorberSpec(start, stop, float(np.exp(log_s))),
                                edge, momenta, weights, units)

    logs = np.log(strengths)
    vals = [leak(v) for v in logs]
    i = int(np.argmin(vals))
    lo, hi = logs[max(i - 1, 0)], logs[min(i + 1, len(logs) - 1)]
    best_log, best = logs[i], vals[i]
    if hi > lo:
        res = minimize_scalar(leak, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-3})
        if res.fun < best:
            best_log, best = res.x, float(res.fun)
    return AbsorberSpec(start, stop, float(np.exp(best_log))), best


@dataclass
class OracleRun:
    records: list
    grid: SpaceGrid
    dt: float
    absorbers: tuple
    leakage: float
    final_norm: float
    windows: dict = field(default_factory=dict)


def _band(packet, n=64):
    """Coarse momentum band with probability weights for absorber tuning."""
    q = np.abs(packet.p)
    idx = np.linspace(0, q.size - 1, n).astype(int)
    return q[idx], (packet.weights * packet.density)[idx] + 1e-300


def flux_oracle(packet, detectors, potential=None, *, dx=None, dt=None,
                absorber_length=None, derivative="spectral"):
    """Evolve the packet on a grid and record J(X, t) at every detector.

    Without a potential the run starts early enough to cover every arrival
    window (free backward evolution); with a potential it starts at t = 0,
    where the packet is taken to be the in-asymptote.
    """
    u = packet.units
    detectors = [float(x) for x in np.atleast_1d(detectors)]
    if potential is not None and not potential.is_zero:
        coeffs = solve_coefficients(potential, packet.grid, u)
        seen = transmitted_packet(packet, coeffs)
    else:
        potential = None
        seen = packet
    windows = {}
    for X in detectors:
        g = arrival_distribution(seen, X).times.samples
        windows[X] = (g[0], g[-1])
    t_lo = min(w[0] for w in windows.values())
    t_hi = max(w[1] for w in windows.values())
    t_start = min(t_lo, 0.0) if potential is None else 0.0

    q_lo, q_hi = _significant_momenta(packet)
    m = u.mass
    start = free_evolve(packet, t_start)
    # Each momentum component sits near xc + p t / m; the packet's own width
    # pads that classical span.  The spread of the evolved state is not used
    # because for multimodal packets it mostly measures the mode separation.
    pad = 10 * np.sqrt(2) * packet.position_spread
    xc = packet.position_mean
    reach = packet.direction * np.array([q_lo, q_hi]) * t_start / m
    lo = [xc + reach.min() - pad] + [x - pad for x in detectors]
    hi = [xc + reach.max() + pad] + [x + pad for x in detectors]
    if potential is not None:
        s0, s1 = potential.support
        lo.append(s0 - pad)
        hi.append(s1 + pad)
    x_lo, x_hi = min(lo), max(hi)
    if absorber_length is None:
        absorber_length = max(20.0, 10 * 2 * np.pi * u.hbar / q_lo)
    plateau = absorber_length / 4
    x_min = x_lo - absorber_length - plateau
    x_max = x_hi + absorber_length + plateau
    edges = potential.breakpoints if potential is not None else ()
    if dx is None:
        dx = np.pi * u.hbar / (2.5 * q_hi)
        if len(edges):
            # A sampled step costs O((k_jump dx)^2) in the transmitted norm.
            dx = min(dx, JUMP_RESOLUTION / _jump_wavenumber(potential, edges, u))
    grid = SpaceGrid.aligned(x_min, x_max, dx, edges)
    if dt is None:
        dt = 0.1 * 2 * m * u.hbar / q_hi**2
        if len(edges):
            k_jump = _jump_wavenumber(potential, edges, u)
            dt = min(dt, JUMP_COURANT * m * grid.dx / (u.hbar * k_jump))
    steps = int(np.ceil((t_hi - t_start) / dt))

    band, bw = _band(packet)
    # Both absorbers are mirror images with plateaus at least this long, and
    # |R|^2 + |T|^2 of a mirrored barrier is unchanged, so one tuning serves both.
    plateau_min = min(grid.x_max - x_hi, x_lo - grid.x_min) - absorber_length
    right, leak = tune_absorber(0.0, absorber_length, absorber_length + plateau_min,
                                band, bw, u)
    absorbers = (AbsorberSpec(x_lo, x_lo - absorber_length, right.strength),
                 AbsorberSpec(x_hi, x_hi + absorber_length, right.strength))

    psi0 = to_position(start, grid)
    last = {}

    def tracked():
        for t, psi in propagate(psi0, grid, dt, steps, potential, absorbers, u, t_start):
            last["psi"] = psi
            yield t, psi

    records = flux_at(tracked(), detectors, grid, u, derivative)
    return OracleRun(records, grid, dt, absorbers, leak,
                     norm(last["psi"], grid), windows)
