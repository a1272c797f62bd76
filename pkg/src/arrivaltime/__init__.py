"""Arrival-time distributions for free and scattered wave packets in one dimension."""
from .arrival import (
    ArrivalDistribution,
    MomentReport,
    TimeGrid,
    arrival_amplitude,
    arrival_distribution,
    mean_arrival,
    moment_report,
    time_reverse,
    time_shift,
)
from .core import (
    GaussianSpec,
    MomentumGrid,
    UnitSystem,
    WavePacket,
    build_gaussian,
    energy_amplitude,
    total_probability,
    two_mode_packet,
)
from .scattering import (
    PotentialSpec,
    ScatteringCoefficients,
    barrier_arrival_distribution,
    outgoing_asymptote,
    solve_coefficients,
    transmitted_packet,
)

__version__ = "0.1.0"
