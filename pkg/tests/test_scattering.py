import numpy as np
import pytest
from hypothesis import given, strategies as st

from arrivaltime import (
    GaussianSpec,
    MomentumGrid,
    PotentialSpec,
    arrival_distribution,
    barrier_arrival_distribution,
    build_gaussian,
    mean_arrival,
    outgoing_asymptote,
    solve_coefficients,
    total_probability,
    transmitted_packet,
)
from arrivaltime.scattering import (
    ScatteringCoefficients,
    minimum_detector,
    presets,
    transmittance,
)
from arrivaltime.errors import GridMismatch, NonFiniteSupport, NotAsymptotic

# mpmath: closed-form |T|^2 for V0=1, a=1, p=2
ORACLE_T2_V1 = 0.891297217141772952632
# mpmath quadrature of |T|^2 |psi|^2 for p0=5, sigma_p=0.5 behind a unit-width barrier
ORACLE_TRANSMITTANCE_V10 = 0.633442917952011297
ORACLE_TRANSMITTANCE_V50 = 1.03878319128251766e-7


def closed_form_t2(p, V0, a):
    """Textbook rectangular-barrier transmission probability, hbar = m = 1."""
    E = p**2 / 2
    over = E > V0
    k = np.sqrt(2 * np.abs(E - V0))
    s2 = np.where(over, np.sin(k * a) ** 2, np.sinh(k * a) ** 2)
    return 1 / (1 + V0**2 * s2 / (4 * E * np.abs(E - V0)))


@pytest.fixture(scope="module")
def packet():
    return build_gaussian(GaussianSpec(5.0, 0.5, -20.0))


def test_free_potential_is_transparent(packet):
    c = solve_coefficients(PotentialSpec.zero(), packet.grid)
    assert np.all(c.T == 1) and np.all(c.R == 0)


def test_rectangular_barrier_at_p2():
    c = solve_coefficients(PotentialSpec.rectangular(1.0, 1.0), MomentumGrid.uniform(1.9, 2.1, 3))
    assert c.transmission[1] == pytest.approx(ORACLE_T2_V1, abs=1e-12)


def test_rectangular_barrier_band_matches_closed_form(packet):
    for V0 in (1.0, 10.0, 50.0):
        c = solve_coefficients(PotentialSpec.rectangular(V0, 1.0), packet.grid)
        ref = closed_form_t2(packet.p, V0, 1.0)
        assert np.max(np.abs(c.transmission - ref)) <= 1e-8


def test_sampled_step_agrees_with_transfer_matrices(packet):
    exact = solve_coefficients(PotentialSpec.rectangular(10.0, 1.0), packet.grid)
    sampled = solve_coefficients(PotentialSpec.sampled([0, 0, 1, 1], [0, 10, 10, 0]), packet.grid)
    assert np.max(np.abs(sampled.T - exact.T)) <= 1e-8
    assert np.max(np.abs(sampled.R - exact.R)) <= 1e-8


def test_presets_are_unitary():
    grid = MomentumGrid.uniform(0.5, 12.0, 512)
    for name, pot in presets().items():
        c = solve_coefficients(pot, grid, check=False)
        assert np.max(np.abs(c.transmission + c.reflection - 1)) <= 1e-10, name


def test_unbounded_support_is_rejected():
    with pytest.raises(NonFiniteSupport):
        PotentialSpec.piecewise([(0.0, np.inf, 1.0)])


def test_unit_transmission_is_identity(packet):
    ones = ScatteringCoefficients(packet.grid, np.ones(len(packet.p), complex),
                                  np.zeros(len(packet.p), complex))
    tr = transmitted_packet(packet, ones)
    assert np.array_equal(tr.amplitudes, packet.amplitudes)
    _, refl = outgoing_asymptote(packet, ones)
    assert np.all(refl.amplitudes == 0)


def test_zero_transmission_kills_packet(packet):
    zeros = ScatteringCoefficients(packet.grid, np.zeros(len(packet.p), complex),
                                   np.ones(len(packet.p), complex))
    assert total_probability(transmitted_packet(packet, zeros)) == 0
    assert transmittance(packet, zeros) == 0


def test_transmittance_matches_quadrature_oracle(packet):
    for V0, ref in ((10.0, ORACLE_TRANSMITTANCE_V10), (50.0, ORACLE_TRANSMITTANCE_V50)):
        c = solve_coefficients(PotentialSpec.rectangular(V0, 1.0), packet.grid)
        tr = transmitted_packet(packet, c)
        assert total_probability(tr) == pytest.approx(ref, rel=1e-9)
        assert total_probability(tr) == pytest.approx(
            np.sum(packet.weights * c.transmission * packet.density), rel=1e-14)


def test_outgoing_probability_sums_to_one(packet):
    for pot in presets().values():
        t, r = outgoing_asymptote(packet, solve_coefficients(pot, packet.grid))
        assert total_probability(t) + total_probability(r) == pytest.approx(1, abs=1e-8)
        assert r.direction == -1


def test_deep_barrier_still_has_a_mean(packet):
    pot = presets()["deep"]
    c = solve_coefficients(pot, packet.grid)
    assert transmittance(packet, c) < 1e-4
    X = minimum_detector(pot, packet)
    d = barrier_arrival_distribution(packet, c, X, potential=pot)
    assert np.isfinite(mean_arrival(d)) and mean_arrival(d) > 0


def test_transmitted_total_equals_transmittance(packet):
    pot = presets()["rectangular"]
    c = solve_coefficients(pot, packet.grid)
    d = barrier_arrival_distribution(packet, c, minimum_detector(pot, packet), potential=pot)
    assert d.total == pytest.approx(transmittance(packet, c), abs=1e-6)
    assert d.total == pytest.approx(total_probability(transmitted_packet(packet, c)), abs=1e-8)


def test_transparent_barrier_reproduces_free_distribution(packet):
    ones = ScatteringCoefficients(packet.grid, np.ones(len(packet.p), complex),
                                  np.zeros(len(packet.p), complex))
    free = arrival_distribution(packet, 0.0)
    behind = barrier_arrival_distribution(packet, ones, 0.0)
    assert np.array_equal(free.values, behind.values)


def test_detector_inside_margin_reports_minimum(packet):
    pot = presets()["rectangular"]
    c = solve_coefficients(pot, packet.grid)
    with pytest.raises(NotAsymptotic) as err:
        barrier_arrival_distribution(packet, c, 2.0, potential=pot)
    assert err.value.minimum_x == pytest.approx(minimum_detector(pot, packet))


def test_coarser_coefficient_grid_is_interpolated(packet):
    pot = presets()["rectangular"]
    fine = solve_coefficients(pot, packet.grid)
    coarse = solve_coefficients(pot, MomentumGrid.uniform(0.1, 10.0, 20000))
    assert transmittance(packet, coarse) == pytest.approx(transmittance(packet, fine), rel=1e-7)
    short = solve_coefficients(pot, MomentumGrid.uniform(4.0, 6.0, 100))
    with pytest.raises(GridMismatch):
        transmittance(packet, short)


@given(V0=st.floats(-20.0, 60.0), a=st.floats(0.05, 3.0), gap=st.floats(0.0, 2.0))
def test_real_potentials_are_unitary(V0, a, gap):
    grid = MomentumGrid.uniform(0.2, 15.0, 128)
    for pot in (PotentialSpec.rectangular(V0, a), PotentialSpec.double_rectangular(V0, a, gap)):
        c = solve_coefficients(pot, grid, check=False)
        assert np.max(np.abs(c.transmission + c.reflection - 1)) <= 1e-10


@given(heights=st.lists(st.floats(-10.0, 30.0), min_size=1, max_size=6))
def test_piecewise_staircases_are_unitary(heights):
    segs = [(i * 0.4, (i + 1) * 0.4, h) for i, h in enumerate(heights)]
    c = solve_coefficients(PotentialSpec.piecewise(segs), MomentumGrid.uniform(0.3, 12.0, 96),
                           check=False)
    assert np.max(np.abs(c.transmission + c.reflection - 1)) <= 1e-10
