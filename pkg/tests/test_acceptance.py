"""Acceptance criteria, one test per criterion, at the stated tolerances.

Run with ``pytest tests/test_acceptance.py``; the terminal summary prints one
PASS/FAIL line per criterion.  Frozen reference numbers come from the mpmath
oracles kept outside the package and are quoted next to each constant.
"""
import sys
import time

import numpy as np
import pytest

from arrivaltime import (
    GaussianSpec,
    MomentumGrid,
    PotentialSpec,
    arrival_distribution,
    barrier_arrival_distribution,
    build_gaussian,
    mean_arrival,
    moment_report,
    solve_coefficients,
    time_shift,
    transmitted_packet,
)
from arrivaltime import config as config_mod
from arrivaltime.evolve import (
    AbsorberSpec,
    SpaceGrid,
    _band,
    current,
    current_minimum,
    flux_mean_arrival,
    flux_oracle,
    norm,
    propagate,
    throughput,
    to_position,
    tune_absorber,
)
from arrivaltime.pipelines import backflow_demo, run_barrier, run_free, run_uncertainty
from arrivaltime.scattering import minimum_detector, presets, transmittance

# mpmath oracles (30 digits), hbar = m = 1
MEAN_X0 = 4.02030777500788224              # p0=5, sigma_p=0.5, x0=-20, X=0
T2_V1_P2 = 0.891297217141772952632         # closed-form |T|^2, V0=1, a=1, p=2
TRANSMITTANCE_V10 = 0.633442917952011297   # p0=5, sigma_p=0.5 through V0=10, a=1
SCAN_MIN_PRODUCT = 0.500156284975222393    # p0=10, sigma_p=0.1, x0=-20, X=0
BACKFLOW_MIN_J = -0.116338841870635390     # two-mode preset, continuous minimum over t
BACKFLOW_T_STAR = -0.0870953020391090324   # J is even in t here, so +t_star is a minimum too

# regression value produced by this package (seeded ensemble)
ENSEMBLE_MIN_PRODUCT_SEED0 = 0.523946634743408


def quasi_classical():
    return build_gaussian(GaussianSpec(5.0, 0.5, -20.0))


def analytic_gaussian(x, t, p0, s, x0):
    """Closed-form free evolution of exp(-(p-p0)^2/(2 s^2)) e^{-i p x0}."""
    a = 1 / (2 * s**2) + 0.5j * t
    b = p0 / s**2 + 1j * (x - x0)
    pref = (np.pi * s**2) ** -0.25 / np.sqrt(2 * np.pi) * np.sqrt(np.pi / a)
    return pref * np.exp(b**2 / (4 * a) - p0**2 / (2 * s**2))


def closed_form_t2(p, V0, a):
    E = p**2 / 2
    k = np.sqrt(2 * np.abs(E - V0))
    s2 = np.where(E > V0, np.sin(k * a) ** 2, np.sinh(k * a) ** 2)
    return 1 / (1 + V0**2 * s2 / (4 * E * np.abs(E - V0)))


@pytest.mark.criterion(1, "free normalization: total = 1 +- 1e-6 in under 1 s")
def test_criterion_01_free_normalization():
    start = time.perf_counter()
    packet = quasi_classical()
    dist = arrival_distribution(packet, 0.0, n=4096)
    elapsed = time.perf_counter() - start
    assert len(packet.p) == 4096 and len(dist.times) == 4096
    assert abs(dist.total - 1) <= 1e-6
    assert elapsed < 1.0


@pytest.mark.criterion(2, "classical-limit mean: 4.0 +- 1% in under 1 s")
def test_criterion_02_classical_mean():
    start = time.perf_counter()
    mean = mean_arrival(arrival_distribution(quasi_classical(), 0.0))
    elapsed = time.perf_counter() - start
    assert mean == pytest.approx(4.0, rel=0.01)
    assert mean == pytest.approx(MEAN_X0, abs=1e-10)
    assert elapsed < 1.0


@pytest.mark.criterion(3, "flux agreement: analytic vs split-operator mean, gap <= 1%, < 30 s")
def test_criterion_03_flux_agreement():
    start = time.perf_counter()
    for p0, sigma in ((5.0, 0.5), (10.0, 0.5)):
        packet = build_gaussian(GaussianSpec(p0, sigma, -20.0))
        detectors = [0.0, 10.0]
        run = flux_oracle(packet, detectors)
        for X, rec in zip(detectors, run.records):
            analytic = mean_arrival(arrival_distribution(packet, X))
            gap = abs(flux_mean_arrival(rec) - analytic) / analytic
            assert gap <= 0.01
    assert time.perf_counter() - start < 30.0


@pytest.mark.criterion(4, "unitarity: |T|^2 + |R|^2 = 1 +- 1e-10, 512 momenta, 5 presets")
def test_criterion_04_unitarity():
    grid = MomentumGrid.uniform(0.25, 12.0, 512)
    pots = presets()
    assert set(pots) == {"rectangular", "double_rectangular", "bump", "zero", "deep"}
    for name, pot in pots.items():
        c = solve_coefficients(pot, grid, check=False)
        err = np.max(np.abs(c.transmission + c.reflection - 1))
        assert err <= 1e-10, name


@pytest.mark.criterion(5, "rectangular barrier: transfer matrix |T|^2 vs closed form +- 1e-8")
def test_criterion_05_closed_form():
    packet = quasi_classical()
    c = solve_coefficients(presets()["rectangular"], packet.grid)
    assert np.max(np.abs(c.transmission - closed_form_t2(packet.p, 10.0, 1.0))) <= 1e-8
    single = solve_coefficients(PotentialSpec.rectangular(1.0, 1.0),
                                MomentumGrid.uniform(1.9, 2.1, 3))
    assert abs(single.transmission[1] - T2_V1_P2) <= 1e-8


@pytest.mark.criterion(6, "transmittance identity +- 1e-6; flux-oracle throughput +- 1e-3")
def test_criterion_06_transmittance():
    packet = quasi_classical()
    pot = presets()["rectangular"]
    c = solve_coefficients(pot, packet.grid)
    expected = float(np.sum(packet.weights * c.transmission * packet.density))
    assert expected == pytest.approx(TRANSMITTANCE_V10, rel=1e-9)
    assert transmittance(packet, c) == pytest.approx(expected, rel=1e-14)
    assert transmitted_packet(packet, c).norm == pytest.approx(expected, rel=1e-14)
    X = minimum_detector(pot, packet)
    dist = barrier_arrival_distribution(packet, c, X, potential=pot)
    assert abs(dist.total - expected) <= 1e-6
    run = flux_oracle(packet, [X], pot)
    assert abs(throughput(run.records[0]) - expected) <= 1e-3


@pytest.mark.criterion(7, "barrier mean: conditional analytic vs flux oracle +- 1%, < 60 s")
def test_criterion_07_barrier_mean():
    start = time.perf_counter()
    packet = build_gaussian(GaussianSpec(5.0, 0.25, -45.0))
    pot = presets()["rectangular"]
    c = solve_coefficients(pot, packet.grid)
    X = 45.0
    assert X >= minimum_detector(pot, packet)
    analytic = mean_arrival(barrier_arrival_distribution(packet, c, X, potential=pot))
    flux = flux_mean_arrival(flux_oracle(packet, [X], pot).records[0])
    assert abs(flux - analytic) / analytic <= 0.01
    assert time.perf_counter() - start < 60.0


@pytest.mark.criterion(8, "time-translation covariance: 20 random s, node deviation <= 1e-8")
def test_criterion_08_covariance():
    packet = quasi_classical()
    base = arrival_distribution(packet, 0.0)
    rng = np.random.default_rng(2024)
    worst = 0.0
    for s in rng.uniform(-5.0, 5.0, 20):
        moved = arrival_distribution(time_shift(packet, s), 0.0, base.times.shifted(s))
        worst = max(worst, float(np.max(np.abs(moved.values - base.values))))
    assert worst <= 1e-8


@pytest.mark.criterion(9, "uncertainty: Delta E Delta t >= hbar/2 - 1e-6, 100 free + 100 transmitted")
def test_criterion_09_uncertainty():
    floor = 0.5 - 1e-6
    free = run_uncertainty(config_mod.parse_text("uncertainty.members = 100\n"), seed=0)
    products = [row[7] for row in free.table("uncertainty").rows]
    assert len(products) == 100 and min(products) >= floor
    assert min(products) == pytest.approx(ENSEMBLE_MIN_PRODUCT_SEED0, rel=1e-9)
    barrier = run_uncertainty(config_mod.parse_text(
        "uncertainty.members = 100\nuncertainty.barrier = true\n"
        "potential.kind = rectangular\npotential.height = 10\n"), seed=1)
    products = [row[7] for row in barrier.table("uncertainty").rows]
    assert len(products) == 100 and min(products) >= floor
    # scan over sigma_p at fixed p0 = 10: the minimum sits at the narrowest width
    scan = []
    for sigma in np.linspace(0.1, 2.0, 20):
        pk = build_gaussian(GaussianSpec(10.0, sigma, -20.0))
        scan.append(moment_report(pk, arrival_distribution(pk, 0.0)).product)
    assert min(scan) >= floor
    assert 0.5 <= min(scan) <= 0.6
    assert min(scan) == pytest.approx(SCAN_MIN_PRODUCT, rel=1e-9)


@pytest.mark.criterion(10, "backflow: min Pi >= 0 while min J < 0 in the oracle run")
def test_criterion_10_backflow():
    packet, dist, rec = backflow_demo()
    assert np.all(packet.p > 0)
    assert dist.values.min() >= 0
    assert rec.current.min() < 0
    # the samples see the dip from just above; the refined minimum is the continuous one
    assert rec.current.min() >= BACKFLOW_MIN_J
    t_star, j_star = current_minimum(rec)
    assert abs(t_star) == pytest.approx(abs(BACKFLOW_T_STAR), abs=1e-6)
    assert j_star == pytest.approx(BACKFLOW_MIN_J, rel=1e-7)
    grid = SpaceGrid.covering(-40.0, 40.0, 0.05)
    exact = current(to_position(packet, grid, BACKFLOW_T_STAR), grid, 0.0)
    assert exact == pytest.approx(BACKFLOW_MIN_J, abs=1e-10)


@pytest.mark.criterion(11, "free-limit degeneracy: V = 0 barrier pipeline equals free to 1e-12")
def test_criterion_11_free_limit():
    text = "detectors.positions = 0, 10\n"
    free = run_free(config_mod.parse_text(text))
    barrier = run_barrier(config_mod.parse_text(
        text + "potential.kind = rectangular\npotential.height = 0\n"))
    for i in range(2):
        a = np.array(free.table(f"distribution_{i}").rows)
        b = np.array(barrier.table(f"distribution_{i}").rows)
        assert a.shape == b.shape
        assert np.max(np.abs(a - b)) <= 1e-12
    ma = np.array(free.table("moments").rows)
    mb = np.array(barrier.table("moments").rows)
    assert np.max(np.abs(ma - mb)) <= 1e-12


@pytest.mark.criterion(12, "split-operator: norm 1e-10, absorber leakage < 1e-6, analytic 1e-6")
def test_criterion_12_split_operator():
    packet = quasi_classical()
    grid = SpaceGrid.covering(-60.0, 60.0, 0.05)
    psi0 = to_position(packet, grid)
    for _, last in propagate(psi0, grid, 0.0005, 10_000):
        pass
    assert abs(norm(last, grid) - 1) <= 1e-10
    assert np.max(np.abs(last - analytic_gaussian(grid.x, 5.0, 5.0, 0.5, -20.0))) <= 1e-6

    wide = SpaceGrid.covering(-60.0, 100.0, 0.05)
    band, weights = _band(packet)
    right, leak = tune_absorber(30.0, 50.0, 75.0, band, weights)
    assert leak < 1e-6
    left = AbsorberSpec(-40.0, -60.0, right.strength)
    for _, last in propagate(to_position(packet, wide), wide, 0.005, 5000,
                             absorbers=(right, left)):
        pass
    assert norm(last, wide) < 1e-6


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
