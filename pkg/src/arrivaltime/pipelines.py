"""Batch pipelines behind the command line: free, barrier, compare, uncertainty."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .arrival import TimeGrid, arrival_distribution, mean_arrival, moment_report
from .config import ExperimentConfig
from .core import GaussianSpec, UnitSystem, build_gaussian, two_mode_packet
from .errors import ConfigInvalid, NotAsymptotic
from .evolve import current_minimum, flux_mean_arrival, flux_oracle, throughput
from .scattering import (
    PotentialSpec,
    minimum_detector,
    solve_coefficients,
    transmittance,
    transmitted_packet,
)

#: Two-mode packet whose current turns negative at its centre.
BACKFLOW_PRESET = {"p1": 3.0, "p2": 9.0, "sigma_p": 0.3, "weight": 0.6, "x0": 0.0, "detector": 0.0}


@dataclass
class Table:
    name: str
    header: dict
    columns: tuple = ()
    rows: list = field(default_factory=list)


@dataclass
class Verdict:
    name: str
    passed: bool
    detail: str


@dataclass
class ResultBundle:
    kind: str
    tables: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(v.passed for v in self.verdicts)

    def table(self, name):
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)


def _pmap(func, items):
    """Ordered map over items on a thread pool; numpy releases the GIL in its kernels."""
    items = list(items)
    if len(items) < 2:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(len(items), os.cpu_count() or 1)) as pool:
        return list(pool.map(func, items))


def units_of(cfg):
    return UnitSystem(cfg["units.hbar"], cfg["units.mass"])


def build_packet(cfg):
    u = units_of(cfg)
    p0 = cfg.direction * abs(cfg["packet.p0"])
    if cfg["packet.kind"] == "two_mode":
        p2 = cfg.direction * abs(cfg["packet.second_p0"])
        return two_mode_packet(p0, p2, cfg["packet.sigma_p"], cfg["packet.second_weight"],
                               cfg["packet.x0"], u, cfg["packet.n"])
    spec = GaussianSpec(p0, cfg["packet.sigma_p"], cfg["packet.x0"], u)
    return build_gaussian(spec, n=cfg["packet.n"])


def build_potential(cfg):
    kind = cfg["potential.kind"]
    h, w, left = cfg["potential.height"], cfg["potential.width"], cfg["potential.left"]
    if kind == "none":
        return None
    if kind == "rectangular":
        return PotentialSpec.rectangular(h, w, left)
    if kind == "double_rectangular":
        return PotentialSpec.double_rectangular(h, w, cfg["potential.gap"], left)
    if kind == "bump":
        return PotentialSpec.gaussian_bump(h, w, left)
    return PotentialSpec.piecewise(cfg["potential.segments"])


def time_grid(cfg):
    if cfg["time.policy"] == "explicit":
        return TimeGrid.uniform(cfg["time.t_min"], cfg["time.t_max"], cfg["time.n"])
    return None


def distribution_table(dist, index):
    header = {
        "detector": dist.detector,
        "direction": dist.direction,
        "points": len(dist.times),
        "weights": "trapezoid",
        "total": dist.total,
        "expected_total": dist.expected_total,
        "truncation": dist.truncation,
    }
    rows = list(zip(dist.times.samples.tolist(), dist.values.tolist()))
    return Table(f"distribution_{index}", header, ("tau", "density"), rows)


def _moments(packet, dists):
    cols = ("detector", "mean", "spread", "energy_mean", "energy_spread", "product",
            "truncation")
    rows = []
    for d in dists:
        r = moment_report(packet, d)
        rows.append((d.detector, r.mean, r.spread, r.energy_mean, r.energy_spread, r.product,
                     r.truncation))
    return Table("moments", {"hbar": packet.units.hbar}, cols, rows)


def _provenance(cfg, kind, packet, extra=None):
    prov = {
        "command": kind,
        "version": __version__,
        "momentum_points": len(packet.p),
        "time_points": cfg["time.n"],
        "time_policy": cfg["time.policy"],
    }
    for key in sorted(cfg.values):
        if key.startswith("tolerance."):
            prov[key] = cfg[key]
    for line in cfg.echo():
        key, val = line.split(" = ", 1)
        prov["config." + key] = val
    prov.update(extra or {})
    return prov


def _check_normalization(dists, tol, bundle):
    for d in dists:
        gap = abs(d.total - d.expected_total)
        bundle.verdicts.append(Verdict(f"normalization X={d.detector:g}", gap <= tol,
                                       f"|total - norm| = {gap:.3g} (tol {tol:g})"))


def _flux_comparison(cfg, packet, analytic, potential, bundle):
    """Analytic means against the split-operator flux oracle at every detector."""
    detectors = [d.detector for d in analytic]
    run = flux_oracle(packet, detectors, potential, dx=cfg["oracle.dx"], dt=cfg["oracle.dt"])
    tol = cfg["tolerance.flux_gap"]
    cols = ("detector", "analytic_mean", "flux_mean", "gap", "truncation", "throughput",
            "min_density", "min_current")
    rows = []
    for d, rec in zip(analytic, run.records):
        a = mean_arrival(d)
        f = flux_mean_arrival(rec, packet.direction)
        gap = abs(a - f) / abs(a) if a != 0 else abs(f)
        rows.append((d.detector, a, f, gap, d.truncation, packet.direction * throughput(rec),
                     float(d.values.min()), float(rec.current.min())))
        bundle.verdicts.append(Verdict(f"flux gap X={d.detector:g}", gap <= tol,
                                       f"relative gap {gap:.3g} (tol {tol:g})"))
    header = {"space_points": run.grid.n, "dx": run.grid.dx, "dt": run.dt,
              "absorber_strength": run.absorbers[0].strength, "absorber_leakage": run.leakage}
    bundle.tables.append(Table("comparison", header, cols, rows))
    return run


def run_free(cfg: ExperimentConfig) -> ResultBundle:
    if cfg.has_potential:
        raise ConfigInvalid("potential.kind", "the free pipeline takes no potential")
    packet = build_packet(cfg)
    grid = time_grid(cfg)
    dists = _pmap(lambda X: arrival_distribution(packet, X, grid, n=cfg["time.n"]),
                  cfg["detectors.positions"])
    bundle = ResultBundle("free")
    bundle.tables += [distribution_table(d, i) for i, d in enumerate(dists)]
    bundle.tables.append(_moments(packet, dists))
    _check_normalization(dists, cfg["tolerance.normalization"], bundle)
    if cfg["oracle.enabled"]:
        _flux_comparison(cfg, packet, dists, None, bundle)
    bundle.provenance = _provenance(cfg, "free", packet)
    return bundle


def run_barrier(cfg: ExperimentConfig) -> ResultBundle:
    if not cfg.has_potential:
        raise ConfigInvalid("potential.kind", "the barrier pipeline needs a potential")
    packet = build_packet(cfg)
    potential = build_potential(cfg)
    u = packet.units
    xmin = minimum_detector(potential, packet)
    for X in cfg["detectors.positions"]:
        if X < xmin:
            raise NotAsymptotic(f"detector at {X:g} is inside the asymptotic margin; "
                                f"need X >= {xmin:.6g}", minimum_x=xmin)
    coeffs = solve_coefficients(potential, packet.grid, u, check=False)
    bundle = ResultBundle("barrier")
    unit_err = float(np.max(np.abs(coeffs.transmission + coeffs.reflection - 1)))
    tol_u = cfg["tolerance.unitarity"]
    bundle.verdicts.append(Verdict("unitarity", unit_err <= tol_u,
                                   f"max ||T|^2 + |R|^2 - 1| = {unit_err:.3g} (tol {tol_u:g})"))
    tr = transmitted_packet(packet, coeffs)
    grid = time_grid(cfg)
    dists = _pmap(lambda X: arrival_distribution(tr, X, grid, n=cfg["time.n"]),
                  cfg["detectors.positions"])
    bundle.tables += [distribution_table(d, i) for i, d in enumerate(dists)]
    bundle.tables.append(Table(
        "coefficients", {"points": len(packet.p)}, ("p", "T_re", "T_im", "R_re", "R_im"),
        list(zip(packet.p.tolist(), coeffs.T.real.tolist(), coeffs.T.imag.tolist(),
                 coeffs.R.real.tolist(), coeffs.R.imag.tolist()))))
    bundle.tables.append(_moments(tr, dists))

    trans = transmittance(packet, coeffs)
    refl = float(np.sum(packet.weights * coeffs.reflection * packet.density))
    tol = cfg["tolerance.normalization"]
    rows = []
    for d in dists:
        gap = abs(d.total - trans)
        rows.append((d.detector, d.total, d.truncation))
        bundle.verdicts.append(Verdict(f"transmittance X={d.detector:g}", gap <= tol,
                                       f"|captured - transmittance| = {gap:.3g} (tol {tol:g})"))
    header = {"transmittance": trans, "reflectance": refl, "unitarity_error": unit_err,
              "minimum_detector": xmin}
    bundle.tables.append(Table("transmittance", header,
                               ("detector", "captured", "truncation"), rows))
    if cfg["oracle.enabled"]:
        run = _flux_comparison(cfg, packet, dists, potential, bundle)
        tol_t = cfg["tolerance.throughput"]
        for rec in run.records:
            gap = abs(throughput(rec) - trans)
            bundle.verdicts.append(Verdict(f"oracle throughput X={rec.detector:g}", gap <= tol_t,
                                           f"|throughput - transmittance| = {gap:.3g} "
                                           f"(tol {tol_t:g})"))
    bundle.provenance = _provenance(cfg, "barrier", packet)
    return bundle


def backflow_demo(units=None, preset=BACKFLOW_PRESET, n=4096):
    """Two-mode right-moving packet: Pi stays non-negative while J dips below zero."""
    units = units or UnitSystem()
    packet = two_mode_packet(preset["p1"], preset["p2"], preset["sigma_p"], preset["weight"],
                             preset["x0"], units, n)
    X = preset["detector"]
    dist = arrival_distribution(packet, X)
    rec = flux_oracle(packet, [X]).records[0]
    return packet, dist, rec


def run_compare(cfg: ExperimentConfig) -> ResultBundle:
    if not cfg["oracle.enabled"]:
        raise ConfigInvalid("oracle.enabled", "compare needs the flux oracle; set it to true")
    bundle = run_barrier(cfg) if cfg.has_potential else run_free(cfg)
    bundle.kind = "compare"
    bundle.provenance["command"] = "compare"
    if cfg["oracle.backflow"]:
        _, dist, rec = backflow_demo(units_of(cfg))
        min_pi, min_j = float(dist.values.min()), float(rec.current.min())
        t_star, j_star = current_minimum(rec)
        bundle.tables.append(Table("backflow", dict(BACKFLOW_PRESET),
                                   ("detector", "min_density", "min_current", "refined_time",
                                    "refined_min_current", "throughput"),
                                   [(dist.detector, min_pi, min_j, t_star, j_star,
                                     throughput(rec))]))
        bundle.verdicts.append(Verdict("backflow positivity", min_pi >= 0,
                                       f"min density {min_pi:.3g}"))
        bundle.verdicts.append(Verdict("backflow current", min_j < 0,
                                       f"min current {min_j:.6g}"))
    return bundle


def _member(args):
    p0, sigma, x0, X, units, n, potential = args
    packet = build_gaussian(GaussianSpec(p0, sigma, x0, units), n=n)
    if potential is not None:
        coeffs = solve_coefficients(potential, packet.grid, units)
        X = max(X, minimum_detector(potential, packet))
        packet = transmitted_packet(packet, coeffs)
    dist = arrival_distribution(packet, X)
    r = moment_report(packet, dist)
    return X, r


def run_uncertainty(cfg: ExperimentConfig, seed: int = 0) -> ResultBundle:
    members = cfg["uncertainty.members"]
    if members < 1:
        raise ConfigInvalid("uncertainty.members", "the ensemble is empty")
    potential = None
    if cfg["uncertainty.barrier"]:
        if not cfg.has_potential:
            raise ConfigInvalid("uncertainty.barrier", "needs potential.kind to be set")
        potential = build_potential(cfg)
    u = units_of(cfg)
    rng = np.random.default_rng(seed)
    p0 = rng.uniform(*cfg["uncertainty.p0"], size=members)
    ratio = rng.uniform(*cfg["uncertainty.ratio"], size=members)
    x0 = rng.uniform(*cfg["uncertainty.x0"], size=members)
    X = cfg["uncertainty.detector"]
    jobs = [(p0[i], p0[i] / ratio[i], x0[i], X, u, cfg["packet.n"], potential)
            for i in range(members)]
    results = _pmap(_member, jobs)
    rows = []
    for i, (Xi, r) in enumerate(results):
        rows.append((i, p0[i], p0[i] / ratio[i], x0[i], Xi, r.energy_spread, r.spread,
                     r.product / u.hbar, r.truncation))
    products = np.array([r.product for _, r in results])
    k = int(np.argmin(products))
    floor = 0.5 * u.hbar - cfg["tolerance.uncertainty"]
    bundle = ResultBundle("uncertainty")
    header = {"members": members, "seed": seed, "barrier": potential is not None,
              "min_product_over_hbar": products[k] / u.hbar, "argmin": k}
    bundle.tables.append(Table("uncertainty", header,
                               ("member", "p0", "sigma_p", "x0", "detector", "energy_spread",
                                "time_spread", "product_over_hbar", "truncation"), rows))
    bundle.verdicts.append(Verdict("uncertainty bound", bool(products.min() >= floor),
                                   f"min Delta E Delta t / hbar = {products[k] / u.hbar:.9g}"))
    bundle.provenance = _provenance(cfg, "uncertainty", build_gaussian(
        GaussianSpec(p0[0], p0[0] / ratio[0], x0[0], u), n=cfg["packet.n"]), {"seed": seed})
    return bundle


RUNNERS = {"free": run_free, "barrier": run_barrier, "compare": run_compare,
           "uncertainty": run_uncertainty}
