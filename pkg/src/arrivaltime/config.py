"""Experiment configuration: flat ``section.key = value`` text, parsed strictly.

Blank lines and lines starting with ``#`` are ignored, as is anything after
an unquoted ``#`` on a value line.  Every key must appear in ``SCHEMA``;
unknown or repeated keys are errors.  Lists are comma separated and
piecewise segments are ``lo:hi:V`` triples separated by ``;``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigInvalid


def _float(key, text):
    try:
        val = float(text)
    except ValueError:
        raise ConfigInvalid(key, f"expected a number, got {text!r}") from None
    if not math.isfinite(val):
        raise ConfigInvalid(key, "must be finite")
    return val


def _int(key, text):
    try:
        return int(text)
    except ValueError:
        raise ConfigInvalid(key, f"expected an integer, got {text!r}") from None


def _bool(key, text):
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigInvalid(key, f"expected true/false, got {text!r}")


def _floats(key, text):
    parts = [s.strip() for s in text.split(",") if s.strip()]
    return tuple(_float(key, s) for s in parts)


def _pair(key, text):
    vals = _floats(key, text)
    if len(vals) != 2 or not vals[0] <= vals[1]:
        raise ConfigInvalid(key, "expected 'lo, hi' with lo <= hi")
    return vals


def _segments(key, text):
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        bits = chunk.split(":")
        if len(bits) != 3:
            raise ConfigInvalid(key, f"segment {chunk!r} is not lo:hi:V")
        out.append(tuple(_float(key, b) for b in bits))
    return tuple(out)


def _choice(*options):
    def parse(key, text):
        if text not in options:
            raise ConfigInvalid(key, f"must be one of {', '.join(options)}; got {text!r}")
        return text
    return parse


def _direction(key, text):
    val = _int(key, text)
    if val not in (1, -1):
        raise ConfigInvalid(key, "must be +1 or -1")
    return val


#: key -> (parser, default, description)
SCHEMA = {
    "units.hbar": (_float, 1.0, "reduced Planck constant"),
    "units.mass": (_float, 1.0, "particle mass"),
    "packet.kind": (_choice("gaussian", "two_mode"), "gaussian", "packet family"),
    "packet.p0": (_float, 5.0, "central momentum (signed)"),
    "packet.sigma_p": (_float, 0.5, "momentum amplitude width"),
    "packet.x0": (_float, -20.0, "position centre at t = 0"),
    "packet.direction": (_direction, None, "+1 or -1; defaults to the sign of p0"),
    "packet.n": (_int, 4096, "momentum grid points"),
    "packet.second_p0": (_float, 9.0, "two_mode: centre of the second mode"),
    "packet.second_weight": (_float, 0.6, "two_mode: relative amplitude of the second mode"),
    "potential.kind": (_choice("none", "rectangular", "double_rectangular", "bump", "piecewise"),
                       "none", "potential family"),
    "potential.height": (_float, 0.0, "barrier height"),
    "potential.width": (_float, 1.0, "barrier width (bump: Gaussian width)"),
    "potential.left": (_float, 0.0, "left edge (bump: centre)"),
    "potential.gap": (_float, 1.0, "double_rectangular: gap between barriers"),
    "potential.segments": (_segments, (), "piecewise: 'lo:hi:V; lo:hi:V'"),
    "detectors.positions": (_floats, (0.0,), "detector positions"),
    "time.policy": (_choice("auto", "explicit"), "auto", "time-grid policy"),
    "time.t_min": (_float, None, "explicit: first time"),
    "time.t_max": (_float, None, "explicit: last time"),
    "time.n": (_int, 4096, "time grid points"),
    "oracle.enabled": (_bool, False, "run the split-operator flux oracle"),
    "oracle.dx": (_float, None, "oracle space step (default from momentum content)"),
    "oracle.dt": (_float, None, "oracle time step (default from momentum content)"),
    "oracle.backflow": (_bool, False, "compare: add the two-mode backflow demonstration"),
    "tolerance.normalization": (_float, 1e-6, "free |total - 1| and transmittance identity"),
    "tolerance.flux_gap": (_float, 0.01, "relative gap between analytic and flux means"),
    "tolerance.throughput": (_float, 1e-3, "flux-oracle throughput against the transmittance"),
    "tolerance.unitarity": (_float, 1e-10, "max ||T|^2 + |R|^2 - 1|"),
    "tolerance.uncertainty": (_float, 1e-6, "slack below hbar/2 for Delta E Delta t"),
    "uncertainty.members": (_int, 100, "ensemble size"),
    "uncertainty.p0": (_pair, (5.0, 20.0), "range of |p0|"),
    "uncertainty.ratio": (_pair, (8.0, 20.0), "range of p0 / sigma_p"),
    "uncertainty.x0": (_pair, (-30.0, -10.0), "range of x0"),
    "uncertainty.detector": (_float, 0.0, "detector position (raised to the margin behind a barrier)"),
    "uncertainty.barrier": (_bool, False, "send members through the configured potential"),
    "output.format": (_choice("csv", "json"), "csv", "table format"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated settings; ``values`` holds every schema key after defaults."""

    values: dict = field(default_factory=dict)
    explicit: frozenset = frozenset()

    def __getitem__(self, key):
        return self.values[key]

    def section(self, name):
        pre = name + "."
        return {k[len(pre):]: v for k, v in self.values.items() if k.startswith(pre)}

    @property
    def direction(self):
        d = self.values["packet.direction"]
        return d if d is not None else (1 if self.values["packet.p0"] > 0 else -1)

    @property
    def has_potential(self):
        return self.values["potential.kind"] != "none"

    def echo(self):
        """Canonical ``key = value`` lines for explicitly set keys."""
        return [f"{k} = {_show(self.values[k])}" for k in sorted(self.explicit)]

    def with_values(self, **changes):
        vals = dict(self.values)
        keys = set(self.explicit)
        for k, v in changes.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigInvalid(key, "unknown key")
            vals[key] = v
            keys.add(key)
        return validate(ExperimentConfig(vals, frozenset(keys)))


def _show(v):
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return "; ".join(":".join(format(x, ".17g") for x in seg) for seg in v)
        return ", ".join(format(x, ".17g") for x in v)
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def parse_text(text):
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigInvalid(key, "unknown key")
        if key in seen:
            raise ConfigInvalid(key, "given more than once")
        seen[key] = SCHEMA[key][0](key, val)
    values = {k: spec[1] for k, spec in SCHEMA.items()}
    values.update(seen)
    return validate(ExperimentConfig(values, frozenset(seen)))


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigInvalid("config", f"cannot read {path}: {exc.strerror}") from None
    return parse_text(text)


def validate(cfg):
    """Check module preconditions field by field before any computation."""
    v = cfg.values
    for key in ("units.hbar", "units.mass", "packet.sigma_p"):
        if not v[key] > 0:
            raise ConfigInvalid(key, "must be positive")
    if v["packet.p0"] == 0:
        raise ConfigInvalid("packet.p0", "must be non-zero")
    if v["packet.direction"] is not None and v["packet.direction"] * v["packet.p0"] < 0:
        raise ConfigInvalid("packet.direction", "disagrees with the sign of packet.p0")
    ratio = abs(v["packet.p0"]) / v["packet.sigma_p"]
    if ratio < 5:
        raise ConfigInvalid("packet.sigma_p",
                            f"|p0|/sigma_p = {ratio:.3g} is below 5; the packet is not directed")
    if v["packet.n"] < 16:
        raise ConfigInvalid("packet.n", "need at least 16 momentum points")
    if v["packet.kind"] == "two_mode":
        p2 = v["packet.second_p0"]
        if p2 * v["packet.p0"] <= 0 or abs(p2) / v["packet.sigma_p"] < 5:
            raise ConfigInvalid("packet.second_p0",
                                "must share the direction of p0 and satisfy |p|/sigma_p >= 5")
        if not v["packet.second_weight"] > 0:
            raise ConfigInvalid("packet.second_weight", "must be positive")
    kind = v["potential.kind"]
    if kind in ("rectangular", "double_rectangular", "bump") and not v["potential.width"] > 0:
        raise ConfigInvalid("potential.width", "must be positive")
    if kind == "double_rectangular" and v["potential.gap"] < 0:
        raise ConfigInvalid("potential.gap", "must be non-negative")
    if kind == "piecewise":
        segs = v["potential.segments"]
        if not segs:
            raise ConfigInvalid("potential.segments", "piecewise potential needs segments")
        for lo, hi, _ in segs:
            if not hi > lo:
                raise ConfigInvalid("potential.segments", f"segment [{lo:g}, {hi:g}] is empty")
    if not v["detectors.positions"]:
        raise ConfigInvalid("detectors.positions", "need at least one detector")
    if len(set(v["detectors.positions"])) != len(v["detectors.positions"]):
        raise ConfigInvalid("detectors.positions", "positions must be distinct")
    if kind != "none" and (v["packet.p0"] < 0 or (v["packet.direction"] or 1) < 0):
        raise ConfigInvalid("packet.p0", "scattering runs need a right-moving packet (p0 > 0)")
    if v["time.n"] < 16:
        raise ConfigInvalid("time.n", "need at least 16 time points")
    if v["time.policy"] == "explicit":
        lo, hi = v["time.t_min"], v["time.t_max"]
        if lo is None or hi is None:
            raise ConfigInvalid("time.t_min" if lo is None else "time.t_max",
                                "required when time.policy = explicit")
        if not hi > lo:
            raise ConfigInvalid("time.t_max", "must exceed time.t_min")
    for key in ("oracle.dx", "oracle.dt"):
        if v[key] is not None and not v[key] > 0:
            raise ConfigInvalid(key, "must be positive")
    for key in ("tolerance.normalization", "tolerance.flux_gap", "tolerance.throughput",
                "tolerance.unitarity", "tolerance.uncertainty"):
        if not v[key] >= 0:
            raise ConfigInvalid(key, "must be non-negative")
    if v["uncertainty.members"] < 0:
        raise ConfigInvalid("uncertainty.members", "must be non-negative")
    lo, _ = v["uncertainty.p0"]
    if not lo > 0:
        raise ConfigInvalid("uncertainty.p0", "momenta must be positive")
    if v["uncertainty.ratio"][0] < 5:
        raise ConfigInvalid("uncertainty.ratio", "p0/sigma_p must stay >= 5")
    return cfg


def describe():
    """Documented key listing, one ``key = default  # description`` line per key."""
    lines = []
    for key, (_, default, text) in SCHEMA.items():
        if default is None:
            lines.append(f"# {key} =   ({text}; no default)")
        else:
            lines.append(f"{key} = {_show(default)}  # {text}")
    return "\n".join(lines)
