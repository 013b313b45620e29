"""Scenario files: INI documents parsed with :mod:`configparser`.

Schema (every key optional unless marked)::

    [scenario]
    dim = 1                   ; 1, 2 or 3
    engine = fd               ; fd (dim 1 only) or fem
    H = 5.85                  ; required, cm
    L = 0.15                  ; required for dim > 1, cm
    dx = 0.15                 ; dim 1 spacing, cm
    hx = 0.075                ; dim 2 spacings, cm
    hz = 0.15
    h = 0.075                 ; dim 3 spacing, cm
    dt = 0.25                 ; required, s
    mesh_pattern = diagonal   ; dim 2: diagonal or crossed
    ci_coefficients = new     ; fem: new or old
    mass_rule = lumped        ; fem: lumped or consistent
    bottom_velocity = zero    ; fd: zero or one-sided
    tol = 1e-10               ; fem linear-solver tolerance

    [phases]                  ; required; keys in run order
    imbibition = 8640         ; duration, s
    drying = 180

    [params]                  ; overrides of the default material constants
    Kw = 0.015

    [snapshots]
    times = 0, 4320, 8820     ; global times, s

    [output]
    directory = runs/example
    formats = csv             ; csv and/or vtk
    totals_every = 60         ; spacing of totals.csv, s (0 = phase ends only)

    [sensitivity]
    step = 0.02
    amplitude = 0.04

Errors name the offending line.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .fd1d import Phase
from .model import PhysicalParameters

SCHEMA = {
    "scenario": {
        "dim", "engine", "H", "L", "dx", "hx", "hz", "h", "dt",
        "mesh_pattern", "ci_coefficients", "mass_rule", "bottom_velocity", "tol",
    },
    "phases": {"imbibition", "drying"},
    "params": {f.name for f in fields(PhysicalParameters)},
    "snapshots": {"times"},
    "output": {"directory", "formats", "totals_every"},
    "sensitivity": {"step", "amplitude"},
}
REQUIRED = {"scenario": {"H", "dt"}}
CHOICES = {
    "engine": ("fd", "fem"),
    "mesh_pattern": ("diagonal", "crossed"),
    "ci_coefficients": ("new", "old"),
    "mass_rule": ("lumped", "consistent"),
    "bottom_velocity": ("zero", "one-sided"),
}


@dataclass(frozen=True)
class ScenarioConfig:
    dim: int
    engine: str
    H: float
    dt: float
    phases: tuple[tuple[Phase, float], ...]
    L: float | None = None
    dx: float | None = None
    hx: float | None = None
    hz: float | None = None
    h: float | None = None
    params: PhysicalParameters = field(default_factory=PhysicalParameters)
    snapshots: tuple[float, ...] = ()
    output_dir: str = "runs/default"
    formats: tuple[str, ...] = ("csv",)
    totals_every: float = 0.0
    mesh_pattern: str = "diagonal"
    ci_coefficients: str = "new"
    mass_rule: str = "lumped"
    bottom_velocity: str = "zero"
    tol: float = 1e-10
    sens_step: float = 0.02
    sens_amplitude: float = 0.04
    source: str = field(default="", repr=False)

    @property
    def total_time(self) -> float:
        return sum(T for _, T in self.phases)

    def phase_duration(self, phase: Phase) -> float | None:
        return next((T for ph, T in self.phases if ph is phase), None)

    def echo(self) -> dict:
        """Resolved configuration as plain data (for manifests)."""
        out = {}
        for f in fields(self):
            if f.name == "source":
                continue
            v = getattr(self, f.name)
            if isinstance(v, PhysicalParameters):
                v = v.as_dict()
            elif f.name == "phases":
                v = [[ph.value, T] for ph, T in v]
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


def _line_index(text: str) -> dict[tuple[str, str], int]:
    """(section, key) -> 1-based line, and (section, '') for headers."""
    where, section = {}, None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, ""), i)
        elif section and line and line[0] not in "#;" and raw[:1] not in " \t":
            key = re.split(r"[=:]", line, maxsplit=1)[0].strip()
            where.setdefault((section, key.lower()), i)
    return where


def _number(value: str, key: str, line) -> float:
    try:
        x = float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}", line) from None
    if not math.isfinite(x):
        raise ConfigError(f"{key}: value must be finite", line)
    return x


def _positive(value: str, key: str, line) -> float:
    x = _number(value, key, line)
    if not x > 0:
        raise ConfigError(f"{key}: must be positive, got {x}", line)
    return x


def _multiple(T: float, dt: float) -> bool:
    n = round(T / dt)
    return abs(n * dt - T) <= 1e-9 * max(T, dt)


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a scenario document; raises :class:`ConfigError`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str  # keys are case sensitive (Ks, Kw, H, ...)
    try:
        cp.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("content before the first [section] header", exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", line) from None
    lines = _line_index(text)

    def at(section, key=""):
        return lines.get((section, key.lower()))

    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]; expected one of {sorted(SCHEMA)}", at(section))
        for key in cp[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", at(section, key))
    for section, keys in REQUIRED.items():
        for key in sorted(keys):
            if not cp.has_option(section, key):
                raise ConfigError(f"missing required key {key!r} in [{section}]", at(section))
    if not cp.has_section("phases") or not cp["phases"]:
        raise ConfigError("missing [phases] section with at least one phase", at("phases"))

    sc = cp["scenario"]
    kw: dict = {"source": text}
    for key in ("engine", "mesh_pattern", "ci_coefficients", "mass_rule", "bottom_velocity"):
        if key in sc:
            v = sc[key].strip().lower()
            if v not in CHOICES[key]:
                raise ConfigError(f"{key}: expected one of {CHOICES[key]}, got {v!r}", at("scenario", key))
            kw[key] = v
    kw.setdefault("engine", "fem")
    dim_raw = sc.get("dim", "1").strip()
    if dim_raw not in ("1", "2", "3"):
        raise ConfigError(f"dim: expected 1, 2 or 3, got {dim_raw!r}", at("scenario", "dim"))
    dim = kw["dim"] = int(dim_raw)
    for key in ("H", "dt", "L", "dx", "hx", "hz", "h", "tol"):
        if key in sc:
            kw[key] = _positive(sc[key], key, at("scenario", key))
    if kw["engine"] == "fd" and dim != 1:
        raise ConfigError("the fd engine is 1D only; set dim = 1 or engine = fem", at("scenario", "engine"))
    needed = {1: ("dx",), 2: ("L", "hx", "hz"), 3: ("L", "h")}[dim]
    for key in needed:
        if key not in kw:
            raise ConfigError(f"dim = {dim} requires key {key!r}", at("scenario"))
    for key, length in (("dx", "H"), ("hz", "H"), ("hx", "L"), ("h", "H"), ("h", "L")):
        if key in needed and not _multiple(kw[length], kw[key]):
            raise ConfigError(f"{length} = {kw[length]} is not a multiple of {key} = {kw[key]}", at("scenario", key))

    phases = []
    for key in cp["phases"]:
        T = _positive(cp["phases"][key], key, at("phases", key))
        if not _multiple(T, kw["dt"]):
            raise ConfigError(f"{key} duration {T} is not a multiple of dt = {kw['dt']}", at("phases", key))
        phases.append((Phase(key), T))
    if phases[0][0] is not Phase.IMBIBITION:
        raise ConfigError("the first phase must be imbibition (drying needs an initial state)", at("phases"))
    kw["phases"] = tuple(phases)

    if cp.has_section("params"):
        over = {k: _number(v, k, at("params", k)) for k, v in cp["params"].items()}
        try:
            kw["params"] = PhysicalParameters(**over)
        except ValueError as exc:
            raise ConfigError(str(exc), at("params")) from None

    total = sum(T for _, T in phases)
    if cp.has_option("snapshots", "times"):
        line = at("snapshots", "times")
        raw = [t for t in re.split(r"[,\s]+", cp["snapshots"]["times"].strip()) if t]
        times = sorted({_number(t, "times", line) for t in raw})
        for t in times:
            if t < 0 or t > total * (1 + 1e-12):
                raise ConfigError(f"snapshot time {t} lies outside the run [0, {total}]", line)
            if not (t == 0 or _multiple(t, kw["dt"])):
                raise ConfigError(f"snapshot time {t} is not a multiple of dt = {kw['dt']}", line)
        kw["snapshots"] = tuple(times)

    if cp.has_section("output"):
        out = cp["output"]
        if "directory" in out:
            kw["output_dir"] = out["directory"].strip()
        if "formats" in out:
            fm = tuple(f for f in re.split(r"[,\s]+", out["formats"].strip().lower()) if f)
            bad = [f for f in fm if f not in ("csv", "vtk")]
            if bad or not fm:
                raise ConfigError(f"formats: expected csv and/or vtk, got {out['formats']!r}", at("output", "formats"))
            if "vtk" in fm and dim == 1:
                raise ConfigError("vtk output needs dim >= 2", at("output", "formats"))
            kw["formats"] = fm
        if "totals_every" in out:
            line = at("output", "totals_every")
            every = _number(out["totals_every"], "totals_every", line)
            if every < 0 or (every > 0 and not _multiple(every, kw["dt"])):
                raise ConfigError("totals_every must be 0 or a positive multiple of dt", line)
            kw["totals_every"] = every

    if cp.has_section("sensitivity"):
        s = cp["sensitivity"]
        if "step" in s:
            kw["sens_step"] = _positive(s["step"], "step", at("sensitivity", "step"))
        if "amplitude" in s:
            kw["sens_amplitude"] = _number(s["amplitude"], "amplitude", at("sensitivity", "amplitude"))
    return ScenarioConfig(**kw)


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        text = fh.read()
    try:
        return parse_config(text)
    except ConfigError as exc:
        err = ConfigError(f"{path}: {exc}")
        err.line = exc.line
        raise err from None
