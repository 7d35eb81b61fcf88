"""TOML run configurations.

A run file has the blocks ``species``, ``beams`` (array of tables),
``trap``, ``thermo``, ``initial``, ``schedule``, ``evap`` and ``output``.
Only ``beams`` (or, for volume tables, ``harmonic``) is required.  Unknown
keys are rejected and reported with the line they appear on.
"""

import hashlib
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .evap import EvapModelParams, PowerSchedule, Segment, crossed_ramp
from .species import get_species
from .trap import GaussianBeam, TrapConfig

BUNDLED = ("fig1_1um", "fig1_10um", "paper_single_beam", "paper_full_ramp", "harmonic_test")

_KEYS = {
    "": {"species", "beams", "trap", "thermo", "initial", "schedule", "evap", "output", "harmonic"},
    "species": {"name", "scattering_length", "three_body_K3"},
    "beams": {"name", "power", "waist_x", "waist_y", "wavelength", "axis", "transverse_x", "focus"},
    "trap": {"gravity", "gravity_acceleration", "primary", "counter_rotating", "escape_fraction"},
    "thermo": {"beta", "eta", "N", "samples", "seed", "n_bins", "tolerance", "wavelengths", "waist"},
    "initial": {"N", "temperature", "eta"},
    "schedule": {"segments", "preset", "params"},
    "segments": {"beam", "t_start", "t_end", "kind", "p_start", "p_end"},
    "evap": {
        "background_lifetime",
        "three_body_K3",
        "evaporation_model",
        "eta_dynamics",
        "ode_rel_tol",
        "ode_abs_tol",
        "output_dt",
        "thermalization_collisions",
        "eta_floor",
        "grid_per_segment",
    },
    "output": {"dir"},
    "harmonic": {"radius"},
}


@dataclass(frozen=True)
class ThermoSettings:
    beta: float = 1.9
    eta: tuple = tuple(range(6, 13))
    N: float = 2e6
    samples: int = 10**7
    seed: int = 0
    n_bins: int = 400
    tolerance: float = 0.005
    wavelengths: tuple = ()
    waist: float = None


@dataclass(frozen=True, eq=False)
class RunConfig:
    trap: TrapConfig = None
    thermo: ThermoSettings = field(default_factory=ThermoSettings)
    initial: dict = field(default_factory=dict)
    schedule: PowerSchedule = None
    evap: EvapModelParams = field(default_factory=EvapModelParams)
    output_dir: str = None
    harmonic_radius: float = None
    escape_fraction: float = 1e-3
    source: str = ""
    text: str = ""

    @property
    def digest(self):
        return hashlib.sha256(self.text.encode()).hexdigest()


def _line_of(text, key):
    m = re.search(rf"^\s*\[*\s*{re.escape(key)}\s*[=\]]|[{{,]\s*{re.escape(key)}\s*=", text, re.M)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _check_keys(table, section, text, where):
    allowed = _KEYS[section]
    for key in table:
        if key not in allowed:
            line = _line_of(text, key)
            loc = f"line {line}" if line else "unknown line"
            raise ConfigError(f"{where}: unknown key '{key}' in [{section or 'top level'}] ({loc})")


def _vec(value, name):
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,):
        raise ConfigError(f"{name} must be a 3-vector")
    return arr


def _beam(tbl, index):
    try:
        return GaussianBeam(
            power=float(tbl["power"]),
            waist_x=float(tbl["waist_x"]),
            waist_y=float(tbl["waist_y"]) if "waist_y" in tbl else None,
            wavelength=float(tbl.get("wavelength", 1.064e-6)),
            axis=_vec(tbl.get("axis", (0, 0, 1)), "axis"),
            transverse_x=_vec(tbl["transverse_x"], "transverse_x") if "transverse_x" in tbl else None,
            focus=_vec(tbl.get("focus", (0, 0, 0)), "focus"),
            name=str(tbl.get("name", f"beam{index}")),
        )
    except KeyError as exc:
        raise ConfigError(f"beam {index}: missing key {exc}") from None


def _beam_index(beams, ref):
    if isinstance(ref, int) and 0 <= ref < len(beams):
        return ref
    for i, b in enumerate(beams):
        if b.name == ref:
            return i
    raise ConfigError(f"unknown beam reference {ref!r}")


def parse(text, source="<string>"):
    """Build a RunConfig from TOML text."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    try:
        return _build(raw, text, source)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def _build(raw, text, source):
    _check_keys(raw, "", text, source)
    for section in ("species", "trap", "thermo", "initial", "schedule", "evap", "output", "harmonic"):
        _check_keys(raw.get(section, {}), section, text, source)

    sp = raw.get("species", {})
    try:
        species = get_species(sp.get("name", "Rb87"))
    except KeyError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    overrides = {k: float(v) for k, v in sp.items() if k != "name"}
    if overrides:
        species = replace(species, **overrides)

    trap = None
    t = raw.get("trap", {})
    beams_raw = raw.get("beams", [])
    if beams_raw:
        for tbl in beams_raw:
            _check_keys(tbl, "beams", text, source)
        beams = tuple(_beam(tbl, i) for i, tbl in enumerate(beams_raw))
        trap = TrapConfig(
            species=species,
            beams=beams,
            gravity_enabled=bool(t.get("gravity", False)),
            gravity_acceleration=float(t.get("gravity_acceleration", 9.80665)),
            primary=_beam_index(beams, t.get("primary", 0)),
            counter_rotating=bool(t.get("counter_rotating", False)),
        )
    harmonic = raw.get("harmonic", {}).get("radius")
    if trap is None and harmonic is None:
        raise ConfigError(f"{source}: need a [[beams]] list or a [harmonic] block")

    th = dict(raw.get("thermo", {}))
    if "eta" in th:
        eta = th["eta"]
        if isinstance(eta, dict):
            raise ConfigError("thermo.eta must be a list of values")
        th["eta"] = tuple(float(e) for e in eta)
    if "wavelengths" in th:
        th["wavelengths"] = tuple(float(w) for w in th["wavelengths"])
    for key in ("samples", "seed", "n_bins"):
        if key in th:
            th[key] = int(th[key])
    thermo = ThermoSettings(**th)
    if any(not (2 < e <= 20) for e in thermo.eta):
        raise ConfigError(f"{source}: eta values must lie in (2, 20]")

    schedule = None
    sch = raw.get("schedule", {})
    if sch.get("segments") and sch.get("preset"):
        raise ConfigError(f"{source}: give either schedule.segments or schedule.preset")
    if sch.get("preset"):
        if sch["preset"] != "crossed_ramp":
            raise ConfigError(f"{source}: unknown schedule preset {sch['preset']!r}")
        if trap is None or len(trap.beams) < 2:
            raise ConfigError(f"{source}: the crossed_ramp preset needs two beams")
        params = dict(sch.get("params", {}))
        for key in ("primary", "auxiliary"):
            if key in params:
                params[key] = _beam_index(trap.beams, params[key])
        try:
            schedule = crossed_ramp(**params)
        except TypeError as exc:
            raise ConfigError(f"{source}: schedule.params: {exc}") from None
    elif sch.get("segments"):
        if trap is None:
            raise ConfigError(f"{source}: a schedule needs beams")
        per_beam = {}
        for seg in sch["segments"]:
            _check_keys(seg, "segments", text, source)
            i = _beam_index(trap.beams, seg.get("beam", 0))
            per_beam.setdefault(i, []).append(
                Segment(
                    float(seg["t_start"]),
                    float(seg["t_end"]),
                    seg.get("kind", "linear"),
                    float(seg["p_start"]),
                    float(seg["p_end"]) if "p_end" in seg else None,
                )
            )
        schedule = PowerSchedule({i: tuple(sorted(s, key=lambda x: x.t_start)) for i, s in per_beam.items()})

    return RunConfig(
        trap=trap,
        thermo=thermo,
        initial=dict(raw.get("initial", {})),
        schedule=schedule,
        evap=EvapModelParams(**raw.get("evap", {})),
        output_dir=raw.get("output", {}).get("dir"),
        harmonic_radius=float(harmonic) if harmonic is not None else None,
        escape_fraction=float(t.get("escape_fraction", 1e-3)),
        source=source,
        text=text,
    )


def load(ref):
    """Load a config from a path or a bundled name such as ``fig1_1um``."""
    path = Path(ref)
    if path.is_file():
        return parse(path.read_text(encoding="utf-8"), str(path))
    name = ref[:-5] if ref.endswith(".toml") else ref
    if name in BUNDLED:
        text = resources.files("odtbec.configs").joinpath(f"{name}.toml").read_text(encoding="utf-8")
        return parse(text, name)
    raise ConfigError(f"no config file or bundled config named {ref!r}")
