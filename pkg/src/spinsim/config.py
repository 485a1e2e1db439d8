"""TOML run configuration: parsing and validation.

Every section is checked against a fixed key set; unknown keys are errors
reported with their dotted path.  Frequencies are Hz, times are seconds.
Grid field values are in units of |J1|.
"""
from dataclasses import dataclass, field
import hashlib
import json
from importlib import resources

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import ion_chain
from .dynamics import RAMP_PRESETS, MeasurementModel, RampProfile, task_seed
from .errors import ConfigError, PoleWindowError
from .hamiltonian import CouplingMatrix

TASKS = ("spectrum", "modes", "couplings", "evolve", "adiabaticity", "phase-diagram", "roundtrip")

_SCHEMA = {
    "": {"task", "master_seed", "couplings", "ion_chain", "ramp", "measurement", "grid", "evolution", "output"},
    "couplings": {"j1", "j2", "matrix", "n", "j"},
    "ion_chain": {"trap", "drive"},
    "ion_chain.trap": {"n_ions", "nu_transverse", "nu_axial", "measured_freqs", "ion_mass", "delta_k"},
    "ion_chain.drive": {"rabi", "mu", "target_ratio", "mu_interval"},
    "ramp": {"preset", "kind", "a", "tau", "b", "t_end"},
    "measurement": {"shots", "detection_fidelity", "rng_seed"},
    "grid": {
        "fields", "field_min", "field_max", "field_points", "field_scale",
        "ratios", "ratio_min", "ratio_max", "ratio_step", "mode", "j1",
    },
    "evolution": {"samples", "max_phase_step"},
    "output": {"dir", "prefix"},
}


@dataclass(frozen=True)
class GridSpec:
    fields: tuple = None
    ratios: tuple = None
    mode: str = "exact_ground"
    j1: float = -1e3

    def field_array(self):
        return None if self.fields is None else np.array(self.fields, dtype=float)

    def ratio_array(self):
        return None if self.ratios is None else np.array(self.ratios, dtype=float)


@dataclass(frozen=True, eq=False)
class RunConfig:
    task: str
    master_seed: int = 0
    couplings: CouplingMatrix = None
    trap: ion_chain.TrapConfig = None
    drive: ion_chain.DriveConfig = None
    ramp: RampProfile = None
    measurement: MeasurementModel = None
    grid: GridSpec = field(default_factory=GridSpec)
    samples: int = 101
    max_phase_step: float = 0.05
    output_dir: str = "out"
    prefix: str = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def stem(self):
        return self.prefix or self.task.replace("-", "_")

    def canonical(self):
        """Canonical JSON of the effective configuration (hash input)."""
        d = json.loads(json.dumps(self.raw, sort_keys=True))
        d["master_seed"] = int(self.master_seed)
        d.setdefault("output", {}).pop("dir", None)
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def config_hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def with_overrides(self, seed=None, out=None):
        kw = dict(self.__dict__)
        if seed is not None:
            kw["master_seed"] = int(seed)
            m = self.measurement
            if m is not None and "rng_seed" not in self.raw.get("measurement", {}):
                kw["measurement"] = MeasurementModel(m.shots, m.detection_fidelity, task_seed(seed, 0))
        if out is not None:
            kw["output_dir"] = str(out)
        return RunConfig(**kw)


def _check_keys(d, path):
    allowed = _SCHEMA[path]
    for key in d:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"{where}: unknown key")


def _section(d, name, path=""):
    sub = d.get(name)
    full = f"{path}.{name}" if path else name
    if sub is None:
        return None
    if not isinstance(sub, dict):
        raise ConfigError(f"{full}: expected a table")
    _check_keys(sub, full)
    return sub


def _num(d, key, path, default=None, required=False, positive=False):
    if key not in d:
        if required:
            raise ConfigError(f"{path}.{key}: required")
        return default
    val = d[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {val!r}")
    val = float(val)
    if not np.isfinite(val):
        raise ConfigError(f"{path}.{key}: must be finite")
    if positive and val <= 0:
        raise ConfigError(f"{path}.{key}: must be positive")
    return val


def _wrap(path, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except PoleWindowError as exc:
        raise PoleWindowError(f"{path}: {exc}") from exc
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_couplings(sec):
    path = "couplings"
    if "matrix" in sec:
        if {"j1", "j2", "n", "j"} & set(sec):
            raise ConfigError(f"{path}: give either matrix, (j1, j2) or (n, j)")
        return _wrap(path, CouplingMatrix, np.array(sec["matrix"], dtype=float))
    if "j1" in sec or "j2" in sec:
        if {"n", "j"} & set(sec):
            raise ConfigError(f"{path}: give either matrix, (j1, j2) or (n, j)")
        return CouplingMatrix.chain3(_num(sec, "j1", path, required=True), _num(sec, "j2", path, required=True))
    if "n" in sec:
        n = sec["n"]
        if not isinstance(n, int) or isinstance(n, bool):
            raise ConfigError(f"{path}.n: expected an integer")
        return _wrap(path, CouplingMatrix.uniform, n, _num(sec, "j", path, required=True))
    raise ConfigError(f"{path}: no couplings given")


def _parse_ion_chain(sec):
    path = "ion_chain"
    tsec = _section(sec, "trap", path)
    if tsec is None:
        raise ConfigError(f"{path}.trap: required")
    tp = f"{path}.trap"
    n = tsec.get("n_ions")
    if not isinstance(n, int) or isinstance(n, bool):
        raise ConfigError(f"{tp}.n_ions: expected an integer")
    nu_t = _num(tsec, "nu_transverse", tp, required=True, positive=True)
    kw = {}
    for key in ("ion_mass", "delta_k"):
        if key in tsec:
            kw[key] = _num(tsec, key, tp, positive=True)
    if "nu_axial" in tsec:
        nu_z = _num(tsec, "nu_axial", tp, positive=True)
    elif "measured_freqs" in tsec:
        nu_z = _wrap(tp, ion_chain.fit_axial_frequency, n, nu_t, tsec["measured_freqs"])
    else:
        raise ConfigError(f"{tp}: give nu_axial or measured_freqs")
    trap = _wrap(tp, ion_chain.TrapConfig, n, nu_t, nu_z, **kw)
    modes = _wrap(tp, ion_chain.transverse_modes, trap)

    drive = None
    dsec = _section(sec, "drive", path)
    if dsec is not None:
        dp = f"{path}.drive"
        rabi = dsec.get("rabi")
        if rabi is None:
            raise ConfigError(f"{dp}.rabi: required")
        rabi = [float(rabi)] * n if isinstance(rabi, (int, float)) else [float(r) for r in rabi]
        if "mu" in dsec and "target_ratio" in dsec:
            raise ConfigError(f"{dp}: give mu or target_ratio, not both")
        if "target_ratio" in dsec:
            interval = dsec.get("mu_interval")
            if interval is None or len(interval) != 2:
                raise ConfigError(f"{dp}.mu_interval: two-element list required with target_ratio")
            template = _wrap(dp, ion_chain.DriveConfig, tuple(rabi), float(max(interval)))
            mu = _wrap(
                dp, ion_chain.solve_detuning_for_ratio,
                _num(dsec, "target_ratio", dp), trap, modes, template, interval,
            )
        else:
            mu = _num(dsec, "mu", dp, required=True, positive=True)
        drive = _wrap(dp, ion_chain.DriveConfig, tuple(rabi), mu)
        _wrap(dp, ion_chain.check_pole_windows, trap, modes, drive)
    return trap, drive


def _parse_ramp(sec):
    path = "ramp"
    if "preset" in sec:
        if set(sec) - {"preset"}:
            raise ConfigError(f"{path}: preset cannot be combined with explicit parameters")
        name = sec["preset"]
        if name not in RAMP_PRESETS:
            raise ConfigError(f"{path}.preset: unknown preset {name!r} (choose from {sorted(RAMP_PRESETS)})")
        return RAMP_PRESETS[name]
    kind = sec.get("kind")
    return _wrap(
        path, RampProfile, kind,
        _num(sec, "a", path, required=True),
        _num(sec, "t_end", path, required=True),
        _num(sec, "tau", path),
        _num(sec, "b", path, default=0.0),
    )


def _axis(sec, path, name, lo, hi, count=None, step=None, scale="linear"):
    explicit = sec.get(f"{name}s")
    if explicit is not None:
        if not isinstance(explicit, list) or not explicit:
            raise ConfigError(f"{path}.{name}s: expected a non-empty list")
        return tuple(float(x) for x in explicit)
    if lo not in sec and hi not in sec:
        return None
    a = _num(sec, lo, path, required=True)
    b = _num(sec, hi, path, required=True)
    if step is not None:
        st = _num(sec, step, path, required=True, positive=True)
        vals = np.round(np.arange(a, b + 0.5 * st, st), 10)
    else:
        pts = sec.get(count, 60)
        if not isinstance(pts, int) or pts < 1:
            raise ConfigError(f"{path}.{count}: expected a positive integer")
        if scale == "log":
            if a <= 0 or b <= 0:
                raise ConfigError(f"{path}: log field axis needs positive bounds")
            vals = np.logspace(np.log10(a), np.log10(b), pts)
        elif scale == "linear":
            vals = np.linspace(a, b, pts)
        else:
            raise ConfigError(f"{path}.field_scale: expected 'log' or 'linear', got {scale!r}")
    return tuple(float(x) for x in vals)


def _parse_grid(sec):
    path = "grid"
    mode = sec.get("mode", "exact_ground")
    if mode not in ("exact_ground", "adiabatic_protocol"):
        raise ConfigError(f"{path}.mode: unknown mode {mode!r}")
    fields = _axis(sec, path, "field", "field_min", "field_max", count="field_points",
                   scale=sec.get("field_scale", "linear"))
    ratios = None
    if "ratios" in sec or "ratio_min" in sec:
        ratios = _axis(sec, path, "ratio", "ratio_min", "ratio_max", step="ratio_step")
    j1 = _num(sec, "j1", path, default=-1e3)
    if j1 >= 0:
        raise ConfigError(f"{path}.j1: must be negative")
    return GridSpec(fields, ratios, mode, j1)


_NEEDS = {
    "spectrum": ("couplings",),
    "modes": ("trap",),
    "couplings": ("trap", "drive"),
    "evolve": ("couplings", "ramp"),
    "adiabaticity": ("couplings", "ramp"),
    "phase-diagram": (),
    "roundtrip": ("couplings", "ramp"),
}


def parse_config(text):
    """Parse and validate a TOML run configuration into a :class:`RunConfig`."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"syntax error: {exc}") from exc
    _check_keys(raw, "")
    task = raw.get("task")
    if task not in TASKS:
        raise ConfigError(f"task: expected one of {TASKS}, got {task!r}")
    seed = raw.get("master_seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("master_seed: expected a non-negative integer")

    csec = _section(raw, "couplings")
    isec = _section(raw, "ion_chain")
    if csec is not None and isec is not None:
        raise ConfigError("couplings and ion_chain: both sections supply couplings; give only one")
    couplings = trap = drive = None
    if csec is not None:
        couplings = _parse_couplings(csec)
    if isec is not None:
        trap, drive = _parse_ion_chain(isec)
        if drive is not None:
            modes = ion_chain.transverse_modes(trap)
            couplings = ion_chain.ising_couplings(trap, modes, drive)

    rsec = _section(raw, "ramp")
    ramp = _parse_ramp(rsec) if rsec is not None else None

    msec = _section(raw, "measurement")
    measurement = None
    if msec is not None:
        rng_seed = msec.get("rng_seed", task_seed(seed, 0))
        measurement = _wrap(
            "measurement", MeasurementModel,
            msec.get("shots", 1000), _num(msec, "detection_fidelity", "measurement", default=0.97), rng_seed,
        )

    gsec = _section(raw, "grid")
    grid = _parse_grid(gsec) if gsec is not None else GridSpec()

    esec = _section(raw, "evolution") or {}
    samples = esec.get("samples", 101)
    if not isinstance(samples, int) or samples < 1:
        raise ConfigError("evolution.samples: expected a positive integer")
    mps = _num(esec, "max_phase_step", "evolution", default=0.05, positive=True)

    osec = _section(raw, "output") or {}
    out_dir = osec.get("dir", "out")
    prefix = osec.get("prefix")

    cfg = RunConfig(task, seed, couplings, trap, drive, ramp, measurement, grid, samples, mps,
                    out_dir, prefix, raw)
    for need in _NEEDS[task]:
        if getattr(cfg, need) is None:
            raise ConfigError(f"task {task!r} needs a {need} section")
    return cfg


def preset_names():
    return sorted(p.name[:-5] for p in resources.files("spinsim.presets").iterdir() if p.name.endswith(".toml"))


def preset_text(name):
    res = resources.files("spinsim.presets") / f"{name}.toml"
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return res.read_text()


def load_preset(name):
    return parse_config(preset_text(name))
