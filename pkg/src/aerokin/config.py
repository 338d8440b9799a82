"""Run configuration: defaults, TOML loading, flag overrides and provenance."""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .errors import ConfigError

log = logging.getLogger("aerokin.config")

COMMON = {"seed": 0, "workers": 0, "out": ""}

SECTIONS = {
    "verify-kernels": {
        "kernel": "charles_inelastic", "epsilon": 0.1, "eta": 0.01, "beta": 1.0, "samples": 1_000_000,
        "V": [10.0, 0.0, 0.0], "W": [0.0, 0.0, 0.0],
    },
    "coeffs": {"molecular_kernel": "maxwell", "Q_preset": "charles:1.0", "degree": 6, "C0": 1.0},
    "limit-sweep": {"prop": "drag", "kernel": "charles_inelastic", "state_preset": "", "schedule": "", "beta": 1.0},
    "simulate-vns": {
        "grid_n": 64, "dim": 2, "nu": 0.05, "kappa": 1.0, "dt": 0.0, "steps": 200, "snapshot_every": 0,
        "fluid_init": "random", "fluid_amplitude": 1.0, "drag_mode": "rk4", "two_way": True, "cfl": 0.4,
        "restart": "",
        "particles": {"count": 10_000, "init_preset": "uniform_random", "seed": 0, "speed": 1.0,
                      "total_weight": 0.0},
    },
    "all": {},
}

# state preset used by each sweep when none is given
DEFAULT_SWEEP_STATE = {"drag": "perturbed", "friction": "point", "flux": "perturbed"}


@dataclass
class RunConfig:
    command: str
    values: dict
    provenance: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    def canonical(self) -> str:
        return json.dumps({"command": self.command, **self.values}, sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def meta(self) -> dict:
        """Identification block embedded in every output artifact."""
        return {"version": __version__, "config_hash": self.config_hash, "seed": self.seed,
                "command": self.command}


def defaults(command: str) -> dict:
    if command not in SECTIONS:
        raise ConfigError(f"unknown subcommand {command!r}")
    return {**copy.deepcopy(COMMON), **copy.deepcopy(SECTIONS[command])}


def load_file(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _coerce(path, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or len(value) != len(default):
            raise ConfigError(f"{path}: expected a list of {len(default)} numbers, got {value!r}")
        return [_coerce(f"{path}[{i}]", d, v) for i, (d, v) in enumerate(zip(default, value))]
    raise ConfigError(f"{path}: unsupported value {value!r}")


def _merge(base, update, source, provenance, prefix=""):
    for key, value in update.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key {path!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: expected a table")
            _merge(base[key], value, source, provenance, path + ".")
            continue
        new = _coerce(path, base[key], value)
        old_source = provenance.get(path, "default")
        if old_source != "default" and new != base[key]:
            log.info("%s = %r from %s overrides %r from %s", path, new, source, base[key], old_source)
        base[key] = new
        provenance[path] = source


def parse_config(command: str, flags: dict | None = None, file=None) -> RunConfig:
    """Resolve defaults, then the TOML file, then command-line flags.

    ``flags`` maps dotted key paths to values; ``None`` values are ignored.
    The file may hold the keys at top level or inside a table named after
    the subcommand (with ``-`` or ``_``).
    """
    values = defaults(command)
    prov = {}
    if file:
        data = load_file(file) if not isinstance(file, dict) else file
        for name in (command, command.replace("-", "_")):
            if isinstance(data.get(name), dict) and name not in values:
                data = {**{k: v for k, v in data.items() if k != name}, **data[name]}
        _merge(values, data, "file", prov)
    nested = {}
    for path, value in (flags or {}).items():
        if value is None:
            continue
        head, _, tail = path.partition(".")
        if tail:
            nested.setdefault(head, {})[tail] = value
        else:
            nested[path] = value
    _merge(values, nested, "flag", prov)
    cfg = RunConfig(command, values, prov)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    """Check that every referenced preset exists."""
    from .kernels import MOLECULAR_PRESETS, PG_PRESETS
    from .limits import STATE_PRESETS, SWEEPS, parse_schedule
    from .transport import q_preset

    v = cfg.values
    if v["seed"] < 0 or v["seed"] >= 2**64:
        raise ConfigError("seed: must fit in 64 unsigned bits")
    if v["workers"] < 0:
        raise ConfigError("workers: must be >= 0")
    kern = v.get("kernel")
    if kern is not None and not kern.startswith("csv:") and kern not in PG_PRESETS:
        raise ConfigError(f"kernel: unknown preset {kern!r}; choose from {sorted(PG_PRESETS)}")
    if cfg.command == "coeffs":
        if v["molecular_kernel"] not in MOLECULAR_PRESETS:
            raise ConfigError(f"molecular_kernel: unknown preset {v['molecular_kernel']!r}")
        try:
            q_preset(v["Q_preset"])
        except ValueError as exc:
            raise ConfigError(f"Q_preset: {exc}") from None
        if v["degree"] < 2:
            raise ConfigError("degree: must be >= 2")
    if cfg.command == "limit-sweep":
        if v["prop"] not in SWEEPS:
            raise ConfigError(f"prop: unknown sweep {v['prop']!r}; choose from {sorted(SWEEPS)}")
        if v["state_preset"] and v["state_preset"] not in STATE_PRESETS:
            raise ConfigError(f"state_preset: unknown preset {v['state_preset']!r}")
        if v["schedule"]:
            try:
                parse_schedule(v["schedule"], v["beta"])
            except ValueError as exc:
                raise ConfigError(f"schedule: {exc}") from None
    if cfg.command == "verify-kernels":
        if v["samples"] < 2:
            raise ConfigError("samples: need at least two")
    if cfg.command == "simulate-vns":
        if v["dim"] not in (2, 3):
            raise ConfigError("dim: must be 2 or 3")
        if v["fluid_init"] not in ("zero", "random", "taylor_green"):
            raise ConfigError(f"fluid_init: unknown preset {v['fluid_init']!r}")
        if v["particles"]["init_preset"] not in ("uniform_random", "at_rest", "beam"):
            raise ConfigError(f"particles.init_preset: unknown preset {v['particles']['init_preset']!r}")
        if v["drag_mode"] not in ("rk4", "exponential"):
            raise ConfigError(f"drag_mode: unknown mode {v['drag_mode']!r}")
        if v["grid_n"] < 4 or v["grid_n"] % 2:
            raise ConfigError("grid_n: must be even and >= 4")
