"""INI-style experiment configuration.

Four sections, all optional::

    [system]      K, N_b, T, T_p, P_dbm, sigma2_dbm, P_FA, P_D_th, R_th, eps,
                  xi0, delta0, eta, wp, penalty_rule
    [geometry]    d_t2b, radius, center_x, center_y
    [pathloss]    alpha_u2b, alpha_u2t, alpha_t2b, alpha_RCS, d0, sigma_g2, rh_correlation
    [experiment]  name, sweep, values, trials, seed, baselines, outputs,
                  placements, k_values, n_b_values, error_model, data_symbols
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..errors import ConfigError
from ..scenario import PathLossParams, SystemConfig

SWEEP_VARIABLES = ("P", "P_tot", "K", "N_b", "d_t2u", "T_p")
BASELINES = ("ORB", "ZF", "MRC", "FPA", "OPA", "COMM_ONLY")
_INT_KEYS = {"K", "N_b", "T", "T_p"}
_STR_KEYS = {"penalty_rule"}


@dataclass(frozen=True)
class GeometrySpec:
    d_t2b: float = 50.0
    radius: float = 100.0
    center_x: float = 100.0
    center_y: float = 0.0

    @property
    def center(self) -> tuple:
        return (self.center_x, self.center_y)


@dataclass(frozen=True)
class ExperimentSpec:
    """What to sweep, how many trials, and which baselines to report."""

    name: str = "experiment"
    sweep: str = "P"
    values: tuple = (10.0,)
    trials: int = 10
    seed: int = 0
    baselines: tuple = BASELINES
    outputs: str = "results"
    placements: int = 100
    k_values: tuple = ()
    n_b_values: tuple = (4, 6, 8)
    error_model: str = "symbol"
    data_symbols: str = "psk"

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.sweep not in SWEEP_VARIABLES:
            raise ConfigError(f"unknown sweep variable {self.sweep!r}; pick one of {SWEEP_VARIABLES}")
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ConfigError("sweep needs at least one value")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("sweep values must be strictly increasing")
        object.__setattr__(self, "values", vals)
        unknown = set(self.baselines) - set(BASELINES)
        if unknown:
            raise ConfigError(f"unknown baselines {sorted(unknown)}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.error_model not in ("symbol", "block"):
            raise ConfigError("error_model must be 'symbol' or 'block'")
        if self.data_symbols not in ("psk", "gaussian"):
            raise ConfigError("data_symbols must be 'psk' or 'gaussian'")
        if self.placements < 1:
            raise ConfigError("placements must be >= 1")

    def with_(self, **kw) -> "ExperimentSpec":
        return replace(self, **kw)


@dataclass(frozen=True)
class RunConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    geometry: GeometrySpec = field(default_factory=GeometrySpec)
    pathloss: PathLossParams = field(default_factory=PathLossParams)
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(float(t)) for t in text.replace(",", " ").split())


def _system(sec) -> SystemConfig:
    kw = {}
    for key, raw in sec.items():
        if key in ("P_dbm", "sigma2_dbm"):
            continue
        if key in _INT_KEYS:
            kw[key] = int(raw)
        elif key in _STR_KEYS:
            kw[key] = raw.strip()
        elif key == "R_th":
            vals = _floats(raw)
            kw[key] = vals[0] if len(vals) == 1 else vals
        elif key in {f.name for f in fields(SystemConfig)}:
            kw[key] = float(raw)
        else:
            raise ConfigError(f"unknown [system] key {key!r}")
    return SystemConfig.from_dbm(float(sec.get("P_dbm", 10.0)), float(sec.get("sigma2_dbm", -70.0)), **kw)


def _simple(cls, sec, name):
    names = {f.name for f in fields(cls)}
    kw = {}
    for key, raw in sec.items():
        if key not in names:
            raise ConfigError(f"unknown [{name}] key {key!r}")
        kw[key] = float(raw)
    return cls(**kw)


def _experiment(sec) -> ExperimentSpec:
    kw = {}
    for key, raw in sec.items():
        if key in ("name", "sweep", "outputs", "error_model", "data_symbols"):
            kw[key] = raw.strip()
        elif key in ("trials", "seed", "placements"):
            kw[key] = int(raw)
        elif key == "values":
            kw[key] = _floats(raw)
        elif key in ("k_values", "n_b_values"):
            kw[key] = _ints(raw)
        elif key == "baselines":
            kw[key] = tuple(t.strip().upper() for t in raw.replace(",", " ").split())
        else:
            raise ConfigError(f"unknown [experiment] key {key!r}")
    return ExperimentSpec(**kw)


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep key case (K, N_b, ...)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    unknown = set(cp.sections()) - {"system", "geometry", "pathloss", "experiment"}
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")

    def sec(name):
        return cp[name] if cp.has_section(name) else {}

    try:
        return RunConfig(
            system=_system(sec("system")),
            geometry=_simple(GeometrySpec, sec("geometry"), "geometry"),
            pathloss=_simple(PathLossParams, sec("pathloss"), "pathloss"),
            experiment=_experiment(sec("experiment")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
