"""
Run configuration for the command line.

A config is a YAML (or JSON) mapping with optional sections ``system``,
``extraction``, ``sweep``, ``classical``, ``g2``, ``antibunching``,
``fit_transmission``, ``fit_map`` and ``perturb``. Unknown keys are rejected
at every level. Rates and detunings are written as ``value / 2pi`` in MHz
(keys ending in ``_MHz``) and drive levels in dB; conversion to rad/s
happens in :meth:`RunConfig.cascade_params` and friends.

Grids are either explicit lists or ``{start, stop, num, scale}`` with
``scale`` ``'linear'`` (default) or ``'log'``.
"""

import json
import math
import os
import typing
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from . import dynamics, spectrum, units
from .errors import ParameterError


class ConfigError(ParameterError):
    """Malformed or inconsistent configuration."""


# --- grids ---------------------------------------------------------------------

def expand_grid(spec, where="grid"):
    """List of floats from an explicit list or a ``{start, stop, num, scale}`` mapping."""
    if isinstance(spec, (list, tuple)):
        try:
            vals = [float(v) for v in spec]
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: grid entries must be numbers") from None
        if not vals:
            raise ConfigError(f"{where}: empty grid")
        return vals
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return [float(spec)]
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: grid must be a list or a start/stop/num mapping")
    extra = set(spec) - {"start", "stop", "num", "scale"}
    if extra:
        raise ConfigError(f"{where}: unknown grid keys {sorted(extra)}")
    try:
        start, stop, num = float(spec["start"]), float(spec["stop"]), int(spec["num"])
    except KeyError as exc:
        raise ConfigError(f"{where}: missing {exc.args[0]!r}") from None
    scale = spec.get("scale", "linear")
    if num < 1:
        raise ConfigError(f"{where}: num must be positive")
    if scale == "linear":
        return np.linspace(start, stop, num).tolist()
    if scale == "log":
        if start <= 0 or stop <= 0:
            raise ConfigError(f"{where}: log grid needs positive bounds")
        return np.geomspace(start, stop, num).tolist()
    raise ConfigError(f"{where}: scale must be 'linear' or 'log'")


# --- sections ------------------------------------------------------------------

@dataclass
class SystemConfig:
    gamma_MHz: float = 1.7
    Gamma_MHz: float = 1.8
    delta_omega_MHz: float = 0.01
    alpha: float = 0.79
    eta_over_gamma: float = dynamics.DEFAULT_ETA_RATIO
    gamma_phi_MHz: float = 0.0
    Gamma_phi_MHz: float = 0.0
    detuning_source_MHz: float = 0.0
    detuning_probe_MHz: float = 0.0
    # None switches the tone off
    nu_plus_over_gamma_dB: typing.Optional[float] = None
    nu_minus_over_Gamma_dB: typing.Optional[float] = None


@dataclass
class ExtractionConfig:
    orders: list = field(default_factory=lambda: list(spectrum.DEFAULT_ORDERS))
    engine: str = "harmonic"
    samples_per_period: int = 256
    source_weight: str = "mean_field"
    carrier_GHz: float = units.DEFAULT_CARRIER_GHZ
    gain_dB: float = units.DEFAULT_GAIN_DB
    floor_dBm: float = units.DEFAULT_FLOOR_DBM


@dataclass
class SweepConfig:
    kind: str = "drive"
    axis1: typing.Any = None
    axis2: typing.Any = None
    power: str = "dBm"
    cache_dir: typing.Optional[str] = None


@dataclass
class ClassicalConfig:
    kappa_plus_dB: typing.Any = None
    kappa_minus_dB: typing.Any = None
    Gamma2_over_Gamma: float = 0.5
    max_order: int = 7


@dataclass
class G2Config:
    Omega_over_gamma: typing.Any = field(default_factory=lambda: [0.01, 0.25, 1.0, 5.0])
    tau_gamma: typing.Any = field(default_factory=lambda: {"start": 0.0, "stop": 10.0, "num": 201})
    coefficient: str = "standard"


@dataclass
class AntibunchingConfig:
    Omega_over_gamma: typing.Any = field(default_factory=lambda: [0.25, 1.0, 5.0])
    Gamma_over_gamma: typing.Any = field(
        default_factory=lambda: {"start": 1e-3, "stop": 1e3, "num": 61, "scale": "log"})
    coefficient: str = "standard"


@dataclass
class TraceSource:
    path: str
    probe_detuning_MHz: float = 0.0


@dataclass
class FitTransmissionConfig:
    traces: list = field(default_factory=list)
    gamma_MHz: float = 1.7
    Gamma_MHz: float = 1.8
    gamma_phi_MHz: float = 0.0
    Gamma_phi_MHz: float = 0.0
    omega_s_GHz: float = 5.1
    prefactor: float = 1.0
    Cc_over_Ce: float = 0.1
    free: list = field(default_factory=lambda: ["gamma", "gamma_phi", "Gamma", "Gamma_phi",
                                                "omega_s", "detunings"])
    max_nfev: int = 2000


@dataclass
class FitMapConfig:
    data: typing.Optional[str] = None
    kind: str = "cascade"
    init: dict = field(default_factory=lambda: {"alpha": 0.6})
    free: list = field(default_factory=lambda: ["alpha"])
    gain: str = "global"
    use_floor: bool = True
    max_nfev: int = 200


@dataclass
class PerturbConfig:
    W_bar: typing.Any = field(default_factory=lambda: [0.01, 0.03, 0.05])
    E_bar: typing.Any = field(default_factory=lambda: [0.01, 0.03, 0.05])
    max_order: int = 2
    harmonics: list = field(default_factory=lambda: [-5, -3, -1, 1, 3, 5])
    source: str = "closed_form"


SECTIONS = {
    "system": SystemConfig,
    "extraction": ExtractionConfig,
    "sweep": SweepConfig,
    "classical": ClassicalConfig,
    "g2": G2Config,
    "antibunching": AntibunchingConfig,
    "fit_transmission": FitTransmissionConfig,
    "fit_map": FitMapConfig,
    "perturb": PerturbConfig,
}

CHOICES = {
    ("extraction", "engine"): ("harmonic", "rk4"),
    ("extraction", "source_weight"): spectrum.SOURCE_WEIGHTS,
    ("sweep", "kind"): tuple(spectrum.AXIS_KINDS),
    ("sweep", "power"): ("dBm", "kappa"),
    ("g2", "coefficient"): ("standard", "printed"),
    ("antibunching", "coefficient"): ("standard", "printed"),
    ("fit_map", "kind"): ("cascade", "classical"),
    ("fit_map", "gain"): ("global", "per_order", "none"),
    ("perturb", "source"): ("closed_form", "recursion"),
}


def _coerce(value, annotation, where):
    """Light type check for scalar fields; containers are validated by their users."""
    if annotation is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(f"{where}: must be finite")
        return float(value)
    if annotation is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if annotation is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if annotation is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if annotation is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return value
    if annotation is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping, got {value!r}")
        return value
    if typing.get_origin(annotation) is typing.Union:
        if value is None:
            return None
        inner = [a for a in typing.get_args(annotation) if a is not type(None)][0]
        return _coerce(value, inner, where)
    return value


def _build(cls, data, where):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name: f for f in fields(cls)}
    extra = set(data) - set(names)
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
    hints = typing.get_type_hints(cls)
    kw = {k: _coerce(v, hints[k], f"{where}.{k}") for k, v in data.items()}
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass
class RunConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    classical: ClassicalConfig = field(default_factory=ClassicalConfig)
    g2: G2Config = field(default_factory=G2Config)
    antibunching: AntibunchingConfig = field(default_factory=AntibunchingConfig)
    fit_transmission: FitTransmissionConfig = field(default_factory=FitTransmissionConfig)
    fit_map: FitMapConfig = field(default_factory=FitMapConfig)
    perturb: PerturbConfig = field(default_factory=PerturbConfig)

    @classmethod
    def from_dict(cls, data, base_dir=None):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping at the top level")
        extra = set(data) - set(SECTIONS)
        if extra:
            raise ConfigError(f"unknown config sections {sorted(extra)}")
        kw = {name: _build(sec, data.get(name), name) for name, sec in SECTIONS.items()}
        ft = kw["fit_transmission"]
        ft.traces = [_build(TraceSource, t, f"fit_transmission.traces[{i}]")
                     for i, t in enumerate(ft.traces)]
        cfg = cls(**kw)
        cfg._resolve_paths(base_dir)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        return cls.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))

    def _resolve_paths(self, base_dir):
        if base_dir is None:
            return
        for t in self.fit_transmission.traces:
            t.path = os.path.normpath(os.path.join(base_dir, t.path))
        if self.fit_map.data is not None:
            self.fit_map.data = os.path.normpath(os.path.join(base_dir, self.fit_map.data))
        if self.sweep.cache_dir is not None:
            self.sweep.cache_dir = os.path.normpath(os.path.join(base_dir, self.sweep.cache_dir))

    def validate(self):
        for (sec, key), allowed in CHOICES.items():
            v = getattr(getattr(self, sec), key)
            if v not in allowed:
                raise ConfigError(f"{sec}.{key} must be one of {list(allowed)}, got {v!r}")
        ex = self.extraction
        if not ex.orders or any(not isinstance(k, int) or isinstance(k, bool) for k in ex.orders):
            raise ConfigError("extraction.orders must be a non-empty list of integers")
        if ex.samples_per_period < 8:
            raise ConfigError("extraction.samples_per_period must be at least 8")
        s = self.system
        for name in ("gamma_MHz", "Gamma_MHz", "delta_omega_MHz"):
            if not getattr(s, name) > 0:
                raise ConfigError(f"system.{name} must be positive")
        if not 0.0 <= s.alpha <= 1.0:
            raise ConfigError("system.alpha must lie in [0, 1]")
        if self.perturb.max_order < 0 or self.perturb.max_order > 4:
            raise ConfigError("perturb.max_order must be in 0..4")

    # -- conversions -------------------------------------------------------------

    def cascade_params(self):
        s = self.system
        gamma = float(units.mhz_to_rad(s.gamma_MHz))
        Gamma = float(units.mhz_to_rad(s.Gamma_MHz))
        eta = s.eta_over_gamma * gamma
        W = 0.0 if s.nu_plus_over_gamma_dB is None else units.source_W_from_db(
            s.nu_plus_over_gamma_dB, gamma, eta)
        E = 0.0 if s.nu_minus_over_Gamma_dB is None else units.probe_E_from_db(
            s.nu_minus_over_Gamma_dB, Gamma)
        try:
            return dynamics.CascadeParams(
                gamma=gamma, Gamma=Gamma, delta_omega=float(units.mhz_to_rad(s.delta_omega_MHz)),
                alpha=s.alpha, eta=eta, W=W, E=E,
                detuning_source=float(units.mhz_to_rad(s.detuning_source_MHz)),
                detuning_probe=float(units.mhz_to_rad(s.detuning_probe_MHz)),
                gamma_phi=float(units.mhz_to_rad(s.gamma_phi_MHz)),
                Gamma_phi=float(units.mhz_to_rad(s.Gamma_phi_MHz)))
        except ParameterError as exc:
            raise ConfigError(f"system: {exc}") from None

    def grid_spec(self):
        sw = self.sweep
        if sw.axis1 is None or sw.axis2 is None:
            raise ConfigError("sweep.axis1 and sweep.axis2 are required")
        try:
            return spectrum.GridSpec(sw.kind, tuple(expand_grid(sw.axis1, "sweep.axis1")),
                                     tuple(expand_grid(sw.axis2, "sweep.axis2")))
        except ParameterError as exc:
            raise ConfigError(f"sweep: {exc}") from None

    def to_dict(self):
        return asdict(self)

    def dumps(self):
        """Fully resolved config; re-reading it reproduces the same run."""
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"
