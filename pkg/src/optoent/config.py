"""Run configuration: flat TOML files, figure presets and flag overrides."""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import CW, GaussianPulse, SystemParams

MODES = ("full", "noise-free", "baseline", "compare")
SWEEPS = ("none", "detuning", "intensity", "stability")
PRESET_NAMES = (
    "fig2a", "fig2b", "fig3a", "fig3b", "fig4a", "fig4b", "fig4c", "fig4d",
    "fig5a", "fig5b", "fig6", "fig7a", "fig7b", "fig8", "figC1a", "figC1b",
)


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class RunConfig:
    """All inputs of a run, as the ratios quoted in figure captions.

    Detunings are in units of omega_m, everything else in units of kappa.
    ``curves`` lists the detunings of a multi-curve figure; ``variants``
    lists "mode:n_m" pairs for figures overlaying noise and temperature
    settings.
    """

    name: str = "run"
    g: float = 1e-6
    omega_m: float = 2.5
    q_m: float = 1e7
    delta0: float = -1.0
    drive: str = "cw"
    E: float = 3e5
    pulse_width: float = 2.5
    n_m: float = 0.0
    n_th: float | None = None
    t_max: float = 15.0
    samples: int = 600
    mode: str = "full"
    sweep: str = "none"
    sweep_start: float = 0.0
    sweep_stop: float = 0.0
    sweep_steps: int = 1
    sweep_scale: str = "linear"
    sweep2_start: float = 0.0
    sweep2_stop: float = 0.0
    sweep2_steps: int = 1
    curves: tuple = ()
    variants: tuple = ()
    grid_dt: float = 5e-3
    grid_refine: int = 5
    grid_rtol: float = 1e-3
    esd_zero: float = 1e-9
    plateau_window: float = 0.2
    plateau_drift: float = 0.01
    seed: int = 0
    workers: int = 1
    out: str = "out"

    def validate(self) -> "RunConfig":
        positive = ("omega_m", "q_m", "t_max", "grid_dt")
        for key in positive:
            if not getattr(self, key) > 0:
                raise ConfigError(key, "must be > 0")
        for key in ("g", "E", "n_m"):
            if getattr(self, key) < 0:
                raise ConfigError(key, "must be >= 0")
        if self.n_th is not None and self.n_th < 0:
            raise ConfigError("n_th", "must be >= 0")
        if self.samples < 1:
            raise ConfigError("samples", "must be >= 1")
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {', '.join(MODES)}")
        if self.sweep not in SWEEPS:
            raise ConfigError("sweep", f"must be one of {', '.join(SWEEPS)}")
        if self.drive not in ("cw", "pulse"):
            raise ConfigError("drive", "must be 'cw' or 'pulse'")
        if self.drive == "pulse" and not self.pulse_width > 0:
            raise ConfigError("pulse_width", "must be > 0 for a pulse")
        if self.sweep != "none":
            if self.sweep_steps < 1:
                raise ConfigError("sweep_steps", "must be >= 1")
            if self.sweep_steps > 1 and self.sweep_start == self.sweep_stop:
                raise ConfigError("sweep_stop", "sweep range is empty")
            if self.sweep_scale not in ("linear", "log"):
                raise ConfigError("sweep_scale", "must be 'linear' or 'log'")
            if self.sweep_scale == "log" and min(self.sweep_start, self.sweep_stop) <= 0:
                raise ConfigError("sweep_start", "log sweeps need positive bounds")
        if self.sweep == "stability":
            if self.sweep2_steps < 1 or (self.sweep2_steps > 1 and self.sweep2_start == self.sweep2_stop):
                raise ConfigError("sweep2_stop", "second sweep range is empty")
        if self.grid_refine < 1:
            raise ConfigError("grid_refine", "must be >= 1")
        for v in self.variants:
            mode, _, occ = str(v).partition(":")
            if mode not in MODES or not occ:
                raise ConfigError("variants", f"bad entry {v!r}; expected 'mode:n_m'")
        return self

    def detunings(self) -> list[float]:
        return [float(c) for c in self.curves] if self.curves else [self.delta0]

    def system(self, delta0: float | None = None, n_m: float | None = None) -> SystemParams:
        n = self.n_m if n_m is None else n_m
        return SystemParams.from_ratios(
            self.g,
            self.omega_m,
            self.q_m,
            self.delta0 if delta0 is None else delta0,
            n_m=n,
            n_th=self.n_th if self.n_th is not None else n,
        )

    def drive_profile(self, amplitude: float | None = None):
        amp = self.E if amplitude is None else amplitude
        if self.drive == "cw":
            return CW(amp)
        return GaussianPulse(amp, self.pulse_width)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["curves"] = list(self.curves)
        d["variants"] = list(self.variants)
        return d


_FIELD_TYPES = {f.name: f for f in fields(RunConfig)}


def _coerce(key: str, value):
    if key not in _FIELD_TYPES:
        raise ConfigError(key, "unknown configuration key")
    if key in ("curves", "variants"):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(key, "must be a list")
        return tuple(value)
    if value is None:
        return None
    default = _FIELD_TYPES[key].default
    try:
        if isinstance(default, bool):
            return bool(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float) or key == "n_th":
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, f"cannot interpret {value!r}") from exc


def config_from_mapping(mapping: dict, base: RunConfig | None = None) -> RunConfig:
    base = base or RunConfig()
    changes = {k: _coerce(k, v) for k, v in mapping.items()}
    return replace(base, **changes)


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return config_from_mapping(data, base)


def preset_path(name: str):
    if name not in PRESET_NAMES:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    return resources.files("optoent") / "presets" / f"{name}.toml"


def load_preset(name: str) -> RunConfig:
    with preset_path(name).open("rb") as fh:
        data = tomllib.load(fh)
    return config_from_mapping(data, RunConfig(name=name))
