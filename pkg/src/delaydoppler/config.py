"""Flat ``section.key = value`` run configuration.

Defaults: a 1024 x 100 grid with 6.25 ns / 156.25 Hz resolution, at most
25 paths and 50 gradient iterations for the ML estimator, and a 15 x 7
OS-CFAR window with rank 79 and scaling 11.39.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

from .cfar import CfarConfig
from .evaluation import MatchBoundary, los_gain_profile
from .exceptions import ConfigError
from .mle import MleConfig
from .signal_model import SPEED_OF_LIGHT, RadarGrid, default_scene, snr_to_noise_std

DEFAULTS = {
    "seed": 0,
    "grid.K": 1024,
    "grid.L": 100,
    "grid.delta_f": 156250.0,
    "grid.delta_t": 6.4e-05,
    "scene.bistatic_angle_deg": 20.0,
    "scene.distance": 4.0,
    "scene.radius_1": 1.2,
    "scene.radius_2": 0.8,
    "scene.phase_1": 0.0,
    "scene.phase_2": math.pi,
    "scene.rotation_rate": 2.0 * math.pi / 0.64,
    "scene.carrier_wavelength": SPEED_OF_LIGHT / 5.8e9,
    "scene.los_gain_db": 0.0,
    "scene.snr_db": 20.0,
    "preprocess.background_subtraction": True,
    "cfar.m_ref": 15,
    "cfar.n_ref": 7,
    "cfar.guard_delay": 1,
    "cfar.guard_doppler": 1,
    "cfar.r": 79,
    "cfar.alpha_os": 11.39,
    "cfar.interpolation": "power",
    "mle.p_max": 25,
    "mle.n_grad_max": 50,
    "mle.step_tol": 1e-8,
    "mle.validity_snr_db": 8.0,
    "mle.damping_init": 1e-3,
    "eval.boundary": 0.5,
    "synth.frames": 10,
    "sweep.angles": (0.0, 20.0, 90.0, 180.0),
    "sweep.algorithms": ("cfar", "mle"),
    "sweep.frames": 50,
    "sweep.los_profile": True,
    "sweep.los_peak_db": 40.0,
    "sweep.los_width_deg": 20.0,
    "output.timing": False,
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key, text):
    default = DEFAULTS[key]
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            items = [t.strip() for t in text.split(",") if t.strip()]
            if default and isinstance(default[0], float):
                return tuple(float(t) for t in items)
            return tuple(items)
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {key} (expected {type(default).__name__})") from None
    return text


def _render(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_render(v) for v in value)
    return str(value)


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))

    @classmethod
    def load(cls, path=None, overrides=()):
        """Defaults, then the config file at ``path``, then ``key=value`` overrides."""
        cfg = cls()
        if path is not None:
            for n, line in enumerate(Path(path).read_text().splitlines(), 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{n}: expected 'section.key = value', got {line!r}")
                key, value = line.split("=", 1)
                cfg.set(key.strip(), value)
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            cfg.set(key.strip(), value)
        return cfg

    def set(self, key, value):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _coerce(key, value) if isinstance(value, str) else value

    def __getitem__(self, key):
        return self.values[key]

    def lines(self):
        return [f"{k} = {_render(self.values[k])}" for k in sorted(self.values)]

    @property
    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.lines()).encode()).hexdigest()

    def header(self, command):
        """Comment lines echoing the effective configuration."""
        return [f"delaydoppler {command}", f"config_sha256 = {self.digest}", *self.lines()]

    # typed views

    def grid(self) -> RadarGrid:
        v = self.values
        return RadarGrid(v["grid.K"], v["grid.L"], v["grid.delta_f"], v["grid.delta_t"])

    def scene(self, angle_deg=None):
        v = self.values
        return default_scene(
            v["scene.bistatic_angle_deg"] if angle_deg is None else angle_deg,
            distance=v["scene.distance"],
            sphere_radii_from_center=(v["scene.radius_1"], v["scene.radius_2"]),
            initial_phases=(v["scene.phase_1"], v["scene.phase_2"]),
            rotation_rate=v["scene.rotation_rate"],
            carrier_wavelength=v["scene.carrier_wavelength"],
            los_gain_db=v["scene.los_gain_db"],
            noise_std=snr_to_noise_std(v["scene.snr_db"]),
        )

    def cfar(self) -> CfarConfig:
        v = self.values
        return CfarConfig(
            v["cfar.m_ref"], v["cfar.n_ref"], v["cfar.guard_delay"], v["cfar.guard_doppler"],
            v["cfar.r"], v["cfar.alpha_os"], v["cfar.interpolation"],
        )

    def mle(self) -> MleConfig:
        v = self.values
        return MleConfig(
            v["mle.p_max"], v["mle.n_grad_max"], v["mle.step_tol"], v["mle.validity_snr_db"],
            v["mle.damping_init"], v["preprocess.background_subtraction"],
        )

    def boundary(self) -> MatchBoundary:
        return MatchBoundary(self.values["eval.boundary"])

    def los_profile(self):
        v = self.values
        if not v["sweep.los_profile"]:
            return None
        peak, width = v["sweep.los_peak_db"], v["sweep.los_width_deg"]
        return _Profile(peak, width)


@dataclass(frozen=True)
class _Profile:
    peak_db: float
    width_deg: float

    def __call__(self, angle_deg):
        return los_gain_profile(angle_deg, self.peak_db, self.width_deg)
