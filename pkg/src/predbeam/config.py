"""Scenario configuration and the flat ``key = value`` file format."""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Tuple

import numpy as np

from .signal_model import ArrayConfig, NoiseConfig


class ConfigError(ValueError):
    """Raised for unreadable or out-of-range configuration values."""


DEFAULT_POSITIONS = ((100.0, 20.0), (90.0, 20.0), (80.0, 20.0), (70.0, 20.0))


@dataclass(frozen=True)
class ProcessNoise:
    sigma_theta: float = np.deg2rad(0.02)
    sigma_d: float = 0.2
    sigma_v: float = 0.5
    sigma_beta: float = 1.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be nonnegative")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one Monte Carlo experiment.

    Defaults reproduce the 64-antenna simulation scenario: four vehicles on a
    road 20 m from the RSU, 30 GHz carrier, 20 ms slots.
    """

    positions: Tuple[Tuple[float, float], ...] = DEFAULT_POSITIONS
    speed_low: float = 10.0
    speed_high: float = 20.0
    carrier_hz: float = 30e9
    wave_speed: float = 3e8
    period: float = 0.02
    n_steps: int = 20
    n_tx: int = 64
    n_rx: int = 64
    m_vehicle: int = 16
    rcs: complex = 10 + 10j
    sigma_tau: float = 0.67e-6
    sigma_gamma: float = 2e3
    sigma_y2: float = 1.0
    n0: float = 1.0
    sigma_theta: float = float(np.deg2rad(0.02))
    sigma_d: float = 0.2
    sigma_v: float = 0.5
    sigma_beta: float = 1.0
    mf_gain: float = 64.0
    inflation: float = 64.0
    feedback_drop_radar: bool = False
    power: float = 1.0
    trials: int = 1000
    seed: int = 0
    nominal_snr_db: float = 10.0
    loopy_iters: int = 5
    prior_inflation: float = 10.0

    def __post_init__(self):
        positions = tuple(tuple(float(c) for c in p) for p in self.positions)
        object.__setattr__(self, "positions", positions)
        if len(positions) < 1 or any(len(p) != 2 for p in positions):
            raise ConfigError("positions: need at least one (x, y) pair")
        if any(y <= 0 for _, y in positions):
            raise ConfigError("positions: vehicles must have y > 0")
        _require(self.speed_low <= self.speed_high, "speed_low", "must not exceed speed_high")
        for name in ("carrier_hz", "wave_speed", "period", "n0", "mf_gain", "power"):
            _require(getattr(self, name) > 0, name, "must be > 0")
        for name in ("n_steps", "n_tx", "n_rx", "m_vehicle", "trials", "loopy_iters"):
            _require(int(getattr(self, name)) >= 1, name, "must be >= 1")
        for name in ("sigma_tau", "sigma_gamma", "sigma_y2", "sigma_theta", "sigma_d",
                     "sigma_v", "sigma_beta", "prior_inflation"):
            _require(getattr(self, name) >= 0, name, "must be >= 0")
        _require(self.inflation >= 1, "inflation", "must be >= 1")
        _require(self.seed >= 0, "seed", "must be >= 0")

    @property
    def n_vehicles(self) -> int:
        return len(self.positions)

    @property
    def array(self) -> ArrayConfig:
        return ArrayConfig(self.n_tx, self.n_rx, self.m_vehicle, self.carrier_hz, self.wave_speed)

    @property
    def noise(self) -> NoiseConfig:
        return NoiseConfig(self.sigma_tau, self.sigma_gamma, self.sigma_y2, self.n0, self.mf_gain)

    @property
    def process(self) -> ProcessNoise:
        return ProcessNoise(self.sigma_theta, self.sigma_d, self.sigma_v, self.sigma_beta)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["positions"] = [list(p) for p in self.positions]
        out["rcs"] = format_complex(self.rcs)
        return out


def _require(ok, key, msg):
    if not ok:
        raise ConfigError(f"{key}: {msg}")


def format_complex(z: complex) -> str:
    return f"{z.real!r}{z.imag:+}j"


def noise_free(cfg: ScenarioConfig) -> ScenarioConfig:
    """Copy of ``cfg`` with every measurement and process noise switched off."""
    return cfg.replace(sigma_tau=0.0, sigma_gamma=0.0, sigma_y2=0.0, sigma_theta=0.0,
                       sigma_d=0.0, sigma_v=0.0, sigma_beta=0.0)


def _parse_positions(text: str):
    pairs = [p for p in text.replace("\n", ";").split(";") if p.strip()]
    return tuple(tuple(float(c) for c in pair.split(",")) for pair in pairs)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_speed_range(text: str):
    lo, hi = (float(c) for c in text.split(","))
    return {"speed_low": lo, "speed_high": hi}


_PARSERS = {
    f.name: f.type for f in dataclasses.fields(ScenarioConfig)
}


def _convert(key: str, raw: str):
    kind = _PARSERS[key]
    if key == "positions":
        return _parse_positions(raw)
    if kind == "bool":
        return _parse_bool(raw)
    if kind == "int":
        value = float(raw)
        if value != int(value):
            raise ValueError(f"not an integer: {raw!r}")
        return int(value)
    if kind == "complex":
        return complex(raw.replace(" ", ""))
    return float(raw)


def parse_config(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Parse ``key = value`` lines (``#`` comments allowed) on top of ``base``."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[scenario]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc
    changes = {}
    for key, raw in parser["scenario"].items():
        key = key.strip()
        if key == "speed_range":
            try:
                changes.update(_parse_speed_range(raw))
            except ValueError as exc:
                raise ConfigError(f"speed_range: {exc}") from exc
            continue
        if key not in _PARSERS:
            raise ConfigError(f"{key}: unknown configuration key")
        try:
            changes[key] = _convert(key, raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from exc
    base = base or ScenarioConfig()
    try:
        return dataclasses.replace(base, **changes)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ScenarioConfig:
    """Read a scenario file; missing keys keep their defaults."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
