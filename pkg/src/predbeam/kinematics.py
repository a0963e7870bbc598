"""Ground-truth vehicle motion and the linearised state-evolution model.

Coordinates: RSU at the origin, ULA axis along +x (the road direction),
vehicles drive in -x at fixed y. Angles are measured from the +x axis, so
cos(theta) = x / d.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ProcessNoise, ScenarioConfig
from .signal_model import _std_normal, delay_measurement, doppler_measurement, echo_observation


@dataclass(frozen=True)
class VehicleTruth:
    """True state of one or more vehicles (all fields broadcast together)."""

    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    beta: np.ndarray

    @property
    def d(self) -> np.ndarray:
        return np.hypot(self.x, self.y)

    @property
    def theta(self) -> np.ndarray:
        return np.arctan2(self.y, self.x)

    @property
    def in_view(self) -> np.ndarray:
        """False once a vehicle has passed the RSU (end of track)."""
        th = self.theta
        return (self.x > 0) & (th > 0) & (th < np.pi)

    def __getitem__(self, idx) -> "VehicleTruth":
        return VehicleTruth(self.x[idx], self.y[idx], self.v[idx], self.beta[idx])


@dataclass(frozen=True)
class Measurement:
    """Radar observables of one time step; ``beam`` is the angle the echo was steered with."""

    tau: np.ndarray
    gamma: np.ndarray
    y: np.ndarray
    beam: np.ndarray

    def __getitem__(self, idx) -> "Measurement":
        return Measurement(self.tau[idx], self.gamma[idx], self.y[idx], self.beam[idx])


def init_scenario(cfg: ScenarioConfig, rng) -> VehicleTruth:
    """Initial truth for every vehicle; speeds drawn uniformly from the configured range."""
    pos = np.asarray(cfg.positions, dtype=float)
    v = rng.uniform(cfg.speed_low, cfg.speed_high, size=len(pos))
    d = np.hypot(pos[:, 0], pos[:, 1])
    return VehicleTruth(pos[:, 0].copy(), pos[:, 1].copy(), v, cfg.rcs / (2 * d))


def step_truth(s: VehicleTruth, period: float, noise: ProcessNoise, rng, draws=None) -> VehicleTruth:
    """Advance the true state by one slot.

    The vehicle moves exactly by ``v * period`` along -x; the resulting polar
    state then receives the additive process noise. ``draws`` may supply the
    five standard normals (theta, d, v, Re beta, Im beta) along the last axis.
    """
    if period <= 0:
        raise ValueError("period must be > 0")
    if draws is None:
        draws = _std_normal(rng, np.shape(s.x) + (5,))
    draws = np.asarray(draws, dtype=float)
    x = s.x - s.v * period
    d_prev = s.d
    d = np.hypot(x, s.y)
    theta = np.arctan2(s.y, x)
    beta = s.beta * d_prev / d

    theta = theta + noise.sigma_theta * draws[..., 0]
    d = d + noise.sigma_d * draws[..., 1]
    v = s.v + noise.sigma_v * draws[..., 2]
    beta = beta + noise.sigma_beta * (draws[..., 3] + 1j * draws[..., 4]) / np.sqrt(2)
    return VehicleTruth(d * np.cos(theta), d * np.sin(theta), v, beta)


def evolve_linearized(theta, d, v, beta, period: float):
    """First-order state evolution; returns ``(theta, d, v, beta, rho)``."""
    theta = np.asarray(theta, dtype=float)
    d = np.asarray(d, dtype=float)
    step = np.asarray(v, dtype=float) * period
    rho = 1.0 + step * np.cos(theta) / d
    return (
        theta + step * np.sin(theta) / d,
        d - step * np.cos(theta),
        np.asarray(v, dtype=float).copy(),
        beta * rho,
        rho,
    )


def kinematic_residuals(prev: VehicleTruth, cur: VehicleTruth, period: float):
    """Relative residuals of the exact triangle relations between consecutive states.

    Returns ``(sine_rule, cosine_rule)``; both vanish for noise-free motion.
    """
    step = prev.v * period
    lhs1 = np.sin(cur.theta - prev.theta) * cur.d
    rhs1 = step * np.sin(prev.theta)
    lhs2 = cur.d**2
    rhs2 = prev.d**2 + step**2 - 2 * prev.d * step * np.cos(prev.theta)
    return np.abs(lhs1 - rhs1) / np.abs(rhs1), np.abs(lhs2 - rhs2) / np.abs(rhs2)


@dataclass(frozen=True)
class MeasurementDraws:
    """Standard-normal variates behind one step's measurements.

    Sharing one instance between schemes gives them identical noise
    realisations, each scaled by that scheme's own noise levels.
    """

    tau: np.ndarray
    gamma: np.ndarray
    y: np.ndarray

    @classmethod
    def sample(cls, rng, shape, n_rx: int) -> "MeasurementDraws":
        shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
        tau = _std_normal(rng, shape)
        gamma = _std_normal(rng, shape)
        y = (_std_normal(rng, shape + (n_rx,)) + 1j * _std_normal(rng, shape + (n_rx,))) / np.sqrt(2)
        return cls(tau, gamma, y)

    def __getitem__(self, idx) -> "MeasurementDraws":
        return MeasurementDraws(self.tau[idx], self.gamma[idx], self.y[idx])


def generate_measurements(s: VehicleTruth, theta_pred, cfg: ScenarioConfig, rng=None,
                          draws: MeasurementDraws | None = None) -> Measurement:
    """Delay, Doppler and echo samples for each vehicle, echo steered at ``theta_pred``."""
    if draws is None:
        draws = MeasurementDraws.sample(rng, np.shape(s.x), cfg.n_rx)
    noise = cfg.noise
    arr = cfg.array
    theta = s.theta
    tau = delay_measurement(s.d, noise, rng, cfg.wave_speed, draw=draws.tau)
    gamma = doppler_measurement(s.v, theta, noise, rng, arr, draw=draws.gamma)
    y = echo_observation(s.beta, theta, theta_pred, cfg.power, arr, noise, rng, draw=draws.y)
    return Measurement(tau, gamma, y, np.asarray(theta_pred, dtype=float) * np.ones_like(tau))
