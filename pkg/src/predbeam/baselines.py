"""Comparison trackers: an extended Kalman filter on the same models, and the
feedback-based scheme realised as a noise-inflated copy of the scenario.

The EKF state is ``(theta, d, v, Re beta, Im beta)``. All functions operate on
batches: ``x`` has shape ``(B, 5)`` and ``P`` shape ``(B, 5, 5)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .config import ConfigError, ProcessNoise, ScenarioConfig
from .gaussian import ClampLog, ComplexGaussian, Gaussian
from .kinematics import Measurement, evolve_linearized
from .signal_model import ArrayConfig, NoiseConfig, steering_vector
from .tracker import BeliefSet

RIDGE = 1e-9
RANGE_FLOOR = 1.0  # m; a diverged filter is held here instead of crossing d = 0
_THETA_EPS = 1e-9
N_STATE = 5


@dataclass(frozen=True)
class EkfState:
    x: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        P = np.asarray(self.P, dtype=float)
        P = P.reshape(x.shape[:-1] + (N_STATE, N_STATE))
        if x.shape[-1] != N_STATE:
            raise ValueError("state must have 5 components (theta, d, v, Re beta, Im beta)")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "P", P)

    def __getitem__(self, idx) -> "EkfState":
        return EkfState(self.x[idx], self.P[idx])

    @classmethod
    def from_beliefs(cls, b: BeliefSet) -> "EkfState":
        beta = np.asarray(b.beta.mean, dtype=complex)
        x = np.stack([b.theta.mean, b.d.mean, b.v.mean, beta.real, beta.imag], axis=-1)
        diag = np.stack([b.theta.var, b.d.var, b.v.var, b.beta.var / 2, b.beta.var / 2], axis=-1)
        P = diag[..., :, None] * np.eye(N_STATE)
        return cls(x, P)

    def to_beliefs(self, theta_pred) -> BeliefSet:
        x, P = self.x, self.P
        return BeliefSet(
            Gaussian(x[:, 0], P[:, 0, 0]),
            Gaussian(x[:, 1], P[:, 1, 1]),
            Gaussian(x[:, 2], P[:, 2, 2]),
            ComplexGaussian(x[:, 3] + 1j * x[:, 4], P[:, 3, 3] + P[:, 4, 4]),
            np.asarray(theta_pred, dtype=float),
        )


def transition(x, period: float):
    """State-evolution function and its Jacobian, ``(f(x), F)``."""
    x = np.asarray(x, dtype=float)
    th, d, v, br, bi = np.moveaxis(x, -1, 0)
    th_p, d_p, v_p, _, rho = evolve_linearized(th, d, v, 0.0, period)
    s, c = np.sin(th), np.cos(th)
    T = period
    F = np.zeros(x.shape + (N_STATE,))
    F[..., 0, 0] = 1 + v * T * c / d
    F[..., 0, 1] = -v * T * s / d**2
    F[..., 0, 2] = T * s / d
    F[..., 1, 0] = v * T * s
    F[..., 1, 1] = 1.0
    F[..., 1, 2] = -T * c
    F[..., 2, 2] = 1.0
    drho = np.stack([-v * T * s / d, -v * T * c / d**2, T * c / d], axis=-1)
    F[..., 3, :3] = br[..., None] * drho
    F[..., 4, :3] = bi[..., None] * drho
    F[..., 3, 3] = rho
    F[..., 4, 4] = rho
    fx = np.stack([th_p, d_p, v_p, br * rho, bi * rho], axis=-1)
    return fx, F


def process_covariance(noise: ProcessNoise) -> np.ndarray:
    return np.diag([noise.sigma_theta**2, noise.sigma_d**2, noise.sigma_v**2,
                    noise.sigma_beta**2 / 2, noise.sigma_beta**2 / 2])


def ekf_predict(s: EkfState, period: float, noise: ProcessNoise) -> EkfState:
    """Propagate through the linearised motion model: x <- f(x), P <- F P F^T + Q."""
    if np.any(s.x[:, 1] <= 0):
        raise ValueError("range estimate must be positive")
    fx, F = transition(s.x, period)
    fx[:, 0] = np.clip(fx[:, 0], _THETA_EPS, np.pi - _THETA_EPS)
    P = F @ s.P @ np.swapaxes(F, -1, -2) + process_covariance(noise)
    return EkfState(fx, 0.5 * (P + np.swapaxes(P, -1, -2)))


def measurement_model(x, beam, arr: ArrayConfig, power: float = 1.0):
    """Stacked real measurement ``[tau, gamma, Re y, Im y]`` and its Jacobian."""
    x = np.asarray(x, dtype=float)
    th, d, v, br, bi = np.moveaxis(x, -1, 0)
    beta = br + 1j * bi
    s, c = np.sin(th), np.cos(th)
    gain = arr.array_gain * np.sqrt(power)
    # S_l = sum_i a_i(beam) e^{-j pi (l-i) c} = b_l(theta) * sum_i e^{j pi i (c - c_beam)}
    idx = np.arange(arr.n_tx)
    w = np.exp(1j * np.pi * np.multiply.outer(c - np.cos(beam), idx))
    g0 = w.sum(axis=-1)[..., None]
    g1 = (w * idx).sum(axis=-1)[..., None]
    b = steering_vector(th, arr.n_rx)
    ls = np.arange(arr.n_rx)
    S = b * g0
    dS = b * (ls * g0 - g1)                                  # sum_i (l-i) a_i e^{-j pi (l-i) c}
    y = gain * beta[..., None] * S
    dy_dth = gain * beta[..., None] * 1j * np.pi * s[..., None] * dS

    n_rx = arr.n_rx
    h = np.concatenate([np.stack([2 * d / arr.wave_speed, arr.doppler_scale * v * c], axis=-1),
                        y.real, y.imag], axis=-1)
    H = np.zeros(x.shape[:-1] + (2 + 2 * n_rx, N_STATE))
    H[..., 0, 1] = 2 / arr.wave_speed
    H[..., 1, 0] = -arr.doppler_scale * v * s
    H[..., 1, 2] = arr.doppler_scale * c
    for part, sl in ((np.real, slice(2, 2 + n_rx)), (np.imag, slice(2 + n_rx, None))):
        H[..., sl, 0] = part(dy_dth)
        H[..., sl, 3] = part(gain * S)
        H[..., sl, 4] = part(1j * gain * S)
    return h, H


def measurement_variances(noise: NoiseConfig, n_rx: int) -> np.ndarray:
    half = noise.echo_var / 2
    return np.concatenate([[noise.sigma_tau**2, noise.sigma_gamma**2], np.full(2 * n_rx, half)])


def kalman_update(x, P, resid, H, r_var, log: Optional[ClampLog] = None):
    """Kalman update for a diagonal measurement covariance.

    Uses K = P (I + A P)^{-1} H^T R^{-1} with A = H^T R^{-1} H, which equals the
    textbook gain but only needs 5x5 solves. Zero-variance rows get the ridge
    and are flagged; infinite-variance rows carry no information. The
    covariance uses the Joseph form.
    """
    r_var = np.broadcast_to(np.asarray(r_var, dtype=float), resid.shape)
    zero = r_var <= 0
    if log is not None:
        log.record("ekf_ridge", np.any(zero, axis=-1))
    r_inv = np.where(np.isinf(r_var), 0.0, 1.0 / np.where(zero, RIDGE, r_var))
    Ht = np.swapaxes(H, -1, -2)
    A = Ht @ (r_inv[..., None] * H)
    b = np.einsum("...ij,...j->...i", Ht, r_inv * resid)
    eye = np.eye(N_STATE)
    G = P @ np.linalg.inv(eye + A @ P)                    # K = G H^T R^{-1}
    x_new = x + np.einsum("...ij,...j->...i", G, b)
    IKH = eye - G @ A
    # Joseph form; K R K^T = G A G^T
    P_new = IKH @ P @ np.swapaxes(IKH, -1, -2) + G @ A @ np.swapaxes(G, -1, -2)
    return x_new, 0.5 * (P_new + np.swapaxes(P_new, -1, -2))


def ekf_update(s: EkfState, meas: Measurement, arr: ArrayConfig, noise: NoiseConfig,
               power: float = 1.0, log: Optional[ClampLog] = None) -> EkfState:
    """Measurement update with the stacked delay, Doppler and echo samples."""
    h, H = measurement_model(s.x, meas.beam, arr, power)
    y = np.asarray(meas.y)
    z = np.concatenate([np.stack([meas.tau, meas.gamma], axis=-1), y.real, y.imag], axis=-1)
    x, P = kalman_update(s.x, s.P, z - h, H, measurement_variances(noise, arr.n_rx), log)
    x[:, 0] = np.clip(x[:, 0], _THETA_EPS, np.pi - _THETA_EPS)
    low = x[:, 1] < RANGE_FLOOR
    if log is not None:
        log.record("ekf_range", low)
    x[:, 1] = np.where(low, RANGE_FLOOR, x[:, 1])
    return EkfState(x, P)


def feedback_config(base: ScenarioConfig, inflation: Optional[float] = None) -> ScenarioConfig:
    """Scenario for the feedback-based scheme: echo noise variance times ``inflation``.

    Defaults to ``base.inflation``; every other parameter is kept.
    """
    inflation = base.inflation if inflation is None else float(inflation)
    if not inflation >= 1:
        raise ConfigError("inflation: must be >= 1")
    return base.replace(sigma_y2=base.sigma_y2 * inflation, inflation=inflation)


class EKFTracker(BaseEstimator):
    """Extended Kalman filter baseline with the same online interface as
    :class:`predbeam.tracker.FactorGraphTracker`."""

    def __init__(self, config: Optional[ScenarioConfig] = None):
        self.config = config

    def start(self, prior: BeliefSet) -> "EKFTracker":
        self.scenario_ = self.config or ScenarioConfig()
        self.state_ = EkfState.from_beliefs(prior)
        self.theta_pred_ = np.asarray(prior.theta_pred, dtype=float)
        self.belief_ = prior
        self.history_ = []
        self.clamp_log_ = ClampLog()
        return self

    def predict(self, X=None) -> np.ndarray:
        check_is_fitted(self, "state_")
        return self.theta_pred_

    def partial_fit(self, meas: Measurement, y=None) -> "EKFTracker":
        check_is_fitted(self, "state_")
        cfg = self.scenario_
        state = ekf_predict(self.state_, cfg.period, cfg.process)
        state = ekf_update(state, meas, cfg.array, cfg.noise, cfg.power, self.clamp_log_)
        self.state_ = state
        self.theta_pred_ = np.clip(transition(state.x, cfg.period)[0][:, 0], _THETA_EPS, np.pi - _THETA_EPS)
        self.belief_ = state.to_beliefs(self.theta_pred_)
        self.history_.append(self.belief_)
        return self

    def fit(self, X: Sequence[Measurement], y=None, prior: Optional[BeliefSet] = None) -> "EKFTracker":
        if prior is None:
            raise ValueError("fit needs the initial beliefs via prior=")
        self.start(prior)
        for meas in X:
            self.partial_fit(meas)
        return self

    def transform(self, X: Sequence[Measurement]) -> np.ndarray:
        check_is_fitted(self, "state_")
        out = []
        for meas in X:
            self.partial_fit(meas)
            out.append(self.belief_.theta.mean)
        return np.asarray(out)
