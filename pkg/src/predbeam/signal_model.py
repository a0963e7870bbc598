"""Array geometry, radar echo synthesis and downlink SNR/rate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_angle, check_positive


@dataclass(frozen=True)
class ArrayConfig:
    n_tx: int = 64
    n_rx: int = 64
    m_vehicle: int = 16
    carrier_hz: float = 30e9
    wave_speed: float = 3e8

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "m_vehicle"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        check_positive(self.carrier_hz, "carrier_hz")
        check_positive(self.wave_speed, "wave_speed")

    @property
    def array_gain(self) -> float:
        """Radar array gain sqrt(N_t N_r)."""
        return float(np.sqrt(self.n_tx * self.n_rx))

    @property
    def doppler_scale(self) -> float:
        """Hz of Doppler per m/s of radial speed (2 f_c / c)."""
        return 2.0 * self.carrier_hz / self.wave_speed


@dataclass(frozen=True)
class NoiseConfig:
    """Measurement noise levels.

    ``sigma_y2`` is the total complex variance of the raw echo samples; the
    matched filter divides it by ``mf_gain``.
    """

    sigma_tau: float = 0.67e-6
    sigma_gamma: float = 2e3
    sigma_y2: float = 1.0
    n0: float = 1.0
    mf_gain: float = 64.0

    def __post_init__(self):
        for name in ("sigma_tau", "sigma_gamma", "sigma_y2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        check_positive(self.n0, "n0")
        check_positive(self.mf_gain, "mf_gain")

    @property
    def echo_var(self) -> float:
        return self.sigma_y2 / self.mf_gain


def steering_vector(theta, n: int) -> np.ndarray:
    """ULA response with element i equal to exp(-j*pi*(i-1)*cos(theta)).

    ``theta`` may be an array; the element index runs along the last axis.
    """
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta must be finite")
    if n < 1:
        raise ValueError("n must be >= 1")
    idx = np.arange(n)
    return np.exp(-1j * np.pi * np.multiply.outer(np.cos(theta), idx))


def beam_gain(theta, theta_beam, n: int) -> np.ndarray:
    """a^H(theta) a(theta_beam) for an n-element ULA."""
    return np.sum(np.conj(steering_vector(theta, n)) * steering_vector(theta_beam, n), axis=-1)


def _std_normal(rng, shape) -> np.ndarray:
    """Standard-normal draws, or zeros when no generator is given (noise-free)."""
    if rng is None:
        return np.zeros(shape)
    return rng.standard_normal(shape)


def delay_measurement(d, noise: NoiseConfig, rng, wave_speed: float = 3e8, draw=None):
    """Round-trip delay 2d/c plus N(0, sigma_tau^2) noise.

    ``draw`` optionally supplies the standard-normal variate(s) so that several
    schemes can share one noise realisation.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("range must be nonnegative")
    if draw is None:
        draw = _std_normal(rng, d.shape)
    return 2.0 * d / wave_speed + noise.sigma_tau * draw


def doppler_measurement(v, theta, noise: NoiseConfig, rng, arr: ArrayConfig = ArrayConfig(), draw=None):
    """Doppler 2 v cos(theta) f_c / c plus N(0, sigma_gamma^2) noise."""
    v = np.asarray(v, dtype=float)
    theta = check_angle(theta)
    if draw is None:
        draw = _std_normal(rng, np.broadcast(v, theta).shape)
    return arr.doppler_scale * v * np.cos(theta) + noise.sigma_gamma * draw


def echo_gain(theta_true, theta_pred, arr: ArrayConfig) -> np.ndarray:
    """Noise-free echo per unit beta*sqrt(e): sqrt(NtNr) b(theta) a^H(theta) a(theta_pred)."""
    b = steering_vector(theta_true, arr.n_rx)
    return arr.array_gain * b * beam_gain(theta_true, theta_pred, arr.n_tx)[..., None]


def echo_observation(
    beta,
    theta_true,
    theta_pred,
    power,
    arr: ArrayConfig,
    noise: NoiseConfig,
    rng,
    draw=None,
) -> np.ndarray:
    """Matched-filtered echo samples, one per receive antenna (last axis).

    ``draw`` is an optional complex standard-normal array (unit total variance)
    of shape ``(..., n_rx)``.
    """
    theta_true = check_angle(theta_true)
    theta_pred = check_angle(theta_pred, "theta_pred")
    beta = np.asarray(beta, dtype=complex)
    signal = (beta * np.sqrt(power))[..., None] * echo_gain(theta_true, theta_pred, arr)
    if draw is None:
        shape = signal.shape
        draw = (_std_normal(rng, shape) + 1j * _std_normal(rng, shape)) / np.sqrt(2)
    return signal + np.sqrt(noise.echo_var) * draw


def pathloss_power(arr: ArrayConfig, noise: NoiseConfig, nominal_snr_db: float = 10.0, power: float = 1.0) -> float:
    """|alpha|^2 giving ``nominal_snr_db`` under perfect alignment with unit-norm beamformers."""
    nominal = 10 ** (nominal_snr_db / 10)
    return nominal * noise.n0 / (arr.n_tx**2 * arr.m_vehicle**2 * power)


def received_snr(
    theta_true,
    theta_pred_rsu,
    theta_pred_vehicle,
    alpha2,
    power,
    arr: ArrayConfig,
    noise: NoiseConfig,
) -> np.ndarray:
    """Linear downlink SNR with unit-norm transmit and receive beamformers.

    ``alpha2`` is the pathloss power |alpha|^2; see :func:`pathloss_power`.
    """
    theta_true = check_angle(theta_true)
    check_angle(theta_pred_rsu, "theta_pred_rsu")
    check_angle(theta_pred_vehicle, "theta_pred_vehicle")
    rx = beam_gain(theta_pred_vehicle, theta_true, arr.m_vehicle) / np.sqrt(arr.m_vehicle)
    tx = beam_gain(theta_true, theta_pred_rsu, arr.n_tx) * np.sqrt(power / arr.n_tx)
    gain2 = arr.n_tx * arr.m_vehicle
    return gain2 * alpha2 * np.abs(rx * tx) ** 2 / noise.n0


def to_db(ratio):
    return 10.0 * np.log10(ratio)


def sum_rate(snrs) -> float:
    """Achievable sum rate sum_k log2(1 + SNR_k) in bps/Hz."""
    snrs = np.asarray(snrs, dtype=float)
    if np.any(snrs < 0):
        raise ValueError("SNR must be nonnegative")
    return float(np.sum(np.log2(1.0 + snrs)))
