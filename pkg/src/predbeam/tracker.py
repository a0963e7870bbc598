"""Factor-graph predictive beam tracker with Gaussian message passing.

Each time step runs: prediction messages from the previous beliefs, the range
update from the delay, a few loopy sweeps over the auxiliary phase variables
``eps[q] = exp(-j*pi*q*cos(theta))`` together with the reflection coefficient,
and finally the Doppler-based speed update and the fused angle belief.

Every function works on a batch of independent tracks: scalars per track have
shape ``(B,)``, per-antenna arrays ``(B, n)`` and per-``q`` arrays ``(B, L)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.signal import fftconvolve
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .config import ProcessNoise, ScenarioConfig
from .gaussian import (
    VAR_FLOOR,
    ClampLog,
    ComplexGaussian,
    Gaussian,
    arccos_coeffs,
    arccos_taylor,
    complex_exp_moments,
    complex_product,
    cos_moments,
    divide,
    exp_to_angle_message,
    product,
    truncation_var,
)
from .kinematics import Measurement, evolve_linearized
from .signal_model import ArrayConfig, NoiseConfig, steering_vector

_THETA_EPS = 1e-9
UPDATE_ORDER = ("epsilon", "beta", "theta")


@dataclass(frozen=True)
class BeliefSet:
    """Beliefs over one step's state; ``theta_pred`` is the beam angle for the next step."""

    theta: Gaussian
    d: Gaussian
    v: Gaussian
    beta: ComplexGaussian
    theta_pred: np.ndarray

    def __getitem__(self, idx) -> "BeliefSet":
        return BeliefSet(self.theta[idx], self.d[idx], self.v[idx], self.beta[idx], self.theta_pred[idx])

    @property
    def means(self):
        return self.theta.mean, self.d.mean, self.v.mean, self.beta.mean


@dataclass(frozen=True)
class Prediction:
    theta: Gaussian
    d: Gaussian
    v: Gaussian
    beta: ComplexGaussian
    rho: np.ndarray

    @property
    def theta_pred(self) -> np.ndarray:
        return self.theta.mean


@dataclass(frozen=True)
class TrackerConfig:
    array: ArrayConfig = field(default_factory=ArrayConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    process: ProcessNoise = field(default_factory=ProcessNoise)
    period: float = 0.02
    power: float = 1.0
    loopy_iters: int = 5
    order: Tuple[str, ...] = UPDATE_ORDER

    def __post_init__(self):
        if self.loopy_iters < 1:
            raise ValueError("loopy_iters must be >= 1")
        if sorted(self.order) != sorted(UPDATE_ORDER):
            raise ValueError(f"order must be a permutation of {UPDATE_ORDER}")

    @classmethod
    def from_scenario(cls, cfg: ScenarioConfig, **overrides) -> "TrackerConfig":
        kw = dict(array=cfg.array, noise=cfg.noise, process=cfg.process, period=cfg.period,
                  power=cfg.power, loopy_iters=cfg.loopy_iters)
        kw.update(overrides)
        return cls(**kw)


def epsilon_indices(arr: ArrayConfig) -> np.ndarray:
    """Offsets q = l - i (receive minus transmit element) that index the eps variables."""
    return np.arange(1 - arr.n_tx, arr.n_rx)


def initial_beliefs(theta, d, v, beta, var_theta, var_d, var_v, var_beta, period, process) -> BeliefSet:
    """Beliefs at time 0, with the first beam angle predicted from their means."""
    shape = np.shape(theta)
    full = lambda x: np.broadcast_to(np.asarray(x, dtype=float), shape).copy()
    b = BeliefSet(Gaussian(full(theta), full(var_theta)), Gaussian(full(d), full(var_d)),
                  Gaussian(full(v), full(var_v)),
                  ComplexGaussian(np.asarray(beta, dtype=complex) * np.ones(shape), full(var_beta)),
                  full(theta))
    return BeliefSet(b.theta, b.d, b.v, b.beta, predict(b, period, process).theta_pred)


# ---------------------------------------------------------------- prediction

def predict(prev: BeliefSet, period: float, process: ProcessNoise) -> Prediction:
    """Messages from the state-transition factors into the current step."""
    th, d, v, beta = prev.means
    if np.any(d <= 0):
        raise ValueError("range estimate must be positive")
    th_p, d_p, v_p, beta_p, rho = evolve_linearized(th, d, v, beta, period)
    theta = Gaussian(np.clip(th_p, _THETA_EPS, np.pi - _THETA_EPS), process.sigma_theta**2 + prev.theta.var)
    return Prediction(
        theta=theta,
        d=Gaussian(d_p, process.sigma_d**2 + prev.d.var),
        v=Gaussian(v_p, process.sigma_v**2 + prev.v.var),
        beta=ComplexGaussian(beta_p, process.sigma_beta**2 + rho**2 * prev.beta.var),
        rho=rho,
    )


# ------------------------------------------------------------- range / speed

def range_message(tau, noise: NoiseConfig, wave_speed: float = 3e8) -> Gaussian:
    tau = np.asarray(tau, dtype=float)
    return Gaussian(wave_speed * tau / 2, np.full(tau.shape, (noise.sigma_tau * wave_speed / 2) ** 2))


def update_range(pred_d: Gaussian, tau, noise: NoiseConfig, wave_speed: float = 3e8) -> Gaussian:
    """Belief of the range: prediction fused with the delay likelihood."""
    return product(pred_d, range_message(tau, noise, wave_speed))


def speed_message(gamma, cos_msg: Gaussian, noise: NoiseConfig, arr: ArrayConfig) -> Gaussian:
    """Mean-field message from the Doppler factor to the speed."""
    c1 = arr.doppler_scale
    energy = cos_msg.var + cos_msg.mean**2
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = np.where(energy > 0, gamma * cos_msg.mean / (c1 * energy), 0.0)
        var = np.where(energy > 0, noise.sigma_gamma**2 / (c1**2 * energy), np.inf)
    return Gaussian(mean, var)


def update_speed(pred_v: Gaussian, gamma, cos_msg: Gaussian, noise: NoiseConfig, arr: ArrayConfig) -> Gaussian:
    return product(pred_v, speed_message(gamma, cos_msg, noise, arr))


def doppler_angle_message(gamma, v_belief: Gaussian, noise: NoiseConfig, arr: ArrayConfig,
                          center=None, model_error: bool = True, log: Optional[ClampLog] = None) -> Gaussian:
    """Message from the Doppler factor to the angle.

    The mean-field message on cos(theta) is mapped through the cubic arccos
    expansion, about ``center`` (a cosine value) when given.
    """
    c1 = arr.doppler_scale
    energy = v_belief.var + v_belief.mean**2
    cos_msg = Gaussian(gamma * v_belief.mean / (c1 * energy), noise.sigma_gamma**2 / (c1**2 * energy))
    msg = arccos_taylor(cos_msg, center=center, log=log)
    if model_error:
        coeffs = [np.pi / 2, -1.0, 0.0, -1.0 / 6] if center is None else arccos_coeffs(center)
        m = np.clip(cos_msg.mean, -1 + 1e-9, 1 - 1e-9)
        msg = Gaussian(msg.mean, msg.var + truncation_var(np.arccos, coeffs, m, center))
    return msg


# ---------------------------------------------------------- echo / eps / beta

def _conv(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    b = b.reshape((1,) * (a.ndim - b.ndim) + b.shape)
    return fftconvolve(a, b, axes=-1)


def _echo_terms(eps: ComplexGaussian, a_beam, n_rx):
    """Per receive antenna: S_l = sum_i a_i E[eps[l-i]] and V_l = sum_i Var[eps[l-i]]."""
    n_tx = a_beam.shape[-1]
    sl = slice(n_tx - 1, n_tx - 1 + n_rx)
    s = _conv(eps.mean, a_beam)[..., sl]
    v = _conv(eps.var, np.ones(n_tx))[..., sl]
    return s, np.maximum(v, 0.0)


def beta_messages(y, eps: ComplexGaussian, a_beam, arr: ArrayConfig, noise: NoiseConfig, power: float = 1.0) -> ComplexGaussian:
    """Per-antenna mean-field messages from the echo samples to beta."""
    gain = arr.array_gain * np.sqrt(power)
    s, v = _echo_terms(eps, a_beam, arr.n_rx)
    energy = gain**2 * (np.abs(s) ** 2 + v)
    noise_var = max(noise.echo_var, VAR_FLOOR)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = np.where(energy > 0, y * gain * np.conj(s) / energy, 0.0)
        var = np.where(energy > 0, noise_var / energy, np.inf)
    return ComplexGaussian(mean, var)


def update_beta(y, eps: ComplexGaussian, pred_beta: ComplexGaussian, a_beam, arr: ArrayConfig,
                noise: NoiseConfig, power: float = 1.0) -> ComplexGaussian:
    """Belief of beta: prediction plus the precision-weighted echo messages."""
    msgs = beta_messages(y, eps, a_beam, arr, noise, power)
    prec = np.where(np.isinf(msgs.var), 0.0, msgs.precision)
    total = pred_beta.precision + prec.sum(axis=-1)
    mean = (pred_beta.precision * pred_beta.mean + (prec * msgs.mean).sum(axis=-1)) / total
    return ComplexGaussian(mean, 1.0 / total)


def epsilon_prior(theta_msg: Gaussian, qs) -> ComplexGaussian:
    """Messages from the exp factors to eps[q], given (per-q) messages on theta."""
    return complex_exp_moments(cos_moments(theta_msg), qs)


def _window_sum(x, n):
    """Sums of ``n`` consecutive samples, zero-padded: out[k] = sum x[k-n+1 .. k]."""
    pad = np.zeros(x.shape[:-1] + (n,), dtype=x.dtype)
    c = np.cumsum(np.concatenate([pad, x, pad[..., :-1]], axis=-1), axis=-1)
    return c[..., n:] - c[..., :-n]


def update_epsilon(y, beta: ComplexGaussian, eps: ComplexGaussian, prior: ComplexGaussian, a_beam,
                   arr: ArrayConfig, noise: NoiseConfig, power: float = 1.0):
    """Refresh the eps variables from the echo samples.

    The sample y[l] is stripped of the expected contribution of the current
    eps means. Its residual is then shared among the n_tx terms of y[l] in
    proportion to their sensitivity to the angle, which for the pair (l, i)
    means a phase step of -pi*q*delta_l on eps[q]. All n_tx terms add up
    coherently, so handing each of them the full residual would overshoot by
    roughly n_tx / 2. Each pair carries 1/n_tx of the sample's information,
    so every y[l] is counted once overall. The variance covers receiver noise
    and the uncertainty of beta. Pair messages sharing q = l - i are fused,
    then combined with ``prior``.

    Returns ``(belief, observation_message)``; the latter excludes the prior.
    """
    gain = arr.array_gain * np.sqrt(power)
    n_tx = a_beam.shape[-1]
    qs = epsilon_indices(arr)
    bm = beta.mean[..., None]
    sl = slice(n_tx - 1, n_tx - 1 + arr.n_rx)
    s = _conv(eps.mean, a_beam)[..., sl]
    # d y_l / d(cos theta) = -j*pi*gain*beta*sum_i a_i (l-i) eps[l-i]
    g = -1j * np.pi * gain * bm * _conv(qs * eps.mean, a_beam)[..., sl]
    resid = y - gain * bm * s
    spread = max(noise.echo_var, VAR_FLOOR) + gain**2 * beta.var[..., None] * np.abs(s) ** 2
    g2 = np.abs(g) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(g2 > 0, np.real(np.conj(g) * resid) / g2, 0.0)
        w = np.where(g2 > 0, 2 * g2 / spread, 0.0) / n_tx
    wsum = _window_sum(w, n_tx)
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = (wsum > 0) & (qs != 0)
        step = np.where(ok, _window_sum(w * delta, n_tx) / wsum, 0.0)
        obs_mean = eps.mean * np.exp(-1j * np.pi * qs * step)
        obs_var = np.where(ok, 2 * (np.pi * qs) ** 2 / wsum, np.inf)
    obs = ComplexGaussian(obs_mean, obs_var)
    obs_prec = np.where(ok, obs.precision, 0.0)
    total = prior.precision + obs_prec
    belief = ComplexGaussian((prior.precision * prior.mean + obs_prec * obs.mean) / total, 1.0 / total)
    return belief, obs


def epsilon_angle_messages(obs: ComplexGaussian, qs, center, model_error: bool = True,
                           log: Optional[ClampLog] = None) -> Gaussian:
    """Messages on theta from the observation-side eps messages (q != 0 only).

    ``center`` is the anchor angle (one per track). Each eps message is mapped
    to cos(theta) and then through the arccos expansion about cos(center).
    """
    qs = np.asarray(qs)
    nz = qs != 0
    anchor = np.cos(np.asarray(center, dtype=float))[..., None]
    msg = obs[..., nz]
    usable = np.isfinite(msg.var) & (np.abs(msg.mean) > 0)
    safe = ComplexGaussian(np.where(usable, msg.mean, 1.0), np.where(usable, msg.var, 1.0))
    cos_msg = exp_to_angle_message(safe, qs[nz], center=anchor, model_error=model_error, log=log)
    finite = usable & np.isfinite(cos_msg.var)
    cos_msg = Gaussian(np.where(finite, cos_msg.mean, anchor), np.where(finite, cos_msg.var, np.inf))
    theta_msg = arccos_taylor(cos_msg, center=anchor, log=log)
    var = theta_msg.var
    if model_error:
        m = np.clip(cos_msg.mean, -1 + 1e-9, 1 - 1e-9)
        var = var + truncation_var(np.arccos, arccos_coeffs(anchor), m, anchor)
    return Gaussian(theta_msg.mean, np.where(np.isfinite(cos_msg.var), var, np.inf))


def angle_belief(pred_theta: Gaussian, doppler_msg: Optional[Gaussian], kappa_msgs: Optional[Gaussian]) -> Gaussian:
    """Belief of theta: prediction x Doppler message x product of eps-derived messages.

    ``kappa_msgs`` carries the q axis last; infinite-variance entries are ignored.
    """
    prec = pred_theta.precision.copy()
    acc = prec * pred_theta.mean
    for msg in (doppler_msg,):
        if msg is not None:
            p = np.where(np.isinf(msg.var), 0.0, msg.precision)
            prec = prec + p
            acc = acc + p * np.where(p > 0, msg.mean, 0.0)
    if kappa_msgs is not None:
        p = np.where(np.isinf(kappa_msgs.var), 0.0, kappa_msgs.precision)
        prec = prec + p.sum(axis=-1)
        acc = acc + (p * np.where(p > 0, kappa_msgs.mean, 0.0)).sum(axis=-1)
    return Gaussian(np.clip(acc / prec, _THETA_EPS, np.pi - _THETA_EPS), 1.0 / prec)


# ------------------------------------------------------------------ one step

def track_step(prev: BeliefSet, meas: Measurement, cfg: TrackerConfig,
               log: Optional[ClampLog] = None, model_error: bool = True) -> BeliefSet:
    """One full message-passing step; returns the new beliefs and next beam angle."""
    arr, noise = cfg.array, cfg.noise
    pred = predict(prev, cfg.period, cfg.process)
    d_belief = update_range(pred.d, meas.tau, noise, arr.wave_speed)

    qs = epsilon_indices(arr)
    a_beam = steering_vector(meas.beam, arr.n_tx)
    y = np.asarray(meas.y)

    theta = pred.theta
    kappa = None
    beta = pred.beta
    eps = obs = None
    for _ in range(cfg.loopy_iters):
        for stage in cfg.order:
            if stage == "epsilon":
                # eps messages are re-centred on the current angle belief every sweep
                prior = epsilon_prior(Gaussian(theta.mean[..., None], theta.var[..., None]), qs)
                eps, obs = update_epsilon(y, beta, prior, prior, a_beam, arr, noise, cfg.power)
                anchor = theta.mean
            elif stage == "beta":
                src_eps = eps if eps is not None else epsilon_prior(
                    Gaussian(theta.mean[..., None], theta.var[..., None]), qs)
                beta = update_beta(y, src_eps, pred.beta, a_beam, arr, noise, cfg.power)
            elif obs is not None:
                kappa = epsilon_angle_messages(obs, qs, anchor, model_error, log)
                theta = angle_belief(pred.theta, None, kappa)

    cos_msg = cos_moments(theta)
    v_belief = update_speed(pred.v, meas.gamma, cos_msg, noise, arr)
    dop = doppler_angle_message(meas.gamma, v_belief, noise, arr, center=np.cos(theta.mean),
                                model_error=model_error, log=log)
    theta = angle_belief(pred.theta, dop, kappa)

    new = BeliefSet(theta, d_belief, v_belief, beta, theta.mean)
    return BeliefSet(theta, d_belief, v_belief, beta, predict(new, cfg.period, cfg.process).theta_pred)


# ------------------------------------------------------------------ estimator

class FactorGraphTracker(BaseEstimator):
    """Online predictive beam tracker for a batch of independent vehicles.

    Parameters
    ----------
    config : ScenarioConfig, optional
        Physical constants and noise levels; the default scenario if omitted.
    loopy_iters : int
        Loopy message-passing sweeps per time step.
    update_order : tuple of str
        Order of the ``epsilon``/``beta``/``theta`` updates inside a sweep.
    model_error : bool
        Inflate Taylor-transformed messages by their truncation error.
    drop_radar : bool
        Ignore the delay and Doppler measurements (echo samples only).

    Use :meth:`start` with initial beliefs, then alternate :meth:`predict`
    (beam angle for the coming slot) and :meth:`partial_fit` (measurement of
    that slot). :meth:`fit` replays a recorded measurement sequence.
    """

    def __init__(self, config: Optional[ScenarioConfig] = None, loopy_iters: int = 5,
                 update_order: Tuple[str, ...] = UPDATE_ORDER, model_error: bool = True,
                 drop_radar: bool = False):
        self.config = config
        self.loopy_iters = loopy_iters
        self.update_order = update_order
        self.model_error = model_error
        self.drop_radar = drop_radar

    def _tracker_config(self) -> TrackerConfig:
        cfg = self.config or ScenarioConfig()
        kw = dict(loopy_iters=self.loopy_iters, order=tuple(self.update_order))
        if self.drop_radar:
            n = cfg.noise
            kw["noise"] = NoiseConfig(np.inf, np.inf, n.sigma_y2, n.n0, n.mf_gain)
        return TrackerConfig.from_scenario(cfg, **kw)

    def start(self, prior: BeliefSet) -> "FactorGraphTracker":
        self.tracker_config_ = self._tracker_config()
        self.belief_ = prior
        self.history_ = []
        self.clamp_log_ = ClampLog()
        return self

    def predict(self, X=None) -> np.ndarray:
        """Beam angle(s) to use for the next slot."""
        check_is_fitted(self, "belief_")
        return self.belief_.theta_pred

    def partial_fit(self, meas: Measurement, y=None) -> "FactorGraphTracker":
        check_is_fitted(self, "belief_")
        self.belief_ = track_step(self.belief_, meas, self.tracker_config_, self.clamp_log_, self.model_error)
        self.history_.append(self.belief_)
        return self

    def fit(self, X: Sequence[Measurement], y=None, prior: Optional[BeliefSet] = None) -> "FactorGraphTracker":
        if prior is None:
            raise ValueError("fit needs the initial beliefs via prior=")
        self.start(prior)
        for meas in X:
            self.partial_fit(meas)
        return self

    def transform(self, X: Sequence[Measurement]) -> np.ndarray:
        """Angle estimates after each step of ``X`` (shape ``(len(X), B)``)."""
        check_is_fitted(self, "belief_")
        out = []
        for meas in X:
            self.partial_fit(meas)
            out.append(self.belief_.theta.mean)
        return np.asarray(out)
