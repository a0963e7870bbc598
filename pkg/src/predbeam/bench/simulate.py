"""Monte Carlo driver: truth simulation, shared noise draws, three trackers, rates.

Trials are vectorised in chunks of ``CHUNK`` (tracks of one chunk are processed
as one batch). Every trial owns a random stream derived from
``(seed, trial index)``, and all of its draws are taken up front in a fixed
order, so a trial's result does not depend on which chunk or worker ran it.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from ..baselines import EKFTracker, feedback_config
from ..config import ScenarioConfig
from ..gaussian import ClampLog
from ..kinematics import MeasurementDraws, VehicleTruth, generate_measurements, step_truth
from ..signal_model import pathloss_power, received_snr
from ..tracker import FactorGraphTracker, initial_beliefs

SCHEMES = ("proposed", "ekf", "feedback")
CHUNK = 100


@dataclass
class TrialRecord:
    """Per-step, per-vehicle results for a set of trials.

    Arrays have shape ``(trials, steps, vehicles)``; estimates and rates are
    keyed by scheme name.
    """

    trial: np.ndarray
    theta_true: np.ndarray
    d_true: np.ndarray
    v_true: np.ndarray
    theta_est: Dict[str, np.ndarray]
    d_est: Dict[str, np.ndarray]
    v_est: Dict[str, np.ndarray]
    rate: Dict[str, np.ndarray]
    rate_ideal: np.ndarray
    clamps: Dict[str, int] = field(default_factory=dict)

    @property
    def schemes(self) -> List[str]:
        return list(self.theta_est)

    @property
    def shape(self):
        return self.theta_true.shape

    def angle_error(self, scheme: str) -> np.ndarray:
        """Absolute angle error in radians."""
        return np.abs(self.theta_est[scheme] - self.theta_true)

    def final_error_deg(self, scheme: str) -> np.ndarray:
        return np.rad2deg(self.angle_error(scheme)[:, -1, :]).ravel()

    def select(self, idx) -> "TrialRecord":
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name == "clamps":
                out[f.name] = dict(val)
            elif isinstance(val, dict):
                out[f.name] = {k: v[idx] for k, v in val.items()}
            else:
                out[f.name] = val[idx]
        return TrialRecord(**out)

    @classmethod
    def concat(cls, records: Sequence["TrialRecord"]) -> "TrialRecord":
        """Merge records and sort by trial index (order of ``records`` is irrelevant)."""
        records = list(records)
        if not records:
            raise ValueError("nothing to merge")
        out = {}
        for f in fields(cls):
            vals = [getattr(r, f.name) for r in records]
            if f.name == "clamps":
                total: Dict[str, int] = {}
                for c in vals:
                    for k, n in c.items():
                        total[k] = total.get(k, 0) + int(n)
                out[f.name] = dict(sorted(total.items()))
            elif isinstance(vals[0], dict):
                out[f.name] = {k: np.concatenate([v[k] for v in vals]) for k in vals[0]}
            else:
                out[f.name] = np.concatenate(vals)
        merged = cls(**out)
        order = np.argsort(merged.trial, kind="stable")
        clamps = merged.clamps
        merged = merged.select(order)
        merged.clamps = clamps
        return merged


@dataclass(frozen=True)
class _TrialDraws:
    speed: np.ndarray      # (K,)
    prior: np.ndarray      # (K, 5)
    process: np.ndarray    # (N, K, 5)
    meas: MeasurementDraws  # (N, K[, Nr])


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))


def _draw_trial(cfg: ScenarioConfig, trial: int) -> _TrialDraws:
    rng = trial_rng(cfg.seed, trial)
    K, N = cfg.n_vehicles, cfg.n_steps
    speed = rng.uniform(cfg.speed_low, cfg.speed_high, size=K)
    prior = rng.standard_normal((K, 5))
    process = rng.standard_normal((N, K, 5))
    meas = MeasurementDraws.sample(rng, (N, K), cfg.n_rx)
    return _TrialDraws(speed, prior, process, meas)


def _stack_draws(draws: Sequence[_TrialDraws]):
    """Flatten the (trial, vehicle) axes into one batch axis."""
    speed = np.concatenate([d.speed for d in draws])
    prior = np.concatenate([d.prior for d in draws])
    process = np.concatenate([d.process for d in draws], axis=1)
    meas = MeasurementDraws(
        np.concatenate([d.meas.tau for d in draws], axis=1),
        np.concatenate([d.meas.gamma for d in draws], axis=1),
        np.concatenate([d.meas.y for d in draws], axis=1),
    )
    return speed, prior, process, meas


def initial_state(cfg: ScenarioConfig, speed) -> VehicleTruth:
    pos = np.asarray(cfg.positions, dtype=float)
    reps = len(speed) // len(pos)
    x = np.tile(pos[:, 0], reps)
    y = np.tile(pos[:, 1], reps)
    d = np.hypot(x, y)
    return VehicleTruth(x, y, np.asarray(speed, dtype=float), cfg.rcs / (2 * d))


def prior_beliefs(cfg: ScenarioConfig, truth: VehicleTruth, z):
    """Truth perturbed by one process-noise draw, variance = prior_inflation x process variance."""
    p = cfg.process
    k = cfg.prior_inflation
    beta = truth.beta + p.sigma_beta * (z[:, 3] + 1j * z[:, 4]) / np.sqrt(2)
    return initial_beliefs(truth.theta + p.sigma_theta * z[:, 0], truth.d + p.sigma_d * z[:, 1],
                           truth.v + p.sigma_v * z[:, 2], beta,
                           k * p.sigma_theta**2, k * p.sigma_d**2, k * p.sigma_v**2, k * p.sigma_beta**2,
                           cfg.period, p)


def make_trackers(cfg: ScenarioConfig, schemes: Sequence[str] = SCHEMES):
    """The requested schemes, each with the scenario it measures under."""
    unknown = set(schemes) - set(SCHEMES)
    if unknown or not schemes:
        raise ValueError(f"schemes must be a nonempty subset of {SCHEMES}")
    out = {}
    for name in SCHEMES:
        if name not in schemes:
            continue
        if name == "proposed":
            out[name] = (FactorGraphTracker(cfg, loopy_iters=cfg.loopy_iters), cfg)
        elif name == "ekf":
            out[name] = (EKFTracker(cfg), cfg)
        else:
            fb_cfg = feedback_config(cfg)
            fb = FactorGraphTracker(fb_cfg, loopy_iters=cfg.loopy_iters, drop_radar=cfg.feedback_drop_radar)
            out[name] = (fb, fb_cfg)
    return out


def run_trials(cfg: ScenarioConfig, trials: Sequence[int], schemes: Sequence[str] = SCHEMES) -> TrialRecord:
    """Simulate the given trials as one vectorised batch."""
    trials = np.asarray(trials, dtype=int)
    K, N = cfg.n_vehicles, cfg.n_steps
    speed, z0, process, meas_draws = _stack_draws([_draw_trial(cfg, t) for t in trials])
    truth = initial_state(cfg, speed)
    prior = prior_beliefs(cfg, truth, z0)
    trackers = make_trackers(cfg, schemes)
    for trk, _ in trackers.values():
        trk.start(prior)
    alpha2 = pathloss_power(cfg.array, cfg.noise, cfg.nominal_snr_db, cfg.power)
    ideal = np.log2(1 + 10 ** (cfg.nominal_snr_db / 10))

    B = len(speed)
    shape = (N, B)
    truth_hist = {k: np.empty(shape) for k in ("theta", "d", "v")}
    est = {name: {k: np.empty(shape) for k in ("theta", "d", "v", "rate")} for name in trackers}
    for n in range(N):
        truth = step_truth(truth, cfg.period, cfg.process, None, draws=process[n])
        draws = meas_draws[n]
        truth_hist["theta"][n] = truth.theta
        truth_hist["d"][n] = truth.d
        truth_hist["v"][n] = truth.v
        for name, (trk, scheme_cfg) in trackers.items():
            beam = trk.predict()
            meas = generate_measurements(truth, beam, scheme_cfg, draws=draws)
            trk.partial_fit(meas)
            snr = received_snr(truth.theta, beam, beam, alpha2, cfg.power, cfg.array, cfg.noise)
            b = trk.belief_
            out = est[name]
            out["theta"][n] = b.theta.mean
            out["d"][n] = b.d.mean
            out["v"][n] = b.v.mean
            out["rate"][n] = np.log2(1 + snr)

    def per_trial(a):  # (N, T*K) -> (T, N, K)
        return np.ascontiguousarray(a.reshape(N, len(trials), K).transpose(1, 0, 2))

    clamps: Dict[str, int] = {}
    for name, (trk, _) in trackers.items():
        for key, count in trk.clamp_log_.items():
            clamps[f"{name}.{key}"] = int(count)
    return TrialRecord(
        trial=trials,
        theta_true=per_trial(truth_hist["theta"]),
        d_true=per_trial(truth_hist["d"]),
        v_true=per_trial(truth_hist["v"]),
        theta_est={s: per_trial(est[s]["theta"]) for s in trackers},
        d_est={s: per_trial(est[s]["d"]) for s in trackers},
        v_est={s: per_trial(est[s]["v"]) for s in trackers},
        rate={s: per_trial(est[s]["rate"]) for s in trackers},
        rate_ideal=np.full((len(trials), N, K), ideal),
        clamps=dict(sorted(clamps.items())),
    )


def run_trial(cfg: ScenarioConfig, trial: int, schemes: Sequence[str] = SCHEMES) -> TrialRecord:
    """A single trial; identical to the corresponding slice of a Monte Carlo run."""
    return run_trials(cfg, [trial], schemes)


def run_monte_carlo(cfg: ScenarioConfig, n_jobs: int = 1, trials: Optional[int] = None,
                    schemes: Sequence[str] = SCHEMES) -> TrialRecord:
    """Run ``trials`` (default ``cfg.trials``) trials, optionally in parallel worker processes."""
    total = cfg.trials if trials is None else int(trials)
    if total < 1:
        raise ValueError("trials must be >= 1")
    chunks = [range(i, min(i + CHUNK, total)) for i in range(0, total, CHUNK)]
    if n_jobs == 1:
        parts = [run_trials(cfg, list(c), schemes) for c in chunks]
    else:
        parts = Parallel(n_jobs=n_jobs)(delayed(run_trials)(cfg, list(c), schemes) for c in chunks)
    return TrialRecord.concat(parts)
