"""Parametric Gaussian messages and the nonlinear moment transforms used by the tracker.

All functions broadcast over numpy arrays, so a single call can process a whole
batch of independent tracks (or a whole set of auxiliary indices ``q``).
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from math import comb
from typing import Optional, Sequence

import numpy as np

# Smallest variance a message may carry. Zero-variance (deterministic) messages
# are floored so that precision-weighted fusion stays well defined.
VAR_FLOOR = 1e-30

_UNIT_CLAMP = 1.0 - 1e-9


class ClampLog(Counter):
    """Counts how often inverse-trig inputs had to be clamped into their domain."""

    def record(self, name: str, mask) -> None:
        n = int(np.count_nonzero(mask))
        if n:
            self[name] += n


@dataclass(frozen=True)
class Gaussian:
    """Real Gaussian N(mean, var); fields may be arrays of matching shape."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        var = np.asarray(self.var, dtype=float)
        if np.any(np.isnan(mean)) or np.any(np.isnan(var)):
            raise ValueError("Gaussian mean/var must not be NaN")
        if np.any(var < 0):
            raise ValueError("Gaussian variance must be nonnegative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @property
    def precision(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 1.0 / np.maximum(self.var, VAR_FLOOR)

    def __getitem__(self, idx) -> "Gaussian":
        return Gaussian(self.mean[idx], self.var[idx])


@dataclass(frozen=True)
class ComplexGaussian:
    """Circularly-symmetric complex Gaussian; ``var`` is the total complex variance."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=complex)
        var = np.asarray(self.var, dtype=float)
        if np.any(np.isnan(mean)) or np.any(np.isnan(var)):
            raise ValueError("ComplexGaussian mean/var must not be NaN")
        if np.any(var < 0):
            raise ValueError("ComplexGaussian variance must be nonnegative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @property
    def precision(self) -> np.ndarray:
        return 1.0 / np.maximum(self.var, VAR_FLOOR)

    def __getitem__(self, idx) -> "ComplexGaussian":
        return ComplexGaussian(self.mean[idx], self.var[idx])


def _fuse(means, precisions, cls):
    total = sum(precisions)
    if np.any(total <= 0):
        raise ValueError("cannot fuse messages that all carry infinite variance")
    weighted = sum(np.where(p > 0, p * m, 0.0) for m, p in zip(means, precisions))
    return cls(weighted / total, 1.0 / total)


def product(*msgs: Gaussian) -> Gaussian:
    """Normalized product of Gaussian messages (precisions add).

    >>> product(Gaussian(0.0, 1.0), Gaussian(1.0, 1.0))
    Gaussian(mean=array(0.5), var=array(0.5))
    """
    return _fuse([g.mean for g in msgs], [g.precision for g in msgs], Gaussian)


def complex_product(*msgs: ComplexGaussian) -> ComplexGaussian:
    return _fuse([g.mean for g in msgs], [g.precision for g in msgs], ComplexGaussian)


def divide(belief: Gaussian, msg: Gaussian) -> Gaussian:
    """Remove ``msg`` from ``belief`` (extrinsic message); precision is kept positive."""
    prec = np.maximum(belief.precision - msg.precision, 1e-12 * belief.precision)
    mean = (belief.precision * belief.mean - msg.precision * msg.mean) / prec
    return Gaussian(mean, 1.0 / prec)


def gaussian_raw_moments(mean, var, order: int) -> list:
    """E[X^k] for k = 0..order with X ~ N(mean, var)."""
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    moments = [np.ones_like(mean), mean.copy()]
    for k in range(2, order + 1):
        moments.append(mean * moments[k - 1] + (k - 1) * var * moments[k - 2])
    return moments[: order + 1]


def poly_gauss_moments(coeffs: Sequence, g: Gaussian):
    """Exact ``(E[p(X)], E[p(X)^2])`` for a polynomial with ascending ``coeffs``.

    Coefficients may be arrays that broadcast against ``g``.
    """
    coeffs = [np.asarray(c, dtype=float) for c in coeffs]
    deg = len(coeffs) - 1
    mom = gaussian_raw_moments(g.mean, g.var, 2 * deg)
    first = sum(c * mom[k] for k, c in enumerate(coeffs))
    second = 0.0
    for i, ci in enumerate(coeffs):
        for j, cj in enumerate(coeffs):
            second = second + ci * cj * mom[i + j]
    return first, second


def shift_poly(coeffs, shift) -> list:
    """Coefficients of q(z) = p(z + shift), ascending powers."""
    coeffs = [np.asarray(c, dtype=float) for c in coeffs]
    deg = len(coeffs) - 1
    if deg == 3:
        c0, c1, c2, c3 = coeffs
        return [c0 + shift * (c1 + shift * (c2 + shift * c3)),
                c1 + shift * (2 * c2 + 3 * c3 * shift), c2 + 3 * c3 * shift, c3]
    out = []
    for j in range(deg + 1):
        out.append(sum(comb(k, j) * coeffs[k] * shift ** (k - j) for k in range(j, deg + 1)))
    return out


def _centered_cubic_moments(d, lam):
    # Mean and variance of d1 z + d2 z^2 + d3 z^3 for z ~ N(0, lam).
    d1, d2, d3 = d[1], d[2], d[3]
    first = d2 * lam
    var = lam * (d1**2 + lam * (2 * d2**2 + 6 * d1 * d3 + 15 * d3**2 * lam))
    return first, var


def _poly_transform(coeffs, g: Gaussian) -> Gaussian:
    # Expand about the input mean so the variance has no large-constant cancellation.
    d = shift_poly(coeffs, g.mean)
    if len(d) < 4:
        d = d + [0.0] * (4 - len(d))
    with np.errstate(invalid="ignore", over="ignore"):
        if len(d) == 4:
            first, var = _centered_cubic_moments(d, g.var)
        else:
            zero = Gaussian(np.zeros_like(g.mean), g.var)
            first, second = poly_gauss_moments([0.0] + d[1:], zero)
            var = second - first**2
    var = np.where(np.isinf(g.var), np.inf, np.maximum(var, 0.0))
    return Gaussian(d[0] + np.where(np.isinf(g.var), 0.0, first), var)


def cos_moments(g: Gaussian) -> Gaussian:
    """Moments of cos(X) for X ~ N(m, lam), from the characteristic function."""
    m, lam = g.mean, g.var
    mean = np.cos(m) * np.exp(-lam / 2)
    second = 0.5 * (1.0 + np.cos(2 * m) * np.exp(-2 * lam))
    return Gaussian(mean, np.maximum(second - mean**2, 0.0))


def clamp_unit(x, log: Optional[ClampLog] = None, name: str = "unit"):
    x = np.asarray(x, dtype=float)
    bad = np.abs(x) >= _UNIT_CLAMP
    if log is not None:
        log.record(name, bad)
    return np.clip(x, -_UNIT_CLAMP, _UNIT_CLAMP)


def arccos_coeffs(center):
    """Cubic Taylor coefficients of arccos about ``center``, in powers of (x - center)."""
    c = np.asarray(center, dtype=float)
    s2 = 1.0 - c**2
    s = np.sqrt(s2)
    return [np.arccos(c), -1.0 / s, -c / (2 * s * s2), -(1 + 2 * c**2) / (6 * s * s2**2)]


def arcsin_coeffs(center):
    a0, a1, a2, a3 = arccos_coeffs(center)
    return [np.arcsin(np.asarray(center, dtype=float)), -a1, -a2, -a3]


def _taylor_transform(g, center, origin_coeffs, coeff_fn, log, name):
    m = clamp_unit(g.mean, log, name)
    if center is None:
        return _poly_transform(origin_coeffs, Gaussian(m, g.var))
    c = clamp_unit(center, log, name + "_center")
    return _poly_transform(coeff_fn(c), Gaussian(m - c, g.var))


def arccos_taylor(g: Gaussian, center=None, log: Optional[ClampLog] = None) -> Gaussian:
    """Gaussian approximation of arccos(X) through a cubic polynomial.

    With ``center=None`` the polynomial is pi/2 - x - x^3/6 (expansion about 0);
    otherwise the cubic Taylor polynomial about ``center`` is used. The variance
    is E[p(X)^2] - E[p(X)]^2 computed exactly from Gaussian moments.
    """
    return _taylor_transform(g, center, [np.pi / 2, -1.0, 0.0, -1.0 / 6], arccos_coeffs, log, "acos")


def arcsin_taylor(g: Gaussian, center=None, log: Optional[ClampLog] = None) -> Gaussian:
    """Gaussian approximation of arcsin(X); x + x^3/6 about 0, or cubic Taylor about ``center``."""
    return _taylor_transform(g, center, [0.0, 1.0, 0.0, 1.0 / 6], arcsin_coeffs, log, "asin")


def truncation_var(fn, coeffs, x, center=None):
    """Squared error of a cubic expansion at ``x``; used to de-weight poor approximations."""
    x = np.asarray(x, dtype=float)
    z = x if center is None else x - center
    approx = coeffs[0] + z * (coeffs[1] + z * (coeffs[2] + z * coeffs[3]))
    return (fn(x) - approx) ** 2


def complex_exp_moments(g: Gaussian, q) -> ComplexGaussian:
    """Moments of exp(-j*pi*q*X) for X ~ N(m, lam)."""
    w = np.pi * np.asarray(q, dtype=float)
    x = w**2 * g.var
    mean = np.exp(-x / 2) * np.exp(-1j * w * g.mean)
    return ComplexGaussian(mean, -np.expm1(-x))


def exp_to_angle_message(
    msg: ComplexGaussian,
    q,
    center=None,
    model_error: bool = True,
    log: Optional[ClampLog] = None,
) -> Gaussian:
    """Map a message on exp(-j*pi*q*X) back to a Gaussian message on X.

    The unit-circle projection of the mean is split into a cosine part (fed to
    arccos) and a sine part (fed to arcsin); both yield Gaussian estimates of the
    phase, which are fused and rescaled by 1/(pi*q).

    Without ``center`` the expansions are taken about 0 and the arccos sign is
    taken from the sine part. With ``center`` (an anchor for X, e.g. the
    prediction) the phase is measured relative to pi*q*center, offset by pi/4 so
    that both inverse functions operate away from their branch points. Phases
    further than pi/4 from the anchor are off the principal branch and the
    message is returned with infinite variance.

    ``model_error`` adds the squared truncation error of each cubic expansion
    to its variance, so a poorly approximated component cannot dominate.
    """
    q = np.asarray(q, dtype=float)
    if np.any(q == 0):
        raise ValueError("q must be nonzero")
    mean = np.asarray(msg.mean, dtype=complex)
    mag = np.abs(mean)
    if np.any(mag == 0):
        raise ValueError("message mean must have nonzero modulus")
    u = mean / mag
    comp_var = msg.var / (2 * mag**2)
    w = np.pi * q

    if center is None:
        x_cos, x_sin = u.real, -u.imag
        x0_cos = x0_sin = None
        offset = 0.0
        acos_c = [np.pi / 2, -1.0, 0.0, -1.0 / 6]
        asin_c = [0.0, 1.0, 0.0, 1.0 / 6]
    else:
        offset = np.pi / 4
        u = u * np.exp(1j * (w * np.asarray(center, dtype=float) - offset))
        x_cos, x_sin = u.real, -u.imag
        x0_cos = x0_sin = np.sqrt(0.5)
        acos_c = arccos_coeffs(x0_cos)
        asin_c = arcsin_coeffs(x0_sin)

    from_cos = arccos_taylor(Gaussian(x_cos, comp_var), center=x0_cos, log=log)
    from_sin = arcsin_taylor(Gaussian(x_sin, comp_var), center=x0_sin, log=log)
    cos_mean = from_cos.mean
    if center is None:
        # arccos only recovers |phase|
        cos_mean = np.where(x_sin < 0, -cos_mean, cos_mean)
    cos_var, sin_var = from_cos.var, from_sin.var
    if model_error:
        xc = clamp_unit(x_cos)
        xs = clamp_unit(x_sin)
        cos_var = cos_var + truncation_var(np.arccos, acos_c, xc, x0_cos)
        sin_var = sin_var + truncation_var(np.arcsin, asin_c, xs, x0_sin)
    with np.errstate(divide="ignore", invalid="ignore"):
        pc = np.where(np.isinf(cos_var), 0.0, 1.0 / np.maximum(cos_var, VAR_FLOOR))
        ps = np.where(np.isinf(sin_var), 0.0, 1.0 / np.maximum(sin_var, VAR_FLOOR))
        prec = pc + ps
        phase_mean = np.where(prec > 0, (pc * cos_mean + ps * from_sin.mean) / prec, offset)
        phase_var = 1.0 / prec

    if center is None:
        return Gaussian(phase_mean / w, phase_var / w**2)
    on_branch = np.abs(np.angle(u) + offset) < offset
    var = np.where(on_branch, phase_var / w**2, np.inf)
    return Gaussian((phase_mean - offset) / w + center, var)
