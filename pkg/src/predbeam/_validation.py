"""Small argument checks shared by the estimators and signal functions."""
import numpy as np


def check_positive(value, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return value


def check_nonnegative(value, name: str) -> float:
    value = float(value)
    if np.isnan(value) or value < 0:
        raise ValueError(f"{name} must be nonnegative, got {value!r}")
    return value


def check_angle(theta, name: str = "theta") -> np.ndarray:
    """Angles must be finite and lie in the open interval (0, pi)."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError(f"{name} must be finite")
    if np.any(theta <= 0) or np.any(theta >= np.pi):
        raise ValueError(f"{name} must lie in (0, pi)")
    return theta


def check_batch(x, name: str, ndim: int = 1) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x))
    if x.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimension(s), got shape {x.shape}")
    return x
