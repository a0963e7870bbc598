"""Empirical CDFs and the CSV/JSON result files."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .simulate import TrialRecord

ANGLE_COLUMNS = ["scheme", "antennas", "error_deg", "cdf"]
RATE_COLUMNS = ["scheme", "antennas", "rate_bps_hz", "cdf"]
SUM_RATE_COLUMNS = ["scheme", "antennas", "sum_rate_bps_hz", "cdf"]
TRACK_COLUMNS = ["trial", "step", "vehicle", "scheme", "theta_true_deg", "theta_est_deg",
                 "d_true", "d_est", "v_true", "v_est", "rate"]
QUANTILES = (0.2, 0.5, 0.8)


def compute_cdf(samples) -> Tuple[np.ndarray, np.ndarray]:
    """Right-continuous empirical CDF: distinct sorted values and P(X <= value)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("need at least one sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    values, counts = np.unique(x, return_counts=True)
    return values, np.cumsum(counts) / x.size


def _fmt(x) -> str:
    if isinstance(x, (str, np.str_)):
        return str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> int:
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
            n += 1
    return n


def prepare_out_dir(out_dir) -> Path:
    """Create ``out_dir`` and check it is writable; call before any long computation."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc
    return out


def _cdf_rows(runs: Dict[int, TrialRecord], values_of) -> List[tuple]:
    rows = []
    for antennas, rec in runs.items():
        for scheme in rec.schemes:
            vals, probs = compute_cdf(values_of(rec, scheme))
            rows.extend((scheme, antennas, v, p) for v, p in zip(vals, probs))
    return rows


def _final_error(rec, scheme):
    return rec.final_error_deg(scheme)


def _rates(rec, scheme):
    return rec.rate[scheme].ravel()


def _sum_rates(rec, scheme):
    return rec.rate[scheme].sum(axis=-1).ravel()


def track_rows(rec: TrialRecord):
    T, N, K = rec.shape
    for t in range(T):
        for n in range(N):
            for k in range(K):
                for scheme in rec.schemes:
                    yield (int(rec.trial[t]), n, k, scheme,
                           np.rad2deg(rec.theta_true[t, n, k]), np.rad2deg(rec.theta_est[scheme][t, n, k]),
                           rec.d_true[t, n, k], rec.d_est[scheme][t, n, k],
                           rec.v_true[t, n, k], rec.v_est[scheme][t, n, k],
                           rec.rate[scheme][t, n, k])


def tracks_name(antennas: int, n_cases: int) -> str:
    """``tracks.csv`` for a single antenna case, ``tracks_<antennas>.csv`` otherwise."""
    return "tracks.csv" if n_cases == 1 else f"tracks_{antennas}.csv"


def summarize(rec: TrialRecord) -> dict:
    out = {}
    for scheme in rec.schemes:
        err = np.rad2deg(rec.angle_error(scheme))
        final = err[:, -1, :].ravel()
        rate = rec.rate[scheme]
        out[scheme] = {
            "rmse_final_deg": float(np.sqrt(np.mean(final**2))),
            "rmse_all_deg": float(np.sqrt(np.mean(err**2))),
            "final_error_quantiles_deg": {str(q): float(np.quantile(final, q)) for q in QUANTILES},
            "mean_rate_bps_hz": float(rate.mean()),
            "mean_sum_rate_bps_hz": float(rate.sum(axis=-1).mean()),
            "fraction_rate_ge_95pct_ideal": float(np.mean(rate >= 0.95 * rec.rate_ideal)),
        }
    return out


def emit_outputs(runs: Dict[int, TrialRecord], out_dir, config: dict | None = None) -> Dict[str, Path]:
    """Write all result files for one or more antenna cases (``{antennas: record}``).

    CDF files and the summary cover every case (``antennas`` column); the
    per-step tracks go to one file per case, see :func:`tracks_name`.
    """
    out = prepare_out_dir(out_dir)
    paths = {name: out / name for name in
             ("angle_cdf.csv", "rate_cdf.csv", "sum_rate_cdf.csv", "summary.json")}
    _write_csv(paths["angle_cdf.csv"], ANGLE_COLUMNS, _cdf_rows(runs, _final_error))
    _write_csv(paths["rate_cdf.csv"], RATE_COLUMNS, _cdf_rows(runs, _rates))
    _write_csv(paths["sum_rate_cdf.csv"], SUM_RATE_COLUMNS, _cdf_rows(runs, _sum_rates))
    for antennas, rec in runs.items():
        name = tracks_name(antennas, len(runs))
        paths[name] = out / name
        _write_csv(paths[name], TRACK_COLUMNS, track_rows(rec))
    summary = {
        "config": config or {},
        "runs": {str(a): {"trials": int(rec.shape[0]), "schemes": summarize(rec), "clamps": rec.clamps}
                 for a, rec in runs.items()},
    }
    with open(paths["summary.json"], "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def read_tracks(path) -> Dict[str, Dict[str, np.ndarray]]:
    """Load a tracks file.

    Returns ``{scheme: {"final_error_deg": array, "rate": array}}`` where the
    final step is the largest step index present.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRACK_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no rows")
    last = max(int(r["step"]) for r in rows)
    data: Dict[str, dict] = {}
    for r in rows:
        d = data.setdefault(r["scheme"], {"final_error_deg": [], "rate": []})
        d["rate"].append(float(r["rate"]))
        if int(r["step"]) == last:
            d["final_error_deg"].append(abs(float(r["theta_est_deg"]) - float(r["theta_true_deg"])))
    return {s: {k: np.asarray(v) for k, v in d.items()} for s, d in data.items()}


def cdfs_from_tracks(tracks_path, out_dir, antennas: int | str = "") -> Dict[str, Path]:
    """Recompute ``angle_cdf.csv`` and ``rate_cdf.csv`` from a tracks file."""
    data = read_tracks(tracks_path)
    out = prepare_out_dir(out_dir)
    angle, rate = [], []
    for scheme, d in data.items():
        v, p = compute_cdf(d["final_error_deg"])
        angle.extend((scheme, antennas, a, b) for a, b in zip(v, p))
        v, p = compute_cdf(d["rate"])
        rate.extend((scheme, antennas, a, b) for a, b in zip(v, p))
    paths = {"angle_cdf.csv": out / "angle_cdf.csv", "rate_cdf.csv": out / "rate_cdf.csv"}
    _write_csv(paths["angle_cdf.csv"], ANGLE_COLUMNS, angle)
    _write_csv(paths["rate_cdf.csv"], RATE_COLUMNS, rate)
    return paths
