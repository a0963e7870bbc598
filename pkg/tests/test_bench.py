import csv
import json
import os

import numpy as np
import pytest

from predbeam.bench.cli import main
from predbeam.bench.outputs import (
    ANGLE_COLUMNS,
    RATE_COLUMNS,
    SUM_RATE_COLUMNS,
    TRACK_COLUMNS,
    cdfs_from_tracks,
    compute_cdf,
    emit_outputs,
    prepare_out_dir,
    read_tracks,
)
from predbeam.bench.simulate import SCHEMES, TrialRecord, run_monte_carlo, run_trial, run_trials
from predbeam.config import ConfigError, ScenarioConfig, load_config, noise_free, parse_config

SMALL = ScenarioConfig(n_tx=16, n_rx=16, n_steps=6, trials=4, seed=3)


def small_text(extra=""):
    return "n_tx = 16\nn_rx = 16\nn_steps = 6\ntrials = 3\nseed = 3\n" + extra


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


class TestConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        p = tmp_path / "empty.cfg"
        p.write_text("")
        cfg = load_config(p)
        assert cfg == ScenarioConfig()
        assert cfg.n_vehicles == 4 and cfg.carrier_hz == 30e9 and cfg.period == 0.02
        assert cfg.sigma_tau == 0.67e-6 and cfg.sigma_gamma == 2e3
        assert cfg.sigma_d == 0.2 and cfg.sigma_v == 0.5 and cfg.sigma_beta == 1.0
        assert cfg.sigma_theta == pytest.approx(np.deg2rad(0.02))
        assert cfg.rcs == 10 + 10j and cfg.trials == 1000

    def test_antenna_key(self):
        assert parse_config("n_tx = 128").n_tx == 128

    def test_values_and_comments(self):
        cfg = parse_config("rcs = 5-2j  # comment\nspeed_range = 12, 18\npositions = 50,20; 40,20\n"
                           "feedback_drop_radar = yes\n")
        assert cfg.rcs == 5 - 2j and (cfg.speed_low, cfg.speed_high) == (12.0, 18.0)
        assert cfg.positions == ((50.0, 20.0), (40.0, 20.0)) and cfg.feedback_drop_radar

    @pytest.mark.parametrize("text,key", [("trials = -1", "trials"), ("n_tx = 0", "n_tx"),
                                          ("sigma_tau = -1e-6", "sigma_tau"), ("bogus = 1", "bogus"),
                                          ("n_steps = 2.5", "n_steps"), ("inflation = 0.5", "inflation"),
                                          ("seed = abc", "seed")])
    def test_errors_name_the_key(self, text, key):
        with pytest.raises(ConfigError, match=key):
            parse_config(text)

    def test_malformed(self):
        with pytest.raises(ConfigError):
            parse_config("just some words")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.cfg")


class TestRunTrial:
    def test_deterministic(self):
        a, b = run_trial(SMALL, 1), run_trial(SMALL, 1)
        for s in SCHEMES:
            assert a.theta_est[s].tobytes() == b.theta_est[s].tobytes()
            assert a.rate[s].tobytes() == b.rate[s].tobytes()
        assert a.theta_true.tobytes() == b.theta_true.tobytes()

    def test_shape(self):
        rec = run_trial(ScenarioConfig(n_tx=16, n_rx=16), 0)
        assert rec.shape == (1, 20, 4)
        assert set(rec.schemes) == set(SCHEMES)
        for s in SCHEMES:
            assert rec.theta_est[s].size == 4 * 20

    def test_zero_noise(self):
        cfg = noise_free(ScenarioConfig())
        rec = run_trial(cfg, 0)
        for s in SCHEMES:
            assert np.all(rec.angle_error(s) < 1e-3), s

    def test_schemes_share_truth(self):
        rec = run_trial(SMALL, 2)
        full = run_trials(SMALL, [2], schemes=("ekf",))
        assert np.array_equal(rec.theta_est["ekf"], full.theta_est["ekf"])
        assert np.array_equal(rec.theta_true, full.theta_true)

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            run_trials(SMALL, [0], schemes=("magic",))


def assert_same(a: TrialRecord, b: TrialRecord):
    assert np.array_equal(a.trial, b.trial)
    assert a.theta_true.tobytes() == b.theta_true.tobytes()
    for s in SCHEMES:
        for field in ("theta_est", "d_est", "v_est", "rate"):
            assert getattr(a, field)[s].tobytes() == getattr(b, field)[s].tobytes()
    assert a.clamps == b.clamps


class TestMonteCarlo:
    def test_hand_merge(self):
        cfg = SMALL.replace(trials=2)
        agg = run_monte_carlo(cfg)
        merged = TrialRecord.concat([run_trial(cfg, 1), run_trial(cfg, 0)])
        assert_same(agg, merged)

    def test_chunking_is_invisible(self, monkeypatch):
        import predbeam.bench.simulate as sim

        ref = run_monte_carlo(SMALL)
        monkeypatch.setattr(sim, "CHUNK", 1)
        assert_same(ref, run_monte_carlo(SMALL))

    def test_parallel_matches_serial(self, monkeypatch):
        import predbeam.bench.simulate as sim

        monkeypatch.setattr(sim, "CHUNK", 2)
        serial = run_monte_carlo(SMALL)
        parallel = run_monte_carlo(SMALL, n_jobs=2)
        assert_same(serial, parallel)

    def test_needs_trials(self):
        with pytest.raises(ValueError):
            run_monte_carlo(SMALL, trials=0)


class TestCdf:
    def test_small(self):
        v, p = compute_cdf([3, 1, 2])
        assert list(v) == [1, 2, 3] and np.allclose(p, [1 / 3, 2 / 3, 1])

    def test_all_equal(self):
        v, p = compute_cdf([0.5] * 7)
        assert list(v) == [0.5] and list(p) == [1.0]

    def test_ties(self):
        v, p = compute_cdf([1, 1, 2, 3])
        assert np.allclose(p, [0.5, 0.75, 1.0])

    def test_dkw(self):
        x = np.random.default_rng(0).uniform(size=10_000)
        v, p = compute_cdf(x)
        assert np.max(np.abs(p - v)) < 0.05

    def test_rejects_bad(self):
        with pytest.raises(ValueError):
            compute_cdf([])
        with pytest.raises(ValueError):
            compute_cdf([1.0, np.nan])


@pytest.fixture(scope="module")
def small_run():
    return {16: run_monte_carlo(SMALL.replace(trials=3))}


class TestOutputs:
    def test_headers_and_counts(self, small_run, tmp_path):
        paths = emit_outputs(small_run, tmp_path, SMALL.to_dict())
        rec = small_run[16]
        for name, cols in (("angle_cdf.csv", ANGLE_COLUMNS), ("rate_cdf.csv", RATE_COLUMNS),
                           ("sum_rate_cdf.csv", SUM_RATE_COLUMNS), ("tracks.csv", TRACK_COLUMNS)):
            header, rows = read_csv(paths[name])
            assert header == cols
        _, rows = read_csv(paths["tracks.csv"])
        T, N, K = rec.shape
        assert len(rows) == T * N * K * len(SCHEMES)

    def test_cdf_files_monotone(self, small_run, tmp_path):
        paths = emit_outputs(small_run, tmp_path)
        for name in ("angle_cdf.csv", "rate_cdf.csv", "sum_rate_cdf.csv"):
            _, rows = read_csv(paths[name])
            for s in SCHEMES:
                vals = np.array([float(r[2]) for r in rows if r[0] == s])
                probs = np.array([float(r[3]) for r in rows if r[0] == s])
                assert np.all(np.diff(vals) > 0) and np.all(np.diff(probs) > 0) and probs[-1] == 1.0

    def test_round_trip(self, small_run, tmp_path):
        paths = emit_outputs(small_run, tmp_path)
        rec = small_run[16]
        data = read_tracks(paths["tracks.csv"])
        for s in SCHEMES:
            assert np.allclose(np.sort(data[s]["final_error_deg"]), np.sort(rec.final_error_deg(s)), atol=1e-9)
            assert np.allclose(np.sort(data[s]["rate"]), np.sort(rec.rate[s].ravel()))
        summary = json.loads(paths["summary.json"].read_text())
        final = summary["runs"]["16"]["schemes"]["proposed"]["rmse_final_deg"]
        assert final == pytest.approx(np.sqrt(np.mean(rec.final_error_deg("proposed") ** 2)))
        out = tmp_path / "again"
        cdfs_from_tracks(paths["tracks.csv"], out, 16)
        # errors are rebuilt from the degree columns, so compare numerically
        _, got = read_csv(out / "angle_cdf.csv")
        _, want = read_csv(paths["angle_cdf.csv"])
        assert [r[:2] for r in got] == [r[:2] for r in want]
        assert np.allclose(np.array(got)[:, 2:].astype(float), np.array(want)[:, 2:].astype(float), atol=1e-9)
        assert (out / "rate_cdf.csv").read_bytes() == paths["rate_cdf.csv"].read_bytes()

    def test_multiple_antenna_cases(self, small_run, tmp_path):
        runs = {16: small_run[16], 8: small_run[16]}
        paths = emit_outputs(runs, tmp_path)
        assert "tracks_16.csv" in paths and "tracks_8.csv" in paths

    @pytest.mark.skipif(os.geteuid() == 0, reason="root can write anywhere")
    def test_unwritable(self, tmp_path):
        locked = tmp_path / "locked"
        locked.mkdir()
        locked.chmod(0o500)
        with pytest.raises(OSError):
            prepare_out_dir(locked / "sub")

    def test_out_path_is_a_file(self, tmp_path):
        f = tmp_path / "file"
        f.write_text("x")
        with pytest.raises(OSError):
            prepare_out_dir(f)


class TestCli:
    def test_run_is_deterministic(self, tmp_path):
        cfg = tmp_path / "s.cfg"
        cfg.write_text(small_text())
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
        names = sorted(os.listdir(tmp_path / "a"))
        assert names == ["angle_cdf.csv", "rate_cdf.csv", "sum_rate_cdf.csv", "summary.json", "tracks.csv"]
        for n in names:
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()

    def test_run_overrides(self, tmp_path):
        cfg = tmp_path / "s.cfg"
        cfg.write_text(small_text())
        out = tmp_path / "o"
        assert main(["run", "--config", str(cfg), "--out", str(out), "--trials", "1", "--seed", "9",
                     "--antennas", "8", "12"]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["config"]["seed"] == 9 and sorted(summary["runs"]) == ["12", "8"]
        assert (out / "tracks_8.csv").exists() and (out / "tracks_12.csv").exists()

    def test_bad_config_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("trials = -1\n")
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) != 0
        assert "trials" in capsys.readouterr().err

    def test_unwritable_out(self, tmp_path):
        f = tmp_path / "file"
        f.write_text("x")
        assert main(["run", "--out", str(f), "--trials", "1"]) != 0

    def test_single_and_cdf(self, tmp_path, capsys):
        cfg = tmp_path / "s.cfg"
        cfg.write_text(small_text())
        assert main(["single", "--config", str(cfg), "--trial", "0"]) == 0
        assert "proposed_err_deg" in capsys.readouterr().out
        main(["run", "--config", str(cfg), "--out", str(tmp_path / "r")])
        assert main(["cdf", "--tracks", str(tmp_path / "r" / "tracks.csv"), "--out", str(tmp_path / "c")]) == 0
        assert (tmp_path / "c" / "angle_cdf.csv").exists()
        assert main(["cdf", "--tracks", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "c")]) != 0
