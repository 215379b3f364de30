"""Config grammar, scheme/codebook files, runners, and the CLI surface."""

import json
import os

import numpy as np
import pytest

from relaydiv import (
    Codebook,
    ConfigError,
    FileFormatError,
    SchemeInvalidError,
    cyclic_delay_scheme,
    gaussian_codebook,
    phase_rolling_scheme,
)
from relaydiv.experiment_cli import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIG,
    EXIT_OK,
    ExperimentConfig,
    config_from_mapping,
    load_codebook_file,
    load_scheme_file,
    main,
    parse_config_text,
    run_certify,
    run_dm_slope,
    run_outage_sweep,
    run_self_check,
    save_codebook_file,
    save_scheme_file,
)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


# ---------------------------------------------------------------------------
# Config grammar
# ---------------------------------------------------------------------------

def test_parse_config_basics():
    raw = parse_config_text(
        """
        # comment line
        experiment = outage-sweep
        scheme = cdd
        k = 2
        n = 4          # trailing comment
        r = 0.25
        snr_db = [20, 25, 30]
        seed = 7
        out = x.csv
        """
    )
    cfg = config_from_mapping(raw)
    assert cfg.experiment == "outage-sweep"
    assert cfg.snr_db == (20.0, 25.0, 30.0)
    assert cfg.k == 2 and cfg.n == 4 and cfg.seed == 7


def test_parse_config_rejects_garbage():
    with pytest.raises(FileFormatError):
        parse_config_text("just some words\n")
    with pytest.raises(FileFormatError):
        parse_config_text("snr_db = [1, 2\n")
    with pytest.raises(ConfigError):
        config_from_mapping({"experiment": "outage-sweep", "bogus_key": "1"})
    with pytest.raises(ConfigError):
        config_from_mapping({"experiment": "no-such-thing"})


def test_config_validation_rules():
    base = dict(experiment="outage-sweep", scheme="cdd", snr_db=(20.0, 25.0), seed=1)
    with pytest.raises(ConfigError):
        config_from_mapping({**base, "k": 3, "n": 2})
    with pytest.raises(ConfigError):
        config_from_mapping({**base, "r": 0.7})
    with pytest.raises(ConfigError):
        config_from_mapping({**base, "snr_db": (25.0, 20.0)})
    with pytest.raises(ConfigError):
        config_from_mapping({**base, "trials": "sometimes"})


def test_canonical_text_round_trips():
    cfg = ExperimentConfig(
        experiment="dm-slope",
        scheme="phase-rolling",
        k=3,
        n=8,
        r=0.25,
        snr_db=(20.0, 25.0, 30.0),
        trials="12345",
        seed=99,
        out="slope.csv",
    )
    cfg.validate()
    again = config_from_mapping(parse_config_text(cfg.canonical_text()))
    assert again == cfg


# ---------------------------------------------------------------------------
# Scheme and codebook files
# ---------------------------------------------------------------------------

def test_scheme_file_round_trip(tmp_path):
    scheme = phase_rolling_scheme(2, 3)
    path = str(tmp_path / "scheme.txt")
    save_scheme_file(path, scheme)
    loaded = load_scheme_file(path)
    for a, b in zip(loaded.matrices, scheme.matrices):
        np.testing.assert_array_equal(a, b)  # repr round-trip is bit exact


def test_scheme_file_rejects_unscaled_matrices(tmp_path):
    path = _write(
        tmp_path / "bad.txt",
        "N 2 K 1\n1 0 0 0\n0 0 1 0\n",  # identity, not identity/sqrt(2)
    )
    with pytest.raises(SchemeInvalidError):
        load_scheme_file(path)


def test_scheme_file_parse_error_carries_location(tmp_path):
    path = _write(tmp_path / "bad.txt", "N 2 K 1\n1 0 0\n0 0 1 0\n")
    with pytest.raises(FileFormatError) as excinfo:
        load_scheme_file(path)
    assert excinfo.value.line == 2


def test_codebook_file_round_trip(tmp_path):
    book = gaussian_codebook(3, 0.25, 4.0, np.random.default_rng(0))
    path = str(tmp_path / "book.txt")
    save_codebook_file(path, book)
    loaded = load_codebook_file(path)
    np.testing.assert_array_equal(loaded.codewords, book.codewords)


def test_codebook_file_count_mismatch(tmp_path):
    path = _write(tmp_path / "bad.txt", "N 2 COUNT 3\n1 0 0 0\n0 1 0 0\n")
    with pytest.raises(FileFormatError):
        load_codebook_file(path)


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------

def _sweep_config(**overrides):
    base = dict(
        experiment="outage-sweep",
        scheme="cdd",
        k=2,
        n=4,
        r=0.25,
        snr_db=(20.0, 25.0, 30.0),
        trials="50000",
        seed=13,
    )
    base.update(overrides)
    cfg = ExperimentConfig(**base)
    cfg.validate()
    return cfg


def test_outage_sweep_rate_zero_is_all_zero():
    curve = run_outage_sweep(_sweep_config(r=0.0))
    assert all(p.probability == 0.0 for p in curve.points)


def test_outage_sweep_deterministic():
    a = run_outage_sweep(_sweep_config())
    b = run_outage_sweep(_sweep_config())
    assert a.points == b.points


def test_outage_sweep_probability_nonincreasing_within_ci():
    cfg = _sweep_config(snr_db=tuple(float(db) for db in range(20, 50, 5)), trials="100000")
    curve = run_outage_sweep(cfg)
    for a, b in zip(curve.points, curve.points[1:]):
        assert b.probability <= a.ci_high


def test_outage_sweep_exact_kind_dominates_jensen():
    jensen = run_outage_sweep(_sweep_config())
    exact = run_outage_sweep(_sweep_config(outage="exact"))
    for pj, pe in zip(jensen.points, exact.points):
        assert pe.events >= pj.events


def test_dm_slope_reports_raw_calibrated_and_theory():
    cfg = _sweep_config(
        experiment="dm-slope",
        k=1,
        r=0.0,
        snr_db=tuple(float(db) for db in range(20, 45, 5)),
        trials="200000",
    )
    curve, report = run_dm_slope(cfg)
    assert report.d_theory == 1.0
    assert 0.5 < report.d_hat_raw < 1.0  # raw slope biased low at desk SNR
    assert abs(report.d_hat - 1.0) < 0.2
    assert report.points_used == len(curve.points)
    assert report.status == "ok"


def test_dm_slope_warns_on_insufficient_events():
    cfg = _sweep_config(experiment="dm-slope", min_events=10**9, trials="50000")
    curve, report = run_dm_slope(cfg)
    assert report.status.startswith("warning")
    assert len(curve.points) == 3  # partial output still present
    assert np.isnan(report.d_hat)


def test_certify_flags_duplicate_codewords(tmp_path):
    word = np.ones(4, dtype=complex)
    book = Codebook(np.stack([word, word, word + np.array([1, 0, 0, 0])]), 0.1, 100.0)
    path = str(tmp_path / "book.txt")
    save_codebook_file(path, book)
    cfg = _sweep_config(experiment="certify-code", n=4, codebook=path)
    report = run_certify(cfg)
    assert not report.certified
    assert "pair (0, 1)" in report.first_violation
    assert report.mu_min == pytest.approx(0.0, abs=1e-12)


def test_certify_passes_basis_difference_book(tmp_path):
    n = 4
    words = np.zeros((2, n), dtype=complex)
    words[1, 0] = 1.0
    path = str(tmp_path / "book.txt")
    save_codebook_file(path, Codebook(words, 0.25, 100.0))
    cfg = _sweep_config(experiment="certify-code", k=n, n=n, codebook=path)
    report = run_certify(cfg)
    assert report.certified
    assert report.mu_min == pytest.approx(1.0 / n, rel=1e-12)
    assert report.simplified_agreement == "1/1"
    assert all(ok for _, ok, _ in report.universal_verdicts)


def test_self_check_passes_on_fresh_build():
    results, text = run_self_check()
    assert all(r.passed for r in results)
    assert "PASS" in text and "FAIL" not in text


def test_cli_oversized_codebook_is_resource_error(tmp_path):
    from relaydiv.experiment_cli import EXIT_RESOURCE

    rng = np.random.default_rng(0)
    words = rng.standard_normal((5000, 2)) + 1j * rng.standard_normal((5000, 2))
    path = str(tmp_path / "big.txt")
    save_codebook_file(path, Codebook(words, 0.1, 100.0))
    rc = main(["certify-code", "--scheme", "cdd", "--k", "2", "--n", "2",
               "--r", "0.1", "--snr-db", "20", "--seed", "1", "--codebook", path])
    assert rc == EXIT_RESOURCE


# ---------------------------------------------------------------------------
# CLI surface
# ---------------------------------------------------------------------------

def test_cli_outage_sweep_writes_csv_and_manifest(tmp_path, capsys):
    out = str(tmp_path / "sweep.csv")
    rc = main(
        [
            "outage-sweep", "--scheme", "cdd", "--k", "2", "--n", "4", "--r", "0.25",
            "--snr-db", "20,25", "--trials", "20000", "--seed", "3", "--out", out,
        ]
    )
    assert rc == EXIT_OK
    lines = open(out).read().splitlines()
    assert lines[0] == "snr_db,probability,ci_low,ci_high,trials,events"
    assert len(lines) == 3
    manifest = json.loads(open(out + ".manifest.json").read())
    assert manifest["status"] == "ok"
    assert len(manifest["per_point_events"]) == 2


def test_cli_manifest_round_trip(tmp_path):
    out1 = str(tmp_path / "a.csv")
    rc = main(
        [
            "outage-sweep", "--scheme", "cdd", "--k", "2", "--n", "4", "--r", "0.2",
            "--snr-db", "20,25", "--trials", "30000", "--seed", "11", "--out", out1,
        ]
    )
    assert rc == EXIT_OK
    manifest = json.loads(open(out1 + ".manifest.json").read())
    cfg_path = _write(tmp_path / "echo.cfg", manifest["config_text"])
    out2 = str(tmp_path / "b.csv")
    rc = main(["outage-sweep", "--config", cfg_path, "--out", out2])
    assert rc == EXIT_OK
    assert open(out1, "rb").read() == open(out2, "rb").read()


def test_cli_override_wins_over_config(tmp_path):
    cfg_path = _write(
        tmp_path / "c.cfg",
        "experiment = outage-sweep\nscheme = cdd\nk = 2\nn = 4\nr = 0\n"
        "snr_db = [20, 25]\ntrials = 10000\nseed = 1\n",
    )
    out = str(tmp_path / "o.csv")
    rc = main(["outage-sweep", "--config", cfg_path, "--r", "0.25", "--out", out])
    assert rc == EXIT_OK
    rows = open(out).read().splitlines()[1:]
    assert any(float(row.split(",")[1]) > 0 for row in rows)  # r was overridden


def test_cli_config_error_exit_code(tmp_path):
    rc = main(["outage-sweep", "--scheme", "cdd", "--k", "5", "--n", "2",
               "--snr-db", "20", "--out", str(tmp_path / "x.csv")])
    assert rc == EXIT_CONFIG
    rc = main(["outage-sweep", "--config", str(tmp_path / "missing.cfg")])
    assert rc == EXIT_CONFIG


def test_cli_invalid_scheme_file_exit_code(tmp_path):
    bad = _write(tmp_path / "bad.txt", "N 2 K 1\n1 0 0 0\n0 0 1 0\n")
    rc = main(["outage-sweep", "--scheme", bad, "--k", "1", "--n", "2", "--r", "0.1",
               "--snr-db", "20", "--trials", "1000", "--seed", "1",
               "--out", str(tmp_path / "x.csv")])
    assert rc == EXIT_CONFIG


def test_cli_unwritable_output_is_config_error(tmp_path):
    rc = main(["outage-sweep", "--scheme", "cdd", "--k", "1", "--n", "2", "--r", "0.1",
               "--snr-db", "20", "--trials", "1000", "--seed", "1",
               "--out", str(tmp_path / "no" / "such" / "dir" / "x.csv")])
    assert rc == EXIT_CONFIG


def test_cli_self_check_exit_zero(capsys):
    assert main(["self-check"]) == EXIT_OK
    assert "self-check report" in capsys.readouterr().out


def test_cli_env_threads_default(tmp_path, monkeypatch):
    out1 = str(tmp_path / "t1.csv")
    out8 = str(tmp_path / "t8.csv")
    args = ["outage-sweep", "--scheme", "cdd", "--k", "2", "--n", "4", "--r", "0.25",
            "--snr-db", "20,25", "--trials", "40000", "--seed", "5"]
    monkeypatch.setenv("RELAYDIV_THREADS", "1")
    assert main(args + ["--out", out1]) == EXIT_OK
    monkeypatch.setenv("RELAYDIV_THREADS", "8")
    assert main(args + ["--out", out8]) == EXIT_OK
    assert open(out1, "rb").read() == open(out8, "rb").read()


def test_cli_analytic_curve(tmp_path):
    out = str(tmp_path / "ac.csv")
    rc = main(["analytic-curve", "--scheme", "cdd", "--k", "2", "--n", "4",
               "--r", "0.25", "--snr-db", "20,30,40", "--seed", "1", "--out", out])
    assert rc == EXIT_OK
    lines = open(out).read().splitlines()
    assert lines[0] == "snr_db,lower,upper,theory_exponent"
    rows = [line.split(",") for line in lines[1:]]
    uppers = [float(r[2]) for r in rows]
    assert uppers == sorted(uppers, reverse=True)
    assert all(float(r[3]) == 1.0 for r in rows)


def test_cli_certify_code(tmp_path):
    n = 4
    words = np.zeros((2, n), dtype=complex)
    words[1, 0] = 1.0
    book_path = str(tmp_path / "book.txt")
    save_codebook_file(book_path, Codebook(words, 0.25, 100.0))
    out = str(tmp_path / "report.txt")
    rc = main(["certify-code", "--scheme", "cdd", "--k", str(n), "--n", str(n),
               "--r", "0.25", "--snr-db", "20,30", "--seed", "1",
               "--codebook", book_path, "--out", out])
    assert rc == EXIT_OK
    text = open(out).read()
    assert "PASS (all pairs)" in text
    assert "mu_min" in text
