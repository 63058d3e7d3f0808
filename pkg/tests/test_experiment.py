import csv
import hashlib
import io
import json
import math
import struct
from fractions import Fraction

import numpy as np
import pytest

from polymerlab import experiment, limits, stats
from polymerlab.cli import main
from polymerlab.disorder import TailSpec
from polymerlab.errors import DomainError, UnsupportedRegimeError
from polymerlab.experiment import BetaSchedule, ExperimentConfig

BASE = {"family": "lomax", "alpha": 4.0, "c_minus": 1.0, "schedule": "HeavyScale", "beta": 0.5,
        "theorem": "TGAUSS", "n_list": [16, 32], "replicas": 3, "base_seed": 5}


# schedules -----------------------------------------------------------------

def test_beta_n_examples():
    assert experiment.beta_n(BetaSchedule.quarter_root(1.0), None, 16) == 0.5
    assert experiment.beta_n(BetaSchedule.heavy_scale(2.0), TailSpec.pareto(1.5), 4) == pytest.approx(0.5, rel=1e-14)
    for n in (1, 10, 1000):
        assert experiment.beta_n(BetaSchedule.fixed_gamma(0.0, 1.3), None, n) == 1.3
    with pytest.raises(UnsupportedRegimeError):
        experiment.beta_n(BetaSchedule.heavy_scale(1.0), TailSpec.gaussian(), 16)
    with pytest.raises(DomainError):
        BetaSchedule.fixed_gamma(-0.1)
    with pytest.raises(DomainError):
        BetaSchedule.quarter_root(0.0)


def test_gamma_effective():
    s = BetaSchedule.fixed_gamma(0.3, 2.0)
    assert experiment.gamma_effective(s, experiment.beta_n(s, None, 100), 100) == pytest.approx(0.3, rel=1e-14)
    s = BetaSchedule.heavy_scale(1.0)
    spec = TailSpec.pareto(4.0)
    assert experiment.gamma_effective(s, experiment.beta_n(s, spec, 4096), 4096) == pytest.approx(3 / 8, rel=1e-12)


# regions -------------------------------------------------------------------

def test_region_examples():
    assert experiment.classify_region(0.25, 8) == "R2"
    assert experiment.classify_region(0.5, 4) == "R1"
    assert experiment.classify_region(0.0, 1) == "R7"
    assert experiment.classify_region(0.0, 6) == "R4"
    assert experiment.classify_region(0.1, 8) == "R3"
    assert experiment.classify_region(0.3, 4) == "R5"
    assert experiment.classify_region(1.0, 1) == "R6"
    # below alpha = 2 the printed R5 bound (alpha - 5)/(alpha - 2) exceeds 3/(2 alpha)
    assert experiment.classify_region(0.5, 1.5) == "unclassified"
    with pytest.raises(DomainError):
        experiment.classify_region(-0.1, 2)


def test_region_boundaries_as_printed():
    # gamma = 3/(2 alpha) belongs to R1 (>=), not to R5 (<)
    assert experiment.classify_region(0.375, 4) == "R1"
    # gamma = 1/4 at alpha = 6 is R2 only: R5 needs gamma < 3/(2 alpha) strictly
    assert experiment.classify_region(0.25, 6) == "R2"
    assert experiment.classify_region(0.25, 5) == "R5"
    # alpha = 5 at gamma = 0 is excluded from R4 (alpha > 5)
    assert experiment.classify_region(0.0, 5) == "unclassified"
    # R3 includes its alpha boundary (5 - 2g)/(1 - g) = 6 at g = 1/4 is R2 territory; check g = 1/8
    a = float(Fraction(5 - Fraction(1, 4), Fraction(7, 8)))
    assert experiment.classify_region(0.125, a + 1e-9) == "R3"


def test_regions_partition_grid():
    gammas = np.linspace(0.01, 1.0, 100)
    alphas = np.linspace(0.6 + 9.4 / 100, 10.0, 100)
    seen = set()
    for g in gammas:
        for a in alphas:
            tag = experiment.classify_region(float(g), float(a))
            assert "+" not in tag
            assert tag in {"R1", "R2", "R3", "R4", "R5", "R6", "R7", "unclassified"}
            seen.add(tag)
    assert {"R1", "R5", "R7"} <= seen


def test_level_xi_examples():
    assert experiment.level_xi(0.25, 6) == pytest.approx(0.5, abs=1e-15)
    for a in (5.0, 7.0, 20.0):
        assert experiment.level_xi(0.0, a) == pytest.approx(2 / 3, abs=1e-15)
    assert experiment.level_xi(0.0, 2) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(DomainError):
        experiment.level_xi(1.0, 3)
    with pytest.raises(DomainError):
        experiment.level_xi(0.2, 0.5)


def test_level_xi_continuous_on_seam():
    for g in np.linspace(0.0, 0.95, 100):
        a = experiment.level_threshold(g)
        first = (1 + a * (1 - g)) / (2 * a - 1)
        second = 2 * (1 - g) / 3
        assert abs(first - second) < 1e-12
        assert abs(experiment.level_xi(g, a) - experiment.level_xi(g, math.nextafter(a, math.inf))) < 1e-12


def test_region_xi_in_range():
    for g in np.linspace(0.0, 1.0, 21):
        for a in np.linspace(0.6, 10, 21):
            xi = experiment.region_xi(float(g), float(a))
            assert xi is None or 0.5 - 1e-12 <= xi <= 1.0 + 1e-12


# configuration ---------------------------------------------------------------

def test_config_roundtrip_and_validation():
    cfg = ExperimentConfig.from_dict(BASE)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(DomainError):
        ExperimentConfig.from_dict(dict(BASE, n_list=[32, 16]))
    with pytest.raises(DomainError):
        ExperimentConfig.from_dict(dict(BASE, replicas=0))
    with pytest.raises(DomainError):
        ExperimentConfig.from_dict(dict(BASE, colour="red"))
    with pytest.raises(DomainError):
        ExperimentConfig.from_dict({k: v for k, v in BASE.items() if k != "beta"})
    with pytest.raises(UnsupportedRegimeError):
        ExperimentConfig.from_dict(dict(BASE, theorem="THEAVY"))
    g = ExperimentConfig.from_dict({"family": "gaussian", "schedule": "QuarterRoot", "beta": 1.0,
                                    "theorem": "T14", "n_list": [8], "replicas": 1})
    assert g.tail.alpha == math.inf


def test_workers_env_override(tmp_path, monkeypatch):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(dict(BASE, workers=1)))
    monkeypatch.setenv("POLYMERLAB_WORKERS", "3")
    assert experiment.load_config(path).workers == 3


def test_seed_for_is_documented_hash():
    digest = hashlib.blake2b(struct.pack("<qqq", 7, 4096, 11), digest_size=8, person=b"polymerlab-seed").digest()
    assert experiment.seed_for(7, 4096, 11) == int.from_bytes(digest, "little")
    seeds = {experiment.seed_for(0, n, r) for n in (8, 16) for r in range(100)}
    assert len(seeds) == 200


# runs ------------------------------------------------------------------------

def test_single_replica_rerun_identical():
    cfg = ExperimentConfig.from_dict(dict(BASE, n_list=[8], replicas=1))
    a, b = experiment.run_replicas(cfg), experiment.run_replicas(cfg)
    assert len(a) == 1
    assert a[0].as_tuple()[:-1] == b[0].as_tuple()[:-1]


def test_row_contents():
    cfg = ExperimentConfig.from_dict(dict(BASE, n_list=[64, 128], replicas=20))
    rows = experiment.run_replicas(cfg)
    assert [(r.n, r.replica) for r in rows] == [(n, i) for n in (64, 128) for i in range(20)]
    for r in rows:
        assert r.truncation_gap >= 0
        assert r.truncation_gap == r.log_Z_raw - r.log_Z_truncated
        b_n = experiment.beta_n(cfg.schedule, cfg.tail, r.n)
        assert r.centered_scaled_statistic == pytest.approx((r.log_Z_raw - r.centering) / (b_n * r.n ** 0.25), rel=1e-12)


def test_no_theorem_reports_raw_log_z():
    cfg = ExperimentConfig.from_dict(dict(BASE, theorem=None, schedule="QuarterRoot", n_list=[1, 2]))
    rows = experiment.run_replicas(cfg)
    assert all(r.centered_scaled_statistic == r.log_Z_raw and r.centering == 0.0 for r in rows)


def test_gaussian_regime_variance_band():
    cfg = ExperimentConfig.from_dict(dict(BASE, n_list=[1024], replicas=2000))
    stat = [r.centered_scaled_statistic for r in experiment.run_replicas(cfg)]
    ratio = np.var(stat, ddof=1) / limits.GAUSS_LIMIT_VAR
    assert 0.85 <= ratio <= 1.45


def test_workers_invariance():
    cfg = ExperimentConfig.from_dict(dict(BASE, replicas=6))
    one = experiment.rows_to_csv(experiment.run_replicas(cfg), include_runtime=False)
    two = experiment.rows_to_csv(experiment.run_replicas(experiment.with_workers(cfg, 2)), include_runtime=False)
    assert one == two


# persistence -----------------------------------------------------------------

def test_csv_roundtrip(tmp_path):
    cfg = ExperimentConfig.from_dict(BASE)
    rows, summary = experiment.simulate(cfg, tmp_path)
    back = experiment.read_rows_csv(tmp_path / experiment.ROWS_FILE)
    assert [r.as_tuple()[:-1] for r in back] == [r.as_tuple()[:-1] for r in rows]
    text = (tmp_path / experiment.ROWS_FILE).read_text()
    assert text.splitlines()[0] == ",".join(experiment.SWEEP_COLUMNS)
    assert "\r" not in text
    assert json.loads((tmp_path / experiment.SUMMARY_FILE).read_text()) == summary


def test_summary_ks_matches_offline_recompute(tmp_path):
    cfg = ExperimentConfig.from_dict(dict(BASE, n_list=[64, 128, 256], replicas=50))
    _, summary = experiment.simulate(cfg, tmp_path)
    rows = experiment.read_rows_csv(tmp_path / experiment.ROWS_FILE)
    for entry in summary["per_n"]:
        stat = [r.centered_scaled_statistic for r in rows if r.n == entry["n"]]
        assert entry["limit_law"] == "gaussian"
        assert entry["ks_to_limit"] == stats.ks_one_sample(stat, limits.gaussian_limit_cdf)
    assert summary["xi_fit_endpoint"]["slope"] > 0
    assert summary["region"] is not None
    assert 0.0 <= summary["per_n"][0]["posi_frequency"] <= 1.0


def test_heavy_summary_uses_poisson_field(tmp_path):
    flat = {"alpha": 1.5, "schedule": "HeavyScale", "beta": 1.0, "theorem": "THEAVY",
            "n_list": [16], "replicas": 20, "limit_draws": 200, "eps": 0.05}
    _, summary = experiment.simulate(ExperimentConfig.from_dict(flat), tmp_path)
    entry = summary["per_n"][0]
    assert entry["limit_law"] == "poisson_field" and 0 < entry["ks_to_limit"] <= 1


def test_sweep_cardinality(tmp_path):
    flat = dict(BASE, alpha=[3.0, 4.0], beta=[0.5, 1.0], n_list=[16], replicas=2)
    rows, summaries = experiment.sweep(flat, tmp_path)
    assert len(rows) == 8 and len(summaries) == 4
    assert len(experiment.read_rows_csv(tmp_path / experiment.ROWS_FILE)) == 8


def test_empty_sweep(tmp_path):
    rows, _ = experiment.sweep(dict(BASE, alpha=[]), tmp_path)
    assert rows == []
    assert (tmp_path / experiment.ROWS_FILE).read_text() == ",".join(experiment.SWEEP_COLUMNS) + "\n"


def test_io_error_names_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        experiment.simulate(ExperimentConfig.from_dict(dict(BASE, replicas=1, n_list=[4])), blocker / "out")


def test_schema_file_matches_columns():
    sch = experiment.schema()
    assert tuple(sch["x-column-order"]) == experiment.SWEEP_COLUMNS
    assert set(sch["properties"]) == set(experiment.SWEEP_COLUMNS)


# CLI -------------------------------------------------------------------------

def test_cli_verify(capsys):
    assert main(["verify"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3 and all(line.startswith("PASS") for line in lines)


def test_cli_regions(capsys):
    assert main(["regions", "--gamma-grid", "0.25,0.5", "--alpha-grid", "4,8"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    got = {(float(r["gamma"]), float(r["alpha"])): (r["region"], r["xi"]) for r in rows}
    assert got[(0.25, 8.0)] == ("R2", repr(0.5))
    assert got[(0.5, 4.0)] == ("R1", repr(0.5))
    assert got[(0.25, 4.0)] == ("R5", repr(experiment.level_xi(0.25, 4.0)))


def test_cli_sample_w(capsys):
    assert main(["limits", "sample-w", "--alpha", "1.5", "--beta", "1", "--eps", "0.1", "--count", "5", "--seed", "3"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "draw,W" and len(out) == 6
    expected = limits.sample_W_batch(1.5, 1.0, 1.0, 0.1, 8.0, 5, experiment.make_rng(3))
    assert [float(line.split(",")[1]) for line in out[1:]] == list(expected)


def test_cli_stable_cf(capsys):
    assert main(["limits", "stable-cf", "--alpha", "0.75", "--steps", "5"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 5
    mid = rows[2]
    assert float(mid["y"]) == 0.0 and float(mid["cf_re"]) == 1.0


def test_cli_simulate_and_sweep(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(dict(BASE, replicas=2)))
    assert main(["simulate", "--config", str(cfg), "--outputs", str(tmp_path / "a")]) == 0
    assert json.loads(capsys.readouterr().out)["config"]["alpha"] == 4.0
    assert (tmp_path / "a" / "rows.csv").exists()
    cfg.write_text(json.dumps(dict(BASE, replicas=1, beta=[0.5, 1.0])))
    assert main(["sweep", "--config", str(cfg), "--outputs", str(tmp_path / "b")]) == 0
    assert "4 rows" in capsys.readouterr().out


def test_cli_errors(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2
    assert "missing.json" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(dict(BASE, alpha=1.5)))
    assert main(["simulate", "--config", str(bad)]) == 2
