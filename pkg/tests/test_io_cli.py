import csv
import json
from pathlib import Path

import numpy as np
import pytest

from eggcount_kit.cli import main
from eggcount_kit.io import (
    SCHEMA,
    IngestionError,
    RunConfig,
    build_run_config,
    canonical_json,
    load_flocks,
    read_config_file,
)
from eggcount_kit.model import SENSITIVITY_DELTA_PRIORS

DATA = Path(__file__).parent / "data"
FIXTURE = DATA / "fixture_flock.csv"
GOLDEN = DATA / "golden_summary.json"
SHORT = ["--n-samples", "300", "--burn-in", "300", "--thin", "1", "--resamples", "199"]


def write_table(tmp_path, text, name="in.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadFlocks:
    def test_epg_to_slide_counts(self, tmp_path):
        p = write_table(tmp_path, "animal_id,pre_epg,post_epg\na,750,50\nb,0,0\n")
        (flock,), report = load_flocks(p)
        assert flock.raw_pre.tolist() == [15, 0]
        assert flock.raw_post.tolist() == [1, 0]
        assert report.rows_used == 2 and not report.events

    def test_coerce_to_zero(self, tmp_path):
        p = write_table(tmp_path, "animal_id,pre_epg,post_epg\na,30,0\nb,100,0\n")
        (flock,), report = load_flocks(p, policy="coerce-to-zero")
        assert flock.raw_pre.tolist() == [0, 2]
        assert [(e.row, e.action) for e in report.events] == [(2, "coerced-to-zero")]

    def test_warn_rounds(self, tmp_path):
        p = write_table(tmp_path, "animal_id,pre_epg,post_epg\na,30,0\nb,80,0\n")
        (flock,), report = load_flocks(p, policy="warn")
        assert flock.raw_pre.tolist() == [1, 2]
        assert {e.action for e in report.events} == {"rounded"}
        assert len(report.events) == 2

    def test_strict_rejects_with_rows(self, tmp_path):
        p = write_table(tmp_path, "animal_id,pre_epg,post_epg\na,100,0\nb,30,0\nc,60,0\n")
        with pytest.raises(IngestionError) as err:
            load_flocks(p, policy="strict")
        assert err.value.rows == [3, 4]

    def test_missing_post_excluded(self, tmp_path):
        p = write_table(tmp_path, "animal_id,pre_epg,post_epg\na,100,\nb,200,50\nc,0,NA\n")
        (flock,), report = load_flocks(p)
        assert flock.n == 1
        assert report.excluded_missing_post == 2
        assert [e.row for e in report.events] == [2, 4]

    def test_tab_delimited_and_flock_split(self, tmp_path):
        text = "flock_id\tanimal_id\tpre_epg\tpost_epg\tcorrection_factor\n" \
               "A\t1\t100\t0\t50\nB\t1\t40\t20\t10\nA\t2\t300\t50\t\n"
        flocks, _ = load_flocks(write_table(tmp_path, text, "in.tsv"))
        assert [f.flock_id for f in flocks] == ["A", "B"]
        assert flocks[0].raw_pre.tolist() == [2, 6]
        assert flocks[1].raw_pre.tolist() == [4]
        np.testing.assert_array_equal(flocks[1].correction_factor, [10.0])

    def test_raw_counts(self, tmp_path):
        p = write_table(tmp_path, "animal_id,pre_epg,post_epg\na,3,1\n")
        (flock,), _ = load_flocks(p, raw_counts=True)
        assert flock.raw_pre.tolist() == [3]
        assert flock.epg_pre.tolist() == [150.0]

    def test_round_trip(self):
        flocks, _ = load_flocks(FIXTURE)
        with FIXTURE.open() as fh:
            rows = [r for r in csv.DictReader(fh) if r["post_epg"]]
        epg = np.concatenate([f.epg_pre for f in flocks])
        np.testing.assert_array_equal(epg, [float(r["pre_epg"]) for r in rows])

    @pytest.mark.parametrize("text,fragment", [
        ("animal_id,pre_epg\na,100\n", "missing required column"),
        ("animal_id,pre_epg,post_epg\na,-50,0\n", "line 2"),
        ("animal_id,pre_epg,post_epg\na,abc,0\n", "not a number"),
        ("animal_id,pre_epg,post_epg\na,,0\n", "pre_epg is missing"),
        ("animal_id,pre_epg,post_epg,correction_factor\na,50,0,0.5\n", "below 1"),
    ])
    def test_errors(self, tmp_path, text, fragment):
        with pytest.raises(IngestionError, match=fragment):
            load_flocks(write_table(tmp_path, text))

    def test_unreadable(self, tmp_path):
        with pytest.raises(IngestionError):
            load_flocks(tmp_path / "nope.csv")


class TestConfig:
    def test_overrides(self):
        cfg = build_run_config({"a_delta": "0.5", "burn_in": "40", "policy": "strict", "sensitivity_sweep": "yes"})
        assert cfg.priors.a_delta == 0.5
        assert cfg.chain.burn_in == 40
        assert cfg.policy == "strict" and cfg.sensitivity_sweep

    def test_config_file(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("a-delta = 5\nthin = 3\nresamples = 99\n")
        cfg = build_run_config(read_config_file(p))
        assert (cfg.priors.a_delta, cfg.chain.thin, cfg.resamples) == (5.0, 3, 99)

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("colour = blue\n")
        with pytest.raises(ValueError):
            read_config_file(p)

    @pytest.mark.parametrize("kw", [{"reduction_threshold": 100}, {"denwood_upper": 1.5}, {"policy": "lenient"},
                                    {"level": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            RunConfig(**kw)

    def test_canonical_drops_timestamp(self):
        assert canonical_json({"generated_at": "x", "b": 1.5}) == canonical_json({"b": 1.5})


def run_analyze(tmp_path, *extra, name="out"):
    out = tmp_path / f"{name}.json"
    draws = tmp_path / f"{name}_draws"
    code = main(["analyze", str(FIXTURE), "-o", str(out), "--draws-dir", str(draws), *SHORT, *extra])
    return code, out, draws


class TestAnalyze:
    def test_summary_document(self, tmp_path):
        code, out, draws = run_analyze(tmp_path, "--seed", "11")
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["schema"] == SCHEMA
        assert doc["validation"]["excluded_missing_post"] == 1
        f1, f2 = doc["flocks"]
        assert f1["n_animals"] == 11 and f2["n_animals"] == 6
        for flock in doc["flocks"]:
            h = flock["hierarchical"]
            assert h["reduction"]["hpd_lower"] <= h["reduction"]["hpd_upper"]
            assert 0 <= h["prob_reduction_below"] <= 1
            assert set(h["diagnostics"]) >= {"accept_phi", "accept_mu", "accept_delta", "ess"}
            assert (draws / h["draws_file"]).exists()
        # all-zero post: no classical interval, positive-width HPD
        assert f2["classical"]["estimate"] == 100.0
        assert f2["classical"]["approximate"]["lower"] is None
        assert f2["hierarchical"]["reduction"]["hpd_upper"] > f2["hierarchical"]["reduction"]["hpd_lower"]

    def test_draw_trace_columns(self, tmp_path):
        _, _, draws = run_analyze(tmp_path, "--seed", "11")
        with (draws / "F1_draws.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["iteration", "phi", "mu", "delta"]
        assert len(rows) == 301
        assert rows[1][0] == "301"

    def test_same_seed_same_output(self, tmp_path):
        _, a, da = run_analyze(tmp_path, "--seed", "3", name="a")
        _, b, db = run_analyze(tmp_path, "--seed", "3", name="b")
        assert canonical_json(json.loads(a.read_text())) == canonical_json(json.loads(b.read_text()))
        assert (da / "F1_draws.csv").read_bytes() == (db / "F1_draws.csv").read_bytes()

    def test_golden_summary(self, tmp_path):
        _, out, _ = run_analyze(tmp_path, "--seed", "2024")
        doc = json.loads(out.read_text())
        golden = json.loads(GOLDEN.read_text())
        assert canonical_json(doc) == canonical_json(golden)

    def test_generated_seed_is_printed(self, tmp_path, capsys):
        code, out, _ = run_analyze(tmp_path)
        assert code == 0
        seed = int(capsys.readouterr().err.split("seed:")[1].split()[0])
        assert json.loads(out.read_text())["config"]["chain"]["seed"] == seed

    def test_sensitivity_sweep(self, tmp_path):
        code, out, draws = run_analyze(tmp_path, "--seed", "5", "--sensitivity-sweep")
        assert code == 0
        flock = json.loads(out.read_text())["flocks"][0]
        priors = [(s["prior"]["a_delta"], s["prior"]["b_delta"]) for s in flock["sensitivity"]]
        assert priors == list(SENSITIVITY_DELTA_PRIORS)
        assert len(list(draws.glob("F1_beta*_draws.csv"))) == 4

    def test_ingestion_error_record(self, tmp_path, capsys):
        bad = write_table(tmp_path, "animal_id,pre_epg,post_epg\na,30,0\n")
        code = main(["analyze", str(bad), "--policy", "strict", "--seed", "1", "-o", str(tmp_path / "x.json")])
        assert code != 0
        record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert record["error"] == "ingestion" and record["rows"] == [2]

    def test_flags_override_config_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("a-delta = 5\nn-samples = 999\n")
        code, out, _ = run_analyze(tmp_path, "--seed", "1", "--config", str(cfg))
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["config"]["priors"]["a_delta"] == 5.0
        assert doc["config"]["chain"]["n_samples"] == 300


class TestSimulate:
    def test_small_run(self, tmp_path, capsys):
        code = main(["simulate", "--efficacy", "99", "--replicates", "4", "--n-samples", "150", "--burn-in", "150",
                     "--thin", "1", "--resamples", "49", "--seed", "8", "--out-dir", str(tmp_path)])
        assert code == 0
        rows = list(csv.DictReader((tmp_path / "scenario_table.csv").open()))
        assert len(rows) == 3
        for r in rows:
            total = float(r["fraction_present"]) + float(r["fraction_possible"]) + float(r["fraction_absent"])
            assert total == pytest.approx(1.0)
        assert len(list(csv.DictReader((tmp_path / "replicates.csv").open()))) == 4
        assert "99" in capsys.readouterr().out

    def test_full_scale_flag(self, monkeypatch, tmp_path):
        seen = {}

        def fake(cfg, progress=None):
            seen["cfg"] = cfg
            from eggcount_kit.simulation import ScenarioResult
            return ScenarioResult(cfg, [], {})

        monkeypatch.setattr("eggcount_kit.cli.run_scenario", fake)
        assert main(["simulate", "--paper-scale", "--seed", "1", "--out-dir", str(tmp_path)]) == 0
        cfg = seen["cfg"]
        assert cfg.replicates == 2000
        assert (cfg.chain.n_samples, cfg.chain.burn_in, cfg.chain.thin) == (10000, 10000, 10)
