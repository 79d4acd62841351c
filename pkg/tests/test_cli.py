import json
import subprocess
import sys

import numpy as np
import pytest

from stablegames.cli import EXIT_EMPTY, EXIT_ERROR, EXIT_OK, main
from stablegames.data import BinnedData
from stablegames.identify import ScanResult


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def population_bins(tmp_path):
    out = tmp_path / "pop.csv"
    assert run("simulate", "--out", out, "--grid-n", 6, "--set", "selection=random",
               "--set", "selection_seed=2") == EXIT_OK
    return out


class TestSimulate:
    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert run("simulate", "--out", out, "--seed", 5, "--grid-n", 4, "--set", "n_obs=200",
                       "--set", "x=1;2") == EXIT_OK
        strip = lambda p: [ln for ln in p.read_text().splitlines() if not ln.startswith("# out =")]
        assert strip(a) == strip(b)

    def test_sample_counts(self, tmp_path):
        out = tmp_path / "s.csv"
        run("simulate", "--out", out, "--grid-n", 4, "--set", "n_obs=250", "--set", "x=1;2;3")
        data = BinnedData.load(out)
        assert data.n_bins == 3 and not data.population
        np.testing.assert_array_equal(data.counts, [250, 250, 250])
        assert np.allclose(data.phi * 250, np.round(data.phi * 250))

    def test_population_ccps(self, population_bins):
        data = BinnedData.load(population_bins)
        assert data.population
        assert data.phi.sum() == pytest.approx(1.0)
        header = [ln for ln in population_bins.read_text().splitlines() if ln.startswith("#")]
        assert "# selection = random" in header

    def test_config_file_and_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("grid_n = 3\nx = 1;0\nselection = random\n")
        out = tmp_path / "c.csv"
        assert run("simulate", "--config", cfg, "--out", out, "--set", "grid_n=4") == EXIT_OK
        text = out.read_text()
        assert "# grid_n = 4" in text and "# x = 1;0" in text
        assert BinnedData.load(out).n_bins == 2

    def test_unknown_key_is_an_error(self, tmp_path, capsys):
        assert run("simulate", "--out", tmp_path / "x.csv", "--set", "colour=blue") == EXIT_ERROR
        assert "unknown setting" in capsys.readouterr().err


class TestScan:
    def test_population_scan(self, tmp_path, population_bins):
        out = tmp_path / "scan"
        code = run("scan", "--set", f"bins={population_bins}", "--population", "--grid-n", 6,
                   "--set", "free=kappa1,kappa2", "--set", "start=kappa1=-1,kappa2=-1",
                   "--max-points", 20, "--chains", 2, "--out", out, "--info", "null")
        assert code == EXIT_OK
        res = ScanResult.from_jsonl((tmp_path / "scan.jsonl").read_text())
        assert len(res.accepted()) == 20
        summary = json.loads((tmp_path / "scan_summary.json").read_text())
        assert summary["status"] == "OK" and summary["min_criterion"] <= summary["zero_threshold"]
        assert set(summary["projections"]) == set(res.names)

    def test_empty_set_exit_code(self, tmp_path, capsys):
        bins = tmp_path / "bce.csv"
        run("simulate", "--out", bins, "--grid-n", 6, "--set", "dgp_concept=bce",
            "--set", "selection=random", "--set", "selection_seed=1")
        code = run("scan", "--set", f"bins={bins}", "--population", "--grid-n", 6,
                   "--set", "free=kappa1,kappa2", "--out", tmp_path / "e")
        assert code == EXIT_EMPTY
        assert capsys.readouterr().out.splitlines()[-1].startswith("EMPTY: minimum criterion")
        summary = json.loads((tmp_path / "e_summary.json").read_text())
        assert summary["status"] == "EMPTY" and summary["min_criterion"] > summary["zero_threshold"]
        assert not (tmp_path / "e.jsonl").exists()

    def test_missing_bins_file(self, tmp_path):
        assert run("scan", "--set", f"bins={tmp_path / 'nope.csv'}") == EXIT_ERROR


class TestCounterfactualAndCoverage:
    def test_counterfactual(self, tmp_path, population_bins):
        out = tmp_path / "scan"
        run("scan", "--set", f"bins={population_bins}", "--population", "--grid-n", 4,
            "--set", "free=kappa1,kappa2", "--set", "start=kappa1=-1,kappa2=-1", "--max-points", 6,
            "--out", out)
        bounds = tmp_path / "b.csv"
        code = run("counterfactual", "--set", f"scan={out}.jsonl", "--set", f"bins_pre={population_bins}",
                   "--set", "post_shift=const=2", "--grid-n", 4, "--out", bounds)
        assert code == EXIT_OK
        rows = [ln.split(",") for ln in bounds.read_text().splitlines() if not ln.startswith("#")]
        assert rows[0] == ["objective", "data", "pre_lo", "pre_hi", "post_lo", "post_hi"]
        assert [r[0] for r in rows[1:]] == ["num_entrants", "firm1_entry", "firm2_entry", "no_entry"]
        for r in rows[1:]:
            lo, hi = float(r[2]), float(r[3])
            assert lo <= float(r[1]) + 1e-6 and float(r[1]) <= hi + 1e-6

    def test_coverage(self, tmp_path):
        out = tmp_path / "cov.csv"
        code = run("coverage", "--set", "bins_list=2", "--set", "n_list=100", "--set", "alpha_list=0.05",
                   "--set", "trials=2000", "--out", out)
        assert code == EXIT_OK
        body = [ln for ln in out.read_text().splitlines() if not ln.startswith("#")]
        assert body[0] == "alpha=0.05,n=100"
        assert 0.9 < float(body[1].split(",")[1]) <= 1.0


def test_console_entry_point(tmp_path):
    out = tmp_path / "p.csv"
    proc = subprocess.run([sys.executable, "-m", "stablegames.cli", "simulate", "--grid-n", "2", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
