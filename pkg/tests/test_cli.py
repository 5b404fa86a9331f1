"""End-to-end tests for the command-line entry point."""
from __future__ import annotations

import json

import numpy as np
import pytest

from src.artifacts import read_density_csv, read_eigs_csv
from src.cli import EXIT_CONFIG, EXIT_OK, EXIT_RANGE, main
from src.config import PROJECT_ROOT

RUNS = PROJECT_ROOT / "config" / "runs"
ZERO = str(RUNS / "zero_estimator.json")
MP = str(RUNS / "marchenko_pastur.json")


@pytest.fixture
def run(tmp_path):
    logs = tmp_path / "logs"

    def _run(*argv: str) -> int:
        return main(["--logs-dir", str(logs), *argv])

    _run.logs = logs
    return _run


class TestSolve:
    """Tests for `solve`."""

    def test_zero_estimator_is_cauchy_kernel(self, run, tmp_path):
        """B = 0 gives the smoothed point mass at zero."""
        out = tmp_path / "zero.csv"
        assert run("solve", ZERO, "--grid", "-1", "1", "5", "--eps", "1e-3", "--out", str(out)) == EXIT_OK
        density = read_density_csv(out)
        eps = 1e-3
        np.testing.assert_allclose(density.values, eps / (np.pi * (density.grid**2 + eps**2)), rtol=1e-12)
        manifest = json.loads((tmp_path / "zero.csv.manifest.json").read_text())
        assert manifest["command"] == "solve"
        assert manifest["convergence"]["failed"] == 0

    def test_missing_config(self, run, tmp_path):
        """A config that does not exist is a configuration error."""
        assert run("solve", str(tmp_path / "nope.json")) == EXIT_CONFIG

    def test_invalid_config(self, run, tmp_path):
        """Unknown design kinds are rejected before any solve."""
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"design": {"kind": "latin_square"}, "sigmas": [{"identity": 2}]}))
        assert run("solve", str(bad)) == EXIT_CONFIG


class TestSimulate:
    """Tests for `simulate`."""

    def test_same_seed_same_bytes(self, run, tmp_path):
        """Fixed seed and replicate count reproduce identical files."""
        for name in ("a", "b"):
            assert run("simulate", MP, "--seed", "5", "--reps", "2", "--out", str(tmp_path / name)) == EXIT_OK
        for rep in ("eigs_rep0000.csv", "eigs_rep0001.csv"):
            assert (tmp_path / "a" / rep).read_bytes() == (tmp_path / "b" / rep).read_bytes()
        assert (tmp_path / "a" / "eigs_rep0000.csv").read_bytes() != (tmp_path / "a" / "eigs_rep0001.csv").read_bytes()

    def test_zero_estimator_spectrum(self, run, tmp_path):
        """B = 0 leaves every eigenvalue at zero."""
        assert run("simulate", ZERO, "--out", str(tmp_path / "eigs")) == EXIT_OK
        spectrum = read_eigs_csv(tmp_path / "eigs" / "eigs_rep0000.csv")
        np.testing.assert_array_equal(spectrum.eigenvalues, [0.0, 0.0])

    def test_bad_replicate_count(self, run, tmp_path):
        """At least one replicate."""
        assert run("simulate", ZERO, "--reps", "0", "--out", str(tmp_path / "eigs")) == EXIT_CONFIG


class TestCompare:
    """Tests for `compare`."""

    @pytest.fixture
    def artifacts(self, run, tmp_path):
        density = tmp_path / "mp.csv"
        assert run("solve", MP, "--grid", "0", "3", "601", "--eps", "1e-3", "--out", str(density)) == EXIT_OK
        assert run("simulate", MP, "--out", str(tmp_path / "eigs")) == EXIT_OK
        return density, tmp_path / "eigs" / "eigs_rep0000.csv"

    def test_report_is_reproducible(self, run, tmp_path, artifacts):
        """Two compares of the same inputs write byte-identical reports."""
        density, eigs = artifacts
        for name in ("r1.json", "r2.json"):
            assert run("compare", "--density", str(density), "--eigs", str(eigs), "--out", str(tmp_path / name)) == EXIT_OK
        assert (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()
        report = json.loads((tmp_path / "r1.json").read_text())
        assert report["passed"]
        assert report["ks"] < 0.05

    def test_range_mismatch(self, run, tmp_path, artifacts):
        """A density grid away from every eigenvalue exits with the range code."""
        _, eigs = artifacts
        far = tmp_path / "far.csv"
        assert run("solve", MP, "--grid", "10", "11", "11", "--out", str(far)) == EXIT_OK
        assert run("compare", "--density", str(far), "--eigs", str(eigs), "--out", str(tmp_path / "r.json")) == EXIT_RANGE

    @pytest.mark.parametrize("row", ["1.0,abc", "1.0,-0.5"], ids=["text", "negative"])
    def test_malformed_density(self, run, tmp_path, artifacts, row):
        """A density file that does not parse exits with the config code."""
        _, eigs = artifacts
        bad = tmp_path / "bad.csv"
        bad.write_text(f"x,f\n0.0,1.0\n{row}\n")
        assert run("compare", "--density", str(bad), "--eigs", str(eigs), "--out", str(tmp_path / "r.json")) == EXIT_CONFIG
        assert not (tmp_path / "r.json").exists()

    def test_malformed_eigenvalues(self, run, tmp_path, artifacts):
        """Same for a text cell in the eigenvalue file."""
        density, _ = artifacts
        bad = tmp_path / "eigs.csv"
        bad.write_text("rep,index,eigenvalue\n0,0,0.5\n0,1,abc\n")
        assert run("compare", "--density", str(density), "--eigs", str(bad), "--out", str(tmp_path / "r.json")) == EXIT_CONFIG


class TestCheck:
    """Tests for `check` and the event log."""

    def test_zero_estimator_passes(self, run, tmp_path):
        """The point-mass model satisfies every invariant."""
        out = tmp_path / "check.json"
        assert run("check", ZERO, "--samples", "3", "--out", str(out)) == EXIT_OK
        assert json.loads(out.read_text())["passed"] is True

    def test_events_logged(self, run, tmp_path):
        """Each invocation appends one JSON line with its exit code."""
        run("check", ZERO, "--samples", "1", "--out", str(tmp_path / "check.json"))
        run("solve", str(tmp_path / "missing.json"))
        lines = (run.logs / "events.jsonl").read_text().splitlines()
        events = [json.loads(line) for line in lines]
        assert [e["command"] for e in events] == ["check", "solve"]
        assert [e["exit_code"] for e in events] == [EXIT_OK, EXIT_CONFIG]
        assert all(e["event_id"] for e in events)
