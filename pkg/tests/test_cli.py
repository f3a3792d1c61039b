"""Tests for the command-line interface."""

import json

import numpy as np
import pytest

import prefrank.cli as cli
from prefrank.harness import import_results
from prefrank.ingest import load_gold, load_pool, load_priors


@pytest.fixture()
def data_files(tmp_path):
    """A small synthetic pool written to disk via the synth subcommand."""
    prefix = tmp_path / "demo"
    code = cli.main(["synth", "--n", "15", "--d", "3", "--seed", "7", "--rho", "0.5",
                     "--out-prefix", str(prefix)])
    assert code == 0
    return {
        "pool": str(prefix) + ".pool.jsonl",
        "gold": str(prefix) + ".gold.jsonl",
        "priors": str(prefix) + ".priors.jsonl",
    }


class TestSynth:
    def test_outputs_load_back(self, data_files):
        pool = load_pool(data_files["pool"])
        assert pool.size == 15
        gold = load_gold(data_files["gold"], pool)
        priors = load_priors(data_files["priors"], pool)
        assert np.corrcoef(priors.mu, gold.scores)[0, 1] == pytest.approx(0.5, abs=1e-10)

    def test_no_priors_without_rho(self, tmp_path):
        prefix = tmp_path / "plain"
        assert cli.main(["synth", "--n", "5", "--d", "2", "--out-prefix", str(prefix)]) == 0
        assert not (tmp_path / "plain.priors.jsonl").exists()

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        cli.main(["synth", "--n", "8", "--d", "2", "--seed", "3", "--out-prefix", str(a)])
        cli.main(["synth", "--n", "8", "--d", "2", "--seed", "3", "--out-prefix", str(b)])
        assert (tmp_path / "a.pool.jsonl").read_bytes() == (tmp_path / "b.pool.jsonl").read_bytes()

    def test_bad_params_exit_nonzero(self, tmp_path, capsys):
        code = cli.main(["synth", "--n", "1", "--d", "2", "--out-prefix", str(tmp_path / "x")])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestRun:
    def test_full_session_exports_trace(self, data_files, tmp_path, capsys):
        out = tmp_path / "results.csv"
        code = cli.main([
            "run", "--pool", data_files["pool"], "--gold", data_files["gold"],
            "--learner", "gppl", "--strategy", "imp", "--interactions", "4",
            "--seed", "2", "--out", str(out),
        ])
        assert code == 0
        rows = import_results(out, format="csv")
        assert [r.iteration for r in rows] == [0, 1, 2, 3, 4]
        assert rows[-1].labels_seen == 4
        captured = capsys.readouterr().out
        assert "final:" in captured and "ndcg@5=" in captured

    def test_warm_start_uses_priors(self, data_files, tmp_path):
        out = tmp_path / "warm.jsonl"
        code = cli.main([
            "run", "--pool", data_files["pool"], "--gold", data_files["gold"],
            "--priors", data_files["priors"], "--learner", "gppl", "--strategy", "imp",
            "--warm-start", "prior", "--interactions", "2", "--out", str(out),
            "--format", "jsonl",
        ])
        assert code == 0
        rows = import_results(out, format="jsonl")
        assert all(r.warm_start == "prior" for r in rows)

    def test_missing_priors_for_warm_start_fails(self, data_files, tmp_path, capsys):
        code = cli.main([
            "run", "--pool", data_files["pool"], "--gold", data_files["gold"],
            "--learner", "gppl", "--strategy", "imp", "--warm-start", "prior",
            "--interactions", "2", "--out", str(tmp_path / "x.csv"),
        ])
        assert code == 1
        assert "prior predictions" in capsys.readouterr().err

    def test_missing_file_fails_cleanly(self, tmp_path, capsys):
        code = cli.main([
            "run", "--pool", str(tmp_path / "nope.jsonl"), "--gold", str(tmp_path / "nope.jsonl"),
            "--learner", "bt", "--strategy", "unc", "--out", str(tmp_path / "x.csv"),
        ])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestGrid:
    def test_sweep_writes_summaries_and_rows(self, data_files, tmp_path, capsys):
        config = tmp_path / "grid.jsonl"
        config.write_text(
            json.dumps({"learner": "gppl", "strategy": "imp", "max_interactions": 2}) + "\n"
            + json.dumps({"learner": "gppl", "strategy": "random", "max_interactions": 2}) + "\n"
        )
        out = tmp_path / "grid.csv"
        code = cli.main([
            "grid", "--config", str(config), "--pool", data_files["pool"],
            "--gold", data_files["gold"], "--repeats", "2", "--out", str(out),
        ])
        assert code == 0
        rows = import_results(out, format="csv")
        # one deterministic run plus two stochastic repeats, three rows each
        assert len(rows) == 9
        printed = capsys.readouterr().out
        assert "imp" in printed and "random" in printed

    def test_unknown_config_key_rejected(self, data_files, tmp_path, capsys):
        config = tmp_path / "grid.jsonl"
        config.write_text(json.dumps({"learner": "gppl", "strategy": "imp", "budget": 4}) + "\n")
        code = cli.main([
            "grid", "--config", str(config), "--pool", data_files["pool"],
            "--gold", data_files["gold"],
        ])
        assert code == 1
        assert "unknown config keys" in capsys.readouterr().err

    def test_empty_config_rejected(self, data_files, tmp_path, capsys):
        config = tmp_path / "grid.jsonl"
        config.write_text("\n")
        code = cli.main([
            "grid", "--config", str(config), "--pool", data_files["pool"],
            "--gold", data_files["gold"],
        ])
        assert code == 1

    def test_malformed_json_names_line(self, data_files, tmp_path, capsys):
        config = tmp_path / "grid.jsonl"
        config.write_text('{"learner": "gppl"\n')
        code = cli.main([
            "grid", "--config", str(config), "--pool", data_files["pool"],
            "--gold", data_files["gold"],
        ])
        assert code == 1
        assert "line 1" in capsys.readouterr().err


class TestServe:
    def test_wires_app_and_registry(self, data_files, monkeypatch):
        import uvicorn

        captured = {}

        def fake_run(app, host, port):
            captured["app"] = app
            captured["host"] = host
            captured["port"] = port

        monkeypatch.setattr(uvicorn, "run", fake_run)
        code = cli.main(["serve", "--port", "9001", "--pool", data_files["pool"]])
        assert code == 0
        assert captured["port"] == 9001
        assert captured["host"] == "127.0.0.1"
        assert "demo.pool" in captured["app"].state.service.pools

    def test_usage_error_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["run", "--pool", "x"])
        assert exc.value.code == 2
