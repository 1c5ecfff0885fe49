"""Tests for the hsp command-line surface."""

from __future__ import annotations

import json
import sys

import pytest

from hsp_commands.dispatcher import EXIT_FAILURE, EXIT_NOTHING_TO_DO, VERSION, error_json, main
from hsp_lib.errors import ConfigError, TraceParseError


def _error(capsys) -> dict:
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


class TestParser:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc_info:
            main(["--version"])
        assert exc_info.value.code == 0
        assert capsys.readouterr().out.strip() == f"hsp {VERSION}"

    def test_no_command_prints_help(self, capsys):
        assert main([]) == 0
        assert "usage: hsp" in capsys.readouterr().out

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc_info:
            main(["frobnicate"])
        assert exc_info.value.code == 2


class TestErrorJson:
    def test_config_error(self):
        doc = json.loads(error_json(ConfigError("must be >= 0", "reward.eviction-penalty")))
        assert doc["error"] == "ConfigError"
        assert doc["field"] == "reward.eviction-penalty"
        assert doc["line"] is None

    def test_trace_parse_error(self):
        doc = json.loads(error_json(TraceParseError(7, "bad", "hm_0.csv")))
        assert doc["line"] == 7
        assert doc["source"] == "hm_0.csv"
        assert doc["message"] == "hm_0.csv:7: bad"


class TestValidate:
    def test_ok(self, hm_config, capsys):
        assert main(["validate", str(hm_config)]) == 0
        assert capsys.readouterr().out.startswith("ok: ")

    def test_bad_version(self, tmp_path, capsys):
        cfg = tmp_path / "bad.kdl"
        cfg.write_text('version 2\ntrace "t" { bundled "hotcold"; }\ndevices "H&M"\npolicy "cde"\n')
        assert main(["validate", str(cfg)]) == EXIT_FAILURE
        err = _error(capsys)
        assert err["error"] == "ConfigError"
        assert err["field"] == "version"

    def test_missing_file(self, tmp_path, capsys):
        assert main(["validate", str(tmp_path / "nope.kdl")]) == EXIT_FAILURE
        assert _error(capsys)["error"] == "ConfigError"

    def test_default_config_location(self, hm_config, tmp_path, monkeypatch, capsys):
        monkeypatch.setattr(sys, "platform", "linux")
        monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path))
        default = tmp_path / "hsp" / "hsp.kdl"
        default.parent.mkdir()
        default.write_text(hm_config.read_text())
        assert main(["validate"]) == 0
        assert capsys.readouterr().out.startswith("ok: ")

    def test_missing_default_config(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setattr(sys, "platform", "linux")
        monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path))
        assert main(["validate"]) == EXIT_FAILURE
        assert _error(capsys)["error"] == "ConfigError"

    def test_config_not_utf8(self, tmp_path, capsys):
        cfg = tmp_path / "latin1.kdl"
        cfg.write_bytes(b"version 1\n// caf\xe9\n")
        assert main(["validate", str(cfg)]) == EXIT_FAILURE
        assert _error(capsys)["error"] == "ConfigError"


class TestStats:
    def test_json(self, msrc_fixture, capsys):
        assert main(["stats", str(msrc_fixture), "--json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["n_requests"] == 6
        assert doc["unique_pages"] == 8
        assert doc["is_write_intensive"] is False

    def test_table(self, msrc_fixture, capsys):
        assert main(["stats", str(msrc_fixture)]) == 0
        out = capsys.readouterr().out
        assert "unique pages" in out
        assert "read-intensive" in out

    def test_unknown_name(self, capsys):
        assert main(["stats", "no-such-workload"]) == EXIT_NOTHING_TO_DO
        assert _error(capsys)["error"] == "NothingToDoError"

    def test_empty_file(self, tmp_path, capsys):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        assert main(["stats", str(empty)]) == EXIT_NOTHING_TO_DO

    def test_malformed_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("128166372000000000,hm,0,Read,0,4096,10\nnot a trace line\n")
        assert main(["stats", str(bad)]) == EXIT_FAILURE
        err = _error(capsys)
        assert err["error"] == "TraceParseError"
        assert err["line"] == 2

    def test_invalid_utf8(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_bytes(b"\xff\xfe128166372000000000,hm,0,Read,0,4096,10\n")
        assert main(["stats", str(bad)]) == EXIT_FAILURE
        err = _error(capsys)
        assert err["error"] == "TraceParseError"
        assert err["line"] == 1


class TestProfiles:
    def test_json(self, capsys):
        assert main(["profiles", "--json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert set(doc["presets"]) >= {"H", "M", "L"}
        assert doc["configurations"]["H&M"] == ["H", "M"]

    def test_table(self, capsys):
        assert main(["profiles"]) == 0
        assert "H&M&L" in capsys.readouterr().out


class TestRun:
    def test_run_writes_reports(self, hm_config, output_root, capsys):
        assert main(["run", str(hm_config)]) == 0
        captured = capsys.readouterr()
        assert "cde" in captured.out
        assert "# phase: wrote 2 files" in captured.err
        assert len(list(output_root.glob("*/results.csv"))) == 1

    def test_policy_override(self, hm_config, output_root, capsys):
        assert main(["run", str(hm_config), "--policy", "slow-only"]) == 0
        assert "slow-only" in capsys.readouterr().out

    def test_unknown_policy_override(self, hm_config, output_root, capsys):
        assert main(["run", str(hm_config), "--policy", "lru"]) == EXIT_FAILURE
        assert _error(capsys)["field"] == "policy"


class TestSweep:
    def test_seed_grid(self, hm_config, output_root, tmp_path, capsys):
        grid = tmp_path / "grid.kdl"
        grid.write_text("grid {\n    seed 1 2\n}\n")
        assert main(["sweep", str(hm_config), str(grid), "--jobs", "2"]) == 0
        rows = next(output_root.glob("sweep-*/results.csv")).read_text().splitlines()
        assert len(rows) == 3

    def test_empty_grid(self, hm_config, output_root, tmp_path, capsys):
        grid = tmp_path / "grid.kdl"
        grid.write_text("grid\n")
        assert main(["sweep", str(hm_config), str(grid)]) == EXIT_NOTHING_TO_DO
        assert _error(capsys)["field"] == "grid"
