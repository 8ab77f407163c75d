"""Tests for the command-line verbs and their exit codes."""

import json
from unittest.mock import patch

import pytest

import main as cli
from qtransmit.core.errors import SamplingBudgetError
from qtransmit.core.rng import make_rng
from qtransmit.data.specs import spec_path
from qtransmit.models.protocol import ChannelKind, LegConfig
from qtransmit.services.protocol import run_protocol
from qtransmit.services.transcript import write_transcripts
from qtransmit.tests.test_protocol import LateRouteStrategy, _config


def test_validate_bundled_name(capsys):
    assert cli.main(["validate", "honest_d2"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "geometry ok" in out
    assert "branch 1: latest choice" in out
    assert "committed bits: 1.000" in out


def test_validate_by_path():
    assert cli.main(["validate", spec_path("split_demo")]) == cli.EXIT_OK


def test_invalid_geometry_exits_2():
    assert cli.main(["validate", "invalid_geometry"]) == cli.EXIT_CONFIG


def test_missing_and_malformed_specs_exit_2(tmp_path):
    assert cli.main(["run", str(tmp_path / "nope.toml")]) == cli.EXIT_CONFIG
    bad = tmp_path / "bad.toml"
    bad.write_text("[protocol]\nd = 1\n")
    assert cli.main(["run", str(bad)]) == cli.EXIT_CONFIG


def test_bad_arguments_exit_via_argparse():
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "honest_d2", "--trials", "0"])
    assert exc.value.code == 2


def test_run_writes_results_and_transcript(tmp_path, capsys):
    out, trans = tmp_path / "r.json", tmp_path / "t.jsonl"
    code = cli.main(["run", "honest_d2", "--trials", "3", "--out", str(out),
                     "--transcript", str(trans), "--transcript-runs", "3"])
    assert code == cli.EXIT_OK
    printed = capsys.readouterr().out
    assert "site 1: accept 1.0000" in printed
    assert "site 2: accept 0.0000" in printed
    doc = json.loads(out.read_text())
    assert doc["runs"] == 3
    assert doc["spec"]["trials"] == 3
    assert cli.main(["audit", str(trans)]) == cli.EXIT_OK
    assert "transcript clean" in capsys.readouterr().out


def test_sweep_unknown_axis_exits_2():
    assert cli.main(["sweep", "split_demo", "--axis", "protocol.colour", "--values", "1,2"]) == cli.EXIT_CONFIG


def test_sweep_prints_and_saves_table(tmp_path, capsys):
    table = tmp_path / "t.csv"
    code = cli.main(["sweep", "split_demo", "--axis", "tolerated_loss", "--values", "0.6",
                     "--out", str(table)])
    assert code == cli.EXIT_OK
    assert "tolerated_loss" in capsys.readouterr().out
    assert table.exists()


def test_audit_of_miswired_transcript_exits_4(tmp_path, capsys):
    cfg = _config(quantum_leg=LegConfig(channel=ChannelKind.TELEPORT_PREDISTRIBUTED), n=5)
    path = tmp_path / "bad.jsonl"
    write_transcripts([run_protocol(cfg, LateRouteStrategy(0), make_rng(14))], path)
    assert cli.main(["audit", str(path)]) == cli.EXIT_AUDIT
    assert "VIOLATION run 0: causality" in capsys.readouterr().out


def test_audit_of_malformed_transcript_exits_4(tmp_path):
    path = tmp_path / "junk.jsonl"
    path.write_text("not json\n")
    assert cli.main(["audit", str(path)]) == cli.EXIT_AUDIT


def test_runtime_errors_exit_3():
    with patch.object(cli, "run_experiment", side_effect=SamplingBudgetError("acceptance below floor")):
        assert cli.main(["run", "honest_d2", "--trials", "1"]) == cli.EXIT_RUNTIME
    with patch.object(cli, "validate", side_effect=RuntimeError("boom")):
        assert cli.main(["validate", "honest_d2"]) == cli.EXIT_RUNTIME
