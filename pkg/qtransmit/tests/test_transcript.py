"""Tests for the JSON Lines transcript codec and the audits."""

import pytest

from qtransmit.core.errors import AuditError
from qtransmit.core.rng import make_rng
from qtransmit.models.protocol import (
    ChannelKind,
    LegConfig,
    Lifecycle,
    ProtocolConfig,
    StrategyInput,
    TranscriptRecord,
    VerifyMode,
)
from qtransmit.models.quantum import PureState, WeylIndex
from qtransmit.models.spacetime import Branch, Event, GeometryConfig
from qtransmit.services.adversary import HonestStrategy
from qtransmit.services.protocol import run_protocol
from qtransmit.services.transcript import (
    audit_file,
    audit_linearity,
    audit_taint,
    payload_digest,
    read_transcripts,
    transcript_lines,
    write_transcripts,
)
from qtransmit.tests.test_protocol import LateRouteStrategy

ORIGIN = Event(t=0.0, x=0.0)


def _config(**overrides):
    geometry = GeometryConfig(
        p=ORIGIN,
        branches=[
            Branch(p_prime=Event(t=1.0, x=-1.0), q=Event(t=10.0, x=-10.0)),
            Branch(p_prime=Event(t=1.0, x=1.0), q=Event(t=10.0, x=10.0)),
        ],
    )
    base = dict(d=2, n=5, epsilon=0.1, geometry=geometry, seed=1)
    base.update(overrides)
    return ProtocolConfig(**base)


def _bare_record(**fields):
    return TranscriptRecord(strategy="test", verify_mode=VerifyMode.DIRECT, d=2, commit_event=ORIGIN, **fields)


def test_payload_digest():
    assert payload_digest(None) == ""
    a = payload_digest(WeylIndex(dim=2, a=1, b=0))
    assert a == payload_digest(WeylIndex(dim=2, a=1, b=0))
    assert a != payload_digest(WeylIndex(dim=2, a=0, b=1))
    assert len(payload_digest(PureState.basis(2, 0))) == 16


def test_transcript_lines_start_with_a_header():
    record = run_protocol(_config(), HonestStrategy(), make_rng(0))
    lines = list(transcript_lines(record, run=7))
    assert '"kind": "run"' in lines[0]
    assert all('"run": 7' in line for line in lines)
    assert len(lines) == 1 + len(record.messages) + len(record.measurements) + len(record.lifecycle) + len(
        record.strategy_inputs)


def test_write_and_read_back(tmp_path):
    records = [run_protocol(_config(), HonestStrategy(j), make_rng(j)) for j in range(2)]
    path = tmp_path / "runs.jsonl"
    assert write_transcripts(records, path) == 2
    back = read_transcripts(path)
    assert len(back) == 2
    for orig, got in zip(records, back):
        assert got.strategy == orig.strategy
        assert got.branch_choice == orig.branch_choice
        assert len(got.messages) == len(orig.messages)
        assert got.verdicts == orig.verdicts
        assert {m.payload_digest for m in got.messages} == {m.payload_digest for m in orig.messages}
    assert audit_file(path) == []


def test_audit_file_flags_superluminal_routes(tmp_path):
    cfg = _config(quantum_leg=LegConfig(channel=ChannelKind.TELEPORT_PREDISTRIBUTED))
    record = run_protocol(cfg, LateRouteStrategy(0), make_rng(1))
    path = tmp_path / "bad.jsonl"
    write_transcripts([record], path)
    violations = audit_file(path)
    assert violations
    assert any(v.startswith("run 0: causality") for v in violations)


def test_malformed_transcripts_raise(tmp_path):
    path = tmp_path / "broken.jsonl"
    path.write_text('{"kind": "run", "run": 0\n')
    with pytest.raises(AuditError):
        read_transcripts(path)
    orphan = tmp_path / "orphan.jsonl"
    orphan.write_text('{"kind": "input", "run": 3, "handle": "psi0", "round": 0}\n')
    with pytest.raises(AuditError) as exc:
        read_transcripts(orphan)
    assert exc.value.violations == ["run 3"]
    unknown = tmp_path / "unknown.jsonl"
    unknown.write_text('{"kind": "teleportation", "run": 0}\n')
    with pytest.raises(AuditError):
        read_transcripts(unknown)


def test_linearity_audit_catches_reuse_and_ghosts():
    record = _bare_record(lifecycle=[
        Lifecycle(op="create", at=ORIGIN, children=("a",)),
        Lifecycle(op="measure", at=ORIGIN, parents=("a",)),
        Lifecycle(op="measure", at=ORIGIN, parents=("a",)),
        Lifecycle(op="route", at=ORIGIN, parents=("ghost",)),
        Lifecycle(op="create", at=ORIGIN, children=("b", "b")),
    ])
    found = audit_linearity(record)
    assert "linearity: handle a consumed 2 times" in found
    assert "linearity: handle ghost consumed but never created" in found
    assert "linearity: handle b created 2 times" in found


def test_taint_audit():
    record = _bare_record(strategy_inputs=[
        StrategyInput(handle="psi0", round=0),
        StrategyInput(handle="psi1", round=1, visible_to_adversary=True, alice_region=False),
        StrategyInput(handle="psi2", round=2, alice_region=False),
    ])
    found = audit_taint(record)
    assert len(found) == 1
    assert "psi2" in found[0]


def test_linearity_audit_only_lets_channels_split_an_input():
    record = _bare_record(lifecycle=[
        Lifecycle(op="create", at=ORIGIN, children=("psi0",)),
        Lifecycle(op="create", at=ORIGIN, children=("psi1",)),
        Lifecycle(op="route", at=ORIGIN, parents=("psi0",), children=("q0.0", "q0.1")),
        Lifecycle(op="cptp:cloner", at=ORIGIN, parents=("psi1",), children=("q1.0", "q1.1")),
        Lifecycle(op="create", at=ORIGIN, children=("q2.1",)),
    ])
    found = audit_linearity(record)
    assert found == ["linearity: op 'route' copies psi0 into 2 genuine outputs (q0.0, q0.1)"]
