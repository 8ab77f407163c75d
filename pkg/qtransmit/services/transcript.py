"""Transcript persistence (JSON Lines) and the causality, linearity and taint audits."""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Union

from pydantic import BaseModel

from qtransmit.core.errors import AuditError
from qtransmit.core.logs import get_logger
from qtransmit.models.protocol import (
    Lifecycle,
    Measurement,
    Message,
    StrategyInput,
    TranscriptRecord,
)
from qtransmit.models.quantum import DensityMatrix, PureState, WeylIndex
from qtransmit.services.spacetime import causal_reachable

LOG = get_logger("transcript")


def payload_digest(payload) -> str:
    """Short sha256 of a payload; empty for no payload."""
    if payload is None:
        return ""
    if isinstance(payload, DensityMatrix):
        raw = payload.mat.tobytes()
    elif isinstance(payload, PureState):
        raw = payload.amps.tobytes()
    elif isinstance(payload, WeylIndex):
        raw = f"weyl:{payload.dim}:{payload.flat}".encode()
    else:
        raw = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(raw).hexdigest()[:16]


# ---------- JSON Lines codec

_KINDS = {
    "message": ("messages", Message),
    "measurement": ("measurements", Measurement),
    "lifecycle": ("lifecycle", Lifecycle),
    "input": ("strategy_inputs", StrategyInput),
}


def _line(kind: str, run: int, model: BaseModel) -> str:
    body = model.model_dump(mode="json")
    return json.dumps({"kind": kind, "run": run, **body}, sort_keys=True)


def transcript_lines(record: TranscriptRecord, run: int = 0) -> Iterator[str]:
    """Header line first, then one line per event in causal order."""
    header = record.model_dump(mode="json", exclude={"messages", "measurements", "lifecycle", "strategy_inputs"})
    yield json.dumps({"kind": "run", "run": run, **header}, sort_keys=True)
    for kind, (field, _) in _KINDS.items():
        items = getattr(record, field)
        if kind == "message":
            items = sorted(items, key=lambda m: (m.deliver.t, m.seq))
        for item in items:
            yield _line(kind, run, item)


def write_transcripts(records: Iterable[TranscriptRecord], path: Union[str, Path], start: int = 0) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        for i, record in enumerate(records, start=start):
            for line in transcript_lines(record, i):
                fh.write(line + "\n")
            count += 1
    LOG.info("[transcript] wrote %d run(s) to %s", count, path)
    return count


def read_transcripts(path: Union[str, Path]) -> List[TranscriptRecord]:
    """Parse a JSON Lines transcript back into records (payloads are not stored)."""
    headers: dict = {}
    parts: dict = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
                kind = obj.pop("kind")
                run = obj.pop("run")
            except (json.JSONDecodeError, KeyError) as e:
                raise AuditError(f"{path}:{lineno}: malformed transcript line", [str(e)]) from e
            if kind == "run":
                headers[run] = obj
                parts.setdefault(run, {field: [] for field, _ in _KINDS.values()})
            elif kind in _KINDS:
                field, model = _KINDS[kind]
                parts.setdefault(run, {f: [] for f, _ in _KINDS.values()})[field].append(model.model_validate(obj))
            else:
                raise AuditError(f"{path}:{lineno}: unknown record kind {kind!r}")
    missing = sorted(set(parts) - set(headers))
    if missing:
        raise AuditError(f"{path}: events for runs without a header", [f"run {r}" for r in missing])
    return [TranscriptRecord.model_validate({**headers[r], **parts[r]}) for r in sorted(headers)]


# ---------- audits


def audit_causality(record: TranscriptRecord, tau_geo: Optional[float] = None) -> List[str]:
    out = []
    for m in record.messages:
        ok = causal_reachable(m.emit, m.deliver, m.speed_limit, tau_geo)
        if m.violation or not ok:
            out.append(
                f"causality: message {m.seq} ({m.purpose}, round {m.round}, branch {m.branch}) "
                f"from t={m.emit.t:.6g} x={list(m.emit.x)} to t={m.deliver.t:.6g} x={list(m.deliver.x)} "
                f"exceeds speed {m.speed_limit}"
            )
    return out


def audit_linearity(record: TranscriptRecord) -> List[str]:
    """Every handle is created once and consumed at most once, and only after creation.

    Splitting one input into several genuine outputs is only allowed for ops
    tagged `cptp:`; dummies are fresh `create` events.
    """
    out = []
    created = Counter(h for entry in record.lifecycle for h in entry.children)
    consumed = Counter(h for entry in record.lifecycle for h in entry.parents)
    for h, n in created.items():
        if n > 1:
            out.append(f"linearity: handle {h} created {n} times")
    for h, n in consumed.items():
        if n > 1:
            out.append(f"linearity: handle {h} consumed {n} times")
        if h not in created:
            out.append(f"linearity: handle {h} consumed but never created")
    # only an explicit channel may turn one input into several genuine outputs
    for entry in record.lifecycle:
        if entry.parents and len(entry.children) > 1 and not entry.op.startswith("cptp:"):
            out.append(
                f"linearity: op {entry.op!r} copies {', '.join(entry.parents)} "
                f"into {len(entry.children)} genuine outputs ({', '.join(entry.children)})"
            )
    return out


def audit_taint(record: TranscriptRecord) -> List[str]:
    """Strategies may only read what Bob exposed or what sits in Alice's own labs."""
    return [
        f"taint: strategy read handle {s.handle} (round {s.round}) outside Alice's regions"
        for s in record.strategy_inputs
        if not (s.visible_to_adversary or s.alice_region)
    ]


def audit_record(record: TranscriptRecord, tau_geo: Optional[float] = None) -> List[str]:
    return audit_causality(record, tau_geo) + audit_linearity(record) + audit_taint(record)


def audit_file(path: Union[str, Path], tau_geo: Optional[float] = None) -> List[str]:
    violations = []
    for i, record in enumerate(read_transcripts(path)):
        violations.extend(f"run {i}: {v}" for v in audit_record(record, tau_geo))
    return violations
