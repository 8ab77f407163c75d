"""Experiment runner: spec ingestion, Monte Carlo fan-out, aggregation, sweeps."""

from __future__ import annotations

import copy
import math
import sys
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import pandas as pd
from pydantic import ValidationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from qtransmit.core.config import get_settings
from qtransmit.core.errors import ArgumentError, ConfigError, UnsupportedStrategyError
from qtransmit.core.logs import get_logger
from qtransmit.core.rng import make_rng, run_rng
from qtransmit.models.experiment import (
    Bounds,
    ExperimentSpec,
    ResultsDocument,
    RunSummary,
    SpecCheck,
)
from qtransmit.models.protocol import Verdict, VerifyMode
from qtransmit.models.spacetime import SPEED_OF_LIGHT_M_S
from qtransmit.models.stats import McEstimate
from qtransmit.services.adversary import build_strategy
from qtransmit.services.protocol import (
    azuma_bound,
    cloning_bound,
    loss_tolerance,
    run_protocol,
)
from qtransmit.services.spacetime import commitment_report, committed_bits, validate_geometry
from qtransmit.services.stats import wilson, within_bound
from qtransmit.services.transcript import audit_file, audit_record, transcript_lines

LOG = get_logger("experiment")

# shorthand sweep axes
AXIS_SHORTCUTS = {
    "d": "protocol.d",
    "n": "protocol.n",
    "m": "protocol.m",
    "epsilon": "protocol.epsilon",
    "tolerated_loss": "protocol.tolerated_loss",
    "loss_prob": "protocol.quantum_leg.loss.loss_prob",
    "depolarize_prob": "protocol.quantum_leg.loss.depolarize_prob",
    "fraction": "strategy.params.fraction",
    "trials": "trials",
}

MAX_REPORTED_VIOLATIONS = 50

SpecLike = Union[ExperimentSpec, str, Path]


# ---------- loading


def _diagnostics(e: ValidationError) -> List[str]:
    return [f"{'.'.join(str(x) for x in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()]


def _si_event(ev: Any) -> Any:
    if not isinstance(ev, dict) or "x" not in ev:
        return ev
    x = ev["x"]
    xs = [x] if isinstance(x, (int, float)) else list(x)
    return {**ev, "x": [float(c) / SPEED_OF_LIGHT_M_S for c in xs]}


def _to_natural_units(data: Dict[str, Any]) -> Dict[str, Any]:
    """Seconds stay seconds, metres become light-seconds."""
    data = copy.deepcopy(data)
    geo = data.get("protocol", {}).get("geometry")
    if isinstance(geo, dict):
        geo["p"] = _si_event(geo.get("p"))
        for br in geo.get("branches", []) or []:
            if isinstance(br, dict):
                br["p_prime"] = _si_event(br.get("p_prime"))
                br["q"] = _si_event(br.get("q"))
    labs = data.get("protocol", {}).get("alice_labs")
    if isinstance(labs, dict):
        for lab in labs.get("labs", []) or []:
            for key in ("lo", "hi"):
                lab[key] = [float(c) / SPEED_OF_LIGHT_M_S for c in lab.get(key, [])]
    data["units"] = "natural"
    return data


def spec_from_dict(data: Dict[str, Any], source: str = "<spec>") -> ExperimentSpec:
    if data.get("units") == "SI":
        data = _to_natural_units(data)
    try:
        return ExperimentSpec.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{source}: invalid experiment spec", _diagnostics(e)) from e


def load_spec(path: Union[str, Path]) -> ExperimentSpec:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"spec file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: malformed TOML", [str(e)]) from e
    return spec_from_dict(data, str(path))


def _as_spec(spec: SpecLike) -> ExperimentSpec:
    return spec if isinstance(spec, ExperimentSpec) else load_spec(spec)


# ---------- validation


def validate(spec: SpecLike) -> SpecCheck:
    """Config and geometry check only; raises ConfigError on any violation."""
    spec = _as_spec(spec)
    cfg = spec.protocol
    report = validate_geometry(cfg.geometry)
    if not report.ok:
        raise ConfigError("geometry is not admissible", report.lines())
    try:
        strategy = build_strategy(spec.strategy.name, spec.strategy.params, cfg.d)
        strategy.begin(cfg.n, cfg.n_branches, make_rng(cfg.seed))
    except (UnsupportedStrategyError, ArgumentError) as e:
        raise ConfigError(f"strategy {spec.strategy.name!r} cannot run this protocol", [str(e)]) from e
    leg = cfg.quantum_leg
    return SpecCheck(
        ok=True,
        commitment=commitment_report(cfg.geometry, leg.speed_limit, leg.latency),
        committed_bits=committed_bits(cfg.n_branches),
    )


# ---------- running

_WORKER_SPEC: Optional[ExperimentSpec] = None


def _init_worker(spec_json: str) -> None:
    global _WORKER_SPEC
    _WORKER_SPEC = ExperimentSpec.model_validate_json(spec_json)


def _tests_per_site(record, n_branches: int) -> List[int]:
    if record.tally is None:
        return [0] * n_branches
    if record.tally.matched is not None:
        return record.tally.matched_counts
    return [record.tally.n] * n_branches


def _run_index(index: int) -> RunSummary:
    spec = _WORKER_SPEC
    cfg = spec.protocol
    strategy = build_strategy(spec.strategy.name, spec.strategy.params, cfg.d)
    record = run_protocol(cfg, strategy, run_rng(cfg.seed, index))
    keep = spec.outputs.transcript is not None and index < spec.outputs.transcript_runs
    return RunSummary(
        index=index,
        verdicts=record.verdicts,
        passes=record.tally.passes if record.tally else [0] * cfg.n_branches,
        tests=_tests_per_site(record, cfg.n_branches),
        aborted=record.aborted is not None,
        violations=audit_record(record, cfg.geometry.tau_geo),
        token_returnable=record.token_returnable,
        transcript=list(transcript_lines(record, index)) if keep else None,
    )


def resolve_workers(spec: ExperimentSpec, workers: Optional[int] = None) -> int:
    env = get_settings().workers
    if env is not None:
        return env
    if workers is not None:
        return workers
    return spec.workers or 1


def _execute(spec: ExperimentSpec, workers: int) -> List[RunSummary]:
    if workers <= 1 or spec.trials == 1:
        _init_worker(spec.model_dump_json())
        return [_run_index(i) for i in range(spec.trials)]
    chunk = max(1, spec.trials // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                             initargs=(spec.model_dump_json(),)) as pool:
        return list(pool.map(_run_index, range(spec.trials), chunksize=chunk))


def _estimate(successes: int, trials: int, confidence: float) -> McEstimate:
    if trials == 0:
        return McEstimate(trials=0, successes=0, confidence=confidence, point=0.0, ci_low=0.0, ci_high=1.0)
    return wilson(successes, trials, confidence)


def summarize(spec: ExperimentSpec, runs: Sequence[RunSummary], wall_time: float = 0.0) -> ResultsDocument:
    """Aggregate per-run summaries; order-independent."""
    cfg = spec.protocol
    nb, conf = cfg.n_branches, spec.confidence
    total = len(runs)
    accept, pass_rate, inconclusive, verdicts = [], [], [], []
    for j in range(nb):
        counts = Counter(r.verdicts[j].value for r in runs if j < len(r.verdicts))
        verdicts.append({v.value: counts.get(v.value, 0) for v in Verdict})
        accept.append(_estimate(counts.get(Verdict.ACCEPT.value, 0), total, conf))
        inconclusive.append(_estimate(counts.get(Verdict.INCONCLUSIVE.value, 0), total, conf))
        pass_rate.append(_estimate(sum(r.passes[j] for r in runs), sum(r.tests[j] for r in runs), conf))

    try:
        clone = cloning_bound(cfg.d, nb, cfg.multi_site_bound)
    except ArgumentError:
        clone = None
    azuma = azuma_bound(cfg.n if cfg.verify_mode != VerifyMode.B3 else cfg.m, cfg.d, cfg.epsilon)
    violations = sorted((v for r in runs for v in r.violations), key=str)
    return ResultsDocument(
        spec=spec,
        runs=total,
        accept=accept,
        pass_rate=pass_rate,
        inconclusive=inconclusive,
        accept_sum=sum(a.point for a in accept),
        pass_rate_sum=sum(p.point for p in pass_rate),
        within_cloning_bound=None if clone is None else within_bound(pass_rate, clone),
        bounds=Bounds(
            cloning=clone,
            azuma=azuma,
            loss_tolerance=loss_tolerance(cfg.d),
            accept_sum_limit=1.0 + azuma if nb == 2 else None,
        ),
        verdicts=verdicts,
        aborted=sum(r.aborted for r in runs),
        audit_violation_count=len(violations),
        audit_violations=violations[:MAX_REPORTED_VIOLATIONS],
        token_returnable=sum(r.token_returnable for r in runs),
        wall_time=wall_time,
    )


def _write_transcripts(path: str, runs: Iterable[RunSummary]) -> None:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for r in sorted(runs, key=lambda r: r.index):
            for line in r.transcript or []:
                fh.write(line + "\n")
    LOG.info("[experiment] transcript written to %s", out)


def run_experiment(spec: SpecLike, *, workers: Optional[int] = None, write: bool = True) -> ResultsDocument:
    """Run `trials` independent protocol runs and aggregate them."""
    spec = _as_spec(spec)
    validate(spec)
    n_workers = resolve_workers(spec, workers)
    LOG.info("[experiment] %s x%d (d=%d, n=%d, mode=%s) on %d worker(s)",
             spec.strategy.name, spec.trials, spec.protocol.d, spec.protocol.n,
             spec.protocol.verify_mode.value, n_workers)
    start = time.perf_counter()
    runs = _execute(spec, n_workers)
    doc = summarize(spec, runs, time.perf_counter() - start)
    if doc.aborted:
        LOG.error("[experiment] %d run(s) aborted on causality violations", doc.aborted)
    if write:
        if spec.outputs.transcript:
            _write_transcripts(spec.outputs.transcript, runs)
        if spec.outputs.results:
            Path(spec.outputs.results).parent.mkdir(parents=True, exist_ok=True)
            Path(spec.outputs.results).write_text(doc.model_dump_json(indent=2), encoding="utf-8")
            LOG.info("[experiment] results written to %s", spec.outputs.results)
    return doc


# ---------- sweeps


def _resolve_axis(tree: Dict[str, Any], axis: str) -> Tuple[List[str], Any]:
    path = AXIS_SHORTCUTS.get(axis, axis).split(".")
    node: Any = tree
    for i, key in enumerate(path):
        if path[:2] == ["strategy", "params"] and i == 2:
            return path, node.get(key)
        if not isinstance(node, dict) or key not in node:
            raise ArgumentError(f"unknown sweep axis {axis!r}")
        node = node[key]
    if isinstance(node, bool) or not (node is None or isinstance(node, (int, float))):
        raise ArgumentError(f"sweep axis {axis!r} is not a numeric field")
    return path, node


def _coerce(value: Any, current: Any, leaf: str) -> Any:
    try:
        v = float(value)
    except (TypeError, ValueError) as e:
        raise ArgumentError(f"sweep value {value!r} is not a number") from e
    if (isinstance(current, int) or leaf in ("d", "n", "m", "trials")) and v.is_integer():
        return int(v)
    return v


def sweep(spec: SpecLike, axis: str, values: Sequence[Any], *, workers: Optional[int] = None) -> pd.DataFrame:
    """One experiment per value; one table row per (value, site)."""
    spec = _as_spec(spec)
    base = spec.model_dump(mode="json")
    path, current = _resolve_axis(base, axis)
    if not values:
        raise ArgumentError("sweep needs at least one value")
    rows = []
    for raw in values:
        tree = copy.deepcopy(base)
        node = tree
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = _coerce(raw, current, path[-1])
        if tree["protocol"]["verify_mode"] == VerifyMode.B3.value and path[-1] in ("d", "m"):
            tree["protocol"]["n"] = None
        doc = run_experiment(spec_from_dict(tree, f"sweep {axis}={raw}"), workers=workers, write=False)
        for j, (acc, pr) in enumerate(zip(doc.accept, doc.pass_rate)):
            rows.append({
                "axis": axis,
                "value": node[path[-1]],
                "site": j,
                "accept": acc.point,
                "accept_low": acc.ci_low,
                "accept_high": acc.ci_high,
                "pass_rate": pr.point,
                "pass_low": pr.ci_low,
                "pass_high": pr.ci_high,
                "inconclusive": doc.inconclusive[j].point,
                "accept_sum": doc.accept_sum,
                "pass_rate_sum": doc.pass_rate_sum,
                "cloning_bound": doc.bounds.cloning if doc.bounds.cloning is not None else math.nan,
                "azuma": doc.bounds.azuma,
                "loss_tolerance": doc.bounds.loss_tolerance,
                "audit_violations": doc.audit_violation_count,
            })
    table = pd.DataFrame(rows)
    if spec.outputs.table:
        Path(spec.outputs.table).parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(spec.outputs.table, index=False)
    return table


# ---------- audit


def audit(path: Union[str, Path]) -> List[str]:
    """Re-check a transcript file; an empty list means it is clean."""
    violations = audit_file(path)
    if violations:
        LOG.warning("[experiment] %s: %d audit violation(s)", path, len(violations))
    else:
        LOG.info("[experiment] %s: transcript clean", path)
    return violations
