# main.py

"""Command-line entry point: run, sweep, validate and audit experiments."""

import argparse
import logging
import os
import sys
from typing import List, Optional

from qtransmit.core.errors import ArgumentError, AuditError, ConfigError, QTransmitError
from qtransmit.core.logs import configure_cli_logging
from qtransmit.data.specs import list_specs, spec_path
from qtransmit.services.experiment import audit, load_spec, run_experiment, sweep, validate

LOG = logging.getLogger("qtransmit.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_AUDIT = 4


def _resolve(spec: str) -> str:
    """A spec argument is a path, or the name of a bundled spec."""
    if os.path.exists(spec) or spec not in list_specs():
        return spec
    return spec_path(spec)


def _positive(raw: str) -> int:
    value = int(raw)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {raw}")
    return value


def cmd_run(args) -> int:
    spec = load_spec(_resolve(args.spec))
    outputs = {k: v for k, v in (("results", args.out), ("transcript", args.transcript),
                                 ("transcript_runs", args.transcript_runs)) if v is not None}
    update = {"outputs": spec.outputs.model_copy(update=outputs)}
    if args.trials is not None:
        update["trials"] = args.trials
    spec = spec.model_copy(update=update)

    doc = run_experiment(spec, workers=args.workers)
    for j, (acc, pr) in enumerate(zip(doc.accept, doc.pass_rate), start=1):
        print(f"site {j}: accept {acc.point:.4f} [{acc.ci_low:.4f}, {acc.ci_high:.4f}]  "
              f"pass rate {pr.point:.4f} [{pr.ci_low:.4f}, {pr.ci_high:.4f}]")
    bound = f"{doc.bounds.cloning:.4f}" if doc.bounds.cloning is not None else "n/a"
    if doc.within_cloning_bound is False:
        bound += ", exceeded"
    print(f"pass-rate sum {doc.pass_rate_sum:.4f} (cloning bound {bound}), "
          f"accept sum {doc.accept_sum:.4f}, azuma {doc.bounds.azuma:.4g}, "
          f"{doc.runs} runs in {doc.wall_time:.2f}s")
    if doc.audit_violation_count:
        for v in doc.audit_violations:
            print(f"VIOLATION {v}")
        return EXIT_AUDIT
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = load_spec(_resolve(args.spec))
    if args.out:
        spec = spec.model_copy(update={"outputs": spec.outputs.model_copy(update={"table": args.out})})
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    table = sweep(spec, args.axis, values, workers=args.workers)
    print(table.to_string(index=False))
    return EXIT_AUDIT if int(table["audit_violations"].sum()) else EXIT_OK


def cmd_validate(args) -> int:
    check = validate(_resolve(args.spec))
    rep = check.commitment
    print("geometry ok")
    for j, (t, s) in enumerate(zip(rep.latest_choice, rep.slack), start=1):
        print(f"branch {j}: latest choice t={t:.6g} (slack {s:.6g})")
    print(f"committed bits: {check.committed_bits:.3f}")
    return EXIT_OK


def cmd_audit(args) -> int:
    violations = audit(args.transcript)
    for v in violations:
        print(f"VIOLATION {v}")
    if violations:
        return EXIT_AUDIT
    print("transcript clean")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qtransmit", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte Carlo experiment")
    run.add_argument("spec", help="spec file or bundled spec name")
    run.add_argument("--out", help="results JSON path")
    run.add_argument("--transcript", help="transcript JSONL path")
    run.add_argument("--transcript-runs", type=_positive, help="how many runs to keep transcripts for")
    run.add_argument("--trials", type=_positive)
    run.add_argument("--workers", type=_positive)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="run one experiment per value of a numeric field")
    sw.add_argument("spec")
    sw.add_argument("--axis", required=True, help="dotted field path or shortcut (d, n, loss_prob, ...)")
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--out", help="CSV table path")
    sw.add_argument("--workers", type=_positive)
    sw.set_defaults(func=cmd_sweep)

    val = sub.add_parser("validate", help="check config and geometry only")
    val.add_argument("spec")
    val.set_defaults(func=cmd_validate)

    au = sub.add_parser("audit", help="causality, linearity and taint audit of a transcript")
    au.add_argument("transcript")
    au.set_defaults(func=cmd_audit)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_cli_logging(args.verbose)
    try:
        return args.func(args)
    except (ConfigError, ArgumentError) as e:
        LOG.error("[cli] %s", e)
        return EXIT_CONFIG
    except AuditError as e:
        LOG.error("[cli] %s", e)
        for v in e.violations:
            print(f"VIOLATION {v}")
        return EXIT_AUDIT
    except QTransmitError as e:
        LOG.error("[cli] %s: %s", type(e).__name__, e)
        return EXIT_RUNTIME
    except Exception:
        LOG.exception("[cli] unexpected failure")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
