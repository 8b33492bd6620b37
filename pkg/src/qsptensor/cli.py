"""Command line front end.

Verbs::

    qsptensor run SCENARIO            execute the scenario's queries, JSON report
    qsptensor tree SCENARIO           probabilities of every outcome string (CSV or JSON)
    qsptensor audit [SCENARIO]        process tensor property audit
    qsptensor verify-theorem1 [SCENARIO]
                                      kernel vs process tensor identity
    qsptensor choi SCENARIO           export the Choi state of the scenario's process

Exit codes: 0 success, 2 parse error, 3 validation error, 4 numerical
audit failure.  Errors are printed to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import bridge, process_tensor as pt, suites
from .config import MAX_DIM, MAX_TREE_LEAVES, TOL_ENV_VAR, resolve_tol
from .linalg import DimensionError, min_eigenvalue
from .sampling import ginibre
from .scenario import (
    ScenarioParseError,
    ScenarioValidationError,
    load_scenario,
    outcome_table,
    run_scenario,
)
from .serialization import fmt_float

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_AUDIT = 4


class AuditFailure(RuntimeError):
    """A numerical check in the report did not pass."""


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (json.dumps(v) if isinstance(v, (list, dict)) else v) for k, v in r.items()})
    return buf.getvalue()


# -- verbs ---------------------------------------------------------------------

def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    report = run_scenario(sc, tol=args.tol, seed=args.seed, timing=args.timing)
    if args.format == "csv":
        rows = [{"index": r["index"], "type": r["type"], "id": r.get("id"), "passed": r["passed"], "result": r["result"]} for r in report["queries"]]
        text = _rows_to_csv(rows)
    else:
        text = _dumps(report)
    _emit(text, args.out)
    if args.plot and sc.schedule:
        table = outcome_table(sc, cap=args.cap or MAX_TREE_LEAVES)
        from .plotting import plot_outcome_table

        plot_outcome_table(table, Path(args.plot) / f"{Path(args.scenario).stem}_outcomes.svg", sc.description)
    if not report["passed"]:
        failed = [r["index"] for r in report["queries"] if not r["passed"]]
        raise AuditFailure(f"queries {failed} failed their checks")
    return EXIT_OK


def cmd_tree(args) -> int:
    sc = load_scenario(args.scenario)
    tol = resolve_tol(args.tol)
    try:
        table = outcome_table(sc, cap=args.cap or MAX_TREE_LEAVES)
    except ValueError as exc:
        raise ScenarioValidationError(str(exc)) from None
    total = sum(table.values())
    out_of_range = [k for k, v in table.items() if not -tol <= v <= 1 + tol]
    n = len(sc.schedule)
    rows = []
    for key, p in table.items():
        row = {f"outcome_{j + 1}": lab for j, lab in enumerate(key)}
        row["probability"] = fmt_float(min(max(p, 0.0), 1.0))
        rows.append(row)
    if args.format == "json":
        text = _dumps({"description": sc.description, "n": n, "total": fmt_float(total), "rows": rows})
    else:
        if not rows:
            rows = [{"probability": 1.0}]
        text = _rows_to_csv(rows)
    _emit(text, args.out)
    if args.plot:
        from .plotting import plot_outcome_table

        plot_outcome_table(table, args.plot, sc.description)
    if abs(total - 1) > 1e-9 or out_of_range:
        raise AuditFailure(f"outcome probabilities sum to {total!r}")
    return EXIT_OK


def cmd_audit(args) -> int:
    tol = max(resolve_tol(args.tol), 1e-8)
    if args.scenario:
        sc = load_scenario(args.scenario)
        rep = pt.audit_properties(sc.process_tensor(), args.trials, np.random.default_rng(args.seed), tol)
        payload = {"scenario": sc.description, **rep.to_json()}
        passed = rep.passed
        rows = [payload]
    else:
        rows = [r.as_dict() for r in suites.audit_suite(args.instances, args.trials, args.seed, tol)]
        passed = all(r["passed"] for r in rows)
        payload = {
            "instances": len(rows),
            "max_trace_bound_margin": fmt_float(max(r["trace_bound_margin"] for r in rows)),
            "min_choi_eigenvalue": fmt_float(min(r["choi_min_eigenvalue"] for r in rows)),
            "max_containment_deviation": fmt_float(max(r["containment_deviation"] for r in rows)),
            "tol": tol,
            "passed": passed,
        }
    text = _rows_to_csv([_round(r) for r in rows]) if args.format == "csv" else _dumps(_round(payload))
    _emit(text, args.out)
    if not passed:
        raise AuditFailure("process tensor property audit failed")
    return EXIT_OK


def cmd_verify(args) -> int:
    tol = max(resolve_tol(args.tol), 1e-8)
    rng = np.random.default_rng(args.seed)
    if args.scenario:
        sc = load_scenario(args.scenario)
        dil = sc.dilation()
        rows = []
        for k in range(args.instances):
            a = [ginibre(sc.d_s, rng) for _ in sc.times]
            b = [ginibre(sc.d_s, rng) for _ in sc.times]
            rows.append({"instance": k, **bridge.verify_theorem1(a, b, dil, sc.times, tol).to_json()})
    else:
        rows = [r.as_dict() for r in suites.kernel_identity_suite(args.instances, args.seed, tol)]
    passed = all(r["passed"] for r in rows)
    if args.format == "csv":
        text = _rows_to_csv(rows)
    else:
        text = _dumps({
            "instances": len(rows),
            "max_abs_error": fmt_float(max((r["abs_error"] for r in rows), default=0.0)),
            "tol": tol,
            "passed": passed,
        })
    _emit(text, args.out)
    if not passed:
        raise AuditFailure("kernel / process tensor identity failed")
    return EXIT_OK


def cmd_choi(args) -> int:
    sc = load_scenario(args.scenario)
    try:
        choi = pt.choi_state(sc.process_tensor(), cap=args.cap or MAX_DIM)
    except DimensionError as exc:
        raise ScenarioValidationError(str(exc)) from None
    lam = min_eigenvalue(choi.matrix)
    if args.format == "csv":
        m = choi.matrix
        rows = [{"row": i, "col": j, "re": fmt_float(m[i, j].real), "im": fmt_float(m[i, j].imag)} for i in range(m.shape[0]) for j in range(m.shape[1])]
        text = _rows_to_csv(rows)
    else:
        payload = choi.to_json()
        payload["trace"] = fmt_float(np.trace(choi.matrix).real)
        payload["min_eigenvalue"] = fmt_float(lam)
        text = _dumps(payload)
    _emit(text, args.out)
    if lam < -max(resolve_tol(args.tol), 1e-8):
        raise AuditFailure("Choi state is not positive semidefinite")
    return EXIT_OK


def _round(obj):
    if isinstance(obj, float):
        return fmt_float(obj)
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_round(v) for v in obj]
    return obj


# -- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None, help=f"structural tolerance (default 1e-10, or ${TOL_ENV_VAR})")
    common.add_argument("--seed", type=int, default=None, help="seed for randomized queries and suites")
    common.add_argument("--out", default=None, help="write the report here instead of stdout")
    common.add_argument("--cap", type=int, default=None, help="size cap: outcome-tree leaves (tree, run --plot) or matrix dimension (choi)")
    common.add_argument("--format", choices=("json", "csv"), default=None)

    parser = argparse.ArgumentParser(prog="qsptensor", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", parents=[common], help="execute scenario queries")
    p.add_argument("scenario")
    p.add_argument("--plot", default=None, metavar="DIR", help="also write an SVG bar chart of the schedule's outcome table")
    p.add_argument("--timing", action="store_true", help="include per-query wall time (makes reports non-reproducible)")
    p.set_defaults(func=cmd_run, default_format="json")

    p = sub.add_parser("tree", parents=[common], help="tabulate every outcome string")
    p.add_argument("scenario")
    p.add_argument("--plot", default=None, metavar="FILE.svg")
    p.set_defaults(func=cmd_tree, default_format="csv")

    p = sub.add_parser("audit", parents=[common], help="process tensor property audit")
    p.add_argument("scenario", nargs="?")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--instances", type=int, default=100)
    p.set_defaults(func=cmd_audit, default_format="json")

    p = sub.add_parser("verify-theorem1", parents=[common], help="kernel vs process tensor identity")
    p.add_argument("scenario", nargs="?")
    p.add_argument("--instances", type=int, default=100)
    p.set_defaults(func=cmd_verify, default_format="json")

    p = sub.add_parser("choi", parents=[common], help="export the Choi state")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_choi, default_format="json")
    return parser


def _error(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": {"kind": kind, "message": message, "exit_code": code}}) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = args.default_format
    if args.seed is None and args.verb != "run":
        args.seed = 0
    try:
        return args.func(args)
    except ScenarioParseError as exc:
        return _error("parse", str(exc), EXIT_PARSE)
    except ScenarioValidationError as exc:
        return _error("validation", str(exc), EXIT_VALIDATION)
    except AuditFailure as exc:
        return _error("audit", str(exc), EXIT_AUDIT)


if __name__ == "__main__":
    sys.exit(main())
