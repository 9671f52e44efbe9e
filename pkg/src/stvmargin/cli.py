"""Command line entry point: ``stvmargin <command> ...``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import re
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import __version__
from .bounds import prefix_lower_bound, simple_stv_ub, upper_bound_manipulations, winner_elimination_ub
from .count import run_count
from .distance import build_distance_model
from .election import (ELECTED, ELIMINATED, CandidateOrder, Election, ElectionError, ParseError,
                       load_election, serialize)
from .linear import ModelError, export_lp
from .milp import DEFAULT_BACKEND, SolverError
from .oracle import Exceeds, OracleLimitError, find_distance_manipulation, find_mov_manipulation
from .search import SearchConfig, margin_stv, verify_manipulation

SCHEMA_VERSION = "1.0"
STALL_ENV = "STVMARGIN_STALL_LIMIT"
ELECTION_SUFFIXES = (".stv", ".soc", ".soi", ".toc", ".toi")

# exit codes, one per error family
EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_ELECTION = 4
EXIT_ORACLE_LIMIT = 5
EXIT_SOLVER = 6


class UsageError(Exception):
    pass


# ----------------------------------------------------------------------------
# helpers


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, Fraction):
        return {"exact": str(x), "value": float(x)}
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set, frozenset)):
        return [_jsonable(v) for v in x]
    return x


def election_digest(election: Election) -> dict:
    text = serialize(election)
    return {
        "sha256": hashlib.sha256(text.encode()).hexdigest(),
        "candidates": election.names,
        "seats": election.seats,
        "quota": election.quota,
        "ballots": election.total,
        "rankings": len(election.profile),
    }


def parse_order(text: str, election: Election) -> CandidateOrder:
    """Parse ``c1+,c3-`` or ``c1:1,c3:0`` (names or 1-based numbers)."""
    steps = []
    for item in re.split(r"[,\s]+", text.strip()):
        if not item:
            continue
        m = re.fullmatch(r"(.+?)(?::([01])|([+-]))", item)
        if not m:
            raise UsageError(f"bad order step {item!r}; use name+ / name- or name:1 / name:0")
        name = m.group(1)
        action = int(m.group(2)) if m.group(2) is not None else (ELECTED if m.group(3) == "+" else ELIMINATED)
        if name in election.names:
            c = election.index_of(name)
        elif name.isdigit() and 1 <= int(name) <= election.num_candidates:
            c = int(name) - 1
        else:
            raise ElectionError(f"unknown candidate {name!r} in order")
        steps.append((c, action))
    order = CandidateOrder(tuple(steps))
    order.validate(election.num_candidates, election.seats)
    return order


def _stall_default():
    raw = os.environ.get(STALL_ENV)
    if raw is None or raw == "":
        return None
    try:
        value = float(raw)
    except ValueError:
        raise UsageError(f"{STALL_ENV} must be a number of seconds, got {raw!r}") from None
    if value <= 0:
        raise UsageError(f"{STALL_ENV} must be positive")
    return value


def _load(args) -> Election:
    election = load_election(args.file, args.seats, args.quota)
    return election.with_winners(run_count(election).elected)


def _fmt(x: Fraction) -> str:
    return f"{float(x):.2f}"


def _emit(args, report: dict, text: str) -> None:
    report = {"schema_version": SCHEMA_VERSION, **report}
    body = json.dumps(_jsonable(report), indent=2, allow_nan=False) if args.format == "json" else text
    if args.out:
        Path(args.out).write_text(body + "\n")
    else:
        print(body)


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "handler"}
    return _jsonable(cfg)


# ----------------------------------------------------------------------------
# commands


def count_report(election: Election) -> tuple[dict, str]:
    res = run_count(election)
    names = election.names
    rounds = []
    for r in res.rounds:
        rounds.append({
            "round": r.number,
            "tallies": {names[c]: t for c, t in r.tallies.items()},
            "action": r.kind,
            "candidates": [names[c] for c in r.candidates],
            "transfer_value": r.transfer_value,
            "exhausted": r.exhausted,
        })
    report = {
        "quota": election.quota,
        "elected": sorted(names[c] for c in res.elected),
        "order": [[names[c], a] for c, a in res.order.steps],
        "rounds": rounds,
    }
    width = max(8, max(len(n) for n in names) + 2)
    lines = [f"quota {election.quota}, seats {election.seats}, ballots {election.total}",
             "round".ljust(7) + "".join(n.rjust(width) for n in names) + "  action"]
    for r in res.rounds:
        cells = "".join((_fmt(r.tallies[c]) if c in r.tallies else "-").rjust(width)
                        for c in range(len(names)))
        what = ", ".join(names[c] for c in r.candidates)
        tv = f" (transfer value {r.transfer_value})" if r.transfer_value is not None else ""
        lines.append(f"{r.number:<7}{cells}  {r.kind} {what}{tv}")
    lines.append("elected: " + ", ".join(report["elected"]))
    lines.append("order: " + res.order.format(names))
    return report, "\n".join(lines)


def cmd_count(args) -> int:
    election = _load(args)
    report, text = count_report(election)
    _emit(args, {"command": "count", "config": _config(args), "election": election_digest(election),
                 **report}, text)
    return EXIT_OK


def cmd_bounds(args) -> int:
    election = _load(args)
    result = run_count(election)
    weub = winner_elimination_ub(election, result, literal_half=args.literal_half)
    simple = simple_stv_ub(election)
    certified = None
    for man in upper_bound_manipulations(election, result):
        if verify_manipulation(election, man).changed:
            certified = man
            break
    report = {"command": "bounds", "config": _config(args), "election": election_digest(election),
              "weub": weub, "simple": simple, "best": min(weub, simple),
              "certified": None if certified is None else certified.to_json(election.names)}
    lines = [f"winner elimination bound: {weub}", f"simple bound: {simple}",
             f"best: {min(weub, simple)}",
             "certified: " + ("none" if certified is None else f"{certified.size} ({certified.origin})")]
    if args.order:
        order = parse_order(args.order, election)
        br = prefix_lower_bound(election, order, literal_gap=args.literal_gap)
        report["prefix"] = {"order": [[election.names[c], a] for c, a in order.steps],
                            "lb": br.lb, "components": br.components, "detail": br.detail}
        lines.append(f"prefix rule for {order.format(election.names)}: {br.lb} "
                     f"(components {tuple(br.components)})")
    _emit(args, report, "\n".join(lines))
    return EXIT_OK


def _search_config(args) -> SearchConfig:
    stall = args.stall_limit if args.stall_limit is not None else _stall_default()
    return SearchConfig(mode=args.mode, K=args.K, use_rule_lb=args.rule_lb == "on", nf=args.nf,
                        fix_rounds=args.fix_rounds, wall_limit=args.wall_limit, stall_limit=stall,
                        backend=args.solver, group=args.group, ties=args.ties)


def margin_report(election: Election, cfg: SearchConfig) -> tuple[dict, str, object]:
    res = margin_stv(election, cfg)
    names = election.names
    report = {
        "lower_bound": res.lower_bound,
        "upper_bound": res.upper_bound,
        "exact": res.exact,
        "mov": res.mov,
        "conditional": res.conditional,
        "status": res.status,
        "search": cfg.to_json(),
        "initial_bounds": res.initial,
        "stats": vars(res.stats),
        "history": res.history,
        "evaluations": [dict(ev, order=[[names[c], a] for c, a in ev["order"]]) for ev in res.evaluations],
        "frontier_left": len(res.frontier),
        "blocked": len(res.blocked),
        "certificate": None if res.certificate is None else res.certificate.to_json(names),
    }
    if res.exact:
        verdict = f"MOV = {res.upper_bound}"
    else:
        verdict = f"MOV in [{res.lower_bound}, {res.upper_bound}]"
    if res.conditional:
        verdict += " (conditional on the fixed prefix)"
    text = "\n".join([
        f"candidates {election.num_candidates}, seats {election.seats}, ballots {election.total}, "
        f"quota {election.quota}",
        f"initial bound {res.initial.get('heuristic')} (certified {res.initial.get('certified')})",
        verdict,
        f"models solved {res.stats.models_solved}, pruned by rule {res.stats.rule_pruned}, "
        f"expanded {res.stats.nodes_expanded}, time {res.stats.wall_time:.2f}s",
    ])
    return report, text, res


def cmd_margin(args) -> int:
    election = _load(args)
    cfg = _search_config(args)
    report, text, _ = margin_report(election, cfg)
    full = {"command": "margin", "config": _config(args), "election": election_digest(election), **report}
    if args.report:
        Path(args.report).write_text(json.dumps(_jsonable({"schema_version": SCHEMA_VERSION, **full}),
                                                indent=2, allow_nan=False) + "\n")
    _emit(args, full, text)
    return EXIT_OK


def cmd_oracle(args) -> int:
    election = _load(args)
    names = election.names
    if args.order:
        order = parse_order(args.order, election)
        found = find_distance_manipulation(election, order, args.kmax, args.ties, args.force)
        target = order.format(names)
    else:
        found = find_mov_manipulation(election, args.kmax, args.ties, args.force)
        target = "margin of victory"
    value = Exceeds(args.kmax) if found is None else found[0]
    witness = None if found is None else found[1].as_manipulation().to_json(names)
    report = {"command": "oracle", "config": _config(args), "election": election_digest(election),
              "target": target, "k_max": args.kmax, "ties": args.ties,
              "value": None if found is None else found[0], "exceeds": found is None,
              "witness": witness}
    _emit(args, report, f"{target}: {value}")
    return EXIT_OK


def cmd_export(args) -> int:
    election = _load(args)
    order = parse_order(args.order, election)
    dm = build_distance_model(election, order, args.ub, args.mode, args.K, group=args.group)
    text = export_lp(dm.model)
    if args.lp:
        Path(args.lp).write_text(text)
    else:
        sys.stdout.write(text)
    if args.lp or args.format == "json":
        report = {"command": "export-model", "config": _config(args), "election": election_digest(election),
                  "order": [[election.names[c], a] for c, a in order.steps], "mode": args.mode,
                  "classes": len(dm.classes), "variables": dm.model.num_vars,
                  "constraints": len(dm.model.rows), "bilinear": len(dm.model.bilinear),
                  "relaxed": dm.relaxed, "lp": args.lp}
        if args.lp:
            _emit(args, report, f"wrote {args.lp}: {dm.model.num_vars} variables, "
                                f"{len(dm.model.rows)} constraints")
    return EXIT_OK


def cmd_batch(args) -> int:
    folder = Path(args.folder)
    if not folder.is_dir():
        raise FileNotFoundError(f"{folder} is not a directory")
    files = sorted(p for p in folder.iterdir() if p.suffix.lower() in ELECTION_SUFFIXES)
    if not files:
        raise FileNotFoundError(f"no election files in {folder}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = _search_config(args)
    rows = []
    for path in files:
        start = time.monotonic()
        election = load_election(str(path), args.seats, args.quota)
        election = election.with_winners(run_count(election).elected)
        report, _, res = margin_report(election, cfg)
        full = {"schema_version": SCHEMA_VERSION, "command": "margin",
                "config": _jsonable({**_config(args), "file": str(path)}),
                "election": election_digest(election), **report}
        (out_dir / f"{path.stem}.json").write_text(json.dumps(_jsonable(full), indent=2, allow_nan=False) + "\n")
        rows.append({
            "election": path.name, "candidates": election.num_candidates, "seats": election.seats,
            "ballots": election.total, "quota": election.quota,
            "initial_ub": res.initial.get("heuristic"), "lower": res.lower_bound,
            "upper": res.upper_bound, "exact": res.exact, "models": res.stats.models_solved,
            "seconds": round(time.monotonic() - start, 3),
        })
        print(f"{path.name}: [{res.lower_bound}, {res.upper_bound}]", file=sys.stderr)
    summary = out_dir / "summary.csv"
    with open(summary, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    report = {"command": "batch", "config": _config(args), "summary": str(summary), "elections": rows}
    _emit(args, report, f"{len(rows)} elections, summary in {summary}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# parser


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _non_negative_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def _seconds(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be a positive number of seconds")
    return v


def _solver(text):
    if text in ("bnb", "highs") or (text.startswith("external:") and len(text) > len("external:")):
        return text
    raise argparse.ArgumentTypeError("use bnb, highs or external:<path>")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stvmargin", description="Margins of victory for STV elections.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, file_arg=True):
        if file_arg:
            sp.add_argument("file", help="ballot file (.stv native format, or PrefLib .soc/.soi/.toc/.toi)")
        sp.add_argument("--seats", type=_positive_int, help="override the number of seats")
        sp.add_argument("--quota", type=_positive_int, help="override the quota")
        sp.add_argument("--format", choices=("text", "json"), default="text")
        sp.add_argument("--out", help="write the report here instead of stdout")

    def search_flags(sp):
        sp.add_argument("--mode", choices=("exact", "mccormick", "piecewise"), default="exact")
        sp.add_argument("--K", type=_positive_int, default=5, help="segments for piecewise mode")
        sp.add_argument("--nf", type=_positive_int, default=1, help="orders expanded in parallel")
        sp.add_argument("--fix-rounds", type=_non_negative_int, default=0, dest="fix_rounds")
        sp.add_argument("--rule-lb", choices=("on", "off"), default="on", dest="rule_lb")
        sp.add_argument("--wall-limit", type=_seconds, dest="wall_limit")
        sp.add_argument("--stall-limit", type=_seconds, dest="stall_limit",
                        help=f"per-model stall limit (default from {STALL_ENV})")
        sp.add_argument("--solver", type=_solver, default=DEFAULT_BACKEND)
        sp.add_argument("--group", action="store_true", help="collapse runs of eliminations")
        sp.add_argument("--ties", choices=("any", "policy", "defender"), default="any")

    sp = sub.add_parser("count", help="run the count and show every round")
    common(sp)
    sp.set_defaults(handler=cmd_count)

    sp = sub.add_parser("bounds", help="upper bounds, and the prefix rule for an order")
    common(sp)
    sp.add_argument("--order", help="partial order for the prefix rule, e.g. c3-,c1+")
    sp.add_argument("--literal-half", action="store_true", dest="literal_half")
    sp.add_argument("--literal-gap", action="store_true", dest="literal_gap")
    sp.set_defaults(handler=cmd_bounds)

    sp = sub.add_parser("margin", help="branch and bound for the margin of victory")
    common(sp)
    search_flags(sp)
    sp.add_argument("--report", help="also write the JSON report here")
    sp.set_defaults(handler=cmd_margin)

    sp = sub.add_parser("oracle", help="brute-force margin (tiny elections only)")
    common(sp)
    sp.add_argument("--kmax", type=_non_negative_int, default=2)
    sp.add_argument("--order", help="brute-force the distance to this order instead")
    sp.add_argument("--ties", choices=("any", "policy", "defender"), default="any")
    sp.add_argument("--force", action="store_true", help="ignore the size limits")
    sp.set_defaults(handler=cmd_oracle)

    sp = sub.add_parser("export-model", help="write the distance model of an order as LP text")
    common(sp)
    sp.add_argument("--order", required=True)
    sp.add_argument("--mode", choices=("exact", "mccormick", "piecewise"), default="exact")
    sp.add_argument("--K", type=_positive_int, default=5)
    sp.add_argument("--ub", type=_non_negative_int, help="budget on changed ballots (default: all)")
    sp.add_argument("--group", action="store_true")
    sp.add_argument("--lp", help="LP output path (default stdout)")
    sp.set_defaults(handler=cmd_export)

    sp = sub.add_parser("batch", help="margin search over every election in a folder")
    sp.add_argument("folder")
    common(sp, file_arg=False)
    search_flags(sp)
    sp.add_argument("--out-dir", required=True, dest="out_dir")
    sp.set_defaults(handler=cmd_batch)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if "K" in vars(args) and args.mode != "piecewise" and args.K != 5:
            raise UsageError("--K only applies to --mode piecewise")
        return args.handler(args)
    except UsageError as exc:
        print(f"stvmargin: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, OSError) as exc:
        print(f"stvmargin: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OracleLimitError as exc:
        print(f"stvmargin: {exc} (use --force to run anyway)", file=sys.stderr)
        return EXIT_ORACLE_LIMIT
    except (ElectionError, ValueError) as exc:
        if isinstance(exc, ModelError):
            print(f"stvmargin: model error: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        print(f"stvmargin: invalid election or order: {exc}", file=sys.stderr)
        return EXIT_ELECTION
    except SolverError as exc:
        print(f"stvmargin: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
