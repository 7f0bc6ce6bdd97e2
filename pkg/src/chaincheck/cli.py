"""Command-line front end.

Exit status: 0 secure, 2 attack, 3 unknown, 1 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .bench import (
    ENGINE_OPTIONS, GenSpec, gen_chain, gen_pool, gen_privacy_chain, rows_to_csv,
    run_benchmark, summarize,
)
from .mitigation import apply_watchlist, mitigate
from .model import ModelError, load_model, parse_model, serialize_model
from .pipeline import ESCALATION, EXIT_CODES, ORDERS, PRIVACY, PipelineOptions, run_check
from .semantics import EngineConfig
from .watch import watch

log = logging.getLogger("chaincheck")

USAGE_ERROR = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _add_check_flags(p: argparse.ArgumentParser, mode_default: str | None = ESCALATION) -> None:
    p.add_argument("model", help="model file (JSON), or - for stdin")
    if mode_default is not None:
        p.add_argument("--mode", choices=(ESCALATION, PRIVACY), default=mode_default)
    p.add_argument("--no-group", action="store_true", help="skip value grouping")
    p.add_argument("--no-prune", action="store_true", help="skip dependency pruning")
    p.add_argument("--order", choices=ORDERS, default="group-prune")
    p.add_argument("--engine", choices=("fast", "oracle"), default="fast")
    p.add_argument("--max-states", type=int, default=2_000_000, metavar="N")
    p.add_argument("--timeout", type=float, default=None, metavar="SECS")
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.add_argument("--seed", type=int, default=0, metavar="S",
                   help="accepted for symmetry; checking is deterministic")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chaincheck",
                     description="Find attack chains and privacy leaks in trigger-action rule sets.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", help="check escalation policies (or privacy with --mode)")
    _add_check_flags(p)

    p = sub.add_parser("privacy", help="check for private-to-public leaks")
    _add_check_flags(p, mode_default=None)

    p = sub.add_parser("mitigate", help="compute a rule watchlist that blocks every attack")
    _add_check_flags(p)
    p.add_argument("--limit", type=int, default=32, help="maximum attacks to enumerate")
    p.add_argument("--write-mitigated", metavar="PATH",
                   help="write the model with watchlisted rules removed")

    p = sub.add_parser("gen", help="generate a synthetic chain instance")
    p.add_argument("--mode", choices=(ESCALATION, PRIVACY), default=ESCALATION)
    p.add_argument("--length", type=int, default=3, help="chain length (2..8)")
    p.add_argument("--distractors", type=int, default=50)
    p.add_argument("--negative", action="store_true", help="break the chain (expected secure)")
    p.add_argument("--pool-size", type=int, default=40)
    p.add_argument("--domain-size", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", metavar="PATH", help="write here instead of stdout")

    p = sub.add_parser("bench", help="time optimized and baseline pipelines")
    p.add_argument("--sizes", default="10,50,100", help="comma-separated rule counts")
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--engines", default="optimized,baseline")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timeout", type=float, default=30.0, metavar="SECS",
                   help="per-run budget; runs over it are recorded as censored")
    p.add_argument("--max-states", type=int, default=2_000_000, metavar="N")
    p.add_argument("--format", choices=("json", "text"), default="text",
                   help="format of the summary printed to stdout")
    p.add_argument("-o", "--output", metavar="CSV", help="write per-phase rows as CSV")

    p = sub.add_parser("watch", help="re-check continuously against a state feed")
    _add_check_flags(p)
    p.add_argument("--feed", default="-", help="line-delimited JSON updates (default stdin)")
    p.add_argument("--interval", type=int, default=1000, metavar="MS",
                   help="periodic re-check interval; 0 disables")
    p.add_argument("--window-width", type=int, default=None, metavar="W",
                   help="recenter integer sensor windows of width W on each observation")
    return parser


def _setup_logging() -> None:
    level = os.environ.get("CHAINCHECK_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _read_model(path: str):
    if path == "-":
        return parse_model(sys.stdin.read())
    return load_model(path)


def _options(args) -> PipelineOptions:
    cfg = EngineConfig(max_states=args.max_states, time_budget=args.timeout)
    return PipelineOptions(group=not args.no_group, prune=not args.no_prune,
                           order=args.order, engine=args.engine, config=cfg)


def _emit(obj, fmt: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "json":
        data = obj.to_json() if hasattr(obj, "to_json") else obj
        out.write(json.dumps(data, ensure_ascii=False) + "\n")
    else:
        out.write(obj.to_text() + "\n")
    out.flush()


def cmd_check(args, mode: str | None = None) -> int:
    model = _read_model(args.model)
    report = run_check(model, mode or args.mode, options=_options(args))
    _emit(report, args.format)
    return report.exit_code


def cmd_mitigate(args) -> int:
    if args.limit < 1:
        raise ModelError("--limit must be at least 1")
    model = _read_model(args.model)
    wl = mitigate(model, mode=args.mode, limit=args.limit, options=_options(args))
    _emit(wl, args.format)
    if args.write_mitigated:
        Path(args.write_mitigated).write_text(serialize_model(apply_watchlist(model, wl)),
                                              encoding="utf-8")
    return EXIT_CODES[wl.residual]


def cmd_gen(args) -> int:
    spec = GenSpec(chain_length=args.length, distractors=args.distractors,
                   negative=args.negative, seed=args.seed, pool_size=args.pool_size,
                   domain_size=args.domain_size)
    inst = (gen_privacy_chain if args.mode == PRIVACY else gen_chain)(spec)
    doc = inst.to_document()
    if args.output:
        Path(args.output).write_text(doc, encoding="utf-8")
    else:
        sys.stdout.write(doc)
    return 0


def cmd_bench(args) -> int:
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError:
        raise ModelError(f"bad --sizes value {args.sizes!r}") from None
    engines = [e.strip() for e in args.engines.split(",") if e.strip()]
    unknown = set(engines) - set(ENGINE_OPTIONS)
    if unknown or not sizes:
        raise ModelError(f"bad bench arguments: engines {sorted(unknown)}, sizes {sizes}")
    pool = gen_pool(args.seed)
    rows = run_benchmark(sizes, args.trials, engines, seed=args.seed, pool=pool,
                         timeout=args.timeout, max_states=args.max_states)
    csv_text = rows_to_csv(rows)
    if args.output:
        Path(args.output).write_text(csv_text, encoding="utf-8")
    summary = summarize(rows)
    if args.format == "json":
        sys.stdout.write(json.dumps({"summary": summary}) + "\n")
    else:
        for entry in summary:
            parts = [f"size {entry['size']:>4}"]
            for eng in engines:
                if eng in entry:
                    e = entry[eng]
                    cens = f" ({e['censored']} censored)" if e["censored"] else ""
                    parts.append(f"{eng} {e['mean_ms']:.1f} ms{cens}")
            if "speedup" in entry:
                bound = ">=" if entry["speedup_is_lower_bound"] else ""
                parts.append(f"speedup {bound}{entry['speedup']:.1f}x")
            sys.stdout.write("  ".join(parts) + "\n")
    return 0


def cmd_watch(args) -> int:
    model = _read_model(args.model)
    if args.feed == "-":
        if args.model == "-":
            raise ModelError("model and feed cannot both come from stdin")
        feed = sys.stdin
    else:
        feed = open(args.feed, encoding="utf-8")
    try:
        summary = watch(model, feed, lambda rep: _emit(rep, args.format), mode=args.mode,
                        interval_ms=args.interval or None, window_width=args.window_width,
                        options=_options(args))
    finally:
        if feed is not sys.stdin:
            feed.close()
    if args.format == "json":
        sys.stdout.write(json.dumps(summary.to_json()) + "\n")
    else:
        s = summary
        sys.stdout.write(f"watch finished: {s.rechecks} re-checks, {s.updates} updates, "
                         f"{s.skipped} skipped, {s.window_violations} window violations, "
                         f"last verdict {s.last_verdict}\n")
    return EXIT_CODES.get(summary.last_verdict, 0)


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "check": cmd_check,
        "privacy": lambda a: cmd_check(a, PRIVACY),
        "mitigate": cmd_mitigate,
        "gen": cmd_gen,
        "bench": cmd_bench,
        "watch": cmd_watch,
    }
    try:
        return handlers[args.command](args)
    except (ModelError, ValueError, OSError) as exc:
        sys.stderr.write(f"chaincheck: error: {exc}\n")
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
