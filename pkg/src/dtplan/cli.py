"""Command-line front end: ``dtplan <command> --domain FILE ...``.

Exit status is 0 on success, 1 for domain or semantic failures (validation
violations, a state that is not fully specified, grounding too large) and 2
for usage, I/O and parse errors.

Every JSON or CSV output carries a run manifest. JSON documents have the
shape ``{"manifest", "data", "timing"}``; CSV files start with a
``# manifest:`` comment line; ``run`` emits JSON lines with the manifest as
the first record. Wall-clock times never appear in ``data`` sections, so
repeating a run reproduces them byte for byte. The bench CSV is the one
exception: its ``elapsed`` column is part of the table.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import re
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .abstraction import HeuristicTable, build_heuristic
from .core import DomainError, DomainSpec, FlatMDP, State, ground, validate
from .executor import (
    BENCH_HEADER,
    BENCH_MODES,
    PolicyComparison,
    bench_suite,
    compare_policies,
    induced_policy,
    run_episode,
)
from .lang import DomainSyntaxError, SourceSpan, parse_domain_with_source, resolve_domain_path
from .search import SearchConfig, Searcher
from .solvers import greedy_policy, policy_iteration, value_iteration

EXIT_OK = 0
EXIT_SEMANTIC = 1
EXIT_USAGE = 2

SOLVE_HEADER = ("index", "state", "value", "action")
RUN_HEADER = ("step", "state", "action", "next_state", "reward", "cache_hit", "nodes_expanded")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to repeat a run."""

    domain: str
    domain_sha256: str
    command: str
    params: dict = field(default_factory=dict)
    version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Loaded:
    path: Path
    text: str
    sha256: str
    domain: DomainSpec
    spans: dict


# Loading and checking.


def _read(ref: str) -> tuple[Path, str, str]:
    path = resolve_domain_path(ref)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CliError(EXIT_USAGE, f"cannot read domain {ref}: {exc.strerror or exc}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CliError(EXIT_USAGE, f"{path}: not UTF-8 text ({exc.reason})") from None
    return path, text, hashlib.sha256(raw).hexdigest()


def _span_for(spans: dict, where: tuple) -> SourceSpan | None:
    # Fall back to the enclosing construct when the exact location is unknown.
    for k in range(len(where), 0, -1):
        span = spans.get(where[:k])
        if span is not None:
            return span
    return None


def load(ref: str) -> Loaded:
    path, text, sha = _read(ref)
    try:
        d, spans = parse_domain_with_source(text)
    except DomainSyntaxError as exc:
        lines = [f"{path}:{e}" for e in exc.errors]
        raise CliError(EXIT_USAGE, "\n".join(lines)) from None
    return Loaded(path, text, sha, d, spans)


def violation_lines(loaded: Loaded) -> list[str]:
    out = []
    for v in validate(loaded.domain):
        span = _span_for(loaded.spans, v.where)
        loc = f"{loaded.path}:{span}" if span is not None else str(loaded.path)
        out.append(f"{loc}: {v.kind}: {v.message}")
    return out


def load_valid(ref: str) -> Loaded:
    loaded = load(ref)
    problems = violation_lines(loaded)
    if problems:
        raise CliError(EXIT_SEMANTIC, "\n".join(problems))
    return loaded


def _ground(loaded: Loaded) -> FlatMDP:
    try:
        return ground(loaded.domain)
    except DomainError as exc:
        raise CliError(EXIT_SEMANTIC, str(exc)) from None


def parse_state_arg(d: DomainSpec, text: str | None, what: str = "state") -> State:
    """Literals separated by commas or spaces, optionally wrapped in braces."""
    if text is None:
        if d.initial is None:
            raise CliError(EXIT_SEMANTIC, f"no --{what} given and the domain declares no init state")
        return d.initial
    tokens = [t for t in re.split(r"[\s,]+", text.strip().strip("{}")) if t]
    try:
        return State.from_literals(d.propositions, tokens)
    except DomainError as exc:
        raise CliError(EXIT_SEMANTIC, str(exc)) from None


def parse_ir(d: DomainSpec, text: str) -> list[str]:
    if text.strip().lower() == "all":
        return list(d.propositions)
    props = [p for p in re.split(r"[\s,]+", text.strip()) if p]
    if not props:
        raise CliError(EXIT_USAGE, "--ir needs at least one proposition")
    unknown = sorted(set(props) - set(d.propositions))
    if unknown:
        raise CliError(EXIT_SEMANTIC, f"unknown proposition(s) in --ir: {', '.join(unknown)}")
    return props


def _heuristic(loaded: Loaded, args) -> HeuristicTable:
    try:
        return build_heuristic(loaded.domain, parse_ir(loaded.domain, args.ir))
    except DomainError as exc:
        raise CliError(EXIT_SEMANTIC, str(exc)) from None


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if any(x < 0 for x in out):
        raise argparse.ArgumentTypeError("values must be non-negative")
    return out


def _depth_list(text: str) -> list[int]:
    try:
        return _int_list(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of depths: {text!r}") from None


def _search_config(args, memoize_default: bool = False) -> SearchConfig:
    memoize = memoize_default if args.memoize is None else args.memoize
    try:
        return SearchConfig(
            depth=args.depth,
            threshold=args.threshold,
            utility_pruning=not args.no_utility_pruning,
            expectation_pruning=not args.no_expectation_pruning,
            memoize=memoize,
            max_depth=args.max_depth,
        )
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None


# Output.


def manifest_for(loaded: Loaded, args) -> RunManifest:
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command", "domain", "out")}
    return RunManifest(str(loaded.path), loaded.sha256, args.command, params)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def json_document(manifest: RunManifest, data, timing: dict | None = None) -> str:
    return _json({"manifest": manifest.to_dict(), "data": data, "timing": timing or {}})


def csv_document(manifest: RunManifest, header, rows, timing: dict | None = None) -> str:
    buf = io.StringIO()
    buf.write("# manifest: " + json.dumps(manifest.to_dict(), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if timing:
        buf.write("# timing: " + json.dumps(timing, sort_keys=True) + "\n")
    return buf.getvalue()


def emit(args, text: str) -> None:
    if args.out is None:
        sys.stdout.write(text)
        return
    try:
        Path(args.out).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_USAGE, f"cannot write {args.out}: {exc.strerror or exc}") from None


# Commands.


def cmd_validate(args) -> int:
    loaded = load(args.domain)
    problems = violation_lines(loaded)
    if args.format == "json":
        data = {"valid": not problems, "violations": problems}
        emit(args, json_document(manifest_for(loaded, args), data))
    else:
        emit(args, "\n".join(problems) + "\n" if problems else f"{loaded.path}: ok\n")
    return EXIT_SEMANTIC if problems else EXIT_OK


def cmd_solve(args) -> int:
    loaded = load_valid(args.domain)
    m = _ground(loaded)
    if args.method == "pi":
        policy, v, report = policy_iteration(m)
    else:
        v, report = value_iteration(m, tol=args.tol)
        policy = greedy_policy(m, v)
    states = [
        {
            "index": s,
            "state": m.state(s).literals() if m.propositions else [],
            "value": float(v[s]),
            "action": m.action_names[policy[s]],
        }
        for s in range(m.n_states)
    ]
    timing = {"elapsed": report.elapsed}
    man = manifest_for(loaded, args)
    if args.format == "csv":
        rows = [(e["index"], " ".join(e["state"]), repr(e["value"]), e["action"]) for e in states]
        emit(args, csv_document(man, SOLVE_HEADER, rows, timing))
    else:
        data = {
            "method": args.method,
            "n_states": m.n_states,
            "actions": list(m.action_names),
            "discount": m.discount,
            "iterations": report.iterations,
            "residual": report.residual,
            "states": states,
        }
        emit(args, json_document(man, data, timing))
    return EXIT_OK


def cmd_heuristic(args) -> int:
    loaded = load_valid(args.domain)
    t0 = time.perf_counter()
    h = _heuristic(loaded, args)
    timing = {"elapsed": time.perf_counter() - t0}
    man = manifest_for(loaded, args)
    if args.format == "csv":
        rows = [
            (c["cluster"], c.get("mask", ""), repr(c["value"]), c["default_action"])
            for c in h.to_dict()["clusters"]
        ]
        emit(args, csv_document(man, ("cluster", "mask", "value", "default_action"), rows, timing))
    else:
        emit(args, json_document(man, h.to_dict(), timing))
    return EXIT_OK


def cmd_plan(args) -> int:
    loaded = load_valid(args.domain)
    s = parse_state_arg(loaded.domain, args.state, "state")
    m = _ground(loaded)
    h = _heuristic(loaded, args)
    cfg = _search_config(args)
    r = Searcher(m, h, cfg).best_action(s)
    data = {
        "state": s.literals(),
        "index": s.index,
        "action": r.action,
        "value": r.value,
        "default_action": h.default_action(s),
        "config": cfg.to_dict(),
        "stats": r.stats.to_dict(),
    }
    emit(args, json_document(manifest_for(loaded, args), data, {"elapsed": r.stats.elapsed}))
    return EXIT_OK


def cmd_run(args) -> int:
    loaded = load_valid(args.domain)
    start = parse_state_arg(loaded.domain, args.start, "start")
    m = _ground(loaded)
    h = _heuristic(loaded, args)
    cfg = _search_config(args)
    t0 = time.perf_counter()
    traj = run_episode(m, start, cfg, h, args.steps, args.seed, caching=not args.no_cache)
    elapsed = time.perf_counter() - t0
    man = manifest_for(loaded, args)
    if args.format == "csv":
        rows = [
            (
                k, " ".join(m.state(st.state).literals()), st.action,
                " ".join(m.state(st.next_state).literals()), repr(st.reward), int(st.cache_hit),
                0 if st.stats is None else st.stats.nodes_expanded,
            )
            for k, st in enumerate(traj.steps)
        ]
        emit(args, csv_document(man, RUN_HEADER, rows, {"elapsed": elapsed}))
        return EXIT_OK
    lines = [json.dumps({"manifest": man.to_dict()})]
    for k, st in enumerate(traj.steps):
        lines.append(json.dumps({"step": k, **st.to_dict(m)}))
    summary = {
        "discounted_return": traj.discounted_return,
        "termination": traj.termination,
        "steps": len(traj.steps),
        "searches": traj.searches(),
        "nodes_expanded": traj.nodes_expanded(),
        "final_state": m.state(traj.final_state).literals(),
    }
    lines.append(json.dumps({"summary": summary}))
    lines.append(json.dumps({"timing": {"elapsed": elapsed}}))
    emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_sweep(args) -> int:
    loaded = load_valid(args.domain)
    m = _ground(loaded)
    h = _heuristic(loaded, args)
    t0 = time.perf_counter()
    _, v_star, _ = policy_iteration(m)
    rows: list[tuple[int, PolicyComparison]] = []
    for depth in args.depths:
        args_d = argparse.Namespace(**{**vars(args), "depth": depth})
        cfg = _search_config(args_d, memoize_default=True)
        rows.append((depth, compare_policies(m, induced_policy(m, cfg, h), v_star, tol=args.tol)))
    timing = {"elapsed": time.perf_counter() - t0}
    man = manifest_for(loaded, args)
    if args.format == "json":
        data = [{"depth": d, **asdict(c)} for d, c in rows]
        emit(args, json_document(man, data, timing))
    else:
        emit(args, csv_document(man, PolicyComparison.CSV_HEADER, [c.csv_row(d) for d, c in rows], timing))
    return EXIT_OK


def cmd_bench(args) -> int:
    loaded = load_valid(args.domain)
    start = parse_state_arg(loaded.domain, args.start, "start")
    m = _ground(loaded)
    h = _heuristic(loaded, args)
    cfg = _search_config(args)
    modes = [x.strip() for x in args.modes.split(",") if x.strip()]
    bad = [x for x in modes if x not in BENCH_MODES]
    if bad:
        raise CliError(EXIT_USAGE, f"unknown mode(s) {', '.join(bad)}; choose from {', '.join(BENCH_MODES)}")
    rows = bench_suite(m, h, start, args.depths, cfg, seed=args.seed, modes=modes, steps=args.steps)
    man = manifest_for(loaded, args)
    if args.format == "json":
        data = []
        timing = []
        for r in rows:
            entry = asdict(r)
            timing.append({"depth": r.depth, "mode": r.mode, "elapsed": entry.pop("elapsed")})
            data.append(entry)
        emit(args, json_document(man, data, {"rows": timing}))
    else:
        emit(args, csv_document(man, BENCH_HEADER, [r.csv_row() for r in rows]))
    return EXIT_OK


# Argument parsing.


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--domain", required=True, help="domain file, or a bundled name such as coffee-base")
    common.add_argument("--out", help="write output here instead of stdout")

    search = argparse.ArgumentParser(add_help=False)
    search.add_argument("--ir", required=True, help="immediately relevant propositions, comma separated, or 'all'")
    search.add_argument("--depth", type=int, default=2, help="search depth (default 2)")
    search.add_argument("--threshold", type=float, help="expand until path probability drops below this")
    search.add_argument("--max-depth", type=int, default=12, help="depth cap in threshold mode (default 12)")
    search.add_argument("--no-utility-pruning", action="store_true")
    search.add_argument("--no-expectation-pruning", action="store_true")
    search.add_argument("--memoize", action=argparse.BooleanOptionalAction, default=None,
                        help="share subtree values within one search (sweep: on, otherwise off)")

    p = argparse.ArgumentParser(prog="dtplan", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def fmt(sp, default, choices=("json", "csv")):
        sp.add_argument("--format", choices=choices, default=default)

    sp = sub.add_parser("validate", parents=[common], help="check a domain file")
    fmt(sp, "text", ("text", "json"))
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("solve", parents=[common], help="exact values and policy")
    sp.add_argument("--method", choices=("pi", "vi"), default="pi")
    sp.add_argument("--tol", type=float, default=1e-6, help="value iteration accuracy (default 1e-6)")
    fmt(sp, "json")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("heuristic", parents=[common], help="abstraction heuristic table")
    sp.add_argument("--ir", required=True, help="immediately relevant propositions, comma separated, or 'all'")
    fmt(sp, "json")
    sp.set_defaults(func=cmd_heuristic)

    sp = sub.add_parser("plan", parents=[common, search], help="best action for one state")
    sp.add_argument("--state", help="literals fixing every proposition (default: the init state)")
    sp.set_defaults(func=cmd_plan, format="json")

    sp = sub.add_parser("run", parents=[common, search], help="search and execute for a number of steps")
    sp.add_argument("--start", help="literals fixing every proposition (default: the init state)")
    sp.add_argument("--steps", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--no-cache", action="store_true", help="search again in revisited states")
    fmt(sp, "json")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", parents=[common, search], help="induced policy quality per depth")
    sp.add_argument("--depths", type=_depth_list, default=[0, 1, 2, 3, 4, 5], help="e.g. 0-5 or 1,3,5")
    sp.add_argument("--tol", type=float, default=1e-6, help="value loss counted as an error (default 1e-6)")
    fmt(sp, "csv")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("bench", parents=[common, search], help="search cost tables")
    sp.add_argument("--start", help="literals fixing every proposition (default: the init state)")
    sp.add_argument("--depths", type=_depth_list, default=[1, 2, 3])
    sp.add_argument("--modes", default=",".join(BENCH_MODES), help="comma separated subset of " + ", ".join(BENCH_MODES))
    sp.add_argument("--steps", type=int, default=10, help="actions planned or executed per mode")
    sp.add_argument("--seed", type=int, default=0)
    fmt(sp, "csv")
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "steps", 1) < 1:
        parser.error("--steps must be at least 1")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"dtplan {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
