"""Command-line front end.

Exit codes: 0 when a command has no verdict (simulate, corpus), 2 on parse or
bound errors, and 10/11/12 for verdicts:

* check: 10 allowed, 11 forbidden
* terminate: 10 terminates, 11 may diverge, 12 unsupported
* robust: 10 robust, 11 not robust
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from .consistency import ModelId, is_consistent
from .correspondence import trace_to_graph
from .enumeration import ExplorationBounds, check_outcome
from .errors import MemfairError
from .operational import FairSchedulerConfig, behavior_of_trace, fair_run
from .program import ConcurrentProgram, detect_spinloops, parse_program, unroll_outer_loops
from .robustness import check_finite_robustness
from .termination import ALL_TERMINATE, MAY_DIVERGE, analyze_termination

EXIT_OK, EXIT_ERROR = 0, 2
EXIT_YES, EXIT_NO, EXIT_UNSUPPORTED = 10, 11, 12


def corpus_names() -> list[str]:
    root = resources.files("memfair") / "corpus"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".lit"))


def load_program(name: str) -> ConcurrentProgram:
    """Read a program from a path, or from the bundled corpus by name."""
    path = Path(name)
    if path.is_file():
        return parse_program(path.read_text(), path.stem)
    stem = name[:-4] if name.endswith(".lit") else name
    res = resources.files("memfair") / "corpus" / f"{stem}.lit"
    if res.is_file():
        return parse_program(res.read_text(), stem)
    raise FileNotFoundError(f"no such program: {name}")


def _bounds(args, p: ConcurrentProgram) -> ExplorationBounds:
    cap = getattr(args, "spin_cap", None)
    if cap is None and any(tl.loops for _, tl in detect_spinloops(p).threads):
        cap = 2
    return ExplorationBounds(max_events_per_thread=args.max_events, spinloop_cap=cap)


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text)


def cmd_check(args) -> int:
    p = load_program(args.file)
    m = ModelId.parse(args.model)
    v = check_outcome(p, m, args.assertion, _bounds(args, p))
    word = "allowed" if v.allowed else "forbidden"
    payload = {"model": str(m), "assert": args.assertion, "verdict": word, "graphsChecked": v.graphs_checked}
    text = f"{p.name or args.file} under {m}: {args.assertion} is {word} ({v.graphs_checked} terminated graphs)"
    if v.witness is not None:
        payload["witness"] = v.witness.to_json()
        payload["registers"] = dict(v.registers)
        if args.emit_graph:
            text += "\n" + v.witness.to_dot()
    _emit(args, payload, text)
    return EXIT_YES if v.allowed else EXIT_NO


def cmd_terminate(args) -> int:
    p = load_program(args.file)
    if args.rounds is not None:
        p = unroll_outer_loops(p, args.rounds)
    m = ModelId.parse(args.model)
    b = ExplorationBounds(max_events_per_thread=args.max_events) if args.max_events else None
    v = analyze_termination(p, m, b)
    payload = {"model": str(m), **v.to_json()}
    text = f"{p.name or args.file} under {m}: {v.outcome}"
    if v.reason:
        text += f" ({v.reason})"
    if v.extended_model:
        text += "\nnote: relies on read-extensibility of this model"
    if v.witness is not None:
        text += f"\nstuck threads: {', '.join(map(str, v.stuck_threads))}\n" + v.witness.to_dot("witness")
        payload["dot"] = v.witness.to_dot("witness")
    _emit(args, payload, text)
    if v.outcome == ALL_TERMINATE:
        return EXIT_YES
    return EXIT_NO if v.outcome == MAY_DIVERGE else EXIT_UNSUPPORTED


def cmd_simulate(args) -> int:
    p = load_program(args.file)
    m = ModelId.parse(args.model)
    cfg = FairSchedulerConfig(
        max_steps=args.max_steps, delay_bound=args.delay_bound, seed=args.seed, never_propagate=args.never_propagate
    )
    run = fair_run(p, m, cfg)
    payload = {
        "model": str(m),
        "seed": args.seed,
        "terminated": run.terminated,
        "steps": len(run.trace),
        "trace": run.trace.to_json(),
        "registers": run.final_registers,
    }
    lines = [f"{p.name or args.file} under {m}, seed {args.seed}: {len(run.trace)} steps, "
             + ("terminated" if run.terminated else "step limit reached")]
    lines += [json.dumps(s, sort_keys=True) for s in payload["trace"]]
    lines.append("registers: " + ", ".join(f"{k}={v}" for k, v in sorted(run.final_registers.items())))
    if args.emit_graph:
        g = trace_to_graph(run.trace)
        verdict = is_consistent(g, m)
        if not verdict:
            raise MemfairError("E_INCONSISTENT_INPUT", f"trace graph violates {verdict.relation}")
        if behavior_of_trace(run.trace) != g.behavior():
            raise MemfairError("E_INCONSISTENT_INPUT", "trace graph changes the behavior")
        payload["graph"] = g.to_json()
        lines.append(g.to_dot())
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


def cmd_robust(args) -> int:
    p = load_program(args.file)
    if args.rounds is not None:
        p = unroll_outer_loops(p, args.rounds)
    m = ModelId.parse(args.model)
    v = check_finite_robustness(p, m, _bounds(args, p))
    payload = {"model": str(m), **v.to_json()}
    text = f"{p.name or args.file} under {m}: " + ("robust" if v.robust else "not robust")
    text += f" ({v.graphs_checked} graphs)"
    if v.witness is not None:
        text += "\n" + v.witness.to_dot("witness")
    _emit(args, payload, text)
    return EXIT_YES if v.robust else EXIT_NO


def cmd_corpus(args) -> int:
    for name in corpus_names():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="memfair", description="Litmus checking and spinloop termination under weak memory.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, max_events: int | None = 16):
        sp.add_argument("file", help="program file, or the name of a bundled program")
        sp.add_argument("--model", default="sc", help="sc, tso, ra or strongcoh")
        sp.add_argument("--json", action="store_true", help="machine-readable output")
        sp.add_argument("--max-events", type=int, default=max_events, help="events per thread")

    sp = sub.add_parser("check", help="is a final-state assertion reachable?")
    common(sp)
    sp.add_argument("--assert", dest="assertion", required=True)
    sp.add_argument("--spin-cap", type=int, default=None, help="spinloop iterations explored")
    sp.add_argument("--emit-graph", action="store_true", help="print the witness graph as DOT")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("terminate", help="do all spinloops terminate under fair memory?")
    common(sp, None)
    sp.add_argument("--rounds", type=int, default=None, help="unroll each thread's outer loop this many times")
    sp.set_defaults(func=cmd_terminate)

    sp = sub.add_parser("simulate", help="run under a random bounded-delay fair scheduler")
    common(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-steps", type=int, default=1000)
    sp.add_argument("--delay-bound", type=int, default=None)
    sp.add_argument("--never-propagate", action="store_true", help="unfair: never take silent transitions")
    sp.add_argument("--emit-graph", action="store_true", help="convert the trace to a graph and check it")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("robust", help="are all consistent graphs SC-consistent?")
    common(sp)
    sp.add_argument("--spin-cap", type=int, default=None)
    sp.add_argument("--rounds", type=int, default=None)
    sp.set_defaults(func=cmd_robust)

    sp = sub.add_parser("corpus", help="list bundled programs")
    sp.set_defaults(func=cmd_corpus)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MemfairError, FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
