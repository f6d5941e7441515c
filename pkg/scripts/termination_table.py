"""Termination verdicts for the bundled loop programs under every model."""

import argparse
import time

from memfair import ALL_MODELS, analyze_termination
from memfair.cli import load_program
from memfair.program import unroll_outer_loops

PROGRAMS = [
    ("spinloop", None),
    ("rloop", None),
    ("wwrloop", None),
    ("spinlock_client", None),
    ("spinlock_client3", None),
    ("ticketlock_client", 1),
    ("ticketlock_client", 2),
    ("mcs_client", None),
    ("mcs_client_nofence", None),
]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dot", action="store_true", help="print divergence witnesses as DOT")
    args = ap.parse_args()
    for name, rounds in PROGRAMS:
        p = load_program(name)
        if rounds:
            p = unroll_outer_loops(p, rounds)
        label = name if rounds is None else f"{name} x{rounds}"
        for m in ALL_MODELS:
            t = time.time()
            v = analyze_termination(p, m)
            extra = f" stuck={list(v.stuck_threads)}" if v.stuck_threads else ""
            print(f"{label:<22} {str(m):<10} {v.outcome:<22} {time.time() - t:6.2f}s{extra}")
            if args.dot and v.witness is not None:
                print(v.witness.to_dot(f"{name}_{m}"))


if __name__ == "__main__":
    main()
