"""Print the allowed/forbidden table for the bundled litmus programs."""

import argparse
import time

from memfair import ALL_MODELS, check_outcome
from memfair.cli import load_program

QUERIES = [
    ("sb", "a=0 && b=0"),
    ("mp", "a=1 && b=0"),
    ("2rmw", "a=0 && b=0"),
    ("sb_rmws", "a=0 && b=0"),
    ("hb_acyclic", "a1=0 && a2=0 && b1=0 && b2=1"),
]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--timing", action="store_true", help="add seconds per cell")
    args = ap.parse_args()
    print(f"{'program':<12} {'outcome':<32}" + "".join(f"{str(m):>12}" for m in ALL_MODELS))
    for name, query in QUERIES:
        p = load_program(name)
        cells = []
        for m in ALL_MODELS:
            t = time.time()
            v = check_outcome(p, m, query)
            cell = "allowed" if v.allowed else "forbidden"
            if args.timing:
                cell += f" {time.time() - t:.2f}"
            cells.append(f"{cell:>12}")
        print(f"{name:<12} {query:<32}" + "".join(cells))


if __name__ == "__main__":
    main()
