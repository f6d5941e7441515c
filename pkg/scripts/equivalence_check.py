"""Compare exhaustive machine exploration with declarative enumeration, and
replay every enumerated graph on the machine."""

import argparse
import time

from memfair import ALL_MODELS, enumerate_consistent_graphs
from memfair.cli import load_program
from memfair.correspondence import graph_to_fair_trace, trace_to_graph
from memfair.operational import explore_behaviors


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("programs", nargs="*", default=["sb", "mp", "2rmw", "sb_rmws", "hb_acyclic"])
    args = ap.parse_args()
    for name in args.programs:
        p = load_program(name)
        for m in ALL_MODELS:
            t = time.time()
            res = enumerate_consistent_graphs(p, m)
            op = explore_behaviors(p, m)
            same = op.behaviors == res.behaviors()
            trips = sum(trace_to_graph(graph_to_fair_trace(c.graph, m)).behavior() == c.graph.behavior() for c in res.graphs)
            print(
                f"{name:<12} {str(m):<10} behaviors {len(op.behaviors):>3} op / {len(res.behaviors()):>3} decl "
                f"{'equal' if same else 'DIFFER'}  round-trips {trips}/{len(res.graphs)}  {time.time() - t:.2f}s"
            )


if __name__ == "__main__":
    main()
