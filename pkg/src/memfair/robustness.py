"""Finite execution-graph robustness and prefix-closedness checks."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .consistency import ModelId, consistent, is_consistent
from .enumeration import ExplorationBounds, enumerate_consistent_graphs, graph_key
from .graphs import ExecutionGraph, prefix_closure, restrict_to_prefix
from .program import ConcurrentProgram


@dataclass(frozen=True)
class RobustnessVerdict:
    robust: bool
    witness: ExecutionGraph | None = None
    graphs_checked: int = 0
    cycle: tuple[int, ...] | None = None  # hb_sc cycle of the witness

    def to_json(self) -> dict:
        d: dict = {"robust": self.robust, "graphsChecked": self.graphs_checked}
        if self.witness is not None:
            d["witness"] = self.witness.to_json()
            d["cycle"] = list(self.cycle or ())
        return d


def check_finite_robustness(
    p: ConcurrentProgram, m: ModelId | str, b: ExplorationBounds | None = None
) -> RobustnessVerdict:
    """Robust iff every ``m``-consistent graph of a finite run prefix is SC-consistent.

    The witness is a smallest SC-inconsistent graph; since every prefix of an
    enumerated graph is enumerated too, it has no proper prefix that is itself
    a witness.
    """
    m = ModelId.parse(m)
    res = enumerate_consistent_graphs(p, m, b, keep_partial=True)
    graphs = res.partial or []
    bad = [g for g in graphs if not consistent(g, ModelId.SC)]
    if not bad:
        return RobustnessVerdict(True, graphs_checked=len(graphs))
    w = min(bad, key=lambda g: (g.n, graph_key(g)))
    return RobustnessVerdict(False, w, len(graphs), is_consistent(w, ModelId.SC).cycle)


def proper_prefixes(g: ExecutionGraph) -> list[int]:
    """Every po∪rf-downward-closed event set (as a bitmask) strictly smaller than ``g``."""
    full = (1 << g.n) - 1
    out = {g.init_mask}
    frontier = [g.init_mask]
    while frontier:
        mask = frontier.pop()
        for i in range(g.n):
            if mask >> i & 1:
                continue
            grown = prefix_closure(g, mask | 1 << i)
            if grown == mask | 1 << i and grown not in out:
                out.add(grown)
                frontier.append(grown)
    out.discard(full)
    return sorted(out)


def is_minimal_witness(g: ExecutionGraph, m: ModelId | str) -> bool:
    """``g`` is m-consistent, SC-inconsistent, and no proper prefix is both."""
    m = ModelId.parse(m)
    if not consistent(g, m) or consistent(g, ModelId.SC):
        return False
    for mask in proper_prefixes(g):
        h = restrict_to_prefix(g, mask)
        if consistent(h, m) and not consistent(h, ModelId.SC):
            return False
    return True


@dataclass(frozen=True)
class PrefixClosureVerdict:
    ok: bool
    checked: int
    counterexample: int | None = None  # event mask of an inconsistent prefix


def check_prefix_closedness(g: ExecutionGraph, m: ModelId | str, samples: int = 20, seed: int = 0) -> PrefixClosureVerdict:
    """Restrict ``g`` to random po∪rf-prefixes (plus the init-only and full ones) and re-check ``m``."""
    m = ModelId.parse(m)
    rng = random.Random(seed)
    full = (1 << g.n) - 1
    masks = [g.init_mask, full]
    for _ in range(samples):
        pick = sum(1 << i for i in range(g.n) if rng.random() < rng.random())
        masks.append(prefix_closure(g, pick))
    for mask in masks:
        if not consistent(restrict_to_prefix(g, mask), m):
            return PrefixClosureVerdict(False, len(masks), mask)
    return PrefixClosureVerdict(True, len(masks))
