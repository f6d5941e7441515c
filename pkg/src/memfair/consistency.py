"""Declarative consistency predicates for SC, TSO, RA and StrongCOH."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass

from .errors import E_SYNTAX, MemfairError
from .graphs import ExecutionGraph, Relation


class ModelId(enum.Enum):
    SC = "sc"
    TSO = "tso"
    RA = "ra"
    StrongCOH = "strongcoh"

    def __str__(self) -> str:
        return self.name

    @staticmethod
    def parse(text: str | "ModelId") -> "ModelId":
        if isinstance(text, ModelId):
            return text
        key = text.strip().lower().replace("-", "").replace("_", "")
        for m in ModelId:
            if m.value == key or (m is ModelId.StrongCOH and key in ("scoh", "coh")):
                return m
        raise MemfairError(E_SYNTAX, f"unknown model {text!r}")


ALL_MODELS = (ModelId.SC, ModelId.TSO, ModelId.RA, ModelId.StrongCOH)


@dataclass(frozen=True)
class DerivedRelations:
    hb_sc: Relation
    rfe: Relation
    ppo: Relation
    hb_tso: Relation
    sc_loc: Relation
    hb_ra: Relation
    ra_loc: Relation


def _rfe(g: ExecutionGraph) -> Relation:
    return g.rf_rel - g.po


def _ppo(g: ExecutionGraph) -> Relation:
    plain_w = g.writes_mask & ~g.rmw_mask
    plain_r = g.reads_mask & ~g.rmw_mask
    return g.po - Relation.product(g.n, plain_w, plain_r)


def _hb_ra(g: ExecutionGraph) -> Relation:
    return (g.po | g.rf_rel).plus()


def derived(g: ExecutionGraph) -> DerivedRelations:
    com = g.rf_rel | g.mo_rel | g.fr
    rfe = _rfe(g)
    ppo = _ppo(g)
    hb_ra = _hb_ra(g)
    return DerivedRelations(
        hb_sc=(g.po | com).plus(),
        rfe=rfe,
        ppo=ppo,
        hb_tso=(ppo | rfe | g.mo_rel | g.fr).plus(),
        sc_loc=(g.po_loc | com).plus(),
        hb_ra=hb_ra,
        ra_loc=((hb_ra & g.same_loc) | com).plus(),
    )


def base_relations(g: ExecutionGraph, m: ModelId) -> list[tuple[str, Relation]]:
    """The (named) relation unions whose closures must be irreflexive under ``m``.

    The names double as edge vocabularies for cycle reporting.
    """
    com = g.rf_rel | g.mo_rel | g.fr
    if m is ModelId.SC:
        return [("hb_sc", g.po | com)]
    if m is ModelId.TSO:
        return [("hb_tso", _ppo(g) | _rfe(g) | g.mo_rel | g.fr), ("sc_loc", g.po_loc | com)]
    if m is ModelId.RA:
        return [("ra_loc", (_hb_ra(g) & g.same_loc) | com)]
    return [("hb_ra", g.po | g.rf_rel), ("sc_loc", g.po_loc | com)]


def consistent(g: ExecutionGraph, m: ModelId) -> bool:
    """Fast yes/no check: every base union is acyclic."""
    return all(rel.is_acyclic() for _, rel in base_relations(g, m))


@dataclass(frozen=True)
class ConsistencyVerdict:
    consistent: bool
    relation: str | None = None
    cycle: tuple[int, ...] | None = None  # event indices, first == minimum, closing edge implicit

    def __bool__(self) -> bool:
        return self.consistent


def _shortest_cycle_through(rel: Relation, start: int) -> list[int] | None:
    """Shortest cycle through ``start``; among equals, the lexicographically least."""
    n = rel.n
    # BFS distances to ``start`` along reversed edges give shortest suffixes
    dist = [None] * n
    inv = rel.inverse()
    dist[start] = 0
    q = deque([start])
    while q:
        v = q.popleft()
        for u in range(n):
            if inv.rows[v] >> u & 1 and dist[u] is None:
                dist[u] = dist[v] + 1
                q.append(u)
    best = None
    for s in range(n):
        if rel.rows[start] >> s & 1 and dist[s] is not None:
            if best is None or dist[s] < best:
                best = dist[s]
    if best is None:
        return None
    # greedy walk picking the smallest successor that keeps the cycle minimal
    path = [start]
    v = start
    remaining = best + 1
    while remaining > 1:
        nxt = min(s for s in range(n) if rel.rows[v] >> s & 1 and dist[s] == remaining - 1 and s != start)
        path.append(nxt)
        v = nxt
        remaining -= 1
    return path


def find_cycle(rel: Relation) -> tuple[int, ...] | None:
    """Lexicographically least cycle among the shortest cycles of ``rel``."""
    best: tuple[int, tuple[int, ...]] | None = None
    for s in range(rel.n):
        if (s, s) in rel:
            cand = (1, (s,))
        else:
            path = _shortest_cycle_through(rel, s)
            if path is None:
                continue
            k = path.index(min(path))
            cand = (len(path), tuple(path[k:] + path[:k]))
        if best is None or cand < best:
            best = cand
    return None if best is None else best[1]


def is_consistent(g: ExecutionGraph, m: ModelId) -> ConsistencyVerdict:
    m = ModelId.parse(m)
    for name, rel in base_relations(g, m):
        if not rel.is_acyclic():
            return ConsistencyVerdict(False, name, find_cycle(rel))
    return ConsistencyVerdict(True)
