"""Events, execution graphs and the relation algebra used by every model.

Relations are dense: a graph with ``n`` events indexes them ``0..n-1`` in the
canonical order (init events sorted by location, then ``(tid, sn)``) and a
relation stores one Python integer bitmask of successors per event.  Graphs
handled here have a few dozen events, so closures are computed eagerly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import E_CYCLIC, E_NOT_PREFIX_CLOSED, MemfairError

READ, WRITE, RMW = "R", "W", "RMW"


# ---------------------------------------------------------------------------
# labels and events
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Label:
    kind: str
    loc: str
    val_r: int | None = None
    val_w: int | None = None

    @property
    def typ(self) -> str:
        return self.kind

    @property
    def is_read(self) -> bool:
        return self.kind != WRITE

    @property
    def is_write(self) -> bool:
        return self.kind != READ

    def __str__(self) -> str:
        if self.kind == READ:
            return f"R({self.loc},{self.val_r})"
        if self.kind == WRITE:
            return f"W({self.loc},{self.val_w})"
        return f"RMW({self.loc},{self.val_r},{self.val_w})"

    def to_json(self) -> dict:
        return {"kind": self.kind, "loc": self.loc, "valR": self.val_r, "valW": self.val_w}

    @staticmethod
    def from_json(d: Mapping) -> "Label":
        return Label(d["kind"], d["loc"], d.get("valR"), d.get("valW"))


def R(loc: str, v: int) -> Label:
    return Label(READ, loc, v, None)


def W(loc: str, v: int) -> Label:
    return Label(WRITE, loc, None, v)


def U(loc: str, vr: int, vw: int) -> Label:
    return Label(RMW, loc, vr, vw)


@dataclass(frozen=True)
class Event:
    """``tid``/``sn`` are ``None`` for initialization events."""

    tid: int | None
    sn: int | None
    label: Label

    @property
    def is_init(self) -> bool:
        return self.tid is None

    @property
    def loc(self) -> str:
        return self.label.loc

    @property
    def key(self) -> tuple:
        if self.tid is None:
            return (0, 0, 0, self.label.loc)
        return (1, self.tid, self.sn, "")

    def __str__(self) -> str:
        if self.is_init:
            return f"init:{self.label}"
        return f"{self.tid}.{self.sn}:{self.label}"


def init_event(loc: str) -> Event:
    return Event(None, None, W(loc, 0))


# ---------------------------------------------------------------------------
# relations
# ---------------------------------------------------------------------------


def _bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass(frozen=True)
class Relation:
    """Binary relation on ``range(n)``; ``rows[a]`` is the successor bitmask of ``a``."""

    n: int
    rows: tuple[int, ...]

    @staticmethod
    def empty(n: int) -> "Relation":
        return Relation(n, (0,) * n)

    @staticmethod
    def from_pairs(n: int, pairs: Iterable[tuple[int, int]]) -> "Relation":
        rows = [0] * n
        for a, b in pairs:
            rows[a] |= 1 << b
        return Relation(n, tuple(rows))

    @staticmethod
    def identity(n: int, mask: int | None = None) -> "Relation":
        if mask is None:
            mask = (1 << n) - 1
        return Relation(n, tuple((1 << i) if mask >> i & 1 else 0 for i in range(n)))

    @staticmethod
    def product(n: int, dom: int, cod: int) -> "Relation":
        return Relation(n, tuple(cod if dom >> i & 1 else 0 for i in range(n)))

    def pairs(self) -> list[tuple[int, int]]:
        return [(a, b) for a in range(self.n) for b in _bits(self.rows[a])]

    def __contains__(self, pair: tuple[int, int]) -> bool:
        a, b = pair
        return bool(self.rows[a] >> b & 1)

    def __len__(self) -> int:
        return sum(bin(r).count("1") for r in self.rows)

    def __bool__(self) -> bool:
        return any(self.rows)

    def __or__(self, other: "Relation") -> "Relation":
        return Relation(self.n, tuple(a | b for a, b in zip(self.rows, other.rows)))

    def __and__(self, other: "Relation") -> "Relation":
        return Relation(self.n, tuple(a & b for a, b in zip(self.rows, other.rows)))

    def __sub__(self, other: "Relation") -> "Relation":
        return Relation(self.n, tuple(a & ~b for a, b in zip(self.rows, other.rows)))

    def compose(self, other: "Relation") -> "Relation":
        out = []
        for r in self.rows:
            acc = 0
            for b in _bits(r):
                acc |= other.rows[b]
            out.append(acc)
        return Relation(self.n, tuple(out))

    def inverse(self) -> "Relation":
        rows = [0] * self.n
        for a in range(self.n):
            for b in _bits(self.rows[a]):
                rows[b] |= 1 << a
        return Relation(self.n, tuple(rows))

    def restrict(self, dom: int, cod: int | None = None) -> "Relation":
        """``[dom] ; self ; [cod]`` with sets given as bitmasks."""
        if cod is None:
            cod = dom
        return Relation(self.n, tuple(r & cod if dom >> i & 1 else 0 for i, r in enumerate(self.rows)))

    def plus(self) -> "Relation":
        rows = list(self.rows)
        for k in range(self.n):
            bk = 1 << k
            rk = rows[k]
            if not rk:
                continue
            for i in range(self.n):
                if rows[i] & bk:
                    rows[i] |= rk
        return Relation(self.n, tuple(rows))

    def star(self) -> "Relation":
        return self.plus() | Relation.identity(self.n)

    def power(self, k: int) -> "Relation":
        out = Relation.identity(self.n)
        for _ in range(k):
            out = out.compose(self)
        return out

    def upto(self, k: int) -> "Relation":
        """``R^1 ∪ ... ∪ R^k``."""
        acc = Relation.empty(self.n)
        cur = Relation.identity(self.n)
        for _ in range(k):
            cur = cur.compose(self)
            acc = acc | cur
        return acc

    def is_irreflexive(self) -> bool:
        return all(not (r >> i & 1) for i, r in enumerate(self.rows))

    def is_acyclic(self) -> bool:
        # Kahn's algorithm; cheaper than a closure when only a yes/no is needed
        indeg = [0] * self.n
        for r in self.rows:
            for b in _bits(r):
                indeg[b] += 1
        stack = [i for i in range(self.n) if indeg[i] == 0]
        seen = 0
        while stack:
            a = stack.pop()
            seen += 1
            for b in _bits(self.rows[a]):
                indeg[b] -= 1
                if indeg[b] == 0:
                    stack.append(b)
        return seen == self.n

    def predecessors(self, b: int) -> int:
        bb = 1 << b
        return sum(1 << a for a in range(self.n) if self.rows[a] & bb)

    def domain_of(self, cod: int) -> int:
        """Bitmask of ``dom(self ; [cod])``."""
        return sum(1 << a for a in range(self.n) if self.rows[a] & cod)


# ---------------------------------------------------------------------------
# behaviors
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Behavior:
    """Per-thread label sequences; threads with empty sequences are omitted."""

    threads: tuple[tuple[int, tuple[Label, ...]], ...] = ()

    @staticmethod
    def of(per_thread: Mapping[int, Sequence[Label]]) -> "Behavior":
        return Behavior(tuple(sorted((t, tuple(ls)) for t, ls in per_thread.items() if ls)))

    def __getitem__(self, tid: int) -> tuple[Label, ...]:
        for t, ls in self.threads:
            if t == tid:
                return ls
        return ()

    def as_dict(self) -> dict[int, tuple[Label, ...]]:
        return dict(self.threads)

    def __str__(self) -> str:
        return " | ".join(f"{t}: " + " ".join(map(str, ls)) for t, ls in self.threads) or "<empty>"


def events_of_behavior(b: Behavior | Mapping[int, Sequence[Label]], locations: Iterable[str] = ()) -> tuple[Event, ...]:
    """Init events (for ``locations`` plus every location the behavior touches) and one event per label."""
    per = b.as_dict() if isinstance(b, Behavior) else dict(b)
    locs = set(locations)
    evs: list[Event] = []
    for tid, labels in per.items():
        for sn, lab in enumerate(labels):
            evs.append(Event(tid, sn, lab))
            locs.add(lab.loc)
    evs.extend(init_event(x) for x in locs)
    return tuple(sorted(evs, key=lambda e: e.key))


# ---------------------------------------------------------------------------
# execution graphs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExecutionGraph:
    """``events`` in canonical order; ``rf`` holds (write, read) index pairs and
    ``mo`` the full strict per-location order as index pairs."""

    events: tuple[Event, ...]
    rf: frozenset[tuple[int, int]] = field(default_factory=frozenset)
    mo: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    # -- construction -------------------------------------------------------

    @staticmethod
    def build(
        events: Iterable[Event],
        rf: Mapping[Event, Event] | Iterable[tuple[Event, Event]] = (),
        mo: Mapping[str, Sequence[Event]] | Iterable[tuple[Event, Event]] = (),
    ) -> "ExecutionGraph":
        """``rf`` maps read -> write (or lists (write, read) pairs); ``mo`` maps a
        location to its writes in order (or lists pairs, closed transitively)."""
        evs = tuple(sorted(set(events), key=lambda e: e.key))
        idx = {e: i for i, e in enumerate(evs)}
        if isinstance(rf, Mapping):
            rf_pairs = frozenset((idx[w], idx[r]) for r, w in rf.items())
        else:
            rf_pairs = frozenset((idx[w], idx[r]) for w, r in rf)
        if isinstance(mo, Mapping):
            mo_pairs = set()
            for seq in mo.values():
                ids = [idx[e] for e in seq]
                mo_pairs.update((a, b) for i, a in enumerate(ids) for b in ids[i + 1:])
            mo_fs = frozenset(mo_pairs)
        else:
            rel = Relation.from_pairs(len(evs), ((idx[a], idx[b]) for a, b in mo)).plus()
            mo_fs = frozenset(rel.pairs())
        return ExecutionGraph(evs, rf_pairs, mo_fs)

    @staticmethod
    def init_only(locations: Iterable[str]) -> "ExecutionGraph":
        return ExecutionGraph.build(init_event(x) for x in locations)

    # -- basic views ----------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.events)

    @cached_property
    def index(self) -> dict[Event, int]:
        return {e: i for i, e in enumerate(self.events)}

    @cached_property
    def locations(self) -> tuple[str, ...]:
        return tuple(sorted({e.loc for e in self.events}))

    def _mask(self, pred) -> int:
        return sum(1 << i for i, e in enumerate(self.events) if pred(e))

    @cached_property
    def init_mask(self) -> int:
        return self._mask(lambda e: e.is_init)

    @cached_property
    def reads_mask(self) -> int:
        return self._mask(lambda e: e.label.is_read)

    @cached_property
    def writes_mask(self) -> int:
        return self._mask(lambda e: e.label.is_write)

    @cached_property
    def rmw_mask(self) -> int:
        return self._mask(lambda e: e.label.kind == RMW)

    def loc_mask(self, loc: str) -> int:
        return self._mask(lambda e: e.loc == loc)

    def thread_mask(self, tid: int) -> int:
        return self._mask(lambda e: e.tid == tid)

    @cached_property
    def tids(self) -> tuple[int, ...]:
        return tuple(sorted({e.tid for e in self.events if e.tid is not None}))

    @cached_property
    def rf_source(self) -> dict[int, int]:
        return {r: w for w, r in self.rf}

    def writes_to(self, loc: str) -> list[int]:
        """Writes to ``loc`` in mo order."""
        ws = [i for i, e in enumerate(self.events) if e.loc == loc and e.label.is_write]
        mo = self.mo
        return sorted(ws, key=lambda w: sum(1 for v in ws if (v, w) in mo))

    def behavior(self) -> Behavior:
        per: dict[int, list[tuple[int, Label]]] = {}
        for e in self.events:
            if not e.is_init:
                per.setdefault(e.tid, []).append((e.sn, e.label))
        return Behavior.of({t: [lab for _, lab in sorted(v)] for t, v in per.items()})

    # -- base and derived relations ---------------------------------------------

    @cached_property
    def po(self) -> Relation:
        non_init = ~self.init_mask & ((1 << self.n) - 1)
        rows = [non_init if e.is_init else 0 for e in self.events]
        per: dict[int, list[tuple[int, int]]] = {}
        for i, e in enumerate(self.events):
            if not e.is_init:
                per.setdefault(e.tid, []).append((e.sn, i))
        for evs in per.values():
            later = 0
            for _, i in sorted(evs, reverse=True):
                rows[i] = later
                later |= 1 << i
        return Relation(self.n, tuple(rows))

    @cached_property
    def rf_rel(self) -> Relation:
        return Relation.from_pairs(self.n, self.rf)

    @cached_property
    def mo_rel(self) -> Relation:
        return Relation.from_pairs(self.n, self.mo)

    @cached_property
    def fr(self) -> Relation:
        return self.rf_rel.inverse().compose(self.mo_rel) - Relation.identity(self.n)

    @cached_property
    def same_loc(self) -> Relation:
        masks = {x: self.loc_mask(x) for x in self.locations}
        return Relation(self.n, tuple(masks[e.loc] for e in self.events))

    @cached_property
    def po_loc(self) -> Relation:
        return self.po & self.same_loc

    # -- export -------------------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "events": [
                {"tid": e.tid, "sn": e.sn, "kind": e.label.kind, "loc": e.loc,
                 "valR": e.label.val_r, "valW": e.label.val_w}
                for e in self.events
            ],
            "rf": sorted([w, r] for w, r in self.rf),
            "mo": sorted([a, b] for a, b in self.mo),
        }

    @staticmethod
    def from_json(d: Mapping | str) -> "ExecutionGraph":
        if isinstance(d, str):
            d = json.loads(d)
        evs = [Event(x["tid"], x["sn"], Label(x["kind"], x["loc"], x.get("valR"), x.get("valW"))) for x in d["events"]]
        rf = [(evs[w], evs[r]) for w, r in d.get("rf", [])]
        mo = [(evs[a], evs[b]) for a, b in d.get("mo", [])]
        return ExecutionGraph.build(evs, rf, mo)

    def to_dot(self, name: str = "G") -> str:
        lines = [f"digraph {name} {{", "  rankdir=LR;", "  node [shape=plaintext];"]
        for i, e in enumerate(self.events):
            lines.append(f'  e{i} [label="{e}"];')
        for tid in self.tids:
            evs = sorted((e.sn, i) for i, e in enumerate(self.events) if e.tid == tid)
            for (_, a), (_, b) in zip(evs, evs[1:]):
                lines.append(f"  e{a} -> e{b} [style=solid];")
        imm_mo = self.mo_rel - self.mo_rel.compose(self.mo_rel)
        for rel, name_, color in ((self.rf_rel, "rf", "darkgreen"), (imm_mo, "mo", "blue"), (self.fr, "fr", "red")):
            for a, b in rel.pairs():
                lines.append(f'  e{a} -> e{b} [style=dashed, color={color}, label="{name_}"];')
        lines.append("}")
        return "\n".join(lines)

    def __str__(self) -> str:
        rf = ", ".join(f"{self.events[w]}->{self.events[r]}" for w, r in sorted(self.rf))
        mo = ", ".join(
            " < ".join(str(self.events[w]) for w in self.writes_to(x)) for x in self.locations
        )
        return f"events: {' '.join(map(str, self.events))}\nrf: {rf}\nmo: {mo}"


def from_read(g: ExecutionGraph) -> Relation:
    """fr = (rf⁻¹ ; mo) minus identity."""
    return g.fr


def mo_maximal(g: ExecutionGraph, loc: str) -> Event:
    return g.events[g.writes_to(loc)[-1]]


# ---------------------------------------------------------------------------
# well-formedness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    ok: bool
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


def check_wellformed(g: ExecutionGraph) -> Check:
    evs = g.events
    inits = [e for e in evs if e.is_init]
    init_locs = [e.loc for e in inits]
    if len(set(init_locs)) != len(init_locs):
        return Check(False, "duplicate initialization event")
    for e in inits:
        if e.sn is not None or e.label != W(e.loc, 0):
            return Check(False, f"malformed initialization event {e}")
    for e in evs:
        if not e.is_init:
            if e.sn is None or e.sn < 0:
                return Check(False, f"non-init event {e} lacks a serial number")
            if e.loc not in init_locs:
                return Check(False, f"E does not contain Init for {e.loc}")
    seen: dict[int, set[int]] = {}
    for e in evs:
        if not e.is_init:
            if e.sn in seen.setdefault(e.tid, set()):
                return Check(False, f"(tid, sn) not unique: {e}")
            seen[e.tid].add(e.sn)
    for tid, sns in seen.items():
        if sns != set(range(len(sns))):
            return Check(False, f"serial numbers of thread {tid} are not downward closed")
    sources: dict[int, int] = {}
    for w, r in g.rf:
        ew, er = evs[w], evs[r]
        if not ew.label.is_write or not er.label.is_read:
            return Check(False, f"rf edge {ew} -> {er} is not write-to-read")
        if ew.loc != er.loc:
            return Check(False, f"rf edge {ew} -> {er} crosses locations")
        if ew.label.val_w != er.label.val_r:
            return Check(False, f"rf edge {ew} -> {er} has mismatched values")
        if r in sources:
            return Check(False, f"rf⁻¹ is not functional at {er}")
        sources[r] = w
    for i, e in enumerate(evs):
        if e.label.is_read and i not in sources:
            return Check(False, f"E ∩ R ⊆ codom(rf) violated at {e}")
    mo = g.mo
    for a, b in mo:
        if a == b:
            return Check(False, "mo is reflexive")
        ea, eb = evs[a], evs[b]
        if not (ea.label.is_write and eb.label.is_write) or ea.loc != eb.loc:
            return Check(False, f"mo edge {ea} -> {eb} is not between same-location writes")
    for x in g.locations:
        ws = [i for i, e in enumerate(evs) if e.loc == x and e.label.is_write]
        for a, b in combinations(ws, 2):
            if ((a, b) in mo) == ((b, a) in mo):
                return Check(False, f"mo on {x} is not a strict total order")
        for a in ws:
            for b in ws:
                for c in ws:
                    if (a, b) in mo and (b, c) in mo and (a, c) not in mo:
                        return Check(False, f"mo on {x} is not transitive")
    return Check(True)


# ---------------------------------------------------------------------------
# fairness surrogates and prefixes
# ---------------------------------------------------------------------------


def check_n_total(r: Relation, mask: int, n: int) -> bool:
    """True iff every ``n+1`` distinct elements of ``mask`` contain a related pair."""
    elems = list(_bits(mask))
    related = [0] * r.n
    for a in elems:
        for b in elems:
            if a != b and ((a, b) in r or (b, a) in r):
                related[a] |= 1 << b

    # search for n+1 pairwise unrelated elements
    def extend(chosen: int, size: int, cands: list[int]) -> bool:
        if size == n + 1:
            return True
        for k, c in enumerate(cands):
            if len(cands) - k < n + 1 - size:
                return False
            rest = [d for d in cands[k + 1:] if not related[c] >> d & 1]
            if extend(chosen | 1 << c, size + 1, rest):
                return True
        return False

    return not extend(0, 0, elems)


@dataclass(frozen=True)
class PrefixFiniteReport:
    max_predecessors: int
    n_total: bool
    compression_law: bool | None


def check_prefix_finite_bounded(r: Relation, n: int, mask: int | None = None) -> PrefixFiniteReport:
    """Finite surrogate of prefix-finiteness: predecessor counts of ``r``, plus the
    chain-compression law R^(2n+1) ⊆ R^(≤2n) when ``r`` is n-total on ``mask``."""
    if not r.is_acyclic():
        raise MemfairError(E_CYCLIC, "relation is cyclic")
    if mask is None:
        mask = (1 << r.n) - 1
    max_pred = max((bin(r.predecessors(b)).count("1") for b in range(r.n)), default=0)
    total = check_n_total(r, mask, n)
    law = None
    if total:
        rr = r.restrict(mask)
        big = rr.power(2 * n + 1)
        law = not bool(big - rr.upto(2 * n))
    return PrefixFiniteReport(max_pred, total, law)


def downward_closed(g: ExecutionGraph, mask: int) -> bool:
    pre = (g.po | g.rf_rel).domain_of(mask)
    return pre & ~mask == 0


def restrict_to_prefix(g: ExecutionGraph, events: Iterable[Event] | int) -> ExecutionGraph:
    """The po∪rf-prefix of ``g`` on the given events (an event iterable or index bitmask)."""
    if isinstance(events, int):
        mask = events
    else:
        mask = sum(1 << g.index[e] for e in events)
    if g.init_mask & ~mask:
        raise MemfairError(E_NOT_PREFIX_CLOSED, "prefix must contain every initialization event")
    if not downward_closed(g, mask):
        raise MemfairError(E_NOT_PREFIX_CLOSED, "event set is not po∪rf-downward closed")
    keep = [i for i in range(g.n) if mask >> i & 1]
    new = {old: k for k, old in enumerate(keep)}
    evs = tuple(g.events[i] for i in keep)
    rf = frozenset((new[w], new[r]) for w, r in g.rf if w in new and r in new)
    mo = frozenset((new[a], new[b]) for a, b in g.mo if a in new and b in new)
    return ExecutionGraph(evs, rf, mo)


def prefix_closure(g: ExecutionGraph, mask: int) -> int:
    """``Init ∪ dom((po∪rf)* ; [mask])``."""
    rel = (g.po | g.rf_rel).star()
    return rel.domain_of(mask) | g.init_mask
