"""Thread programs: parser, instruction semantics and loop structure.

A thread is a deterministic register machine.  Register-only instructions
(assignments, branches, gotos) never produce a step of their own: the local
state is always parked at the next memory access, or at termination, and each
memory access runs the register code that follows it.  Registers that are dead
at the parked position are zeroed so that two states are equal exactly when
they behave the same, which is what spinloop iteration detection compares.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable, Mapping, Sequence, Union

from .errors import (
    E_DANGLING_LABEL,
    E_NOT_ENABLED,
    E_SYNTAX,
    E_UNDECLARED_LOCATION,
    E_UNSUPPORTED_LOOP,
    MemfairError,
)
from .graphs import WRITE, Label, R, U, W

FENCE_LOC = "f"
MAX_SILENT_STEPS = 10_000


# ---------------------------------------------------------------------------
# expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Reg:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class UnOp:
    op: str
    arg: "Expr"


Expr = Union[Const, Reg, BinOp, UnOp]

_BINOPS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "=": lambda a, b: int(a == b),
    "!=": lambda a, b: int(a != b),
    "<": lambda a, b: int(a < b),
    "<=": lambda a, b: int(a <= b),
    ">": lambda a, b: int(a > b),
    ">=": lambda a, b: int(a >= b),
    "&&": lambda a, b: int(bool(a) and bool(b)),
    "||": lambda a, b: int(bool(a) or bool(b)),
}


def eval_expr(e: Expr, regs: Mapping[str, int]) -> int:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Reg):
        return regs[e.name]
    if isinstance(e, BinOp):
        return _BINOPS[e.op](eval_expr(e.left, regs), eval_expr(e.right, regs))
    v = eval_expr(e.arg, regs)
    return int(not v) if e.op == "!" else -v


def expr_regs(e: Expr) -> set[str]:
    if isinstance(e, Reg):
        return {e.name}
    if isinstance(e, BinOp):
        return expr_regs(e.left) | expr_regs(e.right)
    if isinstance(e, UnOp):
        return expr_regs(e.arg)
    return set()


def expr_consts(e: Expr) -> set[int]:
    if isinstance(e, Const):
        return {e.value}
    if isinstance(e, BinOp):
        return expr_consts(e.left) | expr_consts(e.right)
    if isinstance(e, UnOp):
        return expr_consts(e.arg)
    return set()


def show_expr(e: Expr) -> str:
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, Reg):
        return e.name
    if isinstance(e, BinOp):
        return f"({show_expr(e.left)} {e.op} {show_expr(e.right)})"
    return f"{e.op}{show_expr(e.arg)}"


# ---------------------------------------------------------------------------
# instructions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Load:
    reg: str
    loc: str


@dataclass(frozen=True)
class Store:
    loc: str
    expr: Expr


@dataclass(frozen=True)
class Fadd:
    reg: str
    loc: str
    expr: Expr


@dataclass(frozen=True)
class Cas:
    reg: str
    loc: str
    expect: Expr
    new: Expr


@dataclass(frozen=True)
class Swap:
    reg: str
    loc: str
    expr: Expr


@dataclass(frozen=True)
class Assign:
    reg: str
    expr: Expr


@dataclass(frozen=True)
class Branch:
    cond: Expr
    target: str


@dataclass(frozen=True)
class Goto:
    target: str


@dataclass(frozen=True)
class Halt:
    pass


Instruction = Union[Load, Store, Fadd, Cas, Swap, Assign, Branch, Goto, Halt]
MEMORY_INSTRS = (Load, Store, Fadd, Cas, Swap)
SILENT_INSTRS = (Assign, Branch, Goto)


def _uses(ins: Instruction) -> set[str]:
    if isinstance(ins, (Store, Fadd, Swap)):
        return expr_regs(ins.expr)
    if isinstance(ins, Cas):
        return expr_regs(ins.expect) | expr_regs(ins.new)
    if isinstance(ins, Assign):
        return expr_regs(ins.expr)
    if isinstance(ins, Branch):
        return expr_regs(ins.cond)
    return set()


def _defs(ins: Instruction) -> str | None:
    return getattr(ins, "reg", None)


def show_instr(ins: Instruction) -> str:
    if isinstance(ins, Load):
        return f"{ins.reg} = load({ins.loc})"
    if isinstance(ins, Store):
        return f"store({ins.loc}, {show_expr(ins.expr)})"
    if isinstance(ins, Fadd):
        return f"{ins.reg} = FADD({ins.loc}, {show_expr(ins.expr)})"
    if isinstance(ins, Cas):
        return f"{ins.reg} = CAS({ins.loc}, {show_expr(ins.expect)}, {show_expr(ins.new)})"
    if isinstance(ins, Swap):
        return f"{ins.reg} = SWAP({ins.loc}, {show_expr(ins.expr)})"
    if isinstance(ins, Assign):
        return f"{ins.reg} = {show_expr(ins.expr)}"
    if isinstance(ins, Branch):
        return f"if ({show_expr(ins.cond)}) goto {ins.target}"
    if isinstance(ins, Goto):
        return f"goto {ins.target}"
    return "halt"


# ---------------------------------------------------------------------------
# threads and programs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThreadState:
    """Parked local state: ``pc`` of the next memory access (``len(instrs)`` once terminated)."""

    pc: int
    regs: tuple[int, ...]


@dataclass(frozen=True)
class Access:
    """The memory access a parked thread performs next."""

    kind: str  # "read" (Load/Fadd/Cas/Swap) or "write" (Store)
    loc: str
    value: int | None = None  # written value, for plain stores


@dataclass(frozen=True)
class ThreadProgram:
    tid: int
    instrs: tuple[Instruction, ...]
    labels: tuple[tuple[str, int], ...] = ()
    registers: tuple[str, ...] = ()

    @cached_property
    def label_map(self) -> dict[str, int]:
        return dict(self.labels)

    @cached_property
    def reg_index(self) -> dict[str, int]:
        return {r: i for i, r in enumerate(self.registers)}

    @property
    def exit_pc(self) -> int:
        return len(self.instrs)

    def successors(self, pc: int) -> tuple[int, ...]:
        if pc >= len(self.instrs):
            return ()
        ins = self.instrs[pc]
        if isinstance(ins, Halt):
            return (len(self.instrs),)
        if isinstance(ins, Goto):
            return (self.label_map[ins.target],)
        if isinstance(ins, Branch):
            t = self.label_map[ins.target]
            return (pc + 1,) if t == pc + 1 else (pc + 1, t)
        return (pc + 1,)

    @cached_property
    def live_in(self) -> tuple[int, ...]:
        """Register liveness bitmask at each pc; everything is live at exit."""
        n = len(self.instrs)
        allr = (1 << len(self.registers)) - 1
        idx = self.reg_index
        use = [sum(1 << idx[r] for r in _uses(ins)) for ins in self.instrs]
        dfn = [(1 << idx[d]) if (d := _defs(ins)) is not None else 0 for ins in self.instrs]
        live = [0] * n + [allr]
        changed = True
        while changed:
            changed = False
            for pc in reversed(range(n)):
                out = 0
                for s in self.successors(pc):
                    out |= live[s]
                new = use[pc] | (out & ~dfn[pc])
                if new != live[pc]:
                    live[pc] = new
                    changed = True
        return tuple(live)

    # -- semantics ------------------------------------------------------------

    def _regs_dict(self, regs: Sequence[int]) -> dict[str, int]:
        return dict(zip(self.registers, regs))

    def _pack(self, pc: int, regs: dict[str, int]) -> ThreadState:
        live = self.live_in[pc]
        return ThreadState(pc, tuple(regs[r] if live >> i & 1 else 0 for i, r in enumerate(self.registers)))

    def advance(self, pc: int, regs: dict[str, int]) -> tuple[ThreadState, tuple[int, ...]]:
        """Run register-only code from ``pc``; return the parked state and the pcs visited."""
        path = [pc]
        steps = 0
        n = len(self.instrs)
        while pc < n:
            ins = self.instrs[pc]
            if isinstance(ins, Halt):
                pc = n
            elif isinstance(ins, Assign):
                regs[ins.reg] = eval_expr(ins.expr, regs)
                pc += 1
            elif isinstance(ins, Goto):
                pc = self.label_map[ins.target]
            elif isinstance(ins, Branch):
                pc = self.label_map[ins.target] if eval_expr(ins.cond, regs) else pc + 1
            else:
                break
            path.append(pc)
            steps += 1
            if steps > MAX_SILENT_STEPS:
                raise MemfairError(E_UNSUPPORTED_LOOP, f"thread {self.tid} loops without memory accesses")
        return self._pack(pc, regs), tuple(path)

    def initial(self) -> tuple[ThreadState, tuple[int, ...]]:
        return self.advance(0, {r: 0 for r in self.registers})

    def is_terminated(self, st: ThreadState) -> bool:
        return st.pc >= len(self.instrs)

    def next_access(self, st: ThreadState) -> Access | None:
        if st.pc >= len(self.instrs):
            return None
        ins = self.instrs[st.pc]
        if isinstance(ins, Store):
            return Access("write", ins.loc, eval_expr(ins.expr, self._regs_dict(st.regs)))
        return Access("read", ins.loc)

    def label_for_read(self, st: ThreadState, v: int) -> Label:
        """The label the thread emits if its pending read-like access observes ``v``."""
        ins = self.instrs[st.pc]
        regs = self._regs_dict(st.regs)
        if isinstance(ins, Load):
            return R(ins.loc, v)
        if isinstance(ins, Fadd):
            return U(ins.loc, v, v + eval_expr(ins.expr, regs))
        if isinstance(ins, Swap):
            return U(ins.loc, v, eval_expr(ins.expr, regs))
        if isinstance(ins, Cas):
            if v == eval_expr(ins.expect, regs):
                return U(ins.loc, v, eval_expr(ins.new, regs))
            return R(ins.loc, v)
        raise MemfairError(E_NOT_ENABLED, f"thread {self.tid} is not at a read")

    def enabled(self, st: ThreadState, values: Iterable[int]) -> set[Label]:
        acc = self.next_access(st)
        if acc is None:
            return set()
        if acc.kind == "write":
            return {W(acc.loc, acc.value)}
        return {self.label_for_read(st, v) for v in values}

    def step(self, st: ThreadState, lab: Label) -> tuple[ThreadState, tuple[int, ...]]:
        acc = self.next_access(st)
        if acc is None or acc.loc != lab.loc:
            raise MemfairError(E_NOT_ENABLED, f"{lab} not enabled for thread {self.tid}")
        if acc.kind == "write":
            if lab != W(acc.loc, acc.value):
                raise MemfairError(E_NOT_ENABLED, f"{lab} not enabled for thread {self.tid}")
        elif lab.kind == WRITE or self.label_for_read(st, lab.val_r) != lab:
            raise MemfairError(E_NOT_ENABLED, f"{lab} not enabled for thread {self.tid}")
        ins = self.instrs[st.pc]
        regs = self._regs_dict(st.regs)
        if not isinstance(ins, Store):
            regs[ins.reg] = lab.val_r
        return self.advance(st.pc + 1, regs)

    def values(self) -> set[int]:
        out: set[int] = set()
        for ins in self.instrs:
            for attr in ("expr", "expect", "new", "cond"):
                if hasattr(ins, attr):
                    out |= expr_consts(getattr(ins, attr))
        return out

    def registers_of(self, st: ThreadState) -> dict[str, int]:
        return self._regs_dict(st.regs)

    def source(self) -> str:
        at = {}
        for name, pc in self.labels:
            at.setdefault(pc, []).append(name)
        lines = []
        for pc, ins in enumerate(self.instrs):
            prefix = "".join(f"{l}: " for l in at.get(pc, []))
            lines.append(f"  {prefix}{show_instr(ins)};")
        for l in at.get(len(self.instrs), []):
            lines.append(f"  {l}: halt;")
        return f"thread {self.tid} {{\n" + "\n".join(lines) + "\n}"


ProgramState = tuple[ThreadState, ...]


@dataclass(frozen=True)
class ConcurrentProgram:
    threads: tuple[ThreadProgram, ...]
    locations: tuple[str, ...]
    name: str = ""

    @property
    def tids(self) -> tuple[int, ...]:
        return tuple(t.tid for t in self.threads)

    def thread(self, tid: int) -> ThreadProgram:
        return self.threads[tid - 1]

    def initial_state(self) -> ProgramState:
        return tuple(t.initial()[0] for t in self.threads)

    def value_domain(self) -> frozenset[int]:
        vals = {0}
        for t in self.threads:
            vals |= t.values()
        return frozenset(vals)

    def is_terminated(self, s: ProgramState) -> bool:
        return all(t.is_terminated(st) for t, st in zip(self.threads, s))

    def source(self) -> str:
        return "locations " + " ".join(self.locations) + ";\n" + "\n".join(t.source() for t in self.threads) + "\n"

    def final_registers(self, s: ProgramState) -> dict[str, int]:
        out: dict[str, int] = {}
        for t, st in zip(self.threads, s):
            for r, v in t.registers_of(st).items():
                if not r.startswith("$"):
                    out[f"{t.tid}:{r}"] = v
        return out


def enabled_labels(p: ConcurrentProgram, s: ProgramState, values: Iterable[int] | None = None) -> set[tuple[int, Label]]:
    vals = sorted(p.value_domain() if values is None else set(values))
    return {(t.tid, lab) for t, st in zip(p.threads, s) for lab in t.enabled(st, vals)}


def step(p: ConcurrentProgram, s: ProgramState, t: tuple[int, Label]) -> ProgramState:
    tid, lab = t
    if tid not in p.tids:
        raise MemfairError(E_NOT_ENABLED, f"no thread {tid}")
    new, _ = p.thread(tid).step(s[tid - 1], lab)
    return s[: tid - 1] + (new,) + s[tid:]


def replay_thread(tp: ThreadProgram, labels: Sequence[Label]) -> ThreadState:
    st, _ = tp.initial()
    for lab in labels:
        st, _ = tp.step(st, lab)
    return st


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s+|//[^\n]*|\#[^\n]*"
    r"|(?P<int>\d+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>==|!=|<=|>=|&&|\|\||≠|≤|≥|[=;{}(),:<>+\-*!])"
)
_KEYWORDS = {"locations", "thread", "load", "store", "FADD", "CAS", "SWAP", "if", "goto", "fence", "halt"}
_CANON = {"==": "=", "≠": "!=", "≤": "<=", "≥": ">="}


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise MemfairError(E_SYNTAX, f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup:
            t = m.group(m.lastgroup)
            toks.append(_Tok(m.lastgroup, _CANON.get(t, t), pos))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, qualified_regs: bool = False):
        self.toks = _tokenize(text)
        self.i = 0
        self.qualified = qualified_regs

    @property
    def cur(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str) -> MemfairError:
        return MemfairError(E_SYNTAX, msg, self.cur.pos)

    def accept(self, text: str) -> bool:
        if self.cur.text == text and self.cur.kind != "eof":
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        if self.cur.text != text or self.cur.kind == "eof":
            raise self.error(f"expected {text!r}, found {self.cur.text or 'end of input'!r}")
        tok = self.cur
        self.i += 1
        return tok

    def ident(self) -> _Tok:
        if self.cur.kind != "ident" or self.cur.text in _KEYWORDS:
            raise self.error(f"expected identifier, found {self.cur.text or 'end of input'!r}")
        tok = self.cur
        self.i += 1
        return tok

    def integer(self) -> int:
        if self.cur.kind != "int":
            raise self.error(f"expected integer, found {self.cur.text or 'end of input'!r}")
        v = int(self.cur.text)
        self.i += 1
        return v

    # expressions, loosest binding first
    _LEVELS = (("||",), ("&&",), ("=", "!=", "<", "<=", ">", ">="), ("+", "-"), ("*",))

    def expr(self, level: int = 0) -> Expr:
        if level == len(self._LEVELS):
            return self.unary()
        left = self.expr(level + 1)
        while self.cur.kind == "op" and self.cur.text in self._LEVELS[level]:
            op = self.cur.text
            self.i += 1
            right = self.expr(level + 1)
            left = BinOp(op, left, right)
        return left

    def unary(self) -> Expr:
        if self.accept("!"):
            return UnOp("!", self.unary())
        if self.accept("-"):
            arg = self.unary()
            return Const(-arg.value) if isinstance(arg, Const) else UnOp("-", arg)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if self.cur.kind == "int":
            if self.qualified and self.peek().text == ":":
                tid = self.integer()
                self.expect(":")
                return Reg(f"{tid}:{self.ident().text}")
            return Const(self.integer())
        tok = self.ident()
        return Reg(tok.text)


def parse_program(text: str, name: str = "") -> ConcurrentProgram:
    ps = _Parser(text)
    ps.expect("locations")
    locs: list[str] = []
    while ps.cur.kind == "ident" and ps.cur.text not in _KEYWORDS:
        x = ps.ident().text
        if x in locs:
            raise ps.error(f"location {x} declared twice")
        locs.append(x)
    if not locs:
        raise ps.error("expected at least one location")
    ps.expect(";")
    raw_threads: list[tuple[int, list, dict, list]] = []
    uses_fence = False
    while ps.cur.kind != "eof":
        ps.expect("thread")
        tid_pos = ps.cur.pos
        tid = ps.integer()
        ps.expect("{")
        instrs: list[Instruction] = []
        labels: dict[str, int] = {}
        refs: list[tuple[str, int]] = []  # (label, position) for dangling checks
        locrefs: list[tuple[str, int]] = []
        exprs: list[tuple[Expr, int]] = []
        nfence = 0
        while not ps.accept("}"):
            if ps.cur.kind == "eof":
                raise ps.error("unterminated thread body")
            while ps.cur.kind == "ident" and ps.cur.text not in _KEYWORDS and ps.peek().text == ":":
                lab = ps.ident().text
                ps.expect(":")
                if lab in labels:
                    raise ps.error(f"label {lab} defined twice")
                labels[lab] = len(instrs)
            pos = ps.cur.pos
            if ps.accept("store"):
                ps.expect("(")
                x = ps.ident().text
                locrefs.append((x, pos))
                ps.expect(",")
                e = ps.expr()
                exprs.append((e, pos))
                ps.expect(")")
                ins: Instruction = Store(x, e)
            elif ps.accept("if"):
                ps.expect("(")
                c = ps.expr()
                exprs.append((c, pos))
                ps.expect(")")
                ps.expect("goto")
                target = ps.ident().text
                refs.append((target, pos))
                ins = Branch(c, target)
            elif ps.accept("goto"):
                target = ps.ident().text
                refs.append((target, pos))
                ins = Goto(target)
            elif ps.accept("fence"):
                uses_fence = True
                ins = Swap(f"$fence{nfence}", FENCE_LOC, Const(0))
                nfence += 1
            elif ps.accept("halt"):
                ins = Halt()
            else:
                reg = ps.ident().text
                ps.expect("=")
                head = ps.cur.text
                if head in ("load", "FADD", "CAS", "SWAP") and ps.peek().text == "(":
                    ps.i += 2
                    x = ps.ident().text
                    locrefs.append((x, pos))
                    if head == "load":
                        ins = Load(reg, x)
                    elif head == "CAS":
                        ps.expect(",")
                        e1 = ps.expr()
                        ps.expect(",")
                        e2 = ps.expr()
                        exprs += [(e1, pos), (e2, pos)]
                        ins = Cas(reg, x, e1, e2)
                    else:
                        ps.expect(",")
                        e = ps.expr()
                        exprs.append((e, pos))
                        ins = Fadd(reg, x, e) if head == "FADD" else Swap(reg, x, e)
                    ps.expect(")")
                else:
                    e = ps.expr()
                    exprs.append((e, pos))
                    ins = Assign(reg, e)
            ps.expect(";")
            instrs.append(ins)
        for x, pos in locrefs:
            if x not in locs:
                raise MemfairError(E_UNDECLARED_LOCATION, f"location {x} is not declared", pos)
        for target, pos in refs:
            if target not in labels:
                raise MemfairError(E_DANGLING_LABEL, f"label {target} is not defined in thread {tid}", pos)
        regs = []
        for ins in instrs:
            d = _defs(ins)
            if d is not None and d not in regs:
                regs.append(d)
        for e, pos in exprs:
            for r in expr_regs(e):
                if r in locs and r not in regs:
                    raise MemfairError(E_SYNTAX, f"location {r} used as a register value", pos)
                if r not in regs:
                    raise MemfairError(E_SYNTAX, f"register {r} is never assigned in thread {tid}", pos)
        raw_threads.append((tid, instrs, labels, regs, tid_pos))
    if not raw_threads:
        raise ps.error("expected at least one thread")
    raw_threads.sort(key=lambda t: t[0])
    tids = [t[0] for t in raw_threads]
    if tids != list(range(1, len(tids) + 1)):
        raise MemfairError(E_SYNTAX, f"thread ids must be 1..N, got {tids}", raw_threads[0][4])
    if uses_fence and FENCE_LOC not in locs:
        locs.append(FENCE_LOC)
    threads = tuple(
        ThreadProgram(tid, tuple(instrs), tuple(labels.items()), tuple(regs))
        for tid, instrs, labels, regs, _ in raw_threads
    )
    return ConcurrentProgram(threads, tuple(locs), name)


def parse_assertion(text: str) -> Expr:
    """Outcome predicate over final registers; ``tid:reg`` qualifies a register."""
    ps = _Parser(text, qualified_regs=True)
    e = ps.expr()
    if ps.cur.kind != "eof":
        raise ps.error(f"unexpected {ps.cur.text!r} in assertion")
    return e


def eval_assertion(e: Expr, final_regs: Mapping[str, int]) -> bool:
    """Unqualified names resolve to the unique thread register of that name."""
    env: dict[str, int] = dict(final_regs)
    owners: dict[str, list[str]] = {}
    for q in final_regs:
        owners.setdefault(q.split(":", 1)[1], []).append(q)
    for r in expr_regs(e):
        if r in env:
            continue
        qs = owners.get(r, [])
        if len(qs) != 1:
            what = "ambiguous" if qs else "unknown"
            raise MemfairError(E_SYNTAX, f"{what} register {r} in assertion")
        env[r] = final_regs[qs[0]]
    return bool(eval_expr(e, env))


# ---------------------------------------------------------------------------
# loops
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Loop:
    header: int
    body: frozenset[int]
    back_edges: frozenset[tuple[int, int]]
    is_spinloop: bool


@dataclass(frozen=True)
class ThreadLoops:
    loops: tuple[Loop, ...] = ()
    irreducible: bool = False

    @property
    def acyclic_outside_spinloops(self) -> bool:
        return not self.irreducible and all(l.is_spinloop for l in self.loops)

    @cached_property
    def spin_headers(self) -> dict[int, Loop]:
        return {l.header: l for l in self.loops if l.is_spinloop}

    @cached_property
    def spin_back_edges(self) -> dict[tuple[int, int], Loop]:
        return {be: l for l in self.loops if l.is_spinloop for be in l.back_edges}


@dataclass(frozen=True)
class SpinloopInfo:
    threads: tuple[tuple[int, ThreadLoops], ...]

    def __getitem__(self, tid: int) -> ThreadLoops:
        return dict(self.threads)[tid]

    @property
    def acyclic_outside_spinloops(self) -> bool:
        return all(tl.acyclic_outside_spinloops for _, tl in self.threads)

    @property
    def irreducible(self) -> bool:
        return any(tl.irreducible for _, tl in self.threads)


_SPIN_OK = (Load, Cas, Assign, Branch, Goto)


def thread_loops(tp: ThreadProgram) -> ThreadLoops:
    """Natural loops of one thread, merged per header.

    A loop is a spinloop candidate when its body has no store, FADD or SWAP.
    CAS is allowed: only its failing outcome (a plain read) can return to the
    header, and every completed iteration is re-checked when it happens.
    """
    n = len(tp.instrs)
    nodes = list(range(n + 1))
    succ = {v: tp.successors(v) for v in nodes}
    # reachable set and dominators
    reach = {0}
    stack = [0]
    while stack:
        v = stack.pop()
        for s in succ[v]:
            if s not in reach:
                reach.add(s)
                stack.append(s)
    preds: dict[int, list[int]] = {v: [] for v in nodes}
    for v in reach:
        for s in succ[v]:
            preds[s].append(v)
    dom = {v: set(reach) for v in reach}
    dom[0] = {0}
    changed = True
    while changed:
        changed = False
        for v in sorted(reach):
            if v == 0:
                continue
            ps = [dom[p] for p in preds[v] if p in reach]
            new = set.intersection(*ps) | {v} if ps else {v}
            if new != dom[v]:
                dom[v] = new
                changed = True
    # retreating edges via DFS
    irreducible = False
    back: dict[int, set[int]] = {}
    on_stack: set[int] = set()
    visited: set[int] = set()

    def dfs(v: int) -> None:
        nonlocal irreducible
        visited.add(v)
        on_stack.add(v)
        for s in succ[v]:
            if s in on_stack:
                if s in dom[v]:
                    back.setdefault(s, set()).add(v)
                else:
                    irreducible = True
            elif s not in visited:
                dfs(s)
        on_stack.discard(v)

    dfs(0)
    loops = []
    for h in sorted(back):
        body = {h}
        work = [u for u in back[h] if u != h]
        body |= set(work)
        while work:
            v = work.pop()
            for p in preds[v]:
                if p not in body:
                    body.add(p)
                    work.append(p)
        spin = all(isinstance(tp.instrs[v], _SPIN_OK) for v in body if v < n)
        loops.append(Loop(h, frozenset(body), frozenset((u, h) for u in back[h]), spin))
    # a spinloop nested in a non-spinloop keeps its own header; an outer loop
    # containing a non-spinloop is itself not a spinloop (its body has writes)
    return ThreadLoops(tuple(loops), irreducible)


def detect_spinloops(p: ConcurrentProgram) -> SpinloopInfo:
    return SpinloopInfo(tuple((t.tid, thread_loops(t)) for t in p.threads))


def unroll_outer_loops(p: ConcurrentProgram, rounds: int) -> ConcurrentProgram:
    """Replace each thread's trailing ``goto L`` round loop by ``rounds`` copies of its body."""
    threads = []
    for tp in p.threads:
        ins = tp.instrs
        if not ins or not isinstance(ins[-1], Goto) or tp.label_map[ins[-1].target] >= len(ins) - 1:
            threads.append(tp)
            continue
        head = tp.label_map[ins[-1].target]
        region = ins[head:-1]
        region_labels = {l: pc for l, pc in tp.labels if head <= pc < len(ins) - 1}
        new_instrs = list(ins[:head])
        new_labels = [(l, pc) for l, pc in tp.labels if pc < head]
        for k in range(rounds):
            base = len(new_instrs)

            def ren(target: str, k=k) -> str:
                return f"{target}#{k}" if target in region_labels else target

            for l, pc in region_labels.items():
                new_labels.append((ren(l), base + pc - head))
            for i in region:
                if isinstance(i, Branch):
                    i = Branch(i.cond, ren(i.target))
                elif isinstance(i, Goto):
                    i = Goto(ren(i.target))
                new_instrs.append(i)
        # labels after the loop (rare) point at the final halt
        end = len(new_instrs)
        new_labels += [(l, end) for l, pc in tp.labels if pc >= len(ins) - 1 and l not in region_labels]
        new_instrs.append(Halt())
        threads.append(replace(tp, instrs=tuple(new_instrs), labels=tuple(new_labels)))
    return replace(p, threads=tuple(threads))
