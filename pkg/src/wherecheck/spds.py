"""Symbolic pushdown systems over fixed-width global state.

A system is a stack alphabet plus rules <lhs> -> <rhs...> with at most two
right-hand symbols, each rule carrying a RuleSpec: a guard over the current
valuation and next-state updates (expression, havoc, or indexed channel
write).  Globals not mentioned keep their value; that frame condition is
part of the spec's meaning, so the BDD compilation and the explicit
evaluator below both implement it and can be compared bit for bit.

Level layout: global bit t occupies levels 3t (current), 3t+1 (scratch) and
3t+2 (next).  Every rename used by the relation algebra moves a whole block
sideways within the triples and is therefore order-preserving.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Optional, Union

from .bdd import (
    BDD,
    bv_add,
    bv_bitand,
    bv_bitor,
    bv_bool,
    bv_const,
    bv_eq,
    bv_from_levels,
    bv_ite,
    bv_le,
    bv_lt,
    bv_mul,
    bv_ne,
    bv_nonzero,
    bv_sub,
    bv_value,
)
from .syntax import BinOp, Expr, Num, Var


class HavocType:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "HAVOC"


HAVOC = HavocType()


@dataclass(frozen=True)
class GRef:
    name: str


@dataclass(frozen=True)
class KConst:
    value: int


@dataclass(frozen=True)
class CellRef:
    """Read of cells[i] where i is the runtime value of the index global."""

    cells: tuple[str, ...]
    index: str
    label: str


@dataclass(frozen=True)
class GOp:
    op: str
    left: "GExpr"
    right: "GExpr"


GExpr = Union[GRef, KConst, CellRef, GOp]

_COMPARISONS = ("==", "!=", "<", "<=")


def from_program_expr(e: Expr, var_map: dict[str, str]) -> GExpr:
    match e:
        case Num(value):
            return KConst(value)
        case Var(name):
            return GRef(var_map[name])
        case BinOp(op, left, right):
            return GOp(op, from_program_expr(left, var_map), from_program_expr(right, var_map))
    raise TypeError(f"not an expression: {e!r}")


def gexpr_globals(e: GExpr) -> set[str]:
    match e:
        case GRef(name):
            return {name}
        case KConst(_):
            return set()
        case CellRef(cells, index, _):
            return set(cells) | {index}
        case GOp(_, left, right):
            return gexpr_globals(left) | gexpr_globals(right)
    raise TypeError(f"not a global expression: {e!r}")


def rename_gexpr(e: GExpr, mapping: dict[str, str]) -> GExpr:
    match e:
        case GRef(name):
            return GRef(mapping.get(name, name))
        case KConst(_):
            return e
        case CellRef(cells, index, label):
            return CellRef(
                tuple(mapping.get(c, c) for c in cells), mapping.get(index, index), label
            )
        case GOp(op, left, right):
            return GOp(op, rename_gexpr(left, mapping), rename_gexpr(right, mapping))
    raise TypeError(f"not a global expression: {e!r}")


_PREC = {"|": 1, "&": 2, "==": 3, "!=": 3, "<": 3, "<=": 3, "+": 4, "-": 4, "*": 5}


def format_gexpr(e: GExpr, parent_prec: int = 0) -> str:
    match e:
        case GRef(name):
            return name
        case KConst(value):
            return str(value)
        case CellRef(_, index, label):
            return f"{label}[{index}]"
        case GOp(op, left, right):
            prec = _PREC[op]
            text = f"{format_gexpr(left, prec)} {op} {format_gexpr(right, prec + 1)}"
            return f"({text})" if prec < parent_prec else text
    raise TypeError(f"not a global expression: {e!r}")


@dataclass(frozen=True)
class ArrayWrite:
    """cells[index] := expr; the other cells of the channel keep their value."""

    cells: tuple[str, ...]
    index: str
    expr: GExpr
    label: str

    def renamed(self, mapping: dict[str, str]) -> "ArrayWrite":
        return ArrayWrite(
            tuple(mapping.get(c, c) for c in self.cells),
            mapping.get(self.index, self.index),
            rename_gexpr(self.expr, mapping),
            self.label,
        )


@dataclass(frozen=True)
class RuleSpec:
    guard: Optional[GExpr] = None  # truthy when nonzero; None means true
    updates: tuple[tuple[str, object], ...] = ()  # (global, GExpr | HAVOC), sorted
    writes: tuple[ArrayWrite, ...] = ()

    @staticmethod
    def make(
        guard: Optional[GExpr] = None,
        updates: Optional[dict[str, object]] = None,
        writes: tuple[ArrayWrite, ...] = (),
    ) -> "RuleSpec":
        pairs = tuple(sorted((updates or {}).items()))
        return RuleSpec(guard=guard, updates=pairs, writes=writes)

    def renamed(self, mapping: dict[str, str]) -> "RuleSpec":
        guard = rename_gexpr(self.guard, mapping) if self.guard is not None else None
        updates = tuple(
            sorted(
                (mapping.get(name, name), e if e is HAVOC else rename_gexpr(e, mapping))
                for name, e in self.updates
            )
        )
        return RuleSpec(guard, updates, tuple(w.renamed(mapping) for w in self.writes))

    def written_globals(self) -> set[str]:
        out = {name for name, _ in self.updates}
        for w in self.writes:
            out |= set(w.cells)
        return out


@dataclass(frozen=True)
class Rule:
    lhs: str
    rhs: tuple[str, ...]  # 0 = pop, 1 = rename, 2 = push
    spec: RuleSpec
    note: str = ""

    def __post_init__(self):
        assert len(self.rhs) <= 2, "rules push at most one extra symbol"


@dataclass(frozen=True)
class GlobalsDecl:
    cells: tuple[tuple[str, int], ...]  # (name, width) in declaration order

    @cached_property
    def _index(self) -> dict[str, int]:
        return {name: i for i, (name, _) in enumerate(self.cells)}

    @cached_property
    def _offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for _, width in self.cells:
            out.append(acc)
            acc += width
        return tuple(out)

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.cells]

    @property
    def total_bits(self) -> int:
        return sum(width for _, width in self.cells)

    def width_of(self, name: str) -> int:
        return self.cells[self._index[name]][1]

    def index_of(self, name: str) -> int:
        return self._index[name]

    def _levels(self, name: str, block: int) -> list[int]:
        i = self._index[name]
        base = self._offsets[i]
        return [3 * (base + j) + block for j in range(self.cells[i][1])]

    def cur_levels(self, name: str) -> list[int]:
        return self._levels(name, 0)

    def tmp_levels(self, name: str) -> list[int]:
        return self._levels(name, 1)

    def nxt_levels(self, name: str) -> list[int]:
        return self._levels(name, 2)

    def block_levels(self, block: int) -> list[int]:
        return [3 * t + block for t in range(self.total_bits)]

    def block_map(self, src: int, dst: int) -> dict[int, int]:
        return {3 * t + src: 3 * t + dst for t in range(self.total_bits)}

    def valuation(self, values: dict[str, int]) -> tuple[int, ...]:
        out = []
        for name, width in self.cells:
            out.append(values.get(name, 0) & ((1 << width) - 1))
        return tuple(out)

    def as_dict(self, valuation: tuple[int, ...]) -> dict[str, int]:
        return {name: valuation[i] for i, (name, _) in enumerate(self.cells)}

    def all_valuations(self) -> Iterator[tuple[int, ...]]:
        spaces = [range(1 << width) for _, width in self.cells]
        yield from itertools.product(*spaces)


@dataclass(frozen=True)
class SPDS:
    globals: GlobalsDecl
    alphabet: tuple[str, ...]
    rules: tuple[Rule, ...]
    start: str
    initial_fixed: tuple[tuple[str, int], ...]  # pinned initial globals; rest free
    error: Optional[str] = None

    def initial_valuations(self) -> Iterator[tuple[int, ...]]:
        fixed = dict(self.initial_fixed)
        spaces = []
        for name, width in self.globals.cells:
            if name in fixed:
                spaces.append((fixed[name] & ((1 << width) - 1),))
            else:
                spaces.append(tuple(range(1 << width)))
        yield from itertools.product(*spaces)


def format_rule(rule: Rule) -> str:
    rhs = " ".join(rule.rhs) if rule.rhs else "."
    guard = format_gexpr(rule.spec.guard) if rule.spec.guard is not None else "1"
    parts = []
    for name, e in rule.spec.updates:
        parts.append(f"{name}:=*" if e is HAVOC else f"{name}:={format_gexpr(e)}")
    for w in rule.spec.writes:
        parts.append(f"{w.label}[{w.index}]:={format_gexpr(w.expr)}")
    effect = ", ".join(parts) if parts else "-"
    return f"<{rule.lhs}> -> <{rhs}> | {guard} | {effect}"


def dump_spds(spds: SPDS) -> str:
    lines = [
        "globals: " + " ".join(f"{name}:{width}" for name, width in spds.globals.cells),
        "start: " + spds.start,
        "initial: "
        + (" ".join(f"{name}={value}" for name, value in spds.initial_fixed) or "-"),
    ]
    lines.extend(format_rule(rule) for rule in spds.rules)
    return "\n".join(lines)


# Explicit evaluation.  Used by the interpreter-backed test oracle for rule
# compilation and by the enumerative reachability backend.


def eval_gexpr(e: GExpr, globals_decl: GlobalsDecl, val: tuple[int, ...], width: int) -> int:
    mask = (1 << width) - 1
    match e:
        case KConst(value):
            return value & mask
        case GRef(name):
            return val[globals_decl.index_of(name)] & mask
        case CellRef(cells, index, _):
            idx = val[globals_decl.index_of(index)]
            if idx < len(cells):
                return val[globals_decl.index_of(cells[idx])] & mask
            return 0
        case GOp(op, left, right):
            if op in _COMPARISONS:
                # Comparison operands carry their own width; the 0/1 result
                # coerces to whatever width the context needs.
                w = infer_width(left, globals_decl) or infer_width(right, globals_decl) or width
            else:
                w = width
            a = eval_gexpr(left, globals_decl, val, w)
            b = eval_gexpr(right, globals_decl, val, w)
            if op == "+":
                return (a + b) & mask
            if op == "-":
                return (a - b) & mask
            if op == "*":
                return (a * b) & mask
            if op == "==":
                return int(a == b)
            if op == "!=":
                return int(a != b)
            if op == "<":
                return int(a < b)
            if op == "<=":
                return int(a <= b)
            if op == "&":
                return a & b
            if op == "|":
                return a | b
            raise ValueError(f"unknown operator {op!r}")
    raise TypeError(f"not a global expression: {e!r}")


def infer_width(e: GExpr, globals_decl: GlobalsDecl) -> Optional[int]:
    match e:
        case KConst(_):
            return None
        case GRef(name):
            return globals_decl.width_of(name)
        case CellRef(cells, _, _):
            # an empty array reads as the constant 0 and adapts to context
            return globals_decl.width_of(cells[0]) if cells else None
        case GOp(op, left, right):
            a = infer_width(left, globals_decl)
            b = infer_width(right, globals_decl)
            if a is not None and b is not None and a != b:
                raise ValueError(f"width mismatch in {format_gexpr(e)}: {a} vs {b}")
            if op in _COMPARISONS:
                return None  # 0/1 result adapts to the context width
            return a if a is not None else b
    raise TypeError(f"not a global expression: {e!r}")


def guard_width(e: GExpr, globals_decl: GlobalsDecl) -> int:
    width = infer_width(e, globals_decl)
    return width if width is not None else 1


def eval_guard(spec: RuleSpec, globals_decl: GlobalsDecl, val: tuple[int, ...]) -> bool:
    if spec.guard is None:
        return True
    return eval_gexpr(spec.guard, globals_decl, val, guard_width(spec.guard, globals_decl)) != 0


def spec_successors(
    spec: RuleSpec, globals_decl: GlobalsDecl, val: tuple[int, ...]
) -> Iterator[tuple[int, ...]]:
    """All next valuations from val; empty when the guard fails.

    Havoc'd globals branch over their whole range (ascending), so this is
    only usable at small widths.
    """
    if not eval_guard(spec, globals_decl, val):
        return
    updates = dict(spec.updates)
    base = list(val)
    havocs: list[int] = []
    for name, e in spec.updates:
        i = globals_decl.index_of(name)
        if e is HAVOC:
            havocs.append(i)
        else:
            base[i] = eval_gexpr(e, globals_decl, val, globals_decl.width_of(name))
    for w in spec.writes:
        idx = val[globals_decl.index_of(w.index)]
        if idx < len(w.cells):
            i = globals_decl.index_of(w.cells[idx])
            base[i] = eval_gexpr(w.expr, globals_decl, val, globals_decl.width_of(w.cells[idx]))
    if not havocs:
        yield tuple(base)
        return
    spaces = [range(1 << globals_decl.cells[i][1]) for i in havocs]
    for choice in itertools.product(*spaces):
        nxt = list(base)
        for i, v in zip(havocs, choice):
            nxt[i] = v
        yield tuple(nxt)


def successors(
    spds: SPDS, val: tuple[int, ...], stack: tuple[str, ...]
) -> Iterator[tuple[tuple[int, ...], tuple[str, ...]]]:
    """One-step successors of a concrete configuration (top of stack first)."""
    if not stack:
        return
    top, rest = stack[0], stack[1:]
    for rule in spds.rules:
        if rule.lhs != top:
            continue
        for nxt in spec_successors(rule.spec, spds.globals, val):
            yield nxt, rule.rhs + rest


class RelationAlgebra:
    """BDD-backed sets of valuations and valuation pairs.

    Sets live on the current block; pair relations put the first component
    on the current block and the second on the next block.  Node indices
    are canonical, so equality of results is integer equality.
    """

    def __init__(self, globals_decl: GlobalsDecl, mgr: Optional[BDD] = None):
        self.g = globals_decl
        self.mgr = mgr if mgr is not None else BDD()
        self._cur_to_tmp = globals_decl.block_map(0, 1)
        self._tmp_to_cur = globals_decl.block_map(1, 0)
        self._nxt_to_tmp = globals_decl.block_map(2, 1)
        self._cur_to_nxt = globals_decl.block_map(0, 2)
        self._nxt_to_cur_map = globals_decl.block_map(2, 0)
        self._cur_block = globals_decl.block_levels(0)
        self._tmp_block = globals_decl.block_levels(1)
        self._nxt_block = globals_decl.block_levels(2)
        self._identity: Optional[int] = None

    # Sets over the current block.

    @property
    def empty(self) -> int:
        return self.mgr.FALSE

    @property
    def full(self) -> int:
        return self.mgr.TRUE

    def set_from_fixed(self, fixed: dict[str, int]) -> int:
        mgr = self.mgr
        out = mgr.TRUE
        for name, value in sorted(fixed.items()):
            vec = bv_from_levels(mgr, self.g.cur_levels(name))
            out = mgr.conj(out, bv_eq(mgr, vec, bv_const(mgr, value, self.g.width_of(name))))
        return out

    def set_from_valuation(self, val: tuple[int, ...]) -> int:
        return self.set_from_fixed(self.g.as_dict(val))

    def compile_value(self, e: GExpr, width: int, block: int = 0) -> list[int]:
        mgr = self.mgr
        match e:
            case KConst(value):
                return bv_const(mgr, value, width)
            case GRef(name):
                assert self.g.width_of(name) == width, f"{name} width mismatch"
                return bv_from_levels(mgr, self.g._levels(name, block))
            case CellRef(cells, index, _):
                idx_w = self.g.width_of(index)
                idx = bv_from_levels(mgr, self.g._levels(index, block))
                acc = bv_const(mgr, 0, width)
                for k in range(len(cells) - 1, -1, -1):
                    hit = bv_eq(mgr, idx, bv_const(mgr, k, idx_w))
                    acc = bv_ite(mgr, hit, self.compile_value(GRef(cells[k]), width, block), acc)
                return acc
            case GOp(op, left, right):
                if op in _COMPARISONS:
                    w = infer_width(left, self.g) or infer_width(right, self.g) or width
                    a = self.compile_value(left, w, block)
                    b = self.compile_value(right, w, block)
                    bit = {
                        "==": bv_eq,
                        "!=": bv_ne,
                        "<": bv_lt,
                        "<=": bv_le,
                    }[op](mgr, a, b)
                    return bv_bool(mgr, bit, width)
                a = self.compile_value(left, width, block)
                b = self.compile_value(right, width, block)
                fn = {
                    "+": bv_add,
                    "-": bv_sub,
                    "*": bv_mul,
                    "&": bv_bitand,
                    "|": bv_bitor,
                }[op]
                return fn(mgr, a, b)
        raise TypeError(f"not a global expression: {e!r}")

    def compile_guard(self, e: Optional[GExpr], block: int = 0) -> int:
        if e is None:
            return self.mgr.TRUE
        width = guard_width(e, self.g)
        return bv_nonzero(self.mgr, self.compile_value(e, width, block))

    # Pair relations: current block x next block.

    def compile_spec(self, spec: RuleSpec) -> int:
        mgr = self.mgr
        out = self.compile_guard(spec.guard)
        updates = dict(spec.updates)
        written = {name for w in spec.writes for name in w.cells}
        write_by_cell: dict[str, ArrayWrite] = {}
        for w in spec.writes:
            for name in w.cells:
                write_by_cell[name] = w
        for name, width in self.g.cells:
            nxt = bv_from_levels(mgr, self.g.nxt_levels(name))
            if name in updates:
                e = updates[name]
                if e is HAVOC:
                    continue
                out = mgr.conj(out, bv_eq(mgr, nxt, self.compile_value(e, width)))
            elif name in written:
                w = write_by_cell[name]
                k = w.cells.index(name)
                idx_w = self.g.width_of(w.index)
                idx = bv_from_levels(mgr, self.g.cur_levels(w.index))
                hit = bv_eq(mgr, idx, bv_const(mgr, k, idx_w))
                value = bv_ite(
                    mgr,
                    hit,
                    self.compile_value(w.expr, width),
                    bv_from_levels(mgr, self.g.cur_levels(name)),
                )
                out = mgr.conj(out, bv_eq(mgr, nxt, value))
            else:
                cur = bv_from_levels(mgr, self.g.cur_levels(name))
                out = mgr.conj(out, bv_eq(mgr, nxt, cur))
        return out

    def identity(self) -> int:
        if self._identity is None:
            mgr = self.mgr
            self._identity = mgr.conj_all(
                mgr.iff(mgr.var(3 * t), mgr.var(3 * t + 2)) for t in range(self.g.total_bits)
            )
        return self._identity

    def id_restricted(self, set_cur: int) -> int:
        return self.mgr.conj(self.identity(), set_cur)

    def compose(self, r: int, s: int) -> int:
        # {(a, c) | exists b: (a, b) in r and (b, c) in s}
        mgr = self.mgr
        left = mgr.rename(r, self._nxt_to_tmp, "n2t")
        right = mgr.rename(s, self._cur_to_tmp, "c2t")
        return mgr.and_exists(left, right, self._tmp_block)

    def transpose_compose(self, r: int, s: int) -> int:
        # {(b, c) | exists a: (a, b) in r and (a, c) in s}
        mgr = self.mgr
        left = mgr.rename(r, self._nxt_to_tmp, "n2t")
        dropped = mgr.and_exists(left, s, self._cur_block)
        return mgr.rename(dropped, self._tmp_to_cur, "t2c")

    def dom(self, r: int) -> int:
        return self.mgr.exists(r, self._nxt_block)

    def rng(self, r: int) -> int:
        out = self.mgr.exists(r, self._cur_block)
        return self.mgr.rename(out, self._nxt_to_cur_map, "n2c")

    def image(self, r: int, set_cur: int) -> int:
        out = self.mgr.and_exists(r, set_cur, self._cur_block)
        return self.mgr.rename(out, self._nxt_to_cur_map, "n2c")

    def preimage(self, r: int, set_cur: int) -> int:
        return self.mgr.and_exists(r, self.lift_to_nxt(set_cur), self._nxt_block)

    def lift_to_nxt(self, set_cur: int) -> int:
        return self.mgr.rename(set_cur, self._cur_to_nxt, "c2n")

    def constrain_pair(self, set_cur: int, set_nxt_as_cur: int) -> int:
        return self.mgr.conj(set_cur, self.lift_to_nxt(set_nxt_as_cur))

    # Witness decoding.

    def _decode(self, assignment: dict[int, bool], levels_of) -> tuple[int, ...]:
        out = []
        for name, _ in self.g.cells:
            levels = levels_of(name)
            out.append(bv_value(lambda lvl: assignment.get(lvl, False), levels))
        return tuple(out)

    def pick_set(self, set_cur: int) -> Optional[tuple[int, ...]]:
        assignment = self.mgr.sat_pick(set_cur)
        if assignment is None:
            return None
        return self._decode(assignment, self.g.cur_levels)

    def pick_pair(self, r: int) -> Optional[tuple[tuple[int, ...], tuple[int, ...]]]:
        assignment = self.mgr.sat_pick(r)
        if assignment is None:
            return None
        return (
            self._decode(assignment, self.g.cur_levels),
            self._decode(assignment, self.g.nxt_levels),
        )

    # Exhaustive decoding for differential tests at small widths.

    def enumerate_set(self, set_cur: int) -> set[tuple[int, ...]]:
        out = set()
        for bits in self.mgr.sat_all(set_cur, self._cur_block):
            assignment = dict(zip(sorted(self._cur_block), bits))
            out.add(self._decode(assignment, self.g.cur_levels))
        return out

    def enumerate_pairs(self, r: int) -> set[tuple[tuple[int, ...], tuple[int, ...]]]:
        levels = sorted(self._cur_block + self._nxt_block)
        out = set()
        for bits in self.mgr.sat_all(r, levels):
            assignment = dict(zip(levels, bits))
            out.add(
                (
                    self._decode(assignment, self.g.cur_levels),
                    self._decode(assignment, self.g.nxt_levels),
                )
            )
        return out
