"""Reduced ordered binary decision diagrams with fixed-width vector helpers.

Nodes are hash-consed triples (level, lo, hi) stored in parallel arrays and
addressed by index; 0 and 1 are the terminals.  Levels are plain integers
assigned by the caller.  Rename only supports order-preserving level maps,
which is all the relation algebra here needs: pair relations place the
current-state bit of each variable at level 3k, a scratch copy at 3k+1 and
the next-state bit at 3k+2, so moving a whole block sideways never swaps
two levels.
"""

from __future__ import annotations

from array import array
from typing import Callable, Iterable, Iterator, Optional

LEAF_LEVEL = 1 << 60

# Cache keys are single ints: operand ids and a small opcode packed into
# one word-ish integer.  A tuple key costs about twice as much memory and
# the table below is the dominant allocation at scale.
_OP_AND, _OP_OR, _OP_XOR, _OP_NOT, _OP_EXISTS, _OP_ANDEX, _OP_RENAME = range(7)
_OP_OF = {"and": _OP_AND, "or": _OP_OR, "xor": _OP_XOR}


class BudgetExceeded(Exception):
    """Raised when the node table outgrows the configured budget."""


class BDD:
    FALSE = 0
    TRUE = 1

    def __init__(self, node_budget: Optional[int] = None, cache_limit: int = 6_000_000):
        self.level = [LEAF_LEVEL, LEAF_LEVEL]
        self.lo = [0, 1]
        self.hi = [0, 1]
        self._unique: dict[int, int] = {}
        self._apply_cache: dict[int, int] = {}
        # Operation caches are memo tables, so dropping them wholesale is
        # always sound; the cap keeps long saturations from hoarding memory.
        self.cache_limit = cache_limit
        self.cache_clears = 0
        self._set_ids: dict[frozenset, int] = {}
        self._tag_ids: dict[str, int] = {}
        self.node_budget = node_budget
        self.collections = 0

    def _cache_put(self, key: int, out: int) -> int:
        cache = self._apply_cache
        if len(cache) >= self.cache_limit:
            cache.clear()
            self.cache_clears += 1
        cache[key] = out
        return out

    def __len__(self) -> int:
        return len(self.level)

    def node(self, level: int, lo: int, hi: int) -> int:
        if lo == hi:
            return lo
        # Children must sit strictly below; a violation means a rename
        # crossed two levels and the diagram would silently be wrong.
        assert level < self.level[lo] and level < self.level[hi]
        key = (level << 60) | (lo << 30) | hi
        found = self._unique.get(key)
        if found is not None:
            return found
        if self.node_budget is not None and len(self.level) >= self.node_budget:
            raise BudgetExceeded(f"BDD node budget {self.node_budget} exhausted")
        idx = len(self.level)
        self.level.append(level)
        self.lo.append(lo)
        self.hi.append(hi)
        self._unique[key] = idx
        return idx

    def collect(self, roots: Iterable[int]) -> "array":
        """Mark-compact pass keeping only the closure of the given roots.

        Children are always allocated before their parents, so one ascending
        sweep renumbers the survivors.  Returns old-id -> new-id as an array;
        entries for dead nodes are 0, so callers must remap exactly the
        references they passed as roots, then forget everything else.  The
        operation cache is dropped wholesale (its keys embed old ids).
        """
        n = len(self.level)
        keep = bytearray(n)
        keep[0] = keep[1] = 1
        stack = []
        for r in roots:
            if not keep[r]:
                keep[r] = 1
                stack.append(r)
        lo, hi = self.lo, self.hi
        while stack:
            u = stack.pop()
            c = lo[u]
            if not keep[c]:
                keep[c] = 1
                stack.append(c)
            c = hi[u]
            if not keep[c]:
                keep[c] = 1
                stack.append(c)
        remap = array("q", bytes(8 * n))
        remap[1] = 1
        level = self.level
        new_level = [LEAF_LEVEL, LEAF_LEVEL]
        new_lo = [0, 1]
        new_hi = [0, 1]
        unique: dict[int, int] = {}
        for u in range(2, n):
            if not keep[u]:
                continue
            lvl = level[u]
            l2, h2 = remap[lo[u]], remap[hi[u]]
            idx = len(new_level)
            new_level.append(lvl)
            new_lo.append(l2)
            new_hi.append(h2)
            unique[(lvl << 60) | (l2 << 30) | h2] = idx
            remap[u] = idx
        self.level, self.lo, self.hi = new_level, new_lo, new_hi
        self._unique = unique
        self._apply_cache.clear()
        self.collections += 1
        return remap

    def var(self, level: int) -> int:
        return self.node(level, self.FALSE, self.TRUE)

    def nvar(self, level: int) -> int:
        return self.node(level, self.TRUE, self.FALSE)

    # Binary boolean connectives share one memoized recursion.

    def apply(self, op: str, u: int, v: int) -> int:
        if op == "and":
            if u == self.FALSE or v == self.FALSE:
                return self.FALSE
            if u == self.TRUE:
                return v
            if v == self.TRUE:
                return u
            if u == v:
                return u
        elif op == "or":
            if u == self.TRUE or v == self.TRUE:
                return self.TRUE
            if u == self.FALSE:
                return v
            if v == self.FALSE:
                return u
            if u == v:
                return u
        elif op == "xor":
            if u == self.FALSE:
                return v
            if v == self.FALSE:
                return u
            if u == v:
                return self.FALSE
            if u == self.TRUE:
                return self.neg(v)
            if v == self.TRUE:
                return self.neg(u)
        else:
            raise ValueError(f"unknown op {op!r}")
        if u > v:
            u, v = v, u
        key = (((u << 30) | v) << 4) | _OP_OF[op]
        found = self._apply_cache.get(key)
        if found is not None:
            return found
        lu, lv = self.level[u], self.level[v]
        top = min(lu, lv)
        u0, u1 = (self.lo[u], self.hi[u]) if lu == top else (u, u)
        v0, v1 = (self.lo[v], self.hi[v]) if lv == top else (v, v)
        out = self.node(top, self.apply(op, u0, v0), self.apply(op, u1, v1))
        return self._cache_put(key, out)

    def conj(self, u: int, v: int) -> int:
        return self.apply("and", u, v)

    def disj(self, u: int, v: int) -> int:
        return self.apply("or", u, v)

    def xor(self, u: int, v: int) -> int:
        return self.apply("xor", u, v)

    def neg(self, u: int) -> int:
        if u == self.FALSE:
            return self.TRUE
        if u == self.TRUE:
            return self.FALSE
        key = (u << 4) | _OP_NOT
        found = self._apply_cache.get(key)
        if found is not None:
            return found
        out = self.node(self.level[u], self.neg(self.lo[u]), self.neg(self.hi[u]))
        return self._cache_put(key, out)

    def iff(self, u: int, v: int) -> int:
        return self.neg(self.xor(u, v))

    def ite(self, g: int, t: int, e: int) -> int:
        return self.disj(self.conj(g, t), self.conj(self.neg(g), e))

    def conj_all(self, items: Iterable[int]) -> int:
        out = self.TRUE
        for u in items:
            out = self.conj(out, u)
        return out

    def disj_all(self, items: Iterable[int]) -> int:
        out = self.FALSE
        for u in items:
            out = self.disj(out, u)
        return out

    def _set_id(self, wanted: frozenset) -> int:
        found = self._set_ids.get(wanted)
        if found is None:
            found = self._set_ids[wanted] = len(self._set_ids)
        return found

    def exists(self, u: int, levels: Iterable[int]) -> int:
        wanted = frozenset(levels)
        if not wanted:
            return u
        return self._exists(u, wanted, self._set_id(wanted))

    def _exists(self, u: int, wanted: frozenset, wid: int) -> int:
        if self.level[u] == LEAF_LEVEL:
            return u
        key = (((u << 12) | wid) << 4) | _OP_EXISTS
        found = self._apply_cache.get(key)
        if found is not None:
            return found
        lvl = self.level[u]
        lo = self._exists(self.lo[u], wanted, wid)
        if lvl in wanted:
            out = self.TRUE if lo == self.TRUE else self.disj(lo, self._exists(self.hi[u], wanted, wid))
        else:
            out = self.node(lvl, lo, self._exists(self.hi[u], wanted, wid))
        return self._cache_put(key, out)

    def and_exists(self, u: int, v: int, levels: Iterable[int]) -> int:
        """conj(u, v) with the given levels projected out, in one pass.

        The intermediate conjunction never gets built, and a TRUE cofactor
        under a quantified level short-circuits the sibling; relation
        composition spends nearly all its time here.
        """
        wanted = frozenset(levels)
        if not wanted:
            return self.conj(u, v)
        return self._and_exists(u, v, wanted, self._set_id(wanted))

    def _and_exists(self, u: int, v: int, wanted: frozenset, wid: int) -> int:
        if u == self.FALSE or v == self.FALSE:
            return self.FALSE
        if u == self.TRUE and v == self.TRUE:
            return self.TRUE
        if u == self.TRUE or u == v:
            return self._exists(v, wanted, wid)
        if v == self.TRUE:
            return self._exists(u, wanted, wid)
        if u > v:
            u, v = v, u
        key = (((((u << 30) | v) << 12) | wid) << 4) | _OP_ANDEX
        found = self._apply_cache.get(key)
        if found is not None:
            return found
        lu, lv = self.level[u], self.level[v]
        top = min(lu, lv)
        u0, u1 = (self.lo[u], self.hi[u]) if lu == top else (u, u)
        v0, v1 = (self.lo[v], self.hi[v]) if lv == top else (v, v)
        lo = self._and_exists(u0, v0, wanted, wid)
        if top in wanted:
            out = self.TRUE if lo == self.TRUE else self.disj(lo, self._and_exists(u1, v1, wanted, wid))
        else:
            out = self.node(top, lo, self._and_exists(u1, v1, wanted, wid))
        return self._cache_put(key, out)

    def rename(self, u: int, mapping: dict[int, int], tag: Optional[str] = None) -> int:
        """Relabel levels through an order-preserving map.

        The support levels and their images must be in the same relative
        order, and no image may land on a level still present in u outside
        the mapping; the node() assertion enforces both as a side effect.
        A tag names the mapping so results persist across calls; the hot
        maps in the relation algebra are fixed, so their renames memoize
        globally instead of once per invocation.
        """
        if not mapping:
            return u
        if tag is None:
            memo: dict[int, int] = {}
            return self._rename_once(u, mapping, memo)
        tid = self._tag_ids.get(tag)
        if tid is None:
            tid = self._tag_ids[tag] = len(self._tag_ids)
        return self._rename(u, mapping, tid)

    def _rename_once(self, u: int, mapping: dict[int, int], memo: dict[int, int]) -> int:
        if self.level[u] == LEAF_LEVEL:
            return u
        found = memo.get(u)
        if found is not None:
            return found
        lvl = mapping.get(self.level[u], self.level[u])
        out = self.node(
            lvl,
            self._rename_once(self.lo[u], mapping, memo),
            self._rename_once(self.hi[u], mapping, memo),
        )
        memo[u] = out
        return out

    def _rename(self, u: int, mapping: dict[int, int], tid: int) -> int:
        if self.level[u] == LEAF_LEVEL:
            return u
        key = (((u << 12) | tid) << 4) | _OP_RENAME
        found = self._apply_cache.get(key)
        if found is not None:
            return found
        lvl = mapping.get(self.level[u], self.level[u])
        out = self.node(
            lvl,
            self._rename(self.lo[u], mapping, tid),
            self._rename(self.hi[u], mapping, tid),
        )
        return self._cache_put(key, out)

    def support(self, u: int) -> set[int]:
        seen: set[int] = set()
        out: set[int] = set()
        stack = [u]
        while stack:
            n = stack.pop()
            if n in seen or self.level[n] == LEAF_LEVEL:
                continue
            seen.add(n)
            out.add(self.level[n])
            stack.append(self.lo[n])
            stack.append(self.hi[n])
        return out

    def restrict(self, u: int, level: int, value: bool) -> int:
        lit = self.var(level) if value else self.nvar(level)
        return self.exists(self.conj(u, lit), (level,))

    def sat_pick(self, u: int) -> Optional[dict[int, bool]]:
        """One satisfying branch, preferring the 0-edge at every level.

        Levels absent from the returned dict are unconstrained; callers
        default them to 0, which keeps extracted witnesses deterministic
        and (with most-significant bits at lower levels) numerically
        minimal per variable.
        """
        if u == self.FALSE:
            return None
        out: dict[int, bool] = {}
        while u != self.TRUE:
            if self.lo[u] != self.FALSE:
                out[self.level[u]] = False
                u = self.lo[u]
            else:
                out[self.level[u]] = True
                u = self.hi[u]
        return out

    def sat_all(self, u: int, levels: list[int]) -> Iterator[tuple[bool, ...]]:
        """Every assignment to the given levels that can satisfy u.

        Intended for differential tests at small widths; the given levels
        must cover the support of u.
        """
        order = sorted(levels)

        def walk(n: int, i: int, prefix: list[bool]) -> Iterator[tuple[bool, ...]]:
            if n == self.FALSE:
                return
            if i == len(order):
                if n == self.TRUE:
                    yield tuple(prefix)
                return
            lvl = order[i]
            if self.level[n] == lvl:
                yield from walk(self.lo[n], i + 1, prefix + [False])
                yield from walk(self.hi[n], i + 1, prefix + [True])
            else:
                yield from walk(n, i + 1, prefix + [False])
                yield from walk(n, i + 1, prefix + [True])

        yield from walk(u, 0, [])


# Fixed-width vectors: a value is a list of node indices, most significant
# bit first to match the level allocation, so bv[0] is the MSB.


def bv_const(mgr: BDD, value: int, width: int) -> list[int]:
    return [
        mgr.TRUE if (value >> (width - 1 - i)) & 1 else mgr.FALSE
        for i in range(width)
    ]


def bv_from_levels(mgr: BDD, levels: list[int]) -> list[int]:
    return [mgr.var(lvl) for lvl in levels]


def bv_not(mgr: BDD, a: list[int]) -> list[int]:
    return [mgr.neg(x) for x in a]


def bv_bitand(mgr: BDD, a: list[int], b: list[int]) -> list[int]:
    return [mgr.conj(x, y) for x, y in zip(a, b)]


def bv_bitor(mgr: BDD, a: list[int], b: list[int]) -> list[int]:
    return [mgr.disj(x, y) for x, y in zip(a, b)]


def bv_add(mgr: BDD, a: list[int], b: list[int]) -> list[int]:
    out = [mgr.FALSE] * len(a)
    carry = mgr.FALSE
    for i in range(len(a) - 1, -1, -1):
        x, y = a[i], b[i]
        out[i] = mgr.xor(mgr.xor(x, y), carry)
        carry = mgr.disj(mgr.conj(x, y), mgr.conj(carry, mgr.xor(x, y)))
    return out


def bv_sub(mgr: BDD, a: list[int], b: list[int]) -> list[int]:
    nb = bv_not(mgr, b)
    one = bv_const(mgr, 1, len(a))
    return bv_add(mgr, bv_add(mgr, a, nb), one)


def bv_mul(mgr: BDD, a: list[int], b: list[int]) -> list[int]:
    width = len(a)
    acc = bv_const(mgr, 0, width)
    for i in range(width):
        # b's bit of significance i gates a shifted left by i.
        bit = b[width - 1 - i]
        shifted = a[i:] + [mgr.FALSE] * i
        gated = [mgr.conj(bit, x) for x in shifted]
        acc = bv_add(mgr, acc, gated)
    return acc


def bv_eq(mgr: BDD, a: list[int], b: list[int]) -> int:
    return mgr.conj_all(mgr.iff(x, y) for x, y in zip(a, b))


def bv_ne(mgr: BDD, a: list[int], b: list[int]) -> int:
    return mgr.neg(bv_eq(mgr, a, b))


def bv_lt(mgr: BDD, a: list[int], b: list[int]) -> int:
    # Unsigned compare, scanning from the most significant bit down.
    out = mgr.FALSE
    eq_above = mgr.TRUE
    for x, y in zip(a, b):
        out = mgr.disj(out, mgr.conj(eq_above, mgr.conj(mgr.neg(x), y)))
        eq_above = mgr.conj(eq_above, mgr.iff(x, y))
    return out


def bv_le(mgr: BDD, a: list[int], b: list[int]) -> int:
    return mgr.disj(bv_lt(mgr, a, b), bv_eq(mgr, a, b))


def bv_nonzero(mgr: BDD, a: list[int]) -> int:
    return mgr.disj_all(a)


def bv_ite(mgr: BDD, guard: int, a: list[int], b: list[int]) -> list[int]:
    return [mgr.ite(guard, x, y) for x, y in zip(a, b)]


def bv_bool(mgr: BDD, bit: int, width: int) -> list[int]:
    return [mgr.FALSE] * (width - 1) + [bit]


def bv_value(bits_assignment: Callable[[int], bool], levels: list[int]) -> int:
    """Decode an integer from a level->bool assignment (MSB first)."""
    value = 0
    for lvl in levels:
        value = (value << 1) | (1 if bits_assignment(lvl) else 0)
    return value
