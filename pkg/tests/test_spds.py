import itertools

import pytest
from hypothesis import given, settings, strategies as st

from wherecheck.parser import parse_program
from wherecheck.spds import (
    HAVOC,
    ArrayWrite,
    CellRef,
    GOp,
    GRef,
    GlobalsDecl,
    KConst,
    RelationAlgebra,
    Rule,
    RuleSpec,
    SPDS,
    dump_spds,
    eval_gexpr,
    eval_guard,
    format_gexpr,
    format_rule,
    from_program_expr,
    infer_width,
    rename_gexpr,
    spec_successors,
    successors,
)

G3 = GlobalsDecl((("x", 2), ("y", 1)))


def test_globals_layout():
    g = GlobalsDecl((("a", 2), ("b", 3)))
    assert g.total_bits == 5
    assert g.width_of("b") == 3
    assert g.cur_levels("a") == [0, 3]
    assert g.nxt_levels("a") == [2, 5]
    assert g.cur_levels("b") == [6, 9, 12]
    assert g.tmp_levels("b") == [7, 10, 13]
    assert g.block_levels(0) == [0, 3, 6, 9, 12]
    assert g.block_map(2, 1)[8] == 7
    assert g.valuation({"a": 5, "b": 3}) == (1, 3)
    assert g.as_dict((1, 3)) == {"a": 1, "b": 3}
    assert len(list(g.all_valuations())) == 32


def test_from_program_expr_and_rename():
    e = parse_program("z := h + l * 2").root.expr
    g = from_program_expr(e, {"h": "h", "l": "xi_l"})
    assert format_gexpr(g) == "h + xi_l * 2"
    r = rename_gexpr(g, {"h": "xi_h"})
    assert format_gexpr(r) == "xi_h + xi_l * 2"


def test_format_gexpr_parens():
    x, y = GRef("x"), GRef("y")
    assert format_gexpr(GOp("*", GOp("+", x, y), KConst(2))) == "(x + y) * 2"
    assert format_gexpr(GOp("+", x, GOp("+", y, KConst(1)))) == "x + (y + 1)"
    assert format_gexpr(CellRef(("c0", "c1"), "idx", "C")) == "C[idx]"


def test_infer_width_rules():
    g = GlobalsDecl((("x", 2), ("p", 4)))
    assert infer_width(GRef("p"), g) == 4
    assert infer_width(KConst(3), g) is None
    assert infer_width(GOp("+", GRef("x"), KConst(1)), g) == 2
    # Comparisons adapt to any context, so mixing them is fine.
    mixed = GOp("&", GOp("<", GRef("p"), KConst(2)), GOp("==", GRef("x"), KConst(0)))
    assert infer_width(mixed, g) is None
    with pytest.raises(ValueError):
        infer_width(GOp("+", GRef("x"), GRef("p")), g)


def test_eval_gexpr_cells_and_mixed_guard():
    g = GlobalsDecl((("c0", 2), ("c1", 2), ("idx", 2), ("t", 2)))
    val = g.valuation({"c0": 1, "c1": 3, "idx": 1, "t": 3})
    assert eval_gexpr(CellRef(("c0", "c1"), "idx", "C"), g, val, 2) == 3
    out_of_range = g.valuation({"c0": 1, "c1": 3, "idx": 2})
    assert eval_gexpr(CellRef(("c0", "c1"), "idx", "C"), g, out_of_range, 2) == 0
    guard = GOp(
        "&",
        GOp("!=", CellRef(("c0", "c1"), "idx", "C"), GRef("t")),
        GOp("<", GRef("idx"), KConst(2)),
    )
    assert eval_guard(RuleSpec.make(guard), g, val) is False
    val2 = g.valuation({"c0": 1, "c1": 2, "idx": 1, "t": 3})
    assert eval_guard(RuleSpec.make(guard), g, val2) is True


def test_spec_successors_frame_and_havoc():
    spec = RuleSpec.make(
        guard=GOp("==", GRef("y"), KConst(1)),
        updates={"x": HAVOC},
    )
    assert list(spec_successors(spec, G3, G3.valuation({"x": 2, "y": 0}))) == []
    outs = list(spec_successors(spec, G3, G3.valuation({"x": 2, "y": 1})))
    # y is framed, x ranges over 0..3 ascending.
    assert outs == [(0, 1), (1, 1), (2, 1), (3, 1)]


def test_spec_successors_array_write():
    g = GlobalsDecl((("c0", 2), ("c1", 2), ("q", 2), ("v", 2)))
    spec = RuleSpec.make(
        guard=GOp("<", GRef("q"), KConst(2)),
        updates={"q": GOp("+", GRef("q"), KConst(1))},
        writes=(ArrayWrite(("c0", "c1"), "q", GRef("v"), "C"),),
    )
    val = g.valuation({"c0": 0, "c1": 0, "q": 1, "v": 3})
    outs = list(spec_successors(spec, g, val))
    assert outs == [g.valuation({"c0": 0, "c1": 3, "q": 2, "v": 3})]
    # Guard blocks the out-of-range write.
    assert list(spec_successors(spec, g, g.valuation({"q": 2}))) == []


def test_rule_format_and_dump():
    spec = RuleSpec.make(
        guard=GOp("<", GRef("y"), KConst(1)),
        updates={"x": GOp("+", GRef("x"), KConst(1)), "y": HAVOC},
    )
    rule = Rule("g0", ("g1", "g2"), spec)
    assert format_rule(rule) == "<g0> -> <g1 g2> | y < 1 | x:=x + 1, y:=*"
    pop = Rule("g2", (), RuleSpec.make())
    assert format_rule(pop) == "<g2> -> <.> | 1 | -"
    spds = SPDS(G3, ("g0", "g1", "g2"), (rule, pop), "g0", (("y", 0),))
    text = dump_spds(spds)
    assert text.splitlines()[0] == "globals: x:2 y:1"
    assert text.splitlines()[1] == "start: g0"
    assert text.splitlines()[2] == "initial: y=0"
    assert dump_spds(spds) == text  # deterministic


def test_rule_rhs_bounded():
    with pytest.raises(AssertionError):
        Rule("a", ("b", "c", "d"), RuleSpec.make())


def test_spds_initial_valuations_and_successors():
    rule1 = Rule("g0", ("g1",), RuleSpec.make(updates={"x": KConst(3)}))
    rule2 = Rule("g1", (), RuleSpec.make(guard=GOp("==", GRef("x"), KConst(3))))
    spds = SPDS(G3, ("g0", "g1"), (rule1, rule2), "g0", (("x", 0),))
    inits = list(spds.initial_valuations())
    assert inits == [(0, 0), (0, 1)]
    nexts = list(successors(spds, (0, 1), ("g0",)))
    assert nexts == [((3, 1), ("g1",))]
    pops = list(successors(spds, (3, 1), ("g1", "g0")))
    assert pops == [((3, 1), ("g0",))]
    assert list(successors(spds, (3, 1), ())) == []


# Differential check: the BDD compilation of a spec and the explicit
# evaluator must induce exactly the same transition pairs.

CATALOGUE = [
    RuleSpec.make(),
    RuleSpec.make(guard=GOp("<", GRef("x"), KConst(2))),
    RuleSpec.make(updates={"x": GOp("+", GRef("x"), KConst(1))}),
    RuleSpec.make(updates={"x": GOp("-", GRef("x"), GRef("x"))}),
    RuleSpec.make(updates={"x": GOp("*", GRef("x"), KConst(3))}),
    RuleSpec.make(updates={"x": HAVOC, "y": KConst(1)}),
    RuleSpec.make(
        guard=GOp("!=", GRef("y"), KConst(0)),
        updates={"y": GOp("<=", GRef("x"), KConst(1))},
    ),
    RuleSpec.make(
        guard=GOp("|", GOp("==", GRef("x"), KConst(0)), GRef("y")),
        updates={"x": GOp("&", GRef("x"), KConst(1))},
    ),
    RuleSpec.make(updates={"y": GOp("|", GRef("y"), KConst(1)), "x": HAVOC}),
]


@pytest.mark.parametrize("spec", CATALOGUE, ids=range(len(CATALOGUE)))
def test_compile_spec_matches_explicit(spec):
    ra = RelationAlgebra(G3)
    node = ra.compile_spec(spec)
    symbolic = ra.enumerate_pairs(node)
    explicit = {
        (val, nxt)
        for val in G3.all_valuations()
        for nxt in spec_successors(spec, G3, val)
    }
    assert symbolic == explicit


def test_compile_spec_array_write_matches_explicit():
    g = GlobalsDecl((("c0", 1), ("c1", 1), ("q", 2), ("v", 1)))
    spec = RuleSpec.make(
        guard=GOp("<", GRef("q"), KConst(2)),
        updates={"q": GOp("+", GRef("q"), KConst(1))},
        writes=(ArrayWrite(("c0", "c1"), "q", GRef("v"), "C"),),
    )
    ra = RelationAlgebra(g)
    symbolic = ra.enumerate_pairs(ra.compile_spec(spec))
    explicit = {
        (val, nxt)
        for val in g.all_valuations()
        for nxt in spec_successors(spec, g, val)
    }
    assert symbolic == explicit


def test_compile_cellref_matches_explicit():
    g = GlobalsDecl((("c0", 1), ("c1", 1), ("q", 2), ("v", 1)))
    spec = RuleSpec.make(
        guard=GOp("!=", CellRef(("c0", "c1"), "q", "C"), GRef("v")),
    )
    ra = RelationAlgebra(g)
    symbolic = ra.enumerate_pairs(ra.compile_spec(spec))
    explicit = {
        (val, nxt)
        for val in g.all_valuations()
        for nxt in spec_successors(spec, g, val)
    }
    assert symbolic == explicit


# Relation algebra laws against plain set arithmetic.

VALS = list(G3.all_valuations())
val_st = st.sampled_from(VALS)
pairs_st = st.frozensets(st.tuples(val_st, val_st), max_size=12)


def rel_from_pairs(ra, pairs):
    out = ra.empty
    for a, b in sorted(pairs):
        node = ra.mgr.conj(
            ra.set_from_valuation(a), ra.lift_to_nxt(ra.set_from_valuation(b))
        )
        out = ra.mgr.disj(out, node)
    return out


@settings(max_examples=60)
@given(pairs_st, pairs_st)
def test_compose_matches_sets(p1, p2):
    ra = RelationAlgebra(G3)
    r, s = rel_from_pairs(ra, p1), rel_from_pairs(ra, p2)
    expected = {(a, c) for a, b in p1 for b2, c in p2 if b == b2}
    assert ra.enumerate_pairs(ra.compose(r, s)) == expected


@settings(max_examples=60)
@given(pairs_st, pairs_st)
def test_transpose_compose_matches_sets(p1, p2):
    ra = RelationAlgebra(G3)
    r, s = rel_from_pairs(ra, p1), rel_from_pairs(ra, p2)
    expected = {(b, c) for a, b in p1 for a2, c in p2 if a == a2}
    assert ra.enumerate_pairs(ra.transpose_compose(r, s)) == expected


@settings(max_examples=60)
@given(pairs_st)
def test_dom_rng_image_preimage(p1):
    ra = RelationAlgebra(G3)
    r = rel_from_pairs(ra, p1)
    assert ra.enumerate_set(ra.dom(r)) == {a for a, _ in p1}
    assert ra.enumerate_set(ra.rng(r)) == {b for _, b in p1}
    some = {a for a, _ in sorted(p1)[: len(p1) // 2]}
    node = ra.empty
    for v in sorted(some):
        node = ra.mgr.disj(node, ra.set_from_valuation(v))
    assert ra.enumerate_set(ra.image(r, node)) == {b for a, b in p1 if a in some}
    assert ra.enumerate_set(ra.preimage(r, node)) == {a for a, b in p1 if b in some}


def test_identity_and_restriction():
    ra = RelationAlgebra(G3)
    ident = ra.identity()
    assert ra.enumerate_pairs(ident) == {(v, v) for v in VALS}
    sub = ra.set_from_fixed({"y": 1})
    restricted = ra.id_restricted(sub)
    assert ra.enumerate_pairs(restricted) == {(v, v) for v in VALS if v[1] == 1}


def test_pick_set_is_minimal():
    ra = RelationAlgebra(G3)
    node = ra.mgr.disj(
        ra.set_from_valuation((3, 1)), ra.set_from_valuation((1, 0))
    )
    assert ra.pick_set(node) == (1, 0)
    node2 = ra.mgr.disj(node, ra.set_from_valuation((1, 1)))
    assert ra.pick_set(node2) == (1, 0)
    assert ra.pick_set(ra.empty) is None


def test_pick_pair_deterministic():
    ra = RelationAlgebra(G3)
    r = rel_from_pairs(ra, {((2, 1), (0, 0)), ((0, 1), (3, 0))})
    assert ra.pick_pair(r) == ((0, 1), (3, 0))
