from pathlib import Path

import pytest

from wherecheck.compose import (
    ComposedModel,
    ERROR_SYMBOL,
    IDLE_SYMBOL,
    INIT_SYMBOL,
    self_compose,
    tr_compose,
)
from wherecheck.modelgen import FINALVARS, build_model, index_width, xi_name
from wherecheck.parser import parse_program
from wherecheck.policy import gather_downgrades, parse_policy
from wherecheck.spds import CellRef, GOp, GRef, dump_spds, successors

CORPUS = Path(__file__).resolve().parent.parent / "corpus" / "table3"
TABLE3 = [f"P{i}" for i in range(8)]


def load(name: str):
    program = parse_program((CORPUS / name).read_text())
    policy = parse_policy((CORPUS / f"{name}.policy").read_text())
    return program, gather_downgrades(program, policy)


def prog(text: str, pol: str):
    program = parse_program(text)
    policy = parse_policy(pol)
    return program, gather_downgrades(program, policy)


def compose(text: str, pol: str, mode, bits=1, capacity=2) -> ComposedModel:
    program, policy = prog(text, pol)
    return mode(build_model(program, policy, "L", bits=bits, capacity=capacity))


def outgoing(model: ComposedModel, symbol: str):
    return [r for r in model.spds.rules if r.lhs == symbol]


def test_p0_storematch_rule_count_frozen():
    program, policy = load("P0")
    skel = build_model(program, policy, "L", bits=3)
    assert len(skel.spds.rules) == 6
    assert len(self_compose(skel).spds.rules) == 20


@pytest.mark.parametrize("name", TABLE3)
def test_storematch_rule_count_law(name):
    program, policy = load(name)
    skel = build_model(program, policy, "L", bits=2, capacity=2)
    model = self_compose(skel)
    base = len(skel.spds.rules)
    sites = len(skel.declass_sites)
    chans = len(skel.outputs)
    assert len(model.spds.rules) == 2 * base + 3 * sites + 3 * chans + 2


@pytest.mark.parametrize("name", TABLE3)
@pytest.mark.parametrize("mode", [self_compose, tr_compose])
def test_error_sink_and_idle_loop(name, mode):
    program, policy = load(name)
    model = mode(build_model(program, policy, "L", bits=2, capacity=2))
    assert outgoing(model, ERROR_SYMBOL) == []
    loops = outgoing(model, IDLE_SYMBOL)
    assert len(loops) == 1
    assert loops[0].rhs == (IDLE_SYMBOL,)
    assert loops[0].spec.guard is None and loops[0].spec.updates == ()
    assert model.spds.start == INIT_SYMBOL


@pytest.mark.parametrize("name", TABLE3)
@pytest.mark.parametrize("mode", [self_compose, tr_compose])
def test_run_separation(name, mode):
    # First-run rules leave every companion alone; second-run rules leave
    # every original program variable alone.  Channels, tmp and the
    # downgrade cells are the only shared mutable state.
    program, policy = load(name)
    skel = build_model(program, policy, "L", bits=2, capacity=2)
    model = mode(skel)
    program_vars = set(skel.program.variables)
    for rule in model.spds.rules:
        written = rule.spec.written_globals()
        if rule.lhs == INIT_SYMBOL:
            continue
        if rule.lhs.startswith("xi(") or rule.lhs.startswith("chk"):
            assert not written & program_vars, rule
        else:
            assert not {w for w in written if w.startswith("xi(")}, rule


def test_init_constrains_only_observable_companions():
    program, policy = load("P4")
    model = self_compose(build_model(program, policy, "L", bits=2))
    (rule,) = outgoing(model, INIT_SYMBOL)
    assert rule.rhs == (model.skeleton.start_symbol,)
    assert rule.spec.updates == ((xi_name("l"), GRef("l")),)


@pytest.mark.parametrize(
    "mode,resets_outputs", [(self_compose, True), (tr_compose, False)]
)
def test_restart_rewinds_channel_indices(mode, resets_outputs):
    pol = (
        "lattice: L < H\nvar l : L\nvar h : H\n"
        "channel src : L input length 1\nchannel snk : L output\n"
    )
    model = compose("input(l, src); output(l, snk)", pol, mode, bits=1)
    skel = model.skeleton
    (rst,) = outgoing(model, skel.final_symbol)
    assert rst.rhs == (model.xi_stack[skel.start_symbol],)
    reset_names = {name for name, _ in rst.spec.updates}
    expected = {spec.index for spec in skel.inputs}
    # the finals stream is matched in place in both modes, so its index
    # always rewinds; a duplicated channel keeps its first-run index
    expected |= {
        spec.index
        for spec in skel.outputs
        if resets_outputs or spec.name == FINALVARS
    }
    assert reset_names == expected
    # exhaustion flags survive the restart: both runs see the same cut-off
    assert not any(name.startswith("exh") for name in reset_names)


def test_downgrade_stuffing_shape():
    program, policy = load("P4")
    skel = build_model(program, policy, "L", bits=2)
    model = self_compose(skel)
    assert len(skel.declass_sites) == 2
    for site in skel.declass_sites:
        entry, exit_ = skel.declass_symbols[site]
        (store,) = outgoing(model, entry)
        assert store.rhs == (exit_,)
        assert {n for n, _ in store.spec.updates} == {
            f"D[{skel.rho[site]}]",
            skel.declass_targets[site],
        }
        second = outgoing(model, model.xi_stack[entry])
        assert len(second) == 2
        bail, advance = second
        assert bail.rhs == (IDLE_SYMBOL,)
        assert isinstance(bail.spec.guard, GOp) and bail.spec.guard.op == "!="
        assert advance.rhs == (model.xi_stack[exit_],)
        assert advance.spec.guard.op == "=="
        assert advance.spec.updates == (
            (xi_name(skel.declass_targets[site]), GRef("tmp")),
        )


def test_output_match_shape():
    program, policy = load("P0")
    skel = build_model(program, policy, "L", bits=2)
    model = self_compose(skel)
    (spec,) = skel.outputs
    entry, exit_ = skel.output_symbols[spec.name]
    second = outgoing(model, model.xi_stack[entry])
    assert [r.rhs for r in second] == [(ERROR_SYMBOL,), (model.xi_stack[exit_],)]
    differ, agree = second
    assert any(isinstance(e, CellRef) for e in (differ.spec.guard.right.left,))
    assert {n for n, _ in agree.spec.updates} == {spec.index}


SINK_POLICY = "lattice: L < H\nvar l : L\nvar h : H\nchannel snk : L output\n"


def test_tr_duplicates_output_channels():
    program, policy = prog("l := h; output(l, snk)", SINK_POLICY)
    skel = build_model(program, policy, "L", bits=3)
    store = self_compose(skel)
    tr = tr_compose(skel)
    names = set(tr.spds.globals.names)
    snk = skel.output_spec("snk")
    assert xi_name(snk.index) in names
    assert all(xi_name(c) in names for c in snk.cells)
    assert store.spds.globals.total_bits < tr.spds.globals.total_bits
    assert dict(tr.spds.initial_fixed)[xi_name(snk.index)] == 0
    # the finals stream gets no copy; its cells stay shared
    finals = skel.output_spec(FINALVARS)
    assert xi_name(finals.index) not in names
    assert all(xi_name(c) not in names for c in finals.cells)


def test_tr_overhead_is_one_channel_copy():
    # a single low output channel: the baseline pays exactly one copy
    program, policy = prog(
        "while 0 do output(0, snk) od", "lattice: L < H\nchannel snk : L output\n"
    )
    skel = build_model(program, policy, "L", bits=3, capacity=8)
    delta = (
        tr_compose(skel).spds.globals.total_bits
        - self_compose(skel).spds.globals.total_bits
    )
    assert delta == 8 * 3 + index_width(8)


def test_tr_matches_storematch_bits_without_channels():
    program, policy = load("P0")
    skel = build_model(program, policy, "L", bits=3)
    assert (
        self_compose(skel).spds.globals.total_bits
        == tr_compose(skel).spds.globals.total_bits
    )


def test_tr_checker_chain_shape():
    program, policy = prog("l := h; output(l, snk)", SINK_POLICY)
    model = tr_compose(build_model(program, policy, "L", bits=2))
    first = outgoing(model, "chk0")
    assert [r.rhs for r in first] == [(ERROR_SYMBOL,), (ERROR_SYMBOL,), ("chk1",)]
    done = outgoing(model, "chk1")
    assert len(done) == 1 and done[0].rhs == ("chk1",)
    # second run of the output body writes the duplicated cells
    skel = model.skeleton
    snk = skel.output_spec("snk")
    entry = model.xi_stack[skel.output_symbols["snk"][0]]
    (writer,) = outgoing(model, entry)
    assert writer.spec.writes[0].cells == tuple(xi_name(c) for c in snk.cells)
    # while the finals stream keeps the in-place match pair
    fv_entry = model.xi_stack[skel.output_symbols[FINALVARS][0]]
    fv_rules = outgoing(model, fv_entry)
    assert [r.rhs for r in fv_rules] == [
        (ERROR_SYMBOL,),
        (model.xi_stack[skel.output_symbols[FINALVARS][1]],),
    ]


def test_tr_chain_is_empty_without_channels():
    program, policy = load("P4")
    model = tr_compose(build_model(program, policy, "L", bits=1))
    (done,) = outgoing(model, "chk0")
    assert done.rhs == ("chk0",)


def test_stack_renaming_is_fresh_and_total():
    program, policy = load("P7")
    skel = build_model(program, policy, "L", bits=2)
    model = self_compose(skel)
    assert set(model.xi_stack) == set(skel.spds.alphabet)
    assert not set(model.xi_stack.values()) & set(skel.spds.alphabet)
    assert len(model.spds.alphabet) == len(set(model.spds.alphabet))


@pytest.mark.parametrize("mode", [self_compose, tr_compose])
def test_construction_is_deterministic(mode):
    program, policy = load("P5")
    a = mode(build_model(program, policy, "L", bits=2))
    b = mode(build_model(program, policy, "L", bits=2))
    assert dump_spds(a.spds) == dump_spds(b.spds)


def error_reachable(model: ComposedModel, limit: int = 40000) -> bool:
    spds = model.spds
    seen = set()
    frontier = [(val, (spds.start,)) for val in spds.initial_valuations()]
    while frontier:
        nxt = []
        for val, stack in frontier:
            if (val, stack) in seen or len(stack) > 8:
                continue
            seen.add((val, stack))
            if stack and stack[0] == model.error_symbol:
                return True
            nxt.extend(successors(spds, val, stack))
        assert len(seen) < limit, "state space blow-up"
        frontier = nxt
    return False


@pytest.mark.parametrize("mode", [self_compose, tr_compose])
def test_explicit_reachability_agrees_on_tiny_programs(mode):
    pol = "lattice: L < H\nvar h : H\nvar l : L\n"
    leak = compose("l := h", pol, mode, bits=1)
    assert error_reachable(leak)
    sanctioned = compose("l := declass(h)", pol, mode, bits=1)
    assert not error_reachable(sanctioned)
    noop = compose("skip", pol, mode, bits=1)
    assert not error_reachable(noop)
