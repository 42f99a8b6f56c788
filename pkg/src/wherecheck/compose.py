"""Self-composition of a model skeleton into a pair-run pushdown system.

The composed system runs the program twice in sequence over one shared set
of channels.  Run one executes the original rules and additionally records
every downgraded value in the 𝒟 array and every observable output in the
channel cells.  A restart rule then rewinds the channel indices and starts
the renamed copy, whose downgrade bodies must match the recorded 𝒟 entry
(a mismatch falsifies the property's premise and parks the run on idle)
and whose output bodies must match the recorded cells (a mismatch is a
genuine observation difference and enters error).

The alternative transformer keeps two disjoint copies of the declared
output channels, lets both runs write freely, and compares the streams in
a checker chain after the second run.  The synthetic finals stream is not
a program channel and stays matched in place under both transformers, so
the two modes produce identical globals on channel-free programs.  The
baseline exists for comparison: verdicts must coincide while the
store-match encoding uses fewer bits whenever a low channel exists.

Initial valuations pin only the channel indices and exhaustion flags to
zero.  Everything else, in particular the 𝒟 cells and the unwritten
channel cells, starts unconstrained; that slack is what lets the match
phase catch output-count mismatches and downgrades the first run never
reached.
"""

from __future__ import annotations

from dataclasses import dataclass

from .modelgen import FINALVARS, ModelSkeleton, d_name, make_globals, xi_name
from .spds import (
    ArrayWrite,
    CellRef,
    GExpr,
    GOp,
    GRef,
    KConst,
    Rule,
    RuleSpec,
    SPDS,
)

MODE_STORE_MATCH = "storematch"
MODE_TR = "tr"

INIT_SYMBOL = "init"
ERROR_SYMBOL = "error"
IDLE_SYMBOL = "idle"
TMP = "tmp"


@dataclass(frozen=True)
class ComposedModel:
    spds: SPDS
    skeleton: ModelSkeleton
    mode: str
    init_symbol: str
    error_symbol: str
    idle_symbol: str
    xi_stack: dict[str, str]  # original stack symbol -> renamed copy

    @property
    def level(self) -> str:
        return self.skeleton.level

    @property
    def bits(self) -> int:
        return self.skeleton.bits


def _conj(parts: list[GExpr]) -> GExpr:
    out = parts[0]
    for p in parts[1:]:
        out = GOp("&", out, p)
    return out


def _disj(parts: list[GExpr]) -> GExpr:
    out = parts[0]
    for p in parts[1:]:
        out = GOp("|", out, p)
    return out


def _compose(skeleton: ModelSkeleton, mode: str) -> ComposedModel:
    program_vars = tuple(skeleton.program.variables)
    var_map = {name: xi_name(name) for name in program_vars}
    # Entry/exit markers of an empty channel never occur in skeleton rules
    # but the stuffed bodies below still attach to them.
    symbols = list(skeleton.spds.alphabet)
    for pair in (*skeleton.declass_symbols.values(), *skeleton.output_symbols.values()):
        symbols += [s for s in pair if s not in symbols]
    xi_stack = {s: xi_name(s) for s in symbols}
    tr = mode == MODE_TR

    globals_decl = make_globals(
        program_vars,
        skeleton.bits,
        skeleton.tmp_used,
        skeleton.inputs,
        skeleton.outputs,
        len(skeleton.declass_sites),
        companions=True,
        duplicate_outputs=tr,
    )

    def is_last_trans(rule: Rule) -> bool:
        return rule.lhs == skeleton.final_symbol

    rules: list[Rule] = []

    init_spec = RuleSpec.make(
        updates={xi_name(x): GRef(x) for x in skeleton.observable_vars}
    )
    rules.append(Rule(INIT_SYMBOL, (skeleton.start_symbol,), init_spec, "pair start"))

    for rule in skeleton.spds.rules:
        if not is_last_trans(rule):
            rules.append(rule)

    resets: dict[str, GExpr] = {spec.index: KConst(0) for spec in skeleton.inputs}
    for spec in skeleton.outputs:
        # The match phase re-reads first-run data in place from index 0;
        # duplicated channels keep their first-run index for the checker.
        if not tr or spec.name == FINALVARS:
            resets[spec.index] = KConst(0)
    rules.append(
        Rule(
            skeleton.final_symbol,
            (xi_stack[skeleton.start_symbol],),
            RuleSpec.make(updates=resets),
            "restart as second run",
        )
    )

    for rule in skeleton.spds.rules:
        if is_last_trans(rule):
            if tr:
                rules.append(
                    Rule(xi_stack[rule.lhs], ("chk0",), RuleSpec.make(), "begin comparison")
                )
            else:
                rules.append(
                    Rule(
                        xi_stack[rule.lhs],
                        (xi_stack[rule.lhs],),
                        RuleSpec.make(),
                        "second run done",
                    )
                )
            continue
        rules.append(
            Rule(
                xi_stack[rule.lhs],
                tuple(xi_stack[s] for s in rule.rhs),
                rule.spec.renamed(var_map),
                f"second-run {rule.note}" if rule.note else "",
            )
        )

    for site in skeleton.declass_sites:
        entry, exit_ = skeleton.declass_symbols[site]
        target = skeleton.declass_targets[site]
        cell = d_name(skeleton.rho[site])
        store = RuleSpec.make(updates={cell: GRef(TMP), target: GRef(TMP)})
        rules.append(Rule(entry, (exit_,), store, "record downgrade"))
        mismatch = RuleSpec.make(guard=GOp("!=", GRef(cell), GRef(TMP)))
        rules.append(Rule(xi_stack[entry], (IDLE_SYMBOL,), mismatch, "premise fails"))
        match = RuleSpec.make(
            guard=GOp("==", GRef(cell), GRef(TMP)),
            updates={xi_name(target): GRef(TMP)},
        )
        rules.append(Rule(xi_stack[entry], (xi_stack[exit_],), match, "downgrade matches"))

    for spec in skeleton.outputs:
        entry, exit_ = skeleton.output_symbols[spec.name]
        if not spec.cells:
            # A level with no observable variables writes nothing to the
            # finals stream and never pushes its entry symbol; emitting the
            # match rules anyway would compile guards over absent cells.
            continue
        cap = spec.length
        q = spec.index
        in_cap = GOp("<", GRef(q), KConst(cap))
        store = RuleSpec.make(
            guard=in_cap,
            updates={q: GOp("+", GRef(q), KConst(1))},
            writes=(ArrayWrite(spec.cells, q, GRef(TMP), f"O({spec.name})"),),
        )
        rules.append(Rule(entry, (exit_,), store, "record output"))
        if tr and spec.name != FINALVARS:
            xq = xi_name(q)
            xcells = tuple(xi_name(c) for c in spec.cells)
            write2 = RuleSpec.make(
                guard=GOp("<", GRef(xq), KConst(cap)),
                updates={xq: GOp("+", GRef(xq), KConst(1))},
                writes=(ArrayWrite(xcells, xq, GRef(TMP), f"O'({spec.name})"),),
            )
            rules.append(Rule(xi_stack[entry], (xi_stack[exit_],), write2, "second-run output"))
        else:
            recorded = CellRef(spec.cells, q, f"O({spec.name})")
            differ = RuleSpec.make(
                guard=GOp("&", in_cap, GOp("!=", recorded, GRef(TMP)))
            )
            rules.append(Rule(xi_stack[entry], (ERROR_SYMBOL,), differ, "observation differs"))
            agree = RuleSpec.make(
                guard=GOp("&", in_cap, GOp("==", recorded, GRef(TMP))),
                updates={q: GOp("+", GRef(q), KConst(1))},
            )
            rules.append(Rule(xi_stack[entry], (xi_stack[exit_],), agree, "output matches"))

    if tr:
        for i, spec in enumerate(skeleton.channel_outputs):
            here, nxt = f"chk{i}", f"chk{i + 1}"
            q, xq = spec.index, xi_name(spec.index)
            rules.append(
                Rule(
                    here,
                    (ERROR_SYMBOL,),
                    RuleSpec.make(guard=GOp("!=", GRef(q), GRef(xq))),
                    f"{spec.name} counts differ",
                )
            )
            ok_parts: list[GExpr] = [GOp("==", GRef(q), GRef(xq))]
            bad_parts: list[GExpr] = []
            for k, cname in enumerate(spec.cells):
                written = GOp("<", KConst(k), GRef(q))
                unwritten = GOp("<=", GRef(q), KConst(k))
                same = GOp("==", GRef(cname), GRef(xi_name(cname)))
                diff = GOp("!=", GRef(cname), GRef(xi_name(cname)))
                bad_parts.append(GOp("&", written, diff))
                ok_parts.append(GOp("|", unwritten, same))
            if bad_parts:
                rules.append(
                    Rule(
                        here,
                        (ERROR_SYMBOL,),
                        RuleSpec.make(guard=_disj(bad_parts)),
                        f"{spec.name} cells differ",
                    )
                )
            rules.append(
                Rule(here, (nxt,), RuleSpec.make(guard=_conj(ok_parts)), f"{spec.name} agrees")
            )
        done = f"chk{len(skeleton.channel_outputs)}"
        rules.append(Rule(done, (done,), RuleSpec.make(), "comparison done"))

    rules.append(Rule(IDLE_SYMBOL, (IDLE_SYMBOL,), RuleSpec.make(), "out of scope"))

    alphabet: list[str] = [INIT_SYMBOL]
    for rule in rules:
        for s in (rule.lhs, *rule.rhs):
            if s not in alphabet:
                alphabet.append(s)
    if ERROR_SYMBOL not in alphabet:
        alphabet.append(ERROR_SYMBOL)

    initial_fixed = list(skeleton.spds.initial_fixed)
    if tr:
        initial_fixed += [(xi_name(spec.index), 0) for spec in skeleton.channel_outputs]

    spds = SPDS(
        globals_decl,
        tuple(alphabet),
        tuple(rules),
        INIT_SYMBOL,
        tuple(initial_fixed),
        error=ERROR_SYMBOL,
    )
    return ComposedModel(
        spds=spds,
        skeleton=skeleton,
        mode=mode,
        init_symbol=INIT_SYMBOL,
        error_symbol=ERROR_SYMBOL,
        idle_symbol=IDLE_SYMBOL,
        xi_stack=xi_stack,
    )


def self_compose(skeleton: ModelSkeleton) -> ComposedModel:
    return _compose(skeleton, MODE_STORE_MATCH)


def tr_compose(skeleton: ModelSkeleton) -> ComposedModel:
    return _compose(skeleton, MODE_TR)
