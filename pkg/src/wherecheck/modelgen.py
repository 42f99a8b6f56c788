"""Translate a program, a policy and an observer level into a pushdown model.

Each command site becomes a stack symbol; control flow is a chain of
guarded rules between sites.  Channels above the observer level are not
modeled at all: reads from them havoc the target variable and writes to
them are frame rules.  Observable channels get value cells, an index
counter and (for inputs) a sticky exhaustion flag.

Downgrade and observable-output sites push a per-site (respectively
per-channel) entry symbol over their continuation, binding tmp to the
communicated value.  The entry-to-exit body is deliberately absent: the
self-composition pass stuffs it with store or match rules, and the exit
symbol pops back to the continuation.

Before the final symbol the model emits one synthesized output per
observable variable to the reserved "finalvars" channel, making the final
store part of the observable output stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .policy import Policy
from .spds import (
    HAVOC,
    CellRef,
    GOp,
    GRef,
    GlobalsDecl,
    KConst,
    Rule,
    RuleSpec,
    SPDS,
    dump_spds,
    from_program_expr,
)
from .syntax import (
    Assign,
    Command,
    DeclassAssign,
    If,
    Input,
    Output,
    Program,
    Seq,
    Skip,
    While,
    format_expr,
    walk_commands,
)

DEFAULT_BITS = 3
DEFAULT_CAPACITY = 8

TMP = "tmp"
FINALVARS = "finalvars"
FINAL_SYMBOL = "end"


def cell_name(channel: str, k: int) -> str:
    return f"{channel}[{k}]"


def p_name(channel: str) -> str:
    return f"p[{channel}]"


def q_name(channel: str) -> str:
    return f"q[{channel}]"


def exh_name(channel: str) -> str:
    return f"exh[{channel}]"


def d_name(i: int) -> str:
    return f"D[{i}]"


def xi_name(name: str) -> str:
    return f"xi({name})"


def site_symbol(site_id: int) -> str:
    return f"g{site_id}"


def index_width(count: int) -> int:
    # The counter must be able to hold the one-past-the-end position.
    return (count + 1).bit_length()


@dataclass(frozen=True)
class ChannelSpec:
    name: str
    cells: tuple[str, ...]
    index: str  # p[...] or q[...]
    exhausted: Optional[str] = None  # inputs only

    @property
    def length(self) -> int:
        return len(self.cells)


@dataclass(frozen=True)
class ModelSkeleton:
    spds: SPDS
    level: str
    bits: int
    capacity: int
    program: Program
    policy: Policy
    observable_vars: tuple[str, ...]
    declass_sites: tuple[int, ...]  # real downgrade sites, ascending
    rho: dict[int, int]
    declass_symbols: dict[int, tuple[str, str]]  # site -> (entry, exit)
    declass_targets: dict[int, str]
    inputs: tuple[ChannelSpec, ...]
    outputs: tuple[ChannelSpec, ...]  # finalvars last
    output_symbols: dict[str, tuple[str, str]]  # channel -> (entry, exit)
    final_symbol: str
    start_symbol: str
    tmp_used: bool

    def output_spec(self, channel: str) -> ChannelSpec:
        for spec in self.outputs:
            if spec.name == channel:
                return spec
        raise KeyError(channel)

    @property
    def channel_outputs(self) -> tuple[ChannelSpec, ...]:
        """Declared output channels, without the synthetic finals stream."""
        return tuple(s for s in self.outputs if s.name != FINALVARS)


def make_globals(
    variables: tuple[str, ...],
    bits: int,
    tmp_used: bool,
    inputs: tuple[ChannelSpec, ...],
    outputs: tuple[ChannelSpec, ...],
    declass_count: int,
    companions: bool = False,
    duplicate_outputs: bool = False,
) -> GlobalsDecl:
    cells: list[tuple[str, int]] = []
    for name in variables:
        cells.append((name, bits))
        if companions:
            cells.append((xi_name(name), bits))
    if tmp_used:
        cells.append((TMP, bits))
    for spec in inputs:
        for cname in spec.cells:
            cells.append((cname, bits))
        cells.append((spec.index, index_width(spec.length)))
        cells.append((spec.exhausted, 1))
    for spec in outputs:
        # Only channels the program declares get a second copy; the
        # synthetic finals stream is matched in place in both modes.  Each
        # copied cell sits next to its original so that the pairwise
        # equality the checker builds stays linear in the decision order.
        dup = duplicate_outputs and spec.name != FINALVARS
        for cname in spec.cells:
            cells.append((cname, bits))
            if dup:
                cells.append((xi_name(cname), bits))
        cells.append((spec.index, index_width(spec.length)))
        if dup:
            cells.append((xi_name(spec.index), index_width(spec.length)))
    for i in range(declass_count):
        cells.append((d_name(i), bits))
    return GlobalsDecl(tuple(cells))


def _first_symbol(cmd: Command) -> str:
    while isinstance(cmd, Seq):
        cmd = cmd.first
    return site_symbol(cmd.site.id)


def _check_names(program: Program) -> None:
    for name in program.variables:
        if name == TMP or name.startswith("xi("):
            raise ValueError(f"variable name {name!r} is reserved by the model")
    for name in program.channels:
        if name == FINALVARS:
            raise ValueError(f"channel name {name!r} is reserved")


def build_model(
    program: Program,
    policy: Policy,
    level: str,
    bits: int = DEFAULT_BITS,
    capacity: int = DEFAULT_CAPACITY,
) -> ModelSkeleton:
    if not policy.declass_real and any(
        isinstance(c, DeclassAssign) for c in walk_commands(program.root)
    ):
        raise ValueError("policy has no downgrade marks; run gather_downgrades first")
    _check_names(program)

    observable_vars = tuple(
        name for name in program.variables if policy.observable(name, level)
    )
    declass_sites = tuple(
        sorted(site for site, real in policy.declass_real.items() if real)
    )
    rho = {site: i for i, site in enumerate(declass_sites)}
    declass_symbols = {s: (f"de{s}", f"dx{s}") for s in declass_sites}
    declass_targets: dict[int, str] = {}
    for cmd in walk_commands(program.root):
        if isinstance(cmd, DeclassAssign) and cmd.site.id in rho:
            declass_targets[cmd.site.id] = cmd.target

    low_in = sorted(
        name
        for name, direction in program.channels.items()
        if direction == "input" and policy.observable(name, level)
    )
    low_out = sorted(
        name
        for name, direction in program.channels.items()
        if direction == "output" and policy.observable(name, level)
    )
    inputs = tuple(
        ChannelSpec(
            name,
            tuple(cell_name(name, k) for k in range(_input_length(policy, name, capacity))),
            p_name(name),
            exh_name(name),
        )
        for name in low_in
    )
    outputs = tuple(
        ChannelSpec(name, tuple(cell_name(name, k) for k in range(capacity)), q_name(name))
        for name in low_out
    ) + (
        ChannelSpec(
            FINALVARS,
            tuple(cell_name(FINALVARS, k) for k in range(len(observable_vars))),
            q_name(FINALVARS),
        ),
    )
    output_symbols = {spec.name: (f"oe[{spec.name}]", f"ox[{spec.name}]") for spec in outputs}

    has_declass = bool(declass_sites)
    has_low_output_site = any(
        isinstance(c, Output) and policy.observable(c.channel, level)
        for c in walk_commands(program.root)
    )
    tmp_used = has_declass or has_low_output_site or bool(observable_vars)

    globals_decl = make_globals(
        tuple(program.variables), bits, tmp_used, inputs, outputs, len(declass_sites)
    )

    identity = {name: name for name in program.variables}
    input_by_name = {spec.name: spec for spec in inputs}
    rules: list[Rule] = []

    def emit(cmd: Command, next_sym: str) -> None:
        sym = site_symbol(cmd.site.id) if not isinstance(cmd, Seq) else None
        match cmd:
            case Seq(first, second):
                emit(first, _first_symbol(second))
                emit(second, next_sym)
            case Skip(_):
                rules.append(Rule(sym, (next_sym,), RuleSpec.make(), "skip"))
            case Assign(_, target, expr):
                spec = RuleSpec.make(updates={target: from_program_expr(expr, identity)})
                rules.append(Rule(sym, (next_sym,), spec, f"{target} := ..."))
            case DeclassAssign(site, target, expr):
                if site.id in rho:
                    entry, exit_ = declass_symbols[site.id]
                    push = RuleSpec.make(updates={TMP: from_program_expr(expr, identity)})
                    rules.append(Rule(sym, (entry, next_sym), push, "downgrade entry"))
                    rules.append(Rule(exit_, (), RuleSpec.make(), "downgrade exit"))
                else:
                    spec = RuleSpec.make(updates={target: from_program_expr(expr, identity)})
                    rules.append(Rule(sym, (next_sym,), spec, f"{target} := ... (no downgrade)"))
            case If(_, guard, then_branch, else_branch):
                g = from_program_expr(guard, identity)
                rules.append(
                    Rule(sym, (_first_symbol(then_branch),), RuleSpec.make(guard=g), "if taken")
                )
                zero = GOp("==", g, KConst(0))
                rules.append(
                    Rule(sym, (_first_symbol(else_branch),), RuleSpec.make(guard=zero), "if not taken")
                )
                emit(then_branch, next_sym)
                emit(else_branch, next_sym)
            case While(_, guard, body):
                g = from_program_expr(guard, identity)
                rules.append(
                    Rule(sym, (_first_symbol(body),), RuleSpec.make(guard=g), "loop entered")
                )
                zero = GOp("==", g, KConst(0))
                rules.append(Rule(sym, (next_sym,), RuleSpec.make(guard=zero), "loop exited"))
                emit(body, sym)
            case Input(_, target, channel):
                if channel in input_by_name:
                    spec = input_by_name[channel]
                    in_range = RuleSpec.make(
                        guard=GOp("<", GRef(spec.index), KConst(spec.length)),
                        updates={
                            target: _cell_read(spec),
                            spec.index: GOp("+", GRef(spec.index), KConst(1)),
                        },
                    )
                    rules.append(Rule(sym, (next_sym,), in_range, f"read {channel}"))
                    exhausted = RuleSpec.make(
                        guard=GOp("<=", KConst(spec.length), GRef(spec.index)),
                        updates={target: HAVOC, spec.exhausted: KConst(1)},
                    )
                    rules.append(Rule(sym, (next_sym,), exhausted, f"{channel} exhausted"))
                else:
                    spec = RuleSpec.make(updates={target: HAVOC})
                    rules.append(Rule(sym, (next_sym,), spec, f"unobservable read into {target}"))
            case Output(_, expr, channel):
                if channel in output_symbols and channel != FINALVARS:
                    entry, _ = output_symbols[channel]
                    push = RuleSpec.make(updates={TMP: from_program_expr(expr, identity)})
                    rules.append(Rule(sym, (entry, next_sym), push, f"write {channel}"))
                else:
                    rules.append(Rule(sym, (next_sym,), RuleSpec.make(), "unobservable write"))
            case _:
                raise TypeError(f"unknown command: {cmd!r}")

    fv_chain = [f"fv{k}" for k in range(len(observable_vars))] + [FINAL_SYMBOL]
    emit(program.root, fv_chain[0])
    fv_entry, _ = output_symbols[FINALVARS]
    for k, name in enumerate(observable_vars):
        push = RuleSpec.make(updates={TMP: GRef(name)})
        rules.append(Rule(fv_chain[k], (fv_entry, fv_chain[k + 1]), push, f"final value of {name}"))
    for spec in outputs:
        _, exit_ = output_symbols[spec.name]
        rules.append(Rule(exit_, (), RuleSpec.make(), f"{spec.name} write done"))
    rules.append(Rule(FINAL_SYMBOL, (), RuleSpec.make(), "termination"))

    alphabet: list[str] = []
    for rule in rules:
        for s in (rule.lhs, *rule.rhs):
            if s not in alphabet:
                alphabet.append(s)

    initial_fixed = tuple(
        [(spec.index, 0) for spec in inputs]
        + [(spec.exhausted, 0) for spec in inputs]
        + [(spec.index, 0) for spec in outputs]
    )
    start = _first_symbol(program.root)
    spds = SPDS(globals_decl, tuple(alphabet), tuple(rules), start, initial_fixed)
    return ModelSkeleton(
        spds=spds,
        level=level,
        bits=bits,
        capacity=capacity,
        program=program,
        policy=policy,
        observable_vars=observable_vars,
        declass_sites=declass_sites,
        rho=rho,
        declass_symbols=declass_symbols,
        declass_targets=declass_targets,
        inputs=inputs,
        outputs=outputs,
        output_symbols=output_symbols,
        final_symbol=FINAL_SYMBOL,
        start_symbol=start,
        tmp_used=tmp_used,
    )


def _input_length(policy: Policy, channel: str, capacity: int) -> int:
    declared = policy.channels[channel].length
    return declared if declared is not None else capacity


def _cell_read(spec: ChannelSpec) -> CellRef:
    return CellRef(spec.cells, spec.index, f"I({spec.name})")


def count_globals(skeleton: ModelSkeleton) -> dict[str, int]:
    """Bit budget of the skeleton's globals, grouped by purpose."""
    bits = skeleton.bits
    report: dict[str, int] = {}
    report["vars"] = len(skeleton.program.variables) * bits
    report[TMP] = bits if skeleton.tmp_used else 0
    for spec in skeleton.inputs:
        report[f"in {spec.name}"] = spec.length * bits + index_width(spec.length) + 1
    for spec in skeleton.outputs:
        report[f"out {spec.name}"] = spec.length * bits + index_width(spec.length)
    report["downgrades"] = len(skeleton.declass_sites) * bits
    report["total"] = sum(report.values())
    assert report["total"] == skeleton.spds.globals.total_bits
    return report


def _describe_site(cmd: Command) -> str:
    match cmd:
        case Skip(_):
            return "skip"
        case Assign(_, target, expr):
            return f"{target} := {format_expr(expr)}"
        case DeclassAssign(_, target, expr):
            return f"{target} := declass({format_expr(expr)})"
        case If(_, guard, _, _):
            return f"if {format_expr(guard)}"
        case While(_, guard, _):
            return f"while {format_expr(guard)}"
        case Input(_, target, channel):
            return f"input({target}, {channel})"
        case Output(_, expr, channel):
            return f"output({format_expr(expr)}, {channel})"
    return "?"


def dump_model(skeleton: ModelSkeleton) -> str:
    lines = [dump_spds(skeleton.spds)]
    lines.append(f"# level {skeleton.level}, bits {skeleton.bits}, capacity {skeleton.capacity}")
    for site in skeleton.program.sites:
        cmd = skeleton.program.site_command(site.id)
        lines.append(f"# site g{site.id}: {_describe_site(cmd)}")
    for site in skeleton.declass_sites:
        entry, exit_ = skeleton.declass_symbols[site]
        lines.append(f"# downgrade g{site}: {entry}/{exit_} -> {d_name(skeleton.rho[site])}")
    return "\n".join(lines)
