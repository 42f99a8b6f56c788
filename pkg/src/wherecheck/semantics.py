"""Concrete small-step semantics over fixed-width unsigned values.

Values are unsigned integers reduced modulo 2**bits (bits defaults to 3);
zero is false, anything else true.  Input channels are finite lists consumed
by a read index p; output channels are append-only lists guarded by a
capacity bound, tracked by a write index q.  Reading past an input or
writing past the capacity ends the run with a terminal diagnostic label
rather than an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .policy import Policy
from .syntax import (
    Assign,
    BinOp,
    Command,
    DeclassAssign,
    Expr,
    If,
    Input,
    Num,
    Output,
    Program,
    Seq,
    SiteLabel,
    Skip,
    Var,
    While,
    format_command,
)

DEFAULT_BITS = 3
DEFAULT_CAPACITY = 8
DEFAULT_FUEL = 10_000

# Step labels.
PLAIN = "plain"
DECLASS = "declass"
HALTED = "halted"
INPUT_EXHAUSTED = "input-exhausted"
CAPACITY_EXCEEDED = "capacity-exceeded"

# Run outcomes.
OUTCOME_HALTED = HALTED
OUTCOME_INPUT_EXHAUSTED = INPUT_EXHAUSTED
OUTCOME_CAPACITY_EXCEEDED = CAPACITY_EXCEEDED
OUTCOME_DIVERGES = "diverges"
OUTCOME_FUEL = "nonterminating-within-budget"


def eval_expr(e: Expr, store: dict[str, int], bits: int) -> int:
    """Evaluate an expression; arithmetic wraps modulo 2**bits."""
    mask = (1 << bits) - 1
    match e:
        case Num(value):
            return value & mask
        case Var(name):
            return store[name]
        case BinOp(op, left, right):
            a = eval_expr(left, store, bits)
            b = eval_expr(right, store, bits)
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
    raise TypeError(f"not an expression: {e!r}")


@dataclass(frozen=True)
class StepLabel:
    kind: str  # PLAIN | DECLASS | HALTED | INPUT_EXHAUSTED | CAPACITY_EXCEEDED
    site: Optional[SiteLabel] = None
    value: Optional[int] = None  # declassified expression value for DECLASS

    def __str__(self) -> str:
        if self.kind == DECLASS:
            return f"declass(g{self.site.id}, {self.value})"
        return self.kind


@dataclass(frozen=True)
class Configuration:
    """Machine state: store, channels with their indices, remaining command.

    ins maps each input channel to its full (immutable) contents; p is the
    per-channel read index.  outs holds values written so far; q mirrors the
    written count.  cmd is the remaining command; a lone Skip means done.
    """

    mu: dict[str, int]
    ins: dict[str, tuple[int, ...]]
    outs: dict[str, tuple[int, ...]]
    p: dict[str, int]
    q: dict[str, int]
    cmd: Command

    def terminated(self) -> bool:
        return isinstance(self.cmd, Skip)

    def freeze(self) -> tuple:
        """Hashable snapshot for cycle detection."""
        return (
            tuple(sorted(self.mu.items())),
            tuple(sorted(self.p.items())),
            tuple(sorted((k, v) for k, v in self.outs.items())),
            id_free_command_key(self.cmd),
        )


def id_free_command_key(cmd: Command):
    """Structural key of the remaining command.

    The node type matters: a reduced Skip reuses the site id of the command
    it replaced, so the id alone would conflate pre- and post-states of
    assignments that happen to leave the store unchanged.
    """
    match cmd:
        case Seq(first, second):
            return ("seq", id_free_command_key(first), id_free_command_key(second))
        case _:
            return (type(cmd).__name__, cmd.site.id)


def initial_configuration(
    program: Program,
    store: dict[str, int] | None = None,
    inputs: dict[str, Iterable[int]] | None = None,
) -> Configuration:
    mu = {name: 0 for name in program.variables}
    if store:
        mu.update(store)
    ins: dict[str, tuple[int, ...]] = {}
    outs: dict[str, tuple[int, ...]] = {}
    p: dict[str, int] = {}
    q: dict[str, int] = {}
    for name, direction in sorted(program.channels.items()):
        if direction == "input":
            ins[name] = tuple(inputs.get(name, ())) if inputs else ()
            p[name] = 0
        else:
            outs[name] = ()
            q[name] = 0
    return Configuration(mu=mu, ins=ins, outs=outs, p=p, q=q, cmd=program.root)


@dataclass
class _StepResult:
    config: Configuration
    label: StepLabel
    rule: str
    changed: str


def _is_real_declass(cmd: DeclassAssign, policy: Policy) -> bool:
    try:
        return policy.declass_real[cmd.site.id]
    except KeyError:
        raise ValueError(
            "declass site not classified; run gather_downgrades first"
        ) from None


def step(
    config: Configuration,
    policy: Policy,
    bits: int = DEFAULT_BITS,
    capacity: int = DEFAULT_CAPACITY,
) -> _StepResult:
    """Apply the unique applicable rule; terminal configs yield HALTED."""
    if config.terminated():
        return _StepResult(config, StepLabel(HALTED), "halt", "")
    return _step_command(config, config.cmd, policy, bits, capacity)


def _step_command(
    config: Configuration,
    cmd: Command,
    policy: Policy,
    bits: int,
    capacity: int,
) -> _StepResult:
    match cmd:
        case Seq(first, second):
            if isinstance(first, Skip):
                new = replace(config, cmd=second)
                return _StepResult(new, StepLabel(PLAIN, first.site), "seq-skip", "")
            inner = _step_command(config, first, policy, bits, capacity)
            if inner.label.kind in (INPUT_EXHAUSTED, CAPACITY_EXCEEDED):
                return inner
            new = replace(inner.config, cmd=Seq(inner.config.cmd, second))
            return _StepResult(new, inner.label, inner.rule, inner.changed)
        case Skip(site):
            # Unreachable from step(); kept for completeness.
            return _StepResult(config, StepLabel(PLAIN, site), "skip", "")
        case Assign(site, target, expr):
            value = eval_expr(expr, config.mu, bits)
            mu = dict(config.mu)
            mu[target] = value
            new = replace(config, mu=mu, cmd=Skip(site))
            return _StepResult(new, StepLabel(PLAIN, site), "assign", f"{target}={value}")
        case DeclassAssign(site, target, expr):
            value = eval_expr(expr, config.mu, bits)
            mu = dict(config.mu)
            mu[target] = value
            new = replace(config, mu=mu, cmd=Skip(site))
            if _is_real_declass(cmd, policy):
                label = StepLabel(DECLASS, site, value)
                return _StepResult(new, label, "declass", f"{target}={value}")
            return _StepResult(new, StepLabel(PLAIN, site), "declass-ordinary", f"{target}={value}")
        case If(site, guard, then_branch, else_branch):
            taken = eval_expr(guard, config.mu, bits) != 0
            branch = then_branch if taken else else_branch
            new = replace(config, cmd=branch)
            rule = "if-true" if taken else "if-false"
            return _StepResult(new, StepLabel(PLAIN, site), rule, "")
        case While(site, guard, body):
            if eval_expr(guard, config.mu, bits) != 0:
                new = replace(config, cmd=Seq(body, cmd))
                return _StepResult(new, StepLabel(PLAIN, site), "while-true", "")
            new = replace(config, cmd=Skip(site))
            return _StepResult(new, StepLabel(PLAIN, site), "while-false", "")
        case Input(site, target, channel):
            idx = config.p[channel]
            contents = config.ins[channel]
            if idx >= len(contents):
                return _StepResult(config, StepLabel(INPUT_EXHAUSTED, site), "input", "")
            value = contents[idx] & ((1 << bits) - 1)
            mu = dict(config.mu)
            mu[target] = value
            p = dict(config.p)
            p[channel] = idx + 1
            new = replace(config, mu=mu, p=p, cmd=Skip(site))
            changed = f"{target}={value} p[{channel}]={idx + 1}"
            return _StepResult(new, StepLabel(PLAIN, site), "input", changed)
        case Output(site, expr, channel):
            idx = config.q[channel]
            if idx >= capacity:
                return _StepResult(config, StepLabel(CAPACITY_EXCEEDED, site), "output", "")
            value = eval_expr(expr, config.mu, bits)
            outs = dict(config.outs)
            outs[channel] = outs[channel] + (value,)
            q = dict(config.q)
            q[channel] = idx + 1
            new = replace(config, outs=outs, q=q, cmd=Skip(site))
            changed = f"{channel}[{idx}]={value} q[{channel}]={idx + 1}"
            return _StepResult(new, StepLabel(PLAIN, site), "output", changed)
    raise TypeError(f"not a command: {cmd!r}")


@dataclass
class Trace:
    """Result of run(): per-step entries plus the overall outcome."""

    entries: list[tuple[Configuration, StepLabel]]
    outcome: str
    lines: list[str] = field(default_factory=list)
    initial: Optional[Configuration] = None

    @property
    def final(self) -> Configuration:
        return self.entries[-1][0] if self.entries else self.initial

    def declass_events(self) -> list[tuple[int, int]]:
        """(site id, declassified value) for each downgrade step, in order."""
        return [
            (label.site.id, label.value)
            for _, label in self.entries
            if label.kind == DECLASS
        ]


def _head_site(cmd: Command) -> str:
    match cmd:
        case Seq(first, _):
            return _head_site(first)
        case _:
            return f"g{cmd.site.id}"


def run(
    config: Configuration,
    policy: Policy,
    bits: int = DEFAULT_BITS,
    capacity: int = DEFAULT_CAPACITY,
    fuel: int = DEFAULT_FUEL,
    detect_cycles: bool = True,
) -> Trace:
    """Run to termination, a diagnostic, a repeated state, or fuel exhaustion.

    The machine is deterministic over a finite state space, so a repeated
    configuration proves divergence exactly; fuel is the fallback bound.
    """
    entries: list[tuple[Configuration, StepLabel]] = []
    lines: list[str] = []
    seen: set[tuple] = set()
    current = config
    for _ in range(fuel):
        if current.terminated():
            entries.append((current, StepLabel(HALTED)))
            lines.append(f"{_head_site(current.cmd)} | halt | halted |")
            return Trace(entries, OUTCOME_HALTED, lines, initial=config)
        if detect_cycles:
            key = current.freeze()
            if key in seen:
                return Trace(entries, OUTCOME_DIVERGES, lines, initial=config)
            seen.add(key)
        site = _head_site(current.cmd)
        result = step(current, policy, bits, capacity)
        entries.append((result.config, result.label))
        lines.append(f"{site} | {result.rule} | {result.label} | {result.changed}")
        if result.label.kind in (INPUT_EXHAUSTED, CAPACITY_EXCEEDED):
            return Trace(entries, result.label.kind, lines, initial=config)
        current = result.config
    return Trace(entries, OUTCOME_FUEL, lines, initial=config)


def run_program(
    program: Program,
    policy: Policy,
    store: dict[str, int] | None = None,
    inputs: dict[str, Iterable[int]] | None = None,
    bits: int = DEFAULT_BITS,
    capacity: int = DEFAULT_CAPACITY,
    fuel: int = DEFAULT_FUEL,
) -> Trace:
    config = initial_configuration(program, store, inputs)
    return run(config, policy, bits, capacity, fuel)


# ---------------------------------------------------------------------------
# Observational equivalence at a level


def low_equiv_store(
    mu1: dict[str, int], mu2: dict[str, int], level: str, policy: Policy
) -> bool:
    """Stores agree on every variable whose level flows to the observer."""
    for name in set(mu1) | set(mu2):
        if name in policy.sigma and policy.observable(name, level):
            if mu1.get(name) != mu2.get(name):
                return False
    return True


def low_equiv_channels(
    contents1: dict[str, tuple[int, ...]],
    index1: dict[str, int],
    contents2: dict[str, tuple[int, ...]],
    index2: dict[str, int],
    level: str,
    policy: Policy,
) -> bool:
    """Channel states agree at the observer level.

    Observable channels need equal indices and an equal consumed/produced
    prefix; channels above the observer are vacuously equivalent.
    """
    for name in set(index1) | set(index2):
        if not policy.observable(name, level):
            continue
        i1, i2 = index1.get(name, 0), index2.get(name, 0)
        if i1 != i2:
            return False
        if contents1.get(name, ())[:i1] != contents2.get(name, ())[:i2]:
            return False
    return True


def format_trace(trace: Trace) -> str:
    return "\n".join(trace.lines + [f"outcome: {trace.outcome}"])


def describe_config(config: Configuration) -> str:
    mu = " ".join(f"{k}={v}" for k, v in sorted(config.mu.items()))
    return f"store[{mu}] cmd[{format_command(config.cmd)}]"
