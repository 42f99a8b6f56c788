"""Brute-force ground truth for the two security properties.

Both checkers enumerate, per observer level, every pair of initial states
that agree on the observable part (stores equal on observable variables,
observable input channels with identical contents, unobservable inputs
independent), run both executions concretely, and compare observations.

Downgrade pairing is positional: the k-th downgrade step of one run is
paired with the k-th of the other.  Runs with unequal downgrade counts, or
with differing declassified values at some pair, fail the property's premise
and impose no constraint.  Runs that diverge or end in a channel diagnostic
never reach a final configuration and are likewise unconstrained; divergence
is decided exactly by repeated-state detection, so "inconclusive" only
arises from the enumeration budget.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .policy import Policy
from .semantics import (
    DECLASS,
    DEFAULT_BITS,
    DEFAULT_CAPACITY,
    DEFAULT_FUEL,
    OUTCOME_FUEL,
    OUTCOME_HALTED,
    Trace,
    low_equiv_channels,
    low_equiv_store,
    run_program,
)
from .syntax import Input, Program, Seq, walk_commands

SECURE = "secure"
INSECURE = "insecure"
INCONCLUSIVE = "inconclusive"

DEFAULT_PAIR_BUDGET = 1 << 21


@dataclass(frozen=True)
class InitialState:
    store: dict[str, int]
    inputs: dict[str, tuple[int, ...]]


@dataclass
class OracleWitness:
    level: str
    first: InitialState
    second: InitialState
    reason: str  # human-readable description of the differing observable
    declass_trace_1: list[tuple[int, int]] = field(default_factory=list)
    declass_trace_2: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class OracleVerdict:
    property_name: str  # "noninterference" | "where-security"
    status: str  # SECURE | INSECURE | INCONCLUSIVE
    witness: Optional[OracleWitness] = None
    pairs_checked: int = 0
    note: str = ""

    @property
    def secure(self) -> Optional[bool]:
        if self.status == INCONCLUSIVE:
            return None
        return self.status == SECURE


def static_input_counts(program: Program) -> dict[str, int]:
    """Input statements per channel, counting loop bodies once."""
    counts: dict[str, int] = {}
    for cmd in walk_commands(program.root):
        if isinstance(cmd, Input):
            counts[cmd.channel] = counts.get(cmd.channel, 0) + 1
    return counts


def default_input_lengths(program: Program, policy: Policy) -> dict[str, int]:
    counts = static_input_counts(program)
    lengths: dict[str, int] = {}
    for name, ch in policy.channels.items():
        if ch.direction != "input":
            continue
        if ch.length is not None:
            lengths[name] = ch.length
        else:
            lengths[name] = counts.get(name, 0)
    return lengths


def _pair_count(
    program: Program,
    policy: Policy,
    level: str,
    bits: int,
    input_lengths: dict[str, int],
) -> int:
    values = 1 << bits
    total = 1
    for name in program.variables:
        total *= values if policy.observable(name, level) else values * values
    for name, direction in program.channels.items():
        if direction != "input":
            continue
        length = input_lengths.get(name, 0)
        cells = values**length
        total *= cells if policy.observable(name, level) else cells * cells
    return total


def _enumerate_pairs(
    program: Program,
    policy: Policy,
    level: str,
    bits: int,
    input_lengths: dict[str, int],
) -> Iterator[tuple[InitialState, InitialState]]:
    """Observer-equivalent initial pairs, in lexicographic order."""
    values = range(1 << bits)
    names = list(program.variables)
    low_vars = [n for n in names if policy.observable(n, level)]
    high_vars = [n for n in names if not policy.observable(n, level)]
    in_channels = sorted(n for n, d in program.channels.items() if d == "input")
    low_ch = [n for n in in_channels if policy.observable(n, level)]
    high_ch = [n for n in in_channels if not policy.observable(n, level)]

    def channel_space(chans: list[str]) -> list[list[tuple[int, ...]]]:
        return [
            [tuple(c) for c in itertools.product(values, repeat=input_lengths.get(ch, 0))]
            for ch in chans
        ]

    low_ch_space = channel_space(low_ch)
    high_ch_space = channel_space(high_ch)

    for low_vals in itertools.product(values, repeat=len(low_vars)):
        for high1 in itertools.product(values, repeat=len(high_vars)):
            for high2 in itertools.product(values, repeat=len(high_vars)):
                for low_contents in itertools.product(*low_ch_space):
                    for hc1 in itertools.product(*high_ch_space):
                        for hc2 in itertools.product(*high_ch_space):
                            store1 = dict(zip(low_vars, low_vals)) | dict(
                                zip(high_vars, high1)
                            )
                            store2 = dict(zip(low_vars, low_vals)) | dict(
                                zip(high_vars, high2)
                            )
                            ins1 = dict(zip(low_ch, low_contents)) | dict(
                                zip(high_ch, hc1)
                            )
                            ins2 = dict(zip(low_ch, low_contents)) | dict(
                                zip(high_ch, hc2)
                            )
                            yield (
                                InitialState(store1, ins1),
                                InitialState(store2, ins2),
                            )


def _declass_records(trace: Trace) -> list[tuple[int, int, dict, dict]]:
    """(site, value, pre-store, post-store) per downgrade step."""
    records = []
    for idx, (config, label) in enumerate(trace.entries):
        if label.kind == DECLASS:
            pre = trace.entries[idx - 1][0].mu if idx > 0 else trace.initial.mu
            records.append((label.site.id, label.value, pre, config.mu))
    return records


@dataclass
class _RunPair:
    trace1: Trace
    trace2: Trace


def _check_pairs(
    program: Program,
    policy: Policy,
    property_name: str,
    bits: int,
    capacity: int,
    fuel: int,
    input_lengths: dict[str, int],
    budget: int,
) -> OracleVerdict:
    total = 0
    for level in sorted(policy.domains):
        total += _pair_count(program, policy, level, bits, input_lengths)
    if total > budget:
        return OracleVerdict(
            property_name,
            INCONCLUSIVE,
            note=f"budget-exceeded: {total} pairs > {budget}",
        )

    saw_fuel_limit = False
    pairs_checked = 0
    for level in sorted(policy.domains):
        for first, second in _enumerate_pairs(program, policy, level, bits, input_lengths):
            pairs_checked += 1
            trace1 = run_program(
                program, policy, first.store, first.inputs, bits, capacity, fuel
            )
            trace2 = run_program(
                program, policy, second.store, second.inputs, bits, capacity, fuel
            )
            if OUTCOME_FUEL in (trace1.outcome, trace2.outcome):
                saw_fuel_limit = True
                continue
            if trace1.outcome != OUTCOME_HALTED or trace2.outcome != OUTCOME_HALTED:
                continue  # no final configuration: premise unsatisfied
            reason = _violation(
                program, policy, level, property_name, trace1, trace2
            )
            if reason is not None:
                witness = OracleWitness(
                    level=level,
                    first=first,
                    second=second,
                    reason=reason,
                    declass_trace_1=trace1.declass_events(),
                    declass_trace_2=trace2.declass_events(),
                )
                return OracleVerdict(
                    property_name, INSECURE, witness, pairs_checked
                )
    if saw_fuel_limit:
        return OracleVerdict(
            property_name,
            INCONCLUSIVE,
            pairs_checked=pairs_checked,
            note="nonterminating-within-budget run encountered",
        )
    return OracleVerdict(property_name, SECURE, pairs_checked=pairs_checked)


def _final_observation_mismatch(
    policy: Policy, level: str, trace1: Trace, trace2: Trace
) -> Optional[str]:
    f1, f2 = trace1.final, trace2.final
    if not low_equiv_store(f1.mu, f2.mu, level, policy):
        diffs = [
            f"{n}: {f1.mu.get(n)} vs {f2.mu.get(n)}"
            for n in sorted(set(f1.mu) | set(f2.mu))
            if policy.observable(n, level) and f1.mu.get(n) != f2.mu.get(n)
        ]
        return "final store differs on " + ", ".join(diffs)
    if not low_equiv_channels(f1.outs, f1.q, f2.outs, f2.q, level, policy):
        diffs = []
        for name in sorted(set(f1.q) | set(f2.q)):
            if not policy.observable(name, level):
                continue
            if f1.q.get(name, 0) != f2.q.get(name, 0) or f1.outs.get(
                name, ()
            ) != f2.outs.get(name, ()):
                diffs.append(
                    f"{name}: {list(f1.outs.get(name, ()))} vs {list(f2.outs.get(name, ()))}"
                )
        return "final outputs differ on " + ", ".join(diffs)
    return None


def _violation(
    program: Program,
    policy: Policy,
    level: str,
    property_name: str,
    trace1: Trace,
    trace2: Trace,
) -> Optional[str]:
    if property_name == "noninterference":
        return _final_observation_mismatch(policy, level, trace1, trace2)

    rec1 = _declass_records(trace1)
    rec2 = _declass_records(trace2)
    for k, ((s1, v1, pre1, post1), (s2, v2, pre2, post2)) in enumerate(
        zip(rec1, rec2)
    ):
        if (
            low_equiv_store(pre1, pre2, level, policy)
            and v1 == v2
            and not low_equiv_store(post1, post2, level, policy)
        ):
            return (
                f"downgrade pair {k} (sites g{s1}/g{s2}, value {v1}) breaks "
                "observable equivalence of the post-states"
            )
    if len(rec1) != len(rec2):
        return None  # premise unsatisfied
    if any(v1 != v2 for (_, v1, _, _), (_, v2, _, _) in zip(rec1, rec2)):
        return None  # premise unsatisfied
    return _final_observation_mismatch(policy, level, trace1, trace2)


def check_noninterference(
    program: Program,
    policy: Policy,
    bits: int = DEFAULT_BITS,
    capacity: int = DEFAULT_CAPACITY,
    fuel: int = DEFAULT_FUEL,
    input_lengths: dict[str, int] | None = None,
    budget: int = DEFAULT_PAIR_BUDGET,
) -> OracleVerdict:
    """Exhaustively test observational equivalence of final states."""
    lengths = input_lengths or default_input_lengths(program, policy)
    return _check_pairs(
        program, policy, "noninterference", bits, capacity, fuel, lengths, budget
    )


def check_where_security(
    program: Program,
    policy: Policy,
    bits: int = DEFAULT_BITS,
    capacity: int = DEFAULT_CAPACITY,
    fuel: int = DEFAULT_FUEL,
    input_lengths: dict[str, int] | None = None,
    budget: int = DEFAULT_PAIR_BUDGET,
) -> OracleVerdict:
    """Exhaustively test that only declassified values are released.

    Violations: (a) a positionally paired downgrade with observably equal
    pre-states and equal declassified values whose post-states differ
    observably; (b) runs whose paired declassified values all agree (and
    counts match) but whose final stores or outputs differ observably.
    """
    lengths = input_lengths or default_input_lengths(program, policy)
    return _check_pairs(
        program, policy, "where-security", bits, capacity, fuel, lengths, budget
    )
