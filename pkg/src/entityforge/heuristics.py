"""Merge heuristics: pure functions from a transaction to a merge proposal.

Each heuristic inspects one transaction (plus explicit context such as a
reuse index or the block's rounding exponent) and proposes zero or more
script groups to consolidate. Nothing here mutates state; the engine applies
proposals to the cluster store in stream order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Callable, NamedTuple

from .chain import Transaction
from .errors import ConfigError, ModeError
from .reuse import FIXED, ReuseIndex


class MergeProposal(NamedTuple):
    groups: tuple[frozenset[int], ...]
    heuristic: str
    txid: str

    @property
    def empty(self) -> bool:
        return not self.groups


def _proposal(name: str, tx: Transaction, *groups) -> MergeProposal:
    kept = tuple(frozenset(g) for g in groups if g)
    return MergeProposal(kept, name, tx.txid)


def _input_scripts(tx: Transaction) -> set[int]:
    return {t.script for t in tx.inputs}


def _output_scripts(tx: Transaction) -> set[int]:
    return {t.script for t in tx.outputs}


class EqualOutputCoinJoinDetector:
    """Default stand-in CoinJoin filter, swappable behind the same interface.

    Flags a transaction when it has at least two distinct input scripts, at
    least two distinct output scripts, and at least two distinct output
    scripts carrying exactly equal values (the mixed denominations).
    """

    description = (
        "equal-output detector: n_in >= 2, n_out >= 2, and >= 2 distinct "
        "output scripts carry exactly equal values"
    )

    def __call__(self, tx: Transaction) -> bool:
        if len(_input_scripts(tx)) < 2:
            return False
        if len(_output_scripts(tx)) < 2:
            return False
        by_value: dict[int, set[int]] = {}
        for txo in tx.outputs:
            scripts = by_value.setdefault(txo.value, set())
            scripts.add(txo.script)
            if len(scripts) >= 2:
                return True
        return False


CoinJoinPredicate = Callable[[Transaction], bool]

DEFAULT_COINJOIN = EqualOutputCoinJoinDetector()


@dataclass(frozen=True)
class HeuristicConfig:
    """Tunable parameters; defaults follow the reference experiment setup."""

    min_deposit_inputs: int = 25  # a: input-script threshold for deposit sweeps
    small_amount: Decimal = Decimal(1)  # x: "small" dollar amount
    round_offset: int = 1  # j: sub-precision offset for the change output

    def __post_init__(self):
        if self.min_deposit_inputs < 2:
            raise ConfigError("min_deposit_inputs must be >= 2")
        if self.small_amount <= 0:
            raise ConfigError("small_amount must be positive")
        if self.round_offset < 0:
            raise ConfigError("round_offset must be >= 0")


def common_input(tx: Transaction) -> MergeProposal:
    """Merge all input scripts of any transaction with >= 2 of them."""
    scripts = _input_scripts(tx)
    if len(scripts) >= 2:
        return _proposal("cio", tx, scripts)
    return _proposal("cio", tx)


def coinjoin_resistant_common_input(
    tx: Transaction, coinjoin: CoinJoinPredicate = DEFAULT_COINJOIN
) -> MergeProposal:
    """Common-input merge, skipped when the CoinJoin filter flags the tx."""
    scripts = _input_scripts(tx)
    if len(scripts) >= 2 and not coinjoin(tx):
        return _proposal("cio-cj", tx, scripts)
    return _proposal("cio-cj", tx)


def _two_distinct_outputs(tx: Transaction) -> tuple[int, int] | None:
    """Output scripts when the tx has exactly two TXOs with distinct scripts."""
    if len(tx.outputs) != 2:
        return None
    a, b = tx.outputs[0].script, tx.outputs[1].script
    if a == b:
        return None
    return a, b


def change_address(tx: Transaction, idx: ReuseIndex) -> MergeProposal:
    """Single-input, two-output payments where exactly one output is fresh.

    Fires when the input script is unreused, exactly one output script is
    unreused (the change), and the other output script is reused (the
    payment); merges the input script with the change script.
    """
    name = "change"
    if len(tx.inputs) != 1:
        return _proposal(name, tx)
    p_in = tx.inputs[0].script
    outs = _two_distinct_outputs(tx)
    if outs is None:
        return _proposal(name, tx)
    if idx.reused(p_in):
        return _proposal(name, tx)
    fresh = [s for s in outs if not idx.reused(s)]
    if len(fresh) != 1:
        return _proposal(name, tx)
    p_change = fresh[0]
    p_pay = outs[0] if outs[1] == p_change else outs[1]
    if not idx.reused(p_pay):
        return _proposal(name, tx)
    return _proposal(name, tx, {p_in, p_change})


def round_output_value(
    tx: Transaction, idx: ReuseIndex, exponent: int, offset: int
) -> MergeProposal:
    """Single-input, two-output payments with one round-valued fresh output.

    The payment output is the unreused one whose value is a multiple of
    10^exponent; the change is the other output, whose value must not be a
    multiple of 10^(exponent - offset) (fees make change non-round). Merges
    the input script with the change script.
    """
    name = "round"
    if offset >= exponent:
        raise ConfigError(
            f"round offset {offset} must be smaller than exponent {exponent}"
        )
    if len(tx.inputs) != 1:
        return _proposal(name, tx)
    p_in = tx.inputs[0].script
    if _two_distinct_outputs(tx) is None:
        return _proposal(name, tx)
    if idx.reused(p_in):
        return _proposal(name, tx)
    pay_modulus = 10**exponent
    candidates = [
        txo for txo in tx.outputs
        if not idx.reused(txo.script) and txo.value % pay_modulus == 0
    ]
    if len(candidates) != 1:
        return _proposal(name, tx)
    other = tx.outputs[0] if tx.outputs[1] is candidates[0] else tx.outputs[1]
    if other.value % 10 ** (exponent - offset) == 0:
        return _proposal(name, tx)
    return _proposal(name, tx, {p_in, other.script})


def force_merge_of_inputs(tx: Transaction, idx: ReuseIndex) -> MergeProposal:
    """Multi-input payments whose input set is minimal for the payment.

    All input scripts must be distinct and unreused, the two outputs must
    have distinct values (higher = payment, lower = change), the change
    script must be unreused, and dropping the smallest input must not cover
    the payment: v_in - min_input < v_max. Merges all input scripts with the
    change script.
    """
    name = "force-merge"
    in_scripts = _input_scripts(tx)
    if len(tx.inputs) < 2 or len(in_scripts) != len(tx.inputs):
        return _proposal(name, tx)
    if _two_distinct_outputs(tx) is None:
        return _proposal(name, tx)
    out_a, out_b = tx.outputs
    if out_a.value == out_b.value:
        return _proposal(name, tx)  # no strict higher-value payment output
    pay, change = (out_a, out_b) if out_a.value > out_b.value else (out_b, out_a)
    if any(idx.reused(s) for s in in_scripts):
        return _proposal(name, tx)
    if idx.reused(change.script):
        return _proposal(name, tx)
    v_in = sum(t.value for t in tx.inputs)
    if v_in - min(t.value for t in tx.inputs) >= pay.value:
        return _proposal(name, tx)  # some input was unnecessary
    return _proposal(name, tx, in_scripts | {change.script})


def service_deposit(tx: Transaction, min_inputs: int) -> MergeProposal:
    """Consolidation sweeps: many distinct input scripts, one output script."""
    if min_inputs < 2:
        raise ConfigError("deposit sweep threshold must be >= 2")
    scripts = _input_scripts(tx)
    if len(scripts) >= min_inputs and len(_output_scripts(tx)) == 1:
        return _proposal("deposit", tx, scripts)
    return _proposal("deposit", tx)


def shadow_address(tx: Transaction, idx: ReuseIndex) -> MergeProposal:
    """Two-output txs where exactly one output script is brand new.

    "Used before" means an occurrence count of at least two: the script's
    appearance in this very transaction plus any other. Merges all input
    scripts with the fresh output script.
    """
    name = "shadow"
    outs = _two_distinct_outputs(tx)
    if outs is None:
        return _proposal(name, tx)
    fresh = [s for s in outs if idx.count(s) < 2]
    if len(fresh) != 1:
        return _proposal(name, tx)
    p_pay = outs[0] if outs[1] == fresh[0] else outs[1]
    if idx.count(p_pay) < 2:
        return _proposal(name, tx)
    return _proposal(name, tx, _input_scripts(tx) | {fresh[0]})


def one_time_change(tx: Transaction, idx: ReuseIndex) -> MergeProposal:
    """No-self-change txs with exactly one never-seen output script.

    Output count is unconstrained. Merges all input scripts with the single
    fresh output script.
    """
    name = "one-time-change"
    in_scripts = _input_scripts(tx)
    out_scripts = _output_scripts(tx)
    if in_scripts & out_scripts:
        return _proposal(name, tx)
    fresh = [s for s in out_scripts if idx.count(s) < 2]
    if len(fresh) != 1:
        return _proposal(name, tx)
    return _proposal(name, tx, in_scripts | {fresh[0]})


def reuse_based_change(tx: Transaction, full_idx: ReuseIndex) -> MergeProposal:
    """Like one_time_change, but the candidate must stay single-use forever.

    Requires a fixed-horizon index over the whole dataset: the candidate
    output script's total occurrence count must be exactly one (never used
    before this transaction, never used after).
    """
    name = "reuse-change"
    if full_idx.mode != FIXED:
        raise ModeError("reuse_based_change requires a fixed full-dataset index")
    in_scripts = _input_scripts(tx)
    out_scripts = _output_scripts(tx)
    if in_scripts & out_scripts:
        return _proposal(name, tx)
    single_use = [s for s in out_scripts if full_idx.count(s) == 1]
    if len(single_use) != 1:
        return _proposal(name, tx)
    return _proposal(name, tx, in_scripts | {single_use[0]})


@dataclass
class EvalContext:
    """Everything a heuristic may consult besides the transaction itself."""

    config: HeuristicConfig = field(default_factory=HeuristicConfig)
    reuse: ReuseIndex | None = None
    full_reuse: ReuseIndex | None = None
    exponent: int | None = None  # rounding exponent for the tx's block
    coinjoin: CoinJoinPredicate = DEFAULT_COINJOIN


def _round_guarded(tx: Transaction, ctx: EvalContext) -> MergeProposal:
    # No price data, or an exponent too small for the configured offset,
    # makes the round check meaningless for this block: skip.
    if ctx.exponent is None or ctx.exponent <= ctx.config.round_offset:
        return _proposal("round", tx)
    return round_output_value(tx, ctx.reuse, ctx.exponent, ctx.config.round_offset)


def combined(tx: Transaction, ctx: EvalContext) -> MergeProposal:
    """Concatenated proposals of cio-cj, change, round, and force-merge.

    Groups stay separate; overlapping groups unify through the cluster
    store's transitive closure.
    """
    groups = []
    for part in (
        coinjoin_resistant_common_input(tx, ctx.coinjoin),
        change_address(tx, ctx.reuse),
        _round_guarded(tx, ctx),
        force_merge_of_inputs(tx, ctx.reuse),
    ):
        groups.extend(part.groups)
    return MergeProposal(tuple(groups), "combined", tx.txid)


@dataclass(frozen=True)
class HeuristicSpec:
    """Registry entry: how the engine wires context for one heuristic."""

    name: str
    evaluate: Callable[[Transaction, EvalContext], MergeProposal]
    reuse: str = "none"  # none | horizon | full
    needs_prices: bool = False
    default_horizon: str | None = None  # for reuse == "horizon"


HEURISTICS: dict[str, HeuristicSpec] = {
    spec.name: spec
    for spec in (
        HeuristicSpec("cio", lambda tx, ctx: common_input(tx)),
        HeuristicSpec(
            "cio-cj", lambda tx, ctx: coinjoin_resistant_common_input(tx, ctx.coinjoin)
        ),
        HeuristicSpec(
            "change",
            lambda tx, ctx: change_address(tx, ctx.reuse),
            reuse="horizon",
            default_horizon="fixed",
        ),
        HeuristicSpec(
            "round",
            _round_guarded,
            reuse="horizon",
            needs_prices=True,
            default_horizon="fixed",
        ),
        HeuristicSpec(
            "force-merge",
            lambda tx, ctx: force_merge_of_inputs(tx, ctx.reuse),
            reuse="horizon",
            default_horizon="fixed",
        ),
        HeuristicSpec(
            "deposit", lambda tx, ctx: service_deposit(tx, ctx.config.min_deposit_inputs)
        ),
        HeuristicSpec(
            "shadow",
            lambda tx, ctx: shadow_address(tx, ctx.reuse),
            reuse="horizon",
            default_horizon="online",
        ),
        HeuristicSpec(
            "one-time-change",
            lambda tx, ctx: one_time_change(tx, ctx.reuse),
            reuse="horizon",
            default_horizon="online",
        ),
        HeuristicSpec(
            "reuse-change",
            lambda tx, ctx: reuse_based_change(tx, ctx.full_reuse),
            reuse="full",
        ),
        HeuristicSpec(
            "combined",
            combined,
            reuse="horizon",
            needs_prices=True,
            default_horizon="fixed",
        ),
    )
}
