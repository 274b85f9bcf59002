"""Shared builders for compact transaction construction in tests."""

from __future__ import annotations

import pytest

from entityforge.chain import Block, Transaction, Txo
from entityforge.reuse import ReuseIndex

_TX_COUNTER = [0]


def tx(inputs, outputs, txid=None):
    """Build a Transaction from (script_id, value) pair lists."""
    if txid is None:
        _TX_COUNTER[0] += 1
        txid = f"tx{_TX_COUNTER[0]}"
    return Transaction(
        txid,
        tuple(Txo(s, v) for s, v in inputs),
        tuple(Txo(s, v) for s, v in outputs),
    )


def counts(mapping):
    """Fixed-mode reuse index with explicit per-script counts."""
    return ReuseIndex.from_counts(mapping)


def block(index, *txs):
    return Block(index, list(txs))


@pytest.fixture
def small_stream_text():
    """Three-block JSONL stream exercising merges and reuse."""
    lines = [
        '{"txid":"t1","block":1,"inputs":[{"script":"pA","value":10},{"script":"pB","value":5}],"outputs":[{"script":"pC","value":14}]}',
        '{"txid":"t2","block":2,"inputs":[{"script":"pC","value":14}],"outputs":[{"script":"pD","value":7},{"script":"pC","value":6}]}',
        '{"txid":"t3","block":4,"inputs":[{"script":"pE","value":9}],"outputs":[{"script":"pF","value":4},{"script":"pG","value":4}]}',
    ]
    return "\n".join(lines) + "\n"
