import io
from random import Random

import pytest

from entityforge.chain import Block
from entityforge.errors import DataError, ModeError
from entityforge.reuse import FIXED, ONLINE, ReuseIndex

from conftest import block, tx
from oracles import recount_usage


class TestRecord:
    def test_first_appearance_counts_once_per_script(self):
        idx = ReuseIndex()
        idx.record(tx([(0, 5)], [(1, 2), (2, 2)]))
        assert [idx.count(s) for s in (0, 1, 2)] == [1, 1, 1]

    def test_second_transaction_reaches_reuse_threshold(self):
        idx = ReuseIndex()
        idx.record(tx([(0, 5)], [(1, 2), (2, 2)]))
        idx.record(tx([(1, 2)], [(3, 1)]))
        assert idx.count(1) == 2
        assert idx.reused(1)

    def test_same_side_duplicate_counts_once(self):
        idx = ReuseIndex()
        idx.record(tx([(0, 5)], [(1, 2), (1, 2)]))
        assert idx.count(1) == 1

    def test_both_sides_count_twice(self):
        # input use and output use are separate observations
        idx = ReuseIndex()
        idx.record(tx([(0, 5)], [(0, 4)]))
        assert idx.count(0) == 2
        assert idx.reused(0)

    def test_unknown_script_counts_zero(self):
        assert ReuseIndex().count(99) == 0
        assert not ReuseIndex().reused(99)

    def test_record_on_fixed_index_rejected(self):
        idx = ReuseIndex().freeze()
        with pytest.raises(ModeError):
            idx.record(tx([(0, 1)], [(1, 1)]))

    def test_reused_thresholds(self):
        idx = ReuseIndex.from_counts({0: 0, 1: 1, 2: 2})
        assert not idx.reused(0)
        assert not idx.reused(1)
        assert idx.reused(2)


def _stream_with_script_in_blocks():
    # script 0 appears (as an input) in blocks 10 and 20
    return [
        block(10, tx([(0, 5)], [(1, 4)])),
        block(20, tx([(0, 3)], [(2, 2)])),
    ]


class TestFixedBuild:
    def test_horizon_cut_excludes_later_blocks(self):
        idx = ReuseIndex.build_fixed(_stream_with_script_in_blocks(), k=15)
        assert idx.count(0) == 1
        assert idx.mode == FIXED
        assert idx.horizon_block == 15

    def test_horizon_covers_both_blocks(self):
        idx = ReuseIndex.build_fixed(_stream_with_script_in_blocks(), k=25)
        assert idx.count(0) == 2

    def test_horizon_before_first_block(self):
        idx = ReuseIndex.build_fixed(_stream_with_script_in_blocks(), k=5)
        assert idx.count(0) == 0

    def test_full_horizon_records_last_block(self):
        idx = ReuseIndex.build_fixed(_stream_with_script_in_blocks())
        assert idx.horizon_block == 20

    def test_unsorted_stream_rejected(self):
        blocks = [block(20, tx([(0, 1)], [(1, 1)])), block(10, tx([(2, 1)], [(3, 1)]))]
        with pytest.raises(DataError):
            ReuseIndex.build_fixed(blocks)


def _random_blocks(rng, n_blocks=12, max_txs=4, n_scripts=30):
    blocks = []
    index = 0
    for _ in range(n_blocks):
        index += rng.randrange(1, 4)
        txs = []
        for _ in range(rng.randrange(1, max_txs)):
            ins = [(rng.randrange(n_scripts), rng.randrange(1, 50)) for _ in range(rng.randrange(1, 3))]
            v_in = sum(v for _, v in ins)
            outs = [(rng.randrange(n_scripts), v_in - rng.randrange(1, min(10, v_in) + 1))]
            txs.append(tx(ins, outs))
        blocks.append(Block(index, txs))
    return blocks


class TestEquivalence:
    def test_online_equals_fixed_at_every_horizon(self):
        rng = Random(3)
        for _ in range(10):
            blocks = _random_blocks(rng)
            horizons = [b.index for b in blocks]
            for k in horizons:
                online = ReuseIndex(ONLINE)
                for b in blocks:
                    if b.index > k:
                        break
                    for t in b.transactions:
                        online.record(t)
                fixed = ReuseIndex.build_fixed(blocks, k=k)
                scripts = set(recount_usage(blocks))
                assert all(online.count(s) == fixed.count(s) for s in scripts)

    def test_counts_match_naive_recount(self):
        rng = Random(4)
        blocks = _random_blocks(rng)
        idx = ReuseIndex.build_fixed(blocks)
        naive = recount_usage(blocks)
        for sid, n in naive.items():
            assert idx.count(sid) == n

    def test_monotone_in_horizon(self):
        rng = Random(5)
        blocks = _random_blocks(rng)
        ks = [b.index for b in blocks]
        for sid in range(30):
            prev = 0
            for k in ks:
                cur = ReuseIndex.build_fixed(blocks, k=k).count(sid)
                assert cur >= prev
                prev = cur


class TestPersistence:
    def test_csv_round_trip(self):
        idx = ReuseIndex.from_counts({0: 1, 3: 4})
        buf = io.StringIO()
        idx.write_csv(buf)
        back = ReuseIndex.read_csv(io.StringIO(buf.getvalue()))
        assert back.count(0) == 1
        assert back.count(3) == 4
        assert back.count(1) == 0

    def test_bad_header_rejected(self):
        with pytest.raises(DataError):
            ReuseIndex.read_csv(io.StringIO("a,b\n1,2\n"))
