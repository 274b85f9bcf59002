import gzip
import io
import json

import pytest

from entityforge.chain import (
    JsonlSource,
    MemorySource,
    ScriptTable,
    StreamStats,
    ThreadedSource,
    fee,
    iter_blocks,
    tx_shape,
    validate_transaction,
    write_jsonl,
)
from entityforge.errors import IngestError, ValidationError

from conftest import tx


class TestScriptTable:
    def test_first_allocation_is_zero(self):
        table = ScriptTable()
        assert table.intern("pA") == 0

    def test_ids_follow_observation_order(self):
        table = ScriptTable()
        assert table.intern("pB") == 0
        assert table.intern("pA") == 1

    def test_interning_is_idempotent(self):
        table = ScriptTable()
        assert table.intern("pA") == table.intern("pA") == 0
        assert len(table) == 1

    def test_ids_are_dense(self):
        table = ScriptTable()
        seen = [table.intern(f"s{i}") for i in "abcdefg"]
        assert seen == list(range(7))
        assert [table.text(i) for i in range(7)] == [f"s{i}" for i in "abcdefg"]

    def test_empty_text_rejected(self):
        with pytest.raises(IngestError):
            ScriptTable().intern("")


class TestValidate:
    def test_valid_payment_keeps_fee(self):
        t = tx([(0, 10)], [(1, 9)])
        assert validate_transaction(t) is t
        assert fee(t) == 1

    def test_value_inflation_rejected(self):
        with pytest.raises(ValidationError) as err:
            validate_transaction(tx([(0, 5)], [(1, 9)]))
        assert err.value.category == "value-inflation"

    def test_empty_inputs_is_coinbase_or_malformed(self):
        with pytest.raises(ValidationError) as err:
            validate_transaction(tx([], [(1, 9)]))
        assert err.value.category == "coinbase-or-malformed"

    def test_empty_outputs_rejected(self):
        with pytest.raises(ValidationError):
            validate_transaction(tx([(0, 5)], []))

    def test_negative_value_rejected(self):
        with pytest.raises(ValidationError) as err:
            validate_transaction(tx([(0, 5)], [(1, -1)]))
        assert err.value.category == "format"


class TestShape:
    def test_duplicate_input_script_counts_once(self):
        shape = tx_shape(tx([(0, 5), (0, 3)], [(1, 7)]))
        assert (shape.n_in, shape.in_multiplicity) == (1, 2)
        assert (shape.n_out, shape.v_in, shape.v_out) == (1, 8, 7)

    def test_distinct_scripts(self):
        shape = tx_shape(tx([(0, 5), (1, 3)], [(2, 4), (3, 3)]))
        assert (shape.n_in, shape.n_out) == (2, 2)

    def test_duplicate_output_script(self):
        shape = tx_shape(tx([(0, 5)], [(1, 2), (1, 2)]))
        assert (shape.n_out, shape.out_multiplicity) == (1, 2)


def _line(txid, block, inputs, outputs):
    return json.dumps(
        {
            "txid": txid,
            "block": block,
            "inputs": [{"script": s, "value": v} for s, v in inputs],
            "outputs": [{"script": s, "value": v} for s, v in outputs],
        }
    )


class TestIngestion:
    def test_blocks_grouped_and_in_order(self, small_stream_text):
        table = ScriptTable()
        blocks = list(iter_blocks(io.StringIO(small_stream_text), table))
        assert [b.index for b in blocks] == [1, 2, 4]
        assert [len(b.transactions) for b in blocks] == [1, 1, 1]
        assert len(table) == 7

    def test_unsorted_stream_rejected(self):
        text = "\n".join(
            [
                _line("t1", 5, [("a", 2)], [("b", 1)]),
                _line("t2", 3, [("c", 2)], [("d", 1)]),
            ]
        )
        with pytest.raises(IngestError) as err:
            list(iter_blocks(io.StringIO(text), ScriptTable()))
        assert "sorted" in str(err.value)

    def test_coinbase_dropped_without_interning(self):
        text = "\n".join(
            [
                json.dumps({"txid": "cb", "block": 1, "inputs": [], "outputs": [{"script": "miner", "value": 50}]}),
                _line("t1", 1, [("a", 2)], [("b", 1)]),
            ]
        )
        table = ScriptTable()
        stats = StreamStats()
        blocks = list(iter_blocks(io.StringIO(text), table, stats))
        assert stats.coinbase_dropped == 1
        assert stats.transactions == 1
        assert "miner" not in table
        assert len(blocks) == 1 and len(blocks[0].transactions) == 1

    def test_empty_script_error_names_transaction(self):
        text = _line("t9", 1, [("", 2)], [("b", 1)])
        with pytest.raises(IngestError) as err:
            list(iter_blocks(io.StringIO(text), ScriptTable()))
        assert "t9" in str(err.value)

    def test_non_integer_value_rejected(self):
        text = json.dumps(
            {"txid": "t1", "block": 1, "inputs": [{"script": "a", "value": 1.5}], "outputs": [{"script": "b", "value": 1}]}
        )
        with pytest.raises(IngestError):
            list(iter_blocks(io.StringIO(text), ScriptTable()))

    def test_inflation_rejected_at_ingest(self):
        text = _line("t1", 1, [("a", 2)], [("b", 5)])
        with pytest.raises(ValidationError):
            list(iter_blocks(io.StringIO(text), ScriptTable()))

    def test_bad_json_reports_line(self):
        with pytest.raises(IngestError) as err:
            list(iter_blocks(io.StringIO("{nope}\n"), ScriptTable()))
        assert "line 1" in str(err.value)

    def test_round_trip(self, small_stream_text):
        table = ScriptTable()
        blocks = list(iter_blocks(io.StringIO(small_stream_text), table))
        buf = io.StringIO()
        write_jsonl(blocks, table, buf)

        table2 = ScriptTable()
        blocks2 = list(iter_blocks(io.StringIO(buf.getvalue()), table2))
        assert blocks2 == blocks
        assert [table2.text(i) for i in range(len(table2))] == [
            table.text(i) for i in range(len(table))
        ]
        for b1, b2 in zip(blocks, blocks2):
            for t1, t2 in zip(b1.transactions, b2.transactions):
                assert tx_shape(t1) == tx_shape(t2)


class TestSources:
    def test_jsonl_source_two_passes_identical(self, small_stream_text, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text(small_stream_text)
        source = JsonlSource(str(path))
        first = list(source.blocks())
        second = list(source.blocks())
        assert first == second
        assert len(source.table) == 7

    def test_gzip_accepted(self, small_stream_text, tmp_path):
        path = tmp_path / "s.jsonl.gz"
        with gzip.open(path, "wt", encoding="utf-8") as fh:
            fh.write(small_stream_text)
        source = JsonlSource(str(path))
        assert [b.index for b in source.blocks()] == [1, 2, 4]

    def test_threaded_source_matches_inline(self, small_stream_text, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text(small_stream_text)
        inline = list(JsonlSource(str(path)).blocks())
        threaded = list(ThreadedSource(JsonlSource(str(path))).blocks())
        assert threaded == inline

    def test_threaded_source_propagates_errors(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(_line("t1", 1, [("a", 2)], [("b", 5)]) + "\n")
        with pytest.raises(ValidationError):
            list(ThreadedSource(JsonlSource(str(path))).blocks())

    def test_memory_source(self):
        from entityforge.chain import Block

        table = ScriptTable()
        a, b = table.intern("a"), table.intern("b")
        source = MemorySource([Block(1, [tx([(a, 2)], [(b, 1)])])], table)
        assert [blk.index for blk in source.blocks()] == [1]
