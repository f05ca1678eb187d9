"""Block assembly: boundaries, breaks, padding, positive/negative pairing."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptweight.chunking import (
    ChunkedPrompt,
    chunked_to_json,
    group_tokens_and_weights,
    pair_with_negative,
)
from promptweight.tokenizer import TokenizedPrompt, Vocabulary

CAPACITY = 75  # context_length 77 minus the two markers

# property tests need a vocab that outlives hypothesis' per-example fixture
# reset; chunking never mutates it
TINY = Vocabulary(
    token_to_id={"<|startoftext|>": 0, "<|endoftext|>": 1},
    merge_ranks={},
    bos_id=0,
    eos_id=1,
)


def stream(n, breaks=(), weight=1.0):
    return TokenizedPrompt(
        ids=list(range(100, 100 + n)),
        weights=[weight] * n,
        breaks=list(breaks),
        provenance=list(range(n)),
    )


def content(block):
    return block.ids[1 : 1 + block.content_length]


class TestBlockBoundaries:
    @pytest.mark.parametrize(
        "n,expected_blocks",
        [(0, 1), (1, 1), (74, 1), (75, 1), (76, 2), (150, 2), (151, 3)],
    )
    def test_block_count(self, tiny_vocab, n, expected_blocks):
        chunked = group_tokens_and_weights(stream(n), pad_last_block=True, vocab=tiny_vocab)
        assert len(chunked.blocks) == expected_blocks

    def test_exact_capacity_single_full_block(self, tiny_vocab):
        chunked = group_tokens_and_weights(stream(75), pad_last_block=False, vocab=tiny_vocab)
        [block] = chunked.blocks
        assert len(block.ids) == 77
        assert block.content_length == 75

    def test_one_over_capacity_leaves_remainder(self, tiny_vocab):
        chunked = group_tokens_and_weights(stream(76), pad_last_block=False, vocab=tiny_vocab)
        assert [b.content_length for b in chunked.blocks] == [75, 1]
        assert len(chunked.blocks[1].ids) == 3  # bos + token + eos

    def test_markers_wrap_every_block(self, tiny_vocab):
        chunked = group_tokens_and_weights(stream(151), pad_last_block=True, vocab=tiny_vocab)
        for block in chunked.blocks:
            assert block.ids[0] == tiny_vocab.bos_id
            assert block.ids[-1] == tiny_vocab.eos_id
            assert block.weights[0] == 1.0 and block.weights[-1] == 1.0
            assert len(block.ids) == len(block.weights)

    def test_padded_blocks_full_width(self, tiny_vocab):
        chunked = group_tokens_and_weights(stream(80), pad_last_block=True, vocab=tiny_vocab)
        assert chunked.padded
        for block in chunked.blocks:
            assert len(block.ids) == 77

    def test_unpadded_remainder_short(self, tiny_vocab):
        chunked = group_tokens_and_weights(stream(80), pad_last_block=False, vocab=tiny_vocab)
        assert not chunked.padded
        assert len(chunked.blocks[0].ids) == 77
        assert len(chunked.blocks[1].ids) == 5 + 2

    def test_padding_uses_end_marker_at_weight_one(self, tiny_vocab):
        chunked = group_tokens_and_weights(stream(3, weight=1.5), pad_last_block=True, vocab=tiny_vocab)
        [block] = chunked.blocks
        pad = block.ids[1 + block.content_length :]
        assert set(pad) == {tiny_vocab.eos_id}
        assert set(block.weights[1 + block.content_length :]) == {1.0}
        assert block.weights[1:4] == [1.5, 1.5, 1.5]

    def test_empty_stream_degenerate_block(self, tiny_vocab):
        chunked = group_tokens_and_weights(stream(0), pad_last_block=False, vocab=tiny_vocab)
        [block] = chunked.blocks
        assert block.ids == [tiny_vocab.bos_id, tiny_vocab.eos_id]
        assert block.content_length == 0

    def test_empty_stream_padded(self, tiny_vocab):
        chunked = group_tokens_and_weights(stream(0), pad_last_block=True, vocab=tiny_vocab)
        [block] = chunked.blocks
        assert len(block.ids) == 77
        assert block.ids.count(tiny_vocab.eos_id) == 76

    def test_length_mismatch_rejected(self, tiny_vocab):
        bad = TokenizedPrompt(ids=[1, 2], weights=[1.0])
        with pytest.raises(ValueError, match="equal length"):
            group_tokens_and_weights(bad, pad_last_block=True, vocab=tiny_vocab)


class TestBreaks:
    def test_break_forces_new_block(self, tiny_vocab):
        chunked = group_tokens_and_weights(stream(10, breaks=[4]), pad_last_block=False, vocab=tiny_vocab)
        assert [b.content_length for b in chunked.blocks] == [4, 6]

    def test_break_at_zero_ignored(self, tiny_vocab):
        chunked = group_tokens_and_weights(stream(5, breaks=[0]), pad_last_block=False, vocab=tiny_vocab)
        assert [b.content_length for b in chunked.blocks] == [5]

    def test_break_at_end_ignored(self, tiny_vocab):
        chunked = group_tokens_and_weights(stream(5, breaks=[5]), pad_last_block=False, vocab=tiny_vocab)
        assert [b.content_length for b in chunked.blocks] == [5]

    def test_duplicate_breaks_collapse(self, tiny_vocab):
        chunked = group_tokens_and_weights(stream(6, breaks=[3, 3, 3]), pad_last_block=False, vocab=tiny_vocab)
        assert [b.content_length for b in chunked.blocks] == [3, 3]

    def test_unsorted_breaks_sorted(self, tiny_vocab):
        chunked = group_tokens_and_weights(stream(9, breaks=[6, 2]), pad_last_block=False, vocab=tiny_vocab)
        assert [b.content_length for b in chunked.blocks] == [2, 4, 3]

    def test_adjacent_breaks_no_empty_block(self, tiny_vocab):
        chunked = group_tokens_and_weights(stream(6, breaks=[2, 3]), pad_last_block=False, vocab=tiny_vocab)
        assert [b.content_length for b in chunked.blocks] == [2, 1, 3]

    def test_break_out_of_range_rejected(self, tiny_vocab):
        with pytest.raises(ValueError, match="outside token stream"):
            group_tokens_and_weights(stream(3, breaks=[9]), pad_last_block=False, vocab=tiny_vocab)

    def test_honor_breaks_false_ignores_breaks(self, tiny_vocab):
        chunked = group_tokens_and_weights(
            stream(10, breaks=[4]), pad_last_block=False, vocab=tiny_vocab, honor_breaks=False
        )
        assert [b.content_length for b in chunked.blocks] == [10]

    def test_long_sub_stream_still_splits(self, tiny_vocab):
        chunked = group_tokens_and_weights(stream(80, breaks=[2]), pad_last_block=False, vocab=tiny_vocab)
        assert [b.content_length for b in chunked.blocks] == [2, 75, 3]

    def test_only_breaks_empty_stream(self, tiny_vocab):
        chunked = group_tokens_and_weights(stream(0, breaks=[0]), pad_last_block=False, vocab=tiny_vocab)
        [block] = chunked.blocks
        assert block.content_length == 0


class TestReconstruction:
    @settings(max_examples=200, deadline=None)
    @given(
        n=st.integers(min_value=0, max_value=200),
        breaks=st.lists(st.integers(min_value=0, max_value=200), max_size=5),
        pad=st.booleans(),
        honor=st.booleans(),
    )
    def test_content_round_trip(self, n, breaks, pad, honor):
        breaks = [b for b in breaks if b <= n]
        tokens = stream(n, breaks=breaks)
        chunked = group_tokens_and_weights(tokens, pad_last_block=pad, vocab=TINY, honor_breaks=honor)

        rebuilt = [tid for block in chunked.blocks for tid in content(block)]
        assert rebuilt == tokens.ids

        rebuilt_weights = [
            w for block in chunked.blocks for w in block.weights[1 : 1 + block.content_length]
        ]
        assert rebuilt_weights == tokens.weights

        for block in chunked.blocks:
            assert 0 <= block.content_length <= CAPACITY
            assert block.ids[0] == TINY.bos_id
            assert block.ids[-1] == TINY.eos_id
            if pad:
                assert len(block.ids) == 77


class TestPairWithNegative:
    def test_shorter_negative_padded(self, tiny_vocab):
        pos, neg = pair_with_negative(stream(10), stream(4), tiny_vocab)
        assert len(pos.ids) == len(neg.ids) == 10
        assert neg.ids[4:] == [tiny_vocab.eos_id] * 6
        assert neg.weights[4:] == [1.0] * 6
        assert neg.provenance[4:] == [-1] * 6

    def test_shorter_positive_padded(self, tiny_vocab):
        pos, neg = pair_with_negative(stream(4), stream(10), tiny_vocab)
        assert pos.ids[4:] == [tiny_vocab.eos_id] * 6
        assert len(pos.ids) == 10

    def test_break_union(self, tiny_vocab):
        pos, neg = pair_with_negative(stream(10, breaks=[2]), stream(10, breaks=[7]), tiny_vocab)
        assert pos.breaks == neg.breaks == [2, 7]

    def test_inputs_not_mutated(self, tiny_vocab):
        a, b = stream(3), stream(8)
        pair_with_negative(a, b, tiny_vocab)
        assert len(a.ids) == 3 and a.breaks == []
        assert len(b.ids) == 8

    def test_equal_streams_unchanged(self, tiny_vocab):
        pos, neg = pair_with_negative(stream(5), stream(5), tiny_vocab)
        assert pos.ids == neg.ids == stream(5).ids

    @settings(max_examples=200, deadline=None)
    @given(
        n_pos=st.integers(min_value=0, max_value=180),
        n_neg=st.integers(min_value=0, max_value=180),
        pos_breaks=st.lists(st.integers(min_value=0, max_value=180), max_size=4),
        neg_breaks=st.lists(st.integers(min_value=0, max_value=180), max_size=4),
        pad=st.booleans(),
        honor=st.booleans(),
    )
    def test_equal_block_counts_all_flag_combos(
        self, n_pos, n_neg, pos_breaks, neg_breaks, pad, honor
    ):
        limit = min(n_pos, n_neg)
        positive = stream(n_pos, breaks=[b for b in pos_breaks if b <= limit])
        negative = stream(n_neg, breaks=[b for b in neg_breaks if b <= limit])
        pos, neg = pair_with_negative(positive, negative, TINY)

        assert len(pos.ids) == len(neg.ids)
        assert pos.breaks == neg.breaks

        chunked_pos = group_tokens_and_weights(pos, pad_last_block=pad, vocab=TINY, honor_breaks=honor)
        chunked_neg = group_tokens_and_weights(neg, pad_last_block=pad, vocab=TINY, honor_breaks=honor)
        assert len(chunked_pos.blocks) == len(chunked_neg.blocks)
        for bp, bn in zip(chunked_pos.blocks, chunked_neg.blocks):
            assert len(bp.ids) == len(bn.ids)


class TestJson:
    def test_shape(self, tiny_vocab):
        chunked = group_tokens_and_weights(stream(3), pad_last_block=False, vocab=tiny_vocab)
        doc = chunked_to_json(chunked)
        assert set(doc) == {"padded", "blocks"}
        assert doc["padded"] is False
        [block] = doc["blocks"]
        assert set(block) == {"ids", "weights"}
        assert block["ids"] == [0, 100, 101, 102, 1]

    def test_lists_are_copies(self, tiny_vocab):
        chunked = group_tokens_and_weights(stream(1), pad_last_block=False, vocab=tiny_vocab)
        doc = chunked_to_json(chunked)
        doc["blocks"][0]["ids"].append(999)
        assert 999 not in chunked.blocks[0].ids
