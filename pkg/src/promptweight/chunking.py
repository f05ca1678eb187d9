"""Group flat token streams into fixed-size encoder blocks.

Text encoders take at most ``context_length`` (77) positions: a start
marker, up to 75 content tokens, and an end marker.  Longer streams are cut
into consecutive blocks of 75; break positions recorded by the tokenizer
close the current block early so content after a BREAK starts fresh.
"""

from __future__ import annotations

from dataclasses import dataclass

from .tokenizer import TokenizedPrompt, Vocabulary


@dataclass
class ChunkBlock:
    """One encoder-sized block: start marker, content, end marker, padding.

    ``content_length`` counts the content tokens only, so the original
    stream can be reconstructed exactly from a block sequence.
    """

    ids: list[int]
    weights: list[float]
    content_length: int


@dataclass
class ChunkedPrompt:
    blocks: list[ChunkBlock]
    padded: bool


def _split_at_breaks(tokens: TokenizedPrompt, honor_breaks: bool) -> list[tuple[list[int], list[float]]]:
    if not honor_breaks or not tokens.breaks:
        return [(list(tokens.ids), list(tokens.weights))]
    streams = []
    cuts = sorted(set(tokens.breaks))
    prev = 0
    for cut in cuts + [len(tokens.ids)]:
        if not 0 <= cut <= len(tokens.ids):
            raise ValueError(f"break index {cut} outside token stream of length {len(tokens.ids)}")
        if cut > prev:
            streams.append((list(tokens.ids[prev:cut]), list(tokens.weights[prev:cut])))
        prev = max(prev, cut)
    return streams


def group_tokens_and_weights(
    tokens: TokenizedPrompt,
    pad_last_block: bool,
    vocab: Vocabulary,
    honor_breaks: bool = True,
) -> ChunkedPrompt:
    """Cut a token stream into marker-wrapped blocks of the context size.

    Every group of 75 content tokens becomes a full block.  A remainder
    (from the stream end or from a break) becomes a final block for its
    stretch, end-marker padded to the context size when pad_last_block is
    set and left short otherwise.  An empty stream still produces one
    marker-only block so downstream always has at least one block.
    """
    if len(tokens.ids) != len(tokens.weights):
        raise ValueError("token ids and weights must have equal length")
    capacity = vocab.context_length - 2
    bos, eos = vocab.bos_id, vocab.eos_id

    def make_block(ids: list[int], weights: list[float]) -> ChunkBlock:
        pad = capacity - len(ids) if pad_last_block else 0
        return ChunkBlock(
            ids=[bos] + ids + [eos] * pad + [eos],
            weights=[1.0] + weights + [1.0] * pad + [1.0],
            content_length=len(ids),
        )

    blocks: list[ChunkBlock] = []
    for ids, weights in _split_at_breaks(tokens, honor_breaks):
        while len(ids) >= capacity:
            head_ids, ids = ids[:capacity], ids[capacity:]
            head_weights, weights = weights[:capacity], weights[capacity:]
            blocks.append(make_block(head_ids, head_weights))
        if ids:
            blocks.append(make_block(ids, weights))

    if not blocks:
        blocks.append(make_block([], []))

    return ChunkedPrompt(blocks=blocks, padded=pad_last_block)


def pair_with_negative(
    positive: TokenizedPrompt,
    negative: TokenizedPrompt,
    vocab: Vocabulary,
) -> tuple[TokenizedPrompt, TokenizedPrompt]:
    """Equalize two token streams so both chunk into the same block layout.

    The shorter stream is end-marker padded to the longer one's length and
    break positions are unified to the union of both sets; with identical
    lengths and identical breaks the two streams produce equal block counts
    under every pad/break flag combination.  Inputs are not mutated.
    """

    def padded_copy(tokens: TokenizedPrompt, target_len: int, breaks: list[int]) -> TokenizedPrompt:
        pad = target_len - len(tokens.ids)
        return TokenizedPrompt(
            ids=list(tokens.ids) + [vocab.eos_id] * pad,
            weights=list(tokens.weights) + [1.0] * pad,
            breaks=breaks,
            provenance=list(tokens.provenance) + [-1] * pad,
        )

    target = max(len(positive.ids), len(negative.ids))
    breaks = sorted(set(positive.breaks) | set(negative.breaks))
    return padded_copy(positive, target, list(breaks)), padded_copy(negative, target, list(breaks))


def chunked_to_json(chunked: ChunkedPrompt) -> dict:
    return {
        "padded": chunked.padded,
        "blocks": [{"ids": list(b.ids), "weights": list(b.weights)} for b in chunked.blocks],
    }
