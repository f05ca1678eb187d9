"""Byte-pair encoding for the contrastive text encoder vocabulary.

Pure-Python implementation of the published CLIP tokenization procedure:
normalize (collapse whitespace runs, trim, lowercase), split into word units
with the standard word pattern, map each word through the printable byte
alphabet, then apply lowest-rank-first merges with the ``</w>`` end-of-word
suffix.  Unicode NFC normalization and mojibake repair are deliberately not
applied; input text is taken as given.

Encoding here never adds start/end markers and never truncates; block
assembly owns both concerns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import regex

from .grammar import ParsedPrompt

BOS_TOKEN = "<|startoftext|>"
EOS_TOKEN = "<|endoftext|>"
CONTEXT_LENGTH = 77

# contraction suffixes, letter runs, single digits, punctuation runs
WORD_PATTERN = regex.compile(r"""'s|'t|'re|'ve|'m|'ll|'d|[\p{L}]+|[\p{N}]|[^\s\p{L}\p{N}]+""")


class VocabularyError(Exception):
    """Raised when vocabulary or merge data cannot be loaded or is inconsistent."""


class EncodingError(Exception):
    """Raised when byte-pair encoding produces a unit missing from the vocabulary."""


@lru_cache(maxsize=1)
def bytes_to_unicode() -> dict[int, str]:
    """Map every byte value to a printable unicode character.

    Printable ASCII and printable latin-1 map to themselves; the remaining
    bytes are shifted into the 0x100+ plane so no byte is invisible.
    """
    bs = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("\xa1"), ord("\xac") + 1))
        + list(range(ord("\xae"), ord("\xff") + 1))
    )
    cs = bs[:]
    n = 0
    for b in range(2**8):
        if b not in bs:
            bs.append(b)
            cs.append(2**8 + n)
            n += 1
    return dict(zip(bs, [chr(c) for c in cs]))


@dataclass
class Vocabulary:
    token_to_id: dict[str, int]
    merge_ranks: dict[tuple[str, str], int]
    bos_id: int
    eos_id: int
    context_length: int = CONTEXT_LENGTH
    id_to_token: dict[int, str] = field(init=False, repr=False, compare=False)
    _bpe_cache: dict[str, tuple[str, ...]] = field(init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        self.id_to_token = {i: t for t, i in self.token_to_id.items()}

    def __len__(self) -> int:
        return len(self.token_to_id)


def load_vocabulary(vocab_file: str | Path, merges_file: str | Path) -> Vocabulary:
    """Load a vocab.json / merges.txt pair and cross-check them.

    Distinct failure modes all raise VocabularyError: unreadable file,
    malformed JSON, duplicate token ids, and a merge pair whose
    concatenation is not itself a vocabulary token.
    """
    try:
        raw = Path(vocab_file).read_text(encoding="utf-8")
    except OSError as exc:
        raise VocabularyError(f"cannot read vocabulary file {vocab_file}: {exc}") from exc
    try:
        table = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise VocabularyError(f"vocabulary file {vocab_file} is not valid JSON: {exc}") from exc
    if not isinstance(table, dict) or not all(
        isinstance(k, str) and isinstance(v, int) for k, v in table.items()
    ):
        raise VocabularyError(f"vocabulary file {vocab_file} must map token strings to integer ids")
    if len(set(table.values())) != len(table):
        raise VocabularyError(f"vocabulary file {vocab_file} assigns the same id to multiple tokens")
    for marker in (BOS_TOKEN, EOS_TOKEN):
        if marker not in table:
            raise VocabularyError(f"vocabulary file {vocab_file} lacks the {marker} marker token")

    try:
        merge_lines = Path(merges_file).read_text(encoding="utf-8").split("\n")
    except OSError as exc:
        raise VocabularyError(f"cannot read merges file {merges_file}: {exc}") from exc
    if merge_lines and merge_lines[0].startswith("#"):
        merge_lines = merge_lines[1:]

    merge_ranks: dict[tuple[str, str], int] = {}
    for rank, line in enumerate(l for l in merge_lines if l.strip()):
        parts = line.split()
        if len(parts) != 2:
            raise VocabularyError(f"merges file {merges_file} line {rank + 2}: expected two units, got {line!r}")
        pair = (parts[0], parts[1])
        if parts[0] + parts[1] not in table:
            raise VocabularyError(
                f"merge pair {pair!r} concatenates to a unit missing from the vocabulary"
            )
        merge_ranks[pair] = rank

    return Vocabulary(
        token_to_id=table,
        merge_ranks=merge_ranks,
        bos_id=table[BOS_TOKEN],
        eos_id=table[EOS_TOKEN],
    )


_default_vocabulary: Vocabulary | None = None


def default_vocabulary() -> Vocabulary:
    """The bundled 49408-entry encoder vocabulary, loaded once per process."""
    global _default_vocabulary
    if _default_vocabulary is None:
        data = resources.files("promptweight").joinpath("data")
        with resources.as_file(data.joinpath("vocab.json")) as vocab_path:
            with resources.as_file(data.joinpath("merges.txt")) as merges_path:
                _default_vocabulary = load_vocabulary(vocab_path, merges_path)
    return _default_vocabulary


def _get_pairs(word: tuple[str, ...]) -> set[tuple[str, str]]:
    return set(zip(word, word[1:]))


def _bpe(vocab: Vocabulary, token: str) -> tuple[str, ...]:
    """Split one byte-mapped word into merge units, lowest rank first."""
    cached = vocab._bpe_cache.get(token)
    if cached is not None:
        return cached

    word = tuple(token[:-1]) + (token[-1] + "</w>",)
    pairs = _get_pairs(word)
    if not pairs:
        result = (token + "</w>",)
        vocab._bpe_cache[token] = result
        return result

    ranks = vocab.merge_ranks
    while True:
        bigram = min(pairs, key=lambda pair: ranks.get(pair, float("inf")))
        if bigram not in ranks:
            break
        first, second = bigram
        new_word: list[str] = []
        i = 0
        while i < len(word):
            try:
                j = word.index(first, i)
            except ValueError:
                new_word.extend(word[i:])
                break
            new_word.extend(word[i:j])
            i = j
            if word[i] == first and i < len(word) - 1 and word[i + 1] == second:
                new_word.append(first + second)
                i += 2
            else:
                new_word.append(word[i])
                i += 1
        word = tuple(new_word)
        if len(word) == 1:
            break
        pairs = _get_pairs(word)

    vocab._bpe_cache[token] = word
    return word


def normalize_text(text: str) -> str:
    """Collapse whitespace runs to single spaces, trim, lowercase."""
    return " ".join(text.split()).lower()


def encode_text(vocab: Vocabulary, text: str) -> list[int]:
    """Encode text to token ids.  No start/end markers, no truncation.

    Empty or whitespace-only input encodes to an empty list.
    """
    byte_encoder = bytes_to_unicode()
    ids: list[int] = []
    for word in WORD_PATTERN.findall(normalize_text(text)):
        mapped = "".join(byte_encoder[b] for b in word.encode("utf-8"))
        for unit in _bpe(vocab, mapped):
            try:
                ids.append(vocab.token_to_id[unit])
            except KeyError:
                raise EncodingError(f"merge unit {unit!r} missing from vocabulary") from None
    return ids


@dataclass
class TokenizedPrompt:
    """Flat token stream with per-token weights.

    ``breaks`` holds token indices where a block boundary was requested;
    ``provenance`` maps each token back to the segment it came from.
    """

    ids: list[int]
    weights: list[float]
    breaks: list[int] = field(default_factory=list)
    provenance: list[int] = field(default_factory=list)


def get_prompts_tokens_with_weights(vocab: Vocabulary, prompt: ParsedPrompt) -> TokenizedPrompt:
    """Tokenize each text segment and expand its weight over its tokens."""
    ids: list[int] = []
    weights: list[float] = []
    breaks: list[int] = []
    provenance: list[int] = []
    for index, seg in enumerate(prompt.segments):
        if seg.is_break:
            breaks.append(len(ids))
            continue
        seg_ids = encode_text(vocab, seg.text)
        ids.extend(seg_ids)
        weights.extend([seg.weight] * len(seg_ids))
        provenance.extend([index] * len(seg_ids))
    return TokenizedPrompt(ids=ids, weights=weights, breaks=breaks, provenance=provenance)


def tokenized_to_json(tokens: TokenizedPrompt) -> dict:
    return {"ids": list(tokens.ids), "weights": list(tokens.weights), "breaks": list(tokens.breaks)}
