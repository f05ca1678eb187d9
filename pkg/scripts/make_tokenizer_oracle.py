#!/usr/bin/env python
"""Freeze the byte-pair-encoding oracle used by the tokenizer tests.

Expected token ids come from an independent reference implementation: the
Rust-backed ``tokenizers`` library configured as the standard fast CLIP
pipeline (byte-level alphabet, ``</w>`` end-of-word suffix, whitespace
collapse + lowercase normalization, the usual word-split pattern).  That
pipeline is what production text-to-image stacks run, so its ids are the
ground truth the pure-Python encoder in this package must reproduce.

The corpus is 50 strings drawn from the nursery-rhyme test poems: raw lines,
whole poems, weighted-prompt lines (which add digits, colons and parentheses
as plain text), and one whitespace-mangled variant.

Run from the repository root; requires the ``tokenizers`` package (a
development-only dependency, not needed at runtime):

    python scripts/make_tokenizer_oracle.py
"""

import json
import unicodedata
from pathlib import Path

from tokenizers import Regex, Tokenizer, normalizers, pre_tokenizers
from tokenizers.models import BPE

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "src" / "promptweight" / "data"
POEMS = ROOT / "tests" / "data" / "poems"
OUT = ROOT / "tests" / "data" / "tokenizer_oracle.json"

WORD_PATTERN = r"""'s|'t|'re|'ve|'m|'ll|'d|[\p{L}]+|[\p{N}]|[^\s\p{L}\p{N}]+"""


def reference_tokenizer() -> Tokenizer:
    with open(DATA / "vocab.json", encoding="utf-8") as f:
        vocab = json.load(f)
    merges = []
    with open(DATA / "merges.txt", encoding="utf-8") as f:
        for line in f.read().split("\n")[1:]:
            if line.strip():
                left, right = line.split()
                merges.append((left, right))
    tok = Tokenizer(
        BPE(
            vocab=vocab,
            merges=merges,
            dropout=None,
            continuing_subword_prefix="",
            end_of_word_suffix="</w>",
            fuse_unk=False,
            unk_token="<|endoftext|>",
        )
    )
    tok.normalizer = normalizers.Sequence(
        [
            normalizers.NFC(),
            normalizers.Replace(Regex(r"\s+"), " "),
            normalizers.Lowercase(),
        ]
    )
    tok.pre_tokenizer = pre_tokenizers.Sequence(
        [
            pre_tokenizers.Split(Regex(WORD_PATTERN), behavior="removed", invert=True),
            pre_tokenizers.ByteLevel(add_prefix_space=False, use_regex=False),
        ]
    )
    return tok


def poem(name: str) -> str:
    return (POEMS / name).read_text(encoding="utf-8").rstrip("\n")


def lines(name: str) -> list[str]:
    return poem(name).split("\n")


def build_corpus() -> list[str]:
    lg = lines("little_girl.txt")
    lgw = lines("little_girl_weighted.txt")
    jh = lines("jack_horner.txt")
    ws = lines("what_sound.txt")
    corpus = []
    # plain poem lines
    corpus += lg  # 8
    corpus += [lgw[0], lgw[2], lgw[3], lgw[6], lgw[7]]  # 5
    corpus += jh  # 6
    corpus += ws  # 10
    # whole poems, newlines intact
    corpus += [poem("little_girl.txt"), poem("little_girl_weighted.txt")]  # 2
    corpus += [poem("jack_horner.txt"), poem("jack_horner_w1.txt")]  # 2
    corpus += [poem("what_sound.txt"), poem("what_sound_w4.txt")]  # 2
    # weighted lines: digits, colons and brackets as plain text
    corpus += [
        "Little Jack Horner (boy:1.5)",
        "Sat in a (corner:1.5),",
        "Eating his (Christmas pie:1.6);",
        "(Little:0.9) (Jack:1.5) (Horner:1.5)",
        "Eating his (Christmas:1.6) (pie:1.6);",
        "And said, “What a (good:0.8) (boy:0.9) am I!”",
        "What (sound:1.6) was that?",
        "I turn away, into the (shaking:1.7) room.",
        "What was that (sound:1.6) that came in on the (dark:1.5)?",
        "What is this (maze:1.5) of (light:1.6) it leaves us in?",
        "It was the (breath:1.9)",
        "(Listen:1.1). It is here.",
    ]  # 12
    # stressors built from poem text
    corpus += [
        "  Little   girl,\n\n little \t girl,  ",
        "shoe.”",
        "(plum:1.6),",
    ]  # 3
    assert len(corpus) == 50, len(corpus)
    return corpus


def main():
    tok = reference_tokenizer()
    corpus = build_corpus()
    entries = []
    for text in corpus:
        # the reference applies NFC; the package encoder does not, so the
        # frozen corpus must already be NFC to keep both paths comparable
        assert unicodedata.is_normalized("NFC", text), repr(text)
        assert "\r" not in text, repr(text)
        ids = tok.encode(text).ids
        entries.append({"text": text, "ids": ids})
    OUT.write_text(
        json.dumps({"entries": entries}, ensure_ascii=False, indent=1) + "\n",
        encoding="utf-8",
    )
    total = sum(len(e["ids"]) for e in entries)
    print(f"wrote {OUT} ({len(entries)} strings, {total} ids)")


if __name__ == "__main__":
    main()
