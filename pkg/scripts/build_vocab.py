#!/usr/bin/env python
"""Rebuild the bundled CLIP vocabulary files from a raw merge list.

The byte-pair-encoding vocabulary used by the contrastive text encoder is
fully determined by its published merge list (the ``bpe_simple_vocab_16e6``
file that ships with the original model release and with several tokenizer
packages).  This script reconstructs the standard ``vocab.json`` and
``merges.txt`` pair from that single file so the package data can be
regenerated from a pristine source at any time.

Construction, matching the reference tokenizer exactly:

  1. 256 printable byte-alphabet characters,
  2. the same 256 characters with the end-of-word suffix ``</w>``,
  3. one token per merge line (the concatenated pair), taking the first
     49152 - 256 - 2 = 48894 merges,
  4. the two special tokens ``<|startoftext|>`` and ``<|endoftext|>``.

Total: 49408 entries.  Ids follow insertion order, so the start marker is
49406 and the end marker 49407.

Usage:
    python scripts/build_vocab.py RAW_MERGE_FILE [--out-dir DIR]
"""

import argparse
import gzip
import json
from pathlib import Path

N_MERGES = 49152 - 256 - 2
TOTAL_TOKENS = 512 + N_MERGES + 2


def bytes_to_unicode():
    """Map every byte to a printable unicode character.

    Printable ASCII and the printable latin-1 range map to themselves; the
    remaining bytes are shifted into the 0x100+ plane.  This is the standard
    byte-level BPE alphabet.
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


def read_raw_merges(path: Path) -> list[str]:
    if path.suffix == ".gz":
        data = gzip.open(path, "rt", encoding="utf-8").read()
    else:
        data = path.read_text(encoding="utf-8")
    lines = data.split("\n")
    # line 0 is a version banner; merges follow
    return lines[1 : N_MERGES + 1]


def build(raw_merges: list[str]):
    alphabet = list(bytes_to_unicode().values())
    tokens = alphabet + [c + "</w>" for c in alphabet]
    for line in raw_merges:
        tokens.append("".join(line.split()))
    tokens.append("<|startoftext|>")
    tokens.append("<|endoftext|>")
    if len(tokens) != TOTAL_TOKENS:
        raise SystemExit(f"expected {TOTAL_TOKENS} tokens, built {len(tokens)}")
    if len(set(tokens)) != len(tokens):
        raise SystemExit("duplicate tokens in constructed vocabulary")
    vocab = {tok: i for i, tok in enumerate(tokens)}
    return vocab, raw_merges


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("raw", type=Path, help="raw merge list (optionally .gz)")
    ap.add_argument(
        "--out-dir",
        type=Path,
        default=Path(__file__).resolve().parent.parent / "src" / "promptweight" / "data",
    )
    args = ap.parse_args()

    vocab, merges = build(read_raw_merges(args.raw))
    args.out_dir.mkdir(parents=True, exist_ok=True)

    vocab_path = args.out_dir / "vocab.json"
    with open(vocab_path, "w", encoding="utf-8") as f:
        json.dump(vocab, f, ensure_ascii=False)

    merges_path = args.out_dir / "merges.txt"
    with open(merges_path, "w", encoding="utf-8") as f:
        f.write("#version: 0.2\n")
        for line in merges:
            f.write(line.strip() + "\n")

    print(f"wrote {vocab_path} ({len(vocab)} entries)")
    print(f"wrote {merges_path} ({len(merges)} merges)")
    print(f"start marker id {vocab['<|startoftext|>']}, end marker id {vocab['<|endoftext|>']}")


if __name__ == "__main__":
    main()
