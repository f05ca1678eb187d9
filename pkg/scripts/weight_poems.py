#!/usr/bin/env python3
"""Weight the bundled poems with the rule lexicon and report the results.

For each poem: run the rule-based weighter, validate the output against the
original, and show the weighted words, block layout and embedding shape the
pipeline would hand to a sampler.  A quick end-to-end sanity run:

    python3 scripts/weight_poems.py
    python3 scripts/weight_poems.py --poem what_sound.txt --seed 7
"""

import argparse
from pathlib import Path

from promptweight.chunking import group_tokens_and_weights, pair_with_negative
from promptweight.conditioning import MockEncoder, get_weighted_text_embeddings
from promptweight.grammar import parse_prompt_attention
from promptweight.tokenizer import default_vocabulary, get_prompts_tokens_with_weights
from promptweight.weighter import (
    default_lexicon,
    load_template,
    rule_based_weighter,
    validate_response,
)

POEM_DIR = Path(__file__).resolve().parent.parent / "tests" / "data" / "poems"
DEFAULT_POEMS = ["little_girl.txt", "jack_horner.txt", "what_sound.txt"]


def report(name: str, seed: int) -> None:
    poem = (POEM_DIR / name).read_text(encoding="utf-8").rstrip("\n")
    lexicon = default_lexicon()
    weighted = rule_based_weighter(poem, lexicon)
    validation = validate_response(poem, weighted, load_template(1).policy)

    print(f"=== {name}")
    print(f"  parse_ok={validation.parse_ok}  structure_preserved={validation.structure_preserved}")
    print(f"  weighted words: {validation.weighted_word_count}, range warnings: {len(validation.range_warnings)}")

    parsed = parse_prompt_attention(weighted)
    hits = sorted({(s.text, s.weight) for s in parsed.segments if not s.is_break and s.weight != 1.0})
    print("  " + ", ".join(f"{text}:{weight:g}" for text, weight in hits))

    vocab = default_vocabulary()
    tokens_pos = get_prompts_tokens_with_weights(vocab, parsed)
    tokens_neg = get_prompts_tokens_with_weights(vocab, parse_prompt_attention(""))
    tokens_pos, tokens_neg = pair_with_negative(tokens_pos, tokens_neg, vocab)
    chunked = group_tokens_and_weights(tokens_pos, pad_last_block=True, vocab=vocab)
    print(f"  tokens: {len(tokens_pos.ids)}, blocks: {len(chunked.blocks)} "
          f"(content {[b.content_length for b in chunked.blocks]})")

    out = get_weighted_text_embeddings([MockEncoder(seed=seed)], weighted, vocab=vocab)
    print(f"  embeddings: {out.prompt_embeds.shape}, pooled: {out.pooled_prompt_embeds.shape}, "
          f"mean {float(out.prompt_embeds.mean()):.6f}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--poem", action="append", help="poem file name under tests/data/poems (repeatable)")
    parser.add_argument("--seed", type=int, default=0, help="mock encoder seed")
    args = parser.parse_args()

    for name in args.poem or DEFAULT_POEMS:
        report(name, args.seed)


if __name__ == "__main__":
    main()
