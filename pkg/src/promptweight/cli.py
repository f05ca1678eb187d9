"""Command line front end.

Machine-readable JSON goes to stdout; human-oriented rendering is limited
to the heatmap command, whose table or SVG is its actual product.  Exit
codes: 0 success, 2 unreadable or missing files, 3 validation failures,
4 transport failures.

Prompt and poem arguments accept ``-`` to read from stdin, which is the
practical way to pass multi-line poems; trailing newlines from file
redirection are stripped so ``< poem.txt`` matches the inline text.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from xml.sax.saxutils import escape as xml_escape

import click

from . import conditioning, weighter
from .chunking import chunked_to_json, group_tokens_and_weights, pair_with_negative
from .grammar import lint, lint_to_json, parse_prompt_attention, prompt_to_json
from .tokenizer import (
    TokenizedPrompt,
    Vocabulary,
    VocabularyError,
    bytes_to_unicode,
    default_vocabulary,
    get_prompts_tokens_with_weights,
    load_vocabulary,
    tokenized_to_json,
)

EXIT_IO = 2
EXIT_VALIDATION = 3
EXIT_TRANSPORT = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _read_text_arg(value: str) -> str:
    if value != "-":
        return value
    # trailing newlines are a file-redirection artifact, not prompt content
    return sys.stdin.read().rstrip("\n")


def _get_vocab(vocab_path: str | None, merges_path: str | None) -> Vocabulary:
    if (vocab_path is None) != (merges_path is None):
        _fail(EXIT_VALIDATION, "--vocab and --merges must be given together")
    try:
        if vocab_path is None:
            return default_vocabulary()
        return load_vocabulary(vocab_path, merges_path)
    except VocabularyError as exc:
        _fail(EXIT_IO, str(exc))


def _emit(payload: dict, pretty: bool):
    indent = 2 if pretty else None
    click.echo(json.dumps(payload, sort_keys=True, indent=indent))


vocab_options = [
    click.option("--vocab", "vocab_path", type=click.Path(), default=None, help="vocab.json path"),
    click.option("--merges", "merges_path", type=click.Path(), default=None, help="merges.txt path"),
]


def add_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn

    return wrap


@click.group()
def main():
    """Compile weighted poems into prompt blocks and embeddings."""


@main.command("parse")
@click.argument("prompt")
@click.option("--pretty", is_flag=True, help="indent the JSON output")
def cmd_parse(prompt: str, pretty: bool):
    """Parse attention markers into weighted segments (JSON on stdout)."""
    parsed = parse_prompt_attention(_read_text_arg(prompt))
    _emit(prompt_to_json(parsed), pretty)


@main.command("lint")
@click.argument("prompt")
@click.option("--template", "template_id", type=int, default=None, help="check weights against this template's bands")
@click.option("--pretty", is_flag=True)
def cmd_lint(prompt: str, template_id: int | None, pretty: bool):
    """Report degraded syntax and out-of-band weights (JSON on stdout)."""
    parsed = parse_prompt_attention(_read_text_arg(prompt))
    policy = None
    if template_id is not None:
        try:
            policy = weighter.load_template(template_id).policy
        except ValueError as exc:
            _fail(EXIT_VALIDATION, str(exc))
    report = lint(parsed, policy)
    _emit(lint_to_json(report), pretty)
    if report.errors:
        sys.exit(EXIT_VALIDATION)


@main.command("tokenize")
@click.argument("prompt")
@add_options(vocab_options)
@click.option("--pretty", is_flag=True)
def cmd_tokenize(prompt: str, vocab_path, merges_path, pretty: bool):
    """Tokenize a parsed prompt into ids with weights (JSON on stdout)."""
    vocab = _get_vocab(vocab_path, merges_path)
    parsed = parse_prompt_attention(_read_text_arg(prompt))
    tokens = get_prompts_tokens_with_weights(vocab, parsed)
    _emit(tokenized_to_json(tokens), pretty)


def _decode_token(vocab: Vocabulary, token_id: int) -> str:
    """Render a vocabulary unit readably, keeping the end-of-word marker."""
    byte_decoder = {c: b for b, c in bytes_to_unicode().items()}
    raw = vocab.id_to_token.get(token_id, f"<{token_id}>")
    tail = ""
    if raw.endswith("</w>"):
        raw, tail = raw[:-4], "</w>"
    data = bytes(byte_decoder[ch] for ch in raw if ch in byte_decoder)
    return data.decode("utf-8", errors="replace") + tail


BAR_CELLS_PER_UNIT = 20  # weight 1.0 renders as 20 filled cells


def _heatmap_table(vocab: Vocabulary, tokens: TokenizedPrompt) -> str:
    lines = [f"{'index':>5}  {'token':<18}  {'id':>6}  {'weight':>7}  bar"]
    for i, (tid, w) in enumerate(zip(tokens.ids, tokens.weights)):
        text = _decode_token(vocab, tid)
        if len(text) > 18:
            text = text[:17] + "…"
        bar = "█" * max(round(w * BAR_CELLS_PER_UNIT), 0)
        lines.append(f"{i:>5}  {text:<18}  {tid:>6}  {w:>7.2f}  {bar}")
    return "\n".join(lines)


def _heatmap_svg(vocab: Vocabulary, tokens: TokenizedPrompt) -> str:
    """SVG schema: one g.token per row holding rect.bar (width is weight
    times 100 pixels), text.label (the token) and text.value (the weight)."""
    row_height = 22
    height = row_height * len(tokens.ids) + 8
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="640" height="{height}" '
        f'viewBox="0 0 640 {height}" font-family="monospace" font-size="13">'
    ]
    for i, (tid, w) in enumerate(zip(tokens.ids, tokens.weights)):
        y = row_height * i + 4
        bar_width = max(w * 100.0, 0.0)
        label = xml_escape(f"{_decode_token(vocab, tid)} [{tid}]")
        parts.append(
            f'<g class="token" transform="translate(4,{y})">'
            f'<text class="label" x="0" y="15">{label}</text>'
            f'<rect class="bar" x="240" y="4" width="{bar_width:.1f}" height="14" fill="#4a90d9"/>'
            f'<text class="value" x="{240 + bar_width + 6:.1f}" y="15">{w:g}</text>'
            f"</g>"
        )
    parts.append("</svg>")
    return "".join(parts)


@main.command("heatmap")
@click.argument("prompt")
@add_options(vocab_options)
@click.option("--svg", is_flag=True, help="emit an SVG bar strip instead of the text table")
def cmd_heatmap(prompt: str, vocab_path, merges_path, svg: bool):
    """Visualize per-token weights as bars (text table or SVG)."""
    vocab = _get_vocab(vocab_path, merges_path)
    parsed = parse_prompt_attention(_read_text_arg(prompt))
    tokens = get_prompts_tokens_with_weights(vocab, parsed)
    if svg:
        click.echo(_heatmap_svg(vocab, tokens))
    else:
        click.echo(_heatmap_table(vocab, tokens))


@main.command("compile")
@click.argument("poem")
@add_options(vocab_options)
@click.option("--neg", "neg_prompt", default="", help="negative prompt text")
@click.option("--weighter", "weighter_mode", type=click.Choice(["llm", "rules", "none"]), default="none")
@click.option("--template", "template_id", type=int, default=1, show_default=True, help="instruction template id (llm mode)")
@click.option("--lexicon", "lexicon_path", type=click.Path(), default=None, help="lexicon JSON (rules mode)")
@click.option("--endpoint", default=None, help="chat-completion endpoint URL (llm mode)")
@click.option("--model", "model_name", default="gpt-4", show_default=True, help="model name (llm mode)")
@click.option("--fixtures", "fixtures_dir", type=click.Path(), default=None, help="replay recorded responses from this directory instead of calling the endpoint")
@click.option("--pad-last-block/--no-pad-last-block", default=True, show_default=True)
@click.option("--no-breaks", is_flag=True, help="ignore BREAK boundaries when chunking")
@click.option("--clip-skip", type=int, default=0, show_default=True)
@click.option("--no-mean-norm", is_flag=True, help="skip mean restoration after weighting")
@click.option("--embed", is_flag=True, help="also produce mock-encoder embeddings (requires --out)")
@click.option("--mock-seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None, help="WPME output file for --embed")
@click.option("--pretty", is_flag=True)
def cmd_compile(
    poem: str,
    vocab_path,
    merges_path,
    neg_prompt: str,
    weighter_mode: str,
    template_id: int,
    lexicon_path,
    endpoint,
    model_name: str,
    fixtures_dir,
    pad_last_block: bool,
    no_breaks: bool,
    clip_skip: int,
    no_mean_norm: bool,
    embed: bool,
    mock_seed: int,
    out_path,
    pretty: bool,
):
    """Run the full pipeline: weight, parse, tokenize, chunk, optionally embed."""
    vocab = _get_vocab(vocab_path, merges_path)
    poem_text = _read_text_arg(poem)
    honor_breaks = not no_breaks
    mean_norm = not no_mean_norm

    weighter_info: dict = {"mode": weighter_mode}
    if weighter_mode == "llm":
        try:
            request = weighter.build_request(poem_text, template_id, model_name=model_name)
        except ValueError as exc:
            _fail(EXIT_VALIDATION, str(exc))
        transport = None
        target = endpoint
        if fixtures_dir is not None:
            try:
                transport = weighter.ReplayTransport(fixtures_dir)
            except OSError as exc:
                _fail(EXIT_IO, f"cannot read fixtures: {exc}")
            target = target or "replay://fixtures"
        if target is None:
            _fail(EXIT_VALIDATION, "--endpoint (or --fixtures) is required with --weighter llm")
        try:
            weighted_text = weighter.request_weighting(request, target, transport=transport)
        except weighter.TransportError as exc:
            _fail(EXIT_TRANSPORT, str(exc))
        except weighter.EmptyCompletionError as exc:
            _fail(EXIT_TRANSPORT, str(exc))
        policy = weighter.load_template(template_id).policy
        report = weighter.validate_response(poem_text, weighted_text, policy)
        if not report.structure_preserved:
            _fail(EXIT_VALIDATION, "model response does not preserve the poem structure")
        weighter_info.update(
            {
                "template_id": template_id,
                "model": model_name,
                "validation": {
                    "parse_ok": report.parse_ok,
                    "structure_preserved": report.structure_preserved,
                    "range_warnings": report.range_warnings,
                    "weighted_word_count": report.weighted_word_count,
                },
            }
        )
    elif weighter_mode == "rules":
        try:
            lexicon = weighter.load_lexicon(lexicon_path) if lexicon_path else weighter.default_lexicon()
        except OSError as exc:
            _fail(EXIT_IO, f"cannot read lexicon: {exc}")
        except (ValueError, json.JSONDecodeError) as exc:
            _fail(EXIT_VALIDATION, str(exc))
        weighted_text = weighter.rule_based_weighter(poem_text, lexicon)
    else:
        weighted_text = poem_text

    parsed_pos = parse_prompt_attention(weighted_text)
    parsed_neg = parse_prompt_attention(neg_prompt)
    tokens_pos = get_prompts_tokens_with_weights(vocab, parsed_pos)
    tokens_neg = get_prompts_tokens_with_weights(vocab, parsed_neg)
    tokens_pos, tokens_neg = pair_with_negative(tokens_pos, tokens_neg, vocab)
    chunked_pos = group_tokens_and_weights(tokens_pos, pad_last_block, vocab, honor_breaks=honor_breaks)
    chunked_neg = group_tokens_and_weights(tokens_neg, pad_last_block, vocab, honor_breaks=honor_breaks)

    payload = {
        "weighted_prompt": weighted_text,
        "negative_prompt": neg_prompt,
        "weighter": weighter_info,
        "config": {
            "pad_last_block": pad_last_block,
            "honor_breaks": honor_breaks,
            "clip_skip": clip_skip,
            "mean_norm": mean_norm,
        },
        "positive": chunked_to_json(chunked_pos),
        "negative": chunked_to_json(chunked_neg),
    }

    if embed:
        if out_path is None:
            _fail(EXIT_VALIDATION, "--embed requires --out FILE")
        if mock_seed < 0:
            _fail(EXIT_VALIDATION, "--mock-seed must be non-negative")
        encoder = conditioning.MockEncoder(seed=mock_seed)
        try:
            output = conditioning.get_weighted_text_embeddings(
                [encoder],
                weighted_text,
                neg_prompt,
                vocab=vocab,
                clip_skip=clip_skip,
                mean_norm=mean_norm,
                honor_breaks=honor_breaks,
            )
        except (conditioning.ConditioningError, ValueError) as exc:
            _fail(EXIT_VALIDATION, str(exc))
        out = Path(out_path)
        neg_out = out.with_name(out.stem + ".neg" + out.suffix) if out.suffix else Path(str(out) + ".neg")
        try:
            conditioning.write_wpme(out, output.prompt_embeds)
            conditioning.write_sidecar(
                str(out) + ".json", output.pooled_prompt_embeds, output.lora_scale, output.clip_skip
            )
            conditioning.write_wpme(neg_out, output.neg_prompt_embeds)
            conditioning.write_sidecar(
                str(neg_out) + ".json", output.neg_pooled_prompt_embeds, output.lora_scale, output.clip_skip
            )
        except OSError as exc:
            _fail(EXIT_IO, f"cannot write embeddings: {exc}")
        payload["embedding"] = {
            "out": str(out),
            "neg_out": str(neg_out),
            "rows": int(output.prompt_embeds.shape[0]),
            "cols": int(output.prompt_embeds.shape[1]),
            "mock_seed": mock_seed,
        }

    _emit(payload, pretty)


if __name__ == "__main__":
    main()
