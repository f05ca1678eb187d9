"""Prompt attention grammar: parsing, serialization and linting.

The grammar is the parenthesis weighting syntax used by stable-diffusion
front ends:

  (text)        emphasis, weight multiplied by 1.1
  [text]        de-emphasis, weight multiplied by 1/1.1
  (text:1.6)    explicit weight for the bracketed span
  \\( \\) \\[ \\] \\\\  literal bracket or backslash characters
  BREAK         standalone keyword forcing a block boundary downstream

Brackets nest and their multipliers compose.  Malformed input never raises:
unclosed brackets are treated as if closed at end of input, stray closers
and orphan ``:w`` constructs become literal text.  The parser reports those
degradations through :func:`lint`, not by failing.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from decimal import Decimal

ROUND_BRACKET_MULTIPLIER = 1.1
SQUARE_BRACKET_MULTIPLIER = 1 / 1.1

WARNING = "warning"
ERROR = "error"

re_attention = re.compile(
    r"""
    \\\(|\\\)|\\\[|\\]|\\\\|\\|
    \(|
    \[|
    :\s*([+-]?\d+(?:\.\d+)?)\s*\)|
    \)|
    ]|
    [^\\()\[\]:]+|
    :
    """,
    re.X,
)

re_break = re.compile(r"\s*\bBREAK\b\s*", re.S)


@dataclass(frozen=True)
class Segment:
    """One weighted run of text, or a block-boundary marker."""

    text: str
    weight: float = 1.0
    kind: str = "text"  # "text" or "break"

    @property
    def is_break(self) -> bool:
        return self.kind == "break"


BREAK = Segment(text="", weight=1.0, kind="break")


@dataclass
class ParsedPrompt:
    """Parser output: the segment list plus the original source text.

    ``positions`` maps each segment to the source offset where it started.
    It exists for diagnostics only and does not take part in equality.
    """

    segments: list[Segment]
    source: str = ""
    positions: list[int] = field(default_factory=list, compare=False, repr=False)


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    position: int
    message: str


@dataclass
class LintReport:
    diagnostics: list[Diagnostic]

    @property
    def warnings(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == WARNING]

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == ERROR]


@dataclass(frozen=True)
class WeightPolicy:
    """Accepted weight bands, inclusive.  ``None`` means unconstrained."""

    emphasis: tuple[float, float] | None = None
    deemphasis: tuple[float, float] | None = None


def multiply_range(segments: list[Segment], start_position: int, multiplier: float) -> list[Segment]:
    """Multiply the weight of every text segment from start_position on.

    Break segments are left untouched.  start_position may equal
    len(segments), which multiplies nothing; anything else outside the list
    is a programming error and raises IndexError.
    """
    if not 0 <= start_position <= len(segments):
        raise IndexError(f"start_position {start_position} outside [0, {len(segments)}]")
    for i in range(start_position, len(segments)):
        seg = segments[i]
        if not seg.is_break:
            segments[i] = replace(seg, weight=seg.weight * multiplier)
    return segments


def merge_segments(segments: list[Segment]) -> list[Segment]:
    """Concatenate adjacent text segments that carry the same weight."""
    out: list[Segment] = []
    for seg in segments:
        if out and not seg.is_break and not out[-1].is_break and out[-1].weight == seg.weight:
            out[-1] = replace(out[-1], text=out[-1].text + seg.text)
        else:
            out.append(seg)
    return out


def _scan(text: str):
    """Run the tokenizer loop once, collecting segments and diagnostics.

    Internal records are mutable [kind, text, weight] triples so bracket
    closes can scale a suffix of the list in place.
    """
    res: list[list] = []
    positions: list[int] = []
    round_brackets: list[tuple[int, int]] = []
    square_brackets: list[tuple[int, int]] = []
    diags: list[Diagnostic] = []

    def scale_from(start: int, mult: float) -> None:
        for rec in res[start:]:
            if rec[0] == "text":
                rec[2] *= mult

    def append_text(piece: str, offset: int) -> None:
        # zero-length pieces carry no information; dropping them keeps the
        # segment list free of empty entries
        if piece:
            res.append(["text", piece, 1.0])
            positions.append(offset)

    for m in re_attention.finditer(text):
        tok = m.group(0)
        explicit = m.group(1)

        if tok.startswith("\\"):
            append_text(tok[1:], m.start())
        elif tok == "(":
            round_brackets.append((len(res), m.start()))
        elif tok == "[":
            square_brackets.append((len(res), m.start()))
        elif explicit is not None and round_brackets:
            value = float(explicit)
            if math.isfinite(value):
                scale_from(round_brackets.pop()[0], value)
            else:
                diags.append(Diagnostic(WARNING, m.start(), f"weight {explicit!r} overflows, kept as text"))
                append_text(tok, m.start())
        elif tok == ")" and round_brackets:
            scale_from(round_brackets.pop()[0], ROUND_BRACKET_MULTIPLIER)
        elif tok == "]" and square_brackets:
            scale_from(square_brackets.pop()[0], SQUARE_BRACKET_MULTIPLIER)
        else:
            if tok in (")", "]"):
                diags.append(Diagnostic(WARNING, m.start(), f"stray {tok!r} treated as text"))
            elif explicit is not None:
                diags.append(Diagnostic(WARNING, m.start(), f"orphan weight {tok!r} treated as text"))
            offset = m.start()
            for i, part in enumerate(re_break.split(tok)):
                if i > 0:
                    res.append(["break", "", 1.0])
                    positions.append(offset)
                append_text(part, offset)
                offset += len(part)

    for start, offset in round_brackets:
        diags.append(Diagnostic(WARNING, offset, "unclosed '(' treated as closed at end"))
        scale_from(start, ROUND_BRACKET_MULTIPLIER)
    for start, offset in square_brackets:
        diags.append(Diagnostic(WARNING, offset, "unclosed '[' treated as closed at end"))
        scale_from(start, SQUARE_BRACKET_MULTIPLIER)

    # composition of many multipliers can leave the float range; clamp so a
    # parse never emits a non-finite weight
    for rec, offset in zip(res, positions):
        if rec[0] == "text" and not math.isfinite(rec[2]):
            diags.append(Diagnostic(WARNING, offset, "weight overflow clamped"))
            if math.isnan(rec[2]):
                rec[2] = 1.0
            else:
                rec[2] = math.copysign(1.7976931348623157e308, rec[2])

    return res, positions, diags


def parse_prompt_attention(text: str) -> ParsedPrompt:
    """Parse attention markers into a list of weighted segments.

    >>> [(s.text, s.weight) for s in parse_prompt_attention("a (red:1.5) rose").segments]
    [('a ', 1.0), ('red', 1.5), (' rose', 1.0)]
    >>> [(s.text, s.weight) for s in parse_prompt_attention("((sky))").segments]
    [('sky', 1.2100000000000002)]
    >>> [(s.text, s.weight) for s in parse_prompt_attention("[dim]").segments]
    [('dim', 0.9090909090909091)]
    >>> [(s.kind, s.text) for s in parse_prompt_attention("a BREAK b").segments]
    [('text', 'a'), ('break', ''), ('text', 'b')]
    >>> [(s.text, s.weight) for s in parse_prompt_attention("(unbalanced").segments]
    [('unbalanced', 1.1)]
    >>> [(s.text, s.weight) for s in parse_prompt_attention("\\\\(literal\\\\)").segments]
    [('(literal)', 1.0)]
    >>> [(s.text, s.weight) for s in parse_prompt_attention("").segments]
    [('', 1.0)]
    """
    res, positions, _ = _scan(text)

    merged: list[Segment] = []
    merged_pos: list[int] = []
    for rec, offset in zip(res, positions):
        seg = Segment(rec[1], rec[2], rec[0]) if rec[0] == "text" else BREAK
        if merged and not seg.is_break and not merged[-1].is_break and merged[-1].weight == seg.weight:
            merged[-1] = replace(merged[-1], text=merged[-1].text + seg.text)
        else:
            merged.append(seg)
            merged_pos.append(offset)

    if not merged:
        merged = [Segment("", 1.0)]
        merged_pos = [0]

    return ParsedPrompt(segments=merged, source=text, positions=merged_pos)


def _format_weight(w: float) -> str:
    """Shortest decimal that reads back as exactly the same float."""
    s = repr(w)
    if "e" in s or "E" in s:
        s = format(Decimal(s), "f")
    return s


_escape_chars = re.compile(r"([\\()\[\]])")
_break_word = re.compile(r"\bBREAK\b")


def _escape_text(text: str) -> str:
    # escape grammar characters, then defuse standalone BREAK keywords: a
    # lone backslash is dropped by the parser, so "B\REAK" reads back as
    # the plain word BREAK without ever matching the keyword
    escaped = _escape_chars.sub(r"\\\1", text)
    return _break_word.sub(r"B\\REAK", escaped)


def serialize(prompt: ParsedPrompt | list[Segment]) -> str:
    """Render segments back into marker syntax.

    Re-parsing the output reproduces the same segment list (after adjacent
    equal-weight runs are merged again).  Breaks render as `` BREAK `` when
    both neighbours tolerate the keyword's whitespace gobbling; a neighbour
    text that itself starts or ends with whitespace would lose it to the
    keyword's ``\\s*``, so those breaks render as ``\\BREAK`` instead: the
    lone backslash vanishes at parse time but splits the token run, keeping
    the neighbour's whitespace out of the keyword's reach.
    """
    segments = prompt.segments if isinstance(prompt, ParsedPrompt) else prompt
    parts: list[str | None] = []  # None marks a break
    for seg in segments:
        if seg.is_break:
            parts.append(None)
        elif seg.weight == 1.0:
            parts.append(_escape_text(seg.text))
        else:
            parts.append(f"({_escape_text(seg.text)}:{_format_weight(seg.weight)})")

    out: list[str] = []
    for i, part in enumerate(parts):
        if part is not None:
            out.append(part)
            continue
        prev = parts[i - 1] if i > 0 else None
        nxt = parts[i + 1] if i + 1 < len(parts) else None
        prev_safe = not (isinstance(prev, str) and prev and prev[-1].isspace())
        nxt_safe = not (isinstance(nxt, str) and nxt and nxt[0].isspace())
        if prev_safe and nxt_safe:
            out.append(" BREAK ")
        else:
            out.append("\\BREAK")
            # guard against the keyword fusing with a following word
            # character or losing the neighbour's leading whitespace
            if isinstance(nxt, str) and nxt and (nxt[0].isspace() or re.match(r"\w", nxt[0])):
                out.append("\\")
    return "".join(out)


def lint(prompt: ParsedPrompt, policy: WeightPolicy | None = None) -> LintReport:
    """Check a parsed prompt for degraded syntax and out-of-policy weights.

    Structural problems (stray closers, unclosed brackets, orphan weights)
    and all weight findings are warnings; errors are reserved for input the
    parser cannot represent at all, which the current grammar never hits.
    """
    _, _, diags = _scan(prompt.source)
    diagnostics = list(diags)

    weighted = [
        (seg, pos)
        for seg, pos in zip(prompt.segments, prompt.positions or [0] * len(prompt.segments))
        if not seg.is_break and seg.weight != 1.0
    ]
    if not weighted:
        diagnostics.append(Diagnostic(WARNING, 0, "no weighted segments"))

    for seg, pos in weighted:
        if seg.weight <= 0:
            diagnostics.append(
                Diagnostic(WARNING, pos, f"non-positive weight {_format_weight(seg.weight)} on {seg.text!r}")
            )
        if policy is not None and (policy.emphasis or policy.deemphasis):
            in_emphasis = policy.emphasis is not None and policy.emphasis[0] <= seg.weight <= policy.emphasis[1]
            in_deemphasis = (
                policy.deemphasis is not None and policy.deemphasis[0] <= seg.weight <= policy.deemphasis[1]
            )
            if not (in_emphasis or in_deemphasis):
                diagnostics.append(
                    Diagnostic(
                        WARNING,
                        pos,
                        f"weight {_format_weight(seg.weight)} on {seg.text!r} outside the allowed bands",
                    )
                )

    return LintReport(diagnostics=diagnostics)


def prompt_to_json(prompt: ParsedPrompt) -> dict:
    """ParsedPrompt as a plain dict, for the CLI JSON output."""
    segments = []
    for seg in prompt.segments:
        if seg.is_break:
            segments.append({"kind": "break"})
        else:
            segments.append({"kind": "text", "text": seg.text, "weight": seg.weight})
    return {"segments": segments, "source": prompt.source}


def lint_to_json(report: LintReport) -> dict:
    return {
        "diagnostics": [
            {"severity": d.severity, "position": d.position, "message": d.message} for d in report.diagnostics
        ]
    }
