"""Weighting a poem: chat-completion client, validation, offline fallback.

A weighter takes a plain poem and returns the same poem with attention
markers on the visually important words.  The primary path sends one of
four fixed instruction templates plus the poem to a chat-completion
endpoint.  Because model output is not trustworthy, every response goes
through :func:`validate_response`, which checks that the poem text survived
and that weights stay inside the template's allowed bands.

For offline use :func:`rule_based_weighter` wraps lexicon words in place;
its output is valid by construction.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable

import requests

from .grammar import ParsedPrompt, WeightPolicy, _escape_text, parse_prompt_attention, _scan

API_KEY_ENV = "WPM_LLM_API_KEY"

EMPHASIS_WEIGHT = 1.6
DEEMPHASIS_WEIGHT = 0.8

_BAND_POLICY = WeightPolicy(emphasis=(1.5, 1.8), deemphasis=(0.7, 0.9))

# template 3 gives the model no numeric guidance, so nothing to check
TEMPLATE_POLICIES: dict[int, WeightPolicy] = {
    1: _BAND_POLICY,
    2: _BAND_POLICY,
    3: WeightPolicy(),
    4: _BAND_POLICY,
}


class TransportError(Exception):
    """A chat-completion request failed after all retries."""


class AuthenticationError(TransportError):
    """The endpoint rejected the credentials; retrying cannot help."""


class EmptyCompletionError(Exception):
    """The model returned an empty or whitespace-only completion."""


@dataclass(frozen=True)
class WeighterTemplate:
    template_id: int
    instruction: str
    policy: WeightPolicy


@lru_cache(maxsize=None)
def load_template(template_id: int) -> WeighterTemplate:
    if template_id not in TEMPLATE_POLICIES:
        raise ValueError(f"unknown template id {template_id}, expected one of {sorted(TEMPLATE_POLICIES)}")
    text = (
        resources.files("promptweight")
        .joinpath(f"data/templates/template_{template_id}.txt")
        .read_text(encoding="utf-8")
    )
    return WeighterTemplate(
        template_id=template_id,
        instruction=text,
        policy=TEMPLATE_POLICIES[template_id],
    )


@dataclass
class WeighterRequest:
    poem: str
    template_id: int
    model_name: str = "gpt-4"
    temperature: float = 0.2
    max_tokens: int = 1024

    @property
    def payload(self) -> str:
        """Instruction text and poem, joined by a single newline."""
        return load_template(self.template_id).instruction + "\n" + self.poem


def build_request(
    poem: str,
    template_id: int,
    model_name: str = "gpt-4",
    temperature: float = 0.2,
    max_tokens: int = 1024,
) -> WeighterRequest:
    if not poem.strip():
        raise ValueError("poem must not be empty")
    load_template(template_id)  # validates the id
    return WeighterRequest(
        poem=poem,
        template_id=template_id,
        model_name=model_name,
        temperature=temperature,
        max_tokens=max_tokens,
    )


def _http_transport(url: str, headers: dict, body: dict) -> tuple[int, dict]:
    response = requests.post(url, headers=headers, json=body, timeout=60)
    try:
        data = response.json()
    except ValueError:
        data = {}
    return response.status_code, data


def payload_hash(payload: str) -> str:
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ReplayTransport:
    """Offline transport replaying recorded responses from fixture files.

    Each fixture is a JSON file {"request_hash": ..., "response": ...}; the
    hash is the sha256 of the request payload string.  Unmatched requests
    raise TransportError like a dead endpoint would.
    """

    def __init__(self, fixture_dir: str | Path):
        self.fixtures: dict[str, str] = {}
        for path in sorted(Path(fixture_dir).glob("*.json")):
            record = json.loads(path.read_text(encoding="utf-8"))
            self.fixtures[record["request_hash"]] = record["response"]

    def __call__(self, url: str, headers: dict, body: dict) -> tuple[int, dict]:
        content = body["messages"][0]["content"]
        digest = payload_hash(content)
        if digest not in self.fixtures:
            raise TransportError(f"no fixture recorded for request hash {digest}")
        return 200, {"choices": [{"message": {"content": self.fixtures[digest]}}]}


def request_weighting(
    request: WeighterRequest,
    endpoint: str,
    api_key: str | None = None,
    transport: Callable[[str, dict, dict], tuple[int, dict]] | None = None,
    max_attempts: int = 3,
    backoff: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """Send one weighting request and return the completion text verbatim.

    Connection failures, timeouts, 429 and 5xx responses are retried up to
    max_attempts with exponential backoff.  Credential rejections raise
    AuthenticationError immediately; other 4xx responses raise
    TransportError without retry since resending the same request cannot
    change the outcome.  The response text is not modified in any way.
    """
    if transport is None:
        transport = _http_transport
    if api_key is None:
        api_key = os.environ.get(API_KEY_ENV)

    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    body = {
        "model": request.model_name,
        "messages": [{"role": "user", "content": request.payload}],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    }

    last_error: Exception | None = None
    for attempt in range(1, max_attempts + 1):
        try:
            status, data = transport(endpoint, headers, body)
        except (requests.ConnectionError, requests.Timeout, OSError) as exc:
            last_error = exc
        else:
            if status in (401, 403):
                raise AuthenticationError(f"endpoint rejected credentials (HTTP {status})")
            if status == 429 or status >= 500:
                last_error = TransportError(f"HTTP {status} from endpoint")
            elif status != 200:
                raise TransportError(f"HTTP {status} from endpoint")
            else:
                try:
                    content = data["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError):
                    raise TransportError(f"malformed completion payload: {data!r}") from None
                if not content.strip():
                    raise EmptyCompletionError("model returned an empty completion")
                return content
        if attempt < max_attempts:
            sleep(backoff * 2 ** (attempt - 1))
    raise TransportError(f"request failed after {max_attempts} attempts: {last_error}")


@dataclass
class ValidationReport:
    parse_ok: bool
    structure_preserved: bool
    range_warnings: list[str] = field(default_factory=list)
    weighted_word_count: int = 0


def _word_cores(text: str, weight_flags: list[bool] | None = None) -> list[tuple[str, bool]]:
    """Whitespace-split words reduced to their alphanumeric core.

    Returns (core, weighted) pairs; punctuation-only words are dropped.
    The optional flags list marks each character as belonging to a weighted
    segment so a word can be tagged weighted when its core overlaps one.
    """
    cores = []
    for m in re.finditer(r"\S+", text):
        word = m.group()
        start, end = 0, len(word)
        while start < end and not word[start].isalnum():
            start += 1
        while end > start and not word[end - 1].isalnum():
            end -= 1
        if start == end:
            continue
        weighted = False
        if weight_flags is not None:
            weighted = any(weight_flags[m.start() + start : m.start() + end])
        cores.append((word[start:end], weighted))
    return cores


def _structure_preserved(poem: str, parsed: ParsedPrompt) -> bool:
    """True when the response wording matches the poem word for word.

    Weighted words may additionally appear as duplicated annotations (a
    common model habit: repeating the weighted word at the end of a line),
    so extra occurrences are allowed if and only if they are weighted.
    Comparison is case-sensitive on alphanumeric word cores, which makes it
    robust to spacing, line wrapping and dropped punctuation.
    """
    chars: list[str] = []
    flags: list[bool] = []
    for seg in parsed.segments:
        if seg.is_break:
            chars.append(" ")
            flags.append(False)
            continue
        weighted = seg.weight != 1.0
        for ch in seg.text:
            chars.append(ch)
            flags.append(weighted)

    response_words = _word_cores("".join(chars), flags)
    poem_words = [core for core, _ in _word_cores(poem)]

    n, m = len(response_words), len(poem_words)
    # feasible[i][j]: response_words[i:] can cover poem_words[j:]
    feasible = [[False] * (m + 1) for _ in range(n + 1)]
    feasible[n][m] = True
    for i in range(n - 1, -1, -1):
        core, weighted = response_words[i]
        for j in range(m, -1, -1):
            ok = False
            if j < m and core == poem_words[j]:
                ok = feasible[i + 1][j + 1]
            if not ok and weighted:
                ok = feasible[i + 1][j]
            feasible[i][j] = ok
    return feasible[0][0]


def validate_response(poem: str, response: str, policy: WeightPolicy) -> ValidationReport:
    """Check a weighted response against the original poem and weight bands."""
    parsed = parse_prompt_attention(response)
    _, _, scan_diags = _scan(response)

    weighted_segments = [s for s in parsed.segments if not s.is_break and s.weight != 1.0]

    range_warnings = []
    if policy.emphasis or policy.deemphasis:
        for seg in weighted_segments:
            in_emphasis = policy.emphasis is not None and policy.emphasis[0] <= seg.weight <= policy.emphasis[1]
            in_deemphasis = (
                policy.deemphasis is not None and policy.deemphasis[0] <= seg.weight <= policy.deemphasis[1]
            )
            if not (in_emphasis or in_deemphasis):
                range_warnings.append(f"weight {seg.weight:g} on {seg.text!r} outside the allowed bands")

    return ValidationReport(
        parse_ok=not scan_diags,
        structure_preserved=_structure_preserved(poem, parsed),
        range_warnings=range_warnings,
        weighted_word_count=len(weighted_segments),
    )


def load_lexicon(path: str | Path) -> dict[str, str]:
    """Load a word classification lexicon: {"word": "emphasize"|"deemphasize"}."""
    table = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(table, dict):
        raise ValueError(f"lexicon {path} must be a JSON object")
    lexicon = {}
    for word, action in table.items():
        if action not in ("emphasize", "deemphasize"):
            raise ValueError(f"lexicon entry {word!r} has unknown action {action!r}")
        lexicon[word.lower()] = action
    return lexicon


def default_lexicon() -> dict[str, str]:
    with resources.as_file(
        resources.files("promptweight").joinpath("data/lexicons/nursery.json")
    ) as path:
        return load_lexicon(path)


_word_run = re.compile(r"[^\W_]+", re.UNICODE)


def rule_based_weighter(
    poem: str,
    lexicon: dict[str, str],
    emphasis_weight: float = EMPHASIS_WEIGHT,
    deemphasis_weight: float = DEEMPHASIS_WEIGHT,
) -> str:
    """Wrap lexicon words in place: (word:1.6) or (word:0.8).

    Everything between word runs is escaped, so the output always parses
    and always preserves the poem structure.
    """
    out = []
    last = 0
    for m in _word_run.finditer(poem):
        out.append(_escape_text(poem[last : m.start()]))
        word = m.group()
        action = lexicon.get(word.lower())
        if action == "emphasize":
            out.append(f"({_escape_text(word)}:{emphasis_weight:g})")
        elif action == "deemphasize":
            out.append(f"({_escape_text(word)}:{deemphasis_weight:g})")
        else:
            out.append(_escape_text(word))
        last = m.end()
    out.append(_escape_text(poem[last:]))
    return "".join(out)
