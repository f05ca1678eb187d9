"""Weighted prompt compilation for text-to-image conditioning.

Pipeline stages, each usable on its own:

  grammar       parse/serialize/lint the attention marker syntax
  tokenizer     byte-pair encoding with per-token weight expansion
  chunking      fixed-size encoder blocks with break handling
  conditioning  weighted embeddings, mock encoder, WPME persistence
  weighter      LLM or lexicon weighting of plain poems
  cli           the ``promptweight`` command
"""

from .chunking import ChunkBlock, ChunkedPrompt, group_tokens_and_weights, pair_with_negative
from .conditioning import (
    ConditioningOutput,
    EncodedBlock,
    MockEncoder,
    apply_token_weights,
    get_weighted_text_embeddings,
    make_mock_encoder,
    read_wpme,
    write_wpme,
)
from .grammar import (
    BREAK,
    LintReport,
    ParsedPrompt,
    Segment,
    WeightPolicy,
    lint,
    merge_segments,
    multiply_range,
    parse_prompt_attention,
    serialize,
)
from .tokenizer import (
    TokenizedPrompt,
    Vocabulary,
    VocabularyError,
    default_vocabulary,
    encode_text,
    get_prompts_tokens_with_weights,
    load_vocabulary,
)
from .weighter import (
    ValidationReport,
    WeighterRequest,
    WeighterTemplate,
    build_request,
    load_template,
    request_weighting,
    rule_based_weighter,
    validate_response,
)

__all__ = [
    "BREAK",
    "ChunkBlock",
    "ChunkedPrompt",
    "ConditioningOutput",
    "EncodedBlock",
    "LintReport",
    "MockEncoder",
    "ParsedPrompt",
    "Segment",
    "TokenizedPrompt",
    "ValidationReport",
    "Vocabulary",
    "VocabularyError",
    "WeightPolicy",
    "WeighterRequest",
    "WeighterTemplate",
    "apply_token_weights",
    "build_request",
    "default_vocabulary",
    "encode_text",
    "get_prompts_tokens_with_weights",
    "get_weighted_text_embeddings",
    "group_tokens_and_weights",
    "lint",
    "load_template",
    "load_vocabulary",
    "make_mock_encoder",
    "merge_segments",
    "multiply_range",
    "pair_with_negative",
    "parse_prompt_attention",
    "read_wpme",
    "request_weighting",
    "rule_based_weighter",
    "serialize",
    "validate_response",
    "write_wpme",
]

__version__ = "0.1.0"
