"""Turn chunked prompts into weighted text-encoder embeddings.

An encoder maps one block to a hidden-state matrix of shape
(context_length, feature_dims) plus a pooled vector.  Token weights scale
the hidden rows; with mean normalization the scaled matrix is rescaled so
its global mean matches the unweighted one, which keeps overall activation
magnitude stable while shifting relative emphasis.  Multiple encoders are
concatenated on the feature axis, consecutive blocks on the sequence axis.

The module also defines the WPME binary format for persisting embedding
matrices: magic ``WPME``, one version byte (0x01), three little-endian
uint32 fields (rows, cols, reserved zero), then rows*cols float32 values in
row-major order.  A JSON sidecar carries the pooled vector and metadata.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence, runtime_checkable

import numpy as np

from .chunking import ChunkBlock, group_tokens_and_weights, pair_with_negative
from .grammar import parse_prompt_attention
from .tokenizer import Vocabulary, default_vocabulary, get_prompts_tokens_with_weights

WPME_MAGIC = b"WPME"
WPME_VERSION = 1


class ConditioningError(Exception):
    """Raised when encoder outputs cannot be assembled into one conditioning."""


@dataclass
class EncodedBlock:
    hidden: np.ndarray  # (context_length, feature_dims) float32
    pooled: np.ndarray  # (feature_dims_pooled,) float32


@runtime_checkable
class TextEncoder(Protocol):
    feature_dims: int
    feature_dims_pooled: int

    def encode(self, block: ChunkBlock, clip_skip: int = 0) -> EncodedBlock: ...


class MockEncoder:
    """Deterministic stand-in for a text encoder.

    Every hidden row is a pure function of (seed, token id, position,
    selected layer), so identical blocks encode identically across runs and
    platforms.  clip_skip walks backwards from the last layer and clamps at
    layer zero.  The pooled vector is the hidden row at the first end-marker
    position, identified as the first occurrence of the block's terminal id.
    """

    def __init__(self, seed: int, feature_dims: int = 64, layer_count: int = 4):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        if layer_count < 1:
            raise ValueError("layer_count must be at least 1")
        self.seed = seed
        self.feature_dims = feature_dims
        self.feature_dims_pooled = feature_dims
        self.layer_count = layer_count

    def encode(self, block: ChunkBlock, clip_skip: int = 0) -> EncodedBlock:
        if clip_skip < 0:
            raise ValueError("clip_skip must be non-negative")
        layer = max(self.layer_count - 1 - clip_skip, 0)
        hidden = np.empty((len(block.ids), self.feature_dims), dtype=np.float32)
        for position, token_id in enumerate(block.ids):
            seq = np.random.SeedSequence([self.seed, token_id, position, layer])
            hidden[position] = np.random.Generator(np.random.PCG64(seq)).random(
                self.feature_dims, dtype=np.float32
            )
        pooled = hidden[block.ids.index(block.ids[-1])].copy()
        return EncodedBlock(hidden=hidden, pooled=pooled)


def make_mock_encoder(seed: int, feature_dims: int = 64, layer_count: int = 4) -> MockEncoder:
    return MockEncoder(seed=seed, feature_dims=feature_dims, layer_count=layer_count)


def apply_token_weights(hidden: np.ndarray, weights: Sequence[float], mean_norm: bool = True) -> np.ndarray:
    """Scale each hidden row by its token weight.

    With mean_norm the result is rescaled so its global mean equals the
    unweighted mean (skipped when the scaled mean is closer than 1e-12 to
    zero, where the ratio would blow up).  All-ones weights return the
    hidden matrix values bit for bit.
    """
    hidden = np.asarray(hidden, dtype=np.float32)
    w = np.asarray(list(weights), dtype=np.float32)
    if hidden.ndim != 2 or w.shape[0] != hidden.shape[0]:
        raise ValueError(f"weights length {w.shape[0]} does not match hidden rows {hidden.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("token weights must be finite")

    scaled = hidden * w[:, None]
    if mean_norm:
        # float64 accumulation keeps the ratio stable for large matrices
        mean_before = float(hidden.mean(dtype=np.float64))
        mean_after = float(scaled.mean(dtype=np.float64))
        if abs(mean_after) >= 1e-12:
            scaled = scaled * (mean_before / mean_after)
    return scaled.astype(np.float32, copy=False)


@dataclass
class ConditioningOutput:
    prompt_embeds: np.ndarray
    neg_prompt_embeds: np.ndarray
    pooled_prompt_embeds: np.ndarray
    neg_pooled_prompt_embeds: np.ndarray
    lora_scale: float
    clip_skip: int


def _encoder_vocab(encoder: TextEncoder, fallback: Vocabulary) -> Vocabulary:
    return getattr(encoder, "vocabulary", None) or fallback


def get_weighted_text_embeddings(
    encoders: Sequence[TextEncoder],
    prompt: str,
    neg_prompt: str = "",
    *,
    prompt_2: str | None = None,
    neg_prompt_2: str | None = None,
    vocab: Vocabulary | None = None,
    clip_skip: int = 0,
    mean_norm: bool = True,
    honor_breaks: bool = True,
    lora_scale: float = 1.0,
    textual_inversion_hook: Callable[[str], str] | None = None,
) -> ConditioningOutput:
    """Compile positive and negative prompts into conditioning tensors.

    A second prompt, when given, is joined to the first with a single space
    before parsing.  Both streams are end-marker padded to a common block
    layout (blocks here are always fully padded; ragged blocks cannot be
    concatenated).  Per block and per encoder the hidden states are token
    weighted, encoders concatenate on the feature axis and blocks on the
    sequence axis.  The pooled vectors come from the last encoder on the
    first block, untouched by token weights.  lora_scale is carried into
    the output metadata unchanged.
    """
    if not encoders:
        raise ConditioningError("at least one encoder is required")

    full_prompt = prompt if prompt_2 is None else f"{prompt} {prompt_2}"
    full_neg = neg_prompt if neg_prompt_2 is None else f"{neg_prompt} {neg_prompt_2}"
    if textual_inversion_hook is not None:
        full_prompt = textual_inversion_hook(full_prompt)
        full_neg = textual_inversion_hook(full_neg)

    parsed_prompt = parse_prompt_attention(full_prompt)
    parsed_neg = parse_prompt_attention(full_neg)

    fallback = vocab if vocab is not None else default_vocabulary()

    # encoders may carry their own vocabulary; tokenize once per distinct one
    chunked_by_vocab: dict[int, tuple] = {}
    for encoder in encoders:
        enc_vocab = _encoder_vocab(encoder, fallback)
        key = id(enc_vocab)
        if key in chunked_by_vocab:
            continue
        tokens_pos = get_prompts_tokens_with_weights(enc_vocab, parsed_prompt)
        tokens_neg = get_prompts_tokens_with_weights(enc_vocab, parsed_neg)
        tokens_pos, tokens_neg = pair_with_negative(tokens_pos, tokens_neg, enc_vocab)
        chunked_by_vocab[key] = (
            group_tokens_and_weights(tokens_pos, True, enc_vocab, honor_breaks=honor_breaks),
            group_tokens_and_weights(tokens_neg, True, enc_vocab, honor_breaks=honor_breaks),
        )

    block_counts = {len(pos.blocks) for pos, _ in chunked_by_vocab.values()}
    if len(block_counts) != 1:
        raise ConditioningError(f"encoders disagree on block count: {sorted(block_counts)}")
    n_blocks = block_counts.pop()

    def assemble(which: int) -> tuple[np.ndarray, np.ndarray]:
        rows = []
        pooled = None
        for block_index in range(n_blocks):
            features = []
            for encoder in encoders:
                chunked = chunked_by_vocab[id(_encoder_vocab(encoder, fallback))][which]
                block = chunked.blocks[block_index]
                out = encoder.encode(block, clip_skip)
                hidden = np.asarray(out.hidden, dtype=np.float32)
                if hidden.shape != (len(block.ids), encoder.feature_dims):
                    raise ConditioningError(
                        f"encoder returned hidden shape {hidden.shape}, "
                        f"expected {(len(block.ids), encoder.feature_dims)}"
                    )
                features.append(apply_token_weights(hidden, block.weights, mean_norm))
                if block_index == 0 and encoder is encoders[-1]:
                    pooled = np.asarray(out.pooled, dtype=np.float32)
                    if pooled.shape != (encoder.feature_dims_pooled,):
                        raise ConditioningError(
                            f"encoder returned pooled shape {pooled.shape}, "
                            f"expected {(encoder.feature_dims_pooled,)}"
                        )
            rows.append(np.concatenate(features, axis=1))
        return np.concatenate(rows, axis=0), pooled

    prompt_embeds, pooled_prompt = assemble(0)
    neg_prompt_embeds, neg_pooled = assemble(1)

    return ConditioningOutput(
        prompt_embeds=prompt_embeds,
        neg_prompt_embeds=neg_prompt_embeds,
        pooled_prompt_embeds=pooled_prompt,
        neg_pooled_prompt_embeds=neg_pooled,
        lora_scale=lora_scale,
        clip_skip=clip_skip,
    )


def write_wpme(path: str | Path, matrix: np.ndarray) -> None:
    """Write a 2-D float32 matrix in the WPME binary layout."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise ValueError(f"WPME stores 2-D matrices, got shape {matrix.shape}")
    rows, cols = matrix.shape
    with open(path, "wb") as f:
        f.write(WPME_MAGIC)
        f.write(bytes([WPME_VERSION]))
        f.write(struct.pack("<III", rows, cols, 0))
        f.write(matrix.astype("<f4", copy=False).tobytes())


def read_wpme(path: str | Path) -> np.ndarray:
    """Read a WPME file back into a float32 matrix, validating the header."""
    blob = Path(path).read_bytes()
    if len(blob) < 17 or blob[:4] != WPME_MAGIC:
        raise ValueError(f"{path} is not a WPME file")
    version = blob[4]
    if version != WPME_VERSION:
        raise ValueError(f"unsupported WPME version {version}")
    rows, cols, reserved = struct.unpack("<III", blob[5:17])
    if reserved != 0:
        raise ValueError("reserved WPME header field must be zero")
    expected = 17 + rows * cols * 4
    if len(blob) != expected:
        raise ValueError(f"WPME payload size {len(blob)} does not match header ({expected})")
    data = np.frombuffer(blob, dtype="<f4", offset=17)
    return data.reshape(rows, cols).astype(np.float32, copy=True)


def write_sidecar(path: str | Path, pooled: np.ndarray, lora_scale: float, clip_skip: int) -> None:
    """Write the JSON sidecar carrying the pooled vector and metadata."""
    payload = {
        "pooled": [float(x) for x in np.asarray(pooled, dtype=np.float32)],
        "lora_scale": float(lora_scale),
        "clip_skip": int(clip_skip),
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")
