"""Answer extraction: decode the best legal span and map it back to characters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .corpus import ContextParagraph
from .model import ModelConfig, ModelWeights, forward
from .tokenizer import Encoding, Vocabulary, encode_pair

DEFAULT_MAX_ANSWER_TOKENS = 30


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class Prediction:
    text: str
    char_start: int
    char_end: int
    score: float
    window_index: int


def decode_span(
    start_logits, end_logits, legal_mask, max_answer_tokens: int
) -> tuple[int, int, float]:
    """Best (start, end) pair with start <= end < start + max_answer_tokens.

    Both endpoints must be legal. Score is start_logit + end_logit; ties go to
    the smaller start, then the smaller end.
    """
    start_logits = np.asarray(start_logits, dtype=np.float64)
    end_logits = np.asarray(end_logits, dtype=np.float64)
    legal = np.asarray(legal_mask, dtype=bool)
    if not (len(start_logits) == len(end_logits) == len(legal)):
        raise DecodeError("decode_span inputs must share one length")
    if max_answer_tokens < 1:
        raise DecodeError(f"max_answer_tokens must be >= 1, got {max_answer_tokens}")
    if not legal.any():
        raise DecodeError("no legal position to decode from")
    best = None
    positions = np.flatnonzero(legal)
    for s in positions:
        limit = s + max_answer_tokens
        for e in positions[(positions >= s) & (positions < limit)]:
            score = start_logits[s] + end_logits[e]
            if best is None or score > best[2]:
                best = (int(s), int(e), float(score))
    return best


def _window_candidates(
    enc: Encoding,
    start_row: np.ndarray,
    end_row: np.ndarray,
    max_answer_tokens: int,
    k: int,
) -> list[tuple[int, int, float]]:
    """Top-k legal (start, end, score) pairs within one window."""
    positions = enc.context_positions()
    candidates = []
    for i, s in enumerate(positions):
        for e in positions[i:]:
            if e - s >= max_answer_tokens:
                break
            candidates.append((s, e, float(start_row[s] + end_row[e])))
    candidates.sort(key=lambda c: (-c[2], c[0], c[1]))
    return candidates[:k]


def predict_with_logits(
    weights: ModelWeights,
    config: ModelConfig,
    vocab: Vocabulary,
    context: ContextParagraph,
    question: str,
    k: int = 1,
    max_answer_tokens: int = DEFAULT_MAX_ANSWER_TOKENS,
    max_len: int = 128,
    doc_stride: int = 64,
) -> tuple[list[Prediction], list[Encoding], np.ndarray, np.ndarray]:
    """predict() plus the encodings and raw logits, for metric computations."""
    if k < 1:
        raise DecodeError(f"k must be >= 1, got {k}")
    encodings = encode_pair(question, context, vocab, max_len, doc_stride)
    with ad.no_grad():
        start_logits, end_logits = forward(weights, config, encodings, training=False)
    start, end = start_logits.data, end_logits.data

    best_by_span: dict[tuple[int, int], tuple[float, int]] = {}
    for w, enc in enumerate(encodings):
        for s, e, score in _window_candidates(enc, start[w], end[w], max_answer_tokens, k):
            char_span = (enc.offsets[s][0], enc.offsets[e][1])
            prior = best_by_span.get(char_span)
            if prior is None or score > prior[0]:
                best_by_span[char_span] = (score, w)
    ranked = sorted(
        ((span, score, w) for span, (score, w) in best_by_span.items()),
        key=lambda item: (-item[1], item[0][0], item[0][1]),
    )[:k]
    predictions = [
        Prediction(
            text=context.text[cs:ce],
            char_start=cs,
            char_end=ce,
            score=score,
            window_index=w,
        )
        for (cs, ce), score, w in ranked
    ]
    return predictions, encodings, start, end


def predict(
    weights: ModelWeights,
    config: ModelConfig,
    vocab: Vocabulary,
    context: ContextParagraph,
    question: str,
    k: int = 1,
    max_answer_tokens: int = DEFAULT_MAX_ANSWER_TOKENS,
    max_len: int = 128,
    doc_stride: int = 64,
) -> list[Prediction]:
    """Ranked answers for a question against one context; dropout disabled.

    Candidates from all windows are pooled by raw score; identical character
    spans are deduplicated keeping the best-scoring window.
    """
    predictions, _, _, _ = predict_with_logits(
        weights, config, vocab, context, question, k, max_answer_tokens, max_len, doc_stride
    )
    return predictions
