"""Scoring: Exact Match, token F1, and perplexity over gold span probabilities.

EM and F1 are macro averages after answer normalization (NFC, whitespace
collapse, punctuation removal). No stop-word stripping is applied: the
English-style article list has no principled Bengali analogue.
"""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import QaDataset
from .inference import DEFAULT_MAX_ANSWER_TOKENS, predict_with_logits
from .model import ModelConfig, ModelWeights
from .tokenizer import Vocabulary, char_span_to_token_span, is_punctuation


def normalize_answer(text: str) -> str:
    """NFC, strip punctuation (category P* plus the danda), collapse whitespace."""
    nfc = unicodedata.normalize("NFC", text)
    no_punct = "".join(ch for ch in nfc if not is_punctuation(ch))
    return " ".join(no_punct.split())


def exact_match(pred: str, golds: list[str]) -> int:
    """1 iff the normalized prediction equals any normalized gold."""
    if not golds:
        raise ValueError("exact_match requires at least one gold answer")
    norm = normalize_answer(pred)
    return int(any(norm == normalize_answer(g) for g in golds))


def _f1_single(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def token_f1(pred: str, golds: list[str]) -> float:
    """Max over golds of the multiset-overlap token F1."""
    if not golds:
        raise ValueError("token_f1 requires at least one gold answer")
    pred_tokens = normalize_answer(pred).split()
    return max(_f1_single(pred_tokens, normalize_answer(g).split()) for g in golds)


def perplexity(event_probs: list[float]) -> float:
    """2 ** (-mean log2 P) over the event list."""
    if not event_probs:
        raise ValueError("perplexity requires at least one probability")
    for i, p in enumerate(event_probs):
        if p <= 0.0:
            raise ValueError(f"probability {p} at index {i} (perplexity would be infinite)")
        if p > 1.0:
            raise ValueError(f"probability {p} at index {i} exceeds 1")
    return float(2.0 ** (-np.mean(np.log2(event_probs))))


@dataclass
class ExampleResult:
    qa_id: str
    em: int
    f1: float
    chosen_gold: str
    predicted: str
    gold_recoverable: bool


@dataclass
class EvalReport:
    em_percent: float
    f1_percent: float
    perplexity: float | None
    n_questions: int
    per_example: list[ExampleResult]

    def to_json(self) -> dict:
        return {
            "em": self.em_percent,
            "f1": self.f1_percent,
            "perplexity": self.perplexity,
            "n": self.n_questions,
            "per_example": [
                {
                    "qa_id": r.qa_id,
                    "em": r.em,
                    "f1": r.f1,
                    "chosen_gold": r.chosen_gold,
                    "predicted": r.predicted,
                    "gold_recoverable": r.gold_recoverable,
                }
                for r in self.per_example
            ],
        }


def format_table(report: EvalReport) -> str:
    ppl = "n/a" if report.perplexity is None else f"{report.perplexity:.2f}"
    rows = [
        ("Metric", "Score"),
        ("Exact Match (EM)", f"{report.em_percent:.2f}%"),
        ("F1 Score", f"{report.f1_percent:.2f}%"),
        ("Perplexity", ppl),
    ]
    width = max(len(name) for name, _ in rows) + 2
    lines = [f"{name:<{width}}{value}" for name, value in rows]
    lines.insert(1, "-" * (width + max(len(v) for _, v in rows)))
    return "\n".join(lines)


def _softmax_row(row: np.ndarray) -> np.ndarray:
    z = row - row.max()
    e = np.exp(z)
    return e / e.sum()


def evaluate(
    weights: ModelWeights,
    config: ModelConfig,
    vocab: Vocabulary,
    eval_ds: QaDataset,
    max_answer_tokens: int = DEFAULT_MAX_ANSWER_TOKENS,
    max_len: int = 128,
    doc_stride: int = 64,
) -> EvalReport:
    """Top-1 scoring of every question; perplexity from gold-position probabilities.

    Questions whose gold span maps into no window still score their top-1
    prediction normally; they are flagged, never dropped.
    """
    results: list[ExampleResult] = []
    event_probs: list[float] = []
    for paragraph, qa in eval_ds.iter_qas():
        predictions, encodings, start_logits, end_logits = predict_with_logits(
            weights,
            config,
            vocab,
            paragraph.context,
            qa.question,
            k=1,
            max_answer_tokens=max_answer_tokens,
            max_len=max_len,
            doc_stride=doc_stride,
        )
        top = predictions[0]
        golds = [a.text for a in qa.answers]
        em = exact_match(top.text, golds)
        f1s = [
            _f1_single(normalize_answer(top.text).split(), normalize_answer(g).split())
            for g in golds
        ]
        best_gold = int(np.argmax(f1s))

        gold_recoverable = False
        first = qa.answers[0]
        span_chars = (first.answer_start, first.answer_start + len(first.text))
        if first.text:
            for w, enc in enumerate(encodings):
                span = char_span_to_token_span(enc, *span_chars)
                if span is not None:
                    event_probs.append(float(_softmax_row(start_logits[w])[span[0]]))
                    event_probs.append(float(_softmax_row(end_logits[w])[span[1]]))
                    gold_recoverable = True
                    break

        results.append(
            ExampleResult(
                qa_id=qa.id,
                em=em,
                f1=float(f1s[best_gold]),
                chosen_gold=golds[best_gold],
                predicted=top.text,
                gold_recoverable=gold_recoverable,
            )
        )

    n = len(results)
    return EvalReport(
        em_percent=100.0 * float(np.mean([r.em for r in results])) if n else 0.0,
        f1_percent=100.0 * float(np.mean([r.f1 for r in results])) if n else 0.0,
        perplexity=perplexity(event_probs) if event_probs else None,
        n_questions=n,
        per_example=results,
    )
