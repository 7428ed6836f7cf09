"""Document ingestion and the SQuAD-v1.1-style dataset model.

All context text is NFC-normalized at cleaning time; every answer offset in
the dataset counts Unicode code points into that stored NFC text.
"""

from __future__ import annotations

import json
import random
import re
import unicodedata
from dataclasses import dataclass
from html.parser import HTMLParser
from pathlib import Path

DATASET_VERSION = "1.1"

_BLANK_LINE = re.compile(r"\n\s*\n")


class DatasetFormatError(ValueError):
    """Raised when a dataset file does not have the expected JSON shape."""


class SplitError(ValueError):
    """Raised when a requested split would leave one side empty."""


@dataclass(frozen=True)
class RawDocument:
    source_id: str
    content: str
    kind: str  # "html" or "plain"


@dataclass(frozen=True)
class ContextParagraph:
    id: str
    text: str
    source_id: str


@dataclass(frozen=True)
class AnswerSpan:
    text: str
    answer_start: int  # code-point offset into the owning context


@dataclass(frozen=True)
class QaPair:
    id: str
    question: str
    answers: tuple[AnswerSpan, ...]


@dataclass(frozen=True)
class Paragraph:
    context: ContextParagraph
    qas: tuple[QaPair, ...]


@dataclass(frozen=True)
class Article:
    title: str
    paragraphs: tuple[Paragraph, ...]


@dataclass(frozen=True)
class QaDataset:
    version: str
    articles: tuple[Article, ...]

    def iter_paragraphs(self):
        for article in self.articles:
            for paragraph in article.paragraphs:
                yield article, paragraph

    def iter_qas(self):
        for _, paragraph in self.iter_paragraphs():
            for qa in paragraph.qas:
                yield paragraph, qa


@dataclass
class IngestResult:
    documents: list[RawDocument]
    errors: list[tuple[str, str]]  # (path, message)


@dataclass(frozen=True)
class ValidationError:
    item_id: str
    code: str
    message: str


@dataclass
class ValidationReport:
    errors: list[ValidationError]
    paragraphs: int
    questions: int
    answers: int

    @property
    def ok(self) -> bool:
        return not self.errors


@dataclass
class DatasetStats:
    paragraphs: int
    questions: int
    answers: int
    questions_per_paragraph_min: int
    questions_per_paragraph_mean: float
    questions_per_paragraph_max: int
    answer_length_min: int
    answer_length_mean: float
    answer_length_max: int


# ---------------------------------------------------------------------------
# ingestion and cleaning
# ---------------------------------------------------------------------------


def ingest(paths: list[str | Path]) -> IngestResult:
    """Read raw files into documents. Failures are reported per file."""
    documents: list[RawDocument] = []
    errors: list[tuple[str, str]] = []
    for p in paths:
        path = Path(p)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            errors.append((str(path), f"unreadable: {exc}"))
            continue
        try:
            content = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            errors.append((str(path), f"invalid UTF-8: {exc}"))
            continue
        kind = "html" if path.suffix.lower() in (".html", ".htm") else "plain"
        documents.append(RawDocument(source_id=path.name, content=content, kind=kind))
    return IngestResult(documents, errors)


_BLOCK_TAGS = frozenset(
    "p div section article h1 h2 h3 h4 h5 h6 li ul ol dl dt dd table tr td th "
    "blockquote pre header footer main aside nav figure figcaption br hr form".split()
)
_SKIP_TAGS = frozenset({"script", "style", "template", "noscript", "title"})


class _BlockTextExtractor(HTMLParser):
    """Collect text chunks, breaking at block-level tag boundaries."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.chunks: list[str] = []
        self._buf: list[str] = []
        self._skip_depth = 0

    def _flush(self):
        if self._buf:
            self.chunks.append("".join(self._buf))
            self._buf = []

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP_TAGS:
            self._skip_depth += 1
        elif tag in _BLOCK_TAGS:
            self._flush()

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS:
            self._skip_depth = max(0, self._skip_depth - 1)
        elif tag in _BLOCK_TAGS:
            self._flush()

    def handle_data(self, data):
        if not self._skip_depth:
            self._buf.append(data)

    def close(self):
        super().close()
        self._flush()


def _scrub(chunk: str) -> str:
    """Drop non-whitespace control characters, collapse whitespace, NFC-normalize."""
    kept = "".join(ch for ch in chunk if unicodedata.category(ch) != "Cc" or ch.isspace())
    collapsed = " ".join(kept.split())
    return unicodedata.normalize("NFC", collapsed)


def clean(doc: RawDocument) -> list[ContextParagraph]:
    """Split a document into NFC-normalized, whitespace-collapsed paragraphs."""
    text = doc.content.replace("\r\n", "\n").replace("\r", "\n")
    if doc.kind == "html":
        parser = _BlockTextExtractor()
        parser.feed(text)
        parser.close()
        chunks = parser.chunks
    else:
        chunks = _BLANK_LINE.split(text)
    paragraphs = []
    for chunk in chunks:
        scrubbed = _scrub(chunk)
        if scrubbed:
            pid = f"{doc.source_id}#p{len(paragraphs)}"
            paragraphs.append(ContextParagraph(id=pid, text=scrubbed, source_id=doc.source_id))
    return paragraphs


def make_context(text: str, context_id: str = "adhoc", source_id: str = "adhoc") -> ContextParagraph:
    """Normalize free text into a ContextParagraph (for pasted contexts)."""
    return ContextParagraph(id=context_id, text=_scrub(text), source_id=source_id)


# ---------------------------------------------------------------------------
# dataset file format
# ---------------------------------------------------------------------------


def _paragraph_id(article_index: int, paragraph_index: int) -> str:
    return f"a{article_index}-p{paragraph_index}"


def load_dataset(path: str | Path) -> QaDataset:
    """Parse a SQuAD-v1.1-shaped JSON file. Paragraph ids are positional."""
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    try:
        articles = []
        for ai, art in enumerate(raw["data"]):
            paragraphs = []
            for pi, para in enumerate(art["paragraphs"]):
                qas = []
                for qa in para["qas"]:
                    answers = tuple(
                        AnswerSpan(text=a["text"], answer_start=int(a["answer_start"]))
                        for a in qa["answers"]
                    )
                    qas.append(QaPair(id=str(qa["id"]), question=qa["question"], answers=answers))
                context = ContextParagraph(
                    id=_paragraph_id(ai, pi), text=para["context"], source_id=str(art["title"])
                )
                paragraphs.append(Paragraph(context=context, qas=tuple(qas)))
            articles.append(Article(title=str(art["title"]), paragraphs=tuple(paragraphs)))
        return QaDataset(version=str(raw["version"]), articles=tuple(articles))
    except (KeyError, TypeError) as exc:
        raise DatasetFormatError(f"{path}: malformed dataset JSON ({exc})") from exc


def dataset_to_json(ds: QaDataset) -> dict:
    return {
        "version": ds.version,
        "data": [
            {
                "title": article.title,
                "paragraphs": [
                    {
                        "context": paragraph.context.text,
                        "qas": [
                            {
                                "id": qa.id,
                                "question": qa.question,
                                "answers": [
                                    {"text": a.text, "answer_start": a.answer_start}
                                    for a in qa.answers
                                ],
                            }
                            for qa in paragraph.qas
                        ],
                    }
                    for paragraph in article.paragraphs
                ],
            }
            for article in ds.articles
        ],
    }


def save_dataset(ds: QaDataset, path: str | Path) -> None:
    """Write the canonical serialization: sorted keys, 2-space indent, UTF-8."""
    payload = json.dumps(dataset_to_json(ds), ensure_ascii=False, sort_keys=True, indent=2)
    Path(path).write_text(payload + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def validate(ds: QaDataset) -> ValidationReport:
    """Check every dataset invariant; all problems become report entries."""
    errors: list[ValidationError] = []
    seen_ids: set[str] = set()
    n_paragraphs = n_questions = n_answers = 0

    for _, paragraph in ds.iter_paragraphs():
        ctx = paragraph.context
        n_paragraphs += 1
        if not ctx.text:
            errors.append(ValidationError(ctx.id, "EMPTY_CONTEXT", "context text is empty"))
        elif not unicodedata.is_normalized("NFC", ctx.text):
            errors.append(ValidationError(ctx.id, "NOT_NFC", "context text is not NFC-normalized"))
        for qa in paragraph.qas:
            n_questions += 1
            if qa.id in seen_ids:
                errors.append(ValidationError(qa.id, "DUP_ID", f"duplicate qa id {qa.id!r}"))
            seen_ids.add(qa.id)
            if not qa.question.strip():
                errors.append(ValidationError(qa.id, "EMPTY_QUESTION", "question is empty"))
            if not qa.answers:
                errors.append(ValidationError(qa.id, "EMPTY_ANSWERS", "answers list is empty"))
            for answer in qa.answers:
                n_answers += 1
                start = answer.answer_start
                end = start + len(answer.text)
                if start < 0 or end > len(ctx.text) or ctx.text[start:end] != answer.text:
                    errors.append(
                        ValidationError(
                            qa.id,
                            "OFFSET_MISMATCH",
                            f"context[{start}:{end}] does not equal the answer text",
                        )
                    )
    return ValidationReport(errors, n_paragraphs, n_questions, n_answers)


# ---------------------------------------------------------------------------
# split and stats
# ---------------------------------------------------------------------------


def split(ds: QaDataset, eval_fraction: float, seed: int) -> tuple[QaDataset, QaDataset]:
    """Deterministic paragraph-level split; a context never lands in both halves.

    The eval side receives round(eval_fraction * paragraph_count) paragraphs,
    rounding half up.
    """
    if not 0.0 < eval_fraction < 1.0:
        raise SplitError(f"eval_fraction must be in (0, 1), got {eval_fraction}")
    total = sum(1 for _ in ds.iter_paragraphs())
    n_eval = int(total * eval_fraction + 0.5)
    if n_eval == 0 or n_eval >= total:
        raise SplitError(
            f"split of {total} paragraphs at fraction {eval_fraction} would leave an empty side"
        )
    order = list(range(total))
    random.Random(seed).shuffle(order)
    eval_indices = set(order[:n_eval])

    def rebuild(keep_eval: bool) -> QaDataset:
        articles = []
        index = 0
        for article in ds.articles:
            kept = []
            for paragraph in article.paragraphs:
                if (index in eval_indices) == keep_eval:
                    kept.append(paragraph)
                index += 1
            if kept:
                articles.append(Article(title=article.title, paragraphs=tuple(kept)))
        return QaDataset(version=ds.version, articles=tuple(articles))

    # two passes share one index walk order, so halves are disjoint by construction
    train_ds, eval_ds = rebuild(keep_eval=False), rebuild(keep_eval=True)
    return train_ds, eval_ds


def stats(ds: QaDataset) -> DatasetStats:
    per_paragraph: list[int] = []
    answer_lengths: list[int] = []
    for _, paragraph in ds.iter_paragraphs():
        per_paragraph.append(len(paragraph.qas))
        for qa in paragraph.qas:
            for answer in qa.answers:
                answer_lengths.append(len(answer.text))
    n_questions = sum(per_paragraph)

    def agg(values: list[int]) -> tuple[int, float, int]:
        if not values:
            return 0, 0.0, 0
        return min(values), sum(values) / len(values), max(values)

    q_min, q_mean, q_max = agg(per_paragraph)
    a_min, a_mean, a_max = agg(answer_lengths)
    return DatasetStats(
        paragraphs=len(per_paragraph),
        questions=n_questions,
        answers=len(answer_lengths),
        questions_per_paragraph_min=q_min,
        questions_per_paragraph_mean=q_mean,
        questions_per_paragraph_max=q_max,
        answer_length_min=a_min,
        answer_length_mean=a_mean,
        answer_length_max=a_max,
    )
