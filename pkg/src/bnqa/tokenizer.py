"""WordPiece vocabulary and question+context encoding with offset maps.

Pre-tokenization splits on whitespace and makes every punctuation character
(Unicode category P*, which includes the Bengali danda U+0964) a standalone
word. No lowercasing or accent stripping is applied: Bengali has no case, and
anything beyond NFC would corrupt character offsets.
"""

from __future__ import annotations

import hashlib
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .corpus import ContextParagraph

PAD, UNK, CLS, SEP = 0, 1, 2, 3
SPECIAL_PIECES = ("[PAD]", "[UNK]", "[CLS]", "[SEP]")

# Corpus words that literally begin with "##" are stored behind this marker so
# they cannot be mistaken for continuation pieces. U+0001 never survives
# cleaning, so the marker cannot collide with real text.
_ESCAPE = ""

BENGALI_DANDA = "।"


class VocabularyError(ValueError):
    """Raised when a vocabulary cannot be built or loaded as requested."""


class QuestionTooLongError(ValueError):
    """Raised when the question leaves no room for context tokens."""


def is_punctuation(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P") or ch == BENGALI_DANDA


def pretokenize(text: str) -> list[tuple[str, int, int]]:
    """Split into words with (start, end) code-point spans.

    Words break on whitespace; punctuation characters become standalone words.
    """
    words: list[tuple[str, int, int]] = []
    start = None
    for i, ch in enumerate(text):
        if ch.isspace():
            if start is not None:
                words.append((text[start:i], start, i))
                start = None
        elif is_punctuation(ch):
            if start is not None:
                words.append((text[start:i], start, i))
                start = None
            words.append((ch, i, i + 1))
        elif start is None:
            start = i
    if start is not None:
        words.append((text[start:], start, len(text)))
    return words


def _escape(piece: str) -> str:
    return _ESCAPE + piece if piece.startswith("##") else piece


def piece_surface(piece: str) -> str:
    """The raw characters a piece stands for (no ## prefix, no escape marker)."""
    if piece.startswith(_ESCAPE):
        return piece[len(_ESCAPE):]
    if piece.startswith("##"):
        return piece[2:]
    return piece


@dataclass(frozen=True)
class Vocabulary:
    pieces: tuple[str, ...]
    id_of: dict[str, int]

    def __len__(self) -> int:
        return len(self.pieces)

    @staticmethod
    def from_pieces(pieces: list[str] | tuple[str, ...]) -> "Vocabulary":
        pieces = tuple(pieces)
        if pieces[: len(SPECIAL_PIECES)] != SPECIAL_PIECES:
            raise VocabularyError(f"vocabulary must start with {SPECIAL_PIECES}")
        id_of = {p: i for i, p in enumerate(pieces)}
        if len(id_of) != len(pieces):
            raise VocabularyError("vocabulary contains duplicate pieces")
        return Vocabulary(pieces=pieces, id_of=id_of)

    def sha256(self) -> str:
        h = hashlib.sha256()
        for piece in self.pieces:
            h.update(piece.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()


def build_vocab(
    paragraphs: list[ContextParagraph] | list[str], max_size: int, min_freq: int = 1
) -> Vocabulary:
    """Frequency-based vocabulary over the corpus.

    Specials, then every seen character as both a plain and a "##" piece
    (guaranteeing any corpus word tokenizes without UNK), then whole words
    with frequency >= min_freq ordered by (frequency desc, lexicographic asc),
    truncated to max_size.
    """
    word_freq: Counter[str] = Counter()
    chars: set[str] = set()
    for para in paragraphs:
        text = para.text if isinstance(para, ContextParagraph) else para
        for word, _, _ in pretokenize(text):
            word_freq[word] += 1
            chars.update(word)

    char_pieces = sorted(chars) + sorted("##" + c for c in chars)
    minimum = len(SPECIAL_PIECES) + len(char_pieces)
    if max_size < minimum:
        raise VocabularyError(
            f"max_size {max_size} too small: specials plus character pieces need {minimum}"
        )

    pieces = list(SPECIAL_PIECES) + char_pieces
    taken = set(pieces)
    candidates = sorted(word_freq.items(), key=lambda kv: (-kv[1], kv[0]))
    for word, freq in candidates:
        if len(pieces) >= max_size:
            break
        if freq < min_freq:
            continue
        piece = _escape(word)
        if piece not in taken:
            pieces.append(piece)
            taken.add(piece)
    return Vocabulary.from_pieces(pieces)


def wordpiece(word: str, vocab: Vocabulary) -> list[int]:
    """Greedy longest-match-first decomposition; [UNK] alone when impossible."""
    if not word or any(ch.isspace() for ch in word):
        raise ValueError(f"wordpiece requires a nonempty whitespace-free word, got {word!r}")
    ids: list[int] = []
    start = 0
    while start < len(word):
        match = None
        for end in range(len(word), start, -1):
            cand = word[start:end]
            key = ("##" + cand) if start > 0 else _escape(cand)
            piece_id = vocab.id_of.get(key)
            if piece_id is not None:
                match = (piece_id, end)
                break
        if match is None:
            return [UNK]
        ids.append(match[0])
        start = match[1]
    return ids


@dataclass(frozen=True)
class Encoding:
    ids: tuple[int, ...]
    segment_ids: tuple[int, ...]
    attention_mask: tuple[int, ...]
    offsets: tuple[tuple[int, int], ...]  # (-1, -1) outside context tokens
    window_start: int  # index of the first context token in this window

    def context_positions(self) -> list[int]:
        return [p for p, off in enumerate(self.offsets) if off != (-1, -1)]


def _context_pieces(
    context_text: str, vocab: Vocabulary
) -> list[tuple[int, int, int]]:
    """Tokenize a context into (piece_id, char_start, char_end) triples."""
    out: list[tuple[int, int, int]] = []
    for word, ws, we in pretokenize(context_text):
        ids = wordpiece(word, vocab)
        if ids == [UNK]:
            out.append((UNK, ws, we))
            continue
        cursor = ws
        for piece_id in ids:
            surface = piece_surface(vocab.pieces[piece_id])
            out.append((piece_id, cursor, cursor + len(surface)))
            cursor += len(surface)
    return out


def encode_pair(
    question: str,
    context: ContextParagraph,
    vocab: Vocabulary,
    max_len: int = 128,
    doc_stride: int = 64,
) -> list[Encoding]:
    """Pack [CLS] question [SEP] context-window [SEP] into fixed-length windows.

    Windows start at multiples of doc_stride and stop once one reaches the
    last context token, so every context token appears in at least one window.
    """
    if doc_stride < 1:
        raise ValueError(f"doc_stride must be >= 1, got {doc_stride}")
    q_ids: list[int] = []
    for word, _, _ in pretokenize(question):
        q_ids.extend(wordpiece(word, vocab))
    cap = max_len - len(q_ids) - 3
    if cap < 1:
        raise QuestionTooLongError(
            f"question of {len(q_ids)} tokens leaves no context room at max_len {max_len}"
        )
    ctx = _context_pieces(context.text, vocab)
    n = len(ctx)
    if n > cap and doc_stride > cap:
        raise ValueError(
            f"doc_stride {doc_stride} exceeds window capacity {cap}; context tokens would be skipped"
        )

    encodings: list[Encoding] = []
    start = 0
    while True:
        end = min(start + cap, n)
        window = ctx[start:end]
        ids = [CLS] + q_ids + [SEP] + [pid for pid, _, _ in window] + [SEP]
        segs = [0] * (len(q_ids) + 2) + [1] * (len(window) + 1)
        offs = [(-1, -1)] * (len(q_ids) + 2) + [(cs, ce) for _, cs, ce in window] + [(-1, -1)]
        n_real = len(ids)
        pad = max_len - n_real
        encodings.append(
            Encoding(
                ids=tuple(ids + [PAD] * pad),
                segment_ids=tuple(segs + [0] * pad),
                attention_mask=tuple([1] * n_real + [0] * pad),
                offsets=tuple(offs + [(-1, -1)] * pad),
                window_start=start,
            )
        )
        if end >= n:
            break
        start += doc_stride
    return encodings


def char_span_to_token_span(
    enc: Encoding, char_start: int, char_end: int
) -> tuple[int, int] | None:
    """Smallest token range whose character hull contains [char_start, char_end).

    Returns positions into the encoding, or None when the span is not fully
    inside this window's context tokens.
    """
    if char_start >= char_end:
        raise ValueError(f"empty character span ({char_start}, {char_end})")
    token_start = None
    token_end = None
    for p, (cs, ce) in enumerate(enc.offsets):
        if (cs, ce) == (-1, -1):
            continue
        if cs <= char_start:
            token_start = p
        if ce >= char_end and token_end is None:
            token_end = p
    if token_start is None or token_end is None or token_end < token_start:
        return None
    return token_start, token_end


# ---------------------------------------------------------------------------
# vocabulary file (one piece per line, line number = id)
# ---------------------------------------------------------------------------


def save_vocab(vocab: Vocabulary, path: str | Path) -> None:
    Path(path).write_text("\n".join(vocab.pieces) + "\n", encoding="utf-8")


def load_vocab(path: str | Path) -> Vocabulary:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return Vocabulary.from_pieces(lines)
