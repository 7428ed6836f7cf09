"""Span-supervised fine-tuning: loss, AdamW with decoupled decay, checkpoints.

The training trajectory is a pure function of the seed: epoch shuffles derive
from (seed, epoch), dropout masks from (seed, step), so a reloaded checkpoint
continues bit-identically.
"""

from __future__ import annotations

import dataclasses
import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import QaDataset
from .model import (
    ModelConfig,
    ModelWeights,
    forward,
    init_weights,
    is_no_decay_param,
    parameter_shapes,
)
from .tokenizer import Encoding, Vocabulary, char_span_to_token_span, encode_pair

CHECKPOINT_MAGIC = b"BQA1"
WEIGHTS_FILE = "weights.bin"
MANIFEST_FILE = "manifest.json"


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-5
    batch_size: int = 16
    epochs: int = 3
    dropout_rate: float = 0.1
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip_norm: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("learning_rate and batch_size must be positive")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.weight_decay < 0 or self.eps <= 0 or self.grad_clip_norm <= 0:
            raise ValueError("weight_decay, eps and grad_clip_norm must be positive")

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_json(raw: dict) -> "TrainConfig":
        return TrainConfig(**raw)


@dataclass(frozen=True)
class TrainingExample:
    encoding: Encoding
    token_start: int | None  # None marks a window that lacks the gold span
    token_end: int | None
    qa_id: str

    @property
    def has_answer(self) -> bool:
        return self.token_start is not None


@dataclass
class BuildResult:
    examples: list[TrainingExample]
    skipped: list[tuple[str, str]]  # (qa_id, reason)


def build_examples(
    ds: QaDataset, vocab: Vocabulary, max_len: int = 128, doc_stride: int = 64
) -> BuildResult:
    """One training example per window containing the gold span.

    The first listed answer supervises training. Windows without the answer
    are dropped; a question whose answer maps into no window is skipped and
    reported.
    """
    examples: list[TrainingExample] = []
    skipped: list[tuple[str, str]] = []
    for paragraph, qa in ds.iter_qas():
        context = paragraph.context
        answer = qa.answers[0] if qa.answers else None
        if answer is None or not answer.text:
            skipped.append((qa.id, "no usable answer text"))
            continue
        char_start = answer.answer_start
        char_end = char_start + len(answer.text)
        if context.text[char_start:char_end] != answer.text:
            skipped.append((qa.id, "answer text does not match context at its offset"))
            continue
        found = False
        for enc in encode_pair(qa.question, context, vocab, max_len, doc_stride):
            span = char_span_to_token_span(enc, char_start, char_end)
            if span is None:
                continue
            examples.append(TrainingExample(enc, span[0], span[1], qa.id))
            found = True
        if not found:
            skipped.append((qa.id, "answer not recoverable in any window"))
    return BuildResult(examples, skipped)


def qa_loss(start_logits: Tensor, end_logits: Tensor, spans: list[tuple[int, int]]) -> Tensor:
    """Mean over the batch of half the summed start/end cross-entropies."""
    n = start_logits.shape[0]
    if len(spans) != n:
        raise ad.ShapeError(f"got {len(spans)} gold spans for a batch of {n}")
    starts = np.array([s for s, _ in spans], dtype=np.intp)
    ends = np.array([e for _, e in spans], dtype=np.intp)
    ce_start = ad.cross_entropy(start_logits, starts)
    ce_end = ad.cross_entropy(end_logits, ends)
    return ad.scale(ad.add(ad.tsum(ce_start), ad.tsum(ce_end)), 0.5 / n)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass
class AdamMoments:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @staticmethod
    def zeros_like(weights: ModelWeights) -> "AdamMoments":
        return AdamMoments(
            m={name: np.zeros_like(t.data) for name, t in weights.named()},
            v={name: np.zeros_like(t.data) for name, t in weights.named()},
        )


def global_grad_norm(weights: ModelWeights) -> float:
    total = 0.0
    for _, t in weights.named():
        if t.grad is not None:
            total += float((t.grad * t.grad).sum())
    return float(np.sqrt(total))


def clip_gradients(weights: ModelWeights, max_norm: float) -> float:
    """Scale all gradients so their global norm is at most max_norm."""
    norm = global_grad_norm(weights)
    if norm > max_norm:
        factor = max_norm / norm
        for _, t in weights.named():
            if t.grad is not None:
                t.grad *= factor
    return norm


def adamw_step(
    weights: ModelWeights, moments: AdamMoments, config: TrainConfig, step: int
) -> None:
    """One decoupled-weight-decay Adam update. ``step`` is 1-based.

    theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + lambda * theta);
    decay skips layer-norm gains/biases and every bias vector.
    """
    bc1 = 1.0 - config.beta1**step
    bc2 = 1.0 - config.beta2**step
    for name, t in weights.named():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        m = moments.m[name]
        v = moments.v[name]
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + config.eps)
        if config.weight_decay and not is_no_decay_param(name):
            update = update + config.weight_decay * t.data
        t.data -= config.learning_rate * update


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def _write_tensor(f, name: str, array: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    f.write(struct.pack("<I", len(encoded)))
    f.write(encoded)
    f.write(struct.pack("<I", array.ndim))
    for dim in array.shape:
        f.write(struct.pack("<Q", dim))
    f.write(np.ascontiguousarray(array, dtype="<f8").tobytes())


def _read_tensor(buf: memoryview, pos: int) -> tuple[str, np.ndarray, int]:
    (name_len,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    name = bytes(buf[pos : pos + name_len]).decode("utf-8")
    pos += name_len
    (rank,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    shape = []
    for _ in range(rank):
        (dim,) = struct.unpack_from("<Q", buf, pos)
        shape.append(dim)
        pos += 8
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).reshape(shape)
    pos += count * 8
    return name, np.array(data, dtype=np.float64), pos


@dataclass
class Checkpoint:
    model_config: ModelConfig
    train_config: TrainConfig
    vocab_sha256: str
    weights: ModelWeights
    moments: AdamMoments
    step: int
    epoch: int
    batch_index: int


def save_checkpoint(
    directory: str | Path,
    weights: ModelWeights,
    moments: AdamMoments,
    model_config: ModelConfig,
    train_config: TrainConfig,
    vocab_sha256: str,
    step: int,
    epoch: int,
    batch_index: int,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    order = list(parameter_shapes(model_config))
    names = order + [f"opt.m.{n}" for n in order] + [f"opt.v.{n}" for n in order]
    with open(directory / WEIGHTS_FILE, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        for name in order:
            _write_tensor(f, name, weights[name].data)
        for name in order:
            _write_tensor(f, f"opt.m.{name}", moments.m[name])
        for name in order:
            _write_tensor(f, f"opt.v.{name}", moments.v[name])
    manifest = {
        "format": CHECKPOINT_MAGIC.decode("ascii"),
        "model_config": model_config.to_json(),
        "train_config": train_config.to_json(),
        "vocab_sha256": vocab_sha256,
        "step": step,
        "epoch": epoch,
        "batch_index": batch_index,
        "tensors": [{"name": n, "shape": list(weights[n].data.shape)} for n in order],
        "entries": names,
    }
    (directory / MANIFEST_FILE).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return directory


def load_checkpoint(directory: str | Path) -> Checkpoint:
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST_FILE).read_text(encoding="utf-8"))
    raw = (directory / WEIGHTS_FILE).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise TrainingError(f"{directory}: bad checkpoint magic {raw[:4]!r}")
    model_config = ModelConfig.from_json(manifest["model_config"])
    train_config = TrainConfig.from_json(manifest["train_config"])
    tensors: dict[str, np.ndarray] = {}
    buf = memoryview(raw)
    pos = 4
    while pos < len(raw):
        name, data, pos = _read_tensor(buf, pos)
        tensors[name] = data
    expected = parameter_shapes(model_config)
    weights = ModelWeights(
        {name: Tensor(tensors[name], requires_grad=True) for name in expected}
    )
    for name, shape in expected.items():
        if weights[name].data.shape != shape:
            raise TrainingError(f"checkpoint tensor {name} has shape "
                                f"{weights[name].data.shape}, expected {shape}")
    moments = AdamMoments(
        m={name: tensors[f"opt.m.{name}"] for name in expected},
        v={name: tensors[f"opt.v.{name}"] for name in expected},
    )
    return Checkpoint(
        model_config=model_config,
        train_config=train_config,
        vocab_sha256=manifest["vocab_sha256"],
        weights=weights,
        moments=moments,
        step=int(manifest["step"]),
        epoch=int(manifest["epoch"]),
        batch_index=int(manifest["batch_index"]),
    )


# ---------------------------------------------------------------------------
# trainer
# ---------------------------------------------------------------------------


@dataclass
class TrainReport:
    epoch_losses: list[float]
    final_train_loss: float
    wall_time_s: float
    final_checkpoint: str
    steps: int
    skipped: list[tuple[str, str]]


class Trainer:
    """Step-level training driver with deterministic, resumable state."""

    def __init__(
        self,
        examples: list[TrainingExample],
        model_config: ModelConfig,
        train_config: TrainConfig,
        vocab_sha256: str = "",
        weights: ModelWeights | None = None,
        moments: AdamMoments | None = None,
        step: int = 0,
        epoch: int = 0,
        batch_index: int = 0,
    ):
        examples = [ex for ex in examples if ex.has_answer]
        if not examples:
            raise TrainingError("no training examples with answers")
        self.examples = examples
        # the train config owns the dropout rate used during fine-tuning
        self.model_config = dataclasses.replace(
            model_config, dropout_rate=train_config.dropout_rate
        )
        self.train_config = train_config
        self.vocab_sha256 = vocab_sha256
        self.weights = weights if weights is not None else init_weights(
            self.model_config, train_config.seed
        )
        self.moments = moments if moments is not None else AdamMoments.zeros_like(self.weights)
        self.step = step
        self.epoch = epoch
        self.batch_index = batch_index
        self._cached_epoch: int | None = None
        self._batches: list[np.ndarray] = []

    def _epoch_batches(self) -> list[np.ndarray]:
        if self._cached_epoch != self.epoch:
            rng = np.random.default_rng([self.train_config.seed, self.epoch])
            order = rng.permutation(len(self.examples))
            bs = self.train_config.batch_size
            self._batches = [order[i : i + bs] for i in range(0, len(order), bs)]
            self._cached_epoch = self.epoch
        return self._batches

    def step_once(self) -> float:
        """One optimizer step; returns the batch loss."""
        batches = self._epoch_batches()
        chosen = [self.examples[i] for i in batches[self.batch_index]]
        for _, t in self.weights.named():
            t.grad = None
        ad.clear_tape()
        start_logits, end_logits = forward(
            self.weights,
            self.model_config,
            [ex.encoding for ex in chosen],
            training=True,
            dropout_seed=self.train_config.seed,
            step=self.step,
        )
        loss = qa_loss(
            start_logits, end_logits, [(ex.token_start, ex.token_end) for ex in chosen]
        )
        ad.backward(loss)
        norm = global_grad_norm(self.weights)
        if not np.isfinite(norm):
            raise TrainingError(f"non-finite gradient at step {self.step}")
        clip_gradients(self.weights, self.train_config.grad_clip_norm)
        adamw_step(self.weights, self.moments, self.train_config, self.step + 1)
        self.step += 1
        self.batch_index += 1
        if self.batch_index >= len(batches):
            self.batch_index = 0
            self.epoch += 1
        return loss.item()

    def run_steps(self, n: int) -> list[float]:
        return [self.step_once() for _ in range(n)]

    def run_epoch(self) -> float:
        """Run to the end of the current epoch; returns the mean batch loss."""
        target = self.epoch + 1
        losses = []
        while self.epoch < target:
            losses.append(self.step_once())
        return float(np.mean(losses))

    def eval_loss(self) -> float:
        """Mean per-example loss over all examples with dropout disabled."""
        total, count = 0.0, 0
        bs = self.train_config.batch_size
        with ad.no_grad():
            for i in range(0, len(self.examples), bs):
                chunk = self.examples[i : i + bs]
                start_logits, end_logits = forward(
                    self.weights, self.model_config, [ex.encoding for ex in chunk]
                )
                loss = qa_loss(
                    start_logits, end_logits, [(ex.token_start, ex.token_end) for ex in chunk]
                )
                total += loss.item() * len(chunk)
                count += len(chunk)
        return total / count

    def save(self, directory: str | Path) -> Path:
        return save_checkpoint(
            directory,
            self.weights,
            self.moments,
            self.model_config,
            self.train_config,
            self.vocab_sha256,
            self.step,
            self.epoch,
            self.batch_index,
        )

    @staticmethod
    def resume(checkpoint: Checkpoint, examples: list[TrainingExample]) -> "Trainer":
        return Trainer(
            examples,
            checkpoint.model_config,
            checkpoint.train_config,
            vocab_sha256=checkpoint.vocab_sha256,
            weights=checkpoint.weights,
            moments=checkpoint.moments,
            step=checkpoint.step,
            epoch=checkpoint.epoch,
            batch_index=checkpoint.batch_index,
        )


def train(
    ds: QaDataset,
    vocab: Vocabulary,
    model_config: ModelConfig,
    train_config: TrainConfig,
    checkpoint_dir: str | Path,
    max_len: int = 128,
    doc_stride: int = 64,
    keep_checkpoints: int = 1,
    log_every: int = 0,
) -> TrainReport:
    """Full training run; writes a checkpoint per epoch, pruning old ones."""
    built = build_examples(ds, vocab, max_len, doc_stride)
    trainer = Trainer(built.examples, model_config, train_config, vocab_sha256=vocab.sha256())
    checkpoint_dir = Path(checkpoint_dir)
    t0 = time.perf_counter()
    epoch_losses: list[float] = []
    written: list[Path] = []
    for epoch in range(train_config.epochs):
        mean_loss = trainer.run_epoch()
        epoch_losses.append(mean_loss)
        path = trainer.save(checkpoint_dir / f"epoch-{epoch + 1:04d}")
        written.append(path)
        while len(written) > keep_checkpoints:
            stale = written.pop(0)
            for child in stale.iterdir():
                child.unlink()
            stale.rmdir()
        if log_every and (epoch + 1) % log_every == 0:
            print(f"epoch {epoch + 1}/{train_config.epochs}: loss {mean_loss:.4f}")
    return TrainReport(
        epoch_losses=epoch_losses,
        final_train_loss=trainer.eval_loss(),
        wall_time_s=time.perf_counter() - t0,
        final_checkpoint=str(written[-1]),
        steps=trainer.step,
        skipped=built.skipped,
    )
