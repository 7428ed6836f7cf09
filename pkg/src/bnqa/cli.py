"""Command-line interface: the full pipeline from raw files to a served model.

Exit codes: 0 success, 1 operation failed, 2 usage error (argparse),
3 missing or unreadable file, 4 invalid configuration. Failures print a
single machine-parseable line `ERROR[<category>]: <detail>` to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any

from . import corpus
from . import evaluation
from . import inference
from . import tokenizer
from . import training
from .config import DEFAULTS, AppConfig, ConfigError, load_config

CATEGORY_EXIT_CODES = {"operation-failed": 1, "missing-file": 3, "invalid-config": 4}


class CliError(Exception):
    def __init__(self, category: str, detail: str):
        super().__init__(detail)
        self.category = category
        self.detail = detail


def _fail(category: str, detail: str) -> CliError:
    return CliError(category, detail)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="config file path (or set BNQA_CONFIG)")
    group = parser.add_argument_group("config overrides (flag beats file)")
    for key, default in DEFAULTS.items():
        if isinstance(default, bool):
            kind: Any = lambda s: s.lower() in ("1", "true", "yes")
        elif isinstance(default, int):
            kind = int
        elif isinstance(default, float):
            kind = float
        elif isinstance(default, list):
            kind = lambda s: [part for part in s.split(",") if part]
        else:
            kind = str
        group.add_argument(f"--{key}", type=kind, default=None, metavar="V", dest=key,
                           help=f"default: {default!r}")


def _config_from_args(args: argparse.Namespace, extra: dict[str, Any] | None = None) -> AppConfig:
    overrides = {k: v for k, v in vars(args).items() if k in DEFAULTS and v is not None}
    overrides.update({k: v for k, v in (extra or {}).items() if v is not None})
    try:
        return load_config(args.config, overrides)
    except FileNotFoundError as exc:
        raise _fail("missing-file", str(exc)) from exc
    except (ConfigError, ValueError) as exc:
        raise _fail("invalid-config", str(exc)) from exc


def _require_file(path: Path, what: str) -> Path:
    if not path.is_file():
        raise _fail("missing-file", f"{what} not found: {path}")
    return path


def _load_dataset(path: Path) -> corpus.QaDataset:
    _require_file(path, "dataset file")
    try:
        return corpus.load_dataset(path)
    except corpus.DatasetFormatError as exc:
        raise _fail("operation-failed", str(exc)) from exc


def _load_vocab(path: Path) -> tokenizer.Vocabulary:
    _require_file(path, "vocabulary file")
    try:
        return tokenizer.load_vocab(path)
    except tokenizer.VocabularyError as exc:
        raise _fail("operation-failed", str(exc)) from exc


def find_checkpoint(directory: Path) -> Path:
    """The directory itself if it holds a manifest, else its newest epoch dir."""
    if (directory / training.MANIFEST_FILE).is_file():
        return directory
    if directory.is_dir():
        candidates = sorted(
            d for d in directory.iterdir()
            if d.is_dir() and (d / training.MANIFEST_FILE).is_file()
        )
        if candidates:
            return candidates[-1]
    raise _fail("missing-file", f"no checkpoint found under {directory}")


def _dataset_texts(ds: corpus.QaDataset) -> list[str]:
    texts = [p.context.text for _, p in ds.iter_paragraphs()]
    texts += [qa.question for _, qa in ds.iter_qas()]
    return texts


# --- subcommands ---------------------------------------------------------------


def cmd_ingest(args) -> int:
    cfg = _config_from_args(args)
    corpus_dir = cfg.path("corpus_dir")
    if not corpus_dir.is_dir():
        raise _fail("missing-file", f"corpus directory not found: {corpus_dir}")
    files = sorted(p for p in corpus_dir.iterdir() if p.is_file())
    result = corpus.ingest(files)
    paragraphs = []
    for doc in result.documents:
        paragraphs.extend(corpus.clean(doc))
    for path, message in result.errors:
        print(f"warning: {path}: {message}", file=sys.stderr)
    out = cfg.path("paragraphs_file")
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "paragraphs": [
            {"id": p.id, "source_id": p.source_id, "text": p.text} for p in paragraphs
        ]
    }
    out.write_text(
        json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    print(f"ingested {len(result.documents)} documents -> {len(paragraphs)} paragraphs -> {out}")
    if result.errors and not result.documents:
        raise _fail("operation-failed", "every corpus file failed to ingest")
    return 0


def cmd_build_vocab(args) -> int:
    cfg = _config_from_args(args)
    dataset_path = cfg.path("dataset_file")
    if dataset_path.is_file():
        ds = _load_dataset(dataset_path)
        texts = _dataset_texts(ds)
        source = dataset_path
    else:
        paragraphs_path = _require_file(cfg.path("paragraphs_file"), "paragraphs file")
        raw = json.loads(paragraphs_path.read_text(encoding="utf-8"))
        texts = [p["text"] for p in raw["paragraphs"]]
        source = paragraphs_path
    try:
        vocab = tokenizer.build_vocab(texts, cfg["vocab.max_size"], cfg["vocab.min_freq"])
    except tokenizer.VocabularyError as exc:
        raise _fail("invalid-config", str(exc)) from exc
    out = cfg.path("vocab_file")
    out.parent.mkdir(parents=True, exist_ok=True)
    tokenizer.save_vocab(vocab, out)
    print(f"built vocabulary of {len(vocab)} pieces from {source} -> {out}")
    return 0


def cmd_validate(args) -> int:
    cfg = _config_from_args(args, {"paths.dataset_file": args.dataset})
    ds = _load_dataset(cfg.path("dataset_file"))
    report = corpus.validate(ds)
    for err in report.errors:
        print(f"{err.code} {err.item_id}: {err.message}")
    print(
        f"{len(report.errors)} errors in {report.paragraphs} paragraphs / "
        f"{report.questions} questions / {report.answers} answers"
    )
    if args.json_out:
        payload = {
            "errors": [
                {"item_id": e.item_id, "code": e.code, "message": e.message}
                for e in report.errors
            ],
            "counts": {
                "paragraphs": report.paragraphs,
                "questions": report.questions,
                "answers": report.answers,
            },
        }
        Path(args.json_out).write_text(
            json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
    if not report.ok:
        raise _fail("operation-failed", f"dataset has {len(report.errors)} validation errors")
    return 0


def cmd_split(args) -> int:
    cfg = _config_from_args(args, {"paths.dataset_file": args.dataset})
    dataset_path = cfg.path("dataset_file")
    ds = _load_dataset(dataset_path)
    train_path = Path(cfg["paths.train_file"] or dataset_path.with_suffix(".train.json"))
    eval_path = Path(cfg["paths.eval_file"] or dataset_path.with_suffix(".eval.json"))
    try:
        train_ds, eval_ds = corpus.split(ds, cfg["split.eval_fraction"], cfg["split.seed"])
    except corpus.SplitError as exc:
        raise _fail("operation-failed", str(exc)) from exc
    train_path.parent.mkdir(parents=True, exist_ok=True)
    eval_path.parent.mkdir(parents=True, exist_ok=True)
    corpus.save_dataset(train_ds, train_path)
    corpus.save_dataset(eval_ds, eval_path)
    n_train = sum(1 for _ in train_ds.iter_paragraphs())
    n_eval = sum(1 for _ in eval_ds.iter_paragraphs())
    print(f"split {n_train} train / {n_eval} eval paragraphs -> {train_path}, {eval_path}")
    return 0


def cmd_stats(args) -> int:
    cfg = _config_from_args(args, {"paths.dataset_file": args.dataset})
    ds = _load_dataset(cfg.path("dataset_file"))
    s = corpus.stats(ds)
    print(f"paragraphs:              {s.paragraphs}")
    print(f"questions:               {s.questions}")
    print(f"answers:                 {s.answers}")
    print(
        "questions per paragraph: "
        f"min {s.questions_per_paragraph_min} / mean {s.questions_per_paragraph_mean:.2f} / "
        f"max {s.questions_per_paragraph_max}"
    )
    print(
        "answer length (chars):   "
        f"min {s.answer_length_min} / mean {s.answer_length_mean:.2f} / max {s.answer_length_max}"
    )
    return 0


def cmd_train(args) -> int:
    cfg = _config_from_args(args, {"paths.dataset_file": args.dataset})
    dataset_path = Path(cfg["paths.train_file"] or cfg["paths.dataset_file"])
    if cfg["paths.train_file"] and not dataset_path.is_file():
        dataset_path = cfg.path("dataset_file")
    ds = _load_dataset(dataset_path)
    vocab = _load_vocab(cfg.path("vocab_file"))
    try:
        report = training.train(
            ds,
            vocab,
            cfg.model_config(vocab_size=len(vocab)),
            cfg.train_config(),
            cfg.path("checkpoint_dir"),
            max_len=cfg["tokenize.max_len"],
            doc_stride=cfg["tokenize.doc_stride"],
            keep_checkpoints=cfg["train.keep_checkpoints"],
            log_every=cfg["train.log_every"],
        )
    except (training.TrainingError, ValueError) as exc:
        raise _fail("operation-failed", str(exc)) from exc
    for qa_id, reason in report.skipped:
        print(f"warning: skipped {qa_id}: {reason}", file=sys.stderr)
    print(
        f"trained {len(report.epoch_losses)} epochs ({report.steps} steps) "
        f"in {report.wall_time_s:.1f}s on {dataset_path}"
    )
    print(f"first epoch loss {report.epoch_losses[0]:.4f}, last {report.epoch_losses[-1]:.4f}, "
          f"final eval-mode loss {report.final_train_loss:.4f}")
    print(f"checkpoint: {report.final_checkpoint}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config_from_args(
        args, {"paths.dataset_file": args.dataset, "paths.checkpoint_dir": args.checkpoint,
               "paths.report_file": args.out}
    )
    dataset_path = Path(cfg["paths.eval_file"] or cfg["paths.dataset_file"])
    if cfg["paths.eval_file"] and not dataset_path.is_file():
        dataset_path = cfg.path("dataset_file")
    ds = _load_dataset(dataset_path)
    vocab = _load_vocab(cfg.path("vocab_file"))
    checkpoint = training.load_checkpoint(find_checkpoint(cfg.path("checkpoint_dir")))
    if checkpoint.vocab_sha256 and checkpoint.vocab_sha256 != vocab.sha256():
        raise _fail("operation-failed", "vocabulary file does not match the checkpoint")
    try:
        report = evaluation.evaluate(
            checkpoint.weights,
            checkpoint.model_config,
            vocab,
            ds,
            max_answer_tokens=cfg["decode.max_answer_tokens"],
            max_len=cfg["tokenize.max_len"],
            doc_stride=cfg["tokenize.doc_stride"],
        )
    except ValueError as exc:
        raise _fail("operation-failed", str(exc)) from exc
    print(evaluation.format_table(report))
    if cfg["paths.report_file"]:
        out = cfg.path("report_file")
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(
            json.dumps(report.to_json(), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
        print(f"report: {out}")
    return 0


def cmd_ask(args) -> int:
    cfg = _config_from_args(args, {"paths.checkpoint_dir": args.checkpoint})
    context_file = _require_file(Path(args.context_file), "context file")
    text = context_file.read_text(encoding="utf-8")
    context = corpus.make_context(text, context_id=context_file.name, source_id=context_file.name)
    if not context.text:
        raise _fail("operation-failed", f"{context_file} has no usable text")
    vocab = _load_vocab(cfg.path("vocab_file"))
    checkpoint = training.load_checkpoint(find_checkpoint(cfg.path("checkpoint_dir")))
    try:
        predictions = inference.predict(
            checkpoint.weights,
            checkpoint.model_config,
            vocab,
            context,
            args.question,
            k=args.k if args.k is not None else cfg["decode.k"],
            max_answer_tokens=cfg["decode.max_answer_tokens"],
            max_len=cfg["tokenize.max_len"],
            doc_stride=cfg["tokenize.doc_stride"],
        )
    except (inference.DecodeError, tokenizer.QuestionTooLongError) as exc:
        raise _fail("operation-failed", str(exc)) from exc
    for rank, p in enumerate(predictions, 1):
        print(f"{rank}. {p.text}  [chars {p.char_start}..{p.char_end}, score {p.score:.3f}]")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = _config_from_args(args, {"paths.checkpoint_dir": args.checkpoint})
    app = create_app(cfg)
    uvicorn.run(app, host=cfg["service.host"], port=cfg["service.port"], log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bnqa",
        description="Closed-domain Bengali extractive question answering pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        _add_config_flags(p)
        p.set_defaults(fn=fn)
        return p

    add("ingest", cmd_ingest, "read the corpus directory into cleaned paragraphs")
    add("build-vocab", cmd_build_vocab, "build the WordPiece vocabulary")

    p = add("validate", cmd_validate, "check every dataset invariant")
    p.add_argument("--dataset", help="dataset file (defaults to paths.dataset_file)")
    p.add_argument("--json-out", help="also write the report as JSON")

    p = add("split", cmd_split, "deterministic paragraph-level train/eval split")
    p.add_argument("--dataset", help="dataset file (defaults to paths.dataset_file)")

    p = add("stats", cmd_stats, "dataset summary statistics")
    p.add_argument("--dataset", help="dataset file (defaults to paths.dataset_file)")

    p = add("train", cmd_train, "train from scratch on the training dataset")
    p.add_argument("--dataset", help="dataset file (defaults to paths.train_file or paths.dataset_file)")

    p = add("eval", cmd_eval, "score a checkpoint on the evaluation dataset")
    p.add_argument("--dataset", help="dataset file (defaults to paths.eval_file or paths.dataset_file)")
    p.add_argument("--checkpoint", help="checkpoint directory")
    p.add_argument("--out", help="report JSON path (defaults to paths.report_file)")

    p = add("ask", cmd_ask, "answer one question against a context file")
    p.add_argument("--question", required=True)
    p.add_argument("--context-file", required=True)
    p.add_argument("--checkpoint", help="checkpoint directory")
    p.add_argument("-k", type=int, default=None, help="number of answers (defaults to decode.k)")

    p = add("serve", cmd_serve, "start the HTTP answering service")
    p.add_argument("--checkpoint", help="checkpoint directory")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"ERROR[{exc.category}]: {exc.detail}", file=sys.stderr)
        return CATEGORY_EXIT_CODES[exc.category]
    except training.TrainingError as exc:
        print(f"ERROR[operation-failed]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
