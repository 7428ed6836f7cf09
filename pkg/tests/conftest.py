import json
from pathlib import Path

import pytest

from bnqa import corpus, tokenizer, training
from bnqa.corpus import Article, AnswerSpan, ContextParagraph, Paragraph, QaDataset, QaPair
from bnqa.model import ModelConfig

REPO = Path(__file__).resolve().parent.parent
FIXTURES = REPO / "fixtures"


def make_dataset(paragraph_specs, version="1.1", title="fixture"):
    """Build a one-article dataset from (context_text, [(qid, question, [(text, start)])])."""
    paragraphs = []
    for i, (context_text, qa_specs) in enumerate(paragraph_specs):
        context = ContextParagraph(id=f"a0-p{i}", text=context_text, source_id=title)
        qas = tuple(
            QaPair(
                id=qid,
                question=question,
                answers=tuple(AnswerSpan(text=t, answer_start=s) for t, s in answers),
            )
            for qid, question, answers in qa_specs
        )
        paragraphs.append(Paragraph(context=context, qas=qas))
    return QaDataset(version=version, articles=(Article(title=title, paragraphs=tuple(paragraphs)),))


@pytest.fixture
def tiny_dataset():
    return make_dataset(
        [
            ("abc def ghi", [("q1", "where is abc?", [("abc", 0)])]),
            ("jkl mno pqr", [("q2", "where is mno?", [("mno", 4)]), ("q3", "and pqr?", [("pqr", 8)])]),
        ]
    )


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """A briefly trained checkpoint on the bundled dataset, for contract tests."""
    root = tmp_path_factory.mktemp("tiny-run")
    ds = corpus.load_dataset(FIXTURES / "overfit" / "dataset.json")
    texts = [p.context.text for _, p in ds.iter_paragraphs()]
    texts += [qa.question for _, qa in ds.iter_qas()]
    vocab = tokenizer.build_vocab(texts, max_size=2000)
    vocab_path = root / "vocab.txt"
    tokenizer.save_vocab(vocab, vocab_path)

    model_cfg = ModelConfig(
        num_layers=1, hidden_size=16, num_heads=2, ff_size=32,
        vocab_size=len(vocab), max_positions=64, dropout_rate=0.1,
    )
    train_cfg = training.TrainConfig(learning_rate=1e-3, batch_size=16, epochs=2, seed=7)
    report = training.train(
        ds, vocab, model_cfg, train_cfg, root / "checkpoints", max_len=64, doc_stride=32
    )
    config_values = {
        "paths.dataset_file": str(FIXTURES / "overfit" / "dataset.json"),
        "paths.vocab_file": str(vocab_path),
        "paths.checkpoint_dir": str(root / "checkpoints"),
        "paths.report_file": str(root / "report.json"),
        "tokenize.max_len": 64,
        "tokenize.doc_stride": 32,
        "decode.k": 3,
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config_values, indent=2), encoding="utf-8")
    return {
        "root": root,
        "dataset": ds,
        "vocab": vocab,
        "vocab_path": vocab_path,
        "checkpoint": Path(report.final_checkpoint),
        "config_path": config_path,
        "config_values": config_values,
    }
