import json


from bnqa import cli, corpus

from conftest import FIXTURES


def run(argv):
    return cli.main([str(a) for a in argv])


def test_validate_valid_dataset(capsys):
    assert run(["validate", "--dataset", FIXTURES / "validator" / "valid.json"]) == 0
    assert "0 errors" in capsys.readouterr().out


def test_validate_faulty_dataset_exits_nonzero(capsys):
    code = run(["validate", "--dataset", FIXTURES / "validator" / "offset_shifted.json"])
    captured = capsys.readouterr()
    assert code == 1
    assert "OFFSET_MISMATCH" in captured.out
    assert "ERROR[operation-failed]" in captured.err


def test_validate_json_out(tmp_path, capsys):
    out = tmp_path / "report.json"
    run(["validate", "--dataset", FIXTURES / "validator" / "dup_id_same_paragraph.json",
         "--json-out", out])
    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload["errors"][0]["code"] == "DUP_ID"
    assert payload["counts"]["paragraphs"] == 8


def test_missing_dataset_is_exit_3(capsys):
    assert run(["validate", "--dataset", "/nonexistent/ds.json"]) == 3
    assert "ERROR[missing-file]" in capsys.readouterr().err


def test_unknown_config_key_is_exit_4(tmp_path, capsys):
    bad = tmp_path / "config.json"
    bad.write_text('{"nope.key": 1}', encoding="utf-8")
    assert run(["stats", "--config", bad]) == 4
    assert "ERROR[invalid-config]" in capsys.readouterr().err


def test_wrong_config_value_type_is_exit_4(tmp_path, capsys):
    bad = tmp_path / "config.json"
    bad.write_text('{"train.epochs": "three"}', encoding="utf-8")
    assert run(["stats", "--config", bad]) == 4


def test_stats_output(capsys):
    assert run(["stats", "--dataset", FIXTURES / "overfit" / "dataset.json"]) == 0
    out = capsys.readouterr().out
    assert "paragraphs:              8" in out
    assert "questions:               24" in out


def test_env_var_config(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "config.json"
    cfg.write_text(
        json.dumps({"paths.dataset_file": str(FIXTURES / "overfit" / "dataset.json")}),
        encoding="utf-8",
    )
    monkeypatch.setenv("BNQA_CONFIG", str(cfg))
    assert run(["stats"]) == 0
    assert "paragraphs:              8" in capsys.readouterr().out


def test_ingest_reproduces_dataset_contexts(tmp_path, capsys):
    out = tmp_path / "paragraphs.json"
    code = run(["ingest", "--paths.corpus_dir", FIXTURES / "corpus",
                "--paths.paragraphs_file", out])
    assert code == 0
    cleaned = json.loads(out.read_text(encoding="utf-8"))["paragraphs"]
    ds = corpus.load_dataset(FIXTURES / "overfit" / "dataset.json")
    dataset_contexts = {p.context.text for _, p in ds.iter_paragraphs()}
    assert {p["text"] for p in cleaned} == dataset_contexts


def test_ingest_missing_dir(capsys):
    assert run(["ingest", "--paths.corpus_dir", "/nonexistent"]) == 3


def test_build_vocab_from_dataset(tmp_path, capsys):
    out = tmp_path / "vocab.txt"
    code = run(["build-vocab", "--paths.dataset_file", FIXTURES / "overfit" / "dataset.json",
                "--paths.vocab_file", out])
    assert code == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[:4] == ["[PAD]", "[UNK]", "[CLS]", "[SEP]"]
    assert len(lines) > 100


def test_split_writes_disjoint_files(tmp_path):
    train_out = tmp_path / "train.json"
    eval_out = tmp_path / "eval.json"
    code = run(["split", "--dataset", FIXTURES / "overfit" / "dataset.json",
                "--paths.train_file", train_out, "--paths.eval_file", eval_out,
                "--split.eval_fraction", "0.25"])
    assert code == 0
    train_ds = corpus.load_dataset(train_out)
    eval_ds = corpus.load_dataset(eval_out)
    train_ctx = {p.context.text for _, p in train_ds.iter_paragraphs()}
    eval_ctx = {p.context.text for _, p in eval_ds.iter_paragraphs()}
    assert len(train_ctx) == 6 and len(eval_ctx) == 2
    assert train_ctx.isdisjoint(eval_ctx)


def test_eval_writes_report(tiny_run, tmp_path, capsys):
    out = tmp_path / "report.json"
    code = run(["eval", "--config", tiny_run["config_path"], "--out", out])
    assert code == 0
    captured = capsys.readouterr().out
    assert "Exact Match (EM)" in captured
    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload["n"] == 24
    assert set(payload) == {"em", "f1", "perplexity", "n", "per_example"}


def test_ask_prints_answers(tiny_run, tmp_path, capsys):
    ds = tiny_run["dataset"]
    context_text = ds.articles[0].paragraphs[0].context.text
    context_file = tmp_path / "context.txt"
    context_file.write_text(context_text, encoding="utf-8")
    code = run(["ask", "--config", tiny_run["config_path"],
                "--context-file", context_file, "--question", "কুয়েট কোন শহরে অবস্থিত?",
                "-k", "2"])
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("1. ")
    assert "score" in out


def test_ask_missing_context_file(tiny_run, capsys):
    code = run(["ask", "--config", tiny_run["config_path"],
                "--context-file", "/nonexistent.txt", "--question", "?"])
    assert code == 3


def test_train_runs_quickly_with_flag_overrides(tmp_path, capsys):
    vocab_out = tmp_path / "vocab.txt"
    run(["build-vocab", "--paths.dataset_file", FIXTURES / "overfit" / "dataset.json",
         "--paths.vocab_file", vocab_out])
    code = run([
        "train",
        "--paths.dataset_file", FIXTURES / "overfit" / "dataset.json",
        "--paths.vocab_file", vocab_out,
        "--paths.checkpoint_dir", tmp_path / "ckpts",
        "--model.num_layers", "1", "--model.hidden_size", "16",
        "--model.num_heads", "2", "--model.ff_size", "32",
        "--model.max_positions", "64",
        "--tokenize.max_len", "64", "--tokenize.doc_stride", "32",
        "--train.epochs", "1", "--train.learning_rate", "0.001",
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "trained 1 epochs" in out
    assert (tmp_path / "ckpts" / "epoch-0001" / "manifest.json").is_file()


def test_full_pipeline_with_bundled_config():
    """ingest -> build-vocab -> validate -> split -> train -> eval, one config file."""
    config = FIXTURES / "pipeline" / "config.json"
    for step in (["ingest"], ["build-vocab"], ["validate"], ["split"], ["train"], ["eval"]):
        assert run(step + ["--config", config]) == 0, f"pipeline step {step} failed"
