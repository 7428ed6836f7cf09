import pytest
from fastapi.testclient import TestClient

from bnqa import inference
from bnqa.config import load_config
from bnqa.service import create_app


@pytest.fixture(scope="module")
def client(tiny_run):
    config = load_config(tiny_run["config_path"])
    app = create_app(config)
    with TestClient(app, raise_server_exceptions=False) as c:
        yield c


@pytest.fixture()
def first_context(tiny_run):
    return tiny_run["dataset"].articles[0].paragraphs[0].context


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "ok"
    assert len(body["model_id"]) == 12


def test_contexts_listing(client, tiny_run):
    response = client.get("/v1/contexts")
    assert response.status_code == 200
    contexts = response.json()["contexts"]
    assert len(contexts) == 8
    assert all({"id", "preview", "n_chars", "text"} <= set(c) for c in contexts)
    by_id = {c["id"]: c for c in contexts}
    for _, paragraph in tiny_run["dataset"].iter_paragraphs():
        assert by_id[paragraph.context.id]["text"] == paragraph.context.text


def test_answer_by_context_id(client, first_context):
    response = client.post(
        "/v1/answer", json={"context_id": first_context.id, "question": "কোন শহরে?", "k": 3}
    )
    assert response.status_code == 200
    body = response.json()
    assert body["context"] == first_context.text
    assert body["latency_ms"] > 0
    scores = [a["score"] for a in body["answers"]]
    assert scores == sorted(scores, reverse=True)
    for a in body["answers"]:
        assert body["context"][a["char_start"]:a["char_end"]] == a["text"]


def test_answer_with_pasted_context_is_nfc_normalized(client):
    # U+09C7 U+09BE composes to U+09CB; offsets must index the NFC form
    raw = "রো ক খ";
    response = client.post("/v1/answer", json={"context": raw, "question": "ক?"})
    assert response.status_code == 200
    body = response.json()
    assert body["context"] == "রো ক খ"
    for a in body["answers"]:
        assert body["context"][a["char_start"]:a["char_end"]] == a["text"]


def test_missing_question_is_400(client, first_context):
    response = client.post("/v1/answer", json={"context_id": first_context.id})
    assert response.status_code == 400
    assert "question" in response.json()["error"]


def test_both_context_fields_is_400(client, first_context):
    response = client.post(
        "/v1/answer",
        json={"context": "x", "context_id": first_context.id, "question": "?"},
    )
    assert response.status_code == 400


def test_neither_context_field_is_400(client):
    response = client.post("/v1/answer", json={"question": "?"})
    assert response.status_code == 400


def test_unknown_context_id_is_404(client):
    response = client.post("/v1/answer", json={"context_id": "nope", "question": "?"})
    assert response.status_code == 404


def test_invalid_k_is_400(client, first_context):
    response = client.post(
        "/v1/answer", json={"context_id": first_context.id, "question": "?", "k": 0}
    )
    assert response.status_code == 400


def test_malformed_json_is_400(client):
    response = client.post(
        "/v1/answer", content=b"{not json", headers={"content-type": "application/json"}
    )
    assert response.status_code == 400


def test_context_over_cap_is_413(tiny_run):
    config = load_config(tiny_run["config_path"], {"service.context_cap": 10})
    app = create_app(config)
    with TestClient(app) as small_client:
        response = small_client.post(
            "/v1/answer", json={"context": "a" * 11, "question": "?"}
        )
    assert response.status_code == 413


def test_identical_requests_identical_answers(client, first_context):
    payload = {"context_id": first_context.id, "question": "কত সালে?", "k": 2}
    a = client.post("/v1/answer", json=payload).json()
    b = client.post("/v1/answer", json=payload).json()
    assert a["answers"] == b["answers"]
    assert a["model_id"] == b["model_id"]


def test_internal_errors_do_not_leak(client, first_context, monkeypatch):
    monkeypatch.setattr(inference, "predict", _boom)
    response = client.post(
        "/v1/answer", json={"context_id": first_context.id, "question": "?"}
    )
    assert response.status_code == 500
    assert response.json() == {"error": "internal error"}


def _boom(*args, **kwargs):
    raise RuntimeError("secret internals")
