"""HTTP answering service: one checkpoint loaded at startup, stateless requests."""

from __future__ import annotations

import hashlib
import logging
import time
from pathlib import Path

from fastapi import Body, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import corpus
from . import inference
from . import tokenizer
from . import training
from .config import AppConfig

logger = logging.getLogger("bnqa.service")


def _model_id(checkpoint_dir: Path) -> str:
    digest = hashlib.sha256((checkpoint_dir / training.WEIGHTS_FILE).read_bytes())
    return digest.hexdigest()[:12]


def create_app(config: AppConfig) -> FastAPI:
    from .cli import find_checkpoint  # local import to avoid a module cycle

    checkpoint_dir = find_checkpoint(config.path("checkpoint_dir"))
    checkpoint = training.load_checkpoint(checkpoint_dir)
    vocab = tokenizer.load_vocab(config.path("vocab_file"))
    if checkpoint.vocab_sha256 and checkpoint.vocab_sha256 != vocab.sha256():
        raise RuntimeError("vocabulary file does not match the checkpoint")
    model_id = _model_id(checkpoint_dir)

    contexts: dict[str, corpus.ContextParagraph] = {}
    dataset_path = config.path("dataset_file")
    if dataset_path.is_file():
        ds = corpus.load_dataset(dataset_path)
        for _, paragraph in ds.iter_paragraphs():
            contexts[paragraph.context.id] = paragraph.context

    app = FastAPI(title="bnqa", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=config["service.cors_origins"],
        allow_methods=["GET", "POST"],
        allow_headers=["*"],
    )

    def bad_request(detail: str) -> JSONResponse:
        return JSONResponse(status_code=400, content={"error": detail})

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        fields = ", ".join(
            ".".join(str(part) for part in err["loc"] if part != "body") or "body"
            for err in exc.errors()
        )
        return bad_request(f"malformed request body: {fields}")

    @app.exception_handler(Exception)
    async def on_internal_error(request: Request, exc: Exception):
        logger.exception("unhandled error serving %s", request.url.path)
        return JSONResponse(status_code=500, content={"error": "internal error"})

    # sync endpoints run in the threadpool, so slow predicts do not block /health
    @app.get("/health")
    def health():
        return {"status": "ok", "model_id": model_id}

    @app.get("/v1/contexts")
    def list_contexts():
        return {
            "contexts": [
                {"id": c.id, "preview": c.text[:120], "n_chars": len(c.text), "text": c.text}
                for c in contexts.values()
            ]
        }

    @app.post("/v1/answer")
    def answer(body: dict = Body(...)):
        question = body.get("question")
        if not isinstance(question, str) or not question.strip():
            return bad_request("malformed request body: question")
        raw_context = body.get("context")
        context_id = body.get("context_id")
        if (raw_context is None) == (context_id is None):
            return bad_request("exactly one of context and context_id is required")
        k = body.get("k", config["decode.k"])
        if not isinstance(k, int) or isinstance(k, bool) or k < 1:
            return bad_request("malformed request body: k must be a positive integer")

        if context_id is not None:
            context = contexts.get(str(context_id))
            if context is None:
                return JSONResponse(
                    status_code=404, content={"error": f"unknown context_id {context_id!r}"}
                )
        else:
            if not isinstance(raw_context, str):
                return bad_request("malformed request body: context must be a string")
            if len(raw_context) > config["service.context_cap"]:
                return JSONResponse(
                    status_code=413,
                    content={
                        "error": f"context exceeds the {config['service.context_cap']} "
                        "code point cap"
                    },
                )
            context = corpus.make_context(raw_context)
            if not context.text:
                return bad_request("context has no usable text")

        t0 = time.perf_counter()
        try:
            predictions = inference.predict(
                checkpoint.weights,
                checkpoint.model_config,
                vocab,
                context,
                question,
                k=k,
                max_answer_tokens=config["decode.max_answer_tokens"],
                max_len=config["tokenize.max_len"],
                doc_stride=config["tokenize.doc_stride"],
            )
        except (tokenizer.QuestionTooLongError, inference.DecodeError) as exc:
            return bad_request(str(exc))
        latency_ms = (time.perf_counter() - t0) * 1000.0
        return {
            "answers": [
                {
                    "text": p.text,
                    "char_start": p.char_start,
                    "char_end": p.char_end,
                    "score": p.score,
                }
                for p in predictions
            ],
            "model_id": model_id,
            "latency_ms": latency_ms,
            "context": context.text,
        }

    return app
