"""FastAPI application exposing the embedding and generation endpoints.

Wire contracts (all JSON):

- ``GET  /info``                     -> {"dim": int, "models": {...}}
- ``POST /embed/text``  {"texts": [str]}        -> {"dim": int, "vectors": [[float]]}
- ``POST /embed/image`` {"image_refs": [str]}   -> {"dim": int, "vectors": [[float]]}
- ``POST /unmask``  {"text": str, "top_k": int} -> {"candidates": [{"token", "score"}]}
- ``POST /complete`` {"prompt": str, "max_tokens": int} -> {"completion": str}
- ``POST /tag``     {"text": str}               -> {"tokens": [{"text", "pos"}]}

Batches are capped at 256 entries (400 beyond that, 400 when empty),
unresolvable image paths give 404, and any endpoint whose backend is
configured off answers 503. Inference runs under a lock: one model
evaluation at a time, requests queue.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import backends
from .backends import DEFAULT_DIM, MASK, REGISTRY

MAX_BATCH = 256

BACKEND_OFF = "off"


@dataclass
class SidecarConfig:
    """Which backend implementation serves each endpoint.

    ``off`` disables an endpoint (503), mirroring an unloaded model.
    """

    dim: int = DEFAULT_DIM
    text_model: str = backends.HashedNgramTextEmbedder.name
    image_model: str = backends.ByteHashImageEmbedder.name
    unmask_model: str = backends.WordPoolUnmasker.name
    complete_model: str = backends.RewriteCompleter.name
    tag_model: str = backends.HeuristicTagger.name

    def build(self, group: str, name: str):
        if name == BACKEND_OFF:
            return None
        try:
            factory = REGISTRY[group][name]
        except KeyError:
            raise ValueError(f"unknown {group} backend {name!r}") from None
        if group in ("text", "image"):
            return factory(dim=self.dim)
        return factory()


class TextBatch(BaseModel):
    texts: list[str] = Field(default_factory=list)


class ImageBatch(BaseModel):
    image_refs: list[str] = Field(default_factory=list)


class UnmaskRequest(BaseModel):
    text: str
    top_k: int = 10


class CompleteRequest(BaseModel):
    prompt: str
    max_tokens: int = 40


class TagRequest(BaseModel):
    text: str


@dataclass
class _State:
    config: SidecarConfig
    lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self) -> None:
        self.text = self.config.build("text", self.config.text_model)
        self.image = self.config.build("image", self.config.image_model)
        self.unmask = self.config.build("unmask", self.config.unmask_model)
        self.complete = self.config.build("complete", self.config.complete_model)
        self.tag = self.config.build("tag", self.config.tag_model)

    def models(self) -> dict[str, str]:
        return {
            "text": self.config.text_model,
            "image": self.config.image_model,
            "unmask": self.config.unmask_model,
            "complete": self.config.complete_model,
            "tag": self.config.tag_model,
        }


def _require(backend, name: str):
    if backend is None:
        raise HTTPException(status_code=503, detail=f"{name} model is not loaded")
    return backend


def _check_batch(items: list, what: str) -> None:
    if not items:
        raise HTTPException(status_code=400, detail=f"batch must contain at least one {what}")
    if len(items) > MAX_BATCH:
        raise HTTPException(status_code=400, detail=f"batch exceeds {MAX_BATCH} {what}s")


def create_app(config: SidecarConfig | None = None) -> FastAPI:
    state = _State(config or SidecarConfig())
    app = FastAPI(title="embed-sidecar", version="0.1.0")

    @app.get("/info")
    def info():
        return {"dim": state.config.dim, "models": state.models()}

    @app.post("/embed/text")
    def embed_text(batch: TextBatch):
        backend = _require(state.text, "text embedding")
        _check_batch(batch.texts, "text")
        with state.lock:
            vectors = backend.embed(batch.texts)
        return {"dim": state.config.dim, "vectors": vectors}

    @app.post("/embed/image")
    def embed_image(batch: ImageBatch):
        backend = _require(state.image, "image embedding")
        _check_batch(batch.image_refs, "image_ref")
        try:
            with state.lock:
                vectors = backend.embed(batch.image_refs)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=f"unresolvable image_ref: {exc}")
        return {"dim": state.config.dim, "vectors": vectors}

    @app.post("/unmask")
    def unmask(request: UnmaskRequest):
        backend = _require(state.unmask, "unmask")
        if request.text.count(MASK) != 1:
            raise HTTPException(
                status_code=400, detail=f"text must contain exactly one {MASK!r}"
            )
        if request.top_k < 1:
            raise HTTPException(status_code=400, detail="top_k must be >= 1")
        with state.lock:
            candidates = backend.unmask(request.text, request.top_k)
        return {"candidates": candidates}

    @app.post("/complete")
    def complete(request: CompleteRequest):
        backend = _require(state.complete, "completion")
        if not request.prompt:
            raise HTTPException(status_code=400, detail="prompt must be nonempty")
        with state.lock:
            completion = backend.complete(request.prompt, request.max_tokens)
        return {"completion": completion}

    @app.post("/tag")
    def tag(request: TagRequest):
        backend = _require(state.tag, "tagging")
        with state.lock:
            tokens = backend.tag(request.text)
        return {"tokens": tokens}

    return app
