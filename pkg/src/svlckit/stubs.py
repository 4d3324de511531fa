"""Deterministic stub services for offline runs and tests.

The in-process stubs implement the client protocols directly; the HTTP stub
server speaks the same wire contracts as a real sidecar (``/unmask``,
``/complete``, ``/tag``, ``/embed/text``, ``/embed/image``, ``/info``) so
the command-line pipeline and wire clients can be exercised without any
model being available. All responses are pure functions of the request.
"""

from __future__ import annotations

import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .parser import builtin_tag
from .unmask import MASK_PLACEHOLDER, UnmaskCandidate

_WORD_POOL = (
    "sitting standing running eating drawing playing sleeping walking dog cat "
    "boat car tree house child woman man bird table chair red blue green small "
    "large wooden old new happy quiet bright park road river city field"
).split()


def _stable_seed(*parts: str) -> int:
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def deterministic_candidates(masked_text: str, top_k: int) -> list[UnmaskCandidate]:
    """A fixed-seed sample of the word pool with descending pseudo-scores."""
    rng = np.random.default_rng(_stable_seed("unmask", masked_text))
    count = min(top_k, len(_WORD_POOL))
    words = rng.choice(len(_WORD_POOL), size=count, replace=False)
    scores = np.sort(rng.uniform(0.05, 0.95, size=count))[::-1]
    return [
        UnmaskCandidate(token=_WORD_POOL[w], score=float(s))
        for w, s in zip(words, scores)
    ]


def deterministic_completion(prompt: str) -> str:
    """Rotate the queried caption's words; always ends with a period and filler."""
    marker = " is semantic similar to "
    head = prompt.rsplit(marker, 1)[0]
    caption = head.rsplit(". ", 1)[-1]
    tokens = caption.split()
    rotated = " ".join(tokens[1:] + tokens[:1]) if len(tokens) > 1 else caption + " indeed"
    return f"{rotated}. unrelated continuation text"


class StubFillMaskClient:
    """In-process fill-mask stub; optionally canned per-query responses."""

    def __init__(self, canned: dict[str, list[str]] | None = None) -> None:
        self.canned = canned or {}
        self.queries: list[tuple[str, int]] = []

    def unmask(self, masked_text: str, top_k: int) -> list[UnmaskCandidate]:
        self.queries.append((masked_text, top_k))
        if masked_text in self.canned:
            words = self.canned[masked_text][:top_k]
            step = 1.0 / (len(words) + 1)
            return [
                UnmaskCandidate(token=w, score=round(1.0 - (i + 1) * step, 6))
                for i, w in enumerate(words)
            ]
        return deterministic_candidates(masked_text, top_k)


class StubCompletionClient:
    """In-process completion stub; optionally canned per-caption responses."""

    def __init__(self, canned: dict[str, str] | None = None) -> None:
        self.canned = canned or {}
        self.prompts: list[str] = []

    def complete(self, prompt: str, max_tokens: int) -> str:
        self.prompts.append(prompt)
        for caption, completion in self.canned.items():
            if prompt.endswith(caption + " is semantic similar to "):
                return completion
        return deterministic_completion(prompt)


def _embed_vector(namespace: str, value: str, dim: int) -> list[float]:
    rng = np.random.default_rng(_stable_seed("embed", namespace, value))
    vec = rng.standard_normal(dim)
    vec /= np.linalg.norm(vec)
    return [float(x) for x in vec]


class _StubHandler(BaseHTTPRequestHandler):
    server_version = "svlckit-stub/0.1"

    def log_message(self, *args) -> None:  # keep test output clean
        pass

    def _reply(self, code: int, obj: dict) -> None:
        body = json.dumps(obj).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:
        if self.path == "/info":
            self._reply(200, {"dim": self.server.dim, "models": {"stub": "deterministic"}})
        else:
            self._reply(404, {"error": "not found"})

    def do_POST(self) -> None:
        length = int(self.headers.get("Content-Length", "0"))
        try:
            payload = json.loads(self.rfile.read(length) or b"{}")
        except json.JSONDecodeError:
            self._reply(400, {"error": "invalid JSON"})
            return

        if self.path == "/unmask":
            text = payload.get("text", "")
            if text.count(MASK_PLACEHOLDER) != 1:
                self._reply(400, {"error": "text must contain exactly one mask"})
                return
            top_k = int(payload.get("top_k", 10))
            canned = self.server.canned_unmask.get(text)
            if canned is not None:
                step = 1.0 / (len(canned) + 1)
                cands = [
                    {"token": w, "score": round(1.0 - (i + 1) * step, 6)}
                    for i, w in enumerate(canned[:top_k])
                ]
            else:
                cands = [
                    {"token": c.token, "score": c.score}
                    for c in deterministic_candidates(text, top_k)
                ]
            self._reply(200, {"candidates": cands})
        elif self.path == "/complete":
            prompt = payload.get("prompt", "")
            self._reply(200, {"completion": deterministic_completion(prompt)})
        elif self.path == "/tag":
            tokens = [
                {"text": tok.text, "pos": tok.pos}
                for tok in builtin_tag(payload.get("text", ""))
            ]
            self._reply(200, {"tokens": tokens})
        elif self.path == "/embed/text":
            texts = payload.get("texts", [])
            if not texts or len(texts) > 256:
                self._reply(400, {"error": "batch must contain 1..256 texts"})
                return
            vectors = [_embed_vector("text", t, self.server.dim) for t in texts]
            self._reply(200, {"dim": self.server.dim, "vectors": vectors})
        elif self.path == "/embed/image":
            refs = payload.get("image_refs", [])
            if not refs or len(refs) > 256:
                self._reply(400, {"error": "batch must contain 1..256 image_refs"})
                return
            vectors = [_embed_vector("image", r, self.server.dim) for r in refs]
            self._reply(200, {"dim": self.server.dim, "vectors": vectors})
        else:
            self._reply(404, {"error": "not found"})


class StubServiceServer:
    """Threaded HTTP stub serving all wire contracts on an ephemeral port."""

    def __init__(
        self,
        dim: int = 32,
        canned_unmask: dict[str, list[str]] | None = None,
    ) -> None:
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
        self._server.dim = dim
        self._server.canned_unmask = canned_unmask or {}
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def __enter__(self) -> "StubServiceServer":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)
