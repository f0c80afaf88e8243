"""Shared synthetic world for tests and fixture generation.

Planted rules: each category owns a handful of marker tokens; a text's true
labels are the categories whose markers it contains. The stub embedder maps
texts to 16-dim vectors with a linear signal (dim 0 counts markers, dims
1-7 are per-category bumps, dims 8-15 deterministic hash noise), so a
linear head can recover the labels almost perfectly.

Three stub labelling models share the rules with planted quirks:

    model_a  exact rule labels, prompt-style criterion keys
    model_b  blind to the "amdk" marker, snake_case keys
    model_c  over-flags harassment on "siao", wraps its JSON in prose,
             title-case keys

so majority votes match the rules while consensus leaves the affected rows
undetermined.
"""
from __future__ import annotations

import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from textguard.taxonomy import CATEGORIES, Category

MARKERS: dict[Category, tuple[str, ...]] = {
    Category.HATEFUL: ("ceca", "tiong", "amdk"),
    Category.HARASSMENT: ("cheesepie", "digger"),
    Category.PUBLIC_HARM: ("weed", "launder", "vape"),
    Category.SELF_HARM: ("suicide", "cutting"),
    Category.SEXUAL: ("piak", "fap", "syt"),
    Category.TOXIC: ("knn", "ccb", "siao"),
    Category.VIOLENT: ("parang", "slash", "punch"),
}

EMBED_DIM = 16


def marker_categories(text: str) -> set[Category]:
    folded = text.casefold()
    return {c for c, terms in MARKERS.items() if any(t in folded for t in terms)}


def marker_count(text: str) -> int:
    folded = text.casefold()
    return sum(1 for terms in MARKERS.values() for t in terms if t in folded)


def stub_embedding(text: str) -> np.ndarray:
    """16-dim embedding with planted linear signal plus hash noise."""
    v = np.zeros(EMBED_DIM, dtype=np.float64)
    v[0] = 3.0 * marker_count(text)
    for i, category in enumerate(CATEGORIES):
        if category in marker_categories(text):
            v[1 + i] += 2.0
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "little")))
    v[8:] = rng.uniform(-0.5, 0.5, size=EMBED_DIM - 8)
    return v.astype(np.float32)


def model_labels(model_id: str, text: str) -> dict[Category, bool]:
    folded = text.casefold()
    cats = set(marker_categories(text))
    if model_id == "model_b":
        # blind spot: does not know "amdk"
        others = [t for t in MARKERS[Category.HATEFUL] if t != "amdk"]
        if Category.HATEFUL in cats and not any(t in folded for t in others):
            cats.discard(Category.HATEFUL)
    if model_id == "model_c" and "siao" in folded:
        cats.add(Category.HARASSMENT)
    return {c: c in cats for c in CATEGORIES}


_KEY_STYLES = {
    "model_a": {
        Category.HATEFUL: "hateful",
        Category.HARASSMENT: "harassment",
        Category.PUBLIC_HARM: "encouraging public harm",
        Category.SELF_HARM: "encouraging self-harm",
        Category.SEXUAL: "sexual",
        Category.TOXIC: "toxic",
        Category.VIOLENT: "violent",
    },
    "model_b": {c: c.value for c in CATEGORIES},
    "model_c": {
        Category.HATEFUL: "Hateful",
        Category.HARASSMENT: "Harassment",
        Category.PUBLIC_HARM: "Public Harm",
        Category.SELF_HARM: "Self-Harm",
        Category.SEXUAL: "Sexual",
        Category.TOXIC: "Toxic",
        Category.VIOLENT: "Violent",
    },
}


def verdict_response(model_id: str, text: str) -> str:
    """The raw response the stub model returns for one comment."""
    labels = model_labels(model_id, text)
    keys = _KEY_STYLES[model_id]
    body = {
        keys[c]: {
            "label": "Yes" if labels[c] else "No",
            "reason": f"{'matches' if labels[c] else 'no sign of'} {c.value}",
        }
        for c in CATEGORIES
    }
    payload = json.dumps(body)
    if model_id == "model_c":
        return f"Sure! Here is my evaluation:\n{payload}\nHope this helps."
    return payload


PROMPT_MARKER = "The Singlish comment for your evaluation is: "


def comment_from_prompt(prompt: str) -> str:
    if PROMPT_MARKER not in prompt:
        raise ValueError("prompt lacks the evaluation marker")
    return prompt.rsplit(PROMPT_MARKER, 1)[1]


class _StubHandler(BaseHTTPRequestHandler):
    def log_message(self, *args) -> None:  # quiet
        pass

    def _read_json(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        return json.loads(self.rfile.read(length))

    def _send(self, payload: dict, status: int = 200) -> None:
        blob = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def _next_fault(self) -> str | None:
        with self.server.fault_lock:  # type: ignore[attr-defined]
            faults = self.server.faults  # type: ignore[attr-defined]
            return faults.pop(0) if faults else None

    def do_POST(self) -> None:
        body = self._read_json()
        kind = self.server.kind  # type: ignore[attr-defined]
        fault = self._next_fault()
        if fault == "http_500":
            self._send({"error": "boom"}, status=500)
            return
        if fault == "not_json":
            blob = b"gateway timeout (html page)"
            self.send_response(200)
            self.send_header("Content-Length", str(len(blob)))
            self.end_headers()
            self.wfile.write(blob)
            return
        if kind == "llm" and fault == "no_verdict":
            payload = {"text": "I cannot help with that."}
            if "prompt" not in body:
                payload = {"choices": [{"message": {"content": "I cannot help with that."}}]}
            self._send(payload)
            return
        if kind == "embed" and fault in ("short", "ragged"):
            texts = body["texts"]
            rows = [stub_embedding(t).tolist() for t in texts]
            if fault == "short":
                rows = rows[:-1]
            else:
                rows[-1] = rows[-1][:-2]
            self._send({"embeddings": rows})
            return
        if kind == "llm":
            model_id = self.server.model_id  # type: ignore[attr-defined]
            if "prompt" in body:
                prompt = body["prompt"]
                text = comment_from_prompt(prompt)
                self._send({"text": verdict_response(model_id, text)})
            else:
                prompt = body["messages"][0]["content"]
                text = comment_from_prompt(prompt)
                self._send({
                    "choices": [{"message": {"content": verdict_response(model_id, text)}}]
                })
        elif kind == "embed":
            texts = body["texts"]
            self._send({"embeddings": [stub_embedding(t).tolist() for t in texts]})
        else:
            self._send({"error": "unknown stub"}, status=500)


class StubServer:
    """A stub HTTP server on an ephemeral port."""

    def __init__(self, kind: str, model_id: str = "", faults: list[str] | None = None):
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
        self.httpd.kind = kind  # type: ignore[attr-defined]
        self.httpd.model_id = model_id  # type: ignore[attr-defined]
        self.httpd.faults = list(faults or [])  # type: ignore[attr-defined]
        self.httpd.fault_lock = threading.Lock()  # type: ignore[attr-defined]
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}/"

    def close(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()

    def __enter__(self) -> "StubServer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
