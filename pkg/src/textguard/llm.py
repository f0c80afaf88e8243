"""Config-driven LLM endpoint clients and the ensemble labelling runner.

Any chat-completion-style HTTP provider works; endpoints are configuration,
not code. Two request shapes are supported:

    prompt mode: POST base_url {"prompt": p, ...}           -> {"text": ...}
    chat mode:   POST base_url {"messages":[{role,content}]} -> OpenAI-style
                 {"choices":[{"message":{"content": ...}}]}

Auth tokens come from the environment (never config files). Calls run with
bounded parallelism per endpoint and an optional requests-per-second cap;
aggregation downstream is order-independent, so concurrency never affects
results. Each parsed verdict is appended to a JSONL log keyed by the sha256
of the raw response for auditability.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import httpx

from .corpus import TextRecord
from .labelling import LlmVerdict, ParseError, parse_verdict
from .prompts import FULL, PromptToggles, render_prompt

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib


@dataclass(frozen=True)
class LlmEndpoint:
    """One labelling model endpoint."""

    name: str
    base_url: str
    auth_env_var: Optional[str] = None
    max_in_flight: int = 8
    timeout_ms: int = 60000
    requests_per_second: Optional[float] = None
    temperature: float = 0.0
    top_p: float = 1.0
    request_mode: str = "prompt"  # "prompt" | "chat"
    model: Optional[str] = None

    def __post_init__(self) -> None:
        if self.request_mode not in ("prompt", "chat"):
            raise ValueError(f"unknown request_mode: {self.request_mode!r}")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


def load_endpoints(path: str | Path) -> list[LlmEndpoint]:
    """Read endpoint definitions from a TOML or JSON config file."""
    path = Path(path)
    if path.suffix == ".toml":
        config = tomllib.loads(path.read_text("utf-8"))
    else:
        config = json.loads(path.read_text("utf-8"))
    return [LlmEndpoint(**entry) for entry in config["endpoints"]]


class _RateLimiter:
    """Serializes calls to at most requests_per_second."""

    def __init__(self, requests_per_second: Optional[float]):
        self._interval = 1.0 / requests_per_second if requests_per_second else 0.0
        self._lock = threading.Lock()
        self._next_at = 0.0

    def wait(self) -> None:
        if not self._interval:
            return
        with self._lock:
            now = time.monotonic()
            wait_for = self._next_at - now
            self._next_at = max(now, self._next_at) + self._interval
        if wait_for > 0:
            time.sleep(wait_for)


class LlmClient:
    """HTTP client for one endpoint."""

    def __init__(self, endpoint: LlmEndpoint):
        self.endpoint = endpoint
        headers = {}
        if endpoint.auth_env_var:
            token = os.environ.get(endpoint.auth_env_var)
            if not token:
                raise RuntimeError(f"auth env var {endpoint.auth_env_var} is not set")
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(
            headers=headers, timeout=endpoint.timeout_ms / 1000.0
        )
        self._limiter = _RateLimiter(endpoint.requests_per_second)

    def complete(self, prompt: str) -> str:
        self._limiter.wait()
        e = self.endpoint
        if e.request_mode == "chat":
            payload = {
                "messages": [{"role": "user", "content": prompt}],
                "temperature": e.temperature,
                "top_p": e.top_p,
            }
        else:
            payload = {"prompt": prompt, "temperature": e.temperature, "top_p": e.top_p}
        if e.model:
            payload["model"] = e.model
        resp = self._client.post(e.base_url, json=payload)
        resp.raise_for_status()
        body = resp.json()
        if e.request_mode == "chat":
            return body["choices"][0]["message"]["content"]
        return body["text"]

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "LlmClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def verdict_log_row(verdict: LlmVerdict) -> dict:
    return {
        "record_id": verdict.record_id,
        "model_id": verdict.model_id,
        "labels": {c.value: ("yes" if v else "no") for c, v in verdict.labels.items()},
        "reasons": {c.value: r for c, r in verdict.reasons.items()},
        "raw_sha256": hashlib.sha256(verdict.raw.encode("utf-8")).hexdigest(),
    }


def verdict_from_log_rows(rows: list[dict]) -> list[LlmVerdict]:
    """Rebuild verdicts from log rows (raw text is hashed, not stored)."""
    from .taxonomy import Category

    verdicts = []
    for row in rows:
        verdicts.append(LlmVerdict(
            model_id=row["model_id"],
            labels={Category(k): v == "yes" for k, v in row["labels"].items()},
            reasons={Category(k): v for k, v in row.get("reasons", {}).items()},
            raw="",
            record_id=row["record_id"],
        ))
    return verdicts


@dataclass
class LabelRunResult:
    """Verdicts per record plus the calls that never produced one."""

    verdicts: dict[str, list[LlmVerdict]]
    failures: list[dict]  # {"record_id", "model_id", "error"}


def label_records(
    records: list[TextRecord],
    endpoints: list[LlmEndpoint],
    toggles: PromptToggles = FULL,
    retries: int = 2,
    log_path: Optional[str | Path] = None,
) -> LabelRunResult:
    """Run every record through every endpoint and parse the verdicts.

    A call is retried up to `retries` times on transport errors or
    unparseable responses; after that the (record, model) pair is recorded
    as a failure and the record simply has one verdict fewer. Results are
    assembled in (record, endpoint) order regardless of completion order.
    """
    clients = [LlmClient(e) for e in endpoints]
    results: dict[tuple[int, int], LlmVerdict] = {}
    failures: dict[tuple[int, int], dict] = {}
    lock = threading.Lock()

    def call(ri: int, ei: int) -> None:
        record, client = records[ri], clients[ei]
        prompt = render_prompt(record.text, toggles)
        error = ""
        for _ in range(retries + 1):
            try:
                started = time.monotonic()
                raw = client.complete(prompt)
                latency = (time.monotonic() - started) * 1000.0
                verdict = parse_verdict(
                    raw, model_id=client.endpoint.name,
                    record_id=record.id, latency_ms=latency,
                )
            except (httpx.HTTPError, ParseError, KeyError) as exc:
                error = f"{type(exc).__name__}: {exc}"
                continue
            with lock:
                results[(ri, ei)] = verdict
            return
        with lock:
            failures[(ri, ei)] = {
                "record_id": record.id,
                "model_id": client.endpoint.name,
                "error": error,
            }

    try:
        with ThreadPoolExecutor(
            max_workers=max(1, sum(e.max_in_flight for e in endpoints))
        ) as pool:
            semaphores = [threading.Semaphore(e.max_in_flight) for e in endpoints]

            def guarded(ri: int, ei: int) -> None:
                with semaphores[ei]:
                    call(ri, ei)

            futures = [
                pool.submit(guarded, ri, ei)
                for ri in range(len(records))
                for ei in range(len(endpoints))
            ]
            for future in futures:
                future.result()
    finally:
        for client in clients:
            client.close()

    verdicts: dict[str, list[LlmVerdict]] = {}
    log_rows: list[dict] = []
    for ri, record in enumerate(records):
        per_record = []
        for ei in range(len(endpoints)):
            verdict = results.get((ri, ei))
            if verdict is not None:
                per_record.append(verdict)
                log_rows.append(verdict_log_row(verdict))
        verdicts[record.id] = per_record

    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            for row in log_rows:
                fh.write(json.dumps(row) + "\n")

    ordered_failures = [failures[key] for key in sorted(failures)]
    return LabelRunResult(verdicts=verdicts, failures=ordered_failures)
