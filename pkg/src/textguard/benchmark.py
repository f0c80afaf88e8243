"""Benchmark local heads against external moderation providers.

Providers return per-category scores under their own category names; those
are routed through the provider mapping onto our targets. Cells a provider
cannot produce (no mapped category) render as "-". Provider responses are
cached to disk keyed by sha256 of the text, so benchmark runs replay
offline; a canned-scores provider covers fully offline fixtures.

Reference numbers from a full-scale run (138k-text corpus, 1024-dim
embeddings) ship as documentation constants for report footers; they are
not reproducible from the synthetic desk-scale fixtures.
"""
from __future__ import annotations

import datetime as _dt
import hashlib
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

import httpx
import numpy as np

from .bundle import ModelBundle
from .labelling import LabelledRow
from .metrics import ScoredExample, pr_auc
from .taxonomy import (
    BINARY,
    CATEGORIES,
    Provider,
    PROVIDER_MAPPINGS,
    ProviderMapping,
    TriState,
    normalize_category_name,
)

# Binary PR-AUC reference results (full-scale run; documentation only).
REFERENCE_BINARY_PR_AUC: dict[str, float] = {
    "ridge": 0.819,
    "openai_moderation": 0.675,
    "perspective": 0.588,
    "llamaguard": 0.459,
}


class ProviderClient(Protocol):
    name: str
    provider: Provider

    def scores_for(self, text: str) -> dict[str, float]: ...


def text_key(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class CannedProvider:
    """Offline provider reading scores from a fixture JSONL.

    Rows: {"key": sha256(text), "scores": {category: float, ...}}.
    """

    def __init__(self, name: str, provider: Provider | str, path: str | Path):
        self.name = name
        self.provider = Provider(provider)
        self._scores: dict[str, dict[str, float]] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    row = json.loads(line)
                    self._scores[row["key"]] = row["scores"]

    def scores_for(self, text: str) -> dict[str, float]:
        key = text_key(text)
        if key not in self._scores:
            raise KeyError(f"no canned scores for text key {key[:12]}")
        return self._scores[key]


class HttpProvider:
    """Live provider: POST {"text": ...} -> {"scores": {category: float}}."""

    def __init__(
        self,
        name: str,
        provider: Provider | str,
        url: str,
        auth_env_var: Optional[str] = None,
        timeout_ms: int = 30000,
    ):
        self.name = name
        self.provider = Provider(provider)
        self.url = url
        headers = {}
        if auth_env_var:
            token = os.environ.get(auth_env_var)
            if not token:
                raise RuntimeError(f"auth env var {auth_env_var} is not set")
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(headers=headers, timeout=timeout_ms / 1000.0)

    def scores_for(self, text: str) -> dict[str, float]:
        resp = self._client.post(self.url, json={"text": text})
        resp.raise_for_status()
        return resp.json()["scores"]


class CachedProvider:
    """Append-only JSONL disk cache in front of another provider."""

    def __init__(self, inner, cache_path: str | Path):
        self.inner = inner
        self.name = inner.name
        self.provider = inner.provider
        self.cache_path = Path(cache_path)
        self._cache: dict[str, dict[str, float]] = {}
        if self.cache_path.exists():
            with open(self.cache_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        row = json.loads(line)
                        self._cache[row["key"]] = row["scores"]

    def scores_for(self, text: str) -> dict[str, float]:
        key = text_key(text)
        if key in self._cache:
            return self._cache[key]
        scores = self.inner.scores_for(text)
        self._cache[key] = scores
        with open(self.cache_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"key": key, "scores": scores}) + "\n")
        return scores


def provider_target_score(
    scores: dict[str, float],
    mapping: ProviderMapping,
    target: str,
) -> Optional[float]:
    """Project provider category scores onto one of our targets.

    Binary: max over all mapped provider categories, or the dedicated
    "unsafe" probability for unsafe_token providers. Category: max over the
    provider categories that map to it; None when nothing maps.
    """
    normalized = {normalize_category_name(k): v for k, v in scores.items()}
    if target == BINARY:
        if mapping.binary_rule == "unsafe_token":
            if "unsafe" not in normalized:
                raise KeyError(f"{mapping.provider.value} response lacks the unsafe score")
            return float(normalized["unsafe"])
        mapped = [v for k, v in normalized.items() if mapping.categories_for(k)]
        if not mapped:
            raise KeyError(f"{mapping.provider.value} response has no mapped categories")
        return float(max(mapped))
    names = mapping.provider_names_for(next(c for c in CATEGORIES if c.value == target))
    if not names:
        return None
    present = [normalized[n] for n in names if n in normalized]
    if not present:
        raise KeyError(f"{mapping.provider.value} response lacks {target} categories")
    return float(max(present))


@dataclass
class ReportCell:
    system: str
    target: str
    status: str  # "ok" | "unmapped" | "failed" | "not_applicable"
    pr_auc: Optional[float] = None
    n: int = 0
    n_pos: int = 0
    detail: str = ""

    def render(self) -> str:
        if self.status == "ok":
            return f"{self.pr_auc:.3f}"
        if self.status == "unmapped":
            return "-"
        if self.status == "failed":
            return f"failed({self.detail})"
        return "n/a"


@dataclass
class EvalReport:
    cells: list[ReportCell]
    metadata: dict = field(default_factory=dict)

    def cell(self, system: str, target: str) -> ReportCell:
        for c in self.cells:
            if c.system == system and c.target == target:
                return c
        raise KeyError(f"no cell for ({system}, {target})")

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("system,target,pr_auc,n,n_pos\n")
        for c in self.cells:
            value = f"{c.pr_auc:.6f}" if c.status == "ok" else c.render()
            out.write(f"{c.system},{c.target},{value},{c.n},{c.n_pos}\n")
        return out.getvalue()

    def to_markdown(self) -> str:
        targets = [BINARY] + [c.value for c in CATEGORIES]
        systems = []
        for c in self.cells:
            if c.system not in systems:
                systems.append(c.system)
        lines = ["| System | " + " | ".join(targets) + " |",
                 "|" + "---|" * (len(targets) + 1)]
        for system in systems:
            row = [system] + [self.cell(system, t).render() for t in targets]
            lines.append("| " + " | ".join(row) + " |")
        lines.append("")
        lines.append(
            "Reference binary PR-AUC from the full-scale run: "
            + ", ".join(f"{k} {v:.3f}" for k, v in REFERENCE_BINARY_PR_AUC.items())
        )
        return "\n".join(lines) + "\n"


def dataset_sha256(rows: Sequence[LabelledRow]) -> str:
    digest = hashlib.sha256()
    for row in rows:
        digest.update(json.dumps(row.to_dict(), sort_keys=True).encode("utf-8"))
    return digest.hexdigest()


def benchmark_report(
    bundle: ModelBundle,
    embedder,
    providers: Sequence[ProviderClient],
    rows: Sequence[LabelledRow],
    system_name: str = "textguard",
) -> EvalReport:
    """PR-AUC per (system, target) on identical record sets.

    For each target the record set is the rows whose tri-state label for
    that target is determined; rows a provider fails on mark that provider's
    cell failed (with a count) without stopping the run.
    """
    rows = list(rows)
    texts = [r.text for r in rows]

    # local head scores, one embedding pass
    vectors = embedder.embed(texts)
    X = np.vstack(vectors).astype(np.float32) if vectors else np.empty((0, bundle.dim), np.float32)

    provider_scores: dict[str, list[Optional[dict]]] = {}
    provider_failures: dict[str, int] = {}
    for provider in providers:
        per_text: list[Optional[dict]] = []
        n_failed = 0
        for text in texts:
            try:
                per_text.append(provider.scores_for(text))
            except Exception:
                per_text.append(None)
                n_failed += 1
        provider_scores[provider.name] = per_text
        provider_failures[provider.name] = n_failed

    cells: list[ReportCell] = []
    for target in [BINARY] + [c.value for c in CATEGORIES]:
        determined = [
            i for i, row in enumerate(rows) if row.labels.state(target).determined
        ]
        gold = [
            1 if rows[i].labels.state(target) is TriState.YES else 0 for i in determined
        ]
        n, n_pos = len(determined), sum(gold)

        if target in bundle.heads and n_pos > 0:
            head_scores = np.atleast_1d(np.asarray(bundle.head(target).score_raw(X[determined])))
            examples = [
                ScoredExample(rows[i].record_id, float(s), g)
                for i, s, g in zip(determined, head_scores, gold)
            ]
            cells.append(ReportCell(system_name, target, "ok",
                                    pr_auc(examples), n, n_pos))
        else:
            cells.append(ReportCell(system_name, target, "not_applicable", n=n, n_pos=n_pos))

        for provider in providers:
            mapping = PROVIDER_MAPPINGS[provider.provider]
            if target != BINARY:
                category = next(c for c in CATEGORIES if c.value == target)
                if not mapping.provider_names_for(category):
                    cells.append(ReportCell(provider.name, target, "unmapped", n=n, n_pos=n_pos))
                    continue
            if n_pos == 0:
                cells.append(ReportCell(provider.name, target, "not_applicable", n=n, n_pos=n_pos))
                continue
            per_text = provider_scores[provider.name]
            examples = []
            n_failed = 0
            for i, g in zip(determined, gold):
                scores = per_text[i]
                if scores is None:
                    n_failed += 1
                    continue
                try:
                    value = provider_target_score(scores, mapping, target)
                except KeyError:
                    n_failed += 1
                    continue
                examples.append(ScoredExample(rows[i].record_id, value, g))
            if n_failed:
                cells.append(ReportCell(provider.name, target, "failed",
                                        n=n, n_pos=n_pos, detail=str(n_failed)))
            else:
                cells.append(ReportCell(provider.name, target, "ok",
                                        pr_auc(examples), n, n_pos))

    return EvalReport(
        cells=cells,
        metadata={
            "dataset_sha256": dataset_sha256(rows),
            "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "n_rows": len(rows),
        },
    )
