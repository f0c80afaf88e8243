"""Corpus ingestion, keyword flagging, pool sampling, and thread-safe splits.

Raw comments arrive as JSONL files. A keyword lexicon marks likely-unsafe
texts, the training pool is drawn stratified from flagged and unflagged
records, and train/valid/test splits are assigned at thread granularity so
that no thread straddles two splits.

All sampling uses numpy's PCG64 generator with an explicit seed, so pools and
splits are reproducible across platforms.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np


class Source(str, Enum):
    FORUM_A = "forum_a"
    FORUM_B = "forum_b"
    OTHER = "other"


class Split(str, Enum):
    TRAIN = "train"
    VALID = "valid"
    TEST = "test"


SPLITS: tuple[Split, ...] = (Split.TRAIN, Split.VALID, Split.TEST)

DEFAULT_RATIOS: tuple[float, float, float] = (0.70, 0.15, 0.15)


@dataclass(frozen=True)
class TextRecord:
    """One corpus text; the unit of labelling and splitting."""

    id: str
    thread_id: str
    source: Source
    timestamp: int
    text: str

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "thread_id": self.thread_id,
            "source": self.source.value,
            "timestamp": self.timestamp,
            "text": self.text,
        }


class MatchMode(str, Enum):
    SUBSTRING = "substring"
    WORD_BOUNDARY = "word_boundary"


@dataclass(frozen=True)
class KeywordLexicon:
    """Ordered lowercase terms, each with a match mode (default substring)."""

    terms: tuple[str, ...]
    modes: dict[str, MatchMode] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(set(self.terms)) != len(self.terms):
            raise ValueError("lexicon contains duplicate terms")
        if any(not t for t in self.terms):
            raise ValueError("lexicon contains an empty term")
        # precompile word-boundary patterns once
        patterns = {
            t: re.compile(r"\b" + re.escape(t) + r"\b")
            for t, m in self.modes.items()
            if m is MatchMode.WORD_BOUNDARY
        }
        object.__setattr__(self, "_boundary_patterns", patterns)

    def mode_of(self, term: str) -> MatchMode:
        return self.modes.get(term, MatchMode.SUBSTRING)

    def matches(self, text: str) -> bool:
        folded = text.casefold()
        for term in self.terms:
            pattern = self._boundary_patterns.get(term)
            if pattern is not None:
                if pattern.search(folded):
                    return True
            elif term in folded:
                return True
        return False


def default_lexicon() -> KeywordLexicon:
    """The packaged controversial-terms lexicon."""
    raw = json.loads(
        resources.files("textguard").joinpath("data/controversial_terms.json").read_text("utf-8")
    )
    boundary = set(raw.get("word_boundary", ()))
    return KeywordLexicon(
        terms=tuple(raw["terms"]),
        modes={t: MatchMode.WORD_BOUNDARY for t in boundary},
    )


@dataclass
class IngestResult:
    """Validated records plus an account of everything dropped."""

    records: list[TextRecord]
    rejects: list[dict]      # {"line": int, "reason": str}
    duplicates: list[dict]   # {"line": int, "id": str}

    @property
    def dropped(self) -> int:
        return len(self.rejects) + len(self.duplicates)

    def write_rejects(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.rejects:
                fh.write(json.dumps(row) + "\n")


def _validate_line(obj: dict, default_source: Source) -> TextRecord:
    for key in ("id", "thread_id", "timestamp", "text"):
        if key not in obj:
            raise ValueError(f"missing field: {key}")
    rid = str(obj["id"])
    thread_id = str(obj["thread_id"])
    text = str(obj["text"])
    if not rid:
        raise ValueError("empty id")
    if not thread_id:
        raise ValueError("empty thread_id")
    if not text.strip():
        raise ValueError("empty text")
    if not isinstance(obj["timestamp"], int) or isinstance(obj["timestamp"], bool):
        raise ValueError("timestamp must be an integer")
    source = default_source
    if "source" in obj:
        try:
            source = Source(obj["source"])
        except ValueError:
            raise ValueError(f"unknown source: {obj['source']!r}") from None
    return TextRecord(
        id=rid, thread_id=thread_id, source=source,
        timestamp=obj["timestamp"], text=text,
    )


def ingest_records(path: str | Path, source: Source = Source.OTHER) -> IngestResult:
    """Read a JSONL comment file into validated, id-deduplicated records.

    Malformed lines land in the rejects list with their 1-based line number;
    a repeated id keeps the first occurrence and logs the rest as duplicates.
    """
    records: list[TextRecord] = []
    rejects: list[dict] = []
    duplicates: list[dict] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("line is not a JSON object")
                record = _validate_line(obj, source)
            except (json.JSONDecodeError, ValueError) as exc:
                rejects.append({"line": lineno, "reason": str(exc)})
                continue
            if record.id in seen:
                duplicates.append({"line": lineno, "id": record.id})
                continue
            seen.add(record.id)
            records.append(record)
    return IngestResult(records=records, rejects=rejects, duplicates=duplicates)


def flag_controversial(record: TextRecord | str, lexicon: KeywordLexicon) -> bool:
    """True iff any lexicon term matches the case-folded text."""
    if not lexicon.terms:
        raise ValueError("lexicon is empty")
    text = record.text if isinstance(record, TextRecord) else record
    if not text:
        return False
    return lexicon.matches(text)


def sample_pool(
    records: list[TextRecord],
    lexicon: KeywordLexicon,
    n_flagged: int,
    n_random: int,
    seed: int,
) -> list[TextRecord]:
    """Draw n_flagged keyword-flagged plus n_random unflagged records.

    Sampling is uniform without replacement inside each stratum; input order
    is preserved within the result (flagged records first).
    """
    flagged = [r for r in records if flag_controversial(r, lexicon)]
    unflagged = [r for r in records if not flag_controversial(r, lexicon)]
    if n_flagged > len(flagged):
        raise ValueError(f"flagged stratum has {len(flagged)} < {n_flagged}")
    if n_random > len(unflagged):
        raise ValueError(f"unflagged stratum has {len(unflagged)} < {n_random}")
    rng = np.random.Generator(np.random.PCG64(seed))
    take_f = np.sort(rng.choice(len(flagged), size=n_flagged, replace=False))
    take_r = np.sort(rng.choice(len(unflagged), size=n_random, replace=False))
    return [flagged[i] for i in take_f] + [unflagged[i] for i in take_r]


@dataclass
class SplitAssignment:
    """record_id → split, with the target ratios and any assignment warnings."""

    assignment: dict[str, Split]
    ratios: tuple[float, float, float]
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError(f"ratios must sum to 1, got {sum(self.ratios)}")

    def split_of(self, record_id: str) -> Split:
        return self.assignment[record_id]

    def counts(self) -> dict[Split, int]:
        out = {s: 0 for s in SPLITS}
        for s in self.assignment.values():
            out[s] += 1
        return out

    def ids_in(self, split: Split) -> list[str]:
        return [rid for rid, s in self.assignment.items() if s is split]

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rid, s in self.assignment.items():
                fh.write(json.dumps({"id": rid, "split": s.value}) + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path, ratios: tuple[float, float, float] = DEFAULT_RATIOS) -> "SplitAssignment":
        assignment = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    assignment[obj["id"]] = Split(obj["split"])
        return cls(assignment=assignment, ratios=ratios)


def split_by_thread(
    records: list[TextRecord],
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> SplitAssignment:
    """Assign whole threads to train/valid/test by greedy deficit filling.

    Threads are shuffled with the seed, then each is placed in the split
    whose record-count deficit against its target is currently largest
    (ties go to the earlier split: train, valid, test). Keeping threads
    intact bounds each split's deviation from its target by the largest
    thread size, so fractions stay within 2 percentage points whenever no
    thread exceeds 2% of the corpus.
    """
    if not records:
        raise ValueError("no records to split")
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")

    threads: dict[str, list[str]] = {}
    for r in records:
        threads.setdefault(r.thread_id, []).append(r.id)

    thread_ids = list(threads)
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(thread_ids))

    n = len(records)
    targets = [ratio * n for ratio in ratios]
    assigned = [0.0, 0.0, 0.0]
    warnings: list[str] = []
    assignment: dict[str, Split] = {}

    for idx in order:
        tid = thread_ids[idx]
        size = len(threads[tid])
        deficits = [targets[k] - assigned[k] for k in range(3)]
        k = max(range(3), key=lambda j: (deficits[j], -j))
        if size > targets[k]:
            warnings.append(
                f"thread {tid!r} ({size} records) exceeds the {SPLITS[k].value} "
                f"target of {targets[k]:.1f}; split fractions may be off"
            )
        assigned[k] += size
        for rid in threads[tid]:
            assignment[rid] = SPLITS[k]

    for k, s in enumerate(SPLITS):
        if assigned[k] == 0:
            warnings.append(f"split {s.value} received no records")

    return SplitAssignment(assignment=assignment, ratios=ratios, warnings=warnings)


def write_records(records: Iterable[TextRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict()) + "\n")
