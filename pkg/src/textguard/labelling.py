"""Verdict parsing, ensemble aggregation, expert scoring, dataset compilation.

Each labelling model returns a JSON object with a yes/no label and a reason
per criterion. Verdicts from N models are aggregated per category under a
majority or consensus policy into tri-state labels; the binary unsafe label
is derived per model (OR of its seven category labels) and the same policy
is then applied to those per-model binaries.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .corpus import Split, SplitAssignment, TextRecord
from .taxonomy import BINARY, CATEGORIES, Category, LabelVector, TriState, derive_binary


class ParseError(ValueError):
    """Raised when a model response cannot be read as a labelling verdict.

    ``code`` is one of ``no_json``, ``missing:<category>``, ``bad_label``.
    """

    def __init__(self, code: str, detail: str = ""):
        self.code = code
        super().__init__(f"{code}: {detail}" if detail else code)


@dataclass(frozen=True)
class LlmVerdict:
    """One model's parsed verdict for one record."""

    model_id: str
    labels: dict[Category, bool]
    reasons: dict[Category, str]
    raw: str
    latency_ms: float = 0.0
    record_id: str = ""

    def __post_init__(self) -> None:
        if set(self.labels) != set(CATEGORIES):
            raise ValueError("verdict must carry all seven category labels")

    @property
    def binary(self) -> bool:
        """This model's unsafe flag: OR of its seven category labels."""
        return any(self.labels.values())


_CRITERION_ALIASES = {
    "hateful": Category.HATEFUL,
    "harassment": Category.HARASSMENT,
    "public harm": Category.PUBLIC_HARM,
    "self harm": Category.SELF_HARM,
    "sexual": Category.SEXUAL,
    "toxic": Category.TOXIC,
    "violent": Category.VIOLENT,
}


def _normalize_criterion(key: str) -> str:
    name = re.sub(r"[\s_\-/]+", " ", key.strip().casefold()).strip()
    if name.startswith("encouraging "):
        name = name[len("encouraging "):]
    return name


def _first_json_object(raw: str) -> dict:
    decoder = json.JSONDecoder()
    for pos, ch in enumerate(raw):
        if ch != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(raw, pos)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    raise ParseError("no_json", "no JSON object found in response")


def parse_verdict(raw: str, model_id: str, record_id: str = "", latency_ms: float = 0.0) -> LlmVerdict:
    """Extract the first JSON object in raw and read the seven verdicts.

    Criterion keys are matched after separator normalization and with the
    "encouraging " prefix dropped, so "encouraging self-harm", "self_harm"
    and "Self Harm" all resolve to the same category. Labels must be
    Yes/No (case-insensitive); a missing reason is tolerated and read as "".
    """
    obj = _first_json_object(raw)
    by_category: dict[Category, dict] = {}
    for key, value in obj.items():
        category = _CRITERION_ALIASES.get(_normalize_criterion(str(key)))
        if category is not None and category not in by_category:
            by_category[category] = value

    labels: dict[Category, bool] = {}
    reasons: dict[Category, str] = {}
    for category in CATEGORIES:
        if category not in by_category:
            raise ParseError(f"missing:{category.value}", f"model {model_id}")
        entry = by_category[category]
        if not isinstance(entry, dict) or "label" not in entry:
            raise ParseError("bad_label", f"{category.value}: expected an object with a label")
        label = entry["label"]
        if not isinstance(label, str) or label.strip().casefold() not in ("yes", "no"):
            raise ParseError("bad_label", f"{category.value}: {label!r}")
        labels[category] = label.strip().casefold() == "yes"
        reason = entry.get("reason", "")
        reasons[category] = reason if isinstance(reason, str) else str(reason)

    return LlmVerdict(
        model_id=model_id, labels=labels, reasons=reasons,
        raw=raw, latency_ms=latency_ms, record_id=record_id,
    )


class Policy(str, Enum):
    MAJORITY = "majority"
    CONSENSUS = "consensus"


def _aggregate_votes(votes: list[bool], policy: Policy) -> TriState:
    n = len(votes)
    n_yes = sum(votes)
    if policy is Policy.CONSENSUS:
        if n_yes == n:
            return TriState.YES
        if n_yes == 0:
            return TriState.NO
        return TriState.UNDETERMINED
    if n_yes * 2 > n:
        return TriState.YES
    if (n - n_yes) * 2 > n:
        return TriState.NO
    return TriState.UNDETERMINED


@dataclass(frozen=True)
class EnsembleVerdict:
    """Aggregated tri-state labels for one record."""

    record_id: str
    states: dict[Category, TriState]
    votes: dict[Category, tuple[bool, ...]]
    binary: TriState
    binary_votes: tuple[bool, ...]
    policy: Policy
    n_models: int

    def label_vector(self) -> LabelVector:
        return LabelVector(dict(self.states), unsafe=self.binary)

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "policy": self.policy.value,
            "n_models": self.n_models,
            "binary": self.binary.value,
            "binary_votes": list(self.binary_votes),
            "states": {c.value: s.value for c, s in self.states.items()},
            "votes": {c.value: list(v) for c, v in self.votes.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleVerdict":
        return cls(
            record_id=d["record_id"],
            states={Category(k): TriState(v) for k, v in d["states"].items()},
            votes={Category(k): tuple(v) for k, v in d["votes"].items()},
            binary=TriState(d["binary"]),
            binary_votes=tuple(d["binary_votes"]),
            policy=Policy(d["policy"]),
            n_models=int(d["n_models"]),
        )


def aggregate_ensemble(
    verdicts: list[LlmVerdict],
    policy: Policy,
    record_id: str = "",
) -> EnsembleVerdict:
    """Aggregate N model verdicts into per-category and binary tri-states.

    Majority means a strict majority of votes (ties are undetermined);
    consensus means unanimity. The binary flag aggregates the per-model
    OR-of-categories binaries under the same policy.
    """
    if len(verdicts) < 2:
        raise ValueError(f"need at least 2 valid verdicts, got {len(verdicts)}")
    ids = {v.record_id for v in verdicts if v.record_id}
    if record_id:
        ids.add(record_id)
    if len(ids) > 1:
        raise ValueError(f"verdicts span multiple records: {sorted(ids)}")
    rid = ids.pop() if ids else ""

    states: dict[Category, TriState] = {}
    votes: dict[Category, tuple[bool, ...]] = {}
    for category in CATEGORIES:
        cat_votes = [v.labels[category] for v in verdicts]
        votes[category] = tuple(cat_votes)
        states[category] = _aggregate_votes(cat_votes, policy)

    binary_votes = tuple(v.binary for v in verdicts)
    binary = _aggregate_votes(list(binary_votes), policy)

    return EnsembleVerdict(
        record_id=rid, states=states, votes=votes, binary=binary,
        binary_votes=binary_votes, policy=policy, n_models=len(verdicts),
    )


def agreement_rate(vote_sets: list[list]) -> float:
    """Fraction of records whose votes are fully unanimous."""
    if not vote_sets:
        raise ValueError("no vote sets given")
    for i, votes in enumerate(vote_sets):
        if len(votes) < 2:
            raise ValueError(f"record {i} has fewer than 2 votes")
    unanimous = sum(1 for votes in vote_sets if len(set(votes)) == 1)
    return unanimous / len(vote_sets)


@dataclass
class ExpertSet:
    """Gold labels for the expert-labelled evaluation records."""

    entries: dict[str, LabelVector]

    def __post_init__(self) -> None:
        for rid, gold in self.entries.items():
            if not gold.unsafe.determined:
                raise ValueError(f"gold binary label undetermined for {rid!r}")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "ExpertSet":
        entries = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    entries[obj["id"]] = LabelVector(
                        {Category(k): TriState(v) for k, v in obj["labels"].items()}
                    )
        return cls(entries=entries)


def score_against_expert(ensemble: list[EnsembleVerdict], gold: ExpertSet) -> dict:
    """Binary precision/recall/F1 on records with a determined ensemble label.

    Undetermined records are dropped (n_scored reports how many were kept);
    the positive class is unsafe.
    """
    missing = [v.record_id for v in ensemble if v.record_id not in gold.entries]
    if missing:
        raise ValueError(f"gold labels missing for records: {missing[:5]}")
    tp = fp = fn = tn = 0
    n_scored = 0
    for verdict in ensemble:
        if not verdict.binary.determined:
            continue
        n_scored += 1
        predicted = verdict.binary is TriState.YES
        actual = gold.entries[verdict.record_id].unsafe is TriState.YES
        if predicted and actual:
            tp += 1
        elif predicted:
            fp += 1
        elif actual:
            fn += 1
        else:
            tn += 1
    if n_scored == 0:
        raise ValueError("no determined records to score")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"f1": f1, "precision": precision, "recall": recall, "n_scored": n_scored}


@dataclass(frozen=True)
class LabelledRow:
    """One compiled dataset row: text, split, and tri-state labels."""

    record_id: str
    text: str
    split: Split
    labels: LabelVector

    def to_dict(self) -> dict:
        return {
            "id": self.record_id,
            "text": self.text,
            "split": self.split.value,
            **self.labels.to_dict(),
        }


@dataclass
class TargetStats:
    """Label bookkeeping for one target (binary or a category)."""

    n_total: int
    n_determined: int
    n_positive: int

    @property
    def positive_rate(self) -> float:
        """Positives over determined rows (consensus-filtered denominator)."""
        return self.n_positive / self.n_determined if self.n_determined else 0.0

    @property
    def consensus_rate(self) -> float:
        return self.n_determined / self.n_total if self.n_total else 0.0

    def to_dict(self) -> dict:
        return {
            "n_total": self.n_total,
            "n_determined": self.n_determined,
            "n_positive": self.n_positive,
            "positive_rate": self.positive_rate,
            "consensus_rate": self.consensus_rate,
        }


@dataclass
class LabelledDataset:
    """Compiled rows plus per-target statistics."""

    rows: list[LabelledRow]
    stats: dict[str, TargetStats] = field(default_factory=dict)

    def rows_in(self, split: Split) -> list[LabelledRow]:
        return [r for r in self.rows if r.split is split]

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.rows:
                fh.write(json.dumps(row.to_dict()) + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "LabelledDataset":
        rows = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    rows.append(LabelledRow(
                        record_id=obj["id"],
                        text=obj.get("text", ""),
                        split=Split(obj["split"]),
                        labels=LabelVector.from_dict(obj),
                    ))
        dataset = cls(rows=rows)
        dataset.stats = dataset_stats(rows)
        return dataset


def dataset_stats(rows: list[LabelledRow]) -> dict[str, TargetStats]:
    stats = {}
    for target in (BINARY,) + tuple(c.value for c in CATEGORIES):
        n_det = n_pos = 0
        for row in rows:
            state = row.labels.state(target)
            if state.determined:
                n_det += 1
                if state is TriState.YES:
                    n_pos += 1
        stats[target] = TargetStats(n_total=len(rows), n_determined=n_det, n_positive=n_pos)
    return stats


# Reference statistics from a full-scale labelling run (138,000-text corpus,
# majority policy). Documentation constants for report footers; desk-scale
# fixtures cannot reproduce them.
FULL_SCALE_REFERENCE: dict[str, dict] = {
    "binary": {"n_positive": 8375, "positive_rate": 0.0615},
    "toxic": {"n_positive": 7295, "positive_rate": 0.0730},
}


def render_stats_report(stats: dict[str, TargetStats]) -> str:
    """Markdown table of per-target label statistics with a reference footer."""
    lines = [
        "| Target | Determined | Positive | Positive rate | Consensus rate |",
        "|---|---|---|---|---|",
    ]
    for target, ts in stats.items():
        lines.append(
            f"| {target} | {ts.n_determined} | {ts.n_positive} "
            f"| {ts.positive_rate:.2%} | {ts.consensus_rate:.2%} |"
        )
    lines.append("")
    ref = ", ".join(
        f"{target} {v['n_positive']} ({v['positive_rate']:.2%})"
        for target, v in FULL_SCALE_REFERENCE.items()
    )
    lines.append(f"Full-scale reference (138k-text run): {ref}.")
    return "\n".join(lines) + "\n"


def compile_dataset(
    ensemble: list[EnsembleVerdict],
    records: list[TextRecord],
    split: SplitAssignment,
) -> LabelledDataset:
    """Join ensemble verdicts with records and splits into a labelled dataset."""
    by_id = {r.id: r for r in records}
    rows = []
    for verdict in ensemble:
        record = by_id.get(verdict.record_id)
        if record is None:
            raise ValueError(f"no record for verdict {verdict.record_id!r}")
        if verdict.record_id not in split.assignment:
            raise ValueError(f"no split for record {verdict.record_id!r}")
        rows.append(LabelledRow(
            record_id=verdict.record_id,
            text=record.text,
            split=split.split_of(verdict.record_id),
            labels=verdict.label_vector(),
        ))
    return LabelledDataset(rows=rows, stats=dataset_stats(rows))
