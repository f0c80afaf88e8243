import json
from pathlib import Path

import numpy as np
import pytest

from textguard.bundle import head_from_model, ModelBundle
from textguard.classifier import Calibration, NnHyper, NeuralModel, RidgeModel
from textguard.corpus import ingest_records
from textguard.embeddings import EmbeddingStore, save_store, text_key

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def corpus_records():
    result = ingest_records(FIXTURES / "synthetic_corpus.jsonl")
    assert not result.rejects and not result.duplicates
    return result.records


@pytest.fixture(scope="session")
def benchmark_rows() -> list[dict]:
    with open(FIXTURES / "benchmark_records.jsonl", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh]


@pytest.fixture(scope="session")
def benchmark_expected() -> dict:
    return json.loads((FIXTURES / "benchmark_expected.json").read_text())


def build_store(path: Path, texts_or_ids, vectors, normalized=False, by_text=False):
    ids = [text_key(t) if by_text else t for t in texts_or_ids]
    save_store(path, ids, vectors, normalized=normalized)
    return EmbeddingStore(path)


@pytest.fixture()
def toy_bundle() -> ModelBundle:
    """2-d bundle whose binary head fires on dim 0 and the toxic head on dim 1."""
    binary = RidgeModel(weights=np.array([1.0, 0.0]), bias=-0.5, alpha=1.0,
                        target="binary")
    toxic = RidgeModel(weights=np.array([0.0, 1.0]), bias=0.0, alpha=1.0,
                       target="toxic")
    return ModelBundle(
        version="toy-1", dim=2, normalized=False,
        embedding_kind="store", embedding_ref="toy",
        heads={
            "binary": head_from_model(binary, Calibration(), threshold=0.0),
            "toxic": head_from_model(toxic, Calibration(), threshold=0.25),
        },
    )


@pytest.fixture()
def nn_toy_model() -> NeuralModel:
    rng = np.random.Generator(np.random.PCG64(5))
    hyper = NnHyper(hidden=4, dropout=0.0, seed=5)
    return NeuralModel(
        W1=rng.normal(size=(4, 3)),
        b1=rng.normal(size=4),
        W2=rng.normal(size=4),
        b2=float(rng.normal()),
        dropout_p=0.0,
        hyper=hyper,
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one PASS/FAIL line per acceptance criterion after the run."""
    try:
        from test_acceptance import CRITERIA
    except ImportError:
        return
    lines = []
    for status, outcome in (("passed", "PASS"), ("failed", "FAIL"),
                            ("error", "FAIL")):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            name = nodeid.rsplit("::", 1)[-1]
            if name in CRITERIA:
                lines.append((name, f"{outcome} - {CRITERIA[name]}"))
    if not lines:
        return
    order = {name: i for i, name in enumerate(CRITERIA)}
    terminalreporter.write_sep("=", "acceptance criteria")
    for _, line in sorted(lines, key=lambda item: order.get(item[0], 99)):
        terminalreporter.write_line(line)
