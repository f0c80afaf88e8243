"""textguard: localized content-moderation toolkit.

Pipeline: ingest and sample a comment corpus, label it with an ensemble of
LLM endpoints under a consensus/majority policy, train per-label classifier
heads over text embeddings, evaluate with PR-AUC against external
moderation providers, and serve the trained bundle as a guardrail service.
"""
from .benchmark import CannedProvider, EvalReport, benchmark_report
from .bundle import ModelBundle, head_from_model
from .classifier import (
    Calibration,
    NnHyper,
    RidgeModel,
    NeuralModel,
    filter_consensus_rows,
    fit_sigmoid_calibration,
    nn_score,
    ridge_score,
    train_nn,
    train_ridge,
)
from .corpus import (
    KeywordLexicon,
    Split,
    SplitAssignment,
    TextRecord,
    default_lexicon,
    flag_controversial,
    ingest_records,
    sample_pool,
    split_by_thread,
)
from .embeddings import EmbeddingStore, RemoteEmbedder, StoreEmbedder, fetch_remote, normalize
from .labelling import (
    EnsembleVerdict,
    ExpertSet,
    LabelledDataset,
    LlmVerdict,
    ParseError,
    Policy,
    aggregate_ensemble,
    agreement_rate,
    compile_dataset,
    parse_verdict,
    score_against_expert,
)
from .llm import LlmEndpoint, label_records, load_endpoints
from .metrics import ScoredExample, pr_auc, prf1
from .prompts import PromptToggles, render_prompt
from .service import ModerationResult, ServiceConfig, create_app, moderate, serve
from .taxonomy import (
    BINARY,
    CATEGORIES,
    Category,
    LabelVector,
    Provider,
    TriState,
    derive_binary,
    map_external_category,
)

__version__ = "0.1.0"
