"""Command-line entry points for the moderation pipeline.

One subcommand per pipeline stage, each a thin shell over the library. File
formats are JSONL throughout; secrets (API tokens) are read from environment
variables named in config files, never from the files themselves.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import benchmark as bench
from .bundle import ModelBundle, head_from_model
from .classifier import (
    NnHyper,
    RIDGE_ALPHA_DEFAULT,
    filter_consensus_rows,
    fit_sigmoid_calibration,
    train_nn,
    train_ridge,
)
from .corpus import (
    DEFAULT_RATIOS,
    Source,
    SplitAssignment,
    default_lexicon,
    flag_controversial,
    ingest_records,
    sample_pool,
    split_by_thread,
    write_records,
)
from .embeddings import (
    EmbeddingEndpoint,
    EmbeddingStore,
    StoreEmbedder,
    fetch_remote,
    normalize,
    save_store,
    text_key,
)
from .labelling import (
    EnsembleVerdict,
    LabelledDataset,
    Policy,
    aggregate_ensemble,
    compile_dataset,
    render_stats_report,
)
from .llm import label_records, load_endpoints, verdict_from_log_rows
from .metrics import ScoredExample, pr_auc
from .prompts import PromptToggles
from .service import ServiceConfig, moderate as moderate_texts
from .service import serve as serve_service
from .taxonomy import ALL_TARGETS, BINARY, TriState


def _read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


def _read_records(path: str | Path):
    result = ingest_records(path)
    if result.rejects:
        click.echo(f"warning: {len(result.rejects)} rejected lines in {path}", err=True)
    return result.records


@click.group()
def main() -> None:
    """Content-moderation pipeline: corpus to guardrail service."""


@main.command()
@click.argument("path", type=click.Path(exists=True))
@click.option("--source", type=click.Choice([s.value for s in Source]), default="other")
@click.option("--out", type=click.Path(), required=True, help="Validated records JSONL.")
@click.option("--rejects", type=click.Path(), default=None, help="Rejects report JSONL.")
def ingest(path: str, source: str, out: str, rejects: str | None) -> None:
    """Validate and deduplicate a raw comment file."""
    result = ingest_records(path, Source(source))
    write_records(result.records, out)
    if rejects:
        result.write_rejects(rejects)
    click.echo(
        f"{len(result.records)} records, {len(result.rejects)} rejects, "
        f"{len(result.duplicates)} duplicate ids"
    )


@main.command()
@click.argument("path", type=click.Path(exists=True))
@click.option("--n-flagged", type=int, required=True)
@click.option("--n-random", type=int, required=True)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), required=True)
def sample(path: str, n_flagged: int, n_random: int, seed: int, out: str) -> None:
    """Draw the stratified training pool from ingested records."""
    records = _read_records(path)
    lexicon = default_lexicon()
    pool = sample_pool(records, lexicon, n_flagged, n_random, seed)
    write_records(pool, out)
    n_f = sum(1 for r in pool if flag_controversial(r, lexicon))
    click.echo(f"pool of {len(pool)} records ({n_f} flagged, {len(pool) - n_f} random)")


@main.command()
@click.argument("path", type=click.Path(exists=True))
@click.option("--ratios", default="0.70,0.15,0.15", show_default=True)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), required=True)
def split(path: str, ratios: str, seed: int, out: str) -> None:
    """Assign whole threads to train/valid/test."""
    parts = tuple(float(x) for x in ratios.split(","))
    if len(parts) != 3:
        raise click.BadParameter("ratios must be three comma-separated fractions")
    records = _read_records(path)
    assignment = split_by_thread(records, parts, seed)
    assignment.write_jsonl(out)
    for warning in assignment.warnings:
        click.echo(f"warning: {warning}", err=True)
    counts = assignment.counts()
    click.echo(", ".join(f"{s.value}: {counts[s]}" for s in counts))


@main.command()
@click.argument("path", type=click.Path(exists=True))
@click.option("--endpoints", "endpoints_path", type=click.Path(exists=True), required=True,
              help="TOML/JSON endpoint config; auth tokens via env vars.")
@click.option("--out", type=click.Path(), required=True, help="Verdict log JSONL.")
@click.option("--no-context", is_flag=True, help="Ablate the context block.")
@click.option("--no-fewshot", is_flag=True, help="Ablate the few-shot block.")
@click.option("--no-cot", is_flag=True, help="Ablate the chain-of-thought block.")
@click.option("--retries", type=int, default=2, show_default=True)
def label(path: str, endpoints_path: str, out: str,
          no_context: bool, no_fewshot: bool, no_cot: bool, retries: int) -> None:
    """Run every record through the LLM ensemble."""
    records = _read_records(path)
    endpoints = load_endpoints(endpoints_path)
    toggles = PromptToggles(context=not no_context, fewshot=not no_fewshot, cot=not no_cot)
    result = label_records(records, endpoints, toggles, retries=retries, log_path=out)
    n_verdicts = sum(len(v) for v in result.verdicts.values())
    click.echo(f"{n_verdicts} verdicts over {len(records)} records, "
               f"{len(result.failures)} failed calls")


@main.command()
@click.argument("log_path", type=click.Path(exists=True))
@click.option("--policy", type=click.Choice([p.value for p in Policy]), default="majority",
              show_default=True)
@click.option("--out", type=click.Path(), required=True, help="Ensemble verdicts JSONL.")
def aggregate(log_path: str, policy: str, out: str) -> None:
    """Aggregate logged verdicts into tri-state ensemble labels."""
    rows = _read_jsonl(log_path)
    by_record: dict[str, list[dict]] = {}
    for row in rows:
        by_record.setdefault(row["record_id"], []).append(row)
    unlabelled = 0
    with open(out, "w", encoding="utf-8") as fh:
        for record_id, record_rows in by_record.items():
            verdicts = verdict_from_log_rows(record_rows)
            if len(verdicts) < 2:
                unlabelled += 1
                continue
            ensemble = aggregate_ensemble(verdicts, Policy(policy), record_id=record_id)
            fh.write(json.dumps(ensemble.to_dict()) + "\n")
    click.echo(f"{len(by_record) - unlabelled} records aggregated, {unlabelled} unlabelled")


@main.command(name="compile")
@click.option("--ensemble", "ensemble_path", type=click.Path(exists=True), required=True)
@click.option("--records", "records_path", type=click.Path(exists=True), required=True)
@click.option("--splits", "splits_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True, help="Labelled dataset JSONL.")
@click.option("--stats", "stats_path", type=click.Path(), default=None, help="Stats report (Markdown).")
def compile_cmd(ensemble_path: str, records_path: str, splits_path: str,
                out: str, stats_path: str | None) -> None:
    """Join ensemble labels, records, and splits into the labelled dataset."""
    ensemble = [EnsembleVerdict.from_dict(d) for d in _read_jsonl(ensemble_path)]
    records = _read_records(records_path)
    assignment = SplitAssignment.read_jsonl(splits_path)
    dataset = compile_dataset(ensemble, records, assignment)
    dataset.write_jsonl(out)
    report = render_stats_report(dataset.stats)
    if stats_path:
        Path(stats_path).write_text(report, encoding="utf-8")
    click.echo(report)


@main.command()
@click.argument("dataset_path", type=click.Path(exists=True))
@click.option("--url", required=True, help="Embedding endpoint URL.")
@click.option("--auth-env-var", default=None)
@click.option("--out", type=click.Path(), required=True, help="Embedding store file.")
@click.option("--batch", type=int, default=64, show_default=True)
@click.option("--normalize/--no-normalize", "do_normalize", default=True, show_default=True)
def embed(dataset_path: str, url: str, auth_env_var: str | None,
          out: str, batch: int, do_normalize: bool) -> None:
    """Fetch embeddings for dataset texts and write a store keyed by text hash."""
    dataset = LabelledDataset.read_jsonl(dataset_path)
    endpoint = EmbeddingEndpoint(url=url, auth_env_var=auth_env_var, max_batch=batch)
    seen: dict[str, np.ndarray] = {}
    texts = [row.text for row in dataset.rows]
    for start in range(0, len(texts), batch):
        chunk = texts[start:start + batch]
        for text, vector in zip(chunk, fetch_remote(chunk, endpoint)):
            key = text_key(text)
            if key not in seen:
                seen[key] = normalize(vector) if do_normalize else vector
    ids = list(seen)
    matrix = np.vstack([seen[k] for k in ids])
    save_store(out, ids, matrix, normalized=do_normalize)
    click.echo(f"stored {len(ids)} vectors of dim {matrix.shape[1]}")


@main.command()
@click.option("--dataset", "dataset_path", type=click.Path(exists=True), required=True)
@click.option("--store", "store_path", type=click.Path(exists=True), required=True)
@click.option("--out", "bundle_dir", type=click.Path(), required=True)
@click.option("--head", "head_kind", type=click.Choice(["ridge", "nn"]), default="ridge",
              show_default=True)
@click.option("--alpha", type=float, default=RIDGE_ALPHA_DEFAULT, show_default=True)
@click.option("--hidden", type=int, default=64, show_default=True)
@click.option("--dropout", type=float, default=0.2, show_default=True)
@click.option("--epochs", type=int, default=30, show_default=True)
@click.option("--batch", type=int, default=8, show_default=True)
@click.option("--lr", type=float, default=0.001, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--calibrate/--no-calibrate", default=True, show_default=True,
              help="Fit sigmoid calibration on the validation split.")
def train(dataset_path: str, store_path: str, bundle_dir: str, head_kind: str,
          alpha: float, hidden: int, dropout: float, epochs: int, batch: int,
          lr: float, seed: int, calibrate: bool) -> None:
    """Train one head per target and package them as a bundle."""
    from .corpus import Split

    dataset = LabelledDataset.read_jsonl(dataset_path)
    store = EmbeddingStore(store_path)
    embedder = StoreEmbedder(store)
    heads = {}
    for target in ALL_TARGETS:
        train_rows = LabelledDataset(rows=dataset.rows_in(Split.TRAIN))
        try:
            filtered = filter_consensus_rows(train_rows, target)
        except ValueError:
            click.echo(f"skipping {target}: no determined training rows", err=True)
            continue
        X = np.vstack(embedder.embed([r.text for r in filtered.rows]))
        if head_kind == "ridge":
            try:
                model = train_ridge(X, filtered.y, alpha=alpha, target=target)
            except ValueError as exc:
                click.echo(f"skipping {target}: {exc}", err=True)
                continue
        else:
            y01 = (filtered.y > 0).astype(np.float64)
            hyper = NnHyper(epochs=epochs, batch=batch, lr=lr, hidden=hidden,
                            dropout=dropout, seed=seed)
            try:
                model = train_nn(X, y01, hyper, target=target)
            except ValueError as exc:
                click.echo(f"skipping {target}: {exc}", err=True)
                continue

        calibration = None
        if calibrate and head_kind == "ridge":
            valid_rows = LabelledDataset(rows=dataset.rows_in(Split.VALID))
            try:
                vfiltered = filter_consensus_rows(valid_rows, target)
                Xv = np.vstack(embedder.embed([r.text for r in vfiltered.rows]))
                from .classifier import ridge_score
                raw = np.atleast_1d(np.asarray(ridge_score(model, Xv)))
                y01v = (vfiltered.y > 0).astype(np.float64)
                if len(set(y01v)) == 2:
                    calibration = fit_sigmoid_calibration(raw, y01v)
            except ValueError:
                pass
        heads[target] = head_from_model(model, calibration=calibration)
        click.echo(f"trained {target} ({head_kind}) on {len(filtered.rows)} rows "
                   f"(kept {filtered.kept_fraction:.0%})")

    if BINARY not in heads:
        raise click.ClickException("no binary head could be trained")
    bundle = ModelBundle(
        dim=store.dim, normalized=store.normalized,
        embedding_kind="store", embedding_ref=str(store_path),
        heads=heads,
    )
    bundle.save(bundle_dir)
    click.echo(f"bundle with {len(heads)} heads saved to {bundle_dir}")


@main.command(name="eval")
@click.option("--dataset", "dataset_path", type=click.Path(exists=True), required=True)
@click.option("--store", "store_path", type=click.Path(exists=True), required=True)
@click.option("--bundle", "bundle_dir", type=click.Path(exists=True), required=True)
@click.option("--split", "split_name", default="test", show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Report CSV path.")
def eval_cmd(dataset_path: str, store_path: str, bundle_dir: str,
             split_name: str, out: str | None) -> None:
    """PR-AUC of the bundle heads on one dataset split."""
    from .corpus import Split

    dataset = LabelledDataset.read_jsonl(dataset_path)
    rows = dataset.rows_in(Split(split_name))
    bundle = ModelBundle.load(bundle_dir)
    embedder = StoreEmbedder(EmbeddingStore(store_path))
    report = bench.benchmark_report(bundle, embedder, [], rows)
    click.echo(report.to_markdown())
    if out:
        Path(out).write_text(report.to_csv(), encoding="utf-8")


@main.command()
@click.option("--dataset", "dataset_path", type=click.Path(exists=True), required=True)
@click.option("--store", "store_path", type=click.Path(exists=True), required=True)
@click.option("--bundle", "bundle_dir", type=click.Path(exists=True), required=True)
@click.option("--providers", "providers_path", type=click.Path(exists=True), required=True,
              help="JSON list of provider configs (canned or http).")
@click.option("--split", "split_name", default="test", show_default=True)
@click.option("--out-csv", type=click.Path(), default=None)
@click.option("--out-md", type=click.Path(), default=None)
def benchmark(dataset_path: str, store_path: str, bundle_dir: str, providers_path: str,
              split_name: str, out_csv: str | None, out_md: str | None) -> None:
    """Compare bundle heads to external providers on the test split."""
    from .corpus import Split

    dataset = LabelledDataset.read_jsonl(dataset_path)
    rows = dataset.rows_in(Split(split_name))
    bundle = ModelBundle.load(bundle_dir)
    embedder = StoreEmbedder(EmbeddingStore(store_path))

    providers = []
    config = json.loads(Path(providers_path).read_text("utf-8"))
    for entry in config["providers"]:
        kind = entry.get("kind", "canned")
        if kind == "canned":
            providers.append(bench.CannedProvider(entry["name"], entry["provider"], entry["path"]))
        elif kind == "http":
            client = bench.HttpProvider(
                entry["name"], entry["provider"], entry["url"],
                auth_env_var=entry.get("auth_env_var"),
                timeout_ms=entry.get("timeout_ms", 30000),
            )
            if "cache" in entry:
                client = bench.CachedProvider(client, entry["cache"])
            providers.append(client)
        else:
            raise click.ClickException(f"unknown provider kind: {kind}")

    report = bench.benchmark_report(bundle, embedder, providers, rows)
    click.echo(report.to_markdown())
    if out_csv:
        Path(out_csv).write_text(report.to_csv(), encoding="utf-8")
    if out_md:
        Path(out_md).write_text(report.to_markdown(), encoding="utf-8")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
def serve(config_path: str) -> None:
    """Run the moderation HTTP service."""
    try:
        config = ServiceConfig.load(config_path)
        serve_service(config)
    except Exception as exc:
        click.echo(f"startup failed: {exc}", err=True)
        sys.exit(1)


@main.command()
@click.option("--bundle", "bundle_dir", type=click.Path(exists=True), required=True)
@click.option("--store", "store_path", type=click.Path(exists=True), default=None)
@click.option("--url", "embedding_url", default=None, help="Remote embedding endpoint.")
@click.option("--auth-env-var", default=None)
@click.option("--text", "texts", multiple=True, help="Text to moderate (repeatable).")
@click.option("--file", "file_path", type=click.Path(exists=True), default=None,
              help="File with one text per line.")
def moderate(bundle_dir: str, store_path: str | None, embedding_url: str | None,
             auth_env_var: str | None, texts: tuple[str, ...], file_path: str | None) -> None:
    """Moderate texts from the command line; prints one JSON result per line."""
    inputs = list(texts)
    if file_path:
        with open(file_path, "r", encoding="utf-8") as fh:
            inputs.extend(line.rstrip("\n") for line in fh if line.strip())
    if not inputs:
        raise click.ClickException("nothing to moderate: pass --text or --file")

    bundle = ModelBundle.load(bundle_dir)
    if store_path:
        embedder = StoreEmbedder(EmbeddingStore(store_path))
    elif embedding_url:
        from .embeddings import RemoteEmbedder
        embedder = RemoteEmbedder(
            EmbeddingEndpoint(url=embedding_url, auth_env_var=auth_env_var),
            dim=bundle.dim,
        )
    else:
        raise click.ClickException("pass --store or --url for embeddings")

    for result in moderate_texts(inputs, bundle, embedder):
        click.echo(json.dumps(result.to_dict()))


if __name__ == "__main__":
    main()
