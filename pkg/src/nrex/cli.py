"""Command line entry points.

Exit codes: 0 on success, 1 for validation or usage problems (bad
corpus, bad config, bad flags), 2 for a missing input artifact.
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import click

from . import __version__
from .config import ConfigError, RunConfig, apply_items, load_config
from .corpus import Corpus, CorpusError, load_corpus, save_corpus
from .embeddings import (
    EmbeddingFileError,
    EmbeddingStore,
    build_hash_store,
    load_embeddings,
    save_embeddings,
)
from .evaluate import (
    BASELINES,
    MODES,
    evaluate_baseline,
    evaluate_high,
    evaluate_low,
    evaluate_overall,
    run_ablations,
    run_protocol,
    split_corpus,
)
from .extractor import ExtractorModel, train_low
from .graph import build_graph
from .nn import load_json, save_json
from .report import emit_report, load_report
from .retriever import RetrieverModel, train_high
from .synth import SynthConfig, generate_corpus

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "nrex-checkpoint-v1"


def _build_config(config_path: str | None, overrides: tuple[str, ...]) -> RunConfig:
    cfg = RunConfig()
    if config_path:
        cfg = load_config(config_path, cfg)
    items = {}
    for raw in overrides:
        if "=" not in raw:
            raise ConfigError(f"--set expects key=value, got {raw!r}")
        key, _, value = raw.partition("=")
        items[key.strip()] = value.strip()
    return apply_items(cfg, items) if items else cfg


def _load_store(corpus: Corpus, embeddings: str | None, cfg: RunConfig) -> EmbeddingStore:
    if embeddings:
        return load_embeddings(embeddings)
    log.info("no embedding file given, hashing all texts at dim %d", cfg.emb_dim)
    return build_hash_store(corpus, cfg.emb_dim)


@click.group()
@click.version_option(__version__, prog_name="nrex")
@click.option("-v", "--verbose", count=True, help="-v for info, -vv for debug.")
def cli(verbose: int) -> None:
    """Two-stage N-ary relation extraction over text and tables."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--graphs", "graphs_path", type=click.Path(), default=None,
              help="Also dump every document's entity graph to this JSON file.")
def ingest(corpus_path: str, graphs_path: str | None) -> None:
    """Validate a corpus file and print a summary."""
    corpus = load_corpus(corpus_path)
    n_comp = sum(len(d.components) for d in corpus.documents)
    n_ent = sum(
        len(c.all_mentions()) for d in corpus.documents for c in d.components
    )
    n_q = sum(len(d.queries) for d in corpus.documents)
    click.echo(
        f"ok: {len(corpus.documents)} documents, arity {corpus.n}, "
        f"{n_comp} components, {n_ent} entities, {n_q} queries"
    )
    if graphs_path:
        payload = {
            doc.doc_id: build_graph(doc).to_dict() for doc in corpus.documents
        }
        Path(graphs_path).write_text(
            json.dumps(payload, indent=1) + "\n", encoding="utf-8"
        )
        click.echo(f"wrote graphs to {graphs_path}")


@cli.command()
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--docs", default=100, show_default=True)
@click.option("--arity", default=3, show_default=True)
@click.option("--components", default=8, show_default=True)
@click.option("--table-fraction", default=0.25, show_default=True)
@click.option("--entities", default=6, show_default=True)
@click.option("--queries", default=4, show_default=True)
@click.option("--noise", default=0.3, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--vocab-seed", default=1234, show_default=True)
def synth(
    out_path, docs, arity, components, table_fraction, entities, queries, noise,
    seed, vocab_seed,
) -> None:
    """Generate a synthetic corpus with planted answers."""
    cfg = SynthConfig(
        n_docs=docs,
        n=arity,
        components_per_doc=components,
        table_fraction=table_fraction,
        entities_per_component=entities,
        queries_per_doc=queries,
        noise=noise,
        seed=seed,
        vocab_seed=vocab_seed,
    )
    corpus = generate_corpus(cfg)
    save_corpus(corpus, out_path)
    click.echo(f"wrote {len(corpus.documents)} documents to {out_path}")


@cli.command("embed-hash")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--dim", default=64, show_default=True)
def embed_hash(corpus_path: str, out_path: str, dim: int) -> None:
    """Write hashed trigram embeddings for every corpus key."""
    corpus = load_corpus(corpus_path)
    store = build_hash_store(corpus, dim)
    save_embeddings(store, out_path)
    click.echo(f"wrote {len(store)} vectors (dim {dim}) to {out_path}")


@cli.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--stage", type=click.Choice(["high", "low", "both"]), default="both",
              show_default=True)
@click.option("--embeddings", "embeddings_path", type=click.Path(), default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE")
def train(corpus_path, stage, embeddings_path, out_path, config_path, overrides):
    """Train on the config's train/dev split and save a checkpoint."""
    cfg = _build_config(config_path, overrides)
    corpus = load_corpus(corpus_path)
    store = _load_store(corpus, embeddings_path, cfg)
    train_docs, dev_docs, _ = split_corpus(corpus.documents, cfg.split, cfg.seed)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": cfg.to_dict(),
        "n": corpus.n,
        "high": None,
        "low": None,
        "history": {},
    }
    if stage in ("high", "both"):
        model, history = train_high(train_docs, dev_docs, corpus.n, store, cfg)
        payload["high"] = model.to_dict()
        payload["history"]["high"] = history
        click.echo(f"high stage: best dev acc {max(history['dev_acc']):.4f}")
    if stage in ("low", "both"):
        model, history = train_low(train_docs, dev_docs, corpus.n, store, cfg)
        payload["low"] = model.to_dict()
        payload["history"]["low"] = history
        click.echo(f"low stage: best dev acc {max(history['dev_acc']):.4f}")
    save_json(payload, out_path)
    click.echo(f"wrote checkpoint to {out_path}")


def _read_checkpoint(path: str) -> dict:
    payload = load_json(path)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(
            f"{path}: not a checkpoint file (format={payload.get('format')!r})"
        )
    return payload


@cli.command("eval")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(list(MODES)), required=True)
@click.option("--model", "model_path", type=click.Path(), default=None,
              help="Checkpoint from `nrex train`; omit with --protocol or --baseline.")
@click.option("--baseline", type=click.Choice(list(BASELINES)), default=None)
@click.option("--protocol", is_flag=True,
              help="Train and evaluate across n_seeds splits instead of "
                   "scoring one checkpoint.")
@click.option("--embeddings", "embeddings_path", type=click.Path(), default=None)
@click.option("--out", "out_prefix", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE")
@click.option("--figures/--no-figures", default=True, show_default=True)
def eval_cmd(
    corpus_path, mode, model_path, baseline, protocol, embeddings_path,
    out_prefix, config_path, overrides, figures,
):
    """Evaluate on the held-out test split and write a report."""
    cfg = _build_config(config_path, overrides)
    corpus = load_corpus(corpus_path)
    store = _load_store(corpus, embeddings_path, cfg)
    if baseline is not None:
        if mode != "high":
            raise ConfigError("baselines only rank components (mode high)")
        _, _, test_docs = split_corpus(corpus.documents, cfg.split, cfg.seed)
        result = evaluate_baseline(baseline, test_docs, store)
        rows = [_single_row(baseline, mode, cfg, result)]
    elif protocol:
        rows = [run_protocol(corpus, store, cfg, mode)]
    else:
        if model_path is None:
            raise ConfigError("--model is required without --protocol/--baseline")
        payload = _read_checkpoint(model_path)
        ckpt_cfg = apply_items(
            RunConfig(),
            {
                k: ",".join(str(x) for x in v) if isinstance(v, list) else str(v)
                for k, v in payload["config"].items()
            },
        )
        if config_path or overrides:
            ckpt_cfg = _build_config(config_path, overrides)
        _, _, test_docs = split_corpus(
            corpus.documents, ckpt_cfg.split, ckpt_cfg.seed
        )
        rows = [_eval_checkpoint(payload, mode, test_docs, store, ckpt_cfg)]
    files = emit_report(rows, out_prefix, figures=figures)
    click.echo(render_summary(rows))
    for f in files:
        click.echo(f"wrote {f}")


def render_summary(rows: list[dict]) -> str:
    from .report import render_text_table

    return render_text_table(rows).rstrip()


def _single_row(method: str, mode: str, cfg: RunConfig, result: dict) -> dict:
    return {
        "method": method,
        "mode": mode,
        "config": cfg.to_dict(),
        "per_seed": [{"seed": cfg.seed, **result}],
        "mean": result["metrics"],
        "stddev": None,
        "history": {},
    }


def _eval_checkpoint(payload, mode, test_docs, store, cfg) -> dict:
    high = low = None
    if payload["high"] is not None:
        high = RetrieverModel.from_dict(payload["high"])
    if payload["low"] is not None:
        low = ExtractorModel.from_dict(payload["low"])
    if mode == "high":
        if high is None:
            raise ValueError("checkpoint has no high stage")
        result = evaluate_high(test_docs, store, high)
    elif mode == "low":
        if low is None:
            raise ValueError("checkpoint has no low stage")
        result = evaluate_low(test_docs, store, low, cfg)
    else:
        if high is None or low is None:
            raise ValueError("overall mode needs both stages in the checkpoint")
        result = evaluate_overall(test_docs, store, high, low, cfg)
    return _single_row("full", mode, cfg, result)


@cli.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(["high", "low"]), required=True)
@click.option("--methods", default=None,
              help="Comma-separated ablation names; defaults to every switch "
                   "of the chosen stage.")
@click.option("--embeddings", "embeddings_path", type=click.Path(), default=None)
@click.option("--out", "out_prefix", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE")
@click.option("--figures/--no-figures", default=True, show_default=True)
def ablate(
    corpus_path, mode, methods, embeddings_path, out_prefix, config_path,
    overrides, figures,
):
    """Run the full model and its single-switch ablations."""
    cfg = _build_config(config_path, overrides)
    corpus = load_corpus(corpus_path)
    store = _load_store(corpus, embeddings_path, cfg)
    names = [m.strip() for m in methods.split(",") if m.strip()] if methods else None
    rows = run_ablations(corpus, store, cfg, mode, names)
    files = emit_report(rows, out_prefix, figures=figures)
    click.echo(render_summary(rows))
    for f in files:
        click.echo(f"wrote {f}")


@cli.command()
@click.option("--rows", "rows_path", required=True, type=click.Path(),
              help="A report JSON produced by eval or ablate.")
@click.option("--out", "out_prefix", required=True, type=click.Path())
@click.option("--figures/--no-figures", default=True, show_default=True)
def report(rows_path: str, out_prefix: str, figures: bool) -> None:
    """Re-render tables and figures from a stored report."""
    rows = load_report(rows_path)
    files = emit_report(rows, out_prefix, figures=figures)
    click.echo(render_summary(rows))
    for f in files:
        click.echo(f"wrote {f}")


def main() -> None:
    try:
        cli.main(standalone_mode=False)
    except click.Abort:
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except FileNotFoundError as exc:
        click.echo(f"error: missing artifact: {exc}", err=True)
        sys.exit(2)
    except (CorpusError, ConfigError, EmbeddingFileError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
