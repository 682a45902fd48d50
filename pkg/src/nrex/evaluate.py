"""Ranking metrics, corpus splits and the end-to-end evaluation protocol."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .config import RunConfig
from .corpus import TABLE, Corpus, Document
from .embeddings import (
    EmbeddingStore,
    build_query_text,
    cosine,
    element_key,
    entity_key,
)
from .extractor import ExtractorModel, rank_candidates, train_low
from .graph import build_graph
from .retriever import RetrieverModel, score_components, train_high
from .textmetrics import bm25_rank, tfidf_rank, tokenize

log = logging.getLogger(__name__)

MODES = ("high", "low", "overall")
BASELINES = ("tfidf", "bm25", "ecs")


def rank_of(ranking: Sequence[str], gold: str) -> int | None:
    """1-based rank of gold in the ranking, None when absent."""
    try:
        return ranking.index(gold) + 1
    except ValueError:
        return None


def eval_ranking(rankings: Sequence[Sequence[str]], golds: Sequence[str]) -> dict:
    """Accuracy, MRR and Hit@{2,3,5} over parallel rankings and golds.

    A gold item missing from its ranking counts as rank infinity: it
    contributes zero to every metric but still appears in the mean's
    denominator.
    """
    if len(rankings) != len(golds):
        raise ValueError(
            f"{len(rankings)} rankings vs {len(golds)} gold labels"
        )
    if len(golds) == 0:
        raise ValueError("cannot evaluate zero queries")
    acc = mrr = hit2 = hit3 = hit5 = 0.0
    for ranking, gold in zip(rankings, golds):
        r = rank_of(list(ranking), gold)
        if r is None:
            continue
        acc += r == 1
        mrr += 1.0 / r
        hit2 += r <= 2
        hit3 += r <= 3
        hit5 += r <= 5
    n = len(golds)
    return {
        "n": n,
        "acc": acc / n,
        "mrr": mrr / n,
        "hit2": hit2 / n,
        "hit3": hit3 / n,
        "hit5": hit5 / n,
    }


def split_corpus(
    documents: Sequence[Document],
    ratios: tuple[float, float, float],
    seed: int,
):
    """Shuffle documents with the seed and cut train/dev/test by ratio.

    Requires at least three documents so no part comes out empty.
    """
    if len(documents) < 3:
        raise ValueError(f"need at least 3 documents to split, got {len(documents)}")
    if abs(sum(ratios) - 1.0) > 1e-9 or any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive and sum to 1, got {ratios}")
    order = np.random.default_rng(seed).permutation(len(documents))
    n_train = int(round(ratios[0] * len(documents)))
    n_dev = int(round(ratios[1] * len(documents)))
    n_train = max(1, min(n_train, len(documents) - 2))
    n_dev = max(1, min(n_dev, len(documents) - n_train - 1))
    docs = [documents[i] for i in order]
    return (
        docs[:n_train],
        docs[n_train : n_train + n_dev],
        docs[n_train + n_dev :],
    )


@dataclass
class QueryOutcome:
    doc_id: str
    query_id: str
    gold: str
    ranking: list[str]
    subset: str  # "table" or "paragraph", by the gold answer's home


def _answer_subset(doc: Document, ent_id: str) -> str:
    return "table" if doc.owning_component(ent_id).kind == TABLE else "paragraph"


def _summarize(outcomes: list[QueryOutcome]) -> dict:
    """Metrics over all outcomes plus the table/paragraph slices."""
    result = {
        "metrics": eval_ranking(
            [o.ranking for o in outcomes], [o.gold for o in outcomes]
        ),
        "subsets": {},
    }
    for subset in ("table", "paragraph"):
        members = [o for o in outcomes if o.subset == subset]
        if members:
            result["subsets"][subset] = eval_ranking(
                [o.ranking for o in members], [o.gold for o in members]
            )
    return result


def evaluate_high(
    docs: Sequence[Document], store: EmbeddingStore, model: RetrieverModel
) -> dict:
    """Component-ranking metrics over every labeled query."""
    outcomes = []
    for doc in docs:
        for q in doc.queries:
            if q.gold_component_id is None:
                continue
            _, ranked = score_components(doc, q, store, model)
            subset = (
                _answer_subset(doc, q.gold_entity_id)
                if q.gold_entity_id is not None
                else "paragraph"
            )
            outcomes.append(
                QueryOutcome(doc.doc_id, q.query_id, q.gold_component_id, ranked, subset)
            )
    if not outcomes:
        raise ValueError("no labeled queries to evaluate")
    return _summarize(outcomes)


def evaluate_low(
    docs: Sequence[Document],
    store: EmbeddingStore,
    model: ExtractorModel,
    cfg: RunConfig,
) -> dict:
    """Entity-ranking metrics with the gold component as scope."""
    graph_cfg = cfg.graph_config()
    outcomes = []
    for doc in docs:
        graph = build_graph(doc, graph_cfg)
        for q in doc.queries:
            if q.gold_component_id is None or q.gold_entity_id is None:
                continue
            ranked, _ = rank_candidates(
                model,
                doc,
                q,
                graph,
                store,
                [q.gold_component_id],
                numeric_filter=cfg.numeric_filter,
            )
            outcomes.append(
                QueryOutcome(
                    doc.doc_id,
                    q.query_id,
                    q.gold_entity_id,
                    ranked,
                    _answer_subset(doc, q.gold_entity_id),
                )
            )
    if not outcomes:
        raise ValueError("no labeled queries to evaluate")
    return _summarize(outcomes)


def evaluate_overall(
    docs: Sequence[Document],
    store: EmbeddingStore,
    high_model: RetrieverModel,
    low_model: ExtractorModel,
    cfg: RunConfig,
) -> dict:
    """Two-stage metrics: retrieved components restrict the entity search.

    With scope "predicted" the top ``topk_union`` retrieved components
    form the candidate pool; with scope "whole" every component does
    and the retriever is bypassed.
    """
    graph_cfg = cfg.graph_config()
    outcomes = []
    for doc in docs:
        graph = build_graph(doc, graph_cfg)
        for q in doc.queries:
            if q.gold_entity_id is None:
                continue
            if cfg.scope == "whole":
                comp_ids = [c.comp_id for c in doc.components]
            else:
                _, ranked_comps = score_components(doc, q, store, high_model)
                comp_ids = ranked_comps[: cfg.topk_union]
            ranked, _ = rank_candidates(
                low_model,
                doc,
                q,
                graph,
                store,
                comp_ids,
                numeric_filter=cfg.numeric_filter,
            )
            outcomes.append(
                QueryOutcome(
                    doc.doc_id,
                    q.query_id,
                    q.gold_entity_id,
                    ranked,
                    _answer_subset(doc, q.gold_entity_id),
                )
            )
    if not outcomes:
        raise ValueError("no labeled queries to evaluate")
    return _summarize(outcomes)


def evaluate_baseline(
    name: str, docs: Sequence[Document], store: EmbeddingStore
) -> dict:
    """Sparse or embedding-sum component ranking without training.

    tfidf and bm25 rank components by the question text; ecs sums the
    cosines between each query element and every component entity.
    """
    if name not in BASELINES:
        raise ValueError(f"unknown baseline {name!r}, expected one of {BASELINES}")
    outcomes = []
    for doc in docs:
        comp_tokens = [c.text_tokens() for c in doc.components]
        comp_tokens = [[t.casefold() for t in toks] for toks in comp_tokens]
        for q in doc.queries:
            if q.gold_component_id is None:
                continue
            if name in ("tfidf", "bm25"):
                qtokens = tokenize(build_query_text(q))
                fn = tfidf_rank if name == "tfidf" else bm25_rank
                scores = fn(qtokens, comp_tokens)
            else:
                elem_vecs = [
                    store.get(element_key(doc.doc_id, q.query_id, i), e)
                    for i, e in enumerate(q.elements)
                ]
                scores = np.zeros(len(doc.components))
                for ci, comp in enumerate(doc.components):
                    for m in comp.all_mentions():
                        mv = store.get(entity_key(doc.doc_id, m.ent_id), m.surface)
                        scores[ci] += sum(cosine(mv, ev) for ev in elem_vecs)
            order = np.argsort(-np.asarray(scores), kind="stable")
            ranked = [doc.components[i].comp_id for i in order]
            subset = (
                _answer_subset(doc, q.gold_entity_id)
                if q.gold_entity_id is not None
                else "paragraph"
            )
            outcomes.append(
                QueryOutcome(doc.doc_id, q.query_id, q.gold_component_id, ranked, subset)
            )
    if not outcomes:
        raise ValueError("no labeled queries to evaluate")
    return _summarize(outcomes)


# ---------------------------------------------------------------------------
# multi-seed protocol


def _aggregate(per_seed: list[dict]) -> tuple[dict, dict | None]:
    keys = ("acc", "mrr", "hit2", "hit3", "hit5")
    mean = {k: float(np.mean([r["metrics"][k] for r in per_seed])) for k in keys}
    mean["n"] = int(sum(r["metrics"]["n"] for r in per_seed))
    if len(per_seed) < 2:
        return mean, None
    std = {k: float(np.std([r["metrics"][k] for r in per_seed])) for k in keys}
    return mean, std


def run_protocol(
    corpus: Corpus,
    store: EmbeddingStore,
    cfg: RunConfig,
    mode: str,
    method: str = "full",
) -> dict:
    """Split, train and evaluate over ``cfg.n_seeds`` seeds.

    ``method`` is "full" or a baseline name; feature and branch
    switches for ablations come from ``cfg``. Returns a report row
    with per-seed results, their mean and (for 2+ seeds) the
    population standard deviation.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")
    per_seed = []
    histories = {}
    for offset in range(cfg.n_seeds):
        seed = cfg.seed + offset
        seed_cfg = replace(cfg, seed=seed)
        train_docs, dev_docs, test_docs = split_corpus(
            corpus.documents, cfg.split, seed
        )
        if method in BASELINES:
            if mode != "high":
                raise ValueError(f"baseline {method} only supports mode 'high'")
            result = evaluate_baseline(method, test_docs, store)
        elif mode == "high":
            model, history = train_high(train_docs, dev_docs, corpus.n, store, seed_cfg)
            histories[str(seed)] = history
            result = evaluate_high(test_docs, store, model)
        elif mode == "low":
            model, history = train_low(train_docs, dev_docs, corpus.n, store, seed_cfg)
            histories[str(seed)] = history
            result = evaluate_low(test_docs, store, model, seed_cfg)
        else:
            high_model, h_hist = train_high(
                train_docs, dev_docs, corpus.n, store, seed_cfg
            )
            low_model, l_hist = train_low(
                train_docs, dev_docs, corpus.n, store, seed_cfg
            )
            histories[str(seed)] = {"high": h_hist, "low": l_hist}
            result = evaluate_overall(test_docs, store, high_model, low_model, seed_cfg)
        per_seed.append({"seed": seed, **result})
        log.info(
            "%s/%s seed %d: acc %.4f", method, mode, seed, result["metrics"]["acc"]
        )
    mean, std = _aggregate(per_seed)
    return {
        "method": method,
        "mode": mode,
        "config": cfg.to_dict(),
        "per_seed": per_seed,
        "mean": mean,
        "stddev": std,
        "history": histories,
    }


ABLATION_FLAGS = {
    "no_cs": {"use_cs": False},
    "no_es": {"use_es": False},
    "no_el": {"use_el": False},
    "no_bon": {"use_bon": False},
    "no_gat": {"use_gat": False},
    "no_os": {"use_os": False},
    "no_mva": {"use_mva": False},
}

HIGH_ABLATIONS = ("no_cs", "no_es", "no_el")
LOW_ABLATIONS = ("no_bon", "no_gat", "no_os", "no_mva")


def ablation_config(cfg: RunConfig, name: str) -> RunConfig:
    if name not in ABLATION_FLAGS:
        raise ValueError(f"unknown ablation {name!r}")
    return replace(cfg, **ABLATION_FLAGS[name])


def run_ablations(
    corpus: Corpus,
    store: EmbeddingStore,
    cfg: RunConfig,
    mode: str,
    names: Sequence[str] | None = None,
) -> list[dict]:
    """The full model plus each named single-switch ablation."""
    if names is None:
        names = HIGH_ABLATIONS if mode == "high" else LOW_ABLATIONS
    rows = [run_protocol(corpus, store, cfg, mode, method="full")]
    for name in names:
        row = run_protocol(corpus, store, ablation_config(cfg, name), mode, method="full")
        row["method"] = name
        rows.append(row)
    return rows
