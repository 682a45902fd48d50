"""Ranking metrics, corpus splitting and the evaluation drivers."""

import string
from dataclasses import replace

import numpy as np
import pytest

from nrex.config import RunConfig
from nrex.evaluate import (
    ABLATION_FLAGS,
    HIGH_ABLATIONS,
    LOW_ABLATIONS,
    ablation_config,
    eval_ranking,
    evaluate_baseline,
    evaluate_high,
    rank_of,
    run_protocol,
    split_corpus,
)


def brute_metrics(rankings, golds):
    n = len(golds)
    out = {"n": n, "acc": 0.0, "mrr": 0.0, "hit2": 0.0, "hit3": 0.0, "hit5": 0.0}
    for ranking, gold in zip(rankings, golds):
        try:
            rank = list(ranking).index(gold) + 1
        except ValueError:
            continue
        out["acc"] += (rank == 1) / n
        out["mrr"] += (1.0 / rank) / n
        out["hit2"] += (rank <= 2) / n
        out["hit3"] += (rank <= 3) / n
        out["hit5"] += (rank <= 5) / n
    return out


def test_eval_ranking_hand_values():
    rankings = [["a", "b"], ["b", "a", "c"], ["c", "d", "a"]]
    golds = ["a", "a", "a"]
    got = eval_ranking(rankings, golds)
    assert got == {
        "n": 3,
        "acc": pytest.approx(1 / 3),
        "mrr": pytest.approx((1 + 1 / 2 + 1 / 3) / 3),
        "hit2": pytest.approx(2 / 3),
        "hit3": pytest.approx(1.0),
        "hit5": pytest.approx(1.0),
    }


def test_eval_ranking_mrr_fixture():
    # golds at ranks 1, 2 and 4: MRR = (1 + 1/2 + 1/4) / 3 = 7/12
    rankings = [
        ["g", "x", "y", "z"],
        ["x", "g", "y", "z"],
        ["x", "y", "z", "g"],
    ]
    got = eval_ranking(rankings, ["g", "g", "g"])
    assert got["mrr"] == pytest.approx(7 / 12)


def test_eval_ranking_missing_gold_still_counts():
    got = eval_ranking([["a"], ["b"]], ["a", "missing"])
    assert got["n"] == 2
    assert got["acc"] == pytest.approx(0.5)
    assert got["mrr"] == pytest.approx(0.5)
    assert got["hit5"] == pytest.approx(0.5)


def test_eval_ranking_matches_brute_force_sample():
    rng = np.random.default_rng(42)
    items = list(string.ascii_lowercase[:8])
    rankings, golds = [], []
    for _ in range(300):
        k = int(rng.integers(1, 9))
        perm = list(rng.permutation(items)[:k])
        rankings.append(perm)
        golds.append(
            perm[int(rng.integers(k))] if rng.random() < 0.9 else "absent"
        )
    got = eval_ranking(rankings, golds)
    want = brute_metrics(rankings, golds)
    for key in want:
        assert got[key] == pytest.approx(want[key]), key


def test_eval_ranking_input_validation():
    with pytest.raises(ValueError, match="vs"):
        eval_ranking([["a"]], ["a", "b"])
    with pytest.raises(ValueError, match="zero queries"):
        eval_ranking([], [])


def test_rank_of():
    assert rank_of(["a", "b", "c"], "b") == 2
    assert rank_of(["a"], "zzz") is None


def test_split_corpus_partitions_deterministically(small_synth):
    docs = small_synth.documents
    tr1, dv1, te1 = split_corpus(docs, (0.6, 0.2, 0.2), seed=5)
    tr2, dv2, te2 = split_corpus(docs, (0.6, 0.2, 0.2), seed=5)
    assert [d.doc_id for d in tr1] == [d.doc_id for d in tr2]
    assert [d.doc_id for d in dv1] == [d.doc_id for d in dv2]
    assert [d.doc_id for d in te1] == [d.doc_id for d in te2]
    ids = [d.doc_id for part in (tr1, dv1, te1) for d in part]
    assert sorted(ids) == sorted(d.doc_id for d in docs)
    assert len(tr1) == 7 and len(dv1) == 2 and len(te1) == 3
    other = split_corpus(docs, (0.6, 0.2, 0.2), seed=6)[0]
    assert [d.doc_id for d in other] != [d.doc_id for d in tr1]


def test_split_corpus_never_empties_a_part(small_synth):
    docs = small_synth.documents[:4]
    for ratios in [(0.98, 0.01, 0.01), (0.01, 0.98, 0.01)]:
        parts = split_corpus(docs, ratios, seed=0)
        assert all(len(p) >= 1 for p in parts)


def test_split_corpus_validation(small_synth):
    docs = small_synth.documents
    with pytest.raises(ValueError, match="at least 3"):
        split_corpus(docs[:2], (0.6, 0.2, 0.2), seed=0)
    with pytest.raises(ValueError, match="sum to 1"):
        split_corpus(docs, (0.5, 0.2, 0.2), seed=0)
    with pytest.raises(ValueError, match="positive"):
        split_corpus(docs, (1.2, -0.1, -0.1), seed=0)


def test_ablation_config_flips_one_switch():
    cfg = RunConfig()
    for name, flags in ABLATION_FLAGS.items():
        out = ablation_config(cfg, name)
        (field, value), = flags.items()
        assert getattr(out, field) is value
        assert out != cfg
    with pytest.raises(ValueError, match="unknown ablation"):
        ablation_config(cfg, "no_everything")
    assert set(HIGH_ABLATIONS) | set(LOW_ABLATIONS) == set(ABLATION_FLAGS)


@pytest.mark.parametrize("name", ["tfidf", "bm25", "ecs"])
def test_baselines_produce_full_metric_dicts(name, small_synth, small_store):
    docs = small_synth.documents[:4]
    result = evaluate_baseline(name, docs, small_store)
    metrics = result["metrics"]
    assert metrics["n"] == sum(len(d.queries) for d in docs)
    assert 0.0 <= metrics["acc"] <= metrics["mrr"] <= 1.0
    assert set(result["subsets"]) <= {"table", "paragraph"}
    # generated documents carry both kinds of answers
    assert "table" in result["subsets"]


def test_baseline_name_is_checked(small_synth, small_store):
    with pytest.raises(ValueError, match="unknown baseline"):
        evaluate_baseline("pagerank", small_synth.documents[:3], small_store)


def test_evaluate_high_requires_labels(small_synth, small_store):
    from nrex.corpus import Document
    from nrex.retriever import RetrieverModel

    unlabeled = [
        Document(doc_id=d.doc_id, components=d.components, queries=())
        for d in small_synth.documents[:3]
    ]
    model = RetrieverModel(n=3, emb_dim=small_store.dim, hidden=4)
    with pytest.raises(ValueError, match="no labeled queries"):
        evaluate_high(unlabeled, small_store, model)


def test_run_protocol_row_shape(small_synth, small_store):
    cfg = replace(RunConfig(), max_epochs=2, n_seeds=2, seed=0)
    row = run_protocol(small_synth, small_store, cfg, "high", method="tfidf")
    assert row["method"] == "tfidf" and row["mode"] == "high"
    assert len(row["per_seed"]) == 2
    assert set(row["mean"]) == {"n", "acc", "mrr", "hit2", "hit3", "hit5"}
    assert row["stddev"] is not None
    assert row["config"]["lambda"] == pytest.approx(0.3)
    single = run_protocol(
        small_synth, small_store, replace(cfg, n_seeds=1), "high", method="bm25"
    )
    assert single["stddev"] is None


def test_run_protocol_rejects_bad_mode(small_synth, small_store):
    with pytest.raises(ValueError, match="unknown mode"):
        run_protocol(small_synth, small_store, RunConfig(), "sideways")
    with pytest.raises(ValueError, match="only supports"):
        run_protocol(small_synth, small_store, RunConfig(), "low", method="tfidf")


def test_run_protocol_trains_and_reports_history(small_synth, small_store):
    cfg = replace(RunConfig(), max_epochs=2, n_seeds=1, seed=0)
    row = run_protocol(small_synth, small_store, cfg, "high")
    assert row["method"] == "full"
    hist = row["history"]["0"]
    assert len(hist["train_loss"]) <= 2
    assert row["mean"]["acc"] >= 0.0
