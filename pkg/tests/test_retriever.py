"""Component retriever: feature blocks, scoring and training."""

from dataclasses import replace

import numpy as np
import pytest

from nrex.config import RunConfig
from nrex.corpus import Component, Document, EntityMention, Query
from nrex.embeddings import (
    build_hash_store,
    cosine,
    entailment_key,
    entity_key,
    hash_embed,
)
from nrex.evaluate import split_corpus
from nrex.retriever import (
    EL_FILL,
    ES_FILL,
    RetrieverModel,
    build_feature_batch,
    cs_features,
    el_features,
    es_features,
    high_forward,
    high_loss,
    high_loss_and_grads,
    score_components,
    train_high,
)
from nrex.nn import finite_diff_check
from nrex.textmetrics import lexical_features


def test_es_features_take_best_entity_cosine(gref_corpus):
    doc = gref_corpus.documents[0]
    store = build_hash_store(gref_corpus, 16)
    q = doc.queries[0]
    comp = doc.component("p1")
    got = es_features(comp, q, doc.doc_id, store)
    for i, element in enumerate(q.elements):
        evec = hash_embed(element, 16)
        best = max(
            cosine(store.get(entity_key(doc.doc_id, m.ent_id), m.surface), evec)
            for m in comp.all_mentions()
        )
        assert got[i] == pytest.approx(best)
    # exact-match surfaces exist for both elements in this paragraph
    np.testing.assert_allclose(got, 1.0)


def test_es_features_fill_for_empty_component():
    comp = Component(comp_id="p", kind="paragraph", sentences=(("a",),))
    q = Query("q", ("x", "y"))
    got = es_features(comp, q, "d", None)
    np.testing.assert_array_equal(got, [ES_FILL, ES_FILL])


def test_el_features_take_elementwise_max(gref_corpus):
    doc = gref_corpus.documents[0]
    q = doc.queries[0]
    comp = doc.component("t1")
    got = el_features(comp, q)
    for i, element in enumerate(q.elements):
        manual = np.max(
            [lexical_features(element, m.surface) for m in comp.all_mentions()],
            axis=0,
        )
        np.testing.assert_allclose(got[3 * i : 3 * i + 3], manual)


def test_el_features_fill_for_empty_component():
    comp = Component(comp_id="p", kind="paragraph", sentences=(("a",),))
    got = el_features(comp, Query("q", ("x", "y")))
    np.testing.assert_array_equal(got, np.full(6, EL_FILL))


def test_feature_dim_tracks_enabled_blocks():
    dims = {
        (True, True, True): 2 + 2 + 6,
        (False, True, True): 2 + 6,
        (True, False, True): 2 + 6,
        (True, True, False): 2 + 2,
        (True, False, False): 2,
    }
    for (cs, es, el), want in dims.items():
        model = RetrieverModel(n=3, emb_dim=16, use_cs=cs, use_es=es, use_el=el)
        assert model.feature_dim == want
    with pytest.raises(ValueError, match="at least one"):
        RetrieverModel(n=3, emb_dim=16, use_cs=False, use_es=False, use_el=False)


def test_batch_marks_missing_entailment_as_nan(gref_corpus):
    doc = gref_corpus.documents[0]
    store = build_hash_store(gref_corpus, 16)
    batch = build_feature_batch(doc, doc.queries[0], store)
    assert batch.comp_ids == ["p1", "t1"]
    assert np.isnan(batch.ent_stored).all()
    assert batch.ent_z.shape == (2, 4 * 16)


def test_stored_entailment_bypasses_the_head(gref_corpus):
    doc = gref_corpus.documents[0]
    q = doc.queries[0]
    store = build_hash_store(gref_corpus, 16)
    for comp in doc.components:
        store.add(
            entailment_key(doc.doc_id, comp.comp_id, q.query_id), np.array([0.25])
        )
    model = RetrieverModel(n=3, emb_dim=16, hidden=4, seed=0)
    batch = build_feature_batch(doc, q, store)
    np.testing.assert_array_equal(batch.ent_stored, [0.25, 0.25])
    _, cs_block, cache = high_forward(model, batch)
    np.testing.assert_array_equal(cs_block[:, 1], [0.25, 0.25])
    assert cache["head_tape"] is None


def test_cs_features_requires_the_block(gref_corpus):
    doc = gref_corpus.documents[0]
    store = build_hash_store(gref_corpus, 16)
    model = RetrieverModel(n=3, emb_dim=16, use_cs=False)
    with pytest.raises(ValueError, match="disabled"):
        cs_features(doc.component("p1"), doc.queries[0], doc.doc_id, store, model)
    full = RetrieverModel(n=3, emb_dim=16, hidden=4, seed=1)
    pair = cs_features(doc.component("p1"), doc.queries[0], doc.doc_id, store, full)
    assert pair.shape == (2,)
    assert 0.0 <= pair[1] <= 1.0, "entailment head output is a probability"


def test_high_forward_yields_probabilities(gref_corpus):
    doc = gref_corpus.documents[0]
    store = build_hash_store(gref_corpus, 16)
    model = RetrieverModel(n=3, emb_dim=16, hidden=4, seed=2)
    batch = build_feature_batch(doc, doc.queries[0], store)
    probs, cs_block, _ = high_forward(model, batch)
    assert probs.shape == (2,)
    assert np.all((probs > 0.0) & (probs < 1.0))
    assert cs_block.shape == (2, 2)


def test_high_gradients_pass_finite_difference(gref_corpus):
    doc = gref_corpus.documents[0]
    store = build_hash_store(gref_corpus, 16)
    model = RetrieverModel(n=3, emb_dim=16, hidden=4, seed=3)
    batch = build_feature_batch(doc, doc.queries[0], store)
    target = np.array([0.0, 1.0])
    _, grads = high_loss_and_grads(model, batch, target)
    report = finite_diff_check(
        lambda: high_loss(model, batch, target), model.params, grads
    )
    assert report.passed, f"max rel err {report.max_rel_err}"


def test_score_components_ranks_all_and_breaks_ties_stably(gref_corpus):
    doc = gref_corpus.documents[0]
    store = build_hash_store(gref_corpus, 16)
    model = RetrieverModel(n=3, emb_dim=16, hidden=4, seed=4)
    probs, ranked = score_components(doc, doc.queries[0], store, model)
    assert sorted(ranked) == ["p1", "t1"]
    assert len(probs) == 2
    empty = Document(doc_id="e", components=(), queries=())
    with pytest.raises(ValueError, match="no components"):
        score_components(empty, doc.queries[0], store, model)


def test_model_checkpoint_round_trip(gref_corpus):
    store = build_hash_store(gref_corpus, 16)
    doc = gref_corpus.documents[0]
    model = RetrieverModel(n=3, emb_dim=16, hidden=4, seed=5)
    clone = RetrieverModel.from_dict(model.to_dict())
    batch = build_feature_batch(doc, doc.queries[0], store)
    p0, _, _ = high_forward(model, batch)
    p1, _, _ = high_forward(clone, batch)
    np.testing.assert_array_equal(p0, p1)
    with pytest.raises(ValueError, match="not a retriever"):
        RetrieverModel.from_dict({"kind": "other"})


def test_train_high_learns_the_generated_corpus(small_synth, small_store):
    cfg = replace(RunConfig(), max_epochs=4, seed=0)
    train_docs, dev_docs, _ = split_corpus(small_synth.documents, cfg.split, 0)
    model, history = train_high(train_docs, dev_docs, small_synth.n, small_store, cfg)
    assert len(history["train_loss"]) == len(history["dev_acc"]) <= 4
    assert all(np.isfinite(v) for v in history["train_loss"])
    # the planted answers make the task learnable fast
    assert max(history["dev_acc"]) >= 0.5
    assert history["train_loss"][-1] < history["train_loss"][0]


def test_train_high_requires_queries(small_synth, small_store):
    stripped = [
        Document(doc_id=d.doc_id, components=d.components, queries=())
        for d in small_synth.documents[:3]
    ]
    with pytest.raises(ValueError, match="no training queries"):
        train_high(stripped, stripped, small_synth.n, small_store, RunConfig())
