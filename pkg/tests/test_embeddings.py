"""Hashed embeddings, the key scheme, and the JSONL interchange file."""

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nrex.corpus import Query
from nrex.embeddings import (
    DEFAULT_QUESTION_PREFIX,
    EmbeddingFileError,
    EmbeddingKey,
    EmbeddingStore,
    build_hash_store,
    build_query_text,
    component_key,
    corpus_embedding_keys,
    cosine,
    element_key,
    entailment_key,
    entity_key,
    fnv1a64,
    hash_embed,
    load_embeddings,
    query_key,
    save_embeddings,
)


def test_fnv1a64_reference_values():
    # published FNV-1a 64-bit test vectors
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_hash_embed_is_deterministic_and_normalized():
    v1 = hash_embed("image classification", 32)
    v2 = hash_embed("image classification", 32)
    np.testing.assert_array_equal(v1, v2)
    assert np.linalg.norm(v1) == pytest.approx(1.0)


def test_hash_embed_casefolds():
    np.testing.assert_array_equal(hash_embed("BERT Large"), hash_embed("bert large"))


def test_hash_embed_empty_and_min_dim():
    assert not hash_embed("", 8).any()
    with pytest.raises(ValueError, match=">= 8"):
        hash_embed("abc", 4)


def test_hash_embed_short_string_is_single_gram():
    # below trigram length the whole string is the only gram, so the
    # vector is one signed unit coordinate
    v = hash_embed("ab", 16)
    h = fnv1a64(b"ab")
    expect = np.zeros(16)
    expect[h % 16] = -1.0 if h >> 63 else 1.0
    np.testing.assert_array_equal(v, expect)


def test_hash_embed_frozen_vectors(fixtures_dir):
    """Recorded outputs, including a string whose grams cancel to zero."""
    entries = json.loads((fixtures_dir / "hash_vectors.json").read_text())
    assert entries, "fixture must not be empty"
    for entry in entries:
        got = hash_embed(entry["text"], entry["dim"])
        np.testing.assert_allclose(got, np.array(entry["vec"]), atol=1e-12)


@given(st.text(max_size=30), st.sampled_from([8, 16, 64]))
def test_hash_embed_norm_is_zero_or_one(text, dim):
    n = np.linalg.norm(hash_embed(text, dim))
    assert n == pytest.approx(0.0, abs=1e-12) or n == pytest.approx(1.0)


def test_cosine_basics():
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([0.0, 2.0, 0.0])
    assert cosine(a, a) == pytest.approx(1.0)
    assert cosine(a, b) == 0.0
    assert cosine(a, -a) == pytest.approx(-1.0)
    assert cosine(a, np.zeros(3)) == 0.0
    with pytest.raises(ValueError, match="mismatched shapes"):
        cosine(a, np.zeros(4))


def test_key_wire_round_trip():
    keys = [
        component_key("d1", "p2"),
        entity_key("d1", "m7"),
        query_key("d1", "q0"),
        element_key("d1", "q0", 1),
        entailment_key("d1", "p2", "q0"),
    ]
    for key in keys:
        assert EmbeddingKey.from_wire(key.wire()) == key


def test_key_rejects_unknown_kind_and_bad_wire():
    with pytest.raises(ValueError, match="unknown embedding kind"):
        EmbeddingKey("X", "d", "l")
    with pytest.raises(EmbeddingFileError, match="malformed"):
        EmbeddingKey.from_wire("no-separator")
    with pytest.raises(EmbeddingFileError, match="malformed"):
        EmbeddingKey.from_wire("e:missing-slash")


def test_store_add_get_and_fallback():
    store = EmbeddingStore(8)
    key = entity_key("d", "m1")
    vec = hash_embed("resnet", 8)
    store.add(key, vec)
    np.testing.assert_array_equal(store.get(key, "ignored"), vec)
    # a miss hashes the fallback text instead of failing
    miss = store.get(entity_key("d", "m2"), "resnet")
    np.testing.assert_array_equal(miss, vec)
    assert store.fallback_count == 1


def test_store_rejects_bad_vectors():
    store = EmbeddingStore(8)
    with pytest.raises(EmbeddingFileError, match="length"):
        store.add(entity_key("d", "m1"), np.zeros(9))
    store.add(entity_key("d", "m1"), np.zeros(8))
    with pytest.raises(EmbeddingFileError, match="duplicate"):
        store.add(entity_key("d", "m1"), np.zeros(8))


def test_store_entailment_records_are_scalars():
    store = EmbeddingStore(8)
    key = entailment_key("d", "p1", "q1")
    store.add(key, np.array([0.7]))
    assert store.entailment(key) == pytest.approx(0.7)
    assert store.entailment(entailment_key("d", "p2", "q1")) is None
    with pytest.raises(EmbeddingFileError, match=r"\[0, 1\]"):
        store.add(entailment_key("d", "p3", "q1"), np.array([1.5]))


def test_save_load_round_trip(tmp_path, gref_corpus):
    store = build_hash_store(gref_corpus, 16)
    out = tmp_path / "emb.jsonl"
    save_embeddings(store, out)
    loaded = load_embeddings(out, expected_dim=16)
    assert len(loaded) == len(store)
    for key, vec in store.entries.items():
        np.testing.assert_array_equal(loaded.entries[key], vec)
    # rewriting produces identical bytes
    out2 = tmp_path / "emb2.jsonl"
    save_embeddings(loaded, out2)
    assert out.read_bytes() == out2.read_bytes()


def test_load_rejects_malformed_files(tmp_path):
    cases = {
        "empty.jsonl": ("", "empty file"),
        "nohdr.jsonl": ('{"nodim": 3}\n', "header"),
        "badrec.jsonl": ('{"dim": 8}\n{"id": "e:d/m1"}\n', "'id' and 'vec'"),
        "badjson.jsonl": ('{"dim": 8}\n{oops\n', "invalid record"),
        "shortvec.jsonl": (
            '{"dim": 8}\n{"id": "e:d/m1", "vec": [1.0, 2.0]}\n',
            "length",
        ),
    }
    for name, (text, needle) in cases.items():
        path = tmp_path / name
        path.write_text(text)
        with pytest.raises(EmbeddingFileError, match=needle):
            load_embeddings(path)


def test_load_rejects_wrong_expected_dim(tmp_path):
    path = tmp_path / "emb.jsonl"
    path.write_text('{"dim": 8}\n')
    with pytest.raises(EmbeddingFileError, match="does not match expected"):
        load_embeddings(path, expected_dim=16)


def test_build_query_text_default_prefix():
    q = Query("q1", ("bert", "squad"))
    assert build_query_text(q) == DEFAULT_QUESTION_PREFIX + "bert, squad?"


def test_build_query_text_template():
    q = Query(
        "q1",
        ("bert", "squad"),
        question_template="What does {1} score on {2} ?",
    )
    assert build_query_text(q) == "What does bert score on squad ?"


def test_build_query_text_rejects_bad_templates():
    with pytest.raises(ValueError, match="out of range"):
        build_query_text(Query("q", ("a", "b"), question_template="{1} {3}"))
    with pytest.raises(ValueError, match="exactly once"):
        build_query_text(Query("q", ("a", "b"), question_template="{1} {1}"))


def test_corpus_embedding_keys_cover_everything(gref_corpus):
    keys = corpus_embedding_keys(gref_corpus)
    wires = [k.wire() for k, _ in keys]
    assert len(wires) == len(set(wires)), "keys must be unique"
    doc = gref_corpus.documents[0]
    n_mentions = sum(len(c.all_mentions()) for c in doc.components)
    n_elements = sum(len(q.elements) for q in doc.queries)
    expected = len(doc.components) + n_mentions + len(doc.queries) + n_elements
    assert len(keys) == expected
    kinds = {k.kind for k, _ in keys}
    assert kinds == {"c", "e", "q", "qe"}


def test_build_hash_store_vectors_match_source_text(gref_corpus):
    store = build_hash_store(gref_corpus, 16)
    for key, text in corpus_embedding_keys(gref_corpus):
        np.testing.assert_array_equal(store.entries[key], hash_embed(text, 16))
