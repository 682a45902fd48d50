"""Shared fixtures: committed corpora and small hand-built documents."""

from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from nrex.corpus import (
    Component,
    Corpus,
    Document,
    EntityMention,
    Query,
    load_corpus,
)
from nrex.embeddings import build_hash_store
from nrex.synth import SynthConfig, generate_corpus

settings.register_profile(
    "suite",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def gref_corpus() -> Corpus:
    """One document mixing a cited table with a two-sentence paragraph."""
    return load_corpus(FIXTURES / "graph_reference.json")


@pytest.fixture(scope="session")
def adj_corpus() -> Corpus:
    """Two numeric cells told apart only by their row headers."""
    return load_corpus(FIXTURES / "adjacent_cells.json")


def five_node_document() -> Document:
    """A connected five-mention paragraph used for gradient checks."""
    para = Component(
        comp_id="p1",
        kind="paragraph",
        sentences=(
            ("crane", "lifts", "stone"),
            ("tower", "near", "barge", "at", "dusk"),
        ),
        entities=(
            EntityMention("m1", "crane", 0, (0, 1)),
            EntityMention("m2", "stone", 0, (2, 3)),
            EntityMention("m3", "tower", 1, (0, 1)),
            EntityMention("m4", "barge", 1, (2, 3)),
            EntityMention("m5", "dusk", 1, (4, 5)),
        ),
    )
    return Document(
        doc_id="g1",
        components=(para,),
        queries=(Query("q1", ("crane", "stone"), None, "p1", "m4"),),
    )


@pytest.fixture(scope="session")
def grad_setup():
    """(corpus, store) around the five-node document, low-dim embeddings."""
    corpus = Corpus(n=3, documents=(five_node_document(),))
    return corpus, build_hash_store(corpus, 16)


@pytest.fixture(scope="session")
def small_synth() -> Corpus:
    """A 12-document generated corpus for split and evaluation tests."""
    return generate_corpus(SynthConfig(n_docs=12, seed=3))


@pytest.fixture(scope="session")
def small_store(small_synth):
    return build_hash_store(small_synth, 32)
