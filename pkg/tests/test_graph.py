"""Entity graph construction.

graph_reference.json pairs a two-sentence paragraph with a cited 2x2
table. Its full edge list was enumerated by hand from the construction
rules and committed as graph_reference_edges.json:

  cooc    same-sentence mention pairs at w_s, adjacent at w_s/2
  coref   surface-match cliques over "alpha" and "glue"
  ref     the "see table 1" sentence links its mention to every cell
  tstruct the data cell reaches its row header, column header, caption
  tpconn  adds nothing new here; every exact-match pair already exists

Max-merge keeps the first tag on equal weights, so pairs covered by
both coref and ref stay tagged coref.
"""

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nrex.corpus import Component, Document, EntityMention
from nrex.graph import (
    EDGE_COOC,
    EDGE_COREF,
    EDGE_REF,
    EDGE_TPCONN,
    EDGE_TSTRUCT,
    EntityGraph,
    GraphConfig,
    GraphNode,
    build_graph,
    cooccurrence_edges,
    coref_edges,
    reference_edges,
    table_paragraph_edges,
    table_structure_edges,
)


def canonical(edges):
    return {tuple(sorted((u, v))): (w, tag) for u, v, w, tag in edges}


def test_reference_document_matches_hand_enumeration(gref_corpus, fixtures_dir):
    doc = gref_corpus.documents[0]
    graph = build_graph(doc)
    expected = json.loads(
        (fixtures_dir / "graph_reference_edges.json").read_text()
    )
    assert graph.num_nodes == expected["n_nodes"]
    want = {(u, v): (w, tag) for u, v, w, tag in expected["edges"]}
    assert canonical(graph.edges()) == want


def test_graph_rejects_duplicate_node_ids():
    nodes = [GraphNode("a", "c1", "paragraph"), GraphNode("a", "c2", "table")]
    with pytest.raises(ValueError, match="duplicate"):
        EntityGraph(nodes)


def test_add_edge_contract():
    g = EntityGraph([GraphNode("a", "c", "p"), GraphNode("b", "c", "p")])
    g.add_edge("a", "a", 1.0, "x")  # self loops are dropped silently
    assert g.num_edges == 0
    with pytest.raises(KeyError, match="ghost"):
        g.add_edge("a", "ghost", 1.0, "x")
    with pytest.raises(ValueError, match=r"\(0, 1\]"):
        g.add_edge("a", "b", 0.0, "x")
    with pytest.raises(ValueError, match=r"\(0, 1\]"):
        g.add_edge("a", "b", 1.5, "x")


def test_add_edge_max_merges():
    g = EntityGraph([GraphNode("a", "c", "p"), GraphNode("b", "c", "p")])
    g.add_edge("a", "b", 0.5, "first")
    g.add_edge("a", "b", 0.4, "lower")
    assert g.edge("a", "b") == (0.5, "first")
    g.add_edge("a", "b", 0.5, "equal")
    assert g.edge("a", "b") == (0.5, "first"), "ties keep the earlier edge"
    g.add_edge("a", "b", 0.9, "higher")
    assert g.edge("b", "a") == (0.9, "higher")
    assert g.num_edges == 1


def test_cooccurrence_weights_by_sentence_gap():
    comp = Component(
        comp_id="p",
        kind="paragraph",
        sentences=(("a", "b"), ("c",), ("d",)),
        entities=(
            EntityMention("e0", "a", 0, (0, 1)),
            EntityMention("e1", "b", 0, (1, 2)),
            EntityMention("e2", "c", 1, (0, 1)),
            EntityMention("e3", "d", 2, (0, 1)),
        ),
    )
    cfg = GraphConfig(w_s=0.8)
    got = canonical(cooccurrence_edges(comp, cfg))
    assert got == {
        ("e0", "e1"): (0.8, EDGE_COOC),
        ("e0", "e2"): (0.4, EDGE_COOC),
        ("e1", "e2"): (0.4, EDGE_COOC),
        ("e2", "e3"): (0.4, EDGE_COOC),
    }
    # two sentences apart: nothing
    assert ("e0", "e3") not in got


def test_cooccurrence_rejects_tables(gref_corpus):
    t1 = gref_corpus.documents[0].component("t1")
    with pytest.raises(ValueError, match="paragraphs"):
        cooccurrence_edges(t1, GraphConfig())


def test_coref_respects_gold_clusters(gref_corpus):
    doc = gref_corpus.documents[0]
    gold = Document(
        doc_id=doc.doc_id,
        components=doc.components,
        queries=doc.queries,
        coref_clusters=(("m1", "m4", "c10"),),
    )
    got = canonical(coref_edges(gold))
    assert got == {
        ("m1", "m4"): (1.0, EDGE_COREF),
        ("c10", "m1"): (1.0, EDGE_COREF),
        ("c10", "m4"): (1.0, EDGE_COREF),
    }


def test_coref_empty_clusters_mean_none(gref_corpus):
    doc = gref_corpus.documents[0]
    annotated_empty = Document(
        doc_id=doc.doc_id,
        components=doc.components,
        queries=doc.queries,
        coref_clusters=(),
    )
    assert coref_edges(annotated_empty) == []
    # absent annotation falls back to the surface heuristic
    assert len(coref_edges(doc)) > 0


def test_coref_heuristic_links_abbreviations():
    comp = Component(
        comp_id="p",
        kind="paragraph",
        sentences=(
            ("Natural", "Language", "Processing", "(", "NLP", ")", "rocks"),
        ),
        entities=(
            EntityMention("long", "Natural Language Processing", 0, (0, 3)),
            EntityMention("short", "NLP", 0, (4, 5)),
        ),
    )
    doc = Document(doc_id="d", components=(comp,))
    got = canonical(coref_edges(doc))
    assert ("long", "short") in got
    assert got[("long", "short")] == (1.0, EDGE_COREF)


def test_coref_heuristic_ignores_non_initialisms():
    comp = Component(
        comp_id="p",
        kind="paragraph",
        sentences=(("Big", "Model", "(", "XYZ", ")", "here"),),
        entities=(
            EntityMention("long", "Big Model", 0, (0, 2)),
            EntityMention("short", "XYZ", 0, (3, 4)),
        ),
    )
    doc = Document(doc_id="d", components=(comp,))
    assert canonical(coref_edges(doc)) == {}


def test_reference_edges_need_table_number(gref_corpus):
    doc = gref_corpus.documents[0]
    stripped = Document(
        doc_id=doc.doc_id,
        components=tuple(
            c if c.kind == "paragraph" else Component(
                comp_id=c.comp_id,
                kind=c.kind,
                entities=c.entities,
                table=c.table,
                table_number=None,
            )
            for c in doc.components
        ),
        queries=doc.queries,
    )
    assert reference_edges(stripped, GraphConfig()) == []


def test_reference_edges_match_citation_variants(gref_corpus):
    doc = gref_corpus.documents[0]

    def with_sentence(tokens):
        p1 = doc.component("p1")
        patched = Component(
            comp_id="p1",
            kind="paragraph",
            sentences=(p1.sentences[0], tuple(tokens)),
            entities=p1.entities,
        )
        return Document(
            doc_id=doc.doc_id,
            components=(patched, doc.component("t1")),
            queries=(),
        )

    base = ["see", None, "for", "details", "alpha"]
    for citation, hits in [
        ("table 1", 4),
        ("Table 1", 4),
        ("Tab. 1", 4),
        ("tab 1", 4),
        ("table 2", 0),   # no such table
        ("stable 1", 0),  # word boundary must hold
    ]:
        tokens = [citation if t is None else t for t in base]
        # keep the mention span pointing at the final token
        edges = reference_edges(with_sentence(tokens), GraphConfig())
        assert len(edges) == hits, citation


def test_table_structure_edges_reach_headers_and_caption(gref_corpus):
    t1 = gref_corpus.documents[0].component("t1")
    got = canonical(table_structure_edges(t1))
    assert got == {
        ("c10", "c11"): (1.0, EDGE_TSTRUCT),
        ("c01", "c11"): (1.0, EDGE_TSTRUCT),
        ("c11", "cap1"): (1.0, EDGE_TSTRUCT),
    }


def test_table_structure_rejects_paragraphs(gref_corpus):
    p1 = gref_corpus.documents[0].component("p1")
    with pytest.raises(ValueError, match="tables"):
        table_structure_edges(p1)


def test_table_paragraph_edges_threshold():
    para = Component(
        comp_id="p",
        kind="paragraph",
        sentences=(("resnet", "and", "resnets"),),
        entities=(
            EntityMention("a", "resnet", 0, (0, 1)),
            EntityMention("b", "resnets", 0, (2, 3)),
        ),
    )
    from nrex.corpus import TableCell, TableStructure

    table = Component(
        comp_id="t",
        kind="table",
        entities=(EntityMention("c", "resnet", -1, (0, 1)),),
        table=TableStructure(1, 1, (TableCell(0, 0, "resnet", "c"),)),
    )
    doc = Document(doc_id="d", components=(para, table))
    got = canonical(table_paragraph_edges(doc, GraphConfig(tp_threshold=0.75)))
    assert got[("a", "c")] == (1.0, EDGE_TPCONN)
    # "resnets" vs "resnet" is 6/7 ~ 0.857, above the default threshold
    assert got[("b", "c")][0] == pytest.approx(6 / 7)
    strict = canonical(table_paragraph_edges(doc, GraphConfig(tp_threshold=0.9)))
    assert ("b", "c") not in strict


def test_tp_metric_is_configurable():
    cfg = GraphConfig(tp_metric="lcseq")
    assert cfg.sim_fn()("abc", "aXbXc") == 1.0
    with pytest.raises(ValueError, match="unknown tp_metric"):
        GraphConfig(tp_metric="hamming").sim_fn()


def test_build_graph_invariants_on_generated_corpus(small_synth):
    for doc in small_synth.documents:
        graph = build_graph(doc)
        n_mentions = sum(len(c.all_mentions()) for c in doc.components)
        assert graph.num_nodes == n_mentions
        for u, v, w, tag in graph.edges():
            assert u != v
            assert 0.0 < w <= 1.0
            assert graph.edge(v, u) == (w, tag), "undirected storage"
            if tag == EDGE_COOC:
                assert w in (1.0, 0.5)


def test_neighbor_index_arrays_align_with_neighbors(gref_corpus):
    graph = build_graph(gref_corpus.documents[0])
    arrays = graph.neighbor_index_arrays()
    for node, idxs in zip(graph.nodes, arrays):
        named = {nid for nid, _, _ in graph.neighbors(node.ent_id)}
        assert {graph.nodes[i].ent_id for i in idxs} == named


def test_graph_to_dict_lists_each_edge_once(gref_corpus):
    graph = build_graph(gref_corpus.documents[0])
    payload = graph.to_dict()
    assert len(payload["nodes"]) == graph.num_nodes
    assert len(payload["edges"]) == graph.num_edges
    seen = {tuple(sorted((e["u"], e["v"]))) for e in payload["edges"]}
    assert len(seen) == graph.num_edges


@given(st.integers(min_value=0, max_value=10_000))
def test_node_relabeling_leaves_structure_alone(seed):
    """Renaming entity ids permutes the graph without changing shape."""
    rng = np.random.default_rng(seed)
    base = build_graph_fixture()
    perm = {f"m{i}": f"x{rng.integers(1e6)}_{i}" for i in range(1, 6)}
    relabeled = Document(
        doc_id="d",
        components=(
            Component(
                comp_id="p",
                kind="paragraph",
                sentences=base.components[0].sentences,
                entities=tuple(
                    EntityMention(perm[m.ent_id], m.surface, m.sent_idx, m.span)
                    for m in base.components[0].entities
                ),
            ),
        ),
    )
    g0 = build_graph(base)
    g1 = build_graph(relabeled)
    mapped = {
        tuple(sorted((perm[u], perm[v]))): (w, tag)
        for (u, v), (w, tag) in canonical(g0.edges()).items()
    }
    assert mapped == canonical(g1.edges())


def build_graph_fixture() -> Document:
    return Document(
        doc_id="d",
        components=(
            Component(
                comp_id="p",
                kind="paragraph",
                sentences=(("u", "v", "w"), ("x", "y")),
                entities=(
                    EntityMention("m1", "u", 0, (0, 1)),
                    EntityMention("m2", "v", 0, (1, 2)),
                    EntityMention("m3", "w", 0, (2, 3)),
                    EntityMention("m4", "x", 1, (0, 1)),
                    EntityMention("m5", "y", 1, (1, 2)),
                ),
            ),
        ),
    )
