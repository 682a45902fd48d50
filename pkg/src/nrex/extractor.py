"""Low-level stage: pick the answer entity inside retrieved components.

Every mention of the document is a node in the entity graph. Each node
v gets a query-conditioned feature vector

    g(v) = [cos(h(v), h(e_1)) .. cos(h(v), h(e_{n-1})) |
            lex(v, e_1) .. lex(v, e_{n-1})]

of width 4(n-1), where lex is the (levenshtein, substring, subsequence)
triple. Pooling the elementwise maximum of g over a node's one-hop
neighbors (the node itself excluded) gives the bag-of-neighbors vector;
a node that matches nothing itself but sits next to mentions of every
query element lights up here, which is exactly the signature of an
answer cell between its headers.

A small graph attention stack refines the pooled vectors, then two
scoring branches are averaged: a semantic branch over the concatenated
element-plus-candidate embeddings and a neighborhood branch over the
refined vectors. Softmax over the candidate set yields the answer
distribution. Branch inputs and the averaging itself can be switched
off one by one for ablations.

The attention update follows the source formulation literally: the
attended message for node i aggregates W h_i itself, weighted by the
attention it pays each neighbor. Since those weights sum to one, the
attention cancels analytically in this variant; set
``gat_aggregates_neighbors`` to aggregate W h_j over neighbors j
instead, the conventional form. Both variants share the backward pass
and are covered by the gradient checks.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .corpus import ANSWER_NUMERIC, Component, Document, Query
from .embeddings import EmbeddingStore, cosine, element_key, entity_key
from .graph import EntityGraph, GraphConfig, build_graph
from .nn import (
    Adam,
    Ffnn,
    binary_cross_entropy,
    binary_cross_entropy_grad,
    glorot_uniform,
    leaky_relu,
    leaky_relu_grad,
    softmax,
    softmax_grad_from_probs,
)
from .textmetrics import lexical_features

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# losses


def candidate_loss(target: np.ndarray, probs: np.ndarray) -> float:
    """Sum-reduced binary cross entropy of a one-hot target vs a distribution."""
    return binary_cross_entropy(target, probs)


def consistency_loss(branch_probs: list[np.ndarray]) -> float:
    """Sum of squared L2 gaps over ordered branch pairs.

    Ordered pairs double-count each unordered pair, so two branches
    contribute 2 * ||p_a - p_b||^2. One branch gives 0.
    """
    total = 0.0
    for pu in branch_probs:
        for pv in branch_probs:
            diff = pu - pv
            total += float(np.dot(diff, diff))
    return total


def low_loss_terms(
    target: np.ndarray, branch_scores: list[np.ndarray], lam: float, mu: float
):
    """(l1, l2, l3, total, fused probs) for one candidate set.

    l1 scores the averaged-then-softmaxed fusion, l2 scores each branch
    distribution on its own, l3 is the pairwise consistency penalty.
    total = l1 + lam * l2 + mu * l3.
    """
    if not branch_scores:
        raise ValueError("at least one scoring branch is required")
    branch_probs = [softmax(s) for s in branch_scores]
    fused = softmax(np.mean(branch_scores, axis=0))
    l1 = candidate_loss(target, fused)
    l2 = sum(candidate_loss(target, p) for p in branch_probs)
    l3 = consistency_loss(branch_probs)
    return l1, l2, l3, l1 + lam * l2 + mu * l3, fused


# ---------------------------------------------------------------------------
# graph attention stack


class GatLayer:
    """One attention layer; heads average into the layer output."""

    def __init__(self, in_dim: int, out_dim: int, heads: int, rng: np.random.Generator):
        if heads < 1:
            raise ValueError("heads must be >= 1")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.heads = heads
        self.w = [glorot_uniform(rng, out_dim, in_dim) for _ in range(heads)]
        self.a = [glorot_uniform(rng, 1, 2 * out_dim).ravel() for _ in range(heads)]

    @property
    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, a in zip(self.w, self.a):
            out.append(w)
            out.append(a)
        return out

    def to_dict(self) -> dict:
        return {
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "heads": self.heads,
            "w": [w.tolist() for w in self.w],
            "a": [a.tolist() for a in self.a],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "GatLayer":
        layer = cls.__new__(cls)
        layer.in_dim = payload["in_dim"]
        layer.out_dim = payload["out_dim"]
        layer.heads = payload["heads"]
        layer.w = [np.array(w, dtype=float) for w in payload["w"]]
        layer.a = [np.array(a, dtype=float) for a in payload["a"]]
        return layer


def gat_layer_forward(
    layer: GatLayer,
    h: np.ndarray,
    dst: np.ndarray,
    src: np.ndarray,
    aggregate_neighbors: bool,
):
    """One layer over all nodes; isolated nodes come out as zeros."""
    n_nodes = h.shape[0]
    head_outs = []
    tapes = []
    for w, a in zip(layer.w, layer.a):
        z = h @ w.T
        sl = z @ a[: layer.out_dim]
        sr = z @ a[layer.out_dim :]
        raw = sl[dst] + sr[src] if len(dst) else np.zeros(0)
        act = leaky_relu(raw)
        seg_max = np.full(n_nodes, -np.inf)
        np.maximum.at(seg_max, dst, act)
        ex = np.exp(act - seg_max[dst]) if len(dst) else np.zeros(0)
        seg_sum = np.zeros(n_nodes)
        np.add.at(seg_sum, dst, ex)
        alpha = ex / seg_sum[dst] if len(dst) else np.zeros(0)
        agg = src if aggregate_neighbors else dst
        pre = np.zeros((n_nodes, layer.out_dim))
        if len(dst):
            np.add.at(pre, dst, alpha[:, None] * z[agg])
        out = leaky_relu(pre)
        head_outs.append(out)
        tapes.append({"z": z, "raw": raw, "act": act, "alpha": alpha, "pre": pre})
    layer_out = head_outs[0] if layer.heads == 1 else np.mean(head_outs, axis=0)
    return layer_out, {"h": h, "heads": tapes}


def gat_layer_backward(
    layer: GatLayer,
    tape: dict,
    dout: np.ndarray,
    dst: np.ndarray,
    src: np.ndarray,
    aggregate_neighbors: bool,
):
    """Gradients for one layer: per-head (dW, da) plus d input."""
    h = tape["h"]
    n_nodes = h.shape[0]
    dh = np.zeros_like(h)
    grads: list[np.ndarray] = []
    agg = src if aggregate_neighbors else dst
    for w, a, ht in zip(layer.w, layer.a, tape["heads"]):
        z, raw, act, alpha, pre = ht["z"], ht["raw"], ht["act"], ht["alpha"], ht["pre"]
        dpre = (dout / layer.heads) * leaky_relu_grad(pre)
        dz = np.zeros_like(z)
        da = np.zeros_like(a)
        if len(dst):
            dmsg = dpre[dst]  # (E, d): gradient of each message
            dalpha = np.einsum("ed,ed->e", dmsg, z[agg])
            np.add.at(dz, agg, alpha[:, None] * dmsg)
            # softmax over each destination's edge group
            seg_dot = np.zeros(n_nodes)
            np.add.at(seg_dot, dst, dalpha * alpha)
            dact = alpha * (dalpha - seg_dot[dst])
            draw = dact * leaky_relu_grad(raw)
            dsl = np.zeros(n_nodes)
            dsr = np.zeros(n_nodes)
            np.add.at(dsl, dst, draw)
            np.add.at(dsr, src, draw)
            da[: layer.out_dim] = z.T @ dsl
            da[layer.out_dim :] = z.T @ dsr
            dz += dsl[:, None] * a[None, : layer.out_dim]
            dz += dsr[:, None] * a[None, layer.out_dim :]
        dw = dz.T @ h
        dh += dz @ w
        grads.append(dw)
        grads.append(da)
    return grads, dh


class GatStack:
    def __init__(
        self, in_dim: int, out_dim: int, layers: int, heads: int, rng: np.random.Generator
    ):
        if layers < 1:
            raise ValueError("layers must be >= 1")
        dims = [in_dim] + [out_dim] * layers
        self.layers = [
            GatLayer(dims[i], dims[i + 1], heads, rng) for i in range(layers)
        ]

    @property
    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    def forward(self, h, dst, src, aggregate_neighbors):
        tapes = []
        for layer in self.layers:
            h, tape = gat_layer_forward(layer, h, dst, src, aggregate_neighbors)
            tapes.append(tape)
        return h, tapes

    def backward(self, tapes, dout, dst, src, aggregate_neighbors):
        grads_rev: list[list[np.ndarray]] = []
        for layer, tape in zip(reversed(self.layers), reversed(tapes)):
            layer_grads, dout = gat_layer_backward(
                layer, tape, dout, dst, src, aggregate_neighbors
            )
            grads_rev.append(layer_grads)
        grads: list[np.ndarray] = []
        for layer_grads in reversed(grads_rev):
            grads.extend(layer_grads)
        return grads, dout

    def to_dict(self) -> dict:
        return {"layers": [layer.to_dict() for layer in self.layers]}

    @classmethod
    def from_dict(cls, payload: dict) -> "GatStack":
        stack = cls.__new__(cls)
        stack.layers = [GatLayer.from_dict(p) for p in payload["layers"]]
        return stack


# ---------------------------------------------------------------------------
# per-query tensors


@dataclass
class QueryCompute:
    """Static tensors for one (document, query) pair.

    Everything here depends only on the corpus, the embeddings and the
    graph, never on model parameters, so training precomputes it once.
    """

    node_ids: list[str]
    dst: np.ndarray
    src: np.ndarray
    feats: np.ndarray  # g(v) per node, (V, 4(n-1))
    pooled: np.ndarray  # bag-of-neighbors vectors, same shape
    emb: np.ndarray  # raw node embeddings, (V, emb_dim)
    sem_in: np.ndarray  # (K, n * emb_dim)
    cand_idx: np.ndarray  # node index per candidate
    cand_ids: list[str]
    gold_pos: int | None


def node_features(
    document: Document, query: Query, graph: EntityGraph, store: EmbeddingStore
):
    """Per-node g(v) matrix and the raw node embedding matrix."""
    mentions = {
        m.ent_id: m for comp in document.components for m in comp.all_mentions()
    }
    n1 = len(query.elements)
    elem_vecs = [
        store.get(element_key(document.doc_id, query.query_id, i), query.elements[i])
        for i in range(n1)
    ]
    feats = np.zeros((graph.num_nodes, 4 * n1))
    emb = np.zeros((graph.num_nodes, store.dim))
    for vi, node in enumerate(graph.nodes):
        m = mentions[node.ent_id]
        hv = store.get(entity_key(document.doc_id, m.ent_id), m.surface)
        emb[vi] = hv
        for i in range(n1):
            feats[vi, i] = cosine(hv, elem_vecs[i])
            feats[vi, n1 + 3 * i : n1 + 3 * i + 3] = lexical_features(
                query.elements[i], m.surface
            )
    return feats, emb


def bon_pool(feats: np.ndarray, dst: np.ndarray, src: np.ndarray) -> np.ndarray:
    """Elementwise max of g over proper neighbors; isolated rows are zero."""
    pooled = np.full_like(feats, -np.inf)
    if len(dst):
        np.maximum.at(pooled, dst, feats[src])
    isolated = np.isinf(pooled).any(axis=1)
    pooled[isolated] = 0.0
    return pooled


def directed_pairs(graph: EntityGraph):
    dst_list: list[int] = []
    src_list: list[int] = []
    for i, nbrs in enumerate(graph.neighbor_index_arrays()):
        for j in nbrs:
            dst_list.append(i)
            src_list.append(j)
    return np.array(dst_list, dtype=int), np.array(src_list, dtype=int)


def candidate_mentions(
    document: Document, comp_ids: list[str], numeric_only: bool
) -> list[str]:
    """Candidate entity ids in document order, optionally numeric-typed."""
    wanted = set(comp_ids)
    out: list[str] = []
    for comp in document.components:
        if comp.comp_id not in wanted:
            continue
        for m in comp.all_mentions():
            if numeric_only and not m.numeric:
                continue
            out.append(m.ent_id)
    return out


def build_query_compute(
    document: Document,
    query: Query,
    graph: EntityGraph,
    store: EmbeddingStore,
    n: int,
    cand_ids: list[str],
) -> QueryCompute:
    feats, emb = node_features(document, query, graph, store)
    dst, src = directed_pairs(graph)
    pooled = bon_pool(feats, dst, src)
    elem_vecs = [
        store.get(element_key(document.doc_id, query.query_id, i), query.elements[i])
        for i in range(n - 1)
    ]
    cand_idx = np.array([graph.index[e] for e in cand_ids], dtype=int)
    sem_in = np.zeros((len(cand_ids), n * store.dim))
    for k, ci in enumerate(cand_idx):
        sem_in[k] = np.concatenate(elem_vecs + [emb[ci]])
    gold_pos = None
    if query.gold_entity_id is not None and query.gold_entity_id in cand_ids:
        gold_pos = cand_ids.index(query.gold_entity_id)
    return QueryCompute(
        node_ids=[node.ent_id for node in graph.nodes],
        dst=dst,
        src=src,
        feats=feats,
        pooled=pooled,
        emb=emb,
        sem_in=sem_in,
        cand_idx=cand_idx,
        cand_ids=cand_ids,
        gold_pos=gold_pos,
    )


# ---------------------------------------------------------------------------
# model


class ExtractorModel:
    """Trainable state of the low-level stage."""

    def __init__(
        self,
        n: int,
        emb_dim: int,
        hidden: int = 32,
        d_g: int = 32,
        gat_layers: int = 1,
        gat_heads: int = 1,
        aggregates_neighbors: bool = False,
        use_bon: bool = True,
        use_gat: bool = True,
        use_os: bool = True,
        use_mva: bool = True,
        lam: float = 0.3,
        mu: float = 0.15,
        seed: int = 0,
    ):
        if n < 2:
            raise ValueError("arity n must be >= 2")
        self.n = n
        self.emb_dim = emb_dim
        self.hidden = hidden
        self.d_g = d_g
        self.aggregates_neighbors = aggregates_neighbors
        self.use_bon = use_bon
        self.use_gat = use_gat
        self.use_os = use_os
        self.use_mva = use_mva
        self.lam = lam
        self.mu = mu
        self.seed = seed
        rng = np.random.default_rng(seed)
        gat_in = 4 * (n - 1) if use_bon else emb_dim
        self.gat = (
            GatStack(gat_in, d_g, gat_layers, gat_heads, rng) if use_gat else None
        )
        ngb_in = d_g if use_gat else gat_in
        sem_in = n * emb_dim
        self.sem_net = None
        self.ngb_net = None
        self.concat_net = None
        if use_mva:
            if use_os:
                self.sem_net = Ffnn([sem_in, hidden, 1], rng)
            self.ngb_net = Ffnn([ngb_in, hidden, 1], rng)
        else:
            concat_in = (sem_in if use_os else 0) + ngb_in
            self.concat_net = Ffnn([concat_in, hidden, 1], rng)

    @property
    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        if self.gat is not None:
            out.extend(self.gat.params)
        for net in (self.sem_net, self.ngb_net, self.concat_net):
            if net is not None:
                out.extend(net.params)
        return out

    def _ngb_input(self, qc: QueryCompute) -> np.ndarray:
        return qc.pooled if self.use_bon else qc.emb

    def to_dict(self) -> dict:
        return {
            "kind": "extractor",
            "n": self.n,
            "emb_dim": self.emb_dim,
            "hidden": self.hidden,
            "d_g": self.d_g,
            "gat_layers": 0 if self.gat is None else len(self.gat.layers),
            "gat_heads": 1 if self.gat is None else self.gat.layers[0].heads,
            "aggregates_neighbors": self.aggregates_neighbors,
            "use_bon": self.use_bon,
            "use_gat": self.use_gat,
            "use_os": self.use_os,
            "use_mva": self.use_mva,
            "lambda": self.lam,
            "mu": self.mu,
            "seed": self.seed,
            "gat": None if self.gat is None else self.gat.to_dict(),
            "sem_net": None if self.sem_net is None else self.sem_net.to_dict(),
            "ngb_net": None if self.ngb_net is None else self.ngb_net.to_dict(),
            "concat_net": None if self.concat_net is None else self.concat_net.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ExtractorModel":
        if payload.get("kind") != "extractor":
            raise ValueError(f"not an extractor checkpoint: kind={payload.get('kind')!r}")
        model = cls(
            n=payload["n"],
            emb_dim=payload["emb_dim"],
            hidden=payload["hidden"],
            d_g=payload["d_g"],
            gat_layers=max(1, payload["gat_layers"]),
            gat_heads=payload["gat_heads"],
            aggregates_neighbors=payload["aggregates_neighbors"],
            use_bon=payload["use_bon"],
            use_gat=payload["use_gat"],
            use_os=payload["use_os"],
            use_mva=payload["use_mva"],
            lam=payload["lambda"],
            mu=payload["mu"],
            seed=payload["seed"],
        )
        model.gat = None if payload["gat"] is None else GatStack.from_dict(payload["gat"])
        for name in ("sem_net", "ngb_net", "concat_net"):
            setattr(
                model,
                name,
                None if payload[name] is None else Ffnn.from_dict(payload[name]),
            )
        return model


def forward_low(model: ExtractorModel, qc: QueryCompute):
    """Fused candidate distribution plus caches for backward."""
    if len(qc.cand_ids) == 0:
        raise ValueError("cannot score an empty candidate set")
    cache: dict = {}
    h0 = model._ngb_input(qc)
    if model.gat is not None:
        hout, gat_tapes = model.gat.forward(
            h0, qc.dst, qc.src, model.aggregates_neighbors
        )
        cache["gat_tapes"] = gat_tapes
    else:
        hout = h0
    ngb_in = hout[qc.cand_idx]
    cache["hout_shape"] = hout.shape
    if model.use_mva:
        branch_scores: list[np.ndarray] = []
        if model.sem_net is not None:
            sem_out, sem_tape = model.sem_net.forward(qc.sem_in)
            branch_scores.append(sem_out[:, 0])
            cache["sem_tape"] = sem_tape
        ngb_out, ngb_tape = model.ngb_net.forward(ngb_in)
        branch_scores.append(ngb_out[:, 0])
        cache["ngb_tape"] = ngb_tape
        fused = softmax(np.mean(branch_scores, axis=0))
        cache["branch_scores"] = branch_scores
    else:
        x = (
            np.hstack([qc.sem_in, ngb_in])
            if model.use_os
            else ngb_in
        )
        out, tape = model.concat_net.forward(x)
        fused = softmax(out[:, 0])
        cache["concat_tape"] = tape
        cache["branch_scores"] = [out[:, 0]]
    cache["fused"] = fused
    return fused, cache


def loss_low(model: ExtractorModel, qc: QueryCompute) -> float:
    """Total training loss for one query, forward only."""
    if qc.gold_pos is None:
        raise ValueError("query compute carries no gold candidate")
    _, cache = forward_low(model, qc)
    target = np.zeros(len(qc.cand_ids))
    target[qc.gold_pos] = 1.0
    if model.use_mva:
        _, _, _, total, _ = low_loss_terms(
            target, cache["branch_scores"], model.lam, model.mu
        )
        return total
    return candidate_loss(target, cache["fused"])


def loss_and_grads_low(model: ExtractorModel, qc: QueryCompute):
    """Training loss and gradients aligned with ``model.params``."""
    if qc.gold_pos is None:
        raise ValueError("query compute carries no gold candidate")
    fused, cache = forward_low(model, qc)
    target = np.zeros(len(qc.cand_ids))
    target[qc.gold_pos] = 1.0
    branch_scores = cache["branch_scores"]
    n_branches = len(branch_scores)

    if model.use_mva:
        l1, l2, l3, total, fused = low_loss_terms(
            target, branch_scores, model.lam, model.mu
        )
        branch_probs = [softmax(s) for s in branch_scores]
        dscores = [np.zeros_like(s) for s in branch_scores]
        # l1 through the averaged logits
        dfused = binary_cross_entropy_grad(target, fused)
        dmean = softmax_grad_from_probs(fused, dfused)
        for ds in dscores:
            ds += dmean / n_branches
        # l2, each branch on its own
        for bi, pb in enumerate(branch_probs):
            dpb = model.lam * binary_cross_entropy_grad(target, pb)
            dscores[bi] += softmax_grad_from_probs(pb, dpb)
        # l3: each unordered pair appears twice in the ordered sum, and pu
        # shows up once per side, hence the factor 4 per counterpart
        for bi, pu in enumerate(branch_probs):
            dpu = np.zeros_like(pu)
            for pv in branch_probs:
                dpu += model.mu * 4.0 * (pu - pv)
            dscores[bi] += softmax_grad_from_probs(pu, dpu)
    else:
        total = candidate_loss(target, fused)
        dfused = binary_cross_entropy_grad(target, fused)
        dscores = [softmax_grad_from_probs(fused, dfused)]

    grads_by_name: dict[str, list[np.ndarray]] = {}
    d_ngb_in = None
    if model.use_mva:
        si = 0
        if model.sem_net is not None:
            sem_grads, _ = model.sem_net.backward(
                cache["sem_tape"], dscores[si][:, None]
            )
            grads_by_name["sem_net"] = sem_grads
            si += 1
        ngb_grads, d_ngb_in = model.ngb_net.backward(
            cache["ngb_tape"], dscores[si][:, None]
        )
        grads_by_name["ngb_net"] = ngb_grads
    else:
        concat_grads, dx = model.concat_net.backward(
            cache["concat_tape"], dscores[0][:, None]
        )
        grads_by_name["concat_net"] = concat_grads
        sem_width = model.n * model.emb_dim if model.use_os else 0
        d_ngb_in = dx[:, sem_width:]

    grads: list[np.ndarray] = []
    if model.gat is not None:
        dhout = np.zeros(cache["hout_shape"])
        np.add.at(dhout, qc.cand_idx, d_ngb_in)
        gat_grads, _ = model.gat.backward(
            cache["gat_tapes"], dhout, qc.dst, qc.src, model.aggregates_neighbors
        )
        grads.extend(gat_grads)
    for name in ("sem_net", "ngb_net", "concat_net"):
        if name in grads_by_name:
            grads.extend(grads_by_name[name])
    return total, grads


# ---------------------------------------------------------------------------
# training and prediction


def rank_candidates(
    model: ExtractorModel,
    document: Document,
    query: Query,
    graph: EntityGraph,
    store: EmbeddingStore,
    comp_ids: list[str],
    numeric_filter: bool = True,
):
    """Ranked candidate entity ids within the given components.

    Applies the answer-type filter at prediction time when asked to;
    ties keep document order. Returns an empty list when no candidate
    survives.
    """
    numeric_only = numeric_filter and query.answer_type == ANSWER_NUMERIC
    cand_ids = candidate_mentions(document, comp_ids, numeric_only)
    if not cand_ids:
        return [], np.zeros(0)
    qc = build_query_compute(document, query, graph, store, model.n, cand_ids)
    probs, _ = forward_low(model, qc)
    order = np.argsort(-probs, kind="stable")
    return [cand_ids[i] for i in order], probs


def _training_pairs(
    docs: list[Document],
    n: int,
    store: EmbeddingStore,
    graph_cfg: GraphConfig,
):
    pairs: list[QueryCompute] = []
    for doc in docs:
        graph = build_graph(doc, graph_cfg)
        for q in doc.queries:
            if q.gold_component_id is None or q.gold_entity_id is None:
                raise ValueError(
                    f"query {q.query_id} in document {doc.doc_id} lacks gold "
                    f"labels required for training"
                )
            cand_ids = candidate_mentions(doc, [q.gold_component_id], False)
            qc = build_query_compute(doc, q, graph, store, n, cand_ids)
            if qc.gold_pos is None:
                raise ValueError(
                    f"gold entity {q.gold_entity_id} of query {q.query_id} is "
                    f"not among its component's mentions"
                )
            pairs.append(qc)
    return pairs


def train_low(
    train_docs: list[Document],
    dev_docs: list[Document],
    n: int,
    store: EmbeddingStore,
    cfg: RunConfig,
):
    """Train the entity selector with per-query Adam steps.

    Candidates during training are every mention of the gold component,
    unfiltered. Early-stops on dev accuracy (gold-component scope) with
    the configured patience, restoring the best epoch.
    """
    model = ExtractorModel(
        n=n,
        emb_dim=store.dim,
        hidden=cfg.hidden,
        d_g=cfg.d_g,
        gat_layers=cfg.gat_layers,
        gat_heads=cfg.gat_heads,
        aggregates_neighbors=cfg.gat_aggregates_neighbors,
        use_bon=cfg.use_bon,
        use_gat=cfg.use_gat,
        use_os=cfg.use_os,
        use_mva=cfg.use_mva,
        lam=cfg.lam,
        mu=cfg.mu,
        seed=cfg.seed,
    )
    graph_cfg = cfg.graph_config()
    pairs = _training_pairs(train_docs, n, store, graph_cfg)
    if not pairs:
        raise ValueError("no training queries")
    dev_graphs = {doc.doc_id: build_graph(doc, graph_cfg) for doc in dev_docs}
    optimizer = Adam(model.params, lr=cfg.lr_low)
    rng = np.random.default_rng(cfg.seed)
    history = {"train_loss": [], "dev_acc": []}
    best_acc = -1.0
    best_loss = np.inf
    best_params = None
    stale = 0
    for epoch in range(cfg.max_epochs):
        total = 0.0
        for idx in rng.permutation(len(pairs)):
            loss, grads = loss_and_grads_low(model, pairs[idx])
            optimizer.step(model.params, grads)
            total += loss
        acc = _dev_accuracy_low(model, dev_docs, dev_graphs, store, cfg)
        mean_loss = total / len(pairs)
        history["train_loss"].append(mean_loss)
        history["dev_acc"].append(acc)
        log.info("low epoch %d loss %.4f dev acc %.4f", epoch, mean_loss, acc)
        # same tie-break as the high stage: when dev accuracy plateaus
        # at its best value, prefer the lowest-train-loss epoch
        if acc > best_acc or (acc == best_acc and mean_loss < best_loss):
            best_params = copy.deepcopy(model.params)
            best_loss = mean_loss
        if acc > best_acc:
            best_acc = acc
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    if best_params is not None:
        for p, saved in zip(model.params, best_params):
            p[...] = saved
    return model, history


def _dev_accuracy_low(model, dev_docs, dev_graphs, store, cfg: RunConfig) -> float:
    total = 0
    hits = 0
    for doc in dev_docs:
        for q in doc.queries:
            if q.gold_component_id is None or q.gold_entity_id is None:
                continue
            ranked, _ = rank_candidates(
                model,
                doc,
                q,
                dev_graphs[doc.doc_id],
                store,
                [q.gold_component_id],
                numeric_filter=cfg.numeric_filter,
            )
            total += 1
            hits += bool(ranked) and ranked[0] == q.gold_entity_id
    return hits / total if total else 0.0
