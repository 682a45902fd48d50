"""High-level stage: rank document components for a query.

Each component gets a feature vector ``[f_cs | f_es | f_el]``:

* ``f_cs`` (2 values): cosine between component and question embeddings,
  plus an entailment score. A precomputed score from the embedding file
  is used verbatim when present; otherwise a small trained head predicts
  it from ``[h_C | h_Q | |h_C - h_Q| | h_C * h_Q]``.
* ``f_es`` (n-1 values): per query element, the best cosine between the
  element embedding and any entity of the component.
* ``f_el`` (3(n-1) values): per query element, the elementwise maximum
  of the (levenshtein, substring, subsequence) similarity triple over
  the component's entity surfaces.

A linear-output feed-forward net scores the vector; the sigmoid of that
score is the component probability. Feature blocks can be switched off
for ablations, shrinking the vector accordingly.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .corpus import Component, Document, Query
from .embeddings import (
    EmbeddingStore,
    build_query_text,
    component_key,
    cosine,
    element_key,
    entailment_key,
    entity_key,
    query_key,
)
from .nn import (
    Adam,
    Ffnn,
    binary_cross_entropy,
    binary_cross_entropy_grad,
    sigmoid,
)
from .textmetrics import lexical_features

log = logging.getLogger(__name__)

ES_FILL = -1.0  # entity-less component: worst possible cosine
EL_FILL = 0.0  # entity-less component: worst possible lexical similarity


class RetrieverModel:
    """Trainable state of the high-level stage."""

    def __init__(
        self,
        n: int,
        emb_dim: int,
        hidden: int = 32,
        use_cs: bool = True,
        use_es: bool = True,
        use_el: bool = True,
        seed: int = 0,
    ):
        if n < 2:
            raise ValueError("arity n must be >= 2")
        if not (use_cs or use_es or use_el):
            raise ValueError("at least one feature block must stay enabled")
        self.n = n
        self.emb_dim = emb_dim
        self.hidden = hidden
        self.use_cs = use_cs
        self.use_es = use_es
        self.use_el = use_el
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.classifier = Ffnn([self.feature_dim, hidden, 1], rng)
        self.ent_head = Ffnn([4 * emb_dim, hidden, 1], rng) if use_cs else None

    @property
    def feature_dim(self) -> int:
        n1 = self.n - 1
        return 2 * self.use_cs + n1 * self.use_es + 3 * n1 * self.use_el

    @property
    def params(self) -> list[np.ndarray]:
        out = list(self.classifier.params)
        if self.ent_head is not None:
            out.extend(self.ent_head.params)
        return out

    def to_dict(self) -> dict:
        return {
            "kind": "retriever",
            "n": self.n,
            "emb_dim": self.emb_dim,
            "hidden": self.hidden,
            "use_cs": self.use_cs,
            "use_es": self.use_es,
            "use_el": self.use_el,
            "seed": self.seed,
            "classifier": self.classifier.to_dict(),
            "ent_head": None if self.ent_head is None else self.ent_head.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RetrieverModel":
        if payload.get("kind") != "retriever":
            raise ValueError(f"not a retriever checkpoint: kind={payload.get('kind')!r}")
        model = cls(
            n=payload["n"],
            emb_dim=payload["emb_dim"],
            hidden=payload["hidden"],
            use_cs=payload["use_cs"],
            use_es=payload["use_es"],
            use_el=payload["use_el"],
            seed=payload["seed"],
        )
        model.classifier = Ffnn.from_dict(payload["classifier"])
        if payload["ent_head"] is not None:
            model.ent_head = Ffnn.from_dict(payload["ent_head"])
        return model


@dataclass
class HighFeatureBatch:
    """Static (model-independent) features for every component of one query.

    ``ent_stored`` holds precomputed entailment scores with NaN where
    the file had none; for those rows ``ent_z`` carries the head input.
    """

    cos_cq: np.ndarray
    es: np.ndarray
    el: np.ndarray
    ent_stored: np.ndarray
    ent_z: np.ndarray
    comp_ids: list[str]


def es_features(
    component: Component, query: Query, doc_id: str, store: EmbeddingStore
) -> np.ndarray:
    """Best entity cosine per query element; -1 with no entities."""
    mentions = component.all_mentions()
    out = np.full(len(query.elements), ES_FILL)
    if not mentions:
        return out
    vecs = [store.get(entity_key(doc_id, m.ent_id), m.surface) for m in mentions]
    for i in range(len(query.elements)):
        evec = store.get(element_key(doc_id, query.query_id, i), query.elements[i])
        out[i] = max(cosine(v, evec) for v in vecs)
    return out


def el_features(component: Component, query: Query) -> np.ndarray:
    """Elementwise max of lexical triples per element; zeros with no entities."""
    mentions = component.all_mentions()
    n1 = len(query.elements)
    out = np.full(3 * n1, EL_FILL)
    if not mentions:
        return out
    for i, element in enumerate(query.elements):
        block = np.full(3, EL_FILL)
        for m in mentions:
            block = np.maximum(block, np.asarray(lexical_features(element, m.surface)))
        out[3 * i : 3 * i + 3] = block
    return out


def cs_features(
    component: Component,
    query: Query,
    doc_id: str,
    store: EmbeddingStore,
    model: RetrieverModel,
) -> np.ndarray:
    """The [cosine, entailment] pair for one component.

    Convenience wrapper over the batched path; training uses
    build_feature_batch / high_forward directly.
    """
    if not model.use_cs:
        raise ValueError("cs features are disabled on this model")
    batch = build_feature_batch(
        Document(doc_id=doc_id, components=(component,)), query, store
    )
    _, cs_block, _ = high_forward(model, batch)
    return cs_block[0]


def build_feature_batch(
    document: Document, query: Query, store: EmbeddingStore
) -> HighFeatureBatch:
    comps = document.components
    n1 = len(query.elements)
    qvec = store.get(query_key(document.doc_id, query.query_id), build_query_text(query))
    cos_cq = np.zeros(len(comps))
    es = np.zeros((len(comps), n1))
    el = np.zeros((len(comps), 3 * n1))
    ent_stored = np.full(len(comps), np.nan)
    ent_z = np.zeros((len(comps), 4 * store.dim))
    for ci, comp in enumerate(comps):
        cvec = store.get(
            component_key(document.doc_id, comp.comp_id),
            " ".join(comp.text_tokens()),
        )
        cos_cq[ci] = cosine(cvec, qvec)
        es[ci] = es_features(comp, query, document.doc_id, store)
        el[ci] = el_features(comp, query)
        stored = store.entailment(
            entailment_key(document.doc_id, comp.comp_id, query.query_id)
        )
        if stored is not None:
            ent_stored[ci] = stored
        ent_z[ci] = np.concatenate(
            [cvec, qvec, np.abs(cvec - qvec), cvec * qvec]
        )
    return HighFeatureBatch(
        cos_cq=cos_cq,
        es=es,
        el=el,
        ent_stored=ent_stored,
        ent_z=ent_z,
        comp_ids=[c.comp_id for c in comps],
    )


def high_forward(model: RetrieverModel, batch: HighFeatureBatch):
    """Component probabilities plus the caches backward needs."""
    blocks = []
    cache: dict = {}
    if model.use_cs:
        need_head = np.isnan(batch.ent_stored)
        ent = np.where(need_head, 0.0, np.nan_to_num(batch.ent_stored))
        if need_head.any():
            z = batch.ent_z[need_head]
            head_logit, head_tape = model.ent_head.forward(z)
            head_prob = sigmoid(head_logit[:, 0])
            ent = ent.copy()
            ent[need_head] = head_prob
            cache.update(
                head_tape=head_tape, head_prob=head_prob, need_head=need_head
            )
        else:
            cache.update(head_tape=None, head_prob=None, need_head=need_head)
        blocks.append(np.column_stack([batch.cos_cq, ent]))
    if model.use_es:
        blocks.append(batch.es)
    if model.use_el:
        blocks.append(batch.el)
    x = np.hstack(blocks)
    logits, tape = model.classifier.forward(x)
    probs = sigmoid(logits[:, 0])
    cache.update(tape=tape, probs=probs, x=x)
    cs_block = blocks[0] if model.use_cs else None
    return probs, cs_block, cache


def high_loss(model: RetrieverModel, batch: HighFeatureBatch, target: np.ndarray) -> float:
    probs, _, _ = high_forward(model, batch)
    return binary_cross_entropy(target, probs)


def high_loss_and_grads(
    model: RetrieverModel, batch: HighFeatureBatch, target: np.ndarray
):
    """Summed BCE over the query's components and its parameter gradients."""
    probs, _, cache = high_forward(model, batch)
    loss = binary_cross_entropy(target, probs)
    dprob = binary_cross_entropy_grad(target, probs)
    dlogit = dprob * probs * (1.0 - probs)
    grads, dx = model.classifier.backward(cache["tape"], dlogit[:, None])
    if model.ent_head is not None and cache["need_head"].any():
        # entailment occupies column 1 of the cs block
        dent = dx[cache["need_head"], 1]
        hp = cache["head_prob"]
        dhead_logit = dent * hp * (1.0 - hp)
        head_grads, _ = model.ent_head.backward(cache["head_tape"], dhead_logit[:, None])
        grads = grads + head_grads
    elif model.ent_head is not None:
        grads = grads + [np.zeros_like(p) for p in model.ent_head.params]
    return loss, grads


def score_components(
    document: Document, query: Query, store: EmbeddingStore, model: RetrieverModel
):
    """Probability per component (document order) and the ranked ids."""
    if len(document.components) == 0:
        raise ValueError(f"document {document.doc_id} has no components to rank")
    batch = build_feature_batch(document, query, store)
    probs, _, _ = high_forward(model, batch)
    order = np.argsort(-probs, kind="stable")
    return probs, [batch.comp_ids[i] for i in order]


def _component_target(document: Document, query: Query) -> np.ndarray:
    if query.gold_component_id is None:
        raise ValueError(
            f"query {query.query_id} in document {document.doc_id} has no "
            f"gold component label"
        )
    return np.array(
        [1.0 if c.comp_id == query.gold_component_id else 0.0 for c in document.components]
    )


def train_high(
    train_docs: list[Document],
    dev_docs: list[Document],
    n: int,
    store: EmbeddingStore,
    cfg: RunConfig,
):
    """Train the component retriever with per-query Adam steps.

    Early-stops on dev top-1 accuracy with the configured patience and
    restores the best epoch's parameters. Returns (model, history)
    where history holds per-epoch mean train loss and dev accuracy.
    """
    model = RetrieverModel(
        n=n,
        emb_dim=store.dim,
        hidden=cfg.hidden,
        use_cs=cfg.use_cs,
        use_es=cfg.use_es,
        use_el=cfg.use_el,
        seed=cfg.seed,
    )
    pairs = [
        (build_feature_batch(doc, q, store), _component_target(doc, q))
        for doc in train_docs
        for q in doc.queries
    ]
    if not pairs:
        raise ValueError("no training queries")
    dev_pairs = [(doc, q) for doc in dev_docs for q in doc.queries]
    optimizer = Adam(model.params, lr=cfg.lr_high)
    rng = np.random.default_rng(cfg.seed)
    history = {"train_loss": [], "dev_acc": []}
    best_acc = -1.0
    best_loss = np.inf
    best_params = None
    stale = 0
    for epoch in range(cfg.max_epochs):
        total = 0.0
        for idx in rng.permutation(len(pairs)):
            batch, target = pairs[idx]
            loss, grads = high_loss_and_grads(model, batch, target)
            optimizer.step(model.params, grads)
            total += loss
        acc = _dev_accuracy(model, dev_pairs, store)
        mean_loss = total / len(pairs)
        history["train_loss"].append(mean_loss)
        history["dev_acc"].append(acc)
        log.info("high epoch %d loss %.4f dev acc %.4f", epoch, mean_loss, acc)
        # dev accuracy saturates early on separable data; among tied
        # epochs keep the most consolidated (lowest train loss) one
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


def _dev_accuracy(model, dev_pairs, store) -> float:
    if not dev_pairs:
        return 0.0
    hits = 0
    for doc, q in dev_pairs:
        _, ranked = score_components(doc, q, store, model)
        hits += ranked[0] == q.gold_component_id
    return hits / len(dev_pairs)
