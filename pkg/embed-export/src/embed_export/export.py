"""Corpus export into the embedding interchange file, plus coverage checks.

The output is the JSONL format the extraction package loads: a
``{"dim": <int>}`` header line, then one ``{"id", "vec"}`` record per
vector. Ids are ``<kind>:<doc>/<local>`` with kinds ``c`` (component),
``e`` (entity mention), ``q`` (query question) and ``qe`` (query
element). Component and question vectors are first-position pooled by
default, with mean pooling as a switch; entity and element vectors are
always the mean over their aligned subword positions.

A component whose text exceeds the length budget is truncated with a
warning, and mentions that lose every subword to the cut are skipped
(the extraction side falls back to hashed vectors for them). With
``window=True`` long components are encoded in word windows instead,
the component vector becomes the mean over the windows and no mention
is lost.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .corpus import (
    KIND_COMPONENT,
    KIND_ELEMENT,
    KIND_ENTAILMENT,
    KIND_ENTITY,
    KIND_QUERY,
    corpus_wire_ids,
    read_corpus,
    wire_id,
)
from .encoder import Encoder, encode_texts, encode_word_lists, load_encoder, pool_first, pool_mean

log = logging.getLogger(__name__)

MIN_LEN = 8


class EmbeddingFormatError(ValueError):
    """Raised for malformed embedding files during verification."""


@dataclass
class ExportJob:
    corpus: Path
    model: str
    out: Path
    batch_size: int = 8
    max_len: int = 128
    pooling: str = "cls"
    device: str = "cpu"
    window: bool = False

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.max_len < MIN_LEN:
            raise ValueError(f"max length must be >= {MIN_LEN}, got {self.max_len}")
        if self.pooling not in ("cls", "mean"):
            raise ValueError(f"pooling must be 'cls' or 'mean', got {self.pooling!r}")


@dataclass
class ExportStats:
    dim: int
    vectors: int = 0
    skipped: int = 0
    truncated: int = 0


def _subword_lens(tokenizer, words, cache: dict[str, int]) -> list[int]:
    out = []
    for w in words:
        n = cache.get(w)
        if n is None:
            n = len(tokenizer.tokenize(w))
            cache[w] = n
        out.append(n)
    return out


def _windows(lens: list[int], budget: int) -> list[tuple[int, int]]:
    """Greedy word windows whose subword counts fit the budget.

    A single word larger than the whole budget gets its own window and
    is truncated inside it by the tokenizer.
    """
    if not lens:
        return [(0, 0)]
    spans = []
    lo = 0
    used = 0
    for i, n in enumerate(lens):
        if i > lo and used + n > budget:
            spans.append((lo, i))
            lo = i
            used = 0
        used += n
    spans.append((lo, len(lens)))
    return spans


def _pool(hidden: np.ndarray, aligned, pooling: str) -> np.ndarray:
    if pooling == "cls":
        return pool_first(hidden)
    return pool_mean(hidden, [a is not None for a in aligned])


def export_embeddings(job: ExportJob) -> ExportStats:
    """Encode the corpus and write the embedding file.

    Runs single threaded so that repeated exports with the same model,
    corpus and settings produce identical bytes.
    """
    torch.set_num_threads(1)
    docs = read_corpus(job.corpus)
    enc = load_encoder(job.model, job.device)
    stats = ExportStats(dim=enc.hidden)
    records: dict[str, np.ndarray] = {}

    _export_components(job, enc, docs, records, stats)
    _export_queries(job, enc, docs, records, stats)

    job.out.parent.mkdir(parents=True, exist_ok=True)
    with job.out.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"dim": enc.hidden}) + "\n")
        for wid in corpus_wire_ids(docs):
            vec = records.get(wid)
            if vec is None:
                continue
            fh.write(
                json.dumps({"id": wid, "vec": [float(x) for x in vec]}) + "\n"
            )
            stats.vectors += 1
    log.info(
        "wrote %d vectors to %s (%d skipped, %d truncated)",
        stats.vectors, job.out, stats.skipped, stats.truncated,
    )
    return stats


def _export_components(job, enc: Encoder, docs, records, stats) -> None:
    budget = job.max_len - 2
    len_cache: dict[str, int] = {}
    samples: list[tuple[int, int, int, list[str]]] = []
    for d, doc in enumerate(docs):
        for c, comp in enumerate(doc.components):
            lens = _subword_lens(enc.tokenizer, comp.words, len_cache)
            if job.window:
                spans = _windows(lens, budget)
            else:
                spans = [(0, len(comp.words))]
                if sum(lens) > budget:
                    stats.truncated += 1
                    log.warning(
                        "component %s/%s exceeds max_len %d, truncating",
                        doc.doc_id, comp.comp_id, job.max_len,
                    )
            for lo, hi in spans:
                samples.append((d, c, lo, list(comp.words[lo:hi])))

    outputs = encode_word_lists(
        enc, [s[3] for s in samples], job.max_len, job.batch_size
    )
    pooled: dict[tuple[int, int], list[np.ndarray]] = {}
    word_rows: dict[tuple[int, int], dict[int, list[np.ndarray]]] = {}
    for (d, c, off, _), (hidden, word_ids) in zip(samples, outputs):
        pooled.setdefault((d, c), []).append(_pool(hidden, word_ids, job.pooling))
        rows = word_rows.setdefault((d, c), {})
        for t, w in enumerate(word_ids):
            if w is not None:
                rows.setdefault(w + off, []).append(hidden[t])

    for d, doc in enumerate(docs):
        for c, comp in enumerate(doc.components):
            chunks = pooled[(d, c)]
            records[wire_id(KIND_COMPONENT, doc.doc_id, comp.comp_id)] = (
                chunks[0] if len(chunks) == 1 else np.mean(chunks, axis=0)
            )
            rows = word_rows[(d, c)]
            for m in comp.mentions:
                covered = [w for w in range(m.lo, m.hi) if w in rows]
                if not covered or len(covered) < m.hi - m.lo:
                    stats.skipped += 1
                    log.warning(
                        "no aligned positions for %s/%s, skipping",
                        doc.doc_id, m.ent_id,
                    )
                    continue
                vecs = [v for w in covered for v in rows[w]]
                records[wire_id(KIND_ENTITY, doc.doc_id, m.ent_id)] = np.mean(
                    vecs, axis=0
                )


def _export_queries(job, enc: Encoder, docs, records, stats) -> None:
    ordered: list[tuple[int, int]] = [
        (d, qi)
        for d, doc in enumerate(docs)
        for qi in range(len(doc.queries))
    ]
    texts = [docs[d].queries[qi].text for d, qi in ordered]
    outputs = encode_texts(enc, texts, job.max_len, job.batch_size)
    for (d, qi), (hidden, offsets) in zip(ordered, outputs):
        doc = docs[d]
        q = doc.queries[qi]
        records[wire_id(KIND_QUERY, doc.doc_id, q.query_id)] = _pool(
            hidden, offsets, job.pooling
        )
        covered_to = max((p[1] for p in offsets if p is not None), default=0)
        if covered_to < len(q.text):
            stats.truncated += 1
            log.warning(
                "question %s/%s exceeds max_len %d, truncating",
                doc.doc_id, q.query_id, job.max_len,
            )
        for i, (lo, hi) in enumerate(q.element_spans):
            keep = [
                p is not None and p[0] < hi and p[1] > lo for p in offsets
            ]
            if not any(keep):
                stats.skipped += 1
                log.warning(
                    "no aligned positions for %s/%s element %d, skipping",
                    doc.doc_id, q.query_id, i,
                )
                continue
            records[
                wire_id(KIND_ELEMENT, doc.doc_id, f"{q.query_id}/{i}")
            ] = pool_mean(hidden, keep)


# ---------------------------------------------------------------------------
# verification


@dataclass
class Coverage:
    """What an embedding file covers of its corpus."""

    dim: int
    records: int
    missing: tuple[str, ...]
    extra: tuple[str, ...]
    entailment_records: int
    component_total: int
    component_present: int

    @property
    def complete(self) -> bool:
        return self.component_present == self.component_total


def read_embedding_ids(path: str | Path) -> tuple[int, list[str]]:
    """Ids of a well-formed embedding file, checking dims and duplicates."""
    path = Path(path)
    ids: list[str] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise EmbeddingFormatError(f"{path}: empty file, expected a dim header")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise EmbeddingFormatError(f"{path}:1: invalid header: {exc.msg}") from exc
        if not isinstance(header, dict) or not isinstance(header.get("dim"), int):
            raise EmbeddingFormatError(f'{path}:1: header must be {{"dim": <int>}}')
        dim = header["dim"]
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: invalid record: {exc.msg}"
                ) from exc
            if (
                not isinstance(rec, dict)
                or not isinstance(rec.get("id"), str)
                or not isinstance(rec.get("vec"), list)
            ):
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: record must carry an 'id' string and a 'vec' list"
                )
            rid = rec["id"]
            if rid in seen:
                raise EmbeddingFormatError(f"{path}:{lineno}: duplicate id {rid!r}")
            seen.add(rid)
            want = 1 if rid.startswith(KIND_ENTAILMENT + ":") else dim
            if len(rec["vec"]) != want:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: vector for {rid!r} has length "
                    f"{len(rec['vec'])}, expected {want}"
                )
            ids.append(rid)
    return dim, ids


def verify_file(path: str | Path, corpus_path: str | Path) -> Coverage:
    """Compare an embedding file against the keys its corpus induces."""
    docs = read_corpus(corpus_path)
    want = corpus_wire_ids(docs)
    dim, got = read_embedding_ids(path)
    got_set = set(got)
    want_set = set(want)
    entailment = sum(1 for i in got if i.startswith(KIND_ENTAILMENT + ":"))
    comp_ids = [w for w in want if w.startswith(KIND_COMPONENT + ":")]
    return Coverage(
        dim=dim,
        records=len(got),
        missing=tuple(w for w in want if w not in got_set),
        extra=tuple(
            sorted(
                i
                for i in got_set - want_set
                if not i.startswith(KIND_ENTAILMENT + ":")
            )
        ),
        entailment_records=entailment,
        component_total=len(comp_ids),
        component_present=sum(1 for w in comp_ids if w in got_set),
    )
