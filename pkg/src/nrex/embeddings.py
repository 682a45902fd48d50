"""Embedding store, hashed fallback vectors and the embedding file format.

The interchange file is UTF-8 JSONL. The first line is a header
``{"dim": <int>}``; every following line is a record
``{"id": "<kind>:<doc_id>/<local_id>", "vec": [...]}``. Kinds:

=====  =============================================================
c      component text, local id ``<comp_id>``
e      entity mention, local id ``<ent_id>``
q      query question text, local id ``<query_id>``
qe     query element, local id ``<query_id>/<element_idx>``
ent    component-query entailment score, local id
       ``<comp_id>/<query_id>``, a single value in [0, 1]
=====  =============================================================

``ent`` records are length 1 regardless of the header dimension; all
other records must match the header. Precomputed vectors are optional
everywhere: lookups fall back to a hashed character-trigram embedding
of the text, so the pipeline runs with no embedding file at all.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .corpus import Corpus, Document, Query

log = logging.getLogger(__name__)

KIND_COMPONENT = "c"
KIND_ENTITY = "e"
KIND_QUERY = "q"
KIND_ELEMENT = "qe"
KIND_ENTAILMENT = "ent"

_KINDS = (KIND_COMPONENT, KIND_ENTITY, KIND_QUERY, KIND_ELEMENT, KIND_ENTAILMENT)

MIN_DIM = 8
DEFAULT_DIM = 64

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


class EmbeddingFileError(ValueError):
    """Raised for malformed or inconsistent embedding files."""


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def hash_embed(text: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Deterministic signed character-trigram embedding.

    The casefolded text is cut into overlapping character trigrams (a
    string shorter than 3 characters contributes itself as a single
    gram). Each gram lands in bucket ``fnv1a64(gram) % dim`` with sign
    taken from the hash's top bit, and the result is L2-normalized.
    The empty string maps to the zero vector.
    """
    if dim < MIN_DIM:
        raise ValueError(f"embedding dim must be >= {MIN_DIM}, got {dim}")
    vec = np.zeros(dim)
    s = text.casefold()
    if len(s) >= 3:
        grams: Iterable[str] = (s[i : i + 3] for i in range(len(s) - 2))
    elif s:
        grams = (s,)
    else:
        return vec
    for gram in grams:
        h = fnv1a64(gram.encode("utf-8"))
        sign = -1.0 if h >> 63 else 1.0
        vec[h % dim] += sign
    norm = np.linalg.norm(vec)
    if norm > 0.0:
        vec /= norm
    return vec


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; 0.0 when either vector is zero."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"cosine of mismatched shapes {u.shape} and {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


@dataclass(frozen=True)
class EmbeddingKey:
    kind: str
    doc_id: str
    local_id: str

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown embedding kind {self.kind!r}")

    def wire(self) -> str:
        return f"{self.kind}:{self.doc_id}/{self.local_id}"

    @classmethod
    def from_wire(cls, raw: str) -> "EmbeddingKey":
        kind, sep, rest = raw.partition(":")
        if not sep or "/" not in rest:
            raise EmbeddingFileError(f"malformed embedding id {raw!r}")
        doc_id, _, local_id = rest.partition("/")
        return cls(kind=kind, doc_id=doc_id, local_id=local_id)


def component_key(doc_id: str, comp_id: str) -> EmbeddingKey:
    return EmbeddingKey(KIND_COMPONENT, doc_id, comp_id)


def entity_key(doc_id: str, ent_id: str) -> EmbeddingKey:
    return EmbeddingKey(KIND_ENTITY, doc_id, ent_id)


def query_key(doc_id: str, query_id: str) -> EmbeddingKey:
    return EmbeddingKey(KIND_QUERY, doc_id, query_id)


def element_key(doc_id: str, query_id: str, idx: int) -> EmbeddingKey:
    return EmbeddingKey(KIND_ELEMENT, doc_id, f"{query_id}/{idx}")


def entailment_key(doc_id: str, comp_id: str, query_id: str) -> EmbeddingKey:
    return EmbeddingKey(KIND_ENTAILMENT, doc_id, f"{comp_id}/{query_id}")


class EmbeddingStore:
    """Vectors by key with a hashed fallback for anything missing.

    ``get`` is total: a missing key hashes the caller-provided fallback
    text instead of failing. Misses are counted and logged at debug
    level so a silent all-fallback run is easy to spot.
    """

    def __init__(self, dim: int, entries: dict[EmbeddingKey, np.ndarray] | None = None):
        if dim < MIN_DIM:
            raise ValueError(f"embedding dim must be >= {MIN_DIM}, got {dim}")
        self.dim = dim
        self.entries: dict[EmbeddingKey, np.ndarray] = dict(entries or {})
        self.fallback_count = 0

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: EmbeddingKey) -> bool:
        return key in self.entries

    def add(self, key: EmbeddingKey, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=float)
        want = 1 if key.kind == KIND_ENTAILMENT else self.dim
        if vec.shape != (want,):
            raise EmbeddingFileError(
                f"vector for {key.wire()} has length {vec.shape}, expected {want}"
            )
        if key.kind == KIND_ENTAILMENT and not (0.0 <= vec[0] <= 1.0):
            raise EmbeddingFileError(
                f"entailment score for {key.wire()} must lie in [0, 1], got {vec[0]}"
            )
        if key in self.entries:
            raise EmbeddingFileError(f"duplicate embedding id {key.wire()}")
        self.entries[key] = vec

    def get(self, key: EmbeddingKey, fallback_text: str) -> np.ndarray:
        hit = self.entries.get(key)
        if hit is not None:
            return hit
        self.fallback_count += 1
        log.debug("embedding miss for %s, hashing %r", key.wire(), fallback_text)
        return hash_embed(fallback_text, self.dim)

    def entailment(self, key: EmbeddingKey) -> float | None:
        """Stored entailment score, or None when absent."""
        hit = self.entries.get(key)
        return None if hit is None else float(hit[0])


def load_embeddings(path: str | Path, expected_dim: int | None = None) -> EmbeddingStore:
    """Read an embedding file, checking the header and every record.

    Raises EmbeddingFileError naming the offending line or id for a
    missing or malformed header, dimension mismatches, duplicate ids
    and out-of-range entailment scores.
    """
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise EmbeddingFileError(f"{path}: empty file, expected a dim header")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise EmbeddingFileError(f"{path}:1: invalid header: {exc.msg}") from exc
        if not isinstance(header, dict) or "dim" not in header:
            raise EmbeddingFileError(f'{path}:1: header must be {{"dim": <int>}}')
        dim = header["dim"]
        if not isinstance(dim, int) or dim < MIN_DIM:
            raise EmbeddingFileError(f"{path}:1: bad dim {dim!r}")
        if expected_dim is not None and dim != expected_dim:
            raise EmbeddingFileError(
                f"{path}: header dim {dim} does not match expected {expected_dim}"
            )
        store = EmbeddingStore(dim)
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EmbeddingFileError(
                    f"{path}:{lineno}: invalid record: {exc.msg}"
                ) from exc
            if not isinstance(rec, dict) or "id" not in rec or "vec" not in rec:
                raise EmbeddingFileError(
                    f"{path}:{lineno}: record must carry 'id' and 'vec'"
                )
            key = EmbeddingKey.from_wire(rec["id"])
            try:
                store.add(key, np.asarray(rec["vec"], dtype=float))
            except EmbeddingFileError as exc:
                raise EmbeddingFileError(f"{path}:{lineno}: {exc}") from exc
    return store


def save_embeddings(store: EmbeddingStore, path: str | Path) -> None:
    """Write the JSONL interchange file; a reload is value-identical."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"dim": store.dim}) + "\n")
        for key in sorted(store.entries, key=lambda k: k.wire()):
            vec = store.entries[key]
            fh.write(
                json.dumps({"id": key.wire(), "vec": [float(x) for x in vec]})
                + "\n"
            )


DEFAULT_QUESTION_PREFIX = "What is the answer for "


def build_query_text(query: Query) -> str:
    """Render the question string for a query.

    Without a template: the default prefix plus the comma-joined
    elements and a question mark. With a template: slots {1}..{n-1} are
    substituted in order; a slot count mismatch raises ValueError.
    """
    if query.question_template is None:
        return DEFAULT_QUESTION_PREFIX + ", ".join(query.elements) + "?"
    text = query.question_template
    seen: list[int] = []

    def _fill(match) -> str:
        idx = int(match.group(1))
        seen.append(idx)
        if not (1 <= idx <= len(query.elements)):
            raise ValueError(
                f"template slot {{{idx}}} out of range for "
                f"{len(query.elements)} elements"
            )
        return query.elements[idx - 1]

    text = re.sub(r"\{(\d+)\}", _fill, text)
    if sorted(seen) != list(range(1, len(query.elements) + 1)):
        raise ValueError(
            f"template must use each slot exactly once, found {sorted(seen)}"
        )
    return text


def corpus_embedding_keys(corpus: Corpus) -> list[tuple[EmbeddingKey, str]]:
    """Every (key, source text) pair a corpus induces, minus entailment.

    Entailment records are optional extras produced by external scorers;
    the hashed fallback never fabricates them.
    """
    out: list[tuple[EmbeddingKey, str]] = []
    for doc in corpus.documents:
        for comp in doc.components:
            out.append(
                (component_key(doc.doc_id, comp.comp_id), " ".join(comp.text_tokens()))
            )
            for m in comp.all_mentions():
                out.append((entity_key(doc.doc_id, m.ent_id), m.surface))
        for q in doc.queries:
            out.append((query_key(doc.doc_id, q.query_id), build_query_text(q)))
            for i, element in enumerate(q.elements):
                out.append((element_key(doc.doc_id, q.query_id, i), element))
    return out


def build_hash_store(corpus: Corpus, dim: int = DEFAULT_DIM) -> EmbeddingStore:
    """Materialize hashed vectors for every key of the corpus."""
    store = EmbeddingStore(dim)
    for key, text in corpus_embedding_keys(corpus):
        store.add(key, hash_embed(text, dim))
    return store
