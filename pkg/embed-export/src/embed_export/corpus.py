"""Light reader for the corpus JSON the exporter encodes.

Only what the encoder needs is materialized. A component becomes one
flat word list (paragraph sentences concatenated, or table cells in
row-major order followed by the caption) with half-open word ranges
for its entity mentions. A query becomes the rendered question string
with the character span of each element. The full structural
validation lives in the extraction package; this reader checks just
enough to fail with a message naming the spot instead of a KeyError.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

KIND_COMPONENT = "c"
KIND_ENTITY = "e"
KIND_QUERY = "q"
KIND_ELEMENT = "qe"
KIND_ENTAILMENT = "ent"

# must match the question rendering of the extraction package, since
# the query vectors stand in for exactly that text
QUESTION_PREFIX = "What is the answer for "

_SLOT = re.compile(r"\{(\d+)\}")


class CorpusReadError(ValueError):
    """Raised when the corpus file cannot be interpreted."""


@dataclass(frozen=True)
class MentionRange:
    """An entity mention as a word range into its component."""

    ent_id: str
    lo: int
    hi: int


@dataclass(frozen=True)
class ComponentText:
    comp_id: str
    words: tuple[str, ...]
    mentions: tuple[MentionRange, ...]


@dataclass(frozen=True)
class QueryText:
    """A rendered question plus the character span of each element."""

    query_id: str
    text: str
    element_spans: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class DocumentText:
    doc_id: str
    components: tuple[ComponentText, ...]
    queries: tuple[QueryText, ...]


def wire_id(kind: str, doc_id: str, local_id: str) -> str:
    return f"{kind}:{doc_id}/{local_id}"


def _req(obj: dict, key: str, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise CorpusReadError(f"{where}: missing required field '{key}'")
    return obj[key]


def question_text(
    elements: tuple[str, ...], template: str | None
) -> tuple[str, tuple[tuple[int, int], ...]]:
    """Render the question and track where each element landed.

    Without a template the question is the default prefix plus the
    comma-joined elements and a question mark. A template substitutes
    slots {1}..{n-1}, each of which must appear exactly once.
    """
    if template is None:
        text = QUESTION_PREFIX
        spans = []
        for i, el in enumerate(elements):
            if i:
                text += ", "
            spans.append((len(text), len(text) + len(el)))
            text += el
        return text + "?", tuple(spans)
    spans_by_idx: dict[int, tuple[int, int]] = {}
    out: list[str] = []
    pos = 0
    cur = 0
    for m in _SLOT.finditer(template):
        idx = int(m.group(1))
        if not (1 <= idx <= len(elements)):
            raise CorpusReadError(
                f"template slot {{{idx}}} out of range for {len(elements)} elements"
            )
        if idx in spans_by_idx:
            raise CorpusReadError(f"template uses slot {{{idx}}} twice")
        out.append(template[pos : m.start()])
        cur += m.start() - pos
        el = elements[idx - 1]
        spans_by_idx[idx] = (cur, cur + len(el))
        out.append(el)
        cur += len(el)
        pos = m.end()
    out.append(template[pos:])
    if len(spans_by_idx) != len(elements):
        raise CorpusReadError(
            f"template must mention every element, found slots {sorted(spans_by_idx)}"
        )
    return "".join(out), tuple(spans_by_idx[i + 1] for i in range(len(elements)))


def _paragraph(obj: dict, where: str) -> ComponentText:
    sentences = [list(s) for s in obj.get("sentences", [])]
    offsets = []
    total = 0
    for sent in sentences:
        offsets.append(total)
        total += len(sent)
    words = tuple(w for sent in sentences for w in sent)
    mentions = []
    for i, m in enumerate(obj.get("entities", [])):
        mw = f"{where}/entities[{i}]"
        sent_idx = _req(m, "sent_idx", mw)
        span = _req(m, "span", mw)
        if not (0 <= sent_idx < len(sentences)):
            raise CorpusReadError(f"{mw}: sentence index {sent_idx} out of range")
        lo = offsets[sent_idx] + span[0]
        hi = offsets[sent_idx] + span[1]
        mentions.append(MentionRange(_req(m, "ent_id", mw), lo, hi))
    return ComponentText(_req(obj, "comp_id", where), words, tuple(mentions))


def _table(obj: dict, where: str) -> ComponentText:
    table = _req(obj, "table", where)
    cells = sorted(
        _req(table, "cells", f"{where}/table"),
        key=lambda c: (c["row"], c["col"]),
    )
    words: list[str] = []
    cell_range: dict[str, tuple[int, int]] = {}
    for cell in cells:
        toks = str(_req(cell, "text", f"{where}/table")).split()
        cell_range[_req(cell, "entity_id", f"{where}/table")] = (
            len(words),
            len(words) + len(toks),
        )
        words.extend(toks)
    n_cell_words = len(words)
    caption = [str(t) for t in table.get("caption", [])]
    words.extend(caption)

    mentions = []
    for i, m in enumerate(obj.get("entities", [])):
        mw = f"{where}/entities[{i}]"
        ent_id = _req(m, "ent_id", mw)
        if ent_id not in cell_range:
            raise CorpusReadError(f"{mw}: mention {ent_id} has no table cell")
        lo, hi = cell_range[ent_id]
        mentions.append(MentionRange(ent_id, lo, hi))
    for i, m in enumerate(table.get("caption_entities", [])):
        mw = f"{where}/table/caption_entities[{i}]"
        span = _req(m, "span", mw)
        mentions.append(
            MentionRange(
                _req(m, "ent_id", mw),
                n_cell_words + span[0],
                n_cell_words + span[1],
            )
        )
    return ComponentText(_req(obj, "comp_id", where), tuple(words), tuple(mentions))


def _query(obj: dict, where: str) -> QueryText:
    elements = tuple(str(e) for e in _req(obj, "elements", where))
    try:
        text, spans = question_text(elements, obj.get("question_template"))
    except CorpusReadError as exc:
        raise CorpusReadError(f"{where}: {exc}") from exc
    return QueryText(_req(obj, "query_id", where), text, spans)


def read_corpus(path: str | Path) -> tuple[DocumentText, ...]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusReadError(f"{path}: invalid JSON: {exc.msg}") from exc
    docs = []
    for d, obj in enumerate(_req(raw, "documents", str(path))):
        dw = f"{path}/documents[{d}]"
        doc_id = _req(obj, "doc_id", dw)
        components = []
        for c, comp in enumerate(obj.get("components", [])):
            cw = f"{dw}/components[{c}]"
            kind = _req(comp, "kind", cw)
            if kind == "paragraph":
                components.append(_paragraph(comp, cw))
            elif kind == "table":
                components.append(_table(comp, cw))
            else:
                raise CorpusReadError(f"{cw}: unknown component kind '{kind}'")
        queries = tuple(
            _query(q, f"{dw}/queries[{i}]")
            for i, q in enumerate(obj.get("queries", []))
        )
        docs.append(DocumentText(doc_id, tuple(components), queries))
    return tuple(docs)


def corpus_wire_ids(docs: tuple[DocumentText, ...]) -> list[str]:
    """Every embedding id the corpus induces, in corpus order.

    Entailment records are not induced; they are optional extras an
    external scorer may add to a file.
    """
    out: list[str] = []
    for doc in docs:
        for comp in doc.components:
            out.append(wire_id(KIND_COMPONENT, doc.doc_id, comp.comp_id))
            for m in comp.mentions:
                out.append(wire_id(KIND_ENTITY, doc.doc_id, m.ent_id))
        for q in doc.queries:
            out.append(wire_id(KIND_QUERY, doc.doc_id, q.query_id))
            for i in range(len(q.element_spans)):
                out.append(wire_id(KIND_ELEMENT, doc.doc_id, f"{q.query_id}/{i}"))
    return out
