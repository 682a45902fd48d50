"""Corpus data model and JSON (de)serialization.

A corpus file is a single UTF-8 JSON object::

    {"n": <int>, "documents": [<document>, ...]}

where ``n`` is the relation arity shared by every query in the corpus
(each query supplies ``n - 1`` elements and asks for the missing one).
The full field-by-field layout is described in docs/corpus_format.md.

All model classes are frozen dataclasses; loaded corpora are immutable
and safe to share across threads.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

PARAGRAPH = "paragraph"
TABLE = "table"

ANSWER_ANY = "any"
ANSWER_NUMERIC = "numeric"

_TEMPLATE_SLOT = re.compile(r"\{(\d+)\}")


class CorpusError(ValueError):
    """Base class for corpus loading problems."""


class CorpusFormatError(CorpusError):
    """The file is not syntactically valid JSON or misses required fields."""


class CorpusValidationError(CorpusError):
    """The file parsed but violates a structural invariant."""


def parse_numeric(surface: str) -> float | None:
    """Interpret a mention surface as a number, or return None.

    Percent signs, plus-minus signs and comma thousands separators are
    stripped before parsing, so "93.5%", "1,234" and "0.81±0.02" all
    count as numeric. A digit must be present; bare words like "nan"
    do not qualify.
    """
    cleaned = surface.strip().replace("%", "").replace("±", " ").replace(",", "")
    cleaned = cleaned.split()[0] if cleaned.split() else ""
    if not re.search(r"\d", cleaned):
        return None
    try:
        return float(cleaned)
    except ValueError:
        return None


@dataclass(frozen=True)
class EntityMention:
    """One annotated mention.

    ``sent_idx`` is the sentence index inside the owning paragraph, or -1
    for table cells and caption mentions. ``span`` is a half-open token
    range into that sentence (or into the caption token list).
    """

    ent_id: str
    surface: str
    sent_idx: int
    span: tuple[int, int]
    numeric: bool = False


@dataclass(frozen=True)
class TableCell:
    row: int
    col: int
    text: str
    entity_id: str
    is_row_header: bool = False
    is_col_header: bool = False


@dataclass(frozen=True)
class TableStructure:
    n_rows: int
    n_cols: int
    cells: tuple[TableCell, ...]
    caption: tuple[str, ...] = ()
    caption_entities: tuple[EntityMention, ...] = ()


@dataclass(frozen=True)
class Component:
    """A paragraph or a table, the unit the retriever ranks.

    Paragraphs carry ``sentences`` (token lists) and their mentions in
    ``entities``. Tables carry a :class:`TableStructure`; their
    ``entities`` are exactly the cell mentions, one per cell, while
    caption mentions live on the table structure. ``table_number`` is
    the printed "Table k" label used to resolve textual references.
    """

    comp_id: str
    kind: str
    sentences: tuple[tuple[str, ...], ...] = ()
    entities: tuple[EntityMention, ...] = ()
    table: TableStructure | None = None
    table_number: int | None = None

    def all_mentions(self) -> tuple[EntityMention, ...]:
        """Every mention of the component, caption mentions included."""
        if self.table is not None:
            return self.entities + self.table.caption_entities
        return self.entities

    def text_tokens(self) -> list[str]:
        if self.kind == TABLE:
            assert self.table is not None
            return flatten_table(self.table)
        out: list[str] = []
        for sent in self.sentences:
            out.extend(sent)
        return out


@dataclass(frozen=True)
class Query:
    """An incomplete relation: ``elements`` are the n-1 known slots."""

    query_id: str
    elements: tuple[str, ...]
    question_template: str | None = None
    gold_component_id: str | None = None
    gold_entity_id: str | None = None
    answer_type: str = ANSWER_ANY


@dataclass(frozen=True)
class Document:
    doc_id: str
    components: tuple[Component, ...] = ()
    queries: tuple[Query, ...] = ()
    coref_clusters: tuple[tuple[str, ...], ...] | None = None

    def component(self, comp_id: str) -> Component:
        for comp in self.components:
            if comp.comp_id == comp_id:
                return comp
        raise KeyError(comp_id)

    def mention(self, ent_id: str) -> EntityMention:
        for comp in self.components:
            for m in comp.all_mentions():
                if m.ent_id == ent_id:
                    return m
        raise KeyError(ent_id)

    def owning_component(self, ent_id: str) -> Component:
        for comp in self.components:
            for m in comp.all_mentions():
                if m.ent_id == ent_id:
                    return comp
        raise KeyError(ent_id)


@dataclass(frozen=True)
class Corpus:
    """A parsed corpus file: the shared arity plus its documents."""

    n: int
    documents: tuple[Document, ...]

    def __iter__(self):
        return iter(self.documents)

    def __len__(self) -> int:
        return len(self.documents)


def flatten_table(table: TableStructure) -> list[str]:
    """Row-major cell text tokens followed by the caption tokens."""
    cells = sorted(table.cells, key=lambda c: (c.row, c.col))
    tokens: list[str] = []
    for cell in cells:
        tokens.extend(cell.text.split())
    tokens.extend(table.caption)
    return tokens


def sentence_adjacency(component: Component, a: EntityMention, b: EntityMention) -> str:
    """Classify two paragraph mentions as "same", "adjacent" or "far"."""
    if component.kind != PARAGRAPH:
        raise CorpusValidationError(
            f"sentence adjacency is undefined for {component.kind} component {component.comp_id}"
        )
    for m in (a, b):
        if m.sent_idx < 0:
            raise CorpusValidationError(
                f"mention {m.ent_id} has no sentence position"
            )
    gap = abs(a.sent_idx - b.sent_idx)
    if gap == 0:
        return "same"
    if gap == 1:
        return "adjacent"
    return "far"


def template_slots(template: str) -> list[int]:
    return [int(s) for s in _TEMPLATE_SLOT.findall(template)]


# ---------------------------------------------------------------------------
# parsing


def _req(obj: dict, key: str, where: str):
    if key not in obj:
        raise CorpusFormatError(f"{where}: missing required field '{key}'")
    return obj[key]


def _parse_mention(obj: dict, where: str) -> EntityMention:
    span = _req(obj, "span", where)
    if not (isinstance(span, list) and len(span) == 2):
        raise CorpusFormatError(f"{where}: span must be a [start, end) pair")
    surface = _req(obj, "surface", where)
    return EntityMention(
        ent_id=_req(obj, "ent_id", where),
        surface=surface,
        sent_idx=_req(obj, "sent_idx", where),
        span=(span[0], span[1]),
        numeric=parse_numeric(surface) is not None,
    )


def _parse_component(obj: dict, where: str) -> Component:
    kind = _req(obj, "kind", where)
    if kind not in (PARAGRAPH, TABLE):
        raise CorpusFormatError(f"{where}: unknown component kind '{kind}'")
    comp_id = _req(obj, "comp_id", where)
    entities = tuple(
        _parse_mention(m, f"{where}/entities[{i}]")
        for i, m in enumerate(obj.get("entities", []))
    )
    table = None
    if "table" in obj and obj["table"] is not None:
        tw = f"{where}/table"
        tobj = obj["table"]
        cells = tuple(
            TableCell(
                row=_req(c, "row", f"{tw}/cells[{i}]"),
                col=_req(c, "col", f"{tw}/cells[{i}]"),
                text=_req(c, "text", f"{tw}/cells[{i}]"),
                entity_id=_req(c, "entity_id", f"{tw}/cells[{i}]"),
                is_row_header=bool(c.get("is_row_header", False)),
                is_col_header=bool(c.get("is_col_header", False)),
            )
            for i, c in enumerate(_req(tobj, "cells", tw))
        )
        table = TableStructure(
            n_rows=_req(tobj, "n_rows", tw),
            n_cols=_req(tobj, "n_cols", tw),
            cells=cells,
            caption=tuple(tobj.get("caption", [])),
            caption_entities=tuple(
                _parse_mention(m, f"{tw}/caption_entities[{i}]")
                for i, m in enumerate(tobj.get("caption_entities", []))
            ),
        )
    return Component(
        comp_id=comp_id,
        kind=kind,
        sentences=tuple(tuple(s) for s in obj.get("sentences", [])),
        entities=entities,
        table=table,
        table_number=obj.get("table_number"),
    )


def _parse_query(obj: dict, where: str) -> Query:
    return Query(
        query_id=_req(obj, "query_id", where),
        elements=tuple(_req(obj, "elements", where)),
        question_template=obj.get("question_template"),
        gold_component_id=obj.get("gold_component_id"),
        gold_entity_id=obj.get("gold_entity_id"),
        answer_type=obj.get("answer_type", ANSWER_ANY),
    )


def _parse_document(obj: dict, where: str) -> Document:
    clusters = obj.get("coref_clusters")
    return Document(
        doc_id=_req(obj, "doc_id", where),
        components=tuple(
            _parse_component(c, f"{where}/components[{i}]")
            for i, c in enumerate(obj.get("components", []))
        ),
        queries=tuple(
            _parse_query(q, f"{where}/queries[{i}]")
            for i, q in enumerate(obj.get("queries", []))
        ),
        coref_clusters=None
        if clusters is None
        else tuple(tuple(c) for c in clusters),
    )


# ---------------------------------------------------------------------------
# validation


def _validate_paragraph(comp: Component, doc_id: str) -> None:
    where = f"document {doc_id}, component {comp.comp_id}"
    if comp.table is not None:
        raise CorpusValidationError(f"{where}: paragraph carries a table payload")
    if comp.table_number is not None:
        raise CorpusValidationError(f"{where}: paragraph carries a table_number")
    for m in comp.entities:
        if not (0 <= m.sent_idx < len(comp.sentences)):
            raise CorpusValidationError(
                f"{where}: mention {m.ent_id} points at sentence {m.sent_idx} "
                f"but the paragraph has {len(comp.sentences)}"
            )
        sent = comp.sentences[m.sent_idx]
        lo, hi = m.span
        if not (0 <= lo < hi <= len(sent)):
            raise CorpusValidationError(
                f"{where}: mention {m.ent_id} span {m.span} exceeds sentence "
                f"length {len(sent)}"
            )
        if " ".join(sent[lo:hi]) != m.surface:
            raise CorpusValidationError(
                f"{where}: mention {m.ent_id} surface {m.surface!r} does not "
                f"match its span text {' '.join(sent[lo:hi])!r}"
            )


def _validate_table(comp: Component, doc_id: str) -> None:
    where = f"document {doc_id}, component {comp.comp_id}"
    table = comp.table
    if table is None:
        raise CorpusValidationError(f"{where}: table component without table payload")
    if comp.sentences:
        raise CorpusValidationError(f"{where}: table carries paragraph sentences")
    if comp.table_number is not None and comp.table_number <= 0:
        raise CorpusValidationError(f"{where}: table_number must be positive")
    seen_pos: set[tuple[int, int]] = set()
    cell_entity_ids: list[str] = []
    for cell in table.cells:
        if not (0 <= cell.row < table.n_rows and 0 <= cell.col < table.n_cols):
            raise CorpusValidationError(
                f"{where}: cell for entity {cell.entity_id} at ({cell.row}, "
                f"{cell.col}) is outside the {table.n_rows}x{table.n_cols} grid"
            )
        if (cell.row, cell.col) in seen_pos:
            raise CorpusValidationError(
                f"{where}: duplicate cell position ({cell.row}, {cell.col})"
            )
        seen_pos.add((cell.row, cell.col))
        cell_entity_ids.append(cell.entity_id)
    mention_ids = [m.ent_id for m in comp.entities]
    if sorted(cell_entity_ids) != sorted(mention_ids):
        raise CorpusValidationError(
            f"{where}: table entities and cell entity ids must match one to one"
        )
    by_id = {m.ent_id: m for m in comp.entities}
    for cell in table.cells:
        m = by_id[cell.entity_id]
        if m.sent_idx != -1:
            raise CorpusValidationError(
                f"{where}: cell mention {m.ent_id} must use sent_idx -1"
            )
        if m.surface != cell.text:
            raise CorpusValidationError(
                f"{where}: cell mention {m.ent_id} surface {m.surface!r} does "
                f"not match cell text {cell.text!r}"
            )
    for m in table.caption_entities:
        if m.sent_idx != -1:
            raise CorpusValidationError(
                f"{where}: caption mention {m.ent_id} must use sent_idx -1"
            )
        lo, hi = m.span
        if not (0 <= lo < hi <= len(table.caption)):
            raise CorpusValidationError(
                f"{where}: caption mention {m.ent_id} span {m.span} exceeds the "
                f"caption length {len(table.caption)}"
            )
        if " ".join(table.caption[lo:hi]) != m.surface:
            raise CorpusValidationError(
                f"{where}: caption mention {m.ent_id} surface does not match "
                f"its caption span"
            )


def validate_document(doc: Document, n: int) -> None:
    """Check every structural invariant of one document.

    Raises CorpusValidationError naming the offending id on the first
    violation found.
    """
    seen_comp: set[str] = set()
    seen_ent: set[str] = set()
    table_numbers: set[int] = set()
    for comp in doc.components:
        if comp.comp_id in seen_comp:
            raise CorpusValidationError(
                f"document {doc.doc_id}: duplicate component id {comp.comp_id}"
            )
        seen_comp.add(comp.comp_id)
        if comp.kind == PARAGRAPH:
            _validate_paragraph(comp, doc.doc_id)
        else:
            _validate_table(comp, doc.doc_id)
            if comp.table_number is not None:
                if comp.table_number in table_numbers:
                    raise CorpusValidationError(
                        f"document {doc.doc_id}: table_number "
                        f"{comp.table_number} used twice"
                    )
                table_numbers.add(comp.table_number)
        for m in comp.all_mentions():
            if m.ent_id in seen_ent:
                raise CorpusValidationError(
                    f"document {doc.doc_id}: duplicate entity id {m.ent_id}"
                )
            seen_ent.add(m.ent_id)

    comp_of_ent = {
        m.ent_id: comp.comp_id
        for comp in doc.components
        for m in comp.all_mentions()
    }
    for q in doc.queries:
        where = f"document {doc.doc_id}, query {q.query_id}"
        if len(q.elements) != n - 1:
            raise CorpusValidationError(
                f"{where}: expected {n - 1} elements, got {len(q.elements)}"
            )
        if any(not e for e in q.elements):
            raise CorpusValidationError(f"{where}: empty element string")
        if q.answer_type not in (ANSWER_ANY, ANSWER_NUMERIC):
            raise CorpusValidationError(
                f"{where}: unknown answer_type {q.answer_type!r}"
            )
        if q.gold_component_id is not None and q.gold_component_id not in seen_comp:
            raise CorpusValidationError(
                f"{where}: gold_component_id {q.gold_component_id} not found"
            )
        if q.gold_entity_id is not None:
            owner = comp_of_ent.get(q.gold_entity_id)
            if owner is None:
                raise CorpusValidationError(
                    f"{where}: gold_entity_id {q.gold_entity_id} not found"
                )
            if q.gold_component_id is not None and owner != q.gold_component_id:
                raise CorpusValidationError(
                    f"{where}: gold entity {q.gold_entity_id} lives in "
                    f"component {owner}, not {q.gold_component_id}"
                )
        if q.question_template is not None:
            slots = sorted(template_slots(q.question_template))
            if slots != list(range(1, n)):
                raise CorpusValidationError(
                    f"{where}: template must use each slot 1..{n - 1} exactly "
                    f"once, found {slots}"
                )
    if doc.coref_clusters is not None:
        for cluster in doc.coref_clusters:
            for ent_id in cluster:
                if ent_id not in seen_ent:
                    raise CorpusValidationError(
                        f"document {doc.doc_id}: coref cluster references "
                        f"unknown entity {ent_id}"
                    )


def load_corpus(path: str | Path) -> Corpus:
    """Parse and validate a corpus file.

    Raises CorpusFormatError for malformed JSON or missing fields and
    CorpusValidationError for structural violations; both messages name
    the offending document / component / entity.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, dict):
        raise CorpusFormatError(f"{path}: top level must be an object")
    n = _req(raw, "n", str(path))
    if not isinstance(n, int) or n < 2:
        raise CorpusValidationError(f"{path}: arity n must be an integer >= 2, got {n!r}")
    docs = tuple(
        _parse_document(d, f"{path}/documents[{i}]")
        for i, d in enumerate(_req(raw, "documents", str(path)))
    )
    seen_docs: set[str] = set()
    for doc in docs:
        if doc.doc_id in seen_docs:
            raise CorpusValidationError(f"duplicate document id {doc.doc_id}")
        seen_docs.add(doc.doc_id)
        validate_document(doc, n)
    return Corpus(n=n, documents=docs)


# ---------------------------------------------------------------------------
# serialization


def _mention_dict(m: EntityMention) -> dict:
    return {
        "ent_id": m.ent_id,
        "surface": m.surface,
        "sent_idx": m.sent_idx,
        "span": list(m.span),
    }


def _component_dict(comp: Component) -> dict:
    out: dict = {"comp_id": comp.comp_id, "kind": comp.kind}
    if comp.kind == PARAGRAPH:
        out["sentences"] = [list(s) for s in comp.sentences]
        out["entities"] = [_mention_dict(m) for m in comp.entities]
    else:
        assert comp.table is not None
        out["entities"] = [_mention_dict(m) for m in comp.entities]
        out["table"] = {
            "n_rows": comp.table.n_rows,
            "n_cols": comp.table.n_cols,
            "cells": [
                {
                    "row": c.row,
                    "col": c.col,
                    "text": c.text,
                    "entity_id": c.entity_id,
                    "is_row_header": c.is_row_header,
                    "is_col_header": c.is_col_header,
                }
                for c in comp.table.cells
            ],
            "caption": list(comp.table.caption),
            "caption_entities": [
                _mention_dict(m) for m in comp.table.caption_entities
            ],
        }
        if comp.table_number is not None:
            out["table_number"] = comp.table_number
    return out


def _query_dict(q: Query) -> dict:
    out: dict = {"query_id": q.query_id, "elements": list(q.elements)}
    if q.question_template is not None:
        out["question_template"] = q.question_template
    if q.gold_component_id is not None:
        out["gold_component_id"] = q.gold_component_id
    if q.gold_entity_id is not None:
        out["gold_entity_id"] = q.gold_entity_id
    out["answer_type"] = q.answer_type
    return out


def corpus_to_dict(corpus: Corpus) -> dict:
    return {
        "n": corpus.n,
        "documents": [
            {
                "doc_id": doc.doc_id,
                "components": [_component_dict(c) for c in doc.components],
                "queries": [_query_dict(q) for q in doc.queries],
                **(
                    {"coref_clusters": [sorted(c) for c in doc.coref_clusters]}
                    if doc.coref_clusters is not None
                    else {}
                ),
            }
            for doc in corpus.documents
        ],
    }


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus file that load_corpus reads back identically."""
    Path(path).write_text(
        json.dumps(corpus_to_dict(corpus), ensure_ascii=False, indent=1) + "\n",
        encoding="utf-8",
    )
