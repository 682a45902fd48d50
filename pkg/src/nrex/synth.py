"""Synthetic corpus generator with planted, structure-dependent answers.

Documents mix filler paragraphs with small result tables. Two query
families are planted:

* table queries (arity 3): the elements are a recurring system name and
  a column-header surface; the gold answer is the score cell at their
  intersection. Rows carry short per-document labels instead of the
  system names, so no surface in the table matches the first element.
  The two halves of the lookup live in different places: the column
  follows from the header's surface through the cell's neighborhood,
  and the row follows from knowing which score range that system
  always lands in, a corpus-wide regularity a model has to pick up
  from training documents.
* paragraph queries: the elements and the answer co-occur in one fact
  sentence, with mention-free buffer sentences around it so the answer
  is the only entity adjacent to every element. A same-kind decoy word
  sits far from the fact sentence.

At noise level p, each non-gold paragraph gains, with probability p per
query, a sentence mentioning a corrupted variant of a query element:
lexically close, never an exact match.

Generation is fully driven by two seeds (word inventory and document
content) and emits byte-identical corpora for identical configs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import (
    ANSWER_ANY,
    ANSWER_NUMERIC,
    PARAGRAPH,
    TABLE,
    Component,
    Corpus,
    Document,
    EntityMention,
    Query,
    TableCell,
    TableStructure,
    parse_numeric,
    validate_document,
)
from .embeddings import DEFAULT_DIM, hash_embed

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
_LETTERS = "abcdefghijklmnopqrstuvwxyz"

# column-header families inside one table share a stem, so sibling
# cells are near misses and only a fine-grained read separates them
_SUFFIXES = ("an", "el", "ix", "or", "us", "em", "ar", "il", "on")

# every benchmarked system lands in one characteristic score range, the
# way mature baselines cluster; the ranges never share a leading digit
_SCORE_BANDS = ((20.0, 30.0), (50.0, 60.0), (80.0, 90.0))

TABLE_ROWS = len(_SCORE_BANDS)  # one row per band
TABLE_COLS = 3


@dataclass(frozen=True)
class SynthConfig:
    n_docs: int = 100
    n: int = 3
    components_per_doc: int = 8
    table_fraction: float = 0.25
    entities_per_component: int = 6
    queries_per_doc: int = 4
    noise: float = 0.3
    seed: int = 7
    vocab_seed: int = 1234


def _word(rng: np.random.Generator) -> str:
    parts = []
    for _ in range(int(rng.integers(2, 5))):
        parts.append(_CONSONANTS[int(rng.integers(len(_CONSONANTS)))])
        parts.append(_VOWELS[int(rng.integers(len(_VOWELS)))])
    if rng.random() < 0.4:
        parts.append(_CONSONANTS[int(rng.integers(len(_CONSONANTS)))])
    return "".join(parts)


@dataclass
class _Vocab:
    methods: list[str]
    datasets: list[str]
    outcomes: list[str]
    topics: list[str]
    fillers: list[str]
    # systems that recur in result tables across the corpus; the band
    # index says which score range each one's results always fall in
    systems: list[str]
    system_bands: dict[str, int]

    @property
    def all_words(self) -> list[str]:
        return (
            self.methods
            + self.datasets
            + self.outcomes
            + self.topics
            + self.fillers
            + self.systems
        )


def _embed_profile(word: str) -> bytes:
    """Direction of the word's hash embedding at the shipped dimension.

    Distinct short words can land their trigrams in exactly the same
    buckets, which leaves every embedding-based feature unable to tell
    them apart no matter how it is trained.
    """
    vec = hash_embed(word, DEFAULT_DIM)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return b""
    return np.round(vec / norm, 9).tobytes()


def _build_vocab(vocab_seed: int) -> _Vocab:
    rng = np.random.default_rng(vocab_seed)
    words: list[str] = []
    seen: set[str] = set()
    profiles: set[bytes] = set()
    while len(words) < 476:
        w = _word(rng)
        prof = _embed_profile(w)
        if w not in seen and prof not in profiles:
            seen.add(w)
            profiles.add(prof)
            words.append(w)
    systems = words[470:476]
    return _Vocab(
        methods=words[:80],
        datasets=words[80:160],
        outcomes=words[160:200],
        topics=words[200:230],
        fillers=words[230:470],
        systems=systems,
        system_bands={w: i % len(_SCORE_BANDS) for i, w in enumerate(systems)},
    )


def _draw(rng: np.random.Generator, pool: list[str], k: int) -> list[str]:
    idx = rng.choice(len(pool), size=k, replace=False)
    return [pool[int(i)] for i in idx]


def _mutate(rng: np.random.Generator, word: str, forbidden: set[str]) -> str:
    """A lexically close variant that never casefold-equals a real surface.

    Variants whose hash embedding is parallel to the source's are
    rejected too; a decoy should be close, not indistinguishable.
    """
    for _ in range(24):
        chars = list(word)
        if len(chars) > 3:
            k = 2 if len(chars) > 5 else 1
            pos = rng.choice(np.arange(1, len(chars) - 1), size=k, replace=False)
        else:
            pos = [len(chars) // 2]
        for p in pos:
            chars[int(p)] = _LETTERS[int(rng.integers(len(_LETTERS)))]
        cand = "".join(chars)
        if (
            cand.casefold() != word.casefold()
            and cand.casefold() not in forbidden
            and _embed_profile(cand) != _embed_profile(word)
        ):
            return cand
    cand = word + "ex"
    while cand.casefold() in forbidden:
        cand += "x"
    return cand


def _score_value(rng: np.random.Generator, band: tuple[float, float]) -> str:
    """A score inside the band, concentrated on three integer anchors.

    Free-running uniform draws spread a band's integer parts over ten
    values, so any one of them recurs too rarely for its trigrams to
    anchor the system-to-range regularity. Three anchors per band keep
    that regularity visible at desk-scale corpus sizes. The offsets
    avoid the tens digits of the bands themselves, so no anchor is a
    digit transposition of an anchor from another band.
    """
    lo, _ = band
    anchor = int(lo) + (1, 4, 7)[int(rng.integers(3))]
    return f"{anchor}.{int(rng.integers(10))}"


def _family(rng: np.random.Generator, stem: str, k: int, used: set[str]) -> list[str]:
    """k sibling names built on one stem, none colliding with ``used``."""
    out: list[str] = []
    for sfx in _draw(rng, list(_SUFFIXES), len(_SUFFIXES)):
        word = stem + sfx
        if word.casefold() in used:
            continue
        out.append(word)
        used.add(word.casefold())
        if len(out) == k:
            return out
    for sfx in _SUFFIXES:  # pathological overlap with the vocabulary
        word = stem + sfx + "ta"
        if word.casefold() not in used:
            out.append(word)
            used.add(word.casefold())
            if len(out) == k:
                return out
    raise RuntimeError(f"could not build a name family for {stem!r}")


class _Ids:
    def __init__(self) -> None:
        self.counter = 0

    def next(self) -> str:
        self.counter += 1
        return f"e{self.counter - 1}"


class _Para:
    """Accumulates sentences and mention placements for one paragraph."""

    def __init__(self, comp_id: str):
        self.comp_id = comp_id
        self.sentences: list[list[str]] = []
        self.marks: list[tuple[int, int, int]] = []  # (sent_idx, start, end)

    def add_sentence(self, tokens: list[str], spans: list[tuple[int, int]] = ()) -> int:
        si = len(self.sentences)
        self.sentences.append(list(tokens))
        for lo, hi in spans:
            self.marks.append((si, lo, hi))
        return si

    def build(self, ids: _Ids) -> tuple[Component, dict[tuple[int, int, int], str]]:
        assigned: dict[tuple[int, int, int], str] = {}
        mentions = []
        for mark in sorted(self.marks):
            si, lo, hi = mark
            surface = " ".join(self.sentences[si][lo:hi])
            ent_id = ids.next()
            assigned[mark] = ent_id
            mentions.append(
                EntityMention(
                    ent_id=ent_id,
                    surface=surface,
                    sent_idx=si,
                    span=(lo, hi),
                    numeric=parse_numeric(surface) is not None,
                )
            )
        comp = Component(
            comp_id=self.comp_id,
            kind=PARAGRAPH,
            sentences=tuple(tuple(s) for s in self.sentences),
            entities=tuple(mentions),
        )
        return comp, assigned


def _filler_sentence(rng, pool: list[str], length_range=(4, 7)) -> list[str]:
    k = int(rng.integers(*length_range))
    return _draw_with_replacement(rng, pool, k)


def _draw_with_replacement(rng, pool: list[str], k: int) -> list[str]:
    return [pool[int(i)] for i in rng.integers(len(pool), size=k)]


def _make_table(
    comp_id: str,
    row_labels: list[str],
    datasets: list[str],
    topic: str,
    ids: _Ids,
    grid: list[list[str]],
):
    """A (rows+1) x (cols+1) grid: corner, header row/column, score cells."""
    cells: list[TableCell] = []
    mentions: list[EntityMention] = []
    score_ids: dict[tuple[int, int], str] = {}

    def _add(row, col, text, is_row_header=False, is_col_header=False) -> str:
        ent_id = ids.next()
        cells.append(
            TableCell(
                row=row,
                col=col,
                text=text,
                entity_id=ent_id,
                is_row_header=is_row_header,
                is_col_header=is_col_header,
            )
        )
        mentions.append(
            EntityMention(
                ent_id=ent_id,
                surface=text,
                sent_idx=-1,
                span=(0, 1),
                numeric=parse_numeric(text) is not None,
            )
        )
        return ent_id

    _add(0, 0, "model", is_row_header=True, is_col_header=True)
    for j, dataset in enumerate(datasets):
        _add(0, j + 1, dataset, is_col_header=True)
    for i, label in enumerate(row_labels):
        _add(i + 1, 0, label, is_row_header=True)
        for j in range(len(datasets)):
            score_ids[(i, j)] = _add(i + 1, j + 1, grid[i][j])

    cap_tokens = ("results", "for", topic, "benchmark")
    cap_id = ids.next()
    caption_entities = (
        EntityMention(ent_id=cap_id, surface=topic, sent_idx=-1, span=(2, 3)),
    )
    table = TableStructure(
        n_rows=len(row_labels) + 1,
        n_cols=len(datasets) + 1,
        cells=tuple(cells),
        caption=cap_tokens,
        caption_entities=caption_entities,
    )
    comp = Component(
        comp_id=comp_id,
        kind=TABLE,
        entities=tuple(mentions),
        table=table,
    )
    return comp, score_ids


def generate_document(
    cfg: SynthConfig,
    vocab: _Vocab,
    rng: np.random.Generator,
    doc_idx: int,
) -> Document:
    n_tab = max(1, int(round(cfg.table_fraction * cfg.components_per_doc)))
    n_par = max(1, cfg.components_per_doc - n_tab)
    want_tq = max(1, cfg.queries_per_doc // 2) if cfg.n == 3 else 0
    n_tq = min(want_tq, n_tab * TABLE_ROWS * TABLE_COLS)
    n_pq = min(cfg.queries_per_doc - n_tq, n_par)
    n_type = n_pq // 3  # answer identified by its kind of word, not adjacency
    n_adj = n_pq - n_type

    raw_m = _draw(rng, vocab.methods, n_tab + n_pq)
    raw_d = _draw(rng, vocab.datasets, n_tab + n_pq * max(cfg.n - 2, 0))
    topics = _draw(rng, vocab.topics, n_tab)
    outcomes = _draw(rng, vocab.outcomes, 2 * n_adj + n_type)
    # words reserved for standalone decoy sentences; keeping them out of
    # the filler pool keeps those mentions free of co-reference edges
    standalone_decoys = _draw(rng, vocab.fillers, 2 * n_type)
    reserved = set(standalone_decoys)
    doc_fillers = [w for w in vocab.fillers if w not in reserved]

    used_surfaces = {w.casefold() for w in vocab.all_words}

    # each table compares one recurring system per score band; rows carry
    # short per-document labels, the way tables abbreviate system names,
    # so a label surface never ties back to the system it stands for
    n_bands = len(_SCORE_BANDS)
    by_band = [
        [w for w in vocab.systems if vocab.system_bands[w] == b]
        for b in range(n_bands)
    ]
    band_picks = [
        _draw(rng, by_band[b], min(n_tab, len(by_band[b]))) for b in range(n_bands)
    ]
    table_systems: list[list[str]] = []
    table_labels: list[list[str]] = []
    for t in range(n_tab):
        triple = [band_picks[b][t % len(band_picks[b])] for b in range(n_bands)]
        order = [int(i) for i in rng.permutation(n_bands)]
        systems = [triple[i] for i in order]
        labels = []
        for _ in systems:
            lab = _word(rng)
            while lab.casefold() in used_surfaces:
                lab = _word(rng)
            used_surfaces.add(lab.casefold())
            labels.append(lab)
        table_systems.append(systems)
        table_labels.append(labels)

    dataset_fams = [
        _family(rng, raw_d[t], TABLE_COLS, used_surfaces) for t in range(n_tab)
    ]
    para_methods = raw_m[n_tab:]
    para_datasets = raw_d[n_tab:]

    ids = _Ids()
    doc_id = f"d{doc_idx}"

    # decide component order up front: tables at random slots
    kinds = [TABLE] * n_tab + [PARAGRAPH] * n_par
    order = rng.permutation(len(kinds))
    kinds = [kinds[int(i)] for i in order]

    tables: list[tuple[Component, dict]] = []
    paras: list[_Para] = []
    comp_slots: list[tuple[str, int]] = []  # (kind, index into tables/paras)
    table_no = 0
    for slot, kind in enumerate(kinds):
        comp_id = f"c{slot}"
        if kind == TABLE:
            grid = [
                [
                    _score_value(rng, _SCORE_BANDS[vocab.system_bands[sys_w]])
                    for _ in range(TABLE_COLS)
                ]
                for sys_w in table_systems[table_no]
            ]
            comp, score_ids = _make_table(
                comp_id,
                table_labels[table_no],
                dataset_fams[table_no],
                topics[table_no],
                ids,
                grid,
            )
            comp = Component(
                comp_id=comp.comp_id,
                kind=comp.kind,
                entities=comp.entities,
                table=comp.table,
                table_number=table_no + 1,
            )
            tables.append((comp, score_ids))
            comp_slots.append((TABLE, len(tables) - 1))
            table_no += 1
        else:
            para = _Para(comp_id)
            first = _filler_sentence(rng, doc_fillers)
            quota = max(1, cfg.entities_per_component)
            k0 = min(3, quota, len(first))
            para.add_sentence(first, [(i, i + 1) for i in range(k0)])
            second = _filler_sentence(rng, doc_fillers, (3, 6))
            k1 = min(quota - k0, len(second))
            para.add_sentence(second, [(i, i + 1) for i in range(k1)])
            paras.append(para)
            comp_slots.append((PARAGRAPH, len(paras) - 1))

    queries: list[Query] = []
    noise_targets: list[list[str]] = []  # element surfaces per query

    # table queries name a system and a column; the gold answer is the
    # cell at their intersection. The system's name never appears in the
    # table (rows use the short labels), so the row can only be pinned
    # down by knowing which score range that system lands in, while the
    # column is pinned down by the header's surface.
    used_cells: dict[int, set[tuple[int, int]]] = {}
    for qi in range(n_tq):
        ti = qi % len(tables)
        comp, score_ids = tables[ti]
        cells_taken = used_cells.setdefault(ti, set())
        t = comp.table

        def _cell_text(row: int, col: int) -> str:
            return next(x.text for x in t.cells if x.row == row and x.col == col)

        free = [rc for rc in sorted(score_ids) if rc not in cells_taken]
        if not free:
            continue
        r, c = free[int(rng.integers(len(free)))]
        cells_taken.add((r, c))
        queries.append(
            Query(
                query_id=f"q{len(queries)}",
                elements=(table_systems[ti][r], _cell_text(0, c + 1)),
                gold_component_id=comp.comp_id,
                gold_entity_id=score_ids[(r, c)],
                answer_type=ANSWER_NUMERIC,
            )
        )
        noise_targets.append([table_systems[ti][r], _cell_text(0, c + 1)])

    # paragraph queries, two flavors. Adjacency: the answer sits in one
    # fact sentence with every element, buffered on both sides, and a
    # same-kind decoy word sits far away, so neighborhood is decisive.
    # Type-only: the elements appear together but the answer stands in a
    # sentence of its own, so only the kind of word it is gives it away.
    chosen_paras = [int(i) for i in rng.choice(len(paras), size=n_pq, replace=False)]
    pq_marks: list[tuple[int, int, int]] = []  # (para index, sent_idx, answer start)
    for pi, para_idx in enumerate(chosen_paras):
        para = paras[para_idx]
        elements = [para_methods[pi]]
        extra = max(cfg.n - 2, 0)
        elements += para_datasets[pi * extra : (pi + 1) * extra]
        if pi < n_adj:
            answer = outcomes[2 * pi]
            decoy = outcomes[2 * pi + 1]
            # decoy answer-shaped word far from the fact sentence
            para.sentences[0].append(decoy)
            para.marks.append((0, len(para.sentences[0]) - 1, len(para.sentences[0])))
            para.add_sentence(_filler_sentence(rng, doc_fillers, (3, 5)))  # buffer, no marks
            if cfg.n == 3:
                tokens = [elements[0], "achieves", answer, "points", "on", elements[1]]
                spans = [(0, 1), (2, 3), (5, 6)]
            else:
                tokens = [elements[0], "achieves", answer]
                spans = [(0, 1), (2, 3)]
                for element in elements[1:]:
                    tokens += ["with", element]
                    spans.append((len(tokens) - 1, len(tokens)))
            fact_idx = para.add_sentence(tokens, spans)
            para.add_sentence(_filler_sentence(rng, doc_fillers, (3, 5)))  # trailing buffer
            answer_start = spans[1][0]
        else:
            answer = outcomes[n_adj + pi]
            tokens = [elements[0], "compared", "against"]
            spans = [(0, 1)]
            for element in elements[1:]:
                tokens.append(element)
                spans.append((len(tokens) - 1, len(tokens)))
            para.add_sentence(tokens, spans)
            # answer and two decoys all stand alone between unmarked
            # buffers; word kind is the only thing that tells them apart
            k_type = pi - n_adj
            standalone = [answer] + standalone_decoys[2 * k_type : 2 * k_type + 2]
            order2 = rng.permutation(len(standalone))
            fact_idx = None
            para.add_sentence(_filler_sentence(rng, doc_fillers, (3, 5)))
            for oi in order2:
                word = standalone[int(oi)]
                si = para.add_sentence([word, "was", "reported"], [(0, 1)])
                para.add_sentence(_filler_sentence(rng, doc_fillers, (3, 5)))
                if word == answer:
                    fact_idx = si
            answer_start = 0
        queries.append(
            Query(
                query_id=f"q{len(queries)}",
                elements=tuple(elements),
                gold_component_id=para.comp_id,
                gold_entity_id=None,  # patched once mention ids exist
                answer_type=ANSWER_ANY,
            )
        )
        noise_targets.append(list(elements))
        pq_marks.append((para_idx, fact_idx, answer_start))

    # a sentence citing a table by number, to exercise reference edges
    if tables:
        cite_para = paras[int(rng.integers(len(paras)))]
        cite_no = int(rng.integers(1, len(tables) + 1))
        w = doc_fillers[int(rng.integers(len(doc_fillers)))]
        cite_para.add_sentence(
            [w, "appears", "in", "table", str(cite_no)], [(0, 1)]
        )

    # noise: corrupted element variants inside non-gold paragraphs
    doc_surfaces = set(used_surfaces)
    doc_surfaces |= {w.casefold() for p in paras for s in p.sentences for w in s}
    for q, elements in zip(list(queries), noise_targets):
        for para in paras:
            if para.comp_id == q.gold_component_id:
                continue
            if rng.random() >= cfg.noise:
                continue
            element = elements[int(rng.integers(len(elements)))]
            variant = _mutate(rng, element, doc_surfaces)
            doc_surfaces.add(variant.casefold())
            para.add_sentence([variant, "is", "reported", "separately"], [(0, 1)])

    # materialize
    built_paras = [para.build(ids) for para in paras]
    components: list[Component] = []
    for kind, idx in comp_slots:
        if kind == TABLE:
            components.append(tables[idx][0])
        else:
            components.append(built_paras[idx][0])

    # patch paragraph-query gold entity ids now that ids exist
    fixed_queries: list[Query] = []
    pq_cursor = 0
    for q in queries:
        if q.gold_entity_id is None:
            para_idx, fact_idx, start = pq_marks[pq_cursor]
            pq_cursor += 1
            _, assigned = built_paras[para_idx]
            gold_id = assigned[(fact_idx, start, start + 1)]
            q = Query(
                query_id=q.query_id,
                elements=q.elements,
                gold_component_id=q.gold_component_id,
                gold_entity_id=gold_id,
                answer_type=q.answer_type,
            )
        fixed_queries.append(q)

    doc = Document(
        doc_id=doc_id,
        components=tuple(components),
        queries=tuple(fixed_queries),
    )
    validate_document(doc, cfg.n)
    return doc


def generate_corpus(cfg: SynthConfig) -> Corpus:
    """Deterministically generate the full corpus for one config."""
    if cfg.n < 2:
        raise ValueError("arity n must be >= 2")
    if cfg.n_docs < 1:
        raise ValueError("n_docs must be >= 1")
    vocab = _build_vocab(cfg.vocab_seed)
    rng = np.random.default_rng(cfg.seed)
    docs = tuple(
        generate_document(cfg, vocab, rng, i) for i in range(cfg.n_docs)
    )
    return Corpus(n=cfg.n, documents=docs)
