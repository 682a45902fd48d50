"""Document-level entity graph across paragraphs and tables.

Five edge families connect mentions:

* ``cooc``   sentence co-occurrence inside a paragraph (same sentence
  at full weight, adjacent sentences at half weight)
* ``coref``  coreferent mentions, from gold clusters when the document
  carries them, otherwise from an abbreviation matcher plus exact
  casefolded surface matches across the whole document
* ``ref``    a sentence that cites "Table k" links its mentions to
  every cell of that table
* ``tstruct``  a data cell links to its row headers, column headers
  and the caption mentions of its table
* ``tpconn`` paragraph mention to cell whose surfaces are nearly
  identical under a string similarity threshold

The graph is undirected with no self loops; when several families
propose the same pair, the maximum weight wins and the tag follows the
winning weight (first proposer on ties).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .corpus import PARAGRAPH, TABLE, Component, Document
from .textmetrics import lcseq_sim, lcstr_sim, levenshtein_sim

EDGE_COOC = "cooc"
EDGE_COREF = "coref"
EDGE_REF = "ref"
EDGE_TSTRUCT = "tstruct"
EDGE_TPCONN = "tpconn"

NODE_PARAGRAPH = "paragraph"
NODE_CELL = "cell"
NODE_CAPTION = "caption"

_SIM_FNS = {"leven": levenshtein_sim, "lcstr": lcstr_sim, "lcseq": lcseq_sim}

DEFAULT_REFERENCE_PATTERNS = (r"\btab(?:le)?\.?\s+(\d+)\b",)


@dataclass(frozen=True)
class GraphConfig:
    """Weights and thresholds for graph construction."""

    w_s: float = 1.0
    tp_threshold: float = 0.75
    tp_metric: str = "leven"
    reference_patterns: tuple[str, ...] = DEFAULT_REFERENCE_PATTERNS

    @property
    def w_t(self) -> float:
        """Adjacent-sentence co-occurrence weight, half the same-sentence one."""
        return self.w_s / 2.0

    def sim_fn(self):
        try:
            return _SIM_FNS[self.tp_metric]
        except KeyError:
            raise ValueError(f"unknown tp_metric {self.tp_metric!r}") from None


@dataclass(frozen=True)
class GraphNode:
    ent_id: str
    comp_id: str
    kind: str


Edge = tuple[str, str, float, str]


class EntityGraph:
    """Undirected weighted graph over every mention of one document."""

    def __init__(self, nodes: list[GraphNode]):
        self.nodes = list(nodes)
        self.index = {node.ent_id: i for i, node in enumerate(self.nodes)}
        if len(self.index) != len(self.nodes):
            raise ValueError("duplicate entity id among graph nodes")
        self._adj: dict[str, dict[str, tuple[float, str]]] = {
            node.ent_id: {} for node in self.nodes
        }
        self._n_edges = 0

    def add_edge(self, u: str, v: str, weight: float, tag: str) -> None:
        """Insert or max-merge one undirected edge."""
        if u == v:
            return
        if u not in self._adj or v not in self._adj:
            missing = u if u not in self._adj else v
            raise KeyError(f"edge endpoint {missing!r} is not a graph node")
        if not (0.0 < weight <= 1.0):
            raise ValueError(f"edge weight must lie in (0, 1], got {weight}")
        cur = self._adj[u].get(v)
        if cur is None:
            self._adj[u][v] = (weight, tag)
            self._adj[v][u] = (weight, tag)
            self._n_edges += 1
        elif weight > cur[0]:
            self._adj[u][v] = (weight, tag)
            self._adj[v][u] = (weight, tag)

    def neighbors(self, ent_id: str) -> list[tuple[str, float, str]]:
        return [(v, w, tag) for v, (w, tag) in self._adj[ent_id].items()]

    def edge(self, u: str, v: str) -> tuple[float, str] | None:
        return self._adj[u].get(v)

    def degree(self, ent_id: str) -> int:
        return len(self._adj[ent_id])

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return self._n_edges

    def edges(self) -> list[Edge]:
        """Each undirected edge once, endpoints in node order."""
        out: list[Edge] = []
        for node in self.nodes:
            i = self.index[node.ent_id]
            for v, (w, tag) in self._adj[node.ent_id].items():
                if self.index[v] > i:
                    out.append((node.ent_id, v, w, tag))
        return out

    def neighbor_index_arrays(self) -> list[list[int]]:
        """Neighbor indices per node index, for matrix-side consumers."""
        return [
            [self.index[v] for v in self._adj[node.ent_id]] for node in self.nodes
        ]

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"ent_id": n.ent_id, "comp_id": n.comp_id, "kind": n.kind}
                for n in self.nodes
            ],
            "edges": [
                {"u": u, "v": v, "weight": w, "tag": tag}
                for u, v, w, tag in self.edges()
            ],
        }


def cooccurrence_edges(component: Component, cfg: GraphConfig) -> list[Edge]:
    """Same-sentence pairs at w_s, adjacent-sentence pairs at w_s / 2."""
    if component.kind != PARAGRAPH:
        raise ValueError(
            f"co-occurrence applies to paragraphs, not {component.kind} "
            f"component {component.comp_id}"
        )
    out: list[Edge] = []
    ms = component.entities
    for i in range(len(ms)):
        for j in range(i + 1, len(ms)):
            gap = abs(ms[i].sent_idx - ms[j].sent_idx)
            if gap == 0:
                out.append((ms[i].ent_id, ms[j].ent_id, cfg.w_s, EDGE_COOC))
            elif gap == 1:
                out.append((ms[i].ent_id, ms[j].ent_id, cfg.w_t, EDGE_COOC))
    return out


def _clique(ids: list[str], weight: float, tag: str) -> list[Edge]:
    out: list[Edge] = []
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            out.append((ids[i], ids[j], weight, tag))
    return out


def _abbreviation_pairs(component: Component) -> list[tuple[str, str]]:
    """Long-form/short-form mention pairs like "Long Form (LF)".

    A parenthesized alphabetic token of length >= 2 whose letters match
    the initials of the tokens right before the parenthesis counts as
    an abbreviation of that span.
    """
    pairs: list[tuple[str, str]] = []
    for si, sent in enumerate(component.sentences):
        mentions = [m for m in component.entities if m.sent_idx == si]
        for i, tok in enumerate(sent):
            if tok != "(" or i + 2 >= len(sent) or sent[i + 2] != ")":
                continue
            abbr = sent[i + 1]
            letters = [ch for ch in abbr if ch.isalpha()]
            if len(letters) < 2 or not all(ch.isupper() for ch in letters):
                continue
            start = i - len(letters)
            if start < 0:
                continue
            window = sent[start:i]
            if not all(t and t[0].isalpha() for t in window):
                continue
            initials = "".join(t[0] for t in window).casefold()
            if initials != "".join(letters).casefold():
                continue
            longs = [m for m in mentions if m.span == (start, i)] or [
                m for m in mentions if m.span[0] <= start and m.span[1] >= i
            ]
            shorts = [m for m in mentions if m.span == (i + 1, i + 2)]
            for lm in longs:
                for sm in shorts:
                    if lm.ent_id != sm.ent_id:
                        pairs.append((lm.ent_id, sm.ent_id))
    return pairs


def coref_edges(document: Document) -> list[Edge]:
    """Cliques over gold clusters, or the heuristic when none are given.

    The heuristic combines abbreviation introductions inside paragraphs
    with exact casefolded surface matches across every mention of the
    document, cells and captions included. An empty gold cluster list
    means "trust the annotation": no coref edges at all.
    """
    if document.coref_clusters is not None:
        out: list[Edge] = []
        for cluster in document.coref_clusters:
            out.extend(_clique(list(cluster), 1.0, EDGE_COREF))
        return out
    out = []
    for comp in document.components:
        if comp.kind == PARAGRAPH:
            for u, v in _abbreviation_pairs(comp):
                out.append((u, v, 1.0, EDGE_COREF))
    by_surface: dict[str, list[str]] = {}
    for comp in document.components:
        for m in comp.all_mentions():
            by_surface.setdefault(m.surface.casefold(), []).append(m.ent_id)
    for ids in by_surface.values():
        if len(ids) > 1:
            out.extend(_clique(ids, 1.0, EDGE_COREF))
    return out


def reference_edges(document: Document, cfg: GraphConfig) -> list[Edge]:
    """Sentence mentions to every cell of a table the sentence cites."""
    patterns = [re.compile(p, re.IGNORECASE) for p in cfg.reference_patterns]
    cells_by_number: dict[int, list[str]] = {}
    for comp in document.components:
        if comp.kind == TABLE and comp.table_number is not None:
            cells_by_number[comp.table_number] = [
                c.entity_id for c in comp.table.cells
            ]
    out: list[Edge] = []
    if not cells_by_number:
        return out
    for comp in document.components:
        if comp.kind != PARAGRAPH:
            continue
        for si, sent in enumerate(comp.sentences):
            text = " ".join(sent).casefold()
            cited: list[int] = []
            for pat in patterns:
                for match in pat.finditer(text):
                    cited.append(int(match.group(1)))
            if not cited:
                continue
            sent_mentions = [m.ent_id for m in comp.entities if m.sent_idx == si]
            for number in cited:
                for cell_id in cells_by_number.get(number, []):
                    for ent_id in sent_mentions:
                        out.append((ent_id, cell_id, 1.0, EDGE_REF))
    return out


def table_structure_edges(component: Component) -> list[Edge]:
    """Data cell to row headers, column headers and caption mentions."""
    if component.kind != TABLE or component.table is None:
        raise ValueError(
            f"structure edges apply to tables, not {component.kind} "
            f"component {component.comp_id}"
        )
    table = component.table
    row_headers: dict[int, list[str]] = {}
    col_headers: dict[int, list[str]] = {}
    for cell in table.cells:
        if cell.is_row_header:
            row_headers.setdefault(cell.row, []).append(cell.entity_id)
        if cell.is_col_header:
            col_headers.setdefault(cell.col, []).append(cell.entity_id)
    caption_ids = [m.ent_id for m in table.caption_entities]
    out: list[Edge] = []
    for cell in table.cells:
        if cell.is_row_header or cell.is_col_header:
            continue
        for hid in row_headers.get(cell.row, []):
            out.append((cell.entity_id, hid, 1.0, EDGE_TSTRUCT))
        for hid in col_headers.get(cell.col, []):
            out.append((cell.entity_id, hid, 1.0, EDGE_TSTRUCT))
        for cid in caption_ids:
            out.append((cell.entity_id, cid, 1.0, EDGE_TSTRUCT))
    return out


def table_paragraph_edges(document: Document, cfg: GraphConfig) -> list[Edge]:
    """Near-identical paragraph-mention / cell pairs above the threshold."""
    sim = cfg.sim_fn()
    para_mentions = [
        m
        for comp in document.components
        if comp.kind == PARAGRAPH
        for m in comp.entities
    ]
    cell_mentions = [
        m for comp in document.components if comp.kind == TABLE for m in comp.entities
    ]
    out: list[Edge] = []
    for pm in para_mentions:
        for cm in cell_mentions:
            w = sim(pm.surface, cm.surface)
            if w >= cfg.tp_threshold and w > 0.0:
                out.append((pm.ent_id, cm.ent_id, w, EDGE_TPCONN))
    return out


def build_graph(document: Document, cfg: GraphConfig | None = None) -> EntityGraph:
    """Assemble the full graph for one document.

    Edge families are applied in a fixed order (cooc, coref, ref,
    tstruct, tpconn) so tie-breaking on equal-weight duplicates is
    reproducible.
    """
    cfg = cfg or GraphConfig()
    nodes: list[GraphNode] = []
    for comp in document.components:
        if comp.kind == PARAGRAPH:
            for m in comp.entities:
                nodes.append(GraphNode(m.ent_id, comp.comp_id, NODE_PARAGRAPH))
        else:
            for m in comp.entities:
                nodes.append(GraphNode(m.ent_id, comp.comp_id, NODE_CELL))
            for m in comp.table.caption_entities:
                nodes.append(GraphNode(m.ent_id, comp.comp_id, NODE_CAPTION))
    graph = EntityGraph(nodes)
    for comp in document.components:
        if comp.kind == PARAGRAPH:
            for u, v, w, tag in cooccurrence_edges(comp, cfg):
                graph.add_edge(u, v, w, tag)
    for u, v, w, tag in coref_edges(document):
        graph.add_edge(u, v, w, tag)
    for u, v, w, tag in reference_edges(document, cfg):
        graph.add_edge(u, v, w, tag)
    for comp in document.components:
        if comp.kind == TABLE:
            for u, v, w, tag in table_structure_edges(comp):
                graph.add_edge(u, v, w, tag)
    for u, v, w, tag in table_paragraph_edges(document, cfg):
        graph.add_edge(u, v, w, tag)
    return graph
