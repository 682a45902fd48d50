"""Normalized string similarities and sparse lexical rankers.

The three similarity functions casefold their inputs and map to [0, 1].
Empty-string conventions: Levenshtein similarity of two empty strings is
1.0 and 0.0 when exactly one side is empty; the substring and
subsequence similarities are 1.0 for two empty strings and 0.0 when
either side is empty.
"""

from __future__ import annotations

import math
import re
from typing import NamedTuple, Sequence

import numpy as np

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Casefold and split on whitespace and punctuation."""
    return _TOKEN.findall(text.casefold())


def levenshtein_distance(a: str, b: str) -> int:
    """Plain edit distance, two-row dynamic program, no normalization."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(
                min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
            )
        prev = cur
    return prev[len(b)]


def levenshtein_sim(a: str, b: str) -> float:
    a, b = a.casefold(), b.casefold()
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return 1.0 - levenshtein_distance(a, b) / max(len(a), len(b))


def _lcstr_len(a: str, b: str) -> int:
    best = 0
    prev = [0] * (len(b) + 1)
    for ca in a:
        cur = [0]
        for j, cb in enumerate(b, start=1):
            run = prev[j - 1] + 1 if ca == cb else 0
            cur.append(run)
            if run > best:
                best = run
        prev = cur
    return best


def lcstr_sim(a: str, b: str) -> float:
    """Longest common substring length over the shorter length."""
    a, b = a.casefold(), b.casefold()
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return _lcstr_len(a, b) / min(len(a), len(b))


def _lcseq_len(a: str, b: str) -> int:
    prev = [0] * (len(b) + 1)
    for ca in a:
        cur = [0]
        for j, cb in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if ca == cb else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[len(b)]


def lcseq_sim(a: str, b: str) -> float:
    """Longest common subsequence length over the shorter length."""
    a, b = a.casefold(), b.casefold()
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return _lcseq_len(a, b) / min(len(a), len(b))


class LexicalFeatures(NamedTuple):
    leven: float
    lcstr: float
    lcseq: float


def lexical_features(a: str, b: str) -> LexicalFeatures:
    """The (levenshtein, substring, subsequence) similarity triple."""
    return LexicalFeatures(levenshtein_sim(a, b), lcstr_sim(a, b), lcseq_sim(a, b))


# ---------------------------------------------------------------------------
# sparse rankers used as retrieval baselines


def _require_components(token_lists: Sequence[Sequence[str]]) -> None:
    if len(token_lists) == 0:
        raise ValueError("cannot rank an empty component list")


def tfidf_rank(
    query_tokens: Sequence[str], components: Sequence[Sequence[str]]
) -> np.ndarray:
    """Cosine similarity between tf-idf vectors of the query and each component.

    idf(t) = ln((1 + D) / (1 + df(t))) + 1 with raw term counts, the
    smoothed form that never zeroes out a term. Scores are in [0, 1];
    an all-zero query or component scores 0 against everything.
    """
    _require_components(components)
    ndocs = len(components)
    df: dict[str, int] = {}
    counts = []
    for tokens in components:
        c: dict[str, int] = {}
        for t in tokens:
            c[t] = c.get(t, 0) + 1
        counts.append(c)
        for t in c:
            df[t] = df.get(t, 0) + 1

    def idf(t: str) -> float:
        return math.log((1 + ndocs) / (1 + df.get(t, 0))) + 1.0

    qc: dict[str, int] = {}
    for t in query_tokens:
        qc[t] = qc.get(t, 0) + 1
    qvec = {t: tf * idf(t) for t, tf in qc.items()}
    qnorm = math.sqrt(sum(v * v for v in qvec.values()))

    scores = np.zeros(ndocs)
    for i, c in enumerate(counts):
        cvec = {t: tf * idf(t) for t, tf in c.items()}
        cnorm = math.sqrt(sum(v * v for v in cvec.values()))
        if qnorm == 0.0 or cnorm == 0.0:
            continue
        dot = sum(qvec[t] * cvec.get(t, 0.0) for t in qvec)
        scores[i] = dot / (qnorm * cnorm)
    return scores


def bm25_rank(
    query_tokens: Sequence[str],
    components: Sequence[Sequence[str]],
    k1: float = 1.2,
    b: float = 0.75,
) -> np.ndarray:
    """Okapi BM25 with the non-negative +1 idf smoothing.

    idf(t) = ln(1 + (D - df + 0.5) / (df + 0.5)), so a term occurring in
    every component still contributes a small positive weight and a
    single-document corpus scores its own text positively. Repeated
    query terms weight linearly.
    """
    _require_components(components)
    ndocs = len(components)
    df: dict[str, int] = {}
    counts = []
    lengths = []
    for tokens in components:
        c: dict[str, int] = {}
        for t in tokens:
            c[t] = c.get(t, 0) + 1
        counts.append(c)
        lengths.append(len(tokens))
        for t in c:
            df[t] = df.get(t, 0) + 1
    avg_len = sum(lengths) / ndocs if ndocs else 0.0

    qc: dict[str, int] = {}
    for t in query_tokens:
        qc[t] = qc.get(t, 0) + 1

    scores = np.zeros(ndocs)
    for i, c in enumerate(counts):
        if avg_len == 0.0:
            break
        s = 0.0
        for t, qtf in qc.items():
            tf = c.get(t, 0)
            if tf == 0:
                continue
            idf = math.log(1.0 + (ndocs - df[t] + 0.5) / (df[t] + 0.5))
            denom = tf + k1 * (1.0 - b + b * lengths[i] / avg_len)
            s += qtf * idf * tf * (k1 + 1.0) / denom
        scores[i] = s
    return scores
