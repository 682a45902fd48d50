"""Pinned-encoder sanity check: near-duplicate phrases stay closer than
unrelated ones, and the cosines match the values recorded when the
fixture encoder was first built."""

import json

import numpy as np

from embed_export.encoder import encode_texts, load_encoder, pool_mean

TOLERANCE = 5e-3


def _embed(enc, text, max_len):
    hidden, offsets = next(encode_texts(enc, [text], max_len=max_len, batch_size=1))
    return pool_mean(hidden, [off is not None for off in offsets])


def _cosine(a, b):
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def test_same_topic_beats_cross_topic(encoder_dir, fixtures_dir):
    pinned = json.loads(
        (fixtures_dir / "separation.json").read_text(encoding="utf-8")
    )
    enc = load_encoder(str(encoder_dir))
    assert enc.hidden == pinned["encoder"]["hidden"]

    phrases = pinned["phrases"]
    max_len = pinned["max_len"]
    anchor = _embed(enc, phrases["anchor"], max_len)
    same = _cosine(anchor, _embed(enc, phrases["same"], max_len))
    cross = _cosine(anchor, _embed(enc, phrases["cross"], max_len))

    ok = (
        same > cross
        and abs(same - pinned["cosines"]["same"]) < TOLERANCE
        and abs(cross - pinned["cosines"]["cross"]) < TOLERANCE
    )
    print(
        f"B2 same-topic vs cross-topic separation: {'PASS' if ok else 'FAIL'} "
        f"(same {same:.4f} > cross {cross:.4f}, margin {same - cross:.4f})"
    )
    assert same > cross
    assert abs(same - pinned["cosines"]["same"]) < TOLERANCE
    assert abs(cross - pinned["cosines"]["cross"]) < TOLERANCE
