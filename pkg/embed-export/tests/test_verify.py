"""Coverage checks against an exported file that gets edited in place."""

import json

import pytest

from embed_export.export import (
    EmbeddingFormatError,
    ExportJob,
    export_embeddings,
    read_embedding_ids,
    verify_file,
)


@pytest.fixture(scope="module")
def exported(encoder_dir, onedoc_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("verify") / "emb.jsonl"
    export_embeddings(
        ExportJob(corpus=onedoc_path, model=str(encoder_dir), out=out)
    )
    return out


def _edit(exported, tmp_path, keep=None, append=None):
    """Copy the exported file, dropping and adding whole records."""
    lines = exported.read_text(encoding="utf-8").splitlines()
    kept = [lines[0]]
    for line in lines[1:]:
        if keep is None or keep(json.loads(line)["id"]):
            kept.append(line)
    for record in append or []:
        kept.append(json.dumps(record))
    path = tmp_path / "edited.jsonl"
    path.write_text("\n".join(kept) + "\n", encoding="utf-8")
    return path


def test_complete_file(exported, onedoc_path):
    cov = verify_file(exported, onedoc_path)
    assert cov.dim == 32
    assert cov.records == 15
    assert cov.missing == () and cov.extra == ()
    assert cov.entailment_records == 0
    assert cov.component_present == cov.component_total == 2
    assert cov.complete


def test_deleted_mention_is_listed(exported, onedoc_path, tmp_path):
    path = _edit(exported, tmp_path, keep=lambda i: i != "e:d0/e6")
    cov = verify_file(path, onedoc_path)
    assert cov.missing == ("e:d0/e6",)
    # mention loss does not break component coverage
    assert cov.complete


def test_deleted_component_breaks_coverage(exported, onedoc_path, tmp_path):
    path = _edit(exported, tmp_path, keep=lambda i: i != "c:d0/t0")
    cov = verify_file(path, onedoc_path)
    assert cov.missing == ("c:d0/t0",)
    assert cov.component_present == 1
    assert not cov.complete


def test_extra_and_entailment_records(exported, onedoc_path, tmp_path):
    path = _edit(
        exported,
        tmp_path,
        append=[
            {"id": "c:d0/zz", "vec": [0.0] * 32},
            {"id": "ent:d0/p0/q0", "vec": [0.5]},
        ],
    )
    cov = verify_file(path, onedoc_path)
    assert cov.extra == ("c:d0/zz",)
    assert cov.entailment_records == 1
    assert cov.complete


def test_wrong_length_record(exported, onedoc_path, tmp_path):
    path = _edit(exported, tmp_path, append=[{"id": "e:d0/xx", "vec": [1.0] * 31}])
    with pytest.raises(EmbeddingFormatError, match="length"):
        verify_file(path, onedoc_path)


def test_duplicate_id(exported, onedoc_path, tmp_path):
    dup = json.loads(exported.read_text(encoding="utf-8").splitlines()[1])
    path = _edit(exported, tmp_path, append=[dup])
    with pytest.raises(EmbeddingFormatError, match="duplicate"):
        verify_file(path, onedoc_path)


def test_bad_header(tmp_path, onedoc_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"size": 32}\n', encoding="utf-8")
    with pytest.raises(EmbeddingFormatError, match="header"):
        verify_file(path, onedoc_path)


def test_read_embedding_ids(exported):
    dim, ids = read_embedding_ids(exported)
    assert dim == 32
    assert len(ids) == 15
    assert "c:d0/p0" in ids and "qe:d0/q0/1" in ids
