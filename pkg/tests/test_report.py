"""Report writing: text tables, JSON rows and figure files."""

import json

import pytest

from nrex.report import (
    METRIC_COLUMNS,
    emit_report,
    load_report,
    render_text_table,
)


def row(method="full", mode="high", with_history=True, stddev=False):
    mean = {"n": 12, "acc": 0.75, "mrr": 0.8125, "hit2": 0.85, "hit3": 0.9,
            "hit5": 1.0}
    out = {
        "method": method,
        "mode": mode,
        "config": {"seed": 0},
        "per_seed": [{"seed": 0, "metrics": mean, "subsets": {}}],
        "mean": mean,
        "stddev": {k: 0.01 for k in METRIC_COLUMNS} if stddev else None,
        "history": (
            {"0": {"train_loss": [2.0, 1.2, 0.7], "dev_acc": [0.5, 0.7, 0.75]}}
            if with_history
            else {}
        ),
    }
    return out


def test_text_table_contains_aligned_columns():
    text = render_text_table([row(), row(method="no_bon", stddev=True)])
    lines = text.splitlines()
    assert lines[0].startswith("method")
    assert set(lines[1]) <= {"-", " "}
    assert "no_bon" in lines[3]
    assert "0.7500" in lines[2]
    assert "±0.0100" in lines[3]
    # all rows share the header's width
    assert all(len(l) <= len(lines[1]) for l in lines)


def test_emit_report_writes_json_text_and_figures(tmp_path):
    rows = [row(), row(method="no_gat")]
    files = emit_report(rows, tmp_path / "out" / "run", figures=True)
    names = {f.name for f in files}
    assert names == {"run.json", "run.txt", "run_metrics.png", "run_loss.png"}
    for f in files:
        assert f.exists() and f.stat().st_size > 0
    assert json.loads((tmp_path / "out" / "run.json").read_text()) == rows


def test_emit_report_without_figures(tmp_path):
    files = emit_report([row()], tmp_path / "run", figures=False)
    assert {f.suffix for f in files} == {".json", ".txt"}


def test_loss_figure_skipped_without_history(tmp_path):
    files = emit_report([row(with_history=False)], tmp_path / "run", figures=True)
    names = {f.name for f in files}
    assert "run_metrics.png" in names
    assert "run_loss.png" not in names


def test_nested_stage_histories_render(tmp_path):
    both = row()
    both["history"] = {
        "0": {
            "high": {"train_loss": [1.0, 0.5], "dev_acc": [0.6, 0.7]},
            "low": {"train_loss": [3.0, 2.0], "dev_acc": [0.4, 0.6]},
        }
    }
    files = emit_report([both], tmp_path / "run", figures=True)
    assert any(f.name == "run_loss.png" for f in files)


def test_report_bytes_are_reproducible(tmp_path):
    rows = [row(stddev=True)]
    emit_report(rows, tmp_path / "a", figures=False)
    emit_report(rows, tmp_path / "b", figures=False)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


def test_load_report_round_trip_and_validation(tmp_path):
    rows = [row()]
    emit_report(rows, tmp_path / "run", figures=False)
    assert load_report(tmp_path / "run.json") == rows
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"not": "a list"}))
    with pytest.raises(ValueError, match="JSON list"):
        load_report(bad)
    bad.write_text(json.dumps([{"method": "x"}]))
    with pytest.raises(ValueError, match="malformed"):
        load_report(bad)
