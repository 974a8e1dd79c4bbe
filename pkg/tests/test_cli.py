from __future__ import annotations

import json

from click.testing import CliRunner

from soctutor.attack import BASELINE_DOCS
from soctutor.cli import main as cli_main


def test_ingest_directory(tmp_path, monkeypatch):
    docs = tmp_path / "course"
    docs.mkdir()
    (docs / "lecture_recursion.md").write_text(BASELINE_DOCS[0]["body"])
    (docs / "notes.txt").write_text(BASELINE_DOCS[1]["body"])
    (docs / "ignored.pdf").write_text("binary-ish")
    monkeypatch.setenv("SOC_DATA_DIR", str(tmp_path / "data"))
    monkeypatch.setenv("SOC_FSYNC", "0")

    result = CliRunner().invoke(cli_main, ["ingest", str(docs)])
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert len(report["documents"]) == 2
    kinds = {d["title"]: d["kind"] for d in report["documents"]}
    assert kinds["lecture recursion"] == "lecture"


def test_ingest_empty_directory_fails(tmp_path, monkeypatch):
    empty = tmp_path / "empty"
    empty.mkdir()
    monkeypatch.setenv("SOC_DATA_DIR", str(tmp_path / "data"))
    result = CliRunner().invoke(cli_main, ["ingest", str(empty)])
    assert result.exit_code == 1


def test_export_round_trip(tmp_path, monkeypatch):
    docs = tmp_path / "course"
    docs.mkdir()
    (docs / "notes.txt").write_text(BASELINE_DOCS[0]["body"])
    monkeypatch.setenv("SOC_DATA_DIR", str(tmp_path / "data"))
    monkeypatch.setenv("SOC_FSYNC", "0")
    runner = CliRunner()
    assert runner.invoke(cli_main, ["ingest", str(docs)]).exit_code == 0

    out = tmp_path / "events.ndjson"
    result = runner.invoke(cli_main, ["export", "--out", str(out)])
    assert result.exit_code == 0, result.output
    lines = out.read_text().strip().splitlines()
    header = json.loads(lines[0])
    assert header["type"] == "header"
    assert header["count"] == len(lines) - 1 >= 1
    kinds = {json.loads(line)["kind"] for line in lines[1:]}
    assert "ChunkUpserted" in kinds


def test_export_respects_range_and_redaction(tmp_path, monkeypatch):
    monkeypatch.setenv("SOC_DATA_DIR", str(tmp_path / "data"))
    monkeypatch.setenv("SOC_FSYNC", "0")
    monkeypatch.setenv("SOC_BOOTSTRAP_ADMIN", "secretadmin:admin-password-1")
    runner = CliRunner()
    result = runner.invoke(cli_main, ["export", "--redact"])
    assert result.exit_code == 0, result.output
    assert "secretadmin" not in result.output
    # far-future range excludes everything
    result = runner.invoke(cli_main, ["export", "--from", "2099-01-01"])
    body = [json.loads(l) for l in result.output.strip().splitlines()]
    assert body[0]["count"] == 0
