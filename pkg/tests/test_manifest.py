import hashlib
import json
import sqlite3
import time

import pytest

from src import __version__
from src.manifest import RunManifest, RunRegistry


@pytest.fixture
def registry():
    return RunRegistry(":memory:")


def make_manifest(command, *outputs):
    return RunManifest(command=command, outputs={path: "0" * 64 for path in outputs})


def test_manifest_records_checksums(tmp_path):
    source = tmp_path / "in.mbr"
    source.write_bytes(b"input")
    target = tmp_path / "out.mbr"
    target.write_bytes(b"output")

    manifest = RunManifest(command="sharpen", parameters={"method": "ihs"})
    manifest.add_input(source)
    manifest.add_output(target)
    manifest.finish(time.perf_counter())
    path = tmp_path / "nested" / "out.manifest.json"
    manifest.write(path)

    body = json.loads(path.read_text())
    assert body["command"] == "sharpen"
    assert body["parameters"] == {"method": "ihs"}
    assert body["inputs"] == {str(source): hashlib.sha256(b"input").hexdigest()}
    assert body["outputs"] == {str(target): hashlib.sha256(b"output").hexdigest()}
    assert body["version"] == __version__
    assert body["duration_seconds"] >= 0.0
    assert RunManifest.model_validate_json(path.read_text()) == manifest


def test_registry_lists_newest_first(registry):
    first = registry.record(make_manifest("simulate", "gt.mbr", "lr.mbr"))
    second = registry.record(make_manifest("sharpen", "fused.mbr"))
    runs = registry.list_runs()
    assert [run["id"] for run in runs] == [second, first]
    assert runs[1]["outputs"] == ["gt.mbr", "lr.mbr"]
    assert runs[0]["version"] == __version__


def test_registry_filter_and_limit(registry):
    for _ in range(3):
        registry.record(make_manifest("sharpen"))
    registry.record(make_manifest("evaluate"))
    assert [run["command"] for run in registry.list_runs("sharpen")] == ["sharpen"] * 3
    assert len(registry.list_runs(limit=2)) == 2
    assert registry.get_stats() == {"evaluate": 1, "sharpen": 3}


def test_empty_registry(registry):
    assert registry.list_runs() == []
    assert registry.get_stats() == {}


def test_registry_file_persists(tmp_path):
    path = tmp_path / "db" / "runs.db"
    RunRegistry(str(path)).record(make_manifest("tune", "ms_bank.txt"))
    runs = RunRegistry(str(path)).list_runs()
    assert len(runs) == 1
    assert runs[0]["command"] == "tune"
    assert runs[0]["outputs"] == ["ms_bank.txt"]


def test_file_connections_are_closed(tmp_path, monkeypatch):
    opened = []
    connect = sqlite3.connect

    def tracking_connect(*args, **kwargs):
        conn = connect(*args, **kwargs)
        opened.append(conn)
        return conn

    monkeypatch.setattr(sqlite3, "connect", tracking_connect)
    registry = RunRegistry(str(tmp_path / "runs.db"))
    registry.record(make_manifest("verify"))
    registry.list_runs()
    registry.get_stats()

    assert len(opened) == 4
    for conn in opened:
        with pytest.raises(sqlite3.ProgrammingError):
            conn.execute("SELECT 1")
