import hashlib
from pathlib import Path

from survival.manifest import (
    TOOL_VERSION,
    RunManifest,
    file_digest,
    finish_manifest,
    sidecar_path,
    start_manifest,
    write_sidecar,
)


def test_sidecar_path():
    assert sidecar_path("out/report.csv") == Path("out/report.manifest.json")


def test_file_digest(tmp_path):
    path = tmp_path / "data.csv"
    path.write_bytes(b"time,status\n1,1\n")
    assert file_digest(path) == hashlib.sha256(b"time,status\n1,1\n").hexdigest()


def test_start_and_finish(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("time,status\n1,1\n", encoding="utf-8")
    manifest = start_manifest("fit", {"method": "na"}, 3, [path])
    assert manifest.version == TOOL_VERSION
    assert manifest.input_digests == {str(path): file_digest(path)}
    assert manifest.finished_at is None

    finished = finish_manifest(manifest)
    assert finished.finished_at is not None
    assert finished.started_at == manifest.started_at


def test_write_sidecar(tmp_path):
    manifest = finish_manifest(start_manifest("simulate", {"n": 100}, 1))
    target = write_sidecar(tmp_path / "report.csv", manifest)
    assert target == tmp_path / "report.manifest.json"
    assert RunManifest.model_validate_json(target.read_text(encoding="utf-8")) == manifest
