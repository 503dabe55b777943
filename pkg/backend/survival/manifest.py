"""
実行マニフェスト
出力ファイルに埋め込む（または横に置く）再現用の記録
"""

import hashlib
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, Optional

from pydantic import BaseModel

TOOL_VERSION = "1.0.0"


class RunManifest(BaseModel):
    """コマンド・設定・シード・入力ダイジェスト・時刻"""
    command: str
    config: dict = {}
    seed: Optional[int] = None
    version: str = TOOL_VERSION
    input_digests: Dict[str, str] = {}  # パス → sha256
    started_at: str
    finished_at: Optional[str] = None


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def file_digest(path) -> str:
    """ファイルの sha256"""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def start_manifest(command: str, config: dict, seed: Optional[int] = None, inputs: Iterable = ()) -> RunManifest:
    return RunManifest(
        command=command,
        config=config,
        seed=seed,
        input_digests={str(path): file_digest(path) for path in inputs},
        started_at=_now(),
    )


def finish_manifest(manifest: RunManifest) -> RunManifest:
    return manifest.model_copy(update={"finished_at": _now()})


def sidecar_path(path) -> Path:
    """report.csv → report.manifest.json"""
    path = Path(path)
    return path.with_name(f"{path.stem}.manifest.json")


def write_sidecar(path, manifest: RunManifest) -> Path:
    target = sidecar_path(path)
    target.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    return target
