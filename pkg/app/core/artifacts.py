"""
Artifact persistence for experiment runs.

Every file a run produces lives under the run directory; the manifest lists
each one with its content hash so two runs can be compared file by file.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List

from app.core.errors import ArtifactWriteError, CorpusReadError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def ensure_dir(path: Path) -> Path:
    """Creates the directory if it doesn't exist"""
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ArtifactWriteError(f"failed to create {path}: {exc}") from exc
    return path


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def save_json(path: Path, data: Any) -> None:
    ensure_dir(path.parent)
    try:
        with path.open("w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, ensure_ascii=False)
        logger.debug("Saved %s", path)
    except OSError as exc:
        raise ArtifactWriteError(f"failed to write {path}: {exc}") from exc


def load_json(path: Path) -> Any:
    try:
        with path.open("r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise CorpusReadError(f"failed to read {path}: {exc}") from exc


def write_jsonl(path: Path, records: Iterable[Dict[str, Any]]) -> int:
    ensure_dir(path.parent)
    count = 0
    try:
        with path.open("w", encoding="utf-8") as f:
            for record in records:
                f.write(json.dumps(record, ensure_ascii=False) + "\n")
                count += 1
    except OSError as exc:
        raise ArtifactWriteError(f"failed to write {path}: {exc}") from exc
    return count


def append_jsonl(path: Path, record: Dict[str, Any]) -> None:
    ensure_dir(path.parent)
    with path.open("a", encoding="utf-8") as f:
        f.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_jsonl(path: Path) -> Iterator[Dict[str, Any]]:
    try:
        with path.open("r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    yield json.loads(line)
    except (OSError, json.JSONDecodeError) as exc:
        raise CorpusReadError(f"failed to read {path}: {exc}") from exc


def write_manifest(run_dir: Path) -> Dict[str, str]:
    """Hash every file under run_dir (except the manifest itself) into manifest.json."""
    entries: Dict[str, str] = {}
    for path in sorted(p for p in run_dir.rglob("*") if p.is_file()):
        rel = path.relative_to(run_dir).as_posix()
        if rel == MANIFEST_NAME:
            continue
        entries[rel] = sha256_file(path)
    save_json(run_dir / MANIFEST_NAME, {"files": entries})
    logger.info("Wrote manifest with %d artifacts to %s", len(entries), run_dir)
    return entries


def read_lines(path: Path) -> List[str]:
    """UTF-8 lines with CRLF/LF endings removed."""
    try:
        with path.open("r", encoding="utf-8", newline=None) as f:
            return [line.rstrip("\r\n") for line in f]
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusReadError(f"failed to read {path}: {exc}") from exc
