"""Line-delimited JSON stores with single-writer atomic replacement."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, TypeVar

T = TypeVar("T")


def dumps(record: dict[str, Any]) -> str:
    # sort_keys off: field order follows the type definitions
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def atomic_write_text(path: str | os.PathLike, text: str) -> Path:
    """Write to a sibling temp file, fsync, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_jsonl(path: str | os.PathLike, records: Iterable[Any]) -> Path:
    lines = []
    for rec in records:
        d = rec.to_dict() if hasattr(rec, "to_dict") else rec
        lines.append(dumps(d) + "\n")
    return atomic_write_text(path, "".join(lines))


def iter_jsonl(path: str | os.PathLike) -> Iterator[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc


def read_jsonl(path: str | os.PathLike, decode: Callable[[dict[str, Any]], T] | None = None) -> list[T]:
    rows = iter_jsonl(path)
    return [decode(r) for r in rows] if decode else list(rows)  # type: ignore[misc]


def file_sha256(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
