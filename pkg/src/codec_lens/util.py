"""Small shared helpers: canonical JSON, atomic writes, thread cap."""

from __future__ import annotations

import json
import os
import tempfile

THREADS_ENV = "CODEC_LENS_THREADS"


def canonical_json_bytes(obj) -> bytes:
    """Stable JSON encoding: re-reading and re-encoding is byte-identical."""
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


def atomic_write(path: str | os.PathLike, blob: bytes) -> None:
    """Write via a temp file in the same directory plus rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def thread_cap() -> int:
    """Worker cap from the CODEC_LENS_THREADS variable (default 1)."""
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
