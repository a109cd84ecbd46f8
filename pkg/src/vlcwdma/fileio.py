"""Atomic text-file writes for run artifacts."""

from __future__ import annotations

import os
import tempfile


def atomic_write(path: str, content: str) -> None:
    """Write content to path via a temp file + rename, creating parent dirs."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
