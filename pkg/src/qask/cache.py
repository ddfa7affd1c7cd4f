"""Content-addressed cache of agent responses.

Entries are JSON blobs under two-level hex-prefix directories, keyed by a
sha256 digest of everything that determines the response. Entries are
immutable; writers stage to a temp file and rename.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
from pathlib import Path
from typing import Iterable, Optional

from .core import dumps_canonical

log = logging.getLogger(__name__)

CACHE_DIR_ENV = "QASK_CACHE_DIR"


def make_key(
    agent_id: str,
    model_name: str,
    temperature: float,
    template_version: str,
    prompt_text: str,
    image_payloads: Iterable[bytes] = (),
) -> str:
    """256-bit digest over everything that determines a remote response."""
    image_digests = [hashlib.sha256(b).hexdigest() for b in image_payloads]
    material = dumps_canonical(
        {
            "agent_id": agent_id,
            "model_name": model_name,
            "temperature": temperature,
            "template_version": template_version,
            "prompt_text": prompt_text,
            "images": image_digests,
        }
    )
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


class ResponseCache:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def key_lock(self, key: str) -> threading.Lock:
        """Per-key lock so concurrent misses on one key resolve to a single
        fill; without it two threads can record different latencies for the
        same entry and break replay determinism."""
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / key[2:4] / f"{key}.json"

    def get(self, key: str) -> Optional[dict]:
        path = self._path(key)
        if not path.is_file():
            return None
        try:
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)
        except (json.JSONDecodeError, OSError) as exc:
            log.warning("corrupt cache entry %s treated as miss: %s", key, exc)
            return None

    def put(self, key: str, entry: dict) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(dumps_canonical(entry))
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def resolve_cache_dir(flag_value=None, config_value=None) -> Optional[Path]:
    """Precedence: CLI flag > environment > config file."""
    value = flag_value or os.environ.get(CACHE_DIR_ENV) or config_value
    return Path(value) if value else None
