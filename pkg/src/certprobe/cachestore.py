"""Append-only JSONL key-value cache shared by the completion and NLI gateways.

Each put writes one segment file (tmp + rename) so a killed run never
leaves a torn record; a warm cache is the whole resumability story for
long collection runs. Concurrent readers are free; writes are serialized
by a process-local lock.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from pathlib import Path
from typing import Optional


class JsonlKvCache:
    def __init__(self, directory: str | os.PathLike, namespace: str = "cache"):
        self._dir = Path(directory) / namespace
        self._dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._data: dict[str, dict] = {}
        self._load()

    def _load(self) -> None:
        for seg in sorted(self._dir.glob("seg-*.jsonl")):
            with open(seg, "r", encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        rec = json.loads(line)
                    except json.JSONDecodeError:
                        continue  # torn write from a killed run
                    self._data[rec["key"]] = rec["value"]

    def get(self, key: str) -> Optional[dict]:
        with self._lock:
            return self._data.get(key)

    def __contains__(self, key: str) -> bool:
        with self._lock:
            return key in self._data

    def __len__(self) -> int:
        with self._lock:
            return len(self._data)

    def put_many(self, entries: dict[str, dict]) -> None:
        """Persist a batch atomically; existing keys are not rewritten."""
        with self._lock:
            fresh = {k: v for k, v in entries.items() if k not in self._data}
            if not fresh:
                return
            name = f"seg-{uuid.uuid4().hex}.jsonl"
            tmp = self._dir / (name + ".tmp")
            with open(tmp, "w", encoding="utf-8") as f:
                for k, v in fresh.items():
                    f.write(json.dumps({"key": k, "value": v}, sort_keys=True) + "\n")
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, self._dir / name)
            self._data.update(fresh)

    def put(self, key: str, value: dict) -> None:
        self.put_many({key: value})
