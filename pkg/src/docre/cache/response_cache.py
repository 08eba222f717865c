"""
Response Cache

Two-tier store for recorded chat responses:
- In-memory LRU for hot entries
- Content-addressed JSON files on disk: {root}/{key[:2]}/{key}.json

Keys are ChatRequest.cache_key() digests (prompt + stage + decode settings).
Writes are atomic (temp file + rename) and serialized by a lock.

Usage:
    from src.docre.cache.response_cache import ResponseCache

    cache = ResponseCache("runs/cache")
    cache.put(key, {"text": "...", "backend_id": "remote:..."})
    entry = cache.get(key)
"""
import json
import logging
import os
import shutil
import tempfile
import threading
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Optional, Union

from src.docre.exceptions import CacheCorruptionError

logger = logging.getLogger(__name__)


class LRUCache:
    """
    Least Recently Used (LRU) cache

    Thread-safe; evicts the least recently used entry when full.
    """

    def __init__(self, max_size: int = 1000):
        self.max_size = max_size
        self.cache: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

        # Statistics
        self.hits = 0
        self.misses = 0
        self.evictions = 0

    def get(self, key: str) -> Optional[Any]:
        with self._lock:
            if key not in self.cache:
                self.misses += 1
                return None
            self.cache.move_to_end(key)
            self.hits += 1
            return self.cache[key]

    def set(self, key: str, value: Any) -> None:
        with self._lock:
            if key in self.cache:
                del self.cache[key]
            if len(self.cache) >= self.max_size:
                self.cache.popitem(last=False)
                self.evictions += 1
            self.cache[key] = value

    def clear(self) -> None:
        with self._lock:
            self.cache.clear()

    def get_stats(self) -> Dict[str, Any]:
        total_requests = self.hits + self.misses
        hit_rate = (self.hits / total_requests * 100) if total_requests > 0 else 0
        return {
            "size": len(self.cache),
            "max_size": self.max_size,
            "hits": self.hits,
            "misses": self.misses,
            "evictions": self.evictions,
            "hit_rate": round(hit_rate, 2),
        }


class ResponseCache:
    """Content-addressed response store with an in-memory LRU front"""

    def __init__(self, root: Union[str, Path], memory_size: int = 1000):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.memory = LRUCache(max_size=memory_size)
        self._write_lock = threading.Lock()

        self.disk_hits = 0
        self.misses = 0
        self.writes = 0

    def path_for(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> Optional[Dict[str, Any]]:
        """
        Stored entry for key, or None

        Raises:
            CacheCorruptionError: the stored file is not a valid entry
        """
        entry = self.memory.get(key)
        if entry is not None:
            return entry

        path = self.path_for(key)
        if not path.is_file():
            self.misses += 1
            return None
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise CacheCorruptionError(f"Unreadable cache entry {path}: {e}") from e
        if not isinstance(entry, dict) or not isinstance(entry.get("text"), str):
            raise CacheCorruptionError(f"Cache entry {path} has no text field")

        self.disk_hits += 1
        self.memory.set(key, entry)
        return entry

    def put(self, key: str, entry: Dict[str, Any]) -> Path:
        path = self.path_for(key)
        data = json.dumps(entry, ensure_ascii=False, sort_keys=True)
        with self._write_lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as handle:
                    handle.write(data)
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
            self.writes += 1
        self.memory.set(key, entry)
        return path

    def __contains__(self, key: str) -> bool:
        return self.memory.get(key) is not None or self.path_for(key).is_file()

    def __len__(self) -> int:
        return sum(1 for _ in self.root.glob("*/*.json"))

    def clear(self) -> None:
        """Remove every stored entry"""
        with self._write_lock:
            for child in self.root.iterdir():
                if child.is_dir():
                    shutil.rmtree(child)
            self.memory.clear()
        logger.info("Response cache cleared", extra={"cache_root": str(self.root)})

    def get_stats(self) -> Dict[str, Any]:
        return {
            "root": str(self.root),
            "entries": len(self),
            "disk_hits": self.disk_hits,
            "misses": self.misses,
            "writes": self.writes,
            "memory": self.memory.get_stats(),
        }
