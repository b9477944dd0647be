import hashlib
import io
import logging
import time
from pathlib import Path

import numpy as np

from src.island_resonances.utils.errors import CorruptEntry
from src.island_resonances.utils.export import dumps

logger = logging.getLogger(__name__)


class ResultCache:
    """Content-addressed store of numpy artifacts under <out>/cache, one .npz per key plus a .sha256 sidecar."""

    _MAX_AGE_DAYS = 30
    _SUFFIX = ".npz"
    _SIDECAR = ".sha256"

    def __init__(self, root):
        self.root = Path(root) / "cache"
        self.root.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    @staticmethod
    def _digest(raw):
        return hashlib.sha256(raw).hexdigest()

    @staticmethod
    def key(namespace, payload):
        return f"{namespace}-{hashlib.sha256(dumps(payload).encode()).hexdigest()[:32]}"

    def _paths(self, key):
        return self.root / f"{key}{self._SUFFIX}", self.root / f"{key}{self._SIDECAR}"

    def get(self, key):
        """Stored arrays for key, or None on a miss; raises CorruptEntry when the sidecar hash disagrees."""
        data_path, sidecar = self._paths(key)
        if not data_path.exists() or not sidecar.exists():
            return None
        raw = data_path.read_bytes()
        if self._digest(raw) != sidecar.read_text().strip():
            raise CorruptEntry(f"cache entry {key} does not match its recorded hash")
        with np.load(io.BytesIO(raw), allow_pickle=False) as stored:
            arrays = {name: stored[name] for name in stored.files}
        data_path.touch()
        sidecar.touch()
        logger.debug(f"cache hit {key}")
        return arrays

    def put(self, key, arrays):
        buffer = io.BytesIO()
        np.savez(buffer, **arrays)
        raw = buffer.getvalue()
        data_path, sidecar = self._paths(key)
        data_path.write_bytes(raw)
        sidecar.write_text(self._digest(raw) + "\n")

    def get_or_compute(self, key, compute, encode, decode):
        """decode(stored arrays) on a hit; otherwise compute(), store encode(result) and return the result."""
        try:
            arrays = self.get(key)
        except CorruptEntry as err:
            logger.warning(f"{err}; recomputing")
            arrays = None
        if arrays is not None:
            self.hits += 1
            return decode(arrays)
        self.misses += 1
        result = compute()
        self.put(key, encode(result))
        return result

    def gc(self, max_age_days=None):
        """Remove entries not touched for max_age_days (default 30); returns the number of removed entries."""
        max_age = (self._MAX_AGE_DAYS if max_age_days is None else max_age_days) * 86400.0
        cutoff = time.time() - max_age
        removed = 0
        for data_path in sorted(self.root.glob(f"*{self._SUFFIX}")):
            if data_path.stat().st_mtime < cutoff:
                data_path.unlink()
                data_path.with_suffix(self._SIDECAR).unlink(missing_ok=True)
                removed += 1
        logger.info(f"cache gc removed {removed} entries older than {max_age / 86400.0:g} days")
        return removed


if __name__ == "__main__":
    pass
