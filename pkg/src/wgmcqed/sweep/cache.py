"""Content-addressed on-disk store for solved modes.

Each entry is a directory named by the sha256 of its key material holding
``meta.json`` (eigenvalue, diagnostics, key) and ``field.csv`` (nodal H).
Floats are written with 17 significant digits so they round-trip exactly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np

CACHE_ENV = "WGMCQED_CACHE_DIR"
SCHEMA = 1

log = logging.getLogger(__name__)


class CacheCorruptWarning(UserWarning):
    pass


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "wgmcqed"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def cache_key(material: dict) -> str:
    return hashlib.sha256(canonical_json(material).encode()).hexdigest()


class ModeCache:
    def __init__(self, root: str | os.PathLike | None = None, enabled: bool = True):
        self.root = Path(root) if root is not None else default_cache_dir()
        self.enabled = enabled
        self.hits = 0
        self.misses = 0

    def _dir(self, key: str) -> Path:
        return self.root / key[:2] / key

    def store(self, key_material: dict, eigen_k: complex, H: np.ndarray, meta: dict | None = None) -> str:
        key = cache_key(key_material)
        if not self.enabled:
            return key
        final = self._dir(key)
        final.parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=".tmp-", dir=final.parent))
        try:
            record = {
                "schema": SCHEMA,
                "key": key_material,
                "eigen_k": [float(eigen_k.real), float(eigen_k.imag)],
                "meta": meta or {},
            }
            (tmp / "meta.json").write_text(json.dumps(record, sort_keys=True, indent=1))
            cols = np.column_stack([H.real.T, H.imag.T])
            np.savetxt(
                tmp / "field.csv",
                cols,
                fmt="%.17g",
                delimiter=",",
                header="Hrho_re,b_re,Hz_re,Hrho_im,b_im,Hz_im",
                comments="",
            )
            try:
                os.rename(tmp, final)
            except OSError:
                # another writer got there first; keep theirs
                shutil.rmtree(tmp, ignore_errors=True)
        except BaseException:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
        return key

    def load(self, key_material: dict):
        """Return (eigen_k, H, meta) or None on miss.  Corrupt entries count as misses."""
        if not self.enabled:
            self.misses += 1
            return None
        key = cache_key(key_material)
        d = self._dir(key)
        if not d.is_dir():
            self.misses += 1
            return None
        try:
            record = json.loads((d / "meta.json").read_text())
            if record.get("schema") != SCHEMA or record.get("key") != key_material:
                raise ValueError("key mismatch")
            cols = np.loadtxt(d / "field.csv", delimiter=",", skiprows=1, ndmin=2)
            if cols.shape[1] != 6:
                raise ValueError("bad field shape")
            H = (cols[:, :3] + 1j * cols[:, 3:]).T.copy()
            k = complex(*record["eigen_k"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            import warnings

            warnings.warn(f"corrupt cache entry {key[:12]}: {exc}; recomputing", CacheCorruptWarning)
            self.misses += 1
            return None
        self.hits += 1
        return k, H, record.get("meta", {})

    def entries(self):
        if not self.root.is_dir():
            return []
        out = []
        for meta in sorted(self.root.glob("??/*/meta.json")):
            try:
                rec = json.loads(meta.read_text())
            except (OSError, ValueError):
                rec = {"corrupt": True}
            out.append((meta.parent.name, rec))
        return out

    def clear(self) -> int:
        n = len(self.entries())
        if self.root.is_dir():
            for sub in self.root.glob("??"):
                shutil.rmtree(sub, ignore_errors=True)
        return n
