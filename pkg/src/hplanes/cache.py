"""Binary table cache.

Expensive one-time tables (the mollifier's Fourier-side profile and its
density/CDF) persist as .npz files under the directory named by the
HPLANES_CACHE_DIR environment variable (default: ~/.cache/hplanes).  Files
carry a format version; stale versions are rebuilt, never migrated.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np

CACHE_ENV_VAR = "HPLANES_CACHE_DIR"
CACHE_VERSION = 1


def cache_dir() -> Path:
    root = os.environ.get(CACHE_ENV_VAR)
    if root:
        return Path(root)
    return Path.home() / ".cache" / "hplanes"


def _key_path(kind: str, key_parts: dict) -> Path:
    blob = kind + "|" + "|".join(f"{k}={key_parts[k]!r}" for k in sorted(key_parts))
    digest = hashlib.sha256(blob.encode()).hexdigest()[:16]
    return cache_dir() / f"{kind}-v{CACHE_VERSION}-{digest}.npz"


def load_arrays(kind: str, key_parts: dict) -> dict | None:
    path = _key_path(kind, key_parts)
    if not path.exists():
        return None
    try:
        with np.load(path) as data:
            if int(data["__version__"]) != CACHE_VERSION:
                return None
            return {k: data[k] for k in data.files if k != "__version__"}
    except (OSError, KeyError, ValueError):
        return None


def save_arrays(kind: str, key_parts: dict, arrays: dict) -> Path:
    path = _key_path(kind, key_parts)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, __version__=np.int64(CACHE_VERSION), **arrays)
    os.replace(tmp, path)
    return path
