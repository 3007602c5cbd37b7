"""Shared helpers: stable seed derivation, hashing, worker-count resolution."""
from __future__ import annotations

import hashlib
import os


def derive_seed(*parts) -> int:
    """Derive a 64-bit RNG seed from a tuple of values.

    Stable across processes and platforms (unlike ``hash``), so any artifact
    produced from a derived seed is reproducible run to run.
    """
    text = "\x1f".join(repr(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def stable_digest(*parts) -> str:
    """Hex digest identifying a tuple of values, for provenance records."""
    text = "\x1f".join(repr(p) for p in parts)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def thread_count() -> int:
    """Worker count for parallel scoring.

    Reads SPECSHIFT_THREADS; unset, empty, or 0 means automatic (capped so
    small machines are not oversubscribed). Values below 0 are rejected.
    """
    raw = os.environ.get("SPECSHIFT_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"SPECSHIFT_THREADS must be an integer, got {raw!r}")
        if n < 0:
            raise ValueError(f"SPECSHIFT_THREADS must be >= 0, got {n}")
        if n > 0:
            return n
    return max(1, min(8, os.cpu_count() or 1))
