"""Deterministic derivation of sub-seeds from one root seed.

Every stochastic stage (splitting, weight init, shuffling, dropout,
padding noise) draws its own 64-bit seed as a pure function of
(root, purpose-tag, index).  Runs with the same root seed are therefore
bit-reproducible regardless of the order in which stages execute.
"""

import hashlib

_MASK64 = (1 << 64) - 1


def derive_seed(root: int, tag: str, index: int = 0) -> int:
    """Return a 64-bit seed determined by (root, tag, index).

    Uses the first 8 bytes of SHA-256 over a canonical encoding, so the
    mapping is stable across platforms and Python versions.
    """
    payload = "{}:{}:{}".format(root & _MASK64, tag, index).encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "little")
