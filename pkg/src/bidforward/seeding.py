"""Deterministic seed derivation.

Every random stream in a run is derived from one master seed, so any piece
of a batch can be reproduced in isolation. Derivation uses SHA-256 rather
than the builtin ``hash`` (which is salted per process).
"""

from __future__ import annotations

import hashlib


def derive_seed(*parts: object) -> int:
    """Map a tuple of labels/ints to a stable 63-bit seed."""
    text = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
