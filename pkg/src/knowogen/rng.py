"""Named deterministic random streams derived from one master seed.

Each simulation concern (participant sampling, sickness, decoding seeds)
gets its own stream so adding draws to one concern never perturbs the
others.
"""

from __future__ import annotations

import hashlib
import random


def derive_stream(master_seed: int, label: str) -> random.Random:
    """Return an independent RNG for (master_seed, label)."""
    material = f"{master_seed}:{label}".encode("utf-8")
    sub_seed = int.from_bytes(hashlib.sha256(material).digest()[:8], "big")
    return random.Random(sub_seed)


def stable_hash(*parts: object) -> int:
    """Deterministic 63-bit integer hash of the given parts."""
    material = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "big") >> 1
