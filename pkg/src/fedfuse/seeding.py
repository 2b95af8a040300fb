"""Deterministic seed derivation."""

import hashlib


def derive_seed(seed: int, *tags) -> int:
    """Child seed for ``tags`` under ``seed``; stable across platforms and runs."""
    material = "/".join([str(int(seed)), *map(str, tags)]).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(material, digest_size=8).digest(), "little") >> 1
