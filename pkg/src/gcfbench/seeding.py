"""Deterministic seed derivation.

One root seed fans out to per-stage seeds so that re-running any stage, or
the whole pipeline, reproduces identical bytes. Derivation hashes the root
together with a stage label, so adding a stage never shifts the seeds of
existing ones.
"""

import hashlib


def derive_seed(root_seed: int, label: str) -> int:
    """Derive a 32-bit stage seed from a root seed and a stage label."""
    digest = hashlib.sha256(f"{root_seed}/{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")
