"""Seed derivation: every random stream is a pure function of (master_seed, keys)."""

from __future__ import annotations

import zlib

import numpy as np


def _key(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    return int(k)


def derive_rng(master_seed: int, *keys) -> np.random.Generator:
    """Independent generator for the stream labelled ``keys`` under ``master_seed``.

    String keys are hashed with CRC32 so labels are stable across platforms and
    interpreter runs (unlike ``hash``).
    """
    seq = np.random.SeedSequence(entropy=int(master_seed) & (2**64 - 1), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.PCG64(seq))
