"""Labeled random substreams derived from one root seed."""
from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for subsystem ``label`` (e.g. "init", "shuffle")."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(zlib.crc32(label.encode()),))
    return np.random.default_rng(ss)


def subseed(seed: int, label: str) -> int:
    return int(substream(seed, label).integers(0, 2**31 - 1))
