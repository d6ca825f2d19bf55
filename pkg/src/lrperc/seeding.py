"""Seed records and the keyed-hash seed derivation tree.

Every random draw in the package goes through a :class:`SeedRecord`. A record
holds a root seed plus a path of labels (experiment id, replica index, stage
name, ...). The path is folded through BLAKE2b into a 128-bit Philox key, so
any node in the tree can be regenerated on its own without replaying its
siblings.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

ALGORITHM_ID = "philox-blake2b-v1"


@dataclass(frozen=True)
class SeedRecord:
    """Provenance of a random stream.

    Parameters
    ----------
    seed : int
        Root seed (non-negative).
    path : tuple of str
        Derivation labels below the root.
    algorithm : str
        Generator family id; only ``ALGORITHM_ID`` is understood.
    """

    seed: int
    path: tuple = field(default_factory=tuple)
    algorithm: str = ALGORITHM_ID

    def __post_init__(self):
        if self.algorithm != ALGORITHM_ID:
            raise ValueError(f"unknown generator algorithm {self.algorithm!r}")
        if int(self.seed) < 0:
            raise ValueError("seed must be non-negative")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "path", tuple(str(p) for p in self.path))

    def child(self, *labels) -> "SeedRecord":
        return SeedRecord(self.seed, self.path + tuple(str(x) for x in labels), self.algorithm)

    def key(self) -> int:
        h = hashlib.blake2b(digest_size=16, key=b"lrperc-seed-tree")
        h.update(str(self.seed).encode())
        for label in self.path:
            h.update(b"\x1f")
            h.update(label.encode())
        return int.from_bytes(h.digest(), "little")

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.key()))

    def label(self) -> str:
        return "/".join((str(self.seed),) + self.path)


def as_seed(seed) -> SeedRecord:
    """Coerce an int or SeedRecord into a SeedRecord."""
    if isinstance(seed, SeedRecord):
        return seed
    return SeedRecord(int(seed))


def replica_seeds(root: SeedRecord, experiment: str, count: int):
    return [root.child(experiment, i) for i in range(count)]
