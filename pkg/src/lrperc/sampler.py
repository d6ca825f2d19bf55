"""Sampling open-bond configurations on finite boxes.

Bonds are drawn per offset class: for each offset ``k`` (up to sign) the
number of open pairs at that offset is ``Binomial(pairs(k), P_k)`` and the
open pairs are then placed uniformly without replacement among the
``pairs(k)`` candidates. This has the same law as independent per-pair
Bernoulli draws but costs O(#offsets + #bonds) instead of O(N^{2d}).
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .model import Kernel
from .seeding import SeedRecord, as_seed

MAX_EXPECTED_BONDS = 50_000_000
_MAGIC = b"LRPCFG01"


@dataclass(frozen=True)
class Box:
    """The cube ``origin + [0, N-1]^d`` with row-major site indexing."""

    d: int
    N: int
    origin: tuple = None

    def __post_init__(self):
        if self.d < 1 or self.N < 1:
            raise ValidationError("box needs d >= 1 and N >= 1")
        if self.N ** self.d > 2**62:
            raise ValidationError("box does not fit the site address space")
        origin = (0,) * self.d if self.origin is None else tuple(int(x) for x in self.origin)
        if len(origin) != self.d:
            raise ValidationError("origin has wrong dimension")
        object.__setattr__(self, "origin", origin)

    @property
    def n_sites(self) -> int:
        return self.N ** self.d

    @property
    def shape(self):
        return (self.N,) * self.d

    def coords(self, sites) -> np.ndarray:
        """Box-relative coordinates ``(m, d)`` of site indices."""
        return np.stack(np.unravel_index(np.asarray(sites, dtype=np.int64), self.shape), axis=-1)

    def index(self, coords) -> np.ndarray:
        c = np.asarray(coords, dtype=np.int64)
        return np.ravel_multi_index(tuple(np.moveaxis(c, -1, 0)), self.shape)

    def lattice_coords(self, sites) -> np.ndarray:
        return self.coords(sites) + np.asarray(self.origin, dtype=np.int64)

    def diameter(self) -> int:
        return self.d * (self.N - 1)


@dataclass(frozen=True)
class Configuration:
    """A sampled set of open bonds, sorted, each stored as ``(u, v)`` with u < v."""

    box: Box
    kernel: Kernel
    seed: SeedRecord
    bonds: np.ndarray = field(repr=False, compare=False)
    retention: float = 1.0
    truncation: int | None = None

    @property
    def n_bonds(self) -> int:
        return int(self.bonds.shape[0])

    def lengths(self) -> np.ndarray:
        """l1 length of every bond."""
        if self.n_bonds == 0:
            return np.zeros(0, dtype=np.int64)
        cu = self.box.coords(self.bonds[:, 0])
        cv = self.box.coords(self.bonds[:, 1])
        return np.abs(cu - cv).sum(axis=1)

    def bond_set(self) -> set:
        return {(int(u), int(v)) for u, v in self.bonds}

    def same_bonds(self, other: "Configuration") -> bool:
        return self.bonds.shape == other.bonds.shape and bool(np.all(self.bonds == other.bonds))


def offset_classes(d: int, N: int) -> np.ndarray:
    """All offsets with |k_i| < N whose first nonzero coordinate is positive."""
    axes = [np.arange(-(N - 1), N, dtype=np.int64)] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    nz = grid != 0
    first = np.argmax(nz, axis=1)
    lead = grid[np.arange(grid.shape[0]), first]
    return grid[lead > 0]


def pair_population(offsets: np.ndarray, N: int) -> np.ndarray:
    return np.prod(N - np.abs(offsets), axis=1)


def _sample_positions(rng, pops, counts):
    """Uniform distinct positions in ``[0, pops[c])`` for ``counts[c]`` draws per class."""
    cls = np.repeat(np.arange(len(counts)), counts)
    out = np.empty(cls.shape[0], dtype=np.int64)
    dense = counts * 2 > pops
    sparse_sel = ~dense[cls]
    # dense classes: exact permutation draw, class by class
    offset = np.concatenate(([0], np.cumsum(counts)))
    for c in np.nonzero(dense & (counts > 0))[0]:
        out[offset[c]:offset[c + 1]] = rng.choice(pops[c], size=counts[c], replace=False)
    idx = np.nonzero(sparse_sel)[0]
    if idx.size:
        sub_cls = cls[idx]
        pos = rng.integers(0, pops[sub_cls])
        while True:
            order = np.lexsort((pos, sub_cls))
            c_sorted, p_sorted = sub_cls[order], pos[order]
            dup = np.zeros(order.size, dtype=bool)
            dup[1:] = (c_sorted[1:] == c_sorted[:-1]) & (p_sorted[1:] == p_sorted[:-1])
            if not dup.any():
                break
            redo = order[dup]
            pos[redo] = rng.integers(0, pops[sub_cls[redo]])
        out[idx] = pos
    return cls, out


def _place(offsets, cls, pos, N, box):
    k = offsets[cls]
    radix = N - np.abs(k)
    lo = np.maximum(0, -k)
    d = offsets.shape[1]
    coords = np.empty_like(k)
    rem = pos.copy()
    for axis in range(d - 1, -1, -1):
        coords[:, axis] = rem % radix[:, axis] + lo[:, axis]
        rem //= radix[:, axis]
    u = box.index(coords)
    v = box.index(coords + k)
    return np.stack([u, v], axis=1)


def sort_bonds(bonds: np.ndarray) -> np.ndarray:
    if bonds.shape[0] == 0:
        return np.zeros((0, 2), dtype=np.int64)
    order = np.lexsort((bonds[:, 1], bonds[:, 0]))
    return np.ascontiguousarray(bonds[order], dtype=np.int64)


def sample_config(kernel: Kernel, box: Box, seed, max_expected: float = MAX_EXPECTED_BONDS) -> Configuration:
    """Draw an independent long-range configuration on ``box``.

    Raises
    ------
    ValidationError
        If the kernel and box disagree in dimension, or the expected number of
        bonds exceeds ``max_expected``.
    """
    seed = as_seed(seed)
    if kernel.d != box.d:
        raise ValidationError(f"kernel dimension {kernel.d} != box dimension {box.d}")
    if not kernel.summable:
        raise ValidationError("kernel is not summable")
    if box.N == 1:
        return Configuration(box, kernel, seed, np.zeros((0, 2), dtype=np.int64))
    offsets = offset_classes(box.d, box.N)
    pops = pair_population(offsets, box.N)
    probs = kernel.prob(offsets)
    expected = float(np.dot(pops, probs))
    if expected > max_expected:
        raise ValidationError(
            f"expected bond count {expected:.3g} exceeds limit {max_expected:.3g}; "
            f"use a smaller box (N={box.N}, d={box.d})")
    rng = seed.rng()
    counts = rng.binomial(pops, probs)
    live = np.nonzero(counts)[0]
    cls, pos = _sample_positions(rng, pops[live], counts[live])
    bonds = _place(offsets[live], cls, pos, box.N, box)
    return Configuration(box, kernel, seed, sort_bonds(bonds))


def thin_config(config: Configuration, eps: float, seed) -> Configuration:
    """Keep each open bond independently with probability ``1 - eps``."""
    if not 0.0 <= eps <= 1.0:
        raise ValidationError("thinning parameter must lie in [0, 1]")
    rng = as_seed(seed).rng()
    keep = rng.random(config.n_bonds) >= eps
    return replace(config, bonds=config.bonds[keep], retention=config.retention * (1.0 - eps))


def truncate_config(config: Configuration, L: int) -> Configuration:
    """Remove every bond of l1 length ``>= L``."""
    if L < 0:
        raise ValidationError("truncation length must be >= 0")
    keep = config.lengths() < L
    trunc = L if config.truncation is None else min(L, config.truncation)
    return replace(config, bonds=config.bonds[keep], truncation=trunc)


# -- serialization -----------------------------------------------------------

def _header(config: Configuration) -> dict:
    return {
        "d": config.box.d,
        "N": config.box.N,
        "origin": list(config.box.origin),
        "kernel": config.kernel.to_dict(),
        "kernel_hash": config.kernel.digest(),
        "seed": config.seed.seed,
        "seed_path": list(config.seed.path),
        "algorithm": config.seed.algorithm,
        "retention": config.retention,
        "truncation": config.truncation,
    }


def _from_header(head: dict, bonds: np.ndarray) -> Configuration:
    kernel = Kernel.from_dict(head["kernel"])
    if kernel.digest() != head["kernel_hash"]:
        raise ValidationError("kernel hash mismatch in configuration header")
    box = Box(head["d"], head["N"], tuple(head["origin"]))
    seed = SeedRecord(head["seed"], tuple(head["seed_path"]), head["algorithm"])
    return Configuration(box, kernel, seed, bonds, head["retention"], head["truncation"])


def config_to_csv(config: Configuration) -> str:
    buf = io.StringIO()
    buf.write("# lrperc-config v1 " + json.dumps(_header(config), sort_keys=True) + "\n")
    buf.write("u,v\n")
    for u, v in config.bonds:
        buf.write(f"{u},{v}\n")
    return buf.getvalue()


def config_from_csv(text: str) -> Configuration:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# lrperc-config v1 "):
        raise ValidationError("not an lrperc configuration file")
    head = json.loads(lines[0][len("# lrperc-config v1 "):])
    rows = [tuple(int(x) for x in ln.split(",")) for ln in lines[2:] if ln.strip()]
    bonds = np.asarray(rows, dtype=np.int64).reshape(-1, 2)
    return _from_header(head, bonds)


def config_to_bytes(config: Configuration) -> bytes:
    head = json.dumps(_header(config), sort_keys=True).encode()
    body = config.bonds.astype("<i8").tobytes()
    return _MAGIC + struct.pack("<II", len(head), config.n_bonds) + head + body


def config_from_bytes(blob: bytes) -> Configuration:
    if blob[:8] != _MAGIC:
        raise ValidationError("not an lrperc binary configuration")
    hlen, nb = struct.unpack("<II", blob[8:16])
    head = json.loads(blob[16:16 + hlen].decode())
    bonds = np.frombuffer(blob[16 + hlen:], dtype="<i8").reshape(nb, 2).astype(np.int64)
    return _from_header(head, bonds)
