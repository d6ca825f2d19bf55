"""Conductance-weighted random walks and escape-probability diagnostics."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .electro import ElectricalNetwork, effective_resistance
from .errors import ValidationError
from .seeding import as_seed


@dataclass(frozen=True)
class Trajectory:
    """A single walk: ``path[0]`` is the start, one entry per step after it."""

    start: int
    path: np.ndarray = field(repr=False)

    @property
    def steps(self) -> int:
        return int(self.path.shape[0]) - 1

    def visits(self, n: int) -> np.ndarray:
        return np.bincount(self.path, minlength=n)


@dataclass(frozen=True)
class WalkStats:
    """Outcome counts of repeated walks from ``start``.

    Each replica either escapes (hits the boundary before coming back),
    returns to ``start`` first, or runs out of its step budget.
    """

    start: int
    budget: int
    replicas: int
    returns: int
    escapes: int
    exhausted: int
    visits: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        assert self.returns + self.escapes + self.exhausted == self.replicas

    @property
    def estimate(self) -> float:
        return self.escapes / self.replicas if self.replicas else math.nan

    @property
    def stderr(self) -> float:
        if not self.replicas:
            return math.nan
        p = self.estimate
        return math.sqrt(p * (1 - p) / self.replicas)


def _tables(net: ElectricalNetwork, start: int):
    if not 0 <= start < net.n:
        raise ValidationError(f"start {start} is not a vertex")
    indptr, indices, cumw = net.adjacency()
    if indptr[start + 1] == indptr[start]:
        raise ValidationError(f"start {start} has no incident conductance")
    return indptr, indices, cumw


def random_walk(net: ElectricalNetwork, start: int, budget: int, seed, backend=None) -> Trajectory:
    """Walk ``budget`` steps, moving along an edge with probability C_e / C(v)."""
    indptr, indices, cumw = _tables(net, int(start))
    u = as_seed(seed).rng().random(int(budget))
    return Trajectory(int(start), _kernels.walk_path(indptr, indices, cumw, start, u, backend))


def escape_probability(net: ElectricalNetwork, start: int, boundary, replicas: int, seed,
                       budget: int = 10**6, chunk: int = 4096, backend=None,
                       track_visits: bool = False) -> WalkStats:
    """Monte Carlo estimate of P(hit ``boundary`` before returning to ``start``).

    Replica ``i`` draws its uniforms from ``seed.child("replica", i)``, so a
    replica's outcome does not depend on how many others are run.
    """
    start = int(start)
    indptr, indices, cumw = _tables(net, start)
    stop = np.zeros(net.n, dtype=np.uint8)
    b = np.asarray(boundary, dtype=np.int64).ravel()
    if b.size == 0:
        raise ValidationError("boundary set is empty")
    stop[b] = 1
    if stop[start]:
        raise ValidationError("start lies in the boundary set")
    seed = as_seed(seed)
    counts = [0, 0, 0]  # exhausted, escaped, returned
    visits = np.zeros(net.n, dtype=np.int64) if track_visits else None
    for i in range(replicas):
        rng = seed.child("replica", i).rng()
        pos, left, status = start, budget, 0
        while left > 0:
            u = rng.random(min(chunk, left))
            if track_visits:
                path = _kernels.walk_path(indptr, indices, cumw, pos, u, backend)
                hit = np.nonzero(stop[path[1:]].astype(bool) | (path[1:] == start))[0]
                k = int(hit[0]) + 1 if hit.size else u.size
                visits += np.bincount(path[1:k + 1], minlength=net.n)
                pos = int(path[k])
                status = 0 if not hit.size else (1 if stop[pos] else 2)
                steps = k
            else:
                status, steps, pos = _kernels.walk_until(indptr, indices, cumw, pos, start,
                                                         stop, u, backend)
            left -= steps
            if status:
                break
        counts[status] += 1
    return WalkStats(start, budget, replicas, counts[2], counts[1], counts[0], visits)


def escape_identity(net: ElectricalNetwork, start: int, boundary) -> float:
    """Exact escape probability ``C_eff(start, boundary) / C(start)``."""
    c0 = float(net.vertex_conductance()[int(start)])
    if c0 <= 0:
        raise ValidationError(f"start {start} has no incident conductance")
    R = effective_resistance(net, [int(start)], boundary)
    return 0.0 if math.isinf(R) else 1.0 / (R * c0)


@dataclass(frozen=True)
class ProfileRow:
    R: float
    resistance: float
    escape: float
    stderr: float
    replicas: int


def recurrence_profile(family, replicas: int = 0, seed=0, budgets=None, backend=None):
    """Resistance and escape estimates over a family of growing networks.

    Parameters
    ----------
    family : iterable of (R, net, start, boundary)
    replicas : int
        Walks per radius; 0 skips the walks and reports NaN escapes.
    budgets : sequence of int, optional
        Step budget per radius (default ``10 * R**2 + 1000``).
    """
    seed = as_seed(seed)
    rows = []
    for i, (R, net, start, boundary) in enumerate(family):
        res = effective_resistance(net, [start], boundary)
        if replicas:
            budget = budgets[i] if budgets is not None else int(10 * R * R + 1000)
            st = escape_probability(net, start, boundary, replicas, seed.child("R", R),
                                    budget=budget, backend=backend)
            rows.append(ProfileRow(R, res, st.estimate, st.stderr, replicas))
        else:
            rows.append(ProfileRow(R, res, math.nan, math.nan, 0))
    return rows


def profile_to_csv(rows) -> str:
    buf = io.StringIO()
    buf.write("R,resistance,escape,stderr,replicas\n")
    for r in rows:
        res = "inf" if math.isinf(r.resistance) else repr(float(r.resistance))
        buf.write(f"{r.R},{res},{r.escape!r},{r.stderr!r},{r.replicas}\n")
    return buf.getvalue()
