"""Multi-stage cube renormalization on sampled data and its analytic bounds.

Stage 0 consists of the M-cubes of a :func:`clusters.cube_aliveness` run; a
stage-n vertex is a block of stage-(n-1) vertices. Two variants:

polynomial
    Blocks of side ``C_n = round(n^a)``. A stage-n vertex is alive when at
    least ``D_n C_n^d`` (``D_n = n^-b``) of its children are alive (A) and
    every two of its alive children are attached (B). The big cluster of an
    alive vertex is the union of the clusters of its alive children; two
    vertices are attached when an open bond joins their big clusters.

subgraph
    Blocks of side ``W_n = 2 (n+1)^2``. (A) needs ``theta_n W_n^d`` alive
    children. (B) at n = 1 needs every pair of alive children attached; at
    n >= 2 it needs every two living grandchildren that sit in distinct living
    children to be attached through their active parts. A living vertex
    makes its ``(n+1)^(2d)`` lowest-indexed living children active (so the
    block holding the origin is preferred whenever it lives); its active part
    is the union of its active children's active parts.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

POLYNOMIAL = "polynomial"
SUBGRAPH = "subgraph"


@dataclass(frozen=True)
class StageSchedule:
    """Block schedule for the hierarchy.

    Parameters
    ----------
    variant : {"polynomial", "subgraph"}
    L : int
        Depth.
    a, b : float
        Polynomial exponents (``C_n = n^a``, ``D_n = n^-b``).
    """

    variant: str
    L: int
    a: float | None = None
    b: float | None = None

    def __post_init__(self):
        if self.variant not in (POLYNOMIAL, SUBGRAPH):
            raise ValidationError(f"unknown schedule variant {self.variant!r}")
        if int(self.L) < 1:
            raise ValidationError("depth L must be >= 1")
        if self.variant == POLYNOMIAL and (self.a is None or self.b is None):
            raise ValidationError("polynomial schedule needs exponents a and b")

    def side(self, n: int) -> int:
        """Children per axis of a stage-n vertex."""
        if self.variant == POLYNOMIAL:
            return max(1, int(round(n ** self.a)))
        return 2 * (n + 1) ** 2

    def D(self, n: int) -> float:
        return float(n) ** (-self.b)

    def theta(self, n: int) -> float:
        return 1.0 - n ** -1.5 / 2.0

    def lam(self, n: int) -> float:
        """Target alive probability of the subgraph variant."""
        return 1.0 - (n + 1) ** -1.5 / 4.0

    def active_count(self, n: int, d: int) -> int:
        return (n + 1) ** (2 * d)

    def min_alive(self, n: int, d: int) -> float:
        if self.variant == POLYNOMIAL:
            return self.D(n) * self.side(n) ** d
        return self.theta(n) * self.side(n) ** d

    def cumulative_side(self, upto: int | None = None) -> int:
        out = 1
        for n in range(1, (self.L if upto is None else upto) + 1):
            out *= self.side(n)
        return out


def validate_schedule(sched: StageSchedule, d: int, s: float) -> StageSchedule:
    """Check ``a > b > 1`` and ``2b < a(2d - s)`` for polynomial schedules."""
    if sched.variant == SUBGRAPH:
        return sched
    a, b = sched.a, sched.b
    if not a > b:
        raise ValidationError(f"schedule needs a > b (a={a}, b={b})")
    if not b > 1:
        raise ValidationError(f"schedule needs b > 1 (b={b})")
    if not 2 * b < a * (2 * d - s):
        raise ValidationError(
            f"schedule needs 2b < a(2d-s): {2 * b:g} < {a * (2 * d - s):g} is false")
    return sched


@dataclass(frozen=True)
class StageOutcome:
    """Counts for one stage. ``alive_fraction`` estimates the probability that
    a stage-n vertex lives (one minus the failure probability)."""

    n: int
    vertices: int
    alive: int
    a_failures: int
    b_failures: int

    @property
    def alive_fraction(self) -> float:
        return self.alive / self.vertices if self.vertices else math.nan

    @property
    def dead(self) -> int:
        return self.vertices - self.alive

    def __add__(self, other: "StageOutcome") -> "StageOutcome":
        if other.n != self.n:
            raise ValueError("cannot merge outcomes of different stages")
        return StageOutcome(self.n, self.vertices + other.vertices, self.alive + other.alive,
                            self.a_failures + other.a_failures,
                            self.b_failures + other.b_failures)


def attachment_pairs(config, reports) -> np.ndarray:
    """Unique pairs ``(i, j)``, i < j, of cube indices whose semi-clusters share
    an open bond (dead cubes carry no semi-cluster)."""
    owner = np.full(config.box.n_sites, -1, dtype=np.int64)
    for i, r in enumerate(reports):
        if r.alive:
            owner[r.sites] = i
    if config.n_bonds == 0:
        return np.zeros((0, 2), dtype=np.int64)
    a = owner[config.bonds[:, 0]]
    b = owner[config.bonds[:, 1]]
    ok = (a >= 0) & (b >= 0) & (a != b)
    pairs = np.stack([np.minimum(a[ok], b[ok]), np.maximum(a[ok], b[ok])], axis=1)
    return np.unique(pairs, axis=0) if pairs.size else pairs.reshape(0, 2)


def _parents(shape, side):
    """Parent index (row-major in the coarse grid) of every cell of ``shape``."""
    d = len(shape)
    coarse = tuple(g // side for g in shape)
    idx = np.indices(shape).reshape(d, -1)
    return np.ravel_multi_index(tuple(idx // side), coarse), coarse


def _lift_pairs(pairs0, rep):
    """Map stage-0 pairs through ``rep`` and keep unique distinct pairs."""
    if pairs0.shape[0] == 0:
        return np.zeros((0, 2), dtype=np.int64)
    a = rep[pairs0[:, 0]]
    b = rep[pairs0[:, 1]]
    ok = (a >= 0) & (b >= 0) & (a != b)
    p = np.stack([np.minimum(a[ok], b[ok]), np.maximum(a[ok], b[ok])], axis=1)
    return np.unique(p, axis=0) if p.size else p.reshape(0, 2)


def run_hierarchy(alive0, pairs0, grid_shape, sched: StageSchedule, d: int | None = None):
    """Bottom-up aliveness for one replica.

    Parameters
    ----------
    alive0 : array of bool
        Stage-0 aliveness, row-major over ``grid_shape``.
    pairs0 : array (m, 2)
        Attached stage-0 pairs (see :func:`attachment_pairs`).
    grid_shape : tuple
        Stage-0 grid; every axis must be divisible by the cumulative side.
    sched : StageSchedule

    Returns
    -------
    list of StageOutcome
        Stages 1..L.
    """
    grid_shape = tuple(int(g) for g in grid_shape)
    d = len(grid_shape) if d is None else d
    need = sched.cumulative_side()
    if any(g % need for g in grid_shape):
        raise ValidationError(f"grid {grid_shape} is not divisible by the cumulative "
                              f"block side {need}")
    alive = np.asarray(alive0, dtype=bool).ravel()
    pairs0 = np.asarray(pairs0, dtype=np.int64).reshape(-1, 2)
    n0 = alive.size
    if sched.variant == POLYNOMIAL:
        return _run_polynomial(alive, pairs0, grid_shape, sched, d)
    return _run_subgraph(alive, pairs0, grid_shape, sched, d, n0)


def _run_polynomial(alive, pairs0, shape, sched, d):
    rep = np.where(alive, np.arange(alive.size), -1)  # stage-0 cube -> big-cluster owner
    out = []
    for n in range(1, sched.L + 1):
        par, coarse = _parents(shape, sched.side(n))
        n_par = int(np.prod(coarse))
        cnt = np.bincount(par[alive], minlength=n_par)
        a_fail = cnt < sched.min_alive(n, d)
        att = _lift_pairs(pairs0, rep)
        same = par[att[:, 0]] == par[att[:, 1]]
        got = np.bincount(par[att[same, 0]], minlength=n_par)
        b_fail = got < cnt * (cnt - 1) // 2
        alive_n = ~a_fail & ~b_fail
        out.append(StageOutcome(n, n_par, int(alive_n.sum()), int(a_fail.sum()),
                                int(b_fail.sum())))
        ok = rep >= 0
        new = np.full_like(rep, -1)
        new[ok] = np.where(alive_n[par[rep[ok]]], par[rep[ok]], -1)
        rep, alive, shape = new, alive_n, coarse
    return out


def _run_subgraph(alive, pairs0, shape, sched, d, n0):
    act = np.where(alive, np.arange(n0), -1)   # stage-0 cube -> active ancestor at stage n-1
    act_prev = None                             # same map one stage lower (stage n-2)
    prev_par = None                             # parent map of stage n-2 vertices
    prev_alive = None
    out = []
    for n in range(1, sched.L + 1):
        par, coarse = _parents(shape, sched.side(n))
        n_par = int(np.prod(coarse))
        cnt = np.bincount(par[alive], minlength=n_par)
        a_fail = cnt < sched.min_alive(n, d)
        if n == 1:
            att = _lift_pairs(pairs0, act)
            same = par[att[:, 0]] == par[att[:, 1]]
            got = np.bincount(par[att[same, 0]], minlength=n_par)
            b_fail = got < cnt * (cnt - 1) // 2
        else:
            # grandchildren g (stage n-2) -> child prev_par[g] -> parent par[prev_par[g]]
            g_alive = prev_alive
            child = prev_par
            child_alive = alive
            living_g = g_alive & child_alive[child]
            per_child = np.bincount(child[living_g], minlength=alive.size)
            per_child = np.where(child_alive, per_child, 0)
            tot = np.bincount(par, weights=per_child, minlength=n_par)
            sq = np.bincount(par, weights=per_child.astype(float) ** 2, minlength=n_par)
            need = np.rint((tot * tot - sq) / 2).astype(np.int64)
            att = _lift_pairs(pairs0, act_prev)
            ga, gb = att[:, 0], att[:, 1]
            ca, cb = child[ga], child[gb]
            ok = living_g[ga] & living_g[gb] & (ca != cb) & (par[ca] == par[cb])
            got = np.bincount(par[ca[ok]], minlength=n_par)
            b_fail = got < need
        alive_n = ~a_fail & ~b_fail
        out.append(StageOutcome(n, n_par, int(alive_n.sum()), int(a_fail.sum()),
                                int(b_fail.sum())))
        # active children: the lowest-indexed living children of each living parent
        k = sched.active_count(n, d)
        idx = np.nonzero(alive & alive_n[par])[0]
        rank = np.zeros(alive.size, dtype=np.int64)
        if idx.size:
            order = np.lexsort((idx, par[idx]))
            idx = idx[order]
            p = par[idx]
            rank[idx] = np.arange(idx.size) - np.searchsorted(p, p, side="left")
        is_active = np.zeros(alive.size, dtype=bool)
        is_active[idx] = rank[idx] < k
        okm = act >= 0
        new = np.full_like(act, -1)
        new[okm] = np.where(is_active[act[okm]], par[act[okm]], -1)
        act_prev, act = act, new
        prev_par, prev_alive = par, alive
        alive, shape = alive_n, coarse
    return out


def merge_outcomes(runs):
    """Sum per-stage outcomes over replicas."""
    runs = list(runs)
    if not runs:
        return []
    total = list(runs[0])
    for r in runs[1:]:
        total = [x + y for x, y in zip(total, r)]
    return total


# -- analytic bounds ------------------------------------------------------------

def log_psi_bound(n: int, beta: float, sched: StageSchedule, d: int, s: float) -> float:
    """``log`` of ``C_n^{2d} exp(-beta U_n^{-s} V_n^2)`` with ``C_n = n^a``,
    ``V_n = ((n-1)!)^{da-b}`` and ``U_n = d (n!)^a``."""
    if sched.variant != POLYNOMIAL:
        raise ValidationError("psi bound needs a polynomial schedule")
    if n < 1:
        raise ValidationError("n must be >= 1")
    a, b = sched.a, sched.b
    log_C = a * math.log(n)
    log_V = (d * a - b) * math.lgamma(n)
    log_U = math.log(d) + a * math.lgamma(n + 1)
    expo = -s * log_U + 2.0 * log_V
    return 2 * d * log_C - beta * math.exp(expo)


def psi_bound(n: int, beta: float, sched: StageSchedule, d: int, s: float) -> float:
    return math.exp(log_psi_bound(n, beta, sched, d, s))


def phi_bound(lambda_prev: float, n: int, sched: StageSchedule) -> float:
    """Markov bound on too few living children: ``lambda_{n-1} / (1 - D_n)``."""
    Dn = sched.D(n)
    return math.inf if Dn >= 1 else lambda_prev / (1.0 - Dn)


def log_subgraph_b_bound(n: int, d: int, beta: float, s: float) -> float:
    lf = math.lgamma(n + 2)  # log (n+1)!
    return (d * math.log(4) + 8 * d * math.log(n + 1)
            - beta * math.exp(-n * s * math.log(2) + (4 * d - 2 * s) * lf))


def subgraph_bounds(n: int, d: int, beta: float, s: float):
    """``(B-bound, large-deviation bound)`` of the subgraph schedule at stage n.

    B-bound: ``4^d (n+1)^{8d} exp(-beta 2^{-ns} ((n+1)!)^{4d-2s})``;
    large deviation: ``exp(-n^{2d-1.5} / 32)``.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    b = math.exp(log_subgraph_b_bound(n, d, beta, s))
    ld = math.exp(-(n ** (2 * d - 1.5)) / 32.0)
    return b, ld


def first_stage_below(log_bound, n_max: int = 200, n_min: int = 1):
    """Smallest ``n`` in ``[n_min, n_max]`` with ``bound(n) < e^{-n}``, or None."""
    for n in range(n_min, n_max + 1):
        if log_bound(n) < -n:
            return n
    return None


def decay_onset(log_bound, n_max: int = 200, n_min: int = 1):
    """Smallest ``n0`` with ``bound(n) < e^{-n}`` for every ``n`` in ``[n0, n_max]``,
    or None if the bound is not below ``e^{-n_max}``."""
    n0 = None
    for n in range(n_max, n_min - 1, -1):
        if log_bound(n) < -n:
            n0 = n
        else:
            break
    return n0


def stages_to_csv(outcomes, bounds=None) -> str:
    """Stage table; ``bounds`` optionally maps stage -> dict of extra columns."""
    cols = sorted({k for v in (bounds or {}).values() for k in v})
    buf = io.StringIO()
    buf.write(",".join(["n", "alive_fraction", "a_failures", "b_failures", "vertices"] + cols)
              + "\n")
    for o in outcomes:
        row = [str(o.n), repr(o.alive_fraction), str(o.a_failures), str(o.b_failures),
               str(o.vertices)]
        extra = (bounds or {}).get(o.n, {})
        row += [repr(float(extra[c])) if c in extra else "" for c in cols]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def planted_pairs(kernel, grid_shape, M: int, seed) -> np.ndarray:
    """Attached pairs for a fixture where every M-cube is alive with the whole
    cube as its semi-cluster.

    Cube pairs attach independently (their bond sets are disjoint) with the
    exact probability ``1 - prod(1 - P_k)`` over all site pairs of the two
    cubes; the product is grouped by offset, whose multiplicity for a cube
    displacement ``delta`` is ``prod_i (M - |t_i|)`` with ``k = delta M + t``.
    """
    from .seeding import as_seed

    grid_shape = tuple(int(g) for g in grid_shape)
    d = len(grid_shape)
    if kernel.d != d:
        raise ValidationError("kernel and grid dimensions differ")
    n = int(np.prod(grid_shape))
    cells = np.indices(grid_shape).reshape(d, -1).T
    t = np.stack(np.meshgrid(*([np.arange(-M + 1, M)] * d), indexing="ij"), -1).reshape(-1, d)
    mult = np.prod(M - np.abs(t), axis=1).astype(float)
    cache = {}
    i, j = np.triu_indices(n, 1)
    logq = np.empty(i.size)
    for m, (a, b) in enumerate(zip(i.tolist(), j.tolist())):
        delta = tuple(np.abs(cells[b] - cells[a]).tolist())
        if delta not in cache:
            off = np.asarray(delta) * M + t
            nz = np.abs(off).sum(axis=1) > 0
            with np.errstate(divide="ignore"):  # P_k may round to 1
                cache[delta] = float(np.sum(mult[nz] * np.log1p(-kernel.prob(off[nz]))))
        logq[m] = cache[delta]
    u = as_seed(seed).rng().random(i.size)
    hit = u < -np.expm1(logq)
    return np.stack([i[hit], j[hit]], axis=1).astype(np.int64)
