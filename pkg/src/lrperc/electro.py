"""Electrical networks: effective resistance, oracles, cutsets, projection and
bad-cluster regularization.

Conductances live on undirected edges; parallel edges are allowed and add.
Resistances between disconnected terminal sets are ``math.inf`` in memory and
``null`` (with ``"disconnected": true``) when serialized.
"""

from __future__ import annotations

import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import ConvergenceError, OracleInapplicable, ValidationError
from .sampler import Configuration


@dataclass(frozen=True)
class ElectricalNetwork:
    """Undirected weighted graph on vertices ``0..n-1``.

    Parameters
    ----------
    n : int
        Vertex count.
    edges : ndarray, shape (m, 2)
    cond : ndarray, shape (m,)
        Nonnegative finite conductances; 0 means the edge is absent.
    coords : ndarray, shape (n, d), optional
        Lattice embedding used for cutset geometry.
    """

    n: int
    edges: np.ndarray = field(repr=False)
    cond: np.ndarray = field(repr=False)
    coords: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        c = np.asarray(self.cond, dtype=np.float64).reshape(-1)
        if e.shape[0] != c.shape[0]:
            raise ValidationError("edges and conductances differ in length")
        if c.size and (not np.all(np.isfinite(c)) or np.any(c < 0)):
            raise ValidationError("conductances must be finite and >= 0")
        if e.size and (e.min() < 0 or e.max() >= self.n):
            raise ValidationError("edge endpoint outside the vertex range")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "cond", c)

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    def with_cond(self, cond) -> "ElectricalNetwork":
        return ElectricalNetwork(self.n, self.edges, cond, self.coords)

    def laplacian(self) -> sp.csr_matrix:
        live = (self.cond > 0) & (self.edges[:, 0] != self.edges[:, 1])
        u, v, c = self.edges[live, 0], self.edges[live, 1], self.cond[live]
        deg = np.bincount(u, c, self.n) + np.bincount(v, c, self.n)
        rows = np.concatenate([u, v, np.arange(self.n)])
        cols = np.concatenate([v, u, np.arange(self.n)])
        vals = np.concatenate([-c, -c, deg])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    def vertex_conductance(self) -> np.ndarray:
        """Total incident conductance per vertex (self-loops ignored)."""
        live = self.edges[:, 0] != self.edges[:, 1]
        u, v, c = self.edges[live, 0], self.edges[live, 1], self.cond[live]
        return np.bincount(u, c, self.n) + np.bincount(v, c, self.n)

    def adjacency(self):
        """CSR walk tables ``(indptr, indices, cumw)`` over positive-conductance edges.

        ``cumw`` holds running sums of conductance within each row, so the
        walk kernels pick neighbor ``j`` with probability ``C / C_total``.
        """
        live = (self.cond > 0) & (self.edges[:, 0] != self.edges[:, 1])
        u, v, c = self.edges[live, 0], self.edges[live, 1], self.cond[live]
        src = np.concatenate([u, v])
        dst = np.concatenate([v, u])
        w = np.concatenate([c, c])
        order = np.lexsort((dst, src))
        src, dst, w = src[order], dst[order], w[order]
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=self.n), out=indptr[1:])
        cum = np.cumsum(w)
        start = np.repeat(np.concatenate(([0.0], cum))[indptr[:-1]], np.diff(indptr))
        return indptr, dst.astype(np.int64), cum - start

    def components(self) -> np.ndarray:
        live = self.cond > 0
        return _kernels.label_components(self.n, self.edges[live])


# -- solver -------------------------------------------------------------------

@dataclass(frozen=True)
class ResistanceReport:
    resistance: float
    conductance: float
    iterations: int
    residual: float
    tol: float
    disconnected: bool

    def to_json(self) -> str:
        rec = {
            "resistance": None if self.disconnected else self.resistance,
            "conductance": self.conductance,
            "disconnected": self.disconnected,
            "iterations": self.iterations,
            "residual": self.residual,
            "tol": self.tol,
        }
        return json.dumps(rec, sort_keys=True)


def pcg(A, b, tol=1e-10, maxiter=None, x0=None):
    """Jacobi-preconditioned conjugate gradients for SPD ``A``.

    Stops when ``||b - A x|| <= tol * ||b||``.

    Returns
    -------
    x : ndarray
    info : dict
        ``iterations`` and final relative ``residual``.

    Raises
    ------
    ConvergenceError
        If the tolerance is not met within ``maxiter`` iterations.
    """
    n = b.shape[0]
    maxiter = max(1000, 20 * n) if maxiter is None else maxiter
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n), {"iterations": 0, "residual": 0.0}
    dinv = 1.0 / A.diagonal()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    res = np.linalg.norm(r) / bnorm
    it = 0
    while res > tol:
        if it >= maxiter:
            raise ConvergenceError(
                f"PCG stopped at relative residual {res:.3e} after {it} iterations",
                iterations=it, residual=res)
        Ap = A @ p
        pAp = p @ Ap
        if not (pAp > 0 and np.isfinite(pAp)):
            # breakdown (e.g. underflow near a tolerance below machine precision)
            raise ConvergenceError(
                f"PCG broke down at relative residual {res:.3e} after {it} iterations",
                iterations=it, residual=res)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        res = np.linalg.norm(r) / bnorm
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, {"iterations": it, "residual": float(res)}


def _as_index_set(vs, n, name):
    arr = np.unique(np.atleast_1d(np.asarray(vs, dtype=np.int64)))
    if arr.size == 0:
        raise ValidationError(f"{name} set is empty")
    if arr.min() < 0 or arr.max() >= n:
        raise ValidationError(f"{name} vertex outside the network")
    return arr


def solve_resistance(net: ElectricalNetwork, source, sink, tol: float = 1e-10,
                     maxiter=None) -> ResistanceReport:
    """Effective resistance between two vertex sets, with solver metadata.

    The potential is 1 on ``source`` and 0 on ``sink``; the harmonic extension
    is computed by PCG on the interior of the components that touch both sets,
    and the conductance is the Dirichlet energy ``sum C_e (dphi_e)^2``.
    """
    S = _as_index_set(source, net.n, "source")
    T = _as_index_set(sink, net.n, "sink")
    if np.intersect1d(S, T).size:
        raise ValidationError("source and sink sets overlap")
    comp = net.components()
    both = np.intersect1d(comp[S], comp[T])
    if both.size == 0:
        return ResistanceReport(math.inf, 0.0, 0, 0.0, tol, True)
    phi = np.zeros(net.n)
    phi[S] = 1.0
    active = np.isin(comp, both)
    fixed = np.zeros(net.n, dtype=bool)
    fixed[S] = fixed[T] = True
    interior = np.nonzero(active & ~fixed)[0]
    info = {"iterations": 0, "residual": 0.0}
    if interior.size:
        L = net.laplacian()
        L_ii = L[interior][:, interior]
        rhs = -(L[interior][:, S] @ np.ones(S.size))
        x, info = pcg(L_ii.tocsr(), np.asarray(rhs).ravel(), tol=tol, maxiter=maxiter)
        phi[interior] = x
    live = net.cond > 0
    u, v, c = net.edges[live, 0], net.edges[live, 1], net.cond[live]
    keep = active[u]
    dphi = phi[u[keep]] - phi[v[keep]]
    G = float(np.sum(c[keep] * dphi * dphi))
    return ResistanceReport(1.0 / G, G, info["iterations"], info["residual"], tol, False)


def effective_resistance(net: ElectricalNetwork, source, sink, tol: float = 1e-10,
                         maxiter=None) -> float:
    """Effective resistance; ``math.inf`` when no path joins the two sets."""
    return solve_resistance(net, source, sink, tol, maxiter).resistance


def dense_resistance(net: ElectricalNetwork, s: int, t: int) -> float:
    """Oracle: grounded-Laplacian dense solve, restricted to the s-t component."""
    comp = net.components()
    if comp[s] != comp[t]:
        return math.inf
    keep = np.nonzero(comp == comp[s])[0]
    L = net.laplacian().toarray()[np.ix_(keep, keep)]
    pos = {int(v): i for i, v in enumerate(keep)}
    mask = np.ones(keep.size, dtype=bool)
    mask[pos[t]] = False
    Lr = L[np.ix_(mask, mask)]
    e = np.zeros(keep.size)
    e[pos[s]] = 1.0
    x = np.linalg.solve(Lr, e[mask])
    return float(x[np.nonzero(mask)[0].tolist().index(pos[s])])


def series_parallel_oracle(net: ElectricalNetwork, s: int, t: int) -> Fraction | float:
    """Exact resistance between ``s`` and ``t`` by series/parallel reduction.

    Conductances are converted to exact rationals. Dangling non-terminal
    vertices are pruned, parallel edges merged and degree-2 non-terminal
    vertices contracted until a single ``s``-``t`` edge remains.

    Raises
    ------
    OracleInapplicable
        If the network is not series-parallel reducible between ``s`` and ``t``.
    """
    if s == t:
        raise ValidationError("terminals must differ")
    adj = defaultdict(dict)  # adj[u][v] = total conductance
    for (u, v), c in zip(net.edges.tolist(), net.cond.tolist()):
        if u == v or c == 0:
            continue
        c = Fraction(c)
        adj[u][v] = adj[u].get(v, 0) + c
        adj[v][u] = adj[v].get(u, 0) + c
    changed = True
    while changed:
        changed = False
        for x in list(adj):
            if x in (s, t) or x not in adj:
                continue
            nb = adj[x]
            if len(nb) == 0:
                del adj[x]
                changed = True
            elif len(nb) == 1:
                (y,) = nb
                del adj[y][x]
                del adj[x]
                changed = True
            elif len(nb) == 2:
                (y, cy), (z, cz) = nb.items()
                c = cy * cz / (cy + cz)
                del adj[y][x], adj[z][x], adj[x]
                adj[y][z] = adj[y].get(z, 0) + c
                adj[z][y] = adj[z].get(y, 0) + c
                changed = True
    rest = [x for x in adj if adj[x] or x in (s, t)]
    if t not in adj.get(s, {}):
        # terminals may be in different components; anything else left is irreducible
        if all(x in (s, t) for x in rest):
            return math.inf
        raise OracleInapplicable("network is not series-parallel reducible")
    if any(x not in (s, t) for x in rest):
        raise OracleInapplicable("network is not series-parallel reducible")
    return 1 / adj[s][t]


# -- cutsets --------------------------------------------------------------------

@dataclass(frozen=True)
class CutsetSeries:
    """Disjoint cuts ``Pi_1, Pi_2, ...`` as arrays of edge indices."""

    cuts: tuple

    def cut_conductance(self, net: ElectricalNetwork) -> np.ndarray:
        return np.array([net.cond[c].sum() for c in self.cuts])


def box_cuts(net: ElectricalNetwork, n_max: int) -> CutsetSeries:
    """Cuts ``Pi_n`` = edges with exactly one endpoint in ``[-n, n]^d`` (sup norm).

    An edge whose endpoints have sup norms ``a < b`` belongs to ``Pi_a``. Edges
    whose endpoint norms differ by more than one would sit in several cuts at
    once and are rejected.
    """
    if net.coords is None:
        raise ValidationError("box cuts need a lattice embedding")
    norm = np.abs(net.coords).max(axis=1)
    a = norm[net.edges[:, 0]]
    b = norm[net.edges[:, 1]]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    crossing = hi > lo
    if np.any(hi[crossing] - lo[crossing] > 1):
        raise ValidationError("an edge spans several cuts; project long bonds first")
    idx = np.nonzero(crossing & (lo >= 1) & (lo <= n_max))[0]
    order = np.argsort(lo[idx], kind="stable")
    idx = idx[order]
    bounds = np.searchsorted(lo[idx], np.arange(1, n_max + 2))
    return CutsetSeries(tuple(idx[bounds[i]:bounds[i + 1]] for i in range(n_max)))


def box_cut_conductances(net: ElectricalNetwork, n_max: int) -> np.ndarray:
    """``C_{Pi_n}`` for ``n = 1..n_max`` (vectorized form of ``box_cuts``)."""
    if net.coords is None:
        raise ValidationError("box cuts need a lattice embedding")
    norm = np.abs(net.coords).max(axis=1)
    a = norm[net.edges[:, 0]]
    b = norm[net.edges[:, 1]]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    crossing = hi > lo
    if np.any(hi[crossing] - lo[crossing] > 1):
        raise ValidationError("an edge spans several cuts; project long bonds first")
    return np.bincount(lo[crossing], net.cond[crossing], n_max + 1)[1:n_max + 1]


def nash_williams_partial_sums(net: ElectricalNetwork, cuts) -> np.ndarray:
    """Partial sums ``sum_{n<=m} 1/C_{Pi_n}``; a zero cut makes the tail infinite.

    ``cuts`` is a CutsetSeries or a precomputed array of cut conductances.
    """
    cc = cuts.cut_conductance(net) if isinstance(cuts, CutsetSeries) else np.asarray(cuts, float)
    with np.errstate(divide="ignore"):
        inv = np.where(cc > 0, 1.0 / np.where(cc > 0, cc, 1.0), np.inf)
    return np.cumsum(inv)


# -- lattice builders ---------------------------------------------------------

def grid_network(N: int, d: int = 2, cond=1.0, origin=None) -> ElectricalNetwork:
    """Nearest-neighbor network on ``origin + [0, N-1]^d`` (row-major sites).

    Edges along axis ``i`` come first in axis order, each block row-major.
    """
    shape = (N,) * d
    idx = np.arange(N**d).reshape(shape)
    blocks = []
    for ax in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[ax] = slice(0, N - 1)
        hi[ax] = slice(1, N)
        blocks.append(np.stack([idx[tuple(lo)].ravel(), idx[tuple(hi)].ravel()], axis=1))
    edges = np.concatenate(blocks) if blocks else np.zeros((0, 2), dtype=np.int64)
    coords = np.stack(np.unravel_index(np.arange(N**d), shape), axis=1)
    if origin is not None:
        coords = coords + np.asarray(origin, dtype=np.int64)
    c = np.broadcast_to(np.asarray(cond, dtype=float), (edges.shape[0],)).copy()
    return ElectricalNetwork(N**d, edges, c, coords)


def z2_network(R: int, cond=1.0) -> ElectricalNetwork:
    """Unit nearest-neighbor network on ``[-R, R]^2``."""
    return grid_network(2 * R + 1, 2, cond, origin=(-R, -R))


def frame_sites(coords: np.ndarray, center, R: int) -> np.ndarray:
    """Sites at sup-distance exactly ``R`` from ``center``."""
    dist = np.abs(coords - np.asarray(center)).max(axis=1)
    return np.nonzero(dist == R)[0]


def outside_sites(coords: np.ndarray, center, R: int) -> np.ndarray:
    """Sites at sup-distance at least ``R`` from ``center``."""
    dist = np.abs(coords - np.asarray(center)).max(axis=1)
    return np.nonzero(dist >= R)[0]


def config_network(config: Configuration, cond=1.0) -> ElectricalNetwork:
    """Open bonds of ``config`` as a network (conductance 1 per bond by default)."""
    c = np.broadcast_to(np.asarray(cond, dtype=float), (config.n_bonds,)).copy()
    coords = config.box.lattice_coords(np.arange(config.box.n_sites))
    return ElectricalNetwork(config.box.n_sites, config.bonds, c, coords)


def project_long_bonds(config: Configuration) -> ElectricalNetwork:
    """Replace every long bond of a d=2 configuration by an L-shaped path.

    For a bond between ``(x1, y1)`` (the endpoint with the smaller site index)
    and ``(x2, y2)`` of length ``l = |x1-x2| + |y1-y2| > 1``, the bond is erased
    and ``l`` is added to each nearest-neighbor edge along
    ``(x1, y1) -> (x1, y2) -> (x2, y2)``. Open nearest-neighbor bonds
    contribute conductance 1. The result lives on the full nearest-neighbor
    skeleton of the box, with conductance 0 on unused edges.
    """
    box = config.box
    if box.d != 2:
        raise ValidationError("projection is defined for d=2 configurations")
    N = box.N
    net = grid_network(N, 2, 0.0, origin=box.origin)
    # edge (x, y)-(x+1, y) sits at row-major position x*N + y of the first block
    # and (x, y)-(x, y+1) at x*(N-1) + y of the second block
    dx = np.zeros((N + 1, N))      # axis-0 edges, diff along x
    dy = np.zeros((N, N + 1))      # axis-1 edges, diff along y
    if config.n_bonds:
        p = box.coords(config.bonds[:, 0])
        q = box.coords(config.bonds[:, 1])
        x1, y1, x2, y2 = p[:, 0], p[:, 1], q[:, 0], q[:, 1]
        ln = np.abs(x1 - x2) + np.abs(y1 - y2)
        w = ln.astype(float)
        w[ln == 1] = 1.0  # open nearest-neighbor bonds keep conductance 1
        ylo, yhi = np.minimum(y1, y2), np.maximum(y1, y2)
        np.add.at(dy, (x1, ylo), w)
        np.add.at(dy, (x1, yhi), -w)
        xlo, xhi = np.minimum(x1, x2), np.maximum(x1, x2)
        np.add.at(dx, (xlo, y2), w)
        np.add.at(dx, (xhi, y2), -w)
    cx = np.cumsum(dx, axis=0)[:N - 1, :]
    cy = np.cumsum(dy, axis=1)[:, :N - 1]
    cond = np.concatenate([cx.ravel(), cy.ravel()])
    return net.with_cond(cond)


# -- regularization -----------------------------------------------------------

def regularize_bad_clusters(net: ElectricalNetwork, M: float) -> ElectricalNetwork:
    """Flatten clusters of over-threshold edges.

    Edges with ``C_e > M`` are bad. Bad edges are grouped into components
    through shared endpoints; ``U`` is such a component (as an edge set) and
    ``dU`` its boundary, the good edges with an endpoint on ``U``. A boundary
    edge touching two components uses the union of both. Every bad and
    boundary edge gets conductance ``2M (#U + #dU)^2``.
    """
    if not M > 0:
        raise ValidationError("threshold M must be > 0")
    bad = net.cond > M
    if not bad.any():
        return net.with_cond(net.cond.copy())
    u, v = net.edges[:, 0], net.edges[:, 1]
    root = _kernels.label_components(net.n, net.edges[bad])
    on_bad = np.zeros(net.n, dtype=bool)
    on_bad[u[bad]] = on_bad[v[bad]] = True
    comp_u = np.where(on_bad[u], root[u], -1)
    comp_v = np.where(on_bad[v], root[v], -1)
    n_bad = np.bincount(root[u[bad]], minlength=net.n)
    good = ~bad
    border = good & ((comp_u >= 0) | (comp_v >= 0))
    # boundary edge counts per component; edges joining two distinct components
    # are counted once for each and remembered for inclusion-exclusion
    a, b = comp_u[border], comp_v[border]
    n_bd = np.bincount(a[a >= 0], minlength=net.n) + np.bincount(b[(b >= 0) & (b != a)],
                                                                 minlength=net.n)
    shared = defaultdict(int)
    two = (a >= 0) & (b >= 0) & (a != b)
    for x, y in zip(np.minimum(a[two], b[two]).tolist(), np.maximum(a[two], b[two]).tolist()):
        shared[(x, y)] += 1
    new = net.cond.copy()
    cb = root[u[bad]]
    new[bad] = 2.0 * M * (n_bad[cb] + n_bd[cb]).astype(float) ** 2
    for i, x, y in zip(np.nonzero(border)[0].tolist(), a.tolist(), b.tolist()):
        comps = {c for c in (x, y) if c >= 0}
        nu = sum(int(n_bad[c]) for c in comps)
        nd = sum(int(n_bd[c]) for c in comps)
        if len(comps) == 2:
            nd -= shared[(min(comps), max(comps))]
        new[i] = 2.0 * M * float(nu + nd) ** 2
    return net.with_cond(new)


# -- Cauchy tails ---------------------------------------------------------------

@dataclass(frozen=True)
class TailReport:
    n: np.ndarray
    rate: np.ndarray
    envelope: np.ndarray
    sigma: np.ndarray
    within: np.ndarray
    below: np.ndarray
    checkpoints: np.ndarray
    mean_over_log: np.ndarray

    @property
    def all_within(self) -> bool:
        return bool(self.within.all())

    @property
    def all_below(self) -> bool:
        return bool(self.below.all())


def sample_cauchy_tail(chi: float, size, rng) -> np.ndarray:
    """Draws from the density ``chi / x^2`` on ``[chi, inf)`` by inversion."""
    return chi / (1.0 - rng.random(size))


def cauchy_tail_diagnostics(samples, chi: float, n_max: int = 100, n_checkpoints: int = 8):
    """Empirical ``P(X > n chi)`` against the ``1/n`` envelope.

    ``sigma`` is the binomial standard deviation under the envelope;
    ``within`` flags ``|rate - 1/n| <= 3 sigma`` and ``below`` flags
    ``rate <= 1/n + 3 sigma``. The running mean divided by ``log k`` is
    reported at log-spaced sample counts ``k``.
    """
    x = np.asarray(samples, dtype=float)
    if x.size and x.min() < 0:
        raise ValidationError("samples must be nonnegative")
    if not chi > 0:
        raise ValidationError("chi must be > 0")
    m = x.size
    n = np.arange(1, n_max + 1)
    xs = np.sort(x)
    over = m - np.searchsorted(xs, n * chi, side="right")
    rate = over / m if m else np.zeros(n_max)
    env = 1.0 / n
    sigma = np.sqrt(env * (1 - env) / max(m, 1))
    within = np.abs(rate - env) <= 3 * sigma + 1e-15
    below = rate <= env + 3 * sigma + 1e-15
    if m >= 2:
        ks = np.unique(np.geomspace(2, m, n_checkpoints).astype(np.int64))
        running = np.cumsum(x)[ks - 1] / ks
        mol = running / np.log(ks)
    else:
        ks = np.zeros(0, dtype=np.int64)
        mol = np.zeros(0)
    return TailReport(n, rate, env, sigma, within, below, ks, mol)


# -- serialization --------------------------------------------------------------

def network_to_csv(net: ElectricalNetwork) -> str:
    buf = io.StringIO()
    buf.write(f"# vertices={net.n}\n")
    buf.write("u,v,conductance\n")
    for (u, v), c in zip(net.edges.tolist(), net.cond.tolist()):
        buf.write(f"{u},{v},{c!r}\n")
    return buf.getvalue()


def network_from_csv(text: str) -> ElectricalNetwork:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# vertices="):
        raise ValidationError("not a network CSV")
    n = int(lines[0].split("=", 1)[1])
    rows = [ln.split(",") for ln in lines[2:] if ln.strip()]
    edges = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64).reshape(-1, 2)
    cond = np.array([float(r[2]) for r in rows], dtype=float)
    return ElectricalNetwork(n, edges, cond)
