"""Renormalized graphs and the recursive unit flow built on them.

Vertices of the graph for a schedule ``C_1..C_L`` are addresses
``(j_L, ..., j_1)`` with ``1 <= j_n <= C_n``. Internally a vertex is the
mixed-radix integer with ``j_1`` least significant, so every l-group (all
vertices sharing ``j_L..j_{l+1}``) is the contiguous range
``[k S_l, (k+1) S_l)`` with ``S_l = C_1 ... C_l``, and its smallest member is
its base.

Required connections:

* level 1: every pair of vertices in a 1-group (complete graphs);
* level l >= 2: every pair of (l-2)-groups lying in different (l-1)-groups of
  the same l-group.

At level 2 the (l-2)-groups are single vertices, so a 2-group is complete as
well. A required pair is identified by ``(level, base_a, base_b)``.

The flow sends unit mass from vertex ``(1, ..., 1)``. Flooding an m-group
``K`` from ``x`` with mass ``a``:

* m = 1: ``x`` sends ``a/(C_1-1)`` to every other vertex of ``K``;
* m >= 2: flood the child ``K_a`` holding ``x``. Each (m-2)-group ``A`` of
  ``K_a`` that was flooded from a landing vertex ``q`` with mass ``mu`` then
  sends ``mu/(C_m-1)`` towards every sibling ``K_b``: the flood of ``A`` is
  run backwards to gather that share at ``q``, the share moves from ``q`` to
  the port of the pair (``A``, first (m-2)-group of ``K_b``), crosses the
  port edge, and the mass collected at each landing vertex floods ``K_b``.

Moving mass between two vertices of one group goes through the smallest
common group: to the port of the two relevant (r-2)-groups, across it, then on
to the target, recursively.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np

from .errors import RenormGraphError, ValidationError

CANONICAL = "canonical"
SAMPLED = "sampled"


def _prefix(C):
    S = [1]
    for c in C:
        S.append(S[-1] * int(c))
    return S


def _common_level(u, v, S):
    """Smallest l with ``u`` and ``v`` in the same l-group."""
    l = 0
    while u // S[l] != v // S[l]:
        l += 1
    return l


def count_required_pairs(C) -> int:
    """Number of required pairs (= canonical edge count) for schedule ``C``."""
    C = [int(c) for c in C]
    L = len(C)
    S = _prefix(C)
    total = (S[L] // S[1]) * (C[0] * (C[0] - 1) // 2)
    for l in range(2, L + 1):
        n_groups = S[L] // S[l]
        subs = C[l - 2]  # (l-2)-groups per (l-1)-group
        total += n_groups * (C[l - 1] * (C[l - 1] - 1) // 2) * subs * subs
    return total


@dataclass
class RenormalizedGraph:
    """Renormalized graph for schedule ``C`` truncated at ``L = len(C)``.

    In canonical mode the edge serving a required pair joins the two group
    bases. In sampled mode ``ports`` maps each required pair to the
    lexicographically smallest open bond serving it, expressed in vertex ids,
    and ``site_of`` maps vertices to lattice sites.
    """

    C: tuple
    mode: str = CANONICAL
    ports: dict | None = field(default=None, repr=False)
    site_of: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.C = tuple(int(c) for c in self.C)
        if not self.C or min(self.C) < 2:
            raise ValidationError("schedule entries must be integers >= 2")
        self.S = _prefix(self.C)

    @property
    def L(self) -> int:
        return len(self.C)

    @property
    def n_vertices(self) -> int:
        return self.S[-1]

    def address(self, v: int) -> tuple:
        """``(j_L, ..., j_1)``, 1-based."""
        out = []
        for c in self.C:
            out.append(v % c + 1)
            v //= c
        return tuple(reversed(out))

    def vertex(self, address) -> int:
        if len(address) != self.L:
            raise ValidationError("address length differs from L")
        v = 0
        for j, c in zip(address, reversed(self.C)):
            if not 1 <= j <= c:
                raise ValidationError(f"address entry {j} outside [1, {c}]")
            v = v * c + (j - 1)
        return v

    def dotted(self, v: int) -> str:
        return ".".join(map(str, self.address(v)))

    def base(self, v: int, l: int) -> int:
        return v - v % self.S[l]

    def pair_of(self, u: int, v: int):
        """The required pair an edge between ``u`` and ``v`` serves, or None."""
        if u == v:
            return None
        r = _common_level(u, v, self.S)
        if r == 1:
            return (1, min(u, v), max(u, v))
        a, b = self.base(u, r - 2), self.base(v, r - 2)
        return (r, min(a, b), max(a, b))

    def required_pairs(self):
        """Yield every required pair ``(level, base_a, base_b)`` with base_a < base_b."""
        S, C, n = self.S, self.C, self.n_vertices
        for g in range(0, n, S[1]):
            for a, b in combinations(range(g, g + S[1]), 2):
                yield (1, a, b)
        for l in range(2, self.L + 1):
            for g in range(0, n, S[l]):
                for ka, kb in combinations(range(C[l - 1]), 2):
                    A0 = g + ka * S[l - 1]
                    B0 = g + kb * S[l - 1]
                    for i in range(C[l - 2]):
                        for j in range(C[l - 2]):
                            yield (l, A0 + i * S[l - 2], B0 + j * S[l - 2])

    def n_required(self) -> int:
        return count_required_pairs(self.C)

    def port(self, level: int, a: int, b: int):
        """Edge ``(x, y)`` serving the pair of groups based at ``a`` and ``b``,
        with ``x`` on the ``a`` side."""
        if self.mode == CANONICAL:
            return a, b
        key = (level, min(a, b), max(a, b))
        try:
            x, y = self.ports[key]
        except KeyError:
            raise RenormGraphError(f"no edge for required pair {key}", level=level,
                                   pair=(min(a, b), max(a, b))) from None
        return (x, y) if key[1] == a else (y, x)

    def edges(self) -> np.ndarray:
        """All edges, as ``(u, v)`` with u < v. Canonical graphs grow fast; use
        ``n_required`` to size them first."""
        if self.mode == CANONICAL:
            out = np.array([(a, b) for _, a, b in self.required_pairs()], dtype=np.int64)
        else:
            out = np.array(sorted({(min(x, y), max(x, y)) for x, y in self.ports.values()}),
                           dtype=np.int64)
        return out.reshape(-1, 2)


def build_renorm_graph(C, mode: str = CANONICAL, config=None, site_of=None) -> RenormalizedGraph:
    """Build the renormalized graph for schedule ``C``.

    Parameters
    ----------
    C : sequence of int
        ``C_1..C_L``.
    mode : {"canonical", "sampled"}
    config : Configuration, optional
        Required in sampled mode; its open bonds provide the edges.
    site_of : array of int, optional
        Vertex -> site map for sampled mode (default: vertex v is site v).

    Raises
    ------
    RenormGraphError
        Sampled mode only: some required pair has no serving bond. The error
        names the level and the two group bases.
    """
    if mode == CANONICAL:
        return RenormalizedGraph(tuple(C))
    if mode != SAMPLED:
        raise ValidationError(f"unknown mode {mode!r}")
    if config is None:
        raise ValidationError("sampled mode needs a configuration")
    g = RenormalizedGraph(tuple(C), SAMPLED)
    n = g.n_vertices
    site_of = np.arange(n, dtype=np.int64) if site_of is None else np.asarray(site_of, np.int64)
    if site_of.shape != (n,) or np.unique(site_of).size != n:
        raise ValidationError("site map must be injective with one site per vertex")
    if site_of.max() >= config.box.n_sites or site_of.min() < 0:
        raise ValidationError("site map leaves the box")
    vert = np.full(config.box.n_sites, -1, dtype=np.int64)
    vert[site_of] = np.arange(n)
    ports = {}
    for su, sv in config.bonds.tolist():
        u, v = int(vert[su]), int(vert[sv])
        if u < 0 or v < 0:
            continue
        key = g.pair_of(u, v)
        cand = (min(u, v), max(u, v))
        if key not in ports or cand < ports[key]:
            ports[key] = cand
    for key in g.required_pairs():
        if key not in ports:
            raise RenormGraphError(
                f"level {key[0]} pair of groups based at vertices "
                f"{g.dotted(key[1])} and {g.dotted(key[2])} has no open bond",
                level=key[0], pair=(key[1], key[2]))
    g.ports = ports
    g.site_of = site_of
    return g


# -- flows ------------------------------------------------------------------------

@dataclass
class Flow:
    """Unit flow stored on edges ``(u, v)`` (u < v) as ``num / den``.

    A positive value means mass moves from ``u`` to ``v``.
    """

    graph: RenormalizedGraph = field(repr=False)
    edges: np.ndarray = field(repr=False)
    num: np.ndarray = field(repr=False)
    den: int
    source: int
    sinks: dict = field(repr=False)

    @property
    def L(self) -> int:
        return self.graph.L

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    def values(self) -> np.ndarray:
        return np.array([int(x) for x in self.num], dtype=float) / self.den \
            if self.num.dtype == object else self.num / self.den

    def value(self, u: int, v: int) -> Fraction:
        a, b = (u, v) if u < v else (v, u)
        pos = np.nonzero((self.edges[:, 0] == a) & (self.edges[:, 1] == b))[0]
        val = Fraction(int(self.num[pos[0]]), self.den) if pos.size else Fraction(0)
        return val if u < v else -val

    def as_dict(self) -> dict:
        return {(int(u), int(v)): Fraction(int(x), self.den)
                for (u, v), x in zip(self.edges.tolist(), self.num.tolist())}

    def net_outflow(self) -> dict:
        """Exact net outflow (as numerators over ``den``) of every touched vertex."""
        out: dict = {}
        for (u, v), x in zip(self.edges.tolist(), self.num.tolist()):
            out[u] = out.get(u, 0) + int(x)
            out[v] = out.get(v, 0) - int(x)
        return out

    def residuals(self) -> dict:
        """Exact conservation defect at every vertex other than the source and
        the sinks (nonzero entries only)."""
        out = self.net_outflow()
        out[self.source] = out.get(self.source, 0) - self.den
        for v, m in self.sinks.items():
            out[v] = out.get(v, 0) + int(m * self.den)
        return {v: Fraction(x, self.den) for v, x in out.items() if x != 0}

    def to_csv(self) -> str:
        g = self.graph
        buf = io.StringIO()
        buf.write("u,v,flow,flow_exact\n")
        for (u, v), x in zip(self.edges.tolist(), self.num.tolist()):
            fr = Fraction(int(x), self.den)
            buf.write(f"{g.dotted(u)},{g.dotted(v)},{float(fr)!r},{fr}\n")
        return buf.getvalue()


def _finish(graph, acc: dict, den: int, sinks: dict) -> Flow:
    items = sorted((k, v) for k, v in acc.items() if v != 0)
    edges = np.array([k for k, _ in items], dtype=np.int64).reshape(-1, 2)
    big = den > 2**40
    num = np.array([v for _, v in items], dtype=object if big else np.int64)
    return Flow(graph, edges, num, den, 0, sinks)


class _FlowBuilder:
    """Exact flow construction for any graph, through its ``port`` lookup."""

    def __init__(self, g: RenormalizedGraph):
        self.g = g
        self.f: dict = {}

    def push(self, x, y, amt):
        if x == y or amt == 0:
            return
        if x < y:
            self.f[(x, y)] = self.f.get((x, y), 0) + amt
        else:
            self.f[(y, x)] = self.f.get((y, x), 0) - amt

    def transfer(self, e, p, amt):
        if e == p:
            return
        g = self.g
        r = _common_level(e, p, g.S)
        if r == 1:
            x, y = g.port(1, e, p)
        else:
            x, y = g.port(r, g.base(e, r - 2), g.base(p, r - 2))
        self.transfer(e, x, amt)
        self.push(x, y, amt)
        self.transfer(y, p, amt)

    def flood(self, m, x, amt):
        """Spread ``amt`` from ``x`` over its m-group.

        Returns ``(parts, sinks)``: ``parts`` lists ``(q, mass)`` for every
        (m-1)-child flooded from landing vertex ``q``; ``sinks`` is the final
        vertex distribution.
        """
        g = self.g
        if m == 0:
            return [], {x: amt}
        if m == 1:
            share = amt / (g.C[0] - 1)
            b = g.base(x, 1)
            parts = []
            for v in range(b, b + g.S[1]):
                if v != x:
                    self.push(x, v, share)
                    parts.append((v, share))
            return parts, dict(parts)
        S1 = g.S[m - 1]
        K = g.base(x, m)
        a = (x - K) // S1
        inner, _ = self.flood(m - 1, x, amt)
        k = g.C[m - 1] - 1
        parts, sinks = [], {}
        for b in range(g.C[m - 1]):
            if b == a:
                continue
            Kb = K + b * S1
            landing = {}
            for q, mu in inner:
                share = mu / k
                # gather: run the flood of q's (m-2)-group backwards, then walk to the port
                self.flood(m - 2, q, -share)
                p, y = g.port(m, g.base(q, m - 2), Kb)
                self.transfer(q, p, share)
                self.push(p, y, share)
                landing[y] = landing.get(y, 0) + share
            for y, mass in sorted(landing.items()):
                parts.append((y, mass))
                for v, w in self.flood(m - 1, y, mass)[1].items():
                    sinks[v] = sinks.get(v, 0) + w
        return parts, sinks


def _flow_general(g: RenormalizedGraph) -> Flow:
    b = _FlowBuilder(g)
    _, sinks = b.flood(g.L, 0, Fraction(1))
    den = 1
    for x in list(b.f.values()) + list(sinks.values()):
        den = den * x.denominator // math.gcd(den, x.denominator)
    acc = {k: int(v * den) for k, v in b.f.items()}
    return _finish(g, acc, den, sinks)


def _merge(us, vs, xs, n):
    """Sum values on identical oriented edges; returns sorted (u<v) arrays."""
    us = np.concatenate(us)
    vs = np.concatenate(vs)
    xs = np.concatenate(xs)
    flip = us > vs
    lo = np.where(flip, vs, us)
    hi = np.where(flip, us, vs)
    xs = np.where(flip, -xs, xs)
    key = lo * n + hi
    uniq, inv = np.unique(key, return_inverse=True)
    tot = np.zeros(uniq.size, dtype=xs.dtype)
    np.add.at(tot, inv, xs)
    keep = tot != 0
    return uniq[keep] // n, uniq[keep] % n, tot[keep]


def _flow_canonical(g: RenormalizedGraph) -> Flow:
    """Template recursion for canonical graphs.

    With canonical ports every child is entered at its base, so gathering a
    child's mass back to its base exactly cancels the flood of that child.
    What is left of the m-level flood from a base is a skeleton ``R_m`` (the
    (m-1)-level skeleton plus the port edges out of the first child) and the
    floods of the siblings:

        T_m = R_m + (1/(C_m-1)) * sum_{b>=2} T_{m-1}[K_b]
        R_m = R_{m-1}[K_1] + ports_m

    All values are integers over ``den = prod (C_i - 1)``.
    """
    C, S = g.C, g.S
    Q = [1]
    for c in C:
        Q.append(Q[-1] * (c - 1))
    dt = object if Q[-1] > 2**40 else np.int64
    c1 = C[0] - 1
    tu = np.zeros(c1, dtype=np.int64)
    tv = np.arange(1, C[0], dtype=np.int64)
    tx = np.ones(c1, dtype=dt)
    ru, rv, rx = tu, tv, tx
    landing = tv.copy()  # bases of the (m-2)-children reached in the first child
    dv = tv.copy()
    dn = np.ones(c1, dtype=dt)
    for m in range(2, g.L + 1):
        k = C[m - 1] - 1
        S1 = S[m - 1]
        nl = landing.size
        pu = np.tile(landing, k)
        pv = np.repeat(np.arange(1, C[m - 1], dtype=np.int64) * S1, nl)
        px = np.full(pu.size, Q[m - 2], dtype=dt)
        ru, rv, rx = _merge([ru, pu], [rv, pv], [rx * k, px], S[m])
        us, vs, xs = [ru], [rv], [rx]
        for b in range(1, C[m - 1]):
            us.append(tu + b * S1)
            vs.append(tv + b * S1)
            xs.append(tx)
        tu, tv, tx = _merge(us, vs, xs, S[m])
        landing = np.arange(1, C[m - 1], dtype=np.int64) * S1
        dv = np.concatenate([dv + b * S1 for b in range(1, C[m - 1])])
        dn = np.concatenate([dn] * k)
    den = Q[-1]
    sinks = {int(v): Fraction(int(x), den) for v, x in zip(dv.tolist(), dn.tolist())}
    return Flow(g, np.stack([tu, tv], axis=1), tx, den, 0, sinks)


def build_flow(graph: RenormalizedGraph, method: str = "auto") -> Flow:
    """Unit flow from vertex ``(1, ..., 1)`` through every level of ``graph``.

    ``method="fast"`` uses translated templates (canonical graphs only),
    ``"exact"`` runs the generic recursion with rational arithmetic; ``"auto"``
    picks the template path for canonical graphs.
    """
    if method == "auto":
        method = "fast" if graph.mode == CANONICAL else "exact"
    if method == "fast":
        if graph.mode != CANONICAL:
            raise ValidationError("the template path needs a canonical graph")
        return _flow_canonical(graph)
    if method == "exact":
        return _flow_general(graph)
    raise ValidationError(f"unknown flow method {method!r}")


def q_energy(flow: Flow, q: float) -> float:
    """``sum_e |f(e)|^q`` over undirected edges."""
    if not q > 0:
        raise ValidationError("q must be positive")
    vals = np.abs(flow.values())
    return float(np.sum(vals ** q))


def vertex_energy(flow: Flow) -> float:
    """``sum_v f(v)^2`` with ``f(v) = (1/2) sum_{e at v} |f(e)|``."""
    vals = np.abs(flow.values())
    n = flow.graph.n_vertices
    fv = 0.5 * (np.bincount(flow.edges[:, 0], vals, n) + np.bincount(flow.edges[:, 1], vals, n))
    return float(np.sum(fv * fv))


def energy_recursion_bound(C, L: int, E1: float | None = None) -> float:
    """Iterate ``E_n <= (1 + 1/C_{n-1}) E_{n-1} + 1/(C_n C_{n-1})`` up to ``L``.

    ``E_1`` defaults to the stage-1 flow energy ``1/(C_1 - 1)``.
    """
    C = [int(c) for c in C]
    if L < 1 or L > len(C):
        raise ValidationError("L must lie in [1, len(C)]")
    E = 1.0 / (C[0] - 1) if E1 is None else float(E1)
    for n in range(2, L + 1):
        E = (1.0 + 1.0 / C[n - 2]) * E + 1.0 / (C[n - 1] * C[n - 2])
    return E


def schedule(kind: str, L: int, d: int = 1) -> tuple:
    """Named schedules: ``"subgraph"`` gives ``(n+1)^(2d)``, ``"power2"`` gives ``2^n``."""
    if kind == "subgraph":
        return tuple((n + 1) ** (2 * d) for n in range(1, L + 1))
    if kind == "power2":
        return tuple(2**n for n in range(1, L + 1))
    raise ValidationError(f"unknown schedule {kind!r}")
