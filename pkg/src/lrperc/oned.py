"""One-dimensional recurrence tools: the continuum bond model, interval growth
and exiting-bond statistics.

The continuum model is the planar Poisson process with density
``beta (x - y)^-2``. Its mass on a rectangle ``[a, b] x [c, d]`` with
``b <= c`` is ``beta log((d-b)(c-a) / ((c-b)(d-a)))``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError
from .model import Kernel
from .sampler import Configuration
from .seeding import as_seed


def rect_intensity(beta: float, a: float, b: float, c: float, d: float) -> float:
    """Mass of ``beta (x-y)^-2`` on ``[a, b] x [c, d]``.

    Requires ``a <= b <= c <= d``; returns 0 for an empty rectangle and inf
    when the rectangle touches the diagonal (``b == c`` with both sides
    nondegenerate).
    """
    if beta < 0:
        raise DomainError("beta must be >= 0")
    if not (a <= b and c <= d):
        raise DomainError("rectangle sides must satisfy a <= b and c <= d")
    if b > c:
        raise DomainError("intervals overlap; the density is not integrable on the diagonal")
    if a == b or c == d or beta == 0:
        return 0.0
    if b == c:
        return math.inf
    return beta * math.log((d - b) * (c - a) / ((c - b) * (d - a)))


def cell_intensity(beta: float, k) -> np.ndarray:
    """Mass of the unit cell ``[i, i+1] x [i+k, i+k+1]`` (``k >= 2``)."""
    k = np.asarray(k, dtype=float)
    return beta * np.log(k * k / (k * k - 1.0))


def _invert_x(u, a, b, c, d):
    # marginal CDF of x on [a, b]: G(x)/G(b), G(x) = log((c-a)(d-x) / ((c-x)(d-a)))
    Gb = np.log((c - a) * (d - b) / ((c - b) * (d - a)))
    r = np.exp(u * Gb)
    return (r * (d - a) * c - (c - a) * d) / (r * (d - a) - (c - a))


def _invert_y(v, x, c, d):
    # conditional CDF of y on [c, d] given x, density proportional to (y-x)^-2
    h = 1.0 / (c - x) - v * (1.0 / (c - x) - 1.0 / (d - x))
    return x + 1.0 / h


@dataclass(frozen=True)
class ContinuumSample:
    """Points ``(x, y)``, ``x < y``, of the continuum model in ``window``.

    Only the off-diagonal unit cells ``[i, i+1] x [j, j+1]`` with
    ``j - i >= 2`` are sampled; the diagonal band has infinite mass and is
    left to the discrete model.
    """

    beta: float
    window: tuple
    points: np.ndarray = field(repr=False)
    seed: object = None

    def count_in(self, a, b, c, d) -> int:
        x, y = self.points[:, 0], self.points[:, 1]
        return int(np.count_nonzero((x >= a) & (x < b) & (y >= c) & (y < d)))


def sample_continuum(beta: float, window, seed) -> ContinuumSample:
    """Exact sample of the continuum model on the integer window ``[lo, hi]``.

    Cells are grouped by their diagonal offset ``k``; each class gets a
    Poisson count with mean ``(#cells) * cell_intensity(k)``, points are
    assigned to cells uniformly and placed inside cells by inversion.
    """
    seed = as_seed(seed)
    lo, hi = int(window[0]), int(window[1])
    if hi - lo < 3:
        raise ValidationError("window must span at least 3 unit cells")
    if beta < 0:
        raise DomainError("beta must be >= 0")
    rng = seed.rng()
    n = hi - lo
    ks = np.arange(2, n, dtype=np.int64)
    if beta == 0 or ks.size == 0:
        return ContinuumSample(beta, (lo, hi), np.zeros((0, 2)), seed)
    ncell = n - ks
    counts = rng.poisson(ncell * cell_intensity(beta, ks))
    k = np.repeat(ks, counts)
    i = lo + (rng.random(k.size) * (n - k)).astype(np.int64)
    i = np.minimum(i, lo + n - k - 1)
    a = i.astype(float)
    c = a + k
    x = _invert_x(rng.random(k.size), a, a + 1, c, c + 1)
    y = _invert_y(rng.random(k.size), x, c, c + 1)
    pts = np.stack([x, y], axis=1)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    return ContinuumSample(beta, (lo, hi), pts[order], seed)


def dominating_beta(kernel: Kernel, k_max: int = 10**6, criterion: str = "log") -> float:
    """Smallest ``beta`` whose continuum cells dominate the discrete bonds.

    With ``criterion="log"`` the cell mass must exceed ``-log(1 - P_k)``, so
    that ``P(cell hit) >= P_k``; with ``"linear"`` it must exceed ``P_k``.
    Offsets ``2 <= k <= k_max`` are scanned (``k = 1`` cells touch the diagonal).
    """
    if kernel.d != 1:
        raise ValidationError("dominating beta is defined for d=1 kernels")
    ks = np.arange(2, k_max + 1)
    p = kernel.prob(ks[:, None])
    need = -np.log1p(-p) if criterion == "log" else p
    return float(np.max(need / cell_intensity(1.0, ks)))


# -- interval growth ----------------------------------------------------------

@dataclass
class IntervalTrace:
    """Nested intervals ``I_0 ⊆ I_1 ⊆ ...`` with ratios and exiting-bond counts.

    ``lengths`` counts sites for the discrete variant and measures length
    for the continuum variant.
    """

    intervals: list
    lengths: list
    ratios: list
    exiting: list
    truncated: bool = False

    @property
    def steps(self) -> int:
        return len(self.ratios)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("step,length,ratio,exiting\n")
        for n in range(len(self.intervals)):
            r = repr(self.ratios[n]) if n < len(self.ratios) else ""
            e = str(self.exiting[n]) if n < len(self.exiting) else ""
            buf.write(f"{n},{self.lengths[n]!r},{r},{e}\n")
        return buf.getvalue()


def _neighbor_extent(config: Configuration):
    n = config.box.n_sites
    lo = np.arange(n, dtype=np.int64)
    hi = lo.copy()
    if config.n_bonds:
        u, v = config.bonds[:, 0], config.bonds[:, 1]
        np.minimum.at(lo, v, u)
        np.maximum.at(hi, u, v)
    return lo, hi


def exiting_bond_stats(config: Configuration, interval) -> int:
    """Number of open bonds with exactly one endpoint in ``[l, r]`` (box sites)."""
    l, r = int(interval[0]), int(interval[1])
    if config.n_bonds == 0:
        return 0
    inu = (config.bonds[:, 0] >= l) & (config.bonds[:, 0] <= r)
    inv = (config.bonds[:, 1] >= l) & (config.bonds[:, 1] <= r)
    return int(np.count_nonzero(inu ^ inv))


def interval_growth(config: Configuration, I0, steps: int) -> IntervalTrace:
    """Discrete growth: ``I_{n+1}`` is the smallest interval holding every site
    bonded to ``I_n``. Stops with ``truncated=True`` when an interval reaches
    the box edge, since bonds beyond the box are not sampled."""
    if config.box.d != 1:
        raise ValidationError("interval growth needs a d=1 configuration")
    N = config.box.N
    l, r = int(I0[0]), int(I0[1])
    if not 0 <= l <= r < N:
        raise ValidationError("I_0 must lie inside the box")
    lo_nb, hi_nb = _neighbor_extent(config)
    trace = IntervalTrace([(l, r)], [r - l + 1], [], [])
    cur_lo = int(lo_nb[l:r + 1].min())
    cur_hi = int(hi_nb[l:r + 1].max())
    for _ in range(steps):
        trace.exiting.append(exiting_bond_stats(config, (l, r)))
        nl, nr = cur_lo, cur_hi
        if nl < l:
            cur_lo = min(cur_lo, int(lo_nb[nl:l].min()))
            cur_hi = max(cur_hi, int(hi_nb[nl:l].max()))
        if nr > r:
            cur_lo = min(cur_lo, int(lo_nb[r + 1:nr + 1].min()))
            cur_hi = max(cur_hi, int(hi_nb[r + 1:nr + 1].max()))
        trace.ratios.append((nr - nl + 1) / (r - l + 1))
        l, r = nl, nr
        trace.intervals.append((l, r))
        trace.lengths.append(r - l + 1)
        if l == 0 or r == N - 1:
            trace.truncated = True
            break
    return trace


def continuum_growth(beta: float, I0, steps: int, seed, window=None) -> IntervalTrace:
    """Continuum growth with an independent copy of the model at every step.

    For ``I = [p, q]`` the farthest point to the right has
    ``P(max <= t) = ((t-q)/(t-p))^beta``; it is drawn by inversion,
    ``t = (q - w p) / (1 - w)`` with ``w = U^(1/beta)``, and symmetrically on
    the left. ``exiting`` is not defined here and left empty.
    """
    if not beta > 0:
        raise DomainError("beta must be > 0")
    p, q = float(I0[0]), float(I0[1])
    if not q > p:
        raise ValidationError("I_0 must have positive length")
    rng = as_seed(seed).rng()
    lo, hi = (-math.inf, math.inf) if window is None else (float(window[0]), float(window[1]))
    trace = IntervalTrace([(p, q)], [q - p], [], [])
    for _ in range(steps):
        w = rng.random(2) ** (1.0 / beta)
        right = (q - w[0] * p) / (1.0 - w[0])
        left = (p - w[1] * q) / (1.0 - w[1])
        trace.ratios.append((right - left) / (q - p))
        p, q = left, right
        trace.intervals.append((p, q))
        trace.lengths.append(q - p)
        if p <= lo or q >= hi:
            trace.truncated = True
            break
    return trace


def exiting_count_samples(kernel: Kernel, N: int, replicas: int, seed, span: int = 64):
    """Open bonds leaving an interval of ``N`` sites in Z, sampled by length class.

    Bonds of length ``k`` leaving the interval come in ``2 min(k, N)`` pairs.
    Lengths up to ``span * N`` are drawn exactly; the rest form one Poisson
    count with the matching mean.

    Returns
    -------
    counts : ndarray
        Exiting-bond count per replica.
    reach : ndarray
        Largest distance beyond the interval reached by an exiting bond (0 if none).
    """
    if kernel.d != 1:
        raise ValidationError("exiting counts are defined for d=1 kernels")
    rng = as_seed(seed).rng()
    K = span * N
    ks = np.arange(1, K + 1)
    m = 2 * np.minimum(ks, N)
    p = kernel.prob(ks[:, None])
    tail_k = np.arange(K + 1, 100 * K + 1)
    tail = float(np.sum(2 * N * kernel.prob(tail_k[:, None])))
    counts = np.zeros(replicas, dtype=np.int64)
    reach = np.zeros(replicas, dtype=np.int64)
    for i in range(replicas):
        c = rng.binomial(m, p)
        extra = rng.poisson(tail)
        counts[i] = int(c.sum()) + extra
        best = 0
        for j in np.nonzero(c)[0]:
            k = int(ks[j])
            mk = min(k, N)
            idx = rng.choice(2 * mk, size=int(c[j]), replace=False)
            best = max(best, k - int((idx % mk).min()))
        if extra:
            best = max(best, K + 1)
        reach[i] = best
    return counts, reach


def reach_probability(kernel: Kernel, N: int, dist: int, k_max: int | None = None) -> float:
    """Exact probability that some site farther than ``dist`` from an interval of
    ``N`` sites is bonded to it (lengths up to ``k_max``, default ``1000 (N + dist)``)."""
    k_max = 1000 * (N + dist) if k_max is None else k_max
    ks = np.arange(dist + 1, k_max + 1)
    # pairs (v, u) with u beyond distance dist on one side: v at offset j from the
    # end, u at distance k - j > dist, so j < k - dist and j < N
    mult = 2 * np.minimum(ks - dist, N)
    logq = np.sum(mult * np.log1p(-kernel.prob(ks[:, None])))
    return float(-np.expm1(logq))


def traces_to_csv(traces) -> str:
    buf = io.StringIO()
    buf.write("replica,step,length,ratio,exiting\n")
    for i, t in enumerate(traces):
        for line in t.to_csv().splitlines()[1:]:
            buf.write(f"{i},{line}\n")
    return buf.getvalue()
