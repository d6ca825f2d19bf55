"""Finite-size crossing estimator for the percolation threshold in beta.

This is an estimator of our own, not a derived quantity: the mean
largest-cluster density is computed on two box sizes over a grid of beta,
and the threshold estimate is where the small-box curve stops lying above
the large-box curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..clusters import label_bonds
from ..errors import ValidationError
from ..sampler import Box, sample_config
from ..seeding import as_seed

OK = "ok"
AT_MIN = "at_min"
NONE = "none"


@dataclass(frozen=True)
class ThresholdEstimate:
    """``beta_c`` is None when the curves never cross in the scanned range;
    ``status`` is ``"at_min"`` when the large box already wins at the first beta."""

    beta_c: float | None
    lo: float | None
    hi: float | None
    status: str
    betas: np.ndarray = field(repr=False)
    sizes: tuple = ()
    densities: np.ndarray = field(repr=False, default=None)  # (size, replica, beta)

    @property
    def curves(self) -> np.ndarray:
        return self.densities.mean(axis=1)


def coupled_densities(family, betas, box: Box, seed, backend=None) -> np.ndarray:
    """Largest-cluster density at every beta of the grid from one shared sample.

    A configuration is drawn at ``max(betas)``; each open bond gets a uniform
    ``u`` and is kept at ``beta`` iff ``u P_k(beta_max) < P_k(beta)``. This
    is exact for every beta and monotone in beta.
    """
    betas = np.asarray(betas, dtype=float)
    rng = as_seed(seed).rng()
    top = family(float(betas.max()))
    cfg = sample_config(top, box, as_seed(seed).child("config"))
    bonds = cfg.bonds
    off = box.coords(bonds[:, 0]) - box.coords(bonds[:, 1]) if len(bonds) else \
        np.zeros((0, box.d), dtype=np.int64)
    u = rng.random(len(bonds))
    pmax = top.prob(off) if len(bonds) else np.zeros(0)
    out = np.empty(betas.size)
    for i, b in enumerate(betas):
        keep = u * pmax < family(float(b)).prob(off) if len(bonds) else np.zeros(0, bool)
        lab = label_bonds(box.n_sites, bonds[keep], backend)
        out[i] = lab.largest()[1] / box.n_sites
    return out


def _crossing(betas, diff):
    if diff[0] <= 0:
        return float(betas[0]), AT_MIN
    below = np.nonzero(diff <= 0)[0]
    if below.size == 0:
        return None, NONE
    j = int(below[0])
    b0, b1, y0, y1 = betas[j - 1], betas[j], diff[j - 1], diff[j]
    return float(b0 + (b1 - b0) * y0 / (y0 - y1)), OK


def estimate_threshold(family, betas, sizes, replicas: int, seed, d: int = 1,
                       n_boot: int = 200, level: float = 0.95, backend=None) -> ThresholdEstimate:
    """Crossing-point estimate of the threshold with a bootstrap band.

    Parameters
    ----------
    family : callable
        ``beta -> Kernel``; must be monotone in beta.
    betas : increasing sequence of float
    sizes : (N_small, N_large)
    replicas : int
        Samples per box size.
    """
    betas = np.asarray(betas, dtype=float)
    if betas.size < 2 or np.any(np.diff(betas) <= 0):
        raise ValidationError("betas must be an increasing grid of at least two values")
    if len(sizes) != 2 or not sizes[0] < sizes[1]:
        raise ValidationError("sizes must be two increasing box sides")
    if replicas < 1:
        raise ValidationError("replicas must be >= 1")
    seed = as_seed(seed)
    dens = np.empty((2, replicas, betas.size))
    for a, N in enumerate(sizes):
        box = Box(d, int(N))
        for r in range(replicas):
            dens[a, r] = coupled_densities(family, betas, box, seed.child("N", int(N), r),
                                           backend)
    beta_c, status = _crossing(betas, dens[0].mean(0) - dens[1].mean(0))
    rng = seed.child("bootstrap").rng()
    boots = []
    for _ in range(n_boot):
        i0 = rng.integers(0, replicas, replicas)
        i1 = rng.integers(0, replicas, replicas)
        b, _ = _crossing(betas, dens[0, i0].mean(0) - dens[1, i1].mean(0))
        if b is not None:
            boots.append(b)
    lo = hi = None
    if boots:
        q = (1 - level) / 2
        lo, hi = (float(x) for x in np.quantile(boots, [q, 1 - q]))
    return ThresholdEstimate(beta_c, lo, hi, status, betas, tuple(int(n) for n in sizes), dens)


def supercritical_beta(est: ThresholdEstimate, factor: float = 2.0) -> float:
    """A beta safely above the estimate: ``factor`` times the upper band edge."""
    if est.beta_c is None:
        raise ValidationError("no threshold estimate: curves did not cross")
    edge = est.hi if est.hi is not None else est.beta_c
    return float(factor * max(edge, est.beta_c))


def threshold_to_csv(est: ThresholdEstimate) -> str:
    lines = ["beta," + ",".join(f"density_N{n},stderr_N{n}" for n in est.sizes)]
    m = est.densities.mean(axis=1)
    se = est.densities.std(axis=1, ddof=1) / math.sqrt(est.densities.shape[1]) \
        if est.densities.shape[1] > 1 else np.full_like(m, math.nan)
    for j, b in enumerate(est.betas):
        vals = ",".join(f"{m[a, j]!r},{se[a, j]!r}" for a in range(2))
        lines.append(f"{b!r},{vals}")
    return "\n".join(lines) + "\n"
