"""Connected components, cube semi-clusters and cube attachment."""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ValidationError
from .model import Kernel
from .sampler import Box, Configuration
from .seeding import as_seed


@dataclass(frozen=True)
class ClusterLabeling:
    """Partition of box sites into open clusters.

    ``root[i]`` is the smallest site index in the cluster of ``i``;
    ``sizes[r]`` is the cluster size for a root ``r`` and 0 elsewhere.
    """

    root: np.ndarray = field(repr=False)
    sizes: np.ndarray = field(repr=False)

    @property
    def n_sites(self) -> int:
        return int(self.root.shape[0])

    @property
    def n_clusters(self) -> int:
        return int(np.count_nonzero(self.sizes))

    def roots(self) -> np.ndarray:
        return np.nonzero(self.sizes)[0]

    def size_of(self, site) -> int:
        return int(self.sizes[self.root[site]])

    def largest(self) -> tuple[int, int]:
        """``(root, size)`` of the largest cluster, smallest root on ties."""
        r = int(np.argmax(self.sizes))
        return r, int(self.sizes[r])

    def members(self, root) -> np.ndarray:
        return np.nonzero(self.root == root)[0]


def label_bonds(n: int, bonds, backend=None) -> ClusterLabeling:
    root = _kernels.label_components(n, bonds, backend)
    sizes = np.bincount(root, minlength=n).astype(np.int64)
    return ClusterLabeling(root, sizes)


def label_clusters(config: Configuration, backend=None) -> ClusterLabeling:
    """Exact open clusters of ``config`` via union-find."""
    return label_bonds(config.box.n_sites, config.bonds, backend)


def _cube_sites(box: Box, cube: Box) -> np.ndarray:
    """Box site indices covered by ``cube`` (given in lattice coordinates)."""
    lo = np.asarray(cube.origin) - np.asarray(box.origin)
    if np.any(lo < 0) or np.any(lo + cube.N > box.N) or cube.d != box.d:
        raise ValidationError("cube is not contained in the box")
    axes = [np.arange(l, l + cube.N) for l in lo]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.ravel_multi_index(tuple(g.ravel() for g in grid), box.shape)


def _best_intersection(root_of_sites: np.ndarray, sites: np.ndarray):
    """Largest group of ``sites`` sharing a root; ties by smallest root."""
    if sites.size == 0:
        return 0, sites
    r = root_of_sites
    uniq, counts = np.unique(r, return_counts=True)
    best = uniq[np.argmax(counts)]  # np.unique sorts, argmax takes the first maximum
    return int(counts.max()), np.sort(sites[r == best])


def largest_cluster_in_cube(labeling: ClusterLabeling, box: Box, cube: Box):
    """Largest intersection of a single cluster with ``cube``.

    Returns
    -------
    size : int
    sites : ndarray
        Sorted box indices of the intersection.
    """
    sites = _cube_sites(box, cube)
    return _best_intersection(labeling.root[sites], sites)


@dataclass(frozen=True)
class CubeReport:
    """Aliveness verdict for one M-cube of the box partition."""

    coords: tuple
    M: int
    alive: bool
    sites: np.ndarray = field(repr=False, compare=False)

    @property
    def size(self) -> int:
        return int(self.sites.shape[0])


def cube_grid_shape(box: Box, M: int) -> tuple:
    if M < 1 or box.N % M:
        raise ValidationError(f"cube side M={M} does not divide box side N={box.N}")
    return (box.N // M,) * box.d


def cube_aliveness(config: Configuration, M: int, K: int, threshold: int, backend=None):
    """Classify every M-cube of the box as alive or dead.

    A cube is alive when at least ``threshold`` of its sites lie in one
    component of the subgraph induced on its K-enlargement (clipped at the
    box). The reported semi-cluster is the largest such intersection, ties
    going to the component with the smallest site index.

    Returns
    -------
    list of CubeReport
        In row-major order of cube coordinates.
    """
    box = config.box
    grid = cube_grid_shape(box, M)
    if K < 0:
        raise ValidationError("enlargement K must be >= 0")
    d = box.d
    bonds = config.bonds
    if K == 0:
        # every cube at once: keep intra-cube bonds only
        if bonds.shape[0]:
            cu = box.coords(bonds[:, 0]) // M
            cv = box.coords(bonds[:, 1]) // M
            inside = np.all(cu == cv, axis=1)
            lab = label_bonds(box.n_sites, bonds[inside], backend)
        else:
            lab = label_bonds(box.n_sites, bonds, backend)
        reports = []
        for c in itertools.product(*(range(g) for g in grid)):
            cube = Box(d, M, tuple(np.asarray(box.origin) + M * np.asarray(c)))
            size, sites = largest_cluster_in_cube(lab, box, cube)
            reports.append(CubeReport(tuple(c), M, size >= threshold, sites))
        return reports

    bc = box.coords(bonds.reshape(-1))
    bu, bv = bc[0::2], bc[1::2]
    reports = []
    for c in itertools.product(*(range(g) for g in grid)):
        lo = np.maximum(np.asarray(c) * M - K, 0)
        hi = np.minimum(np.asarray(c) * M + M + K, box.N)  # exclusive
        keep = (np.all((bu >= lo) & (bu < hi), axis=1)
                & np.all((bv >= lo) & (bv < hi), axis=1))
        ext = tuple(hi - lo)
        local = lambda x: np.ravel_multi_index(tuple((x - lo).T), ext)
        sub = np.stack([local(bu[keep]), local(bv[keep])], axis=1) if keep.any() \
            else np.zeros((0, 2), dtype=np.int64)
        lab = label_bonds(int(np.prod(ext)), sub, backend)
        # local row-major order preserves the global order of sites
        cube_lo = np.asarray(c) * M
        axes = [np.arange(l, l + M) for l in cube_lo]
        gl = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        size, loc_sites = _best_intersection(lab.root[local(gl)],
                                             np.ravel_multi_index(tuple(gl.T), box.shape))
        reports.append(CubeReport(tuple(c), M, size >= threshold, loc_sites))
    return reports


def cubes_attached(config: Configuration, A: CubeReport, B: CubeReport) -> bool:
    """True iff an open bond joins the semi-clusters of ``A`` and ``B``."""
    if config.n_bonds == 0 or A.size == 0 or B.size == 0:
        return False
    u, v = config.bonds[:, 0], config.bonds[:, 1]
    ua, va = np.isin(u, A.sites), np.isin(v, A.sites)
    ub, vb = np.isin(u, B.sites), np.isin(v, B.sites)
    return bool(np.any((ua & vb) | (ub & va)))


def attachment_matrix(config: Configuration, reports) -> np.ndarray:
    """Boolean matrix ``att[i, j]``: semi-clusters of cubes i and j share a bond."""
    n = len(reports)
    owner = np.full(config.box.n_sites, -1, dtype=np.int64)
    for i, r in enumerate(reports):
        if r.alive:
            owner[r.sites] = i
    att = np.zeros((n, n), dtype=bool)
    if config.n_bonds:
        a = owner[config.bonds[:, 0]]
        b = owner[config.bonds[:, 1]]
        ok = (a >= 0) & (b >= 0) & (a != b)
        att[a[ok], b[ok]] = True
        att[b[ok], a[ok]] = True
    return att


def alpha_proxy(config: Configuration, backend=None) -> float:
    """Largest cluster size over box volume: a finite-volume stand-in for the
    infinite-cluster density."""
    lab = label_clusters(config, backend)
    return lab.largest()[1] / config.box.n_sites


def planted_attachment(kernel: Kernel, N: int, size: int, l: int, replicas: int, seed,
                       chunk: int = 256):
    """Monte Carlo attachment frequency of two planted clusters.

    Two cubes of side ``N`` sit ``l`` cubes apart along the first axis. In
    every replica a uniformly random set of ``size`` sites is drawn in each
    cube and the bonds between the two sets are drawn from ``kernel``.

    Returns
    -------
    freq : float
        Fraction of replicas with at least one open cross bond.
    stderr : float
    exact_mean : float
        Mean over replicas of the exact attachment probability given the sets.
    """
    d = kernel.d
    vol = N**d
    if not 1 <= size <= vol:
        raise ValidationError(f"planted size {size} must lie in [1, {vol}]")
    if l < 1:
        raise ValidationError("cube distance l must be >= 1")
    rng = as_seed(seed).rng()
    cube = Box(d, N)
    shift = np.zeros(d, dtype=np.int64)
    shift[0] = l * N
    hits = 0
    exact = 0.0
    done = 0
    while done < replicas:
        m = min(chunk, replicas - done)
        # random subsets via argsort of uniforms (uniform without replacement)
        ia = np.argsort(rng.random((m, vol)), axis=1)[:, :size]
        ib = np.argsort(rng.random((m, vol)), axis=1)[:, :size]
        ca = cube.coords(ia.ravel()).reshape(m, size, d)
        cb = cube.coords(ib.ravel()).reshape(m, size, d) + shift
        off = ca[:, :, None, :] - cb[:, None, :, :]
        p = kernel.prob(off.reshape(-1, d)).reshape(m, size, size)
        u = rng.random(p.shape)
        hits += int(np.any(u < p, axis=(1, 2)).sum())
        exact += float((-np.expm1(np.log1p(-p).sum(axis=(1, 2)))).sum())
        done += m
    freq = hits / replicas if replicas else math.nan
    se = math.sqrt(max(freq * (1 - freq), 0.0) / replicas) if replicas else math.nan
    return freq, se, exact / replicas if replicas else math.nan


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    buf.write("cube,M,alive,semi_cluster_size\n")
    for r in reports:
        buf.write(f"{'.'.join(map(str, r.coords))},{r.M},{int(r.alive)},{r.size}\n")
    return buf.getvalue()
