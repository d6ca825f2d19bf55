"""Pure-Python twin of ``_core.pyx``; used when the extension is not built."""

from bisect import bisect_right

import numpy as np


def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


def label_components(n, bonds):
    parent = list(range(n))
    size = [1] * n
    for a, b in np.asarray(bonds, dtype=np.int64).reshape(-1, 2).tolist():
        ra, rb = _find(parent, a), _find(parent, b)
        if ra == rb:
            continue
        if size[ra] < size[rb]:
            ra, rb = rb, ra
        parent[rb] = ra
        size[ra] += size[rb]
    canon = [-1] * n
    root = [0] * n
    for i in range(n):
        r = _find(parent, i)
        if canon[r] < 0:
            canon[r] = i
        root[i] = canon[r]
    return np.asarray(root, dtype=np.int64)


def _step(indptr, indices, cumw, v, u):
    lo, hi = indptr[v], indptr[v + 1]
    target = u * cumw[hi - 1]
    a = bisect_right(cumw, target, lo, hi)
    if a >= hi:
        a = hi - 1
    return indices[a]


def walk_path(indptr, indices, cumw, start, uniforms):
    ip = np.asarray(indptr, dtype=np.int64).tolist()
    ix = np.asarray(indices, dtype=np.int64).tolist()
    cw = np.asarray(cumw, dtype=np.float64).tolist()
    v = int(start)
    out = [v]
    for u in np.asarray(uniforms, dtype=np.float64).tolist():
        v = _step(ip, ix, cw, v, u)
        out.append(v)
    return np.asarray(out, dtype=np.int64)


def walk_until(indptr, indices, cumw, pos, start, stop_mask, uniforms):
    ip = np.asarray(indptr, dtype=np.int64).tolist()
    ix = np.asarray(indices, dtype=np.int64).tolist()
    cw = np.asarray(cumw, dtype=np.float64).tolist()
    stop = np.asarray(stop_mask, dtype=np.uint8).tolist()
    v, steps = int(pos), 0
    for i, u in enumerate(np.asarray(uniforms, dtype=np.float64).tolist()):
        v = _step(ip, ix, cw, v, u)
        steps = i + 1
        if stop[v]:
            return 1, steps, v
        if v == start:
            return 2, steps, v
    return 0, steps, v
