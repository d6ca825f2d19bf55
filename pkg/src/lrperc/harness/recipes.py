"""Experiment recipes. Each recipe turns an ExperimentSpec into named CSV tables
and a JSON-able summary; :mod:`runner` writes them with a manifest.

Recipe functions receive ``(spec, params, seed, pool)`` where ``params`` is
the recipe defaults updated with ``spec.params``, ``seed`` is the root
SeedRecord already keyed by the experiment id, and ``pool`` maps a job over
replicas (see :func:`runner.map_replicas`).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .. import clusters, electro, flow, oned, renorm, walk
from ..errors import ValidationError
from ..model import Kernel, connect_bound, derive_constants
from ..sampler import Box, sample_config, truncate_config


@dataclass
class Bundle:
    tables: dict = field(default_factory=dict)  # file name -> CSV text
    summary: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)  # (replica label, message)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(x) for x in r) + "\n")
    return buf.getvalue()


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def _mean_se(xs):
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        return math.nan, math.nan
    se = float(xs.std(ddof=1) / math.sqrt(xs.size)) if xs.size > 1 else math.nan
    return float(xs.mean()), se


def _kernel(spec, params) -> Kernel:
    if spec.kernel is not None:
        return spec.kernel
    return Kernel(**params["kernel"])


def _series_kernel(entry) -> Kernel:
    return Kernel(int(entry["d"]), float(entry["s"]), float(entry["beta"]))


# -- jobs (module level so that worker processes can import them) --------------------

def job_cube_has_cluster(kernel, N, threshold, seed):
    cfg = sample_config(kernel, Box(kernel.d, N), seed)
    return int(clusters.label_clusters(cfg).largest()[1] >= threshold)


def job_thinned_densities(kernel, N, eps_list, seed):
    cfg = sample_config(kernel, Box(kernel.d, N), seed.child("config"))
    u = seed.child("thin").rng().random(cfg.n_bonds)
    out = []
    for eps in eps_list:
        # shared uniforms make the thinned configurations nested in eps
        sub = replace(cfg, bonds=cfg.bonds[u >= eps], retention=cfg.retention * (1 - eps))
        out.append(clusters.label_clusters(sub).largest()[1] / cfg.box.n_sites)
    return out


def job_truncation(kernel, N, L, seed):
    cfg = sample_config(kernel, Box(kernel.d, N), seed)
    raw = clusters.label_clusters(cfg).largest()[1] / cfg.box.n_sites
    cut = truncate_config(cfg, L)
    tr = clusters.label_clusters(cut).largest()[1] / cfg.box.n_sites
    return raw, tr


def job_hierarchy(kernel, grid, M, K, threshold, sched, seed):
    d = kernel.d
    cfg = sample_config(kernel, Box(d, grid * M), seed)
    reports = clusters.cube_aliveness(cfg, M, K, threshold)
    alive0 = np.array([r.alive for r in reports])
    pairs = renorm.attachment_pairs(cfg, reports)
    return alive0.mean(), renorm.run_hierarchy(alive0, pairs, (grid,) * d, sched, d)


def nearest_in_largest(config, labeling=None):
    """Site of the largest cluster closest to the lattice origin (sup norm, then
    l1 norm, then index)."""
    lab = clusters.label_clusters(config) if labeling is None else labeling
    root, _ = lab.largest()
    sites = lab.members(root)
    c = config.box.lattice_coords(sites)
    order = np.lexsort((sites, np.abs(c).sum(axis=1), np.abs(c).max(axis=1)))
    return int(sites[order[0]])


def job_profile(kernel, N, radii, project, seed, walk_replicas=0):
    box = Box(kernel.d, N, (-(N // 2),) * kernel.d)
    cfg = sample_config(kernel, box, seed)
    net = electro.project_long_bonds(cfg) if project else electro.config_network(cfg)
    start = nearest_in_largest(cfg)
    coords = net.coords
    out = []
    for R in radii:
        bnd = electro.outside_sites(coords, 0, R)
        res = electro.effective_resistance(net, [start], bnd)
        esc = math.nan
        if walk_replicas and not math.isinf(res):
            st = walk.escape_probability(net, start, bnd, walk_replicas, seed.child("walk", R),
                                         budget=20 * R * R + 1000)
            esc = st.estimate
        out.append((res, esc))
    return out


def job_growth(kernel, N, steps, seed):
    cfg = sample_config(kernel, Box(1, N), seed)
    mid = N // 2
    return oned.interval_growth(cfg, (mid, mid), steps)


def job_exiting(kernel, N, replicas, seed):
    return oned.exiting_count_samples(kernel, N, replicas, seed)


def job_projection(kernel, N, seed):
    box = Box(2, N, (-(N // 2),) * 2)
    cfg = sample_config(kernel, box, seed)
    net = electro.project_long_bonds(cfg)
    R = N // 2
    return net, electro.box_cut_conductances(net, R)


def job_iid(N, chi, radii, M, seed):
    R0 = N // 2
    net = electro.z2_network(R0)
    cond = electro.sample_cauchy_tail(chi, net.n_edges, seed.rng())
    net = net.with_cond(cond)
    reg = electro.regularize_bad_clusters(net, M) if M else None
    center = net.n // 2
    out = []
    for R in radii:
        bnd = electro.outside_sites(net.coords, 0, R)
        r1 = electro.effective_resistance(net, [center], bnd)
        r2 = electro.effective_resistance(reg, [center], bnd) if reg is not None else math.nan
        out.append((r1, r2))
    return out


# -- recipes -----------------------------------------------------------------------

def exp_normal1(spec, p, seed, pool) -> Bundle:
    kernel = _kernel(spec, p)
    rows = []
    b = Bundle()
    for N in p["Ns"]:
        thr = min(math.ceil(p["rho"] * N ** (kernel.s / 2)), N ** kernel.d)
        seeds = [seed.child("N", N, i) for i in range(spec.replicas)]
        res = pool(job_cube_has_cluster, [(kernel, N, thr, s) for s in seeds], b)
        hits = [r for r in res if r is not None]
        if not hits:
            continue
        frac = float(np.mean(hits))
        se = math.sqrt(frac * (1 - frac) / len(hits))
        rows.append((N, thr, frac, se, len(hits)))
    b.tables["normal1.csv"] = _csv(["N", "threshold", "fraction", "stderr", "replicas"], rows)
    b.summary = {"fractions": {str(r[0]): r[2] for r in rows}}
    return b


def exp_connectprob(spec, p, seed, pool) -> Bundle:
    kernel = _kernel(spec, p)
    consts = derive_constants(kernel)
    N, rho = int(p["N"]), float(p["rho"])
    want = math.ceil(rho * N ** (kernel.s / 2))
    size = min(want, N ** kernel.d)
    b = Bundle()
    rows = []
    for l in p["ls"]:
        bound = connect_bound(consts, rho, int(l))
        if spec.replicas:
            freq, se, exact = clusters.planted_attachment(kernel, N, size, int(l), spec.replicas,
                                                          seed.child("l", int(l)))
        else:
            freq = se = exact = math.nan
        rows.append((int(l), size, int(size < want), freq, se, exact, bound))
    b.tables["connectprob.csv"] = _csv(
        ["l", "size", "capped", "frequency", "stderr", "exact_mean", "bound"], rows)
    b.summary = {"zeta": consts.zeta, "gamma": consts.gamma, "planted_size": size,
                 "requested_size": want}
    return b


def exp_criti(spec, p, seed, pool) -> Bundle:
    kernel = _kernel(spec, p)
    N, eps = int(p["N"]), [float(e) for e in p["eps"]]
    b = Bundle()
    res = [r for r in pool(job_thinned_densities,
                           [(kernel, N, eps, seed.child("rep", i)) for i in range(spec.replicas)],
                           b) if r is not None]
    arr = np.asarray(res, dtype=float).reshape(-1, len(eps))
    rows = []
    for j, e in enumerate(eps):
        m, se = _mean_se(arr[:, j])
        rows.append((e, m, se, arr.shape[0]))
    b.tables["criti.csv"] = _csv(["eps", "density", "stderr", "replicas"], rows)
    b.summary = {"beta": kernel.beta}
    return b


def exp_jeff(spec, p, seed, pool) -> Bundle:
    kernel = _kernel(spec, p)
    N, n_cube = int(p["N"]), int(p["N_cube"])
    L = 4 * n_cube * kernel.d
    b = Bundle()
    res = [r for r in pool(job_truncation,
                           [(kernel, N, L, seed.child("rep", i)) for i in range(spec.replicas)],
                           b) if r is not None]
    arr = np.asarray(res, dtype=float).reshape(-1, 2)
    raw, se_raw = _mean_se(arr[:, 0])
    tr, se_tr = _mean_se(arr[:, 1])
    b.tables["jeff.csv"] = _csv(["quantity", "mean", "stderr", "replicas"],
                                [("raw_density", raw, se_raw, arr.shape[0]),
                                 ("truncated_density", tr, se_tr, arr.shape[0])])
    b.summary = {"L": L, "ratio": tr / raw if raw else math.nan}
    return b


def exp_hierarchy(spec, p, seed, pool) -> Bundle:
    kernel = _kernel(spec, p)
    d, s, beta = kernel.d, kernel.s, kernel.beta
    sched = renorm.StageSchedule(p["variant"], int(p["L"]), p.get("a"), p.get("b"))
    renorm.validate_schedule(sched, d, s)
    M, K = int(p["M"]), int(p["K"])
    thr = min(math.ceil(p["rho"] * M ** (s / 2)), M ** d)
    grid = sched.cumulative_side() * int(p.get("blocks", 1))
    b = Bundle()
    res = [r for r in pool(job_hierarchy,
                           [(kernel, grid, M, K, thr, sched, seed.child("rep", i))
                            for i in range(spec.replicas)], b) if r is not None]
    merged = renorm.merge_outcomes([r[1] for r in res]) if res else []
    bounds = {}
    lam = 1.0 - float(np.mean([r[0] for r in res])) if res else math.nan
    for n in range(1, sched.L + 1):
        if sched.variant == renorm.SUBGRAPH:
            bb, ld = renorm.subgraph_bounds(n, d, beta, s)
            bounds[n] = {"b_bound": bb, "ld_bound": ld}
        else:
            bounds[n] = {"psi_bound": renorm.psi_bound(n, beta, sched, d, s),
                         "phi_bound": renorm.phi_bound(lam, n, sched)}
    b.tables["hierarchy.csv"] = renorm.stages_to_csv(merged, bounds)
    b.summary = {"grid": grid, "M": M, "threshold": thr,
                 "stage0_alive": 1.0 - lam if res else math.nan}
    return b


def exp_flow_energy(spec, p, seed, pool) -> Bundle:
    rows = []
    d = int(p["d"])
    for kind in p["schedules"]:
        for L in p["Ls"]:
            C = flow.schedule(kind, int(L), d)
            f = flow.build_flow(flow.build_renorm_graph(C))
            resid = f.residuals()
            bound = flow.energy_recursion_bound(C, int(L))
            for q in p["qs"]:
                rows.append((kind, int(L), float(q), flow.q_energy(f, float(q)), bound,
                             f.n_edges, len(resid)))
            rows.append((kind, int(L), "vertex", flow.vertex_energy(f), bound, f.n_edges,
                         len(resid)))
    b = Bundle()
    b.tables["flow_energy.csv"] = _csv(
        ["schedule", "L", "q", "energy", "recursion_bound", "n_edges", "nonzero_residuals"],
        rows)
    return b


def exp_recurrence_1d(spec, p, seed, pool) -> Bundle:
    kernel = _kernel(spec, p)
    if kernel.d != 1:
        raise ValidationError("exp-recurrence-1d needs a d=1 kernel")
    b = Bundle()
    traces = [t for t in pool(job_growth, [(kernel, int(p["N"]), int(p["steps"]),
                                            seed.child("growth", i))
                                           for i in range(spec.replicas)], b) if t is not None]
    b.tables["growth.csv"] = oned.traces_to_csv(traces)
    rows = []
    for N in p["exit_Ns"]:
        if not spec.replicas:
            break
        cnt, reach = job_exiting(kernel, int(N), spec.replicas, seed.child("exit", int(N)))
        m, se = _mean_se(cnt)
        rows.append((int(N), math.log(N), m, se, float(reach.mean()), spec.replicas))
    b.tables["exiting.csv"] = _csv(["N", "logN", "mean_count", "stderr", "mean_reach",
                                    "replicas"], rows)
    # exiting sets of the growth process are disjoint cutsets with unit conductances
    nw = []
    for i, t in enumerate(traces):
        ps = oned_nw_sums(t)
        nw += [(i, n + 1, c, s) for n, (c, s) in enumerate(ps)]
    b.tables["nash_williams.csv"] = _csv(["replica", "n", "cut_conductance", "partial_sum"], nw)
    if rows:
        x = np.array([r[1] for r in rows])
        y = np.array([r[2] for r in rows])
        slope, icpt = np.polyfit(x, y, 1)
        pred = slope * x + icpt
        r2 = 1 - np.sum((y - pred) ** 2) / np.sum((y - y.mean()) ** 2) if y.size > 2 else math.nan
        b.summary = {"slope": float(slope), "intercept": float(icpt), "r2": float(r2)}
    b.summary["truncated"] = int(sum(t.truncated for t in traces))
    return b


def oned_nw_sums(trace):
    out = []
    acc = 0.0
    for c in trace.exiting:
        acc += math.inf if c == 0 else 1.0 / c
        out.append((c, acc))
    return out


def exp_recurrence_2d(spec, p, seed, pool) -> Bundle:
    kernel = _kernel(spec, p)
    if kernel.d != 2:
        raise ValidationError("exp-recurrence-2d needs a d=2 kernel")
    N, chi = int(p["N"]), float(p["chi"])
    b = Bundle()
    res = [r for r in pool(job_projection, [(kernel, N, seed.child("rep", i))
                                            for i in range(spec.replicas)], b) if r is not None]
    rows, tail = [], []
    if res:
        cuts = np.array([r[1] for r in res])
        ps = np.array([electro.nash_williams_partial_sums(None, c) for c in cuts])
        for n in range(cuts.shape[1]):
            m, se = _mean_se(cuts[:, n])
            rows.append((n + 1, m, se, float(np.mean(ps[:, n]))))
        cond = np.concatenate([r[0].cond[r[0].cond > 0] for r in res])
        rep = electro.cauchy_tail_diagnostics(cond, chi, n_max=int(p["n_max"]))
        tail = list(zip(rep.n, rep.rate, rep.envelope, rep.sigma, rep.below))
        b.summary = {"tail_all_below": rep.all_below, "edges": int(cond.size)}
    b.tables["cutsets.csv"] = _csv(["n", "cut_conductance", "stderr", "partial_sum"], rows)
    b.tables["tail.csv"] = _csv(["n", "rate", "envelope", "sigma", "below"], tail)
    return b


def exp_transience_profile(spec, p, seed, pool) -> Bundle:
    b = Bundle()
    rows, per = [], []
    for k, entry in enumerate(p["series"]):
        kernel = _series_kernel(entry)
        radii = [int(r) for r in entry["radii"]]
        N = int(entry["N"])
        project = bool(entry.get("project", False))
        wr = int(entry.get("walk_replicas", p.get("walk_replicas", 0)))
        res = [r for r in pool(job_profile, [(kernel, N, radii, project,
                                              seed.child("series", k, i), wr)
                                             for i in range(spec.replicas)], b) if r is not None]
        for i, r in enumerate(res):
            per += [(k, i, R, r[j][0], r[j][1]) for j, R in enumerate(radii)]
        for j, R in enumerate(radii):
            vals = np.array([r[j][0] for r in res], dtype=float)
            fin = vals[np.isfinite(vals)]
            m, se = _mean_se(fin)
            esc = np.array([r[j][1] for r in res], dtype=float)
            esc = esc[np.isfinite(esc)]
            em, ese = _mean_se(esc)
            rows.append((k, kernel.d, kernel.s, kernel.beta, R, m, se, em, ese, fin.size,
                         int(vals.size - fin.size)))
    b.tables["profile.csv"] = _csv(["series", "d", "s", "beta", "R", "resistance", "stderr",
                                    "escape", "escape_stderr", "replicas", "disconnected"], rows)
    b.tables["profile_replicas.csv"] = _csv(["series", "replica", "R", "resistance", "escape"],
                                            per)
    return b


def exp_iid_stability(spec, p, seed, pool) -> Bundle:
    N, chi, M = int(p["N"]), float(p["chi"]), float(p["M"])
    radii = [int(r) for r in p["radii"]]
    b = Bundle()
    res = [r for r in pool(job_iid, [(N, chi, radii, M, seed.child("rep", i))
                                     for i in range(spec.replicas)], b) if r is not None]
    rows = []
    for j, R in enumerate(radii):
        r1 = [r[j][0] for r in res]
        r2 = [r[j][1] for r in res]
        m1, s1 = _mean_se(r1)
        m2, s2 = _mean_se(r2)
        rows.append((R, m1, s1, m2, s2, len(res)))
    # unit-conductance Z^2 as the recurrent reference
    R0 = N // 2
    ref = electro.z2_network(R0)
    for R in radii:
        bnd = electro.outside_sites(ref.coords, 0, R)
        rows.append((R, electro.effective_resistance(ref, [ref.n // 2], bnd), 0.0, math.nan,
                     math.nan, 0))
    b.tables["iid.csv"] = _csv(["R", "resistance", "stderr", "regularized", "regularized_stderr",
                                "replicas"], rows)
    return b


@dataclass(frozen=True)
class Recipe:
    func: object
    defaults: dict
    description: str


RECIPES = {
    "exp-normal1": Recipe(exp_normal1, {
        "kernel": {"d": 1, "s": 1.5, "beta": 2.0}, "Ns": [32, 64], "rho": 1.0},
        "fraction of N-cubes holding a cluster of at least rho N^(s/2) sites"),
    "exp-connectprob": Recipe(exp_connectprob, {
        "kernel": {"d": 1, "s": 1.5, "beta": 2.0}, "N": 64, "rho": 4.0, "ls": [1, 2, 4]},
        "planted-cluster attachment frequency against the analytic lower bound"),
    "exp-criti": Recipe(exp_criti, {
        "kernel": {"d": 1, "s": 1.5, "beta": 1.0}, "N": 256, "eps": [0.0, 0.05, 0.1, 0.2]},
        "largest-cluster density before and after eps-thinning"),
    "exp-jeff": Recipe(exp_jeff, {
        "kernel": {"d": 2, "s": 3.0, "beta": 2.0}, "N": 64, "N_cube": 8},
        "largest-cluster density after removing bonds of length >= 4 N_cube d"),
    "exp-hierarchy": Recipe(exp_hierarchy, {
        "kernel": {"d": 1, "s": 1.5, "beta": 10.0}, "variant": "subgraph", "L": 1, "M": 16,
        "K": 0, "rho": 1.0, "blocks": 1},
        "per-stage alive fractions of the cube hierarchy with their analytic bounds"),
    "exp-flow-energy": Recipe(exp_flow_energy, {
        "d": 1, "schedules": ["subgraph", "power2"], "Ls": [1, 2, 3],
        "qs": [1.1, 1.5, 2.0]},
        "q-energy of the hierarchical unit flow against the energy recursion"),
    "exp-recurrence-1d": Recipe(exp_recurrence_1d, {
        "kernel": {"d": 1, "s": 2.0, "beta": 0.5}, "N": 20001, "steps": 20,
        "exit_Ns": [16, 32, 64, 128]},
        "interval growth, exiting bonds and cutset sums at s = 2"),
    "exp-recurrence-2d": Recipe(exp_recurrence_2d, {
        "kernel": {"d": 2, "s": 4.5, "beta": 1.0}, "N": 33, "chi": 4.0, "n_max": 50},
        "projected networks: cutset sums and conductance tails at s >= 4"),
    "exp-transience-profile": Recipe(exp_transience_profile, {
        "series": [{"d": 1, "s": 1.5, "beta": 2.0, "N": 129, "radii": [16, 32]},
                   {"d": 1, "s": 2.0, "beta": 2.0, "N": 129, "radii": [16, 32]}]},
        "resistance-to-boundary profiles across decay exponents"),
    "exp-iid-stability": Recipe(exp_iid_stability, {
        "N": 33, "chi": 1.0, "M": 10.0, "radii": [4, 8, 16]},
        "i.i.d. Cauchy-tail conductances on Z^2, raw and regularized"),
}


def resolve_params(experiment: str, params: dict) -> dict:
    if experiment not in RECIPES:
        raise ValidationError(f"unknown experiment {experiment!r}; "
                              f"known: {', '.join(sorted(RECIPES))}")
    defaults = RECIPES[experiment].defaults
    unknown = set(params) - set(defaults) - {"a", "b", "walk_replicas"}
    if unknown:
        raise ValidationError(f"unknown parameters for {experiment}: {sorted(unknown)}")
    out = dict(defaults)
    out.update(params)
    return out
