import json
import math
from collections import deque
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrperc import Box, ConvergenceError, Kernel, OracleInapplicable, SeedRecord, sample_config
from lrperc.electro import (ElectricalNetwork, box_cut_conductances, box_cuts,
                            cauchy_tail_diagnostics, config_network, dense_resistance,
                            effective_resistance, grid_network, nash_williams_partial_sums,
                            network_from_csv, network_to_csv, project_long_bonds,
                            regularize_bad_clusters, sample_cauchy_tail, series_parallel_oracle,
                            solve_resistance, z2_network)
from test_clusters import make_config, nn_skeleton


def net_of(n, triples):
    e = [(u, v) for u, v, _ in triples]
    c = [w for _, _, w in triples]
    return ElectricalNetwork(n, np.array(e, dtype=np.int64).reshape(-1, 2), c)


def test_series_and_parallel():
    series = net_of(4, [(0, 1, 1), (1, 2, 1), (2, 3, 1)])
    assert effective_resistance(series, [0], [3]) == pytest.approx(3.0, abs=1e-10)
    assert series_parallel_oracle(series, 0, 3) == 3
    par = net_of(2, [(0, 1, 1), (0, 1, 1)])
    assert effective_resistance(par, [0], [1]) == pytest.approx(0.5, abs=1e-10)
    assert series_parallel_oracle(par, 0, 1) == Fraction(1, 2)


def test_four_cycle():
    net = net_of(4, [(0, 1, 1), (1, 2, 1), (2, 3, 1), (3, 0, 1)])
    assert effective_resistance(net, [0], [2]) == pytest.approx(1.0, abs=1e-10)


def test_wheatstone():
    net = net_of(4, [(0, 1, 1), (0, 2, 2), (1, 3, 3), (2, 3, 4), (1, 2, 5)])
    # nodal equations at 1 and 2 with V0=1, V3=0: 9V1-5V2=1, -5V1+11V2=2
    v1, v2 = Fraction(21, 74), Fraction(23, 74)
    hand = 1 / ((1 - v1) + 2 * (1 - v2))
    assert hand == Fraction(74, 155)
    assert effective_resistance(net, [0], [3]) == pytest.approx(float(hand), abs=1e-10)
    assert dense_resistance(net, 0, 3) == pytest.approx(float(hand), abs=1e-10)
    with pytest.raises(OracleInapplicable):
        series_parallel_oracle(net, 0, 3)


def test_ladder_three_rungs():
    # rails a0-a1-a2 (0,1,2) and b0-b1-b2 (3,4,5), rungs ai-bi
    net = net_of(6, [(0, 1, 1), (1, 2, 1), (3, 4, 1), (4, 5, 1), (0, 3, 1), (1, 4, 1), (2, 5, 1)])
    exact = series_parallel_oracle(net, 0, 3)
    assert exact == Fraction(11, 15)
    assert effective_resistance(net, [0], [3]) == pytest.approx(float(exact), abs=1e-10)


def test_disconnected_is_infinite():
    net = net_of(4, [(0, 1, 1), (2, 3, 1)])
    rep = solve_resistance(net, [0], [3])
    assert rep.disconnected and math.isinf(rep.resistance)
    rec = json.loads(rep.to_json())
    assert rec["resistance"] is None and rec["disconnected"] is True
    assert series_parallel_oracle(net, 0, 3) == math.inf
    # zero conductance is an absent edge
    assert math.isinf(effective_resistance(net_of(2, [(0, 1, 0.0)]), [0], [1]))


def test_convergence_error():
    net = grid_network(12, 2)
    with pytest.raises(ConvergenceError) as err:
        solve_resistance(net, [0], [143], maxiter=2)
    assert err.value.iterations == 2 and err.value.residual > 1e-10


def test_set_terminals():
    # grounding both ends of a 5-path from the middle: two series-2 arms in parallel
    net = net_of(5, [(i, i + 1, 1) for i in range(4)])
    assert effective_resistance(net, [2], [0, 4]) == pytest.approx(1.0, abs=1e-10)


@st.composite
def sp_networks(draw):
    """Random series-parallel network built by edge splitting and doubling."""
    edges = [[0, 1, Fraction(draw(st.integers(1, 5)))]]
    n = 2
    for _ in range(draw(st.integers(0, 14))):
        i = draw(st.integers(0, len(edges) - 1))
        u, v, c = edges[i]
        c2 = Fraction(draw(st.integers(1, 5)))
        if draw(st.booleans()) and n < 12:
            edges[i] = [u, n, c]
            edges.append([n, v, c2])
            n += 1
        else:
            edges.append([u, v, c2])
    return net_of(n, [(u, v, float(c)) for u, v, c in edges])


@settings(max_examples=80)
@given(sp_networks())
def test_solver_matches_sp_oracle(net):
    exact = series_parallel_oracle(net, 0, 1)
    assert effective_resistance(net, [0], [1]) == pytest.approx(float(exact), abs=1e-10, rel=1e-10)


@st.composite
def random_networks(draw):
    n = draw(st.integers(3, 9))
    m = draw(st.integers(n - 1, 3 * n))
    e = [(i, i + 1, draw(st.floats(0.1, 10))) for i in range(n - 1)]
    for _ in range(m - (n - 1)):
        u = draw(st.integers(0, n - 1))
        v = draw(st.integers(0, n - 1))
        if u != v:
            e.append((u, v, draw(st.floats(0.0, 10))))
    return net_of(n, e)


@given(random_networks(), st.data())
def test_rayleigh_monotonicity(net, data):
    i = data.draw(st.integers(0, net.n_edges - 1))
    bump = data.draw(st.floats(0.01, 100))
    r0 = effective_resistance(net, [0], [net.n - 1], tol=1e-12)
    c = net.cond.copy()
    c[i] += bump
    r1 = effective_resistance(net.with_cond(c), [0], [net.n - 1], tol=1e-12)
    assert r1 <= r0 * (1 + 1e-8)
    assert r0 == pytest.approx(dense_resistance(net, 0, net.n - 1), rel=1e-8)


def test_z2_cutsets():
    net = z2_network(6)
    cc = box_cut_conductances(net, 5)
    assert cc.tolist() == [8 * n + 4 for n in range(1, 6)]
    cuts = box_cuts(net, 5)
    assert [len(c) for c in cuts.cuts] == [8 * n + 4 for n in range(1, 6)]
    flat = np.concatenate(cuts.cuts)
    assert len(np.unique(flat)) == len(flat)
    ps = nash_williams_partial_sums(net, cuts)
    assert ps[2] == pytest.approx(1 / 12 + 1 / 20 + 1 / 28, abs=1e-15)
    assert np.all(np.diff(ps) >= 0)
    doubled = nash_williams_partial_sums(net.with_cond(2 * net.cond), cuts)
    np.testing.assert_allclose(doubled, ps / 2, rtol=1e-15)


def test_zero_cut_is_infinite():
    ps = nash_williams_partial_sums(None, np.array([4.0, 0.0, 2.0]))
    assert ps[0] == 0.25 and math.isinf(ps[1]) and math.isinf(ps[2])


def test_nash_williams_relabel_invariant():
    net = z2_network(5, cond=np.random.default_rng(3).random(2 * 11 * 10) + 0.1)
    perm = np.random.default_rng(4).permutation(net.n)
    inv = np.argsort(perm)  # vertex v becomes perm[v]
    coords = np.empty_like(net.coords)
    coords[perm] = net.coords
    relabeled = ElectricalNetwork(net.n, perm[net.edges][::-1], net.cond[::-1], coords)
    assert inv.size == net.n
    a = nash_williams_partial_sums(net, box_cuts(net, 4))
    b = nash_williams_partial_sums(relabeled, box_cuts(relabeled, 4))
    np.testing.assert_allclose(a, b, rtol=1e-13)


def _cond_between(net, p, q):
    box_n = int(round(math.sqrt(net.n)))
    i, j = p[0] * box_n + p[1], q[0] * box_n + q[1]
    hit = ((net.edges[:, 0] == min(i, j)) & (net.edges[:, 1] == max(i, j)))
    return float(net.cond[hit].sum())


def test_projection_example():
    box = Box(2, 4)
    cfg = make_config(box, [(box.index((0, 0)), box.index((2, 1)))])
    net = project_long_bonds(cfg)
    assert _cond_between(net, (0, 0), (0, 1)) == 3
    assert _cond_between(net, (0, 1), (1, 1)) == 3
    assert _cond_between(net, (1, 1), (2, 1)) == 3
    assert net.cond.sum() == 9
    assert np.count_nonzero(net.cond) == 3


def test_projection_nn_only_unchanged():
    cfg = nn_skeleton(Box(2, 5))
    net = project_long_bonds(cfg)
    assert np.all(net.cond == 1.0)
    ref = config_network(cfg)
    a = {tuple(e): c for e, c in zip(ref.edges.tolist(), ref.cond.tolist())}
    b = {tuple(e): c for e, c in zip(net.edges.tolist(), net.cond.tolist())}
    assert a == b


@settings(max_examples=30)
@given(st.integers(0, 10**6))
def test_projection_mass(seed):
    cfg = sample_config(Kernel(2, 3.0, 1.5), Box(2, 7), seed)
    ln = cfg.lengths()
    net = project_long_bonds(cfg)
    expect = float(np.sum(np.where(ln > 1, ln.astype(float) ** 2, 1.0)))
    assert net.cond.sum() == pytest.approx(expect)


def test_projection_increases_conductance():
    box = Box(2, 6)
    s, t = box.index((0, 0)), box.index((5, 5))
    for seed in range(100):
        cfg = sample_config(Kernel(2, 3.0, 2.0), box, SeedRecord(7).child("proj", seed))
        g1 = effective_resistance(config_network(cfg), [s], [t])
        g2 = effective_resistance(project_long_bonds(cfg), [s], [t])
        assert g2 <= g1 * (1 + 1e-8)


def test_regularize_identity():
    net = net_of(3, [(0, 1, 0.5), (1, 2, 1.0)])
    out = regularize_bad_clusters(net, 1.0)
    assert out.cond.tolist() == [0.5, 1.0]


@pytest.mark.parametrize("M", [1.0, 2.0, 7.5])
def test_regularize_path_fixture(M):
    # 0 -(10M)- 1 -(1)- 2: U = {01}, boundary = {12}; 2M (1+1)^2 = 8M on both
    out = regularize_bad_clusters(net_of(3, [(0, 1, 10 * M), (1, 2, 1.0)]), M)
    assert out.cond.tolist() == [8 * M, 8 * M]


def bfs_regularize(net, M):
    """Reference: bad components by BFS over shared endpoints."""
    bad = [i for i in range(net.n_edges) if net.cond[i] > M]
    at = {}
    for i in bad:
        for x in net.edges[i]:
            at.setdefault(int(x), []).append(i)
    comp = {}
    for i in bad:
        if i in comp:
            continue
        comp[i] = i
        q = deque([i])
        while q:
            j = q.popleft()
            for x in net.edges[j]:
                for k in at[int(x)]:
                    if k not in comp:
                        comp[k] = i
                        q.append(k)
    members = {}
    for i, r in comp.items():
        members.setdefault(r, set()).add(i)
    vert = {}
    for r, es in members.items():
        for j in es:
            for x in net.edges[j]:
                vert[int(x)] = r
    border = {}
    for i in range(net.n_edges):
        if i in comp:
            continue
        for x in net.edges[i]:
            if int(x) in vert:
                border.setdefault(vert[int(x)], set()).add(i)
    new = net.cond.copy()
    for i in range(net.n_edges):
        if i in comp:
            rs = {comp[i]}
        else:
            rs = {vert[int(x)] for x in net.edges[i] if int(x) in vert}
        if not rs:
            continue
        U = set().union(*(members[r] for r in rs))
        dU = set().union(*(border.get(r, set()) for r in rs))
        new[i] = 2 * M * (len(U) + len(dU)) ** 2
    return new


def test_regularize_matches_bfs_reference():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(6, 15))
        e = rng.integers(0, n, size=(20, 2))
        e = e[e[:, 0] != e[:, 1]]
        c = np.where(rng.random(len(e)) < 0.3, rng.uniform(2, 20, len(e)), rng.uniform(0, 2, len(e)))
        net = ElectricalNetwork(n, e, c)
        out = regularize_bad_clusters(net, 2.0)
        np.testing.assert_allclose(out.cond, bfs_regularize(net, 2.0), rtol=1e-15)


def test_regularize_floor():
    rng = np.random.default_rng(5)
    for _ in range(50):
        net = grid_network(5, 2, rng.uniform(0, 3, 40))
        M = 1.5
        out = regularize_bad_clusters(net, M)
        touched = out.cond != net.cond
        assert np.all(out.cond[touched] >= 8 * M)
        assert np.all(out.cond[net.cond > M] >= 8 * M)


def test_cauchy_constant_samples():
    rep = cauchy_tail_diagnostics(np.full(1000, 2.0), chi=2.0, n_max=20)
    assert np.all(rep.rate == 0) and rep.all_below


def test_cauchy_exact_samples():
    x = sample_cauchy_tail(3.0, 200_000, np.random.default_rng(2024))
    rep = cauchy_tail_diagnostics(x, chi=3.0, n_max=100)
    assert rep.all_within


def test_cauchy_heavier_tail_detected():
    x = sample_cauchy_tail(1.0, 50_000, np.random.default_rng(1)) ** 1.5
    assert not cauchy_tail_diagnostics(x, chi=1.0, n_max=100).all_below


def test_bounded_mean_over_log_decays():
    rep = cauchy_tail_diagnostics(np.random.default_rng(0).random(100_000), chi=1.0, n_checkpoints=10)
    assert np.all(np.diff(rep.mean_over_log) < 0)
    assert rep.mean_over_log[-1] < 0.05


def test_network_csv_roundtrip():
    net = net_of(5, [(0, 1, 0.1), (1, 4, 2.5), (2, 3, 0.0), (0, 1, 1 / 3)])
    back = network_from_csv(network_to_csv(net))
    assert back.n == 5
    assert back.edges.tolist() == net.edges.tolist()
    assert back.cond.tolist() == net.cond.tolist()
