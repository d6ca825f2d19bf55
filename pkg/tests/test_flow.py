import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lrperc import Box, Kernel, RenormGraphError, SeedRecord
from lrperc.flow import (build_flow, build_renorm_graph, count_required_pairs,
                         energy_recursion_bound, q_energy, schedule, vertex_energy)
from lrperc.sampler import Configuration


def complete_config(n, drop=()):
    bonds = [(u, v) for u, v in itertools.combinations(range(n), 2) if (u, v) not in drop]
    return Configuration(Box(1, n), Kernel(1, 2.0, 1.0), SeedRecord(0),
                         np.array(bonds, dtype=np.int64))


def test_single_pair():
    g = build_renorm_graph((2,))
    assert g.n_vertices == 2 and g.edges().tolist() == [[0, 1]]
    f = build_flow(g)
    assert f.as_dict() == {(0, 1): Fraction(1)}
    assert q_energy(f, 1.7) == 1.0
    assert vertex_energy(f) == 0.5


def test_star_flow_c4():
    f = build_flow(build_renorm_graph((4,)))
    assert f.as_dict() == {(0, 1): Fraction(1, 3), (0, 2): Fraction(1, 3), (0, 3): Fraction(1, 3)}
    assert f.sinks == {1: Fraction(1, 3), 2: Fraction(1, 3), 3: Fraction(1, 3)}


@pytest.mark.parametrize("k", [2, 3, 5])
def test_split_energy(k):
    f = build_flow(build_renorm_graph((k + 1,)))
    for q in (1.1, 1.5, 2.0, 3.0):
        assert q_energy(f, q) == pytest.approx(k ** (1 - q), rel=1e-12)


def test_vertex_energy_two_way_split():
    # f(source) = 1/2, f(leaf) = 1/4 each
    f = build_flow(build_renorm_graph((3,)))
    assert vertex_energy(f) == pytest.approx(0.25 + 2 / 16, abs=1e-15)


def test_c22_defining_property_and_flow():
    g = build_renorm_graph((2, 2))
    assert g.n_vertices == 4
    edges = {tuple(e) for e in g.edges().tolist()}
    # level 2 with (l-2)-groups = single vertices: the two halves are joined completely
    assert edges == {(0, 1), (2, 3), (0, 2), (0, 3), (1, 2), (1, 3)}
    for u, v in itertools.combinations(range(4), 2):
        assert g.pair_of(u, v) is not None
    f = build_flow(g)
    # 0 floods its half, the landing vertex 1 crosses to the base of the other half,
    # which floods it
    assert f.as_dict() == {(0, 1): 1, (1, 2): 1, (2, 3): 1}
    assert f.residuals() == {}
    assert f.sinks == {3: 1}


def test_required_pair_count_matches_brute_force():
    C = schedule("subgraph", 3)
    assert C == (4, 9, 16)
    g = build_renorm_graph(C)
    n = g.n_vertices
    brute = set()
    for u in range(n):
        for v in range(u + 1, n):
            brute.add(g.pair_of(u, v))
    assert len(brute) == count_required_pairs(C) == g.n_required() == len(g.edges())
    assert set(g.required_pairs()) == brute


@pytest.mark.parametrize("C", [(2,), (4,), (2, 2), (3, 4), (4, 9, 16), (2, 4, 8), (3, 3, 3, 3),
                               (2, 3, 2, 3, 2)])
def test_fast_matches_exact(C):
    g = build_renorm_graph(C)
    a = build_flow(g, "fast")
    b = build_flow(g, "exact")
    assert a.as_dict() == b.as_dict()
    assert a.residuals() == {} and b.residuals() == {}
    assert sum(a.sinks.values()) == 1


def test_l3_conservation_and_brute_energies():
    f = build_flow(build_renorm_graph((4, 9, 16)))
    assert f.residuals() == {}
    vals = f.as_dict()
    out = {}
    for (u, v), x in vals.items():
        out[u] = out.get(u, 0) + x
        out[v] = out.get(v, 0) - x
    assert out[0] == 1
    interior = [v for v in out if v != 0 and v not in f.sinks]
    assert all(out[v] == 0 for v in interior)
    assert q_energy(f, 2.0) == pytest.approx(float(sum(x * x for x in vals.values())), rel=1e-12)
    fv = {}
    for (u, v), x in vals.items():
        fv[u] = fv.get(u, 0) + abs(x) / 2
        fv[v] = fv.get(v, 0) + abs(x) / 2
    assert vertex_energy(f) == pytest.approx(float(sum(x * x for x in fv.values())), rel=1e-12)


@given(st.floats(1.01, 4.0), st.floats(1.01, 4.0))
def test_q_energy_nonincreasing_in_q(q1, q2):
    f = build_flow(build_renorm_graph((3, 4, 2)))
    lo, hi = sorted((q1, q2))
    assert q_energy(f, hi) <= q_energy(f, lo) + 1e-12


def test_recursion_bound_limits_and_monotone():
    assert energy_recursion_bound((10**9,) * 4, 4) == pytest.approx(1 / (10**9 - 1), rel=1e-6)
    C = schedule("subgraph", 6)
    b = [energy_recursion_bound(C, L) for L in range(1, 7)]
    assert all(x <= y for x, y in zip(b, b[1:]))
    inc = np.diff(b)
    assert all(x >= y for x, y in zip(inc[1:], inc[2:]))
    assert np.isfinite(b[-1]) and b[-1] < 1


def test_measured_energy_below_bound():
    for L in range(2, 5):
        C = schedule("subgraph", L)
        f = build_flow(build_renorm_graph(C))
        assert q_energy(f, 2.0) <= energy_recursion_bound(C, L)


def test_power2_energies_stay_bounded():
    e = {q: [] for q in (1.1, 1.5, 2.0)}
    for L in range(2, 7):
        f = build_flow(build_renorm_graph(schedule("power2", L)))
        assert f.residuals() == {}
        for q in e:
            e[q].append(q_energy(f, q))
    # q = 2 and 1.5 decrease from L = 3 on; q = 1.1 grows with shrinking increments
    assert all(x >= y for x, y in zip(e[2.0][1:], e[2.0][2:]))
    assert all(x >= y for x, y in zip(e[1.5][1:], e[1.5][2:]))
    inc = np.diff(e[1.1])
    assert all(x > y for x, y in zip(inc, inc[1:]))


def test_sampled_mode():
    g = build_renorm_graph((2, 3), "sampled", complete_config(6))
    assert g.n_required() == len(g.ports)
    f = build_flow(g)
    assert f.residuals() == {}
    assert f.as_dict() == build_flow(build_renorm_graph((2, 3)), "exact").as_dict()


def test_sampled_mode_missing_pair():
    # vertices 0 and 2 sit in different 1-groups of the 2-group: a level-2 pair
    with pytest.raises(RenormGraphError) as err:
        build_renorm_graph((2, 3), "sampled", complete_config(6, drop={(0, 2)}))
    assert err.value.level == 2 and err.value.pair == (0, 2)
    assert "1.1" in str(err.value) and "2.1" in str(err.value)


def test_addresses_and_csv():
    g = build_renorm_graph((2, 3))
    assert g.address(0) == (1, 1) and g.address(5) == (3, 2)
    assert g.vertex((3, 2)) == 5
    text = build_flow(g).to_csv()
    assert text.splitlines()[0] == "u,v,flow,flow_exact"
    assert text.splitlines()[1].startswith("1.1,1.2,")
