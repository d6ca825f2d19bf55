import math

import numpy as np
import pytest

from lrperc import SeedRecord, ValidationError
from lrperc._kernels import BACKENDS
from lrperc.electro import ElectricalNetwork, effective_resistance, grid_network, z2_network, \
    frame_sites
from lrperc.walk import (escape_identity, escape_probability, profile_to_csv, random_walk,
                         recurrence_profile)


def net_of(n, triples):
    return ElectricalNetwork(n, np.array([(u, v) for u, v, _ in triples]).reshape(-1, 2),
                             [c for _, _, c in triples])


def test_two_vertex_alternates():
    t = random_walk(net_of(2, [(0, 1, 3.0)]), 0, 9, seed=1)
    assert t.path.tolist() == [0, 1] * 5
    assert t.steps == 9
    assert t.visits(2).tolist() == [5, 5]


def test_star_first_step():
    net = net_of(4, [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 2.0)])
    n = 10_000
    first = np.array([random_walk(net, 0, 1, SeedRecord(3).child(i)).path[1] for i in range(n)])
    for leaf, p in ((1, 0.25), (2, 0.25), (3, 0.5)):
        assert abs(np.mean(first == leaf) - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_walk_deterministic_and_backends_agree():
    net = grid_network(6, 2)
    a = random_walk(net, 7, 500, seed=42)
    b = random_walk(net, 7, 500, seed=42)
    assert np.array_equal(a.path, b.path)
    paths = [random_walk(net, 7, 500, 42, backend=name).path for name in BACKENDS]
    assert all(np.array_equal(paths[0], p) for p in paths)


def test_isolated_start_rejected():
    net = net_of(3, [(0, 1, 1.0), (1, 2, 0.0)])
    with pytest.raises(ValidationError):
        random_walk(net, 2, 5, 0)
    with pytest.raises(ValidationError):
        escape_probability(net, 0, [0], 5, 0)


def test_adjacent_boundary_escapes():
    st = escape_probability(net_of(2, [(0, 1, 1.0)]), 0, [1], 200, 0)
    assert st.escapes == 200 and st.estimate == 1.0


def test_gamblers_ruin():
    net = net_of(3, [(0, 1, 1.0), (1, 2, 1.0)])
    st = escape_probability(net, 0, [2], 20_000, 5)
    assert escape_identity(net, 0, [2]) == pytest.approx(0.5)
    assert abs(st.estimate - 0.5) <= 3 * st.stderr
    assert st.returns + st.escapes + st.exhausted == st.replicas


def test_grid_center_to_frame():
    net = grid_network(8, 2)
    center = 3 * 8 + 3
    frame = np.nonzero((net.coords == 0).any(1) | (net.coords == 7).any(1))[0]
    exact = escape_identity(net, center, frame)
    st = escape_probability(net, center, frame, 20_000, SeedRecord(9))
    assert abs(st.estimate - exact) <= 3 * st.stderr


def test_weighted_fixture_agrees_with_identity():
    rng = np.random.default_rng(2)
    net = grid_network(5, 2, rng.uniform(0.2, 3.0, 40))
    st = escape_probability(net, 12, [0, 4, 20, 24], 20_000, 1)
    assert st.exhausted == 0
    assert abs(st.estimate - escape_identity(net, 12, [0, 4, 20, 24])) <= 3 * st.stderr


def test_full_complement_boundary():
    net = grid_network(5, 2)
    others = [v for v in range(net.n) if v != 12]
    st = escape_probability(net, 12, others, 500, 0, budget=10**5)
    assert st.estimate == 1.0


def test_exhausted_counted_separately():
    net = grid_network(30, 1)
    st = escape_probability(net, 15, [0, 29], 300, 0, budget=3)
    assert st.exhausted > 0 and st.escapes == 0
    assert st.returns + st.exhausted == 300


def test_visit_tracking_same_outcomes():
    net = grid_network(7, 2)
    a = escape_probability(net, 24, [0, 48], 300, 4, budget=500, chunk=64)
    b = escape_probability(net, 24, [0, 48], 300, 4, budget=500, chunk=64, track_visits=True)
    assert (a.returns, a.escapes, a.exhausted) == (b.returns, b.escapes, b.exhausted)
    assert b.visits.sum() > 0


def test_z1_resistance_linear():
    family = []
    for R in (4, 8, 16, 32):
        net = grid_network(2 * R + 1, 1, origin=(-R,))
        family.append((R, net, R, [0, 2 * R]))
    rows = recurrence_profile(family)
    # two arms of length R in parallel
    for row in rows:
        assert row.resistance == pytest.approx(row.R / 2, abs=1e-9)
    one_sided = effective_resistance(grid_network(11, 1), [0], [10])
    assert one_sided == pytest.approx(10.0, abs=1e-9)


def test_z2_log_law():
    radii = [8, 16, 32, 64, 128]
    res = []
    for R in radii:
        net = z2_network(R)
        center = (2 * R + 1) * R + R
        res.append(effective_resistance(net, [center], frame_sites(net.coords, (0, 0), R)))
    law = np.log(radii) / (2 * math.pi)
    const = np.mean(np.array(res[:2]) - law[:2])
    assert np.all(np.abs(np.array(res) - (law + const)) <= 0.15 * np.array(res))


def test_profile_csv_and_walks():
    family = [(R, grid_network(2 * R + 1, 1), R, [0, 2 * R]) for R in (2, 4)]
    rows = recurrence_profile(family, replicas=200, seed=3)
    text = profile_to_csv(rows)
    assert text.splitlines()[0] == "R,resistance,escape,stderr,replicas"
    # Z^1: escape = C_eff / C(start) = (2/R) / 2
    for r in rows:
        assert abs(r.escape - 1 / r.R) <= 3 * max(r.stderr, 1e-3)
    assert rows[0].replicas == 200
