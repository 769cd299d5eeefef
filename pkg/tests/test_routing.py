import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from meanfieldnet.channel import NodeSet
from meanfieldnet.errors import ConfigurationError, DomainError, RoutingError
from meanfieldnet.routing import (
    deviation_sigma,
    drop_revisits,
    hop_count_pmf,
    hop_portions,
    nearest_nodes,
    node_tree,
    plan_route,
    relay_count,
    routes_to_csv,
    single_hop_pmf,
    torus_distance,
)


@pytest.fixture
def line_nodes() -> NodeSet:
    positions = np.array([[0.0, 0.0], [1.0, 0.1], [2.0, -0.1], [3.0, 0.0], [10.0, 10.0]])
    return NodeSet(positions=positions, seed=0, area_side=20.0)


def test_hop_count_pmf_two_rings():
    np.testing.assert_allclose(hop_count_pmf(1.0, 1.0, 2), [0.25, 0.75])


def test_hop_count_pmf_residual_atom():
    np.testing.assert_allclose(hop_count_pmf(1.5, 1.0, 2), [0.5625, 0.4375])


@given(
    r0=st.floats(min_value=0.2, max_value=5.0),
    Nm=st.integers(min_value=1, max_value=12),
)
def test_hop_count_pmf_is_a_pmf(r0, Nm):
    pmf = hop_count_pmf(r0, 1.0, Nm)
    assert np.all(pmf >= 0)
    assert math.fsum(pmf) == pytest.approx(1.0)


def test_hop_portions():
    assert hop_portions(1.0, 1.0, 2) == pytest.approx((1.0, 0.0))
    eta_n, eta_r = hop_portions(1.0, 1.0, 4)
    assert eta_n == pytest.approx((1 + 3 + 10 / 3 + 3.5) / 16)
    assert eta_n + eta_r == pytest.approx(1.0)


def test_deviation_sigma():
    assert deviation_sigma(1.0) == pytest.approx(0.159155, abs=1e-6)
    with pytest.raises(DomainError):
        deviation_sigma(0.0)


@pytest.mark.parametrize(
    "distance, r0, expected",
    [(0.5, 1.0, 0), (1.0, 1.0, 0), (1.5, 1.0, 1), (3.0, 1.0, 2), (3.0, 0.5, 5)],
)
def test_relay_count(distance, r0, expected):
    assert relay_count(distance, r0) == expected


def test_torus_distance_wraps():
    a = np.array([[0.5, 5.0]])
    b = np.array([[19.5, 5.0]])
    np.testing.assert_allclose(torus_distance(a, b, 20.0), [1.0])


def test_plan_route_follows_the_straight_line(line_nodes):
    plan = plan_route(0, 3, 1.0, line_nodes)
    assert plan.hops == [0, 1, 2, 3]
    assert plan.relays == [1, 2]
    assert plan.hop_count == 3
    np.testing.assert_allclose(plan.deviations, [0.1, 0.1])
    np.testing.assert_allclose(plan.hop_distances, [math.sqrt(1.01), math.sqrt(1.04), math.sqrt(1.01)])


def test_plan_route_collapses_repeated_relays(line_nodes):
    plan = plan_route(0, 3, 0.5, line_nodes, node_tree(line_nodes))
    assert plan.hops == [0, 1, 2, 3]
    assert plan.deviations.size == 5


def test_plan_route_short_link_is_direct(line_nodes):
    plan = plan_route(0, 1, 2.0, line_nodes)
    assert plan.hops == [0, 1]
    assert plan.deviations.size == 0


def test_plan_route_wraps_on_the_torus():
    nodes = NodeSet(positions=np.array([[0.5, 5.0], [19.5, 5.0]]), seed=0, area_side=20.0)
    plan = plan_route(0, 1, 2.0, nodes)
    np.testing.assert_allclose(plan.hop_distances, [1.0])


def test_plan_route_errors(line_nodes):
    with pytest.raises(DomainError):
        plan_route(0, 3, 0.0, line_nodes)
    empty = NodeSet(positions=np.zeros((0, 2)), seed=0, area_side=20.0)
    with pytest.raises(RoutingError):
        plan_route(0, 0, 1.0, empty)


@pytest.mark.parametrize(
    "hops, expected",
    [
        ([0, 1, 1, 2, 3], [0, 1, 2, 3]),
        ([0, 1, 0, 2, 1, 3], [0, 1, 2, 3]),
        ([0, 3, 1, 3], [0, 1, 3]),
        ([0, 0, 3], [0, 3]),
    ],
)
def test_drop_revisits(hops, expected):
    assert drop_revisits(hops) == expected


def test_plan_route_never_revisits_a_node(line_nodes, monkeypatch):
    chosen = np.array([1, 0, 2, 1, 3])
    monkeypatch.setattr(
        "meanfieldnet.routing.nearest_nodes",
        lambda tree, points, side: (chosen, np.zeros(len(points))),
    )
    plan = plan_route(0, 3, 0.5, line_nodes)
    assert plan.hops == [0, 1, 2, 3]
    assert len(set(plan.hops)) == len(plan.hops)
    assert plan.hop_distances.size == 3


def grid_points(spacing, per_side):
    axis = (np.arange(per_side) + 0.5) * spacing
    return np.array([(x, y) for x in axis for y in axis])


@pytest.mark.slow
@pytest.mark.parametrize("lam", [1.0, 5.0, 10.0])
def test_nearest_node_deviation_is_rayleigh(lam):
    # query points 6 / sqrt(lambda) apart see disjoint neighbourhoods, so samples are independent
    spacing = 6.0 / math.sqrt(lam)
    side = 10 * spacing
    queries = grid_points(spacing, 10)
    rng = np.random.default_rng(2024)
    deviations = []
    for _ in range(100):
        positions = rng.uniform(0.0, side, size=(rng.poisson(lam * side**2), 2))
        nodes = NodeSet(positions=positions, seed=0, area_side=side)
        _, distances = nearest_nodes(node_tree(nodes), queries, side)
        deviations.append(distances)
    deviations = np.concatenate(deviations)
    assert deviations.size == 10_000
    scale = math.sqrt(deviation_sigma(lam))
    assert stats.kstest(deviations, "rayleigh", args=(0.0, scale)).pvalue > 0.01


@pytest.mark.slow
def test_relay_to_relay_spread_matches_the_doubled_deviation():
    lam, r0 = 10.0, 2.0
    side = 60.0
    # links of three hops along x, 10 m apart in x and 4 m apart in y
    sources = np.array([(x, y) for x in np.arange(0.0, side, 10.0) for y in np.arange(0.0, side, 4.0)])
    targets = sources + np.array([3.0 * r0, 0.0])
    rng = np.random.default_rng(7)
    spans = []
    for _ in range(112):
        positions = rng.uniform(0.0, side, size=(rng.poisson(lam * side**2), 2))
        count = positions.shape[0]
        nodes = NodeSet(
            positions=np.vstack([positions, sources, np.mod(targets, side)]),
            seed=0,
            area_side=side,
        )
        tree = node_tree(nodes)
        for k in range(sources.shape[0]):
            plan = plan_route(count + k, count + sources.shape[0] + k, r0, nodes, tree)
            if plan.hop_count == 3:
                spans.append(plan.hop_distances[1])
    spans = np.asarray(spans)
    assert spans.size > 9_900
    assert np.mean(spans) == pytest.approx(r0, abs=0.02)
    assert np.var(spans) == pytest.approx(2.0 * deviation_sigma(lam), rel=0.1)


def test_routes_to_csv(line_nodes, tmp_path):
    plans = [plan_route(0, 3, 1.0, line_nodes), plan_route(0, 1, 2.0, line_nodes)]
    path = tmp_path / "routes.csv"
    routes_to_csv(plans, line_nodes, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "link_id,hop_index,x,y,hop_distance"
    assert len(lines) == 1 + 4 + 2


def test_single_hop_pmf_is_centered_on_the_hop_length():
    dist = single_hop_pmf(2.0, 4.0)
    assert dist.eps.sum() == pytest.approx(1.0)
    assert dist.mean == pytest.approx(2.0, abs=1e-6)
    assert (dist.eta_n, dist.eta_r) == (1.0, 0.0)


def test_relay_hops_spread_wider():
    grid = np.linspace(1.0, 3.0, 11)
    endpoint = single_hop_pmf(2.0, 4.0, ds_grid=grid, eta_n=1.0)
    relayed = single_hop_pmf(2.0, 4.0, ds_grid=grid, eta_n=0.0)
    assert relayed.eps[5] < endpoint.eps[5]
    assert relayed.eps[0] > endpoint.eps[0]


def test_single_hop_pmf_single_bin():
    dist = single_hop_pmf(1.5, 1.0, bins=1)
    np.testing.assert_allclose(dist.ds_values, [1.5])
    np.testing.assert_allclose(dist.eps, [1.0])


def test_single_hop_pmf_rejects_bad_inputs():
    with pytest.raises(ConfigurationError):
        single_hop_pmf(1.0, 1.0, eta_n=1.5)
    with pytest.raises(ConfigurationError):
        single_hop_pmf(1.0, 1.0, ds_grid=[1.0, 0.5])
    with pytest.raises(DomainError):
        single_hop_pmf(-1.0, 1.0)


def test_single_hop_pmf_csv(tmp_path):
    path = tmp_path / "iesh.csv"
    single_hop_pmf(2.0, 4.0, bins=5).to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# r0=2.0")
    assert "ds,eps" in lines
