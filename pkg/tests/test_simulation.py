import math
import time

import numpy as np
import pytest

from meanfieldnet.builders import MeanFieldWtmBuilder
from meanfieldnet.capacity import multihop_rate_bounds, multihop_rate_exact, multihop_rate_from_transport
from meanfieldnet.errors import ConfigurationError, PolicyCoverageError
from meanfieldnet.simulation import (
    PowerPolicy,
    empirical_interference,
    interference_by_radius,
    interference_bound,
    interference_mean,
    sample_snapshot,
    simulate_massive,
    simulate_multihop,
    simulate_snapshot,
    tracking_radius,
    trial_generators,
)
from meanfieldnet.presets import evaluation_network


@pytest.fixture
def small_builder(small_network):
    builder = MeanFieldWtmBuilder(config=small_network)
    builder.build()
    return builder


def uniform_policy(builder, power):
    return PowerPolicy.uniform(builder.table.NI, len(builder.direct), power)


def test_trial_generators_are_independent_and_reproducible():
    a = [rng.random() for rng in trial_generators(3, 4)]
    b = [rng.random() for rng in trial_generators(3, 4)]
    assert a == b
    assert len(set(a)) == 4


def test_snapshot_without_interference():
    rates, interference = simulate_snapshot(np.array([1.0, 0.5]), np.array([1.0, 2.0]), noise=1.0)
    np.testing.assert_allclose(rates, [1.0, 1.0])
    np.testing.assert_array_equal(interference, [0.0, 0.0])


def test_snapshot_with_interfering_pairs():
    pairs = np.array([[0, 1], [1, 0]])
    rates, interference = simulate_snapshot(
        np.array([1.0, 1.0]),
        np.array([1.0, 1.0]),
        noise=1.0,
        pairs=pairs,
        pair_gains=np.array([1.0, 3.0]),
    )
    np.testing.assert_allclose(interference, [1.0, 3.0])
    np.testing.assert_allclose(rates, [math.log2(1.5), math.log2(1.25)])


def test_snapshot_weights_interference_by_the_transmitter_power():
    rates, interference = simulate_snapshot(
        np.array([1.0, 1.0]),
        np.array([1.0, 1.0]),
        noise=1.0,
        pairs=np.array([[0, 2], [1, 0]]),
        pair_gains=np.array([1.0, 1.0]),
        tx_powers=np.array([1.0, 5.0, 3.0]),
    )
    np.testing.assert_allclose(interference, [3.0, 1.0])
    np.testing.assert_allclose(rates, [math.log2(1.25), math.log2(1.5)])


def test_policy_from_vector_layout():
    policy = PowerPolicy.from_vector(np.arange(6.0), groups=2, states=3)
    np.testing.assert_array_equal(policy.lookup(np.array([1, 0]), np.array([2, 1])), [5.0, 1.0])
    with pytest.raises(PolicyCoverageError):
        PowerPolicy.from_vector(np.arange(5.0), groups=2, states=3)


def test_policy_must_cover_every_pair(small_network, small_builder):
    policy = PowerPolicy.uniform(1, len(small_builder.direct), 1.0)
    with pytest.raises(PolicyCoverageError):
        simulate_massive(small_network, policy, trials=2, seed=0, builder=small_builder)


def test_sample_snapshot_labels(small_network, small_builder):
    rng = trial_generators(0, 1)[0]
    snapshot = sample_snapshot(
        small_network,
        small_builder.direct,
        small_builder.interference,
        small_builder.table,
        rng,
    )
    assert snapshot.links > 0
    assert np.all((snapshot.groups >= 0) & (snapshot.groups < small_builder.table.NI))
    assert np.all((snapshot.states >= 0) & (snapshot.states < len(small_builder.direct)))
    np.testing.assert_array_equal(snapshot.tagged, np.arange(snapshot.links))
    assert np.all(snapshot.tagged[snapshot.pairs[:, 0]] != snapshot.pairs[:, 1])
    np.testing.assert_allclose(snapshot.direct_gains, small_builder.direct.gains[snapshot.states])


@pytest.mark.parametrize("seed", [0, 1, 7])
def test_simulate_massive_is_seed_deterministic(small_network, small_builder, seed):
    policy = uniform_policy(small_builder, 0.5)
    first = simulate_massive(small_network, policy, trials=20, seed=seed, builder=small_builder)
    second = simulate_massive(small_network, policy, trials=20, seed=seed, builder=small_builder)
    assert first.to_dict() == second.to_dict()
    assert first.mean_rate > 0
    assert first.histogram_counts.sum() > 0


def test_simulate_massive_silent_policy(small_network, small_builder):
    report = simulate_massive(small_network, uniform_policy(small_builder, 0.0), trials=5, seed=0, builder=small_builder)
    assert report.mean_rate == 0.0
    assert report.mean_interference == 0.0


def test_simulate_massive_builds_its_own_reduction(small_network, small_builder):
    policy = uniform_policy(small_builder, 0.5)
    report = simulate_massive(small_network, policy, trials=3, seed=4)
    again = simulate_massive(small_network, policy, trials=3, seed=4, builder=small_builder)
    assert report.to_dict() == again.to_dict()


@pytest.mark.slow
def test_standard_error_halves_with_four_times_the_trials(small_network, small_builder):
    policy = uniform_policy(small_builder, 0.5)
    short = simulate_massive(small_network, policy, trials=400, seed=11, builder=small_builder)
    long = simulate_massive(small_network, policy, trials=1600, seed=12, builder=small_builder)
    assert 1.6 <= short.rate_stderr / long.rate_stderr <= 2.4


def test_histogram_csv(small_network, small_builder, tmp_path):
    report = simulate_massive(small_network, uniform_policy(small_builder, 0.5), trials=5, seed=0, builder=small_builder)
    path = tmp_path / "hist.csv"
    report.histogram_to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#")
    assert lines[1] == "rate_lo,rate_hi,count"
    assert len(lines) == 2 + len(report.histogram_counts)


def test_printed_interference_bound():
    assert interference_bound(1.0, 1.0, 1.0, 3.0, 10.0, form="printed") == pytest.approx(1.5758, abs=1e-4)
    assert interference_bound(1.0, 1.0, 1.0, 3.0, 10.0) == pytest.approx(2 * 1.5758, abs=2e-4)


def test_interference_bound_rejects_unknown_form():
    with pytest.raises(ConfigurationError):
        interference_bound(1.0, 1.0, 1.0, 3.0, 10.0, form="loose")


@pytest.mark.parametrize("lam", [0.05, 0.5, 1.0, 4.0])
@pytest.mark.parametrize("r_o", [0.5, 1.0, 3.0, 10.0, 50.0])
@pytest.mark.parametrize("alpha", [2.5, 3.0, 4.0])
def test_exact_mean_stays_below_the_bound(lam, r_o, alpha):
    assert interference_mean(lam, 0.1, 2.0, alpha, r_o) <= interference_bound(lam, 0.1, 2.0, alpha, r_o)


def test_exact_mean_unit_radius():
    # one node at most: 2 * integral of d (1 + d)^-3 over [0, 1] = 0.25
    assert interference_mean(0.1, 1.0, 1.0, 3.0, 1.0) == pytest.approx(0.25)


@pytest.mark.parametrize("seed", range(4))
def test_empirical_interference_matches_the_closed_form(network, seed):
    r_o = network.NmI * network.d0
    report = empirical_interference(network, power=0.1, trials=300, seed=seed)
    poisson_mean = network.lam * math.pi * r_o**2
    expected = report.exact_mean * poisson_mean / math.ceil(poisson_mean)
    assert abs(report.mean - expected) <= 4.0 * report.stderr
    assert report.mean <= report.bound


def test_multihop_needs_room_on_the_torus(small_network):
    with pytest.raises(ConfigurationError):
        simulate_multihop(small_network.with_updates(area_side=3.0), r0=1.0, trials=1, seed=0)


def test_multihop_fixed_hop_rate_matches_the_hop_count_law(small_network):
    config = small_network.with_updates(lam=4.0, area_side=10.0, Nm=4, NmI=4)
    report = simulate_multihop(config, r0=1.0, trials=40, seed=3, hop_rate=1.0, links=25)
    expected = multihop_rate_exact(1.0, 1.0, 1.0, 4)
    assert abs(report.mean_rate - expected) <= 4.0 * report.rate_stderr + 0.01
    assert report.extra["mean_hops"] == pytest.approx(3.125, abs=0.2)


def test_multihop_sinr_rates_are_deterministic(small_network):
    config = small_network.with_updates(lam=1.0, area_side=10.0, Nm=4, NmI=4)
    first = simulate_multihop(config, r0=1.5, trials=3, seed=5, links=10)
    second = simulate_multihop(config, r0=1.5, trials=3, seed=5, links=10)
    assert first.to_dict() == second.to_dict()
    assert first.mean_rate > 0
    assert first.mean_interference > 0


def test_tracking_radius(small_builder):
    interference = small_builder.interference
    assert tracking_radius(interference, 0, 1.0) == 0.0
    expected = (int(interference.distance_index[0]) + 1) * 0.5
    assert tracking_radius(interference, 1, 0.5) == expected


def test_sample_snapshot_tags_a_subset(small_network):
    config = small_network.with_updates(lam=0.5)
    builder = MeanFieldWtmBuilder(config=config)
    builder.build()
    rng = trial_generators(2, 1)[0]
    snapshot = sample_snapshot(
        config,
        builder.direct,
        builder.interference,
        builder.table,
        rng,
        links=10,
    )
    assert snapshot.links > 10
    assert snapshot.tagged.size == 10
    assert np.all(np.diff(snapshot.tagged) > 0)
    assert np.all(snapshot.pairs[:, 0] < 10)
    assert np.all(snapshot.tagged[snapshot.pairs[:, 0]] != snapshot.pairs[:, 1])
    assert np.all((snapshot.groups >= 0) & (snapshot.groups < builder.table.NI))


@pytest.mark.slow
def test_tagged_links_estimate_the_full_network_rate(small_network):
    config = small_network.with_updates(lam=0.2)
    builder = MeanFieldWtmBuilder(config=config)
    builder.build()
    policy = uniform_policy(builder, 0.5)
    full = simulate_massive(config, policy, trials=400, seed=21, builder=builder, links=None)
    tagged = simulate_massive(config, policy, trials=400, seed=22, builder=builder, links=10)
    assert abs(full.mean_rate - tagged.mean_rate) <= 4.0 * (full.rate_stderr + tagged.rate_stderr)


@pytest.mark.slow
def test_massive_simulation_keeps_pace_with_large_runs():
    # 200 trials in 12 s puts 10^4 trials of a fig1 point under 10 min
    config = evaluation_network(lam=2.0, p_max=0.1)
    builder = MeanFieldWtmBuilder(config=config)
    builder.build()
    policy = uniform_policy(builder, 0.1)
    start = time.perf_counter()
    report = simulate_massive(config, policy, trials=200, seed=0, builder=builder)
    assert time.perf_counter() - start < 12.0
    assert report.mean_rate > 0


@pytest.mark.slow
def test_multihop_rate_on_a_long_span(small_network):
    config = small_network.with_updates(lam=10.0, Nm=50, NmI=50, area_side=100.0)
    report = simulate_multihop(config, r0=1.0, trials=40, seed=8, hop_rate=1.0, links=100)
    assert report.mean_rate == pytest.approx(multihop_rate_from_transport(1.0, 1.0, 1.0, 50), rel=0.15)
    lower, upper = multihop_rate_bounds(1.0, 1.0, 1.0, 50)
    assert lower - 3.0 * report.rate_stderr <= report.mean_rate <= upper + 3.0 * report.rate_stderr


def test_interference_by_radius_nests_the_truncations(network):
    inner, outer = interference_by_radius(network, power=0.1, radii=[2.0, 4.0], trials=50, seed=1)
    assert inner.mean < outer.mean
    single = empirical_interference(network, power=0.1, trials=50, seed=1, r_o=4.0)
    assert single.mean == pytest.approx(outer.mean)
    with pytest.raises(ConfigurationError):
        interference_by_radius(network, power=0.1, radii=[0.0, 1.0], trials=5, seed=0)


@pytest.mark.slow
@pytest.mark.parametrize("alpha", [3.0, 4.0])
def test_doubling_a_wide_radius_follows_the_closed_form(network, alpha):
    config = network.with_updates(alpha=alpha)
    near, far = interference_by_radius(config, power=0.1, radii=[10.0, 20.0], trials=2000, seed=5)
    # ceil(lambda pi r^2) nodes vs. a PPP of mean lambda pi r^2
    ppp = [
        report.exact_mean * math.pi * r**2 / math.ceil(math.pi * r**2 - 1e-12)
        for report, r in ((near, 10.0), (far, 20.0))
    ]
    assert far.mean / near.mean == pytest.approx(ppp[1] / ppp[0], abs=0.01)
    if alpha == 4.0:
        assert far.mean / near.mean - 1.0 < 0.02


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(20))
def test_empirical_interference_stays_below_the_bound(network, seed):
    rng = np.random.default_rng(seed)
    config = network.with_updates(alpha=float(rng.choice([2.5, 3.0, 4.0])), lam=float(rng.uniform(0.5, 2.0)))
    report = empirical_interference(config, power=0.1, trials=2000, seed=seed, r_o=float(rng.uniform(2.0, 5.0)))
    assert report.mean <= report.bound
