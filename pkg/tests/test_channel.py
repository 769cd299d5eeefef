import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meanfieldnet.channel import (
    GainKind,
    direct_gain_distribution,
    distance_only_distribution,
    distance_pmf,
    interference_gain_distribution,
    mean_interference_gain,
    path_loss,
    rayleigh_amplitude_centroids,
    rayleigh_fading_levels,
    ring_index,
    sample_ppp,
    sample_ppp_points,
)
from meanfieldnet.config import NetworkConfig
from meanfieldnet.errors import ConfigurationError, DomainError


def test_path_loss_unit_distance():
    assert path_loss(1.0, 3.0) == pytest.approx(0.125)


def test_path_loss_is_bounded_at_zero():
    assert path_loss(0.0, 4.0) == 1.0


def test_path_loss_rejects_negative_distance():
    with pytest.raises(DomainError):
        path_loss(np.array([1.0, -0.5]), 3.0)


def test_distance_pmf_two_rings():
    np.testing.assert_allclose(distance_pmf(2), [0.25, 0.75])


def test_distance_pmf_rejects_zero_rings():
    with pytest.raises(ConfigurationError):
        distance_pmf(0)


@given(st.integers(min_value=1, max_value=200))
def test_distance_pmf_is_a_pmf(Nm):
    pmf = distance_pmf(Nm)
    assert pmf.shape == (Nm,)
    assert np.all(pmf > 0)
    assert math.fsum(pmf) == pytest.approx(1.0, abs=1e-12)


def test_ring_index_clips_into_range():
    np.testing.assert_array_equal(ring_index(np.array([0.0, 0.5, 1.0, 1.5, 7.0]), 1.0, 3), [0, 0, 0, 1, 2])


def test_direct_distribution_top_entry(network):
    direct = direct_gain_distribution(network)
    assert direct.kind == GainKind.DIRECT
    assert len(direct) == 8
    assert direct.gains[0] == pytest.approx(0.575563, abs=1e-6)
    assert direct.probs[0] == pytest.approx(0.0625)
    assert np.all(np.diff(direct.gains) <= 0)
    assert math.fsum(direct.probs) == pytest.approx(1.0, abs=1e-12)


def test_direct_distribution_keeps_level_and_ring(network):
    direct = direct_gain_distribution(network)
    rebuilt = network.fading_gains[direct.level_index] * path_loss(
        (direct.distance_index + 1) * network.d0,
        network.alpha,
    )
    np.testing.assert_allclose(direct.gains, rebuilt)
    lookup = direct.index_lookup()
    assert lookup.shape == (4, 2)
    np.testing.assert_array_equal(lookup[direct.level_index, direct.distance_index], np.arange(8))


def test_direct_levels_leave_the_interference_table_alone(network):
    levels = [(2.0, 0.5), (0.5, 0.5)]
    config = network.with_updates(direct_fading_levels=levels)
    direct = direct_gain_distribution(config)
    assert len(direct) == 2 * config.Nm
    np.testing.assert_allclose(
        direct.gains,
        config.direct_fading_gains[direct.level_index] * path_loss((direct.distance_index + 1) * config.d0, config.alpha),
    )
    np.testing.assert_allclose(interference_gain_distribution(config).gains, interference_gain_distribution(network).gains)
    assert network.direct_levels == network.fading_levels


def test_interference_distribution_support(network):
    interference = interference_gain_distribution(network)
    assert interference.kind == GainKind.INTERFERENCE
    assert len(interference) == 4 * network.NmI
    assert mean_interference_gain(network) == pytest.approx(
        network.interferer_count * interference.mean,
    )


def test_distance_only_distribution_without_fading():
    dist = distance_only_distribution(np.array([1.0, 2.0]), np.array([0.4, 0.6]), 3.0, [(1.0, 1.0)])
    np.testing.assert_allclose(dist.gains, [0.125, 3.0**-3])
    np.testing.assert_allclose(dist.probs, [0.4, 0.6])


def test_rayleigh_levels_reproduce_four_level_table():
    levels = rayleigh_fading_levels(4)
    np.testing.assert_allclose([h for h, _ in levels], [4.6045, 1.9805, 0.9392, 0.2412], atol=1e-3)
    assert all(beta == pytest.approx(0.25) for _, beta in levels)


def test_rayleigh_amplitude_centroids_four_levels():
    np.testing.assert_allclose(
        rayleigh_amplitude_centroids(4),
        [2.1458, 1.4073, 0.9691, 0.4911],
        atol=1e-3,
    )


@pytest.mark.parametrize("levels", [1, 2, 6, 10])
def test_rayleigh_centroids_preserve_the_mean(levels):
    # E[amplitude] of a unit Rayleigh variable is sqrt(pi / 2)
    assert rayleigh_amplitude_centroids(levels).mean() == pytest.approx(math.sqrt(math.pi / 2.0))
    NetworkConfig(lam=1.0, fading_levels=rayleigh_fading_levels(levels))


def test_sample_ppp_is_seed_deterministic(network):
    a = sample_ppp(network, seed=7)
    b = sample_ppp(network, seed=7)
    np.testing.assert_array_equal(a.positions, b.positions)
    assert np.all((a.positions >= 0) & (a.positions < network.area_side))


def test_sample_ppp_zero_intensity_is_empty():
    assert len(sample_ppp_points(0.0, 10.0, seed=1)) == 0


@pytest.mark.parametrize("intensity,side", [(-1.0, 10.0), (1.0, 0.0)])
def test_sample_ppp_rejects_bad_geometry(intensity, side):
    with pytest.raises(ConfigurationError):
        sample_ppp_points(intensity, side, seed=0)


@settings(deadline=None, max_examples=20)
@given(st.integers(min_value=0, max_value=2**31))
def test_sample_ppp_count_is_poisson_scaled(seed):
    # count within 6 standard deviations of lambda * S
    nodes = sample_ppp_points(1.0, 20.0, seed)
    assert abs(len(nodes) - 400) < 6 * math.sqrt(400)


def test_node_set_csv(tmp_path):
    nodes = sample_ppp_points(0.5, 4.0, seed=3)
    path = tmp_path / "nodes.csv"
    nodes.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y"
    assert len(lines) == len(nodes) + 1
