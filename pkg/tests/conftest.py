import numpy as np
import pytest

from meanfieldnet.config import CapacityConfig, MfgConfig, NetworkConfig
from meanfieldnet.reduction import MeanFieldWtm


@pytest.fixture
def network() -> NetworkConfig:
    """Evaluation setting: n = 10 mW, alpha = 3, d0 = 1, Nm = 2, NmI = 10."""
    return NetworkConfig(lam=1.0, noise=10.0, alpha=3.0, d0=1.0, Nm=2, NmI=10, p_max=0.1)


@pytest.fixture
def small_network() -> NetworkConfig:
    """Sparse, short-range network that keeps reductions and simulations tiny."""
    return NetworkConfig(
        lam=0.05,
        area_side=20.0,
        noise=1.0,
        alpha=3.0,
        Nm=2,
        NmI=3,
        p_max=1.0,
        fading_levels=[(2.0, 0.5), (0.5, 0.5)],
        Na=1,
        Nc=2,
    )


@pytest.fixture
def two_link_problem() -> MeanFieldWtm:
    return MeanFieldWtm(
        omega=np.array([0.5, 0.5]),
        g=np.array([1.0, 0.5]),
        Gtilde=np.array([[0.0, 0.1], [0.2, 0.0]]),
        noise=1.0,
        p_max=1.0,
    )


@pytest.fixture
def capacity_config() -> CapacityConfig:
    network = NetworkConfig(lam=1.0, noise=10.0, Nm=10, NmI=10, p_ave=0.1, p_max=0.1)
    return CapacityConfig(network=network, r0_min=0.5, r0_max=3.0, delta_r=0.2, ds_bins=5)


@pytest.fixture
def mfg_config() -> MfgConfig:
    return MfgConfig(
        T=3.0,
        noise=0.1,
        arrival_pmf=[(1.0, 1.0)],
        fixed_channel=True,
        grid=(9, 2, 9),
        max_iterations=1500,
    )
