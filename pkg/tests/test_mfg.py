import math

import numpy as np
import pytest

from meanfieldnet.config import MfgConfig
from meanfieldnet.errors import StepSizeError
from meanfieldnet.mfg import (
    adjoint_mismatch,
    fields_to_rows,
    pdhg_solve,
    power_from_rate,
    rate_field,
    total_power,
    transport_step,
)


@pytest.fixture
def diffusing_config() -> MfgConfig:
    return MfgConfig(
        T=3.0,
        eta=0.1,
        noise=0.1,
        arrival_pmf=[(1.0, 0.5), (0.5, 0.5)],
        h_range=(1.0, 2.0),
        grid=(9, 3, 9),
    )


def test_rate_field_without_interference(mfg_config):
    p = np.ones((9, 2))
    rho = np.full((9, 2), 1.0 / 18)
    np.testing.assert_allclose(rate_field(p, rho, mfg_config), math.log2(11.0))


def test_rate_field_couples_through_total_power(mfg_config):
    config = mfg_config.with_updates(gbar=0.9)
    p = np.ones((9, 2))
    rho = np.full((9, 2), 1.0 / 18)
    np.testing.assert_allclose(rate_field(p, rho, config), math.log2(2.0))


def test_power_from_rate_inverts_the_rate(diffusing_config):
    p = np.random.default_rng(0).uniform(0.0, 2.0, size=(9, 3))
    rho = np.full((9, 3), 1.0 / 27)
    r = rate_field(p, rho, diffusing_config)
    np.testing.assert_allclose(power_from_rate(r, 0.0, diffusing_config), p)


def test_transport_moves_one_cell_at_the_cap_rate(mfg_config):
    rho = mfg_config.initial_density()
    r = np.full(rho.shape, mfg_config.ds / mfg_config.dt)
    moved = transport_step(rho, r, mfg_config)
    np.testing.assert_allclose(moved[7], [0.5, 0.5])
    assert moved.sum() == pytest.approx(1.0)


def test_transport_conserves_mass_under_diffusion(diffusing_config):
    rho = diffusing_config.initial_density()
    r = np.full(rho.shape, 0.5 * diffusing_config.ds / diffusing_config.dt)
    for _ in range(5):
        rho = transport_step(rho, r, diffusing_config)
    assert rho.sum() == pytest.approx(1.0)
    assert np.all(rho >= 0)


def test_transport_rejects_fast_rates(mfg_config):
    rho = mfg_config.initial_density()
    with pytest.raises(StepSizeError):
        transport_step(rho, np.full(rho.shape, 1.0), mfg_config)


def test_total_power_rules(mfg_config):
    p = np.ones((9, 9, 2))
    rho = np.full((9, 9, 2), 1.0 / 18)
    assert total_power(p, rho, mfg_config) == pytest.approx(3.0)
    assert total_power(p, rho, mfg_config, rule="left") == pytest.approx(3.0)
    rho[-1] = 0.0
    assert total_power(p, rho, mfg_config, rule="left") == pytest.approx(3.0)
    assert total_power(p, rho, mfg_config) == pytest.approx(3.0 - 3.0 / 16)


@pytest.mark.parametrize("config_name", ["mfg_config", "diffusing_config"])
def test_transport_adjoint(config_name, request):
    config = request.getfixturevalue(config_name)
    assert adjoint_mismatch(config, seed=1) < 1e-10


def test_empty_buffers_need_no_power(mfg_config):
    solution = pdhg_solve(mfg_config.with_updates(arrival_pmf=[(0.0, 1.0)]))
    assert solution.total_power == 0.0
    assert solution.cleared_mass == pytest.approx(1.0)
    assert solution.iterations == 0
    assert solution.converged


def test_diffusion_ratio_is_checked(diffusing_config):
    with pytest.raises(StepSizeError):
        pdhg_solve(diffusing_config.with_updates(eta=0.5))


@pytest.mark.slow
@pytest.mark.parametrize("size", [1.0, 2.0, 4.0])
def test_constant_rate_schedule_matches_the_closed_form(mfg_config, size):
    config = mfg_config.with_updates(arrival_pmf=[(size, 1.0)], s_max=size)
    solution = pdhg_solve(config)
    expected = config.T * (2.0 ** (size / config.T) - 1.0) * config.noise / 1.0
    assert solution.cleared_mass >= 0.9
    assert solution.total_power == pytest.approx(expected, rel=0.05)
    assert solution.mass_drift < 1e-9


def test_solution_exports(mfg_config, tmp_path):
    solution = pdhg_solve(mfg_config.with_updates(arrival_pmf=[(0.0, 1.0)]))
    assert set(solution.to_dict()) == {
        "total_power",
        "cleared_mass",
        "pde_residual",
        "iterations",
        "converged",
        "penalty",
        "mass_drift",
    }
    rows = fields_to_rows(solution.grid, "rho")
    assert len(rows) == 9 * 9 * 2
    assert rows[0] == [0.0, 1.0, 0.0, 0.5]
    assert rows[-1][2] == pytest.approx(3.0)
    path = tmp_path / "rho.csv"
    solution.fields_to_csv(path, "p")
    lines = path.read_text().splitlines()
    assert lines[0] == "# p on the (s, h, tau) grid"
    assert lines[1] == "s,h,tau,value"
