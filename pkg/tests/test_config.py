import json

import numpy as np
import pytest
from pydantic import ValidationError

from meanfieldnet.config import (
    CapacityConfig,
    ExperimentSpec,
    MfgConfig,
    NetworkConfig,
    RateFloorRule,
    SweepAxis,
    TdmScheme,
    collect_diagnostics,
    detect_model,
    load_config,
    parse_override,
    sinr_floor,
)
from meanfieldnet.errors import ConfigurationError


def write(tmp_path, name, document):
    path = tmp_path / name
    path.write_text(json.dumps(document))
    return path


def test_sinr_floor_rules():
    assert sinr_floor(1.0) == pytest.approx(1.0)
    assert sinr_floor(1.0, RateFloorRule.PRINTED) == pytest.approx(1.0)
    assert sinr_floor(2.0) == pytest.approx(3.0)
    assert sinr_floor(2.0, RateFloorRule.PRINTED) == pytest.approx(2.0)


def test_network_accepts_lambda_key():
    config = NetworkConfig.model_validate({"lambda": 2.0})
    assert config.lam == 2.0
    assert config.with_updates(**{"lambda": 0.5}).lam == 0.5


def test_network_interferer_count(network):
    assert network.interferer_count == 315


@pytest.mark.parametrize(
    "updates",
    [
        {"alpha": 2.0},
        {"lambda": 0.0},
        {"fading_levels": [[2.0, 0.5], [1.0, 0.4]]},
        {"fading_levels": [[1.0, 0.5], [2.0, 0.5]]},
        {"direct_fading_levels": [[2.0, 0.5], [1.0, 0.4]]},
        {"NmI": 1, "Nm": 2},
        {"p_ave": -1.0},
    ],
)
def test_network_rejects_invalid(updates):
    with pytest.raises(ValidationError):
        NetworkConfig.model_validate({"lambda": 1.0, **updates})


def test_load_config_round_trip(tmp_path, network):
    path = write(tmp_path, "network.json", network.model_dump(by_alias=True, mode="json"))
    assert load_config(path, NetworkConfig) == network


def test_load_config_reports_every_violation(tmp_path):
    path = write(tmp_path, "bad.json", {"lambda": 1.0, "alpha": 2.0, "fading_levels": [[1.0, 0.9]]})
    with pytest.raises(ConfigurationError) as info:
        load_config(path, NetworkConfig)
    fields = [field for field, _ in info.value.diagnostics]
    assert "alpha" in fields
    assert "fading_levels" in fields


def test_collect_diagnostics_clean_file(tmp_path, network):
    path = write(tmp_path, "network.json", network.model_dump(by_alias=True, mode="json"))
    assert collect_diagnostics(path) == []


def test_collect_diagnostics_alpha_two(tmp_path):
    path = write(tmp_path, "network.json", {"lambda": 1.0, "alpha": 2.0})
    diagnostics = collect_diagnostics(path)
    assert len(diagnostics) == 1
    field, message = diagnostics[0]
    assert field == "alpha"
    assert "diverges" in message


def test_collect_diagnostics_parse_error_has_location(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"lambda": 1.0,\n  "alpha": }')
    with pytest.raises(ConfigurationError) as info:
        collect_diagnostics(path)
    assert "line 2" in str(info.value)


def test_missing_file_is_a_configuration_error(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "absent.json", NetworkConfig)


def test_detect_model():
    assert detect_model({"lambda": 1.0}) is NetworkConfig
    assert detect_model({"T": 3, "arrival_pmf": [[1, 1]]}) is MfgConfig
    assert detect_model({"network": {}, "r0_min": 1}) is CapacityConfig
    assert detect_model({"name": "x", "trials": 3}) is ExperimentSpec


@pytest.mark.parametrize(
    "text,expected",
    [
        ("p_max=0.02", ("p_max", 0.02)),
        ("sweep.lambda=[1, 2]", ("sweep.lambda", [1, 2])),
        ("rate_floor_rule=printed", ("rate_floor_rule", "printed")),
    ],
)
def test_parse_override(text, expected):
    assert parse_override(text) == expected


def test_parse_override_needs_equals():
    with pytest.raises(ConfigurationError):
        parse_override("p_max")


def test_mfg_initial_density_point_mass(mfg_config):
    rho = mfg_config.initial_density()
    assert rho.shape == (9, 2)
    assert rho.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(rho[-1], [0.5, 0.5])
    assert mfg_config.ds == pytest.approx(1.0 / 8)
    assert mfg_config.dt == pytest.approx(3.0 / 8)


def test_mfg_fixed_channel_forbids_diffusion():
    with pytest.raises(ValidationError):
        MfgConfig(T=1.0, arrival_pmf=[(1.0, 1.0)], fixed_channel=True, eta=0.5)


def test_mfg_rho0_must_carry_unit_mass():
    with pytest.raises(ValidationError):
        MfgConfig(T=1.0, arrival_pmf=[(1.0, 1.0)], grid=(2, 2, 2), rho0=[[0.5, 0.0], [0.0, 0.0]])


def test_capacity_routes_network_updates(capacity_config):
    updated = capacity_config.with_updates(**{"lambda": 2.0, "r0_min": 1.0})
    assert updated.network.lam == 2.0
    assert updated.r0_min == 1.0
    assert updated.hop_tolerance == 0.2


def test_capacity_bracket_must_fit_link_span(capacity_config):
    with pytest.raises(ValidationError):
        capacity_config.with_updates(r0_max=11.0)


def test_tdm_scheme_validation():
    scheme = TdmScheme(name="pairs", partition=[[0, 1], [2, 3]])
    assert scheme.link_count == 4
    assert scheme.fractions == [0.5, 0.5]
    with pytest.raises(ValidationError):
        TdmScheme(partition=[[0, 1], [1, 2]])
    with pytest.raises(ValidationError):
        TdmScheme(partition=[[0], [2]])
    with pytest.raises(ValidationError):
        TdmScheme(partition=[[0], [1]], slot_fractions=[0.5, 0.4])


def test_sweep_points_first_axis_slowest(network):
    spec = ExperimentSpec(
        name="grid",
        network=network,
        sweep=[
            SweepAxis(parameter="lambda", values=[0.5, 1.0]),
            SweepAxis(parameter="p_max", values=[0.01, 0.1]),
        ],
    )
    assert spec.sweep_points() == [
        {"lambda": 0.5, "p_max": 0.01},
        {"lambda": 0.5, "p_max": 0.1},
        {"lambda": 1.0, "p_max": 0.01},
        {"lambda": 1.0, "p_max": 0.1},
    ]


def test_empty_sweep_is_a_single_point(network):
    spec = ExperimentSpec(name="single", network=network, sweep=[SweepAxis(parameter="p_max", values=[])])
    assert spec.sweep_points() == [{}]


def test_sweep_parameter_must_exist(network):
    with pytest.raises(ValidationError):
        ExperimentSpec(name="bad", network=network, sweep=[SweepAxis(parameter="bogus", values=[1.0])])
