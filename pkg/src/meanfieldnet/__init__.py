"""Imports for meanfieldnet module."""

from .__about__ import __version__
from .builders import IeshProblemBuilder, MeanFieldWtmBuilder
from .capacity import iesh_g_capacity, iesh_s_capacity
from .channel import (
    direct_gain_distribution,
    distance_pmf,
    interference_gain_distribution,
    path_loss,
    sample_ppp,
)
from .config import CapacityConfig, ExperimentSpec, MfgConfig, NetworkConfig, TdmScheme, load_config
from .errors import (
    ConfigurationError,
    InfeasibleProblemError,
    MeanFieldError,
    NumericalError,
)
from .mfg import pdhg_solve
from .presets import PresetFactory, run_preset
from .reduction import MeanFieldWtm, reduce_network
from .routing import plan_route, single_hop_pmf
from .simulation import PowerPolicy, empirical_interference, simulate_massive, simulate_multihop
from .tdm import tdm_compare
from .wtm import feasibility_check, mapel_solve

__all__ = [
    "__version__",
    "CapacityConfig",
    "ConfigurationError",
    "ExperimentSpec",
    "IeshProblemBuilder",
    "InfeasibleProblemError",
    "MeanFieldError",
    "MeanFieldWtm",
    "MeanFieldWtmBuilder",
    "MfgConfig",
    "NetworkConfig",
    "NumericalError",
    "PowerPolicy",
    "PresetFactory",
    "TdmScheme",
    "direct_gain_distribution",
    "distance_pmf",
    "empirical_interference",
    "feasibility_check",
    "iesh_g_capacity",
    "iesh_s_capacity",
    "interference_gain_distribution",
    "load_config",
    "mapel_solve",
    "path_loss",
    "pdhg_solve",
    "plan_route",
    "reduce_network",
    "run_preset",
    "sample_ppp",
    "simulate_massive",
    "simulate_multihop",
    "single_hop_pmf",
    "tdm_compare",
]
