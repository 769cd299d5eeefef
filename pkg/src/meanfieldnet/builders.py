"""meanfieldnet.builders

Builders that assemble reduced WTM problems from a network configuration.
Builders provide a fluent interface: adjust the scenario with ``set_*``
methods, then call ``build`` to run the channel model and the mean-field
reduction.

Key Classes:

Products:
    - MeanFieldWtm (from ``reduction``): the reduced problem of a massive
      single-hop network.
    - IeshProblem: the reduced problem of the ideal equivalent single-hop
      network at one design hop length, together with its hop-distance law.

Builders:
    - BaseBuilder: generic builder holding the network config and the
      intermediate reduction products of the last build.
    - MeanFieldWtmBuilder: builds MeanFieldWtm for a massive network.
    - IeshProblemBuilder: builds IeshProblem for a hop length r0, with or
      without small-scale fading.

Usage:
Instantiate a builder with a config, chain the setters and call ``build``.
The group table, posteriors and gain distributions used by the last build
stay available on the builder (``table``, ``posteriors``, ``direct``,
``interference``) for simulation and diagnostics.

Example:
    from meanfieldnet.builders import MeanFieldWtmBuilder
    from meanfieldnet.config import NetworkConfig

    problem = (MeanFieldWtmBuilder(config=NetworkConfig(lam=1.0))
               .set_power_cap(0.02)
               .set_tracking(Na=1, Nc=2)
               .build())
"""

import logging
import math
from typing import Generic, List, Optional, Tuple, TypeVar

from pydantic import ConfigDict
from pydantic.dataclasses import dataclass

from .channel import (
    GainDistribution,
    direct_gain_distribution,
    distance_only_distribution,
    interference_gain_distribution,
)
from .config import CapacityConfig, NetworkConfig
from .reduction import (
    InterferenceGroupTable,
    MeanFieldWtm,
    PosteriorTables,
    build_group_table,
    build_wtm,
    posterior_tables,
)
from .routing import IeshDistribution, hop_portions, single_hop_pmf

logger = logging.getLogger(__name__)

T = TypeVar("T")

NO_FADING: List[Tuple[float, float]] = [(1.0, 1.0)]


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class IeshProblem:
    r0: float
    problem: MeanFieldWtm
    distribution: IeshDistribution
    fading: bool


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class BaseBuilder(Generic[T]):
    config: NetworkConfig
    p_max: Optional[float] = None
    direct: Optional[GainDistribution] = None
    interference: Optional[GainDistribution] = None
    table: Optional[InterferenceGroupTable] = None
    posteriors: Optional[PosteriorTables] = None

    def reset(self) -> None:
        self.direct = None
        self.interference = None
        self.table = None
        self.posteriors = None

    def set_config(self, config: NetworkConfig):
        self.config = config
        self.reset()
        return self

    def set_fading_levels(self, fading_levels: List[Tuple[float, float]]):
        return self.set_config(self.config.with_updates(fading_levels=fading_levels))

    def set_direct_fading_levels(self, fading_levels: Optional[List[Tuple[float, float]]]):
        return self.set_config(self.config.with_updates(direct_fading_levels=fading_levels))

    def set_tracking(self, Na: int, Nc: int):
        return self.set_config(self.config.with_updates(Na=Na, Nc=Nc))

    def set_power_cap(self, p_max: float):
        self.p_max = p_max
        return self

    def set_average_cap(self, p_ave: Optional[float]):
        return self.set_config(self.config.with_updates(p_ave=p_ave))

    def set_rate_floor(self, r_min: float):
        return self.set_config(self.config.with_updates(r_min=r_min))

    def _reduce(self, config: NetworkConfig, direct: GainDistribution, p_max: float) -> MeanFieldWtm:
        self.direct = direct
        self.interference = interference_gain_distribution(config)
        self.table = build_group_table(config, self.interference)
        self.posteriors = posterior_tables(self.table, self.interference)
        problem = build_wtm(
            config,
            self.direct,
            self.table,
            self.posteriors,
            interference_dist=self.interference,
            p_max=p_max,
        )
        logger.debug(
            "Reduced problem: %d groups x %d gain states = %d variables",
            self.table.NI,
            len(self.direct),
            problem.size,
        )
        return problem

    def build(self) -> T:
        raise NotImplementedError


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class MeanFieldWtmBuilder(BaseBuilder[MeanFieldWtm]):
    direct_override: Optional[GainDistribution] = None

    def set_direct_distribution(self, direct: GainDistribution):
        self.direct_override = direct
        return self

    def build(self) -> MeanFieldWtm:
        direct = self.direct_override or direct_gain_distribution(self.config)
        p_max = self.p_max if self.p_max is not None else self.config.p_max
        return self._reduce(self.config, direct, p_max)


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class IeshProblemBuilder(BaseBuilder[IeshProblem]):
    """Builds the IESH problem at one hop length.

    Without fading (IESH-s) the direct and interfering gains are pure path
    loss and the per-link cap is lifted; only the average cap binds. With
    fading (IESH-g) the network's fading law applies to both and the
    per-link cap is ``p_max``.
    """

    r0: float = 1.0
    fading: bool = False
    ds_bins: int = 21

    @classmethod
    def from_capacity(cls, capacity: CapacityConfig, fading: bool) -> "IeshProblemBuilder":
        return cls(
            config=capacity.network,
            fading=fading,
            ds_bins=capacity.ds_bins,
            r0=capacity.r0_min,
        )

    def set_hop_length(self, r0: float):
        self.r0 = r0
        self.reset()
        return self

    def set_fading(self, fading: bool):
        self.fading = fading
        self.reset()
        return self

    def build(self) -> IeshProblem:
        config = self.config
        if not self.fading:
            config = config.with_updates(fading_levels=NO_FADING, direct_fading_levels=None)
        eta_n, _ = hop_portions(self.r0, config.d0, config.Nm)
        distribution = single_hop_pmf(self.r0, config.lam, bins=self.ds_bins, eta_n=eta_n)
        direct = distance_only_distribution(
            distribution.ds_values,
            distribution.eps,
            config.alpha,
            config.direct_levels,
        )
        if self.fading:
            p_max = self.p_max if self.p_max is not None else config.p_max
        else:
            p_max = math.inf
        problem = self._reduce(config, direct, p_max)
        return IeshProblem(
            r0=self.r0,
            problem=problem,
            distribution=distribution,
            fading=self.fading,
        )
