"""meanfieldnet.capacity

Transport capacity of the ideal equivalent single-hop (IESH) networks.

Transport capacity is r0 * rate: the design hop length times the rate every
hop achieves. Both variants search r0 by golden section; each probe rebuilds
the hop-distance law and the reduced problem from the config.

    - IESH-s: no small-scale fading, average power cap only. The rate is the
      largest common rate every group can reach (``max_common_rate``).
    - IESH-g: fading on every link, per-link cap. The rate is the MAPEL
      weighted rate.

The multi-hop conversion turns a per-hop rate into the average end-to-end
rate of links spread uniformly over a disk of radius Nm * d0.

Example:
    result = iesh_s_capacity(CapacityConfig(network=net, r0_min=0.5, r0_max=2.0))
    result.r0_star, result.transport_capacity
"""

import logging
import math
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np
from pydantic import ConfigDict, model_validator
from pydantic.dataclasses import dataclass

from .builders import IeshProblemBuilder
from .config import CapacityConfig, sinr_floor
from .errors import ConfigurationError, NumericalConditioningError
from .io import write_csv
from .logging_utils import log_method
from .reduction import MeanFieldWtm
from .routing import hop_count_pmf
from .wtm import feasibility_check, mapel_solve

logger = logging.getLogger(__name__)

GOLDEN_TAU = 0.618
RATE_CAP = 2.0**16


class GoldenSectionResult(NamedTuple):
    x: float
    value: float
    trace: List[Tuple[float, float]]
    iterations: int
    unimodal: bool


class CommonRate(NamedTuple):
    rate: float
    flagged: bool
    p: Optional[np.ndarray]


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class CapacityResult:
    method: str
    r0_star: float
    rate_star: float
    transport_capacity: float
    multihop_rate: float
    trace: List[Tuple[float, float, float]]
    flagged: bool = False

    @model_validator(mode="after")
    def validate_product(self) -> "CapacityResult":
        if self.transport_capacity != self.r0_star * self.rate_star:
            raise ValueError("transport capacity must equal r0_star * rate_star")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "r0_star": self.r0_star,
            "rate_star": self.rate_star,
            "transport_capacity": self.transport_capacity,
            "multihop_rate": self.multihop_rate,
            "flagged": self.flagged,
            "trace": [list(row) for row in self.trace],
        }

    def trace_to_csv(self, path: Union[str, Path]) -> None:
        write_csv(
            Path(path),
            ["r0", "rate", "capacity"],
            sorted(self.trace),
            comments=[
                f"{self.method} golden-section probes, sorted by r0",
                "r0: hop length (m); rate: bits/s/Hz; capacity: r0 * rate (bit m/s/Hz)",
            ],
        )


def _is_unimodal(trace: List[Tuple[float, float]], slack: float) -> bool:
    values = [value for _, value in sorted(trace)]
    peak = int(np.argmax(values))
    rising = all(b >= a - slack for a, b in zip(values[:peak], values[1 : peak + 1]))
    falling = all(b <= a + slack for a, b in zip(values[peak:], values[peak + 1 :]))
    return rising and falling


def golden_section_maximize(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float,
    tau: float = GOLDEN_TAU,
    max_iterations: int = 200,
) -> GoldenSectionResult:
    """Maximize a unimodal function on [lo, hi] down to a bracket of width ``tol``.

    Both interior probes r_l = lo + (1 - tau)(hi - lo) and r_u = lo + tau(hi - lo)
    are evaluated every iteration; the bracket keeps the side of the better
    probe. Endpoints are probed too and the best point of the whole trace is
    returned.
    """
    if not hi > lo:
        raise ConfigurationError(f"bracket must satisfy lo < hi, got [{lo}, {hi}]")
    if not tol > 0:
        raise ConfigurationError("tolerance must be positive")
    trace = [(lo, f(lo)), (hi, f(hi))]
    iterations = 0
    while hi - lo > tol and iterations < max_iterations:
        r_l = lo + (1.0 - tau) * (hi - lo)
        r_u = lo + tau * (hi - lo)
        f_l, f_u = f(r_l), f(r_u)
        trace += [(r_l, f_l), (r_u, f_u)]
        if f_l > f_u:
            hi = r_u
        else:
            lo = r_l
        iterations += 1
        logger.debug("Golden section %d: bracket [%.6g, %.6g]", iterations, lo, hi)

    x, value = max(trace, key=lambda item: item[1])
    scale = max(abs(v) for _, v in trace) or 1.0
    unimodal = _is_unimodal(trace, 1e-9 * scale)
    if not unimodal:
        logger.warning("Golden-section probes are not unimodal; the maximizer may be local")
    return GoldenSectionResult(x, value, trace, iterations, unimodal)


def _feasible_at(problem: MeanFieldWtm, rate: float) -> Tuple[bool, Optional[np.ndarray]]:
    try:
        gamma = sinr_floor(rate, problem.rate_floor_rule)
    except OverflowError:
        return False, None
    if not math.isfinite(gamma):
        return False, None
    try:
        result = feasibility_check(problem, gamma_min=gamma)
    except NumericalConditioningError:
        return False, None
    return result.feasible, result.p_check


def max_common_rate(problem: MeanFieldWtm, tolerance: float = 1e-4) -> CommonRate:
    """Largest rate R every group reaches at once within the power caps.

    Brackets by doubling from R = 1 up to 2^16, then bisects to ``tolerance``.
    Returns rate 0 flagged when even R = tolerance is out of reach.
    """
    feasible, p_low = _feasible_at(problem, tolerance)
    if not feasible:
        logger.warning("No positive common rate is reachable; reporting zero")
        return CommonRate(rate=0.0, flagged=True, p=None)
    lo, hi = tolerance, 1.0
    feasible, p_hi = _feasible_at(problem, hi)
    while feasible:
        lo, p_low = hi, p_hi
        if hi >= RATE_CAP:
            logger.warning("Common rate reached the bracketing cap %.6g", RATE_CAP)
            return CommonRate(rate=lo, flagged=True, p=p_low)
        hi *= 2.0
        feasible, p_hi = _feasible_at(problem, hi)
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        feasible, p_mid = _feasible_at(problem, mid)
        if feasible:
            lo, p_low = mid, p_mid
        else:
            hi = mid
    return CommonRate(rate=lo, flagged=False, p=p_low)


def multihop_rate_from_transport(rI: float, r0: float, d0: float, Nm: int) -> float:
    """Average multi-hop rate 2 r0 rI / (d0^2 Nm) for links uniform on the Nm d0 disk."""
    if Nm < 10:
        logger.warning("Multi-hop conversion is coarse for Nm=%d (< 10)", Nm)
    return 2.0 * r0 * rI / (d0**2 * Nm)


def multihop_rate_bounds(rI: float, r0: float, d0: float, Nm: int) -> Tuple[float, float]:
    """Lower and upper sums that sandwich the average multi-hop rate."""
    scale = r0**2 / (d0**2 * Nm**2)
    span = Nm * d0 / r0
    lower_atoms = np.arange(1, int(math.ceil(span - 1e-12)) + 1, dtype=float)
    upper_atoms = np.arange(1, int(math.floor(span + 1e-12)) + 1, dtype=float)
    lower = float(np.sum(rI / lower_atoms * (2.0 * lower_atoms - 1.0)) * scale)
    upper = float(np.sum(rI / upper_atoms * (2.0 * upper_atoms + 1.0)) * scale)
    return lower, upper


def multihop_rate_exact(rI: float, r0: float, d0: float, Nm: int) -> float:
    """Expected end-to-end rate rI / hops under the hop-count law."""
    pmf = hop_count_pmf(r0, d0, Nm)
    return float(np.sum(pmf * rI / np.arange(1, pmf.size + 1)))


def _capacity_result(
    method: str,
    capacity: CapacityConfig,
    search: GoldenSectionResult,
    rates: Dict[float, float],
    flagged: bool,
) -> CapacityResult:
    r0_star = search.x
    rate_star = rates[r0_star]
    network = capacity.network
    trace = [(r0, rates[r0], value) for r0, value in search.trace]
    result = CapacityResult(
        method=method,
        r0_star=r0_star,
        rate_star=rate_star,
        transport_capacity=r0_star * rate_star,
        multihop_rate=multihop_rate_from_transport(rate_star, r0_star, network.d0, network.Nm),
        trace=trace,
        flagged=flagged or rate_star == 0.0,
    )
    logger.info(
        "%s capacity %.6g at r0=%.6g (rate %.6g)",
        method,
        result.transport_capacity,
        r0_star,
        rate_star,
    )
    return result


@log_method(logger)
def iesh_s_capacity(capacity: CapacityConfig) -> CapacityResult:
    """Golden-section search of r0 * max_common_rate over the hop-length bracket."""
    if capacity.network.p_ave is None:
        raise ConfigurationError("IESH-s capacity needs an average power cap p_ave")
    builder = IeshProblemBuilder.from_capacity(capacity, fading=False)
    rates: Dict[float, float] = {}

    def objective(r0: float) -> float:
        iesh = builder.set_hop_length(r0).build()
        rates[r0] = max_common_rate(iesh.problem, capacity.rate_tolerance).rate
        return r0 * rates[r0]

    search = golden_section_maximize(objective, capacity.r0_min, capacity.r0_max, capacity.hop_tolerance)
    return _capacity_result("iesh-s", capacity, search, rates, search.value <= 0.0)


@log_method(logger)
def iesh_g_capacity(capacity: CapacityConfig) -> CapacityResult:
    """Golden-section search of r0 * MAPEL weighted rate over the hop-length bracket."""
    builder = IeshProblemBuilder.from_capacity(capacity, fading=True)
    rates: Dict[float, float] = {}
    converged: List[bool] = []

    def objective(r0: float) -> float:
        iesh = builder.set_hop_length(r0).build()
        solution = mapel_solve(iesh.problem, delta0=capacity.delta0)
        rates[r0] = solution.rate
        converged.append(solution.converged)
        return r0 * rates[r0]

    search = golden_section_maximize(objective, capacity.r0_min, capacity.r0_max, capacity.hop_tolerance)
    return _capacity_result("iesh-g", capacity, search, rates, not all(converged))
