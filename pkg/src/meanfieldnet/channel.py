"""meanfieldnet.channel

Node placement and discrete channel statistics of a massive network.

Key Classes:
    - NodeSet: sampled PPP positions inside a square area.
    - GainDistribution: descending channel-gain support with probabilities,
      either for direct links or for interfering links.

Key Functions:
    - sample_ppp / sample_ppp_points: homogeneous Poisson point process draws.
    - distance_pmf: ring probabilities gamma_k of the quantized link distance.
    - path_loss: bounded path-loss (1 + d)^-alpha.
    - direct_gain_distribution / interference_gain_distribution: fading x
      distance products, sorted descending with their probabilities.
    - rayleigh_fading_levels: equal-probability quantization of a Rayleigh
      amplitude into power levels.

Example:
    from meanfieldnet.channel import direct_gain_distribution
    from meanfieldnet.config import NetworkConfig

    direct = direct_gain_distribution(NetworkConfig(lam=1.0))
    direct.gains[0], direct.probs[0]  # (0.575563, 0.0625)
"""

import logging
import math
from enum import Enum
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from pydantic import ConfigDict, field_validator
from pydantic.dataclasses import dataclass
from scipy import stats

from .config import NetworkConfig, PROB_TOL
from .errors import ConfigurationError, DomainError
from .io import write_csv

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


class GainKind(str, Enum):
    DIRECT = "direct"
    INTERFERENCE = "interference"


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class NodeSet:
    positions: np.ndarray
    seed: int
    area_side: float

    @field_validator("positions")
    @classmethod
    def validate_positions(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float).reshape(-1, 2)
        return v

    def __len__(self) -> int:
        return self.positions.shape[0]

    def to_csv(self, path: Union[str, Path]) -> None:
        write_csv(Path(path), ["x", "y"], self.positions.tolist())


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class GainDistribution:
    """Sorted (gain, probability) support.

    ``level_index`` and ``distance_index`` keep the fading level b and the ring
    index l (both 0-based) behind every sorted entry.
    """

    gains: np.ndarray
    probs: np.ndarray
    kind: GainKind
    level_index: np.ndarray
    distance_index: np.ndarray

    @field_validator("probs")
    @classmethod
    def validate_probs(cls, v: np.ndarray) -> np.ndarray:
        if np.any(v < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(math.fsum(v) - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities must sum to 1, got {math.fsum(v):.15g}")
        return v

    @field_validator("gains")
    @classmethod
    def validate_gains(cls, v: np.ndarray) -> np.ndarray:
        if np.any(np.diff(v) > 0):
            raise ValueError("gains must be non-increasing")
        return v

    def __len__(self) -> int:
        return self.gains.shape[0]

    @property
    def mean(self) -> float:
        return float(np.dot(self.gains, self.probs))

    def index_lookup(self) -> np.ndarray:
        """Table ``[level, ring] -> sorted index``."""
        table = np.empty(
            (int(self.level_index.max()) + 1, int(self.distance_index.max()) + 1),
            dtype=int,
        )
        table[self.level_index, self.distance_index] = np.arange(len(self))
        return table


def sample_ppp_points(intensity: float, area_side: float, seed: int) -> NodeSet:
    """Homogeneous PPP on the square [0, side)^2.

    Zero intensity gives an empty set.
    """
    if area_side <= 0:
        raise ConfigurationError(f"area side must be positive, got {area_side}")
    if intensity < 0:
        raise ConfigurationError(f"intensity must be non-negative, got {intensity}")
    rng = np.random.default_rng(seed)
    count = rng.poisson(intensity * area_side**2)
    positions = rng.uniform(0.0, area_side, size=(count, 2))
    return NodeSet(positions=positions, seed=seed, area_side=area_side)


def sample_ppp(config: NetworkConfig, seed: int) -> NodeSet:
    return sample_ppp_points(config.lam, config.area_side, seed)


def distance_pmf(Nm: int) -> np.ndarray:
    """Ring probabilities gamma_k = (k^2 - (k-1)^2) / Nm^2, k = 1..Nm."""
    if Nm < 1:
        raise ConfigurationError(f"Nm must be at least 1, got {Nm}")
    k = np.arange(1, Nm + 1, dtype=float)
    return (2.0 * k - 1.0) / Nm**2


def path_loss(d: ArrayLike, alpha: float) -> ArrayLike:
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr < 0):
        raise DomainError("distance must be non-negative")
    loss = (1.0 + d_arr) ** (-alpha)
    return float(loss) if loss.ndim == 0 else loss


def ring_index(d: np.ndarray, d0: float, rings: int) -> np.ndarray:
    """0-based ring index ceil(d / d0) - 1, clipped into [0, rings - 1]."""
    idx = np.ceil(np.asarray(d, dtype=float) / d0 - 1e-12).astype(int) - 1
    return np.clip(idx, 0, rings - 1)


def _sorted_distribution(
    level_gains: np.ndarray,
    level_probs: np.ndarray,
    distance_gains: np.ndarray,
    distance_probs: np.ndarray,
    kind: GainKind,
) -> GainDistribution:
    gains = np.outer(level_gains, distance_gains).ravel()
    probs = np.outer(level_probs, distance_probs).ravel()
    levels, rings = np.meshgrid(
        np.arange(level_gains.size),
        np.arange(distance_gains.size),
        indexing="ij",
    )
    # stable: descending gain, ties by descending probability
    order = np.lexsort((-probs, -gains))
    return GainDistribution(
        gains=gains[order],
        probs=probs[order],
        kind=kind,
        level_index=levels.ravel()[order],
        distance_index=rings.ravel()[order],
    )


def direct_gain_distribution(config: NetworkConfig) -> GainDistribution:
    rings = np.arange(1, config.Nm + 1) * config.d0
    return _sorted_distribution(
        config.direct_fading_gains,
        config.direct_fading_probs,
        path_loss(rings, config.alpha),
        distance_pmf(config.Nm),
        GainKind.DIRECT,
    )


def interference_gain_distribution(config: NetworkConfig) -> GainDistribution:
    rings = np.arange(1, config.NmI + 1) * config.d0
    return _sorted_distribution(
        config.fading_gains,
        config.fading_probs,
        path_loss(rings, config.alpha),
        distance_pmf(config.NmI),
        GainKind.INTERFERENCE,
    )


def distance_only_distribution(
    distances: np.ndarray,
    probs: np.ndarray,
    alpha: float,
    fading_levels: List[Tuple[float, float]],
) -> GainDistribution:
    """Direct-gain law over arbitrary distance atoms (used for hop distances)."""
    return _sorted_distribution(
        np.array([h for h, _ in fading_levels], dtype=float),
        np.array([beta for _, beta in fading_levels], dtype=float),
        path_loss(np.asarray(distances, dtype=float), alpha),
        np.asarray(probs, dtype=float),
        GainKind.DIRECT,
    )


def mean_interference_gain(config: NetworkConfig) -> float:
    """Aggregate gain N_i * E[g^I] seen by a destination."""
    return config.interferer_count * interference_gain_distribution(config).mean


def rayleigh_fading_levels(levels: int) -> List[Tuple[float, float]]:
    """Quantize a unit Rayleigh amplitude into ``levels`` equiprobable power levels.

    Bin edges are the Rayleigh quantiles k/levels; each level is the squared
    conditional mean amplitude of its bin. Four levels give
    (4.6045, 1.9805, 0.9392, 0.2412).
    """
    amplitudes = rayleigh_amplitude_centroids(levels)
    return [(float(a**2), 1.0 / levels) for a in amplitudes]


def rayleigh_amplitude_centroids(levels: int) -> np.ndarray:
    """Conditional mean amplitude of each equiprobable Rayleigh bin, descending."""
    if levels < 1:
        raise ConfigurationError(f"levels must be at least 1, got {levels}")
    edges = stats.rayleigh.ppf(np.linspace(0.0, 1.0, levels + 1))
    lo, hi = edges[:-1], edges[1:]

    def tail(x: np.ndarray) -> np.ndarray:
        # x * exp(-x^2 / 2) with the limit 0 at infinity
        with np.errstate(invalid="ignore", over="ignore"):
            out = x * np.exp(-(x**2) / 2.0)
        return np.where(np.isinf(x), 0.0, out)

    # integral of x * pdf(x) over [lo, hi]
    partial_mean = tail(lo) - tail(hi) + math.sqrt(2.0 * math.pi) * (
        stats.norm.cdf(hi) - stats.norm.cdf(lo)
    )
    return (partial_mean * levels)[::-1]
