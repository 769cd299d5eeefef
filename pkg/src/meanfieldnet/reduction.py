"""meanfieldnet.reduction

Mean-field reduction of the weighted throughput maximization (WTM) problem.

The interference seen by a destination is summarized by how many interferers
fall on each of the Na strongest interference-gain indices. Each count is
binomial, quantized into Nc intervals; every combination of intervals forms
an interference group. Groups x direct-gain states are consolidated into one
index k = j + i * Ng and the coupled interference becomes the matrix G~.

Key Classes:
    - CountQuantization: intervals and conditional-mean centroids of one
      count pmf.
    - InterferenceGroupTable: all Nc^Na groups with their centroids, residual
      counts and prior.
    - PosteriorTables: Q1 (gain index -> group), Q2 (group -> gain index) and
      the residual-group vector q.
    - MeanFieldWtm: the reduced problem handed to the solvers.

Example:
    config = NetworkConfig(lam=1.0)
    direct = direct_gain_distribution(config)
    interference = interference_gain_distribution(config)
    table = build_group_table(config, interference)
    posteriors = posterior_tables(table, interference)
    problem = build_wtm(config, direct, table, posteriors)
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np
from pydantic import ConfigDict, field_validator, model_validator
from pydantic.dataclasses import dataclass
from scipy import stats

from .channel import GainDistribution
from .config import NetworkConfig, RateFloorRule, sinr_floor
from .errors import ConfigurationError, DegenerateDistributionError, SizeError

logger = logging.getLogger(__name__)


class CountQuantization(NamedTuple):
    intervals: List[Tuple[int, int]]
    centroids: np.ndarray
    masses: np.ndarray


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class InterferenceGroupTable:
    Ni: int
    abar: np.ndarray
    intervals: List[List[Tuple[int, int]]]
    u: np.ndarray
    Nr: np.ndarray
    xi: float
    NI: int
    Nc: int

    @property
    def Na(self) -> int:
        return self.u.shape[1]

    def group_centroids(self) -> np.ndarray:
        """A[i, k] = abar[k, u[i, k] - 1], shape (NI, Na)."""
        if self.Na == 0:
            return np.zeros((self.NI, 0))
        return self.abar[np.arange(self.Na)[None, :], self.u - 1]

    def group_of_counts(self, counts: np.ndarray) -> np.ndarray:
        """Group index (0-based) for rows of tracked-index counts, shape (n, Na).

        Counts are located in the same intervals the table was built from;
        counts beyond the last interval clamp to it.
        """
        counts = np.asarray(counts, dtype=int)
        group = np.zeros(counts.shape[0], dtype=int)
        for k in range(self.Na):
            upper = np.array([hi for _, hi in self.intervals[k]])
            digit = np.searchsorted(upper, counts[:, k], side="left")
            group += np.minimum(digit, self.Nc - 1) * self.Nc**k
        return group


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class PosteriorTables:
    Q1: np.ndarray
    Q2: np.ndarray
    q: np.ndarray

    @field_validator("q")
    @classmethod
    def validate_q(cls, v: np.ndarray) -> np.ndarray:
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValueError("residual-group vector must sum to 1")
        return v


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class MeanFieldWtm:
    """Reduced WTM problem: maximize sum omega_i log2(1 + SINR_i).

    SINR_i = p_i g_i / (sum_j p_j Gtilde[j, i] + noise).
    """

    omega: np.ndarray
    g: np.ndarray
    Gtilde: np.ndarray
    noise: float
    p_max: float
    r_min: float = 0.0
    p_ave: Optional[float] = None
    rate_floor_rule: RateFloorRule = RateFloorRule.SHANNON

    @field_validator("omega")
    @classmethod
    def validate_weights(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if abs(v.sum() - 1.0) > 1e-10:
            raise ValueError(f"weights must sum to 1, got {v.sum():.15g}")
        return v

    @field_validator("g")
    @classmethod
    def validate_direct(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if np.any(v <= 0):
            raise ValueError("direct gains must be positive")
        return v

    @field_validator("Gtilde")
    @classmethod
    def validate_matrix(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if np.any(v < 0):
            raise ValueError("equivalent interference gains must be non-negative")
        return v

    @field_validator("noise", "p_max")
    @classmethod
    def validate_positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("must be positive")
        return v

    @model_validator(mode="after")
    def validate_dimensions(self) -> "MeanFieldWtm":
        n = self.omega.shape[0]
        if self.g.shape != (n,) or self.Gtilde.shape != (n, n):
            raise ConfigurationError(
                f"inconsistent dimensions: omega {self.omega.shape}, g {self.g.shape}, "
                f"Gtilde {self.Gtilde.shape}",
            )
        return self

    @property
    def size(self) -> int:
        return self.omega.shape[0]

    @property
    def gamma_min(self) -> float:
        return sinr_floor(self.r_min, self.rate_floor_rule)

    def interference(self, p: np.ndarray) -> np.ndarray:
        return self.Gtilde.T @ p

    def sinr(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return p * self.g / (self.interference(p) + self.noise)

    def replace(self, **changes: Any) -> "MeanFieldWtm":
        data = {
            "omega": self.omega,
            "g": self.g,
            "Gtilde": self.Gtilde,
            "noise": self.noise,
            "p_max": self.p_max,
            "r_min": self.r_min,
            "p_ave": self.p_ave,
            "rate_floor_rule": self.rate_floor_rule,
        }
        data.update(changes)
        return MeanFieldWtm(**data)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "omega": self.omega.tolist(),
            "g": self.g.tolist(),
            "Gtilde": self.Gtilde.ravel().tolist(),
            "noise": self.noise,
            "p_max": self.p_max,
            "r_min": self.r_min,
            "p_ave": self.p_ave,
            "rate_floor_rule": self.rate_floor_rule.value,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MeanFieldWtm":
        omega = np.asarray(data["omega"], dtype=float)
        n = omega.shape[0]
        return cls(
            omega=omega,
            g=np.asarray(data["g"], dtype=float),
            Gtilde=np.asarray(data["Gtilde"], dtype=float).reshape(n, n),
            noise=float(data["noise"]),
            p_max=float(data["p_max"]),
            r_min=float(data.get("r_min", 0.0)),
            p_ave=data.get("p_ave"),
            rate_floor_rule=RateFloorRule(data.get("rate_floor_rule", "shannon")),
        )

    @classmethod
    def from_json(cls, source: Union[str, Path]) -> "MeanFieldWtm":
        """Parse a problem from a JSON string or a path to a JSON file."""
        text = str(source)
        if not text.lstrip().startswith("{"):
            text = Path(source).read_text(encoding="utf-8")
        try:
            return cls.from_dict(json.loads(text))
        except (KeyError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"invalid problem document: {e}") from e


def interference_count_pmf(thetaI_i: float, Ni: int) -> np.ndarray:
    """Binomial(Ni, thetaI_i) pmf over counts 0..Ni."""
    if not 0.0 <= thetaI_i <= 1.0:
        raise ConfigurationError(f"probability must lie in [0, 1], got {thetaI_i}")
    return stats.binom.pmf(np.arange(Ni + 1), Ni, thetaI_i)


def quantize_counts(pmf: np.ndarray, Nc: int) -> CountQuantization:
    """Split a count pmf into Nc contiguous, near equal-mass intervals.

    An interval closes at the first atom where the cumulative mass reaches
    l / Nc, or earlier when the atoms left are exactly enough to give every
    remaining interval one atom. Intervals tile 0..len(pmf)-1; centroids are
    conditional means.
    """
    pmf = np.asarray(pmf, dtype=float)
    if Nc < 1:
        raise ConfigurationError(f"Nc must be at least 1, got {Nc}")
    support = np.flatnonzero(pmf > 0)
    if Nc > support.size:
        raise ConfigurationError(
            f"cannot split {support.size} support points into {Nc} intervals",
        )

    closing: List[int] = []
    cumulative = 0.0
    for position, atom in enumerate(support):
        if len(closing) == Nc - 1:
            break
        cumulative += pmf[atom]
        interval = len(closing) + 1
        remaining_atoms = support.size - position - 1
        if cumulative >= interval / Nc - 1e-12 or remaining_atoms == Nc - interval:
            closing.append(int(atom))

    intervals: List[Tuple[int, int]] = []
    lo = 0
    for hi in closing:
        intervals.append((lo, hi))
        lo = hi + 1
    intervals.append((lo, pmf.size - 1))

    values = np.arange(pmf.size, dtype=float)
    masses = np.array([pmf[a : b + 1].sum() for a, b in intervals])
    centroids = np.array(
        [np.dot(values[a : b + 1], pmf[a : b + 1]) / m for (a, b), m in zip(intervals, masses)],
    )
    return CountQuantization(intervals=intervals, centroids=centroids, masses=masses)


def group_digits(NI: int, Na: int, Nc: int) -> np.ndarray:
    """u[i, k] in 1..Nc with i = sum_k (u[i, k] - 1) * Nc^k (0-based i)."""
    index = np.arange(NI)[:, None]
    powers = Nc ** np.arange(Na)[None, :]
    return (index // powers) % Nc + 1


def build_group_table(
    config: NetworkConfig,
    interference_dist: GainDistribution,
) -> InterferenceGroupTable:
    Na, Nc = config.Na, config.Nc
    if Na > len(interference_dist):
        raise ConfigurationError(
            f"Na={Na} exceeds the {len(interference_dist)} interference-gain indices",
        )
    NI = Nc**Na
    if NI > config.max_groups:
        raise SizeError(
            f"Nc^Na = {NI} interference groups exceed the cap of {config.max_groups}",
        )
    Ni = config.interferer_count

    abar = np.zeros((Na, Nc))
    intervals: List[List[Tuple[int, int]]] = []
    for k in range(Na):
        quantized = quantize_counts(interference_count_pmf(interference_dist.probs[k], Ni), Nc)
        abar[k] = quantized.centroids
        intervals.append(quantized.intervals)

    u = group_digits(NI, Na, Nc)
    tracked = abar[np.arange(Na)[None, :], u - 1].sum(axis=1) if Na else np.zeros(NI)
    Nr = np.maximum(Ni - tracked, 0.0)
    if np.any(Ni - tracked < 0):
        logger.debug("Clamped %d residual counts at zero", int(np.sum(Ni - tracked < 0)))

    logger.debug("Built %d interference groups from Ni=%d interferers", NI, Ni)
    return InterferenceGroupTable(
        Ni=Ni,
        abar=abar,
        intervals=intervals,
        u=u,
        Nr=Nr,
        xi=1.0 / NI,
        NI=NI,
        Nc=Nc,
    )


def posterior_tables(
    table: InterferenceGroupTable,
    interference_dist: GainDistribution,
) -> PosteriorTables:
    """Posterior links between interference-gain indices and groups.

    Q1[k, l]: probability that an interferer on tracked index k belongs to
    group l, proportional to xi * abar[k, u[l, k]]. Q2[l, k]: share of group
    l's tracked interferers on index k. q[l]: share of residual interferers
    in group l.
    """
    A = table.group_centroids()
    Na = table.Na

    weighted = table.xi * A.T
    column_mass = weighted.sum(axis=1)
    if np.any(column_mass <= 0):
        k = int(np.flatnonzero(column_mass <= 0)[0])
        raise DegenerateDistributionError(
            f"all quantized counts for interference index {k} are zero",
        )
    Q1 = weighted / column_mass[:, None] if Na else np.zeros((0, table.NI))

    row_mass = A.sum(axis=1)
    Q2 = np.full((table.NI, Na), 1.0 / Na if Na else 0.0)
    nonzero = row_mass > 0
    Q2[nonzero] = A[nonzero] / row_mass[nonzero, None]

    residual = table.Nr.sum()
    q = table.Nr / residual if residual > 0 else np.full(table.NI, 1.0 / table.NI)
    return PosteriorTables(Q1=Q1, Q2=Q2, q=q)


def residual_gain(
    table: InterferenceGroupTable,
    interference_dist: GainDistribution,
) -> np.ndarray:
    """R[i] = Nr_i * E[g^I | index > Na], the residual interferers' mean gain mass.

    Nr_i counts residual interferers only, so each of them draws its gain from
    the untracked indices conditioned on being untracked: the tail
    probabilities are renormalized to unit mass. The unnormalized sum
    Nr_i * sum_{k > Na} theta_k g_k scales every residual interferer down by
    the tail mass.
    """
    tail_probs = interference_dist.probs[table.Na :]
    tail_gains = interference_dist.gains[table.Na :]
    tail_mass = tail_probs.sum()
    if tail_mass <= 0:
        return np.zeros(table.NI)
    return table.Nr * float(np.dot(tail_probs, tail_gains)) / tail_mass


def build_wtm(
    config: NetworkConfig,
    direct_dist: GainDistribution,
    table: InterferenceGroupTable,
    posteriors: PosteriorTables,
    interference_dist: Optional[GainDistribution] = None,
    p_max: Optional[float] = None,
) -> MeanFieldWtm:
    """Consolidate groups x gain states into the reduced WTM problem.

    With source c' = (l, m) and destination c = (i, j):
    Gtilde[c', c] = theta_m * (sum_k abar[k, u[i, k]] g^I_k Q1[k, l] + R_i q_l).
    """
    if interference_dist is None:
        from .channel import interference_gain_distribution

        interference_dist = interference_gain_distribution(config)
    Na = table.Na
    if posteriors.Q1.shape != (Na, table.NI) or posteriors.q.shape != (table.NI,):
        raise ConfigurationError("posterior tables do not match the group table")

    theta = direct_dist.probs
    Ng = len(direct_dist)

    dominant = (table.group_centroids() * interference_dist.gains[:Na][None, :]) @ posteriors.Q1
    B = dominant + np.outer(residual_gain(table, interference_dist), posteriors.q)
    Gtilde = np.kron(B.T, np.outer(theta, np.ones(Ng)))

    return MeanFieldWtm(
        omega=np.kron(np.full(table.NI, table.xi), theta),
        g=np.tile(direct_dist.gains, table.NI),
        Gtilde=Gtilde,
        noise=config.noise,
        p_max=config.p_max if p_max is None else p_max,
        r_min=config.r_min,
        p_ave=config.p_ave,
        rate_floor_rule=config.rate_floor_rule,
    )


def raw_interference(
    p: np.ndarray,
    table: InterferenceGroupTable,
    posteriors: PosteriorTables,
    interference_dist: GainDistribution,
    direct_dist: GainDistribution,
) -> np.ndarray:
    """Interference per consolidated index from the unreduced triple sums."""
    Ng = len(direct_dist)
    theta = direct_dist.probs
    p = np.asarray(p, dtype=float).reshape(table.NI, Ng)
    A = table.group_centroids()
    tail_mass = 0.0
    for k in range(table.Na, len(interference_dist)):
        tail_mass += interference_dist.probs[k]
    out = np.zeros((table.NI, Ng))
    for i in range(table.NI):
        total = 0.0
        for k in range(table.Na):
            for l in range(table.NI):
                for m in range(Ng):
                    total += (
                        A[i, k]
                        * interference_dist.gains[k]
                        * posteriors.Q1[k, l]
                        * theta[m]
                        * p[l, m]
                    )
        if tail_mass > 0:
            for k in range(table.Na, len(interference_dist)):
                share = interference_dist.probs[k] / tail_mass
                for l in range(table.NI):
                    for m in range(Ng):
                        total += (
                            table.Nr[i]
                            * share
                            * interference_dist.gains[k]
                            * posteriors.q[l]
                            * theta[m]
                            * p[l, m]
                        )
        out[i, :] = total
    return out.ravel()


def reduce_network(config: NetworkConfig) -> Tuple[MeanFieldWtm, InterferenceGroupTable]:
    """Full reduction pipeline from a network config."""
    from .builders import MeanFieldWtmBuilder

    builder = MeanFieldWtmBuilder(config=config)
    problem = builder.build()
    return problem, builder.table


def expected_count_check(pmf: np.ndarray, quantized: CountQuantization) -> float:
    """Difference between the pmf mean and the mass-weighted centroid mean."""
    mean = float(np.dot(np.arange(pmf.size), pmf))
    return math.fsum(quantized.masses * quantized.centroids) - mean
