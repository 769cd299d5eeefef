"""meanfieldnet.config

Validated configuration models for every solver in the package, loadable from
JSON documents.

Key Classes:
    - NetworkConfig: scenario parameters of a massive network (intensity,
      distance grid, fading law, power caps, rate floor, noise).
    - MfgConfig: delay-constrained mean-field game setup on a (buffer,
      channel, time) grid.
    - CapacityConfig: hop-length search bracket for the equivalent single-hop
      networks.
    - TdmScheme: a partition of links into time slots.
    - ExperimentSpec: a named preset run (base configs, sweep axes, trials,
      seed, output path).

Usage:
    Build models directly with keyword arguments, or read them from disk with
    ``load_config``. ``collect_diagnostics`` lists every violation in a file
    instead of raising on the first one.

Example:
    from meanfieldnet.config import NetworkConfig, load_config

    config = NetworkConfig(lam=1.0, p_max=0.1)
    same = load_config("network.json", NetworkConfig)
"""

import json
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Type, TypeVar, Union

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from .errors import ConfigurationError

DEFAULT_FADING_LEVELS: Tuple[Tuple[float, float], ...] = (
    (4.6045, 0.25),
    (1.9805, 0.25),
    (0.9392, 0.25),
    (0.2412, 0.25),
)

PROB_TOL = 1e-12


class RateFloorRule(str, Enum):
    """How the SINR floor is derived from the minimum rate."""

    SHANNON = "shannon"
    PRINTED = "printed"


def sinr_floor(r_min: float, rule: RateFloorRule = RateFloorRule.SHANNON) -> float:
    """SINR threshold for a rate floor: 2^R - 1, or 2^(R-1) under the printed rule."""
    if rule == RateFloorRule.PRINTED:
        return 2.0 ** (r_min - 1.0)
    return 2.0**r_min - 1.0


class NetworkConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True, frozen=True, extra="forbid")

    lam: float = Field(alias="lambda")
    area_side: float = 40.0
    d0: float = 1.0
    Nm: int = 2
    NmI: int = 10
    alpha: float = 3.0
    noise: float = 10.0
    fading_levels: List[Tuple[float, float]] = Field(
        default_factory=lambda: [tuple(level) for level in DEFAULT_FADING_LEVELS],
    )
    direct_fading_levels: Optional[List[Tuple[float, float]]] = None
    p_max: float = 0.1
    p_ave: Optional[float] = None
    r_min: float = 0.0
    Na: int = 1
    Nc: int = 2
    rate_floor_rule: RateFloorRule = RateFloorRule.SHANNON
    max_groups: int = 4096

    @field_validator("lam")
    @classmethod
    def validate_intensity(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("node intensity lambda must be positive")
        return v

    @field_validator("area_side", "d0", "noise", "p_max")
    @classmethod
    def validate_positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("must be positive")
        return v

    @field_validator("alpha")
    @classmethod
    def validate_alpha(cls, v: float) -> float:
        if not v > 2:
            raise ValueError(
                "path-loss exponent alpha must exceed 2, otherwise the mean "
                "aggregate interference diverges",
            )
        return v

    @field_validator("Nm", "Nc", "max_groups")
    @classmethod
    def validate_at_least_one(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be at least 1")
        return v

    @field_validator("Na")
    @classmethod
    def validate_tracked(cls, v: int) -> int:
        if v < 0:
            raise ValueError("must be non-negative")
        return v

    @field_validator("r_min")
    @classmethod
    def validate_rate_floor(cls, v: float) -> float:
        if v < 0:
            raise ValueError("minimum rate must be non-negative")
        return v

    @field_validator("p_ave")
    @classmethod
    def validate_average_cap(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not v > 0:
            raise ValueError("average power cap must be positive")
        return v

    @field_validator("fading_levels", "direct_fading_levels")
    @classmethod
    def validate_fading(
        cls, v: Optional[List[Tuple[float, float]]]
    ) -> Optional[List[Tuple[float, float]]]:
        if v is None:
            return v
        if not v:
            raise ValueError("at least one fading level is required")
        gains = [h for h, _ in v]
        probs = [beta for _, beta in v]
        if any(h <= 0 for h in gains):
            raise ValueError("fading gains h_b must be positive")
        if any(beta < 0 for beta in probs):
            raise ValueError("fading probabilities beta_b must be non-negative")
        if any(a < b for a, b in zip(gains, gains[1:])):
            raise ValueError("fading gains must be sorted in descending order")
        if abs(math.fsum(probs) - 1.0) > PROB_TOL:
            raise ValueError(
                f"fading probabilities must sum to 1, got {math.fsum(probs):.12g}",
            )
        return v

    @model_validator(mode="after")
    def validate_distance_grid(self) -> "NetworkConfig":
        if self.NmI < self.Nm:
            raise ValueError("NmI must be at least Nm")
        return self

    @property
    def fading_gains(self) -> np.ndarray:
        return np.array([h for h, _ in self.fading_levels], dtype=float)

    @property
    def fading_probs(self) -> np.ndarray:
        return np.array([beta for _, beta in self.fading_levels], dtype=float)

    @property
    def direct_levels(self) -> List[Tuple[float, float]]:
        """Fading levels of the source-destination channel; defaults to ``fading_levels``."""
        return self.fading_levels if self.direct_fading_levels is None else self.direct_fading_levels

    @property
    def direct_fading_gains(self) -> np.ndarray:
        return np.array([h for h, _ in self.direct_levels], dtype=float)

    @property
    def direct_fading_probs(self) -> np.ndarray:
        return np.array([beta for _, beta in self.direct_levels], dtype=float)

    @property
    def interferer_count(self) -> int:
        """N_i = ceil(lambda * pi * (NmI * d0)^2)."""
        return int(math.ceil(self.lam * math.pi * (self.NmI * self.d0) ** 2 - 1e-9))

    @property
    def gamma_min(self) -> float:
        return sinr_floor(self.r_min, self.rate_floor_rule)

    def with_updates(self, **updates: Any) -> "NetworkConfig":
        """Return a validated copy with some fields replaced."""
        if "lambda" in updates:
            updates["lam"] = updates.pop("lambda")
        return NetworkConfig.model_validate({**self.model_dump(), **updates})


class MfgConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    T: float
    eta: float = 0.0
    gbar: float = 0.0
    noise: float = 0.1
    arrival_pmf: List[Tuple[float, float]]
    h_range: Tuple[float, float] = (1.0, 1.0)
    grid: Tuple[int, int, int] = (17, 2, 17)
    rho0: Optional[List[List[float]]] = None
    s_max: Optional[float] = None
    fixed_channel: bool = False
    max_iterations: int = 3000
    tolerance: float = 1e-4
    step_scale: float = 0.9
    penalty: float = 10.0
    cleared_target: float = 0.999

    @field_validator("T", "noise", "tolerance", "step_scale", "penalty")
    @classmethod
    def validate_positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("must be positive")
        return v

    @field_validator("eta", "gbar")
    @classmethod
    def validate_non_negative(cls, v: float) -> float:
        if v < 0:
            raise ValueError("must be non-negative")
        return v

    @field_validator("arrival_pmf")
    @classmethod
    def validate_arrivals(cls, v: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
        if not v:
            raise ValueError("arrival law needs at least one atom")
        if any(size < 0 for size, _ in v) or any(prob < 0 for _, prob in v):
            raise ValueError("arrival sizes and probabilities must be non-negative")
        if abs(math.fsum(prob for _, prob in v) - 1.0) > 1e-8:
            raise ValueError("arrival probabilities must sum to 1")
        return v

    @field_validator("h_range")
    @classmethod
    def validate_h_range(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        if not 0 < v[0] <= v[1]:
            raise ValueError("channel range must satisfy 0 < h_min <= h_max")
        return v

    @field_validator("grid")
    @classmethod
    def validate_grid(cls, v: Tuple[int, int, int]) -> Tuple[int, int, int]:
        if any(n < 2 for n in v):
            raise ValueError("every grid dimension must be at least 2")
        return v

    @field_validator("max_iterations")
    @classmethod
    def validate_iterations(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be at least 1")
        return v

    @model_validator(mode="after")
    def validate_consistency(self) -> "MfgConfig":
        if self.fixed_channel and self.eta != 0:
            raise ValueError("fixed-channel mode requires eta = 0")
        if self.eta > 0 and self.h_range[1] == self.h_range[0]:
            raise ValueError("channel diffusion needs a non-degenerate h range")
        if self.s_max is not None:
            if not self.s_max > 0:
                raise ValueError("s_max must be positive")
            if any(size > self.s_max for size, _ in self.arrival_pmf):
                raise ValueError("arrival sizes must not exceed s_max")
        if self.rho0 is not None:
            rho0 = np.asarray(self.rho0, dtype=float)
            if rho0.shape != (self.grid[0], self.grid[1]):
                raise ValueError(
                    f"rho0 must have shape {(self.grid[0], self.grid[1])}, got {rho0.shape}",
                )
            if np.any(rho0 < 0):
                raise ValueError("rho0 must be non-negative")
            if abs(rho0.sum() - 1.0) > 1e-8:
                raise ValueError("rho0 must carry unit mass")
        return self

    @property
    def s_upper(self) -> float:
        if self.s_max is not None:
            return self.s_max
        largest = max(size for size, _ in self.arrival_pmf)
        return largest if largest > 0 else 1.0

    @property
    def ds(self) -> float:
        return self.s_upper / (self.grid[0] - 1)

    @property
    def dh(self) -> float:
        return (self.h_range[1] - self.h_range[0]) / (self.grid[1] - 1)

    @property
    def dt(self) -> float:
        return self.T / (self.grid[2] - 1)

    @property
    def s_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.s_upper, self.grid[0])

    @property
    def h_grid(self) -> np.ndarray:
        return np.linspace(self.h_range[0], self.h_range[1], self.grid[1])

    @property
    def tau_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.grid[2])

    def initial_density(self) -> np.ndarray:
        """Cell masses of rho at tau = 0, shape (Ns, Nh), summing to 1."""
        if self.rho0 is not None:
            return np.asarray(self.rho0, dtype=float)
        ns, nh, _ = self.grid
        rho = np.zeros((ns, nh))
        for size, prob in self.arrival_pmf:
            j = min(int(round(size / self.ds)), ns - 1)
            rho[j, :] += prob / nh
        return rho

    def with_updates(self, **updates: Any) -> "MfgConfig":
        return MfgConfig.model_validate({**self.model_dump(), **updates})


class CapacityConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    network: NetworkConfig
    r0_min: float
    r0_max: float
    delta_r: Optional[float] = None
    ds_bins: int = 21
    rate_tolerance: float = 1e-4
    delta0: float = 0.01

    @field_validator("r0_min", "rate_tolerance", "delta0")
    @classmethod
    def validate_positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("must be positive")
        return v

    @field_validator("ds_bins")
    @classmethod
    def validate_bins(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be at least 1")
        return v

    @model_validator(mode="after")
    def validate_bracket(self) -> "CapacityConfig":
        if not self.r0_max > self.r0_min:
            raise ValueError("hop-length bracket must satisfy r0_min < r0_max")
        if self.r0_max > self.network.Nm * self.network.d0 + 1e-12:
            raise ValueError("r0_max must not exceed Nm * d0")
        if self.delta_r is not None and not self.delta_r > 0:
            raise ValueError("delta_r must be positive")
        return self

    @property
    def hop_tolerance(self) -> float:
        return self.delta_r if self.delta_r is not None else 0.01 * self.network.d0

    def with_updates(self, **updates: Any) -> "CapacityConfig":
        network_updates = {
            key: updates.pop(key)
            for key in list(updates)
            if key in NetworkConfig.model_fields or key == "lambda"
        }
        data = self.model_dump()
        data["network"] = self.network.with_updates(**network_updates)
        return CapacityConfig.model_validate({**data, **updates})


class TdmScheme(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = ""
    partition: List[List[int]]
    slot_fractions: Optional[List[float]] = None

    @model_validator(mode="after")
    def validate_partition(self) -> "TdmScheme":
        if not self.partition or any(not group for group in self.partition):
            raise ValueError("every time slot must hold at least one link")
        flat = [link for group in self.partition for link in group]
        if len(flat) != len(set(flat)):
            raise ValueError("time-slot groups must be disjoint")
        if sorted(flat) != list(range(len(flat))):
            raise ValueError("time-slot groups must cover links 0..n-1")
        if self.slot_fractions is not None:
            if len(self.slot_fractions) != len(self.partition):
                raise ValueError("one slot fraction per group is required")
            if any(f < 0 for f in self.slot_fractions):
                raise ValueError("slot fractions must be non-negative")
            if abs(math.fsum(self.slot_fractions) - 1.0) > 1e-9:
                raise ValueError("slot fractions must sum to 1")
        return self

    @property
    def link_count(self) -> int:
        return sum(len(group) for group in self.partition)

    @property
    def fractions(self) -> List[float]:
        if self.slot_fractions is not None:
            return list(self.slot_fractions)
        return [1.0 / len(self.partition)] * len(self.partition)


class SweepAxis(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    parameter: str
    values: List[float] = Field(default_factory=list)


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    network: Optional[NetworkConfig] = None
    mfg: Optional[MfgConfig] = None
    capacity: Optional[CapacityConfig] = None
    sweep: List[SweepAxis] = Field(default_factory=list)
    trials: int = 10_000
    seed: int = 0
    output_path: Optional[Path] = None

    @field_validator("trials")
    @classmethod
    def validate_trials(cls, v: int) -> int:
        if v < 1:
            raise ValueError("trials must be at least 1")
        return v

    @model_validator(mode="after")
    def validate_sweep(self) -> "ExperimentSpec":
        known = set(self.sweep_parameters())
        for axis in self.sweep:
            if axis.parameter not in known:
                raise ValueError(
                    f"sweep parameter '{axis.parameter}' is not a field of the base config",
                )
        return self

    def sweep_parameters(self) -> List[str]:
        names: List[str] = []
        if self.network is not None:
            names += list(NetworkConfig.model_fields) + ["lambda"]
        if self.capacity is not None:
            names += list(CapacityConfig.model_fields)
            names += list(NetworkConfig.model_fields) + ["lambda"]
        if self.mfg is not None:
            names += list(MfgConfig.model_fields)
        return names

    def sweep_points(self) -> List[Dict[str, float]]:
        """Cartesian product of the sweep axes, first axis varying slowest."""
        points: List[Dict[str, float]] = [{}]
        for axis in self.sweep:
            if not axis.values:
                continue
            points = [{**point, axis.parameter: value} for point in points for value in axis.values]
        return points


ModelT = TypeVar("ModelT", bound=BaseModel)

CONFIG_MODELS: Dict[str, Type[BaseModel]] = {
    "network": NetworkConfig,
    "mfg": MfgConfig,
    "capacity": CapacityConfig,
    "experiment": ExperimentSpec,
}


def _diagnostics_from(error: ValidationError) -> List[Tuple[str, str]]:
    return [
        (".".join(str(part) for part in item["loc"]) or "<root>", item["msg"])
        for item in error.errors()
    ]


def _read_json(path: Union[str, Path]) -> Any:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"cannot read {path}: {e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(
            f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}",
            [(f"line {e.lineno} column {e.colno}", e.msg)],
        ) from e


def detect_model(document: Any) -> Type[BaseModel]:
    """Guess which config model a parsed JSON document describes."""
    if isinstance(document, dict):
        if "name" in document and ("sweep" in document or "trials" in document):
            return ExperimentSpec
        if "network" in document and "r0_min" in document:
            return CapacityConfig
        if "T" in document and "arrival_pmf" in document:
            return MfgConfig
    return NetworkConfig


def load_config(path: Union[str, Path], model: Type[ModelT]) -> ModelT:
    """Read and validate a JSON config file.

    Raises:
        ConfigurationError: unreadable file, invalid JSON, or invariant violations
            (all of them listed in ``diagnostics``).
    """
    document = _read_json(path)
    try:
        return model.model_validate(document)
    except ValidationError as e:
        diagnostics = _diagnostics_from(e)
        summary = "; ".join(f"{field}: {msg}" for field, msg in diagnostics)
        raise ConfigurationError(f"{path}: {summary}", diagnostics) from e


def collect_diagnostics(
    path: Union[str, Path],
    model: Optional[Type[BaseModel]] = None,
) -> List[Tuple[str, str]]:
    """Return every invariant violation found in a config file.

    An empty list means the file is clean. Unparseable files raise
    ConfigurationError with the parse location.
    """
    document = _read_json(path)
    model = model or detect_model(document)
    try:
        model.model_validate(document)
    except ValidationError as e:
        return _diagnostics_from(e)
    return []


def parse_override(text: str) -> Tuple[str, Any]:
    """Parse a ``key=value`` override, decoding the value as JSON when possible."""
    if "=" not in text:
        raise ConfigurationError(f"override '{text}' is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value
