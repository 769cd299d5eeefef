"""meanfieldnet.presets

Experiment presets that turn the solvers into data tables. Every preset owns
a default ExperimentSpec (base configs plus sweep axes) and knows how to
evaluate one sweep point; ``run_preset`` applies overrides, walks the sweep
in order and writes one CSV per preset.

Key Classes:
- ExperimentPreset: the interface every preset implements.
- MassiveRatePreset: mean-field prediction and Monte Carlo rate of a massive
  single-hop network (rate vs. intensity, power cap, Nc, CSI resolution).
- TdmPreset: time-division scheme comparison on four explicit links.
- MfgPowerPreset: total power of the delay-constrained game vs. arrival size.
- CapacityPreset: IESH-s / IESH-g transport capacity sweeps.
- PresetFactory: look up a preset class by name.

Usage:
Pick a preset through the factory and inspect or edit its spec, or call
``run_preset`` which also applies overrides and writes the CSV.

Example:
    from meanfieldnet.presets import PresetFactory, run_preset

    spec = PresetFactory.get_preset("fig1_rate_vs_lambda").default_spec()
    run = run_preset("fig1_rate_vs_lambda", {"sweep.lambda": [1.0]}, trials=100)
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Protocol, Tuple, Type, TypeVar

from pydantic import ValidationError

from .builders import MeanFieldWtmBuilder
from .capacity import iesh_g_capacity, iesh_s_capacity
from .channel import path_loss, rayleigh_fading_levels
from .config import (
    CapacityConfig,
    ExperimentSpec,
    MfgConfig,
    NetworkConfig,
    SweepAxis,
    TdmScheme,
)
from .errors import ConfigurationError, InfeasibleProblemError
from .io import create_directory, write_csv
from .logging_utils import log_method
from .mfg import pdhg_solve
from .simulation import PowerPolicy, interference_mean, simulate_massive
from .tdm import DEFAULT_TDM_GAINS, random_scheme, standard_schemes, tdm_compare
from .wtm import mapel_solve

logger = logging.getLogger(__name__)

FULL_TRIALS = 100_000

NETWORK_KEYS = set(NetworkConfig.model_fields) | {"lambda"}
CAPACITY_KEYS = set(CapacityConfig.model_fields) - {"network"}
MFG_KEYS = set(MfgConfig.model_fields)


class PresetTable(NamedTuple):
    columns: List[str]
    rows: List[List[Any]]
    comments: List[str]


class PresetRun(NamedTuple):
    paths: List[Path]
    flagged: bool


def apply_point(spec: ExperimentSpec, point: Dict[str, Any]) -> ExperimentSpec:
    """Return ``spec`` with each parameter replaced in every base config that owns it."""
    network_updates: Dict[str, Any] = {}
    capacity_updates: Dict[str, Any] = {}
    mfg_updates: Dict[str, Any] = {}
    for key, value in point.items():
        owned = False
        if key in NETWORK_KEYS and (spec.network is not None or spec.capacity is not None):
            network_updates[key] = value
            owned = True
        if key in CAPACITY_KEYS and spec.capacity is not None:
            capacity_updates[key] = value
            owned = True
        if key in MFG_KEYS and spec.mfg is not None:
            mfg_updates[key] = value
            owned = True
        if not owned:
            raise ConfigurationError(f"'{key}' is not a field of any base config of '{spec.name}'")

    updates: Dict[str, Any] = {}
    try:
        if spec.network is not None and network_updates:
            updates["network"] = spec.network.with_updates(**network_updates)
        if spec.capacity is not None and (network_updates or capacity_updates):
            updates["capacity"] = spec.capacity.with_updates(**network_updates, **capacity_updates)
        if spec.mfg is not None and mfg_updates:
            updates["mfg"] = spec.mfg.with_updates(**mfg_updates)
    except ValidationError as e:
        raise ConfigurationError(f"invalid parameters {point} for '{spec.name}': {e}") from e
    return spec.model_copy(update=updates)


def apply_overrides(spec: ExperimentSpec, overrides: Dict[str, Any]) -> ExperimentSpec:
    """Apply ``--set`` style overrides.

    ``trials`` and ``seed`` set the run; ``sweep.<param>`` replaces the values
    of a sweep axis (an empty list collapses it); anything else updates the
    base configs.
    """
    top: Dict[str, Any] = {}
    sweep = {axis.parameter: list(axis.values) for axis in spec.sweep}
    fields: Dict[str, Any] = {}
    for key, value in overrides.items():
        if key in ("trials", "seed"):
            top[key] = int(value)
        elif key.startswith("sweep."):
            parameter = key[len("sweep.") :]
            sweep[parameter] = list(value) if isinstance(value, (list, tuple)) else [value]
        else:
            fields[key] = value
    if fields:
        spec = apply_point(spec, fields)
    document = spec.model_dump(by_alias=True)
    document.update(top)
    document["sweep"] = [{"parameter": name, "values": values} for name, values in sweep.items()]
    try:
        return ExperimentSpec.model_validate(document)
    except ValidationError as e:
        raise ConfigurationError(f"invalid overrides for '{spec.name}': {e}") from e


def _sweep_columns(spec: ExperimentSpec) -> List[str]:
    return [axis.parameter for axis in spec.sweep if axis.values]


def _point_values(spec: ExperimentSpec, point: Dict[str, Any]) -> List[Any]:
    return [point[name] for name in _sweep_columns(spec)]


R = TypeVar("R")


def map_points(
    evaluate: Callable[[Dict[str, Any]], R],
    points: List[Dict[str, Any]],
    workers: int = 1,
) -> List[R]:
    """Evaluate sweep points, in worker processes when ``workers > 1``.

    Results come back in sweep order whatever order the workers finish in.
    """
    if workers <= 1 or len(points) <= 1:
        return [evaluate(point) for point in points]
    with ProcessPoolExecutor(max_workers=min(workers, len(points))) as pool:
        return list(pool.map(evaluate, points))


class ExperimentPreset(Protocol):
    """Generic interface for an experiment preset.

    Methods:
        default_spec() -> ExperimentSpec: base configs and sweep axes.
        table(spec: ExperimentSpec, workers: int) -> PresetTable: evaluate every
            sweep point; rows keep the sweep order.
    """

    name: str
    description: str

    @classmethod
    def default_spec(cls) -> ExperimentSpec: ...

    @classmethod
    def table(cls, spec: ExperimentSpec, workers: int = 1) -> PresetTable: ...


def evaluation_network(**updates: Any) -> NetworkConfig:
    """n = 10 mW, alpha = 3, d0 = 1 m, NmI = 10, Nm = 2, Na = 1, Nc = 2, 4-level Rayleigh fading."""
    base = NetworkConfig(lam=1.0, noise=10.0, alpha=3.0, d0=1.0, Nm=2, NmI=10, Na=1, Nc=2)
    return base.with_updates(**updates) if updates else base


class MassiveRatePreset(ExperimentPreset):
    """Average rate of the massive single-hop network.

    Each sweep point is solved on the reduced problem with MAPEL, then the
    optimal group policy is replayed on sampled networks. Mean-field rows
    come first and simulation rows follow, both in sweep order.
    """

    name = "massive_rate"
    description = "average rate, mean-field vs. Monte Carlo"
    sweep: Tuple[Tuple[str, Tuple[float, ...]], ...] = ()
    delta0 = 0.01

    @classmethod
    def base_network(cls) -> NetworkConfig:
        return evaluation_network()

    @classmethod
    def default_spec(cls) -> ExperimentSpec:
        return ExperimentSpec(
            name=cls.name,
            network=cls.base_network(),
            sweep=[SweepAxis(parameter=p, values=list(v)) for p, v in cls.sweep],
        )

    @classmethod
    def expand(cls, point: Dict[str, Any]) -> Dict[str, Any]:
        """Translate sweep values into config values."""
        return point

    @classmethod
    def evaluate(cls, spec: ExperimentSpec, point: Dict[str, Any]) -> Tuple[List[Any], List[Any]]:
        """Mean-field and simulation rows of one sweep point."""
        network = apply_point(spec, cls.expand(point)).network
        values = _point_values(spec, point)
        builder = MeanFieldWtmBuilder(config=network)
        problem = builder.build()
        try:
            solution = mapel_solve(problem, delta0=cls.delta0)
        except InfeasibleProblemError as e:
            logger.warning("Sweep point %s is infeasible: %s", point, e)
            return (
                ["meanfield", *values, math.nan, 0.0, 1],
                ["simulation", *values, math.nan, 0.0, 1],
            )
        policy = PowerPolicy.from_vector(solution.p, builder.table.NI, len(builder.direct))
        report = simulate_massive(network, policy, spec.trials, spec.seed, builder=builder)
        return (
            ["meanfield", *values, solution.rate, 0.0, int(not solution.converged)],
            ["simulation", *values, report.mean_rate, report.rate_stderr, 0],
        )

    @classmethod
    def table(cls, spec: ExperimentSpec, workers: int = 1) -> PresetTable:
        if spec.network is None:
            raise ConfigurationError(f"preset '{cls.name}' needs a network config")
        pairs = map_points(partial(cls.evaluate, spec), spec.sweep_points(), workers)
        return PresetTable(
            columns=["method", *_sweep_columns(spec), "rate", "stderr", "flagged"],
            rows=[meanfield for meanfield, _ in pairs] + [simulation for _, simulation in pairs],
            comments=[
                "rate: average per-link rate (bits/s/Hz); stderr: Monte Carlo standard error",
                "flagged: 1 when the point is infeasible or MAPEL stopped before converging",
            ],
        )


class RateVsLambdaPreset(MassiveRatePreset):
    name = "fig1_rate_vs_lambda"
    description = "average rate vs. node intensity for three power caps"
    sweep = (("lambda", (0.5, 1.0, 2.0)), ("p_max", (0.01, 0.02, 0.1)))


class RateVsPmaxPreset(MassiveRatePreset):
    """Interference-limited setting: n = 1 uW, one direct ring, 2-level fading, no tracked classes.

    With n = 10 mW the mean interference stays a few percent of the noise and
    the rate keeps growing with the cap; the saturation at high intensity
    needs interference well above the noise. The reduced problem has two
    variables, so MAPEL runs at delta0 = 1e-4.
    """

    name = "fig2_rate_vs_pmax"
    description = "average rate vs. per-link power cap"
    sweep = (("lambda", (0.5, 2.0, 4.0)), ("p_max", (0.01, 0.02, 0.05, 0.1, 0.2)))
    delta0 = 1e-4

    @classmethod
    def base_network(cls) -> NetworkConfig:
        return evaluation_network(noise=1e-3, Nm=1, Na=0, fading_levels=rayleigh_fading_levels(2))


class NcSensitivityPreset(MassiveRatePreset):
    name = "fig8_nc_sensitivity"
    description = "average rate vs. number of interference-count intervals"
    sweep = (("Nc", (1, 2)), ("p_max", (0.02, 0.05, 0.2)))

    @classmethod
    def expand(cls, point: Dict[str, Any]) -> Dict[str, Any]:
        return {**point, "Nc": int(point["Nc"])} if "Nc" in point else point


class CsiResolutionPreset(MassiveRatePreset):
    """Sweep values are level counts of the source-destination channel.

    Each count becomes an equal-probability Rayleigh table for the direct
    gains only; interfering links keep the 4-level table.
    """

    name = "fig3_csi_resolution"
    description = "average rate vs. number of quantized direct-channel levels"
    sweep = (("direct_fading_levels", (2, 4, 6)),)

    @classmethod
    def expand(cls, point: Dict[str, Any]) -> Dict[str, Any]:
        if "direct_fading_levels" not in point:
            return point
        levels = rayleigh_fading_levels(int(point["direct_fading_levels"]))
        return {**point, "direct_fading_levels": levels}


class TdmPreset(ExperimentPreset):
    """No division, random division, {1,4}/{2,3} and {1,2}/{3,4} on four links.

    Links use the 4-level Rayleigh amplitude centroids as gains; every other
    pair is at unit distance with unit fading.
    """

    name = "fig6_tdm"
    description = "average rate of four time-division schemes"

    @classmethod
    def default_spec(cls) -> ExperimentSpec:
        return ExperimentSpec(name=cls.name, network=evaluation_network(p_max=0.1))

    @classmethod
    def schemes(cls, seed: int) -> List[TdmScheme]:
        standard = {scheme.name: scheme for scheme in standard_schemes(len(DEFAULT_TDM_GAINS))}
        return [
            standard["no_tdm"],
            random_scheme(len(DEFAULT_TDM_GAINS), 2, seed),
            standard["strong_weak_pairs"],
            standard["adjacent_pairs"],
        ]

    @classmethod
    def evaluate(cls, spec: ExperimentSpec, point: Dict[str, Any]) -> List[List[Any]]:
        network = apply_point(spec, point).network
        schemes = cls.schemes(spec.seed)
        results = tdm_compare(
            DEFAULT_TDM_GAINS,
            schemes,
            noise=network.noise,
            p_max=network.p_max,
            alpha=network.alpha,
        )
        rows = []
        for scheme, result in zip(schemes, results):
            partition = "|".join(",".join(str(i + 1) for i in group) for group in scheme.partition)
            rows.append(
                [*_point_values(spec, point), result.scheme, partition, result.rate, int(result.flagged)],
            )
        return rows

    @classmethod
    def table(cls, spec: ExperimentSpec, workers: int = 1) -> PresetTable:
        if spec.network is None:
            raise ConfigurationError(f"preset '{cls.name}' needs a network config")
        blocks = map_points(partial(cls.evaluate, spec), spec.sweep_points(), workers)
        return PresetTable(
            columns=[*_sweep_columns(spec), "scheme", "partition", "rate", "flagged"],
            rows=[row for block in blocks for row in block],
            comments=[
                "gains h = " + ", ".join(f"{h:.4f}" for h in DEFAULT_TDM_GAINS) + "; cross links at unit distance",
                "partition: 1-based link groups separated by '|'; rate: per-link average (bits/s/Hz)",
            ],
        )


class MfgPowerPreset(ExperimentPreset):
    """Fixed channel, T = 3, n = 0.1 mW, gain (1 + d)^-alpha, interferers within 3 m.

    The mean interference gain of the game comes from the network intensity
    and the disk of radius Nm * d0; the direct gain is the unit-distance path
    loss.
    """

    name = "fig9_mfg_power"
    description = "total power of the delay-constrained game vs. arrival size"

    @classmethod
    def default_spec(cls) -> ExperimentSpec:
        return ExperimentSpec(
            name=cls.name,
            network=evaluation_network(noise=0.1, Nm=3),
            mfg=MfgConfig(T=3.0, noise=0.1, arrival_pmf=[(1.0, 1.0)], fixed_channel=True),
            sweep=[
                SweepAxis(parameter="lambda", values=[0.5, 1.0]),
                SweepAxis(parameter="arrival_pmf", values=[1.0, 2.0, 3.0, 4.0]),
            ],
        )

    @classmethod
    def wire(cls, network: NetworkConfig, mfg: MfgConfig) -> MfgConfig:
        """Channel-model inputs of the game: direct gain and mean interference gain."""
        h = float(path_loss(network.d0, network.alpha))
        gbar = interference_mean(network.lam, 1.0, 1.0, network.alpha, network.Nm * network.d0)
        return mfg.with_updates(h_range=(h, h), gbar=gbar, noise=network.noise)

    @classmethod
    def evaluate(cls, spec: ExperimentSpec, point: Dict[str, Any]) -> List[Any]:
        """Sweep values of ``arrival_pmf`` are sizes of a single-atom arrival law."""
        expanded = dict(point)
        if "arrival_pmf" in expanded and not isinstance(expanded["arrival_pmf"], list):
            expanded["arrival_pmf"] = [(float(expanded["arrival_pmf"]), 1.0)]
        resolved = apply_point(spec, expanded)
        solution = pdhg_solve(cls.wire(resolved.network, resolved.mfg))
        return [
            *_point_values(spec, point),
            solution.total_power,
            solution.cleared_mass,
            solution.iterations,
            int(not solution.converged),
        ]

    @classmethod
    def table(cls, spec: ExperimentSpec, workers: int = 1) -> PresetTable:
        if spec.network is None or spec.mfg is None:
            raise ConfigurationError(f"preset '{cls.name}' needs network and mfg configs")
        return PresetTable(
            columns=[*_sweep_columns(spec), "total_power", "cleared_mass", "iterations", "flagged"],
            rows=map_points(partial(cls.evaluate, spec), spec.sweep_points(), workers),
            comments=[
                "total_power: power integrated over the deadline (mW s); cleared_mass: share of empty buffers at T",
            ],
        )


class CapacityPreset(ExperimentPreset):
    """Transport capacity of an equivalent single-hop network across a sweep."""

    name = "capacity"
    description = "transport capacity"
    method = "iesh-s"
    sweep: Tuple[Tuple[str, Tuple[float, ...]], ...] = ()

    @classmethod
    def base_capacity(cls) -> CapacityConfig:
        network = evaluation_network(Nm=10, p_ave=0.1)
        return CapacityConfig(network=network, r0_min=0.5, r0_max=4.0, delta_r=0.05)

    @classmethod
    def default_spec(cls) -> ExperimentSpec:
        return ExperimentSpec(
            name=cls.name,
            capacity=cls.base_capacity(),
            sweep=[SweepAxis(parameter=p, values=list(v)) for p, v in cls.sweep],
        )

    @classmethod
    def evaluate(cls, spec: ExperimentSpec, point: Dict[str, Any]) -> List[Any]:
        solve = iesh_s_capacity if cls.method == "iesh-s" else iesh_g_capacity
        result = solve(apply_point(spec, point).capacity)
        return [
            *_point_values(spec, point),
            result.r0_star,
            result.rate_star,
            result.transport_capacity,
            result.multihop_rate,
            int(result.flagged),
        ]

    @classmethod
    def table(cls, spec: ExperimentSpec, workers: int = 1) -> PresetTable:
        if spec.capacity is None:
            raise ConfigurationError(f"preset '{cls.name}' needs a capacity config")
        rows = map_points(partial(cls.evaluate, spec), spec.sweep_points(), workers)
        return PresetTable(
            columns=[
                *_sweep_columns(spec),
                "r0_star",
                "rate_star",
                "transport_capacity",
                "multihop_rate",
                "flagged",
            ],
            rows=rows,
            comments=[
                f"{cls.method}: r0_star in m, rates in bits/s/Hz, transport_capacity = r0_star * rate_star",
            ],
        )


class IeshSLambdaPreset(CapacityPreset):
    """d0 = 5 mm with 100 hop-distance bins over a 1 m link span.

    Interferers sit within 1 m; the nearest ring holds 1 / 200^2 of them, so
    no index is tracked (Na = 0).
    """

    name = "fig4_iesh_s_lambda"
    description = "IESH-s transport capacity vs. intensity for two average power caps"
    sweep = (("lambda", (0.3, 1.0, 3.0, 10.0, 30.0)), ("p_ave", (0.1, 1.0)))

    @classmethod
    def base_capacity(cls) -> CapacityConfig:
        network = evaluation_network(d0=0.005, Nm=200, NmI=200, Na=0, p_ave=0.1)
        return CapacityConfig(
            network=network,
            r0_min=0.05,
            r0_max=1.0,
            delta_r=0.005,
            ds_bins=100,
            rate_tolerance=1e-6,
        )


class IeshSMinHopPreset(CapacityPreset):
    name = "fig5_iesh_s_rmin"
    description = "IESH-s transport capacity vs. minimum hop length"
    sweep = (("r0_min", (0.5, 1.0, 1.5, 2.0)), ("lambda", (1.0, 2.0)))


class IeshGLambdaPreset(CapacityPreset):
    name = "fig7_iesh_g_lambda"
    description = "IESH-g transport capacity vs. intensity"
    method = "iesh-g"
    sweep = (("lambda", (5.0, 10.0, 20.0)),)

    @classmethod
    def base_capacity(cls) -> CapacityConfig:
        network = evaluation_network(Nm=10, p_max=0.1)
        return CapacityConfig(network=network, r0_min=0.5, r0_max=4.0, delta_r=0.05)


PRESETS: Dict[str, Type[ExperimentPreset]] = {
    preset.name: preset
    for preset in (
        RateVsLambdaPreset,
        RateVsPmaxPreset,
        NcSensitivityPreset,
        CsiResolutionPreset,
        TdmPreset,
        MfgPowerPreset,
        IeshSLambdaPreset,
        IeshSMinHopPreset,
        IeshGLambdaPreset,
    )
}


class PresetFactory:
    """Factory class for obtaining a preset by name.

    Methods:
        get_preset(name: str) -> ExperimentPreset: Get the preset class by name.
        names() -> List[str]: Every known preset name.
    """

    @staticmethod
    def get_preset(name: str) -> Type[ExperimentPreset]:
        """Get the preset class registered under ``name``.

        Raises:
            ConfigurationError: If the preset name is unknown.
        """
        try:
            return PRESETS[name]
        except KeyError:
            raise ConfigurationError(
                f"Unknown preset '{name}'; choose one of: {', '.join(sorted(PRESETS))}",
            ) from None

    @staticmethod
    def names() -> List[str]:
        return sorted(PRESETS)


@log_method(logger)
def run_preset(
    name: str,
    overrides: Optional[Dict[str, Any]] = None,
    out: Path = Path("results"),
    trials: Optional[int] = None,
    seed: Optional[int] = None,
    full: bool = False,
    spec: Optional[ExperimentSpec] = None,
    workers: int = 1,
) -> PresetRun:
    """Run a preset end to end and write its table.

    Args:
        name (str):
            Preset name, see ``PresetFactory.names()``.
        overrides (Dict[str, Any], optional):
            ``key -> value`` overrides, see ``apply_overrides``.
        out (Path):
            Output directory; ``spec.output_path`` wins when set.
        trials (int, optional):
            Monte Carlo trials; ``full`` raises the default to 10^5.
        seed (int, optional):
            Master seed of every simulation.
        spec (ExperimentSpec, optional):
            Replaces the preset's default spec.
        workers (int):
            Worker processes for the sweep points; 1 runs them inline.

    Returns:
        PresetRun: the files written and whether any row is flagged.
        Re-running with the same inputs produces byte-identical files.
    """
    preset = PresetFactory.get_preset(name)
    spec = spec or preset.default_spec()
    run_overrides = dict(overrides or {})
    if full:
        run_overrides.setdefault("trials", FULL_TRIALS)
    if trials is not None:
        run_overrides["trials"] = trials
    if seed is not None:
        run_overrides["seed"] = seed
    spec = apply_overrides(spec, run_overrides)

    logger.info(
        "Running preset %s: %d sweep points, trials=%d seed=%d",
        name,
        len(spec.sweep_points()),
        spec.trials,
        spec.seed,
    )
    table = preset.table(spec, workers)
    directory = Path(spec.output_path) if spec.output_path is not None else Path(out)
    try:
        create_directory(directory)
        path = directory / f"{name}.csv"
        write_csv(
            path,
            table.columns,
            table.rows,
            comments=[f"{name}: {preset.description}", f"seed={spec.seed} trials={spec.trials}", *table.comments],
        )
    except OSError as e:
        raise ConfigurationError(f"cannot write results to {directory}: {e}") from e
    flagged = "flagged" in table.columns and any(
        row[table.columns.index("flagged")] for row in table.rows
    )
    return PresetRun(paths=[path], flagged=flagged)
