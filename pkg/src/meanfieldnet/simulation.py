"""meanfieldnet.simulation

Per-node Monte Carlo ground truth for the mean-field predictions.

Each trial draws its own generator from ``SeedSequence(seed).spawn(trials)``
so trials are independent and a run is reproducible bit for bit. Distances
wrap on the square torus of side ``area_side``.

Key Classes:
    - PowerPolicy: power per (interference group, direct gain state).
    - Snapshot: one sampled network with gain states and groups of every
      link, and the interfering pairs of the tagged destinations.
    - SimReport: mean rate and interference with standard errors and a rate
      histogram.

Key Functions:
    - simulate_massive: single-hop D2D links under a group-indexed policy.
    - empirical_interference: interference at a typical destination versus
      the closed-form mean and its bound.
    - interference_by_radius: the same statistic at nested truncation radii.
    - simulate_multihop: equidistant-path routes with sequential relaying.
"""

import logging
import math
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ConfigDict, field_validator
from pydantic.dataclasses import dataclass
from scipy.spatial import cKDTree

from .builders import MeanFieldWtmBuilder
from .channel import GainDistribution, NodeSet, path_loss, ring_index
from .config import NetworkConfig
from .errors import ConfigurationError, DomainError, PolicyCoverageError
from .io import write_csv
from .logging_utils import log_method
from .reduction import InterferenceGroupTable
from .routing import RoutePlan, node_tree, plan_route, torus_distance, wrap_positions

logger = logging.getLogger(__name__)

HISTOGRAM_BINS = 20
TAGGED_LINKS = 100


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class PowerPolicy:
    """Power table indexed [group, gain state], both 0-based."""

    table: np.ndarray

    @field_validator("table")
    @classmethod
    def validate_table(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.ndim != 2:
            raise ValueError("power table must be two-dimensional")
        if np.any(v < 0):
            raise ValueError("powers must be non-negative")
        return v

    @classmethod
    def uniform(cls, groups: int, states: int, power: float) -> "PowerPolicy":
        return cls(table=np.full((groups, states), power, dtype=float))

    @classmethod
    def from_vector(cls, p: np.ndarray, groups: int, states: int) -> "PowerPolicy":
        """Policy from a reduced-problem power vector indexed j + i * Ng."""
        p = np.asarray(p, dtype=float)
        if p.size != groups * states:
            raise PolicyCoverageError(
                f"power vector of length {p.size} does not cover {groups} x {states} pairs",
            )
        return cls(table=p.reshape(groups, states))

    def check_coverage(self, groups: int, states: int) -> None:
        if self.table.shape != (groups, states):
            raise PolicyCoverageError(
                f"policy covers {self.table.shape} (group, state) pairs, "
                f"the network needs {(groups, states)}",
            )

    def lookup(self, groups: np.ndarray, states: np.ndarray) -> np.ndarray:
        return self.table[groups, states]


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class SimReport:
    trials: int
    seed: int
    mean_rate: float
    rate_stderr: float
    mean_interference: float
    interference_stderr: float
    histogram_edges: np.ndarray
    histogram_counts: np.ndarray
    extra: Optional[Dict[str, float]] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "mean_rate": self.mean_rate,
            "rate_stderr": self.rate_stderr,
            "mean_interference": self.mean_interference,
            "interference_stderr": self.interference_stderr,
            "rate_histogram": {
                "edges": self.histogram_edges.tolist(),
                "counts": self.histogram_counts.tolist(),
            },
            "extra": dict(self.extra or {}),
        }

    def histogram_to_csv(self, path: Union[str, Path]) -> None:
        rows = [
            [float(lo), float(hi), int(count)]
            for lo, hi, count in zip(
                self.histogram_edges[:-1],
                self.histogram_edges[1:],
                self.histogram_counts,
            )
        ]
        write_csv(
            Path(path),
            ["rate_lo", "rate_hi", "count"],
            rows,
            comments=[f"per-link rate histogram, trials={self.trials} seed={self.seed}"],
        )


class InterferenceReport(NamedTuple):
    mean: float
    stderr: float
    bound: float
    exact_mean: float


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class Snapshot:
    """One sampled network: link gains, group labels and interfering pairs.

    Every link carries a gain state and a group, so every transmitter has a
    power. Rates are measured at the ``tagged`` links only: ``pairs`` rows are
    (position in ``tagged``, transmitter) with ``pair_gains`` the interference
    gain of each pair.
    """

    direct_gains: np.ndarray
    states: np.ndarray
    groups: np.ndarray
    tagged: np.ndarray
    pairs: np.ndarray
    pair_gains: np.ndarray

    @property
    def links(self) -> int:
        return self.direct_gains.size


def trial_generators(seed: int, trials: int) -> List[np.random.Generator]:
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(trials)]


def simulate_snapshot(
    direct_gains: np.ndarray,
    powers: np.ndarray,
    noise: float,
    pairs: Optional[np.ndarray] = None,
    pair_gains: Optional[np.ndarray] = None,
    tx_powers: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Realized rates and interference of concurrently active links.

    Args:
        tx_powers: power of every transmitter that ``pairs[:, 1]`` indexes,
            when the measured links are a subset of the network. Defaults to
            ``powers``.

    Returns:
        Tuple[np.ndarray, np.ndarray]: per-link log2(1 + SINR) and interference.
    """
    direct_gains = np.asarray(direct_gains, dtype=float)
    powers = np.asarray(powers, dtype=float)
    tx_powers = powers if tx_powers is None else np.asarray(tx_powers, dtype=float)
    interference = np.zeros(direct_gains.size)
    if pairs is not None and len(pairs):
        interference = np.bincount(
            pairs[:, 0],
            weights=tx_powers[pairs[:, 1]] * pair_gains,
            minlength=direct_gains.size,
        )
    rates = np.log2(1.0 + powers * direct_gains / (interference + noise))
    return rates, interference


def _interfering_pairs(
    receivers: np.ndarray,
    transmitters: np.ndarray,
    radius: float,
    side: float,
    own: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """(receiver, transmitter) index pairs within ``radius`` on the torus, sorted."""
    if receivers.shape[0] == 0 or transmitters.shape[0] == 0:
        return np.zeros((0, 2), dtype=int), np.zeros(0)
    rx_tree = cKDTree(wrap_positions(receivers, side), boxsize=side)
    tx_tree = cKDTree(wrap_positions(transmitters, side), boxsize=side)
    coo = rx_tree.sparse_distance_matrix(tx_tree, radius, output_type="coo_matrix")
    rows, cols, distances = coo.row.astype(int), coo.col.astype(int), coo.data
    if own is not None:
        keep = cols != own[rows]
        rows, cols, distances = rows[keep], cols[keep], distances[keep]
    order = np.lexsort((cols, rows))
    return np.column_stack([rows[order], cols[order]]), distances[order]


def tracking_radius(interference: GainDistribution, Na: int, d0: float) -> float:
    """Outer edge of the farthest ring holding one of the ``Na`` tracked classes."""
    if Na == 0:
        return 0.0
    return (int(interference.distance_index[:Na].max()) + 1) * d0


def _class_counts(pairs: np.ndarray, pair_index: np.ndarray, rows: int, Na: int) -> np.ndarray:
    counts = np.zeros((rows, Na), dtype=int)
    for k in range(Na):
        counts[:, k] = np.bincount(pairs[pair_index == k, 0], minlength=rows)
    return counts


def sample_snapshot(
    config: NetworkConfig,
    direct: GainDistribution,
    interference: GainDistribution,
    table: InterferenceGroupTable,
    rng: np.random.Generator,
    links: Optional[int] = None,
) -> Snapshot:
    """Sample PPP transmitters, destinations in the Nm * d0 disk, and their labels.

    Groups only depend on the tracked classes, so every link is labelled from
    its neighbours inside the tracking radius. The full NmI * d0 neighbourhood
    is resolved for ``links`` tagged destinations drawn without replacement
    (all of them when ``links`` is None), and a tagged link's group is
    recounted from that neighbourhood.
    """
    side = config.area_side
    count = rng.poisson(config.lam * side**2)
    tx = rng.uniform(0.0, side, size=(count, 2))
    radius = config.Nm * config.d0 * np.sqrt(rng.uniform(size=count))
    angle = rng.uniform(0.0, 2.0 * math.pi, size=count)
    rx = np.mod(tx + np.column_stack([radius * np.cos(angle), radius * np.sin(angle)]), side)

    level = rng.choice(config.direct_fading_gains.size, size=count, p=config.direct_fading_probs)
    states = direct.index_lookup()[level, ring_index(radius, config.d0, config.Nm)]

    if links is None or links >= count:
        tagged = np.arange(count)
    else:
        tagged = np.sort(rng.choice(count, size=links, replace=False))

    pair_lookup = interference.index_lookup()

    def neighbourhood(receivers: np.ndarray, owners: np.ndarray, pair_radius: float):
        pairs, distances = _interfering_pairs(receivers, tx, pair_radius, side, own=owners)
        pair_level = rng.choice(config.fading_gains.size, size=distances.size, p=config.fading_probs)
        return pairs, pair_lookup[pair_level, ring_index(distances, config.d0, config.NmI)]

    groups = np.zeros(count, dtype=int)
    track = tracking_radius(interference, table.Na, config.d0)
    if tagged.size < count and track > 0:
        near_pairs, near_index = neighbourhood(rx, np.arange(count), track)
        groups = table.group_of_counts(_class_counts(near_pairs, near_index, count, table.Na))
    pairs, pair_index = neighbourhood(rx[tagged], tagged, config.NmI * config.d0)
    groups[tagged] = table.group_of_counts(_class_counts(pairs, pair_index, tagged.size, table.Na))
    return Snapshot(
        direct_gains=direct.gains[states],
        states=states,
        groups=groups,
        tagged=tagged,
        pairs=pairs,
        pair_gains=interference.gains[pair_index],
    )


def _summarize(
    trials: int,
    seed: int,
    trial_rates: List[float],
    trial_interference: List[float],
    link_rates: List[np.ndarray],
    extra: Optional[Dict[str, float]] = None,
) -> SimReport:
    def mean_and_stderr(values: List[float]) -> Tuple[float, float]:
        if not values:
            return 0.0, 0.0
        arr = np.asarray(values, dtype=float)
        stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
        return float(arr.mean()), stderr

    mean_rate, rate_stderr = mean_and_stderr(trial_rates)
    mean_interference, interference_stderr = mean_and_stderr(trial_interference)
    pooled = np.concatenate(link_rates) if link_rates else np.zeros(0)
    top = float(pooled.max()) if pooled.size and pooled.max() > 0 else 1.0
    counts, edges = np.histogram(pooled, bins=HISTOGRAM_BINS, range=(0.0, top))
    return SimReport(
        trials=trials,
        seed=seed,
        mean_rate=mean_rate,
        rate_stderr=rate_stderr,
        mean_interference=mean_interference,
        interference_stderr=interference_stderr,
        histogram_edges=edges,
        histogram_counts=counts,
        extra=extra,
    )


@log_method(logger)
def simulate_massive(
    config: NetworkConfig,
    policy: PowerPolicy,
    trials: int,
    seed: int,
    builder: Optional[MeanFieldWtmBuilder] = None,
    links: Optional[int] = TAGGED_LINKS,
) -> SimReport:
    """Realized per-link rates of a PPP network under a group-indexed policy.

    Every link is labelled with its quantized direct-gain state and with the
    interference group of its actual neighbourhood, counted on the same
    intervals the reduction uses, and transmits at its policy power. Rates
    and interference are measured at ``links`` tagged destinations per trial
    (every destination when None).

    Raises:
        PolicyCoverageError: the policy does not cover every (group, state) pair.
    """
    if builder is None:
        builder = MeanFieldWtmBuilder(config=config)
    if builder.table is None:
        builder.build()
    policy.check_coverage(builder.table.NI, len(builder.direct))

    trial_rates: List[float] = []
    trial_interference: List[float] = []
    link_rates: List[np.ndarray] = []
    for rng in trial_generators(seed, trials):
        snapshot = sample_snapshot(
            config,
            builder.direct,
            builder.interference,
            builder.table,
            rng,
            links=links,
        )
        if snapshot.links == 0:
            continue
        powers = policy.lookup(snapshot.groups, snapshot.states)
        tagged = snapshot.tagged
        rates, interference = simulate_snapshot(
            snapshot.direct_gains[tagged],
            powers[tagged],
            config.noise,
            snapshot.pairs,
            snapshot.pair_gains,
            tx_powers=powers,
        )
        trial_rates.append(float(rates.mean()))
        trial_interference.append(float(interference.mean()))
        link_rates.append(rates)
    report = _summarize(trials, seed, trial_rates, trial_interference, link_rates)
    logger.info(
        "Simulated %d trials: mean rate %.6g +- %.2g",
        trials,
        report.mean_rate,
        report.rate_stderr,
    )
    return report


def interference_mean(lam: float, p_bar: float, h_bar: float, alpha: float, r_o: float) -> float:
    """Mean interference from ceil(lambda pi r_o^2) nodes uniform on the r_o disk."""
    if not alpha > 2:
        raise DomainError(f"alpha must exceed 2, got {alpha}")
    nodes = math.ceil(lam * math.pi * r_o**2 - 1e-12)
    shape = ((1.0 + r_o) ** (1.0 - alpha) * (1.0 + (alpha - 1.0) * r_o) - 1.0) / (
        (2.0 - alpha) * (alpha - 1.0)
    )
    return nodes * (2.0 / r_o**2) * p_bar * h_bar * shape


def interference_bound(
    lam: float,
    p_bar: float,
    h_bar: float,
    alpha: float,
    r_o: float,
    form: str = "corrected",
) -> float:
    """Upper bound on ``interference_mean`` that stays finite as r_o grows.

    ``form="printed"`` drops the factor 2 of the corrected bound; it is not a
    bound of the exact mean in general.
    """
    if not alpha > 2:
        raise DomainError(f"alpha must exceed 2, got {alpha}")
    if form not in ("corrected", "printed"):
        raise ConfigurationError(f"unknown bound form '{form}'")
    value = (lam * math.pi + 1.0 / r_o**2) * p_bar * h_bar / ((alpha - 2.0) * (alpha - 1.0))
    return 2.0 * value if form == "corrected" else value


def empirical_interference(
    config: NetworkConfig,
    power: float,
    trials: int,
    seed: int,
    r_o: Optional[float] = None,
    form: str = "corrected",
) -> InterferenceReport:
    """Interference at a typical destination from every node within r_o.

    Interferers form a PPP of intensity lambda around the destination, use a
    common power and draw their fading from the configured levels; distances
    are continuous.
    """
    r_o = config.NmI * config.d0 if r_o is None else r_o
    return interference_by_radius(config, power, [r_o], trials, seed, form)[0]


def interference_by_radius(
    config: NetworkConfig,
    power: float,
    radii: Sequence[float],
    trials: int,
    seed: int,
    form: str = "corrected",
) -> List[InterferenceReport]:
    """Interference truncated at each of ``radii`` on the same sampled PPPs.

    One PPP is drawn per trial over the largest disk; the report of a radius
    sums the nodes inside it, so reports of nested radii share their inner
    interferers.
    """
    radii = [float(r) for r in radii]
    if not radii or min(radii) <= 0:
        raise ConfigurationError("interference radii must be positive")
    h_bar = float(np.dot(config.fading_gains, config.fading_probs))
    outer = max(radii)

    samples = np.zeros((trials, len(radii)))
    for t, rng in enumerate(trial_generators(seed, trials)):
        count = rng.poisson(config.lam * (2.0 * outer) ** 2)
        offsets = rng.uniform(-outer, outer, size=(count, 2))
        distances = np.hypot(offsets[:, 0], offsets[:, 1])
        distances = distances[distances <= outer]
        fading = rng.choice(config.fading_gains, size=distances.size, p=config.fading_probs)
        received = power * fading * path_loss(distances, config.alpha)
        samples[t] = [received[distances <= r].sum() for r in radii]

    reports = []
    for j, r in enumerate(radii):
        column = samples[:, j]
        stderr = float(column.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
        reports.append(
            InterferenceReport(
                mean=float(column.mean()),
                stderr=stderr,
                bound=interference_bound(config.lam, power, h_bar, config.alpha, r, form),
                exact_mean=interference_mean(config.lam, power, h_bar, config.alpha, r),
            ),
        )
    return reports


@log_method(logger)
def simulate_multihop(
    config: NetworkConfig,
    r0: float,
    trials: int,
    seed: int,
    power: Optional[float] = None,
    hop_rate: Optional[float] = None,
    links: int = 50,
) -> SimReport:
    """End-to-end rates of relayed links under sequential store-and-forward.

    Each trial samples the PPP, picks ``links`` sources among its nodes and a
    destination uniform in the Nm * d0 disk around each, routes them by the
    equidistant path approximation and composes the link rate as
    1 / sum(1 / hop rate). With ``hop_rate`` every hop runs at that rate;
    otherwise hop rates come from SINR with every hop transmitter of every
    link active at ``power`` (default ``p_max``).
    """
    side = config.area_side
    span = config.Nm * config.d0
    if side < 2.0 * span:
        raise ConfigurationError(
            f"area side {side} must be at least twice the link span {span} on the torus",
        )
    power = config.p_max if power is None else power

    trial_rates: List[float] = []
    trial_interference: List[float] = []
    link_rates: List[np.ndarray] = []
    hop_counts: List[int] = []
    for rng in trial_generators(seed, trials):
        count = rng.poisson(config.lam * side**2)
        if count == 0:
            continue
        positions = rng.uniform(0.0, side, size=(count, 2))
        sources = rng.choice(count, size=min(links, count), replace=False)
        radius = span * np.sqrt(rng.uniform(size=sources.size))
        angle = rng.uniform(0.0, 2.0 * math.pi, size=sources.size)
        targets = np.mod(
            positions[sources] + np.column_stack([radius * np.cos(angle), radius * np.sin(angle)]),
            side,
        )
        nodes = NodeSet(positions=np.vstack([positions, targets]), seed=seed, area_side=side)
        tree = node_tree(nodes)
        plans = [
            plan_route(int(source), count + k, r0, nodes, tree)
            for k, source in enumerate(sources)
        ]
        hop_counts.extend(plan.hop_count for plan in plans)

        if hop_rate is not None:
            rates = np.array([hop_rate / plan.hop_count for plan in plans])
            interference = np.zeros(rates.size)
        else:
            rates, interference = _relayed_rates(config, nodes, plans, power, rng)
        trial_rates.append(float(rates.mean()))
        trial_interference.append(float(interference.mean()))
        link_rates.append(rates)
    extra = {"mean_hops": float(np.mean(hop_counts)) if hop_counts else 0.0}
    return _summarize(trials, seed, trial_rates, trial_interference, link_rates, extra)


def _relayed_rates(
    config: NetworkConfig,
    nodes: NodeSet,
    plans: List[RoutePlan],
    power: float,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-link composed rate and mean hop interference with all hops active."""
    side = nodes.area_side
    senders = np.array([node for plan in plans for node in plan.hops[:-1]], dtype=int)
    receivers = np.array([node for plan in plans for node in plan.hops[1:]], dtype=int)
    link_of_hop = np.repeat(np.arange(len(plans)), [plan.hop_count for plan in plans])
    hop_distance = torus_distance(nodes.positions[senders], nodes.positions[receivers], side)

    fading = rng.choice(config.fading_gains, size=senders.size, p=config.fading_probs)
    direct_gains = fading * path_loss(hop_distance, config.alpha)
    pairs, distances = _interfering_pairs(
        nodes.positions[receivers],
        nodes.positions[senders],
        config.NmI * config.d0,
        side,
        own=np.arange(senders.size),
    )
    # hops of one link take turns, so they never interfere with each other
    other_link = link_of_hop[pairs[:, 0]] != link_of_hop[pairs[:, 1]]
    pairs, distances = pairs[other_link], distances[other_link]
    pair_fading = rng.choice(config.fading_gains, size=distances.size, p=config.fading_probs)
    hop_rates, interference = simulate_snapshot(
        direct_gains,
        np.full(senders.size, power),
        config.noise,
        pairs,
        pair_fading * path_loss(distances, config.alpha),
    )
    with np.errstate(divide="ignore"):
        inverse = np.bincount(link_of_hop, weights=1.0 / hop_rates, minlength=len(plans))
    composed = np.where(np.isfinite(inverse) & (inverse > 0), 1.0 / inverse, 0.0)
    hop_interference = np.bincount(link_of_hop, weights=interference, minlength=len(plans))
    return composed, hop_interference / np.maximum([plan.hop_count for plan in plans], 1)
