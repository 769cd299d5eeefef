"""meanfieldnet.routing

Equidistant-path relay routing and the single-hop statistics it induces.

A link from source T to destination R at distance D is split into hops of
design length r0: the ideal relay points sit at T + j * r0 * (R - T) / D and
each one is served by the nearest node of the network. The relay deviation
from its ideal point is Rayleigh with sigma^2 = 1 / (2 pi lambda); hops that
touch an endpoint have one random end (variance 1 / (2 pi lambda)), relay to
relay hops have two (variance 1 / (pi lambda)).

Key Classes:
    - RoutePlan: node sequence, hop distances and relay deviations of a link.
    - IeshDistribution: quantized single-hop distance law of the equivalent
      single-hop network.

Key Functions:
    - plan_route: nearest-node relay selection on the torus.
    - hop_count_pmf / hop_portions: hop-count law and the endpoint-hop share.
    - deviation_sigma: Rayleigh parameter of the relay deviation.
    - single_hop_pmf: Gaussian mixture quantized onto a distance grid.
"""

import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ConfigDict, field_validator, model_validator
from pydantic.dataclasses import dataclass
from scipy import stats
from scipy.spatial import cKDTree

from .channel import NodeSet
from .errors import ConfigurationError, DomainError, RoutingError
from .io import write_csv

logger = logging.getLogger(__name__)


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class RoutePlan:
    hops: List[int]
    hop_distances: np.ndarray
    deviations: np.ndarray

    @model_validator(mode="after")
    def validate_lengths(self) -> "RoutePlan":
        if len(self.hops) < 2 and self.hop_distances.size:
            raise ValueError("a route needs a source and a destination")
        if self.hop_distances.size != max(len(self.hops) - 1, 0):
            raise ValueError("one distance per hop is required")
        return self

    @property
    def source(self) -> int:
        return self.hops[0]

    @property
    def destination(self) -> int:
        return self.hops[-1]

    @property
    def hop_count(self) -> int:
        return len(self.hops) - 1

    @property
    def relays(self) -> List[int]:
        return self.hops[1:-1]


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class IeshDistribution:
    ds_values: np.ndarray
    eps: np.ndarray
    eta_n: float
    eta_r: float
    r0: float

    @field_validator("eps")
    @classmethod
    def validate_eps(cls, v: np.ndarray) -> np.ndarray:
        if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-10:
            raise ValueError("hop-distance probabilities must be a pmf")
        return v

    @model_validator(mode="after")
    def validate_portions(self) -> "IeshDistribution":
        if abs(self.eta_n + self.eta_r - 1.0) > 1e-12:
            raise ValueError("hop portions must sum to 1")
        if self.ds_values.shape != self.eps.shape:
            raise ValueError("one probability per distance atom is required")
        return self

    @property
    def mean(self) -> float:
        return float(np.dot(self.ds_values, self.eps))

    def to_csv(self, path: Union[str, Path]) -> None:
        write_csv(
            Path(path),
            ["ds", "eps"],
            zip(self.ds_values.tolist(), self.eps.tolist()),
            comments=[
                f"r0={self.r0!r} eta_n={self.eta_n!r} eta_r={self.eta_r!r}",
                "ds: quantized single-hop distance (m); eps: probability",
            ],
        )


def torus_displacement(a: np.ndarray, b: np.ndarray, side: float) -> np.ndarray:
    """Shortest displacement b - a on the square torus of the given side."""
    delta = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    return delta - side * np.round(delta / side)


def torus_distance(a: np.ndarray, b: np.ndarray, side: float) -> np.ndarray:
    return np.linalg.norm(torus_displacement(a, b, side), axis=-1)


def wrap_positions(points: np.ndarray, side: float) -> np.ndarray:
    """Map points into [0, side), the domain a periodic k-d tree accepts."""
    wrapped = np.mod(np.asarray(points, dtype=float), side)
    wrapped[wrapped >= side] = 0.0
    return wrapped


def node_tree(nodes: NodeSet) -> cKDTree:
    """Periodic k-d tree over the node positions."""
    return cKDTree(wrap_positions(nodes.positions, nodes.area_side), boxsize=nodes.area_side)


def nearest_nodes(
    tree: cKDTree,
    points: np.ndarray,
    side: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest node index and distance per point; ties go to the lowest index."""
    points = wrap_positions(np.reshape(points, (-1, 2)), side)
    k = min(2, tree.n)
    distances, indices = tree.query(points, k=k)
    if k == 1:
        return indices.reshape(-1), distances.reshape(-1)
    tied = np.isclose(distances[:, 0], distances[:, 1], rtol=0.0, atol=1e-12)
    chosen = np.where(tied, np.minimum(indices[:, 0], indices[:, 1]), indices[:, 0])
    return chosen, distances[:, 0]


def relay_count(distance: float, r0: float) -> int:
    return max(int(math.ceil(distance / r0 - 1e-12)) - 1, 0)


def drop_revisits(hops: Sequence[int]) -> List[int]:
    """Keep the first visit of every node; the last entry is the endpoint and always stays."""
    destination = hops[-1]
    route: List[int] = []
    for node in hops[:-1]:
        if node != destination and node not in route:
            route.append(node)
    route.append(destination)
    return route


def plan_route(
    source: int,
    destination: int,
    r0: float,
    nodes: NodeSet,
    tree: Optional[cKDTree] = None,
) -> RoutePlan:
    """Route a link by the equidistant path approximation.

    Args:
        source (int):
            Index of the source node in ``nodes``.
        destination (int):
            Index of the destination node in ``nodes``.
        r0 (float):
            Design hop length in meters.
        nodes (NodeSet):
            Candidate relays; distances wrap on the torus.
        tree (cKDTree, optional):
            Prebuilt ``node_tree(nodes)`` to share across many routes.

    Returns:
        RoutePlan: relays are the nearest nodes to the ideal points.
        A relay that repeats an earlier node or the destination is dropped,
        so routes never loop.

    Raises:
        DomainError: ``r0`` is not positive.
        RoutingError: the node set is empty.
    """
    if not r0 > 0:
        raise DomainError(f"hop length must be positive, got {r0}")
    if len(nodes) == 0:
        raise RoutingError("cannot route over an empty node set")
    side = nodes.area_side
    start = nodes.positions[source]
    delta = torus_displacement(start, nodes.positions[destination], side)
    distance = float(np.linalg.norm(delta))
    relays = relay_count(distance, r0)

    hops = [source]
    deviations = np.zeros(0)
    if relays:
        steps = np.arange(1, relays + 1)[:, None] * (r0 / distance)
        ideal = start[None, :] + steps * delta[None, :]
        tree = tree if tree is not None else node_tree(nodes)
        chosen, deviations = nearest_nodes(tree, ideal, side)
        hops.extend(int(i) for i in chosen)
    hops.append(destination)

    collapsed = drop_revisits(hops)
    if len(collapsed) < len(hops):
        logger.debug(
            "Dropped %d revisited nodes on link %d -> %d",
            len(hops) - len(collapsed),
            source,
            destination,
        )
    if len(collapsed) == 1:
        collapsed.append(destination)

    points = nodes.positions[collapsed]
    hop_distances = torus_distance(points[:-1], points[1:], side)
    return RoutePlan(hops=collapsed, hop_distances=hop_distances, deviations=deviations)


def routes_to_csv(plans: Sequence[RoutePlan], nodes: NodeSet, path: Union[str, Path]) -> None:
    rows = []
    for link_id, plan in enumerate(plans):
        for hop_index, node in enumerate(plan.hops):
            x, y = nodes.positions[node]
            hop_distance = float(plan.hop_distances[hop_index - 1]) if hop_index else 0.0
            rows.append([link_id, hop_index, float(x), float(y), hop_distance])
    write_csv(Path(path), ["link_id", "hop_index", "x", "y", "hop_distance"], rows)


def hop_count_pmf(r0: float, d0: float, Nm: int) -> np.ndarray:
    """P(hops = a) for a = 1..ceil(Nm d0 / r0); the last atom takes the residual mass."""
    if not r0 > 0:
        raise DomainError(f"hop length must be positive, got {r0}")
    span = Nm * d0
    atoms = max(int(math.ceil(span / r0 - 1e-12)), 1)
    a = np.arange(1, atoms + 1, dtype=float)
    pmf = (2.0 * a - 1.0) * r0**2 / (d0**2 * Nm**2)
    pmf[-1] = max(1.0 - math.fsum(pmf[:-1]), 0.0)
    return pmf


def hop_portions(r0: float, d0: float, Nm: int) -> Tuple[float, float]:
    """Shares (eta_n, eta_r) of endpoint hops and relay-to-relay hops."""
    pmf = hop_count_pmf(r0, d0, Nm)
    hops = np.arange(1, pmf.size + 1, dtype=float)
    weights = np.where(hops == 1, 1.0, 2.0 / hops)
    eta_n = min(float(np.dot(weights, pmf)), 1.0)
    return eta_n, 1.0 - eta_n


def deviation_sigma(lam: float) -> float:
    """Rayleigh parameter sigma^2 = 1 / (2 pi lambda) of the relay deviation."""
    if not lam > 0:
        raise DomainError(f"node intensity must be positive, got {lam}")
    return 1.0 / (2.0 * math.pi * lam)


def default_ds_grid(r0: float, lam: float, bins: int = 21) -> np.ndarray:
    sigma_rr = math.sqrt(2.0 * deviation_sigma(lam))
    if bins == 1:
        return np.array([r0])
    return np.linspace(max(r0 - 4.0 * sigma_rr, 0.0), r0 + 4.0 * sigma_rr, bins)


def _bin_masses(ds_grid: np.ndarray, mean: float, variance: float) -> np.ndarray:
    edges = np.concatenate(([-np.inf], 0.5 * (ds_grid[:-1] + ds_grid[1:]), [np.inf]))
    return np.diff(stats.norm.cdf(edges, loc=mean, scale=math.sqrt(variance)))


def single_hop_pmf(
    r0: float,
    lam: float,
    ds_grid: Optional[Sequence[float]] = None,
    eta_n: float = 1.0,
    bins: int = 21,
) -> IeshDistribution:
    """Quantized single-hop distance law of the equivalent single-hop network.

    Endpoint hops are N(r0, 1/(2 pi lambda)); relay-to-relay hops are
    N(r0, 1/(pi lambda)). Each Gaussian is integrated over bins whose edges
    are the grid midpoints, with the outer bins open to +-infinity, then the
    two are mixed with weights (eta_n, 1 - eta_n).
    """
    if not r0 > 0:
        raise DomainError(f"hop length must be positive, got {r0}")
    if not 0.0 <= eta_n <= 1.0:
        raise ConfigurationError(f"eta_n must lie in [0, 1], got {eta_n}")
    grid = default_ds_grid(r0, lam, bins) if ds_grid is None else np.asarray(ds_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ConfigurationError("distance grid must be non-empty and strictly increasing")

    var_nr = deviation_sigma(lam)
    var_rr = 2.0 * var_nr
    if 3.0 * math.sqrt(var_rr) >= r0:
        logger.warning(
            "Hop-length spread 3*sigma=%.4g is not below r0=%.4g; "
            "the Gaussian hop law is a poor fit at this intensity",
            3.0 * math.sqrt(var_rr),
            r0,
        )
    eps_nr = _bin_masses(grid, r0, var_nr)
    eps_rr = _bin_masses(grid, r0, var_rr)
    eps = eta_n * eps_nr + (1.0 - eta_n) * eps_rr
    eps = eps / eps.sum()
    return IeshDistribution(
        ds_values=grid,
        eps=eps,
        eta_n=eta_n,
        eta_r=1.0 - eta_n,
        r0=r0,
    )
