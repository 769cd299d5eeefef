"""meanfieldnet.tdm

Time-division comparison on a small explicit link set.

Each scheme partitions the links into time-slot groups. Only the links of the
active group transmit in a slot; the slot's WTM problem over those links is
solved exactly with MAPEL under equal weights. The per-link average rate of a
scheme is the slot-fraction weighted sum of the rates each slot delivers,
averaged over all links.

Example:
    from meanfieldnet.tdm import DEFAULT_TDM_GAINS, standard_schemes, tdm_compare

    results = tdm_compare(DEFAULT_TDM_GAINS, standard_schemes(), noise=10.0, p_max=0.1)
    best = max(results, key=lambda r: r.rate)
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import ConfigDict
from pydantic.dataclasses import dataclass

from .channel import path_loss, rayleigh_amplitude_centroids
from .config import TdmScheme
from .errors import ConfigurationError, InfeasibleProblemError
from .io import write_csv
from .reduction import MeanFieldWtm
from .wtm import mapel_solve

logger = logging.getLogger(__name__)

DEFAULT_TDM_GAINS = (2.1458, 1.4073, 0.9691, 0.4911)


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class TdmResult:
    scheme: str
    rate: float
    slot_rates: List[float]
    link_rates: np.ndarray
    flagged: bool = False


def standard_schemes(n_links: int = 4) -> List[TdmScheme]:
    """No division, every link alone, and two pairings of strong and weak links."""
    if n_links < 2 or n_links % 2:
        raise ConfigurationError("the standard schemes need an even number of links >= 2")
    links = list(range(n_links))
    half = n_links // 2
    return [
        TdmScheme(name="no_tdm", partition=[links]),
        TdmScheme(name="orthogonal", partition=[[i] for i in links]),
        TdmScheme(name="adjacent_pairs", partition=[links[:half], links[half:]]),
        TdmScheme(
            name="strong_weak_pairs",
            partition=[[i, n_links - 1 - i] for i in range(half)],
        ),
    ]


def random_scheme(n_links: int, n_slots: int, seed: int) -> TdmScheme:
    """Random partition of the links into ``n_slots`` non-empty groups of near-equal size."""
    if not 1 <= n_slots <= n_links:
        raise ConfigurationError(f"need 1 <= n_slots <= n_links, got {n_slots} slots for {n_links} links")
    order = np.random.default_rng(seed).permutation(n_links)
    groups = [sorted(int(i) for i in chunk) for chunk in np.array_split(order, n_slots)]
    return TdmScheme(name=f"random_{n_slots}_slots", partition=sorted(groups))


def slot_problem(
    gains: np.ndarray,
    group: Sequence[int],
    noise: float,
    p_max: float,
    alpha: float,
    cross_gain: np.ndarray,
) -> MeanFieldWtm:
    """WTM problem of one time slot: links outside ``group`` are silent."""
    index = np.asarray(group, dtype=int)
    G = cross_gain[np.ix_(index, index)].copy()
    np.fill_diagonal(G, 0.0)
    return MeanFieldWtm(
        omega=np.full(index.size, 1.0 / index.size),
        g=gains[index] * float(path_loss(1.0, alpha)),
        Gtilde=G,
        noise=noise,
        p_max=p_max,
    )


def _cross_gain_matrix(n: int, alpha: float, cross_gain: Optional[np.ndarray]) -> np.ndarray:
    if cross_gain is None:
        # unit distances with unit fading between every transmitter and foreign receiver
        return np.full((n, n), float(path_loss(1.0, alpha)))
    matrix = np.asarray(cross_gain, dtype=float)
    if matrix.shape != (n, n) or np.any(matrix < 0):
        raise ConfigurationError(f"cross gains must be a non-negative {n}x{n} matrix")
    return matrix


def tdm_compare(
    gains: Sequence[float],
    schemes: Sequence[TdmScheme],
    noise: float = 10.0,
    p_max: float = 0.1,
    alpha: float = 3.0,
    cross_gain: Optional[np.ndarray] = None,
    delta0: float = 0.01,
) -> List[TdmResult]:
    """Average per-link rate of every time-division scheme.

    Args:
        gains (Sequence[float]):
            Fading gain h of each link; the direct gain is h * path_loss(1, alpha).
        schemes (Sequence[TdmScheme]):
            Partitions over the same links.
        noise (float):
            Noise power in mW.
        p_max (float):
            Per-link power cap in mW.
        alpha (float):
            Path-loss exponent.
        cross_gain (np.ndarray, optional):
            Gain from transmitter j to receiver i at [j, i]. Defaults to unit
            distance path loss for every pair.
        delta0 (float):
            MAPEL stopping tolerance.

    Returns:
        List[TdmResult]: one entry per scheme, in input order. Slots whose
        subproblem is infeasible contribute rate 0 and flag the scheme.
    """
    h = np.asarray(gains, dtype=float)
    n = h.size
    G = _cross_gain_matrix(n, alpha, cross_gain)
    results = []
    for scheme in schemes:
        if scheme.link_count != n:
            raise ConfigurationError(
                f"scheme '{scheme.name}' covers {scheme.link_count} links, expected {n}",
            )
        link_rates = np.zeros(n)
        slot_rates = []
        flagged = False
        for group, fraction in zip(scheme.partition, scheme.fractions):
            problem = slot_problem(h, group, noise, p_max, alpha, G)
            try:
                solution = mapel_solve(problem, delta0=delta0)
            except InfeasibleProblemError as e:
                logger.warning("Scheme '%s' slot %s is infeasible: %s", scheme.name, group, e)
                slot_rates.append(0.0)
                flagged = True
                continue
            per_link = np.log2(solution.z)
            link_rates[np.asarray(group, dtype=int)] += fraction * per_link
            slot_rates.append(solution.rate)
            flagged = flagged or not solution.converged
        rate = float(link_rates.mean())
        logger.info("TDM scheme '%s': average rate %.6g", scheme.name, rate)
        results.append(
            TdmResult(
                scheme=scheme.name,
                rate=rate,
                slot_rates=slot_rates,
                link_rates=link_rates,
                flagged=flagged,
            ),
        )
    return results


def default_gains() -> np.ndarray:
    """Amplitude centroids of the 4-level Rayleigh quantization."""
    return rayleigh_amplitude_centroids(4)


def tdm_to_csv(results: Sequence[TdmResult], path: Union[str, Path]) -> None:
    write_csv(
        Path(path),
        ["scheme", "rate", "flagged"],
        [[r.scheme, r.rate, int(r.flagged)] for r in results],
        comments=["rate: per-link average over all slots (bits/s/Hz)"],
    )
