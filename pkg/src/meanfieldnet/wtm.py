"""meanfieldnet.wtm

Global solvers for the weighted throughput maximization (WTM) problem

    maximize    sum_i omega_i log2(1 + SINR_i(p))
    subject to  0 <= p <= p_max,  SINR_i(p) >= gamma_min,  omega . p <= p_ave

with SINR_i(p) = p_i g_i / (sum_j p_j Gtilde[j, i] + n).

Key Classes:
    - FeasibilityResult: spectral-radius verdict and the minimal power point.
    - MapelState: polyblock vertex set and incumbent of a MAPEL run.
    - PowerSolution: power vector, weighted rate and run diagnostics.

Key Functions:
    - feasibility_check: Perron-Frobenius test on F = gamma_min Gtilde^T / g.
    - dinkelbach_projection: projects a vertex z onto the achievable SINR
      region along the ray mu * z, one linear program per Dinkelbach step.
    - mapel_solve: polyblock outer approximation, globally optimal up to the
      delta0 gap.
    - oracle_grid_search / grid_feasibility: brute-force checks for N_t <= 4.

Example:
    solution = mapel_solve(problem, delta0=0.01)
    solution.rate, solution.p
"""

import itertools
import logging
import math
from typing import Any, Dict, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import ConfigDict
from pydantic.dataclasses import dataclass
from scipy import linalg
from scipy.optimize import linprog

from .errors import (
    ConfigurationError,
    DinkelbachStallError,
    InfeasibleProblemError,
    NumericalConditioningError,
    NumericalError,
    SizeError,
)
from .logging_utils import log_method
from .reduction import MeanFieldWtm

logger = logging.getLogger(__name__)

DENSE_EIGEN_LIMIT = 64
DINKELBACH_TOL = 1e-9


class Projection(NamedTuple):
    mu: float
    projection: np.ndarray
    p: np.ndarray


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class FeasibilityResult:
    feasible: bool
    spectral_radius: float
    p_check: Optional[np.ndarray] = None
    reason: str = ""


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class MapelState:
    vertices: np.ndarray
    best_z: np.ndarray
    best_projection: np.ndarray
    best_p: np.ndarray
    delta0: float
    theta_set_floor: float
    exact: bool = True

    def objective(self, weights: np.ndarray) -> np.ndarray:
        """Weighted log2 objective of every vertex."""
        return np.log2(self.vertices) @ weights

    def split(self, z_index: int, projection: np.ndarray) -> None:
        """Replace vertex ``z_index`` by its N_t children z - (z_m - pi_m) e_m."""
        z = self.vertices[z_index]
        rest = np.delete(self.vertices, z_index, axis=0)
        children = np.repeat(z[None, :], z.size, axis=0)
        np.fill_diagonal(children, projection)
        children = children[np.diag(children) >= self.theta_set_floor - 1e-12]
        for child in children:
            if rest.shape[0] and np.any(np.all(rest >= child, axis=1)):
                continue
            if rest.shape[0]:
                rest = rest[~np.all(rest <= child, axis=1)]
            rest = np.vstack([rest, child[None, :]])
        self.vertices = rest

    def evict(self, weights: np.ndarray, max_vertices: int) -> None:
        if self.vertices.shape[0] <= max_vertices:
            return
        if self.exact:
            logger.warning(
                "Vertex set exceeds %d entries; evicting worst vertices, result is not exact",
                max_vertices,
            )
        keep = np.argsort(-self.objective(weights), kind="stable")[:max_vertices]
        self.vertices = self.vertices[np.sort(keep)]
        self.exact = False


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class PowerSolution:
    p: np.ndarray
    rate: float
    iterations: int
    converged: bool
    gap: float = 0.0
    z: Optional[np.ndarray] = None
    feasible: bool = True
    exact: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p": self.p.tolist(),
            "rate": self.rate,
            "iterations": self.iterations,
            "converged": self.converged,
            "gap": self.gap,
            "z": None if self.z is None else self.z.tolist(),
            "feasible": self.feasible,
            "exact": self.exact,
        }


def sinr(p: np.ndarray, problem: MeanFieldWtm) -> np.ndarray:
    return problem.sinr(p)


def weighted_rate(p: np.ndarray, problem: MeanFieldWtm) -> float:
    return float(problem.omega @ np.log2(1.0 + problem.sinr(p)))


def power_caps(problem: MeanFieldWtm) -> np.ndarray:
    """Per-variable upper bound implied by p_max and, when set, p_ave / omega_i."""
    caps = np.full(problem.size, problem.p_max, dtype=float)
    if problem.p_ave is not None:
        with np.errstate(divide="ignore"):
            caps = np.minimum(caps, np.where(problem.omega > 0, problem.p_ave / problem.omega, np.inf))
    if not np.all(np.isfinite(caps)):
        raise ConfigurationError("power is unbounded: set p_max or p_ave")
    return caps


def spectral_radius(F: np.ndarray, tol: float = 1e-10, max_iterations: int = 10_000) -> float:
    """Largest eigenvalue modulus of a non-negative matrix.

    Dense eigensolve up to 64 rows, power iteration on F + I above that (the
    shift keeps the iteration aperiodic).
    """
    F = np.asarray(F, dtype=float)
    n = F.shape[0]
    if n == 0:
        return 0.0
    if n <= DENSE_EIGEN_LIMIT:
        return float(np.max(np.abs(linalg.eigvals(F))))
    shifted = F + np.eye(n)
    x = np.full(n, 1.0 / n)
    estimate = 1.0
    for _ in range(max_iterations):
        y = shifted @ x
        new_estimate = y.sum() / x.sum()
        x = y / y.sum()
        if abs(new_estimate - estimate) <= tol * max(1.0, new_estimate):
            estimate = new_estimate
            break
        estimate = new_estimate
    else:
        logger.warning("Power iteration hit %d iterations without converging", max_iterations)
    return float(estimate - 1.0)


def feasibility_matrix(problem: MeanFieldWtm, gamma_min: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """F[i, j] = gamma Gtilde[j, i] / g_i and b_i = gamma n / g_i."""
    gamma = problem.gamma_min if gamma_min is None else gamma_min
    F = gamma * problem.Gtilde.T / problem.g[:, None]
    b = gamma * problem.noise / problem.g
    return F, b


def feasibility_check(problem: MeanFieldWtm, gamma_min: Optional[float] = None) -> FeasibilityResult:
    """Decide whether every link can reach gamma_min within the power caps.

    Raises:
        NumericalConditioningError: the spectral radius is within 1e-10 of 1.
    """
    F, b = feasibility_matrix(problem, gamma_min)
    radius = spectral_radius(F)
    if abs(radius - 1.0) < 1e-10:
        raise NumericalConditioningError("I - F is numerically singular", radius)
    if radius > 1.0:
        return FeasibilityResult(
            feasible=False,
            spectral_radius=radius,
            reason="spectral radius exceeds 1",
        )
    p_check = linalg.solve(np.eye(problem.size) - F, b)
    if np.any(p_check < -1e-12):
        return FeasibilityResult(False, radius, p_check, "negative minimal power")
    p_check = np.maximum(p_check, 0.0)
    if np.any(p_check > problem.p_max * (1.0 + 1e-9)):
        return FeasibilityResult(False, radius, p_check, "minimal power exceeds p_max")
    if problem.p_ave is not None and problem.omega @ p_check > problem.p_ave * (1.0 + 1e-9):
        return FeasibilityResult(False, radius, p_check, "minimal power exceeds p_ave")
    return FeasibilityResult(feasible=True, spectral_radius=radius, p_check=p_check)


def _fractions(p: np.ndarray, problem: MeanFieldWtm) -> Tuple[np.ndarray, np.ndarray]:
    interference = problem.interference(p) + problem.noise
    return p * problem.g + interference, interference


def dinkelbach_projection(
    z: np.ndarray,
    problem: MeanFieldWtm,
    tol: float = DINKELBACH_TOL,
    max_iterations: int = 200,
) -> Projection:
    """mu = max_p min_i f~_i(p) / (z_i f^_i(p)) with f~ = p g + I + n and f^ = I + n.

    Each step fixes mu at the current ratio and solves the linear program
    max_p min_i (f~_i - mu z_i f^_i) over the power box; the run stops once
    that value drops to ``tol``.

    Raises:
        DinkelbachStallError: mu decreased or the iteration cap was reached.
    """
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ConfigurationError("projection needs an entrywise positive vertex")
    n = problem.size
    caps = power_caps(problem)
    p = np.minimum(caps, problem.p_max)
    if problem.p_ave is not None and problem.omega @ p > problem.p_ave:
        p = p * problem.p_ave / (problem.omega @ p)
    numerator, denominator = _fractions(p, problem)
    mu = float(np.min(numerator / (z * denominator)))

    objective = np.zeros(n + 1)
    objective[-1] = -1.0
    bounds = [(0.0, None if math.isinf(problem.p_max) else problem.p_max)] * n + [(None, None)]
    history: List[Dict[str, Any]] = []
    for iteration in range(max_iterations):
        slope = 1.0 - mu * z
        A_ub = np.hstack([-(np.diag(problem.g) + slope[:, None] * problem.Gtilde.T), np.ones((n, 1))])
        b_ub = slope * problem.noise
        if problem.p_ave is not None:
            A_ub = np.vstack([A_ub, np.append(problem.omega, 0.0)])
            b_ub = np.append(b_ub, problem.p_ave)
        result = linprog(objective, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs-ds")
        if not result.success:
            raise NumericalError(f"Dinkelbach linear program failed: {result.message}")
        value = -float(result.fun)
        history.append({"iteration": iteration, "mu": mu, "value": value})
        if value <= tol:
            return Projection(mu=mu, projection=mu * z, p=p)
        candidate = np.clip(result.x[:n], 0.0, None)
        numerator, denominator = _fractions(candidate, problem)
        new_mu = float(np.min(numerator / (z * denominator)))
        if new_mu < mu - 1e-12 * max(1.0, mu):
            raise DinkelbachStallError(
                f"Dinkelbach ratio decreased from {mu:.12g} to {new_mu:.12g}",
                history,
            )
        p = candidate
        if new_mu - mu <= 1e-12 * max(1.0, mu):
            return Projection(mu=new_mu, projection=new_mu * z, p=p)
        mu = new_mu
    raise DinkelbachStallError(
        f"Dinkelbach did not converge in {max_iterations} iterations",
        history,
    )


def initial_vertex(problem: MeanFieldWtm) -> np.ndarray:
    """v_i = 1 + g_i cap_i / (Gtilde_ii cap_i + n), an upper corner of the achievable 1 + SINR region.

    A variable's own mean-field interference grows with its power, so its SINR
    never exceeds the value at its cap with every other power at zero.
    """
    caps = power_caps(problem)
    return 1.0 + problem.g * caps / (np.diag(problem.Gtilde) * caps + problem.noise)


def full_power_point(problem: MeanFieldWtm) -> np.ndarray:
    """Every variable at min(p_max, p_ave); it meets the average cap since sum(omega) = 1."""
    level = problem.p_max if problem.p_ave is None else min(problem.p_max, problem.p_ave)
    return np.full(problem.size, level, dtype=float)


@log_method(logger)
def mapel_solve(
    problem: MeanFieldWtm,
    delta0: float = 0.01,
    max_iterations: int = 10_000,
    max_vertices: int = 100_000,
) -> PowerSolution:
    """Polyblock outer approximation of the WTM problem.

    The vertex with the largest objective is projected onto the achievable
    region each iteration; the run stops when the projection factor satisfies
    1 - mu <= delta0. The returned power is the best feasible point seen.

    Raises:
        InfeasibleProblemError: the rate floor cannot be met within the caps.
    """
    feasibility = feasibility_check(problem)
    if not feasibility.feasible:
        raise InfeasibleProblemError(
            f"rate floor {problem.r_min} is infeasible: {feasibility.reason} "
            f"(spectral radius {feasibility.spectral_radius:.6g})",
        )
    floor = 1.0 + problem.gamma_min
    weights = problem.omega
    best_p = feasibility.p_check
    best_z = 1.0 + problem.sinr(best_p)
    full = full_power_point(problem)
    full_z = 1.0 + problem.sinr(full)
    if np.all(full_z >= floor - 1e-9) and weights @ np.log2(full_z) > weights @ np.log2(best_z):
        best_p, best_z = full, full_z
    state = MapelState(
        vertices=initial_vertex(problem)[None, :],
        best_z=best_z,
        best_projection=best_z,
        best_p=best_p,
        delta0=delta0,
        theta_set_floor=floor,
    )
    best_value = float(weights @ np.log2(best_z))
    upper = float(state.objective(weights)[0])
    converged = False
    iteration = 0
    for iteration in range(1, max_iterations + 1):
        if state.vertices.shape[0] == 0:
            converged = True
            upper = best_value
            break
        scores = state.objective(weights)
        index = int(np.argmax(scores))
        z = state.vertices[index]
        upper = float(scores[index])
        projection = dinkelbach_projection(z, problem)
        achieved = 1.0 + problem.sinr(projection.p)
        value = float(weights @ np.log2(achieved))
        if np.all(achieved >= floor - 1e-9) and value > best_value:
            best_value = value
            state.best_p = projection.p
            state.best_z = achieved
            state.best_projection = projection.projection
        logger.debug(
            "MAPEL iteration %d: upper=%.6g lower=%.6g mu=%.6g vertices=%d",
            iteration,
            upper,
            best_value,
            projection.mu,
            state.vertices.shape[0],
        )
        if 1.0 - projection.mu <= delta0:
            converged = True
            break
        state.split(index, projection.projection)
        state.evict(weights, max_vertices)
    else:
        logger.warning("MAPEL stopped at the iteration cap of %d", max_iterations)

    p = state.best_p
    rate = weighted_rate(p, problem)
    logger.info(
        "MAPEL finished after %d iterations: rate=%.6g gap=%.3g",
        iteration,
        rate,
        max(upper - rate, 0.0),
    )
    return PowerSolution(
        p=p,
        rate=rate,
        iterations=iteration,
        converged=converged,
        gap=max(upper - rate, 0.0),
        z=1.0 + problem.sinr(p),
        feasible=True,
        exact=state.exact,
    )


def _grid_slices(problem: MeanFieldWtm, grid_points: int) -> Iterator[np.ndarray]:
    """Power grid over the box, one first-axis slice of rows at a time."""
    n = problem.size
    if n > 4:
        raise SizeError(f"grid oracle supports at most 4 variables, got {n}")
    if grid_points < 2:
        raise ConfigurationError("grid oracle needs at least 2 points per axis")
    axes = [np.linspace(0.0, cap, grid_points) for cap in power_caps(problem)]
    for first in axes[0]:
        rest = [np.array([first])] + axes[1:]
        yield np.array(list(itertools.product(*rest)), dtype=float)


def _grid_admissible(P: np.ndarray, problem: MeanFieldWtm) -> Tuple[np.ndarray, np.ndarray]:
    values = P * problem.g / (P @ problem.Gtilde + problem.noise)
    ok = np.all(values >= problem.gamma_min - 1e-12, axis=1)
    if problem.p_ave is not None:
        ok &= P @ problem.omega <= problem.p_ave * (1.0 + 1e-12)
    return values, ok


def oracle_grid_search(problem: MeanFieldWtm, grid_points: int = 50) -> PowerSolution:
    """Exhaustive search over a uniform power grid; infeasible floors give ``feasible=False``."""
    best_rate = -math.inf
    best_p = np.zeros(problem.size)
    evaluated = 0
    for P in _grid_slices(problem, grid_points):
        values, ok = _grid_admissible(P, problem)
        evaluated += P.shape[0]
        if not np.any(ok):
            continue
        rates = np.log2(1.0 + values[ok]) @ problem.omega
        k = int(np.argmax(rates))
        if rates[k] > best_rate:
            best_rate = float(rates[k])
            best_p = P[ok][k]
    if best_rate == -math.inf:
        return PowerSolution(
            p=best_p,
            rate=0.0,
            iterations=evaluated,
            converged=True,
            feasible=False,
        )
    return PowerSolution(
        p=best_p,
        rate=best_rate,
        iterations=evaluated,
        converged=True,
        z=1.0 + problem.sinr(best_p),
    )


def grid_feasibility(problem: MeanFieldWtm, grid_points: int = 200) -> bool:
    """True if some grid point meets every SINR floor within the caps."""
    for P in _grid_slices(problem, grid_points):
        _, ok = _grid_admissible(P, problem)
        if np.any(ok):
            return True
    return False
