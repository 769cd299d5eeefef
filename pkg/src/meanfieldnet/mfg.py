"""meanfieldnet.mfg

Delay-constrained power control as a mean-field game on a (buffer s,
channel h, time tau) grid.

Every user holds s bits, sees channel h and transmits at rate
r = log2(1 + p h / (gbar <p, rho> + n)). The population density rho is
transported toward s = 0 at speed r and diffuses in h with coefficient eta;
all buffers must be empty by the deadline T while the total power
integral of p * rho is minimal.

Writing the flux m = rho * r, the power cost rho * (2^(m/rho) - 1) (I + n) / h
is a perspective function, jointly convex in (rho, m), and the discretized
transport is linear in (rho, m). The solver runs primal-dual hybrid gradient
iterations on that saddle problem:

    x   <- prox_{step * F}(x - step * K^T phi)        per-cell, exact
    phi <- phi + step * M^-1 (K (2 x_new - x) - b)     M = I - Laplacian (H1)

with the interference I frozen at the previous iterate. The terminal
requirement is a quadratic penalty on the uncleared mass whose weight grows
x10 until the cleared share reaches the target.

Key Classes:
    - MfgGrid: rho, p, phi and the flux on the grid, with cell sizes.
    - MfgSolution: total power, cleared mass, residual and run diagnostics.

Key Functions:
    - rate_field, transport_step, total_power: field-level helpers.
    - pdhg_solve: the solver.
    - adjoint_mismatch: numerical check of the discrete transport adjoint.
    - fields_to_rows: (s, h, tau, value) rows for CSV export.
"""

import logging
import math
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Tuple, Union

import numpy as np
from pydantic import ConfigDict
from pydantic.dataclasses import dataclass
from scipy import sparse
from scipy.integrate import trapezoid
from scipy.optimize import brentq
from scipy.sparse.linalg import factorized

from .config import MfgConfig
from .errors import StepSizeError
from .io import write_csv
from .logging_utils import log_method

logger = logging.getLogger(__name__)

PROX_GRID = 33
PROX_REFINE = 30
EMPTY_CELL = 1e-10
CONTINUATION_STAGES = 6


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class MfgGrid:
    rho: np.ndarray
    p: np.ndarray
    phi: np.ndarray
    flux: np.ndarray
    ds: float
    dh: float
    dt: float
    h_min: float = 0.0

    @property
    def shape(self) -> Tuple[int, int, int]:
        nt, ns, nh = self.rho.shape
        return ns, nh, nt


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class MfgSolution:
    total_power: float
    cleared_mass: float
    pde_residual: float
    iterations: int
    converged: bool
    grid: MfgGrid
    penalty: float
    mass_drift: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "total_power": self.total_power,
            "cleared_mass": self.cleared_mass,
            "pde_residual": self.pde_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "penalty": self.penalty,
            "mass_drift": self.mass_drift,
        }

    def fields_to_csv(self, path: Union[str, Path], field: str = "rho") -> None:
        write_csv(
            Path(path),
            ["s", "h", "tau", "value"],
            fields_to_rows(self.grid, field),
            comments=[f"{field} on the (s, h, tau) grid"],
        )


class _Operators(NamedTuple):
    D: np.ndarray
    c: float
    d: float
    r_cap: float


def _diffusion_ratio(config: MfgConfig) -> float:
    if config.eta == 0 or config.dh == 0:
        return 0.0
    return config.eta * config.dt / config.dh**2


def _neumann_laplacian(n: int) -> np.ndarray:
    L = np.zeros((n, n))
    for i in range(n):
        if i > 0:
            L[i, i - 1] = 1.0
            L[i, i] -= 1.0
        if i < n - 1:
            L[i, i + 1] = 1.0
            L[i, i] -= 1.0
    return L


def _operators(config: MfgConfig) -> _Operators:
    d = _diffusion_ratio(config)
    if 2.0 * d > 1.0 + 1e-12:
        raise StepSizeError(
            f"diffusion ratio 2*eta*dt/dh^2 = {2.0 * d:.6g} exceeds 1; refine the time grid",
        )
    nh = config.grid[1]
    D = np.eye(nh) + d * _neumann_laplacian(nh)
    return _Operators(D=D, c=config.dt / config.ds, d=d, r_cap=config.ds / config.dt)


def _div(m: np.ndarray) -> np.ndarray:
    """Net upwind outflow per s cell; cell 0 never sends, the last cell receives nothing."""
    out = np.zeros_like(m)
    out[..., 1:, :] += m[..., 1:, :]
    out[..., :-1, :] -= m[..., 1:, :]
    return out


def _div_adjoint(phi: np.ndarray) -> np.ndarray:
    out = np.zeros_like(phi)
    out[..., 1:, :] = phi[..., 1:, :] - phi[..., :-1, :]
    return out


def _apply_diffusion(D: np.ndarray, field: np.ndarray) -> np.ndarray:
    return field @ D.T


def rate_field(p: np.ndarray, rho: np.ndarray, config: MfgConfig) -> np.ndarray:
    """r = log2(1 + p h / (gbar <p, rho> + n)); <p, rho> sums over the last two axes."""
    p = np.asarray(p, dtype=float)
    rho = np.asarray(rho, dtype=float)
    coupling = np.sum(p * rho, axis=(-2, -1), keepdims=True)
    h = config.h_grid
    return np.log2(1.0 + p * h / (config.gbar * coupling + config.noise))


def power_from_rate(r: np.ndarray, interference: np.ndarray, config: MfgConfig) -> np.ndarray:
    """Inverse of ``rate_field`` at frozen interference: p = (2^r - 1)(I + n) / h."""
    return (np.exp2(r) - 1.0) * (interference + config.noise) / config.h_grid


def transport_step(rho: np.ndarray, r: np.ndarray, config: MfgConfig) -> np.ndarray:
    """One time step: upwind advection toward s = 0, then mirrored diffusion in h.

    Raises:
        StepSizeError: the advection Courant number or the diffusion ratio is
            above the stability limit.
    """
    ops = _operators(config)
    r = np.array(r, dtype=float)
    r[0, :] = 0.0
    courant = ops.c * float(np.max(r, initial=0.0))
    if courant > 1.0 + 1e-12:
        raise StepSizeError(f"Courant number dt*max(r)/ds = {courant:.6g} exceeds 1")
    advected = rho - ops.c * _div(rho * r)
    return _apply_diffusion(ops.D, advected)


def total_power(p: np.ndarray, rho: np.ndarray, config: MfgConfig, rule: str = "trapezoid") -> float:
    """Integral of p * rho over the grid; rho holds cell masses.

    ``rule="trapezoid"`` integrates the per-slice sums over tau by the
    trapezoid rule; ``rule="left"`` uses the left-endpoint sum of the
    time-stepping scheme (slice n is held over [tau_n, tau_n+1)).
    """
    per_slice = np.sum(np.asarray(p) * np.asarray(rho), axis=(1, 2))
    if rule == "left":
        return float(config.dt * per_slice[:-1].sum())
    return float(trapezoid(per_slice, dx=config.dt))


def _apply_K(rho: np.ndarray, m: np.ndarray, ops: _Operators, dt: float) -> np.ndarray:
    out = np.empty_like(rho)
    out[0] = rho[0]
    moved = rho[:-1] - ops.c * _div(m)
    out[1:] = (rho[1:] - _apply_diffusion(ops.D, moved)) / dt
    return out


def _apply_KT(phi: np.ndarray, ops: _Operators, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    back = _apply_diffusion(ops.D.T, phi[1:]) / dt
    rho = np.zeros_like(phi)
    rho[0] = phi[0]
    rho[1:] += phi[1:] / dt
    rho[:-1] -= back
    m = ops.c * _div_adjoint(back)
    return rho, m


def _index_laplacian_metric(shape: Tuple[int, int, int]):
    """Factorized I - Laplacian on the constraint index grid (Neumann ends)."""
    eye = [sparse.identity(n, format="csr") for n in shape]
    lap = [sparse.csr_matrix(-_neumann_laplacian(n)) for n in shape]
    M = sparse.kron(sparse.kron(eye[0], eye[1]), eye[2])
    M = M + sparse.kron(sparse.kron(lap[0], eye[1]), eye[2])
    M = M + sparse.kron(sparse.kron(eye[0], lap[1]), eye[2])
    M = M + sparse.kron(sparse.kron(eye[0], eye[1]), lap[2])
    solve = factorized(sparse.csc_matrix(M))
    return lambda v: solve(v.ravel()).reshape(shape)


def _operator_norm(ops: _Operators, dt: float, shape: Tuple[int, int, int], metric_solve) -> float:
    """sqrt of the top eigenvalue of K^T M^-1 K, by power iteration."""
    nt, ns, nh = shape
    rng = np.random.default_rng(0)
    rho = rng.random(shape)
    m = rng.random((nt - 1, ns, nh))
    estimate = 0.0
    for _ in range(100):
        norm = math.sqrt(np.sum(rho**2) + np.sum(m**2))
        rho, m = rho / norm, m / norm
        y = metric_solve(_apply_K(rho, m, ops, dt))
        rho, m = _apply_KT(y, ops, dt)
        new_estimate = math.sqrt(math.sqrt(np.sum(rho**2) + np.sum(m**2)))
        if abs(new_estimate - estimate) <= 1e-8 * new_estimate:
            estimate = new_estimate
            break
        estimate = new_estimate
    return estimate


def _perspective_prox(
    rho_hat: np.ndarray,
    m_hat: np.ndarray,
    weight: np.ndarray,
    step: float,
    r_cap: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Prox of w * rho * (2^(m/rho) - 1) on {rho >= 0, 0 <= m <= r_cap * rho}.

    With m = r * rho the inner minimum over rho is max(A(r), 0) / (1 + r^2),
    A(r) = rho_hat + r m_hat - step w (2^r - 1); r maximizes A(r)_+^2 / (1 + r^2).
    """
    shape = rho_hat.shape
    rh, mh, w = rho_hat.ravel(), m_hat.ravel(), np.broadcast_to(weight, shape).ravel()

    def score(r: np.ndarray) -> np.ndarray:
        A = rh[:, None] + r * mh[:, None] - step * w[:, None] * (np.exp2(r) - 1.0)
        return np.maximum(A, 0.0) ** 2 / (1.0 + r**2)

    grid = np.linspace(0.0, r_cap, PROX_GRID)
    values = score(np.broadcast_to(grid, (rh.size, PROX_GRID)))
    k = np.argmax(values, axis=1)
    lo = grid[np.maximum(k - 1, 0)]
    hi = grid[np.minimum(k + 1, PROX_GRID - 1)]
    for _ in range(PROX_REFINE):
        a = lo + 0.382 * (hi - lo)
        b = lo + 0.618 * (hi - lo)
        better_a = score(a[:, None])[:, 0] >= score(b[:, None])[:, 0]
        hi = np.where(better_a, b, hi)
        lo = np.where(better_a, lo, a)
    refined = 0.5 * (lo + hi)
    r = np.where(score(refined[:, None])[:, 0] >= values[np.arange(rh.size), k], refined, grid[k])
    A = rh + r * mh - step * w * (np.exp2(r) - 1.0)
    rho = np.maximum(A, 0.0) / (1.0 + r**2)
    return rho.reshape(shape), (r * rho).reshape(shape)


def _terminal_prox(rho_hat: np.ndarray, step: float, penalty: float) -> np.ndarray:
    """Prox of penalty/2 * (uncleared mass)^2 with rho >= 0; s = 0 cells are free."""
    out = np.maximum(rho_hat, 0.0)
    tail = rho_hat[1:, :]
    positive = np.maximum(tail, 0.0).sum()
    if positive == 0.0:
        return out

    def gap(total: float) -> float:
        return total - np.maximum(tail - step * penalty * total, 0.0).sum()

    total = brentq(gap, 0.0, positive, xtol=1e-15)
    out[1:, :] = np.maximum(tail - step * penalty * total, 0.0)
    return out


def _cell_weights(interference: np.ndarray, config: MfgConfig) -> np.ndarray:
    """dt * (I^n + n) / h per (n, s, h) cell of the cost."""
    return config.dt * (interference[:, None, None] + config.noise) / config.h_grid[None, None, :]


def _rates(rho: np.ndarray, m: np.ndarray, r_cap: float) -> np.ndarray:
    # cells the optimizer left empty transmit at the cap rate
    r = np.where(rho > EMPTY_CELL, m / np.maximum(rho, EMPTY_CELL), r_cap)
    r = np.clip(r, 0.0, r_cap)
    r[:, 0, :] = 0.0
    return r


def _interference(rho: np.ndarray, m: np.ndarray, previous: np.ndarray, config: MfgConfig, r_cap: float) -> np.ndarray:
    if config.gbar == 0:
        return np.zeros(rho.shape[0] - 1)
    p = power_from_rate(_rates(rho[:-1], m, r_cap), previous[:, None, None], config)
    return config.gbar * np.sum(p * rho[:-1], axis=(1, 2))


def _trivial_solution(config: MfgConfig, rho0: np.ndarray) -> MfgSolution:
    ns, nh, nt = config.grid
    rho = np.repeat(rho0[None, :, :], nt, axis=0)
    zeros = np.zeros((nt, ns, nh))
    grid = MfgGrid(
        rho=rho,
        p=zeros,
        phi=zeros.copy(),
        flux=np.zeros((nt - 1, ns, nh)),
        ds=config.ds,
        dh=config.dh,
        dt=config.dt,
        h_min=config.h_range[0],
    )
    return MfgSolution(
        total_power=0.0,
        cleared_mass=float(rho0[0].sum()),
        pde_residual=0.0,
        iterations=0,
        converged=True,
        grid=grid,
        penalty=config.penalty,
        mass_drift=0.0,
    )


@log_method(logger)
def pdhg_solve(config: MfgConfig) -> MfgSolution:
    """Minimum-power schedule that clears every buffer by the deadline.

    Raises:
        StepSizeError: the diffusion ratio breaks stability, or the iterates
            became non-finite.
    """
    ns, nh, nt = config.grid
    shape = (nt, ns, nh)
    rho0 = config.initial_density()
    if rho0[1:].sum() <= 1e-15:
        logger.info("All buffers start empty; nothing to transmit")
        return _trivial_solution(config, rho0)

    ops = _operators(config)
    reach = ops.r_cap * config.T
    largest = max(size for size, prob in config.arrival_pmf if prob > 0)
    if reach < largest - 1e-12:
        logger.warning(
            "Rate cap ds/dt=%.4g cannot move %.4g bits within T=%.4g; refine the time grid",
            ops.r_cap,
            largest,
            config.T,
        )

    metric_solve = _index_laplacian_metric(shape)
    norm = _operator_norm(ops, config.dt, shape, metric_solve)
    step = config.step_scale / norm
    logger.debug("Operator norm %.6g, primal/dual step %.6g", norm, step)

    b = np.zeros(shape)
    b[0] = rho0
    rho = np.repeat(rho0[None, :, :], nt, axis=0)
    m = np.zeros((nt - 1, ns, nh))
    phi = np.zeros(shape)
    interference = np.zeros(nt - 1)
    penalty = config.penalty

    iterations = 0
    converged = False
    residual = math.inf
    for stage in range(CONTINUATION_STAGES):
        stage_converged = False
        for _ in range(config.max_iterations):
            iterations += 1
            weights = _cell_weights(interference, config)
            grad_rho, grad_m = _apply_KT(phi, ops, config.dt)
            rho_new = np.empty_like(rho)
            rho_new[:-1], m_new = _perspective_prox(
                rho[:-1] - step * grad_rho[:-1],
                m - step * grad_m,
                weights,
                step,
                ops.r_cap,
            )
            m_new[:, 0, :] = 0.0
            rho_new[:-1, 0, :] = np.maximum(rho[:-1, 0, :] - step * grad_rho[:-1, 0, :], 0.0)
            rho_new[-1] = _terminal_prox(rho[-1] - step * grad_rho[-1], step, penalty)

            rho_bar = 2.0 * rho_new - rho
            m_bar = 2.0 * m_new - m
            phi_new = phi + step * metric_solve(_apply_K(rho_bar, m_bar, ops, config.dt) - b)
            if not (np.all(np.isfinite(rho_new)) and np.all(np.isfinite(phi_new))):
                raise StepSizeError(
                    f"PDHG iterates diverged at iteration {iterations}; lower step_scale "
                    f"(currently {config.step_scale})",
                )

            change = math.sqrt(np.sum((rho_new - rho) ** 2) + np.sum((m_new - m) ** 2))
            scale = math.sqrt(np.sum(rho_new**2) + np.sum(m_new**2)) or 1.0
            dual_change = math.sqrt(np.sum((phi_new - phi) ** 2))
            dual_scale = math.sqrt(np.sum(phi_new**2)) or 1.0
            rho, m, phi = rho_new, m_new, phi_new
            interference = _interference(rho, m, interference, config, ops.r_cap)

            if iterations % 10 == 0:
                residual = float(np.max(np.abs(_apply_K(rho, m, ops, config.dt) - b)))
                if np.isnan(residual):
                    raise StepSizeError("transport residual is NaN; lower step_scale")
                logger.debug(
                    "PDHG %d: residual=%.3g change=%.3g dual_change=%.3g",
                    iterations,
                    residual,
                    change / scale,
                    dual_change / dual_scale,
                )
                if (
                    residual <= config.tolerance
                    and change / scale <= config.tolerance
                    and dual_change / dual_scale <= config.tolerance
                ):
                    stage_converged = True
                    break

        cleared = float(rho[-1, 0, :].sum())
        logger.debug("Stage %d (penalty %.3g): cleared mass %.6g", stage, penalty, cleared)
        if cleared >= config.cleared_target:
            converged = stage_converged
            break
        penalty *= 10.0
    else:
        logger.warning("Cleared mass stayed below %.4g after penalty continuation", config.cleared_target)

    residual = float(np.max(np.abs(_apply_K(rho, m, ops, config.dt) - b)))
    return _finish(config, ops, rho, m, phi, interference, residual, iterations, converged, penalty)


def _finish(
    config: MfgConfig,
    ops: _Operators,
    rho: np.ndarray,
    m: np.ndarray,
    phi: np.ndarray,
    interference: np.ndarray,
    residual: float,
    iterations: int,
    converged: bool,
    penalty: float,
) -> MfgSolution:
    """Re-simulate the dynamics under the optimized rates for a mass-conserving rho."""
    nt = rho.shape[0]
    rates = _rates(rho[:-1], m, ops.r_cap)
    simulated = np.empty_like(rho)
    simulated[0] = config.initial_density()
    for n in range(nt - 1):
        simulated[n + 1] = transport_step(simulated[n], rates[n], config)

    p = np.zeros_like(rho)
    p[:-1] = power_from_rate(rates, interference[:, None, None], config)
    p[:, 0, :] = 0.0
    flux = rates * simulated[:-1]
    masses = simulated.sum(axis=(1, 2))
    grid = MfgGrid(
        rho=simulated,
        p=p,
        phi=phi,
        flux=flux,
        ds=config.ds,
        dh=config.dh,
        dt=config.dt,
        h_min=config.h_range[0],
    )
    solution = MfgSolution(
        total_power=total_power(p, simulated, config, rule="left"),
        cleared_mass=float(np.clip(simulated[-1, 0, :].sum(), 0.0, 1.0)),
        pde_residual=residual,
        iterations=iterations,
        converged=converged,
        grid=grid,
        penalty=penalty,
        mass_drift=float(np.max(np.abs(masses - 1.0))),
    )
    logger.info(
        "MFG power %.6g, cleared %.6g, residual %.3g after %d iterations",
        solution.total_power,
        solution.cleared_mass,
        residual,
        iterations,
    )
    return solution


def adjoint_mismatch(config: MfgConfig, seed: int = 0) -> float:
    """Relative |<K x, phi> - <x, K^T phi>| for random x and phi."""
    ns, nh, nt = config.grid
    ops = _operators(config)
    rng = np.random.default_rng(seed)
    rho = rng.standard_normal((nt, ns, nh))
    m = rng.standard_normal((nt - 1, ns, nh))
    phi = rng.standard_normal((nt, ns, nh))
    lhs = float(np.sum(_apply_K(rho, m, ops, config.dt) * phi))
    grad_rho, grad_m = _apply_KT(phi, ops, config.dt)
    rhs = float(np.sum(rho * grad_rho) + np.sum(m * grad_m))
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1.0)


def fields_to_rows(grid: MfgGrid, field: str = "rho") -> List[List[float]]:
    """Rows (s, h, tau, value) of one field of the grid, tau varying slowest."""
    values = getattr(grid, field)
    nt, ns, nh = values.shape
    s = np.arange(ns) * grid.ds
    rows = []
    for n in range(nt):
        for j in range(ns):
            for k in range(nh):
                rows.append([float(s[j]), grid.h_min + k * grid.dh, n * grid.dt, float(values[n, j, k])])
    return rows
