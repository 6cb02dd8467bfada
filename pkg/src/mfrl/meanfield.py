"""Mean-field reference values via the Fokker-Planck flow.

For linear-in-p problems without common noise the mean-field value function is

    v(t, mu) = int_t^T <f(., mu_s), mu_s> ds + G(mu_T),

where mu_s solves the Fokker-Planck equation d_s mu = d_xx mu - d_x(b(., mu) mu)
started from mu at time t.  The flow is discretized with a conservative upwind
drift flux and backward-Euler diffusion (a circulant solve per step), so mass
is preserved to rounding.

With common noise (a > 0) the mean-field state is itself stochastic and there
is no deterministic flow; the reference is then a large-M particle surrogate
v^M computed by the Feynman-Kac solver on M_ref atoms sampled from mu, with
the bias budget alpha(M_ref)^{1/3} recorded alongside the estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_circulant

from .errors import ConfigurationError, ConsistencyError, InputDomainError
from .metric import alpha_rate
from .problems import ProblemSpec
from .torus import TWO_PI, EmpiricalMeasure, GridDensity, sample_iid

#: mass drift tolerated per unit time by the conservative flow
MASS_TOLERANCE = 1e-10


@dataclass(frozen=True)
class RefConfig:
    """Budgets for mean_field_reference.

    ``mesh`` and ``n_t`` drive the Fokker-Planck flow (a = 0); ``m_ref``,
    ``n_paths``, ``n_steps`` and ``seed`` drive the particle surrogate
    (a > 0).  ``m_ref = 0`` means the surrogate is unavailable.
    """

    mesh: int = 256
    n_t: int = 0
    m_ref: int = 0
    n_paths: int = 20_000
    n_steps: int = 200
    seed: int = 0


@dataclass(frozen=True)
class ReferenceValue:
    """A reference value plus the provenance needed to audit tolerances."""

    value: float
    method: str
    bias_budget: float
    mass_drift: float = 0.0
    std_error: float = 0.0

    def __float__(self) -> float:
        return self.value


def deposit_empirical(mu: EmpiricalMeasure, m: int) -> GridDensity:
    """Linear (cloud-in-cell) deposit of an empirical measure onto m nodes."""
    if mu.d != 1:
        raise InputDomainError("grid deposit is d = 1 only")
    if m < 2:
        raise InputDomainError("mesh must be >= 2")
    dx = TWO_PI / m
    pos = mu.atoms[:, 0] / dx
    left = np.floor(pos).astype(int)
    frac = pos - left
    weights = np.zeros(m)
    np.add.at(weights, left % m, 1.0 - frac)
    np.add.at(weights, (left + 1) % m, frac)
    return GridDensity(weights / (mu.N * dx))


def _resample_density(mu: GridDensity, m: int) -> GridDensity:
    if mu.m == m:
        return mu
    new_nodes = np.arange(m) * (TWO_PI / m)
    vals = np.interp(
        new_nodes, np.append(mu.nodes, TWO_PI), np.append(mu.values, mu.values[0])
    )
    return GridDensity(vals)


def _kernel_field(kernel, nodes: np.ndarray, rho: np.ndarray, dx: float) -> np.ndarray:
    """x -> int K(x - y) rho_col(y) dy at the nodes, one column per density."""
    out = np.full_like(rho, kernel.const)
    if kernel.degree == 0:
        return out
    k = np.arange(1, kernel.degree + 1, dtype=float)
    cos_k = np.cos(k[:, None] * nodes[None, :])  # (deg, m)
    sin_k = np.sin(k[:, None] * nodes[None, :])
    cm = (cos_k @ rho) * dx  # (deg, n_cols) trig moments
    sm = (sin_k @ rho) * dx
    a = kernel.cos_coeffs[:, None]
    b = kernel.sin_coeffs[:, None]
    out += cos_k.T @ (a * cm - b * sm) + sin_k.T @ (a * sm + b * cm)
    return out


def fokker_planck_flow_batch(
    problem: ProblemSpec,
    rho0: np.ndarray,
    t: float,
    n_t: int,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Evolve a batch of densities from time t to the horizon.

    ``rho0`` has shape (m, n_cols), one initial density per column; returns
    ``(rho_end, running_cost_integrals, max_mass_drift)``.  Each step applies
    the explicit conservative upwind drift flux followed by a backward-Euler
    diffusion solve with the circulant second-difference matrix (L-stable, so
    delta-like initial data is damped rather than left oscillating).
    """
    if not problem.hamiltonian.is_linear:
        raise InputDomainError("Fokker-Planck reference requires a linear family")
    if problem.a != 0.0:
        raise InputDomainError("deterministic flow requires a = 0")
    horizon = problem.T - t
    if horizon < 0:
        raise InputDomainError("start time is past the horizon")
    if n_t < 1:
        raise InputDomainError("n_t must be >= 1")
    rho = np.array(rho0, dtype=float)
    if rho.ndim != 2:
        raise InputDomainError("rho0 must have shape (m, n_cols)")
    m = rho.shape[0]
    dx = TWO_PI / m
    nodes = np.arange(m) * dx
    running = np.zeros(rho.shape[1])
    if horizon == 0.0:
        return rho, running, 0.0
    ds = horizon / n_t

    have_cost = not problem.hamiltonian.cost_kernel.is_zero
    have_drift = not problem.hamiltonian.drift_kernel.is_zero
    r = ds / (dx * dx)
    first_col = np.zeros(m)
    first_col[0] = 1.0 + 2.0 * r
    first_col[1] = -r
    first_col[-1] = -r

    def cost_rate(density: np.ndarray) -> np.ndarray:
        if not have_cost:
            return np.zeros(density.shape[1])
        f = _kernel_field(problem.hamiltonian.cost_kernel, nodes, density, dx)
        return np.sum(f * density, axis=0) * dx

    max_drift = 0.0
    for step in range(n_t):
        weight = 0.5 if step == 0 else 1.0
        running += weight * ds * cost_rate(rho)
        if have_drift:
            b = _kernel_field(problem.hamiltonian.drift_kernel, nodes, rho, dx)
            b_face = 0.5 * (b + np.roll(b, -1, axis=0))  # value at node j + 1/2
            flux = np.maximum(b_face, 0.0) * rho + np.minimum(b_face, 0.0) * np.roll(
                rho, -1, axis=0
            )
            rho = rho - (ds / dx) * (flux - np.roll(flux, 1, axis=0))
        rho = solve_circulant(first_col, rho)
        drift_err = float(np.max(np.abs(np.sum(rho, axis=0) * dx - 1.0)))
        max_drift = max(max_drift, drift_err)
    running += 0.5 * ds * cost_rate(rho)
    if max_drift > MASS_TOLERANCE * max(horizon, 1.0):
        raise ConsistencyError(
            f"Fokker-Planck mass drift {max_drift:.3e} exceeds tolerance"
        )
    return np.maximum(rho, 0.0), running, max_drift


def fokker_planck_flow(
    problem: ProblemSpec,
    mu0: GridDensity,
    t: float,
    n_t: int,
) -> tuple[GridDensity, float, float]:
    """Single-density Fokker-Planck flow; see fokker_planck_flow_batch."""
    rho, running, drift = fokker_planck_flow_batch(
        problem, mu0.values[:, None], t, n_t
    )
    return GridDensity(rho[:, 0]), float(running[0]), drift


def default_flow_steps(problem: ProblemSpec, mesh: int) -> int:
    """Step count keeping the explicit drift flux CFL-stable with margin."""
    dx = TWO_PI / mesh
    b_max = (
        problem.hamiltonian.drift_kernel.sup_norm()
        + problem.hamiltonian.drift_kernel.derivative().sup_norm()
    )
    # floor of 500 steps per unit time keeps the O(ds) diffusion bias of the
    # backward-Euler step below ~0.1% relative on the slowest modes
    rate = max(b_max / dx, 500.0 / problem.T)
    return int(np.ceil(problem.T * rate / 0.4)) + 1


def terminal_values_batch(problem: ProblemSpec, rho: np.ndarray) -> np.ndarray:
    """G(mu) for a batch of grid densities stacked as columns."""
    m = rho.shape[0]
    dx = TWO_PI / m
    nodes = np.arange(m) * dx
    gm = (problem.terminal.g(nodes) @ rho) * dx
    hm = (problem.terminal.h(nodes) @ rho) * dx
    return gm + hm * hm


def mean_field_reference_batch(
    problem: ProblemSpec,
    t: float,
    rho0: np.ndarray,
    n_t: int = 0,
) -> np.ndarray:
    """Mean-field values v(t, mu) for a batch of densities (a = 0 only)."""
    if problem.a != 0.0:
        raise InputDomainError("batched reference requires a = 0")
    steps = n_t if n_t > 0 else default_flow_steps(problem, rho0.shape[0])
    rho_end, running, _ = fokker_planck_flow_batch(problem, rho0, t, steps)
    return running + terminal_values_batch(problem, rho_end)


def mean_field_reference(
    problem: ProblemSpec,
    t: float,
    mu: GridDensity,
    cfg: RefConfig = RefConfig(),
) -> ReferenceValue:
    """Reference mean-field value v(t, mu) for linear-in-p problems."""
    if not problem.hamiltonian.is_linear:
        raise InputDomainError("mean-field reference requires a linear family")
    if problem.ctx.d != 1:
        raise InputDomainError("mean-field reference is d = 1 only")
    if problem.a == 0.0:
        mu0 = _resample_density(mu, cfg.mesh)
        n_t = cfg.n_t if cfg.n_t > 0 else default_flow_steps(problem, cfg.mesh)
        mu_end, running, drift = fokker_planck_flow(problem, mu0, t, n_t)
        value = running + problem.terminal.value_measure(mu_end)
        return ReferenceValue(
            value=float(value),
            method="exact-fp",
            bias_budget=0.0,
            mass_drift=drift,
        )
    if cfg.m_ref < 1:
        raise ConfigurationError(
            "a > 0 needs the particle surrogate: set m_ref in RefConfig"
        )
    from .mc import mc_solve_linear  # local import to avoid a module cycle

    atoms = sample_iid(mu, cfg.m_ref, seed=cfg.seed)
    est = mc_solve_linear(
        problem,
        cfg.m_ref,
        t,
        atoms,
        n_paths=cfg.n_paths,
        n_steps=cfg.n_steps,
        seed=cfg.seed,
    )
    budget = alpha_rate(cfg.m_ref, problem.ctx.d) ** (1.0 / 3.0)
    return ReferenceValue(
        value=est.mean,
        method=f"surrogate-m{cfg.m_ref}",
        bias_budget=budget,
        std_error=est.std_error,
    )
