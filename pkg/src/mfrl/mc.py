"""Feynman-Kac Monte Carlo solver for linear-in-p particle HJB problems.

For the zero and linear Hamiltonian families the particle HJB equation is a
linear parabolic PDE whose solution admits the probabilistic representation

    v^N(t, x) = E[ int_t^T (1/N) sum_i f(X^i_s, mu^{X_s}) ds + G(mu^{X_T}) ],

where the particles follow the interacting SDE system

    dX^i = b(X^i, mu^X) dt + sqrt(2) dW^i + sqrt(2a) dB,

with independent per-particle noises W^i and one common noise B shared by all
particles of a path.  This generator reproduces the Laplacian sum plus the
common-noise cross term of the grid equation exactly; the only biases are the
Euler-Maruyama step and the sampling error reported as a standard error.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

from .errors import InputDomainError
from .problems import ProblemSpec
from .torus import EmpiricalMeasure, GridDensity, Measure, sample_iid
from .trig import mean_field_eval


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_paths: int
    seed: int


def _as_config(atoms) -> np.ndarray:
    if isinstance(atoms, EmpiricalMeasure):
        if atoms.d != 1:
            raise InputDomainError("Monte Carlo solver is d = 1 only")
        return atoms.atoms[:, 0].copy()
    return np.asarray(atoms, dtype=float).reshape(-1)


def _require_linear(problem: ProblemSpec):
    if not problem.hamiltonian.is_linear:
        raise InputDomainError(
            "Feynman-Kac solver requires the zero or linear-in-p family"
        )


def mc_path_values(
    problem: ProblemSpec,
    starts: np.ndarray,
    t: float,
    n_paths: int,
    n_steps: int,
    seed: int,
) -> np.ndarray:
    """Per-path Feynman-Kac functionals for a batch of initial configurations.

    ``starts`` has shape (M, N); the return value has shape (M, n_paths).
    All paths are advanced jointly; the per-path running cost uses the
    trapezoid rule in time.
    """
    _require_linear(problem)
    if n_paths < 1 or n_steps < 1:
        raise InputDomainError("n_paths and n_steps must be >= 1")
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    m_batch, n_particles = starts.shape
    horizon = problem.T - t
    if horizon < 0:
        raise InputDomainError("evaluation time is past the horizon")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    x = np.broadcast_to(starts[:, None, :], (m_batch, n_paths, n_particles)).copy()

    drift = problem.hamiltonian.drift_kernel
    cost = problem.hamiltonian.cost_kernel
    have_drift = not drift.is_zero
    have_cost = not cost.is_zero

    running = np.zeros((m_batch, n_paths))
    if horizon == 0.0:
        return np.broadcast_to(
            problem.terminal.value_atoms(starts)[:, None], (m_batch, n_paths)
        ).copy()
    dt = horizon / n_steps
    sig_w = sqrt(2.0 * dt)
    sig_b = sqrt(2.0 * problem.a * dt) if problem.a > 0 else 0.0
    for step in range(n_steps):
        weight = 0.5 if step == 0 else 1.0
        if have_cost:
            running += weight * dt * mean_field_eval(cost, x).mean(axis=-1)
        incr = np.zeros_like(x)
        if have_drift:
            incr += dt * mean_field_eval(drift, x)
        incr += sig_w * rng.standard_normal(x.shape)
        if sig_b:
            incr += sig_b * rng.standard_normal((m_batch, n_paths, 1))
        x += incr
    if have_cost:
        running += 0.5 * dt * mean_field_eval(cost, x).mean(axis=-1)
    return running + problem.terminal.value_atoms(x)


def mc_solve_linear(
    problem: ProblemSpec,
    N: int,
    t: float,
    atoms,
    n_paths: int,
    n_steps: int,
    seed: int,
) -> McEstimate:
    """Monte Carlo estimate of v^N(t, x) with mean and standard error."""
    config = _as_config(atoms)
    if config.size != N:
        raise InputDomainError(f"configuration has {config.size} atoms, expected {N}")
    vals = mc_path_values(problem, config[None, :], t, n_paths, n_steps, seed)[0]
    se = float(vals.std(ddof=1) / sqrt(n_paths)) if n_paths > 1 else 0.0
    return McEstimate(float(vals.mean()), se, n_paths, int(seed))


def resample_tuples(mu: Measure, N: int, n_resample: int, seed: int) -> np.ndarray:
    """n_resample i.i.d. N-tuples drawn from mu, shape (n_resample, N)."""
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    if isinstance(mu, EmpiricalMeasure):
        idx = rng.integers(0, mu.N, size=(n_resample, N))
        return mu.atoms[idx, 0]
    if isinstance(mu, GridDensity):
        flat = sample_iid(mu, n_resample * N, seed=int(seed) ^ 0x9E3779B9)
        return flat.atoms[:, 0].reshape(n_resample, N)
    raise InputDomainError(f"unsupported measure type {type(mu)!r}")


def hat_v(
    vn_accessor,
    t: float,
    mu: Measure,
    N: int,
    n_resample: int,
    seed: int,
) -> McEstimate:
    """Smoothing estimator: average of v^N(t, .) over i.i.d. N-tuples from mu.

    ``vn_accessor`` is any callable (t, config) -> value, e.g. the
    interpolation accessor of a grid solution or a Monte Carlo wrapper.
    """
    if n_resample < 1:
        raise InputDomainError("n_resample must be >= 1")
    tuples = resample_tuples(mu, N, n_resample, seed)
    vals = np.array([float(vn_accessor(t, cfg)) for cfg in tuples])
    se = float(vals.std(ddof=1) / sqrt(n_resample)) if n_resample > 1 else 0.0
    return McEstimate(float(vals.mean()), se, n_resample, int(seed))
