"""Finite-difference solver for the N-particle HJB equation (d = 1).

The equation solved backward from the terminal slice is

    -dv/dt = sum_i [ b(x^i, mu^x) dv/dx^i + (1/N) f(x^i, mu^x)
                     + (lambda N / 2) (dv/dx^i)^2 ]
             + sum_i d^2 v / d(x^i)^2
             + a * sum_{i,j} d^2 v / dx^i dx^j ,
    v(T, x) = G(mu^x),

on the periodic tensor grid (2 pi / m) Z^N.  Spatial derivatives use central
differences; the drift term switches to monotone upwinding when the cell
Peclet number exceeds one.  The common-noise cross term is discretized through
the shift identity sum_{i,j} d^2_{ij} v = d^2/dw^2 [v(w + x)] at w = 0, i.e. a
3-point stencil along the global diagonal, which avoids N^2 mixed stencils.
Time stepping is explicit Euler under a diffusion-dominated stability bound.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import ceil

import numpy as np

from .errors import ConfigurationError, DivergenceError, InputDomainError, ResourceBudgetError
from .problems import ProblemSpec
from .torus import TWO_PI, EmpiricalMeasure, canonicalize, w1_circle

_MAGIC = b"MFRL1"
_VERSION = 1

#: hard cap on state nodes of one solve
STATE_NODE_BUDGET = 10_000_000

_CFL_SAFETY = 0.9


@dataclass(frozen=True)
class GridValueFunction:
    """Backward-in-time solution on the periodic tensor grid.

    ``values[k]`` is the slice at ``t_k = k T / n_t``; the last slice is the
    terminal condition G(mu^x) exactly.
    """

    N: int
    mesh: int
    n_t: int
    T: float
    values: np.ndarray  # shape (n_t + 1,) + (mesh,) * N

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        expected = (self.n_t + 1,) + (self.mesh,) * self.N
        if v.shape != expected:
            raise InputDomainError(f"value array shape {v.shape} != {expected}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def dx(self) -> float:
        return TWO_PI / self.mesh

    @property
    def dt(self) -> float:
        return self.T / self.n_t

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_t + 1) * self.dt

    def slice_at(self, k: int) -> np.ndarray:
        return self.values[k]

    def value(self, t: float, configs) -> np.ndarray | float:
        """Multilinear-in-space, linear-in-time interpolation.

        ``configs`` is one configuration (N,) or a stack (M, N).
        """
        x = np.atleast_2d(np.asarray(configs, dtype=float))
        if x.shape[1] != self.N:
            raise InputDomainError("configuration size does not match N")
        t = min(max(float(t), 0.0), self.T)
        kt = min(int(t / self.dt), self.n_t - 1)
        wt = t / self.dt - kt
        u = np.mod(x, TWO_PI) / self.dx
        i0 = np.floor(u).astype(int) % self.mesh
        frac = u - np.floor(u)
        out = np.zeros(x.shape[0])
        for corner in range(2**self.N):
            bits = (corner >> np.arange(self.N)) & 1
            idx = (i0 + bits[None, :]) % self.mesh
            w = np.prod(np.where(bits[None, :] == 1, frac, 1.0 - frac), axis=1)
            flat = np.ravel_multi_index(tuple(idx.T), (self.mesh,) * self.N)
            out += w * (
                (1.0 - wt) * self.values[kt].reshape(-1)[flat]
                + wt * self.values[kt + 1].reshape(-1)[flat]
            )
        return float(out[0]) if np.asarray(configs).ndim == 1 else out

    def save(self, path) -> None:
        """Binary layout: magic, version u32, N, d, mesh, n_t u32, T f64, f64 LE values."""
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IIIII", _VERSION, self.N, 1, self.mesh, self.n_t))
            fh.write(struct.pack("<d", self.T))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "GridValueFunction":
        with open(path, "rb") as fh:
            magic = fh.read(5)
            if magic != _MAGIC:
                raise InputDomainError(f"bad magic {magic!r}")
            version, n, d, mesh, n_t = struct.unpack("<IIIII", fh.read(20))
            if version != _VERSION or d != 1:
                raise InputDomainError("unsupported value-file version or dimension")
            (t_horizon,) = struct.unpack("<d", fh.read(8))
            count = (n_t + 1) * mesh**n
            data = np.frombuffer(fh.read(count * 8), dtype="<f8", count=count)
        return cls(n, mesh, n_t, t_horizon, data.reshape((n_t + 1,) + (mesh,) * n))


def _grid_moments(deg: int, mesh: int, n_particles: int) -> tuple[list, list]:
    """Per-k grids of (1/N) sum_j cos(k x^j), sin(k x^j) via broadcast sums."""
    nodes = np.arange(mesh) * (TWO_PI / mesh)
    cos_grids, sin_grids = [], []
    for k in range(1, deg + 1):
        ck = np.zeros((mesh,) * n_particles)
        sk = np.zeros((mesh,) * n_particles)
        for ax in range(n_particles):
            shape = [1] * n_particles
            shape[ax] = mesh
            ck = ck + np.cos(k * nodes).reshape(shape)
            sk = sk + np.sin(k * nodes).reshape(shape)
        cos_grids.append(ck / n_particles)
        sin_grids.append(sk / n_particles)
    return cos_grids, sin_grids


def _kernel_fields(problem: ProblemSpec, N: int, mesh: int):
    """Per-axis drift grids b_i(x) and the aggregated running-cost grid."""
    drift = problem.hamiltonian.drift_kernel
    cost = problem.hamiltonian.cost_kernel
    deg = max(drift.degree, cost.degree)
    cos_grids, sin_grids = _grid_moments(deg, mesh, N)
    nodes = np.arange(mesh) * (TWO_PI / mesh)

    def field_for(kernel, axis):
        shape = [1] * N
        shape[axis] = mesh
        out = np.full((mesh,) * N, kernel.const)
        for k in range(1, kernel.degree + 1):
            a, b = kernel.cos_coeffs[k - 1], kernel.sin_coeffs[k - 1]
            ck = np.cos(k * nodes).reshape(shape)
            sk = np.sin(k * nodes).reshape(shape)
            out = out + ck * (a * cos_grids[k - 1] - b * sin_grids[k - 1])
            out = out + sk * (a * sin_grids[k - 1] + b * cos_grids[k - 1])
        return out

    drift_fields = [field_for(drift, i) for i in range(N)] if not drift.is_zero else None
    cost_sum = None
    if not cost.is_zero:
        cost_sum = np.zeros((mesh,) * N)
        for i in range(N):
            cost_sum = cost_sum + field_for(cost, i)
        cost_sum /= N
    return drift_fields, cost_sum


def _gradient_bound_estimate(problem: ProblemSpec) -> float:
    """Heuristic bound on |N dv/dx^i| used only for quadratic-family CFL."""
    term = problem.terminal
    return 2.0 * (
        term.g.derivative().sup_norm()
        + 2.0 * term.h.sup_norm() * term.h.derivative().sup_norm()
        + problem.hamiltonian.cost_kernel.derivative().sup_norm() * problem.T
    )


def max_stable_dt(problem: ProblemSpec, N: int, mesh: int) -> float:
    """Largest explicit-Euler step under the diffusion + advection bound.

    Diffusion contributes rate 2 (N + a) / dx^2 (N axis Laplacians plus the
    common-noise diagonal stencil of strength a); advection contributes
    sum_i |b_i| / dx.
    """
    dx = TWO_PI / mesh
    drift = problem.hamiltonian.drift_kernel
    b_max = drift.sup_norm() if not drift.is_zero else 0.0
    if problem.hamiltonian.lam > 0:
        b_max += problem.hamiltonian.lam * _gradient_bound_estimate(problem)
    rate = 2.0 * (N + problem.a) / dx**2 + N * b_max / dx
    return _CFL_SAFETY / rate


def required_time_steps(problem: ProblemSpec, N: int, mesh: int) -> int:
    return max(1, ceil(problem.T / max_stable_dt(problem, N, mesh)))


def fd_solve(
    problem: ProblemSpec,
    N: int,
    mesh: int,
    n_t: int,
    upwind: bool | None = None,
) -> GridValueFunction:
    """Solve the N-particle HJB equation by an explicit backward sweep.

    ``upwind=None`` selects upwinding automatically from the cell Peclet
    number; the resulting scheme is monotone, which is what the discrete
    comparison tests rely on.
    """
    if problem.ctx.d != 1:
        raise InputDomainError("fd_solve supports d = 1 only")
    if N < 1:
        raise InputDomainError("N must be >= 1")
    if mesh**N > STATE_NODE_BUDGET:
        raise ResourceBudgetError(
            f"state count {mesh**N} exceeds budget {STATE_NODE_BUDGET}"
        )
    n_req = required_time_steps(problem, N, mesh)
    if n_t < n_req:
        raise ConfigurationError(
            f"n_t = {n_t} violates the stability bound; need n_t >= {n_req} "
            f"at mesh {mesh}, N {N}"
        )

    dx = TWO_PI / mesh
    dt = problem.T / n_t
    lam = problem.hamiltonian.lam
    a = problem.a
    drift_fields, cost_sum = _kernel_fields(problem, N, mesh)
    if upwind is None:
        b_max = max((np.max(np.abs(b)) for b in drift_fields), default=0.0) if drift_fields else 0.0
        upwind = bool(b_max * dx / 2.0 > 1.0)

    nodes = np.arange(mesh) * dx
    grids = np.meshgrid(*([nodes] * N), indexing="ij")
    terminal = problem.terminal.value_atoms(np.stack(grids, axis=-1))

    values = np.empty((n_t + 1,) + (mesh,) * N)
    values[n_t] = terminal
    axes = tuple(range(N))
    v = terminal
    for k in range(n_t - 1, -1, -1):
        rhs = np.zeros_like(v)
        for i in range(N):
            up = np.roll(v, -1, axis=i)
            dn = np.roll(v, 1, axis=i)
            rhs += (up - 2.0 * v + dn) / dx**2
            grad_c = (up - dn) / (2.0 * dx)
            if drift_fields is not None:
                b = drift_fields[i]
                if upwind:
                    rhs += np.maximum(b, 0.0) * (up - v) / dx
                    rhs += np.minimum(b, 0.0) * (v - dn) / dx
                else:
                    rhs += b * grad_c
            if lam > 0:
                rhs += 0.5 * lam * N * grad_c**2
        if a > 0:
            diag_up = np.roll(v, (-1,) * N, axis=axes)
            diag_dn = np.roll(v, (1,) * N, axis=axes)
            rhs += a * (diag_up - 2.0 * v + diag_dn) / dx**2
        if cost_sum is not None:
            rhs += cost_sum
        v = v + dt * rhs
        if not np.all(np.isfinite(v)):
            raise DivergenceError(f"non-finite values at time step {k}")
        values[k] = v
    return GridValueFunction(N, mesh, n_t, problem.T, values)


def extend_value(vn, t: float, z, atoms) -> float:
    """V^N(t, z, x) = v^N(t, z + x) with canonicalized shifts.

    ``vn`` is a :class:`GridValueFunction` or any callable (t, config) -> value.
    ``atoms`` may be an :class:`EmpiricalMeasure` or a configuration array.
    """
    config = atoms.atoms[:, 0] if isinstance(atoms, EmpiricalMeasure) else np.asarray(atoms, dtype=float)
    shifted = canonicalize(config + float(np.asarray(z)))
    accessor = vn.value if isinstance(vn, GridValueFunction) else vn
    return float(accessor(t, shifted))


@dataclass(frozen=True)
class LipschitzReport:
    """Finite-difference estimates of the regularity constants of v^N."""

    max_scaled_gradient: float  # max_i N |dv/dx^i| over probed nodes
    time_hoelder: float         # max |v(t,x)-v(s,x)| / sqrt(t-s)
    w1_lipschitz: float         # max |v(t,x)-v(t,y)| / W1(mu^x, mu^y)


def lipschitz_probe(vn: GridValueFunction, n_pairs: int = 200, seed: int = 0) -> LipschitzReport:
    dx = vn.dx
    slice_ids = sorted(set(np.linspace(0, vn.n_t, 17).astype(int)))
    grad_max = 0.0
    for k in slice_ids:
        v = vn.values[k]
        for i in range(vn.N):
            g = np.abs(np.roll(v, -1, axis=i) - np.roll(v, 1, axis=i)) / (2.0 * dx)
            grad_max = max(grad_max, vn.N * float(np.max(g)))

    hoelder = 0.0
    for ka in slice_ids:
        for kb in slice_ids:
            if kb > ka:
                gap = (kb - ka) * vn.dt
                diff = float(np.max(np.abs(vn.values[kb] - vn.values[ka])))
                hoelder = max(hoelder, diff / np.sqrt(gap))

    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    w1_lip = 0.0
    nodes = np.arange(vn.mesh) * dx
    for _ in range(n_pairs):
        ia = rng.integers(0, vn.mesh, size=vn.N)
        ib = rng.integers(0, vn.mesh, size=vn.N)
        xa, xb = nodes[ia], nodes[ib]
        w1 = w1_circle(EmpiricalMeasure(xa[:, None]), EmpiricalMeasure(xb[:, None]))
        if w1 < 1e-12:
            continue
        for k in (0, vn.n_t // 2):
            diff = abs(vn.value(k * vn.dt, xa) - vn.value(k * vn.dt, xb))
            w1_lip = max(w1_lip, diff / w1)
    return LipschitzReport(grad_max, hoelder, w1_lip)
