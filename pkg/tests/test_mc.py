import numpy as np
import pytest

from mfrl.errors import InputDomainError
from mfrl.fd import fd_solve, required_time_steps
from mfrl.mc import McEstimate, hat_v, mc_path_values, mc_solve_linear, resample_tuples
from mfrl.problems import HamiltonianSpec, ProblemSpec, TerminalSpec
from mfrl.torus import TWO_PI, EmpiricalMeasure, GridDensity, TorusContext
from mfrl.trig import TrigPoly

CTX = TorusContext(1, 64)


def null_problem(a=0.0, T=1.0):
    return ProblemSpec(
        HamiltonianSpec("zero"), TerminalSpec(g=TrigPoly(0.0, [1.0])), a=a, T=T, ctx=CTX
    )


def linear_problem():
    ham = HamiltonianSpec(
        "linear",
        drift_kernel=TrigPoly(0.0, [0.4], [0.2]),
        cost_kernel=TrigPoly(0.1, [0.0, 0.3]),
    )
    term = TerminalSpec(g=TrigPoly(0.0, [1.0]), h=TrigPoly(0.0, [0.0, 0.5]))
    return ProblemSpec(ham, term, a=0.25, T=0.5, ctx=CTX)


def test_constant_terminal_zero_variance():
    prob = ProblemSpec(
        HamiltonianSpec("zero"), TerminalSpec(g=TrigPoly(0.9)), T=1.0, ctx=CTX
    )
    est = mc_solve_linear(prob, 3, 0.2, np.array([0.1, 1.0, 2.0]), 500, 10, seed=1)
    assert est.mean == pytest.approx(0.9, abs=1e-14)
    assert est.std_error == pytest.approx(0.0, abs=1e-14)


def test_heat_semigroup_within_three_sigma():
    prob = null_problem()
    cfg = np.array([0.3, 1.7, 4.0])
    est = mc_solve_linear(prob, 3, 0.25, cfg, n_paths=40_000, n_steps=60, seed=7)
    exact = np.exp(-0.75) * np.cos(cfg).mean()
    assert abs(est.mean - exact) <= 3 * est.std_error + 2e-3


def test_quadratic_family_rejected():
    prob = ProblemSpec(
        HamiltonianSpec("quadratic", lam=1.0), TerminalSpec(), T=1.0, ctx=CTX
    )
    with pytest.raises(InputDomainError):
        mc_solve_linear(prob, 1, 0.0, np.array([0.0]), 10, 10, seed=0)


def test_agreement_with_fd_on_linear_benchmark():
    prob = linear_problem()
    vn = fd_solve(prob, 2, 48, required_time_steps(prob, 2, 48))
    cfgs = np.array([[0.5, 2.5], [1.0, 1.0], [3.1, 5.9]])
    fd_vals = vn.value(0.1, cfgs)
    vals = mc_path_values(prob, cfgs, 0.1, n_paths=40_000, n_steps=80, seed=11)
    mc_mean = vals.mean(axis=1)
    se = vals.std(axis=1, ddof=1) / np.sqrt(40_000)
    fd_budget = 5e-3  # spatial discretization + interpolation at mesh 48
    assert np.all(np.abs(fd_vals - mc_mean) <= 3 * se + fd_budget)


def test_determinism_and_estimate_fields():
    prob = null_problem()
    e1 = mc_solve_linear(prob, 2, 0.5, np.array([1.0, 2.0]), 300, 20, seed=5)
    e2 = mc_solve_linear(prob, 2, 0.5, np.array([1.0, 2.0]), 300, 20, seed=5)
    assert e1 == e2
    assert isinstance(e1, McEstimate) and e1.n_paths == 300 and e1.seed == 5


def test_std_error_halves_with_quadruple_paths():
    prob = null_problem()
    cfg = np.array([0.3, 2.2])
    e1 = mc_solve_linear(prob, 2, 0.0, cfg, 4_000, 30, seed=2)
    e2 = mc_solve_linear(prob, 2, 0.0, cfg, 16_000, 30, seed=3)
    assert e2.std_error == pytest.approx(e1.std_error / 2, rel=0.2)


def test_terminal_time_returns_terminal_value():
    prob = null_problem(T=0.5)
    cfg = np.array([0.4, 1.2])
    est = mc_solve_linear(prob, 2, 0.5, cfg, 100, 10, seed=0)
    assert est.mean == pytest.approx(np.cos(cfg).mean(), abs=1e-14)


def test_resample_tuples_shapes_and_support():
    mu = EmpiricalMeasure(np.array([[0.5], [2.5]]))
    tuples = resample_tuples(mu, 4, 10, seed=1)
    assert tuples.shape == (10, 4)
    assert np.all(np.isin(tuples, mu.atoms[:, 0]))


def test_hat_v_constant_accessor():
    dens = GridDensity(np.ones(64))
    est = hat_v(lambda t, cfg: 1.25, 0.1, dens, 3, 32, seed=4)
    assert est.mean == pytest.approx(1.25, abs=1e-14)
    assert est.std_error == pytest.approx(0.0, abs=1e-14)
