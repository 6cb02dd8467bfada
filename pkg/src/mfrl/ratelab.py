"""Experiment harness: convergence rates of particle values to the mean field.

``run_rate_experiment`` sweeps particle counts N, estimates the particle value
v^N(t, x) by the Feynman-Kac solver at sampled (t, x) pairs, evaluates the
mean-field value v(t, mu^x) by the Fokker-Planck reference (or a large-M
particle surrogate when common noise is present), and fits the observed
sup-differences against the sample-complexity scale alpha(N) in log-log space.
The target law is sup |v^N - v| <= C alpha(N)^{1/3}; only the exponent is
asserted downstream since the constant is problem-dependent.

``sample_complexity_experiment`` measures E[W1] and E[rho_star] between a
density and its N-sample empirical measures, the quantities that drive the
alpha(N) scale in the first place.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputDomainError
from .mc import mc_path_values
from .meanfield import deposit_empirical, mean_field_reference_batch
from .metric import alpha_rate, rho_star, truncation_tail_bound
from .problems import ProblemSpec
from .torus import EmpiricalMeasure, GridDensity, TWO_PI, sample_iid, w1_circle_density


def fit_rate(points) -> tuple[float, float, np.ndarray]:
    """Least squares of log error on log alpha.

    ``points`` is a sequence of (alpha_value, error) pairs, all positive.
    Returns (beta, C, residuals) for the model error = C * alpha**beta.
    """
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise InputDomainError("rate fit needs at least 3 points")
    if np.any(pts <= 0):
        raise InputDomainError("rate fit requires positive alphas and errors")
    la, le = np.log(pts[:, 0]), np.log(pts[:, 1])
    design = np.column_stack([la, np.ones_like(la)])
    coef, *_ = np.linalg.lstsq(design, le, rcond=None)
    beta, log_c = float(coef[0]), float(coef[1])
    residuals = le - design @ coef
    return beta, float(np.exp(log_c)), residuals


@dataclass(frozen=True)
class ExperimentPlan:
    """Budgets and seeds for one rate sweep."""

    problem: ProblemSpec
    n_list: tuple[int, ...]
    n_time_points: int = 8
    n_configs: int = 64
    n_paths: int = 4000
    n_steps: int = 100
    ref_mesh: int = 256
    ref_steps: int = 0
    m_ref: int = 0
    seed: int = 0

    def __post_init__(self):
        ns = tuple(int(n) for n in self.n_list)
        object.__setattr__(self, "n_list", ns)
        if len(ns) < 3 or any(b <= a for a, b in zip(ns, ns[1:])):
            raise InputDomainError("n_list must be strictly increasing, length >= 3")
        if min(self.n_time_points, self.n_configs, self.n_paths, self.n_steps) < 1:
            raise InputDomainError("all sampling budgets must be >= 1")

    def to_dict(self) -> dict:
        return {
            "problem": self.problem.to_dict(),
            "n_list": list(self.n_list),
            "n_time_points": self.n_time_points,
            "n_configs": self.n_configs,
            "n_paths": self.n_paths,
            "n_steps": self.n_steps,
            "ref_mesh": self.ref_mesh,
            "ref_steps": self.ref_steps,
            "m_ref": self.m_ref,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentPlan":
        known = {
            "problem",
            "n_list",
            "n_time_points",
            "n_configs",
            "n_paths",
            "n_steps",
            "ref_mesh",
            "ref_steps",
            "m_ref",
            "seed",
        }
        unknown = set(obj) - known
        if unknown:
            raise InputDomainError(f"unknown plan fields {sorted(unknown)}")
        if "problem" not in obj or "n_list" not in obj:
            raise InputDomainError("plan needs 'problem' and 'n_list'")
        kwargs = {k: obj[k] for k in known & set(obj) if k != "problem"}
        kwargs["n_list"] = tuple(int(n) for n in obj["n_list"])
        return cls(problem=ProblemSpec.from_dict(obj["problem"]), **kwargs)


@dataclass(frozen=True)
class RateRow:
    N: int
    alpha: float
    alpha_cbrt: float
    sup_error: float
    mc_std: float
    notes: str = ""


@dataclass(frozen=True)
class RateReport:
    rows: tuple[RateRow, ...]
    beta: float
    c_fit: float
    residuals: tuple[float, ...]
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("N,alpha,alpha_cbrt,sup_error,mc_std,notes\n")
        for r in self.rows:
            buf.write(
                f"{r.N},{r.alpha:.12g},{r.alpha_cbrt:.12g},"
                f"{r.sup_error:.12g},{r.mc_std:.12g},{r.notes}\n"
            )
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "rows": [
                {
                    "N": r.N,
                    "alpha": r.alpha,
                    "alpha_cbrt": r.alpha_cbrt,
                    "sup_error": r.sup_error,
                    "mc_std": r.mc_std,
                    "notes": r.notes,
                }
                for r in self.rows
            ],
            "beta": self.beta,
            "c_fit": self.c_fit,
            "residuals": list(self.residuals),
            "metadata": self.metadata,
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def _derived_seed(seed: int, n: int, tag: int) -> int:
    return (int(seed) * 1_000_003 + n * 8_191 + tag) % (2**63)


def _surrogate_reference(
    plan: ExperimentPlan, t: float, configs: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """v^{M_ref}(t, .) on M_ref-atom resamples of each configuration."""
    if plan.m_ref < 1:
        raise InputDomainError("common noise requires m_ref for the reference")
    n_cfg = configs.shape[0]
    out = np.empty(n_cfg)
    for i in range(n_cfg):
        idx = rng.integers(0, configs.shape[1], size=plan.m_ref)
        starts = configs[i, idx][None, :]
        vals = mc_path_values(
            plan.problem,
            starts,
            t,
            n_paths=max(plan.n_paths // 8, 64),
            n_steps=plan.n_steps,
            seed=_derived_seed(plan.seed, plan.m_ref, i),
        )
        out[i] = vals.mean()
    return out


def run_rate_experiment(plan: ExperimentPlan) -> RateReport:
    """Sweep N, record sup |v^N - v| over sampled (t, x), fit the rate."""
    problem = plan.problem
    if not problem.hamiltonian.is_linear:
        raise InputDomainError("rate experiment needs a linear-in-p family")
    t_points = np.linspace(0.0, problem.T, plan.n_time_points, endpoint=False)
    rows = []
    for n in plan.n_list:
        rng = np.random.Generator(np.random.Philox(key=_derived_seed(plan.seed, n, 0)))
        configs = rng.uniform(0.0, TWO_PI, size=(plan.n_configs, n))
        densities = np.stack(
            [
                deposit_empirical(EmpiricalMeasure(c[:, None]), plan.ref_mesh).values
                for c in configs
            ],
            axis=1,
        )
        sup_error = 0.0
        mc_std = 0.0
        for ti, t in enumerate(t_points):
            vals = mc_path_values(
                problem,
                configs,
                float(t),
                n_paths=plan.n_paths,
                n_steps=plan.n_steps,
                seed=_derived_seed(plan.seed, n, ti + 1),
            )
            vn_mean = vals.mean(axis=1)
            se = vals.std(axis=1, ddof=1) / np.sqrt(plan.n_paths)
            if problem.a == 0.0:
                ref = mean_field_reference_batch(
                    problem, float(t), densities, n_t=plan.ref_steps
                )
            else:
                ref = _surrogate_reference(plan, float(t), configs, rng)
            sup_error = max(sup_error, float(np.max(np.abs(vn_mean - ref))))
            mc_std = max(mc_std, float(np.max(se)))
        rows.append(
            RateRow(
                N=n,
                alpha=alpha_rate(n, problem.ctx.d),
                alpha_cbrt=alpha_rate(n, problem.ctx.d) ** (1.0 / 3.0),
                sup_error=sup_error,
                mc_std=mc_std,
            )
        )

    noted = []
    for i, r in enumerate(rows):
        notes = ""
        if i > 0 and r.sup_error > rows[i - 1].sup_error + 3.0 * (
            r.mc_std + rows[i - 1].mc_std
        ):
            notes = "non-monotone"
        noted.append(RateRow(r.N, r.alpha, r.alpha_cbrt, r.sup_error, r.mc_std, notes))

    beta, c_fit, residuals = fit_rate([(r.alpha, r.sup_error) for r in noted])
    metadata = {
        "seed": plan.seed,
        "n_paths": plan.n_paths,
        "n_steps": plan.n_steps,
        "n_time_points": plan.n_time_points,
        "n_configs": plan.n_configs,
        "ref_mesh": plan.ref_mesh,
        "ref_steps": plan.ref_steps,
        "m_ref": plan.m_ref,
        "reference": "exact-fp" if problem.a == 0.0 else f"surrogate-m{plan.m_ref}",
        "surrogate_bias_budget": (
            0.0
            if problem.a == 0.0
            else alpha_rate(max(plan.m_ref, 1), problem.ctx.d) ** (1.0 / 3.0)
        ),
        "truncation_tail": truncation_tail_bound(
            problem.ctx, problem.ctx.k_star
        ),
    }
    return RateReport(
        rows=tuple(noted),
        beta=beta,
        c_fit=c_fit,
        residuals=tuple(float(x) for x in residuals),
        metadata=metadata,
    )


@dataclass(frozen=True)
class ComplexityRow:
    N: int
    w1_mean: float
    w1_std_error: float
    rho_mean: float
    rho_std_error: float


@dataclass(frozen=True)
class ComplexityTable:
    rows: tuple[ComplexityRow, ...]
    w1_slope: float
    rho_slope: float
    max_rho_over_w1: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("N,w1_mean,w1_std_error,rho_mean,rho_std_error\n")
        for r in self.rows:
            buf.write(
                f"{r.N},{r.w1_mean:.12g},{r.w1_std_error:.12g},"
                f"{r.rho_mean:.12g},{r.rho_std_error:.12g}\n"
            )
        return buf.getvalue()


def sample_complexity_experiment(
    mu: GridDensity,
    n_list,
    n_trials: int,
    seed: int,
    ctx=None,
) -> ComplexityTable:
    """Monte Carlo means of W1 and rho_star between mu and its N-samples."""
    from .torus import TorusContext

    if n_trials < 2:
        raise InputDomainError("n_trials must be >= 2")
    if ctx is None:
        ctx = TorusContext(1, 64)
    n_list = sorted(int(n) for n in n_list)
    rows = []
    max_ratio = 0.0
    for idx, n in enumerate(n_list):
        w1s = np.empty(n_trials)
        rhos = np.empty(n_trials)
        for trial in range(n_trials):
            hat = sample_iid(mu, n, seed=_derived_seed(seed, n, trial))
            w1s[trial] = w1_circle_density(hat, mu)
            rhos[trial] = rho_star(hat, mu, ctx)
            if w1s[trial] > 0:
                max_ratio = max(max_ratio, rhos[trial] / w1s[trial])
        rows.append(
            ComplexityRow(
                N=n,
                w1_mean=float(w1s.mean()),
                w1_std_error=float(w1s.std(ddof=1) / np.sqrt(n_trials)),
                rho_mean=float(rhos.mean()),
                rho_std_error=float(rhos.std(ddof=1) / np.sqrt(n_trials)),
            )
        )
    ns = np.array([r.N for r in rows], dtype=float)

    def log_slope(means):
        m = np.asarray(means, dtype=float)
        if np.any(m <= 0):
            return float("nan")  # degenerate target, e.g. a point mass
        return float(np.polyfit(np.log(ns), np.log(m), 1)[0])

    w1_slope = log_slope([r.w1_mean for r in rows])
    rho_slope = log_slope([r.rho_mean for r in rows])
    return ComplexityTable(tuple(rows), w1_slope, rho_slope, max_ratio)
