"""Real trigonometric polynomials on the circle.

These are the coefficient fields out of which problem data (drift kernels,
running-cost kernels, terminal integrands) is built.  Everything the solvers
need reduces to three operations: pointwise evaluation, differentiation, and
convolution against a probability measure, the latter expressed through the
measure's trigonometric moments so interacting-particle drifts cost O(N deg)
instead of O(N^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputDomainError
from .torus import TWO_PI, EmpiricalMeasure, GridDensity, Measure


@dataclass(frozen=True)
class TrigPoly:
    """c0 + sum_{k=1}^{deg} a_k cos(k x) + b_k sin(k x)."""

    const: float = 0.0
    cos_coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sin_coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.cos_coeffs, dtype=float))
        b = np.atleast_1d(np.asarray(self.sin_coeffs, dtype=float))
        deg = max(a.size, b.size)
        a = np.pad(a, (0, deg - a.size))
        b = np.pad(b, (0, deg - b.size))
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.isfinite(self.const)):
            raise InputDomainError("trig polynomial coefficients must be finite")
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "cos_coeffs", a)
        object.__setattr__(self, "sin_coeffs", b)

    @property
    def degree(self) -> int:
        return self.cos_coeffs.size

    @property
    def is_zero(self) -> bool:
        return (
            self.const == 0.0
            and not np.any(self.cos_coeffs)
            and not np.any(self.sin_coeffs)
        )

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, self.const, dtype=float)
        for k in range(1, self.degree + 1):
            out += self.cos_coeffs[k - 1] * np.cos(k * x)
            out += self.sin_coeffs[k - 1] * np.sin(k * x)
        return out

    def derivative(self) -> "TrigPoly":
        k = np.arange(1, self.degree + 1, dtype=float)
        return TrigPoly(0.0, k * self.sin_coeffs, -k * self.cos_coeffs)

    def sup_norm(self, samples: int = 4096) -> float:
        x = np.arange(samples) * (TWO_PI / samples)
        return float(np.max(np.abs(self(x))))

    def ck_norm(self, k: int, samples: int = 4096) -> float:
        """Hoelder-space norm sum_{j<=k} sup |d^j f / dx^j|."""
        total, f = 0.0, self
        for _ in range(k + 1):
            total += f.sup_norm(samples)
            f = f.derivative()
        return total

    def convolve_moments(self, cos_m: np.ndarray, sin_m: np.ndarray) -> "TrigPoly":
        """Trig polynomial x -> integral K(x - y) mu(dy) from moments of mu.

        ``cos_m[k-1] = int cos(k y) mu(dy)`` and likewise for ``sin_m``; the
        measure is assumed to have total mass one.
        """
        a, b = self.cos_coeffs, self.sin_coeffs
        c = np.asarray(cos_m, dtype=float)[: self.degree]
        s = np.asarray(sin_m, dtype=float)[: self.degree]
        return TrigPoly(self.const, a * c - b * s, a * s + b * c)

    def to_dict(self) -> dict:
        return {
            "const": float(self.const),
            "cos": self.cos_coeffs.tolist(),
            "sin": self.sin_coeffs.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TrigPoly":
        unknown = set(obj) - {"const", "cos", "sin"}
        if unknown:
            raise InputDomainError(f"unknown trig polynomial fields {sorted(unknown)}")
        return cls(
            float(obj.get("const", 0.0)),
            np.asarray(obj.get("cos", []), dtype=float),
            np.asarray(obj.get("sin", []), dtype=float),
        )


ZERO_POLY = TrigPoly()


def trig_moments(mu: Measure, deg: int) -> tuple[np.ndarray, np.ndarray]:
    """Moments (int cos(k y) dmu, int sin(k y) dmu) for k = 1..deg."""
    k = np.arange(1, deg + 1, dtype=float)
    if isinstance(mu, EmpiricalMeasure):
        if mu.d != 1:
            raise InputDomainError("trig moments are d=1 only")
        ky = k[:, None] * mu.atoms[:, 0][None, :]
        return np.cos(ky).mean(axis=1), np.sin(ky).mean(axis=1)
    if isinstance(mu, GridDensity):
        dx = TWO_PI / mu.m
        ky = k[:, None] * mu.nodes[None, :]
        return (np.cos(ky) @ mu.values) * dx, (np.sin(ky) @ mu.values) * dx
    raise InputDomainError(f"unsupported measure type {type(mu)!r}")


def mean_field_eval(poly: TrigPoly, x: np.ndarray) -> np.ndarray:
    """(1/N) sum_j K(x_i - x_j) for configurations stacked on the last axis.

    ``x`` has shape (..., N); the result has the same shape.  The self term
    j = i is included, matching b(x^i, mu^x) with mu^x containing atom i.
    """
    x = np.asarray(x, dtype=float)
    out = np.full_like(x, poly.const)
    for k in range(1, poly.degree + 1):
        ck, sk = np.cos(k * x), np.sin(k * x)
        cm = ck.mean(axis=-1, keepdims=True)
        sm = sk.mean(axis=-1, keepdims=True)
        a, b = poly.cos_coeffs[k - 1], poly.sin_coeffs[k - 1]
        out += ck * (a * cm - b * sm) + sk * (a * sm + b * cm)
    return out
