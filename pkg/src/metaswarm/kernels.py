"""Pairwise interaction forces and the structural conditions imposed on them.

All built-in forces are odd polynomials, represented by their odd-power
coefficients so that oddness holds by construction (evaluation is
``x * q(x**2)`` for a polynomial ``q``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AdmissibilityError

# Bracket scan range used when locating the smallest positive root.
_ROOT_SCAN_MAX = 10.0
_ROOT_SCAN_POINTS = 10_000
_ROOT_TOL = 1e-14


def _polyval_even(coeffs, u):
    """Evaluate sum(c_m * u**m) by Horner's rule; coeffs ordered low to high."""
    acc = np.zeros_like(np.asarray(u, dtype=float))
    for c in reversed(coeffs):
        acc = acc * u + c
    return acc


@dataclass(frozen=True)
class Kernel:
    """Odd pairwise force f with analytic derivatives.

    ``coefficients[m]`` multiplies ``x**(2m+1)``, so the cubic force
    x - x**3 is ``(1.0, -1.0)``.  ``root_a`` is the smallest positive root
    of f, or ``None`` for purely attractive forces without one.
    """

    label: str
    coefficients: tuple = field(default=())
    root_a: float | None = None

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        out = x * _polyval_even(self.coefficients, x * x)
        return out if out.ndim else float(out)

    def deriv(self, x):
        # d/dx [x * q(x^2)] = q(x^2) + 2 x^2 q'(x^2)
        x = np.asarray(x, dtype=float)
        u = x * x
        q = _polyval_even(self.coefficients, u)
        qp = _polyval_even(
            [m * c for m, c in enumerate(self.coefficients)][1:], u
        ) if len(self.coefficients) > 1 else np.zeros_like(u)
        out = q + 2.0 * u * qp
        return out if out.ndim else float(out)

    def third_deriv(self, x):
        """Analytic f''' (odd polynomials only)."""
        x = np.asarray(x, dtype=float)
        # f = sum c_m x^(2m+1) -> f''' = sum c_m (2m+1)(2m)(2m-1) x^(2m-2)
        acc = np.zeros_like(x)
        for m, c in enumerate(self.coefficients):
            p = 2 * m + 1
            if p >= 3:
                acc = acc + c * p * (p - 1) * (p - 2) * x ** (p - 3)
        out = acc
        return out if out.ndim else float(out)

    @property
    def full_power_coefficients(self) -> np.ndarray:
        """Dense coefficient array c[p] over all powers p = 0..2m+1."""
        dense = np.zeros(2 * len(self.coefficients), dtype=float)
        for m, c in enumerate(self.coefficients):
            dense[2 * m + 1] = c
        return dense

    def require_root(self) -> float:
        if self.root_a is None:
            raise AdmissibilityError(
                f"kernel {self.label!r} has no positive root; "
                "two-spike states require one"
            )
        return self.root_a


@dataclass(frozen=True)
class KernelSpec:
    """Declarative kernel choice, parsed from run configuration."""

    kind: str  # linear_attraction | cubic_double_well | odd_polynomial
    coefficients: tuple = ()

    def build(self) -> Kernel:
        if self.kind == "linear_attraction":
            return make_linear()
        if self.kind == "cubic_double_well":
            return make_cubic()
        if self.kind == "odd_polynomial":
            return make_odd_polynomial(self.coefficients)
        raise ValueError(f"unknown kernel kind {self.kind!r}")


@dataclass(frozen=True)
class ConditionReport:
    """Structural checks on a force; each flag is reported independently."""

    is_odd: bool
    has_positive_root: bool
    deriv0_positive: bool
    derivA_negative: bool
    fppp_negative_on_0a: bool

    @property
    def all_satisfied(self) -> bool:
        return (self.is_odd and self.has_positive_root
                and self.deriv0_positive and self.derivA_negative
                and self.fppp_negative_on_0a)


def _smallest_positive_root(k: Kernel) -> float | None:
    """Bracket scan on (0, _ROOT_SCAN_MAX], then bisection to 1e-14."""
    xs = np.linspace(0.0, _ROOT_SCAN_MAX, _ROOT_SCAN_POINTS + 1)
    fs = k.eval(xs)
    for i in range(1, len(xs) - 1):
        if fs[i] == 0.0 and xs[i] > 0.0:
            return float(xs[i])
        if fs[i] * fs[i + 1] < 0.0:
            lo, hi = xs[i], xs[i + 1]
            flo = fs[i]
            while hi - lo > _ROOT_TOL:
                mid = 0.5 * (lo + hi)
                fm = k.eval(mid)
                if fm == 0.0:
                    return float(mid)
                if flo * fm < 0.0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            return float(0.5 * (lo + hi))
    return None


def make_linear() -> Kernel:
    """Purely attractive force f(x) = -x; it has no positive root."""
    return Kernel(label="linear_attraction", coefficients=(-1.0,), root_a=None)


def make_cubic() -> Kernel:
    """Double-well force f(x) = x - x**3 with positive root at 1."""
    return Kernel(label="cubic_double_well", coefficients=(1.0, -1.0), root_a=1.0)


def make_odd_polynomial(coefficients) -> Kernel:
    """Force from odd-power coefficients; root_a found numerically."""
    coefficients = tuple(float(c) for c in coefficients)
    if not coefficients:
        raise ValueError("at least one odd-power coefficient is required")
    k = Kernel(label="odd_polynomial", coefficients=coefficients, root_a=None)
    root = _smallest_positive_root(k)
    return Kernel(label="odd_polynomial", coefficients=coefficients, root_a=root)


def check_conditions(k: Kernel, n_samples: int = 256, seed: int = 0) -> ConditionReport:
    """Sampled report of the structural conditions the theory requires.

    f''' is evaluated analytically; sampling is only used for the oddness
    check and the sign of f''' across (0, a).
    """
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-3.0, 3.0, n_samples)
    is_odd = bool(np.max(np.abs(k.eval(-xs) + k.eval(xs))) <= 1e-12)
    has_root = k.root_a is not None
    deriv0_positive = bool(k.deriv(0.0) > 0.0)
    if has_root:
        derivA_negative = bool(k.deriv(k.root_a) < 0.0)
        interior = np.linspace(0.0, k.root_a, n_samples + 2)[1:-1]
        fppp_negative = bool(np.all(k.third_deriv(interior) < 0.0))
    else:
        derivA_negative = False
        fppp_negative = False
    return ConditionReport(
        is_odd=is_odd,
        has_positive_root=has_root,
        deriv0_positive=deriv0_positive,
        derivA_negative=derivA_negative,
        fppp_negative_on_0a=fppp_negative,
    )
