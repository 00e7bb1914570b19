"""The automaton distribution map Psi and its derivatives.

Psi(x) = sum_ell chi(ell) * P[Bin(ell, x) >= h(ell)] is a polynomial in x of
degree equal to the largest support value. Two representations are kept: the
monomial basis with exact rational coefficients (identity tests, deflation)
and the Bernstein basis (stable evaluation and root isolation near 0 and 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .core import RecursiveTreeSystem, ValidationError

# support size above which grid evaluation switches to the vectorized
# scipy.stats path (pays off for truncated heavy-tailed distributions)
_VECTOR_SUPPORT = 64


def bg(n: int, k: int, x: float) -> float:
    """P[Bin(n, x) >= k], summed from the smaller tail for stability.

    Terms are produced by incremental ratio updates starting from a log-space
    anchor, never through factorials, so large n is safe.
    """
    if k <= 0:
        return 1.0
    if k > n:
        return 0.0
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    # sum whichever of P[X >= k], P[X <= k-1] has fewer terms
    if n - k + 1 <= k:
        lo, hi, complement = k, n, False
    else:
        lo, hi, complement = 0, k - 1, True
    log_t = (math.lgamma(n + 1) - math.lgamma(lo + 1) - math.lgamma(n - lo + 1)
             + lo * math.log(x) + (n - lo) * math.log1p(-x))
    t = math.exp(log_t)
    s = t
    r = x / (1.0 - x)
    for j in range(lo, hi):
        t *= (n - j) / (j + 1.0) * r
        s += t
    s = min(s, 1.0)
    return 1.0 - s if complement else s


def be(n: int, k: int, x: float) -> float:
    """The Bernstein term P[Bin(n, x) = k] = C(n,k) x^k (1-x)^(n-k)."""
    if k < 0 or k > n:
        return 0.0
    if x <= 0.0:
        return 1.0 if k == 0 else 0.0
    if x >= 1.0:
        return 1.0 if k == n else 0.0
    log_t = (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
             + k * math.log(x) + (n - k) * math.log1p(-x))
    return math.exp(log_t)


def psi(system: RecursiveTreeSystem, x: float) -> float:
    """Evaluate Psi at a point of [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValidationError(f"x={x} outside [0, 1]")
    return sum(float(w) * bg(ell, system.h(ell), x)
               for ell, w in system.chi.weights.items()
               if ell >= 1 and w > 0)


def psi_grid(system: RecursiveTreeSystem, xs: np.ndarray) -> np.ndarray:
    """Evaluate Psi on an array of points.

    For large supports this uses the vectorized binomial survival function;
    otherwise it loops over the support with the stable scalar bg.
    """
    xs = np.asarray(xs, dtype=float)
    if np.any(xs < 0) or np.any(xs > 1):
        raise ValidationError("grid points outside [0, 1]")
    support = [ell for ell in system.chi.support if ell >= 1]
    if len(support) > _VECTOR_SUPPORT:
        from scipy.stats import binom
        out = np.zeros_like(xs)
        weights = np.array([float(system.chi.weight(ell)) for ell in support])
        ns = np.array(support)
        ks = np.array([system.h(ell) for ell in support])
        # chunk the support to keep the broadcast temporaries modest
        for i in range(0, len(support), 2048):
            sl = slice(i, i + 2048)
            tail = binom.sf(ks[sl, None] - 1, ns[sl, None], xs[None, :])
            out += weights[sl] @ tail
        return np.clip(out, 0.0, 1.0)
    return np.array([psi(system, float(x)) for x in xs])


def falling(ell: int, m: int) -> int:
    """Falling factorial ell (ell-1) ... (ell-m+1)."""
    out = 1
    for i in range(m):
        out *= ell - i
    return out


def derivs_at_zero(system: RecursiveTreeSystem, m: int) -> list:
    """The derivatives Psi^(j)(0) for j = 1..m.

    Exact rationals in exact mode, floats otherwise. Each order is the
    alternating tier sum with binomial weights and falling factorials; orders
    beyond the polynomial degree are exactly zero.
    """
    if m < 1:
        raise ValidationError(f"derivative order must be >= 1, got {m}")
    exact = system.exact
    zero = Fraction(0) if exact else 0.0
    out = []
    for order in range(1, m + 1):
        total = zero
        for j in range(1, order + 1):
            coeff = (-1) ** (order + j) * math.comb(order - 1, j - 1)
            for ell in system.tier(j):
                total += coeff * system.chi.weight(ell) * falling(ell, order)
        out.append(total)
    return out


def deriv_at(system: RecursiveTreeSystem, x: float, m: int) -> float:
    """The m-th derivative of Psi at x (binary64)."""
    if m < 1:
        raise ValidationError(f"derivative order must be >= 1, got {m}")
    if not 0.0 <= x <= 1.0:
        raise ValidationError(f"x={x} outside [0, 1]")
    total = 0.0
    for ell, w in system.chi.weights.items():
        if ell < 1 or w == 0:
            continue
        k = system.h(ell)
        fm = falling(ell, m)
        if fm == 0:
            continue
        inner = 0.0
        for j in range(1, m + 1):
            inner += (-1) ** (j + m) * math.comb(m - 1, j - 1) * be(ell - m, k - j, x)
        total += float(w) * fm * inner
    return total


@lru_cache(maxsize=None)
def _bg_power_coeffs(n: int, k: int) -> tuple:
    """Exact monomial coefficients of P[Bin(n, x) >= k], length n + 1."""
    coeffs = [Fraction(0)] * (n + 1)
    if k <= 0:
        coeffs[0] = Fraction(1)
        return tuple(coeffs)
    if k > n:
        return tuple(coeffs)
    for j in range(k, n + 1):
        c = math.comb(n, j)
        # expand C(n,j) x^j (1-x)^(n-j)
        for i in range(n - j + 1):
            coeffs[j + i] += Fraction(c * math.comb(n - j, i) * (-1) ** i)
    return tuple(coeffs)


def power_coeffs(system: RecursiveTreeSystem) -> list:
    """Exact monomial coefficients of Psi, constant term first (always 0).

    Requires exact mode; in float mode use ``power_coeffs_float``, which runs
    the same exact expansion on the binary64 weights lifted to rationals.
    """
    if not system.exact:
        raise ValidationError("power_coeffs requires exact (rational) weights")
    return _power_coeffs_impl(system)


def power_coeffs_float(system: RecursiveTreeSystem) -> np.ndarray:
    """Monomial coefficients with float weights, computed without cancellation.

    Each binary64 weight is lifted to an exact rational, all polynomial
    arithmetic is exact, and only the final coefficients are rounded.
    """
    lifted = {ell: Fraction(float(w)) for ell, w in system.chi.weights.items()}
    coeffs = [Fraction(0)] * (system.degree + 1)
    for ell, w in lifted.items():
        if ell < 1 or w == 0:
            continue
        for i, c in enumerate(_bg_power_coeffs(ell, system.h(ell))):
            coeffs[i] += w * c
    return np.array([float(c) for c in coeffs])


def _power_coeffs_impl(system: RecursiveTreeSystem) -> list:
    coeffs = [Fraction(0)] * (system.degree + 1)
    for ell, w in system.chi.weights.items():
        if ell < 1 or w == 0:
            continue
        for i, c in enumerate(_bg_power_coeffs(ell, system.h(ell))):
            coeffs[i] += w * c
    return coeffs


def power_to_bernstein(coeffs) -> list:
    """Convert monomial coefficients to the degree-n Bernstein basis.

    b_i = sum_{k<=i} C(i,k)/C(n,k) c_k; exact when the input is rational.
    """
    n = len(coeffs) - 1
    out = []
    for i in range(n + 1):
        b = Fraction(0) if isinstance(coeffs[0], Fraction) else 0.0
        for k in range(i + 1):
            c = coeffs[k]
            if c:
                b += c * Fraction(math.comb(i, k), math.comb(n, k))
        out.append(b)
    return out


def eval_power(coeffs, x):
    """Horner evaluation; exact when both coefficients and x are rational."""
    acc = 0 * x
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


@dataclass(frozen=True)
class ConcordanceClass:
    """How the first derivatives of Psi at 0 compare with those of x."""

    kind: str  # "subcordant", "supercordant", or "identity"
    m: int
    witness: object = None  # the first mismatching derivative value

    def to_json(self) -> dict:
        return {"kind": self.kind, "m": self.m}


def is_m_concordant(system: RecursiveTreeSystem, m: int, tol: float = 0.0) -> bool:
    """First m derivatives of Psi at 0 match those of the identity."""
    target = [1] + [0] * (m - 1)
    ds = derivs_at_zero(system, m)
    if system.exact and tol == 0.0:
        return all(d == t for d, t in zip(ds, target))
    return all(abs(float(d) - t) <= tol for d, t in zip(ds, target))


def concordance(system: RecursiveTreeSystem, tol: float = 1e-9) -> ConcordanceClass:
    """Classify the first mismatching derivative of Psi at 0.

    Returns m-subcordant or m-supercordant at the first mismatch order m.
    When all derivatives up to the polynomial degree match, Psi is the
    identity (a polynomial is determined by its derivatives at 0).
    """
    deg = max(system.degree, 1)
    ds = derivs_at_zero(system, deg)
    for order, d in enumerate(ds, start=1):
        target = 1 if order == 1 else 0
        if system.exact:
            diff = d - target
            if diff != 0:
                kind = "supercordant" if diff > 0 else "subcordant"
                return ConcordanceClass(kind, order, d)
        else:
            diff = float(d) - target
            if abs(diff) > tol:
                kind = "supercordant" if diff > 0 else "subcordant"
                return ConcordanceClass(kind, order, d)
    return ConcordanceClass("identity", deg)


class AdmMap:
    """Evaluable representation of Psi for one system.

    Caches the exact monomial coefficients, their Bernstein conversion, and
    the derivatives at 0. Immutable after construction.
    """

    def __init__(self, system: RecursiveTreeSystem):
        self.system = system
        self.degree = system.degree
        if system.exact:
            self.power = power_coeffs(system)
            self.bernstein = np.array([float(b) for b in power_to_bernstein(self.power)])
        else:
            exact_power = power_coeffs_float(system)
            self.power = list(exact_power)
            # convert through rationals so the change of basis is exact
            lifted = [Fraction(float(c)) for c in exact_power]
            self.bernstein = np.array([float(b) for b in power_to_bernstein(lifted)])
        self.derivs_at_zero = derivs_at_zero(system, max(self.degree, 1))

    def __call__(self, x: float) -> float:
        return psi(self.system, x)

    def eval_bernstein(self, x: float) -> float:
        """De Casteljau evaluation of the Bernstein form."""
        b = self.bernstein.copy()
        for r in range(1, len(b)):
            b[: len(b) - r] = (1 - x) * b[: len(b) - r] + x * b[1 : len(b) - r + 1]
        return float(b[0])
