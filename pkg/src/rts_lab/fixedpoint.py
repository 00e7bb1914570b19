"""Fixed points of Psi on [0, 1]: location, interpretability, criticality.

Roots of f(x) = Psi(x) - x are isolated by sign-variation subdivision of the
Bernstein coefficients of f (after exact deflation of the root at 0) and then
refined by bisection. Tangent (even multiplicity) roots are picked up by a
second pass over the roots of Psi'(x) - 1. A 10^4-point grid sign check acts
as a safety net against isolation misses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import NumericError, RecursiveTreeSystem, ValidationError
from .admap import (
    concordance,
    deriv_at,
    derivs_at_zero,
    eval_power,
    power_coeffs,
    power_coeffs_float,
    power_to_bernstein,
    psi,
)

RESIDUAL_TOL = 1e-10
TANGENCY_TOL = 1e-9
BOUNDARY_TOL = 1e-9  # |psi'(x0) - 1| below this is "boundary" interpretability
SNAP_DENOMINATOR = 10**6


@dataclass(frozen=True)
class FixedPoint:
    x: float
    psi_prime: float
    multiplicity: int
    interpretable: object  # True, False, or "boundary"
    tags: tuple = ()

    def to_json(self) -> dict:
        return {
            "x": self.x,
            "psi_prime": self.psi_prime,
            "multiplicity": self.multiplicity,
            "interpretable": self.interpretable,
        }


@dataclass(frozen=True)
class FixedPointReport:
    points: tuple
    continuum: bool = False
    residual_bound: float = 0.0

    @property
    def nonzero(self) -> tuple:
        return tuple(p for p in self.points if p.x > 0)

    def to_json(self) -> dict:
        if self.continuum:
            return {"continuum": True, "fixed_points": []}
        return {"fixed_points": [p.to_json() for p in self.points]}


@dataclass(frozen=True)
class TransitionFinding:
    t_star: float
    x_star: float
    kind: str  # "continuous" or "first_order"
    jump: float

    def to_json(self) -> dict:
        return {"t_star": self.t_star, "x_star": self.x_star,
                "kind": self.kind, "jump": self.jump}


def _sign_variations(coeffs) -> int:
    signs = [1 if c > 0 else -1 for c in coeffs if c != 0]
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def _split(coeffs):
    """De Casteljau midpoint subdivision of a Bernstein coefficient list."""
    b = list(coeffs)
    left = [b[0]]
    right = [b[-1]]
    while len(b) > 1:
        b = [(b[i] + b[i + 1]) / 2 for i in range(len(b) - 1)]
        left.append(b[0])
        right.append(b[-1])
    right.reverse()
    return left, right


def _isolate(coeffs, lo: float, hi: float, out: list, min_width: float = 1e-14):
    """Collect intervals of [lo, hi] certified to contain roots.

    Appends (a, b, certified_simple) triples. Sign variation 0 excludes the
    interval; 1 certifies a single root; otherwise subdivide, down to
    min_width, below which the cluster is recorded as a possible multiple
    root.
    """
    v = _sign_variations(coeffs)
    if v == 0:
        return
    if v == 1:
        out.append((lo, hi, True))
        return
    if hi - lo < min_width:
        out.append((lo, hi, False))
        return
    left, right = _split(coeffs)
    mid = (lo + hi) / 2
    _isolate(left, lo, mid, out, min_width)
    if right and right[0] == 0:
        # root exactly at the split point; nudge it into the left record
        out.append((mid, mid, True))
        right = right[:]
        right[0] = 0
    _isolate(right, mid, hi, out, min_width)


def _deflated_coeffs(system: RecursiveTreeSystem):
    """Exact monomial coefficients of (Psi(x) - x) / x^k, k = root order at 0.

    Float-mode systems are lifted to rationals first, so the deflation and
    the Bernstein conversion are exact; only the final output is rounded.
    """
    if system.exact:
        f = list(power_coeffs(system))
    else:
        f = [Fraction(float(c)) for c in power_coeffs_float(system)]
    f[1] -= 1
    k = 0
    while f and f[0] == 0:
        f.pop(0)
        k += 1
    return f, k


def _refine_bisect(fn, a: float, b: float, tol: float = 1e-13) -> float:
    fa = fn(a)
    fb = fn(b)
    if fa == 0:
        return a
    if fb == 0:
        return b
    if (fa > 0) == (fb > 0):
        # the certificate said there is a root; fall back to the midpoint
        return 0.5 * (a + b)
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = fn(m)
        if fm == 0:
            return m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b, fb = m, fm
    return 0.5 * (a + b)


def _bernstein_eval(coeffs, x: float) -> float:
    b = np.array(coeffs, dtype=float)
    n = len(b)
    for r in range(1, n):
        b[: n - r] = (1 - x) * b[: n - r] + x * b[1 : n - r + 1]
    return float(b[0])


def _interpretable_flag(psi_prime: float, x: float) -> object:
    if x in (0.0, 1.0):
        return True
    if abs(psi_prime - 1.0) <= BOUNDARY_TOL:
        return "boundary"
    return psi_prime < 1.0


def find_fixed_points(system: RecursiveTreeSystem, tol: float = 1e-12) -> FixedPointReport:
    """All fixed points of Psi on [0, 1], with derivatives and flags.

    Identity-map systems (Psi == x) get a distinguished continuum report.
    In exact mode, roots whose value snaps to a small rational that satisfies
    Psi(r) = r exactly are replaced by that rational.
    """
    cls = concordance(system)
    if cls.kind == "identity":
        return FixedPointReport(points=(), continuum=True)

    f, _zero_order = _deflated_coeffs(system)
    bern = [float(b) for b in power_to_bernstein(f)]

    intervals: list = []
    _isolate(bern, 0.0, 1.0, intervals)

    def p_eval(x):
        return _bernstein_eval(bern, x)

    roots: list[tuple[float, int]] = []  # (x, multiplicity)
    for a, b, simple in intervals:
        if simple:
            x = _refine_bisect(p_eval, a, b, tol=min(tol, 1e-13))
            roots.append((x, 1))
        else:
            roots.append((0.5 * (a + b), 2))

    # tangency pass: roots of Psi'(x) - 1 where Psi(x) - x nearly vanishes,
    # differentiating the undeflated polynomial
    if system.exact:
        full = list(power_coeffs(system))
    else:
        full = [Fraction(float(c)) for c in power_coeffs_float(system)]
    full[1] -= 1
    g = [i * c for i, c in enumerate(full[1:], start=1)]
    while g and g[0] == 0:
        g.pop(0)
    if g:
        gbern = [float(c) for c in power_to_bernstein(g)]
        g_intervals: list = []
        _isolate(gbern, 0.0, 1.0, g_intervals)

        def g_eval(x):
            return _bernstein_eval(gbern, x)

        for a, b, simple in g_intervals:
            y = _refine_bisect(g_eval, a, b) if simple else 0.5 * (a + b)
            if y <= 0.0:
                continue
            if abs(psi(system, y) - y) > TANGENCY_TOL:
                continue
            # a small residual right next to a pair of simple roots is the
            # dip between them, not a tangency
            if any(abs(y - x) < 1e-3 for x, _ in roots):
                continue
            roots.append((y, 2))

    # grid safety net for sign changes the subdivision may have missed
    xs = np.linspace(0.0, 1.0, 10_001)
    fs = np.array([psi(system, float(x)) for x in xs]) - xs
    signs = np.sign(fs)
    for i in np.nonzero(signs[:-1] * signs[1:] < 0)[0]:
        a, b = float(xs[i]), float(xs[i + 1])
        if any(a - 1e-12 <= x <= b + 1e-12 for x, _ in roots) or b <= 1e-4:
            continue
        x = _refine_bisect(lambda x: psi(system, x) - x, a, b, tol=min(tol, 1e-13))
        if not any(abs(x - r) < 1e-9 for r, _ in roots):
            roots.append((x, 1))

    # endpoint x = 1 (Psi(1) = 1 iff no mass escapes through h(ell) > ell)
    resid1 = abs(psi(system, 1.0) - 1.0)
    if resid1 <= RESIDUAL_TOL and not any(abs(1.0 - x) < 1e-9 for x, _ in roots):
        roots.append((1.0, 1))

    # exact-rational snapping
    if system.exact:
        snapped = []
        for x, mult in roots:
            r = Fraction(x).limit_denominator(SNAP_DENOMINATOR)
            if 0 < r <= 1 and eval_power(full, r) == 0:
                snapped.append((float(r), mult))
            else:
                snapped.append((x, mult))
        roots = snapped

    roots = sorted(set(roots))
    dedup: list[tuple[float, int]] = []
    for x, mult in roots:
        if dedup and abs(x - dedup[-1][0]) < 1e-9:
            dedup[-1] = (dedup[-1][0], max(dedup[-1][1], mult))
        else:
            dedup.append((x, mult))

    d1 = float(derivs_at_zero(system, 1)[0])
    points = [FixedPoint(0.0, d1, 1 if abs(d1 - 1.0) > 1e-15 else 2, True, ("zero",))]
    residual = 0.0
    nonzero = [(x, m) for x, m in dedup if x > 0]
    for i, (x, mult) in enumerate(nonzero):
        dp = deriv_at(system, x, 1)
        tags = []
        if i == 0:
            tags.append("smallest_nonzero")
        if i == len(nonzero) - 1:
            tags.append("largest")
        points.append(FixedPoint(x, dp, mult, _interpretable_flag(dp, x), tuple(tags)))
        residual = max(residual, abs(psi(system, x) - x))
    if len(nonzero) == 0:
        points[0] = FixedPoint(0.0, d1, points[0].multiplicity, True, ("zero", "largest"))
    return FixedPointReport(points=tuple(points), residual_bound=residual)


def interpretable(system: RecursiveTreeSystem, x0: float, fp_tol: float = 1e-8):
    """Whether the fixed point x0 carries an interpretation.

    Endpoints are always interpretable; an interior fixed point is
    interpretable iff Psi'(x0) <= 1 (returned as "boundary" when the
    derivative is within tolerance of 1).
    """
    if abs(psi(system, x0) - x0) > fp_tol:
        raise ValidationError(f"{x0} is not a fixed point of Psi")
    return _interpretable_flag(deriv_at(system, x0, 1), float(x0))


def is_critical(system: RecursiveTreeSystem, tol: float = 1e-9):
    """Criticality test: Psi'(0) = 1 and Psi''(0) <= 0.

    Exact in exact mode, within tol in float mode. Returns (flag, witness)
    where witness = (Psi'(0), Psi''(0)). Single-support-point distributions
    are refused, matching the hypothesis of the derivative test.
    """
    if len(system.chi.support) <= 1:
        raise ValidationError("criticality test requires more than one support point")
    d1, d2 = derivs_at_zero(system, 2)
    if system.exact:
        return (d1 == 1 and d2 <= 0), (d1, d2)
    return (abs(float(d1) - 1.0) <= tol and float(d2) <= tol), (float(d1), float(d2))


def iterate_psi(system: RecursiveTreeSystem, x_start: float, n: int) -> list:
    """The orbit (x, Psi(x), ..., Psi^n(x))."""
    if not 0.0 <= x_start <= 1.0:
        raise ValidationError(f"x_start={x_start} outside [0, 1]")
    out = [float(x_start)]
    for _ in range(n):
        out.append(psi(system, out[-1]))
    return out


def _count_roots(family, t: float, cut: float) -> tuple[int, list]:
    report = find_fixed_points(family.system_at(float(t)))
    if report.continuum:
        raise NumericError(f"family degenerates to the identity map at t={t}")
    xs = [p.x for p in report.points if p.x > cut]
    return len(xs), xs


def _tangency_candidates(system: RecursiveTreeSystem) -> list:
    """Roots of Psi'(x) - 1 on (0, 1], each scored by the residual |Psi - x|."""
    if system.exact:
        full = [Fraction(c) for c in power_coeffs(system)]
    else:
        full = [Fraction(float(c)) for c in power_coeffs_float(system)]
    g = [i * c for i, c in enumerate(full[1:], start=1)]
    g[0] -= 1
    while g and g[0] == 0:
        g.pop(0)
    candidates = []
    if g:
        gbern = [float(c) for c in power_to_bernstein(g)]
        intervals: list = []
        _isolate(gbern, 0.0, 1.0, intervals)
        for a, b, simple in intervals:
            y = _refine_bisect(lambda x: _bernstein_eval(gbern, x), a, b) if simple else 0.5 * (a + b)
            if y > 0.0:
                candidates.append(y)
    d1 = deriv_at(system, 1.0, 1)
    if abs(d1 - 1.0) <= 1e-6 and not any(abs(1.0 - y) < 1e-9 for y in candidates):
        candidates.append(1.0)
    return [(y, abs(psi(system, y) - y)) for y in candidates]


def find_tangency(family, t_lo: float, t_hi: float,
                  t_tol: float = 1e-8, cut: float = 1e-7) -> TransitionFinding:
    """Locate the parameter where a fixed point appears or disappears.

    Bisects on the number of fixed points in (cut, 1]: the count changes
    exactly when the graph of Psi_t becomes tangent to the identity. The
    transition is continuous when the emerging fixed point collapses to 0
    and first order otherwise (the jump is the tangency location).
    """
    n_lo, _ = _count_roots(family, t_lo, cut)
    n_hi, _ = _count_roots(family, t_hi, cut)
    if n_lo == n_hi:
        raise NumericError(
            f"fixed-point count is {n_lo} at both ends of [{t_lo}, {t_hi}]; no transition bracketed")
    lo, hi = float(t_lo), float(t_hi)
    while hi - lo > t_tol:
        mid = 0.5 * (lo + hi)
        n_mid, _ = _count_roots(family, mid, cut)
        if n_mid == n_lo:
            lo = mid
        else:
            hi = mid
    t_star = 0.5 * (lo + hi)
    # at t_star the graph is tangent to the identity: locate the point where
    # Psi' = 1 and the residual |Psi(y) - y| is smallest
    candidates = _tangency_candidates(family.system_at(t_star))
    if not candidates:
        raise NumericError("could not identify the emerging fixed point at the transition")
    x_star, _resid = min(candidates, key=lambda c: c[1])
    if x_star < 1e-3:
        return TransitionFinding(t_star, 0.0, "continuous", 0.0)
    return TransitionFinding(t_star, x_star, "first_order", x_star)


def full_report(system: RecursiveTreeSystem, tol: float = 1e-12) -> dict:
    """The analysis report: fixed points, criticality, concordance, derivatives.

    For supercordant systems the report carries a plain-language description
    of the event attached to the smallest nonzero fixed point: the tree has
    an admissible subtree in which all but finitely many vertices keep at
    most m subtree children.
    """
    report = find_fixed_points(system, tol=tol)
    cls = concordance(system)
    out = report.to_json()
    out["concordance"] = cls.to_json()
    try:
        crit, witness = is_critical(system)
        out["critical"] = crit
        out["criticality_witness"] = [float(witness[0]), float(witness[1])]
    except ValidationError:
        out["critical"] = None
    n_derivs = max(3, system.max_threshold)
    out["derivs_at_zero"] = [float(d) for d in derivs_at_zero(system, n_derivs)]
    if cls.kind == "supercordant" and not report.continuum and report.nonzero:
        m = cls.m
        out["event_description"] = (
            f"smallest nonzero fixed point: probability that the tree contains an "
            f"admissible subtree S in which all but finitely many vertices v have "
            f"n_S(v) <= {m}")
    out["residual_bound"] = report.residual_bound if not report.continuum else 0.0
    return out
