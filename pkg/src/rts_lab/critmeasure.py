"""Primitive critical measures, decompositions, and the R_n chain.

crit(l_1, ..., l_m) is the unique measure supported within {0, l_1, ..., l_m}
making the system with h(l_k) = k exactly m-concordant. Every m-critical
system decomposes canonically as a convex combination of such measures, one
choice of l_k per tier. All arithmetic here is exact rational; the Monte
Carlo samplers exist as independent cross-checks of the exact formulas.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import ChildDistribution, RecursiveTreeSystem, ThresholdFunction, ValidationError
from .admap import (
    _bg_power_coeffs,
    derivs_at_zero,
    eval_power,
    falling,
    is_m_concordant,
    bg,
    power_coeffs,
    power_to_bernstein,
)


@dataclass(frozen=True)
class CritSpec:
    """A primitive critical measure crit(l_1, ..., l_m)."""

    support_seq: tuple[int, ...]
    weights: dict  # value -> Fraction, on {0, l_1, ..., l_m}

    @property
    def m(self) -> int:
        return len(self.support_seq)

    def system(self) -> RecursiveTreeSystem:
        thresholds = {0: 1}
        for k, ell in enumerate(self.support_seq, start=1):
            thresholds[ell] = k
        chi = ChildDistribution(dict(self.weights), exact=True)
        return RecursiveTreeSystem(chi, ThresholdFunction(thresholds))

    def to_json(self) -> dict:
        return {
            "support_seq": list(self.support_seq),
            "weights": {str(ell): f"{w.numerator}/{w.denominator}"
                        for ell, w in sorted(self.weights.items())},
        }


def crit_measure(support_seq) -> CritSpec:
    """Compute crit(l_1, ..., l_m) by the exact alternating recurrence.

    chi(l_1) = 1/l_1 and chi(l_k) is the signed binomial combination of the
    earlier weights divided by the falling factorial (l_k)_k; the remainder
    goes on 0. The result is validated to be exactly m-concordant, with
    strictly positive weights when l_1 >= 2.
    """
    seq = tuple(int(ell) for ell in support_seq)
    if not seq or any(b <= a for a, b in zip(seq, seq[1:])) or seq[0] < 1:
        raise ValidationError(f"support sequence must be strictly increasing and positive: {seq}")
    weights = {}
    weights[seq[0]] = Fraction(1, seq[0])
    for k in range(2, len(seq) + 1):
        ell_k = seq[k - 1]
        acc = Fraction(0)
        for j in range(1, k):
            ell_j = seq[j - 1]
            acc += (-1) ** (k + j + 1) * math.comb(k - 1, j - 1) * weights[ell_j] * falling(ell_j, k)
        weights[ell_k] = acc / falling(ell_k, k)
    weights[0] = 1 - sum(weights.values())
    spec = CritSpec(seq, weights)
    system = spec.system()
    if not is_m_concordant(system, len(seq)):
        raise ValidationError(f"crit{seq} failed the exact concordance check")
    if seq[0] >= 2 and any(w <= 0 for w in weights.values()):
        raise ValidationError(f"crit{seq} produced a nonpositive weight")
    if seq[0] == 1 and any(weights.get(ell, 0) != 0 for ell in seq[1:]):
        raise ValidationError(f"crit{seq} with l_1 = 1 must degenerate to the point mass at 1")
    return spec


@dataclass(frozen=True)
class Decomposition:
    """A convex combination of primitive critical measures."""

    terms: tuple  # ((coefficient: Fraction, CritSpec), ...)
    source: RecursiveTreeSystem

    def reconstruct(self) -> dict:
        out: dict = {}
        for coeff, spec in self.terms:
            for ell, w in spec.weights.items():
                out[ell] = out.get(ell, Fraction(0)) + coeff * w
        return {ell: w for ell, w in out.items()}

    def to_json(self) -> dict:
        return {"terms": [
            {"coefficient": f"{c.numerator}/{c.denominator}", **spec.to_json()}
            for c, spec in self.terms]}


def _normalize_overthreshold(system: RecursiveTreeSystem) -> RecursiveTreeSystem:
    """Zero out support values with h(ell) > ell, moving their mass to 0.

    Such values can never meet their threshold, so the map Psi is unchanged;
    the rewrite restores the h(ell) <= ell hypothesis.
    """
    bad = [ell for ell in system.chi.support if ell >= 1 and system.h(ell) > ell]
    if not bad:
        return system
    weights = dict(system.chi.weights)
    thresholds = dict(system.h.thresholds)
    moved = Fraction(0)
    for ell in bad:
        moved += weights[ell]
        weights[ell] = Fraction(0)
        thresholds[ell] = max(ell, 1)
    weights[0] = weights.get(0, Fraction(0)) + moved
    return RecursiveTreeSystem(ChildDistribution(weights, exact=True), ThresholdFunction(thresholds))


def decompose(system: RecursiveTreeSystem) -> Decomposition:
    """Decompose an m-critical system into primitive critical measures.

    The coefficient of crit(l_1, ..., l_m) is the product of the per-tier
    weights a_l = chi(l) (l)_k / sum over the tier. The reconstruction is
    verified to reproduce chi exactly.
    """
    if not system.exact:
        raise ValidationError("decomposition requires exact (rational) weights")
    system = _normalize_overthreshold(system)
    support = system.chi.support
    if support == (1,) or not support:
        spec = crit_measure((1,))
        return Decomposition(((Fraction(1), spec),), system)
    if not system.h.increasing_on([ell for ell in set(support) | {0}]):
        raise ValidationError("decomposition requires h increasing on the support")
    m = system.max_threshold
    if not is_m_concordant(system, m):
        ds = derivs_at_zero(system, m)
        raise ValidationError(
            f"system is not {m}-critical: derivatives at 0 are {ds}, expected (1, 0, ...)")
    a: dict[int, dict[int, Fraction]] = {}
    for k in range(1, m + 1):
        tier = system.tier(k)
        if not tier:
            raise ValidationError(f"tier {k} is empty; only the point mass at 1 has empty tiers")
        denom = sum(system.chi.weight(ell) * falling(ell, k) for ell in tier)
        a[k] = {ell: system.chi.weight(ell) * falling(ell, k) / denom for ell in tier}
    terms = []
    for combo in itertools.product(*(system.tier(k) for k in range(1, m + 1))):
        coeff = Fraction(1)
        for k, ell in enumerate(combo, start=1):
            coeff *= a[k][ell]
        terms.append((coeff, crit_measure(combo)))
    dec = Decomposition(tuple(terms), system)
    recon = dec.reconstruct()
    chi = {ell: w for ell, w in system.chi.weights.items()}
    for ell in set(recon) | set(chi):
        if recon.get(ell, Fraction(0)) != chi.get(ell, Fraction(0)):
            raise ValidationError(f"reconstruction mismatch at value {ell}")
    if sum(c for c, _ in terms) != 1:
        raise ValidationError("decomposition coefficients do not sum to 1")
    return dec


# ---------------------------------------------------------------------------
# the R_n chain

def rn_distribution(n: int) -> dict:
    """Exact distribution of R_n; uniform over {1, ..., n} by the chain's design."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    dist = {1: Fraction(1)}
    for step in range(1, n):
        nxt: dict[int, Fraction] = {}
        for r, p in dist.items():
            up = Fraction(r, step + 1)
            nxt[r + 1] = nxt.get(r + 1, Fraction(0)) + p * up
            nxt[r] = nxt.get(r, Fraction(0)) + p * (1 - up)
        dist = nxt
    return dict(sorted(dist.items()))


def _sample_rn_paths(n_max: int, trials: int, seed) -> np.ndarray:
    """R_1..R_n_max for each trial; shape (trials, n_max)."""
    rng = np.random.default_rng(seed)
    out = np.empty((trials, n_max), dtype=np.int64)
    r = np.ones(trials, dtype=np.int64)
    out[:, 0] = r
    for n in range(1, n_max):
        r = r + (rng.random(trials) * (n + 1) < r)
        out[:, n] = r
    return out


def crit_measure_mc(support_seq, trials: int, seed=0) -> dict:
    """Empirical crit weights via the stopping time T = min {l_k : R_{l_k} = k}.

    Returns {"weights": value -> frequency, "stderr": value -> binomial SE,
    "trials": trials}; trials where no l_k is hit count toward the value 0.
    """
    seq = tuple(int(ell) for ell in support_seq)
    if not seq or any(b <= a for a, b in zip(seq, seq[1:])) or seq[0] < 1:
        raise ValidationError(f"support sequence must be strictly increasing and positive: {seq}")
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    paths = _sample_rn_paths(seq[-1], trials, seed)
    stopped = np.zeros(trials, dtype=bool)
    counts = {}
    for k, ell in enumerate(seq, start=1):
        hit = (~stopped) & (paths[:, ell - 1] == k)
        counts[ell] = int(hit.sum())
        stopped |= hit
    counts[0] = int((~stopped).sum())
    freqs = {ell: c / trials for ell, c in counts.items()}
    stderr = {ell: math.sqrt(p * (1 - p) / trials) for ell, p in freqs.items()}
    return {"weights": freqs, "stderr": stderr, "trials": trials}


def martingale_mean(n: int, x: float, trials: int, seed=0) -> dict:
    """Empirical mean of X_n = P[Bin(n, x) >= R_n]; analytically equal to x."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if not 0.0 <= x <= 1.0:
        raise ValidationError(f"x={x} outside [0, 1]")
    rn = _sample_rn_paths(n, trials, seed)[:, -1]
    from scipy.stats import binom
    vals = binom.sf(rn - 1, n, x)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return {"mean": mean, "stderr": se, "trials": trials}


# ---------------------------------------------------------------------------
# tail representation and the fixed-point criterion

def tail_decomposition(system: RecursiveTreeSystem) -> dict:
    """(x - Psi(x)) / chi(0) as a convex combination of the tails Bg(L, r).

    L is the largest support value. Works because Bg(L, r) has degree-L
    Bernstein coefficients equal to the step indicator 1{j >= r}, so the
    combination coefficients are successive differences of the exact
    Bernstein coefficients. Returns {r: coefficient}; for an m-critical
    system every r <= m coefficient vanishes and the rest are nonnegative
    and sum to 1.
    """
    if not system.exact:
        raise ValidationError("tail decomposition requires exact weights")
    chi0 = system.chi.weight(0)
    if chi0 == 0:
        raise ValidationError("tail decomposition needs chi(0) > 0")
    L = system.degree
    f = [-c for c in power_coeffs(system)]
    f[1] += 1  # f = x - Psi
    g = power_to_bernstein([c / chi0 for c in f])
    out = {}
    prev = Fraction(0)
    for r in range(1, L + 1):
        out[r] = g[r] - prev
        prev = g[r]
    return out


def phi(system: RecursiveTreeSystem, r: int, x, threshold: int | None = None):
    """The mass quotient phi(x) = (x - Psi(x)) / Bg(r, m+1, x) on (0, 1].

    For an m-critical system this is strictly increasing, lies in
    (0, chi(0)], and equals chi(0) at x = 1. Exact when x is rational and the
    system is exact; float otherwise.
    """
    m = system.max_threshold
    k = threshold if threshold is not None else m + 1
    if r <= system.degree:
        raise ValidationError(f"r={r} must exceed the largest support value {system.degree}")
    if isinstance(x, (Fraction, int)) and system.exact:
        xq = Fraction(x)
        if not 0 < xq <= 1:
            raise ValidationError(f"x={x} outside (0, 1]")
        num = xq - eval_power(power_coeffs(system), xq)
        den = eval_power(_bg_power_coeffs(r, k), xq)
        return num / den
    xf = float(x)
    if not 0.0 < xf <= 1.0:
        raise ValidationError(f"x={x} outside (0, 1]")
    from .admap import psi
    return (xf - psi(system, xf)) / bg(r, k, xf)


def with_fixed_point(system: RecursiveTreeSystem, r: int, x_star) -> RecursiveTreeSystem:
    """Shift mass chi(0) -> r so that x_star becomes a fixed point.

    Sets chi(r) = phi(x_star) with h(r) = m + 1; the phi bounds guarantee the
    shifted mass is feasible.
    """
    p = phi(system, r, x_star)
    weights = dict(system.chi.weights)
    zero = Fraction(0) if system.exact else 0.0
    if not 0 <= p <= weights.get(0, zero):
        raise ValidationError(f"phi(x_star) = {p} is not within [0, chi(0)]")
    weights[r] = p
    weights[0] = weights[0] - p
    thresholds = dict(system.h.thresholds)
    thresholds[r] = system.max_threshold + 1
    exact = system.exact and isinstance(p, Fraction)
    if not exact:
        weights = {ell: float(w) for ell, w in weights.items()}
    chi = ChildDistribution(weights, exact=exact)
    return RecursiveTreeSystem(chi, ThresholdFunction(thresholds))
