"""System model: child distributions, threshold functions, tiers, families.

A recursive tree system is a pair (chi, h) where chi is a finitely supported
child distribution on the nonnegative integers and h is a threshold function
with h(ell) >= 1. The system encodes the recursive tree property "at least
h(ell) of the ell root-child subtrees have the property".

Weights are kept as exact ``fractions.Fraction`` values whenever the input is
rational ("exact mode"); otherwise they are binary64. Exact mode is required
by the critical-measure machinery, which relies on exact cancellation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

Number = "Fraction | float"

WEIGHT_SUM_TOL = 1e-12


class ValidationError(ValueError):
    """Bad input document or invalid system data (CLI exit code 1)."""


class NumericError(RuntimeError):
    """A numeric procedure failed to reach its goal (CLI exit code 2)."""


def parse_weight(s) -> Fraction | float:
    """Parse a weight given as "p/q", an integer string, or a decimal.

    Returns a Fraction for the first two forms and a float for decimals.
    """
    if isinstance(s, (int, Fraction)):
        return Fraction(s)
    if isinstance(s, float):
        return s
    if not isinstance(s, str):
        raise ValidationError(f"weight must be a string or number, got {s!r}")
    t = s.strip()
    if "/" in t:
        num, _, den = t.partition("/")
        try:
            return Fraction(int(num), int(den))
        except (ValueError, ZeroDivisionError) as e:
            raise ValidationError(f"bad rational weight {s!r}: {e}") from None
    try:
        return Fraction(int(t))
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        raise ValidationError(f"bad weight {s!r}") from None


def format_weight(w) -> str:
    if isinstance(w, Fraction):
        return f"{w.numerator}/{w.denominator}" if w.denominator != 1 else str(w.numerator)
    return repr(float(w))


@dataclass(frozen=True)
class ChildDistribution:
    """Finitely supported distribution of the number of children.

    ``weights`` maps child counts to weights. ``exact`` is True when every
    weight is a Fraction; arithmetic downstream follows this flag.
    """

    weights: Mapping[int, Fraction | float]
    exact: bool

    def __post_init__(self):
        total = sum(self.weights.values())
        for ell, w in self.weights.items():
            if not isinstance(ell, int) or ell < 0:
                raise ValidationError(f"support value {ell!r} is not a nonnegative integer")
            if w < 0:
                raise ValidationError(f"negative weight {w} at value {ell}")
        if self.exact:
            if total != 1:
                raise ValidationError(f"weights sum to {format_weight(Fraction(total))}, expected 1")
        else:
            if abs(float(total) - 1.0) > WEIGHT_SUM_TOL:
                raise ValidationError(f"weights sum to {float(total)!r}, expected 1 within {WEIGHT_SUM_TOL}")

    @property
    def support(self) -> tuple[int, ...]:
        """Values with strictly positive weight, sorted."""
        return tuple(sorted(ell for ell, w in self.weights.items() if w > 0))

    def weight(self, ell: int) -> Fraction | float:
        return self.weights.get(ell, Fraction(0) if self.exact else 0.0)

    def mean(self):
        return sum(ell * w for ell, w in self.weights.items())

    def as_float(self) -> "ChildDistribution":
        return ChildDistribution({ell: float(w) for ell, w in self.weights.items()}, exact=False)


@dataclass(frozen=True)
class ThresholdFunction:
    """Integer thresholds h(ell) >= 1, defined at least on support plus {0}."""

    thresholds: Mapping[int, int]

    def __post_init__(self):
        for ell, k in self.thresholds.items():
            if not isinstance(ell, int) or ell < 0:
                raise ValidationError(f"threshold domain value {ell!r} is not a nonnegative integer")
            if not isinstance(k, int) or k < 1:
                raise ValidationError(f"threshold h({ell}) = {k!r} violates h >= 1")

    def __call__(self, ell: int) -> int:
        try:
            return self.thresholds[ell]
        except KeyError:
            raise ValidationError(f"threshold function undefined at {ell}") from None

    @property
    def domain(self) -> tuple[int, ...]:
        return tuple(sorted(self.thresholds))

    @property
    def is_increasing(self) -> bool:
        dom = self.domain
        vals = [self.thresholds[ell] for ell in dom]
        return all(a <= b for a, b in zip(vals, vals[1:]))

    def increasing_on(self, values: Sequence[int]) -> bool:
        vs = sorted(values)
        hs = [self.thresholds[ell] for ell in vs]
        return all(a <= b for a, b in zip(hs, hs[1:]))


@dataclass(frozen=True)
class RecursiveTreeSystem:
    """A child distribution paired with a threshold function.

    ``tiers`` maps k >= 1 to the sorted tuple of support values ell >= 1 with
    h(ell) = k. The value 0 never belongs to a tier. ``max_threshold`` is the
    largest h over the positive support (0 for distributions supported on {0}).
    """

    chi: ChildDistribution
    h: ThresholdFunction
    tiers: Mapping[int, tuple[int, ...]] = field(default=None)
    max_threshold: int = field(default=None)

    def __post_init__(self):
        missing = [ell for ell in set(self.chi.support) | {0} if ell not in self.h.thresholds]
        if missing:
            raise ValidationError(f"threshold function missing on support values {sorted(missing)}")
        tiers: dict[int, list[int]] = {}
        for ell in self.chi.support:
            if ell == 0:
                continue
            tiers.setdefault(self.h(ell), []).append(ell)
        object.__setattr__(self, "tiers", {k: tuple(sorted(v)) for k, v in sorted(tiers.items())})
        object.__setattr__(self, "max_threshold", max(self.tiers, default=0))

    @property
    def exact(self) -> bool:
        return self.chi.exact

    def tier(self, k: int) -> tuple[int, ...]:
        return self.tiers.get(k, ())

    @property
    def degree(self) -> int:
        """Largest support value; the polynomial degree of the map Psi."""
        supp = self.chi.support
        return supp[-1] if supp else 0

    def as_float(self) -> "RecursiveTreeSystem":
        return RecursiveTreeSystem(self.chi.as_float(), self.h)


def make_system(weights: Mapping[int, object], thresholds: Mapping[int, int]) -> RecursiveTreeSystem:
    """Build a system from plain weight and threshold maps.

    Weights may be Fractions, ints, floats, or strings; exact mode is used
    iff no weight is a float (or float-valued string).
    """
    parsed = {int(ell): parse_weight(w) for ell, w in weights.items()}
    exact = all(isinstance(w, Fraction) for w in parsed.values())
    if not exact:
        parsed = {ell: float(w) for ell, w in parsed.items()}
    chi = ChildDistribution(parsed, exact=exact)
    h = ThresholdFunction(dict(thresholds))
    return RecursiveTreeSystem(chi, h)


def tiers_of(system: RecursiveTreeSystem) -> dict[int, tuple[int, ...]]:
    """The tier decomposition {k: values ell >= 1 with h(ell)=k, chi(ell)>0}."""
    return dict(system.tiers)


def m_truncation(system: RecursiveTreeSystem, m: int) -> RecursiveTreeSystem:
    """Empty every tier above m, moving the removed mass onto the value 0.

    Leaves the weight sum unchanged (exactly, in exact mode). Truncating at m
    and then at m2 <= m equals truncating at m2 directly.
    """
    if m < 1:
        raise ValidationError(f"truncation order must be >= 1, got {m}")
    zero = Fraction(0) if system.exact else 0.0
    new_weights = dict(system.chi.weights)
    moved = zero
    for k, values in system.tiers.items():
        if k <= m:
            continue
        for ell in values:
            moved += new_weights[ell]
            new_weights[ell] = zero
    new_weights[0] = new_weights.get(0, zero) + moved
    chi = ChildDistribution(new_weights, exact=system.exact)
    return RecursiveTreeSystem(chi, system.h)


def poisson_truncated(lam: float, tail_tol: float = 1e-12) -> ChildDistribution:
    """Poisson(lam) truncated to {0..N}, with the dropped tail mass on 0.

    N is minimal with tail mass beyond N below tail_tol. Reassigning the tail
    to 0 only lowers the map Psi, by at most tail_tol pointwise, because
    h(0) >= 1 means the value 0 never contributes.
    """
    if lam < 0:
        raise ValidationError(f"Poisson rate must be nonnegative, got {lam}")
    if not 0 < tail_tol < 1:
        raise ValidationError(f"tail tolerance must be in (0,1), got {tail_tol}")
    if lam == 0:
        return ChildDistribution({0: 1.0}, exact=False)
    weights = {}
    p = math.exp(-lam)
    cum = p
    weights[0] = p
    n = 0
    while 1.0 - cum >= tail_tol:
        n += 1
        p *= lam / n
        weights[n] = p
        cum += p
        if n > 10_000_000:  # lam would have to be absurd
            raise NumericError("Poisson truncation did not converge")
    weights[0] += 1.0 - cum
    return ChildDistribution(weights, exact=False)


def from_formula(weight_fn: Callable[[int], object], n_max: int) -> ChildDistribution:
    """Truncate an explicit weight formula at n_max, shifting the tail to 0.

    ``weight_fn(ell)`` gives the weight of ell for 1 <= ell <= n_max; the
    deficit 1 - sum is placed on 0. Useful for infinite-support measures such
    as chi(ell) = 1/(ell(ell-1)).
    """
    weights = {}
    exact = True
    for ell in range(1, n_max + 1):
        w = weight_fn(ell)
        if w is None:
            continue
        if not isinstance(w, (int, Fraction)):
            exact = False
        if w:
            weights[ell] = Fraction(w) if isinstance(w, int) else w
    total = sum(weights.values())
    if not exact:
        weights = {ell: float(w) for ell, w in weights.items()}
        total = float(total)
        if total > 1.0 + WEIGHT_SUM_TOL:
            raise ValidationError(f"formula weights sum to {total} > 1 at n_max={n_max}")
        weights[0] = max(0.0, 1.0 - total)
    else:
        if total > 1:
            raise ValidationError(f"formula weights sum to {total} > 1 at n_max={n_max}")
        weights[0] = 1 - total
    return ChildDistribution(weights, exact=exact)


@dataclass(frozen=True)
class SystemFamily:
    """Weights that are polynomials in a real parameter t.

    ``weight_polys`` maps each value ell to its coefficient tuple (constant
    term first, Fraction coefficients). The weight sum must be identically 1
    as a polynomial in t.
    """

    weight_polys: Mapping[int, tuple[Fraction, ...]]
    h: ThresholdFunction
    t_min: float
    t_max: float

    def __post_init__(self):
        deg = max((len(c) for c in self.weight_polys.values()), default=1)
        sums = [Fraction(0)] * deg
        for coeffs in self.weight_polys.values():
            for i, c in enumerate(coeffs):
                sums[i] += c
        if sums[0] != 1 or any(s != 0 for s in sums[1:]):
            raise ValidationError("family weights do not sum to 1 identically in t")
        if not self.t_min <= self.t_max:
            raise ValidationError(f"empty parameter interval [{self.t_min}, {self.t_max}]")

    def system_at(self, t) -> RecursiveTreeSystem:
        """Instantiate the family at parameter t.

        Exact mode when t is an int or Fraction, float mode otherwise.
        """
        if not (self.t_min - 1e-15 <= float(t) <= self.t_max + 1e-15):
            raise ValidationError(f"parameter t={t} outside [{self.t_min}, {self.t_max}]")
        exact = isinstance(t, (int, Fraction))
        tv = Fraction(t) if exact else float(t)
        weights = {}
        for ell, coeffs in self.weight_polys.items():
            w = Fraction(0) if exact else 0.0
            for c in reversed(coeffs):
                w = w * tv + (c if exact else float(c))
            if exact and w < 0 or not exact and w < -1e-15:
                raise ValidationError(f"weight of {ell} is negative ({w}) at t={t}")
            weights[ell] = w if exact else max(w, 0.0)
        chi = ChildDistribution(weights, exact=exact)
        return RecursiveTreeSystem(chi, self.h)


class PoissonFamily:
    """Family of truncated Poisson systems indexed by the rate, h constant.

    Not polynomial in the parameter, so it sits outside SystemFamily; it
    offers the same ``system_at`` interface for tangency searches and sweeps.
    """

    def __init__(self, threshold: int, tail_tol: float = 1e-12,
                 t_min: float = 0.0, t_max: float = 10.0):
        if threshold < 1:
            raise ValidationError(f"threshold must be >= 1, got {threshold}")
        self.threshold = int(threshold)
        self.tail_tol = float(tail_tol)
        self.t_min = float(t_min)
        self.t_max = float(t_max)

    def system_at(self, t) -> RecursiveTreeSystem:
        lam = float(t)
        if not (self.t_min - 1e-15 <= lam <= self.t_max + 1e-15):
            raise ValidationError(f"rate {lam} outside [{self.t_min}, {self.t_max}]")
        chi = poisson_truncated(lam, self.tail_tol)
        h = ThresholdFunction({ell: self.threshold for ell in set(chi.weights) | {0}})
        return RecursiveTreeSystem(chi, h)


# ---------------------------------------------------------------------------
# document parsing

_SYSTEM_KEYS = {"chi", "h"}
_FAMILY_KEYS = {"chi", "h", "t_min", "t_max"}
_POISSON_FAMILY_KEYS = {"poisson", "t_min", "t_max"}
_CHI_ENTRY_KEYS = {"value", "weight"}
_CHI_POLY_ENTRY_KEYS = {"value", "weight_poly"}
_H_ENTRY_KEYS = {"value", "threshold"}
_POISSON_KEYS = {"threshold", "tail_tol"}


def _load_json(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ValidationError("document root must be a JSON object")
    return doc


def _check_keys(obj: dict, allowed: set, where: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ValidationError(f"unknown keys {sorted(unknown)} in {where}")


def _parse_h_entries(entries) -> ThresholdFunction:
    if not isinstance(entries, list):
        raise ValidationError('"h" must be an array')
    thresholds = {}
    for entry in entries:
        if not isinstance(entry, dict):
            raise ValidationError('"h" entries must be objects')
        _check_keys(entry, _H_ENTRY_KEYS, '"h" entry')
        ell = entry.get("value")
        k = entry.get("threshold")
        if not isinstance(ell, int) or isinstance(ell, bool):
            raise ValidationError(f'"h" entry value must be an integer, got {ell!r}')
        if not isinstance(k, int) or isinstance(k, bool):
            raise ValidationError(f'"h" entry threshold must be an integer, got {k!r}')
        if ell in thresholds:
            raise ValidationError(f"duplicate threshold entry for value {ell}")
        thresholds[ell] = k
    return ThresholdFunction(thresholds)


def parse_system(text: str) -> RecursiveTreeSystem:
    """Parse a system document (JSON, UTF-8).

    Schema: {"chi": [{"value": int, "weight": "p/q" or decimal}, ...],
    "h": [{"value": int, "threshold": int}, ...]}. Unknown keys are rejected.
    Exact mode is used iff every weight parses as a rational.
    """
    doc = _load_json(text)
    _check_keys(doc, _SYSTEM_KEYS, "system document")
    if "chi" not in doc or "h" not in doc:
        raise ValidationError('system document needs "chi" and "h"')
    if not isinstance(doc["chi"], list):
        raise ValidationError('"chi" must be an array')
    weights = {}
    for entry in doc["chi"]:
        if not isinstance(entry, dict):
            raise ValidationError('"chi" entries must be objects')
        _check_keys(entry, _CHI_ENTRY_KEYS, '"chi" entry')
        ell = entry.get("value")
        if not isinstance(ell, int) or isinstance(ell, bool):
            raise ValidationError(f'"chi" entry value must be an integer, got {ell!r}')
        if ell in weights:
            raise ValidationError(f"duplicate weight entry for value {ell}")
        weights[ell] = entry.get("weight")
    return make_system(weights, _parse_h_entries(doc["h"]).thresholds)


def parse_family(text: str):
    """Parse a family document. Two kinds are accepted.

    Polynomial kind: {"chi": [{"value": int, "weight_poly": [coeff, ...]},
    ...], "h": [...], "t_min": dec, "t_max": dec} with rational-string
    coefficients, constant term first.

    Poisson kind: {"poisson": {"threshold": int, "tail_tol": dec},
    "t_min": dec, "t_max": dec}; the parameter is the Poisson rate.
    """
    doc = _load_json(text)
    if "poisson" in doc:
        _check_keys(doc, _POISSON_FAMILY_KEYS, "family document")
        spec = doc["poisson"]
        if not isinstance(spec, dict):
            raise ValidationError('"poisson" must be an object')
        _check_keys(spec, _POISSON_KEYS, '"poisson"')
        if not isinstance(spec.get("threshold"), int):
            raise ValidationError('"poisson" needs an integer "threshold"')
        tail = float(parse_weight(spec.get("tail_tol", "1e-12")))
        return PoissonFamily(spec["threshold"], tail,
                             t_min=float(doc.get("t_min", 0.0)),
                             t_max=float(doc.get("t_max", 10.0)))
    _check_keys(doc, _FAMILY_KEYS, "family document")
    for key in ("chi", "h", "t_min", "t_max"):
        if key not in doc:
            raise ValidationError(f'family document needs "{key}"')
    if not isinstance(doc["chi"], list):
        raise ValidationError('"chi" must be an array')
    polys = {}
    for entry in doc["chi"]:
        if not isinstance(entry, dict):
            raise ValidationError('"chi" entries must be objects')
        _check_keys(entry, _CHI_POLY_ENTRY_KEYS, '"chi" entry')
        ell = entry.get("value")
        if not isinstance(ell, int) or isinstance(ell, bool):
            raise ValidationError(f'"chi" entry value must be an integer, got {ell!r}')
        coeffs = entry.get("weight_poly")
        if not isinstance(coeffs, list) or not coeffs:
            raise ValidationError(f'"weight_poly" for value {ell} must be a nonempty array')
        parsed = []
        for c in coeffs:
            w = parse_weight(c)
            if not isinstance(w, Fraction):
                raise ValidationError(f"weight_poly coefficients must be rational, got {c!r}")
            parsed.append(w)
        if ell in polys:
            raise ValidationError(f"duplicate weight_poly entry for value {ell}")
        polys[ell] = tuple(parsed)
    h = _parse_h_entries(doc["h"])
    try:
        t_min = float(doc["t_min"])
        t_max = float(doc["t_max"])
    except (TypeError, ValueError):
        raise ValidationError('"t_min"/"t_max" must be numbers') from None
    fam = SystemFamily(polys, h, t_min, t_max)
    # instantiating at an endpoint catches h/support mismatches up front
    fam.system_at(Fraction(t_min).limit_denominator(10**9))
    return fam


def system_to_document(system: RecursiveTreeSystem) -> str:
    """Serialize a system back into a document string (canonical key order)."""
    chi = [{"value": ell, "weight": format_weight(w)}
           for ell, w in sorted(system.chi.weights.items())]
    h = [{"value": ell, "threshold": k}
         for ell, k in sorted(system.h.thresholds.items())]
    return json.dumps({"chi": chi, "h": h}, sort_keys=True)
