"""Built-in example systems and families used across tests and the CLI.

These are small hand-picked systems exhibiting each qualitative behavior:
criticality, first-order and continuous transitions, tier merging, and
exponential minimal-subtree growth.
"""

from __future__ import annotations

from fractions import Fraction

from .core import (
    PoissonFamily,
    RecursiveTreeSystem,
    SystemFamily,
    ThresholdFunction,
    from_formula,
    make_system,
)

F = Fraction


def emergence_family() -> SystemFamily:
    """Weights (1/3 - t, 0, 1/2, 1/6 + t) on 0..3 with thresholds (1,1,1,2).

    Critical at t = 0; a single interpretable fixed point emerges and climbs
    to 1 as t goes to 1/3.
    """
    return SystemFamily(
        weight_polys={0: (F(1, 3), F(-1)), 1: (F(0),), 2: (F(1, 2),), 3: (F(1, 6), F(1))},
        h=ThresholdFunction({0: 1, 1: 1, 2: 1, 3: 2}),
        t_min=0.0, t_max=float(F(1, 3)))


def first_order_family() -> SystemFamily:
    """Weights (1/20 - t, 1/2 + t, 9/20) on (0, 2, 5), thresholds (1, 1, 4).

    Critical at t = 0 with two nonzero fixed points near 0.73 and 0.93; for
    t > 0 a third, interpretable fixed point emerges from 0.
    """
    return SystemFamily(
        weight_polys={0: (F(1, 20), F(-1)), 2: (F(1, 2), F(1)), 5: (F(9, 20),)},
        h=ThresholdFunction({0: 1, 2: 1, 5: 4}),
        t_min=0.0, t_max=float(F(1, 20)))


def double_emergence_family() -> SystemFamily:
    """Weights (1/24, 1/2 - 3t^2, 1/6 + t, 7/24 + 3t^2 - t) on (0, 2, 3, 6).

    Thresholds (1, 1, 2, 5). Critical at t = 0; as t grows two fixed points
    emerge together from 0, the smaller one uninterpretable.
    """
    return SystemFamily(
        weight_polys={0: (F(1, 24),),
                      2: (F(1, 2), F(0), F(-3)),
                      3: (F(1, 6), F(1)),
                      6: (F(7, 24), F(-1), F(3))},
        h=ThresholdFunction({0: 1, 2: 1, 3: 2, 6: 5}),
        t_min=0.0, t_max=0.05)


def tier_merge_system() -> RecursiveTreeSystem:
    """Weights (1/10, 0, 1/2, 1/5, 1/5) on 0..4, thresholds (1, 1, 1, 2, 2).

    2-supercordant, with Psi(x) = x + (13/10)x^2 - 2x^3 + (3/5)x^4 and the
    nonzero fixed point (10 - sqrt(22))/6.
    """
    return make_system(
        {0: F(1, 10), 1: F(0), 2: F(1, 2), 3: F(1, 5), 4: F(1, 5)},
        {0: 1, 1: 1, 2: 1, 3: 2, 4: 2})


def binary_ternary_family() -> SystemFamily:
    """Weights (1/2 + t) on 2 and (1/2 - t) on 3, thresholds h(2)=1, h(3)=3.

    For 0 < t < 1/6 there are two nonzero fixed points, both interpretable;
    they merge at 1 when t reaches 1/6. Minimal admissible subtrees grow
    exponentially on the all-trees event.
    """
    return SystemFamily(
        weight_polys={2: (F(1, 2), F(1)), 3: (F(1, 2), F(-1))},
        h=ThresholdFunction({0: 1, 2: 1, 3: 3}),
        t_min=0.0, t_max=float(F(1, 2)))


def mixed_tier_system() -> RecursiveTreeSystem:
    """The 2-critical system with weights (64/135, 1/3, 1/9, 1/27, 2/45).

    Supported on (0, 2, 3, 4, 5) with thresholds (1, 1, 1, 2, 2); decomposes
    into four primitive critical measures.
    """
    return make_system(
        {0: F(64, 135), 2: F(1, 3), 3: F(1, 9), 4: F(1, 27), 5: F(2, 45)},
        {0: 1, 2: 1, 3: 1, 4: 2, 5: 2})


def harmonic_gap_distribution(n_max: int):
    """Truncation of chi(ell) = 1/(ell (ell - 1)) at n_max, deficit on 0.

    With h constant 2 the untruncated map is the identity; truncations
    approach it from below as n_max grows.
    """
    return from_formula(lambda ell: F(1, ell * (ell - 1)) if ell >= 2 else None, n_max)


def harmonic_gap_system(n_max: int) -> RecursiveTreeSystem:
    chi = harmonic_gap_distribution(n_max)
    h = ThresholdFunction({ell: 2 for ell in set(chi.weights) | {0}})
    return RecursiveTreeSystem(chi, h)


def poisson_family(threshold: int, tail_tol: float = 1e-12,
                   t_min: float = 0.0, t_max: float = 10.0) -> PoissonFamily:
    """Truncated Poisson children with a constant threshold, indexed by rate."""
    return PoissonFamily(threshold, tail_tol, t_min, t_max)
