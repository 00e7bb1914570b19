"""Shared builders for the test suite: random critical and supercordant systems.

The generators work in exact rationals so concordance checks are exact. They
use a plain random.Random so failures reproduce from the seed alone.
"""

from __future__ import annotations

import itertools
import random
from fractions import Fraction

from rts_lab.admap import derivs_at_zero, falling
from rts_lab.core import RecursiveTreeSystem, make_system
from rts_lab.critmeasure import crit_measure

F = Fraction


def random_tier_blocks(rng: random.Random, m: int, max_value: int = 7):
    """Disjoint ascending value blocks, one per tier 1..m, sizes 1 or 2.

    Blocks are ordered (every tier-k value below every tier-(k+1) value), so
    the induced h is increasing on the support, and values start at 2, so
    h(l) <= l holds throughout for m <= 3.
    """
    sizes = [rng.choice([1, 2]) for _ in range(m)]
    values = sorted(rng.sample(range(2, max_value + 1), sum(sizes)))
    blocks, i = [], 0
    for s in sizes:
        blocks.append(tuple(values[i:i + s]))
        i += s
    return blocks


def random_convex_weights(rng: random.Random, n: int):
    raw = [F(rng.randint(1, 9)) for _ in range(n)]
    total = sum(raw)
    return [w / total for w in raw]


def random_crit_mixture(rng: random.Random, m: int | None = None,
                        max_value: int = 7) -> RecursiveTreeSystem:
    """A random m-critical system: convex mixture of crit measures over
    shared tier blocks (closed under mixing, so no rejection loop)."""
    if m is None:
        m = rng.choice([1, 2, 3])
    blocks = random_tier_blocks(rng, m, max_value)
    seqs = list(itertools.product(*blocks))
    coeffs = random_convex_weights(rng, len(seqs))
    weights: dict[int, Fraction] = {0: F(0)}
    for a, seq in zip(coeffs, seqs):
        for ell, w in crit_measure(seq).weights.items():
            weights[ell] = weights.get(ell, F(0)) + a * w
    thresholds = {0: 1}
    for k, block in enumerate(blocks, start=1):
        for ell in block:
            thresholds[ell] = k
    return make_system(weights, thresholds)


def random_supercordant(rng: random.Random, max_support: int = 12) -> RecursiveTreeSystem:
    """A random m-supercordant system (m <= 3) with increasing h.

    Built constructively: an (m-1)-critical mixture keeps the first m-1
    derivatives of Psi at 0 on target; moving mass from chi(0) to a fresh
    value r in tier m raises the order-m derivative past its target without
    touching the lower ones. Optionally some mass goes to a still higher
    tier, which the m-truncation must strip.
    """
    m = rng.choice([1, 2, 3])
    if m == 1:
        weights = {0: F(1)}
        thresholds = {0: 1}
        deficit = F(1)  # want Psi'(0) > 1
    else:
        base = random_crit_mixture(rng, m - 1, max_value=7)
        weights = dict(base.chi.weights)
        thresholds = dict(base.h.thresholds)
        deficit = -derivs_at_zero(base, m)[-1]  # want Psi^(m)(0) > 0
    for r in range(8, max_support):
        eps = weights[0] * F(rng.randint(50, 90), 100)
        if eps * falling(r, m) > deficit:
            break
    else:
        r = max_support - 1
        eps = weights[0] * F(95, 100)
        assert eps * falling(r, m) > deficit, "constructive bound failed"
    weights[r] = eps
    weights[0] -= eps
    thresholds[r] = m
    if rng.random() < 0.5 and weights[0] > 0:
        delta = weights[0] / rng.randint(2, 5)
        weights[max_support] = delta
        weights[0] -= delta
        thresholds[max_support] = m + rng.randint(1, 2)
    return make_system(weights, thresholds)
