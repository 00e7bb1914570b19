"""Monte Carlo side: tree sampling and admissible-subtree event estimation.

The estimators never materialize whole trees. Admissibility of the root is a
monotone function of the vertex marks, so the kernels sample children lazily
and stop as soon as a vertex's mark is decided (enough good children, or too
few untried ones left). The unsampled subtrees are independent, so the root
mark has exactly the same law as under full sampling; the explored tree is
typically a vanishing fraction of the full one.

Every trial draws from its own counter-derived random stream, so estimates
are bit-identical for a fixed master seed no matter how trials are scheduled.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import ChildDistribution, NumericError, RecursiveTreeSystem, ValidationError, m_truncation
from .fixedpoint import iterate_psi

U64 = np.uint64
_GOLD = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53

DEFAULT_BUDGET = 10**7


class BudgetExceeded(NumericError):
    """A single trial ran past the per-trial vertex budget."""


def thread_cap() -> int:
    """Worker cap from RTS_LAB_THREADS (0 or unset means automatic)."""
    raw = os.environ.get("RTS_LAB_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"RTS_LAB_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValidationError(f"RTS_LAB_THREADS must be >= 0, got {n}")
    return n or (os.cpu_count() or 1)


@njit(inline="always")
def _stream_next(s):
    # splitmix64 step; cheap, statistically solid, and seedable per trial
    s = s + _GOLD
    z = s
    z = (z ^ (z >> U64(30))) * _MIX1
    z = (z ^ (z >> U64(27))) * _MIX2
    z = z ^ (z >> U64(31))
    return s, float(z >> U64(11)) * _INV53


@njit(inline="always")
def _trial_stream(seed, t):
    return (U64(seed) ^ (U64(t) * _MIX1)) * _MIX2


@njit(cache=True)
def _event_kernel(cum, support, harr, m_cap, level_n, cutoff, trials, seed, budget):
    """Lazy root-mark sampler for the two-phase admissible event.

    Vertices at depth >= level_n are evaluated in restricted mode: a vertex
    whose threshold exceeds m_cap is immediately bad. With level_n = 0 and
    m_cap >= max threshold this reduces to the plain admissible event.
    Returns one int8 per trial: 1 good, 0 bad, -1 budget exceeded.
    """
    out = np.zeros(trials, np.int8)
    ns = support.shape[0]
    selfgood = np.zeros(harr.shape[0], np.int64)
    for e in support:
        if e >= harr[e]:
            selfgood[e] = 1
    ell = np.zeros(cutoff + 2, np.int64)
    kk = np.zeros(cutoff + 2, np.int64)
    sc = np.zeros(cutoff + 2, np.int64)
    tr = np.zeros(cutoff + 2, np.int64)
    for t in range(trials):
        s = _trial_stream(seed, t)
        if cutoff == 0:
            out[t] = 1
            continue
        nodes = 1
        s, u = _stream_next(s)
        i = 0
        while i < ns - 1 and u > cum[i]:
            i += 1
        e = support[i]
        if 0 >= level_n and harr[e] > m_cap:
            out[t] = 0
            continue
        if cutoff == 1:
            good = selfgood[e]
            if 0 >= level_n and harr[e] > m_cap:
                good = 0
            out[t] = good
            continue
        sp = 0
        ell[0] = e
        kk[0] = harr[e]
        sc[0] = 0
        tr[0] = 0
        res = np.int8(0)
        while True:
            if sc[sp] >= kk[sp]:
                v = 1
            elif ell[sp] - tr[sp] < kk[sp] - sc[sp]:
                v = 0
            else:
                tr[sp] += 1
                nodes += 1
                if nodes > budget:
                    res = np.int8(-1)
                    break
                s, u = _stream_next(s)
                i = 0
                while i < ns - 1 and u > cum[i]:
                    i += 1
                e = support[i]
                depth = sp + 1
                if depth >= level_n and harr[e] > m_cap:
                    sc[sp] += 0
                elif depth + 1 == cutoff:
                    # this child's children are all cutoff leaves (all good)
                    sc[sp] += selfgood[e]
                else:
                    sp += 1
                    ell[sp] = e
                    kk[sp] = harr[e]
                    sc[sp] = 0
                    tr[sp] = 0
                continue
            if sp == 0:
                res = np.int8(v)
                break
            sp -= 1
            sc[sp] += v
        out[t] = res
    return out


@njit(cache=True)
def _min_level_kernel(cum, support, harr, cutoff, trials, seed, budget, max_ell):
    """Per-trial minimum level-cutoff size over admissible subtrees.

    Full (non-lazy) sampling: the minimum needs every child's value. Returns
    the root value per trial; INF-coded entries mean no admissible subtree,
    -1 means budget exceeded.
    """
    INF = np.int64(1) << np.int64(60)
    out = np.empty(trials, np.int64)
    ns = support.shape[0]
    ell = np.zeros(cutoff + 2, np.int64)
    tr = np.zeros(cutoff + 2, np.int64)
    vals = np.zeros((cutoff + 2, max_ell + 1), np.int64)
    for t in range(trials):
        s = _trial_stream(seed, t)
        if cutoff == 0:
            out[t] = 1
            continue
        nodes = 1
        s, u = _stream_next(s)
        i = 0
        while i < ns - 1 and u > cum[i]:
            i += 1
        e = support[i]
        sp = 0
        ell[0] = e
        tr[0] = 0
        res = np.int64(-2)
        while True:
            if tr[sp] == ell[sp]:
                # all children resolved; combine the h smallest values
                n_children = ell[sp]
                k = harr[ell[sp]]
                if k > n_children:
                    v = INF
                else:
                    # insertion sort: child counts are small
                    for a in range(1, n_children):
                        key = vals[sp, a]
                        b = a - 1
                        while b >= 0 and vals[sp, b] > key:
                            vals[sp, b + 1] = vals[sp, b]
                            b -= 1
                        vals[sp, b + 1] = key
                    v = np.int64(0)
                    for a in range(k):
                        if vals[sp, a] >= INF:
                            v = INF
                            break
                        v += vals[sp, a]
                if sp == 0:
                    res = v
                    break
                sp -= 1
                vals[sp, tr[sp] - 1] = v
            else:
                tr[sp] += 1
                nodes += 1
                if nodes > budget:
                    res = np.int64(-1)
                    break
                s, u = _stream_next(s)
                i = 0
                while i < ns - 1 and u > cum[i]:
                    i += 1
                e = support[i]
                if sp + 1 == cutoff:
                    vals[sp, tr[sp] - 1] = 1
                else:
                    sp += 1
                    ell[sp] = e
                    tr[sp] = 0
        out[t] = res if res != INF else np.int64(-3)
    return out


def _sampling_tables(chi: ChildDistribution):
    support = np.array(sorted(chi.weights), dtype=np.int64)
    probs = np.array([float(chi.weights[ell]) for ell in support])
    probs = probs / probs.sum()
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    return support, cum


def _threshold_array(system: RecursiveTreeSystem) -> np.ndarray:
    top = max(system.h.domain + (system.degree,))
    harr = np.ones(top + 1, dtype=np.int64)
    for ell, k in system.h.thresholds.items():
        harr[ell] = k
    return harr


@dataclass(frozen=True)
class EventEstimate:
    event: str
    trials: int
    successes: int
    excluded: int  # budget-exceeded trials, reported and left out
    estimate: float
    stderr: float
    predicted: float
    z: float
    seed: int

    def to_json(self) -> dict:
        return {"event": self.event, "trials": self.trials,
                "successes": self.successes, "excluded": self.excluded,
                "estimate": self.estimate, "stderr": self.stderr,
                "predicted": self.predicted, "z": self.z, "seed": self.seed}


def _make_estimate(event: str, flags: np.ndarray, predicted: float, seed: int) -> EventEstimate:
    excluded = int((flags == -1).sum())
    done = flags[flags >= 0]
    n = len(done)
    if n == 0:
        raise NumericError("every trial exceeded the vertex budget")
    successes = int((done == 1).sum())
    est = successes / n
    se = math.sqrt(est * (1.0 - est) / n)
    if se > 0:
        z = (est - predicted) / se
    else:
        z = 0.0 if abs(est - predicted) < 1e-12 else math.inf
    return EventEstimate(event, n, successes, excluded, est, se, float(predicted), z, seed)


def estimate_admissible(system: RecursiveTreeSystem, cutoff_depth: int, trials: int,
                        seed: int = 0, budget: int = DEFAULT_BUDGET) -> EventEstimate:
    """Estimate P[the depth-cutoff tree has an admissible subtree].

    Cutoff vertices count as good, so the target is exactly the iterate
    Psi^cutoff(1), which is also the reported prediction.
    """
    if cutoff_depth < 0 or trials < 1:
        raise ValidationError("need cutoff_depth >= 0 and trials >= 1")
    support, cum = _sampling_tables(system.chi)
    harr = _threshold_array(system)
    m_cap = int(harr.max())
    flags = _event_kernel(cum, support, harr, m_cap, 0, cutoff_depth,
                          trials, U64(seed & (2**64 - 1)), budget)
    predicted = iterate_psi(system, 1.0, cutoff_depth)[-1]
    return _make_estimate("admissible_subtree", flags, predicted, seed)


def estimate_bounded_tier(system: RecursiveTreeSystem, m: int, level_n: int,
                          cutoff_depth: int, trials: int, seed: int = 0,
                          budget: int = DEFAULT_BUDGET) -> EventEstimate:
    """Estimate the two-phase event behind the smallest-fixed-point picture.

    A vertex at depth >= level_n must continue admissibly using only
    vertices with threshold <= m; above that depth the plain admissibility
    rule applies. The prediction composes level_n applications of Psi onto
    the truncated map's iterate from 1.
    """
    if m < 1:
        raise ValidationError(f"m must be >= 1, got {m}")
    if not 0 <= level_n <= cutoff_depth:
        raise ValidationError(f"need 0 <= level_n <= cutoff_depth, got {level_n}, {cutoff_depth}")
    support_h = [ell for ell in set(system.chi.support) | {0}]
    if not system.h.increasing_on(support_h):
        raise ValidationError("bounded-tier estimation requires h increasing on the support")
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    support, cum = _sampling_tables(system.chi)
    harr = _threshold_array(system)
    flags = _event_kernel(cum, support, harr, m, level_n, cutoff_depth,
                          trials, U64(seed & (2**64 - 1)), budget)
    truncated = m_truncation(system, m)
    y = iterate_psi(truncated, 1.0, cutoff_depth - level_n)[-1]
    predicted = iterate_psi(system, y, level_n)[-1]
    return _make_estimate(f"bounded_tier(m={m}, level_n={level_n})", flags, predicted, seed)


def min_level_sizes(system: RecursiveTreeSystem, cutoff_depth: int, trials: int,
                    seed: int = 0, budget: int = DEFAULT_BUDGET) -> dict:
    """Distribution of the minimal level-cutoff vertex count of admissible subtrees.

    Conditioned on an admissible subtree existing; trials without one (or
    over budget) are excluded and counted. Ties among equal child values do
    not affect the minimum, only the witness.
    """
    if cutoff_depth < 0 or trials < 1:
        raise ValidationError("need cutoff_depth >= 0 and trials >= 1")
    support, cum = _sampling_tables(system.chi)
    harr = _threshold_array(system)
    vals = _min_level_kernel(cum, support, harr, cutoff_depth, trials,
                             U64(seed & (2**64 - 1)), budget, int(support.max()))
    over = int((vals == -1).sum())
    none = int((vals == -3).sum())
    finite = vals[vals >= 0]
    out = {"trials": trials, "excluded": over, "no_subtree": none,
           "n_conditioned": int(len(finite))}
    if len(finite):
        out["mean"] = float(finite.mean())
        out["p50"] = float(np.percentile(finite, 50))
        out["p90"] = float(np.percentile(finite, 90))
    else:
        out["mean"] = out["p50"] = out["p90"] = math.nan
    return out


# ---------------------------------------------------------------------------
# explicit tree sampling (reference implementation and DP cross-checks)

@dataclass
class SampledTree:
    """A depth-truncated tree in breadth-first order.

    ``child_count[v]`` is the sampled number of children (0 at the cutoff,
    where true counts are left unsampled), ``child_start[v]`` the index of
    the first child, ``depth[v]`` the depth.
    """

    child_count: np.ndarray
    child_start: np.ndarray
    depth: np.ndarray
    cutoff_depth: int

    def __len__(self) -> int:
        return len(self.child_count)

    def children(self, v: int):
        return range(self.child_start[v], self.child_start[v] + self.child_count[v])


def sample_tree(chi: ChildDistribution, cutoff_depth: int, seed=0,
                budget: int = DEFAULT_BUDGET) -> SampledTree:
    """Sample a tree level by level down to cutoff_depth."""
    if cutoff_depth < 0:
        raise ValidationError("cutoff_depth must be >= 0")
    rng = np.random.default_rng(seed)
    support = np.array(sorted(chi.weights), dtype=np.int64)
    probs = np.array([float(chi.weights[ell]) for ell in support])
    probs = probs / probs.sum()
    counts = []
    n_d = 1
    total = 1
    for _ in range(cutoff_depth):
        c = rng.choice(support, size=n_d, p=probs)
        counts.append(c.astype(np.int64))
        n_d = int(c.sum())
        total += n_d
        if total > budget:
            raise BudgetExceeded(f"tree exceeded the vertex budget {budget}")
        if n_d == 0:
            break
    if n_d > 0:
        counts.append(np.zeros(n_d, dtype=np.int64))  # cutoff level, unsampled
    if not counts:
        counts = [np.zeros(1, dtype=np.int64)]
    child_count = np.concatenate(counts)
    depth = np.concatenate([np.full(len(c), d, dtype=np.int64) for d, c in enumerate(counts)])
    child_start = np.zeros(len(child_count), dtype=np.int64)
    child_start[1:] = np.cumsum(child_count)[:-1]
    child_start += 1
    return SampledTree(child_count, child_start, depth, cutoff_depth)


def has_admissible(tree: SampledTree, h) -> bool:
    """Bottom-up DP for the admissible-subtree event on a sampled tree.

    Cutoff-depth vertices are good; an internal vertex is good iff at least
    h(child count) of its children are good.
    """
    n = len(tree)
    good = np.zeros(n, dtype=bool)
    for v in range(n - 1, -1, -1):
        if tree.depth[v] == tree.cutoff_depth:
            good[v] = True
            continue
        k = h(int(tree.child_count[v]))
        good[v] = int(good[list(tree.children(v))].sum()) >= k
    return bool(good[0])


def min_level_size_tree(tree: SampledTree, h):
    """DP values of the minimal level-cutoff size, plus a witness subtree.

    Returns (value, vertex_ids) where value is None when no admissible
    subtree exists. The witness takes exactly h(n_T(v)) children at every
    internal vertex, the ones with the smallest values.
    """
    n = len(tree)
    INF = float("inf")
    val = np.full(n, INF)
    for v in range(n - 1, -1, -1):
        if tree.depth[v] == tree.cutoff_depth:
            val[v] = 1.0
            continue
        k = h(int(tree.child_count[v]))
        ch = list(tree.children(v))
        finite = sorted(val[c] for c in ch)
        if len(finite) >= k and all(math.isfinite(x) for x in finite[:k]):
            val[v] = sum(finite[:k])
    if not math.isfinite(val[0]):
        return None, []
    witness = [0]
    frontier = [0]
    while frontier:
        nxt = []
        for v in frontier:
            if tree.depth[v] == tree.cutoff_depth:
                continue
            k = h(int(tree.child_count[v]))
            ch = sorted(tree.children(v), key=lambda c: val[c])[:k]
            nxt.extend(ch)
        witness.extend(nxt)
        frontier = nxt
    return float(val[0]), witness


# ---------------------------------------------------------------------------
# distributional recursions (population dynamics)

RECURSION_KINDS = ("minplus", "binary_ternary", "conditioned_emergence")


def recursion_growth(kind: str, depth: int, trials: int, seed: int = 0, t=None) -> dict:
    """Sample one of the level-size distributional recursions.

    kinds: "minplus" (min or sum with probability 1/2 each),
    "binary_ternary(t)" (min with probability 1/2+t, triple sum otherwise),
    "conditioned_emergence(t)" (the four-case recursion of the emergence
    family conditioned on the admissible-subtree event, with case
    probabilities driven by its smallest nonzero fixed point).

    Uses a fixed population resampled at every step; returns per-step means
    with standard errors and the final population.
    """
    if kind not in RECURSION_KINDS:
        raise ValidationError(f"unknown recursion kind {kind!r}; choose from {RECURSION_KINDS}")
    if depth < 0 or trials < 2:
        raise ValidationError("need depth >= 0 and trials >= 2")
    rng = np.random.default_rng(seed)
    y = np.ones(trials)
    means = [1.0]
    stderrs = [0.0]
    p50 = [1.0]
    p90 = [1.0]
    if kind == "conditioned_emergence":
        if t is None:
            raise ValidationError("conditioned_emergence needs the parameter t")
        from .fixedpoint import find_fixed_points
        from .gallery import emergence_family
        system = emergence_family().system_at(float(t))
        report = find_fixed_points(system)
        nz = report.nonzero
        if not nz:
            raise NumericError(f"no nonzero fixed point at t={t}")
        x0 = nz[0].x
        chi3 = 1.0 / 6.0 + float(t)
        probs = np.array([1.0 - x0,                 # keep one good child
                          x0 / 2.0,                 # min of two
                          3.0 * chi3 * x0 * (1.0 - x0),  # sum of two
                          chi3 * x0 * x0])          # best pair of three
        probs = probs / probs.sum()
        cases = np.cumsum(probs)
    for _ in range(depth):
        a = y[rng.integers(0, trials, size=trials)]
        b = y[rng.integers(0, trials, size=trials)]
        u = rng.random(trials)
        if kind == "minplus":
            y = np.where(u < 0.5, np.minimum(a, b), a + b)
        elif kind == "binary_ternary":
            if t is None:
                raise ValidationError("binary_ternary needs the parameter t")
            c = y[rng.integers(0, trials, size=trials)]
            y = np.where(u < 0.5 + float(t), np.minimum(a, b), a + b + c)
        else:
            c = y[rng.integers(0, trials, size=trials)]
            y = np.where(u < cases[0], a,
                         np.where(u < cases[1], np.minimum(a, b),
                                  np.where(u < cases[2], a + b,
                                           np.minimum(np.minimum(a + b, a + c), b + c))))
        means.append(float(y.mean()))
        stderrs.append(float(y.std(ddof=1) / math.sqrt(trials)))
        p50.append(float(np.percentile(y, 50)))
        p90.append(float(np.percentile(y, 90)))
    return {"kind": kind, "t": t, "depth": depth, "trials": trials,
            "means": means, "stderrs": stderrs, "p50": p50, "p90": p90,
            "final_sample": y}
