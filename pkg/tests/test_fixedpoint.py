import math
import random
from fractions import Fraction

import numpy as np
import pytest

from rts_lab.admap import concordance, deriv_at, psi, psi_grid
from rts_lab.core import (
    NumericError,
    RecursiveTreeSystem,
    ThresholdFunction,
    ValidationError,
    m_truncation,
    make_system,
    poisson_truncated,
)
from rts_lab.fixedpoint import (
    find_fixed_points,
    find_tangency,
    full_report,
    interpretable,
    is_critical,
    iterate_psi,
)
from rts_lab.gallery import (
    binary_ternary_family,
    double_emergence_family,
    emergence_family,
    first_order_family,
    harmonic_gap_system,
    mixed_tier_system,
    tier_merge_system,
)
from .helpers import random_crit_mixture, random_supercordant

F = Fraction
DELTA1 = make_system({1: F(1)}, {0: 1, 1: 1})

CORPUS = [
    emergence_family().system_at(0),
    emergence_family().system_at(F(1, 10)),
    first_order_family().system_at(0),
    first_order_family().system_at(F(1, 20)),
    double_emergence_family().system_at(0),
    double_emergence_family().system_at(F(1, 25)),
    tier_merge_system(),
    mixed_tier_system(),
    binary_ternary_family().system_at(F(1, 10)),
]


def poisson_system(lam: float, threshold: int) -> RecursiveTreeSystem:
    chi = poisson_truncated(lam, 1e-12)
    h = ThresholdFunction({ell: threshold for ell in set(chi.weights) | {0}})
    return RecursiveTreeSystem(chi, h)


class TestFindFixedPoints:
    def test_quartic_example(self):
        report = find_fixed_points(tier_merge_system())
        xs = [p.x for p in report.points]
        assert xs[0] == 0.0
        assert len(xs) == 2
        assert xs[1] == pytest.approx((10 - math.sqrt(22)) / 6, abs=1e-10)
        assert report.points[1].multiplicity == 1

    def test_emergence_closed_form(self):
        # the nonzero fixed point of the emergence family is 9t/(1+6t)
        for t in (F(1, 10), F(1, 5), F(3, 10)):
            report = find_fixed_points(emergence_family().system_at(t))
            want = float(9 * t / (1 + 6 * t))
            assert report.nonzero[0].x == pytest.approx(want, abs=1e-10)

    def test_two_nonzero_roots_at_criticality(self):
        report = find_fixed_points(first_order_family().system_at(0))
        xs = [p.x for p in report.nonzero]
        assert len(xs) == 2
        assert xs[0] == pytest.approx(0.73, abs=0.01)
        assert xs[1] == pytest.approx(0.93, abs=0.01)

    def test_zero_always_present_with_multiplicity(self):
        crit_report = find_fixed_points(first_order_family().system_at(0))
        assert crit_report.points[0].x == 0.0
        assert crit_report.points[0].multiplicity == 2  # Psi'(0) = 1
        off_report = find_fixed_points(first_order_family().system_at(F(1, 20)))
        assert off_report.points[0].multiplicity == 1

    def test_continuum_for_identity(self):
        assert find_fixed_points(DELTA1).continuum

    def test_residuals_certified(self):
        for sys0 in CORPUS:
            report = find_fixed_points(sys0)
            for p in report.points:
                assert abs(psi(sys0, p.x) - p.x) <= 1e-10

    def test_grid_sign_changes_are_covered(self):
        xs = np.linspace(0.0, 1.0, 10_001)
        for sys0 in CORPUS:
            report = find_fixed_points(sys0)
            roots = [p.x for p in report.points]
            diff = psi_grid(sys0, xs) - xs
            signs = np.sign(diff)
            for i in np.nonzero(signs[:-1] * signs[1:] < 0)[0]:
                a, b = xs[i], xs[i + 1]
                assert any(a - 1e-9 <= r <= b + 1e-9 for r in roots), (sys0, a, b)

    def test_points_strictly_increasing(self):
        for sys0 in CORPUS:
            xs = [p.x for p in find_fixed_points(sys0).points]
            assert all(a < b for a, b in zip(xs, xs[1:]))

    def test_classical_survival_probability(self):
        sys0 = poisson_system(2.0, 1)
        report = find_fixed_points(sys0)
        assert len(report.nonzero) == 1
        # bisection oracle on the closed form x = 1 - exp(-2x)
        f = lambda x: 1 - math.exp(-2 * x) - x
        a, b = 0.5, 0.99
        for _ in range(60):
            mid = (a + b) / 2
            if f(mid) > 0:
                a = mid
            else:
                b = mid
        assert abs(a - 0.79681) < 1e-4  # sanity on the oracle itself
        assert report.nonzero[0].x == pytest.approx(a, abs=1e-4)

    def test_double_emergence_pair(self):
        report = find_fixed_points(double_emergence_family().system_at(F(1, 25)))
        nz = report.nonzero
        assert len(nz) >= 2
        assert nz[0].interpretable is False
        assert nz[1].interpretable is True


class TestInterpretable:
    def test_threshold_family_flags(self):
        sys0 = first_order_family().system_at(F(1, 20))
        nz = find_fixed_points(sys0).nonzero
        assert len(nz) == 3
        assert interpretable(sys0, nz[0].x) is True
        assert interpretable(sys0, nz[1].x) is False
        assert interpretable(sys0, nz[2].x) is True

    def test_largest_is_interpretable_across_corpus(self):
        for sys0 in CORPUS:
            report = find_fixed_points(sys0)
            if report.continuum or not report.nonzero:
                continue
            assert report.points[-1].interpretable in (True, "boundary")

    def test_endpoints_always_interpretable(self):
        sys0 = binary_ternary_family().system_at(F(1, 10))
        assert interpretable(sys0, 1.0) is True
        assert interpretable(sys0, 0.0) is True

    def test_not_a_fixed_point(self):
        with pytest.raises(ValidationError):
            interpretable(tier_merge_system(), 0.5)


class TestIsCritical:
    def test_critical_members(self):
        for sys0 in (emergence_family().system_at(0),
                     first_order_family().system_at(0),
                     double_emergence_family().system_at(0)):
            flag, (d1, d2) = is_critical(sys0)
            assert flag
            assert d1 == 1 and d2 <= 0

    def test_supercritical_member(self):
        flag, (d1, d2) = is_critical(first_order_family().system_at(F(1, 20)))
        assert not flag
        assert d1 == F(11, 10)

    def test_witness_values(self):
        _, witness = is_critical(first_order_family().system_at(0))
        assert witness == (1, -1)

    def test_single_support_point_refused(self):
        with pytest.raises(ValidationError):
            is_critical(DELTA1)

    def test_float_mode_tolerance(self):
        sys0 = emergence_family().system_at(0.0)
        flag, _ = is_critical(sys0)
        assert flag


class TestIteratePsi:
    def test_fixed_point_is_constant(self):
        sys0 = tier_merge_system()
        x0 = find_fixed_points(sys0).nonzero[0].x
        orbit = iterate_psi(sys0, x0, 10)
        assert all(abs(v - x0) < 1e-9 for v in orbit)

    def test_from_one_decreases_to_largest(self):
        sys0 = first_order_family().system_at(F(1, 100))
        orbit = iterate_psi(sys0, 1.0, 300)
        assert all(a >= b - 1e-15 for a, b in zip(orbit, orbit[1:]))
        largest = find_fixed_points(sys0).points[-1].x
        assert orbit[-1] == pytest.approx(largest, abs=1e-6)

    def test_from_truncation_root_increases_to_smallest(self):
        sys0 = first_order_family().system_at(F(1, 20))
        x_bar = find_fixed_points(m_truncation(sys0, 1)).nonzero[0].x
        orbit = iterate_psi(sys0, x_bar, 400)
        assert all(a <= b + 1e-15 for a, b in zip(orbit, orbit[1:]))
        smallest = find_fixed_points(sys0).nonzero[0].x
        assert orbit[-1] == pytest.approx(smallest, abs=1e-6)

    def test_length(self):
        assert len(iterate_psi(tier_merge_system(), 0.3, 7)) == 8


class TestSupercordantShape:
    def test_psi_above_identity_before_smallest_root(self):
        for sys0 in (tier_merge_system(), first_order_family().system_at(F(1, 20))):
            assert concordance(sys0).kind == "supercordant"
            x0 = find_fixed_points(sys0).nonzero[0].x
            xs = np.linspace(1e-4, x0 * 0.999, 300)
            assert np.all(psi_grid(sys0, xs) > xs)

    def test_truncation_has_unique_nonzero_root(self):
        rng = random.Random(101)
        for _ in range(25):
            sys0 = random_supercordant(rng)
            cls = concordance(sys0)
            assert cls.kind == "supercordant"
            tr = m_truncation(sys0, cls.m)
            assert len(find_fixed_points(tr).nonzero) == 1

    def test_critical_mixture_below_identity(self):
        rng = random.Random(59)
        xs = np.linspace(1e-3, 1.0, 500)
        for _ in range(20):
            sys0 = random_crit_mixture(rng)
            assert np.all(psi_grid(sys0, xs) < xs)
            assert find_fixed_points(sys0).nonzero == ()


class TestFindTangency:
    def test_merge_at_one(self):
        finding = find_tangency(binary_ternary_family(), 0.01, 0.3)
        assert finding.kind == "first_order"
        assert finding.t_star == pytest.approx(1 / 6, abs=1e-4)
        assert finding.x_star == pytest.approx(1.0, abs=1e-3)
        assert finding.jump == finding.x_star

    def test_tangency_point_satisfies_both_equations(self):
        finding = find_tangency(binary_ternary_family(), 0.01, 0.3)
        sys_star = binary_ternary_family().system_at(finding.t_star)
        assert abs(psi(sys_star, finding.x_star) - finding.x_star) < 1e-4
        assert abs(deriv_at(sys_star, finding.x_star, 1) - 1.0) < 1e-3

    def test_no_transition_in_range(self):
        with pytest.raises(NumericError):
            find_tangency(binary_ternary_family(), 0.01, 0.05)


class TestFullReport:
    def test_report_keys(self):
        out = full_report(first_order_family().system_at(0))
        for key in ("fixed_points", "concordance", "critical",
                    "criticality_witness", "derivs_at_zero", "residual_bound"):
            assert key in out
        assert out["critical"] is True

    def test_derivative_count(self):
        out = full_report(first_order_family().system_at(0))
        assert len(out["derivs_at_zero"]) == 4  # max threshold is 4

    def test_event_description_for_supercordant(self):
        out = full_report(tier_merge_system())
        assert "admissible subtree" in out["event_description"]
        assert "fixed point" in out["event_description"]

    def test_no_event_description_for_subcordant(self):
        out = full_report(first_order_family().system_at(0))
        assert "event_description" not in out

    def test_identity_reports_continuum(self):
        out = full_report(DELTA1)
        assert out["continuum"] is True

    def test_harmonic_truncation_is_subcritical(self):
        out = full_report(harmonic_gap_system(60))
        assert out["fixed_points"][0]["x"] == 0.0
        assert len(out["fixed_points"]) == 1
