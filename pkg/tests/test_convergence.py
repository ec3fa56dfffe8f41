from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given

from nctorus.convergence import (
    CertificateUnavailable,
    TermLimitExceeded,
    e_l_converge,
    find_halfplane,
    halfplane_converge,
    halfplane_gap,
    lattice_gap,
    neumann_invert,
    prune_l1,
)
from nctorus.logarithmic import log_derivative
from nctorus.randomgen import random_element
from nctorus.series import E_l_recursive
from nctorus.torus import Element, TorusParams, TraceError, delta, mul

from .conftest import GOLDEN, taus

U = Element.monomial


def brute_gap(tau: complex, R: int) -> float:
    return min(abs(m * tau + n) for m in range(-R, R + 1) for n in range(-R, R + 1) if (m, n) != (0, 0))


def exp_monomial(v, c: complex, terms: int = 60) -> Element:
    return Element({(k * v[0], k * v[1]): c**k / math.factorial(k) for k in range(terms)})


class TestLatticeGap:
    def test_square(self):
        assert lattice_gap(-1j) == 1.0

    def test_tall(self):
        assert lattice_gap(-2j) == 1.0

    def test_skew_two_radii(self):
        tau = -0.5 - 0.5j
        assert lattice_gap(tau) == pytest.approx(brute_gap(tau, 6))
        assert brute_gap(tau, 6) == pytest.approx(brute_gap(tau, 12))

    @given(taus)
    def test_matches_brute_force(self, tau):
        assert lattice_gap(tau) == pytest.approx(brute_gap(tau, 12), rel=1e-14)

    def test_rejects_real(self):
        with pytest.raises(ValueError):
            lattice_gap(0.3 + 0j)


class TestELConverge:
    def test_zero(self, params):
        x, cert = e_l_converge(Element.zero(), params)
        assert x == Element.one()
        assert cert.terms_used == 0 and cert.invertible

    def test_single_mode_exponential(self):
        P = TorusParams(GOLDEN, -1j)
        c = 0.3 - 0.2j
        x, cert = e_l_converge(U((0, 1), c), P, tol=1e-12)
        assert cert.ratio == pytest.approx(abs(c))
        assert (x - exp_monomial((0, 1), c)).l2() < 1e-12

    def test_random_small(self, params, rng):
        tol = 1e-10
        for _ in range(10):
            a = random_element(rng, 2, 2, 0.05)
            x, cert = e_l_converge(a, params, tol)
            assert cert.residual < 10 * tol
            assert cert.tail_bound_l2 == pytest.approx(cert.ratio ** (cert.terms_used + 1) / (1 - cert.ratio))
            assert cert.tail_bound_l2 < tol
            assert (delta(x, params) - mul(x, delta(a, params), params)).l2() < 10 * tol

    def test_invertible_flag(self, params):
        d = lattice_gap(params.tau)
        for target, expected in ((0.4, True), (0.6, False)):
            a = U((1, 0))
            a = a * (target * 2 * math.pi * d / delta(a, params).l1())
            _, cert = e_l_converge(a, params, 1e-8)
            assert cert.ratio == pytest.approx(target)
            assert cert.invertible is expected

    def test_invertibility_implies_near_one(self, params, rng):
        a = random_element(rng, 3, 2, 0.1)
        x, cert = e_l_converge(a, params)
        assert cert.invertible
        assert (x - 1).l1() <= cert.ratio / (1 - cert.ratio) + 1e-12

    def test_rejects_large(self, params):
        with pytest.raises(CertificateUnavailable):
            e_l_converge(Element({(1, 0): 3.0, (-1, 0): 2.0}), params)

    def test_rejects_trace(self, params):
        with pytest.raises(TraceError):
            e_l_converge(Element({(0, 0): 1.0, (1, 0): 0.01}), params)

    def test_term_cap(self, params):
        with pytest.raises(TermLimitExceeded):
            e_l_converge(U((1, 0), 0.1), params, tol=1e-14, max_terms=2)

    def test_same_recursion_as_formal_series(self, params, rng):
        a = random_element(rng, 3, 2, 0.1)
        x, cert = e_l_converge(a, params)
        formal = E_l_recursive(a, params, cert.terms_used)
        total = Element.zero()
        for c in formal.coeffs:
            total = total + c
        assert (x - total).l2() < 1e-15

    def test_monotone_refinement(self, params, rng):
        a = random_element(rng, 3, 2, 0.2)
        coarse, _ = e_l_converge(a, params, 1e-6)
        fine, _ = e_l_converge(a, params, 5e-7)
        assert (coarse - fine).l2() < 1e-6

    def test_logarithmic_round_trip(self, params, rng):
        tol = 1e-10
        a = random_element(rng, 3, 2, 0.05)
        x, cert = e_l_converge(a, params, tol)
        assert cert.invertible
        assert (log_derivative(x, params, tol) - delta(a, params)).l2() < 10 * tol


class TestNeumann:
    def test_one(self, params):
        assert neumann_invert(Element.one(), params) == Element.one()

    def test_geometric(self, params):
        c = 0.4 + 0.3j
        inv = neumann_invert(Element({(0, 0): 1.0, (2, 1): c}), params, 1e-13)
        expected = Element({(2 * k, k): (-c) ** k for k in range(80)})
        assert (inv - expected).l1() < 1e-12

    def test_random_near_one(self, params, rng):
        tol = 1e-10
        for _ in range(5):
            x = random_element(rng, 4, 2, 0.6, trace_zero=False) + 1
            if (x - 1).l1() >= 1:
                continue
            inv = neumann_invert(x, params, tol)
            assert (mul(x, inv, params) - 1).l1() < 10 * tol

    def test_rejects_far_from_one(self, params):
        with pytest.raises(CertificateUnavailable):
            neumann_invert(Element({(1, 0): 1.0}), params)

    def test_pruning_budget(self):
        x = Element({(0, 0): 1.0, (1, 0): 1e-9, (2, 0): 2e-9, (3, 0): 1e-3})
        pruned, dropped = prune_l1(x, 2.5e-9)
        assert dropped == pytest.approx(1e-9)
        assert pruned.support() == {(0, 0), (2, 0), (3, 0)}


class TestHalfPlane:
    def test_find(self):
        assert find_halfplane([(1, 0), (0, 1), (-1, -1)]) is None
        assert find_halfplane([(1, 0), (-1, 0)]) is None
        for pts in ([(1, 0), (1, 1), (2, 1)], [(0, 1), (-3, 1), (5, 2)], [(2, -1)]):
            h = find_halfplane(pts)
            assert h is not None and all(h[0] * v[0] + h[1] * v[1] > 0 for v in pts)

    def test_gap_matches_brute_force(self):
        tau = -0.3 - 1.1j
        h = (Fraction(1), Fraction(1, 2))
        for level in (Fraction(1, 2), Fraction(3), Fraction(7)):
            brute = min(
                abs(m * tau + n)
                for m in range(-40, 41)
                for n in range(-40, 41)
                if h[0] * m + h[1] * n >= level
            )
            assert halfplane_gap(tau, h, level) == pytest.approx(brute)

    def test_large_single_mode(self):
        P = TorusParams(GOLDEN, -1j)
        c = 6.0 + 2.0j
        x, info = halfplane_converge(U((1, 0), c), (1, 0), P, 1e-10)
        expected = exp_monomial((1, 0), c, 120)
        assert (x - expected).l2() < 1e-10 * expected.l2()
        assert info["relative_residual"] < 1e-10

    def test_three_point_support(self, params):
        a = Element({(1, 0): 2.0, (1, 1): -1.5j, (2, 1): 1.0 + 1.0j})
        with pytest.raises(CertificateUnavailable):
            e_l_converge(a, params)
        x, info = halfplane_converge(a, (1, 0), params, 1e-10)
        assert info["relative_residual"] < 1e-9
        assert info["tail_bound_l2"] < 1e-10

    def test_rejects_boundary(self, params):
        with pytest.raises(CertificateUnavailable):
            halfplane_converge(Element({(1, 0): 1.0, (0, 1): 1.0}), (1, 0), params)
