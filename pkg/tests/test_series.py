from __future__ import annotations

import pytest

from nctorus import series as fs
from nctorus.randomgen import random_element, random_sl2
from nctorus.series import FormalSeries, IdentityViolation, residual, series_inv, series_mul
from nctorus.torus import Element, TorusParams, TraceError, contragredient, delta, modular_tau, sl2_act, star, trace

from .oracles import scalar_exp_series

N = 5
U = Element.monomial


def random_pair_element(rng, trace_zero=True, size=2, l1=1.5):
    return random_element(rng, size, 2, l1, trace_zero, paired=True)


def series_gap(x: FormalSeries, terms: list[Element]) -> float:
    return residual(x, FormalSeries(terms, x.order))


def left_ode(x: FormalSeries, a: Element, P: TorusParams) -> float:
    return residual(x.delta(P), series_mul(x, FormalSeries.constant(delta(a, P), x.order), P).shift())


def right_ode(x: FormalSeries, a: Element, P: TorusParams) -> float:
    return residual(x.delta(P), series_mul(FormalSeries.constant(delta(a, P), x.order), x, P).shift())


class TestSeriesArithmetic:
    def test_unit(self, params):
        a = Element({(1, 0): 2.0})
        x = FormalSeries([Element.one(), a], N)
        assert residual(series_mul(x, FormalSeries.one(N), params), x) == 0

    def test_geometric_inverse(self, params):
        a = Element({(1, 0): 0.5, (0, -1): 1j})
        inv = series_inv(FormalSeries([Element.one(), a], N), params)
        expected = [Element.one()]
        for k in range(1, N + 1):
            expected.append(fs.mul(expected[-1], -a, params))
        assert series_gap(inv, expected) < 1e-12

    def test_inverse_round_trip(self, params, rng):
        x = fs.E_l(random_pair_element(rng), params, N)
        assert residual(series_mul(x, series_inv(x, params), params), FormalSeries.one(N)) < 1e-10

    def test_inverse_needs_scalar_head(self, params):
        with pytest.raises(ValueError):
            series_inv(FormalSeries([U((1, 0))], 2), params)

    def test_order_mismatch(self):
        with pytest.raises(ValueError):
            FormalSeries.one(2) + FormalSeries.one(3)

    def test_json_round_trip(self, params, rng):
        x = fs.E_l(random_pair_element(rng), params, 3)
        assert residual(FormalSeries.from_json(x.to_json()), x) == 0

    def test_scalar_series_helpers(self):
        xs = [0j, 0.3 + 0.1j, -0.2j, 0.05, 0.0, 0.01j]
        e = fs.scalar_exp(xs, N)
        back = fs.scalar_log(e, N)
        assert max(abs(p - q) for p, q in zip(back, xs)) < 1e-14
        one = fs.scalar_mul(e, fs.scalar_inv(e, N), N)
        assert max(abs(c - (k == 0)) for k, c in enumerate(one)) < 1e-14


class TestLeftExponential:
    def test_single_mode_is_exponential(self, params):
        a = U((2, -1), 0.7 - 0.4j)
        assert series_gap(fs.E_l_recursive(a, params, N), scalar_exp_series(a, params, N)) < 1e-12
        assert series_gap(fs.E_l_divisor(a, params, N), scalar_exp_series(a, params, N)) < 1e-12

    def test_scalar_gives_one(self, params):
        assert residual(fs.E_l_recursive(Element.scalar(2.5), params, N), FormalSeries.one(N)) == 0

    def test_recursive_matches_divisor(self, params, rng):
        for _ in range(10):
            a = random_pair_element(rng)
            assert residual(fs.E_l_recursive(a, params, N), fs.E_l_divisor(a, params, N)) < 1e-9

    def test_defining_properties(self, params, rng):
        for _ in range(5):
            a = random_pair_element(rng, trace_zero=False)
            x = fs.E_l_recursive(a, params, N)
            assert left_ode(x, a, params) < 1e-9
            assert x.trace()[0] == 1
            assert max(abs(c) for c in x.trace()[1:]) < 1e-10

    def test_zero_sum_divisors_have_zero_coefficient(self, params):
        a = Element({(1, 2): 0.8, (-1, -2): 0.3j})
        _, table = fs.E_l_divisor_table(a, params, 4)
        zero_sum = [t for t in table if t.divisor.total == (0, 0)]
        assert zero_sum and all(t.coefficient == 0 for t in zero_sum)

    def test_divisor_path_rejects_trace(self, params):
        with pytest.raises(TraceError):
            fs.E_l_divisor(Element({(0, 0): 1.0, (1, 0): 1.0}), params, 3)

    def test_uniqueness_detects_perturbation(self, params, rng):
        a = random_pair_element(rng)
        x = fs.E_l(a, params, N)
        bumped = list(x.coeffs)
        bumped[2] = bumped[2] + U((1, 1), 1e-3)
        assert left_ode(FormalSeries(bumped), a, params) > 1e-4
        shifted = list(x.coeffs)
        shifted[2] = shifted[2] + 1e-3
        assert abs(FormalSeries(shifted).trace()[2]) > 1e-4


class TestRightExponential:
    def test_ode_and_trace(self, params, rng):
        a = random_pair_element(rng)
        x = fs.E_r(a, params, N)
        assert right_ode(x, a, params) < 1e-9
        assert max(abs(c - (k == 0)) for k, c in enumerate(x.trace())) < 1e-10

    def test_star_relation(self, params, rng):
        a = random_pair_element(rng)
        lhs = fs.E_r(a, params, N).star()
        rhs = fs.E_l_divisor(star(a), params.conjugate(), N)
        assert residual(lhs, rhs) < 1e-10

    def test_single_mode(self, params):
        a = U((0, 3), 1.1j)
        assert series_gap(fs.E_r(a, params, N), scalar_exp_series(a, params, N)) < 1e-12


class TestScalarSeries:
    def test_single_mode_is_one(self, params):
        s = fs.s_series(U((1, -1), 0.9), params, N)
        assert max(abs(c - (k == 0)) for k, c in enumerate(s)) < 1e-12

    def test_nontrivial_example(self, params):
        a = Element({(1, 0): 1.0, (-1, 0): 0.5j, (0, 1): 0.8 + 0.3j, (1, -1): 0.4})
        s = fs.s_series(a, params, 3)
        # t^2 coefficient is -tr(a^2) = -2 a_v a_{-v}
        assert s[2] == pytest.approx(-2 * 1.0 * 0.5j, abs=1e-12)
        assert abs(s[3]) > 0.1

    def test_conjugation(self, params, rng):
        for _ in range(5):
            a = random_pair_element(rng)
            s = fs.s_series(a, params, N)
            s_bar = fs.s_series(-star(a), params.conjugate(), N)
            assert max(abs(p.conjugate() - q) for p, q in zip(s, s_bar)) < 1e-10


class TestNormalizedExponential:
    def test_commutative_collapse(self, rng):
        P0 = TorusParams(0.0, -0.3 - 1.1j)
        for _ in range(3):
            a = random_pair_element(rng, trace_zero=False, size=3)
            assert series_gap(fs.Exp_l(a, P0, N), scalar_exp_series(a, P0, N)) < 1e-10
            assert series_gap(fs.Exp_r(a, P0, N), scalar_exp_series(a, P0, N)) < 1e-10

    def test_rank_one_collapse(self, params):
        a = Element({(0, 0): 0.2, (1, 2): 0.7j, (-2, -4): 0.4, (3, 6): -0.3})
        assert series_gap(fs.Exp_l(a, params, N), scalar_exp_series(a, params, N)) < 1e-10

    def test_scalar_shift(self, params, rng):
        a = random_pair_element(rng)
        z = 0.4 - 0.9j
        ez = fs.scalar_exp([0j, z] + [0j] * (N - 1), N)
        assert residual(fs.Exp_l(a + z, params, N), fs.Exp_l(a, params, N).scalar_times(ez)) < 1e-9

    def test_trace_factorization(self, params, rng):
        a = random_pair_element(rng)
        X = fs.Exp_l(a, params, N)
        assert residual(X, fs.E_l_divisor(a, params, N).scalar_times(X.trace())) < 1e-9

    def test_ode(self, params, rng):
        a = random_pair_element(rng, trace_zero=False)
        assert left_ode(fs.Exp_l(a, params, N), a, params) < 1e-9
        assert right_ode(fs.Exp_r(a, params, N), a, params) < 1e-9

    def test_inverse(self, params, rng):
        a = random_pair_element(rng, trace_zero=False)
        prod = series_mul(fs.Exp_l(a, params, N), fs.Exp_r(-a, params, N), params)
        assert residual(prod, FormalSeries.one(N)) < 1e-9

    def test_right_definitions_agree(self, params, rng):
        a = random_pair_element(rng, trace_zero=False)
        series, _ = fs.Exp_r_divisor(a, params, N)
        assert residual(series, fs.Exp_r_star(a, params, N)) < 1e-10

    def test_trace_product(self, params, rng):
        a = random_pair_element(rng)
        lhs = fs.scalar_mul(fs.Exp_l(a, params, N).trace(), fs.Exp_r(-a, params, N).trace(), N)
        rhs = fs.scalar_inv(fs.s_series(a, params, N), N)
        assert max(abs(p - q) for p, q in zip(lhs, rhs)) < 1e-10

    def test_injective(self, params, rng):
        for _ in range(5):
            a, b = random_pair_element(rng), random_pair_element(rng)
            gap = residual(fs.Exp_l(a, params, N), fs.Exp_l(b, params, N))
            assert gap >= (a - b).l1() * (1 - 1e-12)

    def test_first_order_recovers_argument(self, params, rng):
        # the t^1 coefficient of Exp_l(a) is a, so equal series force equal arguments
        a = random_pair_element(rng, trace_zero=False)
        assert (fs.Exp_l(a, params, N)[1] - a).l1() < 1e-12


class TestSL2:
    def test_equivariance(self, params, rng):
        for _ in range(3):
            a = random_pair_element(rng)
            g = random_sl2(rng)
            moved = params.with_tau(modular_tau(contragredient(g), params.tau))
            ga = sl2_act(g, a)
            for name in ("E_l_divisor", "E_r", "Exp_l", "Exp_r"):
                f = getattr(fs, name)
                assert residual(f(ga, moved, N), f(a, params, N).sl2(g)) < 1e-9, name
            s1, s2 = fs.s_series(ga, moved, N), fs.s_series(a, params, N)
            assert max(abs(p - q) for p, q in zip(s1, s2)) < 1e-9


class TestProductLaw:
    def test_b_zero(self, params, rng):
        a = random_pair_element(rng, trace_zero=False)
        law = fs.phi_product_law(a, Element.zero(), params, 4)
        assert residual(law.phi, FormalSeries.constant(a, 4)) < 1e-10

    def test_a_zero(self, params, rng):
        b = random_pair_element(rng)
        law = fs.phi_product_law(Element.zero(), b, params, 4)
        assert law.phi.max_l1() < 1e-12

    def test_commuting_single_modes(self):
        P0 = TorusParams(0.0, -0.3 - 1.1j)
        a, b = U((1, 2), 0.6), U((1, 2), -0.3j)
        law = fs.phi_product_law(a, b, P0, 4)
        assert residual(law.phi, FormalSeries.constant(a, 4)) < 1e-10

    def test_random_product(self, params, rng):
        a = random_pair_element(rng, l1=0.8)
        b = random_pair_element(rng, l1=0.8)
        law = fs.phi_product_law(a, b, params, 4)
        assert law.verification_residual < 1e-9
        lhs = series_mul(fs.Exp_l(a, params, 4), fs.Exp_l(b, params, 4), params)
        rhs = fs.Exp_l(law.phi + FormalSeries.constant(b, 4), params, 4)
        assert residual(lhs, rhs) < 1e-9
