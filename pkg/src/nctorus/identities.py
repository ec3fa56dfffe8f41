"""Catalog of structural identities, evaluated on seeded random inputs.

Each check returns the largest residual it saw; the caller compares it with
a tolerance. Residuals of series identities are per-coefficient l1 norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import coefficients as cf
from . import series as fs
from .convergence import e_l_converge
from .logarithmic import Factored, chi, log_derivative
from .randomgen import random_element, random_sl2, random_zero_sum_tuple
from .series import FormalSeries, residual, series_mul
from .torus import Element, TorusParams, contragredient, delta, modular_tau, mul, sl2_act, star


@dataclass(frozen=True)
class IdentityResult:
    identity: str
    max_residual: float
    tolerance: float
    order: int
    seed: int
    cases: int

    @property
    def passed(self) -> bool:
        return math.isfinite(self.max_residual) and self.max_residual < self.tolerance

    def to_json(self) -> dict:
        return {
            "identity": self.identity,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "order": self.order,
            "seed": self.seed,
            "cases": self.cases,
            "passed": self.passed,
        }


def _const(x: Element, N: int) -> FormalSeries:
    return FormalSeries.constant(x, N)


def left_ode_residual(x: FormalSeries, a: Element, params: TorusParams) -> float:
    """``delta(x) - t x delta(a)``."""
    N = x.order
    return residual(x.delta(params), series_mul(x, _const(delta(a, params), N), params).shift())


def right_ode_residual(x: FormalSeries, a: Element, params: TorusParams) -> float:
    """``delta(x) - t delta(a) x``."""
    N = x.order
    return residual(x.delta(params), series_mul(_const(delta(a, params), N), x, params).shift())


def trace_one_residual(x: FormalSeries) -> float:
    tr = x.trace()
    return max(abs(tr[0] - 1), *(abs(c) for c in tr[1:])) if len(tr) > 1 else abs(tr[0] - 1)


def _scalar_gap(x: list[complex], y: list[complex]) -> float:
    return max(abs(p - q) for p, q in zip(x, y))


def check_sl2(a: Element, g, params: TorusParams, N: int) -> dict[str, float]:
    """All five equivariance laws for one ``(g, a)``; returns the residual of each."""
    gp = contragredient(g)
    moved = params.with_tau(modular_tau(gp, params.tau))
    ga = sl2_act(g, a)
    out = {
        "E_l": residual(fs.E_l_divisor(ga, moved, N), fs.E_l_divisor(a, params, N).sl2(g)),
        "E_r": residual(fs.E_r(ga, moved, N), fs.E_r(a, params, N).sl2(g)),
        "Exp_l": residual(fs.Exp_l(ga, moved, N), fs.Exp_l(a, params, N).sl2(g)),
        "Exp_r": residual(fs.Exp_r(ga, moved, N), fs.Exp_r(a, params, N).sl2(g)),
        "s": _scalar_gap(fs.s_series(ga, moved, N), fs.s_series(a, params, N)),
    }
    return out


@dataclass
class SuiteConfig:
    params: TorusParams
    order: int = 5
    seed: int = 0
    cases: int = 10
    support: int = 3
    box: int = 2
    l1: float = 1.5
    tol: float = 1e-8
    conv_tol: float = 1e-12


def run_suite(cfg: SuiteConfig) -> list[IdentityResult]:
    """Every identity of the catalog, ``cfg.cases`` random inputs each."""
    P, N, seed = cfg.params, cfg.order, cfg.seed
    results: list[IdentityResult] = []

    def record(name: str, fn: Callable[[np.random.Generator], float], tol: float | None = None, cases: int | None = None):
        rng = np.random.default_rng([seed, len(results)])
        n = cfg.cases if cases is None else cases
        worst = 0.0
        for _ in range(n):
            try:
                worst = max(worst, float(fn(rng)))
            except ArithmeticError:
                worst = math.inf
        results.append(IdentityResult(name, worst, cfg.tol if tol is None else tol, N, seed, n))

    def elem(rng, trace_zero=True, l1=None):
        return random_element(rng, cfg.support, cfg.box, cfg.l1 if l1 is None else l1, trace_zero, paired=True)

    record("E_l_recursion_vs_divisor", lambda r: residual(*(lambda a: (fs.E_l_recursive(a, P, N), fs.E_l_divisor(a, P, N)))(elem(r))))
    record("E_l_ode", lambda r: left_ode_residual(*(lambda a: (fs.E_l_recursive(a, P, N), a))(elem(r)), P))
    record("E_l_trace_one", lambda r: trace_one_residual(fs.E_l_recursive(elem(r, trace_zero=False), P, N)))
    record("E_r_ode", lambda r: right_ode_residual(*(lambda a: (fs.E_r(a, P, N), a))(elem(r)), P))
    record("E_r_star", lambda r: (lambda a: residual(fs.E_r(a, P, N).star(), fs.E_l_divisor(star(a), P.conjugate(), N)))(elem(r)))

    # E_l from its defining recursion, so the check also exercises the product
    def product_scalar(rng):
        a = elem(rng)
        x, y = fs.E_l(a, P, N), fs.E_r(-a, P, N)
        xy, yx = series_mul(x, y, P), series_mul(y, x, P)
        return max(max(xy.nonscalar_mass()), max(yx.nonscalar_mass()), residual(xy, yx))

    record("product_scalar", product_scalar)

    def s_conj(rng):
        a = elem(rng)
        s = fs.s_series(a, P, N, tol=math.inf)
        s_bar = fs.s_series(-star(a), P.conjugate(), N, tol=math.inf)
        return _scalar_gap([c.conjugate() for c in s], s_bar)

    record("s_conjugation", s_conj)

    def Exp_inverse_pair(rng):
        a = elem(rng, trace_zero=False)
        return residual(series_mul(fs.Exp_l(a, P, N), fs.Exp_r(-a, P, N, tol=math.inf), P), FormalSeries.one(N))

    record("Exp_inverse_pair", Exp_inverse_pair)
    record("Exp_l_ode", lambda r: left_ode_residual(*(lambda a: (fs.Exp_l(a, P, N), a))(elem(r, trace_zero=False)), P))

    P0 = P.with_theta(0.0)
    record("Exp_l_commutative_theta0", lambda r: (lambda a: residual(fs.Exp_l(a, P0, N), fs.exp_series(a, P0, N)))(elem(r, trace_zero=False)))

    def rank_one(rng):
        v = tuple(int(c) for c in rng.integers(-2, 3, size=2))
        if v == (0, 0):
            v = (1, 1)
        ks = rng.choice([-2, -1, 1, 2], size=2, replace=False)
        c = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        a = Element({(0, 0): c[0], (int(ks[0]) * v[0], int(ks[0]) * v[1]): c[1], (int(ks[1]) * v[0], int(ks[1]) * v[1]): c[2]})
        return residual(fs.Exp_l(a, P, N), fs.exp_series(a, P, N))

    record("Exp_l_commutative_rank1", rank_one)

    def scalar_shift(rng):
        a = elem(rng, trace_zero=False)
        z = complex(*rng.standard_normal(2))
        ez = fs.scalar_exp([0j, z] + [0j] * max(N - 1, 0), N)
        return residual(fs.Exp_l(a + z, P, N), fs.Exp_l(a, P, N).scalar_times(ez))

    record("Exp_l_scalar_shift", scalar_shift)

    def exp_vs_el(rng):
        a = elem(rng)
        X = fs.Exp_l(a, P, N)
        return residual(X, fs.E_l_divisor(a, P, N).scalar_times(X.trace()))

    record("Exp_l_trace_factorization", exp_vs_el)

    def trace_product(rng):
        a = elem(rng)
        lhs = fs.scalar_mul(fs.Exp_l(a, P, N).trace(), fs.Exp_r(-a, P, N, tol=math.inf).trace(), N)
        rhs = fs.scalar_inv(fs.s_series(a, P, N, tol=math.inf), N)
        return _scalar_gap(lhs, rhs)

    record("trace_product", trace_product)

    def weighted_sum(rng, star_=False):
        n = int(rng.integers(2, 6))
        return cf.fncor_check(random_zero_sum_tuple(rng, n), P, star=star_)

    record("weighted_sum_f", weighted_sum)
    record("weighted_sum_f_star", lambda r: weighted_sum(r, True))

    def sl2(rng):
        a = elem(rng)
        return max(check_sl2(a, random_sl2(rng), P, N).values())

    record("sl2_equivariance", sl2)

    def small(rng):
        return random_element(rng, cfg.support, 1, 0.02, True)

    def cocycle(rng):
        x, _ = e_l_converge(small(rng), P, cfg.conv_tol)
        y, _ = e_l_converge(small(rng), P, cfg.conv_tol)
        lhs = log_derivative(mul(x, y, P), P, cfg.conv_tol)
        from .convergence import neumann_invert

        y_inv = neumann_invert(y, P, cfg.conv_tol)
        rhs = mul(mul(y_inv, log_derivative(x, P, cfg.conv_tol), P), y, P) + log_derivative(y, P, cfg.conv_tol)
        return (lhs - rhs).l2()

    record("cocycle", cocycle)

    def chi_quant(rng):
        v = tuple(int(c) for c in rng.integers(-3, 4, size=2))
        x, _ = e_l_converge(small(rng), P, cfg.conv_tol)
        res = chi(Factored(v, x), P, strict=False)
        return res.residual if res.lattice_point == v else math.inf

    record("chi_quantization", chi_quant)
    return results
