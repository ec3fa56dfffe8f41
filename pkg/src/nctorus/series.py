"""Truncated formal power series over the torus algebra, and the exponentials.

A :class:`FormalSeries` holds the coefficients of ``t^0 .. t^N``. Four
exponential maps are built on top:

* ``E_l`` / ``E_r``: the trace-normalized left/right solutions of
  ``delta(x) = t x delta(a)`` (resp. ``t delta(a) x``) with ``tr(x) = 1``;
* ``Exp_l`` / ``Exp_r``: the normalized versions that reduce to ``exp(ta)``
  when the algebra restricted to the support of ``a`` is commutative.

``E_l`` is available both through the coefficient recursion and through the
divisor expansion; the two are independent routes to the same series.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence

from . import coefficients as cf
from .coefficients import Divisor
from .torus import (
    ZERO,
    Element,
    LatticeVector,
    TorusParams,
    TraceError,
    delta,
    delta_inv,
    mul,
    sl2_act,
    star,
    trace,
)

DEFAULT_ORDER = 6


class IdentityViolation(ArithmeticError):
    """A structural identity that must hold failed beyond tolerance."""


# ---------------------------------------------------------------------------
# scalar series helpers (lists of complex, index = power of t)


def scalar_mul(x: Sequence[complex], y: Sequence[complex], order: int) -> list[complex]:
    out = [0j] * (order + 1)
    for i, a in enumerate(x[: order + 1]):
        if a == 0:
            continue
        for j, b in enumerate(y[: order + 1 - i]):
            out[i + j] += a * b
    return out


def scalar_inv(x: Sequence[complex], order: int) -> list[complex]:
    if x[0] == 0:
        raise ZeroDivisionError("scalar series with zero constant term is not invertible")
    out = [1.0 / x[0]] + [0j] * order
    for k in range(1, order + 1):
        acc = sum(x[j] * out[k - j] for j in range(1, min(k, len(x) - 1) + 1))
        out[k] = -acc / x[0]
    return out


def scalar_exp(x: Sequence[complex], order: int) -> list[complex]:
    """``exp(x)`` for ``x`` with zero constant term."""
    if abs(x[0]) != 0:
        raise ValueError("scalar_exp needs zero constant term")
    # y' = x' y
    y = [1.0 + 0j] + [0j] * order
    for k in range(1, order + 1):
        y[k] = sum(j * x[j] * y[k - j] for j in range(1, min(k, len(x) - 1) + 1)) / k
    return y


def scalar_log(x: Sequence[complex], order: int) -> list[complex]:
    """Formal logarithm of a series with constant term 1."""
    if abs(x[0] - 1) > 1e-12:
        raise ValueError("scalar_log needs constant term 1")
    # x L' = x'
    L = [0j] * (order + 1)
    for k in range(1, order + 1):
        xk = x[k] if k < len(x) else 0j
        acc = k * xk - sum(j * L[j] * (x[k - j] if k - j < len(x) else 0j) for j in range(1, k))
        L[k] = acc / k
    return L


# ---------------------------------------------------------------------------
# formal series


class FormalSeries:
    """``sum_{k<=N} c_k t^k`` with ``c_k`` torus elements."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable[Element], order: int | None = None):
        cs = list(coeffs)
        if order is not None:
            cs = cs[: order + 1] + [Element.zero()] * (order + 1 - len(cs))
        if not cs:
            raise ValueError("a series needs at least the t^0 coefficient")
        self.coeffs: tuple[Element, ...] = tuple(cs)

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @classmethod
    def constant(cls, a: Element, order: int) -> FormalSeries:
        return cls([a], order)

    @classmethod
    def one(cls, order: int) -> FormalSeries:
        return cls([Element.one()], order)

    @classmethod
    def from_scalars(cls, xs: Sequence[complex], order: int) -> FormalSeries:
        return cls([Element.scalar(x) for x in xs], order)

    def __getitem__(self, k: int) -> Element:
        return self.coeffs[k]

    def __len__(self) -> int:
        return len(self.coeffs)

    def _zip(self, other: FormalSeries):
        if other.order != self.order:
            raise ValueError(f"order mismatch: {self.order} vs {other.order}")
        return zip(self.coeffs, other.coeffs)

    def __add__(self, other: FormalSeries) -> FormalSeries:
        return FormalSeries(a + b for a, b in self._zip(other))

    def __sub__(self, other: FormalSeries) -> FormalSeries:
        return FormalSeries(a - b for a, b in self._zip(other))

    def __neg__(self) -> FormalSeries:
        return FormalSeries(-a for a in self.coeffs)

    def scale(self, c: complex) -> FormalSeries:
        return FormalSeries(c * a for a in self.coeffs)

    def shift(self) -> FormalSeries:
        """Multiplication by ``t`` (truncating at the same order)."""
        return FormalSeries([Element.zero(), *self.coeffs[:-1]])

    def scalar_times(self, xs: Sequence[complex]) -> FormalSeries:
        """Multiply by a scalar series."""
        out = []
        for k in range(self.order + 1):
            acc = Element.zero()
            for j in range(min(k, len(xs) - 1) + 1):
                if xs[j] != 0:
                    acc = acc + xs[j] * self.coeffs[k - j]
            out.append(acc)
        return FormalSeries(out)

    def trace(self) -> list[complex]:
        return [trace(c) for c in self.coeffs]

    def delta(self, params: TorusParams) -> FormalSeries:
        return FormalSeries(delta(c, params) for c in self.coeffs)

    def star(self) -> FormalSeries:
        return FormalSeries(star(c) for c in self.coeffs)

    def sl2(self, g) -> FormalSeries:
        return FormalSeries(sl2_act(g, c) for c in self.coeffs)

    def nonscalar_mass(self) -> list[float]:
        return [(c - trace(c)).l1() for c in self.coeffs]

    def l1_per_coeff(self) -> list[float]:
        return [c.l1() for c in self.coeffs]

    def max_l1(self) -> float:
        return max(self.l1_per_coeff())

    def min_order(self, v: LatticeVector) -> int | None:
        for k, c in enumerate(self.coeffs):
            if c[v] != 0:
                return k
        return None

    def support(self) -> frozenset[LatticeVector]:
        return frozenset().union(*(c.support() for c in self.coeffs))

    def to_json(self) -> list[list[dict]]:
        return [c.to_json() for c in self.coeffs]

    @classmethod
    def from_json(cls, data: Sequence) -> FormalSeries:
        return cls(Element.from_json(c) for c in data)

    def __repr__(self) -> str:
        return f"FormalSeries(order={self.order}, coeffs={list(self.coeffs)!r})"


def residual(x: FormalSeries, y: FormalSeries) -> float:
    """Largest per-coefficient l1 distance."""
    return (x - y).max_l1()


def series_mul(x: FormalSeries, y: FormalSeries, params: TorusParams) -> FormalSeries:
    order = min(x.order, y.order)
    out = []
    for k in range(order + 1):
        acc = Element.zero()
        for i in range(k + 1):
            if x[i] and y[k - i]:
                acc = acc + mul(x[i], y[k - i], params)
        out.append(acc)
    return FormalSeries(out)


def series_inv(x: FormalSeries, params: TorusParams) -> FormalSeries:
    """Inverse of a series whose ``t^0`` coefficient is a nonzero scalar."""
    c0 = x[0]
    if not c0.is_scalar() or trace(c0) == 0:
        raise ValueError("series_inv needs a nonzero scalar t^0 coefficient")
    inv0 = 1.0 / trace(c0)
    out = [Element.scalar(inv0)]
    for k in range(1, x.order + 1):
        acc = Element.zero()
        for j in range(1, k + 1):
            if x[j]:
                acc = acc + mul(x[j], out[k - j], params)
        out.append(-inv0 * acc)
    return FormalSeries(out)


# ---------------------------------------------------------------------------
# E_l via the coefficient recursion


def E_l_recursive(a: Element, params: TorusParams, N: int = DEFAULT_ORDER, tol: float = 1e-10) -> FormalSeries:
    """``1 + sum a_k t^k`` with ``a_1 = a - tr(a)``, ``delta(a_k) = a_{k-1} delta(a)``, ``tr(a_k) = 0``."""
    da = delta(a, params)
    terms = [Element.one()]
    if N >= 1:
        terms.append(a - trace(a))
    for _ in range(2, N + 1):
        rhs = mul(terms[-1], da, params)
        terms.append(delta_inv(rhs, params, tol=_scaled_tol(tol, rhs)))
    return FormalSeries(terms, N)


def _scaled_tol(tol: float, x: Element) -> float:
    return tol * max(1.0, x.l1())


# ---------------------------------------------------------------------------
# divisor expansions


@dataclass(frozen=True)
class DivisorTerm:
    divisor: Divisor
    coefficient: complex  # c(D) or c*(D)

    def to_json(self) -> dict:
        D = self.divisor
        return {
            "divisor": D.to_json(),
            "deg": D.degree,
            "s": list(D.total),
            "c": [self.coefficient.real, self.coefficient.imag],
        }


def _as_series(a: Element | FormalSeries, N: int) -> FormalSeries:
    if isinstance(a, FormalSeries):
        if a.order < N:
            raise ValueError(f"argument series has order {a.order} < {N}")
        return FormalSeries(a.coeffs[: N + 1])
    return FormalSeries.constant(a, N)


def _weighted_divisors(weights: dict[LatticeVector, int], budget: int) -> Iterator[Divisor]:
    """Divisors with ``sum mult * weight <= budget`` and degree >= 1."""
    points = sorted(weights)

    def rec(i: int, left: int, acc: list[tuple[LatticeVector, int]]):
        if i == len(points):
            if acc:
                yield Divisor(tuple(acc))
            return
        v = points[i]
        w = weights[v]
        yield from rec(i + 1, left, acc)
        k = 1
        while k * w <= left:
            acc.append((v, k))
            yield from rec(i + 1, left - k * w, acc)
            acc.pop()
            k += 1

    yield from rec(0, budget, [])


def divisor_expansion(
    a: Element | FormalSeries,
    params: TorusParams,
    N: int,
    coeff: Callable[[Sequence[LatticeVector], TorusParams], complex],
) -> tuple[FormalSeries, list[DivisorTerm]]:
    """``1 + sum_D t^deg(D) / D! * coeff(D) * a_D * U_s(D)``, truncated at ``t^N``.

    ``a`` may itself be a series in ``t``; then ``a_D`` is a product of
    scalar series and divisors are cut off by their lowest attainable
    ``t``-order.
    """
    x = _as_series(a, N)
    coeff_series: dict[LatticeVector, list[complex]] = {}
    weights: dict[LatticeVector, int] = {}
    for v in x.support():
        cs = [x[k][v] for k in range(N + 1)]
        low = next(k for k, c in enumerate(cs) if c != 0)
        coeff_series[v] = cs
        weights[v] = 1 + low

    acc: list[dict[LatticeVector, complex]] = [dict() for _ in range(N + 1)]
    acc[0][ZERO] = 1.0 + 0j
    table: list[DivisorTerm] = []
    for D in sorted(_weighted_divisors(weights, N), key=lambda d: (d.degree, d)):
        c = coeff(D.vectors(), params)
        table.append(DivisorTerm(D, c))
        if c == 0:
            continue
        deg = D.degree
        prod = [1.0 + 0j] + [0j] * (N - deg)
        for v, k in D.entries:
            for _ in range(k):
                prod = scalar_mul(prod, coeff_series[v], N - deg)
        s = D.total
        pref = c / D.factorial
        for j, p in enumerate(prod):
            if p != 0:
                bucket = acc[deg + j]
                bucket[s] = bucket.get(s, 0j) + pref * p
    return FormalSeries(Element(b) for b in acc), table


def _require_trace_zero(a: Element, tol: float) -> Element:
    tr = trace(a)
    if abs(tr) > tol:
        raise TraceError(f"divisor formula needs tr(a) = 0, got |tr(a)| = {abs(tr):.3e}")
    return a - tr if tr != 0 else a


def _c(vs, params):
    return cf.f_recursive(vs, params)


def _c_star(vs, params):
    return cf.f_star(vs, params)


def E_l_divisor(a: Element, params: TorusParams, N: int = DEFAULT_ORDER, tol: float = 1e-10) -> FormalSeries:
    return E_l_divisor_table(a, params, N, tol)[0]


def E_l_divisor_table(a: Element, params: TorusParams, N: int = DEFAULT_ORDER, tol: float = 1e-10):
    return divisor_expansion(_require_trace_zero(a, tol), params, N, _c)


def E_r_table(a: Element, params: TorusParams, N: int = DEFAULT_ORDER, tol: float = 1e-10):
    a = _require_trace_zero(a, tol)
    flipped = params.with_theta(-params.theta)
    return divisor_expansion(a, params, N, lambda vs, _p: cf.f_recursive(vs, flipped))


def E_r(a: Element, params: TorusParams, N: int = DEFAULT_ORDER, tol: float = 1e-10) -> FormalSeries:
    return E_r_table(a, params, N, tol)[0]


def E_l(a: Element, params: TorusParams, N: int = DEFAULT_ORDER) -> FormalSeries:
    """``E_l`` for any ``a``; the scalar part of ``a`` is irrelevant."""
    return E_l_recursive(a, params, N)


def s_series(a: Element, params: TorusParams, N: int = DEFAULT_ORDER, tol: float = 1e-10) -> list[complex]:
    """The scalar series ``E_l(a) E_r(-a) = E_r(-a) E_l(a)``.

    Raises :class:`IdentityViolation` when either product has non-scalar
    mass above ``tol`` or the two orders disagree.
    """
    x = E_l_divisor(a, params, N)
    y = E_r(-a, params, N)
    xy = series_mul(x, y, params)
    yx = series_mul(y, x, params)
    bad = max(max(xy.nonscalar_mass()), max(yx.nonscalar_mass()))
    if bad > tol:
        raise IdentityViolation(f"E_l(a)E_r(-a) has non-scalar mass {bad:.3e}")
    gap = residual(xy, yx)
    if gap > tol:
        raise IdentityViolation(f"E_l(a)E_r(-a) and E_r(-a)E_l(a) differ by {gap:.3e}")
    return xy.trace()


# ---------------------------------------------------------------------------
# normalized exponentials


def Exp_l_table(a: Element | FormalSeries, params: TorusParams, N: int = DEFAULT_ORDER):
    return divisor_expansion(a, params, N, _c_star)


def Exp_l(a: Element | FormalSeries, params: TorusParams, N: int = DEFAULT_ORDER) -> FormalSeries:
    return Exp_l_table(a, params, N)[0]


def Exp_r_divisor(a: Element | FormalSeries, params: TorusParams, N: int = DEFAULT_ORDER):
    flipped = params.with_theta(-params.theta)
    return divisor_expansion(a, params, N, lambda vs, _p: cf.f_star(vs, flipped))


def Exp_r_star(a: Element | FormalSeries, params: TorusParams, N: int = DEFAULT_ORDER) -> FormalSeries:
    """``Exp_l(conj tau, a^*)^*``."""
    x = _as_series(a, N).star()
    return Exp_l(x, params.conjugate(), N).star()


def Exp_r(a: Element | FormalSeries, params: TorusParams, N: int = DEFAULT_ORDER, tol: float = 1e-10) -> FormalSeries:
    return Exp_r_table(a, params, N, tol)[0]


def Exp_r_table(a: Element | FormalSeries, params: TorusParams, N: int = DEFAULT_ORDER, tol: float = 1e-10):
    """Right exponential from the ``-theta`` divisor formula, checked against the star definition."""
    series, table = Exp_r_divisor(a, params, N)
    other = Exp_r_star(a, params, N)
    gap = residual(series, other)
    if gap > tol * max(1.0, series.max_l1()):
        raise IdentityViolation(f"Exp_r definitions disagree by {gap:.3e}")
    return series, table


def exp_series(a: Element, params: TorusParams, N: int = DEFAULT_ORDER) -> FormalSeries:
    """``sum_k t^k a^k / k!`` computed with the algebra product."""
    terms = [Element.one()]
    power = Element.one()
    for k in range(1, N + 1):
        power = mul(power, a, params)
        terms.append(power / math.factorial(k))
    return FormalSeries(terms, N)


# ---------------------------------------------------------------------------
# product law


@dataclass(frozen=True)
class ProductLaw:
    phi: FormalSeries
    phi_prime: FormalSeries
    z: list[complex]
    verification_residual: float


def phi_product_law(
    a: Element,
    b: Element,
    params: TorusParams,
    N: int = DEFAULT_ORDER,
    trace_tol: float = 1e-10,
    verify_tol: float = 1e-9,
) -> ProductLaw:
    """``phi(a, b)`` with ``Exp_l(a) Exp_l(b) = Exp_l(phi + b)``.

    ``phi`` is fixed up to ``t^N`` except for its scalar ``t^N`` coefficient,
    which only affects ``t^(N+1)`` and is set to zero.
    """
    X = Exp_l(b, params, N)
    Xinv = series_inv(X, params)
    c = series_mul(series_mul(Xinv, FormalSeries.constant(delta(a, params), N), params), X, params)
    parts = []
    for k, ck in enumerate(c.coeffs):
        tr = trace(ck)
        if abs(tr) > trace_tol * max(1.0, ck.l1()):
            raise IdentityViolation(f"conjugated delta(a) has trace {abs(tr):.3e} at t^{k}")
        parts.append(delta_inv(ck, params, tol=math.inf))
    phi_prime = FormalSeries(parts)
    b_series = FormalSeries.constant(b, N)

    lhs = series_mul(Exp_l(a, params, N), X, params)
    rhs = Exp_l(phi_prime + b_series, params, N)
    f = series_mul(lhs, series_inv(rhs, params), params)
    mass = max(f.nonscalar_mass())
    if mass > verify_tol * max(1.0, f.max_l1()):
        raise IdentityViolation(f"correction factor is not scalar (mass {mass:.3e})")
    logf = scalar_log(f.trace(), N)
    z = logf[1:] + [0j]
    phi = phi_prime + FormalSeries.from_scalars(z, N)
    check = residual(Exp_l(phi + b_series, params, N), lhs)
    if check > verify_tol * max(1.0, lhs.max_l1()):
        raise IdentityViolation(f"Exp_l(phi + b) misses the product by {check:.3e}")
    return ProductLaw(phi, phi_prime, z, check)
