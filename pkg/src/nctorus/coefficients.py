"""Coefficient functions of the exponential series.

``f_n`` and its regularization ``f*_n`` are symmetric functions of a tuple of
lattice vectors. Both are sums over permutations of the rational function

    R_n(x_1, ..., x_n) = x_1 x_2 ... x_n / (x_1 (x_1 + x_2) ... (x_1 + ... + x_n))

evaluated at ``iota`` of the permuted tuple, weighted by a commutation phase.
``f_n`` drops the permutations whose denominator vanishes. ``f*_n`` keeps
them: permutations are grouped by the tensor ``sum_{i<j} v_s(i) (x) v_s(j)``,
and within each group the poles cancel, so the group sum has a finite value
at the degenerate point. That value is computed from an exact Laurent
expansion along a deformation ``x_i(eps) = iota(v_i) + eps * h_i``.

Whether a partial sum vanishes is always decided on the integer lattice
vectors, never by comparing floats: ``iota(w) = 0`` iff ``w = 0``.
"""

from __future__ import annotations

import functools
import itertools
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence

from .torus import ZERO, LatticeVector, TorusParams, iota, phase, vadd

MAX_PERMUTATION_N = 8

# relative size below which a Laurent coefficient of negative order counts as cancelled
CANCEL_RTOL = 1e-12

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


class PoleError(ZeroDivisionError):
    """A denominator partial sum of ``R_n`` vanishes."""


class DegeneracyError(ArithmeticError):
    """A fiber sum kept a pole after cancellation.

    Pole cancellation is a theorem, so this signals ill-conditioning or a bug
    rather than a legitimate infinite value.
    """


class PermutationLimitError(ValueError):
    pass


# ---------------------------------------------------------------------------
# divisors


@dataclass(frozen=True, order=True)
class Divisor:
    """Effective divisor ``sum n_i (v_i)`` on the lattice.

    ``entries`` is a sorted tuple of ``(v, multiplicity)`` pairs with every
    multiplicity at least 1.
    """

    entries: tuple[tuple[LatticeVector, int], ...]

    def __post_init__(self) -> None:
        seen = set()
        for v, k in self.entries:
            if k < 1:
                raise ValueError(f"multiplicity of {v} must be >= 1, got {k}")
            if v in seen:
                raise ValueError(f"repeated point {v} in divisor")
            seen.add(v)
        object.__setattr__(self, "entries", tuple(sorted(self.entries)))

    @classmethod
    def from_mapping(cls, data: Mapping[LatticeVector, int]) -> Divisor:
        return cls(tuple((tuple(v), int(k)) for v, k in data.items() if k))

    @classmethod
    def from_vectors(cls, vs: Iterable[LatticeVector]) -> Divisor:
        counts: dict[LatticeVector, int] = {}
        for v in vs:
            v = (int(v[0]), int(v[1]))
            counts[v] = counts.get(v, 0) + 1
        return cls(tuple(counts.items()))

    @property
    def degree(self) -> int:
        return sum(k for _, k in self.entries)

    @property
    def total(self) -> LatticeVector:
        """``s(D)``, the lattice sum with multiplicities."""
        return (sum(k * v[0] for v, k in self.entries), sum(k * v[1] for v, k in self.entries))

    @property
    def factorial(self) -> int:
        return math.prod(math.factorial(k) for _, k in self.entries)

    @property
    def support(self) -> frozenset[LatticeVector]:
        return frozenset(v for v, _ in self.entries)

    def vectors(self) -> tuple[LatticeVector, ...]:
        return tuple(v for v, k in self.entries for _ in range(k))

    def to_json(self) -> list[dict]:
        return [{"m": v[0], "n": v[1], "mult": k} for v, k in self.entries]

    def __str__(self) -> str:
        return " + ".join(f"{k}{v}" if k > 1 else f"{v}" for v, k in self.entries) or "0"


def enumerate_divisors(support: Iterable[LatticeVector], max_degree: int) -> Iterator[Divisor]:
    """Every divisor on ``support`` with degree in ``1..max_degree``, by degree."""
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    points = sorted({(int(v[0]), int(v[1])) for v in support})
    for d in range(1, max_degree + 1):
        for combo in itertools.combinations_with_replacement(points, d):
            yield Divisor.from_vectors(combo)


# ---------------------------------------------------------------------------
# the rational functions R_n


def R_eval(xs: Sequence[complex], vs: Sequence[LatticeVector] | None = None) -> complex:
    """``R_n(xs)``.

    With ``vs`` given, a pole is detected from the lattice partial sums of
    ``vs``; otherwise only an exactly zero float partial sum counts.
    """
    num = 1 + 0j
    den = 1 + 0j
    acc = 0j
    lat = ZERO
    for i, x in enumerate(xs):
        acc += x
        num *= x
        if vs is not None:
            lat = vadd(lat, vs[i])
            if lat == ZERO:
                raise PoleError(f"partial sum {i + 1} of {tuple(vs)} vanishes")
        elif acc == 0:
            raise PoleError(f"partial sum {i + 1} vanishes")
        den *= acc
    return num / den


def reversal_convolution(xs: Sequence[complex]) -> complex:
    """``sum_r (-1)^(n-r) R_r(x_1..x_r) R_{n-r}(x_n..x_{r+1})``; identically zero for n >= 1."""
    n = len(xs)
    total = 0j
    for r in range(n + 1):
        left = R_eval(xs[:r]) if r else 1.0
        right = R_eval(xs[r:][::-1]) if r < n else 1.0
        total += (-1) ** (n - r) * left * right
    return total


# ---------------------------------------------------------------------------
# f_n


def _cross(v: LatticeVector, w: LatticeVector) -> int:
    return v[0] * w[1] - w[0] * v[1]


def _key(vs: Iterable[LatticeVector]) -> tuple[LatticeVector, ...]:
    return tuple(sorted((int(v[0]), int(v[1])) for v in vs))


@functools.lru_cache(maxsize=None)
def _f_rec(key: tuple[LatticeVector, ...], theta: float, tau: complex) -> complex:
    n = len(key)
    if n <= 1:
        return 1.0 + 0j
    total = (sum(v[0] for v in key), sum(v[1] for v in key))
    if total == ZERO:
        return 0j
    acc = 0j
    counts: dict[LatticeVector, int] = {}
    for v in key:
        counts[v] = counts.get(v, 0) + 1
    for v, k in counts.items():
        rest = list(key)
        rest.remove(v)
        others = (total[0] - v[0], total[1] - v[1])
        acc += k * iota(v, tau) * _f_rec(tuple(rest), theta, tau) * phase(others, v, theta)
    return acc / iota(total, tau)


def f_recursive(vs: Sequence[LatticeVector], params: TorusParams) -> complex:
    return _f_rec(_key(vs), params.theta, params.tau)


def _check_n(n: int, max_n: int) -> None:
    if n > max_n:
        raise PermutationLimitError(f"{n}! permutations exceeds the configured cap n <= {max_n}")


def f_permutation(
    vs: Sequence[LatticeVector], params: TorusParams, max_n: int = MAX_PERMUTATION_N
) -> complex:
    """Closed permutation formula for ``f_n``, skipping degenerate orderings.

    Agrees with :func:`f_recursive` on tuples of nonzero vectors. A zero
    vector makes every admissible term vanish (``iota(0) = 0`` in the
    numerator) while the recursion keeps ``f_1(0) = 1``; such tuples never
    arise from a trace-zero support.
    """
    vs = [(int(v[0]), int(v[1])) for v in vs]
    n = len(vs)
    if n <= 1:
        return 1.0 + 0j
    _check_n(n, max_n)
    xs = [iota(v, params.tau) for v in vs]
    total = 0j
    for perm in itertools.permutations(range(n)):
        lat = ZERO
        degenerate = False
        for i in perm:
            lat = vadd(lat, vs[i])
            if lat == ZERO:
                degenerate = True
                break
        if degenerate:
            continue
        total += R_eval([xs[i] for i in perm]) * _perm_phase([vs[i] for i in perm], params.theta)
    return total


def _perm_phase(ordered: Sequence[LatticeVector], theta: float) -> complex:
    cross = 0
    acc = ZERO
    for w in ordered:
        cross += _cross(acc, w)
        acc = vadd(acc, w)
    return phase((1, 0), (0, cross), theta) if cross else 1.0 + 0j


def fncor_check(vs: Sequence[LatticeVector], params: TorusParams, star: bool = False) -> float:
    """``|sum_i iota(v_i) f_{n-1}(v without v_i)|`` for a zero-sum tuple.

    With ``star=True`` the regularized ``f*_{n-1}`` is used instead.
    """
    vs = [(int(v[0]), int(v[1])) for v in vs]
    if (sum(v[0] for v in vs), sum(v[1] for v in vs)) != ZERO:
        raise ValueError(f"tuple {vs} does not sum to zero")
    f = f_star if star else f_recursive
    total = 0j
    for i, v in enumerate(vs):
        total += iota(v, params.tau) * f(vs[:i] + vs[i + 1 :], params)
    return abs(total)


# ---------------------------------------------------------------------------
# fiber partition


@dataclass(frozen=True)
class Fiber:
    """Permutations sharing one value of ``sum_{i<j} v_s(i) (x) v_s(j)``.

    ``tensor`` is that integer 2x2 tensor, flattened row-major. ``cross`` is
    its antisymmetric part ``T01 - T10``; the common pairing value is
    ``theta * cross / 2``.
    """

    tensor: tuple[int, int, int, int]
    perms: tuple[tuple[int, ...], ...]

    @property
    def cross(self) -> int:
        return self.tensor[1] - self.tensor[2]

    def pairing_value(self, theta: float) -> float:
        return 0.5 * theta * self.cross

    def __len__(self) -> int:
        return len(self.perms)


@dataclass(frozen=True)
class FiberPartition:
    vectors: tuple[LatticeVector, ...]
    fibers: tuple[Fiber, ...]

    def sizes(self) -> list[int]:
        return [len(f) for f in self.fibers]


def _tensor(ordered: Sequence[LatticeVector]) -> tuple[int, int, int, int]:
    t00 = t01 = t10 = t11 = 0
    acc = ZERO
    for w in ordered:
        t00 += acc[0] * w[0]
        t01 += acc[0] * w[1]
        t10 += acc[1] * w[0]
        t11 += acc[1] * w[1]
        acc = vadd(acc, w)
    return (t00, t01, t10, t11)


def fiber_partition(vs: Sequence[LatticeVector], max_n: int = MAX_PERMUTATION_N) -> FiberPartition:
    vs = tuple((int(v[0]), int(v[1])) for v in vs)
    _check_n(len(vs), max_n)
    return _fiber_partition(vs)


@functools.lru_cache(maxsize=4096)
def _fiber_partition(vs: tuple[LatticeVector, ...]) -> FiberPartition:
    groups: dict[tuple[int, int, int, int], list[tuple[int, ...]]] = {}
    for perm in itertools.permutations(range(len(vs))):
        groups.setdefault(_tensor([vs[i] for i in perm]), []).append(perm)
    fibers = tuple(Fiber(t, tuple(p)) for t, p in sorted(groups.items()))
    return FiberPartition(vs, fibers)


# ---------------------------------------------------------------------------
# regularized fiber sums


def _series_inverse_linear(p: complex, q: complex, order: int) -> list[complex]:
    """Taylor coefficients of ``1 / (p + q eps)`` up to ``eps^order`` (``p != 0``)."""
    r = -q / p
    out = [1.0 / p]
    for _ in range(order):
        out.append(out[-1] * r)
    return out


def _series_mul(a: list[complex], b: list[complex], order: int) -> list[complex]:
    out = [0j] * (order + 1)
    for i, x in enumerate(a[: order + 1]):
        if x == 0:
            continue
        for j, y in enumerate(b[: order + 1 - i]):
            out[i + j] += x * y
    return out


def _poly_linear_product(factors: Sequence[tuple[complex, complex]]) -> list[complex]:
    poly = [1.0 + 0j]
    for p, q in factors:
        nxt = [0j] * (len(poly) + 1)
        for i, c in enumerate(poly):
            nxt[i] += c * p
            nxt[i + 1] += c * q
        poly = nxt
    return poly


def default_direction(n: int) -> tuple[Fraction, ...]:
    return tuple(Fraction(_PRIMES[i % len(_PRIMES)] + (i // len(_PRIMES)) * 41) for i in range(n))


def _direction_ok(vs, perms, h) -> bool:
    for perm in perms:
        lat = ZERO
        hs = Fraction(0)
        for i in perm:
            lat = vadd(lat, vs[i])
            hs += h[i]
            if lat == ZERO and hs == 0:
                return False
    for v, hv in zip(vs, h):
        if v == ZERO and hv == 0:
            return False
    return True


def choose_direction(vs: Sequence[LatticeVector], perms, seed: int = 0) -> tuple[Fraction, ...]:
    """A rational deformation direction with no vanishing relevant partial sum.

    Starts from ``h_i = i-th prime`` and falls back to seeded random rationals.
    """
    h = default_direction(len(vs))
    rng = random.Random(seed)
    for _ in range(100):
        if _direction_ok(vs, perms, h):
            return h
        h = tuple(Fraction(rng.randint(-97, 97), rng.randint(1, 13)) for _ in vs)
    raise DegeneracyError(f"no admissible deformation direction found for {tuple(vs)}")


@dataclass(frozen=True)
class FiberSumReport:
    value: complex
    pole_order: int
    residual_polar: float
    regular_branch: bool


def fiber_sum_report(
    vs: Sequence[LatticeVector],
    fiber: Fiber | Iterable[tuple[int, ...]],
    params: TorusParams,
    h: Sequence[Fraction] | None = None,
) -> FiberSumReport:
    """``sum_{s in fiber} R_n(iota(v)^s)`` at the possibly degenerate point.

    ``pole_order`` is the highest power of ``1/eps`` among the individual
    terms and ``residual_polar`` the largest relative size of a cancelled
    negative-order Laurent coefficient.
    """
    vs = [(int(v[0]), int(v[1])) for v in vs]
    perms = fiber.perms if isinstance(fiber, Fiber) else tuple(fiber)
    n = len(vs)
    if n == 0:
        return FiberSumReport(1.0 + 0j, 0, 0.0, True)
    xs = [iota(v, params.tau) for v in vs]

    zero_counts = []
    for perm in perms:
        lat = ZERO
        z = 0
        for i in perm:
            lat = vadd(lat, vs[i])
            z += lat == ZERO
        zero_counts.append(z)
    num_zero = sum(v == ZERO for v in vs)

    if not any(zero_counts):
        if num_zero:
            return FiberSumReport(0j, 0, 0.0, True)
        total = 0j
        for perm in perms:
            total += R_eval([xs[i] for i in perm])
        return FiberSumReport(total, 0, 0.0, True)

    if h is None:
        h = choose_direction(vs, perms)
    elif not _direction_ok(vs, perms, h):
        raise DegeneracyError(f"direction {tuple(h)} hits a degenerate partial sum")
    hf = [complex(float(x)) for x in h]
    zmax = max(zero_counts)

    # numerator prod_i x_i(eps); exact eps factor where v_i = 0
    numer = _poly_linear_product([(0j if v == ZERO else x, hv) for v, x, hv in zip(vs, xs, hf)])

    # S(eps) = sum_s 1 / D_s(eps), stored shifted by eps^zmax: coefficient k <-> order k - zmax
    order = zmax
    S = [0j] * (order + 1)
    scale = [0.0] * (order + 1)
    for perm, z in zip(perms, zero_counts):
        lat = ZERO
        acc = 0j
        hacc = 0j
        hprod = 1.0 + 0j
        series = [1.0 + 0j] + [0j] * order
        for i in perm:
            lat = vadd(lat, vs[i])
            acc += xs[i]
            hacc += hf[i]
            if lat == ZERO:
                hprod *= hacc
            else:
                series = _series_mul(series, _series_inverse_linear(acc, hacc, z), z)
        shift = zmax - z
        for k in range(order + 1 - shift):
            c = series[k] / hprod
            S[k + shift] += c
            scale[k + shift] += abs(c)

    # F = numer * S; order of term (k of numer) + (j - zmax)
    worst = 0.0
    pole_orders = {}
    for target in range(-zmax, 1):
        coeff = 0j
        mag = 0.0
        for k, nk in enumerate(numer):
            j = target - k + zmax
            if 0 <= j <= order:
                coeff += nk * S[j]
                mag += abs(nk) * scale[j]
        pole_orders[target] = (coeff, mag)
    value = pole_orders[0][0]
    unit = max(pole_orders[0][1], abs(value))
    for target in range(-zmax, 0):
        coeff, mag = pole_orders[target]
        ref = max(mag, unit)
        rel = abs(coeff) / ref if ref > 0 else 0.0
        worst = max(worst, rel)
        if rel > CANCEL_RTOL:
            raise DegeneracyError(
                f"pole of order {-target} survives in fiber sum for {tuple(vs)}: "
                f"|coeff| = {abs(coeff):.3e}, relative {rel:.3e}"
            )
    return FiberSumReport(value, zmax, worst, False)


def fiber_sum_regularized(
    vs: Sequence[LatticeVector],
    fiber: Fiber | Iterable[tuple[int, ...]],
    params: TorusParams,
    h: Sequence[Fraction] | None = None,
) -> complex:
    return fiber_sum_report(vs, fiber, params, h).value


def fiber_sum_deformed(
    vs: Sequence[LatticeVector],
    fiber: Fiber | Iterable[tuple[int, ...]],
    params: TorusParams,
    eps: float,
    h: Sequence[Fraction] | None = None,
) -> complex:
    """Plain floating evaluation of the fiber sum at ``iota(v) + eps * h``."""
    vs = [(int(v[0]), int(v[1])) for v in vs]
    perms = fiber.perms if isinstance(fiber, Fiber) else tuple(fiber)
    if h is None:
        h = choose_direction(vs, perms)
    xs = [iota(v, params.tau) + eps * float(hv) for v, hv in zip(vs, h)]
    return sum((R_eval([xs[i] for i in perm]) for perm in perms), 0j)


# ---------------------------------------------------------------------------
# f*_n


@functools.lru_cache(maxsize=None)
def _f_star(key: tuple[LatticeVector, ...], theta: float, tau: complex) -> complex:
    if len(key) <= 1:
        return 1.0 + 0j
    params = TorusParams(theta, tau, allow_upper=True)
    part = _fiber_partition(key)
    total = 0j
    for fiber in part.fibers:
        value = fiber_sum_regularized(key, fiber, params)
        if value != 0:
            total += value * phase((1, 0), (0, fiber.cross), theta)
    return total


def f_star(vs: Sequence[LatticeVector], params: TorusParams, max_n: int = MAX_PERMUTATION_N) -> complex:
    key = _key(vs)
    _check_n(len(key), max_n)
    return _f_star(key, params.theta, params.tau)


def clear_caches() -> None:
    _f_rec.cache_clear()
    _f_star.cache_clear()
    _fiber_partition.cache_clear()
