"""Evaluation of ``E_l`` at ``t = 1`` with certified truncation.

The operator norm is never computed; every hypothesis is certified through
``||x|| <= ||x||_l1``. A rejected input means no certificate is available,
not that the series diverges.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .torus import ZERO, Element, LatticeVector, TorusParams, TraceError, delta, delta_inv, mul, trace

DEFAULT_TOL = 1e-10
MAX_TERMS = 10_000


class CertificateUnavailable(ValueError):
    """The sufficient condition for a certificate does not hold."""


class TermLimitExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class ConvergenceCertificate:
    gap_d: float
    ratio: float
    invertible: bool
    terms_used: int
    tail_bound_l2: float
    residual: float

    def to_json(self) -> dict:
        return asdict(self)


def lattice_gap(tau: complex, search_radius: int = 4) -> float:
    """``min |m tau + n|`` over nonzero integer pairs.

    Rows ``|m| <= search_radius`` are scanned first. Since
    ``|m tau + n| >= |m| |Im tau|``, no row with ``|m| > best / |Im tau|`` can
    improve on the best value, so the scan is extended to that row and then
    stops. Within a row the minimum over ``n`` sits at ``floor`` or ``ceil``
    of ``-m Re tau``, which makes each row exact.
    """
    tau = complex(tau)
    if tau.imag == 0:
        raise ValueError("tau must not be real")
    if search_radius < 1:
        raise ValueError("search_radius must be >= 1")
    y = abs(tau.imag)
    best = 1.0  # (m, n) = (0, 1)
    m = 1
    while m <= search_radius or m * y < best:
        c = -m * tau.real
        for n in (math.floor(c), math.ceil(c)):
            best = min(best, abs(m * tau + n))
        m += 1
    return best


def _tail(r: float, k: int) -> float:
    return r ** (k + 1) / (1.0 - r)


def e_l_converge(
    a: Element,
    params: TorusParams,
    tol: float = DEFAULT_TOL,
    trace_tol: float = 1e-10,
    max_terms: int = MAX_TERMS,
) -> tuple[Element, ConvergenceCertificate]:
    """Sum ``1 + a_1 + a_2 + ...`` with a certified l2 tail below ``tol``.

    ``||a_k||_l1 <= r^k`` with ``r = ||delta(a)||_l1 / (2 pi d)``; summation
    stops once both the tail ``r^(K+1) / (1 - r)`` and the ODE residual bound
    ``||delta(a)||_l1 r^K`` are below ``tol``.
    """
    if abs(trace(a)) > trace_tol:
        raise TraceError(f"e_l needs tr(a) = 0, got |tr(a)| = {abs(trace(a)):.3e}")
    a = a - trace(a) if trace(a) != 0 else a
    d = lattice_gap(params.tau)
    da = delta(a, params)
    ndelta = da.l1()
    r = ndelta / (2 * math.pi * d)
    if not a:
        return Element.one(), ConvergenceCertificate(d, 0.0, True, 0, 0.0, 0.0)
    if r >= 1:
        raise CertificateUnavailable(f"ratio ||delta(a)||_l1 / (2 pi d) = {r:.6g} >= 1")
    x = Element.one()
    term = Element.one()
    k = 0
    while True:
        if k >= max_terms:
            raise TermLimitExceeded(f"no certificate within {max_terms} terms (r = {r:.6g})")
        term = a if k == 0 else delta_inv(mul(term, da, params), params, tol=math.inf)
        k += 1
        x = x + term
        if _tail(r, k) < tol and ndelta * r**k < tol:
            break
    res = (delta(x, params) - mul(x, da, params)).l2()
    cert = ConvergenceCertificate(
        gap_d=d,
        ratio=r,
        invertible=r < 0.5,
        terms_used=k,
        tail_bound_l2=_tail(r, k),
        residual=res,
    )
    return x, cert


def prune_l1(x: Element, budget: float) -> tuple[Element, float]:
    """Drop the smallest coefficients of ``x`` whose total modulus stays within ``budget``."""
    if budget <= 0 or not x:
        return x, 0.0
    items = sorted(x.coeffs.items(), key=lambda kv: abs(kv[1]))
    dropped = 0.0
    cut = 0
    for _, c in items:
        if dropped + abs(c) > budget:
            break
        dropped += abs(c)
        cut += 1
    return Element(dict(items[cut:])), dropped


def neumann_invert(x: Element, params: TorusParams, tol: float = DEFAULT_TOL, max_terms: int = MAX_TERMS) -> Element:
    """``x^{-1} = sum_k (1 - x)^k`` with total l1 error below ``tol``.

    Half of ``tol`` goes to the tail ``q^(K+1) / (1 - q)``. The other half is
    spent pruning small coefficients of the powers: mass dropped from
    ``(1 - x)^k`` propagates through later powers with factor at most
    ``1 / (1 - q)``, so each power may drop ``tol (1 - q) / (2 K)``.
    """
    y = Element.one() - x
    q = y.l1()
    if q >= 1:
        raise CertificateUnavailable(f"||x - 1||_l1 = {q:.6g} >= 1")
    K = 0
    while _tail(q, K) >= tol / 2:
        K += 1
        if K > max_terms:
            raise TermLimitExceeded(f"Neumann series needs more than {max_terms} terms (q = {q:.6g})")
    budget = tol * (1 - q) / (2 * max(K, 1))
    total = Element.one()
    power = Element.one()
    for _ in range(K):
        power, _ = prune_l1(mul(power, y, params), budget)
        total = total + power
    return total


# ---------------------------------------------------------------------------
# half-plane supported elements


def _h_value(h: Sequence[Fraction], v: LatticeVector) -> Fraction:
    return h[0] * v[0] + h[1] * v[1]


def _min_sv(tau: complex) -> float:
    # smallest singular value of (m, n) -> (m Re tau + n, m Im tau)
    M = np.array([[tau.real, 1.0], [tau.imag, 0.0]])
    return float(np.linalg.svd(M, compute_uv=False).min())


def halfplane_gap(tau: complex, h: Sequence[Fraction], level: Fraction) -> float:
    """``min |m tau + n|`` over lattice points with ``h(m, n) >= level > 0``.

    Exact enumeration in a box large enough that points outside it are
    provably farther: ``|m tau + n| >= sigma_min ||(m, n)||_2``.
    """
    if level <= 0:
        raise ValueError("level must be positive")
    sigma = _min_sv(tau)
    hx, hy = float(h[0]), float(h[1])
    hn = math.hypot(hx, hy)
    # the closest admissible point has l2 norm >= level / |h|
    R = max(1, int(math.ceil(float(level) / hn)))
    level = Fraction(level)
    h0, h1 = Fraction(h[0]), Fraction(h[1])
    # h(m, n) >= level  <=>  m*p0 + n*p1 >= q over the common denominator
    den = h0.denominator * h1.denominator * level.denominator
    p0 = int(h0 * den)
    p1 = int(h1 * den)
    q = int(level * den)
    while True:
        m, n = np.meshgrid(np.arange(-R, R + 1), np.arange(-R, R + 1), indexing="ij")
        mask = m * p0 + n * p1 >= q
        if mask.any():
            best = float(np.abs(m * tau + n)[mask].min())
            if sigma * (R + 1) >= best:
                return best
        R *= 2


def find_halfplane(support: Sequence[LatticeVector], bound: int = 256) -> tuple[int, int] | None:
    """An integer form ``h`` with ``h > 0`` on ``support``, or ``None`` if none exists.

    A separating form exists iff the directions of the support leave an
    angular gap wider than pi.
    """
    pts = sorted(set(support))
    if not pts or ZERO in pts:
        return None
    angles = sorted(math.atan2(v[1], v[0]) for v in pts)
    if len(angles) == 1:
        widest, start = 2 * math.pi, angles[0]
    else:
        gaps = [((angles[(i + 1) % len(angles)] - angles[i]) % (2 * math.pi), angles[i]) for i in range(len(angles))]
        widest, start = max(gaps)
    if widest <= math.pi:
        return None
    # bisector of the occupied arc, then a nearby integer direction
    mid = start + widest / 2 + math.pi
    cx, cy = math.cos(mid), math.sin(mid)
    for scale in range(1, bound + 1):
        p, q = round(cx * scale), round(cy * scale)
        if (p, q) != (0, 0) and all(p * v[0] + q * v[1] > 0 for v in pts):
            return (p, q)
    return None


def halfplane_converge(
    a: Element,
    h: Sequence[Fraction | int | float],
    params: TorusParams,
    tol: float = DEFAULT_TOL,
    trace_tol: float = 1e-10,
    max_terms: int = MAX_TERMS,
) -> tuple[Element, dict]:
    """Sum ``E_l(a)|_{t=1}`` for ``a`` supported where ``h > 0``.

    Uses ``||a_n||_0 <= ||delta(a)||_l1 ||a_{n-1}||_0 / (2 pi d_n)`` where
    ``d_n`` is the lattice gap restricted to ``h >= n eps``; ``d_n`` grows
    linearly, so no smallness of ``a`` is needed.
    """
    h = tuple(Fraction(x) if not isinstance(x, float) else Fraction(x).limit_denominator(10**6) for x in h)
    if abs(trace(a)) > trace_tol:
        raise TraceError(f"e_l needs tr(a) = 0, got |tr(a)| = {abs(trace(a)):.3e}")
    a = a - trace(a) if trace(a) != 0 else a
    if not a:
        return Element.one(), {"terms_used": 0, "tail_bound_l2": 0.0, "eps": None, "residual": 0.0}
    values = [_h_value(h, v) for v in a.support()]
    eps = min(values)
    if eps <= 0:
        raise CertificateUnavailable(f"support of a is not inside the open half-plane h > 0 (min h = {eps})")
    da = delta(a, params)
    ndelta = da.l1()
    x = Element.one() + a
    term = a
    n = 1
    gaps = []
    while True:
        if n >= max_terms:
            raise TermLimitExceeded(f"half-plane series needs more than {max_terms} terms")
        d_next = halfplane_gap(params.tau, h, (n + 1) * eps)
        gaps.append(d_next)
        rho = ndelta / (2 * math.pi * d_next)
        if rho < 1:
            tail = term.l2() * rho / (1 - rho)
            if tail < tol and ndelta * term.l2() < tol:
                break
        term = delta_inv(mul(term, da, params), params, tol=math.inf)
        x = x + term
        n += 1
    res = (delta(x, params) - mul(x, da, params)).l2()
    # partial sums can be huge before the factorial decay sets in, so the
    # residual is only meaningful relative to ||x|| ||delta(a)||
    scale = x.l2() * ndelta
    return x, {
        "terms_used": n,
        "relative_residual": res / scale if scale else res,
        "tail_bound_l2": tail,
        "eps": float(eps),
        "h": [str(c) for c in h],
        "final_gap": gaps[-1],
        "residual": res,
    }
