"""Finite-support arithmetic in the smooth noncommutative torus.

An element is a finite sum ``sum_v a_v U_v`` over lattice vectors
``v = (m, n)`` with the normalized monomials ``U_v`` multiplying as

    U_v U_w = exp(2 pi i <v, w>) U_{v+w},    <v, w> = theta (m n' - m' n) / 2.

The complex structure enters only through the derivation ``delta``, which is
diagonal on monomials with eigenvalue ``iota(v) = 2 pi i (m tau + n)``.

Elements are immutable and carry no parameters; every operation that depends
on ``theta`` or ``tau`` takes a :class:`TorusParams`.
"""

from __future__ import annotations

import contextlib
import contextvars
import cmath
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np

LatticeVector = tuple[int, int]

ZERO: LatticeVector = (0, 0)

# Test hook: flips the sign of the phase used by ``mul`` only.
_PHASE_SIGN: contextvars.ContextVar[int] = contextvars.ContextVar("_PHASE_SIGN", default=1)


class TraceError(ValueError):
    """Raised when a trace-zero precondition is violated."""


@contextlib.contextmanager
def corrupted_pairing():
    """Make ``mul`` use the wrong sign of the commutation phase (mutation testing)."""
    token = _PHASE_SIGN.set(-1)
    try:
        yield
    finally:
        _PHASE_SIGN.reset(token)


@dataclass(frozen=True)
class TorusParams:
    """Rotation number ``theta`` and complex structure ``tau`` (``Im tau < 0``).

    ``allow_upper`` admits ``Im tau > 0``; it exists so that complex-conjugate
    structures can be formed internally (``E_r(tau, a)^* = E_l(conj tau, a^*)``).
    A real ``tau`` is always rejected since ``iota`` would then have a kernel.
    """

    theta: float
    tau: complex
    allow_upper: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        theta = float(self.theta)
        tau = complex(self.tau)
        if not math.isfinite(theta):
            raise ValueError(f"theta must be finite, got {self.theta!r}")
        if not (math.isfinite(tau.real) and math.isfinite(tau.imag)):
            raise ValueError(f"tau must be finite, got {self.tau!r}")
        if tau.imag == 0:
            raise ValueError("tau must not be real")
        if tau.imag > 0 and not self.allow_upper:
            raise ValueError(f"Im(tau) must be negative, got tau={tau}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "tau", tau)

    def conjugate(self) -> TorusParams:
        return TorusParams(self.theta, self.tau.conjugate(), allow_upper=True)

    def with_theta(self, theta: float) -> TorusParams:
        return TorusParams(theta, self.tau, allow_upper=self.allow_upper)

    def with_tau(self, tau: complex) -> TorusParams:
        return TorusParams(self.theta, tau, allow_upper=True)

    def to_json(self) -> dict:
        return {"theta": self.theta, "tau_re": self.tau.real, "tau_im": self.tau.imag}

    @classmethod
    def from_json(cls, data: Mapping) -> TorusParams:
        return cls(float(data["theta"]), complex(float(data["tau_re"]), float(data["tau_im"])))


def pairing(v: LatticeVector, w: LatticeVector, theta: float) -> float:
    return 0.5 * theta * (v[0] * w[1] - w[0] * v[1])


def iota(v: LatticeVector, tau: complex) -> complex:
    return 2j * math.pi * (v[0] * tau + v[1])


def phase(v: LatticeVector, w: LatticeVector, theta: float) -> complex:
    """``exp(2 pi i <v, w>)``, from the integer cross product directly."""
    cross = v[0] * w[1] - w[0] * v[1]
    if cross == 0:
        return 1.0 + 0j
    return cmath.exp(1j * math.pi * theta * cross)


def vadd(v: LatticeVector, w: LatticeVector) -> LatticeVector:
    return (v[0] + w[0], v[1] + w[1])


def vneg(v: LatticeVector) -> LatticeVector:
    return (-v[0], -v[1])


def vscale(k: int, v: LatticeVector) -> LatticeVector:
    return (k * v[0], k * v[1])


class Element:
    """Finitely supported element ``sum_v a_v U_v``.

    Coefficients that are exactly zero are never stored. Small ones are kept
    unless :meth:`prune` is called explicitly.
    """

    __slots__ = ("_coeffs",)

    def __init__(self, coeffs: Mapping[LatticeVector, complex] | Iterable[tuple[LatticeVector, complex]] = ()):
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        data: dict[LatticeVector, complex] = {}
        for v, c in items:
            key = (int(v[0]), int(v[1]))
            data[key] = data.get(key, 0j) + complex(c)
        self._coeffs = {v: c for v, c in data.items() if c != 0}

    @classmethod
    def _raw(cls, coeffs: dict[LatticeVector, complex]) -> Element:
        obj = cls.__new__(cls)
        obj._coeffs = {v: c for v, c in coeffs.items() if c != 0}
        return obj

    @classmethod
    def monomial(cls, v: LatticeVector, c: complex = 1.0) -> Element:
        return cls({v: c})

    @classmethod
    def scalar(cls, c: complex) -> Element:
        return cls({ZERO: c})

    @classmethod
    def zero(cls) -> Element:
        return cls()

    @classmethod
    def one(cls) -> Element:
        return cls({ZERO: 1.0})

    @property
    def coeffs(self) -> Mapping[LatticeVector, complex]:
        return dict(self._coeffs)

    def support(self) -> frozenset[LatticeVector]:
        return frozenset(self._coeffs)

    def __getitem__(self, v: LatticeVector) -> complex:
        return self._coeffs.get((int(v[0]), int(v[1])), 0j)

    def items(self) -> Iterator[tuple[LatticeVector, complex]]:
        return iter(sorted(self._coeffs.items()))

    def __len__(self) -> int:
        return len(self._coeffs)

    def __bool__(self) -> bool:
        return bool(self._coeffs)

    def is_scalar(self) -> bool:
        return all(v == ZERO for v in self._coeffs)

    def __add__(self, other: Element | complex) -> Element:
        if not isinstance(other, Element):
            other = Element.scalar(other)
        out = dict(self._coeffs)
        for v, c in other._coeffs.items():
            out[v] = out.get(v, 0j) + c
        return Element._raw(out)

    __radd__ = __add__

    def __neg__(self) -> Element:
        return Element._raw({v: -c for v, c in self._coeffs.items()})

    def __sub__(self, other: Element | complex) -> Element:
        if not isinstance(other, Element):
            other = Element.scalar(other)
        return self + (-other)

    def __rsub__(self, other: complex) -> Element:
        return Element.scalar(other) - self

    def __mul__(self, c: complex) -> Element:
        if isinstance(c, Element):
            raise TypeError("use torus.mul(a, b, params) for algebra products")
        c = complex(c)
        return Element._raw({v: c * x for v, x in self._coeffs.items()})

    __rmul__ = __mul__

    def __truediv__(self, c: complex) -> Element:
        return self * (1.0 / complex(c))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Element):
            return NotImplemented
        return self._coeffs == other._coeffs

    def __hash__(self) -> int:
        return hash(frozenset(self._coeffs.items()))

    def __repr__(self) -> str:
        if not self._coeffs:
            return "Element(0)"
        terms = " + ".join(f"({c:.6g})U{v}" for v, c in self.items())
        return f"Element({terms})"

    def prune(self, eps: float) -> Element:
        """Drop coefficients with ``|a_v| <= eps``."""
        return Element._raw({v: c for v, c in self._coeffs.items() if abs(c) > eps})

    def l1(self) -> float:
        return math.fsum(abs(c) for c in self._coeffs.values())

    def l2(self) -> float:
        return math.sqrt(math.fsum(abs(c) ** 2 for c in self._coeffs.values()))

    def max_abs(self) -> float:
        return max((abs(c) for c in self._coeffs.values()), default=0.0)

    def to_json(self) -> list[dict]:
        return [
            {"m": v[0], "n": v[1], "re": c.real, "im": c.imag}
            for v, c in sorted(self._coeffs.items())
        ]

    @classmethod
    def from_json(cls, records: Iterable[Mapping]) -> Element:
        return cls(
            ((int(r["m"]), int(r["n"])), complex(float(r["re"]), float(r["im"])))
            for r in records
        )


def mul(a: Element, b: Element, params: TorusParams) -> Element:
    theta = params.theta * _PHASE_SIGN.get()
    out: dict[LatticeVector, complex] = {}
    bi = list(b._coeffs.items())
    for v, x in a._coeffs.items():
        for w, y in bi:
            key = (v[0] + w[0], v[1] + w[1])
            out[key] = out.get(key, 0j) + x * y * phase(v, w, theta)
    return Element._raw(out)


def mul_many(factors: Iterable[Element], params: TorusParams) -> Element:
    result = Element.one()
    for f in factors:
        result = mul(result, f, params)
    return result


def commutator(a: Element, b: Element, params: TorusParams) -> Element:
    return mul(a, b, params) - mul(b, a, params)


def star(a: Element) -> Element:
    return Element._raw({vneg(v): c.conjugate() for v, c in a._coeffs.items()})


def trace(a: Element) -> complex:
    return a[ZERO]


def delta(a: Element, params: TorusParams) -> Element:
    tau = params.tau
    return Element._raw({v: iota(v, tau) * c for v, c in a._coeffs.items() if v != ZERO})


def delta_inv(a: Element, params: TorusParams, tol: float = 1e-10) -> Element:
    """The trace-zero preimage of ``a`` under ``delta``.

    Raises :class:`TraceError` when ``|tr(a)| > tol``: such a right-hand side
    is not in the image of ``delta``.
    """
    tr = trace(a)
    if abs(tr) > tol:
        raise TraceError(f"delta_inv needs a trace-zero input, |tr| = {abs(tr):.3e} > {tol:.1e}")
    tau = params.tau
    return Element._raw({v: c / iota(v, tau) for v, c in a._coeffs.items() if v != ZERO})


@dataclass(frozen=True)
class Norms:
    l2: float
    l1: float
    sobolev: list[float]
    op_upper: float


def sobolev_norm(a: Element, params: TorusParams, s: int) -> float:
    # ||a||_s^2 = sum_{i<=s} ||delta^i a||_0^2, evaluated mode by mode.
    total = []
    for v, c in a._coeffs.items():
        w = abs(iota(v, params.tau)) ** 2
        total.append(abs(c) ** 2 * sum(w**i for i in range(s + 1)))
    return math.sqrt(math.fsum(total))


def norms(a: Element, params: TorusParams, s_max: int = 2) -> Norms:
    if s_max < 0:
        raise ValueError("s_max must be >= 0")
    l1 = a.l1()
    return Norms(
        l2=a.l2(),
        l1=l1,
        sobolev=[sobolev_norm(a, params, s) for s in range(s_max + 1)],
        op_upper=l1,
    )


def _as_matrix(g) -> np.ndarray:
    g = np.asarray(g, dtype=np.int64)
    if g.shape != (2, 2):
        raise ValueError(f"expected a 2x2 integer matrix, got shape {g.shape}")
    det = int(g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0])
    if det != 1:
        raise ValueError(f"SL2(Z) element must have determinant 1, got {det}")
    return g


def sl2_act(g, a: Element) -> Element:
    """The automorphism ``U_v -> U_{gv}``."""
    g = _as_matrix(g)
    a00, a01, a10, a11 = (int(x) for x in g.ravel())
    return Element._raw(
        {(a00 * v[0] + a01 * v[1], a10 * v[0] + a11 * v[1]): c for v, c in a._coeffs.items()}
    )


def modular_tau(g, tau: complex) -> complex:
    g = _as_matrix(g)
    a, b, c, d = (int(x) for x in g.ravel())
    return (a * tau + b) / (c * tau + d)


def contragredient(g) -> np.ndarray:
    """``g' = (g^T)^{-1}``, the matrix acting on ``tau`` in the equivariance laws."""
    g = _as_matrix(g)
    a, b, c, d = (int(x) for x in g.ravel())
    return np.array([[d, -c], [-b, a]], dtype=np.int64)


def max_coeff_diff(a: Element, b: Element) -> float:
    return (a - b).max_abs()


def rel_coeff_error(a: Element, b: Element) -> float:
    """Largest coefficientwise relative discrepancy (absolute below unit scale)."""
    worst = 0.0
    for v in a.support() | b.support():
        x, y = a[v], b[v]
        worst = max(worst, abs(x - y) / max(1.0, abs(x), abs(y)))
    return worst
