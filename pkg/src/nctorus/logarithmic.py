"""Logarithmic derivative ``L(x) = x^{-1} delta(x)`` and its trace ``chi``.

Inverses are only ever taken through a certificate: either
``||x - 1||_l1 < 1`` (Neumann series), or a factored input ``x = c U_v y``
whose monomial part is inverted exactly and whose ``y`` is Neumann-invertible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .convergence import DEFAULT_TOL, CertificateUnavailable, neumann_invert
from .torus import Element, LatticeVector, TorusParams, delta, iota, mul, trace


class QuantizationError(ArithmeticError):
    """``chi(x)`` is not within tolerance of the period lattice."""


@dataclass(frozen=True)
class Factored:
    """``scale * U_v * y``."""

    v: LatticeVector
    y: Element
    scale: complex = 1.0

    def expand(self, params: TorusParams) -> Element:
        return mul(Element.monomial(self.v, self.scale), self.y, params)

    def to_json(self) -> dict:
        return {
            "v": list(self.v),
            "scale": [complex(self.scale).real, complex(self.scale).imag],
            "y": self.y.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict) -> Factored:
        re, im = data.get("scale", [1.0, 0.0])
        return cls(tuple(int(c) for c in data["v"]), Element.from_json(data["y"]), complex(re, im))


def certified_inverse(x: Element | Factored, params: TorusParams, tol: float = DEFAULT_TOL) -> tuple[Element, Element]:
    """``(x, x^{-1})`` with the inverse obtained from a certificate.

    A lone monomial ``c U_v`` is inverted exactly.
    """
    if isinstance(x, Element) and len(x) == 1:
        ((v, c),) = x.items()
        x = Factored(v, Element.one(), c)
    if isinstance(x, Factored):
        if x.scale == 0:
            raise CertificateUnavailable("zero scale in factored element")
        y_inv = neumann_invert(x.y, params, tol)
        # (c U_v)^{-1} = c^{-1} U_{-v}
        u_inv = Element.monomial((-x.v[0], -x.v[1]), 1.0 / x.scale)
        return x.expand(params), mul(y_inv, u_inv, params)
    return x, neumann_invert(x, params, tol)


def log_derivative(x: Element | Factored, params: TorusParams, tol: float = DEFAULT_TOL) -> Element:
    full, inv = certified_inverse(x, params, tol)
    return mul(inv, delta(full, params), params)


def nearest_lattice_point(value: complex, tau: complex) -> tuple[tuple[int, int], float]:
    """Closest ``2 pi i (m tau + n)`` to ``value`` and the distance to it."""
    w = value / (2j * math.pi)
    m0 = w.imag / tau.imag
    best = None
    for m in range(math.floor(m0) - 1, math.ceil(m0) + 2):
        c = w.real - m * tau.real
        for n in (math.floor(c), math.ceil(c)):
            dist = abs(value - iota((m, n), tau))
            if best is None or dist < best[1]:
                best = ((m, n), dist)
    return best


@dataclass(frozen=True)
class ChiResult:
    value: complex
    lattice_point: tuple[int, int]
    residual: float

    def to_json(self) -> dict:
        return {
            "value": [self.value.real, self.value.imag],
            "lattice_point": list(self.lattice_point),
            "residual": self.residual,
        }


def chi(
    x: Element | Factored,
    params: TorusParams,
    tol: float = 1e-8,
    inverse_tol: float = 1e-13,
    strict: bool = True,
) -> ChiResult:
    """``tr(L(x))`` snapped to the period lattice ``2 pi i (Z + Z tau)``.

    Raises :class:`QuantizationError` when the residual is ``>= tol`` and
    ``strict`` is set.
    """
    value = trace(log_derivative(x, params, inverse_tol))
    point, dist = nearest_lattice_point(value, params.tau)
    if strict and dist >= tol:
        raise QuantizationError(f"chi = {value} is {dist:.3e} away from the lattice point {point}")
    return ChiResult(value, point, dist)
