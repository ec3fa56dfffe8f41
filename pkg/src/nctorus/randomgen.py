"""Seeded random elements with controlled support and l1 norm."""

from __future__ import annotations

import numpy as np

from .torus import ZERO, Element


def random_element(
    rng: np.random.Generator,
    size: int = 3,
    box: int = 2,
    l1: float | None = None,
    trace_zero: bool = True,
    paired: bool = False,
) -> Element:
    """``size`` distinct modes from ``[-box, box]^2`` with complex Gaussian coefficients.

    When ``l1`` is given the coefficients are rescaled to that l1 norm. With
    ``paired`` every chosen mode also gets its negative (independent
    coefficient), so traces of products do not vanish for support reasons.
    """
    pts = [(m, n) for m in range(-box, box + 1) for n in range(-box, box + 1)]
    if trace_zero:
        pts.remove(ZERO)
    if size > len(pts):
        raise ValueError(f"cannot pick {size} modes from a box of radius {box}")
    chosen = [pts[int(i)] for i in sorted(rng.choice(len(pts), size=size, replace=False))]
    if paired:
        chosen = sorted(set(chosen) | {(-m, -n) for m, n in chosen})
    coeffs = rng.standard_normal(len(chosen)) + 1j * rng.standard_normal(len(chosen))
    if l1 is not None:
        coeffs *= l1 / np.abs(coeffs).sum()
    return Element({v: complex(c) for v, c in zip(chosen, coeffs)})


def random_sl2(rng: np.random.Generator, bound: int = 3) -> np.ndarray:
    """A uniformly drawn SL2(Z) matrix with entries in ``[-bound, bound]``."""
    while True:
        g = rng.integers(-bound, bound + 1, size=(2, 2))
        if g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0] == 1:
            return g


def random_zero_sum_tuple(rng: np.random.Generator, n: int, box: int = 2) -> list[tuple[int, int]]:
    """``n`` lattice vectors (``n >= 2``) summing to zero; the last one closes the sum."""
    while True:
        vs = [tuple(int(c) for c in rng.integers(-box, box + 1, size=2)) for _ in range(n - 1)]
        last = (-sum(v[0] for v in vs), -sum(v[1] for v in vs))
        if max(abs(last[0]), abs(last[1])) <= box:
            return vs + [last]
