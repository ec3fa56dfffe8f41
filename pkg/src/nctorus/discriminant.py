"""Finite truncations of ``d_a = delta + ad(a)`` on the trace-zero subspace.

The box model keeps the monomials ``U_v`` with ``0 < max(|m|, |n|) <= N``.
Images that leave the box are dropped and their l2 mass is reported.

Along a line ``C a`` the discriminant is met at ``t`` exactly when
``-1/t`` is an eigenvalue of ``K = delta^{-1} ad(a)``; the scan reports the
candidates ``t = -1/lambda`` of each truncation and keeps only those that
are stable between consecutive radii.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .convergence import find_halfplane
from .torus import ZERO, Element, LatticeVector, TorusParams, TraceError, trace

DEFAULT_SV_TOL = 1e-8
STABILITY_RTOL = 1e-3
# eigenvalues below this fraction of the largest one are treated as zero
NILPOTENCY_RTOL = 1e-9


@dataclass(frozen=True)
class TruncationBox:
    radius: int
    basis: tuple[LatticeVector, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.radius < 1:
            raise ValueError("box radius must be >= 1")
        N = self.radius
        basis = tuple((m, n) for m in range(-N, N + 1) for n in range(-N, N + 1) if (m, n) != ZERO)
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self) -> int:
        return len(self.basis)

    def index(self) -> dict[LatticeVector, int]:
        return {v: i for i, v in enumerate(self.basis)}

    def contains(self, v: LatticeVector) -> bool:
        return max(abs(v[0]), abs(v[1])) <= self.radius

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        arr = np.array(self.basis, dtype=np.int64)
        return arr[:, 0], arr[:, 1]

    def iotas(self, params: TorusParams) -> np.ndarray:
        m, n = self.coords()
        return 2j * np.pi * (m * params.tau + n)

    def vector(self, x: Element) -> np.ndarray:
        """Coefficients of ``x`` on the basis (the trace and outside modes are dropped)."""
        idx = self.index()
        out = np.zeros(self.dim, dtype=complex)
        for v, c in x.items():
            if v in idx:
                out[idx[v]] = c
        return out

    def element(self, vec: np.ndarray) -> Element:
        return Element(zip(self.basis, vec))


@dataclass(frozen=True)
class Truncation:
    matrix: np.ndarray
    box: TruncationBox
    leak_max: float  # largest l2 mass lost by a single basis column
    leak_total: float  # Frobenius norm of everything lost


def _check_direction(a: Element, box: TruncationBox, tol: float) -> Element:
    if abs(trace(a)) > tol:
        raise TraceError(f"direction must be trace-zero, got |tr(a)| = {abs(trace(a)):.3e}")
    a = a - trace(a) if trace(a) != 0 else a
    outside = [v for v in a.support() if not box.contains(v)]
    if outside:
        raise ValueError(f"support of a leaves the box of radius {box.radius}: {sorted(outside)}")
    return a


def ad_matrix(a: Element, params: TorusParams, box: TruncationBox) -> tuple[np.ndarray, float, float]:
    """Matrix of ``x -> a x - x a`` on the box, with leak accounting."""
    m, n = box.coords()
    idx = box.index()
    N = box.radius
    dim = box.dim
    M = np.zeros((dim, dim), dtype=complex)
    leak_sq = np.zeros(dim)
    theta = params.theta
    cols = np.arange(dim)
    for w, c in a.items():
        # U_w U_v - U_v U_w = (e^{2 pi i <w,v>} - e^{2 pi i <v,w>}) U_{v+w}
        cross = w[0] * n - m * w[1]
        vals = c * 2j * np.sin(np.pi * theta * cross)
        tm, tn = m + w[0], n + w[1]
        inside = (np.abs(tm) <= N) & (np.abs(tn) <= N)
        rows = np.array([idx.get((int(p), int(q)), -1) for p, q in zip(tm, tn)])
        keep = inside & (rows >= 0)
        M[rows[keep], cols[keep]] += vals[keep]
        leak_sq[~inside] += np.abs(vals[~inside]) ** 2
    # images of distinct w per column are distinct monomials, so squares add
    return M, float(np.sqrt(leak_sq.max(initial=0.0))), float(np.sqrt(leak_sq.sum()))


def build_d_a(a: Element, params: TorusParams, box: TruncationBox, trace_tol: float = 1e-10) -> Truncation:
    a = _check_direction(a, box, trace_tol)
    M, leak_max, leak_total = ad_matrix(a, params, box)
    M[np.diag_indices(box.dim)] += box.iotas(params)
    return Truncation(M, box, leak_max, leak_total)


def build_K(a: Element, params: TorusParams, box: TruncationBox, trace_tol: float = 1e-10) -> Truncation:
    """``delta^{-1} ad(a)`` truncated to the box."""
    a = _check_direction(a, box, trace_tol)
    M, leak_max, leak_total = ad_matrix(a, params, box)
    return Truncation(M / box.iotas(params)[:, None], box, leak_max, leak_total)


@dataclass(frozen=True)
class KernelReport:
    dim: int
    smallest_svs: list[float]
    determined: bool
    sv_tol: float
    radius: int

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "smallest_svs": self.smallest_svs,
            "determined": self.determined,
            "sv_tol": self.sv_tol,
            "radius": self.radius,
        }


def kernel_dim(
    a: Element,
    params: TorusParams,
    box: TruncationBox,
    sv_tol: float = DEFAULT_SV_TOL,
    report: int = 6,
) -> KernelReport:
    """Number of singular values of the truncated ``d_a|_H`` below ``sv_tol``.

    The count is marked undetermined when a singular value falls within a
    factor ``sqrt(10)`` of ``sv_tol`` on either side, i.e. when there is no
    10x gap around the threshold.
    """
    T = build_d_a(a, params, box)
    svs = np.linalg.svd(T.matrix, compute_uv=False)
    svs = np.sort(svs)
    lo, hi = sv_tol / math.sqrt(10), sv_tol * math.sqrt(10)
    determined = not bool(np.any((svs > lo) & (svs < hi)))
    return KernelReport(
        dim=int(np.sum(svs <= sv_tol)),
        smallest_svs=[float(s) for s in svs[:report]],
        determined=determined,
        sv_tol=sv_tol,
        radius=box.radius,
    )


def nilpotency_depth(a: Element, h: tuple[int, int], box: TruncationBox) -> int:
    """Power after which ``K`` vanishes: each application raises ``h`` by at least ``min h(supp a)``."""
    eps = min(h[0] * v[0] + h[1] * v[1] for v in a.support())
    span = 2 * box.radius * (abs(h[0]) + abs(h[1]))
    return span // eps + 1


def power_vanishes(M: np.ndarray, p: int) -> tuple[bool, float]:
    """Whether ``M^q`` is exactly zero for some ``q >= p`` (by repeated squaring)."""
    P = M.copy()
    q = 1
    while q < p:
        P = P @ P
        q *= 2
    peak = float(np.abs(P).max(initial=0.0))
    return peak == 0.0, peak


@dataclass
class SpectralScan:
    direction: Element
    radii: list[int]
    eigenvalues: list[list[complex]]
    hits: list[list[complex]]
    drift: list[list[float]]
    stable: list[list[bool]]
    leak: list[float]
    halfplane: tuple[int, int] | None = None
    nilpotent: list[bool] | None = None
    notes: list[str] = field(default_factory=list)

    def stable_hits(self) -> list[complex]:
        """Hits at the largest radius whose drift chain stays under the threshold."""
        if not self.hits:
            return []
        return [t for t, ok in zip(self.hits[-1], self.stable[-1]) if ok]

    def to_json(self) -> dict:
        def cpx(z: complex) -> list[float]:
            return [z.real, z.imag]

        return {
            "direction": self.direction.to_json(),
            "radii": self.radii,
            "eigenvalues": [[cpx(z) for z in row] for row in self.eigenvalues],
            "theta_hits": [[cpx(z) for z in row] for row in self.hits],
            "drift": [[d if math.isfinite(d) else None for d in row] for row in self.drift],
            "stable": self.stable,
            "stable_hits": [cpx(z) for z in self.stable_hits()],
            "boundary_leak": self.leak,
            "halfplane": list(self.halfplane) if self.halfplane else None,
            "nilpotent": self.nilpotent,
            "notes": self.notes,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["radius", "eig_re", "eig_im", "t_re", "t_im", "drift", "stable"])
        for r, evs, hits, drift, stable in zip(self.radii, self.eigenvalues, self.hits, self.drift, self.stable):
            hit_of = {}
            for t, d, s in zip(hits, drift, stable):
                hit_of.setdefault(complex(-1.0 / t), []).append((t, d, s))
            for lam in evs:
                entry = hit_of.get(lam)
                if entry:
                    t, d, s = entry.pop()
                    w.writerow([r, repr(lam.real), repr(lam.imag), repr(t.real), repr(t.imag),
                                repr(d) if math.isfinite(d) else "", int(s)])
                else:
                    w.writerow([r, repr(lam.real), repr(lam.imag), "", "", "", ""])
        return buf.getvalue()


def _drifts(hits: list[complex], reference: list[complex]) -> list[float]:
    if not reference:
        return [math.inf] * len(hits)
    ref = np.array(reference)
    return [float(np.min(np.abs(ref - t)) / abs(t)) for t in hits]


def theta_line_scan(
    a: Element,
    params: TorusParams,
    radii: list[int],
    stability_rtol: float = STABILITY_RTOL,
    nil_rtol: float = NILPOTENCY_RTOL,
) -> SpectralScan:
    """Candidate intersection points of the discriminant with the line ``C a``."""
    if not a or (a - trace(a)).l1() == 0:
        raise ValueError("direction must be a nonzero trace-zero element")
    radii = sorted(int(r) for r in radii)
    h = find_halfplane(sorted(a.support() - {ZERO}))
    eigs, hits, leaks, nil = [], [], [], []
    notes = []
    if h is not None:
        notes.append(
            f"support lies in the half-plane {h[0]}*m + {h[1]}*n > 0: "
            "K is nilpotent on every box, so the truncated spectrum is {0}"
        )
    for r in radii:
        T = build_K(a, params, TruncationBox(r))
        leaks.append(T.leak_total)
        if h is not None:
            vanishes, _ = power_vanishes(T.matrix, nilpotency_depth(a, h, T.box))
            nil.append(vanishes)
            if vanishes:
                eigs.append([0j] * T.box.dim)
                hits.append([])
                continue
        ev = np.linalg.eigvals(T.matrix)
        ev = ev[np.lexsort((ev.imag, ev.real, -np.abs(ev)))]
        scale = float(np.abs(ev).max(initial=0.0))
        keep = np.abs(ev) > nil_rtol * max(scale, 1.0)
        eigs.append([complex(z) for z in ev])
        hits.append([complex(-1.0 / z) for z in ev[keep]])

    drift: list[list[float]] = []
    stable: list[list[bool]] = []
    for k, row in enumerate(hits):
        if len(hits) == 1:
            d = [math.inf] * len(row)
        elif k == 0:
            d = _drifts(row, hits[1])
        else:
            d = _drifts(row, hits[k - 1])
        drift.append(d)
    for k, row in enumerate(hits):
        ok = [di < stability_rtol for di in drift[k]]
        if k > 0:
            # chain: the matched hit one radius down must itself be stable
            prev = hits[k - 1]
            prev_ok = stable[k - 1]
            for i, t in enumerate(row):
                if ok[i] and prev:
                    j = int(np.argmin(np.abs(np.array(prev) - t)))
                    ok[i] = prev_ok[j]
        stable.append(ok)
    if len(radii) == 1:
        notes.append("single radius: no drift data, every hit is flagged unstable")
    return SpectralScan(
        direction=a,
        radii=radii,
        eigenvalues=eigs,
        hits=hits,
        drift=drift,
        stable=stable,
        leak=leaks,
        halfplane=h,
        nilpotent=nil if h is not None else None,
        notes=notes,
    )
