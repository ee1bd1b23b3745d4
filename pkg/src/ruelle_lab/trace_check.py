"""Both sides of the trace formula on model flows.

Resonance side: sum over lambda of Lap(h)(-lambda) = int e^{lambda t} h(t) dt.
Orbit side: sum over gamma of T# h(T) e^{int g} / |det(I - P)|.
Test functions are smooth bumps h(t) = A exp(-1/(1-u^2)), u = (t-c)/w.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import Polynomial, legendre

from .models import ToralSuspension, orbit_weight
from .transfer import resonances_suspension

_GL_X, _GL_W = legendre.leggauss(32)


@dataclass(frozen=True)
class TestFunction:
    """Bump of half-width ``width`` around ``center``, scaled by ``amplitude``."""
    __test__ = False  # keep pytest from collecting this class

    center: float
    width: float
    amplitude: float = 1.0
    smoothness: str = "gevrey-2"

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("width must be positive")
        if self.center - self.width <= 0:
            raise ValueError("support must lie in (0, inf)")

    @classmethod
    def normalized(cls, center: float, width: float):
        """Bump with integral 1."""
        base = cls(center, width)
        return cls(center, width, 1.0 / base.integral())

    @property
    def support(self):
        return self.center - self.width, self.center + self.width

    @cached_property
    def _polys(self):
        # h^(k)(t) = w^-k P_k(u) (1-u^2)^(-2k) phi(u), phi(u) = exp(-1/(1-u^2))
        one_m = Polynomial([1.0, 0.0, -1.0])
        u = Polynomial([0.0, 1.0])
        P = [Polynomial([1.0])]
        for k in range(40):
            Pk = P[-1]
            P.append(Pk.deriv() * one_m ** 2 + 4 * k * u * one_m * Pk - 2 * u * Pk)
        return P

    def derivative(self, t, k: int = 0):
        """k-th derivative at t (array), zero outside the support."""
        if k > 40:
            raise ValueError("derivatives are tabulated up to order 40")
        t = np.asarray(t, dtype=float)
        u = (t - self.center) / self.width
        inside = np.abs(u) < 1
        out = np.zeros(t.shape)
        ui = u[inside]
        s = 1.0 - ui * ui
        with np.errstate(under="ignore"):
            phi = np.exp(-1.0 / s)
            out[inside] = self.amplitude * self._polys[k](ui) * s ** (-2 * k) * phi / self.width ** k
        return out

    def __call__(self, t):
        return self.derivative(t, 0)

    def integral(self) -> float:
        return float(np.real(laplace(self, 0.0)))

    def sup_norm(self, k: int, samples: int = 20001) -> float:
        t = np.linspace(*self.support, samples)
        return float(np.abs(self.derivative(t, k)).max())

    def ck_norm(self, k: int, samples: int = 20001) -> float:
        return max(self.sup_norm(j, samples) for j in range(k + 1))

    def bv_norm(self, k: int, samples: int = 20001) -> float:
        """Total variation of h^(k): integral of |h^(k+1)| by Gauss-Legendre panels."""
        a, b = self.support
        m = max(64, samples // 32)
        edges = np.linspace(a, b, m + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * (edges[1:] - edges[:-1])
        t = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
        wt = (half[:, None] * _GL_W[None, :]).ravel()
        return float(np.sum(wt * np.abs(self.derivative(t, k + 1))))


def laplace(h: TestFunction, lam, tol: float = 1e-12):
    """int e^{lam t} h(t) dt for scalar or array lam.

    Composite 32-point Gauss-Legendre on the support; the panel count is
    sized to the oscillation, then doubled until the values move less than
    tol.
    """
    lam = np.asarray(lam, dtype=complex)
    out, _ = laplace_with_error(h, lam.ravel(), tol)
    return out.reshape(lam.shape) if lam.ndim else complex(out[0])


def laplace_with_error(h: TestFunction, lam, tol: float = 1e-12):
    """(values, error estimates) for a 1-d array lam.

    The estimate is the change at the last panel doubling plus the rounding
    of the weighted sum, eps times the integral of |e^{lam t} h(t)|.
    """
    flat = np.asarray(lam, dtype=complex).ravel()
    a, b = h.support
    L = b - a
    out = np.empty(len(flat), dtype=complex)
    err = np.empty(len(flat))
    panels = np.maximum(8, 2 ** np.ceil(np.log2(np.maximum(1.0, np.abs(flat) * L / 16.0)))).astype(np.int64)
    for m in np.unique(panels):
        idx = np.flatnonzero(panels == m)
        k = int(m)
        prev = _laplace_panels(h, flat[idx], k)
        for _ in range(10):
            k *= 2
            cur = _laplace_panels(h, flat[idx], k)
            if np.all(np.abs(cur - prev) <= tol):
                break
            prev = cur
        out[idx] = cur
        err[idx] = np.abs(cur - prev)
    mass = _laplace_panels(h, flat.real + 0j, 8).real
    return out, err + 64 * np.finfo(float).eps * mass


def _laplace_panels(h, lam, m, chunk=256):
    a, b = h.support
    edges = np.linspace(a, b, m + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (b - a) / m
    t = mid[:, None] + half * _GL_X[None, :]
    H = half * _GL_W[None, :] * h(t)
    out = np.empty(len(lam), dtype=complex)
    # e^{lam t} = e^{lam mid} e^{lam half x}: equal panels make the node factor shared
    for i in range(0, len(lam), chunk):
        li = lam[i:i + chunk]
        node = np.exp(np.outer(li, half * _GL_X)) @ H.T
        out[i:i + chunk] = np.sum(np.exp(np.outer(li, mid)) * node, axis=1)
    return out


def laplace_bound(h: TestFunction, lam, k: int) -> np.ndarray:
    """Integration by parts k+1 times: |Lap| <= e^{Re lam t_max} ||h^(k)||_BV / |lam|^(k+1)."""
    lam = np.asarray(lam, dtype=complex)
    return np.exp(lam.real * np.where(lam.real >= 0, h.support[1], h.support[0])) * h.bv_norm(k) / np.abs(lam) ** (k + 1)


@dataclass
class TraceReport:
    value: complex
    tail: float
    terms: int
    partial: np.ndarray = field(default=None, repr=False)


def _sorted_resonances(res):
    entries = res.entries if hasattr(res, "entries") else list(res)
    # smallest |Im| first, ties by Re then sign, deterministic
    return sorted(((complex(l), int(m)) for l, m in entries),
                  key=lambda e: (abs(e[0].imag), -e[0].real, e[0].imag))


def resonance_tail(h: TestFunction, lam_kept, omitted=(), k_max: int = 24) -> float:
    """Bound on the part of the resonance sum left out.

    Omitted entries of the given set are bounded term by term. Beyond the
    set, resonances are modeled on the kept ones: density n / (2 Y) in
    |Im lambda| past Y = max |Im lambda|, real parts at most the largest
    kept one. Every term obeys the integration-by-parts bound with the best
    k <= k_max.
    """
    lam = np.array([l for l, _ in lam_kept], dtype=complex)
    B = np.array([h.bv_norm(k) for k in range(1, k_max + 1)])
    ks = np.arange(1, k_max + 1)
    tail = 0.0
    om = [(l, m) for l, m in omitted]
    if om:
        lo = np.array([l for l, _ in om], dtype=complex)
        mo = np.array([m for _, m in om], dtype=float)
        grow = np.exp(lo.real * np.where(lo.real >= 0, h.support[1], h.support[0]))
        bounds = grow[:, None] * B[None, :] / np.abs(lo)[:, None] ** (ks[None, :] + 1)
        tail += float(np.sum(mo * bounds.min(axis=1)))
    if not len(lam):
        return tail
    Y = float(np.abs(np.concatenate([lam, [l for l, _ in om]]).imag).max())
    if Y == 0:
        return tail
    dens = (len(lam) + len(om)) / (2 * Y)
    sig = float(lam.real.max())
    grow = math.exp(sig * (h.support[1] if sig >= 0 else h.support[0]))
    # 2 * int_Y^inf dens B_k / y^(k+1) dy
    return tail + float(np.min(2 * dens * grow * B / (ks * Y ** ks)))


def lhs_resonance_sum(res, h: TestFunction, K: int, with_partials: bool = False) -> TraceReport:
    """Sum over the K resonances of smallest |Im lambda| of m Lap(h)(-lambda)."""
    full = _sorted_resonances(res)
    ent = full[:K]
    if not ent:
        return TraceReport(0j, math.inf, 0)
    lam = np.array([l for l, _ in ent])
    mult = np.array([m for _, m in ent], dtype=float)
    lap, err = laplace_with_error(h, lam)
    vals = mult * lap
    value = complex(math.fsum(vals.real), math.fsum(vals.imag))
    partial = np.cumsum(vals) if with_partials else None
    # truncation bound plus quadrature and rounding estimates of the kept terms
    tail = resonance_tail(h, ent, full[K:]) + math.fsum(mult * err) + len(ent) * np.finfo(float).eps * abs(value)
    return TraceReport(value, tail, len(ent), partial)


class OrbitTableShort(ValueError):
    pass


def rhs_orbit_sum(orbits, h: TestFunction, g=None, T_max: float = None) -> complex:
    """sum over gamma of count T# h(T) e^{int g} / |det(I - P)|.

    T_max is the length up to which the table is complete (default: the
    largest length present); it must reach the end of the support of h.
    """
    if T_max is None:
        T_max = max((o.T for o in orbits), default=0.0)
    if T_max < h.support[1]:
        raise OrbitTableShort(f"orbit table short: complete up to {T_max}, support of h ends at {h.support[1]}")
    re, im = [], []
    for o in orbits:
        ht = float(h(np.array([o.T]))[0])
        if ht == 0.0:
            continue
        gi = o.g_integral if g is None else orbit_weight(o, g)
        v = o.count_hint * o.T_primitive * ht * np.exp(gi) / o.det_abs
        re.append(v.real)
        im.append(v.imag)
    return complex(math.fsum(re), math.fsum(im))


def operator_side_trace(sys: ToralSuspension, h: TestFunction, N: int, k_max: int) -> TraceReport:
    """Trace of int h(t) L_t dt via the resonances of the truncated fiber operator."""
    res = resonances_suspension(sys, N, k_max)
    return lhs_resonance_sum(res, h, len(res.values))


@dataclass
class CountingReport:
    K_list: list
    partial_sums: np.ndarray
    increments: np.ndarray
    slope: float
    classification: str


def counting_tail(res, epsilon: float, d: int, K_list, exponent: float = None) -> CountingReport:
    """Partial sums of e^{eps Re lambda} / (1 + |lambda|^(d+1+eps)) over the K nearest resonances.

    ``exponent`` overrides d+1+eps. Classification: the increments between
    successive K are fitted against K on log scales; a slope below -0.5
    is 'converging', otherwise 'diverging'.
    """
    K_list = [int(k) for k in K_list]
    if any(b <= a for a, b in zip(K_list, K_list[1:])):
        raise ValueError("K_list must be increasing")
    p = d + 1 + epsilon if exponent is None else exponent
    ent = res.entries if hasattr(res, "entries") else list(res)
    lam = np.array([l for l, m in ent for _ in range(m)], dtype=complex)
    lam = lam[np.lexsort((lam.imag, lam.real, np.abs(lam)))]
    terms = np.exp(epsilon * lam.real) / (1.0 + np.abs(lam) ** p)
    sums = np.array([math.fsum(terms[:k]) for k in K_list])
    inc = np.abs(np.diff(sums))
    if len(inc) >= 2 and np.all(inc > 0):
        slope = float(np.polyfit(np.log(K_list[1:]), np.log(inc), 1)[0])
    elif len(inc) >= 1 and np.all(inc == 0):
        slope = -math.inf
    else:
        slope = float("nan")
    if slope == -math.inf or slope < -0.5:
        cls = "converging"
    elif math.isnan(slope):
        cls = "converging" if len(lam) <= K_list[0] else "undetermined"
    else:
        cls = "diverging"
    return CountingReport(K_list, sums, inc, slope, cls)
