"""Denjoy-Carleman weight sequences and ultradifferentiable seminorms.

The weight sequence is A_m = exp(m**upsilon / kappa). Everything that compares
weights is done with logarithms since A_m overflows doubles for moderate m.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CarlemanParams:
    kappa: float
    upsilon: float

    def __post_init__(self):
        if not (self.kappa > 0):
            raise ValueError("kappa must be positive")
        if not (self.upsilon > 1):
            raise ValueError("upsilon must exceed 1")

    @property
    def decay_exponent(self) -> float:
        """Exponent upsilon/(upsilon-1) of the logarithm in the Fourier bound."""
        return self.upsilon / (self.upsilon - 1.0)

    def log_weight(self, m):
        return np.asarray(m, dtype=float) ** self.upsilon / self.kappa


def carleman_weight(m: int, p: CarlemanParams) -> float:
    if m < 0:
        raise ValueError("m must be nonnegative")
    return math.exp(float(p.log_weight(m)))


def log_convexity_check(p: CarlemanParams, m_max: int) -> bool:
    """True iff A_m**2 <= A_{m-1} A_{m+1} for 1 <= m <= m_max."""
    if m_max < 1:
        raise ValueError("m_max must be at least 1")
    la = p.log_weight(np.arange(m_max + 2))
    lhs = 2.0 * la[1:-1]
    rhs = la[:-2] + la[2:]
    # relative slack for rounding in m**upsilon
    return bool(np.all(lhs <= rhs + 1e-12 * np.maximum(1.0, np.abs(rhs))))


@dataclass
class SampledFunction:
    """Samples of a function on a uniform tensor grid.

    ``axes`` holds one uniformly spaced 1D coordinate array per dimension and
    ``values`` has shape ``tuple(len(a) for a in axes)``.
    """

    axes: tuple
    values: np.ndarray
    max_deriv_order: int = 10

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        self.values = np.asarray(self.values)
        shape = tuple(len(a) for a in self.axes)
        if self.values.shape != shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {shape}")
        for a in self.axes:
            if len(a) >= 2:
                h = np.diff(a)
                if not (h[0] > 0 and np.allclose(h, h[0], rtol=1e-9, atol=0)):
                    raise ValueError("grid spacing must be uniform and positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")

    @classmethod
    def from_callable(cls, f, axes, max_deriv_order=10):
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        mesh = np.meshgrid(*axes, indexing="ij")
        return cls(axes, f(*mesh), max_deriv_order)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def spacing(self):
        return tuple(a[1] - a[0] if len(a) > 1 else 1.0 for a in self.axes)


def fornberg_weights(order: int, offsets) -> np.ndarray:
    """Finite-difference weights for the derivative of given order at 0.

    Fornberg's recursion; stable for the stencil widths used here.
    """
    x = np.asarray(offsets, dtype=float)
    n = len(x)
    c = np.zeros((n, order + 1))
    c1 = 1.0
    c4 = x[0]
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = x[i]
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def centered_stencil(order: int, accuracy: int = 4):
    """Offsets and weights of the centered difference of the given accuracy."""
    if order == 0:
        return np.array([0]), np.array([1.0])
    half = (order + 1) // 2 - 1 + accuracy // 2
    offsets = np.arange(-half, half + 1)
    return offsets, fornberg_weights(order, offsets)


def _derivative_along(values, axis, order, h, accuracy=4):
    if order == 0:
        return values
    offsets, w = centered_stencil(order, accuracy)
    half = offsets[-1]
    n = values.shape[axis]
    out = np.zeros(values.shape[:axis] + (n - 2 * half,) + values.shape[axis + 1:], dtype=values.dtype)
    for off, wk in zip(offsets, w):
        sl = [slice(None)] * values.ndim
        sl[axis] = slice(half + off, n - half + off)
        out = out + wk * values[tuple(sl)]
    return out / h ** order


def partial_derivative(f: SampledFunction, alpha):
    """Centered 4th-order finite-difference approximation of d^alpha f.

    Returns (values, axes) on the interior where the stencil fits.
    """
    vals = f.values
    axes = list(f.axes)
    for ax, (k, h) in enumerate(zip(alpha, f.spacing)):
        if k == 0:
            continue
        offsets, _ = centered_stencil(k)
        half = offsets[-1]
        if len(axes[ax]) < 2 * half + 1:
            raise ValueError("insufficient stencil")
        vals = _derivative_along(vals, ax, k, h)
        axes[ax] = axes[ax][half:len(axes[ax]) - half]
    return vals, tuple(axes)


def _multi_indices(dim, total):
    for a in itertools.product(range(total + 1), repeat=dim):
        if sum(a) == total:
            yield a


def seminorm_estimate(f: SampledFunction, p: CarlemanParams, m_cap: int, alpha_cap: int) -> float:
    """Grid lower bound for sup (1+|x|)^m |d^a f(x)| exp(-(m+|a|)^upsilon/kappa).

    The sup runs over the sample points, |a| <= alpha_cap and m <= m_cap.
    """
    if m_cap < 0 or alpha_cap < 0:
        raise ValueError("caps must be nonnegative")
    if alpha_cap > f.max_deriv_order:
        raise ValueError("alpha_cap exceeds the derivative depth of the sampled function")
    offsets, _ = centered_stencil(alpha_cap)
    need = max(alpha_cap + 1, len(offsets))
    if any(len(a) < need for a in f.axes):
        raise ValueError("insufficient stencil")

    best = -np.inf
    ms = np.arange(m_cap + 1)
    for total in range(alpha_cap + 1):
        for alpha in _multi_indices(f.dim, total):
            vals, axes = partial_derivative(f, alpha)
            mag = np.abs(vals).ravel()
            nz = mag > 0
            if not np.any(nz):
                continue
            mesh = np.meshgrid(*axes, indexing="ij")
            rad = np.sqrt(sum(m ** 2 for m in mesh)).ravel()[nz]
            logmag = np.log(mag[nz])
            log1p = np.log1p(rad)
            # m enters linearly through m*log(1+|x|); scan the small set of m values
            pen = (ms + total) ** p.upsilon / p.kappa
            terms = logmag[:, None] + ms[None, :] * log1p[:, None] - pen[None, :]
            best = max(best, float(terms.max()))
    return 0.0 if best == -np.inf else math.exp(best)


def _log_decay_bound(fhat: SampledFunction, seminorm, p: CarlemanParams, R):
    mesh = np.meshgrid(*fhat.axes, indexing="ij")
    xi = np.sqrt(sum(m ** 2 for m in mesh))
    return math.log(seminorm) - R * np.log1p(xi) ** p.decay_exponent


def fourier_decay_check(fhat: SampledFunction, seminorm: float, p: CarlemanParams, R: float, C: float) -> bool:
    """True iff |fhat(xi)| <= C*seminorm*exp(-R*ln(1+|xi|)^(upsilon/(upsilon-1))) at every sample."""
    mag = np.abs(fhat.values)
    if not np.any(mag > 0):
        return True
    if seminorm <= 0:
        return False
    logb = _log_decay_bound(fhat, seminorm, p, R) + math.log(C)
    nz = mag > 0
    return bool(np.all(np.log(mag[nz]) <= logb[nz] + 1e-12))


def minimal_decay_constant(fhat: SampledFunction, seminorm: float, p: CarlemanParams, R: float,
                           rtol: float = 1e-9) -> float:
    """Smallest C passing fourier_decay_check, located by bisection on log C."""
    if fourier_decay_check(fhat, seminorm, p, R, 1e-300):
        return 0.0
    lo, hi = -700.0, 0.0
    while not fourier_decay_check(fhat, seminorm, p, R, math.exp(hi)):
        lo, hi = hi, hi + 50.0
        if hi > 700:
            raise OverflowError("decay constant exceeds double range")
    while hi - lo > rtol:
        mid = 0.5 * (lo + hi)
        if fourier_decay_check(fhat, seminorm, p, R, math.exp(mid)):
            hi = mid
        else:
            lo = mid
    return math.exp(hi)
