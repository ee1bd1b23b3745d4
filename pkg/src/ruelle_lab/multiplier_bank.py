"""Littlewood-Paley bands indexed by cones, anisotropic weights and norms.

Bands carry a tag in {0, 1, ..., r-1, 'f'}. Tags 0 and r-1 use the stretched
radial scale 2^(n^alpha), the others the dyadic scale 2^n. The low-frequency
piece psi_0 is split evenly over the r tags {1, ..., r-1, f}, so the bands
still sum to one.

Weights reach exp(900) on lattices of radius ~200, so every weight and norm
is carried as a logarithm. The plain-valued wrappers return inf on overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from .cones import ConeSystem, sphere_samples

LN2 = math.log(2.0)


# ---------------------------------------------------------------- radial cutoffs

def step_down(t):
    """Gevrey step: 1 for t <= 0, 0 for t >= 1, glued by exp(-1/t) terms."""
    t = np.asarray(t, dtype=float)
    out = np.where(t <= 0, 1.0, 0.0)
    mid = (t > 0) & (t < 1)
    if np.any(mid):
        tm = t[mid]
        out[mid] = expit(1.0 / tm - 1.0 / (1.0 - tm))
    return out


def chi(x):
    """Base cutoff: 1 on (-inf, 1/2], 0 on [1, inf)."""
    return step_down(2.0 * np.asarray(x, dtype=float) - 1.0)


def _chi_dyadic(n, rho):
    n = np.asarray(n)
    val = chi(rho * np.exp2(-np.asarray(n, dtype=float)))
    return np.where(n >= 1, val, 0.0)


def _chi_stretched(n, alpha, rho):
    n = np.asarray(n)
    nn = np.maximum(n, 0).astype(float)
    val = chi(rho - np.exp2(nn ** alpha))
    return np.where(n >= 1, val, 0.0)


def radial_cutoffs(n: int, alpha: float, xi_norm):
    """(chi_n, chi_alpha_n, psi_n, psi_alpha_n) at |xi| = xi_norm."""
    rho = np.asarray(xi_norm, dtype=float)
    c = _chi_dyadic(n, rho)
    ca = _chi_stretched(n, alpha, rho)
    if n < 0:
        z = np.zeros_like(rho)
        return c, ca, z, z
    p = _chi_dyadic(n + 1, rho) - c
    pa = _chi_stretched(n + 1, alpha, rho) - ca
    return c, ca, p, pa


def _psi(n, rho):
    return _chi_dyadic(np.asarray(n) + 1, rho) - _chi_dyadic(n, rho)


def _psi_a(n, alpha, rho):
    return _chi_stretched(np.asarray(n) + 1, alpha, rho) - _chi_stretched(n, alpha, rho)


def _psi_tilde(n, rho):
    n = np.asarray(n)
    return _chi_dyadic(n + 2, rho) - _chi_dyadic(n - 1, rho)


def _psi_a_tilde(n, alpha, b, rho):
    n = np.asarray(n)
    return _chi_stretched(n + b, alpha, rho) - _chi_stretched(n - b, alpha, rho)


# ---------------------------------------------------------------- parameters

def beta_ladder(r: int, d: int) -> dict:
    beta = {0: float(d + 2), r - 1: -float(d + 2), "f": -float(d + 2)}
    for i in range(1, r - 1):
        beta[i] = -float((i + 1) * (d + 2))
    return beta


def enlargement_ok(alpha: float, b: int, n_max: int = 200000) -> bool:
    """Check the two band-enlargement inequalities for 1 <= n <= n_max.

    Also requires the n = 0 enlarged band to be 1 on |xi| <= 3.
    """
    if b < 1:
        return False
    n = np.arange(1, n_max + 1, dtype=float)
    x1 = (n + 1) ** alpha
    xb = (n + b) ** alpha
    # 2^x1 - 2^xb + 1 <= 1/2  <=>  2^xb - 2^x1 >= 1/2
    up = np.exp2(x1) * np.expm1((xb - x1) * LN2)
    if np.any(up < 0.5):
        return False
    m = n[n - b >= 1]
    if len(m):
        x0 = m ** alpha
        xm = (m - b) ** alpha
        lo = np.exp2(xm) * np.expm1((x0 - xm) * LN2)
        if np.any(lo < 1.0):
            return False
    return 2.0 ** (b ** alpha) + 0.5 >= 3.0


def smallest_enlargement(alpha: float, b_max: int = 64) -> int:
    for b in range(1, b_max + 1):
        if enlargement_ok(alpha, b):
            return b
    raise ValueError("enlargement too small")


@dataclass(frozen=True)
class WeightSpec:
    alpha: float
    r: int
    d: int
    beta: dict = None
    nu: float = 1.0
    b: int = None
    t0: float = 0.5

    def __post_init__(self):
        if not (0 < self.alpha < 1):
            raise ValueError("alpha must lie in (0, 1)")
        if self.r < 2 or self.d < 1:
            raise ValueError("need r >= 2 and d >= 1")
        if not (self.nu > 0 and self.t0 > 0):
            raise ValueError("nu and t0 must be positive")
        ladder = beta_ladder(self.r, self.d)
        if self.beta is None:
            object.__setattr__(self, "beta", ladder)
        elif {k: float(v) for k, v in self.beta.items()} != ladder:
            raise ValueError(f"beta must follow the ladder {ladder}")
        if self.b is None:
            object.__setattr__(self, "b", smallest_enlargement(self.alpha))
        elif not enlargement_ok(self.alpha, self.b):
            raise ValueError("enlargement too small")

    @property
    def tags(self):
        return [*range(self.r), "f"]

    @property
    def dim(self) -> int:
        return self.d + 1

    def stretched(self, tag) -> bool:
        return tag == 0 or tag == self.r - 1

    def column(self, tag) -> int:
        if tag == "f":
            return self.r
        if isinstance(tag, (int, np.integer)) and 0 <= tag < self.r:
            return int(tag)
        raise ValueError(f"band tag {tag!r} outside {{0, ..., {self.r - 1}, f}}")


# ---------------------------------------------------------------- angular partition

class AngularPartition:
    """Smooth partition of unity on the sphere subordinate to a cone system.

    Raw bump for tag i: 1 where the cone slope is below inner*m_i, 0 above
    outer*m_i. Tags 1..r-2 are cut off near C_{i+2}, and tag f near C_2.
    The enlarged functions equal 1 on the support of the raw ones and live
    inside the open cones.
    """

    def __init__(self, theta: ConeSystem, inner=0.85, outer=0.95, cut_lo=1.05, cut_hi=1.25,
                 tilde_outer=0.99, tilde_cut=1.01, check_samples=20000, min_cover=1e-3):
        self.theta = theta
        self.r = theta.r
        self.inner, self.outer = inner, outer
        self.cut_lo, self.cut_hi = cut_lo, cut_hi
        self.tilde_outer, self.tilde_cut = tilde_outer, tilde_cut
        self.tags = [*range(self.r), "f"]
        cover = self.raw(sphere_samples(theta.dim, check_samples)).sum(axis=1)
        self.min_cover = float(cover.min())
        if self.min_cover < min_cover:
            raise ValueError("angular partition does not cover the sphere")

    def _slopes(self, X):
        th = self.theta
        return {tag: th.cone(tag).slope(X) for tag in [0, *range(1, self.r + 1), "f"]}

    def _cut(self, tag):
        """Cone the tag must avoid, if any."""
        if tag == "f":
            return 2
        if 1 <= tag <= self.r - 2:
            return tag + 2
        return None

    def raw(self, X, slopes=None):
        S = self._slopes(X) if slopes is None else slopes
        cols = []
        for tag in self.tags:
            m = self.theta.cone(tag).aperture
            v = step_down((S[tag] / m - self.inner) / (self.outer - self.inner))
            k = self._cut(tag)
            if k is not None:
                mk = self.theta.cone(k).aperture
                v = v * (1.0 - step_down((S[k] / mk - self.cut_lo) / (self.cut_hi - self.cut_lo)))
            cols.append(v)
        return np.column_stack(cols)

    def __call__(self, X, slopes=None):
        R = self.raw(X, slopes)
        tot = R.sum(axis=1, keepdims=True)
        return R / tot

    def enlarged(self, X, slopes=None):
        S = self._slopes(X) if slopes is None else slopes
        cols = []
        for tag in self.tags:
            m = self.theta.cone(tag).aperture
            v = step_down((S[tag] / m - self.outer) / (self.tilde_outer - self.outer))
            k = self._cut(tag)
            if k is not None:
                mk = self.theta.cone(k).aperture
                v = v * (1.0 - step_down((S[k] / mk - self.tilde_cut) / (self.cut_lo - self.tilde_cut)))
            cols.append(v)
        return np.column_stack(cols)


# ---------------------------------------------------------------- single bands

def _as_points(xi):
    X = np.asarray(xi, dtype=float)
    return (X[None, :], True) if X.ndim == 1 else (X, False)


def band_values_at(spec: WeightSpec, angular: AngularPartition, n: int, tag, X) -> np.ndarray:
    """psi_(n, tag) at each row of X."""
    col = spec.column(tag)
    if n < 0:
        return np.zeros(len(X))
    rho = np.linalg.norm(X, axis=1)
    phi = angular(X)[:, col]
    psi0 = _psi(0, rho)
    r = spec.r
    if tag == 0:
        return (1 - psi0) * _psi_a(n, spec.alpha, rho) * phi
    if tag == r - 1:
        v = (1 - psi0) * _psi_a(n, spec.alpha, rho) * phi
        return v + psi0 / r if n == 0 else v
    if n == 0:
        return psi0 / r
    return _psi(n, rho) * phi


def enlarged_band_values_at(spec: WeightSpec, angular: AngularPartition, n: int, tag, X) -> np.ndarray:
    col = spec.column(tag)
    if n < 0:
        return np.zeros(len(X))
    rho = np.linalg.norm(X, axis=1)
    if spec.stretched(tag):
        rad = _psi_a_tilde(n, spec.alpha, spec.b, rho)
    else:
        rad = _psi_tilde(n, rho)
    if n == 0:
        return rad
    return rad * angular.enlarged(X)[:, col]


def band_function(spec: WeightSpec, theta: ConeSystem, angular: AngularPartition, n: int, i, xi):
    if angular.theta is not theta:
        raise ValueError("angular partition was built for another cone system")
    X, single = _as_points(xi)
    v = band_values_at(spec, angular, n, i, X)
    return float(v[0]) if single else v


def enlarged_band_function(spec: WeightSpec, theta: ConeSystem, angular: AngularPartition, n: int, i, xi):
    if angular.theta is not theta:
        raise ValueError("angular partition was built for another cone system")
    X, single = _as_points(xi)
    v = enlarged_band_values_at(spec, angular, n, i, X)
    return float(v[0]) if single else v


def band_radial_support(spec: WeightSpec, n: int, tag, enlarged: bool = False):
    """Closed radial interval containing the support of the (enlarged) band."""
    a, b = spec.alpha, spec.b
    if spec.stretched(tag):
        if not enlarged:
            return (0.0, 3.0) if n == 0 else (2.0 ** (n ** a) + 0.5, 2.0 ** ((n + 1) ** a) + 1.0)
        if n == 0:
            return 0.0, 2.0 ** (b ** a) + 1.0
        lo = 2.0 ** ((n - b) ** a) + 0.5 if n - b >= 1 else 0.0
        return lo, 2.0 ** ((n + b) ** a) + 1.0
    if not enlarged:
        return (0.0, 2.0) if n == 0 else (2.0 ** (n - 1), 2.0 ** (n + 1))
    if n == 0:
        return 0.0, 4.0
    return (2.0 ** (n - 2) if n >= 2 else 0.0), 2.0 ** (n + 2)


# ---------------------------------------------------------------- vectorized decomposition

def _dyadic_candidates(rho):
    with np.errstate(divide="ignore"):
        n0 = np.floor(np.log2(np.maximum(rho, 1e-300)))
    n0 = np.maximum(n0, 0).astype(np.int64)
    return np.stack([n0, n0 + 1], axis=1)


def _stretched_candidates(rho, alpha):
    hi = np.floor(np.log2(np.maximum(rho - 0.5, 1.0)) ** (1.0 / alpha)).astype(np.int64)
    lo = np.floor(np.log2(np.maximum(rho - 1.0, 1.0)) ** (1.0 / alpha)).astype(np.int64)
    lo = np.maximum(lo - 1, 0)
    width = int((hi - lo).max()) + 2 if len(rho) else 1
    return lo[:, None] + np.arange(width)[None, :]


def band_decomposition(spec: WeightSpec, angular: AngularPartition, X, rho=None, phi=None):
    """All potentially nonzero bands at the rows of X.

    Returns {tag: (n, values)} with n and values of shape (P, W). Entry [p, w]
    is psi_(n[p, w], tag) at X[p]. The n = 0 share psi_0/r appears at n = 0
    for the r dyadic-or-(r-1) tags.
    """
    rho = np.linalg.norm(X, axis=1) if rho is None else rho
    phi = angular(X) if phi is None else phi
    psi0 = _psi(0, rho)
    r, al = spec.r, spec.alpha
    nd = _dyadic_candidates(rho)
    ns = _stretched_candidates(rho, al)
    rad_d = _psi(nd, rho[:, None])
    rad_s = _psi_a(ns, al, rho[:, None]) * (1 - psi0)[:, None]
    share = psi0 / r
    out = {}
    for tag in spec.tags:
        ph = phi[:, spec.column(tag)][:, None]
        if tag == 0:
            out[tag] = (ns, rad_s * ph)
        elif tag == r - 1:
            v = rad_s * ph
            v = v + np.where(ns == 0, share[:, None], 0.0)
            out[tag] = (ns, v)
        else:
            v = np.where(nd == 0, share[:, None], rad_d * ph)
            out[tag] = (nd, v)
    return out


def partition_sum(spec: WeightSpec, angular: AngularPartition, X) -> np.ndarray:
    dec = band_decomposition(spec, angular, X)
    return sum(v.sum(axis=1) for _, v in dec.values())


def active_band_count(spec: WeightSpec, angular: AngularPartition, X) -> np.ndarray:
    dec = band_decomposition(spec, angular, X)
    return sum((v > 0).sum(axis=1) for _, v in dec.values())


# ---------------------------------------------------------------- weights

def _log_stretched_weight(beta, alpha, rho):
    return beta * np.log1p(rho) ** (1.0 / alpha) / LN2 ** (1.0 / alpha - 1.0)


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def log_weight_w(spec: WeightSpec, angular: AngularPartition, X, rho=None, phi=None) -> np.ndarray:
    """log w at each row of X."""
    rho = np.linalg.norm(X, axis=1) if rho is None else rho
    phi = angular(X) if phi is None else phi
    psi0 = _psi(0, rho)
    terms = []
    for tag in spec.tags:
        beta = spec.beta[tag]
        if spec.stretched(tag):
            lw = _log_stretched_weight(beta, spec.alpha, rho)
        else:
            lw = 0.5 * beta * np.log1p(rho ** 2)
        terms.append(_log(phi[:, spec.column(tag)]) + lw)
    outer = _log(1 - psi0) + logsumexp(np.column_stack(terms), axis=1)
    return np.logaddexp(_log(psi0), outer)


def weight_w(spec: WeightSpec, theta: ConeSystem, angular: AngularPartition, xi):
    X, single = _as_points(xi)
    with np.errstate(over="ignore"):
        v = np.exp(log_weight_w(spec, angular, X))
    return float(v[0]) if single else v


def log_lp_weight(spec: WeightSpec, angular: AngularPartition, X, dec=None) -> np.ndarray:
    """log of sum over bands of (2^(n beta_i) psi_(n,i))^2 at each row of X."""
    dec = band_decomposition(spec, angular, X) if dec is None else dec
    parts = []
    for tag, (n, v) in dec.items():
        parts.append(2.0 * (n * spec.beta[tag] * LN2 + _log(v)))
    return logsumexp(np.concatenate(parts, axis=1), axis=1)


def isotropic_weight(alpha: float, beta: float, n):
    """exp(beta * ln(1+|n|)^(1/alpha))."""
    if not (0 < alpha < 1) or not beta > 0:
        raise ValueError("need alpha in (0,1) and beta > 0")
    return np.exp(log_isotropic_weight(alpha, beta, n))


def log_isotropic_weight(alpha, beta, n):
    return beta * np.log1p(np.abs(np.asarray(n, dtype=float))) ** (1.0 / alpha)


# ---------------------------------------------------------------- lattices and norms

@dataclass(frozen=True)
class FrequencyLattice:
    dim: int
    radius: int

    @property
    def count(self) -> int:
        return (2 * self.radius + 1) ** self.dim

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    def points(self) -> np.ndarray:
        ax = np.arange(-self.radius, self.radius + 1)
        mesh = np.meshgrid(*([ax] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1).astype(float)

    def chunks(self, max_points: int = 1 << 20):
        """Yield (flat index range, points) blocks in row-major order."""
        side = self.side
        per = side ** (self.dim - 1)
        rows = max(1, max_points // per)
        ax = np.arange(-self.radius, self.radius + 1)
        tail = np.meshgrid(*([ax] * (self.dim - 1)), indexing="ij")
        tail = np.stack([m.ravel() for m in tail], axis=1).astype(float) if self.dim > 1 else np.zeros((1, 0))
        for start in range(0, side, rows):
            stop = min(side, start + rows)
            first = np.repeat(ax[start:stop].astype(float), per)
            pts = np.column_stack([first, np.tile(tail, (stop - start, 1))])
            yield (start * per, stop * per), pts


@dataclass
class BandCoefficients:
    """Coefficients attached to one band on a set of frequency points."""
    band: tuple
    points: np.ndarray
    coefficients: np.ndarray = field(repr=False)


def _coeffs(u_hat, lattice):
    if isinstance(u_hat, BandCoefficients):
        return u_hat.points, u_hat.coefficients
    if isinstance(u_hat, tuple):
        return np.asarray(u_hat[0], dtype=float), np.asarray(u_hat[1])
    if lattice is None:
        side = np.shape(u_hat)[0]
        lattice = FrequencyLattice(np.ndim(u_hat), (side - 1) // 2)
    return lattice.points(), np.asarray(u_hat).ravel()


def log_norm_sobolev(u_hat, spec, theta, angular, lattice=None) -> float:
    X, c = _coeffs(u_hat, lattice)
    a = np.abs(c)
    nz = a > 0
    if not np.any(nz):
        return -math.inf
    return 0.5 * float(logsumexp(2 * np.log(a[nz]) + 2 * log_weight_w(spec, angular, X[nz])))


def log_norm_littlewood_paley(u_hat, spec, theta, angular, lattice=None) -> float:
    X, c = _coeffs(u_hat, lattice)
    a = np.abs(c)
    nz = a > 0
    if not np.any(nz):
        return -math.inf
    return 0.5 * float(logsumexp(2 * np.log(a[nz]) + log_lp_weight(spec, angular, X[nz])))


def norm_sobolev(u_hat, spec, theta, angular, lattice=None) -> float:
    """sqrt(sum |u(xi)|^2 w(xi)^2) over unit lattice cells."""
    lv = log_norm_sobolev(u_hat, spec, theta, angular, lattice)
    return 0.0 if lv == -math.inf else (math.exp(lv) if lv < 709 else math.inf)


def norm_littlewood_paley(u_hat, spec, theta, angular, lattice=None) -> float:
    """sqrt(sum over bands of (2^(n beta_i) ||psi_(n,i) u||)^2)."""
    lv = log_norm_littlewood_paley(u_hat, spec, theta, angular, lattice)
    return 0.0 if lv == -math.inf else (math.exp(lv) if lv < 709 else math.inf)


# ---------------------------------------------------------------- norm equivalence

@dataclass
class NormEquivalenceResult:
    radius: int
    log_ratio_min: float
    log_ratio_max: float
    draw_bands: list
    draw_log_ratios: np.ndarray
    draw_support_sizes: np.ndarray

    @property
    def pointwise_C(self) -> float:
        """Smallest C with 1/C <= sqrt(W_LP)/w <= C at every lattice point."""
        return math.exp(max(self.log_ratio_max, -self.log_ratio_min))

    @property
    def draw_C(self) -> float:
        """Smallest C containing every draw ratio ||u||_LP / ||u||_w."""
        return math.exp(float(np.abs(self.draw_log_ratios).max()))


def _lattice_fields(spec, angular, X):
    rho = np.linalg.norm(X, axis=1)
    phi = angular(X)
    dec = band_decomposition(spec, angular, X, rho=rho, phi=phi)
    lw = log_weight_w(spec, angular, X, rho=rho, phi=phi)
    lp = log_lp_weight(spec, angular, X, dec=dec)
    return rho, dec, lw, lp


def _candidate_bands(spec, radius):
    """Bands whose radial support meets the ball |xi| < radius."""
    out = []
    for tag in spec.tags:
        n = 0
        while band_radial_support(spec, n, tag)[0] < radius:
            out.append((n, tag))
            n += 1
    return out


def norm_equivalence_experiment(spec: WeightSpec, angular: AngularPartition, radius: int,
                                draws: int = 100, seed: int = 0, chunk: int = 1 << 19) -> NormEquivalenceResult:
    """Compare the w-norm and the Littlewood-Paley norm on a frequency lattice.

    The pointwise ratio sqrt(W_LP(xi))/w(xi) is scanned over every lattice
    point. Each draw picks a band (n, i) uniformly among the bands meeting
    the inscribed ball and puts psi_(n,i)(xi) times a complex Gaussian on its
    lattice support; draws whose support misses the lattice are replaced.
    """
    lat = FrequencyLattice(spec.dim, radius)
    rng = np.random.default_rng(seed)
    cands = _candidate_bands(spec, radius)
    order = rng.permutation(len(cands))
    picked = [cands[k] for k in order]
    lo, hi = math.inf, -math.inf
    # log sums per candidate in permutation order; trimmed to `draws` nonempty ones
    m = len(picked)
    s_w = np.full(m, -np.inf)
    s_lp = np.full(m, -np.inf)
    size = np.zeros(m, dtype=np.int64)
    index = {b: k for k, b in enumerate(picked)}
    for _, X in lat.chunks(chunk):
        rho, dec, lw, lp = _lattice_fields(spec, angular, X)
        q = 0.5 * lp - lw
        lo, hi = min(lo, float(q.min())), max(hi, float(q.max()))
        inside = rho < radius
        for tag, (n, v) in dec.items():
            rows, cols = np.nonzero((v > 0) & inside[:, None])
            if not len(rows):
                continue
            keys = n[rows, cols]
            srt = np.argsort(keys, kind="stable")
            rows, cols, keys = rows[srt], cols[srt], keys[srt]
            uniq, starts = np.unique(keys, return_index=True)
            ends = np.append(starts[1:], len(keys))
            for nn, a, b in zip(uniq, starts, ends):
                k = index.get((int(nn), tag))
                if k is None:
                    continue
                rr, cc = rows[a:b], cols[a:b]
                g = np.random.default_rng([seed, k, int(size[k])])
                c = g.standard_normal(len(rr)) + 1j * g.standard_normal(len(rr))
                la = 2 * (np.log(np.abs(c)) + np.log(v[rr, cc]))
                s_w[k] = np.logaddexp(s_w[k], logsumexp(la + 2 * lw[rr]))
                s_lp[k] = np.logaddexp(s_lp[k], logsumexp(la + lp[rr]))
                size[k] += len(rr)
    keep = np.flatnonzero(size > 0)[:draws]
    if len(keep) < draws:
        raise ValueError(f"only {len(keep)} bands meet the lattice")
    return NormEquivalenceResult(
        radius=radius, log_ratio_min=lo, log_ratio_max=hi,
        draw_bands=[picked[k] for k in keep],
        draw_log_ratios=0.5 * (s_lp[keep] - s_w[keep]),
        draw_support_sizes=size[keep])
