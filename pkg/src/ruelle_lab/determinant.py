"""Dynamical determinants from orbit sums, Hadamard-type factors, order estimates.

The determinant is d_g(s) = exp(-sum_gamma (T#/T) e^{int g} e^{-sT} / |det(I-P)|).
Each factor G_{lambda,t0} is handled through its logarithm

    log G(z) = log(1 - z/lambda) + Q(z) e^{-(z-lambda) t0} - Q(0) e^{lambda t0}
               + E(-(z-lambda) t0) - E(lambda t0),

with E(w) = int_0^1 (e^{wu} - 1)/u du, so that G(0) = 1 and
G'/G(z) = e^{-(z-lambda)t0} (1/(z-lambda) + sum_{n<=d+1} z^n / lambda^(n+1)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre

from .errors import ConvergenceError, NumericalFailure


# ---------------------------------------------------------------- orbit sums

@dataclass
class DeterminantGrid:
    points: np.ndarray
    values: np.ndarray
    partial_terms: np.ndarray
    cutoff: float
    tail: np.ndarray = None
    abscissa: float = None


def _orbit_arrays(orbits):
    """(T, weight) arrays in increasing T, weight = count (T#/T) e^{int g} / |det(I - P)|."""
    orbits = sorted(orbits, key=lambda o: o.T)
    T = np.array([o.T for o in orbits], dtype=float)
    w = np.array([o.count_hint * (o.T_primitive / o.T) / o.det_abs for o in orbits], dtype=float)
    g = np.array([o.g_integral for o in orbits], dtype=complex)
    return T, w * np.exp(g)


def growth_rate(orbits) -> tuple:
    """Time step tau and the largest (1/T) log(n * b(T)), where b(T) is the
    sum of count (T#/T) |e^{int g}| / |det(I - P)| over orbits of length T
    and n = T / tau. Equals sup Re g for constant potentials on the models."""
    T, c = _orbit_arrays(orbits)
    if not len(T):
        return 1.0, -math.inf
    return _growth(T, np.abs(c))


def _growth(T, a):
    keys = np.round(T, 12)
    uniq, start = np.unique(keys, return_index=True)
    tau = float(uniq[0])
    rho = -math.inf
    for Tk, lo, hi in zip(uniq, start, np.append(start[1:], len(T))):
        b = math.fsum(a[lo:hi])
        rho = max(rho, math.log(Tk / tau * b) / Tk)
    return tau, rho


def _orbit_terms(orbits, s):
    """Per orbit-length sums of count (T#/T) e^{int g - s T} / |det(I - P)|."""
    T, c = _orbit_arrays(orbits)
    v = c * np.exp(-s * T)
    keys = np.round(T, 12)
    uniq, start = np.unique(keys, return_index=True)
    sums = [complex(math.fsum(v[lo:hi].real), math.fsum(v[lo:hi].imag))
            for lo, hi in zip(start, np.append(start[1:], len(T)))]
    return uniq, np.array(sums, dtype=complex)


def dg_orbit_sum(orbits, s, T_max: float = None, rho: float = None, tau: float = None):
    """d_g(s) from the orbits with T <= T_max, with a tail bound.

    The tail of the exponent is dominated by sum_{n > n_max} q^n / n with
    q = exp(tau (rho - Re s)); rho defaults to the growth rate of the table.
    Returns (value, bound on |d_g(s) - value|).
    """
    orbits = [o for o in orbits if T_max is None or o.T <= T_max + 1e-12]
    s = complex(s)
    if not orbits:
        return 1.0 + 0j, 0.0
    t_tau, t_rho = growth_rate(orbits)
    tau = t_tau if tau is None else tau
    rho = t_rho if rho is None else rho
    if s.real <= rho:
        raise ConvergenceError(f"Re s = {s.real:.6g} is outside convergence half-plane Re s > {rho:.6g}")
    Ts, sums = _orbit_terms(orbits, s)
    expo = complex(math.fsum(sums.real), math.fsum(sums.imag))
    val = complex(np.exp(-expo))
    T_top = max(Ts) if T_max is None else T_max
    n_top = int(math.floor(T_top / tau + 1e-9))
    q = math.exp(tau * (rho - s.real))
    tail = q ** (n_top + 1) / ((n_top + 1) * (1.0 - q))
    return val, abs(val) * math.expm1(tail)


def dg_log_derivative(orbits, s, T_max: float = None) -> complex:
    """d/ds log d_g(s) = sum_gamma T# e^{int g - sT} / |det(I - P)|."""
    s = complex(s)
    re, im = [], []
    for o in orbits:
        if T_max is not None and o.T > T_max + 1e-12:
            continue
        v = o.count_hint * o.T_primitive * np.exp(o.g_integral - s * o.T) / o.det_abs
        re.append(v.real)
        im.append(v.imag)
    return complex(math.fsum(re), math.fsum(im))


def dg_grid(orbits, points, T_max: float = None, rho: float = None) -> DeterminantGrid:
    pts = np.asarray(points, dtype=complex).ravel()
    vals = np.empty(len(pts), dtype=complex)
    tails = np.empty(len(pts))
    terms = None
    for i, s in enumerate(pts):
        vals[i], tails[i] = dg_orbit_sum(orbits, s, T_max, rho)
    used = [o for o in orbits if T_max is None or o.T <= T_max + 1e-12]
    if len(pts) and used:
        _, sums = _orbit_terms(used, pts[np.argmin(pts.real)])
        terms = np.abs(sums)
    cutoff = T_max if T_max is not None else max((o.T for o in used), default=0.0)
    _, ab = growth_rate(used)
    return DeterminantGrid(pts, vals, terms, cutoff, tails, ab)


def discrete_determinant(orbits, z, n_max: int = None, rho: float = None):
    """exp(-sum_gamma (T#/T) e^{int g} z^T / |det(I - P)|) for maps (T = period).

    z may be an array. Returns (value, tail bound) with q = |z| e^rho.
    """
    zs = np.asarray(z, dtype=complex)
    orbits = [o for o in orbits if n_max is None or o.T <= n_max]
    if not orbits:
        return (1.0 + 0j, 0.0) if zs.ndim == 0 else (np.ones(zs.shape, complex), np.zeros(zs.shape))
    T, c = _orbit_arrays(orbits)
    _, t_rho = _growth(T, np.abs(c))
    rho = t_rho if rho is None else rho
    top = int(round(T.max())) if n_max is None else n_max
    n = np.rint(T).astype(int)
    vals, tails = [], []
    for zz in zs.ravel():
        q = abs(zz) * math.exp(rho)
        if q >= 1:
            raise ConvergenceError(f"|z| = {abs(zz):.6g} is outside the convergence disc |z| < {math.exp(-rho):.6g}")
        v = c * zz ** n
        val = complex(np.exp(-complex(math.fsum(v.real), math.fsum(v.imag))))
        vals.append(val)
        tails.append(abs(val) * math.expm1(q ** (top + 1) / ((top + 1) * (1 - q))))
    if zs.ndim == 0:
        return vals[0], tails[0]
    return np.array(vals).reshape(zs.shape), np.array(tails).reshape(zs.shape)


# ---------------------------------------------------------------- Hadamard-type factors

def q_polynomial(lam, t0: float, d: int) -> np.ndarray:
    """Coefficients q_0..q_{d+1} of Q with Q' - t0 Q = sum_{n<=d+1} X^n / lam^(n+1).

    q_k = -sum_{n=k}^{d+1} n! / (k! lam^(n+1) t0^(n+1-k)).
    """
    lam = complex(lam)
    if lam == 0:
        raise ValueError("lambda must be nonzero")
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    top = d + 1
    q = np.zeros(top + 1, dtype=complex)
    for k in range(top + 1):
        acc = 0j
        for n in range(k, top + 1):
            acc += math.factorial(n) / math.factorial(k) / (lam ** (n + 1) * t0 ** (n + 1 - k))
        q[k] = -acc
    return q


_GL_X, _GL_W = legendre.leggauss(24)


def e_integral(w):
    """E(w) = int_0^1 (e^{wu} - 1)/u du for complex w (array or scalar).

    The integrand is replaced by its Taylor series on [0, c] with
    c = min(1, 1e-2/|w|). On [c, 1] a composite 24-point Gauss-Legendre rule
    with about |w|/3 panels is compared against twice as many panels; the
    panel count doubles until the two agree.
    """
    w = np.asarray(w, dtype=complex)
    flat = w.ravel()
    aw = np.abs(flat)
    cut = np.where(aw > 0, np.minimum(1.0, 1e-2 / np.maximum(aw, 1e-300)), 1.0)
    out = _e_series(flat, cut)
    todo = np.flatnonzero(cut < 1.0)
    if len(todo):
        m = np.maximum(1, 2 ** np.ceil(np.log2(np.maximum(aw[todo] / 3.0, 1.0)))).astype(np.int64)
        for mm in np.unique(m):
            idx = todo[m == mm]
            out[idx] += _e_panels_adaptive(flat[idx], cut[idx], int(mm))
    return out.reshape(w.shape) if w.ndim else complex(out[0])


def _e_series(w, cut):
    """int_0^cut of sum_{j>=1} w^j u^(j-1)/j! du, for |w cut| <= 1e-2."""
    tot = np.zeros(w.shape, dtype=complex)
    term = np.ones(w.shape, dtype=complex)
    for j in range(1, 12):
        term = term * w * cut / j
        tot += term / j
    return tot


def _e_panels(w, cut, m):
    v = (np.arange(m)[:, None] + 0.5 * (1.0 + _GL_X[None, :])).ravel() / m
    wt = np.tile(_GL_W, m) / (2.0 * m)
    u = cut[:, None] + (1.0 - cut)[:, None] * v[None, :]
    with np.errstate(over="ignore", invalid="ignore"):
        f = np.expm1(w[:, None] * u) / u
    return (1.0 - cut) * (f @ wt)


def _e_panels_adaptive(w, cut, m, max_doublings=12):
    prev = _e_panels(w, cut, m)
    scale = np.maximum(1.0, np.exp(np.maximum(w.real, 0.0)))
    for _ in range(max_doublings):
        m *= 2
        cur = _e_panels(w, cut, m)
        if np.all(np.abs(cur - prev) <= 1e-14 * np.maximum(scale, np.abs(cur))):
            return cur
        prev = cur
    raise NumericalFailure("E integral did not converge")


def _segment_exp_integral(a, b):
    """int from b to a of e^t / t dt along the straight segment (0 off the segment)."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))
    a, b = a.ravel(), b.ravel()
    h = a - b
    L = np.abs(h)
    # distance from 0 to the segment
    v0 = np.clip(-np.real(b * np.conj(h)) / np.maximum(L ** 2, 1e-300), 0.0, 1.0)
    dist = np.abs(b + v0 * h)
    m = 2 ** np.ceil(np.log2(np.maximum(1.0, L / np.minimum(dist, 2.0)))).astype(np.int64)
    out = np.zeros(len(a), dtype=complex)
    for mm in np.unique(m):
        idx = np.flatnonzero(m == mm)
        k = int(mm)
        prev = _segment_panels(a[idx], b[idx], k)
        for _ in range(12):
            k *= 2
            cur = _segment_panels(a[idx], b[idx], k)
            scale = np.exp(np.maximum(a[idx].real, b[idx].real)) * L[idx] / dist[idx]
            if np.all(np.abs(cur - prev) <= 1e-15 * np.maximum(scale, np.abs(cur))):
                break
            prev = cur
        else:
            raise NumericalFailure("segment integral did not converge")
        out[idx] = cur
    return out


def _segment_panels(a, b, m):
    v = (np.arange(m)[:, None] + 0.5 * (1.0 + _GL_X[None, :])).ravel() / m
    wt = np.tile(_GL_W, m) / (2.0 * m)
    t = b[:, None] + (a - b)[:, None] * v[None, :]
    return (a - b) * ((np.exp(t) / t) @ wt)


def log_hadamard_factor(lam, t0: float, d: int, z):
    """log G_{lam,t0}(z), continuous along the segment from 0 to z.

    lam = 0 gives the primitive of e^{-t0 z}/z vanishing at z = 1.
    For |lam| t0 large compared to |z| t0 the combination
    log(1 - z/lam) + E(w) - E(lam t0) is the integral of e^t/t from lam t0 to
    w = (lam - z) t0, which stays away from the origin.
    """
    lam = complex(lam)
    z = np.asarray(z, dtype=complex)
    if lam == 0:
        return np.log(z) + e_integral(-t0 * z) - e_integral(-t0 + 0j)
    q = q_polynomial(lam, t0, d)
    Qz = np.polynomial.polynomial.polyval(z, q)
    w = -(z - lam) * t0
    b = lam * t0
    base = Qz * np.exp(w) - q[0] * np.exp(b)
    far = np.abs(b) > 2.0 * np.abs(z) * t0 + 1.0
    out = np.empty(np.broadcast(z, w).shape, dtype=complex)
    zf, wf = np.broadcast_arrays(z, w)
    if np.any(far):
        out[far] = _segment_exp_integral(wf[far], b).reshape(-1)
    near = ~far
    if np.any(near):
        with np.errstate(divide="ignore"):  # log 0 = -inf at z = lam gives G = 0
            out[near] = np.log(1.0 - zf[near] / lam) + e_integral(wf[near]) - e_integral(b)
    out = out + base
    return out if out.ndim else complex(out)


def hadamard_factor(lam, t0: float, d: int, z):
    return np.exp(log_hadamard_factor(lam, t0, d, z))


def hadamard_log_derivative(lam, t0: float, d: int, z):
    """G'/G from the series form."""
    lam = complex(lam)
    z = np.asarray(z, dtype=complex)
    if lam == 0:
        return np.exp(-t0 * z) / z
    e = np.exp(-(z - lam) * t0)
    p = sum(z ** n / lam ** (n + 1) for n in range(d + 2))
    return e / (z - lam) + p * e


# ---------------------------------------------------------------- factorization fit

@dataclass
class FactorizationParams:
    t0: float
    d: int
    resonances: object

    def __post_init__(self):
        if not self.t0 > 0:
            raise ValueError("t0 must be positive")
        if self.d < 0:
            raise ValueError("d must be nonnegative")


@dataclass
class FactorizationResult:
    log_mu: complex
    P: np.ndarray
    residual: float
    condition: float
    residuals: np.ndarray = field(repr=False)


def _resonance_list(res):
    if res is None:
        return []
    if hasattr(res, "entries"):
        return [(complex(l), int(m)) for l, m in res.entries]
    return [(complex(l), int(m)) for l, m in res]


def log_product(res, t0: float, d: int, z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    acc = np.zeros(z.shape, dtype=complex)
    for lam, m in _resonance_list(res):
        acc = acc + m * log_hadamard_factor(lam, t0, d, z)
    return acc


def _serpentine(points):
    """Order grid points row by row (by Im), alternating direction in Re."""
    z = np.asarray(points, dtype=complex)
    ims = np.unique(np.round(z.imag, 12))
    order = []
    for j, y in enumerate(ims):
        row = np.flatnonzero(np.round(z.imag, 12) == y)
        row = row[np.argsort(z.real[row])]
        order.extend(row if j % 2 == 0 else row[::-1])
    return np.array(order)


def factorization_residual(dg: DeterminantGrid, fp: FactorizationParams, max_cond: float = 1e10):
    """Fit log mu and P (degree <= d+2) in d_g = mu exp(P e^{-t0 z}) prod G.

    Uses y = e^{t0 z}(log d_g - sum log G) = log mu e^{t0 z} + P(z), with the
    imaginary part of the log unwrapped along a serpentine path over the grid.
    """
    z = np.asarray(dg.points, dtype=complex)
    vals = np.asarray(dg.values, dtype=complex)
    S = log_product(fp.resonances, fp.t0, fp.d, z)
    L = np.log(vals) - S
    order = _serpentine(z)
    L_ord = L[order].real + 1j * np.unwrap(L[order].imag)
    L = np.empty_like(L)
    L[order] = L_ord
    y = np.exp(fp.t0 * z) * L
    deg = fp.d + 2
    cols = [np.exp(fp.t0 * z)] + [z ** k for k in range(deg + 1)]
    X = np.column_stack(cols)
    scale = np.abs(X).max(axis=0)
    Xs = X / scale
    cond = float(np.linalg.cond(Xs))
    if cond > max_cond:
        raise NumericalFailure(f"factorization fit is ill-conditioned (condition {cond:.3g})")
    coef, *_ = np.linalg.lstsq(Xs, y, rcond=None)
    coef = coef / scale
    log_mu = complex(coef[0])
    P = coef[1:]
    model = np.exp(log_mu + np.polynomial.polynomial.polyval(z, P) * np.exp(-fp.t0 * z) + S)
    r = np.abs(vals - model)
    return FactorizationResult(log_mu, P, float(r.max()), cond, r)


# ---------------------------------------------------------------- resolvent identity

@dataclass
class ResolventIdentity:
    lhs: complex
    rhs: complex
    lhs_tail: float
    rhs_tail: float

    @property
    def gap(self) -> float:
        return float(abs(self.lhs - self.rhs))

    @property
    def relative_gap(self) -> float:
        return self.gap / max(float(abs(self.lhs)), float(abs(self.rhs)), 1e-300)


def resolvent_orbit_identity(resonances, orbits, z, t0: float, d: int, T_max: float = None,
                             rho: float = None, dps: int = None) -> ResolventIdentity:
    """Both sides of

        sum_lambda e^{lambda t0} / (z - lambda)^(d+3)
          = 1/(d+2)! sum_gamma T# e^{int g} (T - t0)^(d+2) e^{-z (T - t0)} / |det(I - P)|.

    The resonance tail assumes the omitted resonances are spread like the
    supplied ones (constant density in |Im lambda|, Re lambda bounded by the
    largest supplied one). The orbit tail uses the growth rate of the table.
    With dps set, both sums are accumulated in mpmath at that many digits so
    truncation errors below double precision stay visible.
    """
    z = complex(z)
    p = d + 3
    lam_list = _resonance_list(resonances)
    used = [o for o in orbits if (T_max is None or o.T <= T_max + 1e-12) and o.T > t0]
    if dps is None:
        re, im = [], []
        for lam, m in lam_list:
            v = m * np.exp(lam * t0) / (z - lam) ** p
            re.append(v.real)
            im.append(v.imag)
        lhs = complex(math.fsum(re), math.fsum(im))
        re, im = [], []
        for o in used:
            v = (o.count_hint * o.T_primitive * np.exp(o.g_integral) * (o.T - t0) ** (p - 1)
                 * np.exp(-z * (o.T - t0)) / o.det_abs)
            re.append(v.real)
            im.append(v.imag)
        rhs = complex(math.fsum(re), math.fsum(im)) / math.factorial(p - 1)
    else:
        lhs, rhs = _resolvent_sides_mp(lam_list, used, z, t0, p, dps)
    lhs_tail = 0.0
    if lam_list:
        Y = max(abs(l.imag) for l, _ in lam_list)
        cnt = sum(m for _, m in lam_list)
        if Y > 0 and Y > abs(z.imag):
            dens = cnt / (2 * Y)
            sig = max(l.real for l, _ in lam_list)
            gap = Y - abs(z.imag)
            # both ends of sum_{y > Y} dens e^{sig t0} / (y - |Im z|)^p
            lhs_tail = 2 * dens * math.exp(sig * t0) * gap ** (1 - p) / (p - 1)
    rhs_tail = 0.0
    if used:
        tau, r0 = growth_rate(used)
        rho = r0 if rho is None else rho
        if z.real <= rho:
            raise ConvergenceError("Re z is outside convergence half-plane of the orbit side")
        top = max(o.T for o in used) if T_max is None else T_max
        n0 = int(math.floor(top / tau + 1e-9)) + 1
        # per period: sum of T# e^{Re g}/|det| is at most tau e^{rho T}
        T = np.arange(n0, n0 + 4000) * tau
        terms = tau * np.exp(rho * T) * np.abs(T - t0) ** (p - 1) * np.exp(-z.real * (T - t0))
        rhs_tail = float(terms.sum()) / math.factorial(p - 1)
    return ResolventIdentity(lhs, rhs, lhs_tail, rhs_tail)


def _resolvent_sides_mp(lam_list, orbits, z, t0, p, dps):
    import mpmath

    with mpmath.workdps(dps):
        zz = mpmath.mpc(z.real, z.imag)
        tt = mpmath.mpf(t0)
        lhs = mpmath.fsum(m * mpmath.exp(mpmath.mpc(l.real, l.imag) * tt)
                          / (zz - mpmath.mpc(l.real, l.imag)) ** p for l, m in lam_list)
        terms = []
        for o in orbits:
            T = mpmath.mpf(o.T)
            g = mpmath.mpc(o.g_integral.real, o.g_integral.imag)
            terms.append(o.count_hint * mpmath.mpf(o.T_primitive) * mpmath.exp(g) * (T - tt) ** (p - 1)
                         * mpmath.exp(-zz * (T - tt)) / mpmath.mpf(o.det_abs))
        rhs = mpmath.fsum(terms) / mpmath.factorial(p - 1)
        return mpmath.mpc(lhs), mpmath.mpc(rhs)


# ---------------------------------------------------------------- order

def order_from_samples(radii, max_moduli) -> float:
    """Least-squares slope of log(1 + log+ M(r)) against log r."""
    r = np.asarray(radii, dtype=float)
    M = np.asarray(max_moduli, dtype=float)
    if len(r) < 4:
        raise ValueError("need at least 4 radii")
    if r.max() / r.min() < 10 * (1 - 1e-12):
        raise ValueError("radii must span at least one decade")
    y = np.log1p(np.maximum(np.log(M), 0.0))
    slope, _ = np.polyfit(np.log(r), y, 1)
    return float(slope)


def log_max_modulus(f_log, r: float, n_angles: int = 512) -> float:
    """max over the circle |z| = r of Re log f, given a function returning log f."""
    th = 2 * np.pi * np.arange(n_angles) / n_angles
    return float(np.max(np.real(f_log(r * np.exp(1j * th)))))


def order_estimate(f=None, radii=None, n_angles: int = 512, samples=None, log_f=None) -> float:
    """Empirical order of an entire function.

    Either samples = (radii, max moduli), or f (or log_f, returning log f) with
    the radii to scan. Returns the least-squares slope of
    log(1 + log+ max|f|) against log r.
    """
    if samples is not None:
        return order_from_samples(*samples)
    if radii is None or (f is None and log_f is None):
        raise ValueError("give samples or a function with radii")
    radii = np.asarray(radii, dtype=float)
    if len(radii) < 4:
        raise ValueError("need at least 4 radii")
    if log_f is None:
        def log_f(z):
            with np.errstate(divide="ignore"):
                return np.log(np.abs(f(z)) + 0j)
    logM = np.array([log_max_modulus(log_f, r, n_angles) for r in radii])
    if radii.max() / radii.min() < 10 * (1 - 1e-12):
        raise ValueError("radii must span at least one decade")
    y = np.log1p(np.maximum(logM, 0.0))
    slope, _ = np.polyfit(np.log(radii), y, 1)
    return float(slope)
