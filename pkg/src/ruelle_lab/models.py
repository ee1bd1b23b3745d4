"""Model systems with exactly enumerable periodic orbits.

Two families are provided:

* circle maps x -> k x + p(x) mod 1 with a trigonometric perturbation p and
  a potential g (discrete time, an orbit of period n has length T = n);
* constant-roof suspensions of a hyperbolic toral automorphism A with roof c
  and a potential g on the 2-torus, constant along the flow direction.

Suspension orbits of period n are fixed points of A^n and are found exactly
as lattice points: (A^n - I) x in Z^2 gives x = y / D with y integer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import ConfigError, ConvergenceError

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------- trigonometric polynomials

class TrigPoly:
    """Finite Fourier series sum_k c_k exp(2 pi i k.x) on the dim-torus."""

    def __init__(self, terms=None, dim: int = 1):
        self.dim = int(dim)
        coeffs = {}
        for k, v in (terms or {}).items():
            kk = (int(k),) if np.isscalar(k) else tuple(int(t) for t in k)
            if len(kk) != self.dim:
                raise ConfigError(f"frequency {k} does not have {self.dim} components")
            v = complex(v)
            if v != 0:
                coeffs[kk] = coeffs.get(kk, 0j) + v
        self.coeffs = dict(sorted(coeffs.items()))

    @classmethod
    def zero(cls, dim: int = 1):
        return cls({}, dim)

    @classmethod
    def constant(cls, value, dim: int = 1):
        return cls({(0,) * dim: value}, dim)

    @classmethod
    def cosine(cls, k, amplitude=1.0, dim: int = 1):
        """amplitude * cos(2 pi k.x)."""
        k = (int(k),) if np.isscalar(k) else tuple(k)
        return cls({k: amplitude / 2, tuple(-t for t in k): amplitude / 2}, len(k)) if any(k) \
            else cls.constant(amplitude, len(k))

    @classmethod
    def sine(cls, k, amplitude=1.0, dim: int = 1):
        """amplitude * sin(2 pi k.x)."""
        k = (int(k),) if np.isscalar(k) else tuple(k)
        return cls({k: amplitude / 2j, tuple(-t for t in k): -amplitude / 2j}, len(k))

    @classmethod
    def from_terms(cls, rows, dim: int = 1):
        """Build from rows [k_1, ..., k_dim, re, im] (im optional)."""
        terms = {}
        for row in rows or []:
            row = list(row)
            if len(row) not in (dim + 1, dim + 2):
                raise ConfigError(f"term {row} should be [k_1..k_{dim}, re, im]")
            k = tuple(int(t) for t in row[:dim])
            im = row[dim + 1] if len(row) == dim + 2 else 0.0
            terms[k] = terms.get(k, 0j) + complex(float(row[dim]), float(im))
        return cls(terms, dim)

    def to_terms(self):
        return [[*k, v.real, v.imag] for k, v in self.coeffs.items()]

    def __add__(self, other):
        if not isinstance(other, TrigPoly):
            other = TrigPoly.constant(other, self.dim)
        t = dict(self.coeffs)
        for k, v in other.coeffs.items():
            t[k] = t.get(k, 0j) + v
        return TrigPoly(t, self.dim)

    def scale(self, a):
        return TrigPoly({k: a * v for k, v in self.coeffs.items()}, self.dim)

    def __eq__(self, other):
        return isinstance(other, TrigPoly) and self.dim == other.dim and self.coeffs == other.coeffs

    def __repr__(self):
        return f"TrigPoly({self.coeffs}, dim={self.dim})"

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def is_constant(self) -> bool:
        return all(not any(k) for k in self.coeffs)

    @property
    def mean(self) -> complex:
        return self.coeffs.get((0,) * self.dim, 0j)

    @property
    def is_real(self) -> bool:
        for k, v in self.coeffs.items():
            w = self.coeffs.get(tuple(-t for t in k), 0j)
            if abs(w - v.conjugate()) > 1e-14 * max(1.0, abs(v)):
                return False
        return True

    @property
    def max_freq(self) -> int:
        return max((max(abs(t) for t in k) for k in self.coeffs), default=0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            out = np.zeros(x.shape, dtype=complex)
            for (k,), v in self.coeffs.items():
                out += v * np.exp(2j * np.pi * k * x)
        else:
            if x.shape[-1] != self.dim:
                raise ValueError(f"points must have last axis {self.dim}")
            out = np.zeros(x.shape[:-1], dtype=complex)
            for k, v in self.coeffs.items():
                out += v * np.exp(2j * np.pi * (x @ np.array(k, dtype=float)))
        return out

    def real_values(self, x):
        return self(x).real

    def derivative(self):
        if self.dim != 1:
            raise ValueError("derivative is only defined for dim = 1")
        return TrigPoly({k: 2j * np.pi * k[0] * v for k, v in self.coeffs.items() if k[0]}, 1)


# ---------------------------------------------------------------- circle maps

@dataclass
class CircleMap:
    """x -> k x + p(x) mod 1 with potential g."""
    degree: int
    perturbation: TrigPoly = field(default_factory=TrigPoly.zero)
    potential: TrigPoly = field(default_factory=TrigPoly.zero)
    grid: int = 4096

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 2:
            raise ConfigError("degree must be an integer >= 2")
        self.degree = int(self.degree)
        if self.perturbation.dim != 1 or self.potential.dim != 1:
            raise ConfigError("circle map data must be one-dimensional")
        if not self.perturbation.is_real:
            raise ConfigError("perturbation must be real-valued")
        x = (np.arange(self.grid) + 0.5) / self.grid
        self.min_derivative = float(self.derivative(x).min())
        if self.min_derivative <= 1.0:
            raise ConfigError(f"map is not expanding: min f' = {self.min_derivative:.6g} on the grid")

    @property
    def unperturbed(self) -> bool:
        return self.perturbation.is_zero

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        if self.unperturbed:
            return self.degree * x
        return self.degree * x + self.perturbation.real_values(x)

    def __call__(self, x):
        return np.mod(self.lift(x), 1.0)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.unperturbed:
            return np.full(x.shape, float(self.degree))
        return self.degree + self.perturbation.derivative().real_values(x)

    def g(self, x):
        return self.potential(x)


def doubling_map(potential: TrigPoly | None = None) -> CircleMap:
    return CircleMap(2, TrigPoly.zero(), potential or TrigPoly.zero())


# ---------------------------------------------------------------- toral suspensions

def _as_int_matrix(A):
    M = np.asarray(A)
    if M.shape != (2, 2):
        raise ConfigError("A must be 2x2")
    if not np.all(np.asarray(M, dtype=float) == np.round(np.asarray(M, dtype=float))):
        raise ConfigError("A must have integer entries")
    return tuple(tuple(int(round(float(v))) for v in row) for row in M)


def _mat_mul(P, Q):
    return ((P[0][0] * Q[0][0] + P[0][1] * Q[1][0], P[0][0] * Q[0][1] + P[0][1] * Q[1][1]),
            (P[1][0] * Q[0][0] + P[1][1] * Q[1][0], P[1][0] * Q[0][1] + P[1][1] * Q[1][1]))


def int_matrix_power(A, n: int):
    """A^n in exact integer arithmetic, as nested tuples."""
    R = ((1, 0), (0, 1))
    B = A
    while n:
        if n & 1:
            R = _mat_mul(R, B)
        B = _mat_mul(B, B)
        n >>= 1
    return R


def det_i_minus(P) -> int:
    """det(I - P) for an integer 2x2 matrix, exactly."""
    return (1 - P[0][0]) * (1 - P[1][1]) - P[0][1] * P[1][0]


@dataclass
class ToralSuspension:
    """Suspension of x -> A x on T^2 under the constant roof c.

    The flow moves (x, u) to (x, u + t) and glues (x, c) to (A x, 0). The
    potential g is a function of x only.
    """
    A: tuple
    roof: float = 1.0
    potential: TrigPoly = field(default_factory=lambda: TrigPoly.zero(2))

    def __post_init__(self):
        self.A = _as_int_matrix(self.A)
        det = self.A[0][0] * self.A[1][1] - self.A[0][1] * self.A[1][0]
        if abs(det) != 1:
            raise ConfigError("A must have determinant +-1")
        if abs(self.trace) <= 2:
            raise ConfigError("A must be hyperbolic (|trace| > 2)")
        if not (self.roof > 0):
            raise ConfigError("roof must be positive")
        self.roof = float(self.roof)
        if self.potential.dim != 2:
            raise ConfigError("potential must live on the 2-torus")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.A, dtype=np.int64)

    @property
    def det(self) -> int:
        return self.A[0][0] * self.A[1][1] - self.A[0][1] * self.A[1][0]

    @property
    def trace(self) -> int:
        return self.A[0][0] + self.A[1][1]

    def power(self, n: int):
        return int_matrix_power(self.A, n)

    def fixed_point_count(self, n: int) -> int:
        """#Fix(A^n) = |det(A^n - I)|."""
        return abs(det_i_minus(self.power(n)))


CAT_MAP = ((2, 1), (1, 1))


# ---------------------------------------------------------------- periodic orbits

@dataclass
class PeriodicOrbit:
    """Orbit data entering the dynamical determinant and the trace formula.

    ``points`` holds one primitive cycle when known, ``step`` is the time
    spent between consecutive points. Aggregated records (no points) stand
    for ``count_hint`` orbits with identical data.
    """
    T: float
    T_primitive: float
    poincare: np.ndarray
    g_integral: complex = 0j
    count_hint: int = 1
    det_abs: float = None
    points: np.ndarray = field(default=None, repr=False)
    step: float = 1.0

    def __post_init__(self):
        if not (self.T > 0 and self.T_primitive > 0):
            raise ValueError("orbit lengths must be positive")
        q = self.T / self.T_primitive
        if abs(q - round(q)) > 1e-9 * max(1.0, q) or round(q) < 1:
            raise ValueError("T_primitive must divide T")
        P = np.atleast_2d(np.asarray(self.poincare))
        self.poincare = P
        if self.det_abs is None:
            if P.dtype.kind in "iuO" and P.shape == (2, 2):
                self.det_abs = float(abs(det_i_minus(tuple(tuple(int(v) for v in r) for r in P))))
            else:
                self.det_abs = float(abs(np.linalg.det(np.eye(len(P)) - P)))
        if not self.det_abs > 0:
            raise ValueError("|det(I - P)| must be positive")

    @property
    def repetitions(self) -> int:
        return int(round(self.T / self.T_primitive))

    def sort_key(self):
        pt = () if self.points is None else tuple(np.ravel(self.points[:1]))
        return (self.T, self.T_primitive, pt)


def orbit_weight(orbit: PeriodicOrbit, g: TrigPoly) -> complex:
    """Integral of g along the orbit, including repetitions."""
    if g.is_zero:
        return 0j
    if g.is_constant:
        return complex(g.mean * orbit.T)
    if orbit.points is None:
        raise ValueError("orbit carries no points, cannot integrate a non-constant g")
    return complex(orbit.repetitions * orbit.step * np.sum(g(orbit.points)))


def _cycle_labels(perm: np.ndarray, n: int):
    """Smallest index in each cycle and the cycle length, for a permutation
    all of whose cycle lengths divide n."""
    lab = np.arange(len(perm))
    cur = perm.copy()
    period = np.zeros(len(perm), dtype=np.int64)
    for i in range(1, n + 1):
        back = (cur == np.arange(len(perm))) & (period == 0)
        period[back] = i
        lab = np.minimum(lab, cur)
        cur = perm[cur]
    if np.any(period == 0) or not np.array_equal(cur, perm):
        raise ValueError("permutation has a cycle whose length does not divide n")
    return lab, period


def _base_word(j: int, k: int, n: int) -> str:
    digits = []
    for _ in range(n):
        digits.append(str(j % k))
        j //= k
    return "".join(reversed(digits))


def circle_periodic_points(m: CircleMap, n: int, tol: float = 1e-13, max_iter: int = 200):
    """All x in [0, 1) with f^n(x) = x, sorted, plus the index map of f.

    Returns (x, perm) where x[perm[j]] = f(x[j]).
    """
    k = m.degree
    count = k ** n - 1
    if m.unperturbed:
        j = np.arange(count, dtype=np.int64)
        x = j / float(count)
        perm = (k * j) % count
        return x, perm

    def u(x):
        y = np.asarray(x, dtype=float)
        for _ in range(n):
            y = m.lift(y)
        return y - x

    def du(x):
        y = np.asarray(x, dtype=float)
        d = np.ones_like(y)
        for _ in range(n):
            d = d * m.derivative(y)
            y = m.lift(y)
        return d - 1.0

    u0 = float(u(np.array([0.0]))[0])
    j = math.ceil(u0) + np.arange(count)
    lo = np.zeros(count)
    hi = np.ones(count)
    # bisection narrows the bracket, then safeguarded Newton finishes
    for _ in range(8):
        mid = 0.5 * (lo + hi)
        pos = u(mid) - j > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    x = 0.5 * (lo + hi)
    done = np.zeros(count, dtype=bool)
    for _ in range(max_iter):
        h = u(x) - j
        pos = h > 0
        hi = np.where(pos, np.minimum(hi, x), hi)
        lo = np.where(pos, lo, np.maximum(lo, x))
        step = h / du(x)
        xn = x - step
        out = (xn <= lo) | (xn >= hi)
        xn = np.where(out, 0.5 * (lo + hi), xn)
        done = np.abs(xn - x) <= tol
        x = xn
        if np.all(done):
            break
    if not np.all(done):
        bad = int(np.flatnonzero(~done)[0])
        raise ConvergenceError(
            f"periodic point search did not converge for branch word {_base_word(int(j[bad] - j[0]), k, n)}")
    x = np.mod(x, 1.0)
    order = np.argsort(x)
    x = x[order]
    fx = m(x)
    idx = np.searchsorted(x, fx)
    cand = np.stack([np.mod(idx - 1, count), np.mod(idx, count)], axis=1)
    dist = np.abs(x[cand] - fx[:, None])
    dist = np.minimum(dist, 1.0 - dist)
    pick = np.argmin(dist, axis=1)
    perm = cand[np.arange(count), pick]
    if dist[np.arange(count), pick].max() > 1e-8 or len(np.unique(perm)) != count:
        raise ConvergenceError("could not match f(x) to a periodic point of the same period")
    return x, perm


def enumerate_orbits_circle(m: CircleMap, n_max: int) -> list:
    """Periodic orbits with T = n <= n_max, one record per primitive cycle of
    period p dividing n (T = n, T_primitive = p, P = (f^n)' on the cycle)."""
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    out = []
    for n in range(1, n_max + 1):
        out.extend(_circle_orbits_of_period(m, n))
    return out


def _circle_orbits_of_period(m: CircleMap, n: int) -> list:
    x, perm = circle_periodic_points(m, n)
    lab, period = _cycle_labels(perm, n)
    reps = np.flatnonzero(lab == np.arange(len(x)))
    logd = np.log(m.derivative(x))
    gx = m.g(x) if not m.potential.is_zero else np.zeros(len(x), dtype=complex)
    sum_logd = np.bincount(lab, weights=logd, minlength=len(x))
    sum_g = (np.bincount(lab, weights=gx.real, minlength=len(x))
             + 1j * np.bincount(lab, weights=gx.imag, minlength=len(x)))
    orbits = []
    for r in reps:
        p = int(period[r])
        reps_n = n // p
        cyc = [r]
        for _ in range(p - 1):
            cyc.append(int(perm[cyc[-1]]))
        P = math.exp(reps_n * sum_logd[r])
        if m.unperturbed:
            P = float(m.degree ** n)
        orbits.append(PeriodicOrbit(
            T=float(n), T_primitive=float(p), poincare=np.array([[P]]),
            g_integral=complex(reps_n * sum_g[r]), det_abs=abs(1.0 - P),
            points=x[cyc], step=1.0))
    orbits.sort(key=PeriodicOrbit.sort_key)
    return orbits


def circle_trace_sums(m: CircleMap, n: int) -> complex:
    """sum over x in Fix(f^n) of exp(g_n(x)) / |1 - (f^n)'(x)|."""
    x, perm = circle_periodic_points(m, n)
    logd = np.zeros(len(x))
    gsum = np.zeros(len(x), dtype=complex)
    y = np.arange(len(x))
    with_g = not m.potential.is_zero
    ld = np.log(m.derivative(x))
    gx = m.g(x) if with_g else None
    for _ in range(n):
        logd += ld[y]
        if with_g:
            gsum += gx[y]
        y = perm[y]
    D = np.exp(logd)
    return complex(np.sum(np.exp(gsum) / np.abs(1.0 - D)))


# ---------------------------------------------------------------- suspension orbits

def _mobius(n: int) -> int:
    res, p, m = 1, 2, n
    while p * p <= m:
        if m % p == 0:
            m //= p
            if m % p == 0:
                return 0
            res = -res
        p += 1
    return -res if m > 1 else res


def _divisors(n: int):
    return [d for d in range(1, n + 1) if n % d == 0]


@lru_cache(maxsize=None)
def _primitive_point_count(A, p: int) -> int:
    """Number of points of least period p for x -> A x on T^2."""
    return sum(_mobius(p // q) * abs(det_i_minus(int_matrix_power(A, q))) for q in _divisors(p))


def _hnf_lower(M):
    """Unimodular column operations bringing M to [[a, 0], [b, c]], a > 0, 0 <= b < |c|."""
    (a, b), (c, d) = M
    # columns (a, c) and (b, d); Euclid on the first row
    col1, col2 = [a, c], [b, d]
    while col2[0] != 0:
        q = col1[0] // col2[0]
        col1 = [col1[0] - q * col2[0], col1[1] - q * col2[1]]
        col1, col2 = col2, col1
    if col1[0] < 0:
        col1 = [-col1[0], -col1[1]]
    if col2[1] < 0:
        col2 = [-col2[0], -col2[1]]
    if col2[1] != 0:
        col1[1] %= col2[1]
    return col1[0], col1[1], col2[1]


def lattice_fixed_points(sys: ToralSuspension, n: int):
    """Exact fixed points of A^n on T^2 as (y, D) with x = y / D, y integer.

    The coset representatives of Z^2 / M Z^2, M = A^n - I, come from the
    lower triangular form of M; x = M^{-1} v then has denominator |det M|.
    """
    P = sys.power(n)
    M = ((P[0][0] - 1, P[0][1]), (P[1][0], P[1][1] - 1))
    det = M[0][0] * M[1][1] - M[0][1] * M[1][0]
    if det == 0:
        raise ValueError("A^n - I is singular")
    D = abs(det)
    h11, h21, h22 = _hnf_lower(M)
    h22 = abs(h22)
    if h11 * h22 != D:
        raise AssertionError("triangular form has the wrong index")
    v1, v2 = np.meshgrid(np.arange(h11, dtype=object), np.arange(h22, dtype=object), indexing="ij")
    v1, v2 = v1.ravel(), v2.ravel()
    sgn = 1 if det > 0 else -1
    # M^{-1} = adj(M) / det
    y1 = (sgn * (M[1][1] * v1 - M[0][1] * v2)) % D
    y2 = (sgn * (-M[1][0] * v1 + M[0][0] * v2)) % D
    y = np.stack([y1, y2], axis=1)
    if D < 2 ** 62:
        y = y.astype(np.int64)
    return y, D


def _explicit_suspension_orbits(sys: ToralSuspension, n: int, max_points: int) -> list:
    D = sys.fixed_point_count(n)
    if D > max_points:
        raise ValueError(f"A^{n} has {D} fixed points, above the explicit limit {max_points}")
    y, D = lattice_fixed_points(sys, n)
    key = {tuple(int(t) for t in row): i for i, row in enumerate(y)}
    A = sys.A
    Ay = np.stack([(A[0][0] * y[:, 0] + A[0][1] * y[:, 1]) % D,
                   (A[1][0] * y[:, 0] + A[1][1] * y[:, 1]) % D], axis=1)
    perm = np.array([key[(int(a), int(b))] for a, b in Ay], dtype=np.int64)
    lab, period = _cycle_labels(perm, n)
    c = sys.roof
    Pn = np.array(sys.power(n), dtype=object)
    det_abs = float(abs(det_i_minus(sys.power(n))))
    pts = y.astype(float) / D
    g = sys.potential
    gx = g(pts) if not g.is_zero else np.zeros(len(y), dtype=complex)
    orbits = []
    for r in np.flatnonzero(lab == np.arange(len(y))):
        p = int(period[r])
        cyc = [int(r)]
        for _ in range(p - 1):
            cyc.append(int(perm[cyc[-1]]))
        orbits.append(PeriodicOrbit(
            T=n * c, T_primitive=p * c, poincare=Pn, det_abs=det_abs,
            g_integral=complex((n // p) * c * np.sum(gx[cyc])),
            points=pts[cyc], step=c))
    orbits.sort(key=PeriodicOrbit.sort_key)
    return orbits


def _aggregated_suspension_orbits(sys: ToralSuspension, n: int) -> list:
    c = sys.roof
    Pn = np.array(sys.power(n), dtype=object)
    det_abs = float(abs(det_i_minus(sys.power(n))))
    out = []
    for p in _divisors(n):
        cnt = _primitive_point_count(sys.A, p)
        if cnt == 0:
            continue
        out.append(PeriodicOrbit(
            T=n * c, T_primitive=p * c, poincare=Pn, det_abs=det_abs,
            g_integral=complex(sys.potential.mean * n * c), count_hint=cnt // p))
    return out


def enumerate_orbits_suspension(sys: ToralSuspension, T_max: float, explicit: bool | None = None,
                                max_points: int = 2_000_000) -> list:
    """Periodic orbits with T = n c <= T_max.

    Aggregated records (one per primitive period, with count_hint) are used
    when g is constant; otherwise every fixed point of A^n is enumerated.
    """
    if T_max < sys.roof:
        raise ValueError("T_max must be at least the roof")
    if explicit is None:
        explicit = not sys.potential.is_constant
    if not explicit and not sys.potential.is_constant:
        raise ValueError("aggregated orbits need a constant potential")
    n_max = int(math.floor(T_max / sys.roof + 1e-12))
    out = []
    for n in range(1, n_max + 1):
        if explicit:
            out.extend(_explicit_suspension_orbits(sys, n, max_points))
        else:
            out.extend(_aggregated_suspension_orbits(sys, n))
    return out


def orbit_identity_check(sys: ToralSuspension, n: int, orbits=None) -> float:
    """sum over orbits with T = n c of (T#/c) / |det(I - P)|, in exact rationals.

    Equals 1 since the T#-weighted count of orbits is #Fix(A^n).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if orbits is None:
        orbits = _explicit_suspension_orbits(sys, n, max_points=5_000_000)
    tot = Fraction(0)
    for o in orbits:
        if abs(o.T - n * sys.roof) > 1e-9 * o.T:
            continue
        tp = int(round(o.T_primitive / sys.roof))
        tot += Fraction(o.count_hint * tp, int(o.det_abs))
    return float(tot)


def orbit_table(orbits) -> list:
    """Rows (T, T_primitive, |det(I - P)|, Re g, Im g, count)."""
    return [(o.T, o.T_primitive, o.det_abs, o.g_integral.real, o.g_integral.imag, o.count_hint)
            for o in orbits]
