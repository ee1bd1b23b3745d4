"""Fourier truncations of weighted transfer and Koopman operators.

Matrices are indexed by frequencies: entry [m, l] is <e_m, L e_l> with
e_l(x) = exp(2 pi i l.x). The Koopman convention is L u = e^g u o f, the
transfer convention is its dual with respect to Lebesgue measure.

Eigenvalues and determinants go through the strongly connected components
of the sparsity graph. The truncations met here are nearly triangular, so
the components are small and the zero eigenvalues stay exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import NumericalFailure
from .multiplier_bank import log_isotropic_weight, log_weight_w
from .models import CircleMap, ToralSuspension

TWO_PI = 2.0 * math.pi
LN2 = math.log(2.0)


# ---------------------------------------------------------------- containers

@dataclass
class TransferMatrix:
    """Truncated operator on the frequencies in ``basis``.

    ``log_weight`` holds log of the diagonal conjugation (entries become
    w_m / w_l * L[m, l]); None means unweighted.
    """
    N: int
    basis: np.ndarray
    entries: object
    convention: str = "transfer"
    log_weight: np.ndarray = field(default=None, repr=False)
    weight: dict = None

    def __post_init__(self):
        if self.convention not in ("koopman", "transfer"):
            raise ValueError("convention must be 'koopman' or 'transfer'")
        n = len(self.basis)
        if self.entries.shape != (n, n) and self.entries.shape[0] != n:
            raise ValueError("entries do not match the basis")
        if self.log_weight is not None and len(self.log_weight) != self.entries.shape[1] \
                and len(self.log_weight) != n:
            raise ValueError("weight does not match the basis")

    @property
    def shape(self):
        return self.entries.shape

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.entries)

    def dense(self) -> np.ndarray:
        return self.entries.toarray() if self.is_sparse else np.asarray(self.entries)

    def eigenvalues(self) -> np.ndarray:
        # entries are treated as immutable once wrapped
        if getattr(self, "_eig", None) is None:
            self._eig = block_eigenvalues(self.entries)
        return self._eig.copy()

    def det_i_minus(self, z):
        """det(I - z L) for scalar or array z."""
        mu = self.eigenvalues()
        return det_from_eigenvalues(mu, z)


@dataclass
class ResonanceSet:
    entries: list
    source: str
    truncation: int
    strip: tuple = None

    def __post_init__(self):
        if self.source not in ("matrix-spectrum", "determinant-zeros"):
            raise ValueError("unknown resonance source")
        for lam, m in self.entries:
            if m < 1:
                raise ValueError("multiplicities must be positive")
        self.entries = sorted(((complex(l), int(m)) for l, m in self.entries),
                              key=lambda e: (-round(e[0].real, 12), abs(e[0].imag), e[0].imag))

    @property
    def values(self) -> np.ndarray:
        return np.array([l for l, m in self.entries for _ in range(m)], dtype=complex)

    def __len__(self):
        return len(self.entries)


# ---------------------------------------------------------------- spectra through components

def _components(M):
    S = sp.csr_matrix(M) if not sp.issparse(M) else M.tocsr()
    S = S.copy()
    S.data = np.ones_like(S.data, dtype=float)
    S.eliminate_zeros()
    return connected_components(S, directed=True, connection="strong")


def block_eigenvalues(M) -> np.ndarray:
    """Eigenvalues of M as the union over its strongly connected blocks."""
    ncomp, lab = _components(M)
    is_sparse = sp.issparse(M)
    Mc = M.tocsr() if is_sparse else np.asarray(M)
    order = np.argsort(lab, kind="stable")
    bounds = np.flatnonzero(np.diff(lab[order])) + 1
    out = []
    for idx in np.split(order, bounds):
        if len(idx) == 1:
            i = idx[0]
            out.append(complex(Mc[i, i]))
            continue
        B = Mc[idx][:, idx]
        B = B.toarray() if is_sparse else B
        out.extend(np.linalg.eigvals(B))
    return np.array(out, dtype=complex)


def det_from_eigenvalues(mu, z):
    mu = np.asarray(mu, dtype=complex)
    mu = mu[mu != 0]
    z = np.asarray(z, dtype=complex)
    if not len(mu):
        return np.ones(z.shape, dtype=complex) if z.ndim else 1.0 + 0j
    val = np.prod(1.0 - z[..., None] * mu, axis=-1)
    return val if z.ndim else complex(val)


def cluster_eigenvalues(mu, tol: float = 1e-8):
    """Group nearly equal eigenvalues into (value, multiplicity)."""
    mu = sorted(np.asarray(mu, dtype=complex), key=lambda v: (-abs(v), v.real, v.imag))
    out = []
    for v in mu:
        for k, (c, m) in enumerate(out):
            if abs(v - c) <= tol * max(1.0, abs(c)):
                out[k] = ((c * m + v) / (m + 1), m + 1)
                break
        else:
            out.append((v, 1))
    return out


# ---------------------------------------------------------------- doubling map

def _freqs(N):
    return np.arange(-N, N + 1)


def doubling_matrix(N: int, weight=None, cols: int | None = None) -> TransferMatrix:
    """M[m, 2m] = 1 for |m|, |2m| <= N.

    weight = (alpha, beta) conjugates by diag(exp(beta ln(1+|n|)^(1/alpha))).
    ``cols`` widens the column range to |l| <= cols (rectangular compression).
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    cols = N if cols is None else int(cols)
    rows = _freqs(N)
    cl = _freqs(cols)
    keep = np.abs(2 * rows) <= cols
    r_idx = np.flatnonzero(keep)
    c_idx = 2 * rows[keep] + cols
    vals = np.ones(len(r_idx))
    lw = None
    if weight is not None:
        a, b = weight
        lw_rows = log_isotropic_weight(a, b, rows)
        lw_cols = log_isotropic_weight(a, b, cl)
        vals = np.exp(lw_rows[r_idx] - lw_cols[c_idx])
        lw = lw_cols
    M = np.zeros((len(rows), len(cl)))
    M[r_idx, c_idx] = vals
    return TransferMatrix(N, rows, M, "transfer", lw, None if weight is None else {"alpha": weight[0], "beta": weight[1]})


def doubling_singular_values_closed(alpha: float, beta: float, N: int) -> np.ndarray:
    """exp(beta (ln(1+|n|)^(1/alpha) - ln(1+2|n|)^(1/alpha))) for |n| <= N."""
    n = np.abs(_freqs(N)).astype(float)
    return np.exp(beta * (np.log1p(n) ** (1 / alpha) - np.log1p(2 * n) ** (1 / alpha)))


def doubling_singular_values(alpha: float, beta: float, N: int):
    """(closed form, SVD of the weighted matrix), both sorted decreasingly.

    The matrix is the compression to rows |m| <= N and columns |l| <= 2N, so
    every row keeps its single entry and all 2N+1 values are visible.
    """
    if not (0 < alpha < 1) or not beta > 0:
        raise ValueError("need alpha in (0,1) and beta > 0")
    closed = np.sort(doubling_singular_values_closed(alpha, beta, N))[::-1]
    M = doubling_matrix(N, (alpha, beta), cols=2 * N).entries
    sv = np.linalg.svd(M, compute_uv=False)
    return closed, np.sort(sv)[::-1]


@dataclass
class NuclearityReport:
    alpha: float
    beta: float
    N_list: list
    partial_sums: np.ndarray
    increments: np.ndarray
    exponent: float
    amplitude: float
    classification: str


def nuclearity_diagnostic(alpha: float, beta: float, N_list, k_fit=(6, 16)) -> NuclearityReport:
    """Trend of the partial sums S_N = sum_{|n|<=N} sigma_n.

    Cauchy condensation: the sum converges iff sum_k 2^k sigma(2^k) does.
    With delta_k = log of the ratio of consecutive condensed terms, ln2 -
    delta_k ~ A k^p. p > 0 makes delta_k eventually negative (converging),
    p < 0 sends delta_k to ln2 > 0 (diverging); p ~ 0 leaves it to A.
    """
    N_list = [int(n) for n in N_list]
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValueError("N_list must be increasing")
    Nmax = max(N_list[-1], 2 ** (k_fit[1] + 1))
    n = np.arange(Nmax + 1, dtype=float)
    logs = beta * (np.log1p(n) ** (1 / alpha) - np.log1p(2 * n) ** (1 / alpha))
    sig = np.exp(logs)
    # S_N = sigma_0 + 2 sum_{1..N}
    S = np.cumsum(np.where(n == 0, 1.0, 2.0) * sig)
    partial = S[N_list]
    incr = np.diff(partial)
    ks = np.arange(k_fit[0], k_fit[1] + 1)
    # log sigma at 2^k and 2^(k+1); increments of S_N at these N are 2 sigma_N
    delta = LN2 + logs[2 ** (ks + 1)] - logs[2 ** ks]
    y = LN2 - delta
    if np.any(y <= 0):
        p, A = float("nan"), float("nan")
        cls = "diverging"
    else:
        p, logA = np.polyfit(np.log(ks), np.log(y), 1)
        A = math.exp(logA)
        if p > 0.1:
            cls = "converging"
        elif p < -0.1:
            cls = "diverging"
        else:
            cls = "depends on beta"
    return NuclearityReport(alpha, beta, N_list, partial, incr, float(p), float(A), cls)



# ---------------------------------------------------------------- expanding circle maps

def _next_pow2(n):
    return 1 << int(math.ceil(math.log2(max(2, n))))


def _circle_quadrature(m: CircleMap, N: int, Q: int, convention: str, g_sign: float = 1.0):
    x = np.arange(Q) / Q
    fx = m.lift(x)
    eg = np.exp(m.g(x)) if not m.potential.is_zero else np.ones(Q, dtype=complex)
    f = _freqs(N)
    if convention == "transfer":
        # T[m, l] = mean_q exp(-2 pi i m f) e^g exp(2 pi i l x)
        A = np.exp(-2j * np.pi * f[:, None] * fx[None, :]) * eg[None, :]
        C = np.fft.ifft(A, axis=1)
        return C[:, np.mod(f, Q)]
    # K[m, l] = mean_q exp(-2 pi i m x) e^g exp(2 pi i l f)
    B = eg[None, :] * np.exp(2j * np.pi * f[:, None] * fx[None, :])
    C = np.fft.fft(B, axis=1) / Q
    return C[:, np.mod(f, Q)].T


def expanding_transfer_matrix(m: CircleMap, N: int, convention: str = "transfer", weight=None,
                              quad_points: int | None = None, alias_tol: float = 1e-8,
                              drop_tol: float = 1e-14) -> TransferMatrix:
    """Weighted-composition truncation for an expanding circle map.

    Trapezoid quadrature on Q points is spectrally accurate; it is repeated
    with 2Q points and the largest entry drift must stay below alias_tol.
    Entries below drop_tol times the largest one are set to zero.
    """
    if N < 8:
        raise ValueError("N must be at least 8")
    if convention not in ("koopman", "transfer"):
        raise ValueError("convention must be 'koopman' or 'transfer'")
    spread = 0 if m.unperturbed else 8 * (m.perturbation.max_freq + 1)
    Q = quad_points or _next_pow2(max(8 * N, 2 * (m.degree + 1) * N + spread + 2 * m.potential.max_freq + 64))
    M1 = _circle_quadrature(m, N, Q, convention)
    M2 = _circle_quadrature(m, N, 2 * Q, convention)
    drift = float(np.abs(M1 - M2).max())
    if drift > alias_tol:
        raise NumericalFailure(f"quadrature aliasing: entries drift by {drift:.3g} when Q doubles from {Q}")
    M = M2
    M[np.abs(M) < drop_tol * max(1.0, np.abs(M).max())] = 0.0
    lw = None
    f = _freqs(N)
    if weight is not None:
        a, b = weight
        lw = np.sign(b) * log_isotropic_weight(a, abs(b), f)
        M = M * np.exp(lw[:, None] - lw[None, :])
    return TransferMatrix(N, f, M, convention, lw, None if weight is None else {"alpha": weight[0], "beta": weight[1]})


# ---------------------------------------------------------------- toral suspensions

def torus_lattice(N: int) -> np.ndarray:
    ax = np.arange(-N, N + 1)
    a, b = np.meshgrid(ax, ax, indexing="ij")
    return np.stack([a.ravel(), b.ravel()], axis=1)


def _centered_fft2(vals):
    Q = vals.shape[0]
    return np.fft.fftshift(np.fft.fft2(vals) / Q ** 2), Q // 2


def exp_potential_coefficients(sys: ToralSuspension, tol: float = 1e-15, Q: int | None = None):
    """Fourier coefficients {eta: a_eta} of exp(c g) on T^2, by FFT.

    Q doubles until the coefficients agree with the previous grid to 1e-14
    and the outer half of the spectrum is below tol.
    """
    g, c = sys.potential, sys.roof
    if g.is_zero:
        return {(0, 0): 1.0 + 0j}
    if g.is_constant:
        return {(0, 0): complex(np.exp(c * g.mean))}
    Q = Q or _next_pow2(8 * (g.max_freq + 1))
    prev = None
    for _ in range(10):
        x = np.arange(Q) / Q
        X, Y = np.meshgrid(x, x, indexing="ij")
        C, h = _centered_fft2(np.exp(c * g(np.stack([X, Y], axis=-1))))
        if prev is not None:
            ph = prev.shape[0] // 2
            inner = C[h - ph:h + ph, h - ph:h + ph]
            outer = np.abs(C).copy()
            outer[h - ph // 2:h + ph // 2, h - ph // 2:h + ph // 2] = 0
            if np.abs(inner - prev).max() < 1e-14 and outer.max() < tol * np.abs(C).max():
                break
        prev = C
        Q *= 2
    else:
        raise NumericalFailure("Fourier coefficients of exp(c g) did not settle")
    k = np.arange(-h, Q - h)
    big = np.abs(C) > tol * np.abs(C).max()
    return {(int(k[i]), int(k[j])): complex(C[i, j]) for i, j in zip(*np.nonzero(big))}


def torus_koopman_matrix(sys: ToralSuspension, N: int, spec=None, theta=None, angular=None,
                         flow_frequency: float = 0.0) -> TransferMatrix:
    """Fiber Koopman operator a -> e^(c g) a o A on |xi|_inf <= N.

    Column xi holds a_eta at row A^T xi + eta; rows outside the lattice are
    dropped. With (spec, angular) the matrix is conjugated by the
    anisotropic weight at (xi, flow_frequency).
    """
    pts = torus_lattice(N)
    side = 2 * N + 1
    coeffs = exp_potential_coefficients(sys)
    At = np.array(sys.A, dtype=np.int64).T
    img = pts @ At.T
    rows, cols, vals = [], [], []
    col_idx = np.arange(len(pts))
    for (e1, e2), a in coeffs.items():
        tgt = img + np.array([e1, e2])
        ok = np.all(np.abs(tgt) <= N, axis=1)
        r = (tgt[ok, 0] + N) * side + (tgt[ok, 1] + N)
        rows.append(r)
        cols.append(col_idx[ok])
        vals.append(np.full(ok.sum(), a))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    lw = None
    if spec is not None:
        if angular is None:
            raise ValueError("a weighted matrix needs the angular partition")
        X = np.column_stack([pts.astype(float), np.full(len(pts), float(flow_frequency))])
        lw = log_weight_w(spec, angular, X)
        with np.errstate(over="ignore"):
            vals = vals * np.exp(lw[rows] - lw[cols])
    K = sp.csr_matrix((vals, (rows, cols)), shape=(len(pts), len(pts)))
    return TransferMatrix(N, pts, K, "koopman", lw, None if spec is None else {"alpha": spec.alpha, "r": spec.r})


def resonances_suspension(sys: ToralSuspension, N: int, k_max: int, tol: float = 1e-12) -> ResonanceSet:
    """lambda = (log mu + 2 pi i k)/c over nonzero eigenvalues mu of the fiber truncation."""
    K = torus_koopman_matrix(sys, N)
    mu = K.eigenvalues()
    mu = mu[np.abs(mu) > tol]
    c = sys.roof
    entries = []
    for v, mult in cluster_eigenvalues(mu):
        base = np.log(complex(v))
        for k in range(-k_max, k_max + 1):
            entries.append(((base + 2j * np.pi * k) / c, mult))
    return ResonanceSet(entries, "matrix-spectrum", N,
                        (min(e[0].real for e in entries) if entries else -np.inf, np.inf))


class TwistedDeterminant:
    """s -> det(I - e^(-s c) K_N), with the spectrum of K_N computed once."""

    def __init__(self, sys: ToralSuspension, N: int):
        self.sys = sys
        self.N = N
        self.mu = torus_koopman_matrix(sys, N).eigenvalues()

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        return det_from_eigenvalues(self.mu, np.exp(-s * self.sys.roof))


def twisted_determinant(sys: ToralSuspension, s, N: int):
    return TwistedDeterminant(sys, N)(s)


# ---------------------------------------------------------------- zeros by the argument principle

def _winding(f, z0, z1, z2, z3, n0=64, max_depth=14):
    """Winding number of f around the rectangle z0 -> z1 -> z2 -> z3 -> z0,
    plus the smallest |f| seen on the boundary."""
    total = 0.0
    fmin = np.inf
    for a, b in ((z0, z1), (z1, z2), (z2, z3), (z3, z0)):
        t = np.linspace(0.0, 1.0, n0 + 1)
        zs = a + (b - a) * t
        fs = np.asarray(f(zs), dtype=complex)
        fmin = min(fmin, float(np.abs(fs).min()))
        stack = [(t[i], t[i + 1], fs[i], fs[i + 1], 0) for i in range(n0)]
        while stack:
            ta, tb, fa, fb, dep = stack.pop()
            d = np.angle(fb / fa) if fa != 0 and fb != 0 else np.pi
            if abs(d) > np.pi / 4 and dep < max_depth:
                tm = 0.5 * (ta + tb)
                fm = complex(f(np.array([a + (b - a) * tm]))[0])
                fmin = min(fmin, abs(fm))
                stack.append((ta, tm, fa, fm, dep + 1))
                stack.append((tm, tb, fm, fb, dep + 1))
            else:
                total += d
    return total / TWO_PI, fmin


def _polish(f, z, h=1e-6, tol=1e-13, it=60):
    z0, z1 = complex(z), complex(z) + h
    f0, f1 = complex(f(np.array([z0]))[0]), complex(f(np.array([z1]))[0])
    for _ in range(it):
        if f1 == f0:
            break
        z2 = z1 - f1 * (z1 - z0) / (f1 - f0)
        z0, f0 = z1, f1
        z1 = z2
        f1 = complex(f(np.array([z1]))[0])
        if abs(z1 - z0) < tol * max(1.0, abs(z1)) or f1 == 0:
            break
    return z1


def locate_zeros(f, box, min_size: float = 1e-3, tol: float = 1e-10, max_boxes: int = 100000):
    """Zeros of an analytic f inside box = (re0, re1, im0, im1).

    Boxes are split off-center until each holds one zero (or is smaller than
    min_size), then the zero is polished by secant iteration. Returns a list
    of (zero, multiplicity).
    """
    re0, re1, im0, im1 = map(float, box)
    # off-center split ratio keeps dividing lines away from symmetric zeros
    ratio = 0.5 + 0.5 * (math.sqrt(5) - 2.0) * 0.31

    def count(b):
        a0, a1, b0, b1 = b
        w, fmin = _winding(f, complex(a0, b0), complex(a1, b0), complex(a1, b1), complex(a0, b1))
        return w, fmin

    w, fmin = count((re0, re1, im0, im1))
    if abs(w - round(w)) > 0.1:
        raise NumericalFailure("winding number is not an integer, a zero may sit on the boundary")
    todo = [((re0, re1, im0, im1), int(round(w)))]
    found = []
    boxes = 0
    while todo:
        (a0, a1, b0, b1), n = todo.pop()
        boxes += 1
        if boxes > max_boxes:
            raise NumericalFailure("too many boxes while isolating zeros")
        if n == 0:
            continue
        size = max(a1 - a0, b1 - b0)
        if (n == 1 and size < 0.05) or size < min_size:
            z = _polish(f, complex(0.5 * (a0 + a1), 0.5 * (b0 + b1)))
            if not (a0 - size <= z.real <= a1 + size and b0 - size <= z.imag <= b1 + size):
                z = complex(0.5 * (a0 + a1), 0.5 * (b0 + b1))
            found.append((z, n))
            continue
        for shift in (0.0, 0.07, -0.11, 0.13):
            r = ratio + shift
            if a1 - a0 >= b1 - b0:
                cut = a0 + r * (a1 - a0)
                halves = [(a0, cut, b0, b1), (cut, a1, b0, b1)]
            else:
                cut = b0 + r * (b1 - b0)
                halves = [(a0, a1, b0, cut), (a0, a1, cut, b1)]
            res = [count(h) for h in halves]
            ws = [x[0] for x in res]
            if all(abs(x - round(x)) < 0.1 for x in ws) and sum(round(x) for x in ws) == n:
                break
        else:
            raise NumericalFailure("could not split a box without cutting through a zero")
        for h, x in zip(halves, ws):
            todo.append((h, int(round(x))))
    found.sort(key=lambda e: (e[0].imag, e[0].real))
    return found


# ---------------------------------------------------------------- export

def matrix_triplets(M: TransferMatrix, tol: float = 0.0):
    """Rows (row, col, re, im) of the nonzero entries."""
    S = sp.coo_matrix(M.entries) if not M.is_sparse else M.entries.tocoo()
    keep = np.abs(S.data) > tol
    return list(zip(S.row[keep].tolist(), S.col[keep].tolist(),
                    np.real(S.data[keep]).tolist(), np.imag(S.data[keep]).tolist()))


def write_triplets(M: TransferMatrix, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# shape {M.shape[0]} {M.shape[1]} convention {M.convention}\n")
        for r, c, re, im in matrix_triplets(M):
            fh.write(f"{r} {c} {re:.17g} {im:.17g}\n")


def read_triplets(path):
    with open(path) as fh:
        head = fh.readline().split()
        shape = (int(head[2]), int(head[3]))
        data = np.loadtxt(fh, ndmin=2)
    if not len(data):
        return sp.csr_matrix(shape, dtype=complex)
    return sp.csr_matrix((data[:, 2] + 1j * data[:, 3], (data[:, 0].astype(int), data[:, 1].astype(int))),
                         shape=shape)
