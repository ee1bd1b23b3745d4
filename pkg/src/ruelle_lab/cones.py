"""Frequency cones, cone systems and cone-hyperbolicity checks.

A cone is stored as an orthonormal frame plus an aperture m. Its first
``core_dim`` frame columns span the core, and the cone is
{xi : |xi_perp| <= m |xi_core|} in frame coordinates.
Sampling-based checks use scrambled Sobol points with a fixed seed, so
every predicate here is reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

MARGIN = 1e-6
_SEED = 20240611


@dataclass(frozen=True)
class Cone:
    frame: np.ndarray
    core_dim: int
    aperture: float

    def __post_init__(self):
        F = np.array(self.frame, dtype=float)
        if F.ndim != 2 or F.shape[0] != F.shape[1]:
            raise ValueError("frame must be a square matrix")
        if not np.allclose(F.T @ F, np.eye(F.shape[0]), atol=1e-12):
            raise ValueError("frame must be orthonormal to 1e-12")
        if not (1 <= self.core_dim <= F.shape[0]):
            raise ValueError("core_dim out of range")
        if not (self.aperture >= 0):
            raise ValueError("aperture must be nonnegative")
        F.setflags(write=False)
        object.__setattr__(self, "frame", F)

    @property
    def dim(self) -> int:
        return self.frame.shape[0]

    def split(self, xi):
        """Norms of the core and transverse parts of each row of xi."""
        X = np.atleast_2d(np.asarray(xi, dtype=float))
        Y = X @ self.frame
        core = np.linalg.norm(Y[:, :self.core_dim], axis=1)
        perp = np.linalg.norm(Y[:, self.core_dim:], axis=1)
        return core, perp

    def slope(self, xi):
        """|xi_perp| / |xi_core|, infinite on the transverse subspace."""
        core, perp = self.split(xi)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = perp / core
        s[(core == 0) & (perp == 0)] = 0.0
        s[(core == 0) & (perp > 0)] = np.inf
        return s

    def core_projector(self):
        B = self.frame[:, :self.core_dim]
        return B @ B.T


def _scalar_or_array(res, xi):
    return bool(res[0]) if np.ndim(xi) == 1 else res


def contains(c: Cone, xi):
    """Closed-cone membership; contains(c, 0) is always true."""
    core, perp = c.split(xi)
    scale = np.hypot(core, perp)
    res = perp <= c.aperture * core + 1e-12 * scale
    return _scalar_or_array(res, xi)


def in_interior(c: Cone, xi, margin: float = MARGIN):
    """Membership of nonzero xi in the interior, with a margin relative to |xi|."""
    core, perp = c.split(xi)
    scale = np.hypot(core, perp)
    res = (perp < c.aperture * core - margin * scale) & (scale > 0)
    return _scalar_or_array(res, xi)


def distance_to_cone(c: Cone, xi):
    """Euclidean distance from each row of xi to the closed cone (exact)."""
    core, perp = c.split(xi)
    r = np.hypot(core, perp)
    if c.core_dim == c.dim:
        return np.zeros_like(r)
    phi = np.arctan2(perp, core)
    theta = math.atan(c.aperture)
    gap = phi - theta
    return np.where(gap <= 0, 0.0, r * np.sin(np.minimum(gap, np.pi / 2)))


def _qmc_normal(n, dim, seed):
    if dim == 0:
        return np.zeros((n, 0))
    m = max(0, math.ceil(math.log2(max(n, 1))))
    u = qmc.Sobol(d=dim, scramble=True, seed=seed).random_base2(m)[:n]
    return ndtri(np.clip(u, 1e-12, 1 - 1e-12))


def sphere_samples(dim: int, n: int, seed: int = _SEED) -> np.ndarray:
    """Deterministic low-discrepancy points on the unit sphere of R^dim."""
    g = _qmc_normal(n, dim, seed)
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def cone_samples(c: Cone, n: int, seed: int = _SEED, boundary_fraction: float = 0.5) -> np.ndarray:
    """Unit vectors of the cone, a fixed fraction of them on its boundary."""
    k, D = c.core_dim, c.dim
    g = _qmc_normal(n, D + 1, seed)
    u = g[:, :k]
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    if D == k:
        Y = u
    else:
        v = g[:, k:D]
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        tau = np.clip(0.5 * (1 + np.tanh(g[:, D])), 0, 1)
        nb = int(round(boundary_fraction * n))
        tau[:nb] = 1.0
        t = c.aperture * tau
        Y = np.hstack([u, t[:, None] * v]) / np.sqrt(1 + t ** 2)[:, None]
    return Y @ c.frame.T


def _same_axis(a: Cone, b: Cone) -> bool:
    return a.core_dim == b.core_dim and np.allclose(a.core_projector(), b.core_projector(), atol=1e-12)


def strictly_nested(inner: Cone, outer: Cone, samples: int = 4096, margin: float = MARGIN) -> bool:
    """True iff inner minus the origin sits in the interior of outer."""
    if inner.dim != outer.dim:
        raise ValueError("cones live in different dimensions")
    if _same_axis(inner, outer):
        return inner.aperture < outer.aperture
    pts = cone_samples(inner, max(samples, 100))
    return bool(np.all(in_interior(outer, pts, margin)))


def transverse_gap(a: Cone, b: Cone, samples: int = 4096) -> float:
    """mu = min(d(a on the sphere, b), d(b on the sphere, a)), estimated by sampling."""
    d1 = distance_to_cone(b, cone_samples(a, samples)).min()
    d2 = distance_to_cone(a, cone_samples(b, samples)).min()
    return float(min(d1, d2))


@dataclass(frozen=True)
class ConeSystem:
    c0: Cone
    chain: tuple
    cf: Cone
    flow_dir: np.ndarray
    du: int
    ds: int

    def __post_init__(self):
        object.__setattr__(self, "chain", tuple(self.chain))
        e = np.asarray(self.flow_dir, dtype=float)
        object.__setattr__(self, "flow_dir", e / np.linalg.norm(e))

    @property
    def r(self) -> int:
        return len(self.chain)

    @property
    def dim(self) -> int:
        return self.c0.dim

    def cone(self, tag) -> Cone:
        if tag == "f":
            return self.cf
        if tag == 0:
            return self.c0
        if isinstance(tag, (int, np.integer)) and 1 <= tag <= self.r:
            return self.chain[tag - 1]
        raise ValueError(f"no cone with tag {tag!r}")


def flow_constant(theta: ConeSystem) -> float:
    """Largest c with |<xi, e>| >= c|xi| on C_f, from the frame angle; 0 if none."""
    cf = theta.cf
    v = cf.frame[:, 0]
    beta = math.acos(min(1.0, abs(float(v @ theta.flow_dir))))
    ang = beta + math.atan(cf.aperture)
    return math.cos(ang) if ang < math.pi / 2 else 0.0


def is_cone_system(theta: ConeSystem, samples: int = 10000):
    """Check the five defining properties. Returns (ok, violations).

    Each violation is (condition number, message).
    """
    bad = []
    D = theta.dim
    cones = [theta.c0, *theta.chain, theta.cf]
    if any(c.dim != D for c in cones):
        bad.append((3, "cones live in different dimensions"))
        return False, bad

    pts = sphere_samples(D, samples)
    covered = in_interior(theta.c0, pts) | in_interior(theta.chain[0], pts) | in_interior(theta.cf, pts)
    if not np.all(covered):
        miss = pts[~covered][0]
        bad.append((1, f"direction {np.round(miss, 6).tolist()} not covered by C0, C1, Cf"))

    if theta.cf.core_dim != 1:
        bad.append((2, "C_f is not one-dimensional"))
    elif flow_constant(theta) <= 0:
        bad.append((2, "C_f reaches the hyperplane orthogonal to the flow"))

    if theta.du + theta.ds + 1 != D:
        bad.append((3, f"du + ds + 1 = {theta.du + theta.ds + 1} != {D}"))
    if theta.c0.core_dim != theta.ds:
        bad.append((3, "C_0 dimension differs from ds"))
    for i, c in enumerate(theta.chain, 1):
        if c.core_dim != theta.du:
            bad.append((3, f"C_{i} dimension differs from du"))

    for i in range(1, theta.r):
        if not strictly_nested(theta.chain[i], theta.chain[i - 1], samples):
            bad.append((4, f"C_{i + 1} is not compactly inside C_{i}"))

    if theta.r >= 2:
        c2 = theta.chain[1]
        if transverse_gap(theta.c0, c2, samples) <= 0:
            bad.append((5, "C_0 and C_2 share a nonzero direction"))
        if transverse_gap(theta.cf, c2, samples) <= 0:
            bad.append((5, "C_f and C_2 share a nonzero direction"))
    return not bad, bad


@dataclass
class ConeHyperbolicityReport:
    holds: bool
    Lambda: float
    witnesses: list = field(default_factory=list)
    expansion: float = float("nan")
    contraction: float = float("nan")


def _dt_at(dt_transpose, x):
    return np.asarray(dt_transpose(x) if callable(dt_transpose) else dt_transpose, dtype=float)


def cone_hyperbolic(dt_transpose, theta: ConeSystem, theta_p: ConeSystem, samples: int = 4000,
                    points=None) -> ConeHyperbolicityReport:
    """Check that the transposed derivative maps theta's cones into theta_p's.

    dt_transpose is a matrix or a callable x -> matrix evaluated on ``points``.
    Reports the largest Lambda compatible with expansion on C_{r-1} and
    contraction towards C'_0.
    """
    if theta.dim != theta_p.dim:
        raise ValueError("cone systems live in different dimensions")
    if points is None:
        points = [None]
    r = theta.r
    wit = []
    lam_exp = np.inf
    lam_con = np.inf
    for x in points:
        M = _dt_at(dt_transpose, x)
        for i in range(1, r + 1):
            xi = cone_samples(theta.chain[i - 1], samples, seed=_SEED + i)
            ok = contains(theta_p.cone(min(i + 2, r)), xi @ M.T)
            if not np.all(ok):
                wit.append((x, xi[~ok][0], 1))
        xi = cone_samples(theta.cf, samples, seed=_SEED + 101)
        hit = contains(theta_p.c0, xi @ M.T)
        if np.any(hit):
            wit.append((x, xi[hit][0], 2))
        xi = cone_samples(theta.chain[r - 2], samples, seed=_SEED + 102)
        lam_exp = min(lam_exp, float(np.min(np.linalg.norm(xi @ M.T, axis=1))))
        # xi with M xi in C'_0: pull back samples of C'_0
        eta = cone_samples(theta_p.c0, samples, seed=_SEED + 103)
        try:
            pre = np.linalg.solve(M, eta.T).T
        except np.linalg.LinAlgError:
            wit.append((x, eta[0], 4))
            lam_con = 0.0
            continue
        lam_con = min(lam_con, float(np.min(np.linalg.norm(pre, axis=1))))
    Lam = min(lam_exp, lam_con)
    if not lam_exp > 1 + 1e-9:
        wit.append((None, None, 3))
    if not lam_con > 1 + 1e-9:
        wit.append((None, None, 4))
    return ConeHyperbolicityReport(not wit, Lam, wit, lam_exp, lam_con)


def toral_suspension_cone_system(A, r: int = 4, apertures=None) -> ConeSystem:
    """Cone system in R^3 around the eigen-directions of A^T plus the flow axis.

    Default apertures: 1.6 for C_0, C_1 and C_f, then 0.55 * 0.75**(i-2)
    along the chain. They make a valid system for hyperbolic 2x2 matrices
    with orthogonal eigenvectors.
    """
    At = np.asarray(A, dtype=float).T
    w, V = np.linalg.eig(At)
    if np.iscomplexobj(w) and np.any(np.abs(w.imag) > 0):
        raise ValueError("A must be hyperbolic")
    w, V = w.real, V.real
    iu = int(np.argmax(np.abs(w)))
    u = V[:, iu] / np.linalg.norm(V[:, iu])
    s = V[:, 1 - iu] / np.linalg.norm(V[:, 1 - iu])
    e3 = np.array([0.0, 0.0, 1.0])

    def frame(core2):
        c = np.array([core2[0], core2[1], 0.0])
        p = np.array([-core2[1], core2[0], 0.0])
        return np.column_stack([c, p, e3])

    if apertures is None:
        apertures = {}
    m0 = apertures.get(0, 1.6)
    mf = apertures.get("f", 1.6)
    chain_m = [apertures.get(i, 1.6 if i == 1 else 0.55 * 0.75 ** (i - 2)) for i in range(1, r + 1)]
    Fu = frame(u)
    cf_frame = np.column_stack([e3, [1.0, 0, 0], [0, 1.0, 0]])
    return ConeSystem(
        c0=Cone(frame(s), 1, m0),
        chain=tuple(Cone(Fu, 1, m) for m in chain_m),
        cf=Cone(cf_frame, 1, mf),
        flow_dir=e3,
        du=1,
        ds=1,
    )


def suspension_derivative_transpose(A, power: int = 1) -> np.ndarray:
    """Transposed derivative of the time-``power`` map of a unit-roof suspension."""
    P = np.linalg.matrix_power(np.asarray(A, dtype=float), power)
    M = np.eye(3)
    M[:2, :2] = P.T
    return M


# ---------------------------------------------------------------- transitions

@dataclass(frozen=True)
class TransitionParams:
    """Constants of the band transition relation.

    a: lower bound for the smallest singular value of the transposed derivative.
    c: flow constant of C_f and C'_f.
    nu: in (0, log2(Lambda)/alpha).
    """
    r: int
    alpha: float
    nu: float
    a: float
    c: float


def transition_params(theta, theta_p, dt_transpose, alpha, nu, Lambda=None) -> TransitionParams:
    M = _dt_at(dt_transpose, None)
    smin = float(np.linalg.svd(M, compute_uv=False).min())
    c = min(flow_constant(theta), flow_constant(theta_p))
    if Lambda is not None and not (0 < nu < math.log2(Lambda) / alpha):
        raise ValueError("nu must lie in (0, log2(Lambda)/alpha)")
    return TransitionParams(theta.r, alpha, nu, 0.9 * smin, c)


def related(src, dst, tp: TransitionParams) -> bool:
    """Whether band src = (l, j) may feed band dst = (n, i) under linear dynamics."""
    (l, j), (n, i) = src, dst
    r, al = tp.r, tp.alpha
    mid = set(range(1, r - 1))
    la = math.log2(tp.a)
    if i == 0 and j == 0:
        return l >= n + tp.nu * n ** (1 - al)
    if i == r - 1 and j == r - 1:
        return n >= l + tp.nu * l ** (1 - al)
    if j == 0 and (i == "f" or 1 <= i <= r - 1):
        return True
    if (j in mid or j == "f") and i == r - 1:
        return l <= n ** al + 4 - la
    if (j in mid or j == "f") and i in mid and (j == "f" or i >= j + 1):
        return n >= l - 4 + la
    if i == "f" and j == "f":
        return abs(l - n) <= 10 - math.log2(tp.c)
    return False


class RelatedPairError(ValueError):
    """The separation estimate says nothing about related pairs."""


class BelowThresholdError(ValueError):
    """Both bands sit below the separation threshold."""


def band_scale(n, tag, r, alpha) -> float:
    """2^(n^alpha_i) with alpha_i = alpha on the stretched bands, else 1."""
    e = alpha if tag in (0, r - 1) else 1.0
    return 2.0 ** (n ** e)


def support_separation(theta, theta_p, dt_transpose, pair, alpha, *, spec, angular, angular_p,
                       nu=1.0, threshold=8, samples=20000, radii=24) -> float:
    """Sampled distance between supp psi'_(n,i) and DT^tr(supp enlarged psi_(l,j)).

    pair = ((n, i), (l, j)). Compare the result with
    c' * max(2^(n^alpha_i), 2^(l^alpha_j)).
    """
    from scipy.spatial import cKDTree

    from .multiplier_bank import band_radial_support, band_values_at, enlarged_band_values_at

    (n, i), (l, j) = pair
    M = _dt_at(dt_transpose, None)
    tp = transition_params(theta, theta_p, M, alpha, nu)
    if related((l, j), (n, i), tp):
        raise RelatedPairError(f"related pair {(l, j)} -> {(n, i)}")
    if max(n, l) <= threshold:
        raise BelowThresholdError(f"max({n}, {l}) <= {threshold}")

    def support_points(lo, hi, keep):
        dirs = sphere_samples(theta.dim, samples, seed=_SEED + 7)
        rs = np.linspace(lo, hi, radii)
        pts = (rs[:, None, None] * dirs[None, :, :]).reshape(-1, theta.dim)
        return pts[keep(pts) > 0]

    lo, hi = band_radial_support(spec, n, i)
    P = support_points(lo, hi, lambda X: band_values_at(spec, angular_p, n, i, X))
    lo, hi = band_radial_support(spec, l, j, enlarged=True)
    Q = support_points(lo, hi, lambda X: enlarged_band_values_at(spec, angular, l, j, X)) @ M.T
    if len(P) == 0 or len(Q) == 0:
        return math.inf
    dist, _ = cKDTree(Q).query(P)
    return float(dist.min())


# ---------------------------------------------------------------- serialization

def dump_cone_system(theta: ConeSystem) -> str:
    """Plain-text key-value form: one ``key = values`` line per entry."""
    lines = [f"dim = {theta.dim}", f"r = {theta.r}", f"du = {theta.du}", f"ds = {theta.ds}",
             "flow_dir = " + " ".join(repr(float(v)) for v in theta.flow_dir)]
    for tag in [0, *range(1, theta.r + 1), "f"]:
        c = theta.cone(tag)
        lines.append(f"cone.{tag}.core_dim = {c.core_dim}")
        lines.append(f"cone.{tag}.aperture = {c.aperture!r}")
        for k, row in enumerate(c.frame):
            lines.append(f"cone.{tag}.frame.{k} = " + " ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def load_cone_system(text: str) -> ConeSystem:
    kv = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {ln}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        kv[k] = v
    try:
        dim, r = int(kv["dim"]), int(kv["r"])

        def cone(tag):
            frame = [[float(t) for t in kv[f"cone.{tag}.frame.{k}"].split()] for k in range(dim)]
            return Cone(np.array(frame), int(kv[f"cone.{tag}.core_dim"]), float(kv[f"cone.{tag}.aperture"]))

        return ConeSystem(cone(0), tuple(cone(i) for i in range(1, r + 1)), cone("f"),
                          np.array([float(t) for t in kv["flow_dir"].split()]),
                          int(kv["du"]), int(kv["ds"]))
    except KeyError as e:
        raise ValueError(f"missing key {e.args[0]}") from None
