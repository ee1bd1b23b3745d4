"""Batch runner: ``ruelle-lab <kind> --config run.json [--out dir] [--threads n] [--no-plots]``.

One experiment per invocation. Every run writes CSV tables (header row
first, floats in round-trip ``%.17g`` form), optional SVG plots and a
``manifest.json`` echoing the parsed config, package versions and wall time.

Exit status: 0 success, 2 configuration error, 3 numerical failure.

Config layout (JSON, every section optional unless the kind needs it)::

    {
      "system": {"type": "circle", "degree": 2,
                 "perturbation": [[k, re, im], ...], "potential": [[k, re, im], ...]}
             or {"type": "suspension", "matrix": [[2, 1], [1, 1]], "roof": 1.0,
                 "potential": [[k1, k2, re, im], ...]},
      "weight": {"alpha": 0.4, "beta": 1.0, "r": 4, "d": 2, "t0": 0.5},
      "truncation": {"N": 256, "k_max": 1000, "T_max": 12, "n_max": 10,
                     "K": [10, 100, 1000, 2000]},
      "grid": {"re": [1, 3, 5], "im": [-5, 5, 5]},
      "zeros": {"box": [-1, 1, -7, 7], "min_size": 1e-3},
      "test_function": {"center": 2.0, "width": 0.3, "normalized": false},
      "cones": {"r": 4, "power": 2, "samples": 10000, "pairs": 20,
                "n_range": [9, 14], "seed": 0},
      "output": {"dir": "out", "plots": true}
    }
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

from .errors import ConfigError, NumericalFailure
from .report import set_threads

KINDS = ("orbits", "determinant", "resonances", "trace-check", "singular-values", "cone-check", "factorization")


# ---------------------------------------------------------------- config parsing

@dataclass
class ExperimentConfig:
    kind: str
    system: dict = None
    weight: dict = field(default_factory=dict)
    truncation: dict = field(default_factory=dict)
    grid: dict = None
    zeros: dict = None
    test_function: dict = None
    cones: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)


_SECTIONS = ("kind", "system", "weight", "truncation", "grid", "zeros", "test_function", "cones", "output")
_POSITIVE_INT = ("N", "k_max", "n_max")


def _num(x, where, positive=False, integer=False):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"field '{where}': expected a number, got {json.dumps(x)}")
    if integer and (not float(x).is_integer()):
        raise ConfigError(f"field '{where}': expected an integer, got {x}")
    if not math.isfinite(x):
        raise ConfigError(f"field '{where}': must be finite")
    if positive and not x > 0:
        raise ConfigError(f"field '{where}': must be positive, got {x}")
    return int(x) if integer else float(x)


def _get(sec: dict, key: str, where: str, default=None, required=False, **kw):
    if key not in sec:
        if required:
            raise ConfigError(f"field '{where}.{key}': required")
        return default
    return _num(sec[key], f"{where}.{key}", **kw)


def _section(doc, key, kind=dict):
    v = doc.get(key)
    if v is not None and not isinstance(v, kind):
        raise ConfigError(f"field '{key}': expected a JSON {'object' if kind is dict else 'value'}")
    return v


def parse_config(text: str, kind: str | None = None) -> ExperimentConfig:
    """Parse and validate a JSON config; ``kind`` (from the command line) wins
    over a ``kind`` field, and the two must agree when both are present."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"JSON parse error at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"field '{unknown[0]}': unknown section (expected one of {', '.join(_SECTIONS)})")
    k = doc.get("kind")
    if k is not None and kind is not None and k != kind:
        raise ConfigError(f"field 'kind': config says {k!r} but the command line asks for {kind!r}")
    kind = kind or k
    if kind not in KINDS:
        raise ConfigError(f"field 'kind': {kind!r} is not one of {', '.join(KINDS)}")
    cfg = ExperimentConfig(kind=kind, raw=doc)
    cfg.system = _section(doc, "system")
    cfg.weight = _section(doc, "weight") or {}
    cfg.truncation = _section(doc, "truncation") or {}
    cfg.grid = _section(doc, "grid")
    cfg.zeros = _section(doc, "zeros")
    cfg.test_function = _section(doc, "test_function")
    cfg.cones = _section(doc, "cones") or {}
    cfg.output = _section(doc, "output") or {}
    for key, v in cfg.truncation.items():
        where = f"truncation.{key}"
        if key in _POSITIVE_INT:
            _num(v, where, positive=True, integer=True)
        elif key == "T_max":
            _num(v, where, positive=True)
        elif key == "K":
            ks = v if isinstance(v, list) else [v]
            if not ks:
                raise ConfigError(f"field '{where}': empty list")
            for j, t in enumerate(ks):
                _num(t, f"{where}[{j}]", positive=True, integer=True)
        else:
            raise ConfigError(f"field '{where}': unknown truncation (expected N, k_max, T_max, n_max, K)")
    return cfg


def _system(cfg: ExperimentConfig, want=None):
    from .models import CircleMap, ToralSuspension, TrigPoly

    s = cfg.system
    if s is None:
        raise ConfigError("field 'system': required for kind " + cfg.kind)
    t = s.get("type")
    if want is not None and t != want:
        raise ConfigError(f"field 'system.type': kind {cfg.kind} needs a {want}, got {t!r}")
    try:
        if t == "circle":
            deg = _get(s, "degree", "system", 2, integer=True)
            pert = TrigPoly.from_terms(s.get("perturbation"), 1)
            pot = TrigPoly.from_terms(s.get("potential"), 1)
            return CircleMap(deg, pert, pot)
        if t == "suspension":
            A = s.get("matrix", [[2, 1], [1, 1]])
            roof = _get(s, "roof", "system", 1.0, positive=True)
            pot = TrigPoly.from_terms(s.get("potential"), 2)
            return ToralSuspension(A, roof, pot)
    except ConfigError as e:
        raise ConfigError(f"field 'system': {e}") from None
    except (TypeError, ValueError) as e:
        raise ConfigError(f"field 'system': {e}") from None
    raise ConfigError(f"field 'system.type': expected 'circle' or 'suspension', got {t!r}")


def _trunc(cfg, key, default=None):
    v = cfg.truncation.get(key, default)
    if v is None:
        raise ConfigError(f"field 'truncation.{key}': required for kind {cfg.kind}")
    return v


def _grid(cfg, default):
    import numpy as np

    g = cfg.grid or default
    pts = []
    for ax in ("re", "im"):
        v = g.get(ax)
        if not (isinstance(v, list) and len(v) == 3):
            raise ConfigError(f"field 'grid.{ax}': expected [start, stop, count]")
        a = _num(v[0], f"grid.{ax}[0]")
        b = _num(v[1], f"grid.{ax}[1]")
        n = _num(v[2], f"grid.{ax}[2]", positive=True, integer=True)
        pts.append(np.linspace(a, b, n))
    re, im = np.meshgrid(pts[0], pts[1])
    return (re + 1j * im).ravel()


def _test_function(cfg):
    from .trace_check import TestFunction

    tf = cfg.test_function
    if tf is None:
        raise ConfigError("field 'test_function': required for kind trace-check")
    c = _get(tf, "center", "test_function", required=True)
    w = _get(tf, "width", "test_function", required=True, positive=True)
    try:
        if tf.get("normalized", False):
            return TestFunction.normalized(c, w)
        return TestFunction(c, w, _get(tf, "amplitude", "test_function", 1.0))
    except ValueError as e:
        raise ConfigError(f"field 'test_function': {e}") from None


# ---------------------------------------------------------------- experiments

class Run:
    """Collects outputs of one experiment."""

    def __init__(self, out_dir, plots):
        self.out = out_dir
        self.plots = plots
        self.outputs = {}
        self.summary = {}

    def csv(self, name, header, rows):
        from .report import write_csv

        self.outputs[name] = write_csv(os.path.join(self.out, name), header, rows)

    def text(self, name, body):
        from .report import write_text

        self.outputs[name] = write_text(os.path.join(self.out, name), body)

    def plot(self, name, fn, *args, **kw):
        if not self.plots:
            return
        self.outputs[name] = fn(os.path.join(self.out, name), *args, **kw)


def run_orbits(cfg, run: Run):
    import numpy as np

    from .models import CircleMap, enumerate_orbits_circle, enumerate_orbits_suspension

    m = _system(cfg)
    if isinstance(m, CircleMap):
        n_max = _trunc(cfg, "n_max")
        orbits = enumerate_orbits_circle(m, n_max)
        unit = 1.0
        expected = [abs(m.degree ** n - 1) for n in range(1, n_max + 1)]
    else:
        T_max = _trunc(cfg, "T_max")
        orbits = enumerate_orbits_suspension(m, T_max)
        unit = m.roof
        n_max = int(math.floor(T_max / unit + 1e-12))
        expected = [m.fixed_point_count(n) for n in range(1, n_max + 1)]
    run.csv("orbits.csv", ["T", "T_primitive", "det_abs", "g_re", "g_im", "count"],
            [(o.T, o.T_primitive, o.det_abs, o.g_integral.real, o.g_integral.imag, o.count_hint)
             for o in orbits])
    counts = [0] * n_max
    for o in orbits:
        n = int(round(o.T / unit))
        counts[n - 1] += o.count_hint * int(round(o.T_primitive / unit))
    rows = [(n, c, e) for n, (c, e) in enumerate(zip(counts, expected), 1)]
    run.csv("counts.csv", ["n", "fixed_points", "expected"], rows)
    run.summary["orbit_records"] = len(orbits)
    run.summary["counts_match"] = all(c == e for _, c, e in rows)
    from .report import line_plot

    ns = np.arange(1, n_max + 1)
    run.plot("counts.svg", line_plot, [("fixed points", ns, np.maximum(counts, 1))], "n",
             "fixed points of the n-th iterate", "Periodic point counts", "counts.csv", logy=True)


def run_determinant(cfg, run: Run):
    import numpy as np

    from .determinant import discrete_determinant, dg_grid
    from .models import CircleMap, enumerate_orbits_circle, enumerate_orbits_suspension
    from .report import line_plot
    from .transfer import TwistedDeterminant, expanding_transfer_matrix, locate_zeros

    m = _system(cfg)
    N = cfg.truncation.get("N")
    if isinstance(m, CircleMap):
        n_max = _trunc(cfg, "n_max")
        orbits = enumerate_orbits_circle(m, n_max)
        z = _grid(cfg, {"re": [-0.6, 0.6, 5], "im": [-0.6, 0.6, 5]})
        M = expanding_transfer_matrix(m, N) if N else None
        mats = M.det_i_minus(z) if M is not None else np.full(len(z), complex("nan"))
        vals, tails = discrete_determinant(orbits, z, n_max)
        rows = []
        for zz, mat, v, tail in zip(z, mats, vals, tails):
            rows.append((zz.real, zz.imag, v.real, v.imag, tail, mat.real, mat.imag))
        run.csv("determinant.csv", ["z_re", "z_im", "orbit_re", "orbit_im", "orbit_tail", "matrix_re", "matrix_im"], rows)
        f = M.det_i_minus if M is not None else None
    else:
        T_max = _trunc(cfg, "T_max")
        orbits = enumerate_orbits_suspension(m, T_max)
        s = _grid(cfg, {"re": [1, 3, 5], "im": [-5, 5, 5]})
        dg = dg_grid(orbits, s, T_max)
        td = TwistedDeterminant(m, N) if N else None
        tw = td(s) if td is not None else np.full(len(s), complex("nan"))
        rows = [(p.real, p.imag, v.real, v.imag, t, w.real, w.imag)
                for p, v, t, w in zip(s, dg.values, dg.tail, tw)]
        run.csv("determinant.csv", ["s_re", "s_im", "orbit_re", "orbit_im", "orbit_tail", "twisted_re", "twisted_im"], rows)
        run.summary["abscissa"] = dg.abscissa
        f = td
    if cfg.zeros is not None:
        if f is None:
            raise ConfigError("field 'zeros': locating zeros needs truncation.N")
        box = cfg.zeros.get("box")
        if not (isinstance(box, list) and len(box) == 4):
            raise ConfigError("field 'zeros.box': expected [re_min, re_max, im_min, im_max]")
        box = [_num(b, f"zeros.box[{j}]") for j, b in enumerate(box)]
        ms = _get(cfg.zeros, "min_size", "zeros", 1e-3, positive=True)
        zs = locate_zeros(f, box, ms)
        run.csv("zeros.csv", ["re", "im", "multiplicity"], [(w.real, w.imag, k) for w, k in zs])
        run.summary["zeros"] = len(zs)
    mid = [r for r in rows if abs(r[1]) == min(abs(q[1]) for q in rows)]
    run.plot("determinant.svg", line_plot,
             [("orbit sum", [r[0] for r in mid], [math.hypot(r[2], r[3]) for r in mid])],
             "Re", "modulus", "Determinant along the real axis", "determinant.csv")


def run_resonances(cfg, run: Run):
    import numpy as np

    from .models import CircleMap
    from .report import scatter_plot
    from .transfer import cluster_eigenvalues, expanding_transfer_matrix, resonances_suspension

    m = _system(cfg)
    N = _trunc(cfg, "N")
    if isinstance(m, CircleMap):
        w = cfg.weight
        weight = None
        if "alpha" in w or "beta" in w:
            weight = (_get(w, "alpha", "weight", required=True, positive=True),
                      _get(w, "beta", "weight", required=True))
        M = expanding_transfer_matrix(m, N, "transfer", weight)
        mu = M.eigenvalues()
        ent = [(complex(v), k) for v, k in cluster_eigenvalues(mu[np.abs(mu) > 1e-12])]
        ent.sort(key=lambda e: (-abs(e[0]), e[0].real, e[0].imag))
        run.csv("resonances.csv", ["re", "im", "multiplicity", "modulus"],
                [(v.real, v.imag, k, abs(v)) for v, k in ent])
    else:
        res = resonances_suspension(m, N, _trunc(cfg, "k_max"))
        ent = list(res.entries)
        run.csv("resonances.csv", ["re", "im", "multiplicity", "modulus"],
                [(complex(v).real, complex(v).imag, k, abs(v)) for v, k in ent])
    run.summary["count"] = len(ent)
    run.plot("resonances.svg", scatter_plot, [("resonances", [complex(v).real for v, _ in ent],
                                               [complex(v).imag for v, _ in ent])],
             "Re", "Im", "Resonances", "resonances.csv")


def run_trace_check(cfg, run: Run):
    from .models import enumerate_orbits_suspension
    from .report import line_plot
    from .trace_check import OrbitTableShort, lhs_resonance_sum, rhs_orbit_sum
    from .transfer import resonances_suspension

    m = _system(cfg, "suspension")
    h = _test_function(cfg)
    N = _trunc(cfg, "N", 8)
    K = cfg.truncation.get("K", [2000])
    K_list = sorted(set(int(k) for k in (K if isinstance(K, list) else [K])))
    k_max = cfg.truncation.get("k_max", (max(K_list) + 1) // 2)
    T_max = _trunc(cfg, "T_max", math.ceil(h.support[1] / m.roof) * m.roof)
    res = resonances_suspension(m, N, k_max)
    orbits = enumerate_orbits_suspension(m, T_max)
    try:
        rhs = rhs_orbit_sum(orbits, h, T_max=T_max)
    except OrbitTableShort as e:
        raise ConfigError(f"field 'truncation.T_max': {e}") from None
    rows = []
    for k in K_list:
        lhs = lhs_resonance_sum(res, h, k)
        rows.append((k, lhs.value.real, lhs.value.imag, rhs.real, rhs.imag, abs(lhs.value - rhs), lhs.tail, 0.0))
    run.csv("trace_check.csv", ["K", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "gap", "lhs_tail", "rhs_tail"], rows)
    run.summary["final_gap"] = rows[-1][5]
    run.plot("trace_check.svg", line_plot, [("gap", [r[0] for r in rows], [max(r[5], 1e-300) for r in rows])],
             "K", "|lhs - rhs|", "Trace formula gap", "trace_check.csv", logx=True, logy=True)


def run_singular_values(cfg, run: Run):
    import numpy as np

    from .report import line_plot
    from .transfer import doubling_singular_values

    w = cfg.weight
    a = _get(w, "alpha", "weight", required=True, positive=True)
    b = _get(w, "beta", "weight", required=True, positive=True)
    N = _trunc(cfg, "N")
    try:
        closed, svd = doubling_singular_values(a, b, N)
    except ValueError as e:
        raise ConfigError(f"field 'weight': {e}") from None
    rows = [(n, c, s, abs(c - s)) for n, (c, s) in enumerate(zip(closed, svd))]
    run.csv("singular_values.csv", ["n", "closed_form", "svd_value", "abs_diff"], rows)
    run.summary["max_abs_diff"] = max(r[3] for r in rows)
    idx = np.arange(len(closed))
    pos = closed > 0
    run.plot("singular_values.svg", line_plot,
             [("closed form", idx[pos], closed[pos]), ("SVD", idx[pos], np.maximum(svd[pos], 1e-300))],
             "n", "singular value", "Weighted doubling operator", "singular_values.csv", logy=True)


def run_cone_check(cfg, run: Run):
    import numpy as np

    from .cones import (BelowThresholdError, RelatedPairError, band_scale, cone_hyperbolic, dump_cone_system,
                        flow_constant, is_cone_system, related, suspension_derivative_transpose,
                        support_separation, toral_suspension_cone_system, transition_params)
    from .multiplier_bank import AngularPartition, WeightSpec
    from .report import scatter_plot

    m = _system(cfg, "suspension")
    c = cfg.cones
    r = _get(c, "r", "cones", 4, positive=True, integer=True)
    power = _get(c, "power", "cones", 2, positive=True, integer=True)
    samples = _get(c, "samples", "cones", 10000, positive=True, integer=True)
    try:
        theta = toral_suspension_cone_system(m.matrix, r)
    except ValueError as e:
        raise ConfigError(f"field 'system.matrix': {e}") from None
    run.text("cone_system.txt", dump_cone_system(theta))
    ok, bad = is_cone_system(theta, samples)
    M = suspension_derivative_transpose(m.matrix, power)
    hyp = cone_hyperbolic(M, theta, theta)
    ident = cone_hyperbolic(np.eye(3), theta, theta)
    rows = [("is_cone_system", float(len(bad)), ok),
            ("hyperbolic_Lambda", hyp.Lambda, hyp.holds),
            ("identity_rejected", float(len(ident.witnesses)), not ident.holds),
            ("flow_constant", flow_constant(theta), flow_constant(theta) > 0)]
    for cond, msg in bad:
        run.summary.setdefault("violations", []).append(f"({cond}) {msg}")
    pairs_wanted = _get(c, "pairs", "cones", 0, integer=True)
    if pairs_wanted:
        w = cfg.weight
        alpha = _get(w, "alpha", "weight", 0.4, positive=True)
        d = _get(w, "d", "weight", 2, positive=True, integer=True)
        nr = c.get("n_range", [9, 14])
        lo, hi = (_num(v, f"cones.n_range[{j}]", integer=True) for j, v in enumerate(nr))
        seed = _get(c, "seed", "cones", 0, integer=True)
        try:
            spec = WeightSpec(alpha, r, d)
        except ValueError as e:
            raise ConfigError(f"field 'weight': {e}") from None
        ang = AngularPartition(theta)
        tp = transition_params(theta, theta, M, alpha, spec.nu)
        cands = [((n, i), (l, j)) for n in range(lo, hi + 1) for l in range(lo, hi + 1)
                 for i in spec.tags for j in spec.tags if not related((l, j), (n, i), tp)]
        if len(cands) < pairs_wanted:
            raise ConfigError(f"field 'cones.pairs': only {len(cands)} unrelated pairs in n_range")
        rng = np.random.default_rng(seed)
        pick = sorted(rng.choice(len(cands), pairs_wanted, replace=False))
        srows = []
        for k in pick:
            (n, i), (l, j) = cands[k]
            try:
                dist = support_separation(theta, theta, M, cands[k], alpha, spec=spec, angular=ang,
                                          angular_p=ang, samples=4000)
            except (RelatedPairError, BelowThresholdError):
                continue
            ratio = dist / max(band_scale(n, i, r, alpha), band_scale(l, j, r, alpha))
            srows.append((n, str(i), l, str(j), dist, ratio))
        run.csv("separation.csv", ["n", "i", "l", "j", "distance", "ratio"], srows)
        cmin = min(s[5] for s in srows)
        rows.append(("separation_c_prime", cmin, cmin > 0))
        run.plot("separation.svg", scatter_plot, [("pairs", [max(s[0], s[2]) for s in srows], [s[5] for s in srows])],
                 "max(n, l)", "distance / scale", "Support separation", "separation.csv")
    run.csv("cone_check.csv", ["check", "value", "passed"], rows)
    run.summary["all_passed"] = all(r_[2] for r_ in rows)


def run_factorization(cfg, run: Run):
    from .determinant import FactorizationParams, dg_grid, factorization_residual
    from .models import enumerate_orbits_suspension
    from .report import line_plot
    from .transfer import resonances_suspension

    m = _system(cfg, "suspension")
    w = cfg.weight
    t0 = _get(w, "t0", "weight", 0.5, positive=True)
    d = _get(w, "d", "weight", 2, integer=True)
    if d < 0:
        raise ConfigError("field 'weight.d': must be nonnegative")
    T_max = _trunc(cfg, "T_max", 30)
    N = _trunc(cfg, "N", 8)
    k_max = _trunc(cfg, "k_max", 200)
    orbits = enumerate_orbits_suspension(m, T_max)
    s = _grid(cfg, {"re": [1, 3, 9], "im": [-10, 10, 21]})
    dg = dg_grid(orbits, s, T_max)
    res = resonances_suspension(m, N, k_max)
    fit = factorization_residual(dg, FactorizationParams(t0, d, res))
    run.csv("factorization.csv", ["s_re", "s_im", "residual"],
            [(p.real, p.imag, r) for p, r in zip(s, fit.residuals)])
    run.csv("polynomial.csv", ["k", "re", "im"], [(k, c.real, c.imag) for k, c in enumerate(fit.P)])
    run.summary.update(residual=fit.residual, condition=fit.condition,
                       log_mu_re=fit.log_mu.real, log_mu_im=fit.log_mu.imag)
    mid = [j for j in range(len(s)) if abs(s[j].imag) == min(abs(s.imag))]
    run.plot("factorization.svg", line_plot, [("residual", s.real[mid], [max(fit.residuals[j], 1e-300) for j in mid])],
             "Re s", "residual", "Factorization residual on the real axis", "factorization.csv", logy=True)


RUNNERS = {
    "orbits": run_orbits,
    "determinant": run_determinant,
    "resonances": run_resonances,
    "trace-check": run_trace_check,
    "singular-values": run_singular_values,
    "cone-check": run_cone_check,
    "factorization": run_factorization,
}


# ---------------------------------------------------------------- entry point

def build_parser():
    p = argparse.ArgumentParser(prog="ruelle-lab", description="Run one resonance experiment from a JSON config.")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", required=True, help="path to the JSON config")
    p.add_argument("--out", help="output directory (default: output.dir or ./out/<kind>)")
    p.add_argument("--threads", type=int, help="BLAS/OpenMP threads (default: all cores)")
    p.add_argument("--no-plots", action="store_true", help="skip SVG figures")
    return p


def _manifest(out, kind, cfg_doc, outputs, t0, status, summary):
    from .report import write_manifest

    try:
        write_manifest(os.path.join(out, "manifest.json"), kind, cfg_doc, outputs, time.monotonic() - t0, status, summary)
    except OSError:
        pass


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("ruelle-lab: --threads must be positive", file=sys.stderr)
        return 2
    set_threads(args.threads)
    t0 = time.monotonic()
    out = args.out
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as e:
        print(f"ruelle-lab: cannot read config: {e}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text, args.kind)
    except ConfigError as e:
        print(f"ruelle-lab: config error in {args.config}: {e}", file=sys.stderr)
        if out:
            os.makedirs(out, exist_ok=True)
            _manifest(out, args.kind, None, {}, t0, "config-error", {"error": str(e)})
        return 2
    out = out or cfg.output.get("dir") or os.path.join("out", args.kind)
    plots = not args.no_plots and bool(cfg.output.get("plots", True))
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as e:
        print(f"ruelle-lab: cannot create output directory {out}: {e}", file=sys.stderr)
        return 2
    run = Run(out, plots)
    try:
        RUNNERS[cfg.kind](cfg, run)
    except ConfigError as e:
        print(f"ruelle-lab: config error in {args.config}: {e}", file=sys.stderr)
        _manifest(out, cfg.kind, cfg.raw, run.outputs, t0, "config-error", {"error": str(e)})
        return 2
    except NumericalFailure as e:
        print(f"ruelle-lab: numerical failure in {cfg.kind}: {type(e).__name__}: {e}", file=sys.stderr)
        _manifest(out, cfg.kind, cfg.raw, run.outputs, t0, "numerical-failure", {"error": str(e)})
        return 3
    _manifest(out, cfg.kind, cfg.raw, run.outputs, t0, "ok", run.summary)
    for name in sorted(run.outputs):
        print(os.path.join(out, name))
    return 0


if __name__ == "__main__":
    sys.exit(main())
