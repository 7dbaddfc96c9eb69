"""Self-contained property suites for jets and curvature conventions.

These run without pytest so that ``weylscope selftest`` can check an
installation.  The same residual functions back the acceptance tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import corpus
from .curvature import curvature_bundle
from .detect import cspace_transform_check, weyl_invariance_check
from .dsl import MetricDefinition, evaluate_metric_jets
from .expr import parse_expr
from .frame import sample_points
from .jet import jet_eval

ein = np.einsum


@dataclass
class Check:
    name: str
    value: float
    tol: float

    @property
    def ok(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tol)

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name:<40s} {self.value:.3e} (tol {self.tol:.0e})"


def _rel(a, scale):
    return float(np.abs(a).max() / max(float(np.abs(scale).max()), 1e-300))


def identity_residuals(defn: MetricDefinition, pts) -> dict:
    """Relative residuals of the algebraic and differential curvature identities."""
    b = curvature_bundle(evaluate_metric_jets(defn, np.asarray(pts, float), order=3), full=True)
    R, W, gi = b.riemann, b.weyl, b.g_inv
    n = defn.dim
    sym = max(_rel(R + np.swapaxes(R, -4, -3), R),
              _rel(R + np.swapaxes(R, -2, -1), R),
              _rel(R - R.transpose(*range(R.ndim - 4), -2, -1, -4, -3), R))
    bianchi = _rel(R + ein("...jkil->...ijkl", R) + ein("...kijl->...ijkl", R), R)
    traces = max(_rel(ein("...ijkl,...ik->...jl", W, gi), R),
                 _rel(ein("...ijkl,...il->...jk", W, gi), R),
                 _rel(ein("...ijkl,...jk->...il", W, gi), R))
    cotton = _rel(b.weyl_div - (n - 3) * b.cotton, b.weyl_div)
    return {"symmetries": sym, "bianchi": bianchi, "weyl_trace": traces, "div_weyl_cotton": cotton}


def jet_residuals(seed: int = 0) -> dict:
    """Jet derivatives of closed-form expressions against hand-derived values."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1, 1, (8, 2))
    x, y = pts[:, 0], pts[:, 1]
    j = jet_eval(parse_expr("sin(x*y) + exp(x)*y^2"), pts, coords=("x", "y"))
    c, s = np.cos(x * y), np.sin(x * y)
    ex = np.exp(x)
    grad = np.stack([y * c + ex * y ** 2, x * c + 2 * ex * y], -1)
    hxx = -y ** 2 * s + ex * y ** 2
    hxy = c - x * y * s + 2 * ex * y
    hyy = -x ** 2 * s + 2 * ex
    hess = np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -1)
    txxx = -y ** 3 * c + ex * y ** 2
    txxy = -2 * y * s - x * y ** 2 * c + 2 * ex * y
    txyy = -2 * x * s - x ** 2 * y * c + 2 * ex
    tyyy = -x ** 3 * c
    T = np.empty((8, 2, 2, 2))
    for idx, v in {(0, 0, 0): txxx, (0, 0, 1): txxy, (0, 1, 1): txyy, (1, 1, 1): tyyy}.items():
        for perm in {(idx[a], idx[b], idx[c_]) for a, b, c_ in
                     [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]}:
            T[(slice(None),) + perm] = v
    q = jet_eval(parse_expr("(1 + x^2)/(2 + y) - log(3 + x*y)"), pts, coords=("x", "y"))
    qx = 2 * x / (2 + y) - y / (3 + x * y)
    qy = -(1 + x ** 2) / (2 + y) ** 2 - x / (3 + x * y)
    return {"jet_grad": _rel(j.grad - grad, grad), "jet_hess": _rel(j.hess - hess, hess),
            "jet_third": _rel(j.third - T, T),
            "jet_quotient_log": _rel(q.grad - np.stack([qx, qy], -1), qx)}


def run_selftest(seed: int = 42) -> list[Check]:
    checks = [Check(k, v, 1e-12) for k, v in jet_residuals(seed).items()]
    tol = {"symmetries": 1e-8, "bianchi": 1e-8, "weyl_trace": 1e-9, "div_weyl_cotton": 1e-7}
    for n in (4, 5):
        defn = corpus.random_metric(n, seed + n)
        for k, v in identity_residuals(defn, sample_points(defn, 4, seed)).items():
            checks.append(Check(f"{k} (n={n})", v, tol[k]))
        phi = corpus.random_conformal_factor(defn.coords, seed + n)
        checks.append(Check(f"weyl_divergence_transform (n={n})",
                            cspace_transform_check(defn, phi, samples=4, seed=seed).residual, 1e-6))
        checks.append(Check(f"weyl_conformal_invariance (n={n})",
                            weyl_invariance_check(defn, phi, samples=4, seed=seed), 1e-7))
    return checks
