"""Decision procedures for conformally Einstein structure.

Candidates for the gradient ``V = ∇ψ`` of a conformal factor with
``e^{2ψ} g`` Einstein are produced by one of three routes:

* ``listing``  the Weyl tensor has trivial kernel, so the linear system
  ``δW + (n−3) W(·,·,·,V) = 0`` determines ``V`` pointwise;
* ``rank1``    a unit kernel field ``ξ`` with non-integrable complement,
  ``V = H + fξ`` with ``f`` fixed by ``rot(V) = 0`` on transversal pairs;
* ``rankk``    the staged linear-algebra procedure for ``V = H/k + Σ f_i ξ_i``.

A candidate is certified by ``Ric° + (2−n) F_V ≈ 0`` and ``rot V ≈ 0`` at
sample points.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import qr

from .corpus import conformal_rescale
from .curvature import f_v_tensor, kappa_nullity_residual, orthonormal_frame, tensor_norm, to_frame
from .dsl import MetricDefinition, scalar_jet
from .errors import (
    EvenDimension,
    NoAdmissiblePair,
    RankDrift,
    RankNotOne,
    RankZeroOmega,
    WeylscopeError,
)
from .expr import parse_expr
from .frame import (
    TOL_FIELD,
    TOL_RANK,
    ChartGeometry,
    Field,
    KernelFrame,
    _gram_schmidt,
    _weyl_svd,
    decide_rank,
    degeneracy_survey,
    kernel_rotations,
    sample_points,
    weyl_kernel,
)

ein = np.einsum

VERDICTS = ("ConformallyEinstein", "NotConformallyEinstein", "Undetermined",
            "Undetermined_PDE", "Inconclusive_NegativeScaling")

PASS_MAX = 1e-3
PASS_MEDIAN = 1e-4
FAIL_MAX = 1e-2
TOL_INTEGRABLE = 1e-5
PAIR_FRACTION = 0.1


@dataclass
class ClassifyConfig:
    samples: int = 100
    seed: int = 42
    verify_samples: int = 5
    tol_rank: float = TOL_RANK
    tol_field: float = TOL_FIELD
    tol_integrable: float = TOL_INTEGRABLE
    pass_max: float = PASS_MAX
    pass_median: float = PASS_MEDIAN
    fail_max: float = FAIL_MAX
    per_sample: bool = False
    workers: int = 1


# --------------------------------------------------------------------------
# candidates


@dataclass
class CandidateField:
    """A candidate gradient field with its construction diagnostics.

    ``field_at(q)`` rebuilds the field with reference choices made at ``q``;
    ``V`` and ``f_coeffs`` are the values at the construction point.
    """

    route: str
    field_at: Callable
    point: np.ndarray
    V: np.ndarray
    f_coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    consistency_spread: float = 0.0
    notes: list = field(default_factory=list)


@dataclass
class ListingResult:
    X: np.ndarray
    residual: float
    relative_residual: float
    unique: bool
    rank_k: int


def _listing_solve(bundle, tol_rank=TOL_RANK):
    """Least-squares ``(n−3) W(·,·,·,X) = −δW`` in an orthonormal frame (batched)."""
    n = bundle.dim
    E = orthonormal_frame(bundle.g)
    Won = to_frame(bundle.weyl, E, 4)
    dWon = to_frame(bundle.weyl_div, E, 3)
    A = (n - 3) * Won.reshape(Won.shape[:-4] + (n ** 3, n))
    rhs = -dWon.reshape(dWon.shape[:-3] + (n ** 3,))
    x = ein("...ab,...b->...a", np.linalg.pinv(A, rcond=1e-10), rhs)
    res = np.linalg.norm(ein("...ab,...b->...a", A, x) - rhs, axis=-1)
    scale = np.maximum(np.linalg.norm(rhs, axis=-1), 1e-300)
    X = ein("...ab,...b->...a", E, x)
    return X, res, res / scale


def listing_candidate(defn: MetricDefinition, p, tol_rank: float = TOL_RANK) -> ListingResult:
    """Solve the integrability system for ``X = ∇ψ`` with ``e^{2ψ} g`` Einstein."""
    geo = ChartGeometry(defn, tol_rank)
    p = np.asarray(p, float)
    b = geo.bundle(p[None], full=True)
    U, s, E, Rn = _weyl_svd(b)
    rank, _ = decide_rank(s, Rn, tol_rank)
    X, res, rel = _listing_solve(b, tol_rank)
    return ListingResult(X[0], float(res[0]), float(rel[0]), bool(rank[0] == 0), int(rank[0]))


def listing_field(defn: MetricDefinition, tol_rank: float = TOL_RANK) -> CandidateField:
    geo = ChartGeometry(defn, tol_rank)

    def fn(pts):
        return _listing_solve(geo.bundle(pts, full=True), tol_rank)[0]

    fld = Field(fn, 0, "listing")
    return fld


def _pair_indices(m):
    return np.triu_indices(m, 1)


def _restricted(form, T):
    """Entries of a 2-form on the pairs ``(T_a, T_b)``, ``a < b`` (batched)."""
    M = ein("...ab,...ax,...by->...xy", form, T, T)
    iu = _pair_indices(T.shape[-1])
    return M[..., iu[0], iu[1]]


def _transversal_field(geo: ChartGeometry, xi: Field, refs) -> Field:
    """Smooth orthonormal frame of Ker(W)^⊥ from projected reference vectors."""
    refs = np.asarray(refs, float)

    def fn(pts):
        X = xi(pts)
        g = geo.metric(pts)
        coeff = ein("...am,...ab,bj->...mj", X, g, refs)
        V = refs - ein("...am,...mj->...aj", X, coeff)
        L = np.linalg.cholesky(g)
        c = ein("...ba,...bm->...am", L, V)
        q = _gram_schmidt(c)
        return np.linalg.solve(np.swapaxes(L, -1, -2), q)

    return Field(fn, xi.depth, "transversal")


def _rank1_fields(geo: ChartGeometry, refs_xi, refs_T):
    xi = geo.kernel_field(refs_xi, 1)
    H = geo.mean_curvature_field(xi)

    def f_fn(pts):
        b = geo.bundle(pts)
        rxi = kernel_rotations(geo, xi, pts, b)[:, 0]
        rH = geo.rot(H, pts, b)
        X = xi(pts)[..., 0]
        # restrict both forms to Ker(W)^⊥ and take the g-inner-product ratio
        P = np.eye(geo.n) - ein("...a,...b,...bc->...ac", X, X, b.g)
        rxi_p = ein("...ab,...ax,...by->...xy", rxi, P, P)
        rH_p = ein("...ab,...ax,...by->...xy", rH, P, P)
        gi = b.g_inv
        num = ein("...ab,...cd,...ac,...bd->...", rH_p, rxi_p, gi, gi)
        den = ein("...ab,...cd,...ac,...bd->...", rxi_p, rxi_p, gi, gi)
        return -num / den

    f = Field(f_fn, H.depth + 1, "f")

    def v_fn(pts):
        return H(pts) + f(pts)[..., None] * xi(pts)[..., 0]

    return xi, H, f, Field(v_fn, f.depth, "V_rank1")


def rank1_candidate(defn: MetricDefinition, frame: KernelFrame, p, tol_rank: float = TOL_RANK,
                    tol_integrable: float = TOL_INTEGRABLE, pairs=None) -> CandidateField:
    """``V = H + fξ`` with ``f = −rot(H)(E_i,E_j)/rot(ξ)(E_i,E_j)`` over admissible transversal pairs."""
    if frame.rank_k != 1:
        raise RankNotOne(f"rank1 route needs a rank-1 kernel, got rank {frame.rank_k}")
    geo = ChartGeometry(defn, tol_rank)
    p = np.asarray(p, float)
    xi, H, f, V = _rank1_fields(geo, frame.xi, frame.transversal)
    pts = p[None]
    b = geo.bundle(pts)
    rxi = kernel_rotations(geo, xi, pts, b)[0, 0]
    rH = geo.rot(H, pts, b)[0]
    T = frame.transversal
    om = _restricted(rxi, T)
    rh = _restricted(rH, T)
    if pairs is not None:
        om, rh = om[list(pairs)], rh[list(pairs)]
    big = np.abs(om).max() if om.size else 0.0
    if big <= tol_integrable:
        raise NoAdmissiblePair(f"all transversal dη values below {tol_integrable:g} (max {big:.2e})")
    adm = np.abs(om) >= PAIR_FRACTION * big
    fs = -rh[adm] / om[adm]
    f_ls = float(-(om @ rh) / (om @ om))
    spread = float(fs.max() - fs.min())
    X = xi(pts)[0, :, 0]
    Vp = H(pts)[0] + f_ls * X
    notes = [f"{int(adm.sum())} admissible transversal pairs of {om.size}"]

    def field_at(q):
        q = np.asarray(q, float)
        fr = weyl_kernel(geo.bundle(q), tol_rank=tol_rank)
        if fr.rank_k != 1:
            raise RankDrift(f"rank {fr.rank_k} at {q.tolist()}")
        return _rank1_fields(geo, fr.xi, fr.transversal)[3]

    return CandidateField("rank1", field_at, p, Vp, np.array([f_ls]), spread, notes)


# --------------------------------------------------------------------------
# staged linear algebra for rank k


@dataclass
class Stage:
    """Current kernel basis and base field, as functions of the point.

    ``C(pts)`` has shape ``(P, k, k)``; row ``j`` expresses basis vector ``j``
    in the original orthonormal kernel frame.  ``b(pts)`` gives the
    coefficients of ``V − H/k`` in that original frame.
    ``D`` and ``S`` index determined and still-free basis vectors.
    """

    C: Callable
    b: Callable
    D: tuple
    S: tuple
    depth: int = 0


@dataclass
class UndeterminedPDE:
    """The remaining coefficients obey a first-order linear PDE system."""

    omega_star: np.ndarray
    stage: int
    determined: np.ndarray
    remaining: tuple
    notes: list = field(default_factory=list)


class SyntheticRotationModel:
    """Constant rotation forms in an adapted orthonormal frame.

    ``forms_xi[i]`` is ``rot(ξ_i)`` and ``form_h`` is ``rot(H/k)``, all
    ``n×n`` antisymmetric matrices in coordinates where the first ``k``
    axes are the kernel and the rest are transversal.  Rotation is linear
    in constant coefficients, so combinations are exact.
    """

    def __init__(self, forms_xi, form_h):
        self.forms_xi = np.asarray(forms_xi, float)
        self.form_h = np.asarray(form_h, float)
        self.k = self.forms_xi.shape[0]
        self.n = self.forms_xi.shape[-1]
        self.point = np.zeros((1, self.n))

    def forms(self, stage: Stage, pts):
        C = stage.C(pts)
        b = stage.b(pts)
        rb = ein("...ji,iab->...jab", C, self.forms_xi)
        rbase = self.form_h + ein("...i,iab->...ab", b, self.forms_xi)
        return rb, rbase


class GeometricRotationModel:
    """Rotation forms of kernel-frame combinations computed by finite differences."""

    def __init__(self, defn: MetricDefinition, frame: KernelFrame, p, tol_rank: float = TOL_RANK):
        self.geo = ChartGeometry(defn, tol_rank)
        self.k = frame.rank_k
        self.n = frame.dim
        self.point = np.asarray(p, float)[None]
        self.xi = self.geo.kernel_field(frame.xi, self.k)
        self.T = _transversal_field(self.geo, self.xi, frame.transversal)
        self.H = self.geo.mean_curvature_field(self.xi)

    def basis_field(self, stage: Stage) -> Field:
        def fn(pts):
            return ein("...ai,...ji->...aj", self.xi(pts), stage.C(pts))
        return Field(fn, stage.depth, "basis")

    def base_field(self, stage: Stage) -> Field:
        k = self.k

        def fn(pts):
            return self.H(pts) / k + ein("...ai,...i->...a", self.xi(pts), stage.b(pts))
        return Field(fn, max(stage.depth, self.H.depth), "base")

    def candidate_field(self, stage: Stage) -> Field:
        return self.base_field(stage)

    def forms(self, stage: Stage, pts):
        geo = self.geo
        b = geo.bundle(pts)
        A = np.concatenate([self.xi(pts), self.T(pts)], axis=-1)  # adapted chart frame
        basis = self.basis_field(stage)
        rb = kernel_rotations(geo, basis, pts, b)
        rbase = geo.rot(self.base_field(stage), pts, b)
        to_ad = lambda F: ein("...ab,...ax,...by->...xy", F, A, A)
        return to_ad(rb), to_ad(rbase)


def _complement(C, D, n, k):
    """Adapted-frame coordinates of an orthonormal basis of ``span(S)^⊥``."""
    P = C.shape[0]
    vecs = [np.concatenate([C[:, d, :], np.zeros((P, n - k))], axis=-1) for d in D]
    eye = np.eye(n)[k:]
    vecs += [np.broadcast_to(e, (P, n)) for e in eye]
    return np.stack(vecs, axis=1)  # (P, m, n)


def _stage_system(rb, rbase, C, D, S, n, k):
    X = _complement(C, D, n, k)
    iu = _pair_indices(X.shape[1])
    M = ein("...sab,...xa,...yb->...sxy", rb[:, list(S)], X, X)[..., iu[0], iu[1]]
    Om = np.swapaxes(M, -1, -2)  # (P, N, |S|)
    rhs = -ein("...ab,...xa,...yb->...xy", rbase, X, X)[..., iu[0], iu[1]]
    return Om, rhs


def _numeric_rank(Om, tol):
    s = np.linalg.svd(Om, compute_uv=False)
    if s.size == 0:
        return 0, s
    floor = max(tol, 1e-9 * s[0])
    return int(np.sum(s > floor)), s


def _memo(fn):
    cache = {}

    def wrapped(pts):
        key = (pts.shape, pts.tobytes())
        if key not in cache:
            if len(cache) > 4:
                cache.clear()
            cache[key] = fn(pts)
        return cache[key]
    return wrapped


def _advance(model, stage: Stage, active, passive, n, k) -> Stage:
    """One rank-deficient stage: change of basis, then solve the active block."""
    S = stage.S
    A_idx = [S[i] for i in active]
    P_idx = [S[i] for i in passive]

    @_memo
    def compute(pts):
        rb, rbase = model.forms(stage, pts)
        C = stage.C(pts)
        bvec = stage.b(pts)
        Om, rhs = _stage_system(rb, rbase, C, stage.D, S, n, k)
        OmA, OmP = Om[..., active], Om[..., passive]
        F = np.linalg.pinv(OmA) @ OmP  # (P, r, |P|)
        Cn = C.copy()
        newA = C[:, A_idx, :] + ein("...ap,...pi->...ai", F, C[:, P_idx, :])
        newP = C[:, P_idx, :] - ein("...ap,...ai->...pi", F, C[:, A_idx, :])
        newA = np.swapaxes(_gram_schmidt(np.swapaxes(newA, -1, -2)), -1, -2)
        newP = np.swapaxes(_gram_schmidt(np.swapaxes(newP, -1, -2)), -1, -2)
        Cn[:, A_idx, :] = newA
        Cn[:, P_idx, :] = newP
        # on the stage pairs rotation is linear in the pointwise coefficients
        M = ein("...ai,...si->...as", newA, C[:, list(S), :])  # new active in old S-block coords
        OmA2 = ein("...ns,...as->...na", Om, M)
        fA = ein("...an,...n->...a", np.linalg.pinv(OmA2), rhs)
        bn = bvec + ein("...a,...ai->...i", fA, newA)
        return Cn, bn

    return Stage(lambda q: compute(q)[0], lambda q: compute(q)[1],
                 tuple(stage.D) + tuple(A_idx), tuple(P_idx), stage.depth + 1)


def _omega_star(rb, C, D, S, n, k):
    """Coefficient matrix of the remaining PDE system (columns: remaining ξ*)."""
    vec = lambda j: np.concatenate([C[0, j], np.zeros(n - k)])
    rows = []
    for q in S:
        for l in D:
            rows.append([vec(q) @ rb[0, s] @ vec(l) for s in S])
    for q in S:
        for i in range(k, n):
            e = np.eye(n)[i]
            rows.append([vec(q) @ rb[0, s] @ e for s in S])
    for a, q in enumerate(S):
        for q2 in S[a + 1:]:
            rows.append([vec(q) @ rb[0, s] @ vec(q2) for s in S])
    return np.array(rows).reshape(-1, len(S))


def staged_solve(model, tol: float = 1e-8, max_stages: int | None = None):
    """Run the staged procedure against a rotation model at ``model.point``.

    Returns ``(final_stage, coefficients, info)`` or an :class:`UndeterminedPDE`.
    """
    n, k = model.n, model.k
    pts = model.point
    P = pts.shape[0]
    stage = Stage(lambda q: np.broadcast_to(np.eye(k), (q.shape[0], k, k)).copy(),
                  lambda q: np.zeros((q.shape[0], k)), (), tuple(range(k)), 0)
    info = []
    for t in range(max_stages or k + 1):
        rb, rbase = model.forms(stage, pts)
        C = stage.C(pts)
        Om, rhs = _stage_system(rb, rbase, C, stage.D, stage.S, n, k)
        r, sv = _numeric_rank(Om[0], tol)
        info.append({"stage": t, "free": len(stage.S), "pairs": int(Om.shape[1]), "rank": r})
        if r == 0:
            if t == 0:
                raise RankZeroOmega("Ω vanishes on all transversal pairs (transversally integrable)")
            star = _omega_star(rb, C, stage.D, stage.S, n, k)
            return UndeterminedPDE(star, t, stage.b(pts)[0], tuple(stage.S),
                                   [f"stage {t}: remaining rotations vanish on span(S)^⊥"])
        if r == len(stage.S):
            f = ein("...an,...n->...a", np.linalg.pinv(Om), rhs)
            b_final = stage.b(pts) + ein("...s,...si->...i", f, C[:, list(stage.S), :])
            final = _finish(stage, model, n, k)
            return final, b_final[0], info
        _, _, piv = qr(Om[0], pivoting=True)
        active = sorted(int(i) for i in piv[:r])
        passive = [i for i in range(len(stage.S)) if i not in active]
        stage = _advance(model, stage, active, passive, n, k)
    raise RuntimeError("staged procedure did not terminate")


def _finish(stage: Stage, model, n, k) -> Stage:
    """Final full-rank stage as a pointwise field of coefficients."""
    S = stage.S

    @_memo
    def compute(pts):
        rb, rbase = model.forms(stage, pts)
        C = stage.C(pts)
        Om, rhs = _stage_system(rb, rbase, C, stage.D, S, n, k)
        f = ein("...an,...n->...a", np.linalg.pinv(Om), rhs)
        return stage.b(pts) + ein("...s,...si->...i", f, C[:, list(S), :])

    return Stage(stage.C, compute, tuple(stage.D) + tuple(S), (), stage.depth + 1)


def rank_k_candidate(defn: MetricDefinition, frame: KernelFrame, p, tol_rank: float = TOL_RANK,
                     tol: float = 1e-6):
    """Staged candidate ``V = H/k + Σ f_i ξ_i`` or :class:`UndeterminedPDE`."""
    model = GeometricRotationModel(defn, frame, p, tol_rank)
    out = staged_solve(model, tol=tol)
    if isinstance(out, UndeterminedPDE):
        return out
    final, coeffs, info = out
    V = model.base_field(final)
    Vp = V(model.point)[0]

    def field_at(q):
        q = np.asarray(q, float)
        fr = weyl_kernel(model.geo.bundle(q), tol_rank=tol_rank)
        if fr.rank_k != frame.rank_k:
            raise RankDrift(f"rank {fr.rank_k} at {q.tolist()}")
        m = GeometricRotationModel(defn, fr, q, tol_rank)
        res = staged_solve(m, tol=tol)
        if isinstance(res, UndeterminedPDE):
            raise RankDrift("stage structure changes near the sample point")
        return m.base_field(res[0])

    return CandidateField("rankk", field_at, np.asarray(p, float), Vp, coeffs, 0.0,
                          [f"stages: {info}"])


# --------------------------------------------------------------------------
# verification


@dataclass
class VerifyResult:
    einstein: np.ndarray
    rot: np.ndarray
    points: np.ndarray
    failures: list = field(default_factory=list)
    scaling: np.ndarray | None = None

    @property
    def einstein_residual(self) -> float:
        return float(np.max(self.einstein)) if self.einstein.size else math.nan

    @property
    def rot_residual(self) -> float:
        return float(np.max(self.rot)) if self.rot.size else math.nan


def einstein_residuals(geo: ChartGeometry, V: Field, pts):
    """``|Ric° + (2−n)F_V|``, ``|rot V|`` and the rescaled scalar curvature sign data."""
    b = geo.bundle(pts)
    Vv, gradV = geo.covariant(V, pts, b)
    n = geo.n
    F = f_v_tensor(b.g, Vv, gradV)
    E = b.ricci_traceless + (2 - n) * F
    low = ein("...ac,...cb->...ab", gradV, b.g)
    rot = low - np.swapaxes(low, -1, -2)
    div = ein("...aa->...", gradV)
    norm2 = ein("...a,...ab,...b->...", Vv, b.g, Vv)
    scaling = b.tau - 2 * (n - 1) * div - (n - 1) * (n - 2) * norm2
    return tensor_norm(E, b.g_inv, 2), tensor_norm(rot, b.g_inv, 2) / math.sqrt(2), scaling


def verify_conformal_einstein(defn: MetricDefinition, candidate, samples: int = 5, seed: int = 42,
                              points=None, tol_rank: float = TOL_RANK, workers: int = 1) -> VerifyResult:
    """Residuals of the Einstein criterion for a candidate at sample points.

    ``candidate`` is a :class:`CandidateField`, a :class:`Field`, or a plain
    callable.  Failing samples are recorded and excluded.  Samples are
    independent; with ``workers > 1`` they run in a thread pool and the
    results are assembled in sample order.
    """
    geo = ChartGeometry(defn, tol_rank)
    pts = sample_points(defn, samples, seed) if points is None else np.asarray(points, float)

    def one(q):
        try:
            if isinstance(candidate, CandidateField):
                V = candidate.field_at(q)
            else:
                V = candidate if isinstance(candidate, Field) else Field(candidate, 0, "V")
            e, r, s = einstein_residuals(geo, V, q[None])
            return float(e[0]), float(r[0]), float(s[0]), None
        except WeylscopeError as err:
            return None, None, None, f"{type(err).__name__}: {err}"

    if workers > 1 and len(pts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(one, pts))
    else:
        out = [one(q) for q in pts]
    ok = [i for i, o in enumerate(out) if o[3] is None]
    fails = [{"index": i, "point": pts[i].tolist(), "reason": o[3]} for i, o in enumerate(out) if o[3] is not None]
    col = lambda j: np.array([out[i][j] for i in ok])
    return VerifyResult(col(0), col(1), pts[ok].reshape(-1, geo.n), fails, col(2))


def gradient_field(defn: MetricDefinition, psi: str) -> Field:
    """``∇ψ`` for a closed-form scalar, raised with the chart metric."""
    node = parse_expr(psi) if isinstance(psi, str) else psi
    geo = ChartGeometry(defn)

    def fn(pts):
        j = scalar_jet(defn, node, pts, order=1)
        return ein("...ab,...b->...a", np.linalg.inv(geo.metric(pts)), j.grad)

    return Field(fn, 0, "grad")


# --------------------------------------------------------------------------
# conformal transformation self-checks


@dataclass
class TransformCheck:
    residual: float
    lhs: float
    rhs: float

    def __float__(self):
        return self.residual


def cspace_transform_check(defn: MetricDefinition, phi: str, samples: int = 10, seed: int = 42) -> TransformCheck:
    """Compare ``δ̄W̄`` of ``e^{2φ}g`` with ``δW + (n−3) W(·,·,·,∇φ)`` computed from ``g``."""
    bar = conformal_rescale(defn, phi)
    node = parse_expr(phi) if isinstance(phi, str) else phi
    geo, geo_bar = ChartGeometry(defn), ChartGeometry(bar)
    pts = sample_points(defn, samples, seed)
    b = geo.bundle(pts, full=True)
    bb = geo_bar.bundle(pts, full=True)
    grad = ein("...ab,...b->...a", b.g_inv, scalar_jet(defn, node, pts, order=1).grad)
    n = defn.dim
    ins = ein("...ijkl,...l->...ijk", b.weyl, grad)
    lhs = bb.weyl_div
    rhs = b.weyl_div + (n - 3) * ins
    diff = np.abs(lhs - rhs).max(axis=(-1, -2, -3))
    scale = np.maximum.reduce([np.abs(lhs).max(axis=(-1, -2, -3)), np.abs(rhs).max(axis=(-1, -2, -3)),
                               (n - 3) * np.abs(b.weyl).max(axis=(-1, -2, -3, -4))
                               * np.maximum(np.abs(grad).max(axis=-1), 1.0)])
    return TransformCheck(float((diff / np.maximum(scale, 1e-300)).max()),
                          float(np.abs(lhs).max()), float(np.abs(rhs).max()))


def weyl_invariance_check(defn: MetricDefinition, phi: str, samples: int = 10, seed: int = 42) -> float:
    """Relative change of the (1,3) Weyl tensor under ``g ↦ e^{2φ}g``."""
    bar = conformal_rescale(defn, phi)
    pts = sample_points(defn, samples, seed)
    W = ChartGeometry(defn).bundle(pts).weyl_up
    Wb = ChartGeometry(bar).bundle(pts).weyl_up
    return float((np.abs(W - Wb).max(axis=(-1, -2, -3, -4))
                  / np.maximum(np.abs(W).max(axis=(-1, -2, -3, -4)), 1e-300)).max())


def mean_curvature_transform_check(defn: MetricDefinition, phi: str, samples: int = 5, seed: int = 42,
                                   tol_rank: float = TOL_RANK, geodesic: bool = False):
    """Compare ``H̄`` computed in ``e^{2φ}g`` with ``e^{−2φ}(H − k π^⊥∇φ)``.

    With ``geodesic=True`` also returns the maximal second fundamental form
    of the kernel foliation in the rescaled metric.
    """
    bar = conformal_rescale(defn, phi)
    node = parse_expr(phi) if isinstance(phi, str) else phi
    geo, geo_bar = ChartGeometry(defn, tol_rank), ChartGeometry(bar, tol_rank)
    pts = sample_points(defn, samples, seed)
    worst, worst_geo = 0.0, 0.0
    for q in pts:
        fr = weyl_kernel(geo.bundle(q), tol_rank=tol_rank)
        k = fr.rank_k
        if k == 0:
            raise RankDrift("mean curvature needs a non-trivial kernel")
        xi = geo.kernel_field(fr.xi, k)
        h, H, X, b = geo.second_fundamental(xi, q[None])
        frb = weyl_kernel(geo_bar.bundle(q), tol_rank=tol_rank)
        if frb.rank_k != k:
            raise RankDrift("kernel rank changes under the conformal factor")
        xib = geo_bar.kernel_field(frb.xi, k)
        hb, Hb, _, bb = geo_bar.second_fundamental(xib, q[None])
        j = scalar_jet(defn, node, q[None], order=1)
        grad = ein("...ab,...b->...a", b.g_inv, j.grad)
        perp = ChartGeometry.perp(X, grad[:, None, :], b.g)[:, 0]
        pred = np.exp(-2 * j.value)[:, None] * (H - k * perp)
        d = Hb - pred
        worst = max(worst, float(np.sqrt(ein("...a,...ab,...b->...", d, b.g, d)).max()))
        worst_geo = max(worst_geo, float(np.sqrt(np.abs(ein("...ija,...ab,...ijb->...ij", hb, bb.g, hb))).max()))
    if geodesic:
        return worst, worst_geo
    return worst


# --------------------------------------------------------------------------
# classification


@dataclass
class ClassificationReport:
    rank_k: int
    rank_histogram: dict
    transversal_class: str
    route: str
    verdict: str
    einstein_residual: float
    rot_residual: float
    frobenius: float
    contact: float
    scaling_sign: str
    notes: list = field(default_factory=list)
    exceptional_points: list = field(default_factory=list)
    per_sample: list = field(default_factory=list)
    candidate: CandidateField | None = None
    product_split: bool | None = None


def _verdict(res: VerifyResult, cfg: ClassifyConfig) -> str:
    if res.einstein.size == 0:
        return "Undetermined"
    worst = np.maximum(res.einstein, res.rot)
    if worst.max() <= cfg.pass_max and np.median(worst) <= cfg.pass_median:
        return "ConformallyEinstein"
    if worst.max() > cfg.fail_max:
        return "NotConformallyEinstein"
    return "Undetermined"


def _scaling_sign(values, tau_scale) -> str:
    if values is None or len(values) == 0:
        return "unknown"
    tol = 1e-6 * max(1.0, tau_scale)
    if np.all(np.abs(values) <= tol):
        return "zero"
    if np.all(values > tol):
        return "positive"
    if np.all(values < -tol):
        return "negative"
    return "unknown"


def _transversal_data(defn, q, tol_rank):
    """Frobenius defect, rotation matrix Ω of the kernel fields, and contact norm at ``q``."""
    geo = ChartGeometry(defn, tol_rank)
    b = geo.bundle(q[None])
    fr = weyl_kernel(ChartGeometry(defn, tol_rank).bundle(q), tol_rank=tol_rank)
    k, n = fr.rank_k, fr.dim
    xi = geo.kernel_field(fr.xi, k)
    forms = kernel_rotations(geo, xi, q[None], b)[0]
    T = fr.transversal
    Om = np.stack([_restricted(forms[i], T) for i in range(k)], axis=-1)  # (pairs, k)
    defect = float(np.abs(Om).max()) if Om.size else 0.0
    contact = float(np.linalg.norm(Om)) if k == 1 else math.nan
    return fr, Om, defect, contact


def _product_split(defn, q, tol_rank):
    """Mixed sectional curvatures and transversal second fundamental form at ``q``."""
    geo = ChartGeometry(defn, tol_rank)
    b = geo.bundle(q[None])
    fr = weyl_kernel(geo.bundle(q), tol_rank=tol_rank)
    k = fr.rank_k
    xi = geo.kernel_field(fr.xi, k)
    X, grad, _ = geo.xi_gradients(xi, q[None], b)
    Rm = b.riemann[0]
    mixed = 0.0
    for i in range(k):
        for a in range(fr.transversal.shape[1]):
            u, v = fr.xi[:, i], fr.transversal[:, a]
            mixed = max(mixed, abs(ein("ijkl,i,j,k,l->", Rm, u, v, u, v)))
    # g(∇_{E_a} E_b, ξ_i) = −g(E_b, ∇_{E_a} ξ_i)
    T = fr.transversal
    low = ein("jac,cb->jab", grad[0], b.g[0])
    sff = -ein("jab,ax,by->jxy", low, T, T)
    sym = 0.5 * (sff + np.swapaxes(sff, -1, -2))
    return float(mixed), float(np.abs(sym).max()) if sym.size else 0.0


def classify(defn: MetricDefinition, config: ClassifyConfig | None = None) -> ClassificationReport:
    """Survey → transversal class → candidate route → verification → verdict."""
    cfg = config or ClassifyConfig()
    notes = []
    survey = degeneracy_survey(defn, count=cfg.samples, seed=cfg.seed, tol_rank=cfg.tol_rank)
    k, n = survey.modal_rank, defn.dim
    regular = survey.points[survey.regular_mask]
    vpts = regular[: cfg.verify_samples]
    report = ClassificationReport(k, survey.rank_histogram, "not_applicable", "none", "Undetermined",
                                  math.nan, math.nan, math.nan, math.nan, "unknown", notes,
                                  survey.exceptional_points)
    if k < 0 or len(vpts) == 0:
        notes.append("no regular sample points")
        return report
    geo = ChartGeometry(defn, cfg.tol_rank)

    def certify(V_for, label):
        res = verify_conformal_einstein(defn, V_for, points=vpts, tol_rank=cfg.tol_rank,
                                        workers=cfg.workers)
        report.einstein_residual = res.einstein_residual
        report.rot_residual = res.rot_residual
        for f in res.failures:
            notes.append(f"{label}: sample {f['index']} failed ({f['reason']})")
        if cfg.per_sample:
            report.per_sample = [{"point": p.tolist(), "einstein": float(e), "rot": float(r),
                                  "scaling": float(s)}
                                 for p, e, r, s in zip(res.points, res.einstein, res.rot, res.scaling)]
        tau_scale = float(np.abs(geo.bundle(vpts).tau).max())
        report.scaling_sign = _scaling_sign(res.scaling, tau_scale)
        return res

    if k == n:
        report.route = "conformally_flat"
        report.verdict = "ConformallyEinstein"
        notes.append("Weyl tensor vanishes at all regular samples: locally conformally flat")
        return report

    if k == 0:
        report.route = "listing"
        res = certify(listing_field(defn, cfg.tol_rank), "listing")
        report.verdict = _verdict(res, cfg)
        return report

    # transversal classification at verification points
    defects, contacts, null_dims = [], [], []
    for q in vpts:
        fr, Om, defect, contact = _transversal_data(defn, q, cfg.tol_rank)
        defects.append(defect)
        contacts.append(contact)
        if k >= 2 and Om.size:
            r, _ = _numeric_rank(Om, cfg.tol_integrable)
            null_dims.append(k - r)
    report.frobenius = float(max(defects))
    if k == 1:
        report.contact = float(max(contacts))
    tol = cfg.tol_integrable
    if all(d <= tol for d in defects):
        cls = "integrable"
    elif all(d > tol for d in defects):
        cls = "non_integrable"
    else:
        cls = "mixed"
    if k >= 2 and cls == "non_integrable" and null_dims and max(null_dims) > 0:
        notes.append(f"Ω has a {max(null_dims)}-dimensional null space: a kernel combination is "
                     "rotation-free on transversal pairs (possible gradient in the kernel)")
    report.transversal_class = cls

    if cls == "mixed":
        notes.append("transversal integrability differs between samples")
        return report

    if cls == "non_integrable":
        p0 = vpts[0]
        fr = weyl_kernel(geo.bundle(p0), tol_rank=cfg.tol_rank)
        try:
            if k == 1:
                cand = rank1_candidate(defn, fr, p0, cfg.tol_rank, cfg.tol_integrable)
                report.route = "rank1"
            else:
                cand = rank_k_candidate(defn, fr, p0, cfg.tol_rank)
                report.route = "rankk"
                if isinstance(cand, UndeterminedPDE):
                    report.verdict = "Undetermined_PDE"
                    notes.append(f"remaining coefficients need a first-order PDE; Ω* shape "
                                 f"{cand.omega_star.shape}")
                    return report
        except WeylscopeError as err:
            notes.append(f"candidate construction failed: {type(err).__name__}: {err}")
            return report
        report.candidate = cand
        res = certify(cand, report.route)
        report.verdict = _verdict(res, cfg)
        return report

    # transversally integrable: try the metric itself, then the minimal-metric candidate
    report.route = "integrable"
    zero = Field(lambda pts: np.zeros(pts.shape[:-1] + (n,)), 0, "zero")
    res = certify(zero, "integrable")
    verdict = _verdict(res, cfg)
    if verdict != "ConformallyEinstein":
        p0 = vpts[0]

        def h_over_k(q):
            fr = weyl_kernel(geo.bundle(q), tol_rank=cfg.tol_rank)
            xi = geo.kernel_field(fr.xi, k)
            H = geo.mean_curvature_field(xi)
            return Field(lambda pts: H(pts) / k, H.depth, "H/k")

        cand = CandidateField("integrable", h_over_k, p0, h_over_k(p0)(p0[None])[0])
        res = certify(cand, "integrable")
        verdict = _verdict(res, cfg)
        if verdict == "ConformallyEinstein":
            notes.append("candidate V = H/k (kernel totally geodesic after rescaling)")
        else:
            notes.append("no Einstein metric found among V = 0 and V = H/k; "
                         "a gradient inside the kernel is not searched for")
            # the search is not exhaustive, so a failed certificate is not a negative verdict
            report.verdict = "Undetermined"
            return report
    else:
        notes.append("the metric itself is Einstein (V = 0)")
    report.verdict = verdict
    sign = report.scaling_sign
    if sign == "negative":
        report.verdict = "Inconclusive_NegativeScaling"
        notes.append("negative Einstein scaling with transversally integrable kernel: "
                     "the structure theory gives no decomposition here")
    elif sign == "positive":
        notes.append("positive scaling with integrable complement predicts local conformal flatness")
    elif sign == "zero":
        mixed, sff = zip(*[_product_split(defn, q, cfg.tol_rank) for q in vpts])
        ok = max(mixed) <= 1e-6 and max(sff) <= 1e-5
        notes.append(f"Ricci-flat representative; product split {'verified' if ok else 'NOT verified'} "
                     f"(max mixed curvature {max(mixed):.1e}, transversal second fundamental form "
                     f"{max(sff):.1e})")
        report.product_split = ok
    return report


# --------------------------------------------------------------------------
# Sasaki criteria


@dataclass
class SasakiReport:
    cond_contact: bool
    contact_norm: float
    cond_omega_orthogonal: bool
    omega_deviation: float
    cond_einstein: bool
    einstein_residual: float
    sigma: list
    log_exponent_residual: float = math.nan
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.cond_contact and self.cond_omega_orthogonal and self.cond_einstein


def _sigma_field(geo: ChartGeometry, refs_xi, refs_T, m: int) -> Field:
    xi = geo.kernel_field(refs_xi, 1)
    T = _transversal_field(geo, xi, refs_T)

    def fn(pts):
        form = kernel_rotations(geo, xi, pts)[:, 0]
        Om = ein("...ab,...ax,...by->...xy", form, T(pts), T(pts))
        return np.abs(np.linalg.det(Om)) ** (1.0 / (2 * m))

    return Field(fn, 1, "sigma")


def _grad_of(geo: ChartGeometry, s: Field, transform=None) -> Field:
    def fn(pts):
        if transform is None:
            base = s
        else:
            base = Field(lambda q: transform(s(q)), s.depth, "t")
        D = geo.derivative(base, pts)
        return ein("...ab,...b->...a", np.linalg.inv(geo.metric(pts)), D)
    return Field(fn, s.depth + 1, "grad")


def sasaki_check(defn: MetricDefinition, config: ClassifyConfig | None = None,
                 tol: float = 1e-4) -> SasakiReport:
    """Contact, Ω-orthogonality and Einstein conditions for conformally Einstein–Sasaki structure."""
    cfg = config or ClassifyConfig()
    n = defn.dim
    if n % 2 == 0 or n < 5:
        raise EvenDimension(f"Sasaki check needs odd dimension >= 5, got {n}")
    m = (n - 1) // 2
    survey = degeneracy_survey(defn, count=cfg.samples, seed=cfg.seed, tol_rank=cfg.tol_rank)
    if survey.modal_rank != 1:
        extra = " (constant curvature: every direction lies in the kernel)" if survey.modal_rank == n else ""
        raise RankNotOne(f"Sasaki check needs a rank-1 Weyl kernel, got {survey.modal_rank}{extra}")
    geo = ChartGeometry(defn, cfg.tol_rank)
    vpts = survey.points[survey.regular_mask][: cfg.verify_samples]
    norms, devs, sig = [], [], []
    ein_res, log_res = [], []
    notes = []
    for q in vpts:
        fr = weyl_kernel(geo.bundle(q), tol_rank=cfg.tol_rank)
        xi = geo.kernel_field(fr.xi, 1)
        form = kernel_rotations(geo, xi, q[None])[0, 0]
        Om = fr.transversal.T @ form @ fr.transversal
        det = abs(np.linalg.det(Om))
        norms.append(math.factorial(m) * math.sqrt(det))
        s = det ** (1.0 / (2 * m)) if det > 0 else 0.0
        sig.append(s)
        if s > 0:
            O = Om / s
            devs.append(float(np.abs(O.T @ O - np.eye(2 * m)).max()))
        else:
            devs.append(math.inf)
        sigma = _sigma_field(geo, fr.xi, fr.transversal, m)
        # the exponent is σ itself: e^{2σ} g, so V = ∇σ
        e, r, _ = einstein_residuals(geo, _grad_of(geo, sigma), q[None])
        ein_res.append(max(float(e[0]), float(r[0])))
        if s > tol:
            e2, _, _ = einstein_residuals(geo, _grad_of(geo, sigma, np.log), q[None])
            log_res.append(float(e2[0]))
    notes.append("σ = |det Ω|^(1/2m) with m = (n−1)/2; condition 3 tests e^{2σ} g")
    log_worst = max(log_res) if log_res else math.nan
    if log_res:
        notes.append(f"diagnostic: σ² g (V = ∇ log σ) gives Einstein residual {log_worst:.2e}")
    contact = float(min(norms))
    dev = float(max(devs))
    er = float(max(ein_res))
    return SasakiReport(contact > tol, contact, dev <= tol, dev, er <= tol, er, sig,
                        float(log_worst), notes)


def reeb_geodesic_residual(defn: MetricDefinition, p, tol_rank: float = TOL_RANK) -> float:
    """``max_i |rot(ξ)(ξ, E_i) − g(∇_ξ ξ, E_i)|`` for a rank-1 kernel."""
    geo = ChartGeometry(defn, tol_rank)
    p = np.asarray(p, float)
    fr = weyl_kernel(geo.bundle(p), tol_rank=tol_rank)
    if fr.rank_k != 1:
        raise RankNotOne(f"rank {fr.rank_k}")
    xi = geo.kernel_field(fr.xi, 1)
    X, grad, b = geo.xi_gradients(xi, p[None])
    x = X[0, :, 0]
    g = b.g[0]
    low = grad[0, 0] @ g
    form = low - low.T
    acc = x @ grad[0, 0]  # ∇_ξ ξ
    T = fr.transversal
    return float(np.abs(x @ form @ T - acc @ g @ T).max())


def tanno_residual(defn: MetricDefinition, p, tol_rank: float = TOL_RANK) -> float:
    """κ = 1 nullity residual of the kernel direction after scaling to ``τ = n(n−1)``."""
    geo = ChartGeometry(defn, tol_rank)
    p = np.asarray(p, float)
    b = geo.bundle(p)
    fr = weyl_kernel(b, tol_rank=tol_rank)
    n = defn.dim
    c = float(b.tau) / (n * (n - 1))  # g̃ = c g has τ̃ = n(n−1)
    # R is scale invariant as a (1,3) tensor; the model term scales with the metric
    return float(kappa_nullity_residual(b, fr.xi[:, 0], c)) / c
