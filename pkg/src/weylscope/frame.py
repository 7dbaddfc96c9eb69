"""Field-level numerics: Weyl kernels, smooth kernel frames, finite-difference
derivatives of derived fields, rotation, mean curvature, Frobenius and contact
tests, and the geodesic-saturation chain inside the kernel.

Derived fields (kernel vectors, mean curvature, candidate gradients) have no
closed form.  They are represented by :class:`Field` objects that evaluate on
batches of points; differentiating a field evaluates it on a central stencil.
Each field records how many finite-difference layers it already contains
(``depth``), and the step used to differentiate it grows with that depth so
that rounding noise stays below truncation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy.linalg import orthogonal_procrustes

from .curvature import (
    CurvatureBundle,
    curvature_bundle,
    kappa_nullity_residual,
    orthonormal_frame,
    to_frame,
)
from .dsl import MetricDefinition, evaluate_metric_jets
from .errors import (
    DomainError,
    GaugeInstability,
    KernelEscape,
    OddDimensionRequired,
    RankDrift,
    RankNotOne,
    StencilOutOfDomain,
)

__all__ = [
    "TOL_RANK", "TOL_FIELD", "RANK_GAP", "STEPS",
    "Field", "KernelFrame", "DegeneracyReport", "FoliationData", "TotallyGeodesic",
    "ChartGeometry", "field_derivative", "decide_rank", "weyl_kernel",
    "degeneracy_survey", "sample_points", "rotation", "rotation_exterior",
    "mean_curvature", "frobenius_transversal", "contact_invariants",
    "kappa_nullity_residual", "nullity_chain_extend", "procrustes", "frame_at",
    "kernel_rotations", "chain_series", "gauge_slope", "align_frame", "as_field",
]

TOL_RANK = 1e-7
TOL_FIELD = 1e-4
RANK_GAP = 1e3
ZERO_WEYL = 1e-9
WEYL_FLOOR = 1e-13  # absolute roundoff floor, only matters when Rm itself vanishes
# finite-difference step by nesting depth of the differentiated field
STEPS = (1e-3, 3e-3, 1e-2, 2e-2, 3e-2)

ein = np.einsum


# --------------------------------------------------------------------------
# fields and finite differences


@dataclass(frozen=True)
class Field:
    """A quantity evaluable on a batch of points ``(P, n) -> (P, ...)``."""

    fn: Callable
    depth: int = 0
    name: str = "field"

    def __call__(self, pts):
        return self.fn(np.asarray(pts, float))


def as_field(f) -> Field:
    return f if isinstance(f, Field) else Field(f, 0, getattr(f, "__name__", "field"))


def _stencil(p: np.ndarray, h: float) -> np.ndarray:
    n = p.shape[-1]
    eye = np.eye(n)
    offsets = np.concatenate([h * eye, -h * eye, 0.5 * h * eye, -0.5 * h * eye])
    return p[..., None, :] + offsets


def _check_stencil(pts, bounds):
    if bounds is None:
        return
    lo, hi = bounds[:, 0], bounds[:, 1]
    if np.any(pts <= lo) or np.any(pts >= hi):
        raise StencilOutOfDomain("finite-difference stencil leaves the declared domain")


def field_derivative(field, p, h: float | None = None, bounds=None):
    """Coordinate derivative of ``field`` at ``p`` by central differences plus
    one Richardson step.

    Returns ``(D, err)`` with ``D[..., a] = ∂_a field`` (derivative index last)
    and ``err`` the Richardson correction size as an error estimate.
    ``p`` may be a single point or a batch ``(P, n)``.
    """
    fld = as_field(field)
    if h is None:
        h = STEPS[min(fld.depth, len(STEPS) - 1)]
    p = np.asarray(p, float)
    single = p.ndim == 1
    P = p[None] if single else p
    n = P.shape[-1]
    st = _stencil(P, h)
    _check_stencil(st, bounds)
    vals = np.asarray(fld(st.reshape(-1, n)))
    vals = vals.reshape(P.shape[0], 4 * n, *vals.shape[1:])
    vals = np.moveaxis(vals, 1, -1)  # (P, ..., 4n)
    fp, fm, hp, hm = (vals[..., k * n:(k + 1) * n] for k in range(4))
    d_h = (fp - fm) / (2 * h)
    d_half = (hp - hm) / h
    D = (4 * d_half - d_h) / 3
    err = np.abs(d_half - d_h) / 3
    if single:
        return D[0], err[0]
    return D, err


# --------------------------------------------------------------------------
# kernel of the Weyl map


def decide_rank(s: np.ndarray, scale=None, tol_rank: float = TOL_RANK, gap: float = RANK_GAP):
    """Kernel rank and an "ambiguous" flag from descending singular values.

    The kernel is everything below ``tol_rank * s_max``.  If any singular
    value lies within a factor ``sqrt(gap)`` of that threshold the decision
    is flagged as ambiguous.  When ``s_max`` itself is negligible against
    ``scale`` or below roundoff (Weyl vanishes) the whole tangent space is the kernel.
    """
    s = np.asarray(s, float)
    n = s.shape[-1]
    smax = s[..., 0]
    if scale is None:
        scale = np.ones_like(smax)
    flat = (smax <= ZERO_WEYL * scale) | (smax <= WEYL_FLOOR)
    thr = tol_rank * smax
    rank = np.sum(s <= thr[..., None], axis=-1)
    band = (s > thr[..., None] / np.sqrt(gap)) & (s < thr[..., None] * np.sqrt(gap))
    ambiguous = np.any(band, axis=-1) & ~flat
    rank = np.where(flat, n, rank)
    return rank, ambiguous


@dataclass
class KernelFrame:
    """Weyl kernel at a point.  Vectors are chart components, g-orthonormal."""

    rank_k: int
    xi: np.ndarray  # (n, k)
    projector: np.ndarray  # (n, n) projector onto Ker(W) in g-orthonormal coordinates
    transversal: np.ndarray  # (n, n - k)
    sing_values: np.ndarray
    onb: np.ndarray  # Cholesky frame used for the orthonormal coordinates
    ambiguous: bool = False
    point: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.xi.shape[0]

    @property
    def adapted(self) -> np.ndarray:
        """Chart matrix with columns ``[ξ_1..ξ_k, E_{k+1}..E_n]``."""
        return np.concatenate([self.xi, self.transversal], axis=1)


def _weyl_svd(bundle: CurvatureBundle):
    E = orthonormal_frame(bundle.g)
    Won = to_frame(bundle.weyl, E, 4)
    n = bundle.dim
    M = Won.reshape(Won.shape[:-4] + (n, n ** 3))
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    Rn = np.sqrt(np.sum(to_frame(bundle.riemann, E, 4) ** 2, axis=(-1, -2, -3, -4)))
    return U, s, E, Rn


def weyl_kernel(bundle: CurvatureBundle, g=None, tol_rank: float = TOL_RANK) -> KernelFrame:
    """Kernel of ``X ↦ W(X,·,·,·)`` at a single point via SVD in a g-orthonormal basis."""
    U, s, E, Rn = _weyl_svd(bundle)
    if U.ndim != 2:
        raise ValueError("weyl_kernel expects a bundle at a single point")
    rank, amb = decide_rank(s, Rn, tol_rank)
    k = int(rank)
    n = bundle.dim
    Uk = U[:, n - k:]
    return KernelFrame(
        rank_k=k,
        xi=E @ Uk,
        projector=Uk @ Uk.T,
        transversal=E @ U[:, :n - k],
        sing_values=s,
        onb=E,
        ambiguous=bool(amb),
        point=None if bundle.point is None else np.asarray(bundle.point),
    )


# --------------------------------------------------------------------------
# sampling and surveys


def sample_points(defn: MetricDefinition, count: int, seed: int = 42, margin: float = 0.05) -> np.ndarray:
    """Seeded uniform samples; sample ``i`` depends only on ``(seed, i)``."""
    b = defn.bounds()
    width = b[:, 1] - b[:, 0]
    lo = b[:, 0] + margin * width
    hi = b[:, 1] - margin * width
    pts = np.empty((count, defn.dim))
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        pts[i] = rng.uniform(lo, hi)
    return pts


@dataclass
class DegeneracyReport:
    modal_rank: int
    sample_count: int
    exceptional_points: list
    rank_histogram: dict
    points: np.ndarray = dc_field(repr=False, default=None)
    ranks: np.ndarray = dc_field(repr=False, default=None)

    @property
    def regular_mask(self) -> np.ndarray:
        bad = {e["index"] for e in self.exceptional_points}
        return np.array([i not in bad for i in range(self.sample_count)])


def degeneracy_survey(defn: MetricDefinition, sampler=None, count: int = 100, seed: int = 42,
                      tol_rank: float = TOL_RANK) -> DegeneracyReport:
    """Weyl-kernel rank at sampled points; ambiguous or failing points are kept as exceptional."""
    pts = sampler(count) if sampler is not None else sample_points(defn, count, seed)
    count = len(pts)
    geo = ChartGeometry(defn, tol_rank=tol_rank)
    ranks = np.full(count, -1)
    reasons = [None] * count
    try:
        U, s, E, Rn = geo.kernel_svd(pts)
        r, amb = decide_rank(s, Rn, tol_rank)
        ranks[:] = r
        for i in np.flatnonzero(amb):
            reasons[i] = "no singular-value gap at the rank threshold"
    except Exception:
        for i, p in enumerate(pts):
            try:
                U, s, E, Rn = geo.kernel_svd(p[None])
                r, amb = decide_rank(s, Rn, tol_rank)
                ranks[i] = r[0]
                if amb[0]:
                    reasons[i] = "no singular-value gap at the rank threshold"
            except Exception as err:  # recorded, never dropped
                reasons[i] = f"{type(err).__name__}: {err}"
    valid = ranks[ranks >= 0]
    hist = {int(v): int(c) for v, c in zip(*np.unique(ranks, return_counts=True))}
    if valid.size:
        vals, cnt = np.unique(valid, return_counts=True)
        modal = int(vals[np.argmax(cnt)])
    else:
        modal = -1
    exceptional = []
    for i in range(count):
        if ranks[i] != modal or reasons[i] is not None:
            exceptional.append({"index": i, "point": pts[i].tolist(), "rank": int(ranks[i]),
                                "reason": reasons[i] or "rank differs from modal rank"})
    return DegeneracyReport(modal, count, exceptional, hist, pts, ranks)


# --------------------------------------------------------------------------
# geometry over a chart


class ChartGeometry:
    """Batched pointwise geometry of a chart plus finite-difference machinery."""

    def __init__(self, defn: MetricDefinition, tol_rank: float = TOL_RANK, steps=STEPS):
        self.defn = defn
        self.n = defn.dim
        self.tol_rank = tol_rank
        self.steps = tuple(steps)
        self.bounds = defn.bounds() if defn.domain else None

    # -- pointwise ----------------------------------------------------------
    def _check(self, pts):
        if self.bounds is None:
            return
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        if np.any(pts <= lo) or np.any(pts >= hi):
            raise StencilOutOfDomain("evaluation point leaves the declared domain")

    def bundle(self, pts, full: bool = False) -> CurvatureBundle:
        pts = np.asarray(pts, float)
        self._check(pts)
        mj = evaluate_metric_jets(self.defn, pts, order=3 if full else 2, check_domain=False)
        return curvature_bundle(mj, full=full)

    def metric(self, pts) -> np.ndarray:
        pts = np.asarray(pts, float)
        self._check(pts)
        return evaluate_metric_jets(self.defn, pts, order=1, check_domain=False).values

    def kernel_svd(self, pts, bundle=None):
        b = bundle if bundle is not None else self.bundle(pts)
        return _weyl_svd(b)

    def step(self, depth: int) -> float:
        return self.steps[min(depth, len(self.steps) - 1)]

    def derivative(self, fld: Field, pts):
        D, _ = field_derivative(fld, pts, self.step(fld.depth), self.bounds)
        return D

    # -- kernel fields ------------------------------------------------------
    def kernel_field(self, refs, k: int | None = None) -> Field:
        """Smooth g-orthonormal kernel frame: project ``refs`` onto Ker(W), then Gram–Schmidt.

        ``refs`` is an ``(n, m)`` array of chart vectors (typically the kernel
        basis at the sample point); the field returns ``(P, n, m)``.
        """
        refs = np.asarray(refs, float)
        if k is None:
            k = refs.shape[1]
        n = self.n
        tol = self.tol_rank

        def fn(pts):
            b = self.bundle(pts)
            U, s, E, Rn = _weyl_svd(b)
            rank, _ = decide_rank(s, Rn, tol)
            if np.any(rank != k):
                bad = np.flatnonzero(rank != k)[0]
                raise RankDrift(f"kernel rank {int(rank[bad])} != {k} at {pts[bad].tolist()}")
            L = np.linalg.cholesky(b.g)
            c = ein("...ba,bm->...am", L, refs)
            Uk = U[..., n - k:]
            c = ein("...ak,...bk,...bm->...am", Uk, Uk, c)
            return E @ _gram_schmidt(c)

        return Field(fn, 0, "xi")

    def covariant(self, fld: Field, pts, bundle=None):
        """Value and ``(∇_a V)^b`` of a vector field at ``pts``."""
        V = fld(pts)
        dV = self.derivative(fld, pts)  # (P, n_comp, n_dir)
        b = bundle if bundle is not None else self.bundle(pts)
        return V, b.covariant_derivative(V, dV)

    def rot(self, fld: Field, pts, bundle=None) -> np.ndarray:
        """``rot(V)[a, b] = g(∇_a V, ∂_b) − g(∂_a, ∇_b V)`` in chart components."""
        b = bundle if bundle is not None else self.bundle(pts)
        V, gradV = self.covariant(fld, pts, b)
        low = ein("...ac,...cb->...ab", gradV, b.g)
        return low - np.swapaxes(low, -1, -2)

    def rot_exterior(self, fld: Field, pts) -> np.ndarray:
        """Exterior derivative of the dual 1-form, ``∂_a V♭_b − ∂_b V♭_a``."""
        dual = Field(lambda q: ein("...ab,...b->...a", self.metric(q), fld(q)), fld.depth, "dual")
        D = self.derivative(dual, pts)  # D[b, a] = ∂_a V♭_b
        return np.swapaxes(D, -1, -2) - D

    def xi_gradients(self, xi: Field, pts, bundle=None):
        """Values ``(P, n, k)`` and covariant derivatives ``(P, k, n, n)`` of every ξ_j."""
        b = bundle if bundle is not None else self.bundle(pts)
        X = xi(pts)
        dX = self.derivative(xi, pts)  # (P, n, k, n_dir)
        dX = np.moveaxis(dX, -2, -3)  # (P, k, n, n_dir)
        Xk = np.moveaxis(X, -1, -2)  # (P, k, n)
        grad = np.swapaxes(dX, -1, -2) + ein("...bac,...jc->...jab", b.gamma, Xk)
        return X, grad, b

    def second_fundamental(self, xi: Field, pts, bundle=None):
        """``h[i, j] = π^⊥ ∇_{ξ_i} ξ_j`` as chart vectors ``(P, k, k, n)`` and ``H = Σ h[i, i]``."""
        X, grad, b = self.xi_gradients(xi, pts, bundle)
        # ∇_{ξ_i} ξ_j = ξ_i^a (∇_a ξ_j)
        nab = ein("...ai,...jab->...ijb", X, grad)
        h = self.perp(X, nab, b.g)
        H = ein("...iib->...b", h)
        return h, H, X, b

    @staticmethod
    def perp(X, v, g):
        """Remove components along the orthonormal columns of ``X`` (batched)."""
        flat = v.reshape(X.shape[:-2] + (-1, X.shape[-2]))
        coeff = ein("...am,...ab,...ib->...im", X, g, flat)
        out = flat - ein("...im,...am->...ia", coeff, X)
        return out.reshape(v.shape)

    def mean_curvature_field(self, xi: Field) -> Field:
        def fn(pts):
            _, H, _, _ = self.second_fundamental(xi, pts)
            return H
        return Field(fn, xi.depth + 1, "H")


def _gram_schmidt(c: np.ndarray) -> np.ndarray:
    """Batched Gram–Schmidt of the columns of ``c`` (Euclidean), keeping orientation."""
    if c.shape[-1] == 0:
        return c
    q, r = np.linalg.qr(c)
    sign = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    sign = np.where(sign == 0, 1.0, sign)
    return q * sign[..., None, :]


def procrustes(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Orthogonal ``R`` minimising ``|A R − B|`` (frames as columns)."""
    R, _ = orthogonal_procrustes(A, B)
    return R


def align_frame(frame: np.ndarray, reference: np.ndarray, max_angle: float = 0.5) -> np.ndarray:
    """Rotate the columns of ``frame`` to best match ``reference``."""
    R = procrustes(frame, reference)
    angle = np.linalg.norm(R - np.eye(R.shape[0]))
    if not np.isfinite(angle):
        raise GaugeInstability("frame alignment failed")
    aligned = frame @ R
    if np.linalg.norm(aligned - reference) > max_angle * max(1.0, np.linalg.norm(reference)):
        raise GaugeInstability("aligned frames still differ by more than the admissible angle")
    return aligned


# --------------------------------------------------------------------------
# operations at a single point


def _geometry(defn, tol_rank=TOL_RANK) -> ChartGeometry:
    return ChartGeometry(defn, tol_rank=tol_rank)


def frame_at(defn: MetricDefinition, p, tol_rank: float = TOL_RANK) -> KernelFrame:
    geo = _geometry(defn, tol_rank)
    b = geo.bundle(np.asarray(p, float))
    fr = weyl_kernel(b, tol_rank=tol_rank)
    fr.point = np.asarray(p, float)
    return fr


def rotation(defn: MetricDefinition, V, p) -> np.ndarray:
    """Rotation 2-form of a vector field at ``p`` (chart components, covariant formula)."""
    geo = _geometry(defn)
    p = np.asarray(p, float)
    return geo.rot(as_field(V), p[None])[0]


def rotation_exterior(defn: MetricDefinition, V, p) -> np.ndarray:
    """Rotation via the exterior derivative of the dual 1-form."""
    geo = _geometry(defn)
    p = np.asarray(p, float)
    return geo.rot_exterior(as_field(V), p[None])[0]


@dataclass
class FoliationData:
    H: np.ndarray
    h_form: np.ndarray  # h[i, j] = π^⊥ ∇_{ξ_i} ξ_j, chart vectors
    umbilic_residual: float
    geodesic_residual: float


def _gnorm(v, g):
    return np.sqrt(np.abs(ein("...a,...ab,...b->...", v, g, v)))


def mean_curvature(defn: MetricDefinition, frame: KernelFrame, p, tol_rank: float = TOL_RANK) -> FoliationData:
    """Mean curvature ``H = Σ π^⊥ ∇_{ξ_i} ξ_i`` and second fundamental form of Ker(W)."""
    k = frame.rank_k
    n = frame.dim
    p = np.asarray(p, float)
    if k == 0:
        raise RankDrift("mean curvature needs a non-trivial kernel")
    geo = _geometry(defn, tol_rank)
    g = geo.metric(p[None])[0]
    if k == n:
        return FoliationData(np.zeros(n), np.zeros((n, n, n)), 0.0, 0.0)
    xi = geo.kernel_field(frame.xi, k)
    h, H, _, _ = geo.second_fundamental(xi, p[None])
    h, H = h[0], H[0]
    umb = h - np.eye(k)[:, :, None] * (H / k)
    return FoliationData(H, h, float(_gnorm(umb, g).max()), float(_gnorm(h, g).max()))


def frobenius_transversal(defn: MetricDefinition, frame: KernelFrame, p, tol_rank: float = TOL_RANK) -> float:
    """Integrability defect of Ker(W)^⊥: ``max |g([E_a,E_b], ξ_i)| = max |rot(ξ_i)(E_a,E_b)|``."""
    k, n = frame.rank_k, frame.dim
    if k in (0, n) or n - k < 2:
        return 0.0
    geo = _geometry(defn, tol_rank)
    p = np.asarray(p, float)
    xi = geo.kernel_field(frame.xi, k)
    forms = kernel_rotations(geo, xi, p[None])[0]  # (k, n, n)
    T = frame.transversal
    Om = ein("ab...,ax,by->...xy", np.moveaxis(forms, 0, -1), T, T)
    return float(np.abs(Om).max())


def kernel_rotations(geo: ChartGeometry, xi: Field, pts, bundle=None) -> np.ndarray:
    """Rotation 2-forms of every kernel field, ``(P, k, n, n)`` chart components."""
    X, grad, b = geo.xi_gradients(xi, pts, bundle)
    low = ein("...jac,...cb->...jab", grad, b.g)
    return low - np.swapaxes(low, -1, -2)


def contact_invariants(defn: MetricDefinition, frame: KernelFrame, p, tol_rank: float = TOL_RANK):
    """``(|η∧(dη)^m|, Ω)`` for a rank-1 kernel in odd dimension ``n = 2m + 1``.

    ``Ω[a, b] = dη(E_a, E_b)`` on the transversal orthonormal frame, and the
    top form has norm ``m!·sqrt|det Ω|``.
    """
    if frame.rank_k != 1:
        raise RankNotOne(f"contact data needs a rank-1 kernel, got rank {frame.rank_k}")
    n = frame.dim
    if n % 2 == 0:
        raise OddDimensionRequired(f"contact top form needs odd dimension, got {n}")
    geo = _geometry(defn, tol_rank)
    p = np.asarray(p, float)
    xi = geo.kernel_field(frame.xi, 1)
    form = kernel_rotations(geo, xi, p[None])[0, 0]
    T = frame.transversal
    Om = T.T @ form @ T
    m = (n - 1) // 2
    norm = float(math.factorial(m) * np.sqrt(abs(np.linalg.det(Om))))
    return norm, Om


# --------------------------------------------------------------------------
# geodesic saturation inside the kernel


@dataclass
class TotallyGeodesic:
    """Marker: no derivative in the series leaves the current span."""

    vectors: np.ndarray
    max_offspan: float


def chain_series(m: int):
    """Ordered pairs ``(p, l)`` meaning ``∇_{ξ_p} ξ_l`` (0-based) for a span of size ``m``."""
    out = [(0, 0)]
    for j in range(1, m):
        out += [(j, l) for l in range(j)]
        out += [(q, j) for q in range(j)]
        out.append((j, j))
    return out


def nullity_chain_extend(defn: MetricDefinition, p, current, tol: float = TOL_FIELD,
                         tol_rank: float = TOL_RANK, kernel_tol: float = 1e-3):
    """One step of the geodesic-saturation chain inside Ker(W).

    ``current`` is an ``(n, m)`` array of g-orthonormal kernel vectors at
    ``p``.  They are extended to fields by projecting onto the span of their
    own kernel projections at nearby points.  Returns the extended array
    ``(n, m + 1)`` or a :class:`TotallyGeodesic` marker.
    """
    p = np.asarray(p, float)
    current = np.asarray(current, float).reshape(len(p), -1)
    m = current.shape[1]
    geo = _geometry(defn, tol_rank)
    b = geo.bundle(p[None])
    g = b.g[0]
    if m == 0:
        return TotallyGeodesic(current, 0.0)
    U, s, E, Rn = _weyl_svd(b)
    rank, _ = decide_rank(s, Rn, tol_rank)
    k = int(rank[0])
    kernel = E[0] @ U[0][:, geo.n - k:]
    # extension: kernel fields seeded by the full kernel, restricted to the span of `current`
    kfield = geo.kernel_field(kernel, k)
    coeff = kernel.T @ g @ current  # current in kernel coordinates at p (constant extension)

    def sub(pts):
        return _gram_schmidt_g(kfield(pts) @ coeff, geo.metric(pts))

    xi = Field(sub, 0, "chain")
    X, grad, _ = geo.xi_gradients(xi, p[None], b)
    X, grad = X[0], grad[0]
    best = 0.0
    for (q, l) in chain_series(m):
        v = X[:, q] @ grad[l]  # ∇_{ξ_q} ξ_l
        off = v - X @ (X.T @ g @ v)
        size = float(np.sqrt(off @ g @ off))
        best = max(best, size)
        if size > tol:
            cand = off / size
            W_ins = ein("ijkl,i->jkl", b.weyl[0], cand)
            rel = np.sqrt(np.sum(W_ins ** 2)) / max(s[0, 0], 1e-300)
            if rel > kernel_tol:
                raise KernelEscape(
                    f"∇_ξ{q + 1} ξ{l + 1} leaves Ker(W) (relative Weyl insertion {rel:.2e})")
            return np.concatenate([current, cand[:, None]], axis=1)
    return TotallyGeodesic(current, best)


def _gram_schmidt_g(V, g):
    """Batched Gram–Schmidt of chart columns ``V (P, n, m)`` in the metric ``g``."""
    L = np.linalg.cholesky(g)
    c = ein("...ba,...bm->...am", L, V)
    q = _gram_schmidt(c)
    return np.linalg.solve(np.swapaxes(L, -1, -2), q)


def gauge_slope(defn: MetricDefinition, p, deltas=(1e-2, 3e-3, 1e-3, 3e-4), direction=None) -> float:
    """Log-log slope of aligned kernel-frame differences against displacement."""
    p = np.asarray(p, float)
    geo = _geometry(defn)
    d = np.ones(len(p)) / np.sqrt(len(p)) if direction is None else np.asarray(direction, float)
    fr0 = weyl_kernel(geo.bundle(p))
    diffs = []
    for t in deltas:
        fr = weyl_kernel(geo.bundle(p + t * d))
        A = fr.xi
        R = procrustes(A, fr0.xi)
        diffs.append(np.linalg.norm(A @ R - fr0.xi))
    return float(np.polyfit(np.log(deltas), np.log(np.maximum(diffs, 1e-300)), 1)[0])


def domain_ok(defn: MetricDefinition, p) -> bool:
    try:
        from .dsl import check_in_domain
        check_in_domain(defn, p)
        return True
    except DomainError:
        return False
