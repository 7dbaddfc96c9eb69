"""Pointwise curvature from metric jets.

Conventions
-----------
* ``R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y] Z`` and
  ``Rm(X,Y,Z,V) = g(R(X,Y)Z, V)``, so ``Rm[i,j,k,l]`` is lowered in the
  last slot.
* ``Ric(Y,Z) = tr(X ↦ R(X,Y)Z)`` contracts the first and last slots, which
  makes round spheres positive.
* Kulkarni–Nomizu: ``(A⋆B)(X,Y,U,V) = A(X,U)B(Y,V) + A(Y,V)B(X,U)
  − A(X,V)B(Y,U) − A(Y,U)B(X,V)``.  With this lowering ``Rm(X,Y,X,Y)`` is
  minus the sectional curvature, so the trace-free part is
  ``W = Rm + g⋆𝔥``.  (Any overall sign of ``W`` leaves its kernel,
  trace-freeness and conformal behaviour unchanged.)
* Covariant derivatives carry the differentiating index first:
  ``weyl_grad[m,i,j,k,l] = (∇_m W)(∂_i,∂_j,∂_k,∂_l)``.

Every array carries arbitrary leading batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsl import MetricJet
from .errors import DimensionTooSmall, ShapeMismatch

ein = np.einsum


def kulkarni_nomizu(A, B) -> np.ndarray:
    """Kulkarni–Nomizu product of two symmetric 2-tensors (batched)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[-2:] != B.shape[-2:] or A.shape[-1] != A.shape[-2]:
        raise ShapeMismatch(f"cannot form {A.shape} ⋆ {B.shape}")
    return (ein("...xu,...yv->...xyuv", A, B) + ein("...yv,...xu->...xyuv", A, B)
            - ein("...xv,...yu->...xyuv", A, B) - ein("...yu,...xv->...xyuv", A, B))


def f_v_tensor(g, V, gradV) -> np.ndarray:
    """Trace-free 2-tensor whose vanishing with Ric° encodes ``e^{2φ}g`` Einstein.

    ``gradV[a, b] = (∇_a V)^b``.  Returns
    ``F(X,Y) = g(∇_X V, Y) − g(X,V)g(Y,V) − (1/n)(div V − |V|²) g(X,Y)``,
    so that ``Ric° + (2−n) F_{∇φ} = 0`` exactly when ``e^{2φ}g`` is Einstein.
    """
    g = np.asarray(g, float)
    V = np.asarray(V, float)
    gradV = np.asarray(gradV, float)
    n = g.shape[-1]
    if V.shape[-1] != n or gradV.shape[-2:] != (n, n):
        raise ShapeMismatch("f_v_tensor: inconsistent dimensions")
    Vlow = ein("...ab,...b->...a", g, V)
    nabla = ein("...xc,...cy->...xy", gradV, g)
    div = ein("...aa->...", gradV)
    norm2 = ein("...a,...a->...", V, Vlow)
    trace_part = (div - norm2)[..., None, None] * g / n
    return nabla - ein("...x,...y->...xy", Vlow, Vlow) - trace_part


def traceless(T, g, ginv) -> np.ndarray:
    tr = ein("...ab,...ab->...", ginv, T)
    return T - tr[..., None, None] * g / g.shape[-1]


@dataclass
class CurvatureBundle:
    """All pointwise curvature quantities at a batch of chart points.

    Derivative fields (``gamma_d2``, ``riemann_grad``, ``schouten_grad``,
    ``cotton``, ``weyl_grad``, ``weyl_div``) are ``None`` when built with
    ``full=False`` or from order-2 jets.
    """

    point: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    dg: np.ndarray  # dg[a,b,c] = ∂_c g_ab
    gamma: np.ndarray  # gamma[k,i,j] = Γ^k_ij
    gamma_d1: np.ndarray  # gamma_d1[k,i,j,m] = ∂_m Γ^k_ij
    riemann: np.ndarray
    ricci: np.ndarray
    tau: np.ndarray
    ricci_traceless: np.ndarray
    schouten: np.ndarray
    weyl: np.ndarray
    gamma_d2: np.ndarray | None = None
    riemann_grad: np.ndarray | None = None
    schouten_grad: np.ndarray | None = None
    cotton: np.ndarray | None = None
    weyl_grad: np.ndarray | None = None
    weyl_div: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.g.shape[-1]

    @property
    def rho(self) -> np.ndarray:
        n = self.dim
        return self.tau / (n * (n - 1))

    @property
    def riemann_up(self) -> np.ndarray:
        """``R^l_{ijk}`` with ``R(∂_i,∂_j)∂_k = R^l_{ijk} ∂_l``, index order ``[i,j,k,l]``."""
        return ein("...ijkv,...vl->...ijkl", self.riemann, self.g_inv)

    @property
    def weyl_up(self) -> np.ndarray:
        """Weyl as a (1,3) tensor, last slot raised; conformally invariant."""
        return ein("...ijkv,...vl->...ijkl", self.weyl, self.g_inv)

    def covariant_derivative(self, V, dV) -> np.ndarray:
        """``(∇_a V)^b`` from components ``V`` and coordinate derivatives ``dV[b, a] = ∂_a V^b``."""
        return np.swapaxes(dV, -1, -2) + ein("...bac,...c->...ab", self.gamma, V)

    def insert_last(self, X) -> np.ndarray:
        """``W(·,·,·,X)``, the contraction used by the conformal divergence law."""
        return ein("...ijkl,...l->...ijk", self.weyl, X)


def _christoffel_first(dg):
    # Γ1[l,i,j] = ½(∂_i g_jl + ∂_j g_il − ∂_l g_ij)
    return 0.5 * (ein("...jli->...lij", dg) + ein("...ilj->...lij", dg) - ein("...ijl->...lij", dg))


def _christoffel_first_d(d2g):
    # ∂_m of the above, derivative index last
    return 0.5 * (ein("...jlim->...lijm", d2g) + ein("...iljm->...lijm", d2g)
                  - ein("...ijlm->...lijm", d2g))


def curvature_bundle(mj: MetricJet, full: bool = True) -> CurvatureBundle:
    """Curvature bundle from a :class:`MetricJet`, using jet data only."""
    n = mj.dim
    if n < 3:
        raise DimensionTooSmall(f"Weyl tensor needs n >= 3, got n = {n}")
    jet = mj.g
    full = full and jet.order >= 3
    g = jet.value
    gi = mj.g_inv
    dg = jet.derivative(1)
    d2g = jet.derivative(2)

    G1 = _christoffel_first(dg)
    dG1 = _christoffel_first_d(d2g)
    dgi = -ein("...ka,...abm,...bl->...klm", gi, dg, gi)
    gamma = ein("...kl,...lij->...kij", gi, G1)
    gamma_d1 = ein("...klm,...lij->...kijm", dgi, G1) + ein("...kl,...lijm->...kijm", gi, dG1)

    # R^l_ijk stored as Rup[i,j,k,l]
    Rup = (ein("...ljki->...ijkl", gamma_d1) - ein("...likj->...ijkl", gamma_d1)
           + ein("...lip,...pjk->...ijkl", gamma, gamma) - ein("...ljp,...pik->...ijkl", gamma, gamma))
    Rm = ein("...ijkl,...lv->...ijkv", Rup, g)
    ric = ein("...ijki->...jk", Rup)
    ric = 0.5 * (ric + np.swapaxes(ric, -1, -2))
    tau = ein("...ab,...ab->...", gi, ric)
    ric0 = ric - tau[..., None, None] * g / n
    sch = (ric - (tau / (2 * (n - 1)))[..., None, None] * g) / (n - 2)
    weyl = Rm + kulkarni_nomizu(g, sch)

    bundle = CurvatureBundle(point=mj.point, g=g, g_inv=gi, dg=dg, gamma=gamma, gamma_d1=gamma_d1,
                             riemann=Rm, ricci=ric, tau=tau, ricci_traceless=ric0,
                             schouten=sch, weyl=weyl)
    if not full:
        return bundle

    d3g = jet.derivative(3)
    d2G1 = 0.5 * (ein("...jlimp->...lijmp", d3g) + ein("...iljmp->...lijmp", d3g)
                  - ein("...ijlmp->...lijmp", d3g))
    # ∂_p∂_m g^{kl}
    d2gi = -(ein("...kap,...abm,...bl->...klmp", dgi, dg, gi)
             + ein("...ka,...abmp,...bl->...klmp", gi, d2g, gi)
             + ein("...ka,...abm,...blp->...klmp", gi, dg, dgi))
    gamma_d2 = (ein("...klmp,...lij->...kijmp", d2gi, G1)
                + ein("...klm,...lijp->...kijmp", dgi, dG1)
                + ein("...klp,...lijm->...kijmp", dgi, dG1)
                + ein("...kl,...lijmp->...kijmp", gi, d2G1))

    # ∂_m R^l_ijk, derivative index first: dRup[m,i,j,k,l]
    dRup = (ein("...ljkim->...mijkl", gamma_d2) - ein("...likjm->...mijkl", gamma_d2)
            + ein("...lipm,...pjk->...mijkl", gamma_d1, gamma)
            + ein("...lip,...pjkm->...mijkl", gamma, gamma_d1)
            - ein("...ljpm,...pik->...mijkl", gamma_d1, gamma)
            - ein("...ljp,...pikm->...mijkl", gamma, gamma_d1))
    dRm = ein("...mijkl,...lv->...mijkv", dRup, g) + ein("...ijkl,...lvm->...mijkv", Rup, dg)
    nablaRm = (dRm
               - ein("...pmi,...pjkv->...mijkv", gamma, Rm)
               - ein("...pmj,...ipkv->...mijkv", gamma, Rm)
               - ein("...pmk,...ijpv->...mijkv", gamma, Rm)
               - ein("...pmv,...ijkp->...mijkv", gamma, Rm))
    nabla_ric = ein("...mijkv,...iv->...mjk", nablaRm, gi)
    nabla_ric = 0.5 * (nabla_ric + np.swapaxes(nabla_ric, -1, -2))
    nabla_tau = ein("...jk,...mjk->...m", gi, nabla_ric)
    nabla_sch = (nabla_ric - ein("...m,...jk->...mjk", nabla_tau, g) / (2 * (n - 1))) / (n - 2)
    cotton = nabla_sch - np.swapaxes(nabla_sch, -2, -3)
    nablaW = nablaRm + _kn_batched_first(g, nabla_sch)
    wdiv = ein("...mijkv,...mv->...ijk", nablaW, gi)

    bundle.gamma_d2 = gamma_d2
    bundle.riemann_grad = nablaRm
    bundle.schouten_grad = nabla_sch
    bundle.cotton = cotton
    bundle.weyl_grad = nablaW
    bundle.weyl_div = wdiv
    return bundle


def _kn_batched_first(g, T):
    """``g ⋆ T[m]`` for each leading derivative index ``m`` of ``T[..., m, a, b]``."""
    n = g.shape[-1]
    gb = np.broadcast_to(g[..., None, :, :], T.shape[:-3] + (n, n, n))
    return kulkarni_nomizu(gb, T)


def curvature_at(defn, point, full: bool = True) -> CurvatureBundle:
    from .dsl import evaluate_metric_jets

    order = 3 if full else 2
    return curvature_bundle(evaluate_metric_jets(defn, point, order=order), full=full)


def orthonormal_frame(g) -> np.ndarray:
    """Columns form a g-orthonormal basis: ``E = L^{-T}`` with ``g = L L^T``."""
    L = np.linalg.cholesky(g)
    n = g.shape[-1]
    eye = np.broadcast_to(np.eye(n), g.shape)
    return np.swapaxes(np.linalg.solve(L, eye), -1, -2)


def kappa_nullity_residual(bundle: CurvatureBundle, Z, kappa: float) -> np.ndarray:
    """Max over orthonormal ``X, Y`` of ``|R(X,Y)Z − κ(g(Y,Z)X − g(X,Z)Y)|``."""
    Z = np.asarray(Z, float)
    g = bundle.g
    RZ = ein("...ijkl,...k->...ijl", bundle.riemann_up, Z)  # R(∂_i,∂_j)Z
    Zlow = ein("...ab,...b->...a", g, Z)
    eye = np.broadcast_to(np.eye(bundle.dim), g.shape)
    model = kappa * (ein("...j,...il->...ijl", Zlow, eye) - ein("...i,...jl->...ijl", Zlow, eye))
    diff = RZ - model
    E = orthonormal_frame(g)
    D = ein("...ijl,...ia,...jb->...abl", diff, E, E)
    norms = np.sqrt(ein("...abl,...abm,...lm->...ab", D, D, g))
    return norms.max(axis=(-1, -2))


def to_frame(T, E, rank: int) -> np.ndarray:
    """Components of a covariant tensor (``rank`` trailing indices) in the frame ``E``.

    The frame vectors are the columns of ``E``.
    """
    out = T
    for _ in range(rank):
        # contract the first tensor index, append the frame index at the end
        out = ein("...a,...ab->...b", np.moveaxis(out, -rank, -1), _expand(E, rank - 1))
    return out


def _expand(E, extra):
    return E.reshape(E.shape[:-2] + (1,) * extra + E.shape[-2:])


def tensor_norm(T, ginv, rank: int) -> np.ndarray:
    """g-norm of a covariant tensor with ``rank`` trailing indices."""
    letters = "abcdefgh"[:rank]
    upper = "pqrstuvw"[:rank]
    ops = [T, T] + [ginv] * rank
    spec = f"...{letters},...{upper}," + ",".join(f"...{a}{b}" for a, b in zip(letters, upper)) + "->..."
    return np.sqrt(np.abs(ein(spec, *ops)))
