"""Closed-form metrics used as oracles, emitted in the ``.metric`` format.

Every generator builds ``.metric`` text and parses it, so everything in the
corpus goes through the same front end as user input.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import expr as ex
from .curvature import curvature_bundle
from .dsl import MetricDefinition, evaluate_metric_jets, parse_metric, render_metric, scalar_jet
from .errors import BadKind, BadParams

KINDS = ("flat", "sphere", "product", "warped", "t11", "schwarzschild_product",
         "conformal_rescale", "random")

POLE_MARGIN = 0.2


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def to_json(self):
        def conv(v):
            if isinstance(v, GeneratorSpec):
                return v.to_json()
            if isinstance(v, (list, tuple)):
                return [conv(x) for x in v]
            return v
        return {"kind": self.kind, "params": {k: conv(v) for k, v in sorted(self.params.items())}}

    def digest(self) -> str:
        text = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def filename(self) -> str:
        return f"{self.kind}_{self.digest()}.metric"


# --------------------------------------------------------------------------
# text assembly helpers


def _num(v: float) -> str:
    return ex.render(ex.Num(float(v)))


def _metric_text(name, coords, entries, constants=(), domains=(), scalars=()):
    lines = [f"name {name}", "coords " + " ".join(coords)]
    lines += [f"const {k} = {v}" for k, v in constants]
    lines += [f"domain {c} in ({a}, {b})" for c, a, b in domains]
    lines += [f"scalar {k} = {v}" for k, v in scalars]
    n = len(coords)
    rows = ["[" + ", ".join(entries[i][j] for j in range(i, n)) + "]" for i in range(n)]
    lines.append("g = [" + ",\n     ".join(rows) + "]")
    return "\n".join(lines) + "\n"


def _diag(n, diag):
    return [[diag[i] if i == j else "0" for j in range(n)] for i in range(n)]


def substitute(node, mapping: dict):
    """Rename symbols in an expression tree."""
    if isinstance(node, ex.Sym):
        return ex.Sym(mapping.get(node.name, node.name), pos=node.pos)
    if isinstance(node, ex.Num):
        return node
    if isinstance(node, ex.Neg):
        return ex.Neg(substitute(node.arg, mapping), pos=node.pos)
    if isinstance(node, ex.Call):
        return ex.Call(node.func, substitute(node.arg, mapping), pos=node.pos)
    return ex.BinOp(node.op, substitute(node.left, mapping), substitute(node.right, mapping), pos=node.pos)


def _is_zero(node) -> bool:
    return isinstance(node, ex.Num) and node.value == 0.0


# --------------------------------------------------------------------------
# generators


def flat(n: int) -> MetricDefinition:
    if not 2 <= n <= 8:
        raise BadParams("flat: dimension must be in 2..8")
    coords = [f"x{i}" for i in range(n)]
    return parse_metric(_metric_text(f"flat{n}", coords, _diag(n, ["1"] * n)))


def sphere(n: int, r: float = 1.0) -> MetricDefinition:
    """Round ``S^n`` of radius ``r`` in polar angles ``a1..an``."""
    if not 2 <= n <= 8:
        raise BadParams("sphere: dimension must be in 2..8")
    if not r > 0:
        raise BadParams("sphere: radius must be positive")
    coords = [f"a{i + 1}" for i in range(n)]
    diag = []
    for i in range(n):
        factors = ["r^2"] + [f"sin({coords[j]})^2" for j in range(i)]
        diag.append("*".join(factors))
    doms = [(c, _num(POLE_MARGIN), f"pi - {_num(POLE_MARGIN)}") for c in coords[:-1]]
    doms.append((coords[-1], "-3", "3"))
    return parse_metric(_metric_text(f"sphere{n}", coords, _diag(n, diag),
                                     constants=[("r", repr(float(r)))], domains=doms))


def _fresh(name, taken):
    if name not in taken:
        return name
    i = 2
    while f"{name}_{i}" in taken:
        i += 1
    return f"{name}_{i}"


def product(a: MetricDefinition, b: MetricDefinition, name=None) -> MetricDefinition:
    """Block-diagonal direct sum; clashing names in the second factor are renamed."""
    taken = set(a.coords) | set(a.constants) | set(a.scalars)
    mapping = {}
    for s in list(b.coords) + list(b.constants) + list(b.scalars):
        new = _fresh(s, taken | set(mapping.values()))
        mapping[s] = new
        taken.add(new)
    coords = tuple(a.coords) + tuple(mapping[c] for c in b.coords)
    n1, n = a.dim, a.dim + b.dim
    zero = ex.Num(0.0)
    entries = [[zero] * n for _ in range(n)]
    for i in range(n1):
        for j in range(n1):
            entries[i][j] = a.entries[i][j]
    for i in range(b.dim):
        for j in range(b.dim):
            entries[n1 + i][n1 + j] = substitute(b.entries[i][j], mapping)
    constants = dict(a.constants)
    constants.update({mapping[k]: v for k, v in b.constants.items()})
    domain = dict(a.domain)
    domain.update({mapping[k]: v for k, v in b.domain.items()})
    scalars = dict(a.scalars)
    scalars.update({mapping[k]: substitute(v, mapping) for k, v in b.scalars.items()})
    d = MetricDefinition(name or f"{a.name}_x_{b.name}", coords, tuple(map(tuple, entries)),
                         constants, domain, scalars)
    return parse_metric(render_metric(d))


WARP_FUNCTIONS = {"sinh": "sinh(t)", "cosh": "cosh(t)", "one": "1", "exp": "exp(t)"}


def warped(base: MetricDefinition, f: str = "sinh", interval=(0.5, 2.0)) -> MetricDefinition:
    """``dt^2 + f(t)^2 g_*``; ``f`` is a name from ``WARP_FUNCTIONS`` or an expression in ``t``."""
    lo, hi = map(float, interval)
    if not lo < hi:
        raise BadParams("warped: empty interval")
    f_text = WARP_FUNCTIONS.get(f, f)
    if "t" in base.coords:
        raise BadParams("warped: base already has a coordinate named t")
    fnode = ex.parse_expr(f_text)
    grid = np.linspace(lo, hi, 257)
    vals = scalar_jet(parse_metric("coords t s\ng = [[1,0],[0,1]]"), fnode,
                      np.stack([grid, np.zeros_like(grid)], -1)).value
    if np.any(np.abs(vals) < 1e-12) or np.any(np.sign(vals) != np.sign(vals[0])):
        raise BadParams("warped: warp function vanishes on the interval")
    n = base.dim + 1
    coords = ("t",) + tuple(base.coords)
    zero = ex.Num(0.0)
    entries = [[zero] * n for _ in range(n)]
    entries[0][0] = ex.Num(1.0)
    f2 = ex.BinOp("^", fnode, ex.Num(2.0))
    for i in range(base.dim):
        for j in range(base.dim):
            e = base.entries[i][j]
            entries[i + 1][j + 1] = zero if _is_zero(e) else ex.BinOp("*", f2, e)
    domain = {"t": (lo, hi), **base.domain}
    d = MetricDefinition(f"warped_{f if f in WARP_FUNCTIONS else 'f'}_{base.name}", coords,
                         tuple(map(tuple, entries)), dict(base.constants), domain, dict(base.scalars))
    return parse_metric(render_metric(d))


def t11() -> MetricDefinition:
    """The homogeneous Sasaki–Einstein metric on ``T^{1,1}``."""
    coords = ["psi", "th1", "ph1", "th2", "ph2"]
    e = [["0"] * 5 for _ in range(5)]
    e[0][0] = "1/9"
    e[0][2] = e[2][0] = "cos(th1)/9"
    e[0][4] = e[4][0] = "cos(th2)/9"
    e[1][1] = e[3][3] = "1/6"
    e[2][2] = "cos(th1)^2/9 + sin(th1)^2/6"
    e[2][4] = e[4][2] = "cos(th1)*cos(th2)/9"
    e[4][4] = "cos(th2)^2/9 + sin(th2)^2/6"
    doms = [("psi", "-3", "3"), ("th1", _num(POLE_MARGIN), f"pi - {_num(POLE_MARGIN)}"),
            ("ph1", "-3", "3"), ("th2", _num(POLE_MARGIN), f"pi - {_num(POLE_MARGIN)}"), ("ph2", "-3", "3")]
    return parse_metric(_metric_text("t11", coords, e, domains=doms))


def schwarzschild_product(m: float = 1.0, r_range=(3.0, 10.0)) -> MetricDefinition:
    """Flat ``R^2`` times the Riemannian Schwarzschild metric."""
    if not m > 0:
        raise BadParams("schwarzschild_product: mass must be positive")
    lo, hi = map(float, r_range)
    if not (2 * m < lo < hi):
        raise BadParams("schwarzschild_product: r range must lie outside the horizon r = 2m")
    coords = ["x", "y", "tau", "r", "th", "ph"]
    diag = ["1", "1", "1 - 2*m/r", "1/(1 - 2*m/r)", "r^2", "r^2*sin(th)^2"]
    doms = [("r", repr(lo), repr(hi)), ("th", _num(POLE_MARGIN), f"pi - {_num(POLE_MARGIN)}"),
            ("ph", "-3", "3")]
    return parse_metric(_metric_text("r2_schwarzschild", coords, _diag(6, diag),
                                     constants=[("m", repr(float(m)))], domains=doms))


def _wrap_factor(node, sym):
    # exp(2*phi)*(entry)
    return ex.BinOp("*", ex.Call("exp", ex.BinOp("*", ex.Num(2.0), ex.Sym(sym))), node)


def _unwrap(node, sym):
    if (isinstance(node, ex.BinOp) and node.op == "*" and isinstance(node.left, ex.Call)
            and node.left.func == "exp" and node.left.arg == ex.BinOp("*", ex.Num(2.0), ex.Sym(sym))):
        return node.right
    return None


def _negation_of(a, b) -> bool:
    return (isinstance(a, ex.Neg) and a.arg == b) or (isinstance(b, ex.Neg) and b.arg == a)


def conformal_rescale(base: MetricDefinition, phi: str, name: str | None = None) -> MetricDefinition:
    """``e^{2φ} g``.  Rescaling again by ``−φ`` restores the original entries exactly."""
    node = ex.parse_expr(phi) if isinstance(phi, str) else phi
    # undo a previous rescale by the opposite factor
    for sym, prev in base.scalars.items():
        if _negation_of(prev, node):
            unwrapped = [[e if _is_zero(e) else _unwrap(e, sym) for e in row] for row in base.entries]
            if all(e is not None for row in unwrapped for e in row):
                scalars = {k: v for k, v in base.scalars.items() if k != sym}
                d = MetricDefinition(name or base.name, base.coords, tuple(map(tuple, unwrapped)),
                                     dict(base.constants), dict(base.domain), scalars)
                return parse_metric(render_metric(d))
    taken = set(base.coords) | set(base.constants) | set(base.scalars)
    sym = _fresh("phi", taken)
    entries = [[e if _is_zero(e) else _wrap_factor(e, sym) for e in row] for row in base.entries]
    scalars = dict(base.scalars)
    scalars[sym] = node
    d = MetricDefinition(name or f"{base.name}_rescaled", base.coords, tuple(map(tuple, entries)),
                         dict(base.constants), dict(base.domain), scalars)
    return parse_metric(render_metric(d))


def random_metric(n: int, seed: int = 0) -> MetricDefinition:
    """Diagonally dominant polynomial-plus-trig metric on ``(-1, 1)^n``."""
    if not 3 <= n <= 8:
        raise BadParams("random: dimension must be in 3..8")
    rng = np.random.default_rng([seed, n])
    xs = [f"x{i}" for i in range(n)]
    amp_off = 0.3 / (n - 1)
    e = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            amp = 0.3 if i == j else amp_off
            a, b = rng.uniform(-amp, amp, 2)
            c = rng.uniform(-1, 1)
            k, l, q = rng.integers(0, n, 3)
            term = f"{a:.4f}*{xs[k]}*{xs[l]} + {b:.4f}*sin({xs[q]} + {c:.4f})"
            e[i][j] = e[j][i] = ("2 + " + term) if i == j else term
    doms = [(x, "-1", "1") for x in xs]
    return parse_metric(_metric_text(f"random{n}_{seed}", xs, e, domains=doms))


def random_conformal_factor(coords, seed: int, amp: float = 0.3) -> str:
    """A smooth bounded scalar built from the given coordinates."""
    rng = np.random.default_rng([seed, 7919])
    c = list(coords)
    i, j, k = rng.integers(0, len(c), 3)
    a, b, d = rng.uniform(-amp, amp, 3)
    w = rng.uniform(0.5, 1.5)
    return (f"{a:.4f}*sin({w:.4f}*{c[i]})*cos({c[j]}) + {b:.4f}*{c[k]}^2"
            f" + {d:.4f}*cos({c[i]} + {c[j]})")


def s2xs2() -> MetricDefinition:
    """``S^2(1/sqrt 3) × S^2(1/sqrt 3)``: Einstein with ``Ric = 3g``."""
    s = sphere(2, 1 / math.sqrt(3))
    return product(s, s, name="s2xs2")


# --------------------------------------------------------------------------
# dispatch


def generate(spec: GeneratorSpec) -> MetricDefinition:
    p = dict(spec.params)

    def inner(key):
        v = p.get(key)
        if v is None:
            raise BadParams(f"{spec.kind}: missing parameter {key!r}")
        return generate(v) if isinstance(v, GeneratorSpec) else v

    try:
        if spec.kind == "flat":
            return flat(int(p.get("dim", 4)))
        if spec.kind == "sphere":
            return sphere(int(p.get("dim", 2)), float(p.get("r", 1.0)))
        if spec.kind == "product":
            return product(inner("a"), inner("b"))
        if spec.kind == "warped":
            return warped(inner("base"), p.get("f", "sinh"), tuple(p.get("interval", (0.5, 2.0))))
        if spec.kind == "t11":
            return t11()
        if spec.kind == "schwarzschild_product":
            return schwarzschild_product(float(p.get("m", 1.0)), tuple(p.get("r_range", (3.0, 10.0))))
        if spec.kind == "conformal_rescale":
            return conformal_rescale(inner("base"), inner("phi"))
        if spec.kind == "random":
            return random_metric(int(p.get("dim", 4)), int(p.get("seed", 0)))
    except (ValueError, TypeError, KeyError) as err:
        if isinstance(err, BadParams):
            raise
        raise BadParams(f"{spec.kind}: {err}") from err
    raise BadKind(f"unknown generator kind {spec.kind!r}; expected one of {', '.join(KINDS)}")


def warped_sinh() -> MetricDefinition:
    """The negative-Einstein warped product ``dt^2 + sinh(t)^2 (S^2×S^2)``."""
    return warped(s2xs2(), "sinh")


GOLDEN = {
    "flat4.metric": lambda: flat(4),
    "s4.metric": lambda: sphere(4, 1.0),
    "s2xs2.metric": s2xs2,
    "s2xs2_rescaled.metric": lambda: conformal_rescale(s2xs2(), "0.3*sin(a1)*cos(a2_2)"),
    "warped_sinh.metric": warped_sinh,
    "t11.metric": t11,
    "t11_rescaled.metric": lambda: conformal_rescale(t11(), "0.1*sin(th1)*cos(ph2) + 0.05*psi"),
    "r2_schwarzschild.metric": schwarzschild_product,
}


def write_golden(directory) -> list[Path]:
    out = []
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for fname, make in GOLDEN.items():
        path = directory / fname
        path.write_text(render_metric(make()), encoding="utf-8")
        out.append(path)
    return out


# --------------------------------------------------------------------------
# warped-product curvature identities


@dataclass
class WarpedIdentities:
    tangential: float  # R(X,Y)Z against base curvature and the f'^2/f^2 term
    radial_zero: float  # R(X,Y)∂_t
    radial: float  # R(X,∂_t)∂_t + (f''/f) X
    lemma_residual: float  # f'^2 + ρ f^2 − ρ_*
    rho: np.ndarray
    rho_base: np.ndarray


def warped_identities_check(spec: GeneratorSpec, samples: int = 10, seed: int = 42) -> WarpedIdentities:
    """Check the warped-product curvature identities and the Einstein warp equation at samples."""
    if spec.kind != "warped":
        raise BadKind(f"warped_identities_check needs a warped spec, got {spec.kind!r}")
    from .frame import sample_points

    base = spec.params["base"]
    base = generate(base) if isinstance(base, GeneratorSpec) else base
    d = generate(spec)
    pts = sample_points(d, samples, seed)
    cb = curvature_bundle(evaluate_metric_jets(d, pts), full=False)
    cb_base = curvature_bundle(evaluate_metric_jets(base, pts[:, 1:]), full=False)
    fj = scalar_jet(d, ex.parse_expr(WARP_FUNCTIONS.get(spec.params.get("f", "sinh"),
                                                        spec.params.get("f", "sinh"))), pts)
    f, f1, f2 = fj.value, fj.grad[:, 0], fj.hess[:, 0, 0]
    R = cb.riemann_up  # [i,j,k,l]
    Rb = cb_base.riemann_up
    gb = cb.g[:, 1:, 1:]
    eye = np.eye(d.dim - 1)
    model = Rb - ((f1 / f) ** 2)[:, None, None, None, None] * (
        np.einsum("pjk,il->pijkl", gb, eye) - np.einsum("pik,jl->pijkl", gb, eye))
    tang = np.abs(R[:, 1:, 1:, 1:, 1:] - model).max()
    # the normal part of R(X,Y)Z for tangential X,Y,Z must vanish as well
    tang = max(tang, np.abs(R[:, 1:, 1:, 1:, 0]).max())
    radial_zero = np.abs(R[:, 1:, 1:, 0, :]).max()
    radial = np.abs(R[:, 1:, 0, 0, 1:] + (f2 / f)[:, None, None] * eye).max()
    radial = max(radial, np.abs(R[:, 1:, 0, 0, 0]).max())
    lemma = np.abs(f1 ** 2 + cb.rho * f ** 2 - cb_base.rho).max()
    return WarpedIdentities(float(tang), float(radial_zero), float(radial), float(lemma), cb.rho, cb_base.rho)
