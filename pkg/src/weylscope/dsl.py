"""The ``.metric`` text format and metric evaluation at chart points.

A metric file is line oriented::

    # comment
    name round_sphere
    coords th ph
    const r = 1.0
    domain th in (0.1, pi - 0.1)
    scalar phi = 0.3*sin(th)
    g = [[r^2, 0],
         [0, r^2*sin(th)^2]]

The matrix may be given as full rows, as an upper triangle (row ``i`` holding
``n - i`` entries), or component-wise with ``g[i][j] = expr`` lines; missing
lower entries are filled in by symmetry.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import expr as ex
from .errors import (
    ArityError,
    DomainError,
    NotPositiveDefinite,
    ParseError,
    SymmetryError,
)
from .jet import MAX_ORDER, Jet3, JetEvaluator, _mul_coeffs, constant_value

MIN_DIM, MAX_DIM = 2, 8
PD_RTOL = 1e-10
DEFAULT_DOMAIN = (-1.0, 1.0)


@dataclass(frozen=True)
class MetricDefinition:
    """Immutable parsed chart: coordinates, constants, domain, entries, scalars."""

    name: str
    coords: tuple
    entries: tuple  # n x n tuple of expression trees, symmetric
    constants: dict = field(default_factory=dict)
    domain: dict = field(default_factory=dict)  # coord -> (lo, hi), open interval
    scalars: dict = field(default_factory=dict)  # name -> expression tree, in declaration order

    @property
    def dim(self) -> int:
        return len(self.coords)

    def bounds(self) -> np.ndarray:
        """``(n, 2)`` array of domain intervals; undeclared coordinates get (-1, 1)."""
        return np.array([self.domain.get(c, DEFAULT_DOMAIN) for c in self.coords], float)

    def scalar(self, name: str) -> ex.Expr:
        return self.scalars[name]

    def with_scalar(self, name: str, node: ex.Expr) -> "MetricDefinition":
        scalars = dict(self.scalars)
        scalars[name] = node
        return MetricDefinition(self.name, self.coords, self.entries, dict(self.constants),
                                dict(self.domain), scalars)

    def evaluator(self, point, order=MAX_ORDER) -> JetEvaluator:
        return JetEvaluator(self.coords, point, self.constants, self.scalars, order)

    def text_hash(self) -> str:
        return hashlib.sha256(render_metric(self).encode()).hexdigest()


# --------------------------------------------------------------------------
# parsing


def _strip_comment(line: str) -> str:
    k = line.find("#")
    return line if k < 0 else line[:k]


def _bracket_balance(text: str) -> int:
    return text.count("[") - text.count("]")


def _logical_lines(text: str):
    """Yield ``(lineno, col0, content)``; a ``g =`` matrix may span lines."""
    raw = text.splitlines()
    i = 0
    while i < len(raw):
        body = _strip_comment(raw[i])
        start = i
        if body.strip():
            pieces = [(i + 1, body)]
            depth = _bracket_balance(body)
            while depth > 0 and i + 1 < len(raw):
                i += 1
                nxt = _strip_comment(raw[i])
                pieces.append((i + 1, nxt))
                depth += _bracket_balance(nxt)
            if depth != 0:
                raise ParseError("unbalanced brackets in matrix literal", start + 1)
            yield pieces
        i += 1


def _tokens_of(pieces):
    toks = []
    for lineno, body in pieces:
        toks.extend(ex.tokenize(body, lineno)[:-1])
    last_line, last_body = pieces[-1]
    toks.append(ex.Token("end", "", last_line, len(last_body) + 1))
    return ex.TokenStream(toks)


def _expect_name(ts, what):
    tok = ts.next()
    if tok.kind != "name":
        raise ParseError(f"expected {what}", tok.line, tok.col)
    return tok


def _expect_end(ts):
    tok = ts.peek()
    if tok.kind != "end":
        raise ParseError(f"unexpected {tok.text!r}", tok.line, tok.col)


def _parse_matrix(ts):
    """``[[e, e], [e, e]]`` -> list of rows of (expr, token)."""
    ts.expect("[")
    rows = []
    while True:
        tok = ts.peek()
        ts.expect("[")
        row = []
        while True:
            start = ts.peek()
            row.append((ex.parse_expr_tokens(ts), start))
            if not ts.accept(","):
                break
        ts.expect("]")
        rows.append((row, tok))
        if not ts.accept(","):
            break
    ts.expect("]")
    return rows


def parse_metric(text: str) -> MetricDefinition:
    """Parse ``.metric`` source into a :class:`MetricDefinition`."""
    name = "unnamed"
    coords = None
    constants = {}
    domain = {}
    scalars = {}
    literal = None
    literal_tok = None
    components = {}

    for pieces in _logical_lines(text):
        ts = _tokens_of(pieces)
        head = ts.next()
        if head.kind != "name":
            raise ParseError("expected a section keyword", head.line, head.col)
        kw = head.text
        if kw == "name":
            lineno, body = pieces[0]
            name = body.strip()[len("name"):].strip() or name
            continue
        if kw == "coords":
            if coords is not None:
                raise ParseError("coords declared twice", head.line, head.col)
            coords = []
            while ts.peek().kind == "name":
                coords.append(ts.next().text)
            _expect_end(ts)
            if len(set(coords)) != len(coords):
                raise ParseError("duplicate coordinate name", head.line, head.col)
            if not MIN_DIM <= len(coords) <= MAX_DIM:
                raise ArityError(f"chart dimension must be in {MIN_DIM}..{MAX_DIM}, got {len(coords)}",
                                 head.line, head.col)
            continue
        if kw == "const":
            tok = _expect_name(ts, "constant name")
            ts.expect("=")
            node = ex.parse_expr_tokens(ts)
            _expect_end(ts)
            _check_reserved(tok, coords)
            try:
                constants[tok.text] = constant_value(node, constants)
            except Exception as err:
                raise ParseError(f"constant {tok.text!r}: {err}", tok.line, tok.col) from err
            continue
        if kw == "domain":
            tok = _expect_name(ts, "coordinate name")
            word = ts.next()
            if word.text != "in":
                raise ParseError("expected 'in'", word.line, word.col)
            ts.expect("(")
            lo = ex.parse_expr_tokens(ts)
            ts.expect(",")
            hi = ex.parse_expr_tokens(ts)
            ts.expect(")")
            _expect_end(ts)
            lo, hi = constant_value(lo, constants), constant_value(hi, constants)
            if not lo < hi:
                raise ParseError("empty domain interval", tok.line, tok.col)
            domain[tok.text] = (lo, hi)
            continue
        if kw == "scalar":
            tok = _expect_name(ts, "scalar name")
            ts.expect("=")
            node = ex.parse_expr_tokens(ts)
            _expect_end(ts)
            _check_reserved(tok, coords)
            scalars[tok.text] = node
            continue
        if kw == "g":
            if ts.accept("["):
                i = _index_literal(ts)
                ts.expect("]")
                ts.expect("[")
                j = _index_literal(ts)
                ts.expect("]")
                ts.expect("=")
                node = ex.parse_expr_tokens(ts)
                _expect_end(ts)
                key = (min(i, j), max(i, j))
                if key in components and components[key] != node:
                    raise SymmetryError(f"g[{i}][{j}] conflicts with its transpose", head.line, head.col)
                components[key] = node
                continue
            ts.expect("=")
            literal_tok = head
            literal = _parse_matrix(ts)
            _expect_end(ts)
            continue
        raise ParseError(f"unknown section {kw!r}", head.line, head.col)

    if coords is None:
        raise ParseError("missing 'coords' line")
    n = len(coords)
    for c in domain:
        if c not in coords:
            raise ParseError(f"domain given for unknown coordinate {c!r}")
    if literal is not None and components:
        raise ParseError("metric given both as matrix literal and component-wise")
    if literal is None and not components:
        raise ParseError("missing metric 'g'")

    entries = [[None] * n for _ in range(n)]
    if literal is not None:
        if len(literal) != n:
            raise ArityError(f"matrix has {len(literal)} rows, chart has {n} coordinates",
                             literal_tok.line, literal_tok.col)
        full = all(len(row) == n for row, _ in literal)
        upper = all(len(row) == n - i for i, (row, _) in enumerate(literal))
        if not (full or upper):
            tok = literal[0][1]
            raise ArityError("rows must be full (n entries) or an upper triangle (n - i entries)",
                             tok.line, tok.col)
        for i, (row, _) in enumerate(literal):
            for k, (node, tok) in enumerate(row):
                j = k if full else i + k
                entries[i][j] = (node, tok)
        for i in range(n):
            for j in range(i + 1, n):
                up, lo = entries[i][j], entries[j][i]
                if lo is not None and up[0] != lo[0]:
                    tok = lo[1]
                    raise SymmetryError(
                        f"g[{i}][{j}] = {ex.render(up[0])} but g[{j}][{i}] = {ex.render(lo[0])}",
                        tok.line, tok.col)
                entries[j][i] = up
        entries = [[e[0] for e in row] for row in entries]
    else:
        for (i, j), node in components.items():
            if not (0 <= i < n and 0 <= j < n):
                raise ArityError(f"component g[{i}][{j}] outside a {n}x{n} matrix")
        zero = ex.Num(0.0)
        for i in range(n):
            for j in range(i, n):
                node = components.get((i, j), zero)
                entries[i][j] = entries[j][i] = node

    defn = MetricDefinition(name, tuple(coords), tuple(tuple(r) for r in entries),
                            constants, domain, scalars)
    _check_symbols(defn)
    return defn


def _index_literal(ts) -> int:
    tok = ts.next()
    if tok.kind != "num" or not tok.text.isdigit():
        raise ParseError("expected an integer index", tok.line, tok.col)
    return int(tok.text)


def _check_reserved(tok, coords):
    if (coords and tok.text in coords) or tok.text in ex.FUNCTIONS:
        raise ParseError(f"{tok.text!r} is already a coordinate or function name", tok.line, tok.col)


def _check_symbols(defn: MetricDefinition):
    known = set(defn.coords) | set(defn.constants) | set(ex.BUILTIN_CONSTANTS) | set(defn.scalars)
    nodes = [e for row in defn.entries for e in row] + list(defn.scalars.values())
    for node in nodes:
        for name in ex.free_symbols(node):
            if name not in known:
                pos = ex.first_position(node, name) or (None, None)
                raise ParseError(f"undeclared identifier {name!r}", *pos)


# --------------------------------------------------------------------------
# rendering


def _fmt_float(v: float) -> str:
    return repr(float(v))


def render_metric(defn: MetricDefinition) -> str:
    """Canonical text; ``parse_metric(render_metric(d)) == d``."""
    lines = [f"name {defn.name}", "coords " + " ".join(defn.coords)]
    for k, v in defn.constants.items():
        lines.append(f"const {k} = {_fmt_float(v)}")
    for c in defn.coords:
        if c in defn.domain:
            lo, hi = defn.domain[c]
            lines.append(f"domain {c} in ({_fmt_float(lo)}, {_fmt_float(hi)})")
    for k, node in defn.scalars.items():
        lines.append(f"scalar {k} = {ex.render(node)}")
    rows = ["[" + ", ".join(ex.render(e) for e in row) + "]" for row in defn.entries]
    lines.append("g = [" + rows[0] + ("," if len(rows) > 1 else "]"))
    for k, row in enumerate(rows[1:], start=1):
        lines.append("     " + row + ("," if k < len(rows) - 1 else "]"))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# evaluation


def _jet_matmul(b, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Matrix product of jet-valued matrices, coefficient arrays ``(..., n, n, m)``."""
    prod = _mul_coeffs(b, x[..., :, :, None, :], y[..., None, :, :, :])
    return prod.sum(axis=-3)


@dataclass
class MetricJet:
    """Metric components as jets at a (possibly batched) point.

    ``g`` is a :class:`Jet3` whose batch shape ends in ``(n, n)``.
    """

    point: np.ndarray
    g: Jet3
    g_inv: np.ndarray

    @property
    def dim(self) -> int:
        return self.point.shape[-1]

    @property
    def values(self) -> np.ndarray:
        return self.g.value

    @cached_property
    def g_inv_jets(self) -> Jet3:
        """Inverse metric propagated through jet arithmetic (Neumann series)."""
        b = self.g.basis
        a0 = np.zeros(self.g_inv.shape + (b.size,))
        a0[..., 0] = self.g_inv
        d = self.g.coeffs.copy()
        d[..., 0] = 0.0
        step = -_jet_matmul(b, a0, d)
        term = a0
        total = a0.copy()
        for _ in range(b.order):
            term = _jet_matmul(b, step, term)
            total = total + term
        return Jet3(total, self.g.dim, self.g.order)


def evaluate_metric_jets(defn: MetricDefinition, point, order: int = MAX_ORDER,
                         check_domain: bool = True) -> MetricJet:
    """Evaluate every independent metric entry as a jet at ``point``.

    ``point`` may carry leading batch axes.  Raises :class:`NotPositiveDefinite`
    when the smallest eigenvalue is below ``1e-10`` times the largest.
    """
    point = np.asarray(point, dtype=float)
    n = defn.dim
    if point.shape[-1] != n:
        raise ValueError(f"point has {point.shape[-1]} components, chart has {n}")
    if check_domain:
        check_in_domain(defn, point)
    ev = defn.evaluator(point, order)
    b = ev.vars[defn.coords[0]].basis
    coeffs = np.zeros(point.shape[:-1] + (n, n, b.size))
    cache = {}
    for i in range(n):
        for j in range(i, n):
            node = defn.entries[i][j]
            if node not in cache:
                cache[node] = ev(node).coeffs
            coeffs[..., i, j, :] = coeffs[..., j, i, :] = cache[node]
    g = Jet3(coeffs, n, order)
    values = g.value
    eig = np.linalg.eigvalsh(values)
    lo, hi = eig[..., 0], eig[..., -1]
    bad = ~(lo > PD_RTOL * np.abs(hi))
    if np.any(bad):
        where = np.argwhere(bad)[0] if bad.ndim else ()
        raise NotPositiveDefinite(
            f"metric {defn.name!r} not positive definite at {point[tuple(where)].tolist()} "
            f"(eigenvalues {eig[tuple(where)].tolist()})")
    return MetricJet(point, g, np.linalg.inv(values))


def check_in_domain(defn: MetricDefinition, point) -> None:
    point = np.asarray(point, dtype=float)
    for k, c in enumerate(defn.coords):
        if c in defn.domain:
            lo, hi = defn.domain[c]
            x = point[..., k]
            if np.any((x <= lo) | (x >= hi)):
                raise DomainError(f"coordinate {c} leaves its domain ({lo}, {hi})")


def scalar_jet(defn: MetricDefinition, node, point, order: int = MAX_ORDER) -> Jet3:
    """Jet of an arbitrary expression (or declared scalar name) over the chart."""
    if isinstance(node, str):
        node = defn.scalars[node] if node in defn.scalars else ex.parse_expr(node)
    return defn.evaluator(np.asarray(point, float), order)(node)


def load_metric(path) -> MetricDefinition:
    with open(path, encoding="utf-8") as fh:
        return parse_metric(fh.read())
