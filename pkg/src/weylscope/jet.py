"""Truncated multivariate Taylor arithmetic ("jets") up to order 3.

A :class:`Jet3` stores the Taylor coefficients ``c_alpha`` of a scalar for every
multi-index ``|alpha| <= order`` (one slot per monomial, so the Hessian and the
third-order tensor are kept in symmetric-reduced form).  Coefficient arrays
carry arbitrary leading batch axes, so one jet can describe the same scalar at
many chart points at once; every operation is vectorised over the batch.

Derivatives are recovered as ``d^alpha f = alpha! * c_alpha``.
"""

from __future__ import annotations

import functools
import itertools
import math

import numpy as np

from . import expr as ex
from .errors import DivisionNearZero, DomainError, UnknownSymbol

MAX_ORDER = 3
TINY_DIVISOR = 1e-300


class Basis:
    """Monomial bookkeeping for ``dim`` variables truncated at ``order``."""

    def __init__(self, dim: int, order: int):
        if not 1 <= order <= MAX_ORDER:
            raise ValueError(f"jet order must be in 1..{MAX_ORDER}, got {order}")
        self.dim = dim
        self.order = order
        monos = []
        for deg in range(order + 1):
            for combo in itertools.combinations_with_replacement(range(dim), deg):
                alpha = [0] * dim
                for i in combo:
                    alpha[i] += 1
                monos.append(tuple(alpha))
        self.monomials = monos
        self.index = {a: k for k, a in enumerate(monos)}
        self.size = len(monos)
        self.degree = np.array([sum(a) for a in monos])
        self.factorial = np.array([math.prod(math.factorial(x) for x in a) for a in monos], float)

        ia, ib, ig = [], [], []
        for i, a in enumerate(monos):
            for j, b in enumerate(monos):
                if sum(a) + sum(b) <= order:
                    ia.append(i)
                    ib.append(j)
                    ig.append(self.index[tuple(x + y for x, y in zip(a, b))])
        self.ia = np.array(ia)
        self.ib = np.array(ib)
        scatter = np.zeros((len(ia), self.size))
        scatter[np.arange(len(ia)), ig] = 1.0
        self.scatter = scatter

        # positions of derivative tensors in coefficient storage
        self._deriv_index = {}
        for deg in range(1, order + 1):
            shape = (dim,) * deg
            idx = np.empty(shape, dtype=int)
            for multi in itertools.product(range(dim), repeat=deg):
                alpha = [0] * dim
                for i in multi:
                    alpha[i] += 1
                idx[multi] = self.index[tuple(alpha)]
            self._deriv_index[deg] = idx

    def derivative_index(self, deg: int) -> np.ndarray:
        return self._deriv_index[deg]

    def mono(self, alpha) -> int:
        return self.index[tuple(alpha)]


@functools.lru_cache(maxsize=None)
def basis(dim: int, order: int = MAX_ORDER) -> Basis:
    return Basis(dim, order)


def _mul_coeffs(b: Basis, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (x[..., b.ia] * y[..., b.ib]) @ b.scatter


class Jet3:
    """Truncated Taylor expansion of a scalar in ``dim`` chart variables.

    ``coeffs`` has shape ``batch + (basis.size,)``.
    """

    __array_priority__ = 100  # keep ndarray.__mul__ from swallowing jets
    __slots__ = ("coeffs", "basis")

    def __init__(self, coeffs, dim: int, order: int = MAX_ORDER):
        self.basis = basis(dim, order)
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.shape[-1] != self.basis.size:
            raise ValueError("coefficient array does not match the monomial basis")

    # -- construction ------------------------------------------------------
    @classmethod
    def constant(cls, value, dim: int, order: int = MAX_ORDER) -> "Jet3":
        value = np.asarray(value, dtype=float)
        b = basis(dim, order)
        c = np.zeros(value.shape + (b.size,))
        c[..., 0] = value
        return cls(c, dim, order)

    @classmethod
    def variable(cls, i: int, value, dim: int, order: int = MAX_ORDER) -> "Jet3":
        """Seed coordinate ``i`` at ``value``: grad = e_i, higher parts zero."""
        jet = cls.constant(value, dim, order)
        alpha = [0] * dim
        alpha[i] = 1
        jet.coeffs[..., jet.basis.mono(alpha)] = 1.0
        return jet

    @classmethod
    def seed(cls, point, order: int = MAX_ORDER) -> list["Jet3"]:
        """Coordinate jets for every chart variable; ``point`` is ``batch + (dim,)``."""
        point = np.asarray(point, dtype=float)
        dim = point.shape[-1]
        return [cls.variable(i, point[..., i], dim, order) for i in range(dim)]

    @classmethod
    def from_derivatives(cls, value, grad=None, hess=None, third=None, order=MAX_ORDER):
        value = np.asarray(value, dtype=float)
        if grad is None:
            raise ValueError("gradient is required to fix the dimension")
        grad = np.asarray(grad, dtype=float)
        dim = grad.shape[-1]
        b = basis(dim, order)
        c = np.zeros(value.shape + (b.size,))
        c[..., 0] = value
        for deg, arr in ((1, grad), (2, hess), (3, third)):
            if arr is None or deg > order:
                continue
            arr = np.asarray(arr, dtype=float)
            idx = b.derivative_index(deg)
            # every permutation writes the same slot; any representative will do
            flat_idx = idx.reshape(-1)
            flat = arr.reshape(arr.shape[: arr.ndim - deg] + (-1,))
            c[..., flat_idx] = flat
        return cls(c / b.factorial, dim, order)

    # -- views ---------------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def order(self) -> int:
        return self.basis.order

    @property
    def shape(self) -> tuple:
        return self.coeffs.shape[:-1]

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[..., 0]

    def derivative(self, deg: int) -> np.ndarray:
        """Full symmetric tensor of ``deg``-th partial derivatives."""
        if deg == 0:
            return self.value
        if deg > self.order:
            raise ValueError(f"jet of order {self.order} has no degree-{deg} part")
        idx = self.basis.derivative_index(deg)
        return self.coeffs[..., idx] * self.basis.factorial[idx]

    @property
    def grad(self) -> np.ndarray:
        return self.derivative(1)

    @property
    def hess(self) -> np.ndarray:
        return self.derivative(2)

    @property
    def third(self) -> np.ndarray:
        return self.derivative(3)

    def __getitem__(self, item) -> "Jet3":
        if not isinstance(item, tuple):
            item = (item,)
        return Jet3(self.coeffs[(*item, slice(None))], self.dim, self.order)

    def __repr__(self):
        return f"Jet3(dim={self.dim}, order={self.order}, value={self.value!r})"

    # -- arithmetic ------------------------------------------------------------
    def _like(self, coeffs) -> "Jet3":
        return Jet3(coeffs, self.dim, self.order)

    def _coerce(self, other) -> "Jet3":
        if isinstance(other, Jet3):
            if other.basis is not self.basis:
                raise ValueError("jets over different bases cannot be combined")
            return other
        return Jet3.constant(other, self.dim, self.order)

    def __add__(self, other):
        if not isinstance(other, Jet3):
            other = np.asarray(other, dtype=float)
            shape = np.broadcast_shapes(self.shape, other.shape) + (self.basis.size,)
            c = np.array(np.broadcast_to(self.coeffs, shape))
            c[..., 0] += other
            return self._like(c)
        return self._like(self.coeffs + self._coerce(other).coeffs)

    __radd__ = __add__

    def __neg__(self):
        return self._like(-self.coeffs)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet3):
            return self._like(self.coeffs * np.asarray(other, dtype=float)[..., None])
        other = self._coerce(other)
        return self._like(_mul_coeffs(self.basis, self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet3":
        a0 = self.value
        if np.any(np.abs(a0) < TINY_DIVISOR):
            raise DivisionNearZero("divisor value vanishes at the evaluation point")
        inv = 1.0 / a0
        # d^k/da^k (1/a) / k! = (-1)^k a^-(k+1)
        series = [inv * (-inv) ** k for k in range(self.order + 1)]
        return self._compose(series)

    def __truediv__(self, other):
        if not isinstance(other, Jet3):
            other = np.asarray(other, dtype=float)
            if np.any(np.abs(other) < TINY_DIVISOR):
                raise DivisionNearZero("division by a vanishing constant")
            return self * (1.0 / other)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Jet3):
            raise TypeError("jet exponents are not supported; use exp(b*log(a))")
        p = float(p)
        if p == int(p) and abs(p) <= 64:
            return _int_power(self, int(p))
        a0 = self.value
        if np.any(a0 <= 0):
            raise DomainError(f"non-integer power {p} of a non-positive value")
        series = []
        coef = 1.0
        for k in range(self.order + 1):
            series.append(coef * a0 ** (p - k) / math.factorial(k))
            coef *= p - k
        return self._compose(series)

    # -- composition with univariate functions --------------------------------
    def _compose(self, series) -> "Jet3":
        """Apply ``f`` given ``series[k] = f^(k)(a0)/k!`` at the value part."""
        delta = self.coeffs.copy()
        delta[..., 0] = 0.0
        out = np.zeros_like(self.coeffs)
        out[..., 0] = series[0]
        power = None
        for k in range(1, self.order + 1):
            power = delta if power is None else _mul_coeffs(self.basis, power, delta)
            out += np.asarray(series[k])[..., None] * power
        return self._like(out)


def _int_power(x: Jet3, p: int) -> Jet3:
    if p < 0:
        return _int_power(x, -p).reciprocal()
    result = Jet3.constant(np.ones(x.shape), x.dim, x.order)
    base = x
    while p:
        if p & 1:
            result = result * base
        p >>= 1
        if p:
            base = base * base
    return result


def _taylor_table(name: str, a0: np.ndarray) -> list:
    """``f^(k)(a0)/k!`` for k = 0..3."""
    if name == "exp":
        v = np.exp(a0)
        return [v, v, v / 2, v / 6]
    if name == "log":
        if np.any(a0 <= 0):
            raise DomainError("log of a non-positive value")
        r = 1.0 / a0
        return [np.log(a0), r, -r * r / 2, r ** 3 / 3]
    if name == "sqrt":
        if np.any(a0 <= 0):
            raise DomainError("sqrt of a non-positive value")
        s = np.sqrt(a0)
        return [s, 0.5 / s, -0.125 / s ** 3, 0.0625 / s ** 5]
    if name == "sin":
        s, c = np.sin(a0), np.cos(a0)
        return [s, c, -s / 2, -c / 6]
    if name == "cos":
        s, c = np.sin(a0), np.cos(a0)
        return [c, -s, -c / 2, s / 6]
    if name == "tan":
        t = np.tan(a0)
        u = 1 + t * t
        return [t, u, t * u, (2 * u * u + 4 * t * t * u) / 6]
    if name == "sinh":
        s, c = np.sinh(a0), np.cosh(a0)
        return [s, c, s / 2, c / 6]
    if name == "cosh":
        s, c = np.sinh(a0), np.cosh(a0)
        return [c, s, c / 2, s / 6]
    raise UnknownSymbol(f"unknown function {name!r}")


def apply(name: str, x: Jet3) -> Jet3:
    table = _taylor_table(name, x.value)
    return x._compose(table[: x.order + 1])


def exp(x):
    return apply("exp", x)


def log(x):
    return apply("log", x)


def sqrt(x):
    return apply("sqrt", x)


def sin(x):
    return apply("sin", x)


def cos(x):
    return apply("cos", x)


def tan(x):
    return apply("tan", x)


def sinh(x):
    return apply("sinh", x)


def cosh(x):
    return apply("cosh", x)


# --------------------------------------------------------------------------
# expression evaluation


def constant_value(node: ex.Expr, constants: dict) -> float:
    """Evaluate a coordinate-free expression to a float."""
    if isinstance(node, ex.Num):
        return node.value
    if isinstance(node, ex.Sym):
        if node.name in constants:
            return float(constants[node.name])
        if node.name in ex.BUILTIN_CONSTANTS:
            return ex.BUILTIN_CONSTANTS[node.name]
        raise UnknownSymbol(f"{node.name!r} is not a constant" + _where(node))
    if isinstance(node, ex.Neg):
        return -constant_value(node.arg, constants)
    if isinstance(node, ex.Call):
        a = constant_value(node.arg, constants)
        return float(_taylor_table(node.func, np.asarray(a))[0])
    if isinstance(node, ex.BinOp):
        a = constant_value(node.left, constants)
        b = constant_value(node.right, constants)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            if abs(b) < TINY_DIVISOR:
                raise DivisionNearZero("division by zero in constant expression" + _where(node))
            return a / b
        if a <= 0 and b != int(b):
            raise DomainError("non-integer power of a non-positive constant" + _where(node))
        return a ** b
    raise TypeError(node)


def _where(node) -> str:
    return f" at line {node.pos[0]}, column {node.pos[1]}" if node.pos else ""


class JetEvaluator:
    """Evaluates expression trees to jets at a (batched) chart point.

    ``env`` maps coordinate names to seed jets, constants to floats, and
    scalar-field names to expression trees (evaluated lazily and cached).
    """

    def __init__(self, coords, point, constants=None, scalars=None, order=MAX_ORDER):
        point = np.asarray(point, dtype=float)
        if point.shape[-1] != len(coords):
            raise ValueError(f"point has {point.shape[-1]} components, chart has {len(coords)}")
        self.coords = list(coords)
        self.dim = len(coords)
        self.order = order
        self.batch = point.shape[:-1]
        self.vars = dict(zip(self.coords, Jet3.seed(point, order)))
        self.constants = dict(constants or {})
        self.scalars = dict(scalars or {})
        self._scalar_cache = {}
        self._active = set()

    def const(self, value) -> Jet3:
        return Jet3.constant(np.full(self.batch, float(value)), self.dim, self.order)

    def symbol(self, node: ex.Sym) -> Jet3:
        name = node.name
        if name in self.vars:
            return self.vars[name]
        if name in self.constants:
            return self.const(self.constants[name])
        if name in self.scalars:
            if name not in self._scalar_cache:
                if name in self._active:
                    raise UnknownSymbol(f"scalar {name!r} is defined in terms of itself")
                self._active.add(name)
                self._scalar_cache[name] = self(self.scalars[name])
                self._active.discard(name)
            return self._scalar_cache[name]
        if name in ex.BUILTIN_CONSTANTS:
            return self.const(ex.BUILTIN_CONSTANTS[name])
        raise UnknownSymbol(f"undeclared identifier {name!r}" + _where(node))

    def __call__(self, node: ex.Expr) -> Jet3:
        if isinstance(node, ex.Num):
            return self.const(node.value)
        if isinstance(node, ex.Sym):
            return self.symbol(node)
        if isinstance(node, ex.Neg):
            return -self(node.arg)
        if isinstance(node, ex.Call):
            return apply(node.func, self(node.arg))
        if isinstance(node, ex.BinOp):
            left = self(node.left)
            if node.op == "^":
                p = self._exponent(node.right)
                return left ** p
            right = self(node.right)
            if node.op == "+":
                return left + right
            if node.op == "-":
                return left - right
            if node.op == "*":
                return left * right
            return left / right
        raise TypeError(node)

    def _exponent(self, node) -> float:
        names = ex.free_symbols(node)
        varying = names & (set(self.vars) | set(self.scalars))
        if varying:
            raise DomainError(
                "exponent must be constant, depends on " + ", ".join(sorted(varying)) + _where(node)
            )
        return constant_value(node, self.constants)


def jet_eval(node: ex.Expr, point, coords=None, constants=None, scalars=None, order=MAX_ORDER) -> Jet3:
    """Taylor jet of ``node`` at ``point``.

    ``coords`` defaults to ``x0, x1, ...`` when omitted; a bare scalar point is
    treated as a single coordinate named ``x``.
    """
    point = np.asarray(point, dtype=float)
    if point.ndim == 0:
        point = point[None]
        coords = coords or ["x"]
    if coords is None:
        coords = [f"x{i}" for i in range(point.shape[-1])]
    return JetEvaluator(coords, point, constants, scalars, order)(node)
