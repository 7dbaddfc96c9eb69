import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import fd_oracle, rel
from weylscope.errors import DivisionNearZero, DomainError, UnknownSymbol
from weylscope.expr import parse_expr
from weylscope.jet import Jet3, exp, jet_eval, log

XY = ("x", "y")


def ev(text, point, coords=XY):
    return jet_eval(parse_expr(text), np.asarray(point, float), coords=coords)


def test_cubic_monomial():
    j = ev("x^3", [2.0], ("x",))
    assert (float(j.value), float(j.grad[0]), float(j.hess[0, 0]), float(j.third[0, 0, 0])) == (8.0, 12.0, 12.0, 6.0)


def test_sine_maclaurin():
    j = ev("sin(x)", [0.0], ("x",))
    assert np.allclose([j.value, j.grad[0], j.hess[0, 0], j.third[0, 0, 0]], [0, 1, 0, -1], atol=1e-15)


def test_exp_product_against_finite_differences():
    p = np.array([0.3, 0.7])
    j = ev("exp(x*y)", p)
    val = lambda q: ev("exp(x*y)", q).value
    grad = lambda q: ev("exp(x*y)", q).grad
    hess = lambda q: ev("exp(x*y)", q).hess
    assert rel(j.grad, fd_oracle(val, p)) <= 1e-7
    assert rel(j.hess, fd_oracle(grad, p)) <= 1e-7
    assert rel(j.third, fd_oracle(hess, p)) <= 1e-7


def test_derivative_arrays_fully_symmetric():
    j = ev("sin(x*y^2) + x^3*y", [0.4, -0.2])
    assert np.array_equal(j.hess, j.hess.T)
    T = j.third
    for perm in [(1, 0, 2), (0, 2, 1), (2, 1, 0), (1, 2, 0), (2, 0, 1)]:
        assert np.array_equal(T, T.transpose(perm))


def test_seeded_variable():
    v = Jet3.variable(1, np.array([0.5]), 3)
    assert np.array_equal(v.grad[0], [0, 1, 0])
    assert not v.hess.any() and not v.third.any()


@pytest.mark.parametrize("text,err", [("1/(x-x)", DivisionNearZero), ("log(-1-x^2)", DomainError),
                                      ("sqrt(-1-x^2)", DomainError), ("z + x", UnknownSymbol)])
def test_evaluation_errors(text, err):
    with pytest.raises(err):
        ev(text, [0.3], ("x",))


def random_jet(rng, dim, positive=False):
    c = rng.standard_normal(Jet3.constant(0.0, dim).coeffs.shape[-1])
    if positive:
        c[0] = abs(c[0]) + 1.0
    return Jet3(c, dim)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4))
def test_distributive_law(seed, dim):
    rng = np.random.default_rng(seed)
    a, b, c = (random_jet(rng, dim) for _ in range(3))
    lhs, rhs = ((a + b) * c).coeffs, (a * c + b * c).coeffs
    assert np.abs(lhs - rhs).max() <= 1e-13 * max(1.0, np.abs(rhs).max())


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4))
def test_exp_log_inverse(seed, dim):
    a = random_jet(np.random.default_rng(seed), dim, positive=True)
    assert rel(exp(log(a)).coeffs, a.coeffs) <= 1e-12


LEAVES = st.sampled_from(["x", "y", "0.5", "1.3", "(x*y)"])


def _trees():
    return st.recursive(
        LEAVES,
        lambda kids: st.one_of(
            st.tuples(kids, st.sampled_from(["+", "-", "*"]), kids).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
            st.tuples(st.sampled_from(["sin", "cos", "exp", "tanh_free"]), kids).map(
                lambda t: f"{t[0]}({t[1]})" if t[0] != "tanh_free" else f"(1/(2 + ({t[1]})^2))"),
        ),
        max_leaves=6,
    )


@settings(max_examples=50, deadline=None)
@given(_trees(), st.floats(-0.8, 0.8), st.floats(-0.8, 0.8))
def test_chain_rule_against_finite_differences(text, x, y):
    p = np.array([x, y])
    f = lambda q: ev(text, q)
    j = f(p)
    scale = max(1.0, float(np.abs(j.grad).max()), float(np.abs(j.hess).max()))
    assert np.abs(j.grad - fd_oracle(lambda q: f(q).value, p)).max() <= 1e-6 * scale
    assert np.abs(j.hess - fd_oracle(lambda q: f(q).grad, p)).max() <= 1e-6 * scale
    t_scale = max(1.0, float(np.abs(j.third).max()))
    assert np.abs(j.third - fd_oracle(lambda q: f(q).hess, p)).max() <= 1e-6 * t_scale
