import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from sppinn.diffjet import (
    Jet4,
    Tape,
    TapeError,
    faa_di_bruno_coefficients,
    grad_params,
    jet_add,
    jet_cos,
    jet_exp,
    jet_linear,
    jet_mul,
    jet_scale,
    jet_sin,
    jet_tanh,
    value_of,
)

finite = st.floats(-2.0, 2.0, allow_nan=False, allow_infinity=False)


def jet_of(vals):
    return Jet4(*(float(v) for v in vals))


def sym_jet(expr, x, at, ut=0.0):
    """Jet4 of a sympy expression in x evaluated at ``at``."""
    return Jet4(
        float(expr.subs(x, at)),
        ut,
        *(float(sp.diff(expr, x, k).subs(x, at)) for k in range(1, 5)),
    )


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------


def test_constant_product_has_zero_derivatives():
    out = jet_mul(Jet4.const(2.0), Jet4.const(3.0))
    assert value_of(out.u) == 6.0
    assert all(value_of(s) == 0.0 for s in out.slots()[1:])


@given(st.lists(finite, min_size=6, max_size=6), st.lists(finite, min_size=6, max_size=6))
def test_leibniz_exact(av, bv):
    a, b = jet_of(av), jet_of(bv)
    c = jet_mul(a, b)
    a0, at, a1, a2, a3, a4 = av
    b0, bt, b1, b2, b3, b4 = bv
    expected = [
        a0 * b0,
        a0 * bt + at * b0,
        a0 * b1 + a1 * b0,
        a0 * b2 + 2 * a1 * b1 + a2 * b0,
        a0 * b3 + 3 * a1 * b2 + 3 * a2 * b1 + a3 * b0,
        a0 * b4 + 4 * a1 * b3 + 6 * a2 * b2 + 4 * a3 * b1 + a4 * b0,
    ]
    np.testing.assert_allclose(c.values(), expected, rtol=1e-13, atol=1e-13)


@given(st.lists(finite, min_size=6, max_size=6), st.lists(finite, min_size=6, max_size=6), finite)
def test_add_and_scale_are_slotwise(av, bv, c):
    a, b = jet_of(av), jet_of(bv)
    np.testing.assert_allclose(jet_add(a, b).values(), np.add(av, bv), rtol=1e-15)
    np.testing.assert_allclose(jet_scale(a, c).values(), np.multiply(av, c), rtol=1e-15)


def test_cube_of_sine_matches_symbolic():
    x = sp.Symbol("x")
    a = sym_jet(sp.sin(x), x, 0.3)
    out = jet_mul(a, a, a)
    exact = [float(sp.diff(sp.sin(x) ** 3, x, k).subs(x, 0.3)) for k in range(5)]
    np.testing.assert_allclose([value_of(s) for s in out.xs], exact, rtol=1e-13)


def test_operators_dispatch():
    a = jet_of([1, 2, 3, 4, 5, 6])
    assert (a * a).values() == jet_mul(a, a).values()
    assert (2.0 * a).values() == jet_scale(a, 2.0).values()
    assert (a - a).values() == (0.0,) * 6
    assert (1.0 - a).u == 0.0


def test_jet_linear_bias_only_on_value():
    a = Jet4(np.array([[1.0, 2.0]]), np.array([[0.5, 0.0]]), np.array([[1.0, -1.0]]))
    W = np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 1.0]])
    out = jet_linear(a, W, np.array([10.0, 20.0, 30.0]))
    np.testing.assert_array_equal(out.u, [[11.0, 22.0, 34.0]])
    np.testing.assert_array_equal(out.ut, [[0.5, 0.0, 1.0]])
    np.testing.assert_array_equal(out.ux, [[1.0, -1.0, 1.0]])
    assert out.uxx == 0.0  # structural zero survives


# ---------------------------------------------------------------------------
# composition
# ---------------------------------------------------------------------------


def test_tanh_of_zero_constant():
    out = jet_tanh(Jet4.const(0.0))
    assert out.values() == (0.0,) * 6


def test_tanh_identity_slope():
    out = jet_tanh(Jet4.seed_x(0.0))
    assert value_of(out.ux) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize(
    "fn,sym",
    [(jet_tanh, sp.tanh), (jet_sin, sp.sin), (jet_cos, sp.cos), (jet_exp, sp.exp)],
)
@pytest.mark.parametrize("coeffs", [(0.3, -1.2, 0.7, 0.4), (-0.1, 0.5, -0.8, 1.1), (0.05, 2.0, 0.0, -0.3)])
def test_composition_matches_symbolic_polynomial(fn, sym, coeffs):
    x = sp.Symbol("x")
    poly = sum(c * x**k for k, c in enumerate(coeffs))
    at = 0.37
    a = sym_jet(poly, x, at)
    out = fn(a)
    exact = [float(sp.diff(sym(poly), x, k).subs(x, at)) for k in range(5)]
    np.testing.assert_allclose([value_of(s) for s in out.xs], exact, rtol=1e-12, atol=1e-12)


def test_tanh_fourth_derivative_finite_difference():
    rng = np.random.default_rng(3)
    c = rng.normal(size=4)
    x0 = 0.21

    def g(x):
        return np.tanh(c[0] + c[1] * x + c[2] * x**2 + c[3] * np.sin(x))

    x = sp.Symbol("x")
    inner = c[0] + c[1] * x + c[2] * x**2 + c[3] * sp.sin(x)
    out = jet_tanh(sym_jet(inner, x, x0))

    def d4(h):
        return (g(x0 + 2 * h) - 4 * g(x0 + h) + 6 * g(x0) - 4 * g(x0 - h) + g(x0 - 2 * h)) / h**4

    h = 1e-2
    rich = (4 * d4(h / 2) - d4(h)) / 3
    assert abs(value_of(out.uxxxx) - rich) <= 1e-4 * abs(rich)


def test_time_slot_chain_rule():
    out = jet_tanh(Jet4.seed_t(0.4))
    assert value_of(out.ut) == pytest.approx(1 - math.tanh(0.4) ** 2, rel=1e-15)
    assert out.ux == 0.0


def test_faa_di_bruno_table():
    table = faa_di_bruno_coefficients()
    assert table[4] == [1, 4, 3, 6, 1]
    # number of set partitions of n elements (Bell numbers)
    assert [sum(table[n]) for n in range(1, 5)] == [1, 2, 5, 15]


@given(st.lists(finite, min_size=6, max_size=6))
def test_outputs_finite(av):
    out = jet_tanh(jet_mul(jet_of(av), jet_of(av)))
    assert all(math.isfinite(value_of(s)) for s in out.slots())


# ---------------------------------------------------------------------------
# reverse mode
# ---------------------------------------------------------------------------


def test_grad_of_square():
    tape = Tape()
    th = tape.param(np.array([3.0]))
    loss = (th * th).sum()
    np.testing.assert_array_equal(grad_params(loss, tape), [6.0])


def test_grad_of_constant_is_zero():
    tape = Tape()
    th = tape.param(np.array([1.0, 2.0]))
    loss = (th * 0.0).sum() + 4.0
    np.testing.assert_array_equal(grad_params(loss, tape), [0.0, 0.0])


def test_reset_tape_rejected():
    tape = Tape()
    th = tape.param(np.array([3.0]))
    loss = (th * th).sum()
    tape.reset()
    tape.reset()  # idempotent
    with pytest.raises(TapeError):
        grad_params(loss, tape)


def test_foreign_or_untaped_loss_rejected():
    t1, t2 = Tape(), Tape()
    loss = (t1.param(np.array([1.0])) * 2.0).sum()
    with pytest.raises(TapeError):
        grad_params(loss, t2)
    with pytest.raises(TapeError):
        grad_params(1.0, t1)


def test_keyed_param_shared_between_passes():
    tape = Tape()
    w = np.array([2.0])
    a = tape.param(w, key="w")
    b = tape.param(w, key="w")
    assert a is b and tape.n_params == 1
    loss = (a * b).sum()
    np.testing.assert_allclose(grad_params(loss, tape), [4.0])


def _two_layer(params, x, shapes):
    W1, b1, W2, b2 = _split(params, shapes)
    return np.sum(np.tanh(x @ W1 + b1) @ W2 + b2) ** 2


def _split(flat, shapes):
    out, i = [], 0
    for s in shapes:
        n = int(np.prod(s))
        out.append(flat[i : i + n].reshape(s))
        i += n
    return out


def test_two_layer_gradient_finite_difference():
    rng = np.random.default_rng(7)
    shapes = [(3, 5), (5,), (5, 1), (1,)]
    flat = rng.normal(size=sum(int(np.prod(s)) for s in shapes))
    x = rng.normal(size=(4, 3))

    tape = Tape()
    W1, b1, W2, b2 = (tape.param(p) for p in _split(flat, shapes))
    h = jet_tanh(jet_linear(Jet4(x), W1, b1))
    out = jet_linear(h, W2, b2)
    loss = out.u.sum() ** 2
    g = grad_params(loss, tape)

    eps = 1e-6
    fd = np.array(
        [
            (_two_layer(flat + eps * e, x, shapes) - _two_layer(flat - eps * e, x, shapes)) / (2 * eps)
            for e in np.eye(flat.size)
        ]
    )
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9)


def test_gradient_through_jet_slots_directional_order():
    # loss built from every slot of a composed jet; FD directional error shrinks like h^2
    rng = np.random.default_rng(11)
    w0 = rng.normal(size=(1, 4))
    x = np.linspace(-1, 1, 7)[:, None]

    def build(w, tape=None):
        W = tape.param(w) if tape is not None else w
        h = jet_tanh(jet_linear(Jet4.seed_x(x), W))
        return sum(((s * s).sum() if not isinstance(s, float) else 0.0) for s in h.slots())

    tape = Tape()
    g = grad_params(build(w0, tape), tape)
    d = rng.normal(size=w0.size)
    exact = g @ d

    def f(w):
        return float(value_of(build(w)))

    errs = []
    for h in (1e-2, 5e-3):
        fd = (f(w0 + h * d.reshape(w0.shape)) - f(w0 - h * d.reshape(w0.shape))) / (2 * h)
        errs.append(abs(fd - exact))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradient_deterministic(seed):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(2, 3))
    x = rng.normal(size=(5, 2))

    def run():
        tape = Tape()
        out = jet_tanh(jet_linear(Jet4.seed_x(x), tape.param(w)))
        return grad_params((out.uxx * out.uxx).sum() + out.u.sum(), tape)

    assert np.array_equal(run(), run())
