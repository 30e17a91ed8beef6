"""Truncated Taylor jets with a small reverse-mode tape.

A :class:`Jet4` carries a field value together with its first time derivative
and its first four spatial derivatives. Slots may hold python scalars, numpy
arrays (evaluated point-wise over a batch) or :class:`Var` nodes recorded on a
:class:`Tape`. The literal ``0.0`` in a slot is treated as a structural zero
and short-circuits arithmetic, which keeps low-order problems cheap.

Reverse mode runs over the jet-forward computation: every jet slot is an
ordinary taped array, so parameter gradients of any scalar built from jet
components come out of one backward sweep.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Jet4",
    "Tape",
    "TapeError",
    "Var",
    "grad_params",
    "jet_add",
    "jet_compose",
    "jet_cos",
    "jet_exp",
    "jet_linear",
    "jet_mul",
    "jet_recip",
    "jet_scale",
    "jet_sin",
    "jet_sub",
    "jet_tanh",
    "value_of",
]


class TapeError(RuntimeError):
    """Raised when a reverse pass is requested on an unusable tape."""


# ---------------------------------------------------------------------------
# tape
# ---------------------------------------------------------------------------


class Tape:
    """Linear record of array operations for one forward + reverse pass.

    The tape is single-writer. ``reset`` drops all records and invalidates
    every node produced before it; calling it twice is harmless.
    """

    def __init__(self):
        self._ops: list[tuple[tuple, tuple[int, ...], Callable]] = []
        self._count = 0
        self._params: list[Var] = []
        self._keyed: dict = {}
        self.generation = 0

    @property
    def n_params(self) -> int:
        return len(self._params)

    @property
    def n_ops(self) -> int:
        return len(self._ops)

    def param(self, value, key=None) -> "Var":
        """Register a parameter slot (a leaf whose gradient is reported).

        Registering again under the same ``key`` returns the existing slot, so
        several forward passes through one network share their gradients.
        """
        if key is not None and key in self._keyed:
            return self._keyed[key]
        v = self._new(np.asarray(value, dtype=np.float64))
        self._params.append(v)
        if key is not None:
            self._keyed[key] = v
        return v

    def reset(self) -> None:
        self._ops = []
        self._params = []
        self._keyed = {}
        self._count = 0
        self.generation += 1

    def _new(self, value) -> "Var":
        v = Var(value, self, self._count)
        self._count += 1
        return v

    def record(self, inputs: Sequence, values: Sequence, vjp: Callable) -> list["Var"]:
        """Append an op with the given inputs and output values.

        ``vjp(out_grads)`` receives one cotangent per output (``None`` when an
        output received no gradient) and returns one cotangent per input.
        """
        outs = [self._new(val) for val in values]
        self._ops.append((tuple(inputs), tuple(o.index for o in outs), vjp))
        return outs


def _unbroadcast(g, shape):
    if np.shape(g) == tuple(shape):
        return g
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def value_of(x):
    """Raw numeric value of a Var, array or scalar."""
    return x.value if isinstance(x, Var) else x


def _tape_of(*xs) -> Tape:
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise TapeError("operands recorded on different tapes")
    return tape


class Var:
    """Array-valued node on a :class:`Tape`."""

    __slots__ = ("value", "tape", "index", "generation")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, value, tape: Tape, index: int):
        self.value = value
        self.tape = tape
        self.index = index
        self.generation = tape.generation

    def __repr__(self):
        return f"Var(shape={np.shape(self.value)}, index={self.index})"

    @property
    def shape(self):
        return np.shape(self.value)

    # binary ops -----------------------------------------------------------

    def __add__(self, other):
        tape = _tape_of(self, other)
        a, b = value_of(self), value_of(other)
        sa, sb = np.shape(a), np.shape(b)

        def vjp(gs):
            g = gs[0]
            return _unbroadcast(g, sa), _unbroadcast(g, sb)

        return tape.record((self, other), (a + b,), vjp)[0]

    __radd__ = __add__

    def __sub__(self, other):
        tape = _tape_of(self, other)
        a, b = value_of(self), value_of(other)
        sa, sb = np.shape(a), np.shape(b)

        def vjp(gs):
            g = gs[0]
            return _unbroadcast(g, sa), _unbroadcast(-g, sb)

        return tape.record((self, other), (a - b,), vjp)[0]

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        tape = _tape_of(self, other)
        a, b = value_of(self), value_of(other)
        sa, sb = np.shape(a), np.shape(b)

        def vjp(gs):
            g = gs[0]
            return _unbroadcast(g * b, sa), _unbroadcast(g * a, sb)

        return tape.record((self, other), (a * b,), vjp)[0]

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise TypeError("division by a taped value is not supported")
        return self * (1.0 / other)

    def __neg__(self):
        a = self.value
        return self.tape.record((self,), (-a,), lambda gs: (-gs[0],))[0]

    def __pow__(self, n):
        if not isinstance(n, int) or n < 1:
            raise TypeError("only positive integer powers are supported")
        a = self.value
        return self.tape.record(
            (self,), (a**n,), lambda gs: (gs[0] * n * a ** (n - 1),)
        )[0]

    def __matmul__(self, other):
        tape = _tape_of(self, other)
        a, b = value_of(self), value_of(other)

        def vjp(gs):
            g = gs[0]
            return g @ np.swapaxes(b, -1, -2), np.swapaxes(a, -1, -2) @ g

        return tape.record((self, other), (a @ b,), vjp)[0]

    def __rmatmul__(self, other):
        a, b = other, self.value

        def vjp(gs):
            return None, np.swapaxes(a, -1, -2) @ gs[0]

        return self.tape.record((other, self), (a @ b,), vjp)[0]

    def __getitem__(self, key):
        """Basic (non-fancy) indexing only."""
        a = self.value

        def vjp(gs):
            g = np.zeros_like(a)
            g[key] = gs[0]
            return (g,)

        return self.tape.record((self,), (a[key],), vjp)[0]

    # reductions -----------------------------------------------------------

    def sum(self):
        a = self.value
        return self.tape.record(
            (self,), (np.sum(a),), lambda gs: (np.broadcast_to(gs[0], np.shape(a)),)
        )[0]

    def mean(self):
        n = np.size(self.value)
        return self.sum() * (1.0 / n)


def grad_params(loss: Var, tape: Tape | None = None) -> np.ndarray:
    """Gradient of a taped scalar with respect to every parameter slot.

    Returns one flat float64 vector, parameters concatenated in registration
    order (each raveled row-major).
    """
    if not isinstance(loss, Var):
        raise TapeError("loss is not a taped value")
    tape = loss.tape if tape is None else tape
    if loss.tape is not tape:
        raise TapeError("loss was recorded on a different tape")
    if loss.generation != tape.generation or loss.index >= tape._count:
        raise TapeError("tape was reset after the loss was recorded")
    if np.size(loss.value) != 1:
        raise TapeError("loss must be a scalar")

    grads: dict[int, object] = {loss.index: np.ones_like(loss.value)}
    for inputs, outs, vjp in reversed(tape._ops):
        if outs and outs[0] > loss.index:
            continue
        gs = [grads.pop(i, None) for i in outs]
        if all(g is None for g in gs):
            continue
        in_grads = vjp(gs)
        for x, g in zip(inputs, in_grads):
            if g is None or not isinstance(x, Var):
                continue
            prev = grads.get(x.index)
            grads[x.index] = g if prev is None else prev + g
    out = [
        np.asarray(grads.get(p.index, np.zeros(np.shape(p.value))), dtype=np.float64).ravel()
        for p in tape._params
    ]
    return np.concatenate(out) if out else np.zeros(0)


# ---------------------------------------------------------------------------
# structural-zero arithmetic helpers
# ---------------------------------------------------------------------------


def _zero(x) -> bool:
    # only python literals count; numpy scalars are real values
    return type(x) in (int, float) and x == 0


def _add(*xs):
    acc = 0.0
    for x in xs:
        if _zero(x):
            continue
        acc = x if _zero(acc) else acc + x
    return acc


def _mul(*xs):
    for x in xs:
        if _zero(x):
            return 0.0
    acc = xs[0]
    for x in xs[1:]:
        acc = acc * x
    return acc


def _neg(x):
    return 0.0 if _zero(x) else -x


# ---------------------------------------------------------------------------
# Jet4
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Jet4:
    """Value, time derivative and spatial derivatives of orders 1-4."""

    u: object
    ut: object = 0.0
    ux: object = 0.0
    uxx: object = 0.0
    uxxx: object = 0.0
    uxxxx: object = 0.0

    @classmethod
    def const(cls, c) -> "Jet4":
        return cls(c)

    @classmethod
    def seed_x(cls, x) -> "Jet4":
        """Jet of the identity map in x."""
        return cls(x, 0.0, np.ones_like(x, dtype=np.float64) if np.ndim(x) else 1.0)

    @classmethod
    def seed_t(cls, t) -> "Jet4":
        return cls(t, np.ones_like(t, dtype=np.float64) if np.ndim(t) else 1.0)

    @property
    def xs(self) -> tuple:
        """Spatial Taylor data ``(u, ux, uxx, uxxx, uxxxx)``."""
        return (self.u, self.ux, self.uxx, self.uxxx, self.uxxxx)

    def slots(self) -> tuple:
        return tuple(getattr(self, f.name) for f in fields(self))

    def values(self) -> tuple:
        """Raw numeric slots (structural zeros kept as 0.0)."""
        return tuple(value_of(s) for s in self.slots())

    def map(self, fn) -> "Jet4":
        return Jet4(*(0.0 if _zero(s) else fn(s) for s in self.slots()))

    def truncate(self, order: int) -> "Jet4":
        """Drop spatial slots above ``order`` (replaced by structural zeros)."""
        s = list(self.slots())
        for k in range(order + 1, 5):
            s[k + 1] = 0.0
        return Jet4(*s)

    def __getitem__(self, key) -> "Jet4":
        return self.map(lambda s: s[key])

    def __add__(self, other):
        return jet_add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return jet_sub(self, other)

    def __rsub__(self, other):
        return jet_add(jet_scale(self, -1.0), other)

    def __neg__(self):
        return jet_scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Jet4):
            return jet_mul(self, other)
        return jet_scale(self, other)

    __rmul__ = __mul__


def _as_jet(a) -> Jet4:
    return a if isinstance(a, Jet4) else Jet4(a)


def jet_add(a, b) -> Jet4:
    a, b = _as_jet(a), _as_jet(b)
    return Jet4(*(_add(x, y) for x, y in zip(a.slots(), b.slots())))


def jet_sub(a, b) -> Jet4:
    a, b = _as_jet(a), _as_jet(b)
    return Jet4(*(_add(x, _neg(y)) for x, y in zip(a.slots(), b.slots())))


def jet_scale(a: Jet4, c) -> Jet4:
    """Multiply every slot by a constant (scalar or array, not a jet)."""
    return Jet4(*(_mul(s, c) for s in a.slots()))


def _mul2(a: Jet4, b: Jet4) -> Jet4:
    a0, a1, a2, a3, a4 = a.xs
    b0, b1, b2, b3, b4 = b.xs
    return Jet4(
        _mul(a0, b0),
        _add(_mul(a0, b.ut), _mul(a.ut, b0)),
        _add(_mul(a0, b1), _mul(a1, b0)),
        _add(_mul(a0, b2), _mul(2.0, a1, b1), _mul(a2, b0)),
        _add(_mul(a0, b3), _mul(3.0, a1, b2), _mul(3.0, a2, b1), _mul(a3, b0)),
        _add(
            _mul(a0, b4),
            _mul(4.0, a1, b3),
            _mul(6.0, a2, b2),
            _mul(4.0, a3, b1),
            _mul(a4, b0),
        ),
    )


def jet_mul(*jets) -> Jet4:
    """Product of jets by the Leibniz rule (order 4 in x, order 1 in t)."""
    if not jets:
        raise TypeError("jet_mul needs at least one operand")
    out = _as_jet(jets[0])
    for j in jets[1:]:
        out = _mul2(out, _as_jet(j))
    return out


def jet_linear(a: Jet4, weight, bias=None) -> Jet4:
    """Affine map ``a @ weight + bias`` applied slot-wise (bias on the value only)."""
    out = [0.0 if _zero(s) else s @ weight for s in a.slots()]
    if bias is not None:
        out[0] = out[0] + bias
    return Jet4(*out)


# ---------------------------------------------------------------------------
# composition with scalar functions (Faa di Bruno, order <= 4)
# ---------------------------------------------------------------------------


def _fdb(d, at, a1, a2, a3, a4):
    """Chain-rule slots given ``d = (f', f'', f''', f'''')`` at the base point."""
    d1, d2, d3, d4 = d
    a1s = _mul(a1, a1)
    gt = _mul(d1, at)
    g1 = _mul(d1, a1)
    g2 = _add(_mul(d2, a1s), _mul(d1, a2))
    g3 = _add(_mul(d3, a1s, a1), _mul(3.0, d2, a1, a2), _mul(d1, a3))
    g4 = _add(
        _mul(d4, a1s, a1s),
        _mul(6.0, d3, a1s, a2),
        _mul(3.0, d2, a2, a2),
        _mul(4.0, d2, a1, a3),
        _mul(d1, a4),
    )
    return gt, g1, g2, g3, g4


def _dot(*pairs):
    return _add(*(_mul(g, c) for g, c in pairs if g is not None))


def jet_compose(a: Jet4, derivs) -> Jet4:
    """Compose a scalar function with a jet.

    ``derivs(u)`` must return ``(f, f', f'', f''', f'''', f''''')`` evaluated at
    the raw value ``u``; the fifth derivative feeds the reverse pass only.
    """
    slots = a.slots()
    raw = [value_of(s) for s in slots]
    u, at, a1, a2, a3, a4 = raw
    d = derivs(u)
    f0 = d[0]
    gt, g1, g2, g3, g4 = _fdb(d[1:5], at, a1, a2, a3, a4)
    outs = (f0, gt, g1, g2, g3, g4)
    tape = _tape_of(*slots)
    if tape is None:
        return Jet4(*outs)

    live = [k for k, o in enumerate(outs) if not _zero(o)]

    def vjp(gs):
        bar = [None] * 6
        for k, g in zip(live, gs):
            bar[k] = g
        b0, bt, b1, b2, b3, b4 = bar
        shifted = _fdb(d[2:6], at, a1, a2, a3, a4)
        d1, d2, d3, d4 = d[1:5]
        a1s = _mul(a1, a1)
        gu = _dot((b0, d1), *zip((bt, b1, b2, b3, b4), shifted))
        g_at = _dot((bt, d1))
        g_a1 = _dot(
            (b1, d1),
            (b2, _mul(2.0, d2, a1)),
            (b3, _add(_mul(3.0, d3, a1s), _mul(3.0, d2, a2))),
            (b4, _add(_mul(4.0, d4, a1s, a1), _mul(12.0, d3, a1, a2), _mul(4.0, d2, a3))),
        )
        g_a2 = _dot(
            (b2, d1),
            (b3, _mul(3.0, d2, a1)),
            (b4, _add(_mul(6.0, d3, a1s), _mul(6.0, d2, a2))),
        )
        g_a3 = _dot((b3, d1), (b4, _mul(4.0, d2, a1)))
        g_a4 = _dot((b4, d1))
        res = []
        for s, g in zip(slots, (gu, g_at, g_a1, g_a2, g_a3, g_a4)):
            if not isinstance(s, Var) or _zero(g):
                res.append(None)
            else:
                res.append(_unbroadcast(g, np.shape(s.value)))
        return res

    new = tape.record(slots, [outs[k] for k in live], vjp)
    result = [0.0] * 6
    for k, v in zip(live, new):
        result[k] = v
    return Jet4(*result)


def _tanh_derivs(u):
    y = np.tanh(u)
    y2 = y * y
    s = 1.0 - y2
    return (
        y,
        s,
        -2.0 * y * s,
        s * (6.0 * y2 - 2.0),
        s * y * (16.0 - 24.0 * y2),
        s * (16.0 - 120.0 * y2 + 120.0 * y2 * y2),
    )


def _sin_derivs(u):
    s, c = np.sin(u), np.cos(u)
    return (s, c, -s, -c, s, c)


def _cos_derivs(u):
    s, c = np.sin(u), np.cos(u)
    return (c, -s, -c, s, c, -s)


def _exp_derivs(u):
    e = np.exp(u)
    return (e,) * 6


def _recip_derivs(u):
    r = 1.0 / np.asarray(u, dtype=np.float64)
    out = [r]
    for n in range(1, 6):
        out.append(out[-1] * (-n) * r)
    return tuple(out)


def jet_tanh(a: Jet4) -> Jet4:
    return jet_compose(a, _tanh_derivs)


def jet_sin(a: Jet4) -> Jet4:
    return jet_compose(a, _sin_derivs)


def jet_cos(a: Jet4) -> Jet4:
    return jet_compose(a, _cos_derivs)


def jet_exp(a: Jet4) -> Jet4:
    return jet_compose(a, _exp_derivs)


def jet_recip(a: Jet4) -> Jet4:
    """``1 / a``; the value slot must stay away from zero."""
    return jet_compose(a, _recip_derivs)


def faa_di_bruno_coefficients() -> dict[int, list[int]]:
    """Partition coefficients used above, per derivative order."""
    return {1: [1], 2: [1, 1], 3: [1, 3, 1], 4: [1, 4, 3, 6, 1]}

