"""Scalar reverse-mode tape with second-order forward duals on top.

A :class:`Tape` records scalar operations into flat, index-addressed lists.
:class:`Dual2` carries ``(value, d1, d2)`` for one seeded input; when its
components are tape :class:`Var` objects the whole derivative propagation is
recorded, so :func:`reverse` differentiates u, u_x and u_xx with respect to
every registered parameter.

Usage::

    tape = Tape()
    p = tape.parameter(0.5)
    x = seed_input(tape, slot=0, seeded=0, value=0.3)
    u = tanh_node(x * p)
    grad = reverse(u.d2)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "NonFiniteError",
    "Tape",
    "Var",
    "Dual2",
    "seed_input",
    "tanh_node",
    "reverse",
]


class NonFiniteError(ArithmeticError):
    """A NaN or infinity showed up on the tape."""

    def __init__(self, message: str, node: int | None = None, op: str | None = None):
        super().__init__(message)
        self.node = node
        self.op = op


class Tape:
    def __init__(self):
        self.ops: list[str] = []
        self.args: list[tuple[int, ...]] = []
        self.partials: list[tuple[float, ...]] = []
        self.values: list[float] = []
        self.params: list[int] = []
        self.closed = False

    def __len__(self):
        return len(self.values)

    def clear(self):
        """Drop all nodes but keep the list objects for reuse."""
        for lst in (self.ops, self.args, self.partials, self.values, self.params):
            lst.clear()
        self.closed = False

    def close(self):
        self.closed = True

    def push(self, op: str, value: float, args=(), partials=()) -> "Var":
        if self.closed:
            raise RuntimeError("tape is closed for recording")
        self.ops.append(op)
        self.args.append(tuple(args))
        self.partials.append(tuple(partials))
        self.values.append(value)
        return Var(self, len(self.values) - 1)

    def parameter(self, value: float) -> "Var":
        v = self.push("param", float(value))
        self.params.append(v.index)
        return v

    def parameters(self, values: Sequence[float]) -> list["Var"]:
        return [self.parameter(v) for v in values]

    def input(self, value: float) -> "Var":
        return self.push("input", float(value))

    def dot(self, coeffs: Sequence["Var"], xs: Sequence, bias=None) -> "Var":
        """sum_i coeffs[i] * xs[i] (+ bias) as one node; xs may mix Vars and floats."""
        args, partials = [], []
        total = 0.0
        for w, x in zip(coeffs, xs):
            if isinstance(x, Var):
                total += w.value * x.value
                args += [w.index, x.index]
                partials += [x.value, w.value]
            elif x != 0.0:
                total += w.value * x
                args.append(w.index)
                partials.append(x)
        if bias is not None:
            total += bias.value
            args.append(bias.index)
            partials.append(1.0)
        if not args:
            return 0.0
        return self.push("dot", total, args, partials)

    def mean_of_squares(self, xs: Sequence["Var"]) -> "Var":
        if not xs:
            raise ValueError("mean over an empty list")
        n = len(xs)
        value = math.fsum(x.value * x.value for x in xs) / n
        return self.push("msq", value, [x.index for x in xs], [2.0 * x.value / n for x in xs])


class Var:
    """Handle to one scalar node on a tape."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> float:
        return self.tape.values[self.index]

    def __repr__(self):
        return f"Var(#{self.index}={self.value!r})"

    def __float__(self):
        return self.value

    def __add__(self, other):
        if isinstance(other, Var):
            return self.tape.push("add", self.value + other.value, (self.index, other.index), (1.0, 1.0))
        if other == 0.0:
            return self
        return self.tape.push("shift", self.value + other, (self.index,), (1.0,))

    __radd__ = __add__

    def __neg__(self):
        return self.tape.push("neg", -self.value, (self.index,), (-1.0,))

    def __sub__(self, other):
        if isinstance(other, Var):
            return self.tape.push("sub", self.value - other.value, (self.index, other.index), (1.0, -1.0))
        if other == 0.0:
            return self
        return self.tape.push("shift", self.value - other, (self.index,), (1.0,))

    def __rsub__(self, other):
        return self.tape.push("rsub", other - self.value, (self.index,), (-1.0,))

    def __mul__(self, other):
        if isinstance(other, Var):
            return self.tape.push(
                "mul", self.value * other.value, (self.index, other.index), (other.value, self.value)
            )
        if other == 1.0:
            return self
        if other == 0.0:
            return 0.0
        return self.tape.push("scale", self.value * other, (self.index,), (other,))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            q = self.value / other.value
            return self.tape.push("div", q, (self.index, other.index), (1.0 / other.value, -q / other.value))
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        q = other / self.value
        return self.tape.push("rdiv", q, (self.index,), (-q / self.value,))

    def tanh(self):
        t = math.tanh(self.value)
        return self.tape.push("tanh", t, (self.index,), (1.0 - t * t,))

    def exp(self):
        e = math.exp(self.value)
        return self.tape.push("exp", e, (self.index,), (e,))

    def sinh(self):
        return self.tape.push("sinh", math.sinh(self.value), (self.index,), (math.cosh(self.value),))

    def cosh(self):
        return self.tape.push("cosh", math.cosh(self.value), (self.index,), (math.sinh(self.value),))


def _fn(name, c):
    if isinstance(c, Var):
        return getattr(c, name)()
    return getattr(math, name)(c)


def _value(c) -> float:
    return c.value if isinstance(c, Var) else float(c)


@dataclass
class Dual2:
    """Truncated second-order dual number ``value + d1*e + d2*e^2/2``.

    Components are floats or tape :class:`Var` objects.
    """

    value: object
    d1: object = 0.0
    d2: object = 0.0

    def values(self) -> tuple[float, float, float]:
        return _value(self.value), _value(self.d1), _value(self.d2)

    def _lift(self, other) -> "Dual2":
        return other if isinstance(other, Dual2) else Dual2(other, 0.0, 0.0)

    def __add__(self, other):
        if not isinstance(other, Dual2):
            return Dual2(self.value + other, self.d1, self.d2)
        return Dual2(self.value + other.value, self.d1 + other.d1, self.d2 + other.d2)

    __radd__ = __add__

    def __neg__(self):
        return Dual2(-self.value, -self.d1, -self.d2)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Dual2):
            return Dual2(self.value * other, self.d1 * other, self.d2 * other)
        a, b = self, other
        return Dual2(
            a.value * b.value,
            a.d1 * b.value + a.value * b.d1,
            a.d2 * b.value + 2.0 * (a.d1 * b.d1) + a.value * b.d2,
        )

    __rmul__ = __mul__

    def _chain(self, f0, f1, f2) -> "Dual2":
        # g(h): g' = f1 h', g'' = f1 h'' + f2 h'^2
        return Dual2(f0, f1 * self.d1, f1 * self.d2 + f2 * (self.d1 * self.d1))

    def reciprocal(self):
        r = 1.0 / self.value
        r2 = r * r
        return self._chain(r, -r2, 2.0 * (r2 * r))

    def __truediv__(self, other):
        if not isinstance(other, Dual2):
            if _value(other) == 0.0:
                raise ZeroDivisionError("division by zero in Dual2")
            return self * (1.0 / other)
        if _value(other.value) == 0.0:
            raise ZeroDivisionError("division by zero in Dual2")
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def tanh(self):
        t = _fn("tanh", self.value)
        s = 1.0 - t * t
        return self._chain(t, s, -2.0 * (t * s))

    def exp(self):
        e = _fn("exp", self.value)
        return self._chain(e, e, e)

    def sinh(self):
        sh = _fn("sinh", self.value)
        ch = _fn("cosh", self.value)
        return self._chain(sh, ch, sh)


def seed_input(tape: Tape, slot: int, seeded: int | None, value: float) -> Dual2:
    """Record an input coordinate; d1 = 1 only when ``slot`` is the seeded slot."""
    if tape.closed:
        raise RuntimeError("tape is closed for recording")
    return Dual2(tape.input(value), 1.0 if slot == seeded else 0.0, 0.0)


def tanh_node(h: Dual2) -> Dual2:
    return h.tanh()


def _first_nonfinite(tape: Tape) -> int | None:
    vals = np.asarray(tape.values, dtype=float)
    bad = np.flatnonzero(~np.isfinite(vals))
    return int(bad[0]) if bad.size else None


def reverse(result: Var, params: Sequence[Var] | None = None) -> np.ndarray:
    """Gradient of ``result`` with respect to the tape's parameters.

    Entries follow the order in which parameters were registered, unless an
    explicit ``params`` list is given.
    """
    tape = result.tape
    bad = _first_nonfinite(tape)
    if bad is not None:
        raise NonFiniteError(
            f"non-finite value {tape.values[bad]!r} at node {bad} ({tape.ops[bad]})",
            node=bad,
            op=tape.ops[bad],
        )
    tape.close()
    adj = [0.0] * (result.index + 1)
    adj[result.index] = 1.0
    args, partials = tape.args, tape.partials
    for i in range(result.index, -1, -1):
        g = adj[i]
        if g == 0.0:
            continue
        for j, p in zip(args[i], partials[i]):
            adj[j] += g * p
    grad = np.zeros(len(tape.params) if params is None else len(params))
    idx = tape.params if params is None else [p.index for p in params]
    for n, i in enumerate(idx):
        grad[n] = adj[i] if i <= result.index else 0.0
    if not np.all(np.isfinite(grad)):
        first = next(i for i in range(result.index + 1) if not math.isfinite(adj[i]))
        raise NonFiniteError(f"non-finite adjoint at node {first} ({tape.ops[first]})", node=first, op=tape.ops[first])
    return grad
