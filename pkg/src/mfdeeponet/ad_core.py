"""Define-by-run reverse-mode autodiff over numpy arrays, plus coordinate jets.

Every array in the library is a float64 ``numpy.ndarray`` (the ``Tensor``
type below).  Differentiable computations are recorded as a DAG of
:class:`Node` objects while they are evaluated; :func:`backward_grad` walks
the DAG in reverse topological order.

Coordinate derivatives (needed by physics-informed residuals) are carried by
:class:`Jet`, which stacks the value, first derivatives with respect to each
tracked coordinate, and pure second derivatives for a requested subset of
coordinates along a leading channel axis.  Jet propagation is itself built
from tape operations, so every derivative channel can be differentiated with
respect to the network parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

Tensor = np.ndarray


class ADError(Exception):
    """Base class for autodiff failures."""


class ShapeError(ADError):
    def __init__(self, op: str, message: str):
        super().__init__(f"{op}: {message}")
        self.op = op


class NonFiniteError(ADError):
    def __init__(self, path: Sequence[str]):
        super().__init__("non-finite value produced at " + " -> ".join(path))
        self.path = list(path)


class UnsupportedPrimitiveError(ADError):
    pass


def _unbroadcast(grad: Tensor, shape: tuple) -> Tensor:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Node:
    """A recorded value in the computation graph.

    ``backward_fn`` maps the adjoint of this node to a tuple of adjoints, one
    per parent (``None`` for parents that need no gradient).
    """

    __slots__ = ("value", "parents", "backward_fn", "op", "name", "grad", "requires_grad")
    __array_priority__ = 100

    def __init__(self, value, parents=(), backward_fn=None, op="const", name=None):
        self.value = value
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.name = name
        self.grad = None
        self.requires_grad = name is not None or any(p.requires_grad for p in parents)

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self):
        label = self.name or self.op
        return f"Node({label}, shape={self.value.shape})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Node):
            raise ADError("division by a Node is not supported")
        return mul(self, 1.0 / other)

    def __getitem__(self, index):
        return getitem(self, index)

    def __pow__(self, k):
        if k != 2:
            raise ADError("only squaring is supported")
        return square(self)


def variable(value, name: str) -> Node:
    """A named leaf whose gradient is collected by :func:`backward_grad`."""
    return Node(np.asarray(value, dtype=np.float64), op="param", name=name)


def constant(value) -> Node:
    return Node(np.asarray(value, dtype=np.float64))


def as_node(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def _make(value, parents, backward_fn, op):
    if not any(p.requires_grad for p in parents):
        return Node(value, op=op)
    return Node(value, parents, backward_fn, op)


def _binary_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, f"cannot broadcast {a.shape} with {b.shape}") from None


# ---------------------------------------------------------------- primitives


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _binary_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _binary_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _binary_shape("mul", a, b)
    av, bv = a.value, b.value

    def back(g):
        return (_unbroadcast(g * bv, av.shape) if a.requires_grad else None,
                _unbroadcast(g * av, bv.shape) if b.requires_grad else None)

    return _make(av * bv, (a, b), back, "mul")


def square(a) -> Node:
    a = as_node(a)
    av = a.value
    return _make(av * av, (a,), lambda g: (2.0 * g * av,), "square")


def abs_(a) -> Node:
    """|a| with derivative sign(a), taking +1 at the kink."""
    a = as_node(a)
    av = a.value
    return _make(np.abs(av), (a,), lambda g: (g * np.where(av >= 0, 1.0, -1.0),), "abs")


def tanh(a) -> Node:
    a = as_node(a)
    y = np.tanh(a.value)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def relu(a) -> Node:
    a = as_node(a)
    mask = a.value > 0
    return _make(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,), "relu")


def sin(a) -> Node:
    a = as_node(a)
    av = a.value
    return _make(np.sin(av), (a,), lambda g: (g * np.cos(av),), "sin")


def cos(a) -> Node:
    a = as_node(a)
    av = a.value
    return _make(np.cos(av), (a,), lambda g: (-g * np.sin(av),), "cos")


def sum_(a, axis=None, keepdims=False) -> Node:
    a = as_node(a)
    shape = a.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _make(np.sum(a.value, axis=axis, keepdims=keepdims), (a,), back, "sum")


def mean(a, axis=None) -> Node:
    a = as_node(a)
    count = a.value.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis=axis), 1.0 / count)


def dot(a, b) -> Node:
    """Inner product over the last axis (broadcast over the leading ones)."""
    a, b = as_node(a), as_node(b)
    if a.shape[-1] != b.shape[-1]:
        raise ShapeError("dot", f"inner widths differ: {a.shape} vs {b.shape}")
    _binary_shape("dot", a, b)
    av, bv = a.value, b.value

    def back(g):
        g = g[..., None]
        return (_unbroadcast(g * bv, av.shape) if a.requires_grad else None,
                _unbroadcast(g * av, bv.shape) if b.requires_grad else None)

    return _make(np.sum(av * bv, axis=-1), (a, b), back, "dot")


def linear(x, W, b=None) -> Node:
    """``x @ W.T + b`` on the last axis of ``x``."""
    x, W = as_node(x), as_node(W)
    if x.shape[-1] != W.shape[1]:
        raise ShapeError("linear", f"input width {x.shape[-1]} != weight columns {W.shape[1]}")
    xv, Wv = x.value, W.value
    flat = xv.reshape(-1, xv.shape[-1])
    out = (flat @ Wv.T).reshape(xv.shape[:-1] + (Wv.shape[0],))
    if b is not None:
        b = as_node(b)
        out = out + b.value

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g2 @ Wv).reshape(xv.shape) if x.requires_grad else None
        gW = g2.T @ flat if W.requires_grad else None
        if b is None:
            return gx, gW
        return gx, gW, g2.sum(axis=0)

    parents = (x, W) if b is None else (x, W, b)
    return _make(out, parents, back, "linear")


def reshape(a, shape) -> Node:
    a = as_node(a)
    old = a.shape
    return _make(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def concat(nodes: Sequence, axis: int = -1) -> Node:
    nodes = [as_node(n) for n in nodes]
    try:
        out = np.concatenate([n.value for n in nodes], axis=axis)
    except ValueError as exc:
        raise ShapeError("concat", str(exc)) from None
    sizes = np.cumsum([n.shape[axis] for n in nodes])[:-1]

    def back(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _make(out, tuple(nodes), back, "concat")


def broadcast_to(a, shape) -> Node:
    a = as_node(a)
    old = a.shape
    return _make(np.broadcast_to(a.value, shape), (a,), lambda g: (_unbroadcast(g, old),), "broadcast")


def getitem(a, index) -> Node:
    a = as_node(a)
    shape = a.shape

    def back(g):
        full = np.zeros(shape)
        full[index] = g
        return (full,)

    return _make(a.value[index], (a,), back, "getitem")


def detach(a) -> Node:
    return Node(as_node(a).value, op="detach")


# -------------------------------------------------------------- graph driver


def _toposort(root: Node) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def _non_finite_path(root: Node) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        stack.extend((p, False) for p in node.parents if id(p) not in seen)
    children = {}
    for node in order:
        for p in node.parents:
            children.setdefault(id(p), node)
    for node in order:
        if not np.all(np.isfinite(node.value)):
            path, cur = [], node
            while cur is not None:
                path.append(cur.name or cur.op)
                cur = children.get(id(cur))
            return path
    return [root.name or root.op]


@dataclass
class Trace:
    """Result of :func:`forward_eval`: the root node plus the named leaves."""

    root: Node
    inputs: dict = field(default_factory=dict)

    @property
    def value(self) -> Tensor:
        return self.root.value


def forward_eval(graph: Callable[..., Node], bindings: Mapping[str, Tensor], check_finite=True) -> Trace:
    """Evaluate ``graph(**leaves)`` with every binding wrapped as a named leaf."""
    leaves = {k: variable(v, k) for k, v in bindings.items()}
    root = as_node(graph(**leaves))
    if check_finite and not np.all(np.isfinite(root.value)):
        raise NonFiniteError(_non_finite_path(root))
    return Trace(root, leaves)


def backward(root: Node) -> None:
    """Accumulate ``d root / d node`` into ``node.grad`` for every upstream node."""
    if root.value.size != 1:
        raise ShapeError("backward", f"root must be scalar, got shape {root.shape}")
    order = _toposort(root)
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        g = node.grad
        if node.backward_fn is None or g is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = pg if pg.shape == parent.shape else np.array(np.broadcast_to(pg, parent.shape))
            else:
                parent.grad = parent.grad + pg
        if node.name is None:
            node.grad = None


def backward_grad(trace, root: Node | None = None) -> dict:
    """Gradients of the scalar root with respect to every named leaf.

    Accepts either a :class:`Trace` or a mapping of name -> leaf node together
    with an explicit ``root``.  Leaves that do not influence the root get a
    zero gradient.
    """
    if isinstance(trace, Trace):
        leaves, root = trace.inputs, trace.root if root is None else root
    else:
        leaves = trace
    for leaf in leaves.values():
        leaf.grad = None
    backward(root)
    return {k: (np.zeros_like(v.value) if v.grad is None else v.grad) for k, v in leaves.items()}


def finite_diff_check(f: Callable[[Node], Node], x, step: float = 1e-6) -> float:
    """Max relative discrepancy between the AD gradient of scalar ``f`` and
    central differences, ``|ad - fd| / (|fd| + 1e-12)``."""
    x = np.array(x, dtype=np.float64)
    trace = forward_eval(lambda x: f(x), {"x": x}, check_finite=False)
    ad = backward_grad(trace)["x"].reshape(-1)
    flat = x.reshape(-1)
    fd = np.empty_like(flat)
    for i in range(flat.size):
        xp, xm = flat.copy(), flat.copy()
        xp[i] += step
        xm[i] -= step
        fp = as_node(f(constant(xp.reshape(x.shape)))).value
        fm = as_node(f(constant(xm.reshape(x.shape)))).value
        fd[i] = (float(np.sum(fp)) - float(np.sum(fm))) / (2 * step)
    return float(np.max(np.abs(ad - fd) / (np.abs(fd) + 1e-12)))


# ------------------------------------------------------------------- jets

_ELEMENTWISE = frozenset({"tanh", "relu", "sin", "cos"})


def _elementwise_derivs(kind: str, z: Tensor):
    if kind == "tanh":
        y = np.tanh(z)
        d1 = 1.0 - y * y
        d2 = -2.0 * y * d1
        d3 = -2.0 * d1 * d1 + 4.0 * y * y * d1
        return y, d1, d2, d3
    if kind == "relu":
        mask = (z > 0).astype(np.float64)
        zero = np.zeros_like(z)
        return z * mask, mask, zero, zero
    if kind == "sin":
        s, c = np.sin(z), np.cos(z)
        return s, c, -s, -c
    if kind == "cos":
        s, c = np.sin(z), np.cos(z)
        return c, -s, -c, s
    raise UnsupportedPrimitiveError(f"no jet rule for {kind!r}")


@dataclass(frozen=True)
class JetLayout:
    """Channel layout: value, one first derivative per tracked coordinate,
    then one pure second derivative per entry of ``second`` (an index into
    the first-derivative list)."""

    n_first: int
    second: tuple = ()

    @property
    def channels(self) -> int:
        return 1 + self.n_first + len(self.second)


class Jet:
    """Truncated Taylor data of a field with respect to query coordinates.

    ``data`` has shape ``(C, *batch, width)`` with ``C = layout.channels``; a
    constant jet (independent of the coordinates) stores only the value
    channel, ``C = 1``.  Only the primitives defined here are allowed; any
    other operation raises :class:`UnsupportedPrimitiveError`.
    """

    __slots__ = ("data", "layout", "const")

    def __init__(self, data: Node, layout: JetLayout, const: bool = False):
        self.data = as_node(data)
        self.layout = layout
        self.const = const

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        raise UnsupportedPrimitiveError(f"{ufunc.__name__} has no jet rule")

    @classmethod
    def constant(cls, value, layout: JetLayout) -> "Jet":
        v = as_node(value)
        return cls(reshape(v, (1,) + v.shape), layout, const=True)

    @property
    def shape(self) -> tuple:
        return self.data.shape[1:]

    @property
    def value(self) -> Node:
        return self.data[0]

    def first(self, i: int) -> Node:
        if self.const:
            return constant(np.zeros(self.shape))
        return self.data[1 + i]

    def second(self, i: int) -> Node:
        j = self.layout.second.index(i)
        if self.const:
            return constant(np.zeros(self.shape))
        return self.data[1 + self.layout.n_first + j]

    def _pair(self, other):
        if not isinstance(other, Jet):
            other = Jet.constant(other, self.layout)
        if other.layout != self.layout:
            raise ShapeError("jet", "mismatched jet layouts")
        return other

    def linear(self, W, b=None) -> "Jet":
        return Jet(_jet_linear(self.data, as_node(W), None if b is None else as_node(b)), self.layout, self.const)

    def apply(self, kind: str) -> "Jet":
        if kind not in _ELEMENTWISE:
            raise UnsupportedPrimitiveError(f"no jet rule for {kind!r}")
        if self.const:
            return Jet(_jet_elementwise(self.data, kind, JetLayout(0)), self.layout, True)
        return Jet(_jet_elementwise(self.data, kind, self.layout), self.layout)

    def tanh(self) -> "Jet":
        return self.apply("tanh")

    def relu(self) -> "Jet":
        return self.apply("relu")

    def sin(self) -> "Jet":
        return self.apply("sin")

    def cos(self) -> "Jet":
        return self.apply("cos")

    def activate(self, kind: str) -> "Jet":
        return self if kind == "none" else self.apply(kind)

    def __add__(self, other):
        other = self._pair(other)
        if self.const == other.const:
            return Jet(add(self.data, other.data), self.layout, self.const)
        full, c = (other, self) if self.const else (self, other)
        return Jet(_jet_add_const(full.data, c.data), self.layout)

    __radd__ = __add__

    def __neg__(self):
        return Jet(mul(self.data, -1.0), self.layout, self.const)

    def __sub__(self, other):
        return self + (-self._pair(other))

    def __rsub__(self, other):
        return self._pair(other) - self

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Jet(mul(self.data, float(other)), self.layout, self.const)
        other = self._pair(other)
        if self.const or other.const:
            return Jet(mul(self.data, other.data), self.layout, self.const and other.const)
        return Jet(_jet_mul(self.data, other.data, self.layout), self.layout)

    __rmul__ = __mul__

    def dot(self, other) -> "Jet":
        """Inner product over the last axis; the result has width 1."""
        prod = self * other
        return Jet(sum_(prod.data, axis=-1, keepdims=True), self.layout, prod.const)

    def sum_last(self) -> "Jet":
        return Jet(sum_(self.data, axis=-1, keepdims=True), self.layout, self.const)

    def reshape(self, shape) -> "Jet":
        return Jet(reshape(self.data, (self.data.shape[0],) + tuple(shape)), self.layout, self.const)

    def full(self) -> "Jet":
        """Materialise zero derivative channels on a constant jet."""
        if not self.const:
            return self
        pad = constant(np.zeros((self.layout.channels - 1,) + self.shape))
        return Jet(concat([self.data, pad], axis=0), self.layout)


def concat_jets(jets: Sequence[Jet], axis: int = -1) -> Jet:
    """Concatenate jets along a data axis (batch dims are broadcast)."""
    layout = jets[0].layout
    if all(j.const for j in jets):
        return Jet(concat([j.data for j in jets], axis=axis), layout, True)
    datas = [j.full().data for j in jets]
    ax = axis % datas[0].ndim
    base = np.broadcast_shapes(*[d.shape[:ax] + (1,) + d.shape[ax + 1:] for d in datas])
    parts = [broadcast_to(d, base[:ax] + (d.shape[ax],) + base[ax + 1:]) for d in datas]
    return Jet(concat(parts, axis=ax), layout)


def _jet_linear(J: Node, W: Node, b: Node | None) -> Node:
    Jv, Wv = J.value, W.value
    if Jv.shape[-1] != Wv.shape[1]:
        raise ShapeError("jet_linear", f"input width {Jv.shape[-1]} != weight columns {Wv.shape[1]}")
    flat = Jv.reshape(-1, Jv.shape[-1])
    out = (flat @ Wv.T).reshape(Jv.shape[:-1] + (Wv.shape[0],))
    if b is not None:
        out[0] += b.value

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        gJ = (g2 @ Wv).reshape(Jv.shape) if J.requires_grad else None
        gW = g2.T @ flat if W.requires_grad else None
        if b is None:
            return gJ, gW
        return gJ, gW, g[0].reshape(-1, g.shape[-1]).sum(axis=0)

    parents = (J, W) if b is None else (J, W, b)
    return _make(out, parents, back, "jet_linear")


def _jet_add_const(full: Node, c: Node) -> Node:
    fv, cv = full.value, c.value
    shape = (fv.shape[0],) + np.broadcast_shapes(fv.shape[1:], cv.shape[1:])
    out = np.array(np.broadcast_to(fv, shape))
    out[0] += cv[0]

    def back(g):
        return _unbroadcast(g, fv.shape), _unbroadcast(g[:1], cv.shape)

    return _make(out, (full, c), back, "jet_add")


def _jet_mul(A: Node, B: Node, layout: JetLayout) -> Node:
    """Leibniz rule for the product of two full jets."""
    if layout.channels == 1:
        return mul(A, B)
    Av, Bv = A.value, B.value
    k = layout.n_first
    a0, b0 = Av[0], Bv[0]
    out = Av * b0 + a0 * Bv
    out[0] = a0 * b0
    for j, i in enumerate(layout.second):
        out[1 + k + j] += 2.0 * Av[1 + i] * Bv[1 + i]

    def back(g):
        gA = g * b0
        gA[0] = np.sum(g * Bv, axis=0)
        gB = g * a0
        gB[0] = np.sum(g * Av, axis=0)
        for j, i in enumerate(layout.second):
            gs = 2.0 * g[1 + k + j]
            gA[1 + i] += gs * Bv[1 + i]
            gB[1 + i] += gs * Av[1 + i]
        return _unbroadcast(gA, Av.shape), _unbroadcast(gB, Bv.shape)

    return _make(out, (A, B), back, "jet_mul")


def _jet_elementwise(J: Node, kind: str, layout: JetLayout) -> Node:
    Jv = J.value
    k = layout.n_first
    if Jv.shape[0] == 1:
        return _value_elementwise(J, kind)
    y, d1, d2, d3 = _elementwise_derivs(kind, Jv[0])
    out = np.empty_like(Jv)
    out[0] = y
    if Jv.shape[0] > 1:
        out[1:] = d1 * Jv[1:]
        for j, i in enumerate(layout.second):
            out[1 + k + j] += d2 * Jv[1 + i] ** 2

    def back(g):
        gJ = np.empty_like(Jv)
        g0 = g[0] * d1
        if Jv.shape[0] > 1:
            gJ[1:] = g[1:] * d1
            g0 = g0 + d2 * np.sum(g[1:1 + k] * Jv[1:1 + k], axis=0)
            for j, i in enumerate(layout.second):
                gs, zi = g[1 + k + j], Jv[1 + i]
                g0 += gs * (d2 * Jv[1 + k + j] + d3 * zi * zi)
                gJ[1 + i] += 2.0 * gs * d2 * zi
        gJ[0] = g0
        return (gJ,)

    return _make(out, (J,), back, "jet_" + kind)


def _value_elementwise(J: Node, kind: str) -> Node:
    if kind == "tanh":
        return tanh(J)
    if kind == "relu":
        return relu(J)
    if kind == "sin":
        return sin(J)
    return cos(J)


def seed_coords(coords, first: Sequence[int], second: Sequence[int] = ()) -> Jet:
    """Jet of the identity map at ``coords`` (shape ``(*batch, d)``)."""
    coords = np.asarray(coords, dtype=np.float64)
    first, second = list(first), list(second)
    if not set(second) <= set(first):
        raise ADError("second-derivative coordinates must also be tracked to first order")
    layout = JetLayout(len(first), tuple(first.index(s) for s in second))
    data = np.zeros((layout.channels,) + coords.shape)
    data[0] = coords
    for i, c in enumerate(first):
        data[1 + i, ..., c] = 1.0
    return Jet(constant(data), layout)


@dataclass
class CoordJet:
    """Value and coordinate derivatives of a scalar field; the keys of ``d``
    and ``dd`` are coordinate indices."""

    value: Node
    d: dict
    dd: dict


def jet_to_coordjet(jet: Jet, first: Sequence[int], second: Sequence[int]) -> CoordJet:
    first = list(first)
    return CoordJet(
        value=jet.value,
        d={c: jet.first(i) for i, c in enumerate(first)},
        dd={c: jet.second(first.index(c)) for c in second},
    )


def coord_jet_eval(f: Callable[[Jet], Jet], coords, first: Iterable[int], second: Iterable[int] = ()) -> CoordJet:
    """Evaluate ``f`` on a seeded coordinate jet and split the channels."""
    first, second = list(first), list(second)
    out = f(seed_coords(coords, first, second))
    if not isinstance(out, Jet):
        raise UnsupportedPrimitiveError("function did not return a Jet")
    return jet_to_coordjet(out, first, second)
