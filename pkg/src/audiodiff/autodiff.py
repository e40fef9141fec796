"""Reverse-mode automatic differentiation over dense float64 arrays.

The op set is deliberately small: just enough to express the denoiser
network and the VAE objective (matmul, broadcast add/mul, exp, log, tanh,
relu, row softmax, reductions, squared norm).  Every op returns a fresh
Tensor carrying its parents and a vector-Jacobian closure; `grad` replays
the graph once in reverse topological order.  No op mutates its inputs.

Conventions:
  * everything is float64,
  * relu'(0) is defined as 0,
  * the objective passed to `grad` must be a scalar (size-1) Tensor.
"""

from __future__ import annotations

import numpy as np

from audiodiff.errors import ContractError, ParameterError


def _as_f64(data):
    arr = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ContractError("tensor values must be finite")
    return arr


def _unbroadcast(g, shape):
    """Reduce gradient g (shaped like the broadcast result) back to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Tensor:
    """A dense f64 value; non-leaf tensors remember parents and a vjp closure.

    Leaves (parameters, constants) have no parents.  Tensors are treated as
    immutable once created; optimizers rebind `.data` between steps rather
    than writing into live buffers.
    """

    __slots__ = ("data", "parents", "vjp")

    def __init__(self, data, parents=(), vjp=None):
        self.data = _as_f64(data)
        self.parents = tuple(parents)
        self.vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError("item() requires a size-1 tensor")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    # ------------------------------------------------------------------ ops

    def __add__(self, other):
        a, b = self, _wrap(other)
        out = a.data + b.data

        def vjp(g):
            return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

        return Tensor(out, (a, b), vjp)

    __radd__ = __add__

    def __mul__(self, other):
        a, b = self, _wrap(other)
        out = a.data * b.data

        def vjp(g):
            return (_unbroadcast(g * b.data, a.data.shape),
                    _unbroadcast(g * a.data, b.data.shape))

        return Tensor(out, (a, b), vjp)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-_wrap(other))

    def __rsub__(self, other):
        return _wrap(other) + (-self)

    def __matmul__(self, other):
        a, b = self, _wrap(other)
        if a.data.ndim != 2 or b.data.ndim != 2:
            raise ContractError("matmul expects rank-2 operands")
        if a.data.shape[1] != b.data.shape[0]:
            raise ContractError("matmul inner dimensions disagree")
        out = a.data @ b.data

        def vjp(g):
            return g @ b.data.T, a.data.T @ g

        return Tensor(out, (a, b), vjp)

    @property
    def T(self):
        if self.data.ndim != 2:
            raise ContractError("transpose expects a rank-2 tensor")
        a = self

        def vjp(g):
            return (np.ascontiguousarray(g.T),)

        return Tensor(np.ascontiguousarray(a.data.T), (a,), vjp)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        a = self
        out = a.data.reshape(shape)

        def vjp(g):
            return (g.reshape(a.data.shape),)

        return Tensor(out, (a,), vjp)

    def sum(self):
        a = self

        def vjp(g):
            return (np.full(a.data.shape, float(g)),)

        return Tensor(a.data.sum(), (a,), vjp)

    def mean(self):
        a = self
        n = a.data.size

        def vjp(g):
            return (np.full(a.data.shape, float(g) / n),)

        return Tensor(a.data.mean(), (a,), vjp)

    def sqnorm(self):
        """Sum of squared entries, as a scalar tensor."""
        a = self

        def vjp(g):
            return (2.0 * float(g) * a.data,)

        return Tensor(np.sum(a.data * a.data), (a,), vjp)

    def exp(self):
        a = self
        out = np.exp(a.data)

        def vjp(g):
            return (g * out,)

        return Tensor(out, (a,), vjp)

    def log(self):
        a = self
        out = np.log(a.data)

        def vjp(g):
            return (g / a.data,)

        return Tensor(out, (a,), vjp)

    def tanh(self):
        a = self
        out = np.tanh(a.data)

        def vjp(g):
            return (g * (1.0 - out * out),)

        return Tensor(out, (a,), vjp)

    def relu(self):
        a = self
        mask = a.data > 0.0

        def vjp(g):
            return (g * mask,)

        return Tensor(np.where(mask, a.data, 0.0), (a,), vjp)

    def softmax(self, axis=-1):
        a = self
        shifted = a.data - a.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=axis, keepdims=True)

        def vjp(g):
            inner = (g * out).sum(axis=axis, keepdims=True)
            return (out * (g - inner),)

        return Tensor(out, (a,), vjp)


def _wrap(value):
    return value if isinstance(value, Tensor) else Tensor(value)


class Tape:
    """Reverse topological schedule over the graph below a scalar output.

    `order` lists every reachable node with parents before children, so the
    backward sweep visits each node exactly once.  Graphs are acyclic by
    construction (ops only reference previously built tensors).
    """

    def __init__(self, root: Tensor):
        self.root = root
        order = []
        seen = set()
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
            for parent in node.parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.order = order

    def gradients(self, params) -> list[Tensor]:
        accum = {id(self.root): np.ones_like(self.root.data)}
        for node in reversed(self.order):
            g = accum.get(id(node))
            if g is None or node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None:
                    continue
                held = accum.get(id(parent))
                accum[id(parent)] = pg if held is None else held + pg
        out = []
        for p in params:
            g = accum.get(id(p))
            out.append(Tensor(np.zeros_like(p.data) if g is None else g))
        return out


def grad(output: Tensor, params) -> list[Tensor]:
    """Gradients of a scalar output w.r.t. each parameter tensor.

    Returns one Tensor per parameter, shaped like it.  Parameters that the
    output does not depend on get zero gradients.
    """
    if not isinstance(output, Tensor):
        raise ContractError("grad expects a Tensor output")
    if output.data.size != 1:
        raise ContractError("grad requires a scalar objective")
    return Tape(output).gradients(list(params))


def finite_diff_check(f, params, step=1e-5, n_coords=None, rng=None) -> float:
    """Worst relative error between grad() and central finite differences.

    `f` must be a pure function of `params` (a list of leaf Tensors) that
    rebuilds its expression on every call and returns a scalar Tensor.  When
    `n_coords` is given, that many coordinates are sampled (seeded `rng`);
    otherwise every coordinate is checked.
    """
    if step <= 0.0:
        raise ParameterError("step must be positive")
    params = list(params)
    analytic = grad(f(params), params)

    coords = []
    for pi, p in enumerate(params):
        coords.extend((pi, flat) for flat in range(p.data.size))
    if n_coords is not None and n_coords < len(coords):
        rng = np.random.default_rng(0) if rng is None else rng
        picks = rng.choice(len(coords), size=n_coords, replace=False)
        coords = [coords[i] for i in picks]

    def eval_at(pi, flat, delta):
        shifted = list(params)
        data = params[pi].data.copy()
        data.reshape(-1)[flat] += delta
        shifted[pi] = Tensor(data)
        return f(shifted).item()

    worst = 0.0
    for pi, flat in coords:
        fd = (eval_at(pi, flat, step) - eval_at(pi, flat, -step)) / (2 * step)
        ad = float(analytic[pi].data.reshape(-1)[flat])
        err = abs(ad - fd) / max(abs(ad) + abs(fd), 1e-8)
        worst = max(worst, err)
    return worst
