"""Minimal reverse-mode autodiff engine on numpy arrays.

Every op's vector-Jacobian product is itself built from engine ops, so
gradients can be differentiated again (needed by the critic's gradient
penalty). The whole structured-op zoo (convolutions, pooling, tiling,
padding) reduces to two mutually adjoint linear primitives: ``take`` (gather
by a constant index map) and ``put`` (scatter-add by the same map).

Training runs in float32, gradient checking in float64; ops preserve the
input dtype. A small ReLU monitor records the smallest pre-activation
magnitude seen during a forward pass so finite-difference checks can skip
coordinates that straddle a kink.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor", "no_grad", "tensor", "constant",
    "add", "sub", "neg", "mul", "smul", "cmul", "pow_", "matmul",
    "transpose", "reshape", "tsum", "expand", "sum_to", "take", "put",
    "relu", "mean", "square", "grad_of", "relu_monitor",
]

_GRAD_ENABLED = [True]


class no_grad:
    def __enter__(self):
        self._prev = _GRAD_ENABLED[0]
        _GRAD_ENABLED[0] = False

    def __exit__(self, *exc):
        _GRAD_ENABLED[0] = self._prev
        return False


class _ReluMonitor:
    """Captures ReLU pre-activation snapshots while armed.

    Finite-difference checks compare the snapshots of the two perturbed
    evaluations: a coordinate straddles a kink when some pre-activation
    changes sign between them or comes within the margin of zero while
    being perturbed. Structural zeros (windows that stay exactly zero on
    both sides) are locally constant and harmless.
    """

    def __init__(self):
        self.armed = False
        self.snapshots: list[tuple[str, np.ndarray]] = []
        self.min_abs = np.inf

    def reset(self):
        self.snapshots = []
        self.min_abs = np.inf

    def observe(self, x: np.ndarray):
        if self.armed and x.size:
            self.snapshots.append(("relu", x.copy()))
            nz = np.abs(x[x != 0])
            if nz.size:
                m = nz.min()
                if m < self.min_abs:
                    self.min_abs = float(m)

    def observe_pool(self, argmax_idx: np.ndarray):
        if self.armed:
            self.snapshots.append(("pool", argmax_idx.copy()))


def kink_between(snaps_a: list, snaps_b: list, margin: float) -> bool:
    """True when the two snapshot sets indicate a kink crossing.

    ReLU entries flag a sign change or a near-zero magnitude while moving;
    pooling entries flag any argmax switch.
    """
    if len(snaps_a) != len(snaps_b):
        return True  # control flow changed; treat as unsafe
    for (kind_a, a), (kind_b, b) in zip(snaps_a, snaps_b):
        if kind_a != kind_b or a.shape != b.shape:
            return True
        if kind_a == "pool":
            if np.any(a != b):
                return True
            continue
        moved = a != b
        if not moved.any():
            continue
        am, bm = a[moved], b[moved]
        if np.any(np.sign(am) != np.sign(bm)):
            return True
        if np.any(np.minimum(np.abs(am), np.abs(bm)) < margin):
            return True
    return False


relu_monitor = _ReluMonitor()


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False, parents=(), vjp=None):
        self.data = np.asarray(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def backward(self, create_graph: bool = False) -> None:
        """Fill ``.grad`` (as arrays) on every reachable requires_grad leaf."""
        grads = grad_of(self, None, create_graph=create_graph, _all_leaves=True)
        for t, g in grads.items():
            t.grad = g.data if not create_graph else g

    # operator sugar
    def __add__(self, other):
        return add(self, _as_tensor_like(other, self))

    def __sub__(self, other):
        return sub(self, _as_tensor_like(other, self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return smul(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, grad={self.requires_grad})"


def tensor(data, requires_grad=False, dtype=None) -> Tensor:
    a = np.asarray(data, dtype=dtype)
    return Tensor(a, requires_grad=requires_grad)


def constant(data, dtype=None) -> Tensor:
    return tensor(data, requires_grad=False, dtype=dtype)


def _as_tensor_like(x, ref: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=ref.dtype))


def _node(data, parents, vjp) -> Tensor:
    if _GRAD_ENABLED[0] and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=tuple(parents), vjp=vjp)
    return Tensor(data)


# --- elementwise -------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch {a.shape} vs {b.shape}")
    return _node(a.data + b.data, (a, b), lambda g: (g, g))


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (neg(g),))


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, neg(b))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch {a.shape} vs {b.shape}")
    return _node(a.data * b.data, (a, b), lambda g: (mul(g, b), mul(g, a)))


def smul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node(a.data * np.asarray(c, dtype=a.dtype), (a,), lambda g: (smul(g, c),))


def cmul(a: Tensor, const: np.ndarray) -> Tensor:
    """Multiply by a constant array (no gradient into the constant)."""
    const = np.asarray(const, dtype=a.dtype)
    return _node(a.data * const, (a,), lambda g: (cmul(g, const),))


def square(a: Tensor) -> Tensor:
    return mul(a, a)


def pow_(a: Tensor, p: float) -> Tensor:
    p = float(p)
    out = np.power(a.data, p)

    def vjp(g):
        return (mul(g, smul(pow_(a, p - 1.0), p)),)

    return _node(out, (a,), vjp)


def relu(a: Tensor) -> Tensor:
    relu_monitor.observe(a.data)
    mask = (a.data > 0).astype(a.dtype)
    return _node(a.data * mask, (a,), lambda g: (cmul(g, mask),))


# --- shape ops ----------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (reshape(g, old),))


def transpose(a: Tensor, perm=None) -> Tensor:
    if perm is None:
        perm = tuple(reversed(range(a.data.ndim)))
    perm = tuple(perm)
    inv = tuple(np.argsort(perm))
    return _node(np.ascontiguousarray(a.data.transpose(perm)), (a,), lambda g: (transpose(g, inv),))


def tsum(a: Tensor) -> Tensor:
    """Full reduction to a scalar (shape ())."""
    shape = a.shape
    return _node(np.asarray(a.data.sum(), dtype=a.dtype), (a,), lambda g: (expand(g, shape),))


def mean(a: Tensor) -> Tensor:
    return smul(tsum(a), 1.0 / a.size)


def expand(a: Tensor, shape) -> Tensor:
    """Broadcast to ``shape``; adjoint of :func:`sum_to`."""
    shape = tuple(int(s) for s in shape)
    old = a.shape
    out = np.ascontiguousarray(np.broadcast_to(a.data, shape))
    return _node(out, (a,), lambda g: (sum_to(g, old),))


def sum_to(a: Tensor, shape) -> Tensor:
    """Reduce by summation down to a broadcast-compatible ``shape``."""
    shape = tuple(int(s) for s in shape)
    old = a.shape
    data = a.data
    if data.shape != shape:
        nd_extra = data.ndim - len(shape)
        axes = tuple(range(nd_extra)) + tuple(
            i + nd_extra for i, s in enumerate(shape) if data.shape[i + nd_extra] != s
        )
        data = data.sum(axis=axes, keepdims=False)
        data = data.reshape(shape)
    return _node(np.asarray(data, dtype=a.dtype), (a,), lambda g: (expand(g, old),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-D tensors")

    def vjp(g):
        return (matmul(g, transpose(b)), matmul(transpose(a), g))

    return _node(a.data @ b.data, (a, b), vjp)


# --- gather / scatter ----------------------------------------------------------

def take(a: Tensor, idx: np.ndarray, out_shape=None) -> Tensor:
    """Gather ``a.flat[idx]``; linear, adjoint of :func:`put`."""
    idx = np.asarray(idx, dtype=np.int64)
    in_shape = a.shape
    data = a.data.reshape(-1)[idx.reshape(-1)]
    if out_shape is None:
        out_shape = idx.shape
    data = data.reshape(out_shape)
    return _node(data, (a,), lambda g: (put(g, idx, in_shape),))


def put(a: Tensor, idx: np.ndarray, out_shape) -> Tensor:
    """Scatter-add ``a`` into zeros of ``out_shape``; adjoint of :func:`take`."""
    idx = np.asarray(idx, dtype=np.int64)
    out_shape = tuple(int(s) for s in out_shape)
    n = int(np.prod(out_shape))
    flat = np.bincount(idx.reshape(-1), weights=a.data.reshape(-1).astype(np.float64), minlength=n)
    data = flat.astype(a.dtype).reshape(out_shape)
    in_shape = a.shape
    return _node(data, (a,), lambda g: (take(g, idx, in_shape),))


# --- reverse sweep --------------------------------------------------------------

def _topo(root: Tensor) -> list[Tensor]:
    seen = set()
    order: list[Tensor] = []
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def grad_of(output: Tensor, wrt, create_graph: bool = False, _all_leaves: bool = False):
    """Gradients of a scalar ``output`` w.r.t. the tensors in ``wrt``.

    Does not mutate ``.grad``. With ``create_graph`` the returned gradients
    stay connected to the graph and can be differentiated again.
    """
    if output.size != 1:
        raise ValueError("grad_of needs a scalar output")
    order = _topo(output)
    grads: dict[int, Tensor] = {id(output): constant(np.ones(output.shape, dtype=output.dtype))}

    ctx = _NullCtx() if create_graph else no_grad()
    with ctx:
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None or node._vjp is None:
                if g is not None and node._vjp is None:
                    grads[id(node)] = g  # leaf: keep
                continue
            parent_grads = node._vjp(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                if id(p) in grads:
                    grads[id(p)] = add(grads[id(p)], pg)
                else:
                    grads[id(p)] = pg

    if _all_leaves:
        by_tensor = {}
        for node in order:
            if node._vjp is None and id(node) in grads:
                by_tensor[node] = grads[id(node)]
        return by_tensor

    out = []
    for w in wrt:
        g = grads.get(id(w))
        if g is None:
            g = constant(np.zeros(w.shape, dtype=w.dtype))
        out.append(g)
    return out


class _NullCtx:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False
