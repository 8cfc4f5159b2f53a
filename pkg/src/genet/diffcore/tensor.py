"""Dense tensors with tape-based reverse-mode differentiation."""

import contextlib
import itertools
import threading

import numpy as np

from ..errors import ContractError

DEFAULT_DTYPE = np.float32

_seq = itertools.count()
_local = threading.local()


def grad_enabled():
    return getattr(_local, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Run operations without recording them."""
    prev = grad_enabled()
    _local.enabled = False
    try:
        yield
    finally:
        _local.enabled = prev


class _Node:
    """One recorded operation: the inputs and the vector-Jacobian product."""

    __slots__ = ("seq", "inputs", "vjp", "name")

    def __init__(self, inputs, vjp, name):
        self.seq = next(_seq)
        self.inputs = inputs
        self.vjp = vjp
        self.name = name


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_node", "__weakref__")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            dtype = data.dtype if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64) else DEFAULT_DTYPE
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._node = None

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return self._node is None

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self):
        return self.shape[0]

    # -- autodiff ------------------------------------------------------
    def backward(self, retain_graph=False):
        backward(self, retain_graph=retain_graph)

    # -- operators (implemented in ops) ---------------------------------
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, idx):
        from . import ops
        return ops.getitem(self, idx)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def sum(self, axis=None):
        from . import ops
        return ops.sum(self, axis)

    def mean(self):
        from . import ops
        return ops.mean(self)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x), dtype=dtype)


def make_result(data, inputs, vjp, name):
    """Wrap ``data`` as an op output, recording a node when any input needs grad."""
    out = Tensor(data, dtype=data.dtype)
    if grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._node = _Node(tuple(inputs), vjp, name)
    return out


class ComputationTape:
    """The executed operations reachable from a loss, in execution order."""

    def __init__(self, loss):
        nodes = {}
        leaves = {}
        stack = [loss]
        while stack:
            t = stack.pop()
            node = t._node
            if node is None:
                if t.requires_grad:
                    leaves[id(t)] = t
                continue
            if id(node) in nodes:
                continue
            if node.vjp is None:
                raise ContractError("graph already freed; pass retain_graph=True to backward twice")
            nodes[id(node)] = node
            stack.extend(node.inputs)
        self.nodes = sorted(nodes.values(), key=lambda n: n.seq)
        self.leaves = list(leaves.values())

    def __len__(self):
        return len(self.nodes)

    def reverse(self):
        return reversed(self.nodes)

    def free(self):
        for node in self.nodes:
            node.vjp = None
            node.inputs = ()


def backward(loss, retain_graph=False):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise ContractError("backward requires a scalar loss tensor")
    if not loss.requires_grad:
        raise ContractError("loss is not connected to any requires_grad leaf")
    if loss._node is None:
        loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1
        return
    tape = ComputationTape(loss)
    for leaf in tape.leaves:
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
    pending = {id(loss._node): np.ones_like(loss.data)}
    for node in tape.reverse():
        g = pending.pop(id(node), None)
        if g is None:
            continue
        in_grads = node.vjp(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            if t._node is None:
                t.grad += gi.reshape(t.shape).astype(t.dtype, copy=False)
            else:
                key = id(t._node)
                if key in pending:
                    pending[key] = pending[key] + gi
                else:
                    pending[key] = gi
    if not retain_graph:
        tape.free()
