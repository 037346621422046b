"""Dense tensors, a reverse-mode autodiff tape, Adagrad, and gradient checking.

Everything downstream (LSTM layers, the attention decoder, the classifier)
is expressed as a sequence of a small set of kernels appended to a Tape.
Values are float32 by default; reductions and the finite-difference oracle
accumulate in float64.

All tensors handled by the kernels are 2-D matrices: "vectors" are 1-row
matrices and scalars are 1x1.  The tape is topologically ordered by
construction, so backward is a single reverse sweep.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_DTYPE = np.float32
ADAGRAD_INIT_ACC = 0.1
ADAGRAD_EPS = 1e-10
LOG_PICK_EPS = 1e-12


class DimensionError(ValueError):
    """Raised when kernel inputs have incompatible dims."""


class Tensor:
    """A dense array: dims plus row-major float32 data.

    Used at API boundaries (parameters, checkpoints).  Internally the tape
    works on numpy arrays directly.
    """

    __slots__ = ("dims", "data")

    def __init__(self, data, dims=None):
        arr = np.asarray(data, dtype=np.float32)
        if dims is not None:
            if int(np.prod(dims)) != arr.size:
                raise ValueError(
                    f"data length {arr.size} != product of dims {list(dims)}"
                )
            arr = arr.reshape(dims)
        self.dims = [int(d) for d in arr.shape]
        self.data = np.ascontiguousarray(arr).reshape(-1)
        if not np.all(np.isfinite(self.data)):
            raise ValueError("tensor contains non-finite values")

    @classmethod
    def zeros(cls, dims):
        return cls(np.zeros(dims, dtype=np.float32))

    def array(self) -> np.ndarray:
        return self.data.reshape(self.dims)

    def __repr__(self):
        return f"Tensor(dims={self.dims})"


class Kernel(enum.Enum):
    """Compute kernels a tape node can hold.

    LEAF marks tape inputs (constants and parameters); TRANSPOSE exists so
    both row and column orientations of attention/coverage vectors can be
    formed without general broadcasting.
    """

    LEAF = "leaf"
    MATMUL = "matmul"
    ADD = "add"
    MUL = "mul"
    CONCAT = "concat"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"
    LOG = "log"
    NEG_LOG_PICK = "neg-log-pick"
    REDUCE_SUM = "reduce-sum"
    REDUCE_MEAN = "reduce-mean"
    ELEMENTWISE_MIN = "elementwise-min"
    SCALE = "scale"
    TRANSPOSE = "transpose"


class TapeNode:
    __slots__ = ("kernel", "input_ids", "value", "grad", "needs_grad", "arg")

    def __init__(self, kernel, input_ids, value, needs_grad, arg=None):
        self.kernel = kernel
        self.input_ids = input_ids
        self.value = value
        self.grad = None
        self.needs_grad = needs_grad
        self.arg = arg  # kernel-specific: axis, pick index, or scale factor


class Parameter:
    """A named trainable tensor with gradient and Adagrad accumulator state."""

    __slots__ = ("name", "value", "grad", "adagrad_acc")

    def __init__(self, name: str, value, acc_init: float = ADAGRAD_INIT_ACC):
        self.name = name
        self.value = np.array(value, dtype=np.float32)
        if self.value.ndim != 2:
            self.value = np.atleast_2d(self.value)
        if not np.all(np.isfinite(self.value)):
            raise ValueError(f"parameter {name!r} has non-finite values")
        self.grad = np.zeros_like(self.value)
        self.adagrad_acc = np.full_like(self.value, acc_init)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def _bcast_ok(sa, sb):
    """Shapes equal, or one input is a 1-row, 1-column or 1x1 matrix."""
    if sa == sb:
        return True
    if len(sa) != 2 or len(sb) != 2:
        return False
    return all(a == b or a == 1 or b == 1 for a, b in zip(sa, sb)) and (
        max(sa[0], sb[0]),
        max(sa[1], sb[1]),
    ) in (sa, sb)


def _unbroadcast(grad, shape):
    """Sum a broadcasted gradient back down to the input's shape."""
    if grad.shape == shape:
        return grad
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    return grad.sum(axis=axes, keepdims=True)


class Tape:
    """Append-only computation record.

    Nodes reference strictly earlier nodes, so evaluation happens at append
    time and backward is one reverse sweep.  A Parameter appears at most once
    per tape; repeated uses share the leaf node so gradients accumulate there.
    """

    def __init__(self, dtype=DEFAULT_DTYPE):
        self.dtype = dtype
        self.nodes: list[TapeNode] = []
        self._param_nodes: dict[int, tuple[int, Parameter]] = {}
        self._param_transposes: dict[int, int] = {}

    def __len__(self):
        return len(self.nodes)

    def value(self, nid: int) -> np.ndarray:
        return self.nodes[nid].value

    def grad(self, nid: int) -> np.ndarray | None:
        return self.nodes[nid].grad

    # -- node constructors ------------------------------------------------

    def _append(self, kernel, input_ids, value, needs_grad, arg=None) -> int:
        self.nodes.append(TapeNode(kernel, input_ids, value, needs_grad, arg))
        return len(self.nodes) - 1

    def leaf(self, array, needs_grad=False) -> int:
        value = np.ascontiguousarray(np.atleast_2d(np.asarray(array, dtype=self.dtype)))
        return self._append(Kernel.LEAF, (), value, needs_grad)

    def param(self, p: Parameter) -> int:
        """Leaf node for a Parameter, shared across uses on this tape."""
        entry = self._param_nodes.get(id(p))
        if entry is not None:
            return entry[0]
        nid = self.leaf(p.value.astype(self.dtype), needs_grad=True)
        self._param_nodes[id(p)] = (nid, p)
        return nid

    def param_t(self, p: Parameter) -> int:
        """Transposed view of a Parameter, cached so it is built once per tape."""
        nid = self._param_transposes.get(id(p))
        if nid is None:
            nid = self.transpose(self.param(p))
            self._param_transposes[id(p)] = nid
        return nid

    def apply(self, kernel: Kernel, input_ids, arg=None) -> int:
        """Generic kernel dispatch; the named methods below are shorthands."""
        fn = {
            Kernel.MATMUL: self.matmul,
            Kernel.ADD: self.add,
            Kernel.MUL: self.mul,
            Kernel.TANH: self.tanh,
            Kernel.SIGMOID: self.sigmoid,
            Kernel.SOFTMAX: self.softmax,
            Kernel.LOG: self.log,
            Kernel.REDUCE_SUM: self.reduce_sum,
            Kernel.REDUCE_MEAN: self.reduce_mean,
            Kernel.ELEMENTWISE_MIN: self.elementwise_min,
            Kernel.TRANSPOSE: self.transpose,
        }.get(kernel)
        if fn is not None:
            return fn(*input_ids)
        if kernel is Kernel.CONCAT:
            return self.concat(list(input_ids), axis=0 if arg is None else arg)
        if kernel is Kernel.SCALE:
            return self.scale(input_ids[0], arg)
        if kernel is Kernel.NEG_LOG_PICK:
            return self.neg_log_pick(input_ids[0], arg)
        raise ValueError(f"unknown kernel {kernel}")

    def matmul(self, a: int, b: int) -> int:
        va, vb = self.nodes[a].value, self.nodes[b].value
        if va.shape[1] != vb.shape[0]:
            raise DimensionError(f"matmul: inner dims differ: {va.shape} x {vb.shape}")
        ng = self.nodes[a].needs_grad or self.nodes[b].needs_grad
        return self._append(Kernel.MATMUL, (a, b), va @ vb, ng)

    def _elementwise_binary(self, kernel, a, b, op):
        na, nb = self.nodes[a], self.nodes[b]
        va, vb = na.value, nb.value
        if va.shape != vb.shape:
            if kernel is Kernel.ELEMENTWISE_MIN:
                raise DimensionError(
                    f"{kernel.value}: dims must match: {va.shape} vs {vb.shape}"
                )
            if not _bcast_ok(va.shape, vb.shape):
                raise DimensionError(
                    f"{kernel.value}: incompatible dims {va.shape} vs {vb.shape}"
                )
        return self._append(kernel, (a, b), op(va, vb), na.needs_grad or nb.needs_grad)

    def add(self, a: int, b: int) -> int:
        return self._elementwise_binary(Kernel.ADD, a, b, np.add)

    def mul(self, a: int, b: int) -> int:
        return self._elementwise_binary(Kernel.MUL, a, b, np.multiply)

    def elementwise_min(self, a: int, b: int) -> int:
        return self._elementwise_binary(Kernel.ELEMENTWISE_MIN, a, b, np.minimum)

    def concat(self, ids, axis: int = 1) -> int:
        if axis not in (0, 1):
            raise DimensionError(f"concat: axis must be 0 or 1, got {axis}")
        vals = [self.nodes[i].value for i in ids]
        other = 1 - axis
        base = vals[0].shape[other]
        for v in vals[1:]:
            if v.shape[other] != base:
                raise DimensionError(
                    f"concat: mismatched dims along axis {other}: "
                    f"{[v.shape for v in vals]}"
                )
        ng = any(self.nodes[i].needs_grad for i in ids)
        return self._append(Kernel.CONCAT, tuple(ids), np.concatenate(vals, axis=axis), ng, axis)

    def _unary(self, kernel, a, op):
        node = self.nodes[a]
        return self._append(kernel, (a,), op(node.value), node.needs_grad)

    def tanh(self, a: int) -> int:
        return self._unary(Kernel.TANH, a, np.tanh)

    def sigmoid(self, a: int) -> int:
        def op(v):
            # exp may overflow to inf for very negative inputs; 1/inf -> 0 is fine
            with np.errstate(over="ignore"):
                return 1.0 / (1.0 + np.exp(-v))

        return self._unary(Kernel.SIGMOID, a, op)

    def log(self, a: int) -> int:
        return self._unary(Kernel.LOG, a, np.log)

    def softmax(self, a: int) -> int:
        # Per-row, with max subtraction for stability.
        def op(v):
            shifted = v - v.max(axis=-1, keepdims=True)
            e = np.exp(shifted)
            return e / e.sum(axis=-1, keepdims=True)

        return self._unary(Kernel.SOFTMAX, a, op)

    def scale(self, a: int, factor: float) -> int:
        node = self.nodes[a]
        value = (node.value * self.dtype(factor)).astype(self.dtype)
        return self._append(Kernel.SCALE, (a,), value, node.needs_grad, float(factor))

    def transpose(self, a: int) -> int:
        node = self.nodes[a]
        return self._append(
            Kernel.TRANSPOSE, (a,), np.ascontiguousarray(node.value.T), node.needs_grad
        )

    def reduce_sum(self, a: int) -> int:
        node = self.nodes[a]
        value = np.array([[node.value.sum(dtype=np.float64)]], dtype=self.dtype)
        return self._append(Kernel.REDUCE_SUM, (a,), value, node.needs_grad)

    def reduce_mean(self, a: int) -> int:
        node = self.nodes[a]
        value = np.array([[node.value.mean(dtype=np.float64)]], dtype=self.dtype)
        return self._append(Kernel.REDUCE_MEAN, (a,), value, node.needs_grad)

    def neg_log_pick(self, a: int, index: int) -> int:
        node = self.nodes[a]
        flat = node.value.reshape(-1)
        if not 0 <= index < flat.size:
            raise DimensionError(
                f"neg-log-pick: index {index} out of range for {node.value.shape}"
            )
        value = np.array([[-math.log(float(flat[index]) + LOG_PICK_EPS)]], dtype=self.dtype)
        return self._append(Kernel.NEG_LOG_PICK, (a,), value, node.needs_grad, int(index))

    # -- backward ----------------------------------------------------------

    def backward(self, loss: int):
        """Fill gradients of every node (and Parameter) the loss depends on."""
        root = self.nodes[loss]
        if root.value.size != 1:
            raise DimensionError(
                f"backward: loss must be scalar, got dims {root.value.shape}"
            )
        if not root.needs_grad:
            return  # loss independent of all parameters: grads stay zero
        root.grad = np.ones_like(root.value)
        for nid in range(loss, -1, -1):
            node = self.nodes[nid]
            g = node.grad
            if g is None or node.kernel is Kernel.LEAF:
                continue
            self._accumulate_input_grads(node, g)
        for nid, p in self._param_nodes.values():
            node = self.nodes[nid]
            if node.grad is not None:
                p.grad += node.grad.astype(np.float32)

    def _add_grad(self, nid: int, g):
        node = self.nodes[nid]
        if not node.needs_grad:
            return
        if node.grad is None:
            # copy: g may alias another node's grad (add/concat pass views)
            node.grad = np.array(g, copy=True)
        else:
            node.grad += g

    def _accumulate_input_grads(self, node: TapeNode, g: np.ndarray):
        k = node.kernel
        ids = node.input_ids
        if k is Kernel.MATMUL:
            a, b = ids
            va, vb = self.nodes[a].value, self.nodes[b].value
            if self.nodes[a].needs_grad:
                self._add_grad(a, g @ vb.T)
            if self.nodes[b].needs_grad:
                self._add_grad(b, va.T @ g)
        elif k is Kernel.ADD:
            for i in ids:
                self._add_grad(i, _unbroadcast(g, self.nodes[i].value.shape))
        elif k is Kernel.MUL:
            a, b = ids
            va, vb = self.nodes[a].value, self.nodes[b].value
            if self.nodes[a].needs_grad:
                self._add_grad(a, _unbroadcast(g * vb, va.shape))
            if self.nodes[b].needs_grad:
                self._add_grad(b, _unbroadcast(g * va, vb.shape))
        elif k is Kernel.CONCAT:
            axis = node.arg
            offset = 0
            for i in ids:
                size = self.nodes[i].value.shape[axis]
                sl = (
                    (slice(offset, offset + size), slice(None))
                    if axis == 0
                    else (slice(None), slice(offset, offset + size))
                )
                self._add_grad(i, g[sl])
                offset += size
        elif k is Kernel.TANH:
            self._add_grad(ids[0], g * (1.0 - node.value * node.value))
        elif k is Kernel.SIGMOID:
            self._add_grad(ids[0], g * node.value * (1.0 - node.value))
        elif k is Kernel.SOFTMAX:
            y = node.value
            dot = (g * y).sum(axis=-1, keepdims=True)
            self._add_grad(ids[0], y * (g - dot))
        elif k is Kernel.LOG:
            self._add_grad(ids[0], g / self.nodes[ids[0]].value)
        elif k is Kernel.NEG_LOG_PICK:
            src = self.nodes[ids[0]]
            if src.needs_grad:
                gi = np.zeros_like(src.value)
                flat = src.value.reshape(-1)
                gi.reshape(-1)[node.arg] = -float(g[0, 0]) / (
                    float(flat[node.arg]) + LOG_PICK_EPS
                )
                self._add_grad(ids[0], gi)
        elif k is Kernel.REDUCE_SUM:
            src = self.nodes[ids[0]]
            self._add_grad(ids[0], np.full_like(src.value, float(g[0, 0])))
        elif k is Kernel.REDUCE_MEAN:
            src = self.nodes[ids[0]]
            self._add_grad(
                ids[0], np.full_like(src.value, float(g[0, 0]) / src.value.size)
            )
        elif k is Kernel.ELEMENTWISE_MIN:
            a, b = ids
            va, vb = self.nodes[a].value, self.nodes[b].value
            take_a = va <= vb  # ties route to the first input
            if self.nodes[a].needs_grad:
                self._add_grad(a, g * take_a)
            if self.nodes[b].needs_grad:
                self._add_grad(b, g * ~take_a)
        elif k is Kernel.SCALE:
            self._add_grad(ids[0], g * self.dtype(node.arg))
        elif k is Kernel.TRANSPOSE:
            self._add_grad(ids[0], np.ascontiguousarray(g.T))
        else:
            raise ValueError(f"no backward rule for kernel {k}")


def eval_kernel(tape: Tape, kernel: Kernel, input_ids, arg=None) -> int:
    """Append one kernel application to the tape; returns the new node id."""
    return tape.apply(kernel, input_ids, arg)


def zero_grads(params):
    for p in params:
        p.zero_grad()


def global_grad_norm(params) -> float:
    total = 0.0
    for p in params:
        g = p.grad.astype(np.float64)
        total += float((g * g).sum())
    return math.sqrt(total)


def clip_global_norm(params, max_norm: float) -> float:
    """Scale all grads so their global L2 norm is at most max_norm.

    Returns the applied factor (1.0 when no clipping happened, including the
    all-zero case).  Idempotent: a second application is a no-op.
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = global_grad_norm(params)
    if norm <= max_norm or norm == 0.0:
        return 1.0
    factor = max_norm / norm
    for p in params:
        p.grad *= np.float32(factor)
    return factor


def adagrad_step(params, lr: float):
    """acc += g^2; value -= lr * g / (sqrt(acc) + eps); grads are then zeroed."""
    for p in params:
        g = p.grad
        p.adagrad_acc += g * g
        p.value -= np.float32(lr) * g / (np.sqrt(p.adagrad_acc) + np.float32(ADAGRAD_EPS))
        p.zero_grad()


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_param: str
    ok: bool
    failures: list = field(default_factory=list)

    def __str__(self):
        status = "ok" if self.ok else "FAILED"
        return (
            f"grad check {status}: max_rel_err={self.max_rel_err:.3e} "
            f"(worst: {self.worst_param})"
        )


def finite_diff_check(build, params, h: float = 1e-3, tol: float = 1e-3) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``build(dtype)`` must construct a fresh tape from the current parameter
    values and return ``(tape, loss_node_id)``.  It is called many times, so
    it must be deterministic.  All differencing runs in float64.
    """
    if h <= 0:
        raise ValueError("h must be positive")

    def loss_value():
        tape, loss = build(np.float64)
        return float(tape.value(loss)[0, 0])

    tape, loss = build(np.float64)
    if tape.value(loss).size != 1:
        raise DimensionError("finite_diff_check: loss must be scalar")
    tape.backward(loss)
    analytic = {}
    for nid, p in tape._param_nodes.values():
        node = tape.nodes[nid]
        analytic[p.name] = (
            node.grad.copy() if node.grad is not None else np.zeros_like(node.value)
        )

    max_rel = 0.0
    worst = ""
    failures = []
    for p in params:
        grads = analytic.get(p.name)
        if grads is None:
            grads = np.zeros(p.value.shape, dtype=np.float64)
        flat_value = p.value.reshape(-1)
        flat_grad = grads.reshape(-1)
        for i in range(flat_value.size):
            orig = flat_value[i]
            flat_value[i] = orig + h
            x_plus = float(flat_value[i])  # float32 rounds the perturbation
            f_plus = loss_value()
            flat_value[i] = orig - h
            x_minus = float(flat_value[i])
            f_minus = loss_value()
            flat_value[i] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                failures.append(f"non-finite evaluation at {p.name}[{i}]")
                continue
            if x_plus == x_minus:
                failures.append(f"step h={h} vanishes at {p.name}[{i}]")
                continue
            numeric = (f_plus - f_minus) / (x_plus - x_minus)
            a = float(flat_grad[i])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel > max_rel:
                max_rel = rel
                worst = f"{p.name}[{i}]"
    ok = max_rel <= tol and not failures
    return GradCheckReport(max_rel_err=max_rel, worst_param=worst, ok=ok, failures=failures)
