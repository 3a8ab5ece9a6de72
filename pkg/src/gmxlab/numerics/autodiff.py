"""Reverse-mode gradients over a fixed op vocabulary.

The trainers need exactly: matmul, bias add, elementwise activations, convex
mixing, feature means, stop-gradient, and four scalar losses (smoothed
cross-entropy, mean prediction entropy, diversity, weighted composites).
Each op checks its output for non-finite values and aborts with the op name
rather than letting NaN/Inf propagate.

All values are float64 numpy arrays. Nodes form a DAG; ``backward`` walks it
once in reverse topological order. A node created by ``stop_gradient`` has no
parents, so nothing upstream of it is ever visited.
"""

import numpy as np

from ..errors import ConfigError, DimensionError, NumericError

_LOG_FLOOR = 1e-300


class Node:
    """One value in the computation graph."""

    __slots__ = ("value", "grad", "parents", "_backward", "op")

    def __init__(self, value, parents=(), backward=None, op="input"):
        self.value = value
        self.grad = None
        self.parents = parents
        self._backward = backward
        self.op = op


def _checked(value, op):
    if not np.all(np.isfinite(value)):
        raise NumericError(op)
    return value


def constant(value, op="constant"):
    arr = np.asarray(value, dtype=np.float64)
    return Node(_checked(arr, op), op=op)


def _accumulate(node, grad):
    if node.grad is None:
        node.grad = np.zeros_like(node.value)
    node.grad += grad


def matmul(a, b):
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise DimensionError("matmul operands incompatible", a.value.shape, b.value.shape)
    with np.errstate(over="ignore"):
        out = _checked(a.value @ b.value, "matmul")

    def backward(grad):
        _accumulate(a, grad @ b.value.T)
        _accumulate(b, a.value.T @ grad)

    return Node(out, (a, b), backward, "matmul")


def add_bias(a, bias):
    if bias.value.ndim != 1 or a.value.ndim != 2 or a.value.shape[1] != bias.value.shape[0]:
        raise DimensionError("add_bias operands incompatible", a.value.shape, bias.value.shape)
    out = _checked(a.value + bias.value, "add_bias")

    def backward(grad):
        _accumulate(a, grad)
        _accumulate(bias, grad.sum(axis=0))

    return Node(out, (a, bias), backward, "add_bias")


def relu(a):
    out = np.maximum(a.value, 0.0)

    def backward(grad):
        _accumulate(a, grad * (a.value > 0.0))

    return Node(_checked(out, "relu"), (a,), backward, "relu")


def tanh(a):
    out = np.tanh(a.value)

    def backward(grad):
        _accumulate(a, grad * (1.0 - out * out))

    return Node(_checked(out, "tanh"), (a,), backward, "tanh")


def identity(a):
    return a


ACTIVATIONS = {"relu": relu, "tanh": tanh, "identity": identity}
ACTIVATIONS_VALUE = {
    "relu": lambda x: np.maximum(x, 0.0),
    "tanh": np.tanh,
    "identity": lambda x: x,
}


def stop_gradient(a):
    """Detach: same value, no gradient flows into the producing subgraph."""
    return Node(a.value, (), None, "stop_gradient")


def convex_mix(generic, original, lam):
    """lam * generic + (1 - lam) * original.

    The endpoints return the inputs themselves so lambda=0 and lambda=1 are
    bitwise identities, not arithmetic approximations of them.
    """
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"mixup ratio must be in [0, 1], got {lam}")
    if lam == 0.0:
        return original
    if lam == 1.0:
        return generic
    if generic.value.shape != original.value.shape:
        raise DimensionError("convex_mix operands differ", generic.value.shape, original.value.shape)
    # anchored form: equal operands are an exact fixed point for every lam
    out = _checked(original.value + lam * (generic.value - original.value), "convex_mix")

    def backward(grad):
        _accumulate(generic, lam * grad)
        _accumulate(original, (1.0 - lam) * grad)

    return Node(out, (generic, original), backward, "convex_mix")


def anchored_mean(nodes):
    """Elementwise mean of equally-shaped tensors.

    Computed as v0 + sum(vi - v0)/K so that the mean of K identical inputs is
    bitwise equal to the input. Gradient is 1/K to every input.
    """
    if not nodes:
        raise ConfigError("anchored_mean needs at least one tensor")
    shape = nodes[0].value.shape
    for n in nodes[1:]:
        if n.value.shape != shape:
            raise DimensionError("anchored_mean shape mismatch", shape, n.value.shape)
    k = len(nodes)
    if k == 1:
        return nodes[0]
    acc = np.zeros(shape)
    for n in nodes[1:]:
        acc += n.value - nodes[0].value
    out = _checked(nodes[0].value + acc / k, "anchored_mean")

    def backward(grad):
        g = grad / k
        for n in nodes:
            _accumulate(n, g)

    return Node(out, tuple(nodes), backward, "anchored_mean")


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return shifted - lse


def softmax(logits):
    u = _log_softmax(np.asarray(logits, dtype=np.float64))
    return np.exp(u)


def cross_entropy(logits, labels, smoothing=0.0):
    """Mean softmax cross-entropy against (optionally smoothed) hard labels."""
    if logits.value.ndim != 2:
        raise DimensionError("cross_entropy expects [N, C] logits", logits.value.shape)
    n, c = logits.value.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise DimensionError("cross_entropy labels misaligned", logits.value.shape, labels.shape)
    if not 0.0 <= smoothing < 1.0:
        raise ConfigError(f"label smoothing must be in [0, 1), got {smoothing}")
    q = np.full((n, c), smoothing / c)
    q[np.arange(n), labels] += 1.0 - smoothing
    u = _log_softmax(logits.value)
    out = _checked(-(q * u).sum() / n, "cross_entropy")

    def backward(grad):
        p = np.exp(u)
        _accumulate(logits, grad * (p - q) / n)

    return Node(np.float64(out), (logits,), backward, "cross_entropy")


def entropy_mean(logits):
    """Mean over rows of the softmax entropy H(p_i)."""
    if logits.value.ndim != 2:
        raise DimensionError("entropy_mean expects [N, C] logits", logits.value.shape)
    n = logits.value.shape[0]
    u = _log_softmax(logits.value)
    p = np.exp(u)
    row_h = -(p * u).sum(axis=1)
    out = _checked(row_h.sum() / n, "entropy_mean")

    def backward(grad):
        _accumulate(logits, grad * (-p * (u + row_h[:, None])) / n)

    return Node(np.float64(out), (logits,), backward, "entropy_mean")


def diversity(logits):
    """Negative entropy of the mean prediction: sum_c pbar_c log pbar_c.

    Minimised (at -ln C) when the mean prediction is uniform, so adding it to
    a loss rewards diverse predictions across the batch.
    """
    if logits.value.ndim != 2:
        raise DimensionError("diversity expects [N, C] logits", logits.value.shape)
    n = logits.value.shape[0]
    p = np.exp(_log_softmax(logits.value))
    pbar = p.mean(axis=0)
    log_pbar = np.log(np.maximum(pbar, _LOG_FLOOR))
    out = _checked((pbar * log_pbar).sum(), "diversity")

    def backward(grad):
        inner = log_pbar[None, :] - (p * log_pbar[None, :]).sum(axis=1, keepdims=True)
        _accumulate(logits, grad * p * inner / n)

    return Node(np.float64(out), (logits,), backward, "diversity")


def weighted_sum(terms):
    """Composite scalar loss: sum of weight * scalar-node."""
    if not terms:
        raise ConfigError("weighted_sum needs at least one term")
    nodes = [t[1] for t in terms]
    weights = [float(t[0]) for t in terms]
    out = 0.0
    for w, node in zip(weights, nodes):
        if np.ndim(node.value) != 0:
            raise DimensionError("weighted_sum terms must be scalars", np.shape(node.value))
        out += w * node.value
    out = _checked(np.float64(out), "weighted_sum")

    def backward(grad):
        for w, node in zip(weights, nodes):
            _accumulate(node, grad * w)

    return Node(out, tuple(nodes), backward, "weighted_sum")


def backward(root):
    """Run reverse-mode accumulation from a scalar root."""
    if np.ndim(root.value) != 0:
        raise DimensionError("backward root must be a scalar", np.shape(root.value))
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
    root.grad = np.float64(1.0)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
