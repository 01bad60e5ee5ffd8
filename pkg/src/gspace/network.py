"""Bias-free ReLU MLPs stored as a flat edge-indexed weight vector.

Edge layout: layer-major, then target node, then source node, so
``index(l, a, b) = offset(l) + b * h[l-1] + a`` with 0-based ``a``, ``b``.
Each layer's block is therefore the matrix ``M[b, a] = w^l(a, b)`` stored
row-major, and ``pre = M @ o_prev``.

Hidden layers use ReLU with ``relu'(0) = 0``; the output layer is linear.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import EmptyBatchError, LabelError, ShapeError


@dataclass(frozen=True)
class Architecture:
    widths: tuple[int, ...]

    def __init__(self, widths: Sequence[int]):
        widths = tuple(int(h) for h in widths)
        if len(widths) < 2:
            raise ShapeError(f"need at least an input and an output layer, got {widths}")
        if any(h < 1 for h in widths):
            raise ShapeError(f"layer widths must be positive, got {widths}")
        object.__setattr__(self, "widths", widths)

    @classmethod
    def parse(cls, text: str) -> "Architecture":
        """Parse ``"2,1,2"`` or ``"2:1:2"``."""
        parts = text.replace(":", ",").split(",")
        try:
            return cls([int(p) for p in parts if p.strip()])
        except ValueError as exc:
            raise ShapeError(f"cannot parse architecture {text!r}") from exc

    def __str__(self):
        return "[" + ":".join(map(str, self.widths)) + "]"

    @property
    def L(self) -> int:
        return len(self.widths) - 1

    @property
    def d(self) -> int:
        return self.widths[0]

    @property
    def K(self) -> int:
        return self.widths[-1]

    @cached_property
    def offsets(self) -> tuple[int, ...]:
        # offsets[l - 1] is the start of layer l; offsets[L] == m
        out = [0]
        for l in range(1, self.L + 1):
            out.append(out[-1] + self.widths[l - 1] * self.widths[l])
        return tuple(out)

    @property
    def m(self) -> int:
        return self.offsets[-1]

    @property
    def H(self) -> int:
        return sum(self.widths[1:-1])

    @property
    def n_paths(self) -> int:
        return int(np.prod(self.widths, dtype=object))

    @property
    def invariant_ratio(self) -> float:
        return self.H / self.m

    def edge_index(self, l: int, a: int, b: int) -> int:
        """Index of the edge from node ``a`` of layer ``l-1`` to node ``b`` of layer ``l``."""
        if not 1 <= l <= self.L:
            raise IndexError(f"layer {l} out of range 1..{self.L}")
        if not (0 <= a < self.widths[l - 1] and 0 <= b < self.widths[l]):
            raise IndexError(f"edge ({l}, {a}, {b}) out of range for {self}")
        return self.offsets[l - 1] + b * self.widths[l - 1] + a

    def edge_endpoints(self, e: int) -> tuple[int, int, int]:
        """Inverse of :meth:`edge_index`: ``(l, a, b)``."""
        if not 0 <= e < self.m:
            raise IndexError(f"edge {e} out of range 0..{self.m - 1}")
        l = int(np.searchsorted(self.offsets, e, side="right"))
        b, a = divmod(e - self.offsets[l - 1], self.widths[l - 1])
        return l, a, b

    def edge_layer(self, e: int) -> int:
        return self.edge_endpoints(e)[0]

    def hidden_index(self, l: int, i: int) -> int:
        """Layer-major position of hidden node ``i`` of layer ``l`` (1 <= l <= L-1)."""
        if not 1 <= l < self.L:
            raise IndexError(f"layer {l} is not hidden")
        return sum(self.widths[1:l]) + i

    def hidden_nodes(self) -> list[tuple[int, int]]:
        return [(l, i) for l in range(1, self.L) for i in range(self.widths[l])]

    def layer_matrices(self, w: np.ndarray) -> list[np.ndarray]:
        """Views ``M_l`` of shape ``(h_l, h_{l-1})`` into ``w``, one per layer."""
        w = check_weights(self, w)
        return [
            w[self.offsets[l - 1]:self.offsets[l]].reshape(self.widths[l], self.widths[l - 1])
            for l in range(1, self.L + 1)
        ]


def check_weights(arch: Architecture, w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (arch.m,):
        raise ShapeError(f"weight vector has shape {w.shape}, expected ({arch.m},) for {arch}")
    return w


class Loss(str, enum.Enum):
    CROSS_ENTROPY = "softmax-cross-entropy"
    MSE = "mean-squared-error"

    @classmethod
    def parse(cls, name) -> "Loss":
        if isinstance(name, Loss):
            return name
        aliases = {"ce": cls.CROSS_ENTROPY, "cross-entropy": cls.CROSS_ENTROPY, "mse": cls.MSE}
        key = str(name).strip().lower()
        if key in aliases:
            return aliases[key]
        return cls(key)


@dataclass(frozen=True)
class ForwardTrace:
    pre_activations: list[np.ndarray]  # hidden layers 1..L-1
    node_values: list[np.ndarray]      # layers 0..L-1; node_values[0] is the input
    outputs: np.ndarray

    @property
    def hidden_values(self) -> list[np.ndarray]:
        return self.node_values[1:]


def _check_input(arch: Architecture, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (arch.d,):
        raise ShapeError(f"input has shape {x.shape}, expected ({arch.d},)")
    return x


def forward(arch: Architecture, w, x) -> ForwardTrace:
    x = _check_input(arch, x)
    mats = arch.layer_matrices(w)
    pre, values = [], [x]
    o = x
    for M in mats[:-1]:
        z = M @ o
        o = np.maximum(z, 0.0)
        pre.append(z)
        values.append(o)
    return ForwardTrace(pre, values, mats[-1] @ o)


def forward_batch(arch: Architecture, w, X) -> tuple[list[np.ndarray], np.ndarray]:
    """Batched forward pass: ``(hidden pre-activations, outputs)``, rows are examples."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != arch.d:
        raise ShapeError(f"batch has shape {X.shape}, expected (N, {arch.d})")
    mats = arch.layer_matrices(w)
    pre = []
    o = X
    for M in mats[:-1]:
        z = o @ M.T
        pre.append(z)
        o = np.maximum(z, 0.0)
    return pre, o @ mats[-1].T


def _targets(labels, K: int, loss: Loss) -> np.ndarray:
    """Normalise labels to an int array (CE) or a (N, K) target matrix (MSE)."""
    labels = np.atleast_1d(np.asarray(labels))
    if labels.ndim == 2 and loss is Loss.MSE:
        if labels.shape[1] != K:
            raise LabelError(f"MSE target has {labels.shape[1]} entries, expected {K}")
        return labels.astype(np.float64)
    if labels.ndim != 1:
        raise LabelError("expected a 1-D array of class labels")
    if not np.issubdtype(labels.dtype, np.integer):
        if np.any(labels != np.round(labels)):
            raise LabelError(f"non-integer class label in {labels}")
        labels = labels.astype(np.int64)
    if np.any((labels < 0) | (labels >= K)):
        raise LabelError(f"label out of range [0, {K})")
    return labels if loss is Loss.CROSS_ENTROPY else np.eye(K)[labels]


def loss_and_grad(outputs: np.ndarray, labels, loss: Loss) -> tuple[np.ndarray, np.ndarray]:
    """Per-example losses and d(loss)/d(outputs) for a (N, K) output batch."""
    K = outputs.shape[1]
    t = _targets(labels, K, loss)
    if loss is Loss.CROSS_ENTROPY:
        if t.shape[0] != outputs.shape[0]:
            raise LabelError("label count does not match batch size")
        z = outputs - outputs.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(z).sum(axis=1))
        rows = np.arange(len(t))
        losses = log_norm - z[rows, t]
        grad = np.exp(z - log_norm[:, None])
        grad[rows, t] -= 1.0
        return losses, grad
    t = np.broadcast_to(t, outputs.shape)
    r = outputs - t
    return (r * r).mean(axis=1), 2.0 * r / K


def loss_value(outputs, label, loss=Loss.CROSS_ENTROPY) -> float:
    """Loss of one output vector against a class label (or an MSE target vector)."""
    loss = Loss.parse(loss)
    outputs = np.asarray(outputs, dtype=np.float64).reshape(1, -1)
    label = np.asarray(label)
    if loss is Loss.MSE and label.ndim == 1:
        label = label[None, :]
    losses, _ = loss_and_grad(outputs, label, loss)
    return float(losses[0])


def batch_loss(arch: Architecture, w, X, labels, loss=Loss.CROSS_ENTROPY) -> float:
    _, out = forward_batch(arch, w, X)
    losses, _ = loss_and_grad(out, labels, Loss.parse(loss))
    return float(losses.mean())


def batch_gradient(arch: Architecture, w, X, labels, loss=Loss.CROSS_ENTROPY) -> np.ndarray:
    """Mean over the batch of per-example weight gradients, laid out like ``w``."""
    loss = Loss.parse(loss)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2 and X.shape[0] == 0:
        raise EmptyBatchError("batch is empty")
    pre, out = forward_batch(arch, w, X)
    _, delta = loss_and_grad(out, labels, loss)
    n = X.shape[0]
    mats = arch.layer_matrices(w)
    acts = [X] + [np.maximum(z, 0.0) for z in pre]
    grads = [None] * arch.L
    for l in range(arch.L, 0, -1):
        grads[l - 1] = (delta.T @ acts[l - 1]) / n
        if l > 1:
            delta = (delta @ mats[l - 1]) * (pre[l - 2] > 0)
    return np.concatenate([g.ravel() for g in grads])


def backward(arch: Architecture, w, x, label, loss=Loss.CROSS_ENTROPY) -> np.ndarray:
    """Gradient of the single-example loss with respect to every weight."""
    x = _check_input(arch, x)
    loss = Loss.parse(loss)
    label = np.asarray(label)
    if loss is Loss.MSE and label.ndim == 1:
        label = label[None, :]
    return batch_gradient(arch, w, x[None, :], label, loss)


def predict(arch: Architecture, w, X) -> np.ndarray:
    _, out = forward_batch(arch, w, X)
    return out.argmax(axis=1)
