"""G-SGD and plain SGD on bias-free ReLU MLPs.

One G-SGD step: back-propagate weight gradients, convert them to gradients
with respect to basis-path values (inverse chain rule), take an SGD step on
those values, and push the resulting path ratios back onto the weights
(weight allocation). Free skeleton weights never move.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    DegeneratePathError,
    DegenerateUpdateError,
    DomainError,
    ShapeError,
    StepRejected,
)
from .network import Architecture, Loss, batch_gradient, check_weights, forward_batch, loss_and_grad
from .skeleton import SkeletonPlan, build_skeleton

OPTIMIZERS = ("sgd", "gsgd")


def basis_values(w, plan: SkeletonPlan) -> np.ndarray:
    """Values of the basis paths at ``w``, in ``plan.basis_paths`` order."""
    w = check_weights(plan.arch, w)
    if np.any(w == 0):
        raise DomainError("basis values need every weight nonzero")
    return np.prod(w[plan.edge_table], axis=1)


def icr_gradients(grad_w, w, v, plan: SkeletonPlan, return_residual: bool = False):
    """Gradient of the loss with respect to basis-path values.

    Solves ``w_e * dl/dw_e = sum_{k : e in p^k} v_k * dl/dv_k`` on the pivot
    columns only: skip-basis paths first (their non-skeleton edge lies on no
    other basis path), then carriers from the deepest layer up.

    With ``return_residual`` also returns the relative mismatch of the same
    identity on the free skeleton columns, which were not used in the solve.
    """
    grad_w = np.asarray(grad_w, dtype=np.float64)
    w = check_weights(plan.arch, w)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (plan.dim,):
        raise ShapeError(f"basis value vector has shape {v.shape}, expected ({plan.dim},)")
    if np.any(v == 0):
        raise DegeneratePathError("a basis path has value zero")
    target = w * grad_w
    acc = np.zeros(plan.arch.m)
    grad_v = np.zeros(plan.dim)
    L = plan.arch.L
    for group in reversed(plan.solve_groups):
        piv = plan.pivots[group]
        grad_v[group] = (target[piv] - acc[piv]) / v[group]
        np.add.at(acc, plan.edge_table[group].ravel(), np.repeat(v[group] * grad_v[group], L))
    if not return_residual:
        return grad_v
    free = list(plan.free_skeleton_edges)
    # measure against the summed magnitudes: dead units make both sides
    # cancel to ~0, leaving only round-off of the individual terms
    size = np.zeros(plan.arch.m)
    np.add.at(size, plan.edge_table.ravel(), np.repeat(np.abs(v * grad_v), L))
    scale = np.maximum(np.maximum(np.abs(target[free]), size[free]), np.finfo(float).tiny)
    return grad_v, np.abs(target[free] - acc[free]) / scale


def weight_allocation(R, w, plan: SkeletonPlan) -> np.ndarray:
    """Weight ratios ``r`` whose induced basis-path ratios equal ``R``.

    Free skeleton ratios are exactly 1; each pivot edge takes whatever ratio
    completes its own path, solved carriers-first by ascending layer.
    """
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (plan.dim,):
        raise ShapeError(f"path ratio vector has shape {R.shape}, expected ({plan.dim},)")
    if np.any(R == 0):
        raise DegenerateUpdateError("a path ratio is zero")
    r = np.ones(plan.arch.m)
    for group in plan.solve_groups:
        P = r[plan.edge_table[group]]
        P[np.arange(len(group)), plan.pivot_column[group]] = 1.0
        r[plan.pivots[group]] = R[group] / np.prod(P, axis=1)
    return r


def gsgd_step(arch: Architecture, w, X, y, lr: float, plan: SkeletonPlan, loss=Loss.CROSS_ENTROPY,
              check_icr: float | None = None) -> np.ndarray:
    w = check_weights(arch, w)
    if np.any(w == 0):
        raise DomainError("G-SGD needs every weight nonzero")
    grad_w = batch_gradient(arch, w, X, y, loss)
    v = basis_values(w, plan)
    if check_icr is not None:
        grad_v, residual = icr_gradients(grad_w, w, v, plan, return_residual=True)
        if residual.size and residual.max() > check_icr:
            raise AssertionError(f"ICR free-column residual {residual.max():.3e} exceeds {check_icr}")
    else:
        grad_v = icr_gradients(grad_w, w, v, plan)
    # overflow is detected below, so numpy's warning adds nothing
    with np.errstate(over="ignore", invalid="ignore"):
        v_new = v - lr * grad_v
        if np.any(v_new == 0) or not np.all(np.isfinite(v_new)):
            raise StepRejected("step would zero (or overflow) a basis-path value")
        w_new = w * weight_allocation(v_new / v, w, plan)
    if np.any(w_new == 0) or not np.all(np.isfinite(w_new)):
        raise StepRejected("step would zero (or overflow) a weight")
    return w_new


def sgd_step(arch: Architecture, w, X, y, lr: float, loss=Loss.CROSS_ENTROPY) -> np.ndarray:
    w = check_weights(arch, w)
    return w - lr * batch_gradient(arch, w, X, y, loss)


# ---------------------------------------------------------------------------
# initialisation

def init_weights(arch: Architecture, rng: np.random.Generator, plan: SkeletonPlan | None = None) -> np.ndarray:
    """He-normal weights (std ``sqrt(2 / fan_in)``); skeleton weights set to 1 when a plan is given."""
    parts = [
        rng.standard_normal(arch.widths[l] * arch.widths[l - 1]) * np.sqrt(2.0 / arch.widths[l - 1])
        for l in range(1, arch.L + 1)
    ]
    w = np.concatenate(parts)
    if plan is not None:
        w[sorted(plan.skeleton_edges)] = 1.0
    return w


def unbalanced_scaling(arch: Architecture, c: float) -> np.ndarray:
    """Scaling vector with factor ``c`` on every node of the first hidden layer."""
    g = np.ones(arch.H)
    if arch.L > 1:
        g[:arch.widths[1]] = c
    return g


# ---------------------------------------------------------------------------
# training loop

@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "gsgd"
    learning_rate: float = 0.1
    batch_size: int = 64
    epochs: int = 20
    seed: int = 0
    loss: Loss = Loss.CROSS_ENTROPY
    lr_schedule: tuple[tuple[int, float], ...] = ()
    max_halvings: int = 20
    check_icr: float | None = None

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        object.__setattr__(self, "loss", Loss.parse(self.loss))

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 1-based epoch: base rate times the latest schedule multiplier."""
        mult = 1.0
        for start, m in sorted(self.lr_schedule):
            if epoch >= start:
                mult = m
        return self.learning_rate * mult


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float
    wall_ms: float

    FIELDS = ("epoch", "train_loss", "train_acc", "test_loss", "test_acc", "wall_ms")

    def values(self, with_time: bool = True) -> tuple:
        out = (self.epoch, self.train_loss, self.train_acc, self.test_loss, self.test_acc)
        return out + (self.wall_ms,) if with_time else out


@dataclass
class Metrics:
    records: list[EpochRecord] = field(default_factory=list)

    @property
    def final(self) -> EpochRecord | None:
        return self.records[-1] if self.records else None

    def summary(self) -> dict:
        last = self.final
        if last is None:
            return {}
        return {k: getattr(last, k) for k in EpochRecord.FIELDS}


@dataclass
class TrainResult:
    metrics: Metrics
    weights: np.ndarray
    initial_weights: np.ndarray
    steps: int
    plan: SkeletonPlan | None = None


def evaluate(arch: Architecture, w, X, y, loss=Loss.CROSS_ENTROPY) -> tuple[float, float]:
    """Mean loss and accuracy over a whole dataset."""
    if X is None or len(X) == 0:
        return float("nan"), float("nan")
    _, out = forward_batch(arch, w, X)
    losses, _ = loss_and_grad(out, y, Loss.parse(loss))
    labels = np.asarray(y)
    acc = float(np.mean(out.argmax(axis=1) == labels)) if labels.ndim == 1 else float("nan")
    return float(losses.mean()), acc


def _seed_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    init_seq, shuffle_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_seq), np.random.default_rng(shuffle_seq)


def initial_weights(arch: Architecture, seed: int, plan: SkeletonPlan | None = None) -> np.ndarray:
    """Seeded initial weights, matching what :func:`train` draws when ``w0`` is omitted."""
    return init_weights(arch, _seed_streams(seed)[0], plan)


def train(arch: Architecture, config: TrainConfig, train_data, test_data=None,
          plan: SkeletonPlan | None = None, w0=None,
          on_step: Callable[[int, np.ndarray], None] | None = None) -> TrainResult:
    """Run ``config.epochs`` epochs of minibatch SGD or G-SGD.

    ``train_data``/``test_data`` are ``(X, y)`` pairs or objects with
    ``features``/``labels``. Record 0 holds the metrics of the initial
    weights. ``on_step(step, w)`` is called after every update.
    """
    X, y = _unpack(train_data)
    Xt, yt = _unpack(test_data) if test_data is not None else (None, None)
    if plan is None and (config.optimizer == "gsgd" or w0 is None):
        plan = build_skeleton(arch)
    init_rng, shuffle_rng = _seed_streams(config.seed)
    w = init_weights(arch, init_rng, plan) if w0 is None else check_weights(arch, w0).copy()
    if config.optimizer == "gsgd" and np.any(w == 0):
        raise DomainError("G-SGD needs every initial weight nonzero")
    w_init = w.copy()

    metrics = Metrics()
    start = time.perf_counter()

    def record(epoch):
        tl, ta = evaluate(arch, w, X, y, config.loss)
        vl, va = evaluate(arch, w, Xt, yt, config.loss)
        metrics.records.append(EpochRecord(epoch, tl, ta, vl, va, 1000.0 * (time.perf_counter() - start)))

    record(0)
    n = len(X)
    step = 0
    for epoch in range(1, config.epochs + 1):
        lr = config.lr_at(epoch)
        order = shuffle_rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            w = _one_step(arch, config, w, X[idx], y[idx], lr, plan, epoch, step)
            step += 1
            if on_step is not None:
                on_step(step, w)
        record(epoch)
    return TrainResult(metrics, w, w_init, step, plan)


def _one_step(arch, config, w, Xb, yb, lr, plan, epoch, step):
    if config.optimizer == "sgd":
        return sgd_step(arch, w, Xb, yb, lr, config.loss)
    eta = lr
    for _ in range(config.max_halvings + 1):
        try:
            return gsgd_step(arch, w, Xb, yb, eta, plan, config.loss, config.check_icr)
        except StepRejected:
            eta /= 2
    raise StepRejected(f"epoch {epoch}, step {step}: rejected after {config.max_halvings} halvings of lr={lr}")


def _unpack(data):
    if hasattr(data, "features"):
        return np.asarray(data.features, dtype=np.float64), np.asarray(data.labels)
    X, y = data
    return np.asarray(X, dtype=np.float64), np.asarray(y)
