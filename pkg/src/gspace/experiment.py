"""SGD against G-SGD from a balanced and a positively rescaled (unbalanced) start.

Both starts are positively scale-equivalent, so they define the same
function. G-SGD only sees basis-path values and should follow the same
trajectory from either; SGD acts on weights and in general does not.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .network import Architecture
from .optim import Metrics, TrainConfig, initial_weights, train, unbalanced_scaling
from .scaling import apply_scaling
from .skeleton import SkeletonPlan, build_skeleton
from .verify import relative_error

STARTS = ("balanced", "unbalanced")


@dataclass
class RunTrace:
    optimizer: str
    start: str
    metrics: Metrics
    weights: np.ndarray
    basis_trajectory: np.ndarray  # (steps + 1, dim), row 0 is the start


@dataclass
class Comparison:
    arch: Architecture
    scale: float
    runs: dict[tuple[str, str], RunTrace]

    def divergence(self, optimizer: str) -> float:
        """Largest relative gap between the two starts' basis values over all steps."""
        a = self.runs[optimizer, "balanced"].basis_trajectory
        b = self.runs[optimizer, "unbalanced"].basis_trajectory
        return float(relative_error(a, b).max())

    def final_train_loss(self, optimizer: str, start: str) -> float:
        return self.runs[optimizer, start].metrics.final.train_loss

    def start_gap(self, optimizer: str) -> float:
        """Relative difference of final training loss between the two starts."""
        a = self.final_train_loss(optimizer, "balanced")
        b = self.final_train_loss(optimizer, "unbalanced")
        return float(relative_error(a, b))

    def summary(self) -> dict:
        out = {
            "arch": list(self.arch.widths),
            "m": self.arch.m,
            "H": self.arch.H,
            "basis_dim": self.arch.m - self.arch.H,
            "invariant_ratio": self.arch.invariant_ratio,
            "scale": self.scale,
        }
        for start in STARTS:
            sgd, gsgd = self.final_train_loss("sgd", start), self.final_train_loss("gsgd", start)
            out[f"delta_train_loss_{start}"] = sgd - gsgd
            out[f"delta_test_acc_{start}"] = (self.runs["gsgd", start].metrics.final.test_acc
                                             - self.runs["sgd", start].metrics.final.test_acc)
        for opt in ("sgd", "gsgd"):
            out[opt] = {
                "final_train_loss": {s: self.final_train_loss(opt, s) for s in STARTS},
                "final_test_acc": {s: self.runs[opt, s].metrics.final.test_acc for s in STARTS},
                "start_gap": self.start_gap(opt),
                "trajectory_divergence": self.divergence(opt),
            }
        return out


def _path_values(w, edge_table):
    # no zero check: SGD weights may in principle hit zero
    return np.prod(w[edge_table], axis=1)


def compare(arch: Architecture, config: TrainConfig, train_data, test_data=None, scale: float = 100.0,
            sgd_lr: float | None = None, gsgd_lr: float | None = None,
            plan: SkeletonPlan | None = None) -> Comparison:
    """Four runs: each optimizer from ``w0`` and from ``w0`` rescaled by ``scale`` on hidden layer 1.

    All four share the config seed, hence the same minibatch order.
    """
    plan = plan or build_skeleton(arch)
    w0 = initial_weights(arch, config.seed, plan)
    starts = {"balanced": w0, "unbalanced": apply_scaling(arch, w0, unbalanced_scaling(arch, scale))}
    rates = {"sgd": sgd_lr or config.learning_rate, "gsgd": gsgd_lr or config.learning_rate}
    runs = {}
    for opt in ("sgd", "gsgd"):
        cfg = replace(config, optimizer=opt, learning_rate=rates[opt])
        for start, w in starts.items():
            traj = [_path_values(w, plan.edge_table)]
            res = train(arch, cfg, train_data, test_data, plan=plan, w0=w,
                        on_step=lambda _, wt: traj.append(_path_values(wt, plan.edge_table)))
            runs[opt, start] = RunTrace(opt, start, res.metrics, res.weights, np.array(traj))
    return Comparison(arch, scale, runs)
