"""Numerical and exact checks of the path-space structure of a given architecture.

Each check returns a :class:`CheckResult`; :func:`run_verification` runs the
whole suite that ``gspace verify`` prints.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import EnumerationTooLarge
from .network import Architecture, Loss, batch_gradient, batch_loss, forward
from .optim import basis_values, icr_gradients, weight_allocation
from .paths import (
    DEFAULT_ENUMERATION_CAP,
    activation_pattern,
    exact_rank,
    path_edge_array,
    path_node_array,
    path_sum_output,
    structure_matrix,
)
from .scaling import apply_scaling, random_scaling
from .skeleton import SkeletonPlan, build_skeleton, count_basis_paths, verify_basis

KINK_GUARD = 1e-4     # finite differences must not straddle a ReLU kink
PATTERN_GUARD = 1e-8  # activation statuses are compared only away from exact ties


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str  # "pass", "fail" or "skip"
    detail: str = ""
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return self.status != "fail"


def relative_error(a, b, floor: float = 0.0) -> np.ndarray:
    """Elementwise ``|a - b| / max(|a|, |b|, floor)``; 0 where both are 0."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    diff = np.abs(a - b)
    return np.divide(diff, scale, out=np.zeros_like(diff), where=scale > 0)


def min_abs_preactivation(arch: Architecture, w, x) -> float:
    pre = forward(arch, w, x).pre_activations
    return min((np.abs(z).min() for z in pre), default=np.inf)


def random_weights(arch: Architecture, rng: np.random.Generator) -> np.ndarray:
    """Gaussian weights bounded away from zero (nothing in the suite needs exact zeros)."""
    w = rng.standard_normal(arch.m)
    return np.where(np.abs(w) < 1e-3, 1e-3, w)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        return CheckResult(res.name, res.status, res.detail, time.perf_counter() - t0)
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def check_rank(arch: Architecture, cap: int = DEFAULT_ENUMERATION_CAP) -> CheckResult:
    target = count_basis_paths(arch)
    try:
        M = structure_matrix(arch, cap)
    except EnumerationTooLarge:
        return CheckResult("rank", "skip", f"{arch.n_paths} paths exceed cap {cap}")
    r = exact_rank(M)
    status = "pass" if r == target else "fail"
    return CheckResult("rank", status, f"rank {r} {'=' if r == target else '!='} m-H = {arch.m}-{arch.H} = {target}")


@_timed
def check_basis(arch: Architecture, plan: SkeletonPlan, cap: int = DEFAULT_ENUMERATION_CAP) -> CheckResult:
    rep = verify_basis(arch, plan, cap)
    flags = f"count={rep.count_ok} rank={rep.rank_ok} unique={rep.uniqueness_ok} cover={rep.coverage_ok}"
    return CheckResult("basis", "pass" if rep.ok else "fail", f"{rep.basis_count} basis paths, {flags}")


@_timed
def check_scaling_invariance(arch: Architecture, samples: int = 100, seed: int = 0,
                             cap: int = DEFAULT_ENUMERATION_CAP, plan: SkeletonPlan | None = None,
                             output_tol: float = 1e-9, path_tol: float = 1e-10) -> CheckResult:
    """Outputs, path values and activation patterns under random positive scalings."""
    rng = np.random.default_rng(seed)
    try:
        edges = path_edge_array(arch, path_node_array(arch, cap))
        which = "all paths"
    except EnumerationTooLarge:
        plan = plan or build_skeleton(arch)
        edges = plan.edge_table
        which = "basis paths"
    worst_out = worst_path = 0.0
    pattern_ok = True
    guarded = 0
    for _ in range(samples):
        w = random_weights(arch, rng)
        g = random_scaling(arch, rng)
        x = rng.standard_normal(arch.d)
        w2 = apply_scaling(arch, w, g)
        out, out2 = forward(arch, w, x).outputs, forward(arch, w2, x).outputs
        worst_out = max(worst_out, relative_error(out, out2, 1e-300).max())
        worst_path = max(worst_path, relative_error(np.prod(w[edges], axis=1), np.prod(w2[edges], axis=1)).max())
        if min_abs_preactivation(arch, w, x) >= PATTERN_GUARD:
            guarded += 1
            pattern_ok &= activation_pattern(arch, w, x) == activation_pattern(arch, w2, x)
    ok = worst_out <= output_tol and worst_path <= path_tol and pattern_ok
    detail = (f"{samples} samples: output err {worst_out:.1e}, {which} err {worst_path:.1e}, "
              f"patterns {'equal' if pattern_ok else 'DIFFER'} on {guarded} guarded")
    return CheckResult("scaling-invariance", "pass" if ok else "fail", detail)


@_timed
def check_round_trip(arch: Architecture, plan: SkeletonPlan, samples: int = 100, seed: int = 0,
                     tol: float = 1e-12) -> CheckResult:
    """Basis values of ``w * weight_allocation(R)`` against ``v * R``; free ratios exactly 1."""
    rng = np.random.default_rng(seed)
    free = list(plan.free_skeleton_edges)
    worst = 0.0
    free_ok = True
    for _ in range(samples):
        w = random_weights(arch, rng)
        R = np.exp(rng.uniform(-1, 1, plan.dim)) * rng.choice([-1.0, 1.0], plan.dim)
        r = weight_allocation(R, w, plan)
        free_ok &= bool(np.all(r[free] == 1.0))
        worst = max(worst, relative_error(basis_values(w * r, plan), basis_values(w, plan) * R).max())
    ok = worst <= tol and free_ok
    return CheckResult("icr-wa-round-trip", "pass" if ok else "fail",
                       f"{samples} samples: max rel err {worst:.1e}, free ratios {'1' if free_ok else 'CHANGED'}")


def icr_finite_difference(arch: Architecture, plan: SkeletonPlan, w, X, y, loss=Loss.CROSS_ENTROPY,
                          eps: float = 1e-6, floor: float = 1e-3) -> np.ndarray:
    """Relative error between ICR gradients and central differences along WA curves.

    The curve for basis path ``j`` multiplies ``v_j`` by ``1 + t`` and leaves
    every other basis value fixed; its derivative at ``t = 0`` is
    ``v_j * dl/dv_j``. Errors are relative to ``max(|fd|, |icr|, floor)``.
    """
    v = basis_values(w, plan)
    grad_v = icr_gradients(batch_gradient(arch, w, X, y, loss), w, v, plan)
    fd = np.empty(plan.dim)
    for j in range(plan.dim):
        R = np.ones(plan.dim)
        R[j] = 1 + eps
        up = batch_loss(arch, w * weight_allocation(R, w, plan), X, y, loss)
        R[j] = 1 - eps
        down = batch_loss(arch, w * weight_allocation(R, w, plan), X, y, loss)
        fd[j] = (up - down) / (2 * eps)
    return relative_error(fd, v * grad_v, floor)


@_timed
def check_icr_gradient(arch: Architecture, plan: SkeletonPlan, samples: int = 50, seed: int = 0,
                       tol: float = 1e-5, loss=Loss.CROSS_ENTROPY) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    used = tries = 0
    while used < samples and tries < 20 * samples:
        tries += 1
        w = random_weights(arch, rng)
        x = rng.standard_normal(arch.d)
        if min_abs_preactivation(arch, w, x) < KINK_GUARD:
            continue
        y = np.array([rng.integers(arch.K)])
        worst = max(worst, icr_finite_difference(arch, plan, w, x[None, :], y, loss).max())
        used += 1
    ok = worst <= tol and used == samples
    return CheckResult("icr-gradient", "pass" if ok else "fail",
                       f"{used} guarded points: max rel err {worst:.1e}")


@_timed
def check_path_sum(arch: Architecture, samples: int = 100, seed: int = 0,
                   cap: int = DEFAULT_ENUMERATION_CAP, tol: float = 1e-10) -> CheckResult:
    if arch.n_paths > cap:
        return CheckResult("path-sum", "skip", f"{arch.n_paths} paths exceed cap {cap}")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        w = random_weights(arch, rng)
        x = rng.standard_normal(arch.d)
        out = forward(arch, w, x).outputs
        worst = max(worst, relative_error(out, path_sum_output(arch, w, x, cap), 1e-300).max())
    return CheckResult("path-sum", "pass" if worst <= tol else "fail", f"{samples} samples: max rel err {worst:.1e}")


def run_verification(arch: Architecture, cap: int = DEFAULT_ENUMERATION_CAP, samples: int = 100,
                     seed: int = 0, icr_samples: int = 0) -> list[CheckResult]:
    plan = build_skeleton(arch)
    results = [
        check_rank(arch, cap),
        check_basis(arch, plan, cap),
        check_scaling_invariance(arch, samples, seed, cap, plan),
        check_round_trip(arch, plan, samples, seed),
        check_path_sum(arch, samples, seed, cap),
    ]
    if icr_samples:
        results.append(check_icr_gradient(arch, plan, icr_samples, seed))
    return results


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  status  time     detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {r.status.upper():<6}  {r.seconds:6.2f}s  {r.detail}")
    return "\n".join(lines)

