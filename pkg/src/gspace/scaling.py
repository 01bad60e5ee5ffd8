"""Positive scaling operators on hidden nodes and scale-equivalence tests.

A scaling vector holds one positive factor per hidden node, layer-major.
Applying it multiplies each hidden node's incoming weights by its factor and
divides its outgoing weights by the same factor; input and output nodes
carry the implicit factor 1.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError, ShapeError
from .network import Architecture, check_weights
from .paths import path_value


def _check_scaling(arch: Architecture | None, c) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 1 or (arch is not None and c.shape[0] != arch.H):
        raise ShapeError(f"scaling vector has shape {c.shape}, expected ({arch.H if arch else 'H'},)")
    if not np.all(c > 0):
        raise DomainError("scaling factors must be strictly positive")
    return c


def node_factors(arch: Architecture, c) -> list[np.ndarray]:
    """Per-layer factor arrays for layers 0..L, with ones at input and output."""
    c = _check_scaling(arch, c)
    out = [np.ones(arch.d)]
    pos = 0
    for h in arch.widths[1:-1]:
        out.append(c[pos:pos + h])
        pos += h
    out.append(np.ones(arch.K))
    return out


def apply_scaling(arch: Architecture, w, c) -> np.ndarray:
    """``w'(l, a, b) = w(l, a, b) * c(l, b) / c(l-1, a)``."""
    w = check_weights(arch, w)
    f = node_factors(arch, c)
    out = np.empty_like(w)
    for l in range(1, arch.L + 1):
        M = w[arch.offsets[l - 1]:arch.offsets[l]].reshape(arch.widths[l], arch.widths[l - 1])
        scaled = M * f[l][:, None] / f[l - 1][None, :]
        out[arch.offsets[l - 1]:arch.offsets[l]] = scaled.ravel()
    return out


def compose(c1, c2) -> np.ndarray:
    """The operator equal to applying ``c2`` first, then ``c1``."""
    c1, c2 = _check_scaling(None, c1), _check_scaling(None, c2)
    if c1.shape != c2.shape:
        raise ShapeError(f"cannot compose scalings of length {c1.shape[0]} and {c2.shape[0]}")
    return c1 * c2


def inverse(c) -> np.ndarray:
    return 1.0 / _check_scaling(None, c)


def identity(arch: Architecture) -> np.ndarray:
    return np.ones(arch.H)


def random_scaling(arch: Architecture, rng: np.random.Generator, low=0.1, high=10.0) -> np.ndarray:
    """Factors drawn log-uniformly from ``[low, high]``."""
    return np.exp(rng.uniform(np.log(low), np.log(high), size=arch.H))


def check_equivalence(arch: Architecture, w, w2, plan, tol: float = 1e-9) -> bool:
    """Whether ``w`` and ``w2`` are positively scale-equivalent.

    Uses the finite criterion: free skeleton weights share signs and every
    basis path value agrees to ``tol * max(1, |v|)``.
    """
    w, w2 = check_weights(arch, w), check_weights(arch, w2)
    if np.any(w == 0) or np.any(w2 == 0):
        raise DomainError("equivalence is only defined for weights without zeros")
    free = list(plan.free_skeleton_edges)
    if np.any(np.sign(w[free]) != np.sign(w2[free])):
        return False
    for p in plan.basis_paths:
        a, b = path_value(w, p), path_value(w2, p)
        if abs(a - b) > tol * max(1.0, abs(a)):
            return False
    return True
