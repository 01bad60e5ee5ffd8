"""Paths, the multiplicative ("generalized") linear space, and exact rank.

A path is stored by its node sequence ``(i_0, ..., i_L)`` and its L edge
indices. Its exponent vector in {0,1}^m marks the edges it uses; under the
map 1 -> 0, e -> 1 generalized linear independence of paths is ordinary
linear independence of exponent vectors over Q, which is what
:func:`exact_rank` decides.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import reduce
from math import gcd
from pathlib import Path as FsPath
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError, EnumerationTooLarge
from .network import Architecture, check_weights, forward

DEFAULT_ENUMERATION_CAP = 10**6


# ---------------------------------------------------------------------------
# generalized linear space on (R \ {0})^m

def _nonzero(w, name="w") -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if np.any(w == 0):
        raise DomainError(f"{name} has a zero entry; the space is (R\\{{0}})^m")
    return w


def gadd(w, w2) -> np.ndarray:
    """Generalized addition: the elementwise product."""
    w, w2 = _nonzero(w), _nonzero(w2, "w'")
    if w.shape != w2.shape:
        raise DomainError(f"length mismatch {w.shape} vs {w2.shape}")
    return w * w2


def gscale(alpha: float, w) -> np.ndarray:
    """Generalized scalar multiplication ``sgn(w) * |w| ** ln(alpha)``."""
    if not alpha > 0:
        raise DomainError(f"scalar must be positive, got {alpha}")
    w = _nonzero(w)
    return np.sign(w) * np.abs(w) ** math.log(alpha)


def gneg(w) -> np.ndarray:
    """Additive inverse in the generalized space (elementwise reciprocal)."""
    return 1.0 / _nonzero(w)


# ---------------------------------------------------------------------------
# paths

@dataclass(frozen=True, order=True)
class Path:
    nodes: tuple[int, ...]
    edges: tuple[int, ...]

    @classmethod
    def from_nodes(cls, arch: Architecture, nodes: Sequence[int]) -> "Path":
        nodes = tuple(int(i) for i in nodes)
        if len(nodes) != arch.L + 1:
            raise ValueError(f"path needs {arch.L + 1} nodes, got {nodes}")
        edges = tuple(arch.edge_index(l, nodes[l - 1], nodes[l]) for l in range(1, arch.L + 1))
        return cls(nodes, edges)

    @classmethod
    def from_edges(cls, arch: Architecture, edges: Sequence[int]) -> "Path":
        ends = [arch.edge_endpoints(int(e)) for e in edges]
        if [l for l, _, _ in ends] != list(range(1, arch.L + 1)):
            raise ValueError(f"edges {tuple(edges)} do not take one edge per layer")
        for (_, _, b), (_, a, _) in zip(ends, ends[1:]):
            if a != b:
                raise ValueError(f"edges {tuple(edges)} are not consecutive")
        return cls((ends[0][1],) + tuple(b for _, _, b in ends), tuple(int(e) for e in edges))

    def exponent(self, m: int) -> np.ndarray:
        p = np.zeros(m, dtype=np.int64)
        p[list(self.edges)] = 1
        return p

    def __contains__(self, edge) -> bool:
        return edge in self.edges

    def __str__(self):
        return "(" + ",".join(map(str, self.nodes)) + ")"


def path_value(w, p: Path) -> float:
    """Product of the weights along ``p``."""
    w = np.asarray(w, dtype=np.float64)
    v = 1.0
    for e in p.edges:
        v *= w[e]
    return float(v)


def generalized_inner(w, p: Path) -> float:
    """``<w, p>`` evaluated with the generalized operations.

    Edges with exponent e contribute ``e (.) w_e = w_e``; the unit-exponent
    edges are skipped since ``1 (.) w_e`` only carries ``sgn(w_e)``.
    """
    w = _nonzero(np.asarray(w, dtype=np.float64)[list(p.edges)])
    terms = [gscale(math.e, w[k:k + 1]) for k in range(len(w))]
    return float(reduce(gadd, terms, np.ones(1))[0])


def enumerate_paths(arch: Architecture, cap: int = DEFAULT_ENUMERATION_CAP) -> list[Path]:
    """All input-to-output paths in lexicographic node-sequence order."""
    n = arch.n_paths
    if n > cap:
        raise EnumerationTooLarge(f"{arch} has {n} paths, above the enumeration cap {cap}")
    return [Path.from_nodes(arch, nodes) for nodes in itertools.product(*map(range, arch.widths))]


def path_node_array(arch: Architecture, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """Node sequences of all paths as an ``(n, L+1)`` array, same order as :func:`enumerate_paths`."""
    if arch.n_paths > cap:
        raise EnumerationTooLarge(f"{arch} has {arch.n_paths} paths, above the enumeration cap {cap}")
    grids = np.meshgrid(*[np.arange(h) for h in arch.widths], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def path_edge_array(arch: Architecture, nodes: np.ndarray) -> np.ndarray:
    cols = [
        arch.offsets[l - 1] + nodes[:, l] * arch.widths[l - 1] + nodes[:, l - 1]
        for l in range(1, arch.L + 1)
    ]
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# structure matrix

@dataclass(frozen=True)
class StructureMatrix:
    """Sparse {0,1} matrix; column j lists the rows (edges) of path j."""

    m: int
    columns: tuple[tuple[int, ...], ...]

    @property
    def n(self) -> int:
        return len(self.columns)

    @property
    def shape(self) -> tuple[int, int]:
        return self.m, self.n

    @property
    def nnz(self) -> int:
        return sum(len(c) for c in self.columns)

    @classmethod
    def from_paths(cls, m: int, paths: Iterable[Path]) -> "StructureMatrix":
        return cls(m, tuple(tuple(p.edges) for p in paths))

    def to_dense(self) -> np.ndarray:
        A = np.zeros((self.m, self.n), dtype=np.int64)
        for j, col in enumerate(self.columns):
            A[list(col), j] = 1
        return A

    def write_triplets(self, path) -> None:
        """Write ``m n nnz`` then one ``row col 1`` line per nonzero (0-based)."""
        lines = [f"{self.m} {self.n} {self.nnz}"]
        for j, col in enumerate(self.columns):
            lines.extend(f"{r} {j} 1" for r in sorted(col))
        FsPath(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read_triplets(cls, path) -> "StructureMatrix":
        rows = FsPath(path).read_text().split("\n")
        m, n, nnz = map(int, rows[0].split())
        cols: list[list[int]] = [[] for _ in range(n)]
        count = 0
        for line in rows[1:]:
            if not line.strip():
                continue
            r, c, val = map(int, line.split())
            if val != 1:
                raise ValueError(f"structure matrix entries must be 1, got {val}")
            cols[c].append(r)
            count += 1
        if count != nnz:
            raise ValueError(f"header says {nnz} nonzeros, file has {count}")
        return cls(m, tuple(tuple(sorted(c)) for c in cols))


def structure_matrix(arch: Architecture, cap: int = DEFAULT_ENUMERATION_CAP) -> StructureMatrix:
    edges = path_edge_array(arch, path_node_array(arch, cap))
    return StructureMatrix(arch.m, tuple(map(tuple, edges.tolist())))


# ---------------------------------------------------------------------------
# exact rank

def _sparse(col) -> dict[int, int]:
    if isinstance(col, Mapping):
        return {int(r): int(v) for r, v in col.items() if v}
    return {int(r): 1 for r in col}


def exact_rank(M) -> int:
    """Rank over Q by fraction-free elimination on integer columns.

    ``M`` may be a :class:`StructureMatrix`, a dense integer array, or a
    sequence of sparse columns (row-index tuples or ``{row: int}`` maps).
    Columns are reduced one at a time against an echelon set keyed by
    leading row; each reduction cross-multiplies and divides out the
    content gcd, so entries stay integral and small.
    """
    if isinstance(M, StructureMatrix):
        columns = M.columns
    elif isinstance(M, np.ndarray):
        if not np.issubdtype(M.dtype, np.integer):
            raise TypeError("exact_rank needs an integer matrix")
        columns = [{int(r): int(M[r, j]) for r in np.flatnonzero(M[:, j])} for j in range(M.shape[1])]
    else:
        columns = M
    pivots: dict[int, dict[int, int]] = {}
    for col in columns:
        v = _sparse(col)
        while v:
            lead = min(v)
            piv = pivots.get(lead)
            if piv is None:
                pivots[lead] = v
                break
            a, b = piv[lead], v[lead]
            # v <- a*v - b*piv cancels the leading entry
            out = {r: a * x for r, x in v.items()}
            for r, x in piv.items():
                y = out.get(r, 0) - b * x
                if y:
                    out[r] = y
                else:
                    out.pop(r, None)
            g = reduce(gcd, out.values(), 0)
            v = {r: x // g for r, x in out.items()} if g > 1 else out
    return len(pivots)


# ---------------------------------------------------------------------------
# activations and the path-sum oracle

@dataclass(frozen=True)
class ActivationPattern:
    statuses: list[np.ndarray]  # one bool array per hidden layer

    def node_status(self, l: int, i: int) -> bool:
        return bool(self.statuses[l - 1][i])

    def path_status(self, p: Path) -> int:
        return int(all(self.statuses[l - 1][p.nodes[l]] for l in range(1, len(p.nodes) - 1)))

    def __eq__(self, other):
        if not isinstance(other, ActivationPattern) or len(self.statuses) != len(other.statuses):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.statuses, other.statuses))


def activation_pattern(arch: Architecture, w, x) -> ActivationPattern:
    trace = forward(arch, w, x)
    return ActivationPattern([o > 0 for o in trace.hidden_values])


def path_sum_output(arch: Architecture, w, x, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """Network outputs rebuilt as ``sum_p v_p(w) a_p(x; w) x_{i_0}`` over all paths."""
    w = check_weights(arch, w)
    x = np.asarray(x, dtype=np.float64)
    pattern = activation_pattern(arch, w, x)
    nodes = path_node_array(arch, cap)
    edges = path_edge_array(arch, nodes)
    values = np.prod(w[edges], axis=1)
    active = np.ones(len(nodes), dtype=bool)
    for l in range(1, arch.L):
        active &= pattern.statuses[l - 1][nodes[:, l]]
    terms = values * active * x[nodes[:, 0]]
    out = np.zeros(arch.K)
    np.add.at(out, nodes[:, -1], terms)
    return out
