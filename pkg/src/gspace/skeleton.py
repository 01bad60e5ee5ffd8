"""Skeleton weights and basis paths for fully connected ReLU MLPs.

Every hidden node ``(l, k)`` gets

* an incoming skeleton edge ``(k mod h[l-1]) -> k`` at layer ``l``;
* an outgoing skeleton edge ``k -> (k mod h[l+1])`` at layer ``l+1``.

The outgoing edges are the H *free* skeleton weights, held fixed by G-SGD.
Every other skeleton edge is a *carrier*: all of layer 1, plus the extra
incoming edges that appear where a layer is wider than the one before it
(the "dotted" case). Each carrier owns one all-basis path; each
non-skeleton edge owns one skip-basis path. That owned edge is the path's
pivot, and ordering pivots by layer makes both the gradient transform and
the weight allocation triangular.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path as FsPath

import numpy as np

from .errors import EnumerationTooLarge, GSpaceError
from .network import Architecture
from .paths import DEFAULT_ENUMERATION_CAP, Path, exact_rank, structure_matrix


class DefectivePlanError(GSpaceError):
    pass


@dataclass(frozen=True, eq=False)
class SkeletonPlan:
    arch: Architecture
    skeleton_edges: frozenset[int]
    free_skeleton_edges: tuple[int, ...]
    all_basis_paths: tuple[Path, ...]
    skip_basis_paths: tuple[Path, ...]
    dotted_edges: frozenset[int] = field(default_factory=frozenset)

    @property
    def basis_paths(self) -> tuple[Path, ...]:
        """All-basis paths followed by skip-basis paths; the G-space coordinate order."""
        return self.all_basis_paths + self.skip_basis_paths

    @property
    def dim(self) -> int:
        return len(self.all_basis_paths) + len(self.skip_basis_paths)

    @cached_property
    def carrier_edges(self) -> frozenset[int]:
        return self.skeleton_edges - frozenset(self.free_skeleton_edges)

    @cached_property
    def pivots(self) -> np.ndarray:
        """The edge each basis path owns: its carrier or its non-skeleton edge."""
        out = []
        for p in self.all_basis_paths:
            own = [e for e in p.edges if e in self.carrier_edges]
            out.append(max(own, default=-1))  # deepest carrier on the path
        for p in self.skip_basis_paths:
            own = [e for e in p.edges if e not in self.skeleton_edges]
            if len(own) != 1:
                raise DefectivePlanError(f"skip-basis path {p} has {len(own)} non-skeleton edges")
            out.append(own[0])
        return np.array(out, dtype=np.int64)

    @cached_property
    def edge_table(self) -> np.ndarray:
        """``(dim, L)`` edge indices of the basis paths."""
        if not self.basis_paths:
            return np.zeros((0, self.arch.L), dtype=np.int64)
        return np.array([p.edges for p in self.basis_paths], dtype=np.int64)

    @cached_property
    def pivot_column(self) -> np.ndarray:
        """Position (layer - 1) of each pivot inside its path."""
        return np.array([self.arch.edge_layer(int(e)) - 1 for e in self.pivots], dtype=np.int64)

    @cached_property
    def solve_groups(self) -> list[np.ndarray]:
        """Basis indices in allocation order: carriers by ascending layer, then skip paths.

        Within a group no path contains another's pivot, so each group can be
        solved in one vectorised pass. The gradient transform walks the groups
        in reverse.
        """
        n_all = len(self.all_basis_paths)
        layers = self.pivot_column[:n_all]
        groups = [np.flatnonzero(layers == c) for c in np.unique(layers)]
        groups.append(np.arange(n_all, self.dim))
        return [g for g in groups if len(g)]

    @cached_property
    def carrier_of(self) -> dict[tuple[int, int], int]:
        """Hidden node -> index of the first all-basis path through it."""
        out: dict[tuple[int, int], int] = {}
        for j, p in enumerate(self.all_basis_paths):
            for l in range(1, self.arch.L):
                out.setdefault((l, p.nodes[l]), j)
        return out

    @cached_property
    def path_of_carrier(self) -> dict[int, int]:
        return {int(self.pivots[j]): j for j in range(len(self.all_basis_paths))}

    @cached_property
    def path_of_nonskeleton(self) -> dict[int, int]:
        n_all = len(self.all_basis_paths)
        return {int(self.pivots[n_all + i]): n_all + i for i in range(len(self.skip_basis_paths))}

    def basis_columns(self) -> list[tuple[int, ...]]:
        return [p.edges for p in self.basis_paths]

    # -- text export -------------------------------------------------------

    def write(self, path) -> None:
        """Debug dump: one tagged record per line (ARCH/SKEL/FREE/DOTTED/ABASIS/SBASIS)."""
        fmt = lambda xs: ",".join(map(str, xs))  # noqa: E731
        lines = ["ARCH " + fmt(self.arch.widths)]
        lines += [f"SKEL {e}" for e in sorted(self.skeleton_edges)]
        lines += [f"FREE {e}" for e in self.free_skeleton_edges]
        lines += [f"DOTTED {e}" for e in sorted(self.dotted_edges)]
        n_all = len(self.all_basis_paths)
        for k, p in enumerate(self.basis_paths):
            tag = "ABASIS" if k < n_all else "SBASIS"
            lines.append(f"{tag} {self.pivots[k]} {fmt(p.nodes)} {fmt(p.edges)}")
        FsPath(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path) -> "SkeletonPlan":
        arch, skel, free, dotted, abasis, sbasis = None, set(), [], set(), [], []
        for line_no, line in enumerate(FsPath(path).read_text().splitlines(), 1):
            if not line.strip():
                continue
            tag, *rest = line.split()
            try:
                if tag == "ARCH":
                    arch = Architecture.parse(rest[0])
                elif tag == "SKEL":
                    skel.add(int(rest[0]))
                elif tag == "FREE":
                    free.append(int(rest[0]))
                elif tag == "DOTTED":
                    dotted.add(int(rest[0]))
                elif tag in ("ABASIS", "SBASIS"):
                    nodes = [int(i) for i in rest[1].split(",")]
                    (abasis if tag == "ABASIS" else sbasis).append(Path.from_nodes(arch, nodes))
                else:
                    raise ValueError(f"unknown record tag {tag!r}")
            except (IndexError, ValueError, AttributeError) as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from exc
        if arch is None:
            raise ValueError(f"{path}: missing ARCH record")
        return cls(arch, frozenset(skel), tuple(free), tuple(abasis), tuple(sbasis), frozenset(dotted))


def incoming_skeleton(arch: Architecture, l: int, k: int) -> int:
    return arch.edge_index(l, k % arch.widths[l - 1], k)


def outgoing_skeleton(arch: Architecture, l: int, k: int) -> int:
    return arch.edge_index(l + 1, k, k % arch.widths[l + 1])


def _prefix(arch: Architecture, l: int, k: int) -> list[int]:
    """Nodes from the input layer to ``(l, k)`` along incoming skeleton edges."""
    nodes = [k]
    for layer in range(l, 0, -1):
        nodes.append(nodes[-1] % arch.widths[layer - 1])
    return nodes[::-1]


def _suffix(arch: Architecture, l: int, k: int) -> list[int]:
    """Nodes from ``(l, k)`` to the output layer along outgoing skeleton edges."""
    nodes = [k]
    for layer in range(l + 1, arch.L + 1):
        nodes.append(nodes[-1] % arch.widths[layer])
    return nodes


def build_skeleton(arch: Architecture) -> SkeletonPlan:
    L = arch.L
    if L == 1:
        skip = tuple(Path.from_nodes(arch, (a, b)) for a in range(arch.d) for b in range(arch.K))
        return SkeletonPlan(arch, frozenset(), (), (), skip)

    free = tuple(outgoing_skeleton(arch, l, k) for l, k in arch.hidden_nodes())
    free_set = frozenset(free)
    incoming = {(l, k): incoming_skeleton(arch, l, k) for l, k in arch.hidden_nodes()}
    carriers = {node: e for node, e in incoming.items() if e not in free_set}
    skeleton = free_set | frozenset(carriers.values())

    heads = {}
    for (l, k), e in incoming.items():
        heads[e] = (l, k)
    dotted = frozenset(
        e for e in free
        if arch.edge_layer(e) < L and e not in heads
    )

    all_basis = []
    for (l, k) in carriers:
        all_basis.append(Path.from_nodes(arch, _prefix(arch, l, k) + _suffix(arch, l, k)[1:]))

    skip = []
    for e in range(arch.m):
        if e in skeleton:
            continue
        l, a, b = arch.edge_endpoints(e)
        skip.append(Path.from_nodes(arch, _prefix(arch, l - 1, a) + _suffix(arch, l, b)))

    return SkeletonPlan(arch, skeleton, free, tuple(sorted(all_basis)), tuple(sorted(skip)), dotted)


# ---------------------------------------------------------------------------
# counting

def count_basis_paths(arch: Architecture) -> int:
    """``m - H``: the dimension of G-space."""
    return arch.m - arch.H


def count_all_basis_paths(arch: Architecture) -> int:
    """Closed form ``h_1 + sum_{l=1}^{L-2} (max(h_l, h_{l+1}) - h_l)`` (0 when L == 1)."""
    h, L = arch.widths, arch.L
    if L == 1:
        return 0
    return h[1] + sum(max(h[l], h[l + 1]) - h[l] for l in range(1, L - 1))


def count_skeleton_edges(arch: Architecture) -> int:
    """Closed form ``h_1 + sum_{l=1}^{L-2} max(h_l, h_{l+1}) + h_{L-1}``."""
    h, L = arch.widths, arch.L
    if L == 1:
        return 0
    return h[1] + sum(max(h[l], h[l + 1]) for l in range(1, L - 1)) + h[L - 1]


def count_basis_equal_width(d: int, h: int, K: int, L: int) -> int:
    """``d h + (L - 2) h^2 + h K - (L - 1) h`` for ``[d:h:...:h:K]`` with L layers."""
    return d * h + (L - 2) * h * h + h * K - (L - 1) * h


# ---------------------------------------------------------------------------
# verification

@dataclass(frozen=True)
class BasisReport:
    count_ok: bool
    rank_ok: bool
    uniqueness_ok: bool
    coverage_ok: bool
    basis_count: int
    basis_rank: int
    full_rank: int | None  # None when enumeration was skipped

    @property
    def ok(self) -> bool:
        return self.count_ok and self.rank_ok and self.uniqueness_ok and self.coverage_ok


def verify_basis(arch: Architecture, plan: SkeletonPlan, cap: int = DEFAULT_ENUMERATION_CAP) -> BasisReport:
    target = count_basis_paths(arch)
    basis = plan.basis_paths
    basis_rank = exact_rank([p.edges for p in basis]) if basis else 0
    try:
        full_rank = exact_rank(structure_matrix(arch, cap))
    except EnumerationTooLarge:
        full_rank = None
    rank_ok = basis_rank == target and full_rank in (None, target)

    uses = np.zeros(arch.m, dtype=np.int64)
    for p in basis:
        uses[list(p.edges)] += 1
    nonskeleton = [e for e in range(arch.m) if e not in plan.skeleton_edges]
    uniqueness_ok = all(uses[e] == 1 for e in nonskeleton)

    covered = {(l, p.nodes[l]) for p in plan.all_basis_paths for l in range(1, arch.L)}
    coverage_ok = covered >= set(arch.hidden_nodes())

    return BasisReport(
        count_ok=len(basis) == target,
        rank_ok=rank_ok,
        uniqueness_ok=uniqueness_ok,
        coverage_ok=coverage_ok,
        basis_count=len(basis),
        basis_rank=basis_rank,
        full_rank=full_rank,
    )


def express_nonbasis(p: Path, plan: SkeletonPlan) -> dict[int, int]:
    """Integer coefficients ``a_k`` with ``p = sum_k a_k p^k`` in exponent space.

    Keys index ``plan.basis_paths``; zero coefficients are omitted. Hence
    ``v_p(w) = prod_k v_{p^k}(w) ** a_k`` for every nonzero ``w``.
    """
    m = plan.arch.m
    residual = p.exponent(m)
    coeffs: dict[int, int] = {}
    table = plan.edge_table
    for group in reversed(plan.solve_groups):
        a = residual[plan.pivots[group]].copy()
        for k, ak in zip(group, a):
            if ak:
                coeffs[int(k)] = int(ak)
                np.subtract.at(residual, table[k], ak)
    if np.any(residual):
        raise DefectivePlanError(f"path {p} is not in the span of the basis paths")
    return coeffs


def value_from_basis(basis_values, coeffs: dict[int, int]) -> float:
    v = 1.0
    for k, a in coeffs.items():
        v *= float(basis_values[k]) ** a
    return v
