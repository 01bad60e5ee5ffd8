import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gspace.errors import DomainError, EnumerationTooLarge
from gspace.network import Architecture, forward
from gspace.paths import (
    Path,
    StructureMatrix,
    activation_pattern,
    enumerate_paths,
    exact_rank,
    gadd,
    generalized_inner,
    gneg,
    gscale,
    path_sum_output,
    path_value,
    structure_matrix,
)

from conftest import FIG1_W, SMALL_ARCHS


def fraction_rank(A) -> int:
    """Plain Gauss-Jordan over Fractions; slow but obviously correct."""
    rows = [[Fraction(int(x)) for x in row] for row in np.asarray(A)]
    rank, ncols = 0, len(rows[0]) if rows else 0
    for c in range(ncols):
        pivot = next((r for r in range(rank, len(rows)) if rows[r][c] != 0), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for r in range(len(rows)):
            if r != rank and rows[r][c] != 0:
                f = rows[r][c] / rows[rank][c]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[rank])]
        rank += 1
    return rank


nonzero = st.floats(min_value=0.05, max_value=20, allow_nan=False).flatmap(
    lambda x: st.sampled_from([x, -x]))
vectors = st.lists(nonzero, min_size=3, max_size=3).map(np.array)
alphas = st.floats(min_value=0.2, max_value=5.0)


class TestGeneralizedSpace:
    def test_gadd_examples(self):
        w = np.array([2.0, -3.0])
        assert gadd(w, np.ones(2)).tolist() == [2.0, -3.0]
        assert gadd(w, np.array([-1.0, 2.0])).tolist() == [-2.0, -6.0]
        np.testing.assert_allclose(gadd(w, 1.0 / w), np.ones(2), rtol=1e-15)

    def test_gscale_examples(self):
        w = np.array([2.0, -3.0])
        np.testing.assert_allclose(gscale(math.e, w), w, rtol=1e-15)
        np.testing.assert_allclose(gscale(math.e ** 2, w), [4.0, -9.0], rtol=1e-14)
        assert gscale(1.0, np.array([2.0, -0.3, 5.0])).tolist() == [1.0, -1.0, 1.0]

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            gadd(np.array([0.0, 1.0]), np.ones(2))
        with pytest.raises(DomainError):
            gscale(0.0, np.ones(2))
        with pytest.raises(DomainError):
            gscale(-1.0, np.ones(2))

    def test_negation_is_additive_inverse(self):
        w = np.array([2.0, -0.5, 7.0])
        np.testing.assert_allclose(gadd(w, gneg(w)), np.ones(3), rtol=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(vectors, vectors, vectors)
    def test_addition_axioms(self, a, b, c):
        np.testing.assert_array_equal(gadd(a, b), gadd(b, a))
        np.testing.assert_allclose(gadd(gadd(a, b), c), gadd(a, gadd(b, c)), rtol=1e-14)

    @settings(max_examples=200, deadline=None)
    @given(vectors, vectors, alphas, alphas)
    def test_scalar_axioms(self, a, b, x, y):
        np.testing.assert_allclose(gscale(x, gadd(a, b)), gadd(gscale(x, a), gscale(x, b)), rtol=1e-12)
        # nesting multiplies the exponents ln x * ln y
        np.testing.assert_allclose(gscale(math.exp(math.log(x) * math.log(y)), a), gscale(x, gscale(y, a)),
                                   rtol=1e-12)
        # x * y adds them; the sign appears once per factor on the right, hence the extra sgn
        np.testing.assert_allclose(gscale(x * y, a), gadd(gscale(x, a), gscale(y, a)) * np.sign(a), rtol=1e-12)

    def test_nested_scaling_is_not_product_scaling(self):
        w = np.array([2.0])
        assert gscale(math.e ** 2, gscale(math.e ** 3, w))[0] == pytest.approx(2.0 ** 6)
        assert gscale(math.e ** 6, w)[0] == pytest.approx(2.0 ** 6)
        assert gscale(math.e ** 5, w)[0] != pytest.approx(2.0 ** 6)


class TestPaths:
    def test_fig1_values(self, fig1):
        w = np.array([1.3, -0.7, 2.1, 0.4])
        ps = enumerate_paths(fig1)
        assert [p.edges for p in ps] == [(0, 2), (0, 3), (1, 2), (1, 3)]
        expected = [w[0] * w[2], w[0] * w[3], w[1] * w[2], w[1] * w[3]]
        assert [path_value(w, p) for p in ps] == expected

    def test_fig1_hand_values(self, fig1):
        v = [path_value(FIG1_W, p) for p in enumerate_paths(fig1)]
        assert v == [1.0, 6.0, -0.5, -3.0]
        assert v[3] == v[1] * v[2] / v[0]

    def test_all_ones(self):
        a = Architecture([3, 4, 2])
        assert all(path_value(np.ones(a.m), p) == 1.0 for p in enumerate_paths(a))

    @pytest.mark.parametrize("widths,count", [([2, 1, 2], 4), ([3, 2], 6), ([2, 2, 2], 8), ([3, 4, 2], 24)])
    def test_enumeration_counts(self, widths, count):
        ps = enumerate_paths(Architecture(widths))
        assert len(ps) == count == len(set(ps))
        assert [p.nodes for p in ps] == sorted(p.nodes for p in ps)

    def test_single_layer_paths_are_edges(self):
        a = Architecture([3, 2])
        assert sorted(p.edges[0] for p in enumerate_paths(a)) == list(range(6))

    def test_cap(self):
        with pytest.raises(EnumerationTooLarge):
            enumerate_paths(Architecture([10, 10, 10]), cap=999)

    def test_from_edges_round_trip(self):
        a = Architecture([3, 4, 2, 3])
        for p in enumerate_paths(a):
            assert Path.from_edges(a, p.edges) == p
            assert p.exponent(a.m).sum() == a.L
        with pytest.raises(ValueError):
            Path.from_edges(a, (0, a.edge_index(2, 1, 0), a.edge_index(3, 0, 0)))

    def test_generalized_inner_equals_value(self, rng):
        a = Architecture([2, 3, 2])
        w = rng.standard_normal(a.m)
        for p in enumerate_paths(a):
            assert generalized_inner(w, p) == pytest.approx(path_value(w, p), rel=1e-13)

    def test_fig1_dependency(self, fig1, rng):
        ps = enumerate_paths(fig1)
        for _ in range(100):
            w = rng.standard_normal(4)
            v = [path_value(w, p) for p in ps]
            assert v[3] * v[0] == pytest.approx(v[1] * v[2], rel=1e-12)


class TestStructureMatrix:
    def test_fig1_columns(self, fig1):
        A = structure_matrix(fig1).to_dense()
        expected = np.array([[1, 0, 1, 0], [1, 0, 0, 1], [0, 1, 1, 0], [0, 1, 0, 1]]).T
        np.testing.assert_array_equal(A, expected)

    def test_single_layer_identity(self):
        A = structure_matrix(Architecture([3, 2])).to_dense()
        assert sorted(map(tuple, A.T)) == sorted(map(tuple, np.eye(6, dtype=int)))

    def test_columns_have_L_ones(self):
        a = Architecture([2, 2, 2])
        A = structure_matrix(a).to_dense()
        assert A.shape == (8, 8) and np.all(A.sum(axis=0) == 2)

    def test_triplet_round_trip(self, tmp_path):
        M = structure_matrix(Architecture([2, 3, 2]))
        M.write_triplets(tmp_path / "a.txt")
        first = (tmp_path / "a.txt").read_text().splitlines()[0]
        assert first == f"{M.m} {M.n} {M.nnz}"
        assert StructureMatrix.read_triplets(tmp_path / "a.txt") == M


class TestExactRank:
    @pytest.mark.parametrize("widths,rank", [([2, 1, 2], 3), ([3, 2], 6), ([2, 2, 2], 6)])
    def test_examples(self, widths, rank):
        assert exact_rank(structure_matrix(Architecture(widths))) == rank

    @pytest.mark.parametrize("arch", SMALL_ARCHS)
    def test_matches_fraction_oracle(self, arch):
        M = structure_matrix(Architecture.parse(arch))
        assert exact_rank(M) == fraction_rank(M.to_dense())

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.data())
    def test_random_integer_matrices(self, rows, cols, data):
        entries = data.draw(st.lists(st.integers(-3, 3), min_size=rows * cols, max_size=rows * cols))
        A = np.array(entries, dtype=np.int64).reshape(rows, cols)
        assert exact_rank(A) == fraction_rank(A)

    def test_input_forms_agree(self):
        M = structure_matrix(Architecture([2, 2, 2]))
        assert exact_rank(M) == exact_rank(M.to_dense()) == exact_rank(list(M.columns)) == 6

    def test_rejects_float(self):
        with pytest.raises(TypeError):
            exact_rank(np.eye(2))


class TestActivationAndPathSum:
    def test_statuses(self, fig1):
        a = Architecture([3, 4, 2])
        pat = activation_pattern(a, np.ones(a.m), np.ones(3))
        assert all(s.all() for s in pat.statuses)
        assert not activation_pattern(fig1, FIG1_W, [-1.0, 0.0]).node_status(1, 0)

    def test_fig1_path_sum(self, fig1):
        out = path_sum_output(fig1, FIG1_W, [1.0, 1.0])
        assert out[0] == pytest.approx(0.5, rel=1e-15)
        np.testing.assert_allclose(out, forward(fig1, FIG1_W, [1.0, 1.0]).outputs, rtol=1e-15)

    def test_dead_network(self):
        a = Architecture([2, 3, 2])
        w = np.ones(a.m)
        w[:6] = -1.0
        assert np.all(path_sum_output(a, w, np.array([1.0, 2.0])) == 0)

    def test_sweep_3_4_2(self, rng):
        a = Architecture([3, 4, 2])
        for _ in range(100):
            w, x = rng.standard_normal(a.m), rng.standard_normal(3)
            np.testing.assert_allclose(path_sum_output(a, w, x), forward(a, w, x).outputs, rtol=1e-10)

    def test_path_status_product(self, rng):
        a = Architecture([2, 3, 3, 2])
        w, x = rng.standard_normal(a.m), rng.standard_normal(2)
        pat = activation_pattern(a, w, x)
        for p in enumerate_paths(a):
            assert pat.path_status(p) == int(pat.node_status(1, p.nodes[1]) and pat.node_status(2, p.nodes[2]))
