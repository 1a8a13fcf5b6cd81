import warnings
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdfeel._errors import InvalidArgumentError, InvalidTopologyError
from sdfeel.data import ClusterAssignment, assign_clusters
from sdfeel.protocol import AggregationSchedule
from sdfeel.spectral import matrix_power, operator_norm
from sdfeel.topology import (
    ClusterSizes,
    ServerGraph,
    build_mixing_matrix,
    build_selection_matrices,
    complete,
    erdos_renyi,
    exact_averaging_matrix,
    laplacian,
    ring,
    ring_with_chords,
    spectral_gap,
    transition_matrix,
)

from conftest import ring_laplacian_eigs


def mixing_oracle(edges, D, sizes):
    """Direct evaluation of P = I - 2/(l1 + l_{D-1}) L Omega with numpy's general eigensolver."""
    A = np.zeros((D, D))
    for i, j in edges:
        A[i, j] = A[j, i] = 1.0
    L = np.diag(A.sum(1)) - A
    Lp = L @ np.diag(sizes.sum() / sizes)
    lam = np.sort(np.linalg.eigvals(Lp).real)[::-1]
    return np.eye(D) - 2.0 / (lam[0] + lam[D - 2]) * Lp


class TestServerGraph:
    def test_validation(self):
        with pytest.raises(InvalidTopologyError):
            ServerGraph(1, ())
        with pytest.raises(InvalidTopologyError):
            ServerGraph(3, ((0, 0), (1, 2)))
        with pytest.raises(InvalidTopologyError):
            ServerGraph(3, ((0, 1), (1, 0), (1, 2)))
        with pytest.raises(InvalidTopologyError):
            ServerGraph(3, ((0, 1), (1, 3)))
        with pytest.raises(InvalidTopologyError):
            ServerGraph(4, ((0, 1), (2, 3)))

    def test_generators(self):
        assert len(ring(6).edges) == 6
        assert len(complete(6).edges) == 15
        g = ring_with_chords(8, 3, seed=4)
        assert len(g.edges) == 11 and g == ring_with_chords(8, 3, seed=4)
        for s in range(20):
            assert erdos_renyi(7, 0.3, seed=s).is_connected()


class TestLaplacian:
    def test_small_cases(self):
        np.testing.assert_array_equal(laplacian(ring(2)), [[1, -1], [-1, 1]])
        np.testing.assert_array_equal(laplacian(complete(3)), [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]])

    def test_ring6(self):
        L = laplacian(ring(6))
        assert np.all(np.diag(L) == 2)
        for d in range(6):
            assert L[d, (d + 1) % 6] == -1 and L[d, (d - 1) % 6] == -1
        np.testing.assert_allclose(np.linalg.eigvalsh(L)[::-1], ring_laplacian_eigs(6), atol=1e-12)

    @given(st.integers(2, 12), st.floats(0.2, 0.9), st.integers(0, 10 ** 6))
    @settings(max_examples=40, deadline=None)
    def test_properties(self, n, p, seed):
        L = laplacian(erdos_renyi(n, p, seed))
        np.testing.assert_array_equal(L, L.T)
        np.testing.assert_array_equal(L.sum(1), 0)
        assert np.linalg.eigvalsh(L).min() > -1e-10


class TestMixingMatrix:
    def test_two_servers(self):
        P = build_mixing_matrix(ring(2))
        np.testing.assert_allclose(P.matrix, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)
        assert P.zeta == pytest.approx(0.0, abs=1e-12)
        assert spectral_gap(P) == pytest.approx(0.0, abs=1e-12)

    def test_ring6(self):
        P = build_mixing_matrix(ring(6), ClusterSizes.equal(6, 100))
        for d in range(6):
            assert P.matrix[d, d] == pytest.approx(0.2, abs=1e-12)
            assert P.matrix[d, (d + 1) % 6] == pytest.approx(0.4, abs=1e-12)
            assert P.matrix[d, (d + 3) % 6] == pytest.approx(0.0, abs=1e-12)
        assert P.zeta == pytest.approx(0.6, abs=1e-9)
        assert spectral_gap(P) == pytest.approx(0.6, abs=1e-9)

    def test_complete6(self):
        P = build_mixing_matrix(complete(6), ClusterSizes.equal(6))
        np.testing.assert_allclose(P.matrix, np.full((6, 6), 1 / 6), atol=1e-12)
        assert P.zeta == pytest.approx(0.0, abs=1e-9)

    @given(st.integers(2, 10), st.floats(0.2, 1.0), st.integers(0, 10 ** 6))
    @settings(max_examples=50, deadline=None)
    def test_equal_sizes_doubly_stochastic(self, n, p, seed):
        g = erdos_renyi(n, p, seed)
        P = build_mixing_matrix(g).matrix
        np.testing.assert_allclose(P, P.T, atol=1e-12)
        np.testing.assert_allclose(P.sum(0), 1, atol=1e-10)
        np.testing.assert_allclose(P.sum(1), 1, atol=1e-10)
        lam = np.linalg.eigvalsh(P)
        assert lam.max() == pytest.approx(1.0, abs=1e-10)
        assert lam.min() >= -1 - 1e-10
        assert 0 <= spectral_gap(P) < 1

    @given(st.integers(3, 9), st.integers(0, 10 ** 6))
    @settings(max_examples=40, deadline=None)
    def test_unequal_sizes_against_oracle(self, n, seed):
        rng = np.random.default_rng(seed)
        g = erdos_renyi(n, 0.5, seed)
        sizes = rng.integers(1, 50, size=n).astype(float)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            P = build_mixing_matrix(g, ClusterSizes(sizes))
        np.testing.assert_allclose(P.matrix, mixing_oracle(g.edges, n, sizes), atol=1e-10)
        # columns sum to one and the data fractions are a fixed point
        np.testing.assert_allclose(P.matrix.sum(0), 1, atol=1e-10)
        frac = sizes / sizes.sum()
        np.testing.assert_allclose(P.matrix @ frac, frac, atol=1e-12)
        eig = np.sort(np.abs(np.linalg.eigvals(P.matrix)))[::-1]
        assert P.zeta == pytest.approx(eig[1], abs=1e-9)
        assert spectral_gap(P) == pytest.approx(eig[1], abs=1e-9)

    def test_unequal_sizes_warn(self):
        with pytest.warns(UserWarning):
            build_mixing_matrix(ring(4), ClusterSizes([1.0, 2.0, 3.0, 4.0]))

    def test_single_chord_on_ring6(self):
        # With the optimal constant step, zeta = (l1 - l_{D-1}) / (l1 + l_{D-1}). A chord
        # raises l1 faster than l_{D-1}, so every single chord on ring-6 increases zeta.
        base = build_mixing_matrix(ring(6)).zeta
        for e in combinations(range(6), 2):
            if e in ring(6).edges:
                continue
            g = ring(6).with_edge(*e)
            lam = np.sort(np.linalg.eigvalsh(laplacian(g)))[::-1]
            expected = (lam[0] - lam[4]) / (lam[0] + lam[4])
            z = build_mixing_matrix(g).zeta
            assert z == pytest.approx(expected, abs=1e-12)
            assert z > base
        assert build_mixing_matrix(complete(6)).zeta < base

    def test_size_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            build_mixing_matrix(ring(4), ClusterSizes.equal(3))


class TestSelection:
    def test_single_server(self):
        sel = build_selection_matrices(ClusterAssignment(2, 1, (0, 0)), [3, 3])
        np.testing.assert_allclose(sel.V, [[0.5], [0.5]])
        np.testing.assert_array_equal(sel.B, [[1, 1]])

    def test_hand_example(self):
        sel = build_selection_matrices(ClusterAssignment(3, 2, (0, 1, 1)), [2, 1, 1])
        np.testing.assert_allclose(sel.V[:, 0], [1, 0, 0])
        np.testing.assert_allclose(sel.V[:, 1], [0, 0.5, 0.5])
        np.testing.assert_allclose(sel.H1 @ sel.weights, sel.weights)

    def test_structure(self):
        sizes = np.array([3, 1, 4, 1, 5, 9, 2, 6.0])
        sel = build_selection_matrices(assign_clusters(8, 3, "round_robin"), sizes)
        assert np.all((sel.V != 0).sum(1) == 1)
        np.testing.assert_allclose(sel.V.sum(0), 1)
        np.testing.assert_array_equal(sel.B.sum(0), 1)
        np.testing.assert_allclose(sel.B @ sel.V, np.eye(3))
        # aggregation acts by right-multiplication, so H1 = VB is column-stochastic
        np.testing.assert_allclose(sel.H1.sum(0), 1)

    def test_errors(self):
        with pytest.raises(InvalidArgumentError):
            build_selection_matrices(ClusterAssignment(2, 1, (0, 0)), [1, 0])


class TestTransition:
    sel = build_selection_matrices(assign_clusters(6, 3), np.ones(6))
    P = build_mixing_matrix(ring(3))

    def test_branches(self):
        s = AggregationSchedule(2, 3, 2)
        np.testing.assert_array_equal(transition_matrix(1, AggregationSchedule(2, 1, 1), self.sel, self.P), np.eye(6))
        np.testing.assert_allclose(transition_matrix(2, s, self.sel, self.P), self.sel.V @ self.sel.B)
        H2 = self.sel.V @ self.P.matrix @ self.P.matrix @ self.sel.B
        np.testing.assert_allclose(transition_matrix(6, s, self.sel, self.P), H2, atol=1e-14)
        with pytest.raises(InvalidArgumentError):
            transition_matrix(0, s, self.sel, self.P)


def random_instance(seed, equal):
    rng = np.random.default_rng(seed)
    D = int(rng.integers(2, 7))
    per = int(rng.integers(1, 4))
    C = D * per
    g = erdos_renyi(D, float(rng.uniform(0.3, 1.0)), seed)
    if equal:
        assignment = assign_clusters(C, D, "round_robin")
        sizes = np.full(C, float(rng.integers(1, 20)))
    else:
        server_of = np.concatenate([np.arange(D), rng.integers(0, D, size=C - D)])
        assignment = ClusterAssignment(C, D, tuple(rng.permutation(server_of).tolist()))
        sizes = rng.integers(1, 30, size=C).astype(float)
    sel = build_selection_matrices(assignment, sizes)
    cluster = sel.B @ sizes
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        P = build_mixing_matrix(g, ClusterSizes(cluster))
    return sel, P, int(rng.integers(1, 4))


@pytest.mark.parametrize("seed", range(25))
@pytest.mark.parametrize("equal", [True, False])
def test_h_and_t_identities(seed, equal):
    sel, P, alpha = random_instance(seed, equal)
    C = sel.V.shape[0]
    one, m, M = np.ones(C), sel.weights, sel.M
    for H in (sel.H1, sel.H2(P, alpha)):
        np.testing.assert_allclose(one @ H, one, atol=1e-10)
        np.testing.assert_allclose(H @ m, m, atol=1e-10)
    s = AggregationSchedule(2, 2, alpha)
    for k in (1, 2, 4):
        T = transition_matrix(k, s, sel, P)
        np.testing.assert_allclose(T @ M, M, atol=1e-10)
        np.testing.assert_allclose(M @ T, M, atol=1e-10)
    if equal:
        H2 = sel.H2(P, alpha)
        for j in (1, 2, 3):
            assert operator_norm(matrix_power(H2, j) - M) == pytest.approx(P.zeta ** (j * alpha), abs=1e-8)
        assert operator_norm(sel.H1 - M) == pytest.approx(1.0, abs=1e-10)
        # spectrum of H2 is that of P^alpha padded with C - D zeros
        h = np.sort(np.linalg.eigvals(H2).real)
        p = np.sort(np.concatenate([np.linalg.eigvalsh(matrix_power(P.matrix, alpha)),
                                    np.zeros(C - P.n_servers)]))
        np.testing.assert_allclose(h, p, atol=1e-8)


def test_exact_averaging():
    T = exact_averaging_matrix(ClusterSizes([1.0, 3.0]))
    w = np.array([[2.0, 6.0]])
    np.testing.assert_allclose(w @ T, [[5.0, 5.0]])
