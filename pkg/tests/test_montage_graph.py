import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eeg_gmacn.errors import FormatError, ParameterError
from eeg_gmacn.montage import Montage, builtin_64, load_montage, save_montage
from eeg_gmacn.spatial_graph import (
    ElectrodeGraph,
    build_threshold,
    build_topk,
    load_graph,
    normalize,
    pairwise_distances,
    save_graph,
)


def random_montage(seed, n=10, scale=30.0):
    rng = np.random.default_rng(seed)
    return Montage(tuple(f"e{i}" for i in range(n)), rng.uniform(-scale, scale, (n, 3)))


def euclid(p, q):
    dx, dy, dz = p[0] - q[0], p[1] - q[1], p[2] - q[2]
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def oracle_threshold(positions, t):
    n = len(positions)
    w = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            d = euclid(positions[i], positions[j])
            if d < t:
                w[i][j] = 1.0 / (1.0 + d / t)
    return np.array(w)


def oracle_topk(positions, k):
    n = len(positions)
    w = [[0.0] * n for _ in range(n)]
    for i in range(n):
        # enumerate every other node, rank by (distance, ordinal)
        ranked = sorted((euclid(positions[i], positions[j]), j) for j in range(n) if j != i)
        for rank, (_, j) in enumerate(ranked, start=1):
            if rank <= k:
                w[i][j] = 1.0 / (1.0 + min(rank, k) / k)
    for i, j in itertools.product(range(n), repeat=2):
        w[i][j] = w[j][i] = max(w[i][j], w[j][i])
    return np.array(w)


def oracle_normalize(e):
    n = len(e)
    et = [[e[i][j] + (1.0 if i == j else 0.0) for j in range(n)] for i in range(n)]
    deg = [sum(row) for row in et]
    return np.array([[et[i][j] / math.sqrt(deg[i]) / math.sqrt(deg[j]) for j in range(n)]
                     for i in range(n)])


class TestMontage:
    def test_builtin_count(self):
        assert builtin_64().count == 64

    def test_self_distance(self):
        assert builtin_64().distance("Cz", "Cz") == 0.0

    def test_left_right_symmetry(self):
        m = builtin_64()
        assert m.distance("C3", "Cz") == pytest.approx(m.distance("C4", "Cz"), abs=1e-9)
        assert m.distance("F7", "Fz") == pytest.approx(m.distance("F8", "Fz"), abs=1e-9)

    def test_all_on_sphere_of_builtin_radius(self):
        m = builtin_64(radius=25.0)
        np.testing.assert_allclose(np.linalg.norm(m.positions, axis=1), 25.0, atol=1e-9)

    def test_csv_round_trip(self, tmp_path):
        m = builtin_64()
        save_montage(m, tmp_path / "m.csv")
        back = load_montage(tmp_path / "m.csv")
        assert back.names == m.names
        assert np.array_equal(back.positions, m.positions)

    def test_three_row_csv(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("name,x,y,z\nA,0,0,0\nB,1,0,0\nC,0,1,0\n")
        m = load_montage(p)
        assert m.names == ("A", "B", "C")

    def test_duplicate_name_reported_with_line(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("name,x,y,z\nCz,0,0,1\nC3,1,0,0\nCz,0,1,0\n")
        with pytest.raises(FormatError, match=r":4:.*'Cz'"):
            load_montage(p)

    def test_non_numeric_coordinate(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("name,x,y,z\nA,0,zero,0\n")
        with pytest.raises(FormatError, match=":2:"):
            load_montage(p)


class TestDistances:
    def test_345(self):
        m = Montage(("a", "b"), [[0, 0, 0], [3, 4, 0]])
        assert pairwise_distances(m)[0, 1] == 5.0

    def test_exactly_symmetric_zero_diagonal(self):
        d = pairwise_distances(random_montage(0))
        assert np.array_equal(d, d.T)
        assert not np.diag(d).any()

    def test_builtin_distinct(self):
        d = pairwise_distances(builtin_64())
        assert np.all(d[~np.eye(64, dtype=bool)] > 0)


class TestThreshold:
    def test_coincident_points(self):
        m = Montage(("a", "b"), [[0, 0, 0], [0, 0, 0]])
        assert build_threshold(m, 5.0).adjacency[0, 1] == 1.0

    def test_half_threshold(self):
        m = Montage(("a", "b"), [[0, 0, 0], [5, 0, 0]])
        assert build_threshold(m, 10.0).adjacency[0, 1] == pytest.approx(2 / 3, abs=1e-15)

    def test_boundary_excluded(self):
        m = Montage(("a", "b"), [[0, 0, 0], [10, 0, 0]])
        assert build_threshold(m, 10.0).adjacency[0, 1] == 0.0

    @pytest.mark.parametrize("t", [0.0, -1.0])
    def test_bad_threshold(self, t):
        with pytest.raises(ParameterError):
            build_threshold(random_montage(0), t)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_oracle(self, seed):
        m = random_montage(seed)
        t = float(np.random.default_rng(seed).uniform(10, 50))
        np.testing.assert_array_equal(build_threshold(m, t).adjacency,
                                      oracle_threshold(m.positions.tolist(), t))

    def test_weights_strictly_above_half(self):
        a = build_threshold(builtin_64(), 20).adjacency
        nz = a[a > 0]
        assert nz.size and np.all((nz > 0.5) & (nz <= 1.0))

    def test_rotation_invariance(self):
        m = builtin_64()
        rng = np.random.default_rng(5)
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        rotated = Montage(m.names, m.positions @ q.T)
        np.testing.assert_allclose(build_threshold(rotated, 20).adjacency,
                                   build_threshold(m, 20).adjacency, atol=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.floats(1.0, 60.0))
    def test_edges_monotone_in_t(self, seed, t):
        m = random_montage(seed)
        small = build_threshold(m, t).adjacency > 0
        big = build_threshold(m, 2 * t).adjacency > 0
        assert np.all(big[small])

    def test_weight_decreases_with_distance(self):
        t = 10.0
        ws = [build_threshold(Montage(("a", "b"), [[0, 0, 0], [d, 0, 0]]), t).adjacency[0, 1]
              for d in np.linspace(0, 9.9, 30)]
        assert np.all(np.diff(ws) < 0)


class TestTopk:
    def test_rank_weights(self):
        assert 1 / (1 + 1 / 5) == pytest.approx(5 / 6)
        m = Montage(tuple("abcdefg"), [[i * i, 0, 0] for i in range(7)])
        a = build_topk(m, 5).adjacency
        # node a's nearest is b (rank 1)
        assert a[0, 1] == pytest.approx(5 / 6)

    def test_rank_k_weight_half(self):
        m = Montage(tuple("abc"), [[0, 0, 0], [1, 0, 0], [3, 0, 0]])
        a = build_topk(m, 2).adjacency
        # c is a's second neighbour; c sees a second as well
        assert a[0, 2] == pytest.approx(0.5)

    def test_collinear_nearest_neighbour(self):
        m = Montage(tuple("abcd"), [[i, 0, 0] for i in range(4)])
        expected = np.zeros((4, 4))
        # ties broken by montage order: b -> a, c -> b, d -> c; a -> b
        for i, j in [(0, 1), (1, 0), (2, 1), (3, 2)]:
            expected[i, j] = 0.5
        expected = np.maximum(expected, expected.T)
        np.testing.assert_array_equal(build_topk(m, 1).adjacency, expected)
        np.testing.assert_array_equal(expected, oracle_topk(m.positions.tolist(), 1))

    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("k", [1, 3, 5, 9])
    def test_matches_oracle(self, seed, k):
        m = random_montage(seed)
        np.testing.assert_array_equal(build_topk(m, k).adjacency,
                                      oracle_topk(m.positions.tolist(), k))

    @pytest.mark.parametrize("k", [0, 10, 2.5])
    def test_bad_k(self, k):
        with pytest.raises(ParameterError):
            build_topk(random_montage(0), k)

    def test_weights_monotone_in_rank(self):
        k = 7
        w = [1 / (1 + min(r, k) / k) for r in range(1, k + 1)]
        assert np.all(np.diff(w) <= 0)


class TestNormalize:
    def test_single_node(self):
        assert normalize(np.zeros((1, 1))).tolist() == [[1.0]]

    def test_two_nodes_unit_edge(self):
        np.testing.assert_allclose(normalize(np.array([[0.0, 1.0], [1.0, 0.0]])), 0.5,
                                   atol=1e-15)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        e = np.triu(rng.uniform(0, 1, (8, 8)) * (rng.uniform(size=(8, 8)) < 0.5), 1)
        e = e + e.T
        out = normalize(e)
        np.testing.assert_allclose(out, oracle_normalize(e.tolist()), atol=1e-12, rtol=0)
        assert np.array_equal(out, out.T)
        assert np.all(out >= 0)

    def test_row_sums_bounded(self):
        out = build_threshold(builtin_64(), 30).normalized
        s = out.sum(axis=1)
        assert np.all(s > 0) and np.all(s <= np.sqrt(64))

    def test_ones_eigenvector_iff_regular(self):
        ring = np.zeros((6, 6))
        for i in range(6):
            ring[i, (i + 1) % 6] = ring[(i + 1) % 6, i] = 1.0
        v = normalize(ring) @ np.ones(6)
        np.testing.assert_allclose(v, v[0], atol=1e-12)
        path = ring.copy()
        path[0, 5] = path[5, 0] = 0.0
        v = normalize(path) @ np.ones(6)
        assert np.ptp(v) > 1e-3


class TestGraphObject:
    def test_invariants_enforced(self):
        with pytest.raises(FormatError):
            ElectrodeGraph(np.array([[0.0, 1.0], [0.5, 0.0]]), "threshold", 1.0, "x")

    def test_tags(self):
        m = builtin_64()
        assert build_threshold(m, 20).tag == "threshold{20}"
        assert build_topk(m, 5).tag == "topk{5}"

    def test_file_round_trip(self, tmp_path):
        g = build_topk(builtin_64(), 5)
        csv_path, sidecar = save_graph(g, tmp_path / "g.csv")
        assert sidecar.exists()
        back = load_graph(csv_path)
        assert np.array_equal(back.adjacency, g.adjacency)
        assert back.tag == g.tag and back.montage_hash == g.montage_hash
