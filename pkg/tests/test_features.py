import numpy as np
import pytest

from oospa import datagen, features
from oospa.chem import Geometry, hydrogen_chain, hydrogen_ring
from oospa.errors import DegenerateEdge, InvalidInput

from oracles import rigid_motion


def chain4(spacing=1.0):
    geom = hydrogen_chain(4, spacing)
    return geom, ((0, 1), (2, 3))


def random_case(n, rng):
    geom = datagen.sample_geometry("random_3d", n, seed=int(rng.integers(0, 2**31)))
    return geom, datagen.min_weight_matching(geom)


class TestBuildGraphs:
    def test_cutoffs(self):
        coords = np.zeros((2, 3))
        coords[1, 0] = 3.0
        geom = Geometry(coords, ("H", "H"))
        fine, coarse, pairs = features.build_graphs(geom, 2.5, 5.0)
        assert fine.shape[0] == 0
        assert sorted(map(tuple, coarse.tolist())) == [(0, 1), (1, 0)]
        assert pairs.shape[0] == 1

    def test_complete_pair_count(self):
        geom, _ = chain4()
        _, _, pairs = features.build_graphs(geom, 2.5, 5.0)
        assert pairs.shape[0] == 6

    def test_equal_cutoffs_coincide(self):
        geom, _ = chain4()
        fine, coarse, _ = features.build_graphs(geom, 2.5, 2.5)
        assert np.array_equal(fine, coarse)

    def test_fine_nested_in_coarse(self, rng):
        geom, _ = random_case(6, rng)
        fine, coarse, _ = features.build_graphs(geom, 2.5, 5.0)
        coarse_set = set(map(tuple, coarse.tolist()))
        assert all(tuple(e) in coarse_set for e in fine.tolist())


class TestRwse:
    def test_two_node_path(self):
        adj = np.array([[0.0, 1.0], [1.0, 0.0]])
        out = features.rwse(adj, 5)
        assert np.allclose(out[0], [0, 1, 0, 1, 0])
        assert np.allclose(out[1], [0, 1, 0, 1, 0])

    def test_isolated_node_zero_row(self):
        adj = np.zeros((3, 3))
        adj[0, 1] = adj[1, 0] = 1.0
        out = features.rwse(adj, 4)
        assert np.all(out[2] == 0.0)

    def test_triangle_matches_matrix_power_oracle(self):
        adj = np.ones((3, 3)) - np.eye(3)
        out = features.rwse(adj, 3)
        p = adj / 2.0
        for k in range(1, 4):
            oracle = np.diag(np.linalg.matrix_power(p, k))
            assert np.allclose(out[:, k - 1], oracle, atol=1e-14)
        assert np.allclose(out[:, 1], 0.5)

    def test_entries_in_unit_interval(self, rng):
        geom, _ = random_case(8, rng)
        fine, _, _ = features.build_graphs(geom, 2.5, 5.0)
        adj = np.zeros((8, 8))
        if fine.size:
            adj[fine[:, 0], fine[:, 1]] = 1.0
        out = features.rwse(adj, 8)
        assert np.all(out >= 0.0) and np.all(out <= 1.0)


class TestRbf:
    def test_peak_value(self):
        centers = np.linspace(0.0, 6.0, 20)
        out = features.rbf_expand(centers[3], 20, 0.0, 6.0)
        assert abs(out[3] - 1.0) < 1e-14

    def test_range(self, rng):
        for r in rng.uniform(0.0, 6.0, size=20):
            out = features.rbf_expand(r, 20, 0.0, 6.0)
            assert np.all(out > 0.0) and np.all(out <= 1.0)

    def test_direct_formula(self):
        r = 1.0
        out = features.rbf_expand(r, 20, 0.0, 6.0)
        centers = np.linspace(0.0, 6.0, 20)
        sigma = 6.0 / 20
        expected = np.exp(-((r - centers) ** 2) / (2 * sigma**2))
        assert np.allclose(out, expected, atol=1e-15)


class TestAngularMatrix:
    def test_symmetric_unit_diagonal(self, rng):
        geom, _ = random_case(6, rng)
        phi, _ = features.angular_matrix(geom)
        assert np.max(np.abs(phi - phi.T)) < 1e-14
        assert np.allclose(np.diag(phi), 1.0)

    def test_square_pattern(self):
        geom = hydrogen_ring(4, 1.0)
        phi, diversity = features.angular_matrix(geom)
        off = phi[~np.eye(4, dtype=bool)]
        assert np.all(np.isclose(off, 0.0, atol=1e-12) | np.isclose(off, -1.0, atol=1e-12))
        # direct formula: rows are {0, -1, 0} excluding the diagonal
        expected_var = np.var([0.0, -1.0, 0.0])
        assert np.allclose(diversity, expected_var, atol=1e-12)

    def test_identical_directions_zero_variance(self):
        # two coincident-direction atoms plus the centroid atom
        coords = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        geom = Geometry(coords, ("H",) * 3)
        phi, diversity = features.angular_matrix(geom)
        # centroid atom (index 1) has a zero direction vector
        assert np.allclose(phi[1], 0.0)
        assert np.allclose(phi[0, 2], -1.0)


class TestNodeFeatures:
    def test_widths(self, rng):
        geom, matching = random_case(6, rng)
        fg = features.featurize(geom, matching)
        assert fg.node_x.shape == (6, 12 + features.DEFAULT_T_WALK)
        assert fg.fine_edge_x.shape[1] == features.DEFAULT_L_RBF + 9
        assert fg.pair_x.shape == (15, 6)

    def test_end_atom_asymmetry(self):
        geom, matching = chain4(1.0)
        fg = features.featurize(geom, matching)
        asym = fg.node_x[:, 5]
        assert abs(asym[0] - 1.0) < 1e-12
        assert abs(asym[3] - 1.0) < 1e-12
        assert asym[1] < 1.0 and asym[2] < 1.0

    def test_atomic_number_one(self, rng):
        geom, matching = random_case(4, rng)
        fg = features.featurize(geom, matching)
        assert np.all(fg.node_x[:, 0] == 1.0)

    def test_zero_degree_neutral_values(self):
        # spacing 3 A puts every neighbor outside the 2.5 A fine cutoff
        geom = hydrogen_chain(4, 3.0)
        fg = features.featurize(geom, ((0, 1), (2, 3)))
        assert np.allclose(fg.node_x[:, 1], 0.0)   # log(1+0)
        assert np.allclose(fg.node_x[:, 2], 0.0)   # mean distance
        assert np.allclose(fg.node_x[:, 4], 1.0)   # ratio
        assert np.allclose(fg.node_x[:, 5], 0.0)   # asymmetry
        assert np.allclose(fg.node_x[:, 6], 0.0)   # skew
        assert fg.fine_edges.shape[0] == 0


class TestEdgeFeatures:
    def test_h2_direction_differs_only_in_bonding_entry(self):
        geom = hydrogen_chain(2, 1.0)
        m_init = datagen.givens_guess(((0, 1),), 2)
        out = features.edge_features(
            geom, m_init, np.array([[0, 1], [1, 0]]), 20, 0.0, 6.0
        )
        forward, backward = out
        l = 20
        diff = np.flatnonzero(forward != backward)
        assert list(diff) == [l + 6]
        assert abs(forward[l + 6] - 1 / np.sqrt(2)) < 1e-15
        assert abs(backward[l + 6] + 1 / np.sqrt(2)) < 1e-15

    def test_inverse_distance_entry(self):
        geom = hydrogen_chain(2, 2.0)
        m_init = datagen.givens_guess(((0, 1),), 2)
        out = features.edge_features(geom, m_init, np.array([[0, 1]]), 20, 0.0, 6.0)
        assert abs(out[0, 20] - 0.5) < 1e-14
        assert abs(out[0, 23] - 2.0) < 1e-14

    def test_antipodal_cosine(self):
        geom = hydrogen_chain(2, 1.0)
        m_init = datagen.givens_guess(((0, 1),), 2)
        out = features.edge_features(geom, m_init, np.array([[0, 1]]), 20, 0.0, 6.0)
        assert abs(out[0, 24] + 1.0) < 1e-12

    def test_degenerate_edge_rejected(self):
        coords = np.zeros((2, 3))
        geom = Geometry(coords, ("H", "H"))
        m_init = np.eye(2)
        with pytest.raises(DegenerateEdge):
            features.edge_features(geom, m_init, np.array([[0, 1]]), 20, 0.0, 6.0)


class TestPairFeatures:
    def test_width_and_cosine_range(self, rng):
        geom, matching = random_case(8, rng)
        fg = features.featurize(geom, matching)
        assert fg.pair_x.shape[1] == 6
        assert np.all(fg.pair_x[:, 3] >= -1.0) and np.all(fg.pair_x[:, 3] <= 1.0)
        assert np.all(fg.pair_x[:, 4] >= -1.0) and np.all(fg.pair_x[:, 4] <= 1.0)

    def test_collinear_partner_cosines(self):
        geom, matching = chain4(1.0)
        fg = features.featurize(geom, matching)
        pair_index = {tuple(p): i for i, p in enumerate(fg.complete_pairs.tolist())}
        # atom 1's partner is 0; direction (0 -> 1) vs (1 -> 2) is +1
        row = fg.pair_x[pair_index[(1, 2)]]
        assert abs(row[4] - 1.0) < 1e-12
        # atom 0's partner is 1; direction (1 -> 0) vs (0 -> 1) is -1
        row = fg.pair_x[pair_index[(0, 1)]]
        assert abs(row[4] + 1.0) < 1e-12


class TestInvariances:
    def test_rigid_motion(self, rng):
        for _ in range(4):
            geom, matching = random_case(6, rng)
            fg = features.featurize(geom, matching)
            for _ in range(5):
                moved = Geometry(rigid_motion(geom.coords, rng), geom.elements)
                fg2 = features.featurize(moved, matching)
                assert np.max(np.abs(fg2.node_x - fg.node_x)) < 1e-9
                assert np.array_equal(fg2.fine_edges, fg.fine_edges)
                assert np.max(np.abs(fg2.fine_edge_x - fg.fine_edge_x)) < 1e-9
                assert np.max(np.abs(fg2.coarse_edge_x - fg.coarse_edge_x)) < 1e-9
                assert np.max(np.abs(fg2.pair_x - fg.pair_x)) < 1e-9

    def test_permutation_equivariance(self, rng):
        geom, matching = random_case(6, rng)
        fg = features.featurize(geom, matching)
        perm = np.array([3, 0, 5, 1, 4, 2])
        inverse = np.argsort(perm)
        permuted_geom = Geometry(geom.coords[perm], geom.elements)
        permuted_matching = tuple(
            tuple(sorted((int(inverse[i]), int(inverse[j])))) for i, j in matching
        )
        fg2 = features.featurize(permuted_geom, permuted_matching)
        # the indexing map is exact: node i of the permuted molecule is
        # node perm[i] of the original, and every edge relabels accordingly;
        # float values agree up to reduction-order noise
        assert np.allclose(fg2.node_x, fg.node_x[perm], atol=1e-12)
        fine_map = {
            (int(i), int(j)): row
            for (i, j), row in zip(fg.fine_edges.tolist(), fg.fine_edge_x)
        }
        assert len(fine_map) == fg2.fine_edges.shape[0]
        for (i, j), row in zip(fg2.fine_edges.tolist(), fg2.fine_edge_x):
            original = (int(perm[i]), int(perm[j]))
            assert original in fine_map
            assert np.allclose(fine_map[original], row, atol=1e-12)

    def test_size_agnostic_widths(self, rng):
        widths = set()
        for n in (4, 6, 8):
            geom, matching = random_case(n, rng)
            fg = features.featurize(geom, matching)
            widths.add((fg.node_x.shape[1], fg.fine_edge_x.shape[1], fg.pair_x.shape[1]))
        assert len(widths) == 1


class TestFeatureDump:
    def test_json_ready(self, rng):
        import json

        geom, matching = random_case(4, rng)
        dump = features.feature_dump(features.featurize(geom, matching))
        text = json.dumps(dump)
        assert json.loads(text)["n"] == 4
