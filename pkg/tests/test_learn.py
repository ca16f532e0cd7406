import numpy as np
import pytest

from spntt import (Dataset, DatasetError, LeafNode, LearnConfig, ProductNode,
                   SumNode, chop, g_test, learn_spn, slice_instances)


def dataset_from_columns(*cols) -> Dataset:
    return Dataset(np.stack([np.asarray(c, dtype=np.uint8) for c in cols], axis=1))


class TestDataset:
    def test_rejects_non_binary(self):
        with pytest.raises(DatasetError):
            Dataset(np.array([[0, 2]]))

    def test_rejects_empty(self):
        with pytest.raises(DatasetError):
            Dataset(np.zeros((0, 3)))

    def test_name_length_checked(self):
        with pytest.raises(DatasetError):
            Dataset(np.zeros((2, 3), dtype=np.uint8), variable_names=("a",))


class TestGTest:
    def test_exact_independence_is_zero(self):
        rows = [[1, 1]] * 5 + [[1, 0]] * 5 + [[0, 1]] * 5 + [[0, 0]] * 5
        data = Dataset(np.array(rows, dtype=np.uint8))
        assert g_test(data, 0, 1) == 0.0

    def test_identical_columns(self):
        col = [1] * 50 + [0] * 50
        data = dataset_from_columns(col, col)
        assert g_test(data, 0, 1) == pytest.approx(2 * 100 * np.log(2), rel=1e-12)

    def test_constant_column_contributes_zero(self):
        data = dataset_from_columns([1, 1, 1, 1], [0, 1, 0, 1])
        assert g_test(data, 0, 1) == 0.0

    def test_same_variable_rejected(self):
        data = dataset_from_columns([0, 1], [1, 0])
        with pytest.raises(ValueError):
            g_test(data, 0, 0)

    def test_independent_columns_mostly_below_threshold(self):
        below = 0
        trials = 60
        for seed in range(trials):
            rng = np.random.default_rng(seed)
            data = Dataset(rng.integers(0, 2, size=(1000, 2), dtype=np.uint8))
            if g_test(data, 0, 1) < 4.0:
                below += 1
        assert below / trials >= 0.95

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        data = Dataset(rng.integers(0, 2, size=(64, 2), dtype=np.uint8))
        assert g_test(data, 0, 1) == pytest.approx(g_test(data, 1, 0), rel=1e-14)


class TestChop:
    def test_correlated_pair_stays_together(self):
        col = [1] * 50 + [0] * 50
        data = dataset_from_columns(col, col)
        assert chop(data, [0, 1], LearnConfig()) == [[0, 1]]

    def test_independent_constants_split(self):
        data = dataset_from_columns([1] * 8, [0] * 8)
        assert chop(data, [0, 1], LearnConfig()) == [[0], [1]]

    def test_two_correlated_blocks(self):
        rng = np.random.default_rng(1)
        a = rng.integers(0, 2, size=400, dtype=np.uint8)
        b = rng.integers(0, 2, size=400, dtype=np.uint8)
        data = dataset_from_columns(a, a ^ (rng.random(400) < 0.02), b,
                                    b ^ (rng.random(400) < 0.02))
        parts = chop(data, [0, 1, 2, 3], LearnConfig())
        assert sorted(map(tuple, parts)) == [(0, 1), (2, 3)]

    def test_requires_two_variables(self):
        data = dataset_from_columns([0, 1])
        with pytest.raises(ValueError):
            chop(data, [0], LearnConfig())


class TestSliceInstances:
    def test_two_patterns_recovered(self):
        rows = np.array([[1, 1, 1, 0]] * 30 + [[0, 0, 0, 1]] * 10, dtype=np.uint8)
        data = Dataset(rows)
        clusters, weights = slice_instances(data, np.arange(40), LearnConfig(),
                                            np.random.default_rng(0))
        assert len(clusters) == 2
        sizes = sorted(len(c) for c in clusters)
        assert sizes == [10, 30]
        assert sorted(weights) == pytest.approx([0.25, 0.75])
        for cluster in clusters:
            assert len({data.rows[i].tobytes() for i in cluster}) == 1

    def test_identical_rows_single_cluster(self):
        data = Dataset(np.ones((20, 3), dtype=np.uint8))
        clusters, weights = slice_instances(data, np.arange(20), LearnConfig(),
                                            np.random.default_rng(0))
        assert len(clusters) == 1
        assert weights == pytest.approx([1.0])

    @pytest.mark.parametrize("seed", range(5))
    def test_weights_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        data = Dataset(rng.integers(0, 2, size=(64, 5), dtype=np.uint8))
        _, weights = slice_instances(data, np.arange(64), LearnConfig(num_clusters=3),
                                     np.random.default_rng(seed))
        assert weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_too_few_instances_rejected(self):
        data = Dataset(np.ones((1, 2), dtype=np.uint8))
        with pytest.raises(ValueError):
            slice_instances(data, np.array([0]), LearnConfig(),
                            np.random.default_rng(0))


class TestLearnSpn:
    def test_single_variable_smoothed_leaf(self):
        data = Dataset(np.array([[1], [1], [1], [0]], dtype=np.uint8))
        spn = learn_spn(data, LearnConfig(laplace_alpha=1.0))
        (leaf,) = spn.nodes.values()
        assert isinstance(leaf, LeafNode)
        assert leaf.p == pytest.approx(4 / 6)

    def test_independent_variables_chopped(self):
        rng = np.random.default_rng(0)
        data = Dataset(rng.integers(0, 2, size=(4000, 2), dtype=np.uint8))
        spn = learn_spn(data, LearnConfig(rng_seed=0))
        root = spn.nodes[spn.root]
        assert isinstance(root, ProductNode)
        assert all(isinstance(spn.nodes[c], LeafNode) for c in root.children)

    def test_correlated_variables_sliced(self):
        col = np.array([1] * 600 + [0] * 400, dtype=np.uint8)
        data = Dataset(np.stack([col, col], axis=1))
        spn = learn_spn(data, LearnConfig(rng_seed=0))
        assert isinstance(spn.nodes[spn.root], SumNode)
        assert spn.validate().ok

    @pytest.mark.parametrize("seed", range(4))
    def test_learned_spn_valid_and_normalized(self, seed):
        rng = np.random.default_rng(seed)
        base = rng.integers(0, 2, size=(500, 6), dtype=np.uint8)
        base[:250, :3] = base[:250, :1]  # correlated block
        data = Dataset(base)
        spn = learn_spn(data, LearnConfig(rng_seed=seed))
        assert spn.validate().ok
        assert spn.partition_function() == pytest.approx(1.0, abs=1e-10)

    def test_leaf_parameters_interior_with_smoothing(self):
        data = Dataset(np.ones((100, 3), dtype=np.uint8))
        spn = learn_spn(data, LearnConfig(laplace_alpha=1.0))
        for node in spn.nodes.values():
            if isinstance(node, LeafNode):
                assert 0.0 < node.p < 1.0

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(9)
        data = Dataset(rng.integers(0, 2, size=(300, 5), dtype=np.uint8))
        cfg = LearnConfig(rng_seed=123)
        first = learn_spn(data, cfg).to_dict()
        second = learn_spn(data, cfg).to_dict()
        assert first == second

    def test_terminates_on_identical_rows(self):
        data = Dataset(np.tile(np.array([[1, 0, 1]], dtype=np.uint8), (200, 1)))
        spn = learn_spn(data, LearnConfig(rng_seed=0))
        assert spn.validate().ok


class TestLearnConfig:
    def test_field_validation(self):
        with pytest.raises(ValueError):
            LearnConfig(g_test_threshold=0.0)
        with pytest.raises(ValueError):
            LearnConfig(num_clusters=1)
        with pytest.raises(ValueError):
            LearnConfig(laplace_alpha=-0.1)
