import json

import numpy as np
import pytest

from spntt import (Assignment, LeafNode, ProductNode, Rank1Term, SpnError,
                   SpnFormatError, SpnGraph, SumNode, enumerate_states,
                   random_spn)

from conftest import FIG1_TABLE


def term_sum(terms, state) -> float:
    """Independent oracle: sum of rank-1 term evaluations at a complete state."""
    pairs = np.stack([state, 1 - np.asarray(state)], axis=1)
    total = 0.0
    for t in terms:
        prod = t.coefficient
        for k in range(pairs.shape[0]):
            prod *= t.leaf_vectors[k] @ pairs[k]
        total += prod
    return total


class TestValidate:
    def test_fig1_is_valid(self, fig1_spn):
        assert fig1_spn.validate().ok

    def test_single_leaf_is_valid(self, single_leaf_spn):
        assert single_leaf_spn.validate().ok

    def test_incomplete_sum_reported(self):
        nodes = {
            0: SumNode((1, 2), (0.5, 0.5)),
            1: LeafNode(1, 0.4),
            2: ProductNode((3, 4)),
            3: LeafNode(0, 0.2),
            4: LeafNode(1, 0.6),
        }
        report = SpnGraph(2, 0, nodes).validate()
        assert any("complete" in msg for _, msg in report.violations)

    def test_overlapping_product_reported(self):
        nodes = {0: ProductNode((1, 2)), 1: LeafNode(0, 0.4), 2: LeafNode(0, 0.6)}
        report = SpnGraph(1, 0, nodes).validate()
        assert any("decomposable" in msg for _, msg in report.violations)

    def test_unreachable_node_reported(self):
        nodes = {0: LeafNode(0, 0.3), 1: LeafNode(0, 0.7)}
        report = SpnGraph(1, 0, nodes).validate()
        assert any("reachable" in msg for _, msg in report.violations)

    def test_partial_root_scope_reported(self):
        report = SpnGraph(2, 0, {0: LeafNode(0, 0.3)}).validate()
        assert any("cover" in msg for _, msg in report.violations)

    def test_cycle_raises(self):
        nodes = {0: SumNode((1,), (1.0,)), 1: SumNode((0,), (1.0,))}
        with pytest.raises(SpnError, match="cycle"):
            SpnGraph(1, 0, nodes)

    def test_dangling_child_raises(self):
        with pytest.raises(SpnError, match="dangling"):
            SpnGraph(1, 0, {0: SumNode((7,), (1.0,))})

    def test_leaf_variable_out_of_range_raises(self):
        with pytest.raises(SpnError, match="out of range"):
            SpnGraph(1, 0, {0: LeafNode(3, 0.5)})


class TestEvaluate:
    def test_worked_example_states(self, fig1_spn):
        assert fig1_spn.evaluate(Assignment.from_state([1, 0, 1])) == pytest.approx(
            0.336, abs=1e-12)
        assert fig1_spn.evaluate(Assignment.from_state([0, 1, 0])) == pytest.approx(
            0.01, abs=1e-12)

    def test_full_network_polynomial(self, fig1_spn):
        for state, expected in FIG1_TABLE.items():
            got = fig1_spn.evaluate(Assignment.from_state(list(state)))
            assert got == pytest.approx(expected, abs=1e-12)

    def test_partition_is_one(self, fig1_spn):
        assert fig1_spn.evaluate(Assignment.all_ones(3)) == pytest.approx(1.0, abs=1e-12)

    def test_dimension_mismatch(self, fig1_spn):
        with pytest.raises(SpnError):
            fig1_spn.evaluate(Assignment.from_state([1, 0]))

    def test_batch_matches_scalar(self, fig1_spn):
        bits = enumerate_states(3)
        batch = fig1_spn.evaluate_states(bits)
        for row, value in zip(bits, batch):
            assert value == pytest.approx(
                fig1_spn.evaluate(Assignment.from_state(row)), rel=1e-14)


class TestPartitionFunction:
    def test_fig1(self, fig1_spn):
        assert fig1_spn.partition_function() == pytest.approx(1.0, abs=1e-12)

    def test_doubled_root_weights(self, fig1_spn):
        nodes = dict(fig1_spn.nodes)
        nodes[0] = SumNode((1, 2), (1.6, 0.4))
        doubled = SpnGraph(3, 0, nodes)
        assert doubled.partition_function() == pytest.approx(2.0, abs=1e-12)

    def test_single_leaf(self, single_leaf_spn):
        assert single_leaf_spn.partition_function() == pytest.approx(1.0, abs=1e-15)


class TestMarginal:
    def test_evidence_x1(self, fig1_spn):
        assert fig1_spn.marginal({0: 1}) == pytest.approx(0.8, abs=1e-12)

    def test_empty_evidence(self, fig1_spn):
        assert fig1_spn.marginal({}) == pytest.approx(1.0, abs=1e-12)

    def test_full_evidence(self, fig1_spn):
        assert fig1_spn.marginal({0: 1, 1: 0, 2: 1}) == pytest.approx(0.336, abs=1e-12)

    def test_monotone_under_extension(self, fig1_spn):
        assert fig1_spn.marginal({0: 1, 1: 0}) <= fig1_spn.marginal({0: 1}) + 1e-15


class TestNormalize:
    def test_already_normalized_fixed_point(self, fig1_spn):
        renorm = fig1_spn.normalize()
        assert renorm.nodes[0].weights == pytest.approx((0.8, 0.2), abs=1e-15)

    def test_root_rescale(self, fig1_spn):
        nodes = dict(fig1_spn.nodes)
        nodes[0] = SumNode((1, 2), (1.6, 0.4))
        norm = SpnGraph(3, 0, nodes).normalize()
        assert norm.nodes[0].weights == pytest.approx((0.8, 0.2), abs=1e-15)

    def test_distribution_preserved_brute_force(self):
        # unnormalized variant with nested unnormalized sums
        nodes = {
            0: SumNode((1, 2), (3.0, 1.0)),
            1: ProductNode((3, 4, 5)),
            2: ProductNode((6, 7, 8)),
            3: SumNode((9, 10), (2.0, 6.0)),
            4: LeafNode(1, 0.3),
            5: LeafNode(2, 0.6),
            6: LeafNode(0, 0.1),
            7: LeafNode(1, 0.5),
            8: LeafNode(2, 0.9),
            9: LeafNode(0, 1.0),
            10: LeafNode(0, 0.25),
        }
        spn = SpnGraph(3, 0, nodes)
        norm = spn.normalize()
        assert norm.partition_function() == pytest.approx(1.0, abs=1e-12)
        z = spn.partition_function()
        bits = enumerate_states(3)
        before = spn.evaluate_states(bits) / z
        after = norm.evaluate_states(bits)
        np.testing.assert_allclose(after, before, atol=1e-12)

    def test_zero_weight_sum_raises(self):
        nodes = {0: SumNode((1,), (0.0,)), 1: LeafNode(0, 0.3)}
        with pytest.raises(SpnError, match="zero total weight"):
            SpnGraph(1, 0, nodes).normalize()


class TestInducedTrees:
    def test_fig1_count(self, fig1_spn):
        assert fig1_spn.count_induced_trees() == 2

    def test_single_leaf_count(self, single_leaf_spn):
        assert single_leaf_spn.count_induced_trees() == 1

    def test_sum_over_m_leaves(self):
        m = 7
        nodes = {0: SumNode(tuple(range(1, m + 1)), (1.0 / m,) * m)}
        for i in range(1, m + 1):
            nodes[i] = LeafNode(0, 0.1 * i / m)
        assert SpnGraph(1, 0, nodes).count_induced_trees() == m

    def test_fig1_terms(self, fig1_spn):
        terms = list(fig1_spn.induced_trees())
        assert sorted(t.coefficient for t in terms) == pytest.approx([0.2, 0.8])

    def test_single_leaf_term(self, single_leaf_spn):
        (term,) = list(single_leaf_spn.induced_trees())
        assert term.coefficient == 1.0
        np.testing.assert_allclose(term.leaf_vectors, [[0.3, 0.7]])

    def test_term_sum_equals_evaluate(self, fig1_spn):
        terms = list(fig1_spn.induced_trees())
        for state in FIG1_TABLE:
            direct = fig1_spn.evaluate(Assignment.from_state(list(state)))
            assert term_sum(terms, list(state)) == pytest.approx(direct, rel=1e-12)

    @pytest.mark.parametrize("seed", range(8))
    def test_random_spn_stream_matches_count_and_evaluate(self, seed):
        spn = random_spn(d=5, seed=seed)
        terms = list(spn.induced_trees())
        assert len(terms) == spn.count_induced_trees()
        bits = enumerate_states(5)
        values = spn.evaluate_states(bits)
        for row, value in zip(bits[::7], values[::7]):
            assert term_sum(terms, row) == pytest.approx(value, rel=1e-12, abs=1e-300)

    def test_invalid_spn_rejected(self):
        nodes = {0: ProductNode((1, 2)), 1: LeafNode(0, 0.4), 2: LeafNode(0, 0.6)}
        with pytest.raises(SpnError):
            list(SpnGraph(1, 0, nodes).induced_trees())


class TestTopInducedTrees:
    def test_fig1_top(self, fig1_spn):
        top1 = fig1_spn.top_induced_trees(1)
        assert len(top1) == 1 and top1[0].coefficient == pytest.approx(0.8)
        top5 = fig1_spn.top_induced_trees(5)
        assert [t.coefficient for t in top5] == pytest.approx([0.8, 0.2])

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_sorted_full_enumeration(self, seed):
        spn = random_spn(d=5, seed=seed)
        full = sorted((t.coefficient for t in spn.induced_trees()), reverse=True)
        k = min(10, len(full))
        top = spn.top_induced_trees(k)
        assert [t.coefficient for t in top] == pytest.approx(full[:k], rel=1e-12)

    def test_term_vectors_complete(self, fig1_spn):
        for term in fig1_spn.top_induced_trees(2):
            assert term.leaf_vectors.shape == (3, 2)
            np.testing.assert_allclose(term.leaf_vectors.sum(axis=1), 1.0)


class TestMpe:
    def test_fig1_matches_brute_force(self, fig1_spn):
        state, value = fig1_spn.mpe()
        best = max(FIG1_TABLE.values())
        assert value == pytest.approx(best, abs=1e-12)
        assert FIG1_TABLE[tuple(int(v) for v in state)] == pytest.approx(best)

    def test_full_evidence_echoed(self, fig1_spn):
        state, value = fig1_spn.mpe({0: 0, 1: 1, 2: 0})
        assert tuple(int(v) for v in state) == (0, 1, 0)
        assert value == pytest.approx(FIG1_TABLE[(0, 1, 0)], abs=1e-12)

    def test_single_leaf_prefers_larger_side(self, single_leaf_spn):
        state, value = single_leaf_spn.mpe()
        assert (int(state[0]), value) == (0, pytest.approx(0.7))

    def test_tie_prefers_positive(self):
        spn = SpnGraph(1, 0, {0: LeafNode(0, 0.5)})
        state, value = spn.mpe()
        assert int(state[0]) == 1 and value == pytest.approx(0.5)

    @pytest.mark.parametrize("seed", range(6))
    def test_max_product_bounds(self, seed):
        # The max-product value is the best single induced tree, so it is
        # bounded above by the best consistent state's full sum and below by
        # no consistent evaluation of its own state.
        spn = random_spn(d=5, seed=seed)
        rng = np.random.default_rng(seed)
        evidence = {0: int(rng.integers(2))}
        state, value = spn.mpe(evidence)
        assert int(state[0]) == evidence[0]
        bits = enumerate_states(5)
        consistent = bits[bits[:, 0] == evidence[0]]
        values = spn.evaluate_states(consistent)
        assert value <= values.max() + 1e-12
        assert spn.evaluate(Assignment.from_state(state)) >= value - 1e-12


class TestSerialization:
    def test_round_trip(self, fig1_spn, tmp_path):
        path = tmp_path / "model.json"
        fig1_spn.save(path)
        loaded = SpnGraph.load(path)
        assert loaded.to_dict() == fig1_spn.to_dict()

    def test_rejects_invalid_model(self, tmp_path):
        payload = {"num_variables": 1, "root": 0,
                   "nodes": [{"id": 0, "type": "product", "children": [1, 2]},
                             {"id": 1, "type": "leaf", "variable": 0, "p": 0.4},
                             {"id": 2, "type": "leaf", "variable": 0, "p": 0.6}]}
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(payload))
        with pytest.raises(SpnFormatError, match="decomposable"):
            SpnGraph.load(path)

    def test_rejects_malformed_json_with_line(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"num_variables": 1,\n  "root": }')
        with pytest.raises(SpnFormatError, match="line 2"):
            SpnGraph.load(path)

    def test_rejects_duplicate_ids(self):
        payload = {"num_variables": 1, "root": 0,
                   "nodes": [{"id": 0, "type": "leaf", "variable": 0, "p": 0.4},
                             {"id": 0, "type": "leaf", "variable": 0, "p": 0.6}]}
        with pytest.raises(SpnFormatError, match="duplicate"):
            SpnGraph.from_dict(payload)

    def test_rejects_unknown_type(self):
        payload = {"num_variables": 1, "root": 0,
                   "nodes": [{"id": 0, "type": "max", "children": []}]}
        with pytest.raises(SpnFormatError, match="unknown type"):
            SpnGraph.from_dict(payload)


class TestGraphStatistics:
    def test_fig1_counts(self, fig1_spn):
        assert fig1_spn.num_leaves() == 6
        assert fig1_spn.num_sum_weights() == 2
        assert fig1_spn.num_layers() == 3

    @pytest.mark.parametrize("seed", range(10))
    def test_random_normalized_spn_invariants(self, seed):
        spn = random_spn(d=7, seed=seed)
        assert spn.validate().ok
        assert spn.partition_function() == pytest.approx(1.0, abs=1e-12)
        z = spn.partition_function()
        total = spn.evaluate_states(enumerate_states(7)).sum() / z
        assert total == pytest.approx(1.0, abs=1e-10)
