"""Tests for the sigmoid/softmax approximation and its analytic input gradient."""
import math

import numpy as np
import pytest

from builders import ensemble_of, random_ensemble, random_tree, stump
from ensemble.tree import DecisionTree, predict_hard
from errors import ArgumentError, SchemaError
from softmodel.soft import (
    SoftConfig,
    input_gradient,
    sig,
    soft_activations,
    soft_ensemble_output,
    soft_tree_output,
)


def _numeric_jacobian(ens, x, cfg, h=1e-5):
    jac = np.zeros((ens.n_classes, x.size))
    for i in range(x.size):
        up, down = x.copy(), x.copy()
        up[i] += h
        down[i] -= h
        jac[:, i] = (soft_ensemble_output(ens, up, cfg).probs - soft_ensemble_output(ens, down, cfg).probs) / (2 * h)
    return jac


class TestSig:
    """sig(z) = 1 / (1 + exp(sigma z))."""

    def test_zero_is_half(self):
        assert sig(0.0, 7.0) == 0.5

    def test_closed_form(self):
        assert sig(0.5, 10.0) == pytest.approx(1.0 / (1.0 + math.exp(5.0)), rel=1e-12)
        assert sig(-0.5, 10.0) == pytest.approx(0.9933071, abs=1e-7)

    def test_complement(self):
        assert sig(0.3, 4.0) + sig(-0.3, 4.0) == pytest.approx(1.0, abs=1e-15)

    def test_no_overflow(self):
        assert sig(1e6, 10.0) == 0.0
        assert sig(-1e6, 10.0) == 1.0

    def test_vector_input(self):
        np.testing.assert_allclose(sig(np.array([0.0, 0.0]), 3.0), [0.5, 0.5])


class TestSoftConfig:
    @pytest.mark.parametrize("sigma,tau", [(0.0, 1.0), (1.0, -1.0), (math.inf, 1.0)])
    def test_rejects_non_positive(self, sigma, tau):
        with pytest.raises(ArgumentError):
            SoftConfig(sigma=sigma, tau=tau)


class TestSoftActivations:
    """Per-leaf products of edge sigmoids."""

    def test_root_leaf_has_activation_one(self):
        tree = DecisionTree.from_nested([0.2, 0.8], n_features=1, n_classes=2)

        assert soft_activations(tree, np.array([0.4]), SoftConfig(3.0, 1.0)).tolist() == [1.0]

    def test_at_threshold_both_leaves_half(self):
        act = soft_activations(stump(0.5), np.array([0.5]), SoftConfig(9.0, 1.0))

        np.testing.assert_allclose(act, [0.5, 0.5])

    def test_depth_two_by_hand(self):
        tree = DecisionTree.from_nested(
            (0, 0.5, (1, 0.3, [0.0, 1.0], [1.0, 0.0]), [1.0, 0.0]),
            n_features=2, n_classes=2,
        )
        x = np.array([0.6, 0.2])
        s = 2.0

        act = soft_activations(tree, x, SoftConfig(s, 1.0))

        left_root = sig(0.5 - 0.6, s)  # x0 > 0.5
        expected = [left_root * sig(0.3 - 0.2, s), left_root * sig(0.2 - 0.3, s), sig(0.6 - 0.5, s)]
        np.testing.assert_allclose(act, expected, rtol=1e-12)

    def test_mass_is_conserved(self, rng):
        for _ in range(200):
            tree = random_tree(rng, int(rng.integers(1, 7)), 5)
            act = soft_activations(tree, rng.uniform(size=5), SoftConfig(rng.uniform(0.5, 20.0), 1.0))
            assert act.sum() == pytest.approx(1.0, abs=1e-9)

    def test_long_paths_do_not_underflow_to_nan(self):
        tree = random_tree(np.random.default_rng(0), 6, 3)

        act = soft_activations(tree, np.array([5.0, -5.0, 5.0]), SoftConfig(500.0, 1.0))

        assert np.isfinite(act).all()
        assert act.sum() == pytest.approx(1.0, abs=1e-9)

    def test_sharpening_with_sigma(self, rng):
        for _ in range(50):
            tree = random_tree(rng, 1, 2)
            x = rng.uniform(size=2)
            low = soft_activations(tree, x, SoftConfig(1.0, 1.0)).max()
            high = soft_activations(tree, x, SoftConfig(10.0, 1.0)).max()
            assert high >= low - 1e-15


class TestSoftOutputs:
    """Tree outputs and the temperature softmax."""

    def test_identical_leaves_ignore_input(self):
        tree = stump(0.5, left=(0.3, 0.7), right=(0.3, 0.7))

        np.testing.assert_allclose(soft_tree_output(tree, np.array([0.1]), SoftConfig(4.0, 1.0)), [0.3, 0.7])

    def test_at_threshold_is_even(self):
        np.testing.assert_allclose(soft_tree_output(stump(0.5), np.array([0.5]), SoftConfig(4.0, 1.0)), [0.5, 0.5])

    def test_saturates_to_left_leaf(self):
        out = soft_tree_output(stump(0.5), np.array([0.8]), SoftConfig(100.0, 1.0))

        np.testing.assert_allclose(out, [0.0, 1.0], atol=1e-9)

    def test_single_leaf_softmax(self):
        ens = ensemble_of(DecisionTree.from_nested([0.3, 0.7], 1, 2))

        probs = soft_ensemble_output(ens, np.array([0.0]), SoftConfig(1.0, 1.0)).probs

        np.testing.assert_allclose(probs, [0.401312339887548, 0.598687660112452], rtol=1e-12)

    def test_equal_scores_give_uniform(self):
        ens = ensemble_of(DecisionTree.from_nested([1 / 3, 1 / 3, 1 / 3], 1, 3))

        np.testing.assert_allclose(soft_ensemble_output(ens, np.array([0.0]), SoftConfig(1.0, 5.0)).probs,
                                   [1 / 3, 1 / 3, 1 / 3])

    def test_large_tau_is_one_hot(self):
        probs = soft_ensemble_output(ensemble_of(stump()), np.array([0.9]), SoftConfig(50.0, 1e4)).probs

        np.testing.assert_allclose(probs, [0.0, 1.0], atol=1e-12)

    def test_detail_outputs(self, rng):
        ens = random_ensemble(rng, 4, 3, 3)

        out = soft_ensemble_output(ens, rng.uniform(size=3), SoftConfig(3.0, 2.0), detail=True)

        assert out.per_tree.shape == (4, 2)
        np.testing.assert_allclose(out.per_tree.sum(axis=1), 1.0, atol=1e-9)
        assert [len(a) for a in out.leaf_activations] == [t.leaves.size for t in ens.trees]
        assert out.probs.sum() == pytest.approx(1.0, abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(SchemaError):
            soft_ensemble_output(ensemble_of(stump()), np.zeros(3), SoftConfig(1.0, 1.0))

    def test_agrees_with_hard_model_in_the_limit(self, rng):
        delta = 1e-2
        cfg = SoftConfig(sigma=30.0 / delta, tau=10.0)
        checked = 0
        for _ in range(40):
            ens = random_ensemble(rng, int(rng.integers(1, 6)), 3, 3)
            thresholds = ens.paths.edge_threshold
            features = ens.paths.edge_feature
            for x in rng.uniform(size=(10, 3)):
                if np.min(np.abs(x[features] - thresholds)) < delta:
                    continue
                soft = soft_ensemble_output(ens, x, cfg).probs
                assert int(np.argmax(soft)) == predict_hard(ens, x).label
                checked += 1
        assert checked > 50


class TestInputGradient:
    """Analytic gradients against central differences."""

    def test_matches_finite_differences(self, rng):
        for _ in range(30):
            ens = random_ensemble(rng, int(rng.integers(1, 21)), int(rng.integers(1, 5)), 4,
                                  n_classes=int(rng.integers(2, 4)))
            cfg = SoftConfig(sigma=rng.uniform(0.5, 10.0), tau=rng.uniform(0.5, 10.0))
            x = rng.uniform(size=4)

            analytic = input_gradient(ens, x, cfg).values
            numeric = _numeric_jacobian(ens, x, cfg)

            np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-7)

    def test_single_class_row(self, rng):
        ens = random_ensemble(rng, 3, 3, 3, n_classes=3)
        cfg = SoftConfig(2.0, 3.0)
        x = rng.uniform(size=3)

        full = input_gradient(ens, x, cfg).values
        row = input_gradient(ens, x, cfg, class_index=2)

        assert row.class_index == 2
        np.testing.assert_allclose(row.values, full[2], rtol=1e-12)

    def test_columns_sum_to_zero(self, rng):
        ens = random_ensemble(rng, 5, 3, 4, n_classes=3)

        grad = input_gradient(ens, rng.uniform(size=4), SoftConfig(4.0, 2.0)).values

        np.testing.assert_allclose(grad.sum(axis=0), 0.0, atol=1e-7)

    def test_unused_feature_has_zero_gradient(self):
        ens = ensemble_of(stump(0.5, feature=0, n_features=3))

        grad = input_gradient(ens, np.array([0.4, 0.1, 0.9]), SoftConfig(3.0, 1.0)).values

        assert np.all(grad[:, 1:] == 0.0)

    def test_stump_at_threshold_by_hand(self):
        sigma = 4.0
        ens = ensemble_of(stump(0.5))

        grad = input_gradient(ens, np.array([0.5]), SoftConfig(sigma, 1.0)).values

        # scores move by +/- sigma/4 per unit x; softmax Jacobian at (0.5, 0.5) is 1/4 per logit difference
        assert grad[1, 0] == pytest.approx(sigma / 4 * 0.5, rel=1e-12)
        assert grad[0, 0] == pytest.approx(-sigma / 4 * 0.5, rel=1e-12)
