"""Tests for Adam, the hinge loss, single-instance search, batches, presets and the grid search."""
from dataclasses import replace

import numpy as np
import pytest

from builders import ensemble_of, stump
from distance.functions import DistanceSpec, dist
from ensemble.tree import DecisionTree, predict_hard
from errors import ArgumentError, DistanceError, SchemaError
from evalstats.metrics import select_best
from focus.adam import AdamState, adam_step
from focus.engine import CfResult, ExplanationDelta, FocusConfig, batch_generate, generate_cf, pred_loss, total_loss
from focus.presets import PRESETS, preset, short_kind
from focus.search import DEFAULT_GRIDS, GridCell, grid_search
from softmodel.soft import SoftConfig


def _oracle_config(**overrides):
    cfg = FocusConfig(soft=SoftConfig(sigma=5.0, tau=1.0), beta=0.001, alpha=1e-4,
                      distance=DistanceSpec(kind="euclidean"), iterations=1000)
    return replace(cfg, **overrides)


class TestAdam:
    def test_first_step_moves_alpha_against_gradient(self):
        state, delta = adam_step(AdamState.zeros(3), np.array([2.0, -0.5, 1e-3]), alpha=0.01)

        np.testing.assert_allclose(delta, [-0.01, 0.01, -0.01], rtol=1e-4)
        assert state.t == 1

    def test_zero_gradient_never_moves(self):
        state = AdamState.zeros(2)
        for _ in range(10):
            state, delta = adam_step(state, np.zeros(2), alpha=0.1)
            assert np.array_equal(delta, np.zeros(2))

    def test_moments_accumulate(self):
        state, _ = adam_step(AdamState.zeros(1), np.array([1.0]), alpha=0.1)
        state, _ = adam_step(state, np.array([1.0]), alpha=0.1)

        assert state.m[0] == pytest.approx(0.19)
        assert state.v[0] == pytest.approx(0.001999)
        assert state.t == 2


class TestFocusConfig:
    @pytest.mark.parametrize("field,value", [("beta", 0.0), ("alpha", -1.0), ("iterations", 0)])
    def test_rejects_invalid(self, field, value):
        with pytest.raises(ArgumentError):
            _oracle_config(**{field: value})

    def test_fingerprint_names_every_hyperparameter(self):
        fp = _oracle_config().fingerprint()

        assert fp["method"] == "focus"
        assert (fp["sigma"], fp["tau"], fp["beta"], fp["alpha"], fp["iterations"]) == (5.0, 1.0, 0.001, 1e-4, 1000)
        assert fp["distance"] == "euclidean"


class TestLoss:
    """Hinge prediction loss and the total objective"""

    def test_flipped_point_has_zero_prediction_loss(self, stump_model, focus_config):
        value, gradient = pred_loss(stump_model, focus_config, np.array([0.4]), np.array([0.7]))

        assert value == 0.0
        assert np.array_equal(gradient, np.zeros(1))

    def test_unflipped_point_loss_is_soft_probability(self, stump_model, focus_config):
        value, gradient = pred_loss(stump_model, focus_config, np.array([0.4]), np.array([0.45]))

        assert 0.5 < value < 1.0
        # moving right raises class 1, so the gradient of f~(0) is negative
        assert gradient[0] < 0.0

    def test_total_loss_gradient_matches_finite_differences(self, rng, euclidean):
        ens = ensemble_of(*[stump(t, feature=f, n_features=3) for t, f in [(0.6, 0), (0.7, 1), (0.8, 2)]],
                          weights=[1.0, 1.2, 0.9])
        cfg = FocusConfig(soft=SoftConfig(3.0, 2.0), beta=0.1, alpha=0.01, distance=euclidean)
        x = np.array([0.2, 0.3, 0.1])
        xbar = np.array([0.25, 0.33, 0.18])
        y_x = predict_hard(ens, x).label

        _, analytic = total_loss(ens, cfg, x, xbar, y_x)
        numeric = np.zeros(3)
        for i in range(3):
            up, down = xbar.copy(), xbar.copy()
            up[i] += 1e-6
            down[i] -= 1e-6
            numeric[i] = (total_loss(ens, cfg, x, up, y_x)[0] - total_loss(ens, cfg, x, down, y_x)[0]) / 2e-6

        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-8)


class TestGenerateCf:
    """Single-instance search"""

    def test_one_dimensional_oracle(self, stump_model):
        x = np.array([0.45])

        result = generate_cf(stump_model, x, _oracle_config())

        assert result.found
        assert result.cf_label == 1
        assert result.counterfactual[0] > 0.5
        assert abs(result.distance - 0.0501) <= 1e-3
        assert result.found_at_iteration is not None

    def test_random_single_splits_stay_near_the_boundary(self, rng):
        for _ in range(10):
            theta = rng.uniform(0.3, 0.7)
            gap = rng.uniform(0.02, 0.2)
            side = rng.choice([-1.0, 1.0])
            ens = ensemble_of(stump(theta))
            x = np.array([theta + side * gap])

            result = generate_cf(ens, x, _oracle_config(alpha=1e-3))

            assert result.found
            assert predict_hard(ens, result.counterfactual).label != predict_hard(ens, x).label
            assert result.distance <= 10 * gap

    def test_found_counterfactual_flips_the_hard_model(self, three_stumps):
        cfg = FocusConfig(soft=SoftConfig(5.0, 1.0), beta=0.001, alpha=0.01,
                          distance=DistanceSpec(kind="euclidean"), iterations=500)
        x = np.array([0.2, 0.2, 0.2])

        result = generate_cf(three_stumps, x, cfg)

        assert result.found
        assert predict_hard(three_stumps, result.counterfactual).label == 1
        assert result.distance == pytest.approx(dist(DistanceSpec(kind="euclidean", smooth_eps=0.0),
                                                     x, result.counterfactual))

    def test_constant_model_has_no_counterfactual(self, focus_config):
        ens = ensemble_of(DecisionTree.from_nested([0.9, 0.1], 1, 2))

        result = generate_cf(ens, np.array([0.3]), replace(focus_config, iterations=50))

        assert not result.found
        assert result.distance is None and result.found_at_iteration is None
        assert result.iterations_run == 50

    def test_trace_best_distance_never_increases(self, stump_model):
        result = generate_cf(stump_model, np.array([0.45]), _oracle_config(trace=True))

        assert len(result.trace) == 1000
        valid = [step.distance for step in result.trace if step.valid]
        running_best = np.minimum.accumulate(valid)
        assert running_best[-1] == pytest.approx(result.distance)
        assert (np.diff(running_best) <= 0).all()
        assert result.trace[result.found_at_iteration - 1].distance == pytest.approx(result.distance)

    def test_clamp_keeps_unit_box(self, three_stumps):
        cfg = FocusConfig(soft=SoftConfig(5.0, 1.0), beta=0.001, alpha=0.05,
                          distance=DistanceSpec(kind="euclidean"), iterations=200, clamp_to_unit_box=True)

        result = generate_cf(three_stumps, np.array([0.2, 0.2, 0.2]), cfg)

        assert result.found
        assert result.counterfactual.min() >= 0.0 and result.counterfactual.max() <= 1.0

    def test_explanation_delta(self):
        result = CfResult(instance_index=0, original=np.array([0.2, 0.5]), original_label=0,
                          counterfactual=np.array([0.6, 0.5]), cf_label=1, distance=0.4)

        delta = ExplanationDelta.from_result(result, scale_min=np.array([0.0, 10.0]), scale_max=np.array([10.0, 20.0]))

        np.testing.assert_allclose(delta.scaled, [0.4, 0.0])
        np.testing.assert_allclose(delta.original_units, [4.0, 0.0])
        assert delta.n_changed == 1

    def test_explanation_delta_adds_back_up_to_rounding(self):
        result = CfResult(instance_index=0, original=np.array([0.1, 0.7]), original_label=0,
                          counterfactual=np.array([0.3, 0.4]), cf_label=1, distance=0.36)

        delta = ExplanationDelta.from_result(result)

        np.testing.assert_allclose(result.original + delta.scaled, result.counterfactual, rtol=0, atol=1e-15)
        assert delta.original_units is None


class TestBatchGenerate:
    def test_empty_batch(self, stump_model, focus_config):
        assert batch_generate(stump_model, np.zeros((0, 1)), focus_config) == []

    def test_results_keep_input_order(self, stump_model, focus_config):
        rows = np.array([[0.45], [0.1], [0.55]])

        results = batch_generate(stump_model, rows, replace(focus_config, iterations=50), indices=[7, 3, 9])

        assert [r.instance_index for r in results] == [7, 3, 9]
        assert [r.original_label for r in results] == [0, 0, 1]

    def test_parallelism_does_not_change_results(self, three_stumps):
        cfg = FocusConfig(soft=SoftConfig(5.0, 1.0), beta=0.001, alpha=0.01,
                          distance=DistanceSpec(kind="euclidean"), iterations=100)
        rows = np.random.default_rng(5).uniform(size=(6, 3))

        serial = batch_generate(three_stumps, rows, cfg, parallelism=1)
        parallel = batch_generate(three_stumps, rows, cfg, parallelism=2)

        for a, b in zip(serial, parallel):
            assert a.found == b.found
            assert a.found_at_iteration == b.found_at_iteration
            if a.found:
                assert np.array_equal(a.counterfactual, b.counterfactual)

    def test_instance_failure_is_recorded_not_raised(self, focus_config):
        ens = ensemble_of(stump(0.5, n_features=2))
        cfg = replace(focus_config, distance=DistanceSpec(kind="cosine"), iterations=5)

        results = batch_generate(ens, np.array([[0.0, 0.0], [0.7, 0.3]]), cfg)

        assert results[0].error is not None and "zero vector" in results[0].error
        assert not results[0].found
        assert results[1].error is None

    def test_singular_gradient_surfaces_as_error(self, stump_model, focus_config):
        cfg = replace(focus_config, distance=DistanceSpec(kind="euclidean", smooth_eps=0.0))

        with pytest.raises(DistanceError):
            generate_cf(stump_model, np.array([0.45]), cfg)

    def test_row_of_wrong_width_fails_the_batch(self, stump_model, focus_config):
        with pytest.raises(SchemaError, match="dimension mismatch"):
            batch_generate(stump_model, np.array([[0.2, 0.3], [0.4, 0.5]]), replace(focus_config, iterations=5))


class TestPresets:
    def test_known_setting(self):
        p = preset("wine", "rf", "euclidean")

        assert (p.num_trees, p.max_depth, p.sigma, p.tau, p.beta, p.alpha) == (500, 4, 10, 2, 0.05, 0.005)

    def test_full_kind_names_are_accepted(self):
        assert preset("HELOC", "adaptive-boosting", "cosine") == PRESETS[("heloc", "ab", "cosine")]
        assert short_kind("single-tree") == "dt"

    def test_unpublished_combination(self):
        with pytest.raises(ArgumentError, match="no published hyperparameters"):
            preset("wine", "rf", "mahalanobis")

    def test_every_euclidean_setting_exists(self):
        for dataset in ("wine", "heloc", "compas", "shopping"):
            for kind in ("dt", "rf", "ab"):
                assert (dataset, kind, "euclidean") in PRESETS


class TestGridSearch:
    def test_single_cell_grid(self, stump_model, focus_config):
        grids = {"sigma": [5.0], "tau": [1.0], "beta": [0.001], "alpha": [0.001]}

        result = grid_search(stump_model, np.array([[0.45], [0.6]]), replace(focus_config, iterations=200), grids)

        assert len(result.cells) == 1
        assert result.best_cell.coverage == 1.0
        assert result.best.soft.sigma == 5.0 and result.best.alpha == 0.001

    def test_cells_cover_the_product(self, stump_model, focus_config):
        grids = {"sigma": [2.0, 5.0], "tau": [1.0], "beta": [0.001, 0.01], "alpha": [0.005]}

        result = grid_search(stump_model, np.array([[0.4]]), replace(focus_config, iterations=50), grids)

        assert [(c.sigma, c.beta) for c in result.cells] == [(2.0, 0.001), (2.0, 0.01), (5.0, 0.001), (5.0, 0.01)]

    def test_empty_grid(self, stump_model, focus_config):
        with pytest.raises(ArgumentError, match="empty grid for tau"):
            grid_search(stump_model, np.array([[0.4]]), focus_config, {"tau": []})

    def test_default_grids_hold_published_values(self):
        assert 10.0 in DEFAULT_GRIDS["sigma"] and 0.005 in DEFAULT_GRIDS["alpha"]


class TestSelectBest:
    """Coverage first, then mean distance"""

    def _cell(self, coverage, d_mean):
        return GridCell(sigma=1.0, tau=1.0, beta=0.01, alpha=0.001, coverage=coverage, d_mean=d_mean, n_found=1)

    def test_coverage_beats_distance(self):
        cells = [self._cell(0.9, 0.1), self._cell(1.0, 0.5)]

        assert select_best(cells, lambda c: c.coverage, lambda c: c.d_mean) is cells[1]

    def test_distance_breaks_coverage_ties(self):
        cells = [self._cell(1.0, 0.5), self._cell(1.0, 0.2)]

        assert select_best(cells, lambda c: c.coverage, lambda c: c.d_mean) is cells[1]

    def test_earlier_cell_wins_exact_ties(self):
        cells = [self._cell(1.0, 0.2), self._cell(1.0, 0.2)]

        assert select_best(cells, lambda c: c.coverage, lambda c: c.d_mean) is cells[0]

    def test_missing_distance_ranks_last(self):
        cells = [self._cell(0.0, None), self._cell(0.0, 3.0)]

        assert select_best(cells, lambda c: c.coverage, lambda c: c.d_mean) is cells[1]
