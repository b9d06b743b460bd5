"""
Property suites and desk-scale reproductions.

Checks that need the public Wine Quality data are skipped unless
WINE_QUALITY_CSV points at a comma-separated copy of the white-wine file.
"""
import math
import os
from pathlib import Path

import numpy as np
import pytest

from builders import ensemble_of, majority_of_three, random_ensemble, random_tree, stump
from cli.manifest import sibling
from dataio.covariance import CovarianceContext
from dataio.loader import load_csv, minmax_scale, split_70_30
from distance.functions import KINDS, DistanceSpec, dist, dist_gradient
from ensemble.trainers import train_adaboost, train_random_forest, train_single_tree
from ensemble.tree import predict_hard
from evalstats.metrics import coverage, d_rmean, exact_distances, overlap, pct_closer
from evalstats.ttest import t_test_two_tailed
from focus.engine import FocusConfig, batch_generate, generate_cf
from focus.presets import preset
from focus.search import grid_search
from ftweak.tweak import FtConfig, ft_explain, ft_sweep
from main import main
from softmodel.soft import SoftConfig, input_gradient, soft_activations, soft_ensemble_output

WINE_CSV = os.environ.get("WINE_QUALITY_CSV")
needs_wine = pytest.mark.skipif(not WINE_CSV, reason="WINE_QUALITY_CSV is not set")


@pytest.fixture(scope="module")
def wine_split():
    ds = minmax_scale(load_csv(WINE_CSV, "quality", positive_threshold=7))
    return split_70_30(ds, seed=7)


def _grid_oracle(ens, x, step=1e-4):
    """Smallest |delta| on a 1-D grid that flips the hard label"""
    y_x = predict_hard(ens, x).label
    for k in range(1, int(2.0 / step)):
        for sign in (1.0, -1.0):
            if predict_hard(ens, x + sign * k * step).label != y_x:
                return k * step
    return math.inf


class TestSoftModelProperties:
    def test_mass_conservation(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            n_features = int(rng.integers(1, 6))
            tree = random_tree(rng, int(rng.integers(1, 7)), n_features)
            act = soft_activations(tree, rng.uniform(size=n_features), SoftConfig(rng.uniform(0.5, 20.0), 1.0))
            assert abs(act.sum() - 1.0) <= 1e-9

    @pytest.mark.slow
    def test_gradients_against_finite_differences(self):
        rng = np.random.default_rng(2)
        h = 1e-5
        for _ in range(200):
            n_features = int(rng.integers(1, 5))
            ens = random_ensemble(rng, int(rng.integers(1, 21)), int(rng.integers(1, 5)), n_features)
            cfg = SoftConfig(sigma=rng.uniform(0.5, 20.0), tau=rng.uniform(0.5, 10.0))
            x = rng.uniform(size=n_features)

            analytic = input_gradient(ens, x, cfg).values
            numeric = np.zeros_like(analytic)
            for i in range(n_features):
                up, down = x.copy(), x.copy()
                up[i] += h
                down[i] -= h
                numeric[:, i] = (soft_ensemble_output(ens, up, cfg).probs
                                 - soft_ensemble_output(ens, down, cfg).probs) / (2 * h)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-7)

    @pytest.mark.parametrize("kind", KINDS)
    def test_distance_gradients(self, kind):
        rng = np.random.default_rng(3)
        covariance = CovarianceContext.identity(5) if kind == "mahalanobis" else None
        spec = DistanceSpec(kind=kind, covariance=covariance, smooth_eps=0.0)
        h = 1e-6
        for _ in range(200):
            x, xbar = rng.uniform(0.05, 1.0, size=(2, 5))
            if np.min(np.abs(x - xbar)) < 1e-3:
                continue
            numeric = np.array([
                (dist(spec, x, xbar + h * e) - dist(spec, x, xbar - h * e)) / (2 * h) for e in np.eye(5)
            ])
            np.testing.assert_allclose(dist_gradient(spec, x, xbar), numeric, rtol=1e-4, atol=1e-8)

    def test_mahalanobis_identity_equals_euclidean(self):
        rng = np.random.default_rng(4)
        mahalanobis = DistanceSpec(kind="mahalanobis", covariance=CovarianceContext.identity(6), smooth_eps=0.0)
        euclidean = DistanceSpec(kind="euclidean", smooth_eps=0.0)
        for x, xbar in rng.uniform(size=(1000, 2, 6)):
            assert abs(dist(mahalanobis, x, xbar) - dist(euclidean, x, xbar)) < 1e-12


class TestSearchOptimality:
    def test_single_split_models_against_grid_oracle(self):
        rng = np.random.default_rng(5)
        cfg = FocusConfig(soft=SoftConfig(5.0, 1.0), beta=0.001, alpha=0.001,
                          distance=DistanceSpec(kind="euclidean"), iterations=1000)
        for _ in range(50):
            theta = float(rng.uniform(0.2, 0.8))
            left, right = ((0.0, 1.0), (1.0, 0.0)) if rng.random() < 0.5 else ((1.0, 0.0), (0.0, 1.0))
            ens = ensemble_of(stump(theta, left=left, right=right))
            x = np.array([float(np.clip(theta + rng.choice([-1.0, 1.0]) * rng.uniform(0.01, 0.3), 0.0, 1.0))])

            result = generate_cf(ens, x, cfg)

            assert result.found
            assert predict_hard(ens, result.counterfactual).label != predict_hard(ens, x).label
            assert result.distance <= 10 * _grid_oracle(ens, x)

    def test_feature_tweaking_fails_where_search_succeeds(self):
        ens = majority_of_three()
        x = np.array([0.2, 0.2, 0.2])
        euclidean = DistanceSpec(kind="euclidean")

        ft = ft_explain(ens, x, FtConfig(epsilon=0.01, distance=euclidean))
        focus = generate_cf(ens, x, FocusConfig(soft=SoftConfig(5.0, 1.0), beta=0.001, alpha=0.01,
                                                distance=euclidean, iterations=500))

        assert not ft.found
        assert focus.found
        assert predict_hard(ens, focus.counterfactual).label != predict_hard(ens, x).label


class TestMetricSemantics:
    def test_self_comparison_and_identical_samples(self):
        rng = np.random.default_rng(6)
        ens = random_ensemble(rng, 1, 3, 3)
        euclidean = DistanceSpec(kind="euclidean")
        results = [ft_explain(ens, row, FtConfig(0.01, euclidean), i) for i, row in enumerate(rng.uniform(size=(20, 3)))]
        if not any(r.found for r in results):
            pytest.skip("random tree produced no counterfactuals")

        assert d_rmean(results, results, euclidean) == 1.0
        assert pct_closer(results, results, euclidean) == 0.0
        samples = rng.uniform(size=8)
        assert t_test_two_tailed(samples, samples) == 1.0


@pytest.mark.slow
class TestDeterminism:
    def test_pipeline_is_byte_identical_across_jobs(self, tmp_path, raw_csv):
        outputs = []
        for jobs in ("1", "8"):
            work = tmp_path / f"jobs{jobs}"
            work.mkdir()
            model = work / "rf.model.json"
            cf = work / "focus.cf.json"
            report = work / "report.json"
            assert main(["train", "--data", str(raw_csv), "--label", "label", "--kind", "rf", "--num-trees", "8",
                         "--max-depth", "3", "--seed", "7", "--jobs", jobs, "--out", str(model)]) == 0
            assert main(["explain", "--model", str(model), "--data", str(sibling(model, ".test.csv")),
                         "--method", "focus", "--distance", "euclidean", "--sigma", "5", "--tau", "1",
                         "--beta", "0.001", "--alpha", "0.01", "--iters", "200", "--jobs", jobs,
                         "--out", str(cf)]) == 0
            assert main(["evaluate", "--model", str(model), "--cf", str(cf), "--distance", "euclidean",
                         "--out", str(report)]) == 0
            outputs.append([Path(p).read_bytes() for p in (model, cf, report, sibling(report, ".csv"))])

        assert outputs[0] == outputs[1]


@needs_wine
@pytest.mark.slow
class TestWine:
    """Desk-scale reproductions on Wine Quality"""

    def test_shape(self):
        ds = load_csv(WINE_CSV, "quality", positive_threshold=7)

        assert (ds.n_rows, ds.n_features) == (4898, 11)

    def test_limit_agreement(self, wine_split):
        train, test = wine_split
        ens = train_random_forest(train, num_trees=100, max_depth=4, seed=7)
        cfg = SoftConfig(sigma=10.0, tau=10.0)
        features, thresholds = ens.paths.edge_feature, ens.paths.edge_threshold

        agree, total = 0, 0
        for x in test.rows:
            if np.min(np.abs(x[features] - thresholds)) < 1e-2:
                continue
            total += 1
            agree += int(np.argmax(soft_ensemble_output(ens, x, cfg).probs)) == predict_hard(ens, x).label
        assert total > 0
        assert agree / total >= 0.99

    @pytest.mark.parametrize("kind", ["dt", "ab"])
    def test_grid_search_reaches_full_coverage(self, wine_split, kind):
        train, test = wine_split
        ens = (train_single_tree(train, max_depth=4) if kind == "dt"
               else train_adaboost(train, num_trees=100, max_depth=2))
        template = FocusConfig(soft=SoftConfig(1.0, 1.0), beta=0.05, alpha=0.001,
                               distance=DistanceSpec(kind="euclidean"), iterations=1000)
        grids = {"sigma": [1.0, 5.0, 10.0], "tau": [1.0, 10.0], "beta": [0.05], "alpha": [0.001, 0.005]}

        result = grid_search(ens, test.rows[:200], template, grids, parallelism=-1)

        assert result.best_cell.coverage == 1.0

    @pytest.mark.parametrize("kind", ["dt", "ab"])
    def test_search_beats_feature_tweaking_on_cosine(self, wine_split, kind):
        train, test = wine_split
        if kind == "dt":
            ens = train_single_tree(train, max_depth=2)
        else:
            ens = train_adaboost(train, num_trees=100, max_depth=4)
        p = preset("wine", kind, "cosine")
        cosine = DistanceSpec(kind="cosine")
        rows = test.rows[:300]
        cfg = FocusConfig(soft=SoftConfig(p.sigma, p.tau), beta=p.beta, alpha=p.alpha, distance=cosine)

        focus = batch_generate(ens, rows, cfg, parallelism=-1)
        ft = ft_sweep(ens, rows, cosine, parallelism=-1).best_results

        shared = overlap(focus, ft)
        d_focus, d_ft = exact_distances(focus, cosine), exact_distances(ft, cosine)
        assert np.mean([d_focus[i] for i in shared]) < np.mean([d_ft[i] for i in shared])
        assert pct_closer(focus, ft, cosine) > 0.5
        assert coverage(focus, ens) >= coverage(ft, ens)
