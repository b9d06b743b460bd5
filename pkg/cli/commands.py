import time
from argparse import Namespace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from cli.manifest import build_manifest, sibling, write_json, write_manifest
from cli.records import read_cf_file, to_record, write_cf_file
from dataio.covariance import covariance
from dataio.loader import Dataset, apply_scaling, load_csv, minmax_scale, split_70_30, write_csv
from distance.functions import DistanceSpec
from ensemble.model_io import load_model, model_digest, save_model
from ensemble.trainers import train_adaboost, train_random_forest, train_single_tree
from ensemble.tree import TreeEnsemble, predict_labels
from errors import ArgumentError, SchemaError
from evalstats.metrics import evaluate, iteration_curve
from focus.engine import FocusConfig, batch_generate
from focus.presets import preset
from focus.search import grid_search
from ftweak.tweak import FtConfig, ft_batch, ft_sweep
from logs.log import logger, set_model_digest
from softmodel.soft import SoftConfig


# ============================================================================
# SHARED HELPERS
# ============================================================================

def _open_model(path: str) -> TreeEnsemble:
    ens = load_model(path)
    set_model_digest(model_digest(ens))
    if ens.scale_min is None:
        raise SchemaError("model has no scaling metadata; raw inputs cannot be mapped to the model's [0,1] space")
    return ens


def _scaled_rows(ens: TreeEnsemble, path: str, allow_out_of_range: bool = False) -> Dataset:
    """Load a CSV in original units and map it into the model's scaled feature space"""
    raw = load_csv(path, ens.label_name, min_classes=1)
    return apply_scaling(raw, ens.feature_names, ens.scale_min, ens.scale_max,
                         allow_out_of_range=allow_out_of_range)


def _distance_spec(ens: TreeEnsemble, kind: str, train_data: Optional[str], smooth_eps: Optional[float]) -> DistanceSpec:
    options = {} if smooth_eps is None else {"smooth_eps": smooth_eps}
    if kind != "mahalanobis":
        return DistanceSpec(kind=kind, **options)
    if not train_data:
        raise SchemaError("mahalanobis distance needs a covariance source; pass --train-data with the training CSV")
    train = _scaled_rows(ens, train_data, allow_out_of_range=True)
    return DistanceSpec(kind=kind, covariance=covariance(train), **options)


def _inputs(**paths: Optional[str]) -> Dict[str, str]:
    return {name: path for name, path in paths.items() if path}


def _limit(ds: Dataset, limit: Optional[int]) -> Tuple[np.ndarray, np.ndarray]:
    if limit is not None and limit < 0:
        raise ArgumentError("--limit must be >= 0")
    end = ds.n_rows if limit is None else min(limit, ds.n_rows)
    return ds.rows[:end], ds.row_ids[:end]


def _focus_hyperparameters(args: Namespace, ens: TreeEnsemble) -> Tuple[float, float, float, float]:
    values = {"sigma": args.sigma, "tau": args.tau, "beta": args.beta, "alpha": args.alpha}
    if args.preset:
        published = preset(args.preset, ens.kind, args.distance)
        for name in values:
            if values[name] is None:
                values[name] = getattr(published, name)
    missing = [name for name, value in values.items() if value is None]
    if missing:
        raise ArgumentError(f"missing hyperparameters {missing}; pass them or use --preset DATASET")
    return values["sigma"], values["tau"], values["beta"], values["alpha"]


# ============================================================================
# TRAIN
# ============================================================================

def cmd_train(args: Namespace) -> int:
    manifest = build_manifest("train", args, _inputs(data=args.data))
    start = time.perf_counter()

    ds = minmax_scale(load_csv(args.data, args.label, args.positive_threshold))
    train, test = split_70_30(ds, args.seed, stratify=args.stratify)

    if args.kind == "dt":
        ens = train_single_tree(train, args.max_depth, min_leaf=args.min_leaf, seed=args.seed)
    elif args.kind == "rf":
        ens = train_random_forest(train, args.num_trees, args.max_depth, seed=args.seed,
                                  min_leaf=args.min_leaf, n_jobs=args.jobs)
    else:
        ens = train_adaboost(train, args.num_trees, args.max_depth, seed=args.seed, min_leaf=args.min_leaf)
    train_seconds = time.perf_counter() - start

    accuracy = float(np.mean(predict_labels(ens, test.rows) == test.labels)) if test.n_rows else float("nan")
    train_csv, test_csv = sibling(args.out, ".train.csv"), sibling(args.out, ".test.csv")
    save_model(ens, args.out, manifest_digest=manifest.digest)
    write_csv(train, train_csv)
    write_csv(test, test_csv)

    manifest.artifacts = [str(args.out), str(train_csv), str(test_csv)]
    manifest.timings = {"train_seconds": train_seconds}
    write_manifest(args.out, manifest)
    logger.info(f"train_finished - kind={ens.kind}, trees={ens.n_trees}, test_accuracy={accuracy:.4f}")
    print(f"test accuracy: {accuracy:.4f} ({test.n_rows} rows)")
    for warning in ds.warnings:
        print(f"warning: {warning}")
    return 0


# ============================================================================
# EXPLAIN
# ============================================================================

def cmd_explain(args: Namespace) -> int:
    manifest = build_manifest("explain", args, _inputs(model=args.model, data=args.data,
                                                       train_data=args.train_data))
    start = time.perf_counter()
    ens = _open_model(args.model)
    ds = _scaled_rows(ens, args.data, allow_out_of_range=args.allow_out_of_range)
    rows, indices = _limit(ds, args.limit)
    spec = _distance_spec(ens, args.distance, args.train_data, args.smooth_eps)
    artifacts: List[str] = [str(args.out)]

    if args.method == "focus":
        sigma, tau, beta, alpha = _focus_hyperparameters(args, ens)
        cfg = FocusConfig(
            soft=SoftConfig(sigma=sigma, tau=tau), beta=beta, alpha=alpha, distance=spec,
            iterations=args.iters, clamp_to_unit_box=args.clamp, seed=args.seed, trace=args.trace,
        )
        results = batch_generate(ens, rows, cfg, args.jobs, indices)
        fingerprint = cfg.fingerprint()
        if args.trace:
            curve_path = sibling(args.out, ".curve.csv")
            curve = pd.DataFrame([p._asdict() for p in iteration_curve(results)],
                                 columns=["iteration", "mean_distance", "fraction_found"])
            curve["manifest_digest"] = manifest.digest
            curve.to_csv(curve_path, index=False, float_format="%.17g")
            artifacts.append(str(curve_path))
    else:
        if len(args.epsilon) == 1:
            ft_cfg = FtConfig(epsilon=args.epsilon[0], distance=spec)
            results = ft_batch(ens, rows, ft_cfg, args.jobs, indices)
        else:
            sweep = ft_sweep(ens, rows, spec, args.epsilon, args.jobs, indices)
            ft_cfg, results = sweep.best, sweep.best_results
            sweep_path = sibling(args.out, ".sweep.csv")
            table = pd.DataFrame([vars(c) for c in sweep.cells])
            table["manifest_digest"] = manifest.digest
            table.to_csv(sweep_path, index=False, float_format="%.17g")
            artifacts.append(str(sweep_path))
        fingerprint = ft_cfg.fingerprint()
        fingerprint["smooth_eps"] = spec.smooth_eps

    records = [to_record(r, fingerprint, manifest.digest, ens.scale_min, ens.scale_max) for r in results]
    write_cf_file(args.out, records)

    manifest.artifacts = artifacts
    manifest.timings = {"explain_seconds": time.perf_counter() - start}
    write_manifest(args.out, manifest)
    found = sum(r.found for r in results)
    print(f"{found}/{len(results)} counterfactuals found ({fingerprint['method']}, {spec.kind})")
    return 0


# ============================================================================
# EVALUATE
# ============================================================================

def _check_dimensions(results, ens: TreeEnsemble, path: str):
    for r in results:
        if r.original.shape[0] != ens.n_features:
            raise SchemaError(f"{path}: instance {r.instance_index} has {r.original.shape[0]} features, "
                              f"model expects {ens.n_features}")


def cmd_evaluate(args: Namespace) -> int:
    manifest = build_manifest("evaluate", args, _inputs(model=args.model, cf=args.cf, baseline=args.baseline,
                                                        train_data=args.train_data))
    start = time.perf_counter()
    ens = _open_model(args.model)
    spec = _distance_spec(ens, args.distance, args.train_data, None)

    results, fingerprint = read_cf_file(args.cf)
    _check_dimensions(results, ens, args.cf)
    baseline, baseline_fingerprint = None, None
    if args.baseline:
        baseline, baseline_fingerprint = read_cf_file(args.baseline)
        _check_dimensions(baseline, ens, args.baseline)

    report = evaluate(results, spec, ens, baseline=baseline, paired=args.paired,
                      method_fingerprint=fingerprint, baseline_fingerprint=baseline_fingerprint)
    payload = {
        "report": report.model_dump(),
        "model_kind": ens.kind,
        "model_digest": model_digest(ens),
        "manifest_digest": manifest.digest,
    }
    write_json(args.out, payload)

    csv_path = sibling(args.out, ".csv")
    row = {
        "model_kind": ens.kind,
        "distance": report.distance,
        "method": report.method,
        "baseline": report.baseline,
        "coverage": report.coverage,
        "baseline_coverage": report.baseline_coverage,
        "d_mean": report.d_mean,
        "d_rmean": report.d_rmean,
        "pct_closer": report.pct_closer,
        "p_value": report.p_value,
        "n_compared": report.n_compared,
        "manifest_digest": manifest.digest,
    }
    pd.DataFrame([row]).to_csv(csv_path, index=False, float_format="%.17g")

    manifest.artifacts = [str(args.out), str(csv_path)]
    manifest.timings = {"evaluate_seconds": time.perf_counter() - start}
    write_manifest(args.out, manifest)
    print(f"coverage={report.coverage:.4f} d_mean={report.d_mean}"
          + ("" if baseline is None else f" d_rmean={report.d_rmean} pct_closer={report.pct_closer} "
                                         f"p={report.p_value}"))
    return 0


# ============================================================================
# GRID SEARCH
# ============================================================================

def cmd_gridsearch(args: Namespace) -> int:
    manifest = build_manifest("gridsearch", args, _inputs(model=args.model, data=args.data,
                                                          train_data=args.train_data))
    start = time.perf_counter()
    ens = _open_model(args.model)
    ds = _scaled_rows(ens, args.data)
    rows, _ = _limit(ds, args.limit)
    spec = _distance_spec(ens, args.distance, args.train_data, args.smooth_eps)

    grids = {name: getattr(args, name) for name in ("sigma", "tau", "beta", "alpha")
             if getattr(args, name) is not None}
    first = {name: values[0] for name, values in grids.items()}
    template = FocusConfig(
        soft=SoftConfig(sigma=first.get("sigma", 1.0), tau=first.get("tau", 1.0)),
        beta=first.get("beta", 0.05), alpha=first.get("alpha", 0.001), distance=spec,
        iterations=args.iters, clamp_to_unit_box=args.clamp, seed=args.seed,
    )
    result = grid_search(ens, rows, template, grids, args.jobs)

    sweep_path = sibling(args.out, ".sweep.csv")
    table = pd.DataFrame([vars(c) for c in result.cells])
    table["manifest_digest"] = manifest.digest
    table.to_csv(sweep_path, index=False, float_format="%.17g")
    write_json(args.out, {
        "best": result.best.fingerprint(),
        "coverage": result.best_cell.coverage,
        "d_mean": result.best_cell.d_mean,
        "n_cells": len(result.cells),
        "n_instances": int(rows.shape[0]),
        "manifest_digest": manifest.digest,
    })

    manifest.artifacts = [str(args.out), str(sweep_path)]
    manifest.timings = {"gridsearch_seconds": time.perf_counter() - start}
    write_manifest(args.out, manifest)
    best = result.best_cell
    print(f"best: sigma={best.sigma} tau={best.tau} beta={best.beta} alpha={best.alpha} "
          f"coverage={best.coverage:.4f} d_mean={best.d_mean}")
    return 0
