from dataclasses import dataclass, replace
from itertools import product
from typing import Dict, List, Optional, Sequence
import time

import numpy as np

from ensemble.tree import TreeEnsemble
from errors import ArgumentError
from evalstats.metrics import coverage, d_mean, select_best
from focus.engine import FocusConfig, batch_generate
from logs.log import logger
from metrics.prometheus import track_best_cell, track_grid_cell
from softmodel.soft import SoftConfig

# every value that appears in the published per-setting tables
DEFAULT_GRIDS: Dict[str, Sequence[float]] = {
    "sigma": (1.0, 2.0, 4.0, 5.0, 6.0, 7.0, 10.0),
    "tau": (1.0, 2.0, 3.0, 5.0, 6.0, 10.0),
    "beta": (0.005, 0.01, 0.05),
    "alpha": (0.001, 0.005),
}


@dataclass(frozen=True)
class GridCell:
    sigma: float
    tau: float
    beta: float
    alpha: float
    coverage: float
    d_mean: Optional[float]
    n_found: int


@dataclass(frozen=True)
class GridResult:
    best: FocusConfig
    best_cell: GridCell
    cells: List[GridCell]


def grid_search(
    ens: TreeEnsemble,
    rows: np.ndarray,
    template: FocusConfig,
    grids: Optional[Dict[str, Sequence[float]]] = None,
    parallelism: int = 1
) -> GridResult:
    """
    Evaluate every (sigma, tau, beta, alpha) cell with batch_generate and
    pick the cell with full (else highest) coverage and the smallest d_mean.
    """
    grids = {**DEFAULT_GRIDS, **(grids or {})}
    for name in ("sigma", "tau", "beta", "alpha"):
        if len(grids[name]) == 0:
            raise ArgumentError(f"empty grid for {name}")

    cells: List[GridCell] = []
    configs: List[FocusConfig] = []
    start = time.perf_counter()
    for sigma, tau, beta, alpha in product(grids["sigma"], grids["tau"], grids["beta"], grids["alpha"]):
        cfg = replace(template, soft=SoftConfig(sigma=float(sigma), tau=float(tau)),
                      beta=float(beta), alpha=float(alpha))
        results = batch_generate(ens, rows, cfg, parallelism)
        n_found = sum(r.found for r in results)
        cell = GridCell(
            sigma=cfg.soft.sigma, tau=cfg.soft.tau, beta=cfg.beta, alpha=cfg.alpha,
            coverage=coverage(results, ens),
            d_mean=d_mean(results, cfg.distance) if n_found else None,
            n_found=n_found,
        )
        cells.append(cell)
        configs.append(cfg)
        track_grid_cell("focus")
        logger.debug(
            f"grid_cell_evaluated - sigma={sigma}, tau={tau}, beta={beta}, alpha={alpha}, "
            f"coverage={cell.coverage:.4f}, d_mean={cell.d_mean}"
        )

    best_cell = select_best(cells, lambda c: c.coverage, lambda c: c.d_mean)
    best = configs[cells.index(best_cell)]
    track_best_cell("focus", best_cell.coverage)
    logger.info(
        f"grid_search_finished - cells={len(cells)}, best_sigma={best_cell.sigma}, best_tau={best_cell.tau}, "
        f"best_beta={best_cell.beta}, best_alpha={best_cell.alpha}, coverage={best_cell.coverage:.4f}, "
        f"duration_s={time.perf_counter() - start:.2f}"
    )
    return GridResult(best=best, best_cell=best_cell, cells=cells)
