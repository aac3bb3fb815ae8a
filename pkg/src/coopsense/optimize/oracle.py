"""Dense-grid search used as an independent check on the solvers.

Replaces a branch-and-bound fractional-program solver for the tiny
instances exercised in tests: enumerate a rectangular grid, filter by a
feasibility predicate, pick the best objective value, then optionally
re-grid around the winner a few times for sub-cell accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

MAX_GRID_DIMS = 4


@dataclass(frozen=True)
class GridOracleResult:
    point: np.ndarray
    value: float
    n_evals: int


def _grid_points(bounds: np.ndarray, resolution: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, resolution) for lo, hi in bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, bounds.shape[0])


def grid_oracle(
    objective: Callable[[np.ndarray], np.ndarray],
    bounds: Sequence[tuple[float, float]],
    resolution: int = 41,
    feasible: Callable[[np.ndarray], np.ndarray] | None = None,
    maximize: bool = True,
    refine: int = 2,
    batch: bool = True,
) -> GridOracleResult:
    """Best feasible grid point of a low-dimensional objective.

    objective maps an (m, n) batch of points to m values (set
    batch=False for a scalar function); feasible, if given, maps the
    same batch to a boolean mask.  After the full scan the grid is
    shrunk refine times onto the winning cell's +-1-cell neighborhood,
    which sharpens the optimum without rescanning the whole box.
    """
    bnds = np.asarray(bounds, dtype=float)
    if bnds.ndim != 2 or bnds.shape[1] != 2:
        raise ValueError("bounds must be a sequence of (lo, hi) pairs")
    if bnds.shape[0] > MAX_GRID_DIMS:
        raise ValueError(
            f"dense grids support at most {MAX_GRID_DIMS} dimensions")
    if np.any(bnds[:, 0] > bnds[:, 1]):
        raise ValueError("each bound must satisfy lo <= hi")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")

    def evaluate(pts: np.ndarray) -> np.ndarray:
        if batch:
            return np.asarray(objective(pts), dtype=float)
        return np.array([float(objective(p)) for p in pts])

    outer = bnds
    best_point: np.ndarray | None = None
    best_value = -np.inf if maximize else np.inf
    n_evals = 0
    cur = bnds
    for _ in range(max(0, refine) + 1):
        pts = _grid_points(cur, resolution)
        if feasible is not None:
            mask = np.asarray(feasible(pts), dtype=bool)
            pts = pts[mask]
        if pts.shape[0] == 0:
            if best_point is not None:
                break
            raise ValueError("empty feasible grid: no point passed the filter")
        vals = evaluate(pts)
        n_evals += pts.shape[0]
        idx = int(np.argmax(vals)) if maximize else int(np.argmin(vals))
        better = vals[idx] > best_value if maximize else vals[idx] < best_value
        if better or best_point is None:
            best_value = float(vals[idx])
            best_point = pts[idx]
        cell = (cur[:, 1] - cur[:, 0]) / (resolution - 1)
        lo = np.maximum(outer[:, 0], best_point - cell)
        hi = np.minimum(outer[:, 1], best_point + cell)
        cur = np.stack([lo, hi], axis=1)
    return GridOracleResult(point=best_point, value=best_value,
                            n_evals=n_evals)
