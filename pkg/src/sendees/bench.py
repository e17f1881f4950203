"""Runtime sweep of exact EigenScore against EES over matrix sizes and moments."""

import gc
import itertools
import logging
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .scores import DEFAULT_ALPHA, EesConfig, efficient_eigenscore, exact_eigenscore

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BenchGrid:
    rows: tuple = (1000,)
    cols: tuple = (1000,)
    moments: tuple = (20,)
    repeats: int = 3
    seed: int = 0
    warmup: int = 1
    alpha: float = DEFAULT_ALPHA
    ees: EesConfig = field(default_factory=EesConfig)

    def __post_init__(self):
        for name in ("rows", "cols", "moments"):
            values = tuple(int(v) for v in getattr(self, name))
            if not values or min(values) < 1:
                raise ValueError(f"{name} must be a non-empty list of positive integers")
            object.__setattr__(self, name, values)
        if self.repeats < 3:
            raise ValueError(f"repeats must be >= 3, got {self.repeats}")
        if self.warmup < 0:
            raise ValueError(f"warmup must be >= 0, got {self.warmup}")

    def cells(self):
        return list(itertools.product(self.rows, self.cols, self.moments))


def bench_matrix(rows, cols, seed):
    """Seeded standard Gaussian test matrix for one grid cell size."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, rows, cols]))
    return rng.standard_normal((rows, cols))


def median_time(fn, repeats, warmup=1):
    """Median wall time of ``fn()`` over ``repeats`` serial calls and its last result."""
    result = None
    for _ in range(warmup):
        result = fn()
    times = []
    for _ in range(repeats):
        gc.collect()
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), result


def run_bench(grid, progress=None):
    """Time every cell of ``grid``; returns one dict per cell.

    The exact score does not depend on ``M``, so it is timed once per matrix
    size and reused. A cell that fails (for example on ``MemoryError``)
    yields a row with an ``error`` message and the sweep moves on.
    """
    out = []
    exact_cache = {}
    for rows, cols, M in grid.cells():
        row = {"rows": rows, "cols": cols, "elements": rows * cols, "M": M,
               "exact_seconds": None, "ees_seconds": None,
               "exact_value": None, "ees_value": None, "error": None}
        try:
            E = bench_matrix(rows, cols, grid.seed)
            if (rows, cols) not in exact_cache:
                exact_cache[(rows, cols)] = median_time(
                    lambda: exact_eigenscore(E, grid.alpha).value, grid.repeats, grid.warmup
                )
            row["exact_seconds"], row["exact_value"] = exact_cache[(rows, cols)]
            cfg = grid.ees.replace(moments=M,
                                   quad_points=max(grid.ees.quad_points, 4 * (M + 1)))
            row["ees_seconds"], row["ees_value"] = median_time(
                lambda: efficient_eigenscore(E, cfg).value, grid.repeats, grid.warmup
            )
        except (MemoryError, ArithmeticError, ValueError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
            log.warning("bench cell %dx%d M=%d failed: %s", rows, cols, M, row["error"])
        finally:
            E = None
        out.append(row)
        if progress is not None:
            progress(row)
    return out
