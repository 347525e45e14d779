"""Synthetic data generation and the speedup / efficiency-per-thread harness.

Randomness comes from numpy's Philox counter-based 64-bit generator, so a
seed pins every synthetic dataset exactly (the generator's stream is part of
numpy's stability guarantee). Timings cover the executor run only; before
any timed run the harness asserts byte equality with the single-worker
output and aborts on mismatch.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .dataio import Feature, FeatureSet, ResultTable
from .errors import GridchopError, InvalidParameterError
from .executor import RunConfig, TaskSpec, run_grid
from .geom import BBox, Point, Polyline
from .partition import GridSpec, build_partition
from .raster import Raster


@dataclass
class SynthSpec:
    seed: int
    n_points: int = 1000
    extent: BBox = field(default_factory=lambda: BBox(0.0, 0.0, 100.0, 100.0))
    raster_ncols: int = 100
    raster_nrows: int = 100
    raster_kind: str = "continuous"
    n_categories: int = 5
    n_lines: int = 20


@dataclass
class BenchMetrics:
    case: str
    n: int
    t1: float
    tn: float
    repeats: int
    aggregation: str = "median"

    @property
    def speedup(self) -> float:
        return self.t1 / self.tn

    @property
    def efficiency(self) -> float:
        return self.t1 / (self.n * self.tn)


def efficiency(t1: float, n: int, tn: float) -> tuple[float, float]:
    """(speedup, efficiency per thread) = (t1/tn, t1/(n*tn))."""
    if t1 <= 0 or tn <= 0 or n < 1:
        raise InvalidParameterError("times must be > 0 and n >= 1")
    return t1 / tn, t1 / (n * tn)


def synth_dataset(s: SynthSpec) -> tuple[FeatureSet, FeatureSet, Raster]:
    """Deterministic (points, lines, raster) from the seed.

    Draw order is fixed: point coords, point values, raster cells, then line
    endpoints, each from an independent jump of the same Philox stream.
    """
    rng = np.random.Generator(np.random.Philox(s.seed))
    ext = s.extent
    px = rng.uniform(ext.xmin, ext.xmax, s.n_points)
    py = rng.uniform(ext.ymin, ext.ymax, s.n_points)
    pv = rng.uniform(0.0, 100.0, s.n_points)
    points = FeatureSet(
        [
            Feature(f"p{i}", Point(float(px[i]), float(py[i])), {"v": float(pv[i])})
            for i in range(s.n_points)
        ],
        ["v"],
    )
    if s.raster_kind == "categorical":
        cells = rng.integers(0, s.n_categories, (s.raster_nrows, s.raster_ncols)).astype(float)
    else:
        cells = rng.uniform(0.0, 100.0, (s.raster_nrows, s.raster_ncols))
    # Square cells sized off the x axis; the grid is anchored at the
    # extent's minimum corner and may not exactly span its height.
    raster = Raster(
        ncols=s.raster_ncols,
        nrows=s.raster_nrows,
        xll=ext.xmin,
        yll=ext.ymin,
        cellsize=ext.width / s.raster_ncols,
        nodata=-9999.0,
        values=cells,
        kind=s.raster_kind,
    )
    ends = rng.uniform(
        [ext.xmin, ext.ymin, ext.xmin, ext.ymin],
        [ext.xmax, ext.ymax, ext.xmax, ext.ymax],
        (s.n_lines, 4),
    )
    lines = FeatureSet(
        [
            Feature(
                f"l{i}",
                Polyline(
                    [Point(float(e[0]), float(e[1])), Point(float(e[2]), float(e[3]))]
                ),
            )
            for i, e in enumerate(ends)
        ],
        [],
    )
    return points, lines, raster


@dataclass
class BenchRecord:
    case: str
    workers: int
    repeat: int
    elapsed_s: float


def _timed_run(task: TaskSpec, parts, cfg: RunConfig) -> tuple[float, ResultTable]:
    t0 = time.perf_counter()
    table = run_grid(task, parts, cfg)
    elapsed = time.perf_counter() - t0
    if elapsed <= 0:
        t0 = time.perf_counter()
        table = run_grid(task, parts, cfg)
        elapsed = time.perf_counter() - t0
        if elapsed <= 0:
            raise GridchopError("non-monotone timer: repeated non-positive elapsed time")
    return elapsed, table


def run_benchmark(
    task: TaskSpec,
    grid: GridSpec,
    workers_list: list[int],
    repeats: int,
    case: str = "bench",
    aggregation: str = "median",
) -> tuple[list[BenchRecord], list[BenchMetrics]]:
    """Timed repeated executor runs per worker count.

    t1 comes from the workers=1 row of the same sweep (prepended when
    absent). Every parallel output is checked byte-for-byte against the
    single-worker reference before its timing counts.
    """
    if repeats < 1:
        raise InvalidParameterError("repeats must be >= 1")
    anchors = task.x if task.pad_y else task.y
    parts = build_partition(grid, anchors)
    workers = list(workers_list)
    if 1 not in workers:
        workers.insert(0, 1)

    agg = statistics.median if aggregation == "median" else statistics.fmean
    reference: bytes | None = None
    records: list[BenchRecord] = []
    per_worker: dict[int, list[float]] = {}
    for n in workers:
        cfg = RunConfig(workers=n)
        times = []
        for rep in range(repeats):
            elapsed, table = _timed_run(task, parts, cfg)
            blob = table.to_csv_bytes()
            if reference is None:
                reference = blob
            elif blob != reference:
                raise GridchopError(
                    f"benchmark aborted: workers={n} output differs from workers=1"
                )
            times.append(elapsed)
            records.append(BenchRecord(case, n, rep, elapsed))
        per_worker[n] = times
    t1 = float(agg(per_worker[1]))
    metrics = [
        BenchMetrics(case, n, t1, float(agg(per_worker[n])), repeats, aggregation)
        for n in workers
    ]
    return records, metrics


def records_csv(records: list[BenchRecord]) -> ResultTable:
    rows = [
        {"case": r.case, "workers": r.workers, "repeat": r.repeat, "elapsed_s": r.elapsed_s}
        for r in records
    ]
    return ResultTable(["case", "workers", "repeat", "elapsed_s"], rows)


def metrics_csv(metrics: list[BenchMetrics]) -> ResultTable:
    rows = [
        {
            "case": m.case,
            "workers": m.n,
            "t1": m.t1,
            "tn": m.tn,
            "speedup": m.speedup,
            "efficiency": m.efficiency,
            "repeats": m.repeats,
            "aggregation": m.aggregation,
        }
        for m in metrics
    ]
    return ResultTable(
        ["case", "workers", "t1", "tn", "speedup", "efficiency", "repeats", "aggregation"], rows
    )
