"""Chunked execution of a TaskSpec over a worker pool.

The anchor dataset (one output row per feature) is owned uniquely by chunks;
the context side is subset by padded extents, so merged results never need
deduplication. Workers pull chunks from a shared pool; determinism comes
from merge ordering, not execution order. Rasters referenced by path are
opened independently (and cached) inside each worker process; in-memory
datasets are shared read-only via fork.
"""

from __future__ import annotations

import multiprocessing as mp
import traceback
from dataclasses import dataclass, field

import numpy as np

from . import geoops
from .dataio import FeatureSet, ResultTable, load_raster
from .errors import InvalidParameterError
from .geom import BBox, bbox_of
from .partition import PartitionSet, group_by_hierarchy  # noqa: F401  (re-export)
from .raster import Raster

OPS = ("extract_at", "summarize_aw", "summarize_sedc", "nearest_distance")


@dataclass
class TaskSpec:
    """Declarative binding of an operation to x/y roles and parameters."""

    op: str
    x: Raster | FeatureSet | str  # str = raster file path
    y: FeatureSet
    params: dict = field(default_factory=dict)
    pad_y: bool = False

    def __post_init__(self):
        if self.op not in OPS:
            raise InvalidParameterError(f"unknown operation {self.op!r}")

    @classmethod
    def from_args(cls, op: str, arg_map: dict[str, str] | None = None, **kwargs) -> "TaskSpec":
        """Build a TaskSpec from externally named arguments.

        arg_map renames external parameter names onto the fixed x/y roles,
        e.g. arg_map={"x": "raster", "y": "sites"} accepts raster=.../sites=...
        """
        arg_map = arg_map or {}
        x_key = arg_map.get("x", "x")
        y_key = arg_map.get("y", "y")
        if x_key not in kwargs or y_key not in kwargs:
            raise InvalidParameterError(f"missing dataset arguments {x_key!r}/{y_key!r}")
        params = {k: v for k, v in kwargs.items() if k not in (x_key, y_key, "pad_y")}
        return cls(op, kwargs[x_key], kwargs[y_key], params, bool(kwargs.get("pad_y", False)))


@dataclass
class ChunkResult:
    chunk_id: int
    columns: list[str] = field(default_factory=list)
    rows: list[dict] = field(default_factory=list)
    error: str | None = None


@dataclass
class RunConfig:
    workers: int = 1
    capture_errors: bool = True
    fail_fast: bool = False

    def __post_init__(self):
        if self.workers < 1:
            raise InvalidParameterError("workers must be >= 1")


class ChunkError(Exception):
    def __init__(self, chunk_id: int, message: str):
        super().__init__(f"chunk {chunk_id}: {message}")
        self.chunk_id = chunk_id


# Shared state inherited by forked workers (set before pool creation).
_CTX: dict = {}
_RASTER_CACHE: dict[tuple[str, str], Raster] = {}


def _context_raster(ref, kind: str) -> Raster:
    if isinstance(ref, Raster):
        return ref
    key = (ref, kind)
    if key not in _RASTER_CACHE:
        _RASTER_CACHE[key] = load_raster(ref, kind=kind)
    return _RASTER_CACHE[key]


def _apply_op(task: TaskSpec, x, y, id_column: str) -> ResultTable:
    p = task.params
    if task.op == "extract_at":
        return geoops.extract_at(
            x,
            y,
            radius=float(p.get("radius", 0.0)),
            stat=p.get("stat", "mean"),
            id_column=id_column,
            segments=int(p.get("segments", 64)),
        )
    if task.op == "summarize_aw":
        return geoops.summarize_aw(
            y, x, list(p["value_columns"]), stat=p.get("stat", "mean"), id_column=id_column
        )
    if task.op == "summarize_sedc":
        sp = geoops.SedcParams(
            bandwidth=float(p["bandwidth"]),
            maxdist=float(p["maxdist"]) if p.get("maxdist") is not None else None,
            value_columns=tuple(p["value_columns"]),
        )
        return geoops.summarize_sedc(y, x, sp, id_column=id_column)
    return geoops.nearest_distance(y, x, id_column=id_column)


def interaction_radius(task: TaskSpec) -> float | None:
    """Context distance the op needs around each anchor; None if unbounded."""
    p = task.params
    if task.op == "extract_at":
        return float(p.get("radius", 0.0))
    if task.op == "summarize_sedc":
        md = p.get("maxdist")
        return float(md) if md is not None else 2.0 * float(p["bandwidth"])
    if task.op == "summarize_aw":
        return 0.0
    return None  # nearest_distance: unbounded, flagged per row instead


def _subset_by_bbox(fs: FeatureSet, box: BBox) -> FeatureSet:
    if fs.geometry_kind() == "point":
        c = fs.point_coords()
        keep = (
            (c[:, 0] >= box.xmin)
            & (c[:, 0] <= box.xmax)
            & (c[:, 1] >= box.ymin)
            & (c[:, 1] <= box.ymax)
        )
        return fs.subset(np.nonzero(keep)[0].tolist())
    idx = [i for i, f in enumerate(fs.features) if box.intersects(bbox_of(f.geometry))]
    return fs.subset(idx)


def _run_chunk(payload: dict) -> ChunkResult:
    task: TaskSpec = _CTX["task"]
    id_column = _CTX["id_column"]
    cid = payload["chunk_id"]
    try:
        anchors: FeatureSet = _CTX["anchors"].subset(payload["anchor_idx"])
        context = _CTX["context"]
        if isinstance(context, (str, Raster)):
            context = _context_raster(context, _CTX.get("raster_kind", "continuous"))
        elif payload.get("context_box") is not None:
            clipped = _subset_by_bbox(context, payload["context_box"])
            # nearest_distance has unbounded interaction: an empty padded
            # subset falls back to the full context (rows beyond the padding
            # get flagged below either way)
            if len(clipped) == 0 and task.op == "nearest_distance":
                clipped = context
            context = clipped
        # pad_y only changes which of task.x/task.y is the anchor side (the
        # caller resolved that); ops always take (context, anchors)
        table = _apply_op(task, context, anchors, id_column)
        rows = table.rows
        extra = payload.get("extra_columns") or {}
        for row in rows:
            row["chunk_id"] = cid
            row.update(extra)
        if payload.get("pad_warning"):
            for row in rows:
                row["pad_warning"] = 1
        elif payload.get("warn_distance") is not None:
            thr = payload["warn_distance"]
            for row in rows:
                if row.get("distance") is not None and row["distance"] > thr:
                    row["pad_warning"] = 1
        return ChunkResult(cid, table.columns, rows)
    except Exception:
        return ChunkResult(cid, [], [], error=traceback.format_exc(limit=4))


def _execute(payloads: list[dict], cfg: RunConfig) -> list[ChunkResult]:
    if cfg.workers == 1 or len(payloads) <= 1:
        results = []
        for p in payloads:
            res = _run_chunk(p)
            if res.error is not None and (cfg.fail_fast or not cfg.capture_errors):
                raise ChunkError(res.chunk_id, res.error)
            results.append(res)
        return results
    ctx = mp.get_context("fork")
    with ctx.Pool(processes=min(cfg.workers, len(payloads))) as pool:
        results = pool.map(_run_chunk, payloads, chunksize=1)
    for res in results:
        if res.error is not None and (cfg.fail_fast or not cfg.capture_errors):
            raise ChunkError(res.chunk_id, res.error)
    return results


def merge_chunks(
    chunks: list[ChunkResult],
    id_column: str,
    anchor_ids_by_chunk: dict[int, list[str]] | None = None,
    extra_columns: list[str] | None = None,
) -> ResultTable:
    """Concatenate chunk outputs sorted by chunk_id; errors become rows."""
    seen = set()
    for c in chunks:
        if c.chunk_id in seen:
            raise InvalidParameterError(f"duplicate chunk_id {c.chunk_id}")
        seen.add(c.chunk_id)
    ordered = sorted(chunks, key=lambda c: c.chunk_id)

    value_cols: list[str] = []
    freq_cols: set[str] = set()
    for c in ordered:
        for col in c.columns:
            if col == id_column:
                continue
            if col.startswith("freq_"):
                freq_cols.add(col)
            elif col not in value_cols:
                value_cols.append(col)
    sorted_freq = sorted(freq_cols, key=geoops.freq_sort_key)
    if sorted_freq:
        value_cols = sorted_freq + [c for c in value_cols if c != "count"] + (
            ["count"] if any(c.columns and "count" in c.columns for c in ordered) else []
        )

    rows: list[dict] = []
    had_errors = False
    has_warn = False
    for c in ordered:
        if c.error is not None:
            had_errors = True
            ids = (anchor_ids_by_chunk or {}).get(c.chunk_id, [""])
            msg = c.error.strip().splitlines()[-1] if c.error.strip() else "error"
            for fid in ids:
                rows.append({id_column: fid, "chunk_id": c.chunk_id, "error": msg})
            continue
        for row in c.rows:
            if sorted_freq:
                for fc in sorted_freq:
                    row.setdefault(fc, 0.0)
            if row.get("pad_warning"):
                has_warn = True
            rows.append(row)
    columns = [id_column, "chunk_id"] + (extra_columns or []) + value_cols
    if has_warn or any(r.get("pad_warning") is not None for r in rows):
        columns.append("pad_warning")
        for r in rows:
            r.setdefault("pad_warning", 0)
    if had_errors:
        columns.append("error")
    return ResultTable(columns, rows, had_errors=had_errors)


def _prepare(task: TaskSpec, id_column: str, context, raster_kind: str):
    anchors = task.x if task.pad_y else task.y
    if not isinstance(anchors, FeatureSet):
        raise InvalidParameterError("the anchor dataset must be a FeatureSet")
    if isinstance(context, FeatureSet) and context.geometry_kind() == "point":
        context.point_coords()  # build the cache pre-fork, workers share it
    _CTX.clear()
    _RASTER_CACHE.clear()
    _CTX.update(
        task=task,
        id_column=id_column,
        anchors=anchors,
        context=context,
        raster_kind=raster_kind,
    )
    return anchors


def run_grid(
    task: TaskSpec,
    parts: PartitionSet,
    cfg: RunConfig | None = None,
    id_column: str = "id",
    raster_kind: str = "continuous",
) -> ResultTable:
    """Run the task chunk-by-chunk over a PartitionSet with member assignments."""
    cfg = cfg or RunConfig()
    context = task.y if task.pad_y else task.x
    anchors = _prepare(task, id_column, context, raster_kind)
    index_of = {fid: i for i, fid in enumerate(anchors.ids())}
    radius = interaction_radius(task)
    pad_short = radius is not None and radius > parts.padding and radius > 0
    payloads = []
    ids_by_chunk = {}
    for c in parts.chunks:
        anchor_idx = [index_of[fid] for fid in c.member_ids]
        ids_by_chunk[c.chunk_id] = list(c.member_ids)
        payloads.append(
            {
                "chunk_id": c.chunk_id,
                "anchor_idx": anchor_idx,
                "context_box": c.padded if isinstance(context, FeatureSet) else None,
                "pad_warning": pad_short,
                "warn_distance": parts.padding if task.op == "nearest_distance" else None,
            }
        )
    results = _execute(payloads, cfg)
    return merge_chunks(results, id_column, ids_by_chunk)


def run_hierarchy(
    task: TaskSpec,
    groups: list[tuple[str, list[str]]],
    cfg: RunConfig | None = None,
    id_column: str = "id",
    raster_kind: str = "continuous",
) -> ResultTable:
    """One chunk per hierarchy group; merge ordered by group key."""
    cfg = cfg or RunConfig()
    context = task.y if task.pad_y else task.x
    anchors = _prepare(task, id_column, context, raster_kind)
    index_of = {fid: i for i, fid in enumerate(anchors.ids())}
    radius = interaction_radius(task) or 0.0
    payloads = []
    ids_by_chunk = {}
    keys = {}
    for cid, (key, member_ids) in enumerate(sorted(groups, key=lambda g: g[0])):
        anchor_idx = [index_of[fid] for fid in member_ids]
        box = None
        if isinstance(context, FeatureSet) and anchor_idx:
            box = BBox.union(
                [bbox_of(anchors.features[i].geometry) for i in anchor_idx]
            ).expand(radius)
        keys[cid] = key
        ids_by_chunk[cid] = list(member_ids)
        payloads.append(
            {
                "chunk_id": cid,
                "anchor_idx": anchor_idx,
                "context_box": box,
                "extra_columns": {"group": key},
            }
        )
    results = _execute(payloads, cfg)
    table = merge_chunks(results, id_column, ids_by_chunk, extra_columns=["group"])
    for row in table.rows:
        row.setdefault("group", keys.get(row.get("chunk_id")))
    return table


def run_multirasters(
    task: TaskSpec,
    raster_paths: list[str],
    cfg: RunConfig | None = None,
    id_column: str = "id",
    raster_kind: str = "continuous",
) -> ResultTable:
    """Evaluate the full anchor set against each raster path (one chunk each)."""
    cfg = cfg or RunConfig()
    if task.op != "extract_at":
        raise InvalidParameterError("run_multirasters supports only extract_at")
    anchors = _prepare(task, id_column, None, raster_kind)
    all_idx = list(range(len(anchors)))
    payloads = []
    ids_by_chunk = {}
    paths = {}
    for cid, path in enumerate(raster_paths):
        paths[cid] = path
        ids_by_chunk[cid] = anchors.ids()
        payloads.append(
            {
                "chunk_id": cid,
                "anchor_idx": all_idx,
                "context_path": path,
                "extra_columns": {"raster": path},
            }
        )

    # Context differs per chunk: the payload carries the raster path and the
    # worker opens it (cached per process).
    if cfg.workers == 1 or len(payloads) <= 1:
        results = []
        for payload in payloads:
            res = _run_chunk_multiraster(payload)
            if res.error is not None and (cfg.fail_fast or not cfg.capture_errors):
                raise ChunkError(res.chunk_id, res.error)
            results.append(res)
    else:
        results = _execute_multiraster(payloads, cfg)
    table = merge_chunks(results, id_column, ids_by_chunk, extra_columns=["raster"])
    for row in table.rows:
        row.setdefault("raster", paths.get(row.get("chunk_id")))
    return table


def _run_chunk_multiraster(payload: dict) -> ChunkResult:
    _CTX["context"] = payload["context_path"]
    return _run_chunk(payload)


def _execute_multiraster(payloads: list[dict], cfg: RunConfig) -> list[ChunkResult]:
    ctx = mp.get_context("fork")
    with ctx.Pool(processes=min(cfg.workers, len(payloads))) as pool:
        results = pool.map(_run_chunk_multiraster, payloads, chunksize=1)
    for res in results:
        if res.error is not None and (cfg.fail_fast or not cfg.capture_errors):
            raise ChunkError(res.chunk_id, res.error)
    return results
