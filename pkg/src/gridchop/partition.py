"""PartitionSet generation and anchor-feature assignment.

Chunks carry a core extent (unique ownership) and a padded extent (context
visibility). All generators are deterministic: identical inputs yield
byte-identical PartitionSet JSON.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import FeatureSet
from .errors import InvalidInputError, InvalidParameterError
from .geom import BBox, Point, Polygon, Polyline, point_in_polygon

# within-group SSQ per balancing round of the last make_balanced_groups
# call; diagnostic only (the tests assert it is non-increasing)
_LAST_SSQ_TRACE: list[float] = []


@dataclass(frozen=True)
class GridSpec:
    mode: str  # grid | grid_quantile | grid_advanced | balanced
    nx: int = 1
    ny: int = 1
    nq: int = 1
    n_groups: int = 1
    min_features: int = 1
    padding: float = 0.0

    def __post_init__(self):
        if self.mode not in ("grid", "grid_quantile", "grid_advanced", "balanced"):
            raise InvalidParameterError(f"unknown partition mode {self.mode!r}")
        if not np.isfinite(self.padding) or self.padding < 0:
            raise InvalidParameterError("padding must be finite and >= 0")


@dataclass
class Chunk:
    chunk_id: int
    core: BBox
    padded: BBox
    member_ids: list[str] = field(default_factory=list)


@dataclass
class PartitionSet:
    mode: str
    padding: float
    chunks: list[Chunk]

    def global_extent(self) -> BBox:
        return BBox.union([c.core for c in self.chunks])


def representative_point(geometry) -> Point:
    """Cheap deterministic anchor point used for unique chunk assignment."""
    if isinstance(geometry, Point):
        return geometry
    if isinstance(geometry, Polyline):
        return geometry.vertices[0]
    if isinstance(geometry, Polygon):
        return geometry.outer.vertices[0]
    raise InvalidParameterError(f"unsupported geometry {type(geometry)}")


def _point_coords(points: FeatureSet) -> np.ndarray:
    if points.geometry_kind() != "point":
        raise InvalidInputError("operation requires point geometry")
    return np.array([[f.geometry.x, f.geometry.y] for f in points.features], dtype=np.float64)


def make_regular_grid(extent: BBox, nx: int, ny: int, padding: float) -> PartitionSet:
    """nx*ny equal cells tiling extent, row-major from the minimum corner."""
    if nx < 1 or ny < 1:
        raise InvalidParameterError("nx and ny must be >= 1")
    if extent.width <= 0 or extent.height <= 0:
        raise InvalidParameterError("degenerate extent")
    xe = [extent.xmin + extent.width * i / nx for i in range(nx + 1)]
    ye = [extent.ymin + extent.height * j / ny for j in range(ny + 1)]
    xe[-1] = extent.xmax
    ye[-1] = extent.ymax
    chunks = []
    cid = 0
    for j in range(ny):
        for i in range(nx):
            core = BBox(xe[i], ye[j], xe[i + 1], ye[j + 1])
            chunks.append(Chunk(cid, core, core.expand(padding)))
            cid += 1
    return PartitionSet("grid", padding, chunks)


def _cells_from_edges(xe: list[float], ye: list[float], padding: float, mode: str) -> PartitionSet:
    chunks = []
    cid = 0
    for j in range(len(ye) - 1):
        for i in range(len(xe) - 1):
            core = BBox(xe[i], ye[j], xe[i + 1], ye[j + 1])
            chunks.append(Chunk(cid, core, core.expand(padding)))
            cid += 1
    return PartitionSet(mode, padding, chunks)


def make_quantile_grid(points: FeatureSet, nq: int, padding: float) -> PartitionSet:
    """Irregular lattice with breaks at i/nq coordinate quantiles per axis.

    Quantiles use linear interpolation between order statistics. Degenerate
    (zero-width) cells are collapsed by deduplicating equal breaks.
    """
    if nq < 1:
        raise InvalidParameterError("nq must be >= 1")
    if len(points) == 0:
        raise InvalidInputError("quantile grid needs at least one point")
    coords = _point_coords(points)
    qs = [i / nq for i in range(1, nq)]
    xe = [float(coords[:, 0].min())] + [float(np.quantile(coords[:, 0], q)) for q in qs]
    xe.append(float(coords[:, 0].max()))
    ye = [float(coords[:, 1].min())] + [float(np.quantile(coords[:, 1], q)) for q in qs]
    ye.append(float(coords[:, 1].max()))

    def dedupe(edges: list[float]) -> list[float]:
        out = [edges[0]]
        for e in edges[1:]:
            if e > out[-1]:
                out.append(e)
        return out

    xe, ye = dedupe(xe), dedupe(ye)
    # An axis where all points coincide keeps one degenerate interval so the
    # other axis's stripes survive; degenerate cores own exact matches only.
    if len(xe) < 2:
        xe = [xe[0], xe[0]]
    if len(ye) < 2:
        ye = [ye[0], ye[0]]
    parts = _cells_from_edges(xe, ye, padding, "grid_quantile")
    return assign_to_partition(points, parts)


def _kruskal_mst(n_nodes: int, edges: list[tuple[float, int, int]]) -> list[tuple[float, int, int]]:
    """Edges as (weight, u, v); ties broken by (u, v) index order."""
    parent = list(range(n_nodes))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    mst = []
    for w, u, v in sorted(edges):
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            mst.append((w, u, v))
    return mst


def make_merged_grid(
    points: FeatureSet, nx: int, ny: int, min_features: int, padding: float
) -> PartitionSet:
    """Regular grid with sparse adjacent cells merged along MST edges.

    Rook-adjacency edges are weighted by the combined point count of their
    endpoints. MST edges are scanned ascending; two current groups merge when
    both hold fewer than min_features points. Scans repeat to fixpoint.
    """
    if min_features < 1:
        raise InvalidParameterError("min_features must be >= 1")
    if nx * ny < 2:
        raise InvalidParameterError("merged grid needs nx*ny >= 2")
    if len(points) == 0:
        raise InvalidInputError("merged grid needs at least one point")
    coords = _point_coords(points)
    extent = BBox(
        float(coords[:, 0].min()),
        float(coords[:, 1].min()),
        float(coords[:, 0].max()),
        float(coords[:, 1].max()),
    )
    if extent.width <= 0 or extent.height <= 0:
        raise InvalidInputError("merged grid needs a non-degenerate point extent")

    # Half-open cell assignment, last row/column closed.
    ix = np.minimum((coords[:, 0] - extent.xmin) / (extent.width / nx), nx - 1e-9).astype(int)
    iy = np.minimum((coords[:, 1] - extent.ymin) / (extent.height / ny), ny - 1e-9).astype(int)
    ix = np.clip(ix, 0, nx - 1)
    iy = np.clip(iy, 0, ny - 1)
    cell_of_point = iy * nx + ix
    n_cells = nx * ny
    counts = np.bincount(cell_of_point, minlength=n_cells)

    edges = []
    for j in range(ny):
        for i in range(nx):
            u = j * nx + i
            if i + 1 < nx:
                v = u + 1
                edges.append((float(counts[u] + counts[v]), u, v))
            if j + 1 < ny:
                v = u + nx
                edges.append((float(counts[u] + counts[v]), u, v))
    mst = _kruskal_mst(n_cells, edges)

    group = list(range(n_cells))

    def find(a: int) -> int:
        while group[a] != a:
            group[a] = group[group[a]]
            a = group[a]
        return a

    gcount = {i: int(counts[i]) for i in range(n_cells)}
    merged = True
    while merged:
        merged = False
        for _, u, v in mst:
            ru, rv = find(u), find(v)
            if ru == rv:
                continue
            if gcount[ru] < min_features and gcount[rv] < min_features:
                group[ru] = rv
                gcount[rv] += gcount.pop(ru)
                merged = True

    members: dict[int, list[int]] = {}
    for cell in range(n_cells):
        members.setdefault(find(cell), []).append(cell)
    base = make_regular_grid(extent, nx, ny, 0.0)
    groups = sorted(members.values(), key=lambda cells: cells[0])
    chunks = []
    for cid, cells in enumerate(groups):
        core = BBox.union([base.chunks[c].core for c in cells])
        cellset = set(cells)
        ids = [
            points.features[i].id
            for i in range(len(points))
            if int(cell_of_point[i]) in cellset
        ]
        chunks.append(Chunk(cid, core, core.expand(padding), ids))
    return PartitionSet("grid_advanced", padding, chunks)


def make_balanced_groups(points: FeatureSet, n_groups: int, padding: float) -> PartitionSet:
    """Equal-size spatially compact point groups (sizes differ by <= 1).

    Deterministic heuristic: farthest-point seeding from the point nearest
    the centroid, capacity-constrained greedy assignment ordered by distance
    to the nearest seed, then pairwise swap improvement over move-gain
    candidates (one best improving swap per round, capped rounds) minimizing
    total within-group sum of squared distances to group means.
    """
    coords = _point_coords(points)
    n = len(points)
    if n_groups < 1 or n_groups > n:
        raise InvalidParameterError(f"n_groups must be in [1, {n}], got {n_groups}")
    k = n_groups

    centroid = coords.mean(axis=0)
    d0 = np.sum((coords - centroid) ** 2, axis=1)
    seeds = [int(np.argmin(d0))]
    mind = np.sum((coords - coords[seeds[0]]) ** 2, axis=1)
    for _ in range(k - 1):
        nxt = int(np.argmax(mind))
        seeds.append(nxt)
        mind = np.minimum(mind, np.sum((coords - coords[nxt]) ** 2, axis=1))

    base, extra = divmod(n, k)
    capacity = np.array([base + 1 if g < extra else base for g in range(k)])
    dist_to_seed = np.sum(
        (coords[:, None, :] - coords[np.array(seeds)][None, :, :]) ** 2, axis=2
    )  # (n, k)
    order = np.lexsort((np.arange(n), dist_to_seed.min(axis=1)))
    assign = np.full(n, -1, dtype=int)
    remaining = capacity.copy()
    for i in order:
        d = dist_to_seed[i].copy()
        d[remaining == 0] = np.inf
        g = int(np.argmin(d))
        assign[i] = g
        remaining[g] -= 1

    # Swap phase. With fixed group sizes, minimizing within-group SSQ is
    # maximizing sum_g |S_g|^2 / n_g where S_g is the coordinate sum.
    sizes = np.bincount(assign, minlength=k).astype(float)
    sums = np.zeros((k, 2))
    np.add.at(sums, assign, coords)

    scale = float(np.abs(coords).max()) or 1.0
    tol = 1e-9 * scale * scale
    c2 = np.sum(coords * coords, axis=1)
    trace = []
    top = 16
    for _ in range(12 * k * k):
        means = sums / sizes[:, None]
        d2 = c2[:, None] - 2.0 * coords @ means.T + np.sum(means * means, axis=1)[None, :]
        trace.append(float(d2[np.arange(n), assign].sum()))
        # move gain of point i toward group g, against the current means;
        # exact swap deltas are evaluated only on the top candidates per
        # group pair, so each round is O(n k) instead of O(n^2)
        gain = d2[np.arange(n), assign][:, None] - d2
        best = (tol, -1, -1)
        for a in range(k):
            ia = np.nonzero(assign == a)[0]
            if not len(ia):
                continue
            for b in range(a + 1, k):
                ib = np.nonzero(assign == b)[0]
                if not len(ib):
                    continue
                ca = ia[np.argsort(-gain[ia, b], kind="stable")[:top]]
                cb = ib[np.argsort(-gain[ib, a], kind="stable")[:top]]
                # swapping i<-a with j<-b changes sum_g |S_g|^2/n_g by
                # (2 v.S_a + |v|^2)/n_a + (-2 v.S_b + |v|^2)/n_b, v = c_j - c_i
                v = coords[cb][None, :, :] - coords[ca][:, None, :]
                q = np.sum(v * v, axis=2)
                delta = (2.0 * (v @ sums[a]) + q) / sizes[a] + (
                    -2.0 * (v @ sums[b]) + q
                ) / sizes[b]
                pos = int(np.argmax(delta))
                if float(delta.flat[pos]) > best[0]:
                    best = (float(delta.flat[pos]), int(ca[pos // len(cb)]), int(cb[pos % len(cb)]))
        if best[1] < 0:
            break
        _, i, j = best
        a, b = int(assign[i]), int(assign[j])
        sums[a] += coords[j] - coords[i]
        sums[b] += coords[i] - coords[j]
        assign[i], assign[j] = b, a
    global _LAST_SSQ_TRACE
    _LAST_SSQ_TRACE = trace

    chunks = []
    for g in range(k):
        idx = np.nonzero(assign == g)[0]
        sub = coords[idx]
        core = BBox(
            float(sub[:, 0].min()),
            float(sub[:, 1].min()),
            float(sub[:, 0].max()),
            float(sub[:, 1].max()),
        )
        ids = [points.features[int(i)].id for i in idx]
        chunks.append(Chunk(g, core, core.expand(padding), ids))
    return PartitionSet("balanced", padding, chunks)


def assign_to_partition(anchors: FeatureSet, parts: PartitionSet) -> PartitionSet:
    """Assign each anchor to exactly one chunk by its representative point.

    Half-open interval rule [xmin, xmax) x [ymin, ymax) with the last
    row/column closed at the global extent; representatives outside every
    core go to the nearest core center, ties to the lowest chunk_id.
    """
    gx = max(c.core.xmax for c in parts.chunks)
    gy = max(c.core.ymax for c in parts.chunks)
    chunks = [Chunk(c.chunk_id, c.core, c.padded, []) for c in parts.chunks]
    chunks.sort(key=lambda c: c.chunk_id)

    def owns(core: BBox, p: Point) -> bool:
        okx = core.xmin <= p.x < core.xmax or (p.x == core.xmax == gx)
        oky = core.ymin <= p.y < core.ymax or (p.y == core.ymax == gy)
        # Degenerate (zero-width) cores own only exact matches.
        if core.xmax == core.xmin:
            okx = p.x == core.xmin
        if core.ymax == core.ymin:
            oky = p.y == core.ymin
        return okx and oky

    for feat in anchors.features:
        rep = representative_point(feat.geometry)
        target = None
        for c in chunks:
            if owns(c.core, rep):
                target = c
                break
        if target is None:
            best = None
            for c in chunks:
                ctr = c.core.center()
                d = (rep.x - ctr.x) ** 2 + (rep.y - ctr.y) ** 2
                if best is None or d < best[0]:
                    best = (d, c)
            target = best[1]
        target.member_ids.append(feat.id)
    return PartitionSet(parts.mode, parts.padding, chunks)


def group_by_hierarchy(
    anchors: FeatureSet,
    key: str | None = None,
    regions: FeatureSet | None = None,
    regions_id: str | None = None,
) -> list[tuple[str, list[str]]]:
    """Group anchors by an attribute column or by containing region polygon."""
    if key is not None:
        groups: dict[str, list[str]] = {}
        for feat in anchors.features:
            if key not in feat.attributes or feat.attributes[key] is None:
                raise InvalidInputError(f"feature {feat.id!r} missing hierarchy column {key!r}")
            groups.setdefault(str(feat.attributes[key]), []).append(feat.id)
        return sorted(groups.items())
    if regions is None or regions_id is None:
        raise InvalidParameterError("need either key or regions + regions_id")
    if regions.geometry_kind() != "polygon":
        raise InvalidInputError("regions must be polygons")
    keys = []
    groups = {}
    for reg in regions.features:
        rkey = str(reg.attributes.get(regions_id, reg.id))
        if rkey not in groups:
            keys.append(rkey)
            groups[rkey] = []
    unassigned: list[str] = []
    for feat in anchors.features:
        rep = representative_point(feat.geometry)
        placed = False
        for reg in regions.features:
            if point_in_polygon(rep, reg.geometry):
                groups[str(reg.attributes.get(regions_id, reg.id))].append(feat.id)
                placed = True
                break
        if not placed:
            unassigned.append(feat.id)
    out = [(k, groups[k]) for k in keys]
    if unassigned:
        out.append(("UNASSIGNED", unassigned))
    return out


def build_partition(spec: GridSpec, points: FeatureSet) -> PartitionSet:
    """Dispatch a GridSpec to the matching generator; members always filled."""
    if spec.mode == "grid":
        coords = _point_coords(points)
        extent = BBox(
            float(coords[:, 0].min()),
            float(coords[:, 1].min()),
            float(coords[:, 0].max()),
            float(coords[:, 1].max()),
        )
        parts = make_regular_grid(extent, spec.nx, spec.ny, spec.padding)
        return assign_to_partition(points, parts)
    if spec.mode == "grid_quantile":
        return make_quantile_grid(points, spec.nq, spec.padding)
    if spec.mode == "grid_advanced":
        return make_merged_grid(points, spec.nx, spec.ny, spec.min_features, spec.padding)
    return make_balanced_groups(points, spec.n_groups, spec.padding)
